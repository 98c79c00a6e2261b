"""
Exception hierarchy for the GeoGAN map lab

Every error raised on purpose by the package derives from GeoGanError so that
the command-line front end can turn it into a diagnostic and a nonzero exit.
"""
from typing import Optional


class GeoGanError(Exception):
    """Base class for all package errors"""


class InvalidArgumentError(GeoGanError, ValueError):
    """An argument is outside its documented domain"""


class ShapeError(GeoGanError, ValueError):
    """A tensor does not have the shape a layer expects"""

    def __init__(self, layer: str, expected: str, got):
        self.layer = layer
        self.expected = expected
        self.got = tuple(got) if not isinstance(got, str) else got
        super().__init__(f"{layer}: expected {expected}, got {self.got}")


class NoSceneError(GeoGanError):
    """No acceptable scene was found for a tile within the widened windows"""

    def __init__(self, tile_id: Optional[str], window, detail: str = ""):
        self.tile_id = tile_id
        self.window = window
        msg = f"no scene for tile {tile_id or '<unknown>'} in window {window}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class DuplicateIdError(GeoGanError, ValueError):
    """The same tile key appears twice within one source"""

    def __init__(self, source: str, key):
        self.source = source
        self.key = key
        super().__init__(f"duplicate id {key!r} in {source} entries")


class ManifestParseError(GeoGanError, ValueError):
    """A manifest file line could not be parsed"""

    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"manifest line {line_no}: {reason}")


class ManifestVersionError(GeoGanError):
    """The manifest header declares an unsupported format version"""


class CheckpointError(GeoGanError):
    """A checkpoint container is malformed or does not match the model"""


class ProviderError(GeoGanError):
    """An imagery provider failed to list or serve a tile"""


class DatasetError(GeoGanError):
    """Training or evaluation data could not be opened"""


class NumericalError(GeoGanError, ArithmeticError):
    """A loss or gradient became non-finite"""

    def __init__(self, component: str, detail: str = ""):
        self.component = component
        msg = f"non-finite value in {component}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class NumericalOverflowError(NumericalError):
    """A coupling layer produced a non-finite scale"""
