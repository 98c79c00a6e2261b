"""
Seasonal scene selection

A tile is imaged around March, June, September and December. Within each
month the least cloudy acquisition is chosen; when nothing in the window is
clear enough the window grows by a fixed number of days on each side.
"""
import calendar
import logging
from dataclasses import dataclass
from datetime import date, timedelta
from enum import Enum
from typing import Iterable, List, Optional

from geogan.errors import InvalidArgumentError, NoSceneError

logger = logging.getLogger(__name__)

CLOUD_THRESHOLD = 0.10
EXTENSION_DAYS = 15
DEFAULT_MAX_EXTENSIONS = 4


class Season(str, Enum):
    MAR = "MAR"
    JUN = "JUN"
    SEP = "SEP"
    DEC = "DEC"

    @property
    def month(self) -> int:
        return _SEASON_MONTH[self]

    @property
    def order(self) -> int:
        return SEASON_ORDER.index(self)

    @classmethod
    def parse(cls, text: str) -> "Season":
        try:
            return cls(text.strip().upper())
        except ValueError:
            raise InvalidArgumentError(
                f"unknown season {text!r}; expected one of mar, jun, sep, dec"
            ) from None


_SEASON_MONTH = {Season.MAR: 3, Season.JUN: 6, Season.SEP: 9, Season.DEC: 12}
SEASON_ORDER = [Season.MAR, Season.JUN, Season.SEP, Season.DEC]


def parse_seasons(text: str) -> List[Season]:
    """Parse a comma separated season list such as "mar,jun,sep,dec" """
    seasons = [Season.parse(tok) for tok in text.split(",") if tok.strip()]
    if not seasons:
        raise InvalidArgumentError("at least one season is required")
    if len(set(seasons)) != len(seasons):
        raise InvalidArgumentError(f"duplicate season in {text!r}")
    return sorted(seasons, key=lambda s: s.order)


@dataclass(frozen=True)
class DateWindow:
    """Inclusive calendar date range"""
    start: date
    end: date

    def __post_init__(self):
        if self.end < self.start:
            raise InvalidArgumentError(f"empty window: {self.start} > {self.end}")

    def contains(self, day: date) -> bool:
        return self.start <= day <= self.end

    def widen(self, days: int) -> "DateWindow":
        return DateWindow(self.start - timedelta(days=days), self.end + timedelta(days=days))

    def __str__(self) -> str:
        return f"{self.start.isoformat()}..{self.end.isoformat()}"


def season_window(year: int, season: Season) -> DateWindow:
    """The calendar month of a season in a given year"""
    month = season.month
    last_day = calendar.monthrange(year, month)[1]
    return DateWindow(date(year, month, 1), date(year, month, last_day))


@dataclass(frozen=True)
class SceneCandidate:
    """One acquisition a provider can serve for a tile"""
    scene_id: str
    acquisition_date: date
    cloud_fraction: float

    def __post_init__(self):
        if not 0.0 <= self.cloud_fraction <= 1.0:
            raise InvalidArgumentError(
                f"cloud_fraction {self.cloud_fraction} outside [0, 1] for {self.scene_id}"
            )


def _least_cloudy(candidates: Iterable[SceneCandidate]) -> Optional[SceneCandidate]:
    ranked = sorted(candidates, key=lambda c: (c.cloud_fraction, c.acquisition_date, c.scene_id))
    return ranked[0] if ranked else None


def select_scene(
    candidates: List[SceneCandidate],
    window: DateWindow,
    max_extensions: int = DEFAULT_MAX_EXTENSIONS,
    cloud_threshold: float = CLOUD_THRESHOLD,
    extension_days: int = EXTENSION_DAYS,
    tile_id: Optional[str] = None,
    allow_cloudy_fallback: bool = False
) -> SceneCandidate:
    """
    Choose the clearest acquisition for a tile

    Args:
        candidates: Every acquisition the provider knows about
        window: Target date window (usually the season's month)
        max_extensions: How many times the window may be widened
        cloud_threshold: A scene qualifies when cloud_fraction < threshold
        extension_days: Days added on each side per extension
        tile_id: Only used in diagnostics
        allow_cloudy_fallback: Return the least cloudy scene of the widest
            window instead of raising when none qualifies

    Returns:
        The least cloudy qualifying candidate, earliest date on ties

    Raises:
        NoSceneError: nothing qualifies after max_extensions widenings
    """
    if max_extensions < 0:
        raise InvalidArgumentError("max_extensions must be >= 0")

    current = window
    for extension in range(max_extensions + 1):
        current = window.widen(extension * extension_days)
        visible = [c for c in candidates if current.contains(c.acquisition_date)]
        clear = [c for c in visible if c.cloud_fraction < cloud_threshold]
        best = _least_cloudy(clear)
        if best is not None:
            if extension:
                logger.debug(
                    "Tile %s: window extended %d time(s) to %s", tile_id, extension, current
                )
            return best

    if allow_cloudy_fallback:
        fallback = _least_cloudy(c for c in candidates if current.contains(c.acquisition_date))
        if fallback is not None:
            logger.warning(
                "Tile %s: no scene under %.0f%% cloud in %s, using %s (%.1f%%)",
                tile_id, cloud_threshold * 100, current, fallback.scene_id,
                fallback.cloud_fraction * 100
            )
            return fallback

    raise NoSceneError(
        tile_id, window,
        f"{len(candidates)} candidate(s), none under {cloud_threshold:.2f} cloud "
        f"after {max_extensions} extension(s)"
    )
