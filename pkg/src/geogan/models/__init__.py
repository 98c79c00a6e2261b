"""
Generator and discriminator architectures as pure functions over ParamSets
"""
from .config import (
    ArchConfig,
    DeconvSpec,
    MaskKind,
    NoiseMode,
    NoiseSpec,
    Parity,
    Variant,
    phase_prefixes,
)
from .direct_gan import discriminator_direct_forward, generator_direct_forward
from .encoder_gan import (
    discriminator_enc_forward,
    encoder_forward,
    generator_enc_forward,
    inject_noise,
)
from .flow import (
    CouplingLayer,
    default_couplings,
    flow_generator_forward,
    flow_generator_inverse,
    flow_log_likelihood,
    make_mask,
    nvp_forward,
    nvp_inverse,
)
from .layers import BNMode
from .networks import GeneratorOutput, discriminate, generate, generate_inverse
from .params import ParamSet, init_params, layer_shapes, load_params, save_params

__all__ = [
    'ArchConfig', 'DeconvSpec', 'MaskKind', 'NoiseMode', 'NoiseSpec', 'Parity', 'Variant',
    'phase_prefixes', 'BNMode', 'ParamSet', 'init_params', 'layer_shapes',
    'load_params', 'save_params',
    'encoder_forward', 'inject_noise', 'generator_enc_forward', 'discriminator_enc_forward',
    'generator_direct_forward', 'discriminator_direct_forward',
    'CouplingLayer', 'make_mask', 'default_couplings', 'nvp_forward', 'nvp_inverse',
    'flow_generator_forward', 'flow_generator_inverse', 'flow_log_likelihood',
    'GeneratorOutput', 'generate', 'generate_inverse', 'discriminate',
]
