"""tileshift: images made from images by interleaving diffusion denoising
with energy-minimizing transform re-fitting."""

from .assignment import (
    Assignment,
    CopySpec,
    CostMatrix,
    best_flip_config,
    best_ring_rotation,
    cross_cost_matrix,
    fit_energy,
    solve_rectangular,
    solve_square,
    tile_cost_matrix,
)
from .denoise import (
    CodecDescriptor,
    DenoiseRequest,
    DenoiseResponse,
    MockCodec,
    MockDenoiser,
    procedural_target,
    rollout,
)
from .engine import (
    EngineConfig,
    RunResult,
    anagram_step,
    change_trace,
    mainline_fixed,
    mainline_free,
    mainline_latent,
    run,
)
from .errors import (
    BackendError,
    ConfigError,
    DimensionMismatchError,
    InfeasibleCopiesError,
    IOFailure,
    ProtocolError,
    TileshiftError,
    VariantMismatchError,
)
from .grids import ImageGrid, Tiling, tiles_of, untile
from .remote import RemoteBackend
from .schedule import (
    MixWeights,
    NoiseSchedule,
    denoise_update,
    fixed_ratio_weights,
    mix,
    predict_clean,
    weights_at,
)
from .transforms import (
    FlipConfig,
    Identity,
    RingRotation,
    TilePermutation,
    TileSelection,
    apply,
    invert,
    is_identity,
    relative,
)

__version__ = "0.1.0"
