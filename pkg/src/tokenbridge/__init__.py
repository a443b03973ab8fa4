"""tokenbridge: local-first video-QA serving with on-demand edge augmentation.

The decision and orchestration plane only: keyframe-aligned sampling,
pipelined tokenization, calibrated confidence routing, bandit-driven
token-density selection, and a framed device-edge offload protocol.
Model inference sits behind pluggable backends (synthetic or trace).
"""

from .core import (
    Action,
    CalibratedDistribution,
    DelayBreakdown,
    LogitVector,
    Query,
    SampleIndices,
    SampleSource,
    SystemConfig,
    TokenTensor,
    VideoMetadata,
    load_config,
    validate_config,
)
from .container import probe_mp4, probe_sidecar, probe_video
from .sampler import select_frames, uniform_subsample
from .pipeline import PipelineReport, StageSpec, run_pipeline
from .calibration import TemperatureModel, constrained_softmax, ece, fit_temperature
from .router import Route, RoutingDecision, route
from .context import (
    ContextVector,
    PcaModel,
    build_context,
    clip_relevance,
    fit_pca,
    pool_text,
    pool_vision,
    project,
    spectral_complexity,
)
from .bandit import (
    BanditState,
    Extractor,
    ExtractorConfig,
    ProfilingDataset,
    Reward,
    compute_reward,
    select_action,
    train_extractor,
    update,
    warm_start,
)
from .token_ops import merge_to_density, pack, unpack
from .backends import (
    BackendResponse,
    MissingRecord,
    Role,
    SyntheticProfile,
    TraceBackend,
    read_trace,
    write_trace,
)
from .harness import (
    CostModel,
    NetworkModel,
    SyntheticEnv,
    System,
    TraceEnv,
    fit_policy,
    run_benchmark,
    simulate_network,
    split_profiling,
)

__version__ = "0.1.0"
