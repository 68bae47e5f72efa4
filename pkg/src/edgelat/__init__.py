"""edgelat: few-shot end-to-end latency prediction for edge device runtimes.

Predicts neural-network inference latency on an unseen device-runtime from
a pool of characterized devices plus a handful of adaptation measurements,
using latency-normalized performance-counter descriptors and a small
regression network, with a lookup-table baseline and a synthetic device
oracle for desk-scale verification.
"""

from .archspace import (
    ALL_VARIANTS,
    CHANNEL_WIDTHS,
    NUM_ARCHITECTURES,
    NUM_VARIANTS,
    CellArchitecture,
    MacroConfig,
    OperatorKind,
    OperatorVariant,
    architecture_from_edges,
    architecture_from_index,
    encode_architecture,
    operator_multiset,
    variant_from_index,
)
from .baselines import LatencyLUT, lut_build, lut_from_descriptor, lut_predict
from .counters import (
    CounterSet,
    HardwareDescriptor,
    OperatorProfile,
    build_descriptor,
    build_raw_descriptor,
    normalize_counters,
)
from .errors import CalibrationError, ConfigError, DataFormatError, EdgelatError, ReferentialError
from .harness import (
    EvalReport,
    ExperimentConfig,
    Method,
    Normalization,
    Pooling,
    bound_accuracy,
    build_training_pool,
    run_ablation_stack,
    run_adaptation_sweep,
    run_experiment,
)
from .regressor import GradientCheckReport, MlpLatencyRegressor, TrainConfig, gradient_check
from .sampler import AdaptationSet, SamplingStrategy, augment, random_sample, targeted_uniform_sample
from .synthdev import (
    DeviceRecord,
    DeviceSpec,
    LatencySample,
    MeasurementDataset,
    PoolSpec,
    RuntimeKind,
    RuntimeModel,
    SyntheticDevice,
    default_pool_spec,
    export_dataset,
    generate_dataset,
    import_dataset,
    make_device_pool,
    measure_e2e,
    profile_operator,
)

__version__ = "0.1.0"
