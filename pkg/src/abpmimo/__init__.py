"""Auxiliary beam pair angle estimation for large-array mmWave MIMO links."""

from .array_geometry import (
    UlaConfig,
    angle_to_spatial_freq,
    beam_gain,
    spatial_freq_to_angle,
    steering_vector,
)
from .channel import (
    ChannelInstance,
    NoiseModel,
    PathParams,
    RicianConfig,
    build_channel,
    build_rician,
    measure,
    sample_paths,
)
from .codebook import (
    AuxiliaryBeamPair,
    BeamPairGrid,
    ProbingSchedule,
    build_pair_grid,
    default_grid,
    monopulse_beams,
    random_probing_schedule,
)
from .estimator import (
    AngleEstimate,
    MultipathEstimate,
    PowerPair,
    estimate_multipath,
    estimate_single_path,
    invert_ratio,
    ratio_from_powers,
    ratio_metric_closed_form,
    select_pair,
)
from .quantizer import Feedback, ScalarCodebook, quantize, train_ratio_codebook, uniform_codebook
from .analysis import Interferer, VarianceInputs, slope_k, variance_multipath, variance_single_path
from .experiments import ExperimentConfig, MetricReport, load_config, run

__version__ = "0.1.0"
