"""Sequential detection of power-quality disturbances with single and cooperating meters."""

__version__ = "0.1.0"

from .detectors import (CusumOracleState, GllrState, RmsConfig, StftConfig, Theta, cusum_step,
                        gllr_detect, gllr_trace, gllr_update, rms_detect, stft_detect)
from .fusion import CentralizedState, UniformState, centralized_update, uniform_update
from .io import ingest_stream
from .lts import BitMessage, LevelSampler, LtsCentralState, LtsMeterState, Mode, lts_central_step, lts_meter_step
from .signal import (AmplitudeSag, ArParams, ArProcess, MeterStream, NoiseParams, NominalParams, ScenarioConfig,
                     TransientRing, synthesize_ar, synthesize_scenario)
from .simnet import DetectorSpec, Network, run_monte_carlo, run_streams, run_trial
from .tuning import calibrate_delta, choose_b, rho_of_meter, threshold_for_gamma
