"""Neural-network emulation of LETKF data assimilation on chaotic surrogate models."""

from .config import ExperimentManifest, load_config, manifest_hash
from .dynamics import ModelSpec, StateVector, integrate, tendency
from .emulator import (EmulatorSet, PseudoObsConfig, RegionPartition, harvest_training_data,
                       nn_analysis, spread_observations, train_emulator)
from .harness import rmse, run_experiment, timing_report
from .letkf import (Ensemble, LetkfConfig, apply_inflation, ensemble_covariance, ensemble_mean,
                    letkf_analysis, local_patch)
from .mlp import MlpNetwork, TrainConfig, TrainingSet, backprop_step, forward, train
from .observations import ObservationNetwork, ObservationSet, build_network, generate_observations, observe

__version__ = "0.1.0"
