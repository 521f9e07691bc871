"""Physical-layer secure access and power control for a space-air-ground downlink.

Three users pick one of a satellite, a UAV or a base station, all sharing one
band, while a single eavesdropper listens. The package provides the channel
simulator, closed-form rates, a grid-search oracle, a small numpy MLP engine,
the two learned stages (per-access power nets and an access-selection value
net) and an experiment harness with a CLI.
"""

from sagin_secure.config import ScenarioConfig, load_config
from sagin_secure.channel import ChannelMatrix, sample_channel_matrix, sample_channels
from sagin_secure.rates import (AccessMatrix, RateReport, check_constraints,
                                enumerate_access_matrices, sum_secrecy_rate)
from sagin_secure.oracle import OracleSolution, brute_force_best, grid_power_search
from sagin_secure.dataset import Dataset, generate_dataset
from sagin_secure.power_trainer import PowerNetBundle, train_power_bundle, train_power_net
from sagin_secure.access_trainer import (AccessNet, InferencePipeline, build_q_targets,
                                         select_access, train_access_net)

__version__ = "0.1.0"

__all__ = [
    "ScenarioConfig", "load_config", "ChannelMatrix", "sample_channel_matrix", "sample_channels",
    "AccessMatrix", "RateReport", "check_constraints", "enumerate_access_matrices",
    "sum_secrecy_rate", "OracleSolution", "brute_force_best", "grid_power_search", "Dataset",
    "generate_dataset", "PowerNetBundle", "train_power_bundle", "train_power_net", "AccessNet",
    "InferencePipeline", "build_q_targets", "select_access", "train_access_net",
]
