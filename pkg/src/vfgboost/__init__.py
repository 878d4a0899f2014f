"""Vertical federated gradient boosting over distributed labels.

Training is simulated over a deterministic in-process network: feature
columns are vertically split across clients, labels are partitioned too, and
node splits are negotiated between source and split clients with Paillier-
encrypted statistic aggregation and optional partial-DP leaf release.  The
plaintext trainer in `gbdt` is the equivalence reference; `attacks` holds the
executable inference attacks.
"""

from . import attacks, cli, data, dp, gbdt, messages, ntheory, paillier
from .dp import DpParams
from .gbdt import TrainConfig, centralized_train, predict_raw
from .protocol import (DistributedEnsemble, FederatedTrainer, ProtocolConfig,
                       train_ensemble)

__all__ = [
    "attacks", "cli", "data", "dp", "gbdt", "messages", "ntheory", "paillier",
    "DpParams", "TrainConfig", "centralized_train", "predict_raw",
    "DistributedEnsemble", "FederatedTrainer", "ProtocolConfig",
    "train_ensemble",
]

__version__ = "0.1.0"
