"""Privacy-preserving stream processing over a replicated ledger.

Publishers encrypt readings under a threshold-shared key and the ledger
commits their hashes. Replicated computers work on ciphertexts only; a
reconstruction quorum decrypts a result once the replicas agree on it.
"""

from .errors import ZkDppsError
from .scenarios import Mode, ScenarioConfig, run_scenario, run_sweep, timing_bench
from .system import CostModel, Network, SystemConfig

__all__ = [
    "CostModel",
    "Mode",
    "Network",
    "ScenarioConfig",
    "SystemConfig",
    "ZkDppsError",
    "run_scenario",
    "run_sweep",
    "timing_bench",
]

__version__ = "0.1.0"
