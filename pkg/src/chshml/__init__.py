"""Bell-nonlocality toolkit: CHSH geometry, NPA relaxations, see-saw certificates
and learned membership classifiers for two-party, two-setting behaviours."""

__version__ = "0.1.0"

from .geometry import P_PR, TSIRELSON_BOUND, Space, chsh_value, tlm_satisfied
from .npa import NpaLevel, is_member, max_lambda
from .oracles import get_oracle

__all__ = [
    "P_PR",
    "TSIRELSON_BOUND",
    "NpaLevel",
    "Space",
    "chsh_value",
    "get_oracle",
    "is_member",
    "max_lambda",
    "tlm_satisfied",
    "__version__",
]
