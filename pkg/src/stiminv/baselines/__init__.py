from .maf import MAFConfig, MAFModel, maf_mode_search, maf_nll, train_maf
from .mdn import MDNConfig, MDNModel, mdn_nll, train_mdn
from .ni import NIConfig, NIModel, train_ni

__all__ = [
    "MAFConfig",
    "MAFModel",
    "MDNConfig",
    "MDNModel",
    "NIConfig",
    "NIModel",
    "maf_mode_search",
    "maf_nll",
    "mdn_nll",
    "train_mdn",
    "train_maf",
    "train_ni",
]
