"""Semi-modular inference for two-module models."""
from smi.errors import (
    CapabilityError,
    CapacityError,
    ConfigError,
    ContractError,
    DataValidationError,
    NumericalError,
    SelectionError,
    SmiError,
)
from smi.model import ModuleData, SmiParams, TwoModuleModel, cut_log_loss, smi_log_loss

__version__ = "0.1.0"

__all__ = [
    "CapabilityError",
    "CapacityError",
    "ConfigError",
    "ContractError",
    "DataValidationError",
    "ModuleData",
    "NumericalError",
    "SelectionError",
    "SmiError",
    "SmiParams",
    "TwoModuleModel",
    "cut_log_loss",
    "smi_log_loss",
]
