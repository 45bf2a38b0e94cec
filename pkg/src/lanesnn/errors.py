"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Bad or inconsistent configuration (unknown scenario, empty dataset, ...)."""


class LocalizationError(RuntimeError):
    """Robot position too far from any lane centerline; the run must abort."""


class ContractError(ValueError):
    """A caller violated an interface contract (shape mismatch, bad action id, ...)."""


class TrainingDivergenceError(RuntimeError):
    """Loss became non-finite during optimization."""
