"""Exception types shared across the package."""


class ModwellError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ModwellError):
    """Invalid parameters or run configuration."""


class NumericalError(ModwellError):
    """A numerical procedure failed or did not converge."""


class ResolutionError(NumericalError):
    """Grid or basis too coarse for the requested tolerance."""


class DomainError(ModwellError):
    """Inputs outside the physical domain of an operation."""


class IntegrationError(NumericalError):
    """Trajectory integration violated its conservation tolerance."""


class StepSizeError(NumericalError):
    """Time step too large for the requested accuracy."""


class TuningError(ModwellError):
    """Sampler proposal widths need retuning."""


class CalibrationError(ModwellError):
    """Parameter set does not realize the required physical regime."""


class IllPosedError(NumericalError):
    """Reconstruction too ill-conditioned for the available data."""
