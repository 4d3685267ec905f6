"""Global solver kernel for factorable mixed-integer nonlinear programs."""

__version__ = "0.1.0"
