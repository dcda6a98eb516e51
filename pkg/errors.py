"""
Virtsense Errors
================
Every library failure surfaces as a VirtsenseError subclass so the CLI can
report it on one line.
"""


class VirtsenseError(Exception):
    """Root of all toolkit errors."""


class ConfigError(VirtsenseError):
    """Invalid or unreadable configuration."""


class DatasetError(VirtsenseError):
    """CSV ingestion, cleaning, partitioning or splitting failed."""


class SynthesisError(VirtsenseError):
    """Synthetic correlation matrix or dataset could not be produced."""


class EigenError(VirtsenseError):
    """Symmetric eigensolver rejected its input or did not converge."""


class ClusteringError(VirtsenseError):
    """K-Means or clustering-solution contract violated."""


class FusionError(VirtsenseError):
    """Ant-colony fusion could not start or continue."""


class SelectionError(VirtsenseError):
    """Representative selection failed."""


class ConstantSensorError(SelectionError):
    """Pearson correlation is undefined for a constant reading vector."""


class RegressionError(VirtsenseError):
    """Regressor fit, prediction or (de)serialization failed."""


class PipelineError(VirtsenseError):
    """End-to-end orchestration failed."""


class ArtifactError(VirtsenseError):
    """A run artifact could not be written or read back."""
