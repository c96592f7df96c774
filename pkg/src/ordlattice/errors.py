"""Exception and warning types shared across the package.

Every error carries a short machine-parsable ``code`` so the CLI can emit
single-line diagnostics of the form ``error code=<CODE> msg="..."``.
"""

from __future__ import annotations


class OrdLatticeError(Exception):
    """Base class for all package errors."""

    code = "INTERNAL"

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class GridError(OrdLatticeError):
    """Malformed lattice definition (duplicate cells, isolated sites)."""

    code = "GRID_INVALID"


class IngestError(OrdLatticeError):
    """Input data violates the panel CSV schema."""

    code = "INGEST_INVALID"


class CollinearDesignError(OrdLatticeError):
    """Whitened regression design is rank deficient."""

    code = "COLLINEAR_DESIGN"

    def __init__(self, message: str, columns: list[int] | None = None):
        super().__init__(message)
        self.columns = columns or []


class EmptyReservoirError(OrdLatticeError):
    code = "EMPTY_RESERVOIR"


class SizeGuardError(OrdLatticeError):
    """Problem too large for the single-stage reference sampler."""

    code = "SIZE_GUARD"


class DimensionMismatchError(OrdLatticeError):
    code = "DIMENSION_MISMATCH"


class ConfigError(OrdLatticeError):
    code = "CONFIG_INVALID"


class StorageError(OrdLatticeError):
    code = "STORAGE_INVALID"


class LowAcceptanceWarning(UserWarning):
    """A site's resampling acceptance rate fell below 1% after burn-in."""


class ConstantChainWarning(UserWarning):
    """ESS requested for a constant chain; defined as N by convention."""


class ShortChainWarning(UserWarning):
    """Chain configuration retains fewer than 100 draws."""
