from typing import Optional


class SNLSError(Exception):
    """Base error; `code` is the machine-readable name, `detail` the message."""

    code = "snls-error"

    def __init__(self, detail: str, parameter: Optional[str] = None):
        super().__init__(detail)
        self.detail = detail
        self.parameter = parameter

    def to_dict(self) -> dict:
        return {"error": self.code, "parameter": self.parameter, "detail": self.detail}


class InvalidDimensionError(SNLSError, ValueError):
    code = "invalid-dimension"


class InvalidResolutionError(SNLSError, ValueError):
    code = "invalid-resolution"


class NonFiniteFieldError(SNLSError, ValueError):
    code = "non-finite-field"


class IntervalNotCoveredError(SNLSError, ValueError):
    code = "interval-not-covered"


class ExponentDimensionMismatchError(SNLSError, ValueError):
    code = "exponent-dimension-mismatch"


class OffMeshError(SNLSError, ValueError):
    code = "t-off-mesh"


class FrameMismatchError(SNLSError, ValueError):
    code = "frame-mismatch"


class MissingSnapshotError(SNLSError, LookupError):
    code = "missing-snapshots"


class MeshMismatchError(SNLSError, ValueError):
    code = "mesh-mismatch"


class PicardDivergenceError(SNLSError, ArithmeticError):
    code = "divergence"

    def __init__(self, detail: str, distances=None):
        super().__init__(detail)
        self.distances = list(distances or [])


class InadmissiblePairError(SNLSError, ValueError):
    code = "inadmissible-pair"


class NonPositiveInputError(SNLSError, ValueError):
    code = "nonpositive-input"


class CorruptManifestError(SNLSError):
    code = "corrupt-manifest"


class VersionMismatchError(SNLSError):
    code = "version-mismatch"


class CliValidationError(SNLSError, ValueError):
    code = "validation-failure"


class UnknownFlagError(SNLSError, ValueError):
    code = "unknown-flag"


class InvalidExponentError(SNLSError, ValueError):
    code = "invalid-exponent"


class InvalidParameterError(SNLSError, ValueError):
    code = "invalid-parameter"
