# errors.py
from __future__ import annotations

from typing import Any, Dict


class KatoLabError(ValueError):
    """Base class for every error the lab raises on purpose.

    ``code`` is the short tag written into report payloads.
    """

    code = "katolab_error"


class ParameterError(KatoLabError):
    code = "invalid_parameter"


class ConfigError(ParameterError):
    code = "invalid_config"


class DomainError(KatoLabError):
    code = "domain_error"


class PoleProximityError(DomainError):
    code = "pole_proximity"


class UnsupportedError(KatoLabError):
    code = "unsupported"


class TruncationError(KatoLabError):
    code = "truncation"


class IntegrityError(KatoLabError):
    code = "integrity"


class StateError(KatoLabError):
    code = "invalid_state"


class UnreliableFitError(KatoLabError):
    code = "unreliable_fit"


def error_payload(exc: BaseException) -> Dict[str, Any]:
    return {
        "error": getattr(exc, "code", type(exc).__name__),
        "details": str(exc)[:400],
    }
