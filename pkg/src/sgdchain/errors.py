"""Exception hierarchy for sgdchain."""

from __future__ import annotations


class SgdChainError(Exception):
    """Base class for all library errors."""


class EvaluationError(SgdChainError, ArithmeticError):
    """An objective, gradient or test function returned a non-finite value."""


class DivergenceError(SgdChainError, ArithmeticError):
    """The SGD chain left the stable region (non-finite or huge iterate)."""

    def __init__(self, k: int, norm: float, stream_ids=()):
        self.k = int(k)
        self.norm = float(norm)
        self.stream_ids = tuple(int(s) for s in stream_ids)
        msg = f"SGD diverged at iteration {self.k} with |theta| = {self.norm:.3e}"
        if self.stream_ids:
            shown = ", ".join(str(s) for s in self.stream_ids[:10])
            more = "" if len(self.stream_ids) <= 10 else f" (+{len(self.stream_ids) - 10} more)"
            msg += f" on stream_id(s) {shown}{more}"
        super().__init__(msg)


class EmptyWindowError(SgdChainError, ValueError):
    """No iterates are left after the burn-in period."""


class StepSizeError(SgdChainError, ValueError):
    """A step size violates a theoretical cap.

    ``cap_name`` names the binding cap and ``cap`` its value.
    """

    def __init__(self, eta: float, cap: float, cap_name: str):
        self.eta = float(eta)
        self.cap = float(cap)
        self.cap_name = cap_name
        super().__init__(
            f"step size eta={self.eta:g} is not below the {cap_name} cap {self.cap:.6g}"
        )


class CertificationError(SgdChainError):
    """A sampled assumption check could not certify the requested property."""

    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)


class NotFoundError(SgdChainError, LookupError):
    """A search (e.g. for a negative-curvature witness) came up empty."""


class UnsupportedObjectiveError(SgdChainError, ValueError):
    """The requested operation needs structure the objective does not have."""
