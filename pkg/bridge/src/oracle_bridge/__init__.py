"""Child-process molecular property oracles speaking line-delimited JSON."""

from .scoring import activity, echo, logp, qed, sa  # noqa: F401

__all__ = ["activity", "echo", "logp", "qed", "sa"]
