"""Dirichlet containers and measures, plus the value types they share.

Everything downstream circulates the same three immutable values: a Dirichlet
concentration vector, a base rate (prior class proportions with a prior
weight), and a nonnegative evidence vector. They are frozen dataclasses over
read-only numpy arrays; all operations on them are pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .specfun import digamma, ln_gamma


def _read_only(values, name, min_size=2):
    arr = np.asarray(values, dtype=float).copy()
    if arr.ndim != 1 or arr.size < min_size:
        raise ValueError(f"{name} must be a vector with at least {min_size} components")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class DirichletParams:
    """Concentration vector of a Dirichlet distribution over class probabilities."""

    alpha: np.ndarray

    def __post_init__(self):
        alpha = _read_only(self.alpha, "alpha")
        if np.any(alpha <= 0.0):
            raise ValueError("alpha components must be strictly positive")
        object.__setattr__(self, "alpha", alpha)

    @property
    def num_classes(self) -> int:
        return self.alpha.size


@dataclass(frozen=True, eq=False)
class BaseRate:
    """Prior class proportions a (summing to 1) with prior weight W.

    The weight defaults to the number of classes, which makes zero evidence
    correspond to the uniform unit prior alpha = a*W = 1.
    """

    rates: np.ndarray
    weight: float | None = None

    def __post_init__(self):
        rates = _read_only(self.rates, "base rates")
        if np.any(rates <= 0.0):
            raise ValueError("base rates must be strictly positive")
        if abs(rates.sum() - 1.0) > 1e-9:
            raise ValueError("base rates must sum to 1")
        weight = float(self.weight) if self.weight is not None else float(rates.size)
        if not np.isfinite(weight) or weight <= 0.0:
            raise ValueError("prior weight must be a positive real")
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "weight", weight)

    @property
    def num_classes(self) -> int:
        return self.rates.size

    def to_dict(self) -> dict:
        return {"rates": [float(a) for a in self.rates], "weight": self.weight}

    @classmethod
    def from_dict(cls, obj: dict) -> "BaseRate":
        if not isinstance(obj, dict) or "rates" not in obj:
            raise ValueError('base rate object needs a "rates" list')
        return cls(obj["rates"], obj.get("weight"))


@dataclass(frozen=True, eq=False)
class EvidenceVector:
    """Nonnegative per-class evidence produced by a network head."""

    evidence: np.ndarray

    def __post_init__(self):
        evidence = _read_only(self.evidence, "evidence")
        if np.any(evidence < 0.0):
            raise ValueError("evidence must be nonnegative")
        object.__setattr__(self, "evidence", evidence)

    @property
    def num_classes(self) -> int:
        return self.evidence.size


def strength(p: DirichletParams) -> float:
    """Total concentration S = sum(alpha)."""
    return float(p.alpha.sum())


def expected_probabilities(p: DirichletParams) -> np.ndarray:
    """Mean of the Dirichlet: alpha / S."""
    return p.alpha / p.alpha.sum()


def predict_class(p: DirichletParams) -> int:
    """Index of the largest expected probability; ties go to the smallest index."""
    return int(np.argmax(p.alpha))


def kl_dirichlet(p: DirichletParams, q: DirichletParams) -> float:
    """KL divergence KL[Dir(p) || Dir(q)] in closed form.

    Tiny negative rounding residue is clamped to zero, since the divergence
    is nonnegative by definition.
    """
    if p.num_classes != q.num_classes:
        raise ValueError("KL divergence needs equal numbers of classes")
    a, b = p.alpha, q.alpha
    sa = a.sum()
    value = (
        ln_gamma(sa)
        - ln_gamma(b.sum())
        - np.sum(ln_gamma(a))
        + np.sum(ln_gamma(b))
        + np.sum((a - b) * (digamma(a) - digamma(sa)))
    )
    return max(0.0, float(value))


def rebase(e: EvidenceVector, new_a: BaseRate) -> DirichletParams:
    """Attach a different prior to existing evidence: alpha = e + a'*W.

    The evidence itself is untouched, so beliefs and uncertainty are
    preserved; only expected probabilities move toward the new prior.
    """
    if e.num_classes != new_a.num_classes:
        raise ValueError("evidence and base rate disagree on the number of classes")
    return DirichletParams(e.evidence + new_a.rates * new_a.weight)
