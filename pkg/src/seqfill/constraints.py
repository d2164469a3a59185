"""Trajectory constraints: continuity, smoothness, quadratic and forward mapping.

Each cost is a sum of local terms. Sums use ``math.fsum`` so that totals are
exactly rounded and independent of summation order (reversing a sequence
gives a bit-identical continuity cost).

A :class:`ConstraintSpec` combines weighted terms and exposes the pieces the
path search needs: per-node costs, costs of edges between adjacent steps and
costs of triples of consecutive steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "NormKind",
    "Continuity",
    "Smoothness",
    "Quadratic",
    "ForwardMapping",
    "ConstraintSpec",
    "continuity_cost",
    "smoothness_cost",
    "quadratic_cost",
    "forward_mapping_cost",
    "parse_constraint",
    "FORWARD_MAPS",
]

EUCLIDEAN = "euclidean"
SQUARED = "squared_euclidean"
WEIGHTED = "weighted_euclidean"


@dataclass(frozen=True)
class NormKind:
    kind: str = EUCLIDEAN
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in (EUCLIDEAN, SQUARED, WEIGHTED):
            raise ValueError(f"unknown norm {self.kind!r}")
        if self.kind == WEIGHTED:
            if self.weights is None or not all(w > 0 for w in self.weights):
                raise ValueError("weighted norm needs strictly positive weights")
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))

    def __call__(self, v) -> np.ndarray:
        """Norm of each vector along the last axis."""
        v = np.asarray(v, dtype=float)
        if self.kind == SQUARED:
            return np.sum(v * v, axis=-1)
        if self.kind == WEIGHTED:
            w = np.asarray(self.weights)
            if w.size != v.shape[-1]:
                raise ValueError("norm weights do not match the vector dimension")
            return np.sqrt(np.sum(w * v * v, axis=-1))
        return np.sqrt(np.sum(v * v, axis=-1))


def _as_seq(seq) -> np.ndarray:
    s = np.asarray(seq, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    if s.ndim != 2 or s.shape[0] < 1:
        raise ValueError("sequence must be an (N, D) matrix with N >= 1")
    if not np.all(np.isfinite(s)):
        raise ValueError("sequence contains non-finite values")
    return s


def continuity_cost(seq, norm: NormKind = NormKind(), step_weights=None) -> float:
    """Weighted polygonal length ``sum_n w_n ||t_n - t_n+1||``."""
    s = _as_seq(seq)
    if s.shape[0] < 2:
        return 0.0
    terms = norm(np.diff(s, axis=0))
    if step_weights is not None:
        terms = np.asarray(step_weights, dtype=float) * terms
    return math.fsum(terms)


def smoothness_cost(seq, norm: NormKind = NormKind()) -> float:
    """``sum_n ||t_n+1 - 2 t_n + t_n-1||``; zero for N <= 2."""
    s = _as_seq(seq)
    if s.shape[0] < 3:
        return 0.0
    return math.fsum(norm(s[2:] - 2.0 * s[1:-1] + s[:-2]))


def _check_q(Q, dim: int) -> np.ndarray:
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.shape != (dim, dim):
        raise ValueError(f"Q must be {dim}x{dim}")
    if not np.allclose(Q, Q.T, rtol=0.0, atol=1e-12):
        raise ValueError("Q must be symmetric")
    return Q


def quadratic_cost(seq, Q, t0) -> float:
    """``sum_n (t_n - t0)^T Q (t_n - t0)``."""
    s = _as_seq(seq)
    Q = _check_q(Q, s.shape[1])
    d = s - np.asarray(t0, dtype=float)
    return math.fsum(np.einsum("nd,de,ne->n", d, Q, d))


def forward_mapping_cost(seq_present, seq_missing, fmap: Callable, norm: NormKind = NormKind()) -> float:
    """``sum_n ||t_n,P - g(t_n,M)||`` for a constant present/missing split."""
    P = _as_seq(seq_present)
    M = _as_seq(seq_missing)
    if P.shape[0] != M.shape[0]:
        raise ValueError("present and missing blocks must have the same number of rows")
    images = np.array([np.asarray(fmap(m), dtype=float).reshape(-1) for m in M])
    return math.fsum(norm(P - images))


# -- terms -------------------------------------------------------------------

@dataclass(frozen=True)
class Continuity:
    norm: NormKind = NormKind()
    coef: float = 1.0
    step_weights: tuple[float, ...] | None = None
    # weight step n by 1 / (z_n+1 - z_n) from the sequence timestamps
    use_timestamps: bool = False


@dataclass(frozen=True)
class Smoothness:
    norm: NormKind = NormKind()
    coef: float = 1.0


@dataclass(frozen=True, eq=False)
class Quadratic:
    Q: np.ndarray
    t0: np.ndarray
    coef: float = 1.0


@dataclass(frozen=True, eq=False)
class ForwardMapping:
    """``g`` maps missing coordinates (in index order) to present ones."""

    fmap: Callable
    present: tuple[int, ...]
    missing: tuple[int, ...]
    norm: NormKind = NormKind()
    coef: float = 1.0


Term = Continuity | Smoothness | Quadratic | ForwardMapping


@dataclass(frozen=True)
class ConstraintSpec:
    terms: tuple = field(default_factory=lambda: (Continuity(),))

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise ValueError("a constraint needs at least one term")
        if any(t.coef < 0 for t in terms) or all(t.coef == 0 for t in terms):
            raise ValueError("coefficients must be >= 0 and not all zero")
        object.__setattr__(self, "terms", terms)

    @property
    def has_smoothness(self) -> bool:
        return any(isinstance(t, Smoothness) and t.coef > 0 for t in self.terms)

    @property
    def has_node_terms(self) -> bool:
        return any(isinstance(t, (Quadratic, ForwardMapping)) and t.coef > 0 for t in self.terms)

    def bind(self, n_steps: int, timestamps=None) -> "ConstraintSpec":
        """Resolve timestamp-derived step weights for an ``n_steps`` sequence."""
        terms = []
        for t in self.terms:
            if isinstance(t, Continuity) and t.use_timestamps:
                if timestamps is None:
                    raise ValueError("continuity term wants timestamps but the sequence has none")
                z = np.asarray(timestamps, dtype=float)
                if z.size != n_steps or np.any(np.diff(z) <= 0):
                    raise ValueError("timestamps must be strictly increasing, one per step")
                t = replace(t, step_weights=tuple(1.0 / np.diff(z)), use_timestamps=False)
            if isinstance(t, Continuity) and t.step_weights is not None and len(t.step_weights) != n_steps - 1:
                raise ValueError("continuity step_weights must have length N - 1")
            terms.append(t)
        return ConstraintSpec(tuple(terms))

    def check_pattern(self, mask) -> None:
        """Forward-mapping terms need every row to share the term's split."""
        mask = np.asarray(mask, dtype=bool)
        for t in self.terms:
            if isinstance(t, ForwardMapping):
                want = np.zeros(mask.shape[1], dtype=bool)
                want[list(t.present)] = True
                if not np.all(mask == want[None, :]):
                    raise ValueError("forward-mapping constraint requires constant pattern")

    # pieces used by the path search; candidate arrays are (nu, D)

    def node_cost(self, cands: np.ndarray) -> np.ndarray:
        out = np.zeros(cands.shape[0])
        for t in self.terms:
            if isinstance(t, Quadratic):
                d = cands - np.asarray(t.t0, dtype=float)
                Q = _check_q(t.Q, cands.shape[1])
                out += t.coef * np.einsum("nd,de,ne->n", d, Q, d)
            elif isinstance(t, ForwardMapping):
                img = np.array([np.asarray(t.fmap(c[list(t.missing)]), dtype=float).reshape(-1)
                                for c in cands])
                out += t.coef * t.norm(cands[:, list(t.present)] - img)
        return out

    def edge_cost(self, left: np.ndarray, right: np.ndarray, step: int) -> np.ndarray:
        """(nu_left, nu_right) costs of moving from step ``step`` to ``step + 1``."""
        out = np.zeros((left.shape[0], right.shape[0]))
        diff = left[:, None, :] - right[None, :, :]
        for t in self.terms:
            if isinstance(t, Continuity):
                w = 1.0 if t.step_weights is None else t.step_weights[step]
                out += (t.coef * w) * t.norm(diff)
        return out

    def triple_cost(self, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
        """(nu_a, nu_b, nu_c) second-difference costs."""
        out = np.zeros((a.shape[0], b.shape[0], c.shape[0]))
        second = a[:, None, None, :] - 2.0 * b[None, :, None, :] + c[None, None, :, :]
        for t in self.terms:
            if isinstance(t, Smoothness):
                out += t.coef * t.norm(second)
        return out

    def evaluate(self, seq) -> float:
        """Total constraint value of a complete sequence."""
        s = _as_seq(seq)
        parts = []
        for t in self.terms:
            if isinstance(t, Continuity):
                parts.append(t.coef * continuity_cost(s, t.norm, t.step_weights))
            elif isinstance(t, Smoothness):
                parts.append(t.coef * smoothness_cost(s, t.norm))
            elif isinstance(t, Quadratic):
                parts.append(t.coef * quadratic_cost(s, t.Q, t.t0))
            elif isinstance(t, ForwardMapping):
                parts.append(t.coef * forward_mapping_cost(
                    s[:, list(t.present)], s[:, list(t.missing)], t.fmap, t.norm))
        return math.fsum(parts)


def _toy_map(m):
    return m + 3.0 * np.sin(m)


def _arm_map(theta):
    from .experiments import arm_forward
    return arm_forward(theta)


# named forward mappings usable from JSON constraint documents
FORWARD_MAPS: dict[str, Callable] = {"toy": _toy_map, "arm": _arm_map}


def _parse_norm(doc) -> NormKind:
    if isinstance(doc, str):
        return NormKind(doc)
    if doc is None:
        return NormKind()
    return NormKind(doc.get("kind", EUCLIDEAN), doc.get("weights"))


def parse_constraint(doc: dict | Sequence) -> ConstraintSpec:
    """Build a spec from ``{"terms": [{"kind": "continuity", ...}, ...]}``.

    Accepted kinds and keys:
      continuity      norm, coef, step_weights, use_timestamps
      smoothness      norm, coef
      quadratic       Q, t0, coef
      forward_mapping map (one of FORWARD_MAPS), present, missing, norm, coef
    """
    terms = []
    for t in doc["terms"] if isinstance(doc, dict) else doc:
        kind = t.get("kind")
        coef = float(t.get("coef", 1.0))
        norm = _parse_norm(t.get("norm"))
        if kind == "continuity":
            sw = t.get("step_weights")
            terms.append(Continuity(norm, coef, tuple(sw) if sw is not None else None,
                                    bool(t.get("use_timestamps", False))))
        elif kind == "smoothness":
            terms.append(Smoothness(norm, coef))
        elif kind == "quadratic":
            terms.append(Quadratic(np.asarray(t["Q"], dtype=float), np.asarray(t["t0"], dtype=float), coef))
        elif kind == "forward_mapping":
            name = t.get("map")
            if name not in FORWARD_MAPS:
                raise ValueError(f"unknown forward map {name!r}; choose from {sorted(FORWARD_MAPS)}")
            terms.append(ForwardMapping(FORWARD_MAPS[name], tuple(t["present"]), tuple(t["missing"]),
                                        norm, coef))
        else:
            raise ValueError(f"unknown constraint kind {kind!r}")
    return ConstraintSpec(tuple(terms))
