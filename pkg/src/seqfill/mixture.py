"""Gaussian mixture densities with axis-aligned covariances.

Two covariance families are supported:

``isotropic``
    every component shares a single variance ``sigma**2`` in every
    coordinate (the form produced by GTM).
``diagonal``
    each component has its own vector of per-coordinate variances.

Both families make marginalisation and conditioning a matter of slicing
rows and columns, and all weight arithmetic is done in log-space.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "GaussianMixture",
    "IndexSplit",
    "ModelSupportError",
    "log_density",
    "marginal",
    "condition",
    "mean",
    "prune",
    "sample",
]

ISOTROPIC = "isotropic"
DIAGONAL = "diagonal"
_LOG_2PI = np.log(2.0 * np.pi)


class ModelSupportError(ValueError):
    """Raised when an observation cannot be weighed against the model."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Immutable Gaussian mixture ``sum_k w_k N(mu_k, diag(v_k))``.

    Parameters
    ----------
    weights : (K,) array
        Mixing proportions; non-negative, summing to one.
    means : (K, D) array
        Component centroids.
    variances : float or (K, D) array
        A single shared variance (``covariance_kind="isotropic"``) or
        per-component diagonal variances (``"diagonal"``).
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray | float
    covariance_kind: str = DIAGONAL

    def __post_init__(self):
        w = _frozen(self.weights).reshape(-1)
        mu = _frozen(self.means)
        if mu.ndim == 1:
            mu = _frozen(mu.reshape(-1, 1)) if w.size > 1 else _frozen(mu.reshape(1, -1))
        if mu.ndim != 2 or mu.shape[0] != w.size:
            raise ValueError(f"means must be (K, D) with K={w.size}, got {mu.shape}")
        K, D = mu.shape
        if K < 1 or D < 1:
            raise ValueError("a mixture needs K >= 1 and D >= 1")
        if not (np.all(np.isfinite(w)) and np.all(w >= 0)):
            raise ValueError("weights must be finite and non-negative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1 (got {w.sum()!r})")
        if not np.all(np.isfinite(mu)):
            raise ValueError("means must be finite")

        if self.covariance_kind == ISOTROPIC:
            v = float(np.asarray(self.variances, dtype=float).reshape(()))
            if not (np.isfinite(v) and v > 0):
                raise ValueError("variance must be finite and > 0")
        elif self.covariance_kind == DIAGONAL:
            v = _frozen(np.broadcast_to(np.array(self.variances, dtype=float), (K, D)))
            if not (np.all(np.isfinite(v)) and np.all(v > 0)):
                raise ValueError("variances must be finite and > 0")
        else:
            raise ValueError(f"unknown covariance kind {self.covariance_kind!r}")

        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", v)

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def variance_matrix(self) -> np.ndarray:
        """(K, D) per-component, per-coordinate variances for either family."""
        if self.covariance_kind == ISOTROPIC:
            return np.full(self.means.shape, self.variances)
        return np.asarray(self.variances)

    @property
    def scale(self) -> float:
        """Root-mean component variance; a natural length scale for the model."""
        return float(np.sqrt(np.mean(self.variance_matrix)))

    def component_log_densities(self, x) -> np.ndarray:
        """``log w_k + log N(x; mu_k, Sigma_k)`` for each point and component.

        ``x`` is ``(D,)`` or ``(n, D)``; the result is ``(K,)`` or ``(n, K)``.
        """
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        if X.shape[-1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}, got {X.shape[-1]}")
        V = self.variance_matrix
        diff = X[:, None, :] - self.means[None, :, :]
        with np.errstate(divide="ignore"):
            log_w = np.log(self.weights)
        out = (log_w - 0.5 * np.sum(_LOG_2PI + np.log(V), axis=1))[None, :] \
            - 0.5 * np.sum(diff * diff / V[None, :, :], axis=2)
        return out[0] if single else out

    def log_density(self, x):
        return log_density(self, x)

    def density(self, x):
        return np.exp(log_density(self, x))

    # -- serialisation ---------------------------------------------------

    def to_dict(self) -> dict:
        if self.covariance_kind == ISOTROPIC:
            variances = float(self.variances)
        else:
            variances = np.asarray(self.variances).tolist()
        return {
            "version": 1,
            "dim": self.dim,
            "covariance_kind": self.covariance_kind,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": variances,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GaussianMixture":
        if doc.get("version") != 1:
            raise ValueError(f"unsupported mixture document version {doc.get('version')!r}")
        gm = cls(
            weights=doc["weights"],
            means=np.asarray(doc["means"], dtype=float).reshape(len(doc["weights"]), -1),
            variances=doc["variances"],
            covariance_kind=doc["covariance_kind"],
        )
        if gm.dim != doc["dim"]:
            raise ValueError("dimension field does not match means")
        return gm

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "GaussianMixture":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class IndexSplit:
    """Partition of ``range(dim)`` into present and missing coordinates."""

    present: tuple[int, ...]
    missing: tuple[int, ...]

    def __post_init__(self):
        p = tuple(sorted(int(i) for i in self.present))
        m = tuple(sorted(int(i) for i in self.missing))
        if len(set(p)) != len(p) or len(set(m)) != len(m):
            raise ValueError("index lists must be duplicate-free")
        if set(p) & set(m):
            raise ValueError("present and missing indices overlap")
        if set(p) | set(m) != set(range(len(p) + len(m))):
            raise ValueError("present and missing indices must cover 0..D-1")
        object.__setattr__(self, "present", p)
        object.__setattr__(self, "missing", m)

    @property
    def dim(self) -> int:
        return len(self.present) + len(self.missing)

    @classmethod
    def from_mask(cls, mask_row) -> "IndexSplit":
        mask_row = np.asarray(mask_row, dtype=bool)
        idx = np.arange(mask_row.size)
        return cls(tuple(idx[mask_row]), tuple(idx[~mask_row]))


def log_density(gm: GaussianMixture, t):
    """Log of the mixture density at ``t`` (a point or a stack of points)."""
    return logsumexp(gm.component_log_densities(t), axis=-1)


def _check_indices(keep: Sequence[int], dim: int) -> list[int]:
    keep = [int(i) for i in keep]
    if not keep:
        raise ValueError("index list must not be empty")
    if len(set(keep)) != len(keep):
        raise ValueError("index list contains duplicates")
    if any(i < 0 or i >= dim for i in keep):
        raise ValueError(f"indices must lie in 0..{dim - 1}")
    return keep


def marginal(gm: GaussianMixture, keep: Sequence[int]) -> GaussianMixture:
    """Mixture over the coordinates ``keep`` (in the given order)."""
    keep = _check_indices(keep, gm.dim)
    if gm.covariance_kind == ISOTROPIC:
        v = gm.variances
    else:
        v = np.asarray(gm.variances)[:, keep]
    return GaussianMixture(gm.weights, gm.means[:, keep], v, gm.covariance_kind)


def condition(gm: GaussianMixture, split: IndexSplit, observed) -> GaussianMixture:
    """Conditional mixture ``p(t_missing | t_present = observed)``.

    With axis-aligned components each conditional component is the slice of
    the joint component over the missing coordinates; only the weights
    change, to ``w_k N(observed; mu_k,P, Sigma_k,P)`` renormalised.
    Components whose renormalised weight underflows to exactly zero are
    dropped; they contribute nothing to the density.
    """
    if split.dim != gm.dim:
        raise ValueError(f"split covers {split.dim} coordinates, model has {gm.dim}")
    if not split.missing:
        raise ValueError("nothing to condition on: no missing coordinates")
    observed = np.asarray(observed, dtype=float).reshape(-1)
    if observed.size != len(split.present):
        raise ValueError(f"expected {len(split.present)} observed values, got {observed.size}")
    if not split.present:
        return gm
    if not np.all(np.isfinite(observed)):
        raise ModelSupportError("observation outside model support (non-finite value)")

    log_w = marginal(gm, split.present).component_log_densities(observed)
    log_w = log_w - logsumexp(log_w)
    w = np.exp(log_w)
    if not np.all(np.isfinite(w)) or w.sum() <= 0:
        raise ModelSupportError("observation outside model support")
    keep = w > 0
    w = w[keep] / w[keep].sum()
    miss = list(split.missing)
    if gm.covariance_kind == ISOTROPIC:
        v = gm.variances
    else:
        v = np.asarray(gm.variances)[np.ix_(keep, miss)]
    return GaussianMixture(w, gm.means[np.ix_(keep, miss)], v, gm.covariance_kind)


def prune(gm: GaussianMixture, rel_floor: float) -> GaussianMixture:
    """Drop components with weight below ``rel_floor`` times the largest
    weight and renormalise. ``rel_floor = 0`` returns ``gm`` unchanged."""
    if not 0.0 <= rel_floor < 1.0:
        raise ValueError("rel_floor must lie in [0, 1)")
    keep = gm.weights >= rel_floor * gm.weights.max()
    if rel_floor == 0.0 or keep.all():
        return gm
    w = gm.weights[keep]
    v = gm.variances if gm.covariance_kind == ISOTROPIC else gm.variance_matrix[keep]
    return GaussianMixture(w / w.sum(), gm.means[keep], v, gm.covariance_kind)


def mean(gm: GaussianMixture) -> np.ndarray:
    """Mixture mean ``sum_k w_k mu_k``."""
    return gm.weights @ gm.means


def sample(gm: GaussianMixture, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` points; bit-reproducible for a given seed.

    Uses numpy's PCG64 generator seeded through ``SeedSequence(seed)``.
    Components are drawn first, then one standard-normal block for all
    points, so the stream layout does not depend on the component draws.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    comp = rng.choice(gm.n_components, size=n, p=gm.weights)
    z = rng.standard_normal((n, gm.dim))
    return gm.means[comp] + np.sqrt(gm.variance_matrix[comp]) * z
