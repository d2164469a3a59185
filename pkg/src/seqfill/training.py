"""Fitting the joint density from a complete training set.

Two trainers are provided: EM for a Gaussian mixture whose components each
have one isotropic variance, and the generative topographic mapping (GTM),
whose density is an equal-weight mixture of isotropic Gaussians centred on
the image of a regular latent grid under an RBF network.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .mixture import DIAGONAL, ISOTROPIC, GaussianMixture

__all__ = [
    "TrainConfig",
    "GtmModel",
    "em_fit_isotropic",
    "gtm_fit",
    "gtm_to_mixture",
    "regular_grid",
]

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class TrainConfig:
    max_iter: int = 200
    rel_tol: float = 1e-6
    seed: int = 0
    k: int = 10
    latent_dim: int = 1
    n_basis: int = 9
    width_factor: float = 1.0
    ridge: float = 0.0

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be > 0")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.latent_dim < 1 or self.n_basis < 1:
            raise ValueError("latent_dim and n_basis must be >= 1")
        if not self.width_factor > 0 or self.ridge < 0:
            raise ValueError("width_factor must be > 0 and ridge >= 0")


def _check_data(data) -> np.ndarray:
    X = np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or not np.all(np.isfinite(X)):
        raise ValueError("training data must be a finite (N, D) matrix")
    return X


def _converged(old: float, new: float, rel_tol: float) -> bool:
    return abs(new - old) <= rel_tol * max(abs(old), 1e-300)


# -- isotropic EM ------------------------------------------------------------

def em_fit_isotropic(data, k: int, cfg: TrainConfig = TrainConfig(), return_history: bool = False):
    """EM for a K-component mixture with one isotropic variance per component.

    Means start at K distinct data rows chosen with ``cfg.seed``; variances
    start at the global data variance and weights at 1/K. Variances are
    floored at ``1e-10 * scale**2`` (with a warning) to avoid collapse.

    Returns the fitted ``GaussianMixture`` (diagonal kind, constant rows),
    plus the per-iteration training log-likelihoods when ``return_history``.
    """
    X = _check_data(data)
    N, D = X.shape
    if N <= k:
        raise ValueError(f"need more data points ({N}) than components ({k})")
    rng = np.random.default_rng(cfg.seed)
    distinct = np.unique(X, axis=0)
    if distinct.shape[0] < k:
        raise ValueError("fewer distinct data points than components")
    mu = distinct[np.sort(rng.choice(distinct.shape[0], size=k, replace=False))]
    global_var = float(np.mean(np.var(X, axis=0)))
    floor = 1e-10 * max(global_var, 1e-300)
    var = np.full(k, max(global_var, floor))
    w = np.full(k, 1.0 / k)

    L = _em_log_joint(X, mu, var, w)
    history = [float(np.sum(logsumexp(L, axis=1)))]
    for _ in range(cfg.max_iter):
        R = np.exp(L - logsumexp(L, axis=1, keepdims=True))
        Nk = R.sum(axis=0)
        w = Nk / N
        # a component with no responsibility keeps its old parameters at weight 0
        denom = np.where(Nk > 0, Nk, 1.0)
        mu = np.where((Nk > 0)[:, None], (R.T @ X) / denom[:, None], mu)
        sq = np.sum((X[:, None, :] - mu[None]) ** 2, axis=2)
        var = np.where(Nk > 0, np.sum(R * sq, axis=0) / (D * denom), var)
        if np.any(var < floor):
            warnings.warn("component variance collapsed; clamped to floor", RuntimeWarning)
            var = np.maximum(var, floor)
        L = _em_log_joint(X, mu, var, w)
        history.append(float(np.sum(logsumexp(L, axis=1))))
        if _converged(history[-2], history[-1], cfg.rel_tol):
            break

    gm = GaussianMixture(w / w.sum(), mu, np.repeat(var[:, None], D, axis=1), DIAGONAL)
    return (gm, history) if return_history else gm


def _em_log_joint(X, mu, var, w):
    D = X.shape[1]
    sq = np.sum((X[:, None, :] - mu[None]) ** 2, axis=2)
    with np.errstate(divide="ignore"):
        log_w = np.log(w)
    return log_w[None] - 0.5 * D * (_LOG_2PI + np.log(var))[None] - 0.5 * sq / var[None]


# -- GTM ---------------------------------------------------------------------

def regular_grid(side: int, latent_dim: int) -> np.ndarray:
    """``side**latent_dim`` points on a regular grid over ``[-1, 1]**latent_dim``."""
    axis = np.linspace(-1.0, 1.0, side) if side > 1 else np.zeros(1)
    mesh = np.meshgrid(*([axis] * latent_dim), indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def _side(count: int, latent_dim: int, what: str) -> int:
    side = int(round(count ** (1.0 / latent_dim)))
    if side ** latent_dim != count:
        raise ValueError(f"{what} = {count} is not a perfect power of latent_dim = {latent_dim}")
    return side


@dataclass(frozen=True, eq=False)
class GtmModel:
    """A trained GTM.

    ``weight_matrix`` is ``(D, F + 1)``; its last column multiplies the bias
    basis function. The induced density is the equal-weight mixture of
    ``N(W phi(x_k), variance * I)`` over the latent grid points ``x_k``.
    """

    latent_dim: int
    grid_side: int
    basis_side: int
    basis_width: float
    weight_matrix: np.ndarray
    variance: float

    def __post_init__(self):
        W = np.array(self.weight_matrix, dtype=float)
        if W.ndim != 2 or W.shape[1] != self.basis_side ** self.latent_dim + 1:
            raise ValueError("weight_matrix must be (D, F + 1)")
        if not self.variance > 0 or not self.basis_width > 0:
            raise ValueError("variance and basis_width must be > 0")
        W.setflags(write=False)
        object.__setattr__(self, "weight_matrix", W)

    @property
    def latent_grid(self) -> np.ndarray:
        return regular_grid(self.grid_side, self.latent_dim)

    @property
    def basis_centres(self) -> np.ndarray:
        return regular_grid(self.basis_side, self.latent_dim)

    @property
    def n_grid(self) -> int:
        return self.grid_side ** self.latent_dim

    def basis(self, latent) -> np.ndarray:
        """RBF design matrix (with trailing bias column) at latent points."""
        return _rbf(np.atleast_2d(latent), self.basis_centres, self.basis_width)

    def centres(self) -> np.ndarray:
        return self.basis(self.latent_grid) @ self.weight_matrix.T

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "latent_dim": self.latent_dim,
            "grid_sides": [self.grid_side] * self.latent_dim,
            "basis_sides": [self.basis_side] * self.latent_dim,
            "basis_width": self.basis_width,
            "weight_matrix": self.weight_matrix.tolist(),
            "variance": self.variance,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GtmModel":
        if doc.get("version") != 1:
            raise ValueError(f"unsupported GTM document version {doc.get('version')!r}")
        grid, basis = set(doc["grid_sides"]), set(doc["basis_sides"])
        if len(grid) != 1 or len(basis) != 1:
            raise ValueError("only square latent and basis grids are supported")
        return cls(int(doc["latent_dim"]), grid.pop(), basis.pop(), float(doc["basis_width"]),
                   np.asarray(doc["weight_matrix"], dtype=float), float(doc["variance"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _rbf(latent: np.ndarray, centres: np.ndarray, width: float) -> np.ndarray:
    sq = np.sum((latent[:, None, :] - centres[None]) ** 2, axis=2)
    return np.hstack([np.exp(-0.5 * sq / width ** 2), np.ones((latent.shape[0], 1))])


def _gtm_log_joint(T, Y, var):
    """(N, K) log of (1/K) N(t_n; y_k, var I)."""
    D = T.shape[1]
    sq = np.sum(T * T, axis=1)[:, None] - 2.0 * T @ Y.T + np.sum(Y * Y, axis=1)[None]
    sq = np.maximum(sq, 0.0)
    return -np.log(Y.shape[0]) - 0.5 * D * (_LOG_2PI + np.log(var)) - 0.5 * sq / var


def gtm_fit(data, cfg: TrainConfig = TrainConfig(k=200, n_basis=9), return_history: bool = False):
    """Fit a GTM by EM.

    ``cfg.k`` and ``cfg.n_basis`` are the total grid and basis counts and
    must be perfect ``latent_dim``-th powers. The basis width is
    ``cfg.width_factor`` times the spacing between adjacent basis centres.
    W starts as the least-squares map of the (standardised) latent grid onto
    the leading principal components, scaled by their standard deviations.
    """
    T = _check_data(data)
    N, D = T.shape
    L = cfg.latent_dim
    grid_side = _side(cfg.k, L, "k")
    basis_side = _side(cfg.n_basis, L, "n_basis")
    if N <= cfg.n_basis:
        raise ValueError(f"need more data points ({N}) than basis functions ({cfg.n_basis})")
    spacing = 2.0 / (basis_side - 1) if basis_side > 1 else 2.0
    width = cfg.width_factor * spacing

    latent = regular_grid(grid_side, L)
    Phi = _rbf(latent, regular_grid(basis_side, L), width)

    # principal-component initialisation
    centred = T - T.mean(axis=0)
    evals, evecs = np.linalg.eigh(np.cov(centred, rowvar=False).reshape(D, D))
    order = np.argsort(evals)[::-1]
    evals, evecs = np.maximum(evals[order], 0.0), evecs[:, order]
    nl = min(L, D)
    std = latent.std(axis=0)
    z = (latent - latent.mean(axis=0)) / np.where(std > 0, std, 1.0)
    target = T.mean(axis=0) + z[:, :nl] @ (evecs[:, :nl] * np.sqrt(evals[:nl])).T
    W = np.linalg.lstsq(Phi, target, rcond=None)[0].T
    Y = Phi @ W.T
    if Y.shape[0] > 1:
        d2 = np.sum((Y[:, None] - Y[None]) ** 2, axis=2)
        np.fill_diagonal(d2, np.inf)
        var = float(np.mean(np.min(d2, axis=1)) / 2.0)
    else:
        var = 0.0
    if D > L:
        var = max(var, float(evals[L]))
    if not var > 0:
        var = float(np.mean(np.var(T, axis=0))) or 1.0

    logj = _gtm_log_joint(T, Y, var)
    history = [float(np.sum(logsumexp(logj, axis=1)))]
    ridge = cfg.ridge * np.eye(Phi.shape[1])
    for _ in range(cfg.max_iter):
        R = np.exp(logj - logsumexp(logj, axis=1, keepdims=True))    # (N, K)
        G = R.sum(axis=0)
        A = Phi.T @ (G[:, None] * Phi) + var * ridge
        B = Phi.T @ (R.T @ T)
        W = _solve_mstep(A, B).T
        Y = Phi @ W.T
        sq = np.sum(T * T, axis=1)[:, None] - 2.0 * T @ Y.T + np.sum(Y * Y, axis=1)[None]
        var = float(np.sum(R * np.maximum(sq, 0.0)) / (N * D))
        if not var > 0:
            raise ValueError("GTM variance collapsed to zero")
        logj = _gtm_log_joint(T, Y, var)
        history.append(float(np.sum(logsumexp(logj, axis=1))))
        if _converged(history[-2], history[-1], cfg.rel_tol):
            break

    model = GtmModel(L, grid_side, basis_side, width, W, var)
    return (model, history) if return_history else model


def _solve_mstep(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if np.linalg.cond(A) < 1e12:
        return np.linalg.solve(A, B)
    warnings.warn("singular GTM M-step system; using least squares", RuntimeWarning)
    return np.linalg.lstsq(A, B, rcond=None)[0]


def gtm_to_mixture(gtm: GtmModel) -> GaussianMixture:
    """Equal-weight isotropic mixture induced by the GTM."""
    K = gtm.n_grid
    return GaussianMixture(np.full(K, 1.0 / K), gtm.centres(), gtm.variance, ISOTROPIC)
