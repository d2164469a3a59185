"""Mode finding for Gaussian mixtures.

Every mode is found by hill-climbing from each component centroid with the
mean-shift fixed-point iteration

    x <- (sum_k p(k|x) S_k^-1)^-1 sum_k p(k|x) S_k^-1 mu_k

which, for homoscedastic isotropic mixtures, is plain Gaussian mean shift.
The step direction is always an ascent direction of log p; a backtracking
safeguard keeps every accepted step monotone for heteroscedastic mixtures
too. Converged points are polished with a few Newton steps on log p and
then merged.

A mixture in two or more dimensions can occasionally have modes that no
centroid climbs to; such modes are not reported.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .mixture import ISOTROPIC, GaussianMixture

__all__ = ["ModeSet", "fixed_point_step", "hill_climb", "find_all_modes", "global_mode",
           "log_density_gradient"]


@dataclass(frozen=True)
class ModeSet:
    """Modes sorted by decreasing log-density.

    ``unconverged`` lists the start indices whose climb hit ``max_iter`` or
    failed the stationarity check; their end points are still merged in.
    """

    points: np.ndarray
    log_densities: np.ndarray
    unconverged: tuple[int, ...] = field(default=())

    def __len__(self):
        return len(self.log_densities)


def _responsibilities(gm: GaussianMixture, X: np.ndarray):
    L = gm.component_log_densities(X)
    lse = logsumexp(L, axis=1)
    return np.exp(L - lse[:, None]), lse


def _fixed_point(gm: GaussianMixture, X: np.ndarray, R: np.ndarray) -> np.ndarray:
    if gm.covariance_kind == ISOTROPIC:
        return R @ gm.means
    P = 1.0 / gm.variance_matrix
    return (R @ (gm.means * P)) / (R @ P)


def fixed_point_step(gm: GaussianMixture, x) -> np.ndarray:
    """One mean-shift update of ``x`` (a point or a stack of points)."""
    x = np.asarray(x, dtype=float)
    X = np.atleast_2d(x)
    R, _ = _responsibilities(gm, X)
    out = _fixed_point(gm, X, R)
    return out[0] if x.ndim == 1 else out


def _grad_hess(gm: GaussianMixture, X: np.ndarray):
    """Gradient and Hessian of log p at each row of X."""
    R, lse = _responsibilities(gm, X)
    P = 1.0 / gm.variance_matrix                       # (K, d)
    A = (gm.means[None, :, :] - X[:, None, :]) * P     # (B, K, d)
    g = np.einsum("bk,bkd->bd", R, A)
    H = np.einsum("bk,bkd,bke->bde", R, A, A)
    H -= np.einsum("bk,kd->bd", R, P)[:, :, None] * np.eye(X.shape[1])[None]
    H -= g[:, :, None] * g[:, None, :]
    return g, H, lse


def log_density_gradient(gm: GaussianMixture, x) -> np.ndarray:
    """Gradient of ``log p`` at ``x``; equal to ``grad p / p``."""
    x = np.asarray(x, dtype=float)
    g, _, _ = _grad_hess(gm, np.atleast_2d(x))
    return g[0] if x.ndim == 1 else g


def hill_climb(gm: GaussianMixture, starts, tol_step: float = 1e-8, max_iter: int = 500,
               polish: bool = True, record: bool = False):
    """Climb from each start to a local maximum of the mixture density.

    Returns ``(points, log_densities, n_iter, paths)`` where ``paths`` holds
    the per-iteration log-densities of every climb when ``record`` is set
    (else ``None``).
    """
    X = np.array(np.atleast_2d(starts), dtype=float)
    B = X.shape[0]
    _, logp = _responsibilities(gm, X)
    active = np.ones(B, dtype=bool)
    n_iter = np.zeros(B, dtype=int)
    paths = [[float(v)] for v in logp] if record else None

    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        Xa = X[idx]
        R, _ = _responsibilities(gm, Xa)
        step = _fixed_point(gm, Xa, R) - Xa
        new = Xa + step
        _, new_logp = _responsibilities(gm, new)
        # backtrack on the rare non-monotone step (heteroscedastic components)
        bad = new_logp < logp[idx]
        t = 1.0
        while bad.any() and t > 1e-12:
            t *= 0.5
            new[bad] = Xa[bad] + t * step[bad]
            _, nl = _responsibilities(gm, new[bad])
            new_logp[bad] = nl
            bad_idx = np.flatnonzero(bad)
            bad[bad_idx[nl >= logp[idx][bad_idx]]] = False
        new[bad] = Xa[bad]
        new_logp[bad] = logp[idx][bad]
        moved = np.linalg.norm(new - Xa, axis=1)
        X[idx] = new
        logp[idx] = new_logp
        n_iter[idx] += 1
        if record:
            for j, i in enumerate(idx):
                paths[i].append(float(new_logp[j]))
        active[idx[(moved < tol_step) | bad]] = False

    if polish:
        X, logp = _newton_polish(gm, X, logp, tol_step, paths)
    return X, logp, n_iter, paths


def _newton_polish(gm, X, logp, tol_step, paths, max_steps: int = 20):
    """Newton steps on log p, accepted only where they do not lower the density."""
    active = np.ones(X.shape[0], dtype=bool)
    for _ in range(max_steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        g, H, _ = _grad_hess(gm, X[idx])
        ok = np.all(np.linalg.eigvalsh(H) < 0, axis=1)
        delta = np.zeros_like(g)
        if ok.any():
            delta[ok] = -np.linalg.solve(H[ok], g[ok][:, :, None])[:, :, 0]
        cand = X[idx] + delta
        _, cand_logp = _responsibilities(gm, cand)
        accept = ok & (cand_logp >= logp[idx])
        X[idx[accept]] = cand[accept]
        logp[idx[accept]] = cand_logp[accept]
        if paths is not None:
            for i in idx[accept]:
                paths[i].append(float(logp[i]))
        small = np.linalg.norm(delta, axis=1) < tol_step * 1e-2
        active[idx[~accept | small]] = False
    return X, logp


def find_all_modes(gm: GaussianMixture, tol_step: float = 1e-8, tol_grad: float = 1e-6,
                   merge_radius: float | None = None, max_iter: int = 500) -> ModeSet:
    """All modes reachable by hill-climbing from the component centroids.

    ``merge_radius`` defaults to ``1e-4 * gm.scale`` (floored at 1e-12);
    end points closer than that collapse onto the denser one.
    """
    if merge_radius is None:
        merge_radius = max(1e-4 * gm.scale, 1e-12)
    starts = np.flatnonzero(gm.weights > 0)
    X, logp, n_iter, _ = hill_climb(gm, gm.means[starts], tol_step, max_iter)
    grad = np.linalg.norm(log_density_gradient(gm, X), axis=1)
    unconverged = tuple(int(starts[i]) for i in np.flatnonzero((n_iter >= max_iter) | (grad >= tol_grad)))

    # descending density, ties broken lexicographically for determinism
    order = np.lexsort(tuple(X.T[::-1]) + (-logp,))
    kept: list[int] = []
    for i in order:
        if not kept or np.min(np.linalg.norm(X[kept] - X[i], axis=1)) >= merge_radius:
            kept.append(i)
    return ModeSet(points=X[kept].copy(), log_densities=logp[kept].copy(), unconverged=unconverged)


def global_mode(gm: GaussianMixture) -> np.ndarray:
    """Highest-density mode found by ``find_all_modes``."""
    return find_all_modes(gm).points[0]
