"""Testbeds: the 2-D toy curve ``t2 = t1 + 3 sin t1`` and a two-link planar arm.

Also holds mask generators and :func:`run_table`, which trains a model and
scores every reconstruction method on a set of masks.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ToySpec",
    "ArmSpec",
    "ARM",
    "toy_forward",
    "toy_training_set",
    "toy_trajectory",
    "arm_forward",
    "arm_inverse_analytic",
    "arm_training_set",
    "arm_trajectory",
    "make_mask",
    "run_table",
    "TableResult",
    "TOY_M50_NOISE",
    "toy_experiment",
    "arm_experiment",
]

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ToySpec:
    n_points: int = 1000
    noise_sigma: float = 0.2
    seed: int = 0
    domain: tuple[float, float] = (-TWO_PI, TWO_PI)

    def __post_init__(self):
        if self.noise_sigma < 0 or self.n_points < 1:
            raise ValueError("need noise_sigma >= 0 and n_points >= 1")


@dataclass(frozen=True)
class ArmSpec:
    l1: float = 0.8
    l2: float = 0.2
    theta1_range: tuple[float, float] = (0.3, 1.2)
    theta2_range: tuple[float, float] = (np.pi / 2, 3 * np.pi / 2)

    def __post_init__(self):
        if not self.l1 > self.l2 > 0:
            raise ValueError("need l1 > l2 > 0")


ARM = ArmSpec()


def toy_forward(x):
    return x + 3.0 * np.sin(x)


def toy_training_set(spec: ToySpec = ToySpec()) -> np.ndarray:
    """Unordered noisy samples ``(x, g(x)) + N(0, sigma^2 I)``, x uniform on the domain."""
    rng = np.random.default_rng(spec.seed)
    x = rng.uniform(*spec.domain, size=spec.n_points)
    t = np.column_stack([x, toy_forward(x)])
    return t + spec.noise_sigma * rng.standard_normal(t.shape)


def toy_trajectory(n: int, noise_sigma: float = 0.0, seed: int = 0) -> np.ndarray:
    """``n`` equispaced points along the curve from -2pi to 2pi, optionally noisy."""
    if n < 2:
        raise ValueError("a trajectory needs n >= 2")
    x = np.linspace(-TWO_PI, TWO_PI, n)
    t = np.column_stack([x, toy_forward(x)])
    if noise_sigma > 0:
        t = t + noise_sigma * np.random.default_rng(seed).standard_normal(t.shape)
    return t


def arm_forward(theta, arm: ArmSpec = ARM) -> np.ndarray:
    """End-effector position for joint angles ``theta`` (``(2,)`` or ``(n, 2)``)."""
    th = np.asarray(theta, dtype=float)
    t1, t2 = th[..., 0], th[..., 1]
    return np.stack([arm.l1 * np.cos(t1) + arm.l2 * np.cos(t1 + t2),
                     arm.l1 * np.sin(t1) + arm.l2 * np.sin(t1 + t2)], axis=-1)


def _in_actuator_space(theta, arm: ArmSpec) -> bool:
    (a, b), (c, d) = arm.theta1_range, arm.theta2_range
    return a <= theta[0] <= b and c <= theta[1] <= d


def arm_inverse_analytic(x, arm: ArmSpec = ARM) -> list[np.ndarray]:
    """Joint angles in the actuator space that reach ``x`` (elbow up / down).

    The elbow angle is taken in ``[0, 2pi)`` so that both branches can fall in
    the actuator range ``[pi/2, 3pi/2]``.
    """
    x = np.asarray(x, dtype=float)
    r2 = float(x @ x)
    c2 = (r2 - arm.l1 ** 2 - arm.l2 ** 2) / (2 * arm.l1 * arm.l2)
    if c2 > 1 + 1e-12 or c2 < -1 - 1e-12:
        return []
    base = float(np.arccos(np.clip(c2, -1.0, 1.0)))
    out: list[np.ndarray] = []
    for t2 in (base, TWO_PI - base):
        t1 = np.arctan2(x[1], x[0]) - np.arctan2(arm.l2 * np.sin(t2), arm.l1 + arm.l2 * np.cos(t2))
        t1 = (t1 + np.pi) % TWO_PI - np.pi
        theta = np.array([t1, t2])
        if _in_actuator_space(theta, arm) and not any(np.allclose(theta, o, atol=1e-12) for o in out):
            out.append(theta)
    return out


def arm_training_set(n: int = 1000, noise_sigma: float = 0.05, seed: int = 0,
                     arm: ArmSpec = ARM) -> np.ndarray:
    """Rows ``(theta1, theta2, x1, x2)``: uniform angles, forward map, noise on all four."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    theta = np.column_stack([rng.uniform(*arm.theta1_range, size=n),
                             rng.uniform(*arm.theta2_range, size=n)])
    rows = np.hstack([theta, arm_forward(theta, arm)])
    return rows + noise_sigma * rng.standard_normal(rows.shape)


def arm_trajectory(n: int = 34, noise_sigma: float = 0.01, seed: int = 0,
                   arm: ArmSpec = ARM) -> np.ndarray:
    """Default evaluation trajectory ``(theta1, theta2, x1, x2)``.

    The shoulder sweeps from 0.35 up to 1.1 and back while the elbow stays
    near ``pi + 1.25``. At both ends only one inverse solution lies in the
    actuator space; in the middle the elbow-up and elbow-down solutions are
    both admissible. The elbow keeps the hand about three training-noise
    widths outside the fold circle ``||x|| = l1 - l2``, where the two
    branches meet. Noise is added to all four coordinates.
    """
    if n < 2:
        raise ValueError("a trajectory needs n >= 2")
    s = np.linspace(0.0, 1.0, n)
    theta = np.column_stack([0.35 + 0.75 * np.sin(np.pi * s),
                             np.pi + 1.25 + 0.1 * np.sin(TWO_PI * s)])
    rows = np.hstack([theta, arm_forward(theta, arm)])
    if noise_sigma > 0:
        rows = rows + noise_sigma * np.random.default_rng(seed).standard_normal(rows.shape)
    return rows


def make_mask(n: int, d: int, kind: str, missing_cols=(), p: float = 0.5, seed: int = 0) -> np.ndarray:
    """Presence mask (True = present).

    ``kind`` is ``"fwd"`` or ``"inv"`` (``missing_cols`` missing in every
    row) or ``"random"`` (each cell missing independently with probability
    ``p``; whole rows may end up missing).
    """
    if kind in ("fwd", "inv"):
        mask = np.ones((n, d), dtype=bool)
        mask[:, list(missing_cols)] = False
        return mask
    if kind == "random":
        if not 0.0 <= p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        return np.random.default_rng(seed).random((n, d)) >= p
    raise ValueError(f"unknown mask kind {kind!r}")


# -- table harness -----------------------------------------------------------

@dataclass
class TableResult:
    errors: dict[str, dict[str, float]]
    costs: dict[str, dict[str, float]] = field(default_factory=dict)
    mode_counts: dict[str, list[int]] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)


def run_table(gm, truth: np.ndarray, masks: dict[str, np.ndarray], methods=None, spec=None,
              seed: int = 0, samples: int = 6, all_centroids_when_all_missing: bool = False,
              component_floor: float | None = None) -> TableResult:
    """Average squared error of each method for each mask against ``truth``.

    Mode-based methods share one candidate set per mask. ``costs`` records
    the constraint value reached by ``grmode`` and ``dpmode`` and
    ``mode_counts`` the per-step number of conditional modes.
    """
    from .constraints import ConstraintSpec
    from .reconstruct import (COMPONENT_FLOOR, METHODS, MaskedSequence, avg_squared_error,
                              build_candidates, policy_for, reconstruct_detailed)

    floor = COMPONENT_FLOOR if component_floor is None else component_floor

    methods = list(methods or METHODS)
    spec = spec or ConstraintSpec()
    result = TableResult(errors={})
    for name, mask in masks.items():
        t0 = time.perf_counter()
        seq = MaskedSequence(np.where(mask, truth, np.nan), mask)
        shared = {}
        row, costs = {}, {}
        for method in methods:
            policy = policy_for(method)
            if policy not in shared:
                shared[policy] = build_candidates(gm, seq, policy, samples=samples, seed=seed,
                                                  all_centroids_when_all_missing=all_centroids_when_all_missing,
                                                  component_floor=floor)
            res = reconstruct_detailed(gm, seq, method, spec, truth=truth, seed=seed,
                                       candidates=shared[policy])
            row[method] = avg_squared_error(truth, res.sequence)
            if res.cost is not None:
                costs[method] = res.cost
        result.errors[name] = row
        result.costs[name] = costs
        result.mode_counts[name] = [len(c) for c in shared["modes"].layers] if "modes" in shared else []
        result.timings[name] = time.perf_counter() - t0
    return result


# -- canned experiments ------------------------------------------------------

# trajectory noise for the 20-point random-mask run
TOY_M50_NOISE = 0.05


def _merge(a: TableResult, b: TableResult) -> TableResult:
    return TableResult({**a.errors, **b.errors}, {**a.costs, **b.costs},
                       {**a.mode_counts, **b.mode_counts}, {**a.timings, **b.timings})


def toy_experiment(train_seed: int = 1, seed: int = 0, methods=None):
    """Toy-curve table: 1-D GTM (K=200, 9 basis functions) on 1000 noisy
    samples; masks ``fwd`` and ``inv`` on the noiseless 100-point trajectory
    and ``M50`` on a noisy 20-point trajectory with a random 50% mask.

    ``seed`` drives the 20-point trajectory noise and its mask. Returns
    ``(gtm, mixture, TableResult)``.
    """
    from .training import TrainConfig, gtm_fit, gtm_to_mixture

    t0 = time.perf_counter()
    gtm = gtm_fit(toy_training_set(ToySpec(seed=train_seed)), TrainConfig(k=200, n_basis=9, latent_dim=1))
    gm = gtm_to_mixture(gtm)
    train_time = time.perf_counter() - t0
    clean = toy_trajectory(100)
    res = run_table(gm, clean, {"fwd": make_mask(100, 2, "fwd", [1]),
                                "inv": make_mask(100, 2, "inv", [0])}, methods)
    noisy = toy_trajectory(20, TOY_M50_NOISE, seed=seed)
    res = _merge(res, run_table(gm, noisy, {"M50": make_mask(20, 2, "random", p=0.5, seed=seed)},
                                methods, seed=seed))
    res.timings["train"] = train_time
    return gtm, gm, res


def arm_experiment(train_seed: int = 0, seed: int = 0, methods=None):
    """Robot-arm table: 2-D GTM (15x15 grid, 7x7 basis) on 1000 noisy
    samples of ``(theta, x)``; masks ``fwd`` (x missing) and ``inv`` (theta
    missing) on :func:`arm_trajectory` with noise seed ``seed``.
    Returns ``(gtm, mixture, TableResult)``."""
    from .training import TrainConfig, gtm_fit, gtm_to_mixture

    t0 = time.perf_counter()
    gtm = gtm_fit(arm_training_set(seed=train_seed), TrainConfig(k=225, n_basis=49, latent_dim=2))
    gm = gtm_to_mixture(gtm)
    train_time = time.perf_counter() - t0
    truth = arm_trajectory(seed=seed)
    n = truth.shape[0]
    res = run_table(gm, truth, {"fwd": make_mask(n, 4, "fwd", [2, 3]),
                                "inv": make_mask(n, 4, "inv", [0, 1])}, methods, seed=seed)
    res.timings["train"] = train_time
    return gtm, gm, res
