"""Candidate generation and global reconstruction of masked sequences.

Each step of a sequence yields a layer of candidate full vectors (present
coordinates copied, missing ones filled from the conditional distribution).
A reconstruction picks one candidate per layer; ``dp_reconstruct`` finds the
choice minimising a :class:`~seqfill.constraints.ConstraintSpec` exactly by
dynamic programming over the layered graph.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .constraints import ConstraintSpec
from .mixture import GaussianMixture, IndexSplit, condition, mean, prune, sample
from .modes import find_all_modes

__all__ = [
    "METHODS",
    "POLICIES",
    "MaskedSequence",
    "CandidateSet",
    "PathTable",
    "Reconstruction",
    "ReconstructionResult",
    "candidates_for_step",
    "build_candidates",
    "dp_reconstruct",
    "dp_reconstruct_chunked",
    "greedy_reconstruct",
    "split_at_singletons",
    "reconstruct",
    "reconstruct_detailed",
    "avg_squared_error",
]

METHODS = ("mean", "gmode", "rmode", "cmode", "grmode", "dpmode", "meandp", "sampdp")
POLICIES = ("modes", "modes_mean_if_unimodal", "samples", "mean")
# conditional components lighter than this fraction of the heaviest one are
# ignored by the mode search; they only seed far-tail modes
COMPONENT_FLOOR = 1e-10


def _threads() -> int:
    try:
        n = int(os.environ.get("SEQFILL_THREADS", ""))
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


@dataclass(frozen=True, eq=False)
class MaskedSequence:
    """``N x D`` values with a presence mask (True = present).

    Missing cells are stored as NaN and never read.
    """

    values: np.ndarray
    mask: np.ndarray
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        mask = np.array(self.mask, dtype=bool)
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape != mask.shape or values.shape[0] < 1:
            raise ValueError("values and mask must be matching (N, D) arrays with N >= 1")
        if not np.all(np.isfinite(values[mask])):
            raise ValueError("present entries must be finite")
        values[~mask] = np.nan
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        if self.timestamps is not None:
            z = np.asarray(self.timestamps, dtype=float).reshape(-1)
            if z.size != values.shape[0] or np.any(np.diff(z) <= 0):
                raise ValueError("timestamps must be strictly increasing, one per step")
            object.__setattr__(self, "timestamps", z)

    @property
    def shape(self):
        return self.values.shape

    @classmethod
    def from_complete(cls, complete, mask, timestamps=None) -> "MaskedSequence":
        mask = np.asarray(mask, dtype=bool)
        return cls(np.where(mask, complete, np.nan), mask, timestamps)


@dataclass(frozen=True, eq=False)
class CandidateSet:
    """Per-step candidate full vectors with a provenance tag for each."""

    layers: tuple
    tags: tuple

    def __post_init__(self):
        layers = tuple(np.atleast_2d(np.asarray(l, dtype=float)) for l in self.layers)
        if not layers or any(l.shape[0] < 1 for l in layers):
            raise ValueError("every layer needs at least one candidate")
        tags = tuple(tuple(t) for t in self.tags) if self.tags else tuple(("given",) * l.shape[0] for l in layers)
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "tags", tags)

    @classmethod
    def from_layers(cls, layers) -> "CandidateSet":
        return cls(tuple(layers), ())

    @property
    def sizes(self) -> list[int]:
        return [l.shape[0] for l in self.layers]

    def __len__(self):
        return len(self.layers)

    def sequence(self, choice) -> np.ndarray:
        return np.stack([l[i] for l, i in zip(self.layers, choice)])

    def reversed(self) -> "CandidateSet":
        return CandidateSet(self.layers[::-1], self.tags[::-1])


@dataclass(frozen=True)
class PathTable:
    """DP state: ``lengths[n][i]`` is the best accumulated cost ending at node
    ``i`` of layer ``n`` and ``back[n][i]`` its predecessor in layer ``n - 1``
    (``back[0]`` is empty). With smoothness terms the state is a pair of
    nodes and both arrays are indexed ``[n][j, i]``."""

    lengths: tuple
    back: tuple


class Reconstruction(NamedTuple):
    sequence: np.ndarray
    cost: float
    choice: np.ndarray
    table: PathTable | None = None


# -- candidates --------------------------------------------------------------

def candidates_for_step(gm: GaussianMixture, row, policy: str = "modes", mask_row=None,
                        samples: int = 6, seed=0, all_centroids_when_all_missing: bool = False,
                        joint_modes: np.ndarray | None = None,
                        component_floor: float = COMPONENT_FLOOR):
    """Candidate full vectors for one step and their provenance tags.

    ``row`` holds the step's values with NaN (or anything, if ``mask_row``
    is given) in the missing cells. ``policy`` is one of ``POLICIES``.
    ``joint_modes`` may carry precomputed modes of ``gm`` for fully-missing
    rows. Mode search runs on the conditional with components below
    ``component_floor`` times the largest weight removed (0 keeps all).
    """
    row = np.asarray(row, dtype=float).reshape(-1)
    if row.size != gm.dim:
        raise ValueError(f"row has {row.size} coordinates, model has {gm.dim}")
    mask_row = np.isfinite(row) if mask_row is None else np.asarray(mask_row, dtype=bool)
    if mask_row.all():
        return row[None, :].copy(), ("observed",)
    if policy not in POLICIES:
        raise ValueError(f"unknown candidate policy {policy!r}")

    split = IndexSplit.from_mask(mask_row)
    all_missing = not split.present
    if all_missing and all_centroids_when_all_missing and policy != "mean":
        fills, tag = gm.means[gm.weights > 0], "centroid"
    else:
        cond = condition(gm, split, row[list(split.present)])
        if policy == "mean":
            fills, tag = mean(cond)[None, :], "mean"
        elif policy == "samples":
            fills, tag = sample(cond, samples, seed), "sample"
        else:
            if all_missing and joint_modes is not None:
                fills = joint_modes
            else:
                fills = find_all_modes(prune(cond, component_floor)).points
            tag = "mode"
            if policy == "modes_mean_if_unimodal" and fills.shape[0] == 1:
                fills, tag = mean(cond)[None, :], "mean"

    out = np.repeat(row[None, :], fills.shape[0], axis=0)
    out[:, list(split.missing)] = fills
    return out, (tag,) * out.shape[0]


def build_candidates(gm: GaussianMixture, seq: MaskedSequence, policy: str = "modes",
                     samples: int = 6, seed: int = 0,
                     all_centroids_when_all_missing: bool = False,
                     component_floor: float = COMPONENT_FLOOR) -> CandidateSet:
    """Candidates for every step; steps are independent and run on a thread pool
    capped by ``SEQFILL_THREADS``. Sampling draws use the seed ``(seed, n)``
    at step ``n``."""
    N = seq.shape[0]
    joint_modes = None
    if policy in ("modes", "modes_mean_if_unimodal") and not all_centroids_when_all_missing \
            and np.any(~seq.mask.any(axis=1)):
        joint_modes = find_all_modes(gm).points

    def one(n):
        return candidates_for_step(gm, seq.values[n], policy, seq.mask[n], samples, (seed, n),
                                   all_centroids_when_all_missing, joint_modes, component_floor)

    workers = min(_threads(), N)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(N)))
    else:
        results = [one(n) for n in range(N)]
    return CandidateSet(tuple(r[0] for r in results), tuple(r[1] for r in results))


# -- path search -------------------------------------------------------------

def _dp_first_order(layers, spec: ConstraintSpec, first_step: int):
    node = [spec.node_cost(l) if spec.has_node_terms else np.zeros(l.shape[0]) for l in layers]
    lengths = [node[0]]
    back = [np.zeros(0, dtype=int)]
    for n in range(1, len(layers)):
        total = lengths[-1][:, None] + spec.edge_cost(layers[n - 1], layers[n], first_step + n - 1)
        j = np.argmin(total, axis=0)           # first minimum: lowest index wins ties
        back.append(j)
        lengths.append(total[j, np.arange(total.shape[1])] + node[n])
    choice = np.empty(len(layers), dtype=int)
    choice[-1] = int(np.argmin(lengths[-1]))
    for n in range(len(layers) - 1, 0, -1):
        choice[n - 1] = back[n][choice[n]]
    return choice, PathTable(tuple(lengths), tuple(back))


def _dp_second_order(layers, spec: ConstraintSpec, first_step: int):
    """DP over pairs of consecutive nodes so second differences stay exact."""
    node = [spec.node_cost(l) if spec.has_node_terms else np.zeros(l.shape[0]) for l in layers]
    V = node[0][:, None] + spec.edge_cost(layers[0], layers[1], first_step) + node[1][None, :]
    lengths = [node[0], V]
    back = [np.zeros(0, dtype=int), np.zeros((0, 0), dtype=int)]
    for n in range(2, len(layers)):
        T = V[:, :, None] + spec.triple_cost(layers[n - 2], layers[n - 1], layers[n])
        k = np.argmin(T, axis=0)               # (nu_{n-1}, nu_n)
        best = np.take_along_axis(T, k[None], axis=0)[0]
        V = best + spec.edge_cost(layers[n - 1], layers[n], first_step + n - 1) + node[n][None, :]
        back.append(k)
        lengths.append(V)
    N = len(layers)
    choice = np.empty(N, dtype=int)
    choice[N - 2], choice[N - 1] = np.unravel_index(int(np.argmin(V)), V.shape)
    for n in range(N - 1, 1, -1):
        choice[n - 2] = back[n][choice[n - 1], choice[n]]
    return choice, PathTable(tuple(lengths), tuple(back))


def _solve(layers, spec: ConstraintSpec, first_step: int = 0):
    if len(layers) >= 3 and spec.has_smoothness:
        return _dp_second_order(layers, spec, first_step)
    return _dp_first_order(layers, spec, first_step)


def dp_reconstruct(cands: CandidateSet, spec: ConstraintSpec = ConstraintSpec()) -> Reconstruction:
    """Exact minimiser of ``spec`` over all paths through the candidate layers.

    Continuity terms are edge costs, quadratic and forward-mapping terms are
    charged on entering a node (layer 1 included), and smoothness terms
    switch the state to pairs of nodes. Ties go to the lowest node index.
    The returned cost is ``spec.evaluate`` of the chosen sequence.
    """
    choice, table = _solve(cands.layers, spec)
    seq = cands.sequence(choice)
    return Reconstruction(seq, spec.evaluate(seq), choice, table)


def _greedy_pick(spec, layers, n, neighbour, second, cand_layer, step):
    """Index in ``cand_layer`` (at position ``n``) minimising its local cost."""
    cost = spec.node_cost(cand_layer) if spec.has_node_terms else np.zeros(cand_layer.shape[0])
    nb = neighbour[None, :]
    if step == "right":
        cost = cost + spec.edge_cost(nb, cand_layer, n - 1)[0]
        if second is not None and spec.has_smoothness:
            cost = cost + spec.triple_cost(second[None, :], nb, cand_layer)[0, 0]
    else:
        cost = cost + spec.edge_cost(cand_layer, nb, n)[:, 0]
        if second is not None and spec.has_smoothness:
            cost = cost + spec.triple_cost(cand_layer, nb, second[None, :])[:, 0, 0]
    return int(np.argmin(cost))


def greedy_reconstruct(cands: CandidateSet, spec: ConstraintSpec = ConstraintSpec(),
                       start_layer="auto", start_node: int = 0) -> Reconstruction:
    """Greedy path: start at one node and extend to both ends by the cheapest step.

    ``start_layer="auto"`` picks the first layer with the fewest candidates.
    """
    layers = cands.layers
    N = len(layers)
    s = int(np.argmin(cands.sizes)) if start_layer == "auto" else int(start_layer)
    if not 0 <= s < N:
        raise ValueError(f"start_layer {s} outside 0..{N - 1}")
    choice = np.empty(N, dtype=int)
    choice[s] = start_node
    for n in range(s + 1, N):
        second = layers[n - 2][choice[n - 2]] if n - 2 >= s else None
        choice[n] = _greedy_pick(spec, layers, n, layers[n - 1][choice[n - 1]], second, layers[n], "right")
    for n in range(s - 1, -1, -1):
        second = layers[n + 2][choice[n + 2]] if n + 2 <= N - 1 else None
        choice[n] = _greedy_pick(spec, layers, n, layers[n + 1][choice[n + 1]], second, layers[n], "left")
    seq = cands.sequence(choice)
    return Reconstruction(seq, spec.evaluate(seq), choice)


def split_at_singletons(cands: CandidateSet, min_run: int = 1) -> list[tuple[int, int]]:
    """Half-open step ranges, each ending right after a run of ``min_run``
    single-candidate layers (the last range may end anywhere).

    A single-candidate layer fixes the path there, so solving each range with
    the preceding ``min_run`` fixed layers as anchors and concatenating gives
    the global optimum. ``min_run=2`` is needed when second differences are
    in the constraint.
    """
    sizes = cands.sizes
    ranges, start, run = [], 0, 0
    for n, nu in enumerate(sizes):
        run = run + 1 if nu == 1 else 0
        if run >= min_run:
            ranges.append((start, n + 1))
            start = n + 1
    if start < len(sizes):
        ranges.append((start, len(sizes)))
    return ranges


def dp_reconstruct_chunked(cands: CandidateSet, spec: ConstraintSpec = ConstraintSpec()) -> Reconstruction:
    """Same result as ``dp_reconstruct`` solved range by range between
    single-candidate layers; earlier ranges can be frozen as soon as a
    single-candidate layer arrives."""
    r = 2 if spec.has_smoothness else 1
    choice = np.empty(len(cands), dtype=int)
    for a, b in split_at_singletons(cands, r):
        anchor = max(a - r, 0)
        sub = cands.layers[anchor:a] + cands.layers[a:b]
        sub_choice, _ = _solve(sub, spec, anchor)
        choice[a:b] = sub_choice[a - anchor:]
    seq = cands.sequence(choice)
    return Reconstruction(seq, spec.evaluate(seq), choice)


# -- methods -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    method: str
    sequence: np.ndarray
    candidates: CandidateSet | None
    choice: np.ndarray | None
    cost: float | None

    def diagnostics(self) -> dict:
        return {
            "method": self.method,
            "nu": self.candidates.sizes if self.candidates is not None else None,
            "choice": self.choice.tolist() if self.choice is not None else None,
            "total_cost": self.cost,
        }


def policy_for(method: str) -> str:
    return {"meandp": "modes_mean_if_unimodal", "sampdp": "samples", "mean": "mean"}.get(method, "modes")


def reconstruct_detailed(gm: GaussianMixture, seq: MaskedSequence, method: str = "dpmode",
                         spec: ConstraintSpec | None = None, truth=None, seed: int = 0,
                         samples: int = 6, all_centroids_when_all_missing: bool = False,
                         candidates: CandidateSet | None = None, start_layer="auto",
                         component_floor: float = COMPONENT_FLOOR) -> ReconstructionResult:
    """Reconstruct ``seq`` with one of ``METHODS``.

    ``mean``, ``gmode``, ``rmode`` and ``cmode`` work step by step;
    ``grmode`` is the greedy path and ``dpmode``, ``meandp`` and ``sampdp``
    the DP path over their candidate sets. ``rmode`` draws one uniform
    candidate per step from a generator seeded with ``seed``. ``cmode``
    needs the complete ``truth``. Precomputed ``candidates`` must come from
    the policy matching ``method``.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    if gm.dim != seq.shape[1]:
        raise ValueError(f"sequence has {seq.shape[1]} coordinates, model has {gm.dim}")
    if method == "cmode":
        if truth is None:
            raise ValueError("cmode needs the true sequence")
        truth = np.asarray(truth, dtype=float)
        if truth.shape != seq.shape:
            raise ValueError("truth must have the same shape as the sequence")
    spec = (spec or ConstraintSpec()).bind(seq.shape[0], seq.timestamps)
    spec.check_pattern(seq.mask)

    if candidates is None:
        candidates = build_candidates(gm, seq, policy_for(method), samples=samples, seed=seed,
                                      all_centroids_when_all_missing=all_centroids_when_all_missing,
                                      component_floor=component_floor)
    elif len(candidates) != seq.shape[0]:
        raise ValueError("candidate set length does not match the sequence")

    cost = None
    if method == "mean":
        choice = np.zeros(len(candidates), dtype=int)
    elif method == "gmode":
        choice = np.zeros(len(candidates), dtype=int)
        if all_centroids_when_all_missing and any(t[0] == "centroid" for t in candidates.tags):
            # centroids carry no density order; fall back to the joint's global mode
            g = find_all_modes(gm).points[0]
            layers = list(candidates.layers)
            for n, t in enumerate(candidates.tags):
                if t[0] == "centroid":
                    layers[n] = g[None, :]
            candidates = CandidateSet(tuple(layers), tuple(("mode",) * l.shape[0] for l in layers))
    elif method == "rmode":
        rng = np.random.default_rng(seed)
        choice = np.array([rng.integers(nu) for nu in candidates.sizes], dtype=int)
    elif method == "cmode":
        choice = np.array([int(np.argmin(np.sum((l - t) ** 2, axis=1)))
                           for l, t in zip(candidates.layers, truth)], dtype=int)
    elif method == "grmode":
        res = greedy_reconstruct(candidates, spec, start_layer)
        choice, cost = res.choice, res.cost
    else:
        res = dp_reconstruct(candidates, spec)
        choice, cost = res.choice, res.cost

    out = candidates.sequence(choice)
    out = np.where(seq.mask, seq.values, out)
    return ReconstructionResult(method, out, candidates, choice, cost)


def reconstruct(gm: GaussianMixture, seq: MaskedSequence, method: str = "dpmode",
                spec: ConstraintSpec | None = None, **kwargs) -> np.ndarray:
    """Reconstructed ``N x D`` sequence; see :func:`reconstruct_detailed`."""
    return reconstruct_detailed(gm, seq, method, spec, **kwargs).sequence


def avg_squared_error(truth, recon) -> float:
    """``(1/N) sum_n ||t_n - r_n||^2``."""
    t = np.asarray(truth, dtype=float)
    r = np.asarray(recon, dtype=float)
    if t.shape != r.shape:
        raise ValueError(f"shape mismatch: {t.shape} vs {r.shape}")
    t2 = t.reshape(t.shape[0], -1)
    return float(np.sum((t2 - r.reshape(t2.shape)) ** 2) / t2.shape[0])
