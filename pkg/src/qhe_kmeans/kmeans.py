"""k-means where assignment runs on SwapTest similarities and Grover minimum finding.

Points are amplitude-encoded after L2 normalization, so the similarity the
SwapTest measures is the squared cosine between a point and a centroid and
the pipeline clusters by direction. Centroids are means of the normalized
representatives.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import groveropt, swaptest
from .keyledger import DEFAULT_T_MODE, TGateMode
from .qotp import random_keyset
from .statevector import Circuit, GateOp, PureState, op, overlap_sq, ry

MODES = ("exact", "sampled", "encrypted")


class PipelineError(RuntimeError):
    pass


@dataclass(frozen=True)
class PipelineMode:
    mode: str = "exact"
    shots: int = 8192
    quantization_levels: int = 8
    shots_per_round: int = 8
    t_mode: TGateMode = DEFAULT_T_MODE

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.quantization_levels < 2:
            raise ValueError("quantization_levels must be >= 2")
        if self.mode != "exact" and self.shots <= 0:
            raise ValueError("shots must be > 0")
        object.__setattr__(self, "t_mode", TGateMode.parse(self.t_mode))


@dataclass
class ClusteringState:
    centroids: list[np.ndarray]
    assignments: list[int]
    iteration: int
    tau: float
    converged: bool = False
    assignment_history: list[list[int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "centroids": [c.tolist() for c in self.centroids],
            "assignments": list(self.assignments),
            "iteration": self.iteration,
            "tau": self.tau,
            "converged": self.converged,
        }


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise ValueError("points must be a 2-D array with at least one column")
    if not np.all(np.isfinite(arr)):
        raise ValueError("points must be finite")
    return arr


def normalize_points(points) -> np.ndarray:
    arr = _as_points(points)
    norms = np.linalg.norm(arr, axis=1)
    if np.any(norms == 0):
        raise ValueError("zero vector cannot be amplitude-encoded")
    return arr / norms[:, None]


def padded_amplitudes(point: Sequence[float]) -> np.ndarray:
    v = np.asarray(point, dtype=float).reshape(-1)
    if v.size < 1 or not np.all(np.isfinite(v)):
        raise ValueError("point must be a finite non-empty vector")
    nrm = np.linalg.norm(v)
    if nrm == 0:
        raise ValueError("zero vector cannot be amplitude-encoded")
    width = max(1, math.ceil(math.log2(v.size)))
    out = np.zeros(2**width)
    out[: v.size] = v / nrm
    return out


def encode_state(point: Sequence[float]) -> PureState:
    amps = padded_amplitudes(point)
    return PureState(int(math.log2(amps.size)), amps.astype(complex))


def _multiplexed_ry(controls: list[int], target: int, angles: np.ndarray) -> list[GateOp]:
    # RY(angles[c]) on target for each control pattern c (controls[0] most significant)
    if np.allclose(angles, 0.0, atol=1e-15):
        return []
    if not controls:
        return [ry(float(angles[0]), target)]
    half = angles.size // 2
    alpha, beta = angles[:half], angles[half:]
    head, rest = controls[0], controls[1:]
    return (
        [op("CNOT", head, target)]
        + _multiplexed_ry(rest, target, (alpha - beta) / 2)
        + [op("CNOT", head, target)]
        + _multiplexed_ry(rest, target, (alpha + beta) / 2)
    )


def encode_point(point: Sequence[float]) -> Circuit:
    """Preparation circuit from |0...0> to the amplitude encoding of ``point``."""
    amps = padded_amplitudes(point)
    r = int(math.log2(amps.size))
    ops: list[GateOp] = []
    for j in range(r):
        blocks = amps.reshape(2**j, 2, -1)
        if j < r - 1:
            n0 = np.linalg.norm(blocks[:, 0, :], axis=1)
            n1 = np.linalg.norm(blocks[:, 1, :], axis=1)
            angles = 2 * np.arctan2(n1, n0)
        else:
            angles = 2 * np.arctan2(blocks[:, 1, 0], blocks[:, 0, 0])
        ops += _multiplexed_ry(list(range(j)), j, angles)
    return Circuit(r, ops)


def cosine_sq_distance(x: np.ndarray, w: np.ndarray) -> float:
    """1 - cos^2(x, w): the classical twin of 1 - SwapTest similarity."""
    nx, nw = np.linalg.norm(x), np.linalg.norm(w)
    if nx == 0 or nw == 0:
        raise PipelineError("distance to a zero vector is undefined")
    c = float(np.dot(x, w)) / (nx * nw)
    return 1.0 - c * c


def quantize(distance: float, levels: int) -> int:
    return min(levels - 1, max(0, math.floor(distance * levels)))


def index_bits_for(k: int) -> int:
    return max(1, math.ceil(math.log2(k)))


def distance_table(levels_per_centroid: Sequence[int], levels: int) -> groveropt.ValueTable:
    """Pack quantized distances into a Grover value table.

    Entries are ``level * 2**m + j`` so equal levels resolve to the lowest
    centroid index; padding slots sit at level ``levels`` and are never chosen.
    """
    k = len(levels_per_centroid)
    m = index_bits_for(k)
    size = 2**m
    values = [lv * size + j for j, lv in enumerate(levels_per_centroid)]
    values += [levels * size + j for j in range(k, size)]
    return groveropt.ValueTable.from_list(values)


def _similarities(point, centroids, mode: PipelineMode, rng: np.random.Generator) -> list[float]:
    if mode.mode == "exact":
        ps = encode_state(point)
        return [overlap_sq(ps, encode_state(c)) for c in centroids]
    if mode.mode == "sampled":
        ps = encode_state(point)
        return [
            swaptest.similarity_plain(ps, encode_state(c), mode.shots, rng).similarity
            for c in centroids
        ]
    prep_p = encode_point(point)
    out = []
    for c in centroids:
        keys = random_keyset(prep_p.qubit_count, rng)
        est, _ = swaptest.similarity_encrypted(
            prep_p, encode_point(c), keys, mode.shots, mode.t_mode, rng
        )
        out.append(est.similarity)
    return out


def assign_point(point, centroids, mode: PipelineMode, rng: np.random.Generator) -> int:
    k = len(centroids)
    if k < 1:
        raise ValueError("need at least one centroid")
    sims = _similarities(point, centroids, mode, rng)
    if not all(np.isfinite(sims)):
        raise PipelineError("similarity undefined for every centroid")
    if mode.mode == "exact":
        return int(np.argmin([1.0 - s for s in sims]))
    if k == 1:
        return 0
    L = mode.quantization_levels
    table = distance_table([quantize(1.0 - s, L) for s in sims], L)
    search = None
    if mode.mode == "encrypted":
        search = groveropt.encrypted_search(rng, mode.t_mode)
    result = groveropt.durr_hoyer_min(
        table, shots_per_round=mode.shots_per_round, rng=rng, search=search
    )
    j = int(result.a_min, 2)
    if j >= k:
        raise PipelineError("minimum search returned a padding slot")
    return j


def assign_step(points, centroids, mode: PipelineMode, rng: np.random.Generator | None = None) -> list[int]:
    pts = _as_points(points)
    rng = np.random.default_rng() if rng is None else rng
    # one stream per point keeps results independent of evaluation order
    streams = rng.spawn(len(pts))
    return [assign_point(p, centroids, mode, s) for p, s in zip(pts, streams)]


def update_centroids(points, assignments: Sequence[int], k: int, previous=None) -> list[np.ndarray]:
    """Mean of each cluster; an empty cluster keeps its previous centroid."""
    pts = _as_points(points)
    if len(assignments) != len(pts):
        raise ValueError("one assignment per point required")
    out = []
    for j in range(k):
        members = [p for p, a in zip(pts, assignments) if a == j]
        if members:
            mean = np.mean(members, axis=0)
            if np.linalg.norm(mean) == 0 and previous is not None:
                mean = np.asarray(previous[j], dtype=float)
            out.append(mean)
        elif previous is not None:
            out.append(np.asarray(previous[j], dtype=float))
        else:
            raise ValueError(f"cluster {j} is empty and has no previous centroid")
    return out


def has_converged(prev_centroids, new_centroids, tau: float) -> bool:
    if len(prev_centroids) != len(new_centroids):
        raise ValueError("centroid sets differ in size")
    return all(
        float(np.linalg.norm(np.asarray(a) - np.asarray(b))) < tau
        for a, b in zip(prev_centroids, new_centroids)
    )


def initial_centroids(points, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    reps = normalize_points(points)
    if k > len(reps):
        raise ValueError("k exceeds the number of points")
    idx = rng.choice(len(reps), size=k, replace=False)
    return [reps[i].copy() for i in idx]


def check_run_args(points, k: int, tau: float, max_iters: int) -> np.ndarray:
    reps = normalize_points(points)
    if k < 1 or k > len(reps):
        raise ValueError(f"need 1 <= k <= number of points, got k={k}")
    if tau <= 0:
        raise ValueError("tau must be > 0")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    return reps


def run_kmeans(
    points,
    k: int,
    tau: float,
    max_iters: int,
    mode: PipelineMode | None = None,
    rng: np.random.Generator | None = None,
    init=None,
) -> tuple[ClusteringState, list[dict]]:
    mode = PipelineMode() if mode is None else mode
    rng = np.random.default_rng() if rng is None else rng
    reps = check_run_args(points, k, tau, max_iters)
    centroids = (
        [np.asarray(c, dtype=float) for c in init]
        if init is not None
        else initial_centroids(reps, k, rng)
    )
    if len(centroids) != k:
        raise ValueError("initial centroid count does not match k")
    history: list[dict] = []
    assignments: list[int] = []
    converged = False
    s = 0
    for s in range(1, max_iters + 1):
        assignments = assign_step(reps, centroids, mode, rng)
        new = update_centroids(reps, assignments, k, centroids)
        converged = has_converged(centroids, new, tau)
        history.append(
            {
                "iteration": s,
                "assignments": list(assignments),
                "centroids": [c.tolist() for c in new],
            }
        )
        centroids = new
        if converged:
            break
    state = ClusteringState(
        centroids, assignments, s, tau, converged, [h["assignments"] for h in history]
    )
    return state, history


def classical_kmeans(
    points, k: int, tau: float, max_iters: int, initial_centroids
) -> ClusteringState:
    """Lloyd iterations under the 1 - cos^2 distance with the pipeline's tie and empty-cluster rules."""
    reps = check_run_args(points, k, tau, max_iters)
    centroids = [np.asarray(c, dtype=float) for c in initial_centroids]
    if len(centroids) != k:
        raise ValueError("initial centroid count does not match k")
    history: list[list[int]] = []
    assignments: list[int] = []
    converged = False
    s = 0
    for s in range(1, max_iters + 1):
        assignments = [
            int(np.argmin([cosine_sq_distance(x, w) for w in centroids])) for x in reps
        ]
        new = update_centroids(reps, assignments, k, centroids)
        converged = has_converged(centroids, new, tau)
        history.append(assignments)
        centroids = new
        if converged:
            break
    return ClusteringState(centroids, assignments, s, tau, converged, history)


def load_points_csv(text: str) -> np.ndarray:
    """One point per row; ``#`` comment lines and a non-numeric header row are skipped."""
    rows = [
        row
        for row in csv.reader(io.StringIO(text))
        if row and not row[0].lstrip().startswith("#")
    ]
    if rows:
        try:
            [float(x) for x in rows[0]]
        except ValueError:
            rows = rows[1:]
    return _as_points([[float(x) for x in row] for row in rows])
