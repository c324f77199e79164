"""Formation-quality measures and the benchmark graph constructions.

Alignment uses the closed-form centered-covariance SVD solution for the
least-squares similarity transform (rotation, translation, scale) and
reports the sum of per-drone distances at that transform. An optional
iteratively-reweighted pass moves the transform toward the minimizer of
the sum of distances itself.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from sparseform.errors import DegenerateAlignmentError, InvalidInputError, UndefinedMetricError
from sparseform.graph import FormationGraph, as_positions, build_complete_graph, coplanarity_check
from sparseform.sparsify import BaseSetSelection, build_sparse_graph, repair_coplanar_base

CONVERGENCE_THRESHOLD = 0.65
TRADEOFF_KAPPA = 8e-6
TRADEOFF_ALPHA = 4.0
TRADEOFF_BETA = 1.75
IRLS_ITERS = 20


@dataclass(frozen=True)
class SimilarityTransform:
    rotation: np.ndarray
    translation: np.ndarray
    scale: float

    def apply(self, points) -> np.ndarray:
        return self.scale * np.asarray(points) @ self.rotation.T + self.translation


@dataclass
class ErrorReport:
    e_bar_dist: float
    e_dist_series: np.ndarray
    l_fma_max: float
    l_trj: float
    converged_at: float | None = None
    residuals: np.ndarray = field(default=None, repr=False)

    def as_dict(self) -> dict:
        return {
            "e_bar_dist": self.e_bar_dist,
            "l_fma_max": self.l_fma_max,
            "l_trj": self.l_trj,
            "converged_at": self.converged_at,
            "e_dist_series": [float(v) for v in self.e_dist_series],
        }


def _fit(actual: np.ndarray, desired: np.ndarray, w: np.ndarray) -> SimilarityTransform:
    w = w / w.sum()
    mu_a = w @ actual
    mu_d = w @ desired
    a = actual - mu_a
    d = desired - mu_d
    var_a = float(w @ np.einsum("ij,ij->i", a, a))
    if var_a <= 1e-300:
        raise DegenerateAlignmentError("actual formation has collapsed to a point")
    cov = (d * w[:, None]).T @ a
    u, sv, vt = np.linalg.svd(cov)
    fix = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        fix[-1] = -1.0
    rot = (u * fix) @ vt
    scale = float(np.sum(sv * fix) / var_a)
    if scale <= 0:
        raise DegenerateAlignmentError("no positive scale aligns the formations")
    return SimilarityTransform(rot, mu_d - scale * rot @ mu_a, scale)


def _residual(tf: SimilarityTransform, actual, desired) -> float:
    return float(np.sum(np.linalg.norm(desired - tf.apply(actual), axis=1)))


def align_similarity(actual, desired, refine: bool = False):
    """Similarity transform taking ``actual`` onto ``desired`` and the
    resulting sum of per-drone distances."""
    a = as_positions(actual, min_count=3)
    d = as_positions(desired, min_count=3)
    if a.shape != d.shape:
        raise InvalidInputError("actual and desired formations differ in size")
    sd = np.linalg.svd(d - d.mean(axis=0), compute_uv=False)
    if sd[0] == 0.0 or sd[1] <= 1e-9 * sd[0]:
        raise DegenerateAlignmentError("desired formation is collinear or collapsed")
    w = np.ones(len(a))
    tf = _fit(a, d, w)
    res = _residual(tf, a, d)
    if refine:
        scale = sd[0]
        for _ in range(IRLS_ITERS):
            r = np.linalg.norm(d - tf.apply(a), axis=1)
            cand = _fit(a, d, 1.0 / np.maximum(r, 1e-9 * scale))
            cand_res = _residual(cand, a, d)
            if cand_res >= res:
                break
            tf, res = cand, cand_res
    return tf, res


def max_formation_length(desired) -> float:
    d = as_positions(desired)
    diff = d[:, None, :] - d[None, :, :]
    return float(np.sqrt(np.max(np.einsum("ijk,ijk->ij", diff, diff))))


def instantaneous_error(sample, desired, refine: bool = False) -> float:
    """Aligned sum of distances divided by the largest desired pairwise distance."""
    _, res = align_similarity(sample, desired, refine)
    return res / max_formation_length(desired)


def average_formation_error(traj, desired, refine: bool = False, dt: float | None = None) -> ErrorReport:
    """Path-length weighted formation error along a swarm trajectory.

    The integral over the swarm path is discretized with the centroid arc
    length between consecutive samples, weighting the residual at the left
    sample.
    """
    x = np.asarray(getattr(traj, "waypoints", traj), dtype=float)
    dt = getattr(traj, "dt", dt if dt is not None else 1.0)
    if x.ndim != 3 or x.shape[0] < 2:
        raise InvalidInputError("trajectory needs at least two samples of shape (N, 3)")
    d = as_positions(desired)
    l_max = max_formation_length(d)
    res = np.array([align_similarity(s, d, refine)[1] for s in x])
    centroid = x.mean(axis=1)
    dl = np.linalg.norm(np.diff(centroid, axis=0), axis=1)
    l_trj = float(dl.sum())
    if l_trj <= 0.0:
        raise UndefinedMetricError("swarm trajectory has zero length")
    series = res / l_max
    e_bar = float(np.sum(res[:-1] * dl) / (l_max * l_trj))
    hit = np.nonzero(series <= CONVERGENCE_THRESHOLD)[0]
    conv = round(float(hit[0] * dt), 9) if len(hit) else None
    return ErrorReport(e_bar, series, l_max, l_trj, conv, res)


def relative_error(e_sparse: float, e_complete: float) -> float:
    if e_complete <= 0:
        raise UndefinedMetricError("complete-graph error must be positive")
    return 1.0 - (e_sparse - e_complete) / e_complete


def tradeoff_score(t_cpu: float, e_dist: float, kappa: float = TRADEOFF_KAPPA,
                   alpha: float = TRADEOFF_ALPHA, beta: float = TRADEOFF_BETA) -> float:
    if t_cpu < 0 or e_dist < 0:
        raise InvalidInputError("t_cpu and e_dist must be non-negative")
    return t_cpu**alpha - kappa * e_dist**beta


BASELINES = ("random", "nearest", "ours-wo-opt", "complete")


def random_base(positions, k: int, rng: np.random.Generator, tries: int = 1000) -> BaseSetSelection:
    p = as_positions(positions)
    for _ in range(tries):
        idx = sorted(rng.choice(len(p), size=k, replace=False).tolist())
        if not coplanarity_check(p[idx]):
            return BaseSetSelection(tuple(idx), True)
    return repair_coplanar_base(p, idx)


def baseline_graph(kind: str, positions, k: int, seed: int = 0, squared: bool = False) -> FormationGraph:
    """Comparison graphs: per-drone random or nearest links, an unoptimized
    rigid sparse graph, or the complete graph."""
    p = as_positions(positions)
    n = len(p)
    rng = np.random.default_rng(seed)
    if kind == "complete":
        return build_complete_graph(p, squared)
    if not 1 <= k <= n - 1 and kind in ("random", "nearest"):
        raise InvalidInputError(f"k must lie in [1, {n - 1}] for per-drone baselines")
    if kind == "random":
        edges = [(i, int(j)) for i in range(n) for j in rng.choice([x for x in range(n) if x != i], size=k, replace=False)]
    elif kind == "nearest":
        dist = np.linalg.norm(p[:, None] - p[None], axis=2)
        np.fill_diagonal(dist, np.inf)
        order = np.argsort(dist, axis=1, kind="stable")[:, :k]
        edges = [(i, int(j)) for i in range(n) for j in order[i]]
    elif kind == "ours-wo-opt":
        g = build_sparse_graph(p, random_base(p, k, rng), squared)
        return FormationGraph.from_edges(p, g.edges, squared, label=kind)
    else:
        raise InvalidInputError(f"unknown baseline {kind!r}; choose from {BASELINES}")
    return FormationGraph.from_edges(p, edges, squared, label=kind)
