"""Scores for candidate base sets: the spectral-norm selection residual and
four matrix-revealing metrics (trace, log-determinant, smallest eigenvalue,
condition number).

Trace and the residual use the column-selected matrix. The three spectral
metrics are evaluated on the principal submatrix ``L[H, H]``; on the
column-zeroed N x N matrix they would be degenerate for every ``k < N``.
"""
from __future__ import annotations

import enum

import numpy as np
import scipy.linalg

SINGULAR_TOL = 1e-12


class MetricKind(enum.Enum):
    MIN_COND = "min-cond"
    MAX_LOGDET = "max-logdet"
    MAX_MIN_EIG = "max-min-eig"
    MAX_TRACE = "max-trace"
    P2_SPECTRAL = "p2-spectral"

    @property
    def maximize(self) -> bool:
        return self not in (MetricKind.MIN_COND, MetricKind.P2_SPECTRAL)

    @property
    def worst(self) -> float:
        return -np.inf if self.maximize else np.inf

    @classmethod
    def parse(cls, name) -> "MetricKind":
        if isinstance(name, cls):
            return name
        # accepts "max-trace", "max_trace" and "MaxTrace"
        key = str(name).strip().lower().replace("_", "").replace("-", "")
        for m in cls:
            if m.value.replace("-", "") == key:
                return m
        raise ValueError(f"unknown metric {name!r}; choose from {[m.value for m in cls]}")

    def better(self, a: float, b: float) -> bool:
        """True when score ``a`` is strictly better than ``b``."""
        return a > b if self.maximize else a < b


def _indices(h) -> np.ndarray:
    idx = getattr(h, "indices", h)
    return np.asarray(list(idx), dtype=np.intp)


def column_selected_matrix(lap: np.ndarray, h) -> np.ndarray:
    """Copy of ``lap`` with every column outside ``h`` set to zero."""
    out = np.zeros_like(lap, dtype=float)
    idx = _indices(h)
    out[:, idx] = lap[:, idx]
    return out


def p2_objective(lap: np.ndarray, h) -> float:
    """Spectral norm of ``lap - column_selected_matrix(lap, h)``."""
    resid = np.asarray(lap, dtype=float) - column_selected_matrix(lap, h)
    if not resid.any():
        return 0.0
    return float(np.linalg.norm(resid, 2))


def _principal_eigs(lap: np.ndarray, idx: np.ndarray) -> np.ndarray:
    sub = np.asarray(lap, dtype=float)[np.ix_(idx, idx)]
    sub = 0.5 * (sub + sub.T)
    return scipy.linalg.eigvalsh(sub)


def score(lap: np.ndarray, h, metric) -> float:
    metric = MetricKind.parse(metric)
    idx = _indices(h)
    if metric is MetricKind.MAX_TRACE:
        return float(np.trace(np.asarray(lap)[np.ix_(idx, idx)]))
    if metric is MetricKind.P2_SPECTRAL:
        return p2_objective(lap, idx)

    eig = _principal_eigs(lap, idx)
    lo, hi = eig[0], eig[-1]
    singular = hi <= 0.0 or lo <= SINGULAR_TOL * hi
    if metric is MetricKind.MAX_MIN_EIG:
        return float(lo)
    if metric is MetricKind.MAX_LOGDET:
        return -np.inf if singular else float(np.sum(np.log(eig)))
    # MIN_COND
    return np.inf if singular else float(hi / lo)
