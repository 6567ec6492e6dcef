"""PASAD subspace-departure detector, two-sided tabular CUSUM, calibration."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "DegenerateCalibrationWarning",
    "RankDeficiencyWarning",
    "PasadModel",
    "CusumModel",
    "pasad_train",
    "pasad_score",
    "pasad_scores",
    "cusum_init",
    "cusum_step",
    "cusum_statistics",
    "calibrate_threshold",
    "calibrate",
    "resolution_floor",
    "statistic",
    "detect",
]

class RankDeficiencyWarning(UserWarning):
    pass


class DegenerateCalibrationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PasadModel:
    """Trained PASAD state.

    ``basis`` holds the ``r`` leading left singular vectors of the training
    trajectory matrix as columns (``L x r``); directions beyond the numerical
    rank are zero columns and ``rank_deficient`` is set.
    """

    L: int
    r: int
    basis: np.ndarray
    centroid: np.ndarray
    projected_centroid: np.ndarray
    threshold: Optional[float] = None
    rank: Optional[int] = None
    rank_deficient: bool = False
    metadata: dict = field(default_factory=dict)

    def with_threshold(self, threshold: float, **metadata) -> "PasadModel":
        return replace(self, threshold=float(threshold), metadata={**self.metadata, **metadata})

    def to_dict(self) -> dict:
        return {
            "detector": "pasad",
            "L": self.L,
            "r": self.r,
            "basis": self.basis.ravel(order="C").tolist(),
            "centroid": self.centroid.tolist(),
            "threshold": self.threshold,
            "rank": self.rank,
            "rank_deficient": self.rank_deficient,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PasadModel":
        L, r = int(doc["L"]), int(doc["r"])
        basis = np.asarray(doc["basis"], dtype=float).reshape(L, r)
        centroid = np.asarray(doc["centroid"], dtype=float)
        return cls(
            L=L,
            r=r,
            basis=basis,
            centroid=centroid,
            projected_centroid=basis.T @ centroid,
            threshold=doc.get("threshold"),
            rank=doc.get("rank"),
            rank_deficient=bool(doc.get("rank_deficient", False)),
            metadata=dict(doc.get("metadata", {})),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass
class CusumModel:
    """Two-sided tabular CUSUM.

    ``threshold`` applies to both sides unless ``threshold_neg`` is given.
    """

    mu0: float
    k: float
    s_pos: float = 0.0
    s_neg: float = 0.0
    threshold: Optional[float] = None
    threshold_neg: Optional[float] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.k < 0:
            raise ValueError(f"k must be >= 0, got {self.k}")

    def reset(self) -> "CusumModel":
        self.s_pos = 0.0
        self.s_neg = 0.0
        return self

    @property
    def negative_threshold(self) -> Optional[float]:
        return self.threshold if self.threshold_neg is None else self.threshold_neg

    def to_dict(self) -> dict:
        return {
            "detector": "cusum",
            "mu0": self.mu0,
            "k": self.k,
            "threshold": self.threshold,
            "threshold_neg": self.threshold_neg,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CusumModel":
        return cls(
            mu0=float(doc["mu0"]),
            k=float(doc["k"]),
            threshold=doc.get("threshold"),
            threshold_neg=doc.get("threshold_neg"),
            metadata=dict(doc.get("metadata", {})),
        )


Detector = Union[PasadModel, CusumModel]


def _trajectory_matrix(series: np.ndarray, L: int) -> np.ndarray:
    # column i is the lagged vector (x_i, ..., x_{i+L-1})
    return sliding_window_view(series, L).T


def pasad_train(series, L: Optional[int] = None, r: int = 26) -> PasadModel:
    """Learn the signal subspace and centroid from an attack-free series."""
    x = np.asarray(series, dtype=float)
    N = x.size
    if N < 2:
        raise ValueError("need at least 2 training samples")
    if L is None:
        L = N // 2
    if not 1 <= L <= N - 1:
        raise ValueError(f"lag L={L} needs 1 <= L <= N - 1 = {N - 1}")
    if not 1 <= r <= L:
        raise ValueError(f"statistical dimension r={r} must satisfy 1 <= r <= L={L}")
    X = _trajectory_matrix(x, L)
    U, s, _ = np.linalg.svd(X, full_matrices=False)
    tol = s[0] * max(X.shape) * np.finfo(float).eps if s.size else 0.0
    rank = int(np.count_nonzero(s > tol))
    basis = U[:, :r].copy()
    rank_deficient = rank < r
    if rank_deficient:
        basis[:, rank:] = 0.0
        warnings.warn(
            f"trajectory matrix has rank {rank} < r={r}; extra directions zeroed",
            RankDeficiencyWarning,
            stacklevel=2,
        )
    centroid = X.mean(axis=1)
    return PasadModel(
        L=L,
        r=r,
        basis=basis,
        centroid=centroid,
        projected_centroid=basis.T @ centroid,
        rank=rank,
        rank_deficient=rank_deficient,
    )


def pasad_score(model: PasadModel, window) -> float:
    """Squared distance from the centroid inside the signal subspace."""
    w = np.asarray(window, dtype=float)
    if w.shape != (model.L,):
        raise ValueError(f"window must have length L={model.L}, got shape {w.shape}")
    d = model.projected_centroid - model.basis.T @ w
    return float(d @ d)


def pasad_scores(model: PasadModel, series) -> np.ndarray:
    """Score of the length-L window ending at each sample (NaN before the first full window)."""
    x = np.asarray(series, dtype=float)
    out = np.full(x.size, np.nan)
    if x.size < model.L:
        return out
    proj = sliding_window_view(x, model.L) @ model.basis
    d = model.projected_centroid[None, :] - proj
    out[model.L - 1 :] = np.einsum("ij,ij->i", d, d)
    return out


def cusum_init(training, k_factor: float = 0.3) -> CusumModel:
    x = np.asarray(training, dtype=float)
    if x.size == 0:
        raise ValueError("empty training sequence")
    if x.size < 2:
        raise ValueError("need at least 2 training samples for a standard deviation")
    if k_factor < 0:
        raise ValueError(f"k_factor must be >= 0, got {k_factor}")
    sigma = float(np.std(x, ddof=1))
    return CusumModel(
        mu0=float(np.mean(x)),
        k=k_factor * sigma,
        metadata={"k_factor": k_factor, "sigma_s": sigma},
    )


def cusum_step(model: CusumModel, x: float) -> tuple[float, float]:
    model.s_pos = max(0.0, model.s_pos + (x - model.mu0 - model.k))
    model.s_neg = max(0.0, model.s_neg + (model.mu0 - x - model.k))
    return model.s_pos, model.s_neg


def cusum_statistics(model: CusumModel, series) -> tuple[np.ndarray, np.ndarray]:
    """Run a fresh copy of ``model`` over ``series``; returns ``(s_pos, s_neg)``."""
    m = replace(model).reset()
    x = np.asarray(series, dtype=float)
    s_pos = np.empty(x.size)
    s_neg = np.empty(x.size)
    for i, v in enumerate(x):
        s_pos[i], s_neg[i] = cusum_step(m, v)
    return s_pos, s_neg


def calibrate_threshold(stats, margin: float = 0.05, floor: float = 0.0) -> float:
    """Threshold just above the largest attack-free statistic.

    ``floor`` is a lower limit for the result, for statistics that are pure
    rounding error (noise-free runs).
    """
    s = np.asarray(stats, dtype=float)
    s = s[~np.isnan(s)]
    if s.size == 0:
        raise ValueError("no statistics to calibrate on")
    if margin < 0:
        raise ValueError(f"margin must be >= 0, got {margin}")
    peak = float(s.max())
    if peak <= 0.0 or (1.0 + margin) * peak < floor:
        warnings.warn(
            f"attack-free statistics peak at {peak:.3g}; threshold set to {max(floor, 0.0):.3g}",
            DegenerateCalibrationWarning,
            stacklevel=2,
        )
    return max((1.0 + margin) * peak, floor)


def statistic(model: Detector, series) -> np.ndarray:
    """Per-sample detection statistic (CUSUM: larger of the two sides, each
    normalised to a common threshold when per-side thresholds differ)."""
    if isinstance(model, PasadModel):
        return pasad_scores(model, series)
    s_pos, s_neg = cusum_statistics(model, series)
    if model.threshold_neg is None or model.threshold is None:
        return np.maximum(s_pos, s_neg)
    return np.maximum(s_pos, s_neg * (model.threshold / model.threshold_neg))


def resolution_floor(model: Detector, series, resolution: float) -> float:
    """Statistic produced by per-sample errors of ``resolution * max|series|``.

    PASAD sums L squared errors; CUSUM can accumulate one error per sample.
    """
    x = np.asarray(series, dtype=float)
    eps = resolution * float(np.max(np.abs(x))) if x.size else 0.0
    if isinstance(model, PasadModel):
        return model.L * eps**2
    return x.size * eps


def calibrate(model: Detector, series, start_index: int = 0, margin: float = 0.05,
              per_side: bool = False, resolution: float = 0.0) -> Detector:
    """Return ``model`` with its threshold set from an attack-free ``series``.

    A nonzero ``resolution`` keeps the threshold above the rounding-error
    level of the series (see :func:`resolution_floor`).
    """
    floor = resolution_floor(model, series, resolution) if resolution else 0.0
    if isinstance(model, PasadModel):
        stats = pasad_scores(model, series)[start_index:]
        th = calibrate_threshold(stats, margin, floor)
        return model.with_threshold(th, margin=margin, floor=floor)
    s_pos, s_neg = cusum_statistics(model, series)
    if per_side:
        th_pos = calibrate_threshold(s_pos[start_index:], margin, floor)
        th_neg = calibrate_threshold(s_neg[start_index:], margin, floor)
    else:
        th_pos = calibrate_threshold(np.maximum(s_pos, s_neg)[start_index:], margin, floor)
        th_neg = None
    return replace(
        model,
        s_pos=0.0,
        s_neg=0.0,
        threshold=th_pos,
        threshold_neg=th_neg,
        metadata={**model.metadata, "margin": margin, "floor": floor},
    )


def detect(model: Detector, series, start_index: int = 0) -> tuple[Optional[int], float]:
    """First sample ``>= start_index`` whose statistic strictly exceeds the
    threshold, plus the largest statistic from ``start_index`` on."""
    if model.threshold is None:
        raise ValueError("detector threshold has not been calibrated")
    stats = statistic(model, series)[start_index:]
    valid = ~np.isnan(stats)
    if not valid.any():
        return None, float("nan")
    max_stat = float(np.max(stats[valid]))
    hits = np.flatnonzero(np.where(valid, stats, -np.inf) > model.threshold)
    alarm = int(hits[0]) + start_index if hits.size else None
    return alarm, max_stat
