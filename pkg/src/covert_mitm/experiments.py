"""Closed-loop runs, detector calibration and the two parameter grids."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .attacker import AttackerConfig, CovertAgent
from .detectors import (
    CusumModel,
    PasadModel,
    calibrate,
    cusum_init,
    detect,
    pasad_train,
)
from .lti import discretize_zoh, delay_to_samples
from .plant import PidParams, make_plant, make_smith_controller

__all__ = [
    "SimulationAborted",
    "SimulationConfig",
    "DetectorParams",
    "SimulationTrace",
    "Calibration",
    "RunResult",
    "GridSpec",
    "GridRow",
    "make_noise",
    "noise_sigma",
    "run_closed_loop",
    "calibrate_detectors",
    "evaluate",
    "run_single",
    "classify",
    "alpha_grid",
    "noise_grid",
    "run_grid",
    "grid_to_csv",
]

NOISE_CONVENTIONS = ("psd", "variance")
ABORT_LEVEL = 1e6


class SimulationAborted(RuntimeError):
    """The closed loop diverged past ``ABORT_LEVEL``."""


@dataclass(frozen=True)
class SimulationConfig:
    """One closed-loop run. Sample indices count from the end of warm-up.

    Defaults reproduce the single-run scenario (attack of +0.5 with a 5 %
    gain error); grids override ``gamma_ref`` and ``alpha`` or ``noise_power``.
    """

    Ts: float = 0.1
    total_samples: int = 4000
    warmup_samples: int = 500
    train_samples: int = 1000
    attack_start: int = 2000
    y_ref: float = 0.5
    gamma_ref: float = 0.5
    alpha: float = 1.05
    noise_power: float = 1e-9
    noise_convention: str = "psd"
    seed: int = 0
    pid: PidParams = field(default_factory=PidParams)
    covert_controller: Optional[PidParams] = None
    covert_structure: str = "smith"
    mismatch: str = "gain"
    delay_rounding: str = "nearest"

    def __post_init__(self):
        if self.Ts <= 0:
            raise ValueError(f"Ts must be positive, got {self.Ts}")
        if self.warmup_samples < 0:
            raise ValueError("warmup_samples must be >= 0")
        if self.attack_start < self.train_samples:
            raise ValueError("attack_start must be >= train_samples")
        if self.total_samples <= self.attack_start:
            raise ValueError("total_samples must exceed attack_start")
        if self.noise_power < 0:
            raise ValueError("noise_power must be >= 0")
        if self.noise_convention not in NOISE_CONVENTIONS:
            raise ValueError(f"noise_convention must be one of {NOISE_CONVENTIONS}")

    @property
    def attack(self) -> AttackerConfig:
        return AttackerConfig(
            alpha=self.alpha,
            gamma_ref=self.gamma_ref,
            attack_start=self.attack_start,
            covert_controller=self.covert_controller or self.pid,
            structure=self.covert_structure,
            mismatch=self.mismatch,
        )

    def attack_free(self) -> "SimulationConfig":
        return replace(self, gamma_ref=0.0, alpha=1.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["covert_controller"] = asdict(self.covert_controller) if self.covert_controller else None
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "SimulationConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown simulation keys: {sorted(unknown)}")
        doc = dict(doc)
        for key in ("pid", "covert_controller"):
            if isinstance(doc.get(key), dict):
                pid_known = {f.name for f in fields(PidParams)}
                bad = set(doc[key]) - pid_known
                if bad:
                    raise ValueError(f"unknown {key} keys: {sorted(bad)}")
                doc[key] = PidParams(**doc[key])
        return cls(**doc)

    def metadata(self) -> dict:
        """Provenance recorded next to every output."""
        plant = make_plant()
        return {
            "software_version": __version__,
            "seed": self.seed,
            "noise_convention": self.noise_convention,
            "noise_sigma": noise_sigma(self.noise_power, self.Ts, self.noise_convention),
            "delay_rounding": self.delay_rounding,
            "plant_delay_samples": delay_to_samples(plant.delay, self.Ts, self.delay_rounding),
            "config": self.to_dict(),
        }


@dataclass(frozen=True)
class DetectorParams:
    L: Optional[int] = None  # None: half the training length
    r: int = 26
    k_factor: float = 0.3
    margin: float = 0.05
    cusum_per_side: bool = False
    # relative floating-point resolution of the monitored signal
    resolution: float = 1e-12

    @classmethod
    def from_dict(cls, doc: dict) -> "DetectorParams":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown detector keys: {sorted(unknown)}")
        return cls(**doc)


@dataclass
class SimulationTrace:
    """Per-sample signals after warm-up.

    ``warmup_u`` keeps the plant inputs applied during warm-up so the plant
    can be replayed from rest.
    """

    y: np.ndarray
    n: np.ndarray
    y_m: np.ndarray
    gamma: np.ndarray
    y_ma: np.ndarray
    u_c: np.ndarray
    mu: np.ndarray
    u: np.ndarray
    warmup_u: np.ndarray
    config: SimulationConfig

    def __len__(self):
        return self.y.size

    @property
    def t_hours(self) -> np.ndarray:
        return np.arange(len(self)) * self.config.Ts


@dataclass(frozen=True)
class Calibration:
    pasad: PasadModel
    cusum: CusumModel
    start_index: int
    noise_power: float

    def to_dict(self) -> dict:
        return {
            "start_index": self.start_index,
            "noise_power": self.noise_power,
            "pasad_threshold": self.pasad.threshold,
            "cusum_threshold": self.cusum.threshold,
            "cusum_threshold_neg": self.cusum.threshold_neg,
            "cusum_mu0": self.cusum.mu0,
            "cusum_k": self.cusum.k,
            "pasad_L": self.pasad.L,
            "pasad_r": self.pasad.r,
            "pasad_rank_deficient": self.pasad.rank_deficient,
        }


@dataclass(frozen=True)
class RunResult:
    pasad_max: float
    cusum_max: float
    pasad_alarm: Optional[int]
    cusum_alarm: Optional[int]
    label_pasad: str
    label_cusum: str
    detection_delay_pasad: Optional[int]
    detection_delay_cusum: Optional[int]
    Ts: float = 0.1
    aborted: bool = False

    @property
    def delay_hours_pasad(self) -> Optional[float]:
        d = self.detection_delay_pasad
        return None if d is None else d * self.Ts

    @property
    def delay_hours_cusum(self) -> Optional[float]:
        d = self.detection_delay_cusum
        return None if d is None else d * self.Ts

    @classmethod
    def aborted_run(cls, Ts: float) -> "RunResult":
        nan = float("nan")
        return cls(nan, nan, None, None, "ABORTED", "ABORTED", None, None, Ts, True)


def noise_sigma(power: float, Ts: float, convention: str = "psd") -> float:
    """Standard deviation of the sampled noise.

    ``"psd"`` treats ``power`` as a spectral density held over one sample
    (variance ``power / Ts``); ``"variance"`` uses ``power`` as the variance.
    """
    if power < 0:
        raise ValueError(f"noise power must be >= 0, got {power}")
    if Ts <= 0:
        raise ValueError(f"Ts must be positive, got {Ts}")
    if convention not in NOISE_CONVENTIONS:
        raise ValueError(f"convention must be one of {NOISE_CONVENTIONS}")
    return math.sqrt(power / Ts if convention == "psd" else power)


def make_noise(power: float, Ts: float, length: int, seed: int, convention: str = "psd") -> np.ndarray:
    """White Gaussian measurement noise from a seeded PCG64 generator."""
    sigma = noise_sigma(power, Ts, convention)
    draws = np.random.default_rng(seed).standard_normal(length)
    return sigma * draws


def run_closed_loop(config: SimulationConfig) -> SimulationTrace:
    """Simulate plant, network attacker and Smith-predictor controller.

    Each sample: the plant emits ``y``; noise gives ``y_m``; the attacker
    relays the previous controller command and the measurement; the controller
    reacts to ``y_ma``; the plant advances with the relayed input.
    """
    Ts = config.Ts
    W, T = config.warmup_samples, config.total_samples
    plant = discretize_zoh(make_plant(), Ts, config.delay_rounding)
    controller = make_smith_controller(Ts, config.pid, rounding=config.delay_rounding)
    agent = CovertAgent(config.attack, Ts, config.delay_rounding)
    noise = make_noise(config.noise_power, Ts, W + T, config.seed, config.noise_convention)

    rec = np.zeros((7, W + T))  # y, y_m, gamma, y_ma, u_c, mu, u
    u_c = 0.0
    y_ref = config.y_ref
    for i in range(W + T):
        t = i - W
        y = plant.output()
        if not abs(y) <= ABORT_LEVEL:
            raise SimulationAborted(f"|y| exceeded {ABORT_LEVEL:g} at sample {t}")
        y_m = y + noise[i]
        u, y_ma = agent.intercept(u_c, y_m, t)
        u_c_next = controller.step(y_ref, y_ma, u_c)
        plant.step(u)
        rec[:, i] = (y, y_m, agent.gamma, y_ma, u_c, agent.mu, u)
        u_c = u_c_next

    y, y_m, gamma, y_ma, u_c_rec, mu, u = rec[:, W:]
    return SimulationTrace(
        y=y.copy(),
        n=noise[W:].copy(),
        y_m=y_m.copy(),
        gamma=gamma.copy(),
        y_ma=y_ma.copy(),
        u_c=u_c_rec.copy(),
        mu=mu.copy(),
        u=u.copy(),
        warmup_u=rec[6, :W].copy(),
        config=config,
    )


def calibrate_detectors(
    config: SimulationConfig,
    params: DetectorParams = DetectorParams(),
    trace: Optional[SimulationTrace] = None,
) -> Calibration:
    """Train on the first ``train_samples`` of an attack-free run and set
    thresholds just above the largest statistic seen after training."""
    if trace is None:
        trace = run_closed_loop(config.attack_free())
    series = trace.y_ma
    training = series[: config.train_samples]
    L = params.L if params.L is not None else config.train_samples // 2
    pasad = pasad_train(training, L, params.r)
    cusum = cusum_init(training, params.k_factor)
    start = config.train_samples
    pasad = calibrate(pasad, series, start, params.margin, resolution=params.resolution)
    cusum = calibrate(
        cusum, series, start, params.margin, per_side=params.cusum_per_side,
        resolution=params.resolution,
    )
    return Calibration(pasad=pasad, cusum=cusum, start_index=start, noise_power=config.noise_power)


def classify(max_stat: float, threshold: float, attack_active: bool) -> str:
    """TP/FN for attacked runs, FP/TN for attack-free runs. Ties do not alarm."""
    alarm = max_stat > threshold
    if attack_active:
        return "TP" if alarm else "FN"
    return "FP" if alarm else "TN"


def evaluate(trace: SimulationTrace, calibration: Calibration, attack_active: bool = True) -> RunResult:
    config = trace.config
    start = config.attack_start if attack_active else calibration.start_index
    p_alarm, p_max = detect(calibration.pasad, trace.y_ma, start)
    c_alarm, c_max = detect(calibration.cusum, trace.y_ma, start)
    label_p = classify(p_max, calibration.pasad.threshold, attack_active)
    # a per-side CUSUM reports its statistic in units of the positive threshold
    label_c = classify(c_max, calibration.cusum.threshold, attack_active)
    return RunResult(
        pasad_max=p_max,
        cusum_max=c_max,
        pasad_alarm=p_alarm,
        cusum_alarm=c_alarm,
        label_pasad=label_p,
        label_cusum=label_c,
        detection_delay_pasad=None if p_alarm is None or not attack_active else p_alarm - start,
        detection_delay_cusum=None if c_alarm is None or not attack_active else c_alarm - start,
        Ts=config.Ts,
    )


def run_single(
    config: SimulationConfig,
    params: DetectorParams = DetectorParams(),
    calibration: Optional[Calibration] = None,
) -> tuple[SimulationTrace, RunResult, Calibration]:
    if calibration is None:
        calibration = calibrate_detectors(config, params)
    trace = run_closed_loop(config)
    return trace, evaluate(trace, calibration), calibration


@dataclass(frozen=True)
class GridSpec:
    """``gamma_refs`` by ``axis2_values`` of ``axis2`` (``"alpha"`` or ``"noise_power"``).

    Every cell reuses ``base.seed``.
    """

    gamma_refs: tuple[float, ...]
    axis2: str
    axis2_values: tuple[float, ...]
    base: SimulationConfig = SimulationConfig()

    def __post_init__(self):
        if self.axis2 not in ("alpha", "noise_power"):
            raise ValueError(f"axis2 must be 'alpha' or 'noise_power', got {self.axis2!r}")
        if not self.gamma_refs or not self.axis2_values:
            raise ValueError("grid axes must be nonempty")
        object.__setattr__(self, "gamma_refs", tuple(float(v) for v in self.gamma_refs))
        object.__setattr__(self, "axis2_values", tuple(float(v) for v in self.axis2_values))

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.gamma_refs), len(self.axis2_values)

    def cell_config(self, gamma_ref: float, value: float) -> SimulationConfig:
        return replace(self.base, gamma_ref=gamma_ref, **{self.axis2: value})


def _axis(lo, hi, n, log=False):
    v = np.logspace(np.log10(lo), np.log10(hi), n) if log else np.linspace(lo, hi, n)
    # snap to 12 significant digits so that e.g. the alpha = 1 column is exact
    return tuple(float(f"{x:.12g}") for x in v)


def alpha_grid(coarse: bool = False, base: SimulationConfig = SimulationConfig()) -> GridSpec:
    n = 11 if coarse else 101
    return GridSpec(_axis(-0.5, 0.5, n), "alpha", _axis(0.9, 1.1, n), base)


def noise_grid(coarse: bool = False, base: SimulationConfig = SimulationConfig()) -> GridSpec:
    n = 11 if coarse else 101
    base = replace(base, alpha=1.05)
    return GridSpec(_axis(-0.5, 0.5, n), "noise_power", _axis(1e-11, 1e-7, n, log=True), base)


@dataclass(frozen=True)
class GridRow:
    gamma_ref: float
    axis2_value: float
    result: RunResult


def _calibrate_column(args):
    config, params = args
    try:
        return calibrate_detectors(config, params)
    except SimulationAborted:
        return None


def _run_cell(args):
    config, params, calibration = args
    if calibration is None:
        return RunResult.aborted_run(config.Ts)
    try:
        return evaluate(run_closed_loop(config), calibration)
    except SimulationAborted:
        return RunResult.aborted_run(config.Ts)


def run_grid(
    spec: GridSpec,
    params: DetectorParams = DetectorParams(),
    workers: Optional[int] = None,
) -> tuple[list[GridRow], dict[float, Optional[Calibration]]]:
    """Run every cell; returns rows sorted by (gamma_ref, axis2) and the
    calibration used for each axis2 value.

    Detectors are recalibrated per noise level; on an alpha grid the
    attack-free run is the same for all columns, so it is calibrated once.
    """
    if spec.axis2 == "noise_power":
        cal_keys = list(spec.axis2_values)
        cal_jobs = [(replace(spec.base, noise_power=v), params) for v in cal_keys]
    else:
        cal_keys = [None]
        cal_jobs = [(spec.base, params)]

    cells = [(g, v) for g in spec.gamma_refs for v in spec.axis2_values]
    pool = ProcessPoolExecutor(workers) if workers and workers > 1 else None
    try:
        cals = list(pool.map(_calibrate_column, cal_jobs) if pool else map(_calibrate_column, cal_jobs))
        by_key = dict(zip(cal_keys, cals))
        jobs = [
            (spec.cell_config(g, v), params, by_key[v if spec.axis2 == "noise_power" else None])
            for g, v in cells
        ]
        results = list(pool.map(_run_cell, jobs, chunksize=4) if pool else map(_run_cell, jobs))
    finally:
        if pool:
            pool.shutdown()

    rows = sorted(
        (GridRow(g, v, r) for (g, v), r in zip(cells, results)),
        key=lambda row: (row.gamma_ref, row.axis2_value),
    )
    if spec.axis2 == "noise_power":
        calibrations = by_key
    else:
        calibrations = {v: by_key[None] for v in spec.axis2_values}
    return rows, calibrations


GRID_COLUMNS = (
    "gamma_ref",
    "{axis2}",
    "pasad_max",
    "cusum_max",
    "pasad_alarm",
    "cusum_alarm",
    "label_pasad",
    "label_cusum",
    "delay_pasad",
    "delay_cusum",
    "aborted",
)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def grid_to_csv(rows: Sequence[GridRow], axis2: str) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([c.format(axis2=axis2) for c in GRID_COLUMNS])
    for row in rows:
        r = row.result
        writer.writerow(
            [
                _fmt(row.gamma_ref),
                _fmt(row.axis2_value),
                _fmt(r.pasad_max),
                _fmt(r.cusum_max),
                _fmt(r.pasad_alarm),
                _fmt(r.cusum_alarm),
                r.label_pasad,
                r.label_cusum,
                _fmt(r.detection_delay_pasad),
                _fmt(r.detection_delay_cusum),
                _fmt(r.aborted),
            ]
        )
    return buf.getvalue()
