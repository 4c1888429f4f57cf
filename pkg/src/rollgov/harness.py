"""Experiment orchestration: closed-loop runs, sweeps, baselines and Monte Carlo."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from rollgov import _core
from rollgov.admissible import (
    OutputConstraints,
    augment_disturbance,
    build_determined_ecg_oinf,
    build_determined_oinf,
    build_ecg_oinf,
    build_oinf,
)
from rollgov.governors import (
    EcgConfig,
    EcgWeights,
    ExtendedCommandGovernor,
    Governor,
    LaguerreBasis,
    LinearReferenceGovernor,
    LrgConfig,
    Measurement,
    NoGovernor,
    NonlinearReferenceGovernor,
    NrgConfig,
    Recovery,
)
from rollgov.governors.ecg import slowest_time_constant
from rollgov.linear import BANKS, build_bank, linearize, yaw_rate_gain
from rollgov.maneuvers import ManeuverSpec, find_safe_reference
from rollgov.metrics import Baseline, MetricsReport, evaluate_run
from rollgov.vehicle import DivergenceError, Plant, VehicleState, vehicle_from_dict

log = logging.getLogger(__name__)

RNG_ALGORITHM = "numpy.random.PCG64"
NOISE_STATES = ("v", "r", "p", "phi")
TRACE_COLUMNS = ("t", "u", "v", "p", "r", "phi", "psi", "X", "Y", "delta_SW", "LTR", "wheel_lift",
                 "a_y", "beta", "phi_uc", "ref")
DECISION_COLUMNS = ("t", "ref", "v", "active", "level", "recovery", "rows_removed", "relax_eps",
                    "solve_time")

# named governor presets: kind plus overrides
PRESETS = {
    "off": {"kind": "off"},
    "LRG": {"kind": "LRG"},
    "LRG-single": {"kind": "LRG", "bank": "single"},
    "LRG-RGMPL1": {"kind": "LRG", "bank": "RGMPL1"},
    "LRG-RGMPL2": {"kind": "LRG", "bank": "RGMPL2"},
    "LRG-last": {"kind": "LRG", "recovery": "LastCommand"},
    "LRG-rowremoval": {"kind": "LRG", "recovery": "RowRemoval"},
    "LRG-relax": {"kind": "LRG", "recovery": "Relaxation"},
    "ECG": {"kind": "ECG"},
    "NRG1": {"kind": "NRG", "nrg_iterations": 1},
    "NRG4": {"kind": "NRG", "nrg_iterations": 4},
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run depends on. Angles in the config are degrees."""

    vehicle_config: str | None = None  # JSON file with "vehicle" and "tire" sections
    vehicle: dict = field(default_factory=dict)  # overrides applied on top of the file
    tire: dict = field(default_factory=lambda: {"surface": "Dry"})
    speed: float = 21.5
    frequency: float = 0.5
    dwell: float = 0.5
    settle: float = 2.0
    dt: float = 0.01
    dt_inner: float = 1e-3
    ltr_lim: float = 0.99
    steer_lim_deg: float = 180.0
    lift_limit: float = 0.05
    governors: tuple = ("LRG", "ECG", "NRG1")
    bank: str = "RGMPL3"
    recovery: str = "Contraction"
    compensate: bool = True
    horizon: int | str = "auto"  # "auto": shortest finitely determined horizon >= horizon_min
    horizon_min: int = 100
    epsilon: float = 1e-3
    ecg_depth: int = 4
    ecg_gain: float = 1.0
    tau_car: float | None = None
    nrg_iterations: int = 4
    nrg_horizon: float = 1.0
    amplitudes_deg: tuple = tuple(float(a) for a in range(10, 170, 10))
    noise: dict = field(default_factory=lambda: {k: 0.0 for k in NOISE_STATES})
    seeds: tuple = (0,)
    workers: int = 1
    output_dir: str = "out"

    def __post_init__(self):
        if any(not 0 <= a <= 180 for a in self.amplitudes_deg):
            raise ValueError("amplitudes must lie in [0, 180] deg")
        if any(s < 0 for s in self.noise.values()) or set(self.noise) - set(NOISE_STATES):
            raise ValueError(f"noise needs non-negative entries for {NOISE_STATES}")
        object.__setattr__(self, "noise", {k: float(self.noise.get(k, 0.0)) for k in NOISE_STATES})
        if not self.seeds:
            raise ValueError("at least one seed required")
        for g in self.governors:
            if g not in PRESETS:
                raise ValueError(f"unknown governor {g!r}; choose from {sorted(PRESETS)}")

    @classmethod
    def from_dict(cls, raw: dict) -> ExperimentConfig:
        raw = dict(raw)
        for key in ("governors", "amplitudes_deg", "seeds"):
            if key in raw:
                raw[key] = tuple(raw[key])
        if "noise" in raw:
            raw["noise"] = {k: float(raw["noise"].get(k, 0.0)) for k in NOISE_STATES}
        return cls(**raw)

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        raw = json.loads(Path(path).read_text())
        ref = raw.get("vehicle_config")
        if ref and not Path(ref).is_absolute():
            raw["vehicle_config"] = str((Path(path).parent / ref).resolve())
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("governors", "amplitudes_deg", "seeds"):
            out[key] = list(out[key])
        return out

    def digest(self) -> str:
        d = self.to_dict()
        if self.vehicle_config:
            # hash what the file says, not where it lives
            d["vehicle_config"] = json.loads(Path(self.vehicle_config).read_text())
        d.pop("output_dir")
        d.pop("workers")
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def constraints(self) -> OutputConstraints:
        return OutputConstraints(self.ltr_lim, math.radians(self.steer_lim_deg))

    def maneuver(self, amplitude_deg: float, scale: float = 1.0) -> ManeuverSpec:
        return ManeuverSpec(amplitude=math.radians(amplitude_deg), frequency=self.frequency,
                            dwell=self.dwell, speed=self.speed, settle=self.settle,
                            amplitude_scale=scale)


class Toolkit:
    """Lazily built, shareable models and sets for one configuration."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        raw = {"vehicle": {}, "tire": {}}
        if config.vehicle_config:
            raw = json.loads(Path(config.vehicle_config).read_text())
        raw = {"vehicle": {**raw.get("vehicle", {}), **config.vehicle},
               "tire": {**raw.get("tire", {}), **config.tire}}
        self.params, self.tire = vehicle_from_dict(raw)
        self._banks: dict = {}
        self._sets: dict = {}

    @cached_property
    def origin_model(self):
        return linearize(self.params, self.tire, self.config.speed, 0.0, np.zeros(4))

    @cached_property
    def yaw_gain0(self) -> float:
        return yaw_rate_gain(self.origin_model)

    @cached_property
    def basis(self) -> LaguerreBasis:
        tau = self.config.tau_car or slowest_time_constant(self.origin_model)
        return LaguerreBasis.matched(self.config.dt, tau, self.config.ecg_depth)

    @cached_property
    def weights(self) -> EcgWeights:
        return EcgWeights.for_basis(self.basis, self.config.ecg_gain)

    def bank(self, name: str):
        if name not in self._banks:
            self._banks[name] = build_bank(self.params, self.tire, self.config.speed, BANKS[name],
                                           self.config.dt, name)
        return self._banks[name]

    def _plain(self, model):
        c, yc = self.config, self.config.constraints
        if c.horizon == "auto":
            return build_determined_oinf(model, yc, c.epsilon, c.horizon_min)
        return build_oinf(model, yc, int(c.horizon), c.epsilon)

    def _ecg(self, model):
        c, yc, b = self.config, self.config.constraints, self.basis
        if c.horizon == "auto":
            return build_determined_ecg_oinf(model, yc, b.A, b.C, c.epsilon, c.horizon_min)
        return build_ecg_oinf(model, yc, b.A, b.C, int(c.horizon), c.epsilon)

    def sets(self, name: str, kind: str = "plain"):
        key = (name, kind)
        if key not in self._sets:
            yc = self.config.constraints
            build = self._plain if kind == "plain" else self._ecg
            self._sets[key] = [augment_disturbance(build(m), yc) for m in self.bank(name).models]
        return self._sets[key]

    def governor(self, preset: str) -> Governor:
        spec = {**PRESETS[preset]}
        c = self.config
        kind = spec.pop("kind")
        yc = c.constraints
        if kind == "off":
            return NoGovernor()
        if kind == "LRG":
            bank = spec.get("bank", c.bank)
            rec = Recovery(spec.get("recovery", c.recovery))
            gov = LinearReferenceGovernor(self.bank(bank), self.sets(bank), yc, LrgConfig(rec, c.compensate))
        elif kind == "ECG":
            gov = ExtendedCommandGovernor(self.bank(c.bank), self.sets(c.bank), self.sets(c.bank, "ecg"),
                                          self.basis, self.weights, yc, EcgConfig(c.compensate))
        elif kind == "NRG":
            cfg = NrgConfig(spec.get("nrg_iterations", c.nrg_iterations), c.nrg_horizon, c.dt, c.dt_inner)
            gov = NonlinearReferenceGovernor(self.params, self.tire, yc, cfg)
        else:
            raise ValueError(kind)
        gov.name = preset
        return gov


def inject_noise(lateral, sigma: dict, rng: np.random.Generator) -> np.ndarray:
    """Multiply each selected state of (v, r, p, phi) by ``1 + sigma * N(0, 1)``."""
    lateral = np.asarray(lateral, dtype=float)
    s = np.array([sigma.get(k, 0.0) for k in NOISE_STATES])
    xi = rng.standard_normal(4)
    return lateral * (1.0 + s * xi)


def _measure(plant: Plant, sigma: dict, rng) -> Measurement:
    x = plant.x
    lateral = np.array([x[_core.V], x[_core.R], x[_core.P], x[_core.PHI]])
    if any(sigma.values()):
        lateral = inject_noise(lateral, sigma, rng)
    full = x.copy()
    full[[_core.V, _core.R, _core.P, _core.PHI]] = lateral
    ltr = _core.load_transfer_ratio(plant._pv, lateral[3], lateral[2])
    return Measurement(lateral, float(ltr), full, plant.side)


@dataclass
class RunRecord:
    config_hash: str
    governor: str
    amplitude_deg: float
    seed: int
    traces: dict
    decisions: list
    max_lift: float
    completed: bool
    error: str = ""
    metrics: MetricsReport | None = None

    @property
    def ref(self) -> np.ndarray:
        return self.traces["ref"]

    @property
    def applied(self) -> np.ndarray:
        return self.traces["delta_SW"]

    @property
    def active_mask(self) -> np.ndarray:
        return np.array([d["active"] for d in self.decisions], dtype=bool)


def run_closed_loop(toolkit: Toolkit, governor: Governor, spec: ManeuverSpec, seed: int = 0,
                    noise: dict | None = None) -> RunRecord:
    """Governor-in-the-loop maneuver: decisions every ``dt``, plant RK4 at ``dt_inner``."""
    c = toolkit.config
    noise = noise if noise is not None else c.noise
    rng = np.random.Generator(np.random.PCG64(seed))
    t, ref = spec.reference(c.dt)
    n = t.size
    plant = Plant(toolkit.params, toolkit.tire, VehicleState(u=spec.speed), c.dt_inner)
    governor.reset()
    rows = np.full((n, len(TRACE_COLUMNS)), np.nan)
    decisions = []
    completed, error = True, ""
    for k in range(n):
        x = plant.x
        last = k == n - 1
        if last:
            v = decisions[-1]["v"] if decisions else 0.0
        else:
            meas = _measure(plant, noise, rng)
            dec = governor.step(float(ref[k]), meas)
            v = dec.v
            decisions.append({"t": t[k], "ref": ref[k], "v": v, "active": dec.active, "level": dec.level,
                              "recovery": dec.recovery.value, "rows_removed": dec.rows_removed,
                              "relax_eps": dec.relax_epsilon, "solve_time": dec.solve_time})
        out = plant.output(v)
        rows[k] = (t[k], x[_core.U], x[_core.V], x[_core.P], x[_core.R], x[_core.PHI], x[_core.PSI],
                   x[_core.XPOS], x[_core.YPOS], v, out.ltr, out.wheel_lift, out.a_y, out.beta,
                   x[_core.PHI_UC], ref[k])
        if last:
            break
        try:
            plant.step(v, c.dt)
        except DivergenceError as exc:
            completed, error = False, str(exc)
            break
    traces = {name: rows[:, i] for i, name in enumerate(TRACE_COLUMNS)}
    max_lift = plant.max_lift if completed else math.inf
    return RunRecord(c.digest(), governor.name, math.degrees(spec.amplitude), seed, traces, decisions,
                     max_lift, completed, error)


@dataclass
class BaselineSet:
    amplitude_deg: float
    nolift_scale: float
    limlift_scale: float
    baselines: tuple


def compute_baselines(toolkit: Toolkit, amplitude_deg: float) -> BaselineSet:
    """NoLift and LimLift scaled references and the NRG4 governed run."""
    c = toolkit.config
    spec = c.maneuver(amplitude_deg)
    s_no = find_safe_reference(spec, toolkit.params, toolkit.tire, 0.0, dt=c.dt)
    s_lim = find_safe_reference(spec, toolkit.params, toolkit.tire, c.lift_limit, dt=c.dt)
    out = []
    for name, scale in (("NoLift", s_no), ("LimLift", s_lim)):
        rec = run_closed_loop(toolkit, NoGovernor(), spec.scaled(scale), noise={})
        out.append(Baseline(name, rec.applied, rec.traces["r"], scale))
    nrg = run_closed_loop(toolkit, toolkit.governor("NRG4"), spec, noise={})
    out.append(Baseline("NRG4", nrg.applied, nrg.traces["r"], 1.0))
    return BaselineSet(amplitude_deg, s_no, s_lim, tuple(out))


def attach_metrics(toolkit: Toolkit, rec: RunRecord, baselines: BaselineSet | None = None) -> RunRecord:
    tr = rec.traces
    n_dec = len(rec.decisions)
    rec.metrics = evaluate_run(
        tr["ref"], tr["delta_SW"], tr["r"], rec.max_lift, rec.active_mask,
        [d["solve_time"] for d in rec.decisions], toolkit.config.dt, toolkit.yaw_gain0,
        baselines.baselines if baselines else (), toolkit.config.lift_limit,
        ltr=tr["LTR"], roll=tr["phi"] + tr["phi_uc"],
    ) if n_dec else None
    return rec


def run_single(config: ExperimentConfig, governor: str, amplitude_deg: float, seed: int = 0,
               with_baselines: bool = False, toolkit: Toolkit | None = None) -> RunRecord:
    tk = toolkit or Toolkit(config)
    rec = run_closed_loop(tk, tk.governor(governor), config.maneuver(amplitude_deg), seed, config.noise)
    base = compute_baselines(tk, amplitude_deg) if with_baselines and rec.completed else None
    return attach_metrics(tk, rec, base)


def _sweep_point(args):
    config, governors, amplitude, seeds, with_baselines = args
    tk = _toolkit_for(config)
    base = compute_baselines(tk, amplitude) if with_baselines else None
    rows = []
    for gov in governors:
        for seed in seeds:
            try:
                rec = attach_metrics(tk, run_closed_loop(tk, tk.governor(gov), config.maneuver(amplitude), seed,
                                                         config.noise),
                                     base)
            except Exception as exc:  # never abort a sweep
                log.exception("run failed")
                rows.append({"governor": gov, "amplitude_deg": amplitude, "seed": seed, "completed": False,
                             "error": repr(exc)})
                continue
            common = {"governor": gov, "amplitude_deg": amplitude, "seed": seed,
                      "completed": rec.completed, "error": rec.error}
            if rec.metrics is None:
                rows.append(common)
                continue
            for r in rec.metrics.rows():
                rows.append({**common, **r})
    return rows


_TOOLKITS: dict = {}


def _toolkit_for(config: ExperimentConfig) -> Toolkit:
    key = config.digest()
    if key not in _TOOLKITS:
        _TOOLKITS[key] = Toolkit(config)
    return _TOOLKITS[key]


def run_sweep(config: ExperimentConfig, governors=None, amplitudes=None, seeds=None,
              with_baselines: bool = True) -> list[dict]:
    """Metrics table over governors x amplitudes x seeds (one row per baseline)."""
    governors = tuple(governors or config.governors)
    amplitudes = tuple(amplitudes or config.amplitudes_deg)
    seeds = tuple(seeds if seeds is not None else config.seeds)
    jobs = [(config, governors, a, seeds, with_baselines) for a in amplitudes]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            parts = list(pool.map(_sweep_point, jobs))
    else:
        parts = [_sweep_point(j) for j in jobs]
    rows = [r for part in parts for r in part]
    rows.sort(key=lambda r: (r["governor"], r["amplitude_deg"], r["seed"], r.get("baseline", "")))
    return rows


def run_monte_carlo(config: ExperimentConfig, governors=None, amplitudes=None) -> list[dict]:
    """Per (governor, amplitude) effectiveness statistics over the configured seeds."""
    rows = run_sweep(config, governors, amplitudes, config.seeds, with_baselines=False)
    cells: dict = {}
    for r in rows:
        if r.get("baseline", "reference") != "reference":
            continue
        cells.setdefault((r["governor"], r["amplitude_deg"]), []).append(r)
    stats = []
    for (gov, amp), rs in sorted(cells.items()):
        eta = np.array([r.get("eta_lift", -math.inf) if r["completed"] else -math.inf for r in rs])
        lift = np.array([r.get("max_wheel_lift", math.inf) for r in rs])
        stats.append({"governor": gov, "amplitude_deg": amp, "runs": len(rs),
                      "failures": int(sum(not r["completed"] for r in rs)),
                      "eta_mean": float(eta.mean()), "eta_min": float(eta.min()),
                      "lift_mean": float(lift.mean()), "lift_max": float(lift.max()),
                      "noise": json.dumps(config.noise, sort_keys=True)})
    return stats


# ------------------------------------------------------------------ output

def write_csv(path, rows, columns=None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if columns is None:
        columns = []
        for r in rows:
            columns += [k for k in r if k not in columns]
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k, "")) for k in columns})


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.bool_, bool)):
        return int(x)
    return x


def write_run(rec: RunRecord, outdir) -> None:
    outdir = Path(outdir)
    n = len(rec.traces["t"])
    trace_rows = [{k: rec.traces[k][i] for k in TRACE_COLUMNS} for i in range(n)]
    write_csv(outdir / "traces.csv", trace_rows, TRACE_COLUMNS)
    write_csv(outdir / "decisions.csv", rec.decisions, DECISION_COLUMNS)
    if rec.metrics is not None:
        write_csv(outdir / "metrics.csv", [{"governor": rec.governor, "amplitude_deg": rec.amplitude_deg,
                                            "seed": rec.seed, **r} for r in rec.metrics.rows()])


def write_manifest(config: ExperimentConfig, outdir, extra: dict | None = None) -> None:
    import numba
    import scipy

    manifest = {
        "config": config.to_dict(), "config_hash": config.digest(), "rng": RNG_ALGORITHM,
        "versions": {"python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__, "numba": numba.__version__},
        **(extra or {}),
    }
    Path(outdir).mkdir(parents=True, exist_ok=True)
    (Path(outdir) / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
