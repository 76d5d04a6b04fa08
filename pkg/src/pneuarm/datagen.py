"""Training-data collection: PID tracking of random-walk references at 30 Hz.

The PID splits its output antagonistically around a baseline stiffness
command: u_A = u0 + du/2, u_B = u0 - du/2.  Every signal needed for inverse
model training (commands, chamber pressures, angle, velocity, reference) is
logged per tick.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .plant import PneumaticPlant

__all__ = [
    "PidGains", "PidController", "RandomWalkSpec", "gen_random_walk",
    "Dataset", "collect", "filtered_velocity",
]

#: column order of one logged sample row (vectors flattened joint-major)
SAMPLE_FIELDS = ("u_a", "u_b", "p_a", "p_b", "q", "v", "q_ref")


@dataclass
class PidGains:
    """Diagonal PID gains plus the antagonistic baseline command."""

    kp: np.ndarray
    kd: np.ndarray
    ki: np.ndarray
    u0: np.ndarray

    def __post_init__(self):
        self.kp = np.asarray(self.kp, dtype=float)
        self.kd = np.asarray(self.kd, dtype=float)
        self.ki = np.asarray(self.ki, dtype=float)
        self.u0 = np.asarray(self.u0, dtype=float)
        if np.any(self.kp < 0) or np.any(self.kd < 0) or np.any(self.ki < 0):
            raise ValueError("PID gains must be non-negative")

    @classmethod
    def paper_arm4(cls) -> "PidGains":
        """Hand-tuned gains for the 4-DOF arm subsystem."""
        return cls(
            kp=[5.48, 3.08, 3.64, 3.4],
            kd=[0.044, 0.148, 0.016, 0.016],
            ki=[0.0005, 0.0036, 0.001, 0.0009],
            u0=[400.0, 400.0, 400.0, 400.0],
        )


class PidController:
    """Antagonistic PID at a fixed tick.

    The derivative uses a backward difference smoothed by a 2-tick moving
    average (the raw difference of quantized angles is unusable).  The
    integral accumulates rectangularly before use and freezes per joint
    while either chamber command is saturated (conditional anti-windup).
    """

    def __init__(self, gains: PidGains, u_max: float, dt: float):
        self.gains = gains
        self.u_max = u_max
        self.dt = dt
        n = len(gains.kp)
        self.n = n
        self.reset()

    def reset(self):
        self._e_prev = np.zeros(self.n)
        self._d_prev = np.zeros(self.n)
        self._integral = np.zeros(self.n)
        self._saturated = np.zeros(self.n, dtype=bool)
        self._first = True

    def step(self, e):
        e = np.asarray(e, dtype=float)
        g = self.gains
        self._integral = np.where(self._saturated, self._integral,
                                  self._integral + e * self.dt)
        d_raw = np.zeros(self.n) if self._first else (e - self._e_prev) / self.dt
        d_filt = 0.5 * (d_raw + self._d_prev)
        du = g.kp * e + g.kd * d_filt + g.ki * self._integral
        u_a_raw = g.u0 + du / 2.0
        u_b_raw = g.u0 - du / 2.0
        u_a = np.clip(u_a_raw, 0.0, self.u_max)
        u_b = np.clip(u_b_raw, 0.0, self.u_max)
        self._saturated = (u_a_raw != u_a) | (u_b_raw != u_b)
        self._e_prev = e
        self._d_prev = d_raw
        self._first = False
        return u_a, u_b


@dataclass
class RandomWalkSpec:
    """Piecewise-constant random-walk reference parameters."""

    bounds: np.ndarray  # (n, 2) per-joint [lo, hi]
    hold_min: float = 0.1
    hold_max: float = 1.0
    step_scale: float = 15.0
    seed: int = 0

    def __post_init__(self):
        self.bounds = np.asarray(self.bounds, dtype=float)
        if not 0 < self.hold_min <= self.hold_max:
            raise ValueError("need 0 < hold_min <= hold_max")
        if np.any(self.bounds[:, 0] >= self.bounds[:, 1]):
            raise ValueError("bounds must satisfy lo < hi")

    @classmethod
    def for_plant(cls, cfg, inset: float = 5.0, **kw) -> "RandomWalkSpec":
        b = np.array([[jp.range_lo + inset, jp.range_hi - inset]
                      for jp in cfg.joints])
        return cls(bounds=b, **kw)


def _reflect(x, lo, hi):
    # single reflection is enough: steps are small relative to the span
    if x < lo:
        x = 2 * lo - x
    if x > hi:
        x = 2 * hi - x
    return min(max(x, lo), hi)


def gen_random_walk(spec: RandomWalkSpec, duration: float,
                    rate_hz: float = 30.0) -> np.ndarray:
    """Per-tick piecewise-constant reference targets, (ticks, n_joints)."""
    if duration <= 0:
        raise ValueError("duration must be > 0")
    rng = np.random.default_rng(spec.seed)
    ticks = int(round(duration * rate_hz))
    n = spec.bounds.shape[0]
    ref = np.empty((ticks, n))
    for j in range(n):
        lo, hi = spec.bounds[j]
        target = 0.5 * (lo + hi)
        k = 0
        while k < ticks:
            hold = max(1, int(round(rng.uniform(spec.hold_min, spec.hold_max) * rate_hz)))
            ref[k:k + hold, j] = target
            target = _reflect(target + rng.uniform(-spec.step_scale, spec.step_scale),
                              lo, hi)
            k += hold
    return ref


def filtered_velocity(q_meas_now, q_meas_prev, d_prev, dt):
    """Backward-difference velocity with a 2-tick moving average.

    Returns (v_filtered, d_raw); feed d_raw back in as ``d_prev`` next tick.
    This same filter is used for dataset logging and for the features fed to
    the tracking model.
    """
    d_raw = (np.asarray(q_meas_now) - np.asarray(q_meas_prev)) / dt
    return 0.5 * (d_raw + d_prev), d_raw


@dataclass
class Dataset:
    """Collected 30 Hz samples, one (ticks, columns) array per trial."""

    joint_names: list[str]
    trials: list[np.ndarray] = field(default_factory=list)
    valid: list[bool] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def n_joints(self) -> int:
        return len(self.joint_names)

    def columns(self) -> list[str]:
        cols = ["tick", "t"]
        for sig in SAMPLE_FIELDS:
            cols += [f"{sig}_{name}" for name in self.joint_names]
        return cols

    def n_rows(self) -> int:
        return sum(t.shape[0] for t in self.trials)

    def signal(self, trial: int, name: str) -> np.ndarray:
        """(ticks, n_joints) view of one logged signal in one trial."""
        i = SAMPLE_FIELDS.index(name)
        n = self.n_joints
        return self.trials[trial][:, 2 + i * n: 2 + (i + 1) * n]

    # ---------------------------------------------------------------- disk io

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        cols = self.columns()
        for t, arr in enumerate(self.trials):
            with open(out / f"trial_{t:04d}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(cols)
                for row in arr:
                    w.writerow([f"{x:.10g}" for x in row])
        manifest = {
            "joint_names": self.joint_names,
            "n_trials": len(self.trials),
            "rows_per_trial": [int(a.shape[0]) for a in self.trials],
            "valid": self.valid,
            **self.meta,
        }
        with open(out / "dataset.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, in_dir) -> "Dataset":
        src = Path(in_dir)
        with open(src / "dataset.json") as fh:
            manifest = json.load(fh)
        ds = cls(joint_names=manifest["joint_names"],
                 valid=manifest["valid"],
                 meta={k: v for k, v in manifest.items()
                       if k not in ("joint_names", "n_trials", "rows_per_trial", "valid")})
        for t in range(manifest["n_trials"]):
            ds.trials.append(np.loadtxt(src / f"trial_{t:04d}.csv",
                                        delimiter=",", skiprows=1, ndmin=2))
        return ds


def run_pid_trial(plant: PneumaticPlant, gains: PidGains, ref: np.ndarray,
                  noise_on: bool = True) -> np.ndarray:
    """One PID tracking run against a per-tick reference; returns the log."""
    cfg = plant.cfg
    n = cfg.n_joints
    pid = PidController(gains, cfg.u_max, cfg.dt)
    ticks = ref.shape[0]
    log = np.empty((ticks, 2 + len(SAMPLE_FIELDS) * n))
    frame = plant.read_sensors(noise_on)
    q_prev = frame.q_meas
    d_prev = np.zeros(n)
    for k in range(ticks):
        e = ref[k] - frame.q_meas
        u_a, u_b = pid.step(e)
        plant.step(u_a, u_b)
        new_frame = plant.read_sensors(noise_on)
        v_filt, d_prev = filtered_velocity(new_frame.q_meas, q_prev, d_prev, cfg.dt)
        q_prev = new_frame.q_meas
        log[k] = np.concatenate((
            [k, k * cfg.dt], u_a, u_b, new_frame.p_a_meas, new_frame.p_b_meas,
            new_frame.q_meas, v_filt, ref[k]))
        frame = new_frame
    return log


def collect(plant: PneumaticPlant, gains: PidGains, walk: RandomWalkSpec,
            trials: int, duration: float, seed: int = 0,
            noise_on: bool = True) -> Dataset:
    """PID-driven random-motion data collection over independent trials."""
    cfg = plant.cfg
    ds = Dataset(joint_names=[jp.name for jp in cfg.joints],
                 meta={"seed": seed, "duration": duration, "plant": cfg.name})
    for trial in range(trials):
        wspec = RandomWalkSpec(bounds=walk.bounds, hold_min=walk.hold_min,
                               hold_max=walk.hold_max, step_scale=walk.step_scale,
                               seed=walk.seed + trial)
        ref = gen_random_walk(wspec, duration, cfg.control_rate)
        plant.reset(seed=seed + trial, q0=ref[0], jitter=0.0)
        u_a0, u_b0 = plant.holding_commands()
        plant.p_a = plant.command_to_setpoint(u_a0)
        plant.p_b = plant.command_to_setpoint(u_b0)
        plant.fill_delay_lines(u_a0, u_b0)
        try:
            log = run_pid_trial(plant, gains, ref, noise_on)
            ds.trials.append(log)
            ds.valid.append(True)
        except Exception as exc:  # non-finite plant state aborts only this trial
            ds.trials.append(np.empty((0, 2 + len(SAMPLE_FIELDS) * cfg.n_joints)))
            ds.valid.append(False)
            ds.meta.setdefault("failures", []).append({"trial": trial, "error": str(exc)})
    return ds
