"""Dynamic characterization experiments against a plant instance.

Four experiments, all at the 30 Hz control tick:

* time delay -- step one chamber command, time until motion is detected;
* minimum activation command -- ramp one chamber until motion starts;
* maximum velocity -- full-supply step, peak of the differentiated angle;
* reproducibility -- repeat a fixed random command sequence and compare
  the recorded trajectories pairwise by RMSE.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .plant import PneumaticPlant, SimulationError

__all__ = [
    "MovementDetector", "DelayResult", "DelaySweep", "MinPressureResult",
    "MaxVelocityResult", "ReproReport", "rmse",
    "measure_time_delay", "sweep_time_delay", "measure_min_pressure",
    "measure_max_velocity", "assess_reproducibility", "gen_random_commands",
]

_DIRECTIONS = {"pos": 1, "neg": -1, 1: 1, -1: -1}


def _direction(direction) -> int:
    try:
        return _DIRECTIONS[direction]
    except KeyError:
        raise ValueError(f"direction must be pos/neg, got {direction!r}") from None


class MovementDetector:
    """Flags motion once |q - q_init| stays above epsilon for persist ticks.

    ``epsilon`` must clear the sensor quantization step plus three noise
    sigmas; ``t_start`` is the first tick of the persistent excursion.
    """

    def __init__(self, epsilon: float = 0.5, persist: int = 2):
        if persist < 1:
            raise ValueError("persist must be >= 1")
        self.epsilon = epsilon
        self.persist = persist
        self._q_init = None
        self._run_start = None
        self._run = 0

    def arm(self, q_init: float) -> None:
        self._q_init = q_init
        self._run_start = None
        self._run = 0

    def update(self, q_meas: float, tick: int):
        """Feed one sample; returns t_start tick once motion is confirmed."""
        if self._q_init is None:
            raise RuntimeError("detector not armed")
        if abs(q_meas - self._q_init) >= self.epsilon:
            if self._run == 0:
                self._run_start = tick
            self._run += 1
            if self._run >= self.persist:
                return self._run_start
        else:
            self._run = 0
            self._run_start = None
        return None


@dataclass
class DelayResult:
    joint: str
    posture: str
    direction: int
    u_diff: float
    t_delay_ms: float | None  # None = no movement within the timeout
    trial: int


@dataclass
class DelaySweep:
    joint: str
    posture: str
    direction: int
    u_diff_grid: np.ndarray
    mean_ms: np.ndarray  # NaN where every trial was a no-move
    std_ms: np.ndarray
    converged_ms: float
    converged_std_ms: float
    results: list[DelayResult] = field(default_factory=list)


@dataclass
class MinPressureResult:
    joint: str
    posture: str
    direction: int
    per_trial: list[float | None]  # None = immovable at the supply ceiling
    mean: float
    std: float


@dataclass
class MaxVelocityResult:
    joint: str
    posture: str
    direction: int
    per_trial: list[float]
    mean: float
    std: float


@dataclass
class ReproReport:
    joint_names: list[str]
    rmse: np.ndarray       # (joints, trials, trials)
    std_trace: np.ndarray  # (ticks, joints)


def rmse(a, b) -> float:
    """Root mean square error between two equal-length trajectories."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"trajectory length mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def _init_trial(plant: PneumaticPlant, joint: int, posture: str,
                trial_seed: int, hold_ticks: int, noise_on: bool):
    """Posture + hold; returns holding commands and the denoised start angle."""
    plant.reset(seed=trial_seed, jitter=0.0)
    u_a, u_b = plant.set_posture(posture, joint)
    q_init_samples = []
    for _ in range(hold_ticks):
        plant.step(u_a, u_b)
        q_init_samples.append(plant.read_sensors(noise_on).q_meas[joint])
    q_init = float(np.mean(q_init_samples[-5:]))
    return np.array(u_a), np.array(u_b), q_init


def _step_commands(u_a, u_b, joint: int, direction: int, u_diff: float, u_max: float):
    """Commands realizing a target command difference on the driving chamber."""
    u_a, u_b = u_a.copy(), u_b.copy()
    if direction > 0:
        u_a[joint] = min(u_b[joint] + u_diff, u_max)
    else:
        u_b[joint] = min(u_a[joint] + u_diff, u_max)
    return u_a, u_b


def measure_time_delay(plant: PneumaticPlant, joint, direction, posture: str,
                       u_diff: float, trials: int = 10, seed: int = 0,
                       noise_on: bool = True, detector_epsilon: float = 0.5,
                       detector_persist: int = 2, hold_ticks: int = 15,
                       timeout: float = 5.0) -> list[DelayResult]:
    """Step-input time-delay measurement at one command difference."""
    cfg = plant.cfg
    i = cfg.joint_index(joint)
    direction = _direction(direction)
    results = []
    max_ticks = int(math.ceil(timeout / cfg.dt))
    for trial in range(trials):
        u_a, u_b, q_init = _init_trial(plant, i, posture, seed + trial,
                                       hold_ticks, noise_on)
        t0 = plant.tick
        sa, sb = _step_commands(u_a, u_b, i, direction, u_diff, cfg.u_max)
        applied_diff = (sa[i] - u_b[i]) if direction > 0 else (sb[i] - u_a[i])
        det = MovementDetector(detector_epsilon, detector_persist)
        det.arm(q_init)
        t_delay = None
        for _ in range(max_ticks):
            plant.step(sa, sb)
            t_start = det.update(plant.read_sensors(noise_on).q_meas[i], plant.tick)
            if t_start is not None:
                t_delay = (t_start - t0) * cfg.dt * 1000.0
                break
        results.append(DelayResult(cfg.joints[i].name, posture, direction,
                                   float(applied_diff), t_delay, trial))
    return results


def sweep_time_delay(plant: PneumaticPlant, joint, direction, posture: str,
                     trials: int = 10, n_grid: int = 12, seed: int = 0,
                     noise_on: bool = True, converge_points: int = 3,
                     **kw) -> DelaySweep:
    """Delay-vs-command-difference curve over a log-spaced grid.

    The grid spans from just above the stiction threshold to the available
    supply headroom; the converged value averages the largest
    ``converge_points`` grid points.
    """
    cfg = plant.cfg
    i = cfg.joint_index(joint)
    direction = _direction(direction)
    # threshold and headroom evaluated at the test posture
    plant.reset(seed=seed, jitter=0.0)
    u_a, u_b = plant.set_posture(posture, i)
    thr_u = plant.activation_threshold(i, direction) / cfg.p_supply * cfg.u_max
    hold_other = u_b[i] if direction > 0 else u_a[i]
    headroom = cfg.u_max - hold_other
    lo = min(max(1.2 * thr_u + 10.0, 20.0), 0.5 * headroom)
    grid = np.geomspace(lo, headroom, n_grid)
    all_results = []
    mean_ms, std_ms = [], []
    for u_diff in grid:
        rs = measure_time_delay(plant, i, direction, posture, float(u_diff),
                                trials=trials, seed=seed, noise_on=noise_on, **kw)
        all_results.extend(rs)
        vals = [r.t_delay_ms for r in rs if r.t_delay_ms is not None]
        mean_ms.append(np.mean(vals) if vals else np.nan)
        std_ms.append(np.std(vals) if vals else np.nan)
    conv_vals = [r.t_delay_ms for u in grid[-converge_points:]
                 for r in all_results
                 if r.u_diff >= u - 1e-9 and r.t_delay_ms is not None]
    return DelaySweep(
        joint=cfg.joints[i].name, posture=posture, direction=direction,
        u_diff_grid=grid, mean_ms=np.array(mean_ms), std_ms=np.array(std_ms),
        converged_ms=float(np.mean(conv_vals)) if conv_vals else float("nan"),
        converged_std_ms=float(np.std(conv_vals)) if conv_vals else float("nan"),
        results=all_results,
    )


def measure_min_pressure(plant: PneumaticPlant, joint, direction, posture: str,
                         ramp_rate: float = 0.5, trials: int = 10, seed: int = 0,
                         noise_on: bool = True, detector_epsilon: float = 0.5,
                         detector_persist: int = 2,
                         hold_ticks: int = 15) -> MinPressureResult:
    """Ramp the driving chamber; command difference at first detected motion."""
    if ramp_rate <= 0:
        raise ValueError("ramp_rate must be > 0")
    cfg = plant.cfg
    i = cfg.joint_index(joint)
    direction = _direction(direction)
    per_trial: list[float | None] = []
    for trial in range(trials):
        u_a, u_b, q_init = _init_trial(plant, i, posture, seed + trial,
                                       hold_ticks, noise_on)
        det = MovementDetector(detector_epsilon, detector_persist)
        det.arm(q_init)
        ua, ub = u_a.copy(), u_b.copy()
        drive, other = (ua, ub) if direction > 0 else (ub, ua)
        measured = None
        while True:
            at_ceiling = drive[i] >= cfg.u_max
            drive[i] = min(drive[i] + ramp_rate, cfg.u_max)
            plant.step(ua, ub)
            if det.update(plant.read_sensors(noise_on).q_meas[i], plant.tick) is not None:
                measured = float(drive[i] - other[i])
                break
            if at_ceiling:
                break  # immovable: supply exhausted without motion
        per_trial.append(measured)
    moved = [m for m in per_trial if m is not None]
    return MinPressureResult(
        joint=cfg.joints[i].name, posture=posture, direction=direction,
        per_trial=per_trial,
        mean=float(np.mean(moved)) if moved else float("nan"),
        std=float(np.std(moved)) if moved else float("nan"),
    )


def measure_max_velocity(plant: PneumaticPlant, joint, direction, posture: str,
                         trials: int = 10, seed: int = 0, noise_on: bool = True,
                         hold_ticks: int = 15,
                         timeout: float = 4.0) -> MaxVelocityResult:
    """Full-supply step; peak of the centrally differenced measured angle."""
    cfg = plant.cfg
    i = cfg.joint_index(joint)
    direction = _direction(direction)
    jp = cfg.joints[i]
    far = jp.range_hi if direction > 0 else jp.range_lo
    peaks = []
    max_ticks = int(math.ceil(timeout / cfg.dt))
    for trial in range(trials):
        u_a, u_b, _ = _init_trial(plant, i, posture, seed + trial,
                                  hold_ticks, noise_on)
        sa, sb = u_a.copy(), u_b.copy()
        if direction > 0:
            sa[i] = cfg.u_max
        else:
            sb[i] = cfg.u_max
        traj = []
        for _ in range(max_ticks):
            plant.step(sa, sb)
            traj.append(plant.read_sensors(noise_on).q_meas[i])
            if abs(traj[-1] - far) < 0.5:
                break
        if len(traj) < 3:
            raise SimulationError(
                f"stroke too short to differentiate ({len(traj)} samples, "
                f"joint {jp.name})")
        v = np.gradient(np.asarray(traj), cfg.dt)
        peaks.append(float(direction * np.max(direction * v)))
    return MaxVelocityResult(
        joint=jp.name, posture=posture, direction=direction, per_trial=peaks,
        mean=float(np.mean(peaks)), std=float(np.std(peaks)),
    )


def gen_random_commands(cfg, duration: float, seed: int = 0,
                        u_lo: float = 100.0, u_hi: float = 400.0,
                        hold_min: float = 0.1, hold_max: float = 1.0):
    """Piecewise-constant random valve commands for the reproducibility run."""
    rng = np.random.default_rng(seed)
    ticks = int(round(duration * cfg.control_rate))
    n = cfg.n_joints
    u_a = np.empty((ticks, n))
    u_b = np.empty((ticks, n))
    for j in range(n):
        for u in (u_a, u_b):
            k = 0
            while k < ticks:
                hold = int(round(rng.uniform(hold_min, hold_max) * cfg.control_rate))
                u[k:k + hold, j] = rng.uniform(u_lo, u_hi)
                k += hold
    return u_a, u_b


def assess_reproducibility(plant: PneumaticPlant, command_sequence,
                           trials: int = 11, warmup_discard: int = 1,
                           seed: int = 0, noise_on: bool = True,
                           jitter: float = 0.2) -> ReproReport:
    """Pairwise trajectory RMSE over repeated runs of one command sequence."""
    u_a_seq, u_b_seq = command_sequence
    u_a_seq = np.asarray(u_a_seq, dtype=float)
    u_b_seq = np.asarray(u_b_seq, dtype=float)
    if u_a_seq.shape != u_b_seq.shape:
        raise ValueError("command sequence chamber arrays differ in shape")
    cfg = plant.cfg
    if u_a_seq.ndim != 2 or u_a_seq.shape[1] != cfg.n_joints:
        raise ValueError("command sequence must cover all joints")
    ticks = u_a_seq.shape[0]
    kept = []
    for trial in range(trials):
        plant.reset(seed=seed + trial, jitter=jitter)
        traj = np.empty((ticks, cfg.n_joints))
        for k in range(ticks):
            plant.step(u_a_seq[k], u_b_seq[k])
            traj[k] = plant.read_sensors(noise_on).q_meas
        if trial >= warmup_discard:
            kept.append(traj)
    kept_arr = np.stack(kept)  # (trials, ticks, joints)
    m = len(kept)
    mat = np.zeros((cfg.n_joints, m, m))
    for j in range(m):
        for k in range(j + 1, m):
            for i in range(cfg.n_joints):
                e = rmse(kept_arr[j, :, i], kept_arr[k, :, i])
                mat[i, j, k] = mat[i, k, j] = e
    return ReproReport(
        joint_names=[jp.name for jp in cfg.joints],
        rmse=mat,
        std_trace=kept_arr.std(axis=0),
    )
