"""Fixed-step simulator of an antagonistic pneumatic serial-chain arm.

Each joint is driven by two pressure chambers (A and B).  Valve commands pass
through a per-joint integer-tick delay line, chamber pressures follow the
delayed setpoint with a first-order lag, and the net actuator torque fights
Karnopp stick-slip friction, viscous drag, configuration-dependent gravity
load, and hard mechanical stops.  Stepping is deterministic given the seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import PlantConfig, load_plant_config

__all__ = [
    "PneumaticPlant", "SensorFrame", "SimulationError", "SettleTimeout",
]


class SimulationError(RuntimeError):
    """Fatal simulator fault (non-finite state, bad command shape, ...)."""


class SettleTimeout(SimulationError):
    """A joint failed to come to rest while establishing a posture."""


@dataclass
class SensorFrame:
    """One 30 Hz sensor reading: quantized, optionally noisy state copies."""

    q_meas: np.ndarray
    v_meas: np.ndarray
    p_a_meas: np.ndarray
    p_b_meas: np.ndarray


_ADC_LEVELS = 2 ** 16


def _quantize(x: np.ndarray, lo, hi) -> np.ndarray:
    step = (np.asarray(hi) - np.asarray(lo)) / (_ADC_LEVELS - 1)
    return lo + np.round((np.clip(x, lo, hi) - lo) / step) * step


class PneumaticPlant:
    """N-joint pneumatic chain stepped at the control tick.

    One instance owns its full state (angles, velocities, pressures, delay
    buffers, RNG); never share an instance mutably between threads.
    """

    def __init__(self, config, seed: int = 0):
        cfg = load_plant_config(config)
        self.cfg = cfg
        n = cfg.n_joints
        self.n = n
        # per-joint parameter vectors
        self._gain = np.array([j.torque_gain for j in cfg.joints])
        self._lo = np.array([j.range_lo for j in cfg.joints])
        self._hi = np.array([j.range_hi for j in cfg.joints])
        self._scale = np.array([j.angle_scale for j in cfg.joints])
        self._delay = np.array([j.delay_steps for j in cfg.joints], dtype=int)
        self._lag_tau = np.array([j.lag_tau for j in cfg.joints])
        self._mu_s = np.array([j.static_friction for j in cfg.joints])
        self._mu_c = np.array([j.coulomb_friction for j in cfg.joints])
        self._mu_v = np.array([j.viscous_friction for j in cfg.joints])
        self._i_self = np.array([j.inertia_self for j in cfg.joints])
        self._mass = np.array([j.link_mass for j in cfg.joints])
        self._com = np.array([j.link_com_dist for j in cfg.joints])
        self._length = np.array([j.link_length for j in cfg.joints])
        self._gsign = np.array([j.gravity_sign for j in cfg.joints])
        self._dt_sub = cfg.dt / cfg.substeps
        self._p_alpha = 1.0 - np.exp(-self._dt_sub / self._lag_tau)
        self._distal_mask = np.triu(np.ones((n, n), dtype=bool))  # k >= i
        self.reset(seed=seed)

    # ------------------------------------------------------------------ state

    def reset(self, seed: int | None = None, q0=None, jitter: float | None = None):
        """Reset to rest at ``q0`` (default: all joints at their low stop).

        ``jitter`` (std-dev in normalized units, default from config) perturbs
        the initial angles through the plant RNG.
        """
        if seed is not None:
            self._seed = seed
        self.rng = np.random.default_rng(self._seed)
        q0 = self._lo.copy() if q0 is None else np.array(q0, dtype=float)
        sigma = self.cfg.jitter_sigma_q if jitter is None else jitter
        if sigma > 0:
            q0 = q0 + sigma * self.rng.standard_normal(self.n)
        self.q = np.clip(q0, self._lo, self._hi)
        self.v = np.zeros(self.n)
        self.p_a = np.zeros(self.n)
        self.p_b = np.zeros(self.n)
        self._buf_a = [np.zeros(d) for d in self._delay]
        self._buf_b = [np.zeros(d) for d in self._delay]
        self._buf_head = np.zeros(self.n, dtype=int)
        self.t = 0.0
        self.tick = 0
        return self

    def command_to_setpoint(self, u):
        """Linear valve map: command 0..u_max -> pressure 0..p_supply MPaG."""
        u = np.clip(np.asarray(u, dtype=float), 0.0, self.cfg.u_max)
        return u / self.cfg.u_max * self.cfg.p_supply

    def _push_pop(self, bufs, values):
        out = np.empty(self.n)
        for i in range(self.n):
            buf = bufs[i]
            if buf.size == 0:
                out[i] = values[i]
            else:
                head = self._buf_head[i] % buf.size
                out[i] = buf[head]
                buf[head] = values[i]
        return out

    def fill_delay_lines(self, u_a, u_b):
        """Prime both delay lines with steady setpoints (posture holds)."""
        set_a = self.command_to_setpoint(u_a)
        set_b = self.command_to_setpoint(u_b)
        for i in range(self.n):
            self._buf_a[i][:] = set_a[i]
            self._buf_b[i][:] = set_b[i]

    # ------------------------------------------------------------------ dynamics

    def gravity_and_inertia(self, q=None):
        """Gravity torque (N*m, signed in the +q sense) and effective inertia.

        Planar serial-chain statics: link orientations accumulate the scaled
        angles of every gravity-relevant joint from the base; the torque at
        joint i sums m*g times the horizontal COM offsets of all links from i
        outward.  Effective inertia adds parallel-axis terms for distal links
        at the current configuration (horizontal offsets only for joints with
        a gravity-neutral axis).
        """
        q = self.q if q is None else np.asarray(q, dtype=float)
        theta = self._gsign * self._scale * (q - self._lo)
        phi = np.cumsum(theta)
        ux, uz = np.sin(phi), -np.cos(phi)
        # joint i position = sum of link vectors of joints < i
        jx = np.concatenate(([0.0], np.cumsum(self._length * ux)))[:-1]
        jz = np.concatenate(([0.0], np.cumsum(self._length * uz)))[:-1]
        cx = jx + self._com * ux
        cz = jz + self._com * uz
        dx = cx[None, :] - jx[:, None]          # [i, k]
        dz = cz[None, :] - jz[:, None]
        mdx = np.where(self._distal_mask, self._mass[None, :] * dx, 0.0)
        tau_plane = -self.cfg.gravity * mdx.sum(axis=1)
        tau_g = self._gsign * tau_plane
        d2 = np.where(self._gsign[:, None] != 0, dx * dx + dz * dz, dx * dx)
        strictly_distal = np.triu(np.ones((self.n, self.n), dtype=bool), k=1)
        i_eff = self._i_self + np.where(
            strictly_distal, self._mass[None, :] * d2, 0.0).sum(axis=1)
        return tau_g, i_eff

    def activation_threshold(self, joint, direction: int, q=None) -> float:
        """Pressure-difference [MPa] needed to break stiction in ``direction``."""
        i = self.cfg.joint_index(joint)
        tau_g, _ = self.gravity_and_inertia(q)
        need = self._mu_s[i] - direction * tau_g[i]
        return max(need, 0.0) / self._gain[i]

    def step(self, u_a, u_b, n_ticks: int = 1):
        """Advance ``n_ticks`` control ticks with the given valve commands."""
        u_a = np.broadcast_to(np.asarray(u_a, dtype=float), (self.n,))
        u_b = np.broadcast_to(np.asarray(u_b, dtype=float), (self.n,))
        set_a_now = self.command_to_setpoint(u_a)
        set_b_now = self.command_to_setpoint(u_b)
        dt_s = self._dt_sub
        for _ in range(n_ticks):
            tgt_a = self._push_pop(self._buf_a, set_a_now)
            tgt_b = self._push_pop(self._buf_b, set_b_now)
            self._buf_head += 1
            # gravity load and inertia held constant within one tick
            tau_g, i_eff = self.gravity_and_inertia()
            denom = i_eff * self._scale
            for _s in range(self.cfg.substeps):
                self.p_a += (tgt_a - self.p_a) * self._p_alpha
                self.p_b += (tgt_b - self.p_b) * self._p_alpha
                tau_net = self._gain * (self.p_a - self.p_b) + tau_g
                slow = np.abs(self.v) < self.cfg.v_dead
                stick = slow & (np.abs(tau_net) <= self._mu_s)
                fric_sign = np.where(slow, np.sign(tau_net), np.sign(self.v))
                fric = self._mu_c * fric_sign + self._mu_v * self.v
                acc = np.where(stick, 0.0, (tau_net - fric) / denom)
                v_new = self.v + acc * dt_s
                # kinetic friction must not reverse the motion by itself
                reversed_ = (v_new * self.v < 0) & (np.abs(tau_net) <= self._mu_c)
                v_new[reversed_] = 0.0
                v_new[stick] = 0.0
                self.v = v_new
                self.q = self.q + self.v * dt_s
                at_lo = self.q <= self._lo
                at_hi = self.q >= self._hi
                self.q = np.clip(self.q, self._lo, self._hi)
                self.v[at_lo & (self.v < 0)] = 0.0
                self.v[at_hi & (self.v > 0)] = 0.0
            self.tick += 1
            self.t = self.tick * self.cfg.dt
            if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.v))
                    and np.all(np.isfinite(self.p_a)) and np.all(np.isfinite(self.p_b))):
                raise SimulationError(f"non-finite plant state at tick {self.tick}")
        return self

    # ------------------------------------------------------------------ sensing

    def read_sensors(self, noise_on: bool = True) -> SensorFrame:
        """Quantized (16-bit grid) state copies, plus Gaussian noise if enabled."""
        cfg = self.cfg
        q = self.q.copy()
        pa = self.p_a.copy()
        pb = self.p_b.copy()
        v = self.v.copy()
        if noise_on:
            q = q + cfg.noise_sigma_q * self.rng.standard_normal(self.n)
            pa = pa + cfg.noise_sigma_p * self.rng.standard_normal(self.n)
            pb = pb + cfg.noise_sigma_p * self.rng.standard_normal(self.n)
            v = v + cfg.noise_sigma_q / cfg.dt * self.rng.standard_normal(self.n)
        q_step = (self._hi - self._lo) / (_ADC_LEVELS - 1)
        v_span = q_step * (_ADC_LEVELS - 1) / cfg.dt
        return SensorFrame(
            q_meas=_quantize(q, self._lo, self._hi),
            v_meas=_quantize(v, -v_span, v_span),
            p_a_meas=_quantize(pa, 0.0, cfg.p_supply),
            p_b_meas=_quantize(pb, 0.0, cfg.p_supply),
        )

    # ------------------------------------------------------------------ postures

    def holding_commands(self, q=None):
        """Antagonistic commands that balance gravity at configuration ``q``."""
        tau_g, _ = self.gravity_and_inertia(q)
        dp = -tau_g / self._gain
        du = dp / self.cfg.p_supply * self.cfg.u_max
        base = self.cfg.hold_base
        u_a = np.clip(base + du / 2.0, 0.0, self.cfg.u_max)
        u_b = np.clip(base - du / 2.0, 0.0, self.cfg.u_max)
        return u_a, u_b

    def set_posture(self, posture: str, joint, settle_timeout: float = 10.0,
                    eps: float = 1e-6, tol: float = 1e-9):
        """Establish a named test posture and settle; returns holding commands.

        Teleports to the configured target angles, applies gravity-balancing
        hold commands with primed pressures and delay lines, then steps until
        every joint is at rest.  No-op (state untouched) when already there.
        """
        i = self.cfg.joint_index(joint)
        jname = self.cfg.joints[i].name
        table = self.cfg.postures.get(jname)
        if table is None or posture not in table:
            raise SimulationError(
                f"no posture table entry {posture!r} for joint {jname}")
        targets = np.asarray(table[posture], dtype=float)
        if np.all(np.abs(self.q - targets) <= tol) and np.all(np.abs(self.v) <= eps):
            return self.holding_commands()
        self.q = targets.copy()
        self.v = np.zeros(self.n)
        u_a, u_b = self.holding_commands()
        self.p_a = self.command_to_setpoint(u_a)
        self.p_b = self.command_to_setpoint(u_b)
        self.fill_delay_lines(u_a, u_b)
        max_ticks = int(math.ceil(settle_timeout / self.cfg.dt))
        for _ in range(max_ticks):
            self.step(u_a, u_b)
            if np.all(np.abs(self.v) <= eps):
                return u_a, u_b
        worst = int(np.argmax(np.abs(self.v)))
        raise SettleTimeout(
            f"joint {self.cfg.joints[worst].name} failed to settle "
            f"(|v|={abs(self.v[worst]):.3g}) within {settle_timeout} s")

    # ------------------------------------------------------------------ logging

    SNAPSHOT_BASE_COLUMNS = ("tick", "t")

    def snapshot_header(self) -> list[str]:
        cols = list(self.SNAPSHOT_BASE_COLUMNS)
        for jp in self.cfg.joints:
            cols += [f"{sig}_{jp.name}" for sig in ("q", "v", "p_a", "p_b", "u_a", "u_b")]
        return cols

    def snapshot_row(self, u_a, u_b) -> list[float]:
        row = [float(self.tick), self.t]
        for i in range(self.n):
            row += [self.q[i], self.v[i], self.p_a[i], self.p_b[i],
                    float(u_a[i]), float(u_b[i])]
        return row
