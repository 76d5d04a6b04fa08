"""Builtin plant parameter sets.

``test7`` mirrors a 7-joint torso-plus-left-arm chain used by the dynamic
characterization experiments; ``arm4`` is its distal 4-joint arm subsystem
used for data collection and tracking.  Numbers are calibrated so the
measured converged delays, activation thresholds, and peak velocities land
in the documented target bands.
"""
from __future__ import annotations

import math

import itertools

import numpy as np

from .config import POSTURES, JointParams, PlantConfig

_DEG = math.pi / 180.0


def _rotary(name, rated_nm, range_deg, **kw):
    base = dict(
        actuator_kind="rotary",
        torque_gain=rated_nm / 0.7,
        range_lo=0.0,
        range_hi=100.0,
        angle_scale=range_deg * _DEG / 100.0,
    )
    base.update(kw)
    return JointParams(name=name, **base)


def _cylinder(name, eff_nm, range_deg, **kw):
    # cylinders are modelled through their equivalent torque about the joint
    base = dict(
        actuator_kind="cylinder",
        torque_gain=eff_nm / 0.7,
        range_lo=0.0,
        range_hi=100.0,
        angle_scale=range_deg * _DEG / 100.0,
    )
    base.update(kw)
    return JointParams(name=name, **base)


def _arm_joints() -> list[JointParams]:
    """Joints shared between test7 (distal part) and arm4."""
    return [
        _cylinder(
            "shoulder_abduction", eff_nm=3.5, range_deg=40.0,
            delay_steps=6, lag_tau=0.06,
            static_friction=0.40, coulomb_friction=0.28, viscous_friction=0.005,
            inertia_self=0.16, link_mass=0.25, link_com_dist=0.03,
            link_length=0.05, gravity_sign=1,
        ),
        _rotary(
            "shoulder_flexion", rated_nm=3.0, range_deg=90.0,
            delay_steps=6, lag_tau=0.06,
            static_friction=0.35, coulomb_friction=0.25, viscous_friction=0.004,
            inertia_self=0.10, link_mass=0.35, link_com_dist=0.08,
            link_length=0.16, gravity_sign=1,
        ),
        _rotary(
            "shoulder_rotation", rated_nm=3.0, range_deg=90.0,
            delay_steps=6, lag_tau=0.055,
            static_friction=0.30, coulomb_friction=0.22, viscous_friction=0.004,
            inertia_self=0.11, link_mass=0.15, link_com_dist=0.02,
            link_length=0.04, gravity_sign=0,
        ),
        _rotary(
            "elbow_flexion", rated_nm=3.0, range_deg=90.0,
            delay_steps=6, lag_tau=0.055,
            static_friction=0.32, coulomb_friction=0.23, viscous_friction=0.004,
            inertia_self=0.10, link_mass=0.30, link_com_dist=0.09,
            link_length=0.18, gravity_sign=1,
        ),
    ]


def compute_posture_tables(cfg: PlantConfig, skip_hard: tuple = ()) -> None:
    """Fill ``cfg.postures`` with load-range extreme postures per tested joint.

    For each joint and direction, the tested joint starts at the stop the
    stroke leaves from and the distal joints are searched (low / mid / high
    per joint) for the configurations that minimize (E) and maximize (H) the
    load resisting the stroke: resisting gravity torque first, effective
    inertia as tie-breaker (and as the sole criterion for gravity-neutral
    joints).  Joints named in ``skip_hard`` get no H entries.
    """
    from .plant import PneumaticPlant  # deferred; plant imports config only

    probe = PneumaticPlant(cfg, seed=0)
    lo = np.array([jp.range_lo for jp in cfg.joints])
    hi = np.array([jp.range_hi for jp in cfg.joints])
    mid = 0.5 * (lo + hi)
    n = cfg.n_joints
    for i, jp in enumerate(cfg.joints):
        table = {}
        for pname in POSTURES:
            if jp.name in skip_hard and pname.startswith("H"):
                continue
            direction = 1 if pname.endswith("P") else -1
            base = lo.copy()
            base[i] = lo[i] if direction > 0 else hi[i]
            best_vec, best_metric = None, None
            distal = list(range(i + 1, n))
            for combo in itertools.product(*([0, 1, 2] for _ in distal)):
                vec = base.copy()
                for j, c in zip(distal, combo):
                    vec[j] = (lo[j], mid[j], hi[j])[c]
                tau_g, i_eff = probe.gravity_and_inertia(vec)
                resist = -direction * tau_g[i]
                metric = resist * 1e3 + i_eff[i]
                if best_metric is None or (
                    metric < best_metric if pname.startswith("E") else metric > best_metric
                ):
                    best_metric, best_vec = metric, vec
            table[pname] = best_vec
        cfg.postures[jp.name] = table


def default_arm4() -> PlantConfig:
    cfg = PlantConfig(name="arm4", joints=_arm_joints())
    compute_posture_tables(cfg)
    cfg.validate()
    return cfg


def default_test7() -> PlantConfig:
    joints = [
        _rotary(
            "waist_rotation", rated_nm=5.5, range_deg=90.0,
            delay_steps=7, lag_tau=0.065,
            static_friction=0.55, coulomb_friction=0.35, viscous_friction=0.004,
            inertia_self=0.08, link_mass=1.2, link_com_dist=0.06,
            link_length=0.12, gravity_sign=0,
        ),
        _cylinder(
            "scapula_rotation", eff_nm=5.2, range_deg=35.0,
            delay_steps=7, lag_tau=0.06,
            static_friction=0.50, coulomb_friction=0.35, viscous_friction=0.006,
            inertia_self=0.20, link_mass=0.25, link_com_dist=0.03,
            link_length=0.05, gravity_sign=1,
        ),
    ] + _arm_joints() + [
        _rotary(
            "forearm_rotation", rated_nm=3.0, range_deg=90.0,
            delay_steps=7, lag_tau=0.05,
            static_friction=0.28, coulomb_friction=0.20, viscous_friction=0.003,
            inertia_self=0.09, link_mass=0.10, link_com_dist=0.02,
            link_length=0.05, gravity_sign=0,
        ),
    ]
    cfg = PlantConfig(name="test7", joints=joints)
    # forearm rotation load is posture-independent: H cells left undefined
    compute_posture_tables(cfg, skip_hard=("forearm_rotation",))
    cfg.validate()
    return cfg
