"""Plant configuration: per-joint parameters, posture tables, and file I/O.

Config files are INI-style: a ``[plant]`` section with global constants,
one ``[joint.<name>]`` section per joint (base to tip order), and optional
``[postures.<name>]`` sections giving named full-arm angle vectors used to
initialize the characterization experiments.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

POSTURES = ("EP", "HP", "EN", "HN")

#: posture names that start the tested joint at its low stop (positive-direction runs)
POSITIVE_POSTURES = ("EP", "HP")


class ConfigError(ValueError):
    """Raised for malformed or inconsistent plant configuration."""


@dataclass
class JointParams:
    """Physical and actuator parameters for one joint of the chain.

    Positions are normalized to [range_lo, range_hi] (nominally 0-100);
    ``angle_scale`` converts one normalized unit to physical radians.
    ``gravity_sign`` is +1/-1 when positive motion works against/with
    gravity and 0 for joints whose axis makes gravity irrelevant.
    """

    name: str
    actuator_kind: str = "rotary"
    torque_gain: float = 4.2857  # N*m per MPa of chamber pressure difference
    range_lo: float = 0.0
    range_hi: float = 100.0
    angle_scale: float = math.pi / 2 / 100.0
    delay_steps: int = 8
    lag_tau: float = 0.06
    static_friction: float = 0.35
    coulomb_friction: float = 0.25
    viscous_friction: float = 0.004
    inertia_self: float = 0.12
    link_mass: float = 0.4
    link_com_dist: float = 0.08
    link_length: float = 0.16
    gravity_sign: int = 1

    def validate(self) -> None:
        j = self.name
        if self.actuator_kind not in ("rotary", "cylinder"):
            raise ConfigError(f"joint {j}: unknown actuator_kind {self.actuator_kind!r}")
        if not self.range_lo < self.range_hi:
            raise ConfigError(f"joint {j}: range_lo must be < range_hi")
        if self.delay_steps < 0:
            raise ConfigError(f"joint {j}: delay_steps must be >= 0")
        if self.lag_tau <= 0:
            raise ConfigError(f"joint {j}: lag_tau must be > 0")
        if not 0 <= self.coulomb_friction <= self.static_friction:
            raise ConfigError(
                f"joint {j}: need 0 <= coulomb_friction <= static_friction"
            )
        if self.torque_gain <= 0:
            raise ConfigError(f"joint {j}: torque_gain must be > 0")
        if self.inertia_self <= 0:
            raise ConfigError(f"joint {j}: inertia_self must be > 0")
        if self.viscous_friction < 0:
            raise ConfigError(f"joint {j}: viscous_friction must be >= 0")
        if self.gravity_sign not in (-1, 0, 1):
            raise ConfigError(f"joint {j}: gravity_sign must be -1, 0, or +1")


@dataclass
class PlantConfig:
    """Full plant description: joints plus global simulator constants."""

    name: str
    joints: list[JointParams]
    u_max: float = 600.0
    p_supply: float = 0.6  # MPaG
    control_rate: float = 30.0
    substeps: int = 10
    v_dead: float = 0.5  # Karnopp dead-band, units/s
    gravity: float = 9.81
    noise_sigma_q: float = 0.03
    noise_sigma_p: float = 0.001
    jitter_sigma_q: float = 0.0
    hold_base: float = 150.0  # symmetric baseline command used when holding a posture
    # posture tables: tested joint name -> posture name -> per-joint target vector
    postures: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)

    @property
    def dt(self) -> float:
        return 1.0 / self.control_rate

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    def joint_index(self, name_or_index) -> int:
        if isinstance(name_or_index, (int, np.integer)):
            i = int(name_or_index)
            if not 0 <= i < self.n_joints:
                raise ConfigError(f"joint index {i} out of range")
            return i
        for i, jp in enumerate(self.joints):
            if jp.name == name_or_index:
                return i
        raise ConfigError(f"unknown joint {name_or_index!r}")

    def validate(self) -> None:
        if not self.joints:
            raise ConfigError("plant has no joints")
        if self.u_max <= 0 or self.p_supply <= 0:
            raise ConfigError("u_max and p_supply must be > 0")
        if self.substeps < 1:
            raise ConfigError("substeps must be >= 1")
        names = [jp.name for jp in self.joints]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate joint names")
        for jp in self.joints:
            jp.validate()
        for jname, table in self.postures.items():
            self.joint_index(jname)
            for pname, vec in table.items():
                if pname not in POSTURES:
                    raise ConfigError(f"postures.{jname}: unknown posture {pname!r}")
                if len(vec) != self.n_joints:
                    raise ConfigError(
                        f"postures.{jname}.{pname}: expected {self.n_joints} values"
                    )
                for q, jp in zip(vec, self.joints):
                    if not jp.range_lo <= q <= jp.range_hi:
                        raise ConfigError(
                            f"postures.{jname}.{pname}: {q} outside range of {jp.name}"
                        )


_JOINT_FIELDS = (
    "actuator_kind", "torque_gain", "range_lo", "range_hi", "angle_scale",
    "delay_steps", "lag_tau", "static_friction", "coulomb_friction",
    "viscous_friction", "inertia_self", "link_mass", "link_com_dist",
    "link_length", "gravity_sign",
)

_PLANT_FIELDS = (
    "u_max", "p_supply", "control_rate", "substeps", "v_dead", "gravity",
    "noise_sigma_q", "noise_sigma_p", "jitter_sigma_q", "hold_base",
)

_INT_FIELDS = {"delay_steps", "gravity_sign", "substeps"}
_STR_FIELDS = {"actuator_kind", "name"}


def _parse_value(key: str, raw: str, where: str):
    try:
        if key in _STR_FIELDS:
            return raw.strip()
        if key in _INT_FIELDS:
            return int(raw)
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {key}: {raw!r}") from exc


def load_plant_config(source) -> PlantConfig:
    """Load a plant config from a path or a builtin name ('arm4', 'test7')."""
    if isinstance(source, PlantConfig):
        return source
    text = None
    name = str(source)
    if name in ("arm4", "test7"):
        text = resources.files("pneuarm.data").joinpath(f"{name}.cfg").read_text()
    else:
        path = Path(source)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        text = path.read_text()
        name = path.stem
    return parse_plant_config(text, name)


def parse_plant_config(text: str, fallback_name: str = "plant") -> PlantConfig:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc

    joints: list[JointParams] = []
    postures: dict[str, dict[str, np.ndarray]] = {}
    plant_kwargs = {}
    plant_name = fallback_name

    for section in parser.sections():
        if section == "plant":
            for key, raw in parser.items(section):
                if key == "name":
                    plant_name = raw.strip()
                elif key in _PLANT_FIELDS:
                    plant_kwargs[key] = _parse_value(key, raw, "[plant]")
                else:
                    raise ConfigError(f"[plant]: unknown field {key!r}")
        elif section.startswith("joint."):
            jp = JointParams(name=section[len("joint."):])
            for key, raw in parser.items(section):
                if key not in _JOINT_FIELDS:
                    raise ConfigError(f"[{section}]: unknown field {key!r}")
                setattr(jp, key, _parse_value(key, raw, f"[{section}]"))
            joints.append(jp)
        elif section.startswith("postures."):
            jname = section[len("postures."):]
            table = {}
            for key, raw in parser.items(section):
                pname = key.upper()
                try:
                    table[pname] = np.array([float(x) for x in raw.split()])
                except ValueError as exc:
                    raise ConfigError(f"[{section}]: bad vector for {key}") from exc
            postures[jname] = table
        else:
            raise ConfigError(f"unknown config section [{section}]")

    cfg = PlantConfig(name=plant_name, joints=joints, postures=postures, **plant_kwargs)
    cfg.validate()
    return cfg


def format_plant_config(cfg: PlantConfig) -> str:
    lines = ["[plant]", f"name = {cfg.name}"]
    for key in _PLANT_FIELDS:
        lines.append(f"{key} = {getattr(cfg, key):.10g}")
    for jp in cfg.joints:
        lines.append("")
        lines.append(f"[joint.{jp.name}]")
        for key in _JOINT_FIELDS:
            val = getattr(jp, key)
            lines.append(f"{key} = {val}" if isinstance(val, str)
                         else f"{key} = {val:.10g}")
    for jname, table in cfg.postures.items():
        lines.append("")
        lines.append(f"[postures.{jname}]")
        for pname in POSTURES:
            if pname in table:
                vec = " ".join(f"{x:.10g}" for x in table[pname])
                lines.append(f"{pname} = {vec}")
    return "\n".join(lines) + "\n"


def write_plant_config(cfg: PlantConfig, path) -> None:
    Path(path).write_text(format_plant_config(cfg))


