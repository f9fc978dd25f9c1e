"""Random instances with the default simulation parameters, and their file format.

Instance files are INI-style key/value text (``configparser``)::

    [meta]
    format = 1
    seed = 7

    [system]
    f_fog_max = 15000000000.0
    ...

    [user.0]
    c_total = ...
    comp_user = gamma0 gamma1 gamma2 gamma3 omega_min omega_max
    ...

Compression models are six whitespace-separated floats; the model kind is
implied by the key. Floats are written with ``repr`` so files round-trip
exactly.
"""
from __future__ import annotations

import configparser
import io
from dataclasses import asdict, dataclass, fields, replace
from typing import Dict, List, Optional

import numpy as np

from .model import CompressionModel, Kind, SystemConfig, UserProfile, gain_from_distance

FORMAT = 1


class ConfigError(ValueError):
    """Invalid override, sweep spec or instance file."""


@dataclass(frozen=True)
class ScenarioParams:
    cell_radius: float = 800.0  # m
    min_distance: float = 10.0  # m
    c_min: float = 1.8e9  # cycles
    c_max: float = 2.4e9  # cycles
    offload_fraction: float = 0.9  # c1 / c
    b_in: float = 4e6  # bits
    t_max: float = 1.0  # s
    f_max: float = 2.4e9  # Hz
    p_max: float = 0.22  # W
    p_circuit: float = 22e-9  # W/Hz
    alpha: float = 1e-28
    w_t: float = 1.0 / 3.0  # w_e = 1 - w_t
    rho_max: float = 1e6  # Hz
    kappa: float = 50.0  # gamma0 = kappa * b_in
    omega_u_min: float = 2.3
    omega_u_max: float = 2.9
    omega_f_min: float = 3.4
    omega_f_max: float = 11.2
    fog_ratio: float = 1.0  # fog gamma0 relative to the user's
    # user compressor (GZIP fit, coefficient written against omega=2.6)
    comp_g1: float = 0.03 * 2.6 ** -32.28
    comp_g2: float = 32.28
    comp_g3: float = 0.3
    # user-side payload decompressed at the fog
    decomp_g1: float = 0.115
    decomp_g2: float = -0.9179
    decomp_g3: float = 0.046
    # fog compressor (BZ2 fit)
    fog_g1: float = 0.076
    fog_g2: float = 0.7116
    fog_g3: float = 0.5794
    f_fog_max: float = 15e9  # Hz
    d_max: float = 20e6  # bit/s
    t_cloud: float = 0.2  # s
    m0: float = 5.0
    sigma_bs: float = 3.18e-20  # W/Hz


@dataclass
class Instance:
    seed: Optional[int]
    users: List[UserProfile]
    config: SystemConfig

    @property
    def k(self) -> int:
        return len(self.users)


def apply_overrides(params: ScenarioParams, overrides: Optional[Dict[str, float]]) -> ScenarioParams:
    if not overrides:
        return params
    names = {f.name for f in fields(ScenarioParams)}
    bad = [k for k in overrides if k not in names]
    if bad:
        raise ConfigError(f"unknown override(s): {', '.join(sorted(bad))}")
    try:
        return replace(params, **{k: float(v) for k, v in overrides.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def make_user(params: ScenarioParams, c_total: float, dist_m: float) -> UserProfile:
    g0 = params.kappa * params.b_in
    comp = CompressionModel(g0, params.comp_g1, params.comp_g2, params.comp_g3,
                            params.omega_u_min, params.omega_u_max, Kind.COMPRESS)
    decomp = CompressionModel(g0, params.decomp_g1, params.decomp_g2, params.decomp_g3,
                              params.omega_u_min, params.omega_u_max, Kind.DECOMPRESS)
    qual = CompressionModel(1.0, 0.0, 1.0, 1.0, params.omega_u_min, params.omega_u_max, Kind.QUALITY)
    fog = CompressionModel(params.fog_ratio * g0, params.fog_g1, params.fog_g2, params.fog_g3,
                           params.omega_f_min, params.omega_f_max, Kind.COMPRESS)
    c1 = params.offload_fraction * c_total
    return UserProfile(
        c_total=c_total, c_local=c_total - c1, c_offloadable=c1, b_in=params.b_in,
        t_max=params.t_max, f_max=params.f_max, p_max=params.p_max,
        p_circuit=params.p_circuit, alpha=params.alpha,
        beta_lin=gain_from_distance(dist_m / 1000.0),
        w_t=params.w_t, w_e=1.0 - params.w_t, rho_max=params.rho_max,
        comp_user=comp, decomp_user=decomp, quality_user=qual, comp_fog=fog)


def make_config(params: ScenarioParams) -> SystemConfig:
    return SystemConfig(f_fog_max=params.f_fog_max, d_max=params.d_max, t_cloud=params.t_cloud,
                        m0=params.m0, sigma_bs=params.sigma_bs)


def draw_layout(seed: int, k: int, params: ScenarioParams):
    """Distances (m) and cycle counts for ``k`` users; depends only on the seed."""
    rng = np.random.default_rng(seed)
    u = rng.uniform(size=k)
    r_min, r_max = params.min_distance, params.cell_radius
    # uniform over the annulus
    dist = np.sqrt(r_min ** 2 + u * (r_max ** 2 - r_min ** 2))
    cycles = rng.uniform(params.c_min, params.c_max, size=k)
    return dist, cycles


def generate_instance(seed: int, k: int, overrides: Optional[Dict[str, float]] = None) -> Instance:
    if k < 1:
        raise ConfigError("k must be at least 1")
    params = apply_overrides(ScenarioParams(), overrides)
    dist, cycles = draw_layout(seed, k, params)
    users = [make_user(params, float(c), float(d)) for c, d in zip(cycles, dist)]
    return Instance(seed, users, make_config(params))


def without_compression(inst: Instance) -> Instance:
    """Same users with the ratio pinned at 1 and zero (de)compression work."""
    users = []
    for u in inst.users:
        g0 = u.comp_user.gamma0
        users.append(replace(
            u,
            comp_user=CompressionModel(g0, 0.0, 1.0, 0.0, 1.0, 1.0, Kind.COMPRESS),
            decomp_user=CompressionModel(u.decomp_user.gamma0, 0.0, 1.0, 0.0, 1.0, 1.0, Kind.DECOMPRESS),
            quality_user=CompressionModel(1.0, 0.0, 1.0, 1.0, 1.0, 1.0, Kind.QUALITY),
            q_min=None))
    return Instance(inst.seed, users, inst.config)


def with_fixed_omega(inst: Instance, omega: float) -> Instance:
    """Same users with the device-side ratio pinned at ``omega``."""
    users = []
    for u in inst.users:
        users.append(replace(
            u,
            comp_user=replace(u.comp_user, omega_min=omega, omega_max=omega),
            decomp_user=replace(u.decomp_user, omega_min=omega, omega_max=omega),
            quality_user=replace(u.quality_user, omega_min=omega, omega_max=omega)))
    return Instance(inst.seed, users, inst.config)


# ------------------------------------------------------------------ files

_MODELS = ("comp_user", "decomp_user", "quality_user", "comp_fog")
_KINDS = {"comp_user": Kind.COMPRESS, "decomp_user": Kind.DECOMPRESS,
          "quality_user": Kind.QUALITY, "comp_fog": Kind.COMPRESS}


def dumps_instance(inst: Instance) -> str:
    cp = configparser.ConfigParser()
    cp["meta"] = {"format": str(FORMAT), "seed": "" if inst.seed is None else str(inst.seed),
                  "k": str(inst.k)}
    cp["system"] = {k: repr(float(v)) for k, v in asdict(inst.config).items()}
    for i, u in enumerate(inst.users):
        sec = {}
        for f in fields(UserProfile):
            v = getattr(u, f.name)
            if f.name in _MODELS:
                sec[f.name] = " ".join(repr(float(x)) for x in
                                       (v.gamma0, v.gamma1, v.gamma2, v.gamma3, v.omega_min, v.omega_max))
            elif v is None:
                continue
            else:
                sec[f.name] = repr(float(v))
        cp[f"user.{i}"] = sec
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def loads_instance(text: str) -> Instance:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
        if cp.getint("meta", "format") != FORMAT:
            raise ConfigError("unsupported instance format")
        seed_s = cp.get("meta", "seed", fallback="")
        seed = int(seed_s) if seed_s.strip() else None
        config = SystemConfig(**{k: float(v) for k, v in cp["system"].items()})
        users = []
        names = sorted((s for s in cp.sections() if s.startswith("user.")),
                       key=lambda s: int(s.split(".", 1)[1]))
        for s in names:
            sec = cp[s]
            kw = {}
            for f in fields(UserProfile):
                if f.name not in sec:
                    continue
                if f.name in _MODELS:
                    vals = [float(x) for x in sec[f.name].split()]
                    kw[f.name] = CompressionModel(*vals, kind=_KINDS[f.name])
                else:
                    kw[f.name] = float(sec[f.name])
            users.append(UserProfile(**kw))
    except (configparser.Error, KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad instance file: {exc}") from exc
    if not users:
        raise ConfigError("instance has no users")
    return Instance(seed, users, config)


def save_instance(inst: Instance, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_instance(inst))


def load_instance(path) -> Instance:
    with open(path) as fh:
        return loads_instance(fh.read())


def parse_assignments(items) -> Dict[str, float]:
    """``["key=val", ...]`` to a dict of floats."""
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError as exc:
            raise ConfigError(f"bad value in {item!r}") from exc
    return out
