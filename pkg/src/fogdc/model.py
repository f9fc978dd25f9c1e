"""Domain types and closed-form cost formulas for the user/fog/cloud system.

Every cost downstream (solvers, oracles, benchmarks) is evaluated through the
functions in this module. Infinite cost is signalled with ``math.inf``.

Mode semantics:

* ``LOCAL``: the whole task runs on the device.
* ``FOG``: the device compresses, uploads, the fog decompresses and executes.
* ``CLOUD``: the device compresses, uploads, the fog forwards the compressed
  payload over the backhaul and the cloud executes.
* ``CLOUD_RECOMPRESSED``: like ``CLOUD`` but the fog decompresses and
  recompresses the payload with its own compressor before forwarding.

For ``CLOUD_RECOMPRESSED`` the fog compressor works on the user-compressed
payload ``b_in / omega_u``. Its own step ratio is ``omega_f / omega_u`` where
``omega_f = b_in / b_out_f`` is the end-to-end ratio stored in ``Decision``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Tuple

INF = math.inf
LN2 = math.log(2.0)

# relative slack tolerated when checking omega against model bounds
_RANGE_TOL = 1e-9


class DomainError(ValueError):
    """Raised when a model is evaluated outside its ratio range."""


class Kind(str, Enum):
    COMPRESS = "compress"
    DECOMPRESS = "decompress"
    QUALITY = "quality"


class Mode(str, Enum):
    LOCAL = "local"
    FOG = "fog"
    CLOUD = "cloud"
    CLOUD_RECOMPRESSED = "cloud_recompressed"


@dataclass(frozen=True)
class CompressionModel:
    gamma0: float  # cycles (1 for quality models)
    gamma1: float
    gamma2: float
    gamma3: float
    omega_min: float = 1.0
    omega_max: float = 1.0
    kind: Kind = Kind.COMPRESS

    def __post_init__(self):
        if self.gamma1 < 0 or self.gamma3 < 0:
            raise ValueError("gamma1 and gamma3 must be non-negative")
        if not 1.0 <= self.omega_min <= self.omega_max:
            raise ValueError("need 1 <= omega_min <= omega_max")
        if self.kind != Kind.QUALITY and self.gamma0 <= 0:
            raise ValueError("workload models need gamma0 > 0")

    def workload(self, omega):
        """Vectorised workload (or quality) without range checking."""
        if self.kind == Kind.QUALITY:
            return self.gamma3 - self.gamma1 * omega ** self.gamma2
        return self.gamma0 * (self.gamma1 * omega ** self.gamma2 + self.gamma3)


@dataclass(frozen=True)
class UserProfile:
    c_total: float  # cycles
    c_local: float  # cycles always executed on the device
    c_offloadable: float  # cycles that may run remotely
    b_in: float  # bits
    t_max: float  # s
    f_max: float  # Hz
    p_max: float  # W
    p_circuit: float  # W/Hz
    alpha: float  # energy coefficient
    beta_lin: float  # linear channel gain
    w_t: float
    w_e: float
    rho_max: float  # Hz
    comp_user: CompressionModel
    decomp_user: CompressionModel
    quality_user: CompressionModel
    comp_fog: CompressionModel
    q_min: Optional[float] = None

    def __post_init__(self):
        if abs(self.c_local + self.c_offloadable - self.c_total) > 1e-9 * self.c_total:
            raise ValueError("c_local + c_offloadable must equal c_total")
        if abs(self.w_t + self.w_e - 1.0) > 1e-9 or self.w_t < 0 or self.w_e < 0:
            raise ValueError("weights must be non-negative and sum to 1")
        for name in ("c_total", "b_in", "t_max", "f_max", "p_max", "alpha"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.p_circuit < 0 or self.beta_lin < 0 or self.rho_max < 0:
            raise ValueError("p_circuit, beta_lin and rho_max must be non-negative")
        if self.c_local < 0 or self.c_offloadable < 0:
            raise ValueError("cycle split must be non-negative")

    @property
    def can_offload(self) -> bool:
        return self.rho_max > 0 and self.beta_lin > 0


@dataclass(frozen=True)
class SystemConfig:
    f_fog_max: float = 15e9  # Hz
    d_max: float = 20e6  # bit/s
    t_cloud: float = 0.2  # s
    m0: float = 5.0  # beamforming gain
    sigma_bs: float = 3.18e-20  # W/Hz
    w_bw: float = 1e-6  # price per Hz
    w_c: float = 1e-9  # price per cycle

    def __post_init__(self):
        if not (self.f_fog_max > 0 and self.d_max > 0 and self.t_cloud >= 0):
            raise ValueError("need f_fog_max > 0, d_max > 0, t_cloud >= 0")


@dataclass(frozen=True)
class Decision:
    mode: Mode
    omega_u: float = 1.0
    omega_f: float = 1.0  # end-to-end ratio b_in / b_out_f
    f_u: float = 0.0  # Hz
    f_f: float = 0.0  # Hz
    p: float = 0.0  # W/Hz
    rho: float = 0.0  # Hz
    d: float = 0.0  # bit/s

    @property
    def fog_step_ratio(self) -> float:
        return self.omega_f / self.omega_u


@dataclass(frozen=True)
class Check:
    ok: bool
    slack: float


@dataclass
class ConstraintReport:
    checks: Dict[str, Check] = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return all(c.ok for c in self.checks.values())

    def violations(self):
        return [k for k, c in self.checks.items() if not c.ok]


# ---------------------------------------------------------------- channel

def path_loss_db(dist_km: float) -> float:
    return 128.1 + 37.6 * math.log10(dist_km)


def gain_from_distance(dist_km: float) -> float:
    """Linear channel gain from the path-loss law (dB converted to linear)."""
    return 10.0 ** (-path_loss_db(dist_km) / 10.0)


def beta0(profile: UserProfile, config: SystemConfig) -> float:
    if config.sigma_bs <= 0:
        raise ValueError("sigma_bs must be positive")
    return config.m0 * profile.beta_lin / config.sigma_bs


def uplink_rate(rho: float, p: float, b0: float) -> float:
    if rho < 0 or p < 0:
        raise ValueError("rho and p must be non-negative")
    return rho * math.log1p(p * b0) / LN2


def rho_max_from_pricing(theta_max: float, c_offloadable: float,
                         config: SystemConfig) -> float:
    """Bandwidth cap implied by a service budget; zero forbids offloading."""
    return max(0.0, (theta_max - config.w_c * c_offloadable) / config.w_bw)


# ------------------------------------------------------------ compression

def _check_range(model: CompressionModel, omega: float) -> float:
    lo, hi = model.omega_min, model.omega_max
    tol = _RANGE_TOL * max(1.0, hi)
    if omega < lo - tol or omega > hi + tol:
        raise DomainError(f"omega={omega} outside [{lo}, {hi}]")
    return min(max(omega, lo), hi)


def comp_eval(model: CompressionModel, omega: float) -> float:
    return float(model.workload(_check_range(model, omega)))


def feasible_omega_range(quality: CompressionModel, q_min: Optional[float]) -> Tuple[float, float]:
    """Ratio interval meeting the quality floor; raises if it is empty."""
    lo, hi = quality.omega_min, quality.omega_max
    if q_min is None or quality.gamma1 == 0:
        if q_min is not None and quality.gamma3 < q_min:
            raise DomainError("quality floor unreachable")
        return lo, hi
    if quality.workload(lo) < q_min - 1e-12:
        raise DomainError("quality floor exceeds quality at omega_min")
    if quality.gamma2 > 0:
        cap = ((quality.gamma3 - q_min) / quality.gamma1) ** (1.0 / quality.gamma2)
        hi = min(hi, cap)
    return lo, max(lo, hi)


def omega_bounds(profile: UserProfile) -> Tuple[float, float]:
    """User-side ratio box: compressor range intersected with the QoS range."""
    lo, hi = profile.comp_user.omega_min, profile.comp_user.omega_max
    qlo, qhi = feasible_omega_range(profile.quality_user, profile.q_min)
    lo, hi = max(lo, qlo), min(hi, qhi)
    if lo > hi:
        raise DomainError("empty ratio range")
    return lo, hi


# ------------------------------------------------------------------ costs

def _div(a: float, b: float) -> float:
    if b <= 0:
        return INF if a > 0 else 0.0
    return a / b


def user_cycles(decision: Decision, profile: UserProfile) -> float:
    if decision.mode == Mode.LOCAL:
        return profile.c_total
    return profile.c_local + comp_eval(profile.comp_user, decision.omega_u)


def fog_cycles(decision: Decision, profile: UserProfile) -> float:
    if decision.mode == Mode.FOG:
        return profile.c_offloadable + comp_eval(profile.decomp_user, decision.omega_u)
    if decision.mode == Mode.CLOUD_RECOMPRESSED:
        c_de = comp_eval(profile.decomp_user, decision.omega_u)
        return comp_eval(profile.comp_fog, decision.fog_step_ratio) + c_de
    return 0.0


def total_delay(decision: Decision, profile: UserProfile, config: SystemConfig) -> float:
    if decision.mode == Mode.LOCAL:
        return _div(profile.c_total, decision.f_u)
    t = _div(user_cycles(decision, profile), decision.f_u)
    rate = uplink_rate(decision.rho, decision.p, beta0(profile, config))
    t += _div(profile.b_in, decision.omega_u * rate)
    if decision.mode == Mode.FOG:
        t += _div(fog_cycles(decision, profile), decision.f_f)
    elif decision.mode == Mode.CLOUD:
        t += _div(profile.b_in, decision.omega_u * decision.d) + config.t_cloud
    else:
        t += _div(fog_cycles(decision, profile), decision.f_f)
        t += _div(profile.b_in, decision.omega_f * decision.d) + config.t_cloud
    return t


def total_energy(decision: Decision, profile: UserProfile, config: SystemConfig) -> float:
    e = profile.alpha * decision.f_u ** 2 * user_cycles(decision, profile)
    if decision.mode == Mode.LOCAL:
        return e
    spectral = math.log1p(decision.p * beta0(profile, config)) / LN2
    e += _div((decision.p + profile.p_circuit) * profile.b_in, decision.omega_u * spectral)
    return e


def wedc(decision: Decision, profile: UserProfile, config: SystemConfig) -> float:
    t = total_delay(decision, profile, config)
    e = total_energy(decision, profile, config)
    # 0 * inf stays 0 for a zero weight
    return (profile.w_t * t if profile.w_t else 0.0) + (profile.w_e * e if profile.w_e else 0.0)


# ------------------------------------------------------------- validation

def _rel(slack: float, scale: float, tol: float) -> Check:
    return Check(bool(slack >= -tol * max(1.0, abs(scale))), float(slack))


def validate(decision: Decision, profile: UserProfile, config: SystemConfig,
             peers_totals: Optional[Tuple[float, float]] = None,
             eta: Optional[float] = None, tol: float = 1e-9,
             aggregate_tol: float = 1e-6) -> ConstraintReport:
    """Evaluate every constraint with its slack.

    ``peers_totals`` is the system-wide (fog Hz, backhaul bit/s) usage
    including this decision; without it the decision's own usage is used.
    ``eta`` adds the cost-bound row ``C0``.
    """
    rep = ConstraintReport()
    ck = rep.checks
    mode = decision.mode
    fog_total, bh_total = peers_totals if peers_totals is not None else (decision.f_f, decision.d)

    ck["C1"] = _rel(profile.f_max - decision.f_u, profile.f_max, tol)
    if decision.f_u <= 0:
        ck["C1"] = Check(False, decision.f_u)
    ck["C2"] = _rel(config.f_fog_max - fog_total, config.f_fog_max, aggregate_tol)

    consistent = True
    if mode == Mode.LOCAL:
        consistent = decision.f_f == 0 and decision.d == 0 and decision.rho == 0
    elif mode == Mode.FOG:
        consistent = decision.d == 0 and decision.f_f > 0
    elif mode == Mode.CLOUD:
        consistent = decision.f_f == 0 and decision.d > 0
    else:
        consistent = decision.f_f > 0 and decision.d > 0
    if mode != Mode.CLOUD_RECOMPRESSED and mode != Mode.LOCAL:
        consistent = consistent and abs(decision.omega_f - decision.omega_u) <= 1e-12 * decision.omega_u
    ck["C3"] = Check(isinstance(mode, Mode), 0.0)
    ck["C4"] = Check(bool(consistent), 0.0)
    ck["C3e"] = ck["C3"]
    ck["C4e"] = ck["C4"]

    if mode == Mode.LOCAL:
        ck["C5"] = Check(True, INF)
    else:
        try:
            lo, hi = omega_bounds(profile)
            s = min(decision.omega_u - lo, hi - decision.omega_u)
            ck["C5"] = _rel(s, hi, tol)
        except DomainError:
            ck["C5"] = Check(False, -INF)

    ck["C6"] = _rel(profile.p_max - decision.rho * decision.p, profile.p_max, tol)
    s7 = min(decision.rho, profile.rho_max - decision.rho)
    ck["C7"] = _rel(s7, profile.rho_max, tol)
    if mode != Mode.LOCAL and decision.rho <= 0:
        ck["C7"] = Check(False, s7)
    ck["C8"] = _rel(config.d_max - bh_total, config.d_max, aggregate_tol)

    try:
        t = total_delay(decision, profile, config)
        xi = wedc(decision, profile, config)
    except DomainError:
        t = xi = INF
    ck["C9"] = _rel(profile.t_max - t, profile.t_max, tol) if math.isfinite(t) else Check(False, -INF)
    ck["C9e"] = ck["C9"]

    if mode == Mode.CLOUD_RECOMPRESSED:
        m = profile.comp_fog
        r = decision.fog_step_ratio
        ck["C10e"] = _rel(min(r - m.omega_min, m.omega_max - r), m.omega_max, tol)
    else:
        ck["C10e"] = Check(True, INF)

    if eta is not None:
        ck["C0"] = _rel(eta - xi, eta, tol) if math.isfinite(xi) else Check(False, -INF)
    return rep


def local_decision(profile: UserProfile, f_u: float) -> Decision:
    return Decision(Mode.LOCAL, f_u=f_u)
