"""Baselines, experiment sweeps and CSV output.

A sweep file is INI text::

    [sweep]
    format = 1
    param = b_in                 # any scenario field, or k
    values = 1.6e6 2.4e6 3.2e6
    seeds = 0-19                 # ranges and/or single seeds
    k = 5
    algos = local nocomp jcora   # also fixed:<omega>, pla, osts, iuts
    epsilon = 1e-3

    [overrides]                  # optional fixed scenario changes
    d_max = 30e6

One row per (algo, value, seed) goes to ``runs.csv`` and per-(algo, value)
means to ``aggregate.csv``. Rows are sorted before writing, so the files
depend only on the spec (wall times are written only on request).
"""
from __future__ import annotations

import configparser
import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import jcora, recompress
from .jcora import InfeasibleInstance, Solution
from .model import Mode, validate
from .scenario import (ConfigError, Instance, ScenarioParams, generate_instance, with_fixed_omega,
                       without_compression)

COLUMNS = ("algo", "seed", "param", "eta", "n_local", "n_fog", "n_cloud", "n_recomp",
           "fog_hz", "backhaul_bps", "ms", "status")
AGG_COLUMNS = ("algo", "param", "runs", "ok", "eta", "n_local", "n_fog", "n_cloud", "n_recomp",
               "fog_hz", "backhaul_bps", "ms")
BASE_ALGOS = ("local", "nocomp", "jcora", "pla", "osts", "iuts")
FORMAT = 1


@dataclass
class RunRecord:
    algo: str
    seed: Optional[int]
    param: float
    eta: float
    counts: Dict[Mode, int]
    fog_hz: float
    backhaul_bps: float
    ms: float
    status: str = "ok"
    valid: bool = True

    def __post_init__(self):
        if self.status == "ok" and not self.eta >= 0:
            raise ValueError("eta must be non-negative")

    def row(self, timing: bool) -> List[str]:
        c = self.counts
        return [self.algo, "" if self.seed is None else str(self.seed), repr(float(self.param)),
                _fmt(self.eta), str(c.get(Mode.LOCAL, 0)), str(c.get(Mode.FOG, 0)),
                str(c.get(Mode.CLOUD, 0)), str(c.get(Mode.CLOUD_RECOMPRESSED, 0)),
                _fmt(self.fog_hz), _fmt(self.backhaul_bps),
                f"{self.ms:.1f}" if timing else "", self.status]


def _fmt(v: float) -> str:
    return "" if v is None or not math.isfinite(v) else f"{v:.9g}"


def _failed(algo, inst, param, status, ms) -> RunRecord:
    return RunRecord(algo, inst.seed, param, math.nan, {}, math.nan, math.nan, ms, status, False)


def _from_solution(algo: str, inst: Instance, sol: Solution, param: float, ms: float,
                   check: Optional[Instance] = None) -> RunRecord:
    ref = check or inst
    totals = (sol.fog_total, sol.backhaul_total)
    ok = all(validate(d, u, ref.config, totals, sol.eta_star).feasible
             for d, u in zip(sol.decisions, ref.users))
    return RunRecord(algo, inst.seed, param, sol.max_wedc, sol.mode_counts(), sol.fog_total,
                     sol.backhaul_total, ms, "ok" if ok else "invalid", ok)


def run_local(inst: Instance, param: float = math.nan) -> RunRecord:
    """Every user computes locally at its best frequency."""
    t = time.perf_counter()
    etas = [jcora.eta_local(u) for u in inst.users]
    ms = 1e3 * (time.perf_counter() - t)
    if any(math.isinf(v) for v in etas):
        return _failed("local", inst, param, "infeasible", ms)
    return RunRecord("local", inst.seed, param, max(etas), {Mode.LOCAL: inst.k}, 0.0, 0.0, ms)


def run_algo(algo: str, inst: Instance, param: float = math.nan, epsilon: float = 1e-3,
             params: Optional[dict] = None) -> RunRecord:
    """One named algorithm on one instance; failures become status strings."""
    params = params or {}
    if algo == "local":
        return run_local(inst, param)
    t = time.perf_counter()
    try:
        if algo == "jcora":
            sol, target = jcora.solve(inst, epsilon), inst
        elif algo == "nocomp":
            target = without_compression(inst)
            sol = jcora.solve(target, epsilon)
        elif algo.startswith("fixed:"):
            target = with_fixed_omega(inst, float(algo.split(":", 1)[1]))
            sol = jcora.solve(target, epsilon)
        elif algo in recompress.ALGOS:
            sol, target = recompress.solve_ext(inst, epsilon, algo, **params), inst
        else:
            raise ConfigError(f"unknown algorithm {algo!r}")
    except InfeasibleInstance:
        return _failed(algo, inst, param, "infeasible", 1e3 * (time.perf_counter() - t))
    except ConfigError:
        raise
    except Exception as exc:  # recorded per row; the sweep continues
        return _failed(algo, inst, param, f"error:{type(exc).__name__}", 1e3 * (time.perf_counter() - t))
    return _from_solution(algo, inst, sol, param, 1e3 * (time.perf_counter() - t), target)


def run_baselines(inst: Instance, omegas: Optional[Sequence[float]] = None,
                  epsilon: float = 1e-3) -> List[RunRecord]:
    """Local-only, no-compression, full JCORA and a fixed-ratio grid."""
    if omegas is None:
        lo = max(u.comp_user.omega_min for u in inst.users)
        hi = min(u.comp_user.omega_max for u in inst.users)
        omegas = np.linspace(lo, hi, 7) if hi > lo else [lo]
    out = [run_local(inst), run_algo("nocomp", inst, epsilon=epsilon), run_algo("jcora", inst, epsilon=epsilon)]
    out += [run_algo(f"fixed:{float(w):.6g}", inst, epsilon=epsilon) for w in omegas]
    return out


# ---------------------------------------------------------------- sweeps

@dataclass
class SweepSpec:
    param: str
    values: Tuple[float, ...]
    seeds: Tuple[int, ...]
    k: int
    algos: Tuple[str, ...]
    epsilon: float = 1e-3
    overrides: Dict[str, float] = None
    algo_params: Dict[str, float] = None

    def jobs(self):
        for v in self.values:
            for s in self.seeds:
                yield v, s


def _parse_seeds(text: str) -> Tuple[int, ...]:
    out = []
    for tok in text.replace(",", " ").split():
        if "-" in tok[1:]:
            a, b = tok.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(tok))
    if not out:
        raise ConfigError("no seeds")
    return tuple(out)


def _floats(text: str) -> Tuple[float, ...]:
    vals = tuple(float(t) for t in text.replace(",", " ").split())
    if not vals:
        raise ConfigError("no values")
    return vals


def parse_sweep(text: str) -> SweepSpec:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
        sec = cp["sweep"]
        if int(sec.get("format", str(FORMAT))) != FORMAT:
            raise ConfigError("unsupported sweep format")
        param = sec["param"].strip()
        names = {f.name for f in fields(ScenarioParams)} | {"k"}
        if param not in names:
            raise ConfigError(f"unknown sweep parameter {param!r}")
        algos = tuple(sec.get("algos", "local nocomp jcora").replace(",", " ").split())
        for a in algos:
            if a not in BASE_ALGOS and not a.startswith("fixed:"):
                raise ConfigError(f"unknown algorithm {a!r}")
            if a.startswith("fixed:"):
                float(a.split(":", 1)[1])
        overrides = {k: float(v) for k, v in cp["overrides"].items()} if cp.has_section("overrides") else {}
        bad = [k for k in overrides if k not in names - {"k"}]
        if bad:
            raise ConfigError(f"unknown override(s): {', '.join(bad)}")
        algo_params = {k: float(v) for k, v in cp["algo"].items()} if cp.has_section("algo") else {}
        return SweepSpec(param, _floats(sec["values"]), _parse_seeds(sec.get("seeds", "0")),
                         int(sec.get("k", "5")), algos, float(sec.get("epsilon", "1e-3")),
                         overrides, algo_params)
    except ConfigError:
        raise
    except (configparser.Error, KeyError, ValueError) as exc:
        raise ConfigError(f"bad sweep spec: {exc}") from exc


def _instance(spec: SweepSpec, value: float, seed: int) -> Instance:
    over = dict(spec.overrides or {})
    k = spec.k
    if spec.param == "k":
        k = int(round(value))
    else:
        over[spec.param] = value
    return generate_instance(seed, k, over)


def _job(args) -> List[RunRecord]:
    spec, value, seed = args
    inst = _instance(spec, value, seed)
    params = {}
    ap = spec.algo_params or {}
    if "segments" in ap:
        params["segments"] = int(ap["segments"])
    if "delta_lambda" in ap:
        params["delta_lambda"] = ap["delta_lambda"]
    if "max_iters" in ap:
        params["max_iters"] = int(ap["max_iters"])
    out = []
    for algo in spec.algos:
        kw = params if algo in recompress.ALGOS else {}
        out.append(run_algo(algo, inst, value, spec.epsilon, kw))
    return out


def run_sweep(spec: SweepSpec, workers: int = 1) -> List[RunRecord]:
    jobs = [(spec, v, s) for v, s in spec.jobs()]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_job, jobs))
    else:
        parts = [_job(j) for j in jobs]
    rows = [r for p in parts for r in p]
    order = {a: i for i, a in enumerate(spec.algos)}
    rows.sort(key=lambda r: (order[r.algo], r.param, r.seed))
    return rows


def aggregate(records: Sequence[RunRecord]) -> List[List[str]]:
    groups: Dict[Tuple[str, float], List[RunRecord]] = {}
    for r in records:
        groups.setdefault((r.algo, r.param), []).append(r)
    out = []
    for (algo, param), rs in groups.items():
        ok = [r for r in rs if r.status == "ok"]

        def mean(fn):
            vals = [fn(r) for r in ok]
            return _fmt(float(np.mean(vals))) if vals else ""

        out.append([algo, repr(float(param)), str(len(rs)), str(len(ok)), mean(lambda r: r.eta),
                    mean(lambda r: r.counts.get(Mode.LOCAL, 0)), mean(lambda r: r.counts.get(Mode.FOG, 0)),
                    mean(lambda r: r.counts.get(Mode.CLOUD, 0)),
                    mean(lambda r: r.counts.get(Mode.CLOUD_RECOMPRESSED, 0)),
                    mean(lambda r: r.fog_hz), mean(lambda r: r.backhaul_bps), mean(lambda r: r.ms)])
    return out


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[str]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def sweep(spec_path, out_dir, workers: int = 1, timing: bool = False) -> List[RunRecord]:
    """Run a sweep file and write ``runs.csv`` and ``aggregate.csv``."""
    spec = parse_sweep(Path(spec_path).read_text())
    records = run_sweep(spec, workers)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "runs.csv", COLUMNS, [r.row(timing) for r in records])
    agg = aggregate(records)
    if not timing:
        for row in agg:
            row[-1] = ""
    write_csv(out / "aggregate.csv", AGG_COLUMNS, agg)
    return records
