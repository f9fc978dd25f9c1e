import math
import subprocess
import sys
from dataclasses import fields

import pytest

from fogdc import bench, jcora
from fogdc.cli import EXIT_ERROR, EXIT_INFEASIBLE, EXIT_OK, main
from fogdc.model import Mode
from fogdc.scenario import (ConfigError, dumps_instance, generate_instance, loads_instance,
                            without_compression)

SPEC = """\
[sweep]
format = 1
param = {param}
values = {values}
seeds = {seeds}
k = {k}
algos = {algos}
"""


def _spec(tmp_path, name="s.ini", param="b_in", values="4e6", seeds="0", k=2, algos="local nocomp jcora",
          extra=""):
    p = tmp_path / name
    p.write_text(SPEC.format(param=param, values=values, seeds=seeds, k=k, algos=algos) + extra)
    return p


# ------------------------------------------------------------ instances

def test_defaults():
    inst = generate_instance(0, 4)
    u, c = inst.users[0], inst.config
    assert (u.t_max, u.f_max, u.p_max, u.p_circuit, u.b_in) == (1.0, 2.4e9, 0.22, 22e-9, 4e6)
    assert (c.f_fog_max, c.d_max, c.t_cloud, c.sigma_bs, c.m0) == (15e9, 20e6, 0.2, 3.18e-20, 5.0)
    assert u.rho_max == 1e6
    assert u.comp_user.gamma0 == 50 * 4e6
    assert (u.comp_user.omega_min, u.comp_user.omega_max) == (2.3, 2.9)
    assert (u.comp_fog.omega_min, u.comp_fog.omega_max) == (3.4, 11.2)
    assert u.w_e == pytest.approx(2 * u.w_t)
    for x in inst.users:
        assert 1.8e9 <= x.c_total <= 2.4e9
        assert x.c_offloadable == pytest.approx(0.9 * x.c_total)


def test_same_seed_same_instance():
    assert dumps_instance(generate_instance(7, 3)) == dumps_instance(generate_instance(7, 3))
    assert dumps_instance(generate_instance(7, 3)) != dumps_instance(generate_instance(8, 3))


def test_override_touches_one_field():
    a, b = generate_instance(2, 3), generate_instance(2, 3, {"d_max": 30e6})
    diff = [f.name for f in fields(a.config) if getattr(a.config, f.name) != getattr(b.config, f.name)]
    assert diff == ["d_max"]
    assert a.users == b.users
    with pytest.raises(ConfigError):
        generate_instance(0, 2, {"nonsense": 1.0})
    with pytest.raises(ConfigError):
        generate_instance(0, 0)


def test_instance_round_trip():
    inst = generate_instance(4, 3, {"b_in": 2.4e6})
    back = loads_instance(dumps_instance(inst))
    assert back.users == inst.users and back.config == inst.config and back.seed == 4
    with pytest.raises(ConfigError):
        loads_instance("format = 9\n")


# ------------------------------------------------------------ baselines

def test_baselines(small_instance):
    recs = {r.algo: r for r in bench.run_baselines(small_instance, omegas=[2.3, 2.9])}
    assert recs["local"].eta == max(jcora.eta_local(u) for u in small_instance.users)
    assert recs["local"].counts == {Mode.LOCAL: 3}
    ref = jcora.solve(without_compression(small_instance))
    assert recs["nocomp"].eta == ref.max_wedc
    assert recs["jcora"].eta <= recs["nocomp"].eta
    assert all(r.status == "ok" and r.valid for r in recs.values())
    assert set(recs) == {"local", "nocomp", "jcora", "fixed:2.3", "fixed:2.9"}


def test_failures_are_recorded():
    inst = generate_instance(0, 2, {"t_max": 0.05})
    assert bench.run_algo("jcora", inst).status == "infeasible"
    assert bench.run_local(inst).status == "infeasible"
    with pytest.raises(ConfigError):
        bench.run_algo("magic", inst)


# ------------------------------------------------------------------ sweeps

def test_parse_sweep():
    spec = bench.parse_sweep(SPEC.format(param="w_t", values="0, 0.5", seeds="0-2 5", k=3, algos="local fixed:2.5")
                             + "[overrides]\nd_max = 30e6\n[algo]\nsegments = 5\n")
    assert spec.values == (0.0, 0.5) and spec.seeds == (0, 1, 2, 5) and spec.k == 3
    assert spec.overrides == {"d_max": 30e6} and spec.algo_params == {"segments": 5.0}
    for bad in (SPEC.format(param="zzz", values="1", seeds="0", k=1, algos="local"),
                SPEC.format(param="b_in", values="1", seeds="0", k=1, algos="simplex"),
                SPEC.format(param="b_in", values="", seeds="0", k=1, algos="local"),
                "[sweep]\nformat = 2\nparam = b_in\nvalues = 1\n",
                "no section\n"):
        with pytest.raises(ConfigError):
            bench.parse_sweep(bad)


def test_single_value_single_seed(tmp_path):
    recs = bench.sweep(_spec(tmp_path), tmp_path / "out")
    assert [r.algo for r in recs] == ["local", "nocomp", "jcora"]
    lines = (tmp_path / "out" / "runs.csv").read_text().splitlines()
    assert lines[0].split(",") == list(bench.COLUMNS)
    assert len(lines) == 4
    agg = (tmp_path / "out" / "aggregate.csv").read_text().splitlines()
    assert len(agg) == 4


def test_local_column_constant_in_b_in(tmp_path):
    recs = bench.sweep(_spec(tmp_path, values="1.6e6 3.2e6 4.8e6", algos="local"), tmp_path / "o")
    etas = {r.eta for r in recs}
    assert len(recs) == 3 and len(etas) == 1


def test_csv_byte_identical(tmp_path):
    spec = _spec(tmp_path, values="2.4e6 4e6", seeds="0-1", algos="local jcora fixed:2.6")
    bench.sweep(spec, tmp_path / "a")
    bench.sweep(spec, tmp_path / "b", workers=2)
    for name in ("runs.csv", "aggregate.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_partial_failure_continues(tmp_path):
    recs = bench.sweep(_spec(tmp_path, param="t_max", values="0.05 1.0", algos="local jcora"), tmp_path / "o")
    status = {(r.algo, r.param): r.status for r in recs}
    assert status[("jcora", 0.05)] == "infeasible" and status[("jcora", 1.0)] == "ok"
    assert status[("local", 0.05)] == "infeasible"
    row = [r for r in recs if r.param == 0.05][0].row(False)
    assert row[3] == "" and row[-1] == "infeasible"


def test_sweep_over_k(tmp_path):
    recs = bench.sweep(_spec(tmp_path, param="k", values="1 2", algos="local"), tmp_path / "o")
    assert [sum(r.counts.values()) for r in recs] == [1, 2]


def test_records_reject_negative_eta():
    with pytest.raises(ValueError):
        bench.RunRecord("x", 0, 1.0, -1.0, {}, 0.0, 0.0, 0.0)


# --------------------------------------------------------------------- CLI

def test_cli_gen_and_solve(tmp_path, capsys):
    path = tmp_path / "inst.txt"
    assert main(["gen", "--seed", "3", "--k", "2", "-o", str(path)]) == EXIT_OK
    assert loads_instance(path.read_text()).k == 2
    assert main(["solve", str(path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("eta* = ")
    assert main(["oracle", str(path), "--grid", "8"]) == EXIT_OK
    assert main(["solve-ext", str(path), "--algo", "osts"]) == EXIT_OK


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    assert main(["gen", "--seed", "0", "--k", "2", "--set", "t_max=0.05", "-o", str(bad)]) == EXIT_OK
    assert main(["solve", str(bad)]) == EXIT_INFEASIBLE
    assert main(["gen", "--seed", "0", "--k", "2", "--set", "bogus=1"]) == EXIT_ERROR
    assert main(["solve", str(tmp_path / "missing.txt")]) == EXIT_ERROR
    with pytest.raises(SystemExit) as err:
        main(["solve-ext", "x", "--algo", "nope"])
    assert err.value.code == EXIT_ERROR
    capsys.readouterr()


def test_cli_fit_and_sweep(tmp_path, capsys):
    samples = tmp_path / "s.txt"
    samples.write_text("\n".join(f"{w} {0.1 * w ** 1.2 + 0.3}" for w in (1.5, 2, 3, 4, 5, 6)))
    assert main(["fit", str(samples)]) == EXIT_OK
    assert "best = power" in capsys.readouterr().out
    spec = _spec(tmp_path, algos="local")
    assert main(["sweep", str(spec), "--out", str(tmp_path / "o")]) == EXIT_OK
    assert (tmp_path / "o" / "runs.csv").exists()


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "fogdc", "gen", "--seed", "1", "--k", "1"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "format" in res.stdout
    assert not math.isnan(loads_instance(res.stdout).users[0].c_total)


def test_shipped_sweep_files_parse():
    from pathlib import Path
    files = sorted((Path(__file__).resolve().parents[1] / "sweeps").glob("*.ini"))
    assert files
    for f in files:
        spec = bench.parse_sweep(f.read_text())
        assert spec.seeds and spec.values and spec.algos
