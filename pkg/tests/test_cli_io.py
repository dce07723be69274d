import json
import subprocess
import sys
from fractions import Fraction as F
from pathlib import Path

import pytest

import otdisint
from otdisint import DiscreteMeasure
from otdisint.bundle import ProblemBundle, bundle_to_json, load_bundle, load_bundle_json
from otdisint.cli import main
from otdisint.commands import UnknownCommand, run_command
from otdisint.errors import LoadError

DATA = Path(otdisint.__file__).parent / "data"
FACTORY = DATA / "factory.json"
INTERP = DATA / "interp_2x2.json"
PRODUCT = DATA / "product.json"


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj) if not isinstance(obj, str) else obj)
    return p


class TestLoad:
    def test_factory(self):
        b = load_bundle([FACTORY])
        assert b.measures["mu"].weights == (F(1, 3),) * 3
        assert b.measures["nu"].weights == (F(1, 6), F(5, 6))
        assert set(b.plans) == {"plan1", "plan2", "plan3", "plan4"}

    def test_empty(self):
        assert load_bundle([]) == ProblemBundle()

    @pytest.mark.parametrize("path", sorted(DATA.glob("*.json")), ids=lambda p: p.name)
    def test_round_trip(self, path):
        b = load_bundle([path])
        again = load_bundle_json(json.loads(json.dumps(bundle_to_json(b))))
        assert again == b

    def test_negative_plan_entry(self, tmp_path):
        p = write(tmp_path, "bad.json", {"rows": ["a", "b"], "cols": ["c"], "mass": [["1/2"], ["-1/2"]]})
        with pytest.raises(LoadError) as exc:
            load_bundle([p])
        assert exc.value.file == str(p)
        assert exc.value.pointer == "/mass/1/0"
        assert "bad.json#/mass/1/0" in str(exc.value)

    def test_pointer_inside_bundle(self, tmp_path):
        p = write(tmp_path, "b.json", {"spaces": {"X": ["a"]}, "measures": {"m": {"space": "X", "weights": {"z": 1}}}})
        with pytest.raises(LoadError) as exc:
            load_bundle([p])
        assert exc.value.pointer == "/measures/m"

    def test_unknown_space_reference(self, tmp_path):
        p = write(tmp_path, "m.json", {"space": "nowhere", "weights": {"a": 1}})
        with pytest.raises(LoadError):
            load_bundle([p])

    def test_invalid_json(self, tmp_path):
        with pytest.raises(LoadError):
            load_bundle([write(tmp_path, "x.json", "{not json")])

    def test_cross_file_reference(self, tmp_path):
        s = write(tmp_path, "X.json", {"labels": ["a", "b"], "dist": [[0, 2], [2, 0]]})
        m = write(tmp_path, "m.json", {"space": "X", "weights": {"a": "1/4", "b": 0.75}})
        b = load_bundle([s, m])
        assert b.measures["m"] == DiscreteMeasure(b.spaces["X"], [F(1, 4), F(3, 4)])

    def test_float_masses_are_exact(self, tmp_path):
        m = write(tmp_path, "m.json", {"space": ["a", "b"], "weights": [0.1, 0.9]})
        w = load_bundle([m]).measures["m"].weights
        assert w == (F(0.1), F(0.9))
        assert sum(w) != 1  # binary 0.1 + 0.9 is not exactly one

    def test_cost_csv(self, tmp_path):
        c = write(tmp_path, "c.csv", "0,1\n1/2,2.5\n")
        assert load_bundle([c]).costs["c"].exact == ((0, 1), (F(1, 2), F(5, 2)))


class TestRunCommand:
    def setup_method(self):
        self.b = load_bundle([FACTORY])

    def test_class(self):
        rep = run_command(self.b, "class", {"plan_a": "plan1", "plan_b": "plan2"})
        assert rep.outputs["equivalent"] is True
        assert not run_command(self.b, "class", {"plan_a": "plan1", "plan_b": "plan3"}).outputs["equivalent"]

    def test_wasserstein_identical(self):
        rep = run_command(self.b, "wasserstein", {"mu": "mu", "nu": "mu"})
        assert rep.outputs["w"] == 0.0

    def test_interpolate_check(self):
        rep = run_command(load_bundle([INTERP]), "interpolate", {"mu0": "mu0", "mu1": "mu1", "depth": 2, "check": True})
        assert rep.checks["constant_speed"]
        assert rep.outputs["frames"][1] == {"t": "1/4", "measure": {"points": [["1/4"], ["15/4"]], "weights": ["1/2", "1/2"]}}

    def test_mk_class(self):
        b = load_bundle([FACTORY])
        rep = run_command(b, "mk-class", {"mu": "mu", "lambda": "lambda_nu", "cost": "c"})
        assert rep.outputs["map"]["x1"] == {"y1": "1/6", "y2": "5/6"}

    def test_foliation(self):
        rep = run_command(load_bundle([PRODUCT]), "foliation-check", {"space": "X", "partition": "fibres", "measure": "mu"})
        assert rep.checks == {"metric_foliation": True, "mmf": True}

    def test_unknown(self):
        with pytest.raises(UnknownCommand):
            run_command(self.b, "teleport", {})

    def test_deterministic(self):
        a = run_command(load_bundle([FACTORY]), "solve", {"mu": "mu", "nu": "nu", "cost": "c"})
        b = run_command(load_bundle([FACTORY]), "solve", {"mu": "mu", "nu": "nu", "cost": "c"})
        assert a.dumps() == b.dumps()
        assert a.inputs_digest == b.inputs_digest
        d = run_command(load_bundle([FACTORY]), "class", {"plan_a": "plan1", "plan_b": "plan2"})
        assert d.inputs_digest != a.inputs_digest


def ot(*args, env=None):
    return subprocess.run([sys.executable, "-m", "otdisint.cli", *map(str, args)], capture_output=True, text=True, env=env)


class TestCLI:
    def test_solve(self):
        r = ot("solve", "--mu", f"{FACTORY}#mu", "--nu", f"{FACTORY}#nu", "--cost", f"{FACTORY}#c")
        assert r.returncode == 0, r.stderr
        out = json.loads(r.stdout)
        assert out["outputs"]["cost_exact"] == "1/2"
        assert out["checks"]["marginals_exact"]
        assert "timing" not in out

    def test_byte_identical(self):
        args = ("class", "--plan", f"{FACTORY}#plan3", "--plan", f"{FACTORY}#plan4")
        a, b = ot(*args), ot(*args)
        assert a.stdout == b.stdout
        assert json.loads(a.stdout)["outputs"]["equivalent"] is False

    def test_infeasible_exit(self, tmp_path):
        m = write(tmp_path, "m.json", {"space": ["a", "b"], "weights": ["1/2", "1/2"]})
        n = write(tmp_path, "n.json", {"space": ["c"], "weights": ["2"]})
        r = ot("solve", "--mu", m, "--nu", n, "--cost", write(tmp_path, "c.csv", "1\n1\n"))
        assert r.returncode == 2
        assert "infeasible" in r.stderr

    def test_invalid_exit(self, tmp_path):
        p = write(tmp_path, "bad.json", {"rows": ["a"], "cols": ["b"], "mass": [["-1"]]})
        r = ot("disintegrate", "--plan", p)
        assert r.returncode == 3
        assert "#/mass/0/0" in r.stderr
        assert r.stdout == ""

    def test_resource_limit_exit(self):
        r = ot("mk-class", "--mu", f"{FACTORY}#mu", "--lambda", f"{FACTORY}#lambda_nu", "--cost", f"{FACTORY}#c", "--search-cap", 1)
        assert r.returncode == 4

    def test_usage_exit(self):
        assert ot("teleport").returncode == 64
        assert ot("solve", "--mu").returncode == 64
        assert ot().returncode == 64
        assert ot("class", "--plan", f"{FACTORY}#plan1").returncode == 64

    def test_ambiguous_file(self):
        r = ot("disintegrate", "--plan", FACTORY)
        assert r.returncode == 3
        assert "PATH#NAME" in r.stderr

    def test_disintegrate(self):
        r = ot("disintegrate", "--plan", f"{FACTORY}#plan1", "--axis", "first")
        out = json.loads(r.stdout)["outputs"]
        assert out["conditionals"]["x1"] == {"y1": "1/2", "y2": "1/2"}
        assert out["marginal"]["weights"] == {"x1": "1/3", "x2": "1/3", "x3": "1/3"}

    def test_interpolate_csv(self, tmp_path):
        csv_path = tmp_path / "frames.csv"
        r = ot("interpolate", "--mu0", f"{INTERP}#mu0", "--mu1", f"{INTERP}#mu1", "--depth", 2, "--check", "--csv", csv_path)
        assert r.returncode == 0
        assert json.loads(r.stdout)["checks"]["constant_speed"]
        assert csv_path.read_text().startswith("t,x0,weight\n")

    def test_counterexample_csv(self):
        r = ot("counterexample", "--n", 8, "--format", "csv")
        lines = r.stdout.splitlines()
        assert lines[0] == "y,y2,gap,w2"
        assert len(lines) == 1 + 8 * 7 // 2

    def test_counterexample_json(self):
        out = json.loads(ot("counterexample").stdout)
        assert out["outputs"]["y_nearest_one"] == "62/63"
        assert out["checks"]["bounded_away_from_zero"]

    def test_in_process_main(self, capsys):
        assert main(["wasserstein", "--mu", f"{FACTORY}#mu", "--nu", f"{FACTORY}#mu"]) == 0
        assert json.loads(capsys.readouterr().out)["outputs"]["w"] == 0.0
