from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np
import pytest

from _gen import random_second_order
from qopers.bethe_gl2 import ToroidalParams
from qopers.cli import RunConfig, dump_json, main, parse_point, worker_count
from qopers.connection import RegularSystem
from qopers.errors import InputError
from qopers.numkernel import RationalFunction

SCHEMAS = Path(__file__).resolve().parent.parent / "schemas"


def ex(name):
    return str(SCHEMAS / name)


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(dump_json(obj) if not isinstance(obj, str) else obj)
    return str(p)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestHelpers:
    def test_parse_point(self):
        assert parse_point("1") == 1
        assert parse_point("1+2j") == 1 + 2j
        assert parse_point("[0.5, -1]") == 0.5 - 1j
        with pytest.raises(InputError):
            parse_point("abc")

    def test_run_config(self):
        with pytest.raises(InputError):
            RunConfig(window=0)
        with pytest.raises(InputError):
            RunConfig(format="xml")

    def test_threads(self, monkeypatch):
        monkeypatch.setenv("QOPER_THREADS", "1")
        assert worker_count() == 1
        monkeypatch.setenv("QOPER_THREADS", "100000")
        assert 1 <= worker_count() <= 100000
        monkeypatch.setenv("QOPER_THREADS", "many")
        with pytest.raises(InputError):
            worker_count()


class TestCheckApparent:
    def test_integer_example(self, capsys):
        code, out, _ = run(capsys, "check-apparent", ex("integer_a_oper.json"), "1", "--method", "brute")
        assert code == 0 and json.loads(out)["classification"] == "apparent"

    def test_not_singular(self, capsys):
        code, _, err = run(capsys, "check-apparent", ex("integer_a_oper.json"), "0.7")
        assert code == 65 and "not a singularity" in err

    @pytest.mark.parametrize("apparent", [True, False])
    def test_delta_and_brute_agree(self, tmp_path, capsys, apparent):
        L, s = random_second_order(np.random.default_rng(3), 2, apparent=apparent)
        f = write(tmp_path, "oper.json", L.to_json())
        pt = json.dumps([s.real, s.imag])
        a, _, _ = run(capsys, "check-apparent", f, pt, "--method", "delta")
        b, _, _ = run(capsys, "check-apparent", f, pt, "--method", "brute")
        assert a == b == (0 if apparent else 1)

    def test_writes_output_dir(self, tmp_path, capsys):
        code, out, _ = run(capsys, "check-apparent", ex("integer_a_oper.json"), "1", "--out", str(tmp_path))
        assert code == 0 and out == ""
        assert json.loads((tmp_path / "apparent.json").read_text())["classification"] == "apparent"

    def test_malformed_input(self, tmp_path, capsys):
        bad = write(tmp_path, "bad.json", "{not json")
        assert run(capsys, "check-apparent", bad, "1")[0] == 64
        assert run(capsys, "check-apparent", str(tmp_path / "missing.json"), "1")[0] == 64
        assert run(capsys, "check-apparent", ex("integer_a_oper.json"), "zzz")[0] == 64
        assert run(capsys, "no-such-command")[0] == 64


class TestConnection:
    def test_identity(self, capsys):
        code, out, err = run(capsys, "connection", ex("integer_a_oper.json"), ex("points.json"))
        assert code == 0
        rows = list(csv.reader(io.StringIO(out)))
        assert rows[0][:2] == ["x_re", "x_im"] and len(rows) == 5
        for row in rows[1:]:
            assert abs(float(row[2]) - 1) < 1e-8 and abs(float(row[3])) < 1e-8
        assert json.loads(err)["ellipticity_max_deviation"] < 1e-8

    def test_empty_points(self, capsys):
        code, out, _ = run(capsys, "connection", ex("integer_a_oper.json"), ex("empty_points.json"))
        rows = list(csv.reader(io.StringIO(out)))
        assert code == 0 and len(rows) == 1

    def test_hypergeometric_summary(self, tmp_path, capsys):
        code, _, _ = run(capsys, "connection", ex("hypergeometric_N0.json"), ex("points.json"), "--out", str(tmp_path))
        assert code == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        fit = summary["theta_fit"]
        assert fit["fit_residual"] < 1e-6 and fit["m_top_rel_err"] < 1e-7
        assert (tmp_path / "connection.csv").exists()

    def test_resonant_system(self, tmp_path, capsys):
        c = 1.3
        sys = RegularSystem(0.5, [[RationalFunction(c), RationalFunction(0.0)], [RationalFunction(0.0), RationalFunction(c * 0.5)]])
        f = write(tmp_path, "sys.json", sys.to_json())
        assert run(capsys, "connection", f, ex("points.json"))[0] == 66


class TestCount:
    def test_four_opers(self, capsys):
        code, out, _ = run(capsys, "count-opers", ex("toroidal_params.json"), "1")
        assert code == 0 and json.loads(out)["count"] == 4

    def test_trivial(self, capsys):
        assert json.loads(run(capsys, "count-opers", ex("toroidal_params.json"), "0")[1])["count"] == 1

    def test_reproducible(self, capsys):
        args = ("count-opers", ex("toroidal_params.json"), "2", "--starts", "20", "--seed", "5")
        a = run(capsys, *args)[1]
        b = run(capsys, *args)[1]
        assert a == b and json.loads(a)["lower_bound"]

    def test_resonant_params(self, tmp_path, capsys):
        d = json.loads(Path(ex("toroidal_params.json")).read_text())
        d["q"] = [0.5, 0.0]
        d["d"] = [0.125, 0.0]
        f = write(tmp_path, "res.json", d)
        assert run(capsys, "count-opers", f, "1")[0] == 67

    def test_bad_params(self, tmp_path, capsys):
        f = write(tmp_path, "bad.json", {"q": 1})
        assert run(capsys, "count-opers", f, "1")[0] == 64


class TestGln:
    def test_count(self, capsys):
        out = json.loads(run(capsys, "gln", ex("gln_count.json"), "count")[1])
        assert out == {"unknowns": 7, "equations": 7, "match": True}

    def test_assemble(self, capsys):
        out = json.loads(run(capsys, "gln", ex("gln_n3.json"), "assemble")[1])
        assert max(out["clearing_residuals"]) < 1e-8

    def test_apparent(self, capsys):
        assert json.loads(run(capsys, "gln", ex("gln_n3.json"), "apparent")[1])["all_apparent"]

    def test_bae0(self, capsys):
        out = json.loads(run(capsys, "gln", ex("gln_n3.json"), "bae0")[1])
        assert out["agree"] and out["rewritten_vanishes"]


class TestLimitAndLambda:
    def test_limit(self, capsys):
        code, out, _ = run(capsys, "limit", ex("limit_family_nolog.json"))
        d = json.loads(out)
        assert code == 0 and d["scaled_extrapolated"] < 1e-4 and d["frobenius_holomorphic"]

    def test_lambda(self, capsys):
        code, out, _ = run(capsys, "lambda", ex("unfolded.json"))
        assert code == 0 and json.loads(out)["agree"]


def test_example_params_load():
    d = json.loads(Path(ex("toroidal_params.json")).read_text())
    assert isinstance(ToroidalParams.from_json(d), ToroidalParams)
