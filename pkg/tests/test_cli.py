import csv
import io
import json

import pytest

from twisted_moments_lab.cli import parse_config, run
from twisted_moments_lab.commands import required_limit
from twisted_moments_lab.config import LabSettings, RunConfig
from twisted_moments_lab.constants import ExitCode, LemmaCheck, Subcommand, XRule


@pytest.mark.parametrize(
    "argv",
    [
        ["moments", "--q-range", "101:200"],
        ["moments", "--q-range", "101:200", "--k", "1.5"],
        ["moments", "--q-range", "200:101", "--k", "2"],
        ["moments", "--q-range", "101:200", "--k", "2", "--x-rule", "fixed"],
        ["mollifier-check", "--x", "10", "--k", "2", "--c0", "40"],
        ["mollifier-check", "--x", "1e6", "--k", "2", "--c0", "1"],
        ["transfer-check", "--x", "10", "--k", "2"],
        ["primes", "--kind", "reciprocal"],
        ["rmf-verify", "--lemma", "lemma-9"],
        ["hecke", "--limit", "0"],
    ],
)
class TestValidation:
    def test_exit_code(self, argv, tmp_path):
        out = tmp_path / "out"
        assert run([*argv, "--out", str(out)]) == ExitCode.VALIDATION
        assert not out.exists()


def test_stdout_when_out_omitted(capsys):
    assert run(["hecke", "--limit", "1000"]) == ExitCode.OK
    report = json.loads(capsys.readouterr().out)
    assert report["verdict"] == "pass"
    assert report["data"]["L1_sym2"] is None


@pytest.mark.parametrize("limit, expected", [(None, 123), (10, 10)])
def test_hecke_limit_default(limit, expected):
    config = RunConfig(subcommand=Subcommand.HECKE, limit=limit)
    assert required_limit(config, LabSettings(hecke_limit=123)) == expected


@pytest.mark.parametrize(
    "alias, lemma",
    [
        ("2.4", LemmaCheck.EVEN_MOMENT),
        ("2.5", LemmaCheck.EULER_PRODUCT),
        ("2.6", LemmaCheck.PARSEVAL),
    ],
)
def test_numbered_lemma_aliases(alias, lemma):
    config, _ = parse_config(["rmf-verify", "--lemma", alias])
    assert config.lemma == lemma
    assert config.out is None


def test_parse_config_defaults():
    config, log_level = parse_config(["moments", "--q-range", "101:200", "--k", "2", "--out", "m.csv"])
    assert config.subcommand == Subcommand.MOMENTS
    assert config.q_range == (101, 200)
    assert config.x_rule == XRule.SQRT
    assert log_level is None


def test_moments_csv_and_plot(tmp_path):
    out, plot = tmp_path / "m.csv", tmp_path / "m.svg"
    argv = ["moments", "--q-range", "101:200", "--k", "2", "--x-rule", "sqrt"]
    assert run([*argv, "--out", str(out), "--plot", str(plot)]) == ExitCode.OK

    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert len(rows) == 21
    assert rows[0]["q"] == "101" and rows[-1]["q"] == "199"
    assert all(abs(float(row["second_moment_check"])) < 1e-9 for row in rows)
    assert plot.read_text().count('class="point"') == 21


def test_hecke_report(tmp_path):
    out = tmp_path / "hecke.json"
    assert run(["hecke", "--limit", "1000", "--out", str(out)]) == ExitCode.OK
    report = json.loads(out.read_text())
    assert report["verdict"] == "pass"
    assert report["data"]["tau"][:3] == [1, -24, 252]


def test_mollifier_check_report(tmp_path):
    out = tmp_path / "moll.json"
    argv = ["mollifier-check", "--x", "1e6", "--k", "2", "--c0", "40", "--mode", "desk"]
    assert run([*argv, "--samples", "500", "--out", str(out)]) == ExitCode.OK

    report = json.loads(out.read_text())
    schedule = report["data"]["schedule"]
    assert schedule["M"] == 2 and schedule["J"] == [1, 2]
    assert report["provenance"]["mode"] == "desk"
    assert report["provenance"]["seed"] == 0


class TestTransferCheck:
    def test_short_polynomial_matches(self, tmp_path):
        out = tmp_path / "transfer.json"
        argv = ["transfer-check", "--q", "10007", "--x", "10", "--k", "2"]
        assert run([*argv, "--out", str(out)]) == ExitCode.OK
        audit = json.loads(out.read_text())["audits"][0]
        assert audit["extra"]["y"] == 5
        assert audit["ratio"] < 1e-8

    def test_long_polynomial_rejected(self, tmp_path):
        argv = ["transfer-check", "--q", "101", "--x", "10", "--k", "2"]
        assert run([*argv, "--out", str(tmp_path / "t.json")]) == ExitCode.VALIDATION


def test_rmf_verify_transfer(tmp_path):
    out = tmp_path / "rmf.json"
    assert run(["rmf-verify", "--lemma", "transfer", "--out", str(out)]) == ExitCode.OK
    report = json.loads(out.read_text())
    assert report["data"]["lemma"] == "transfer"
    assert report["audits"][0]["extra"]["control"]["leakage"] > 1e-6


class TestMomentSweep:
    argv = ["moments", "--q-range", "101:2003", "--k", "2", "--x-rule", "sqrt"]

    def test_one_row_per_prime(self, capsys):
        assert run(self.argv) == ExitCode.OK
        rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
        assert len(rows) == 279
        assert rows[0]["q"] == "101" and rows[-1]["q"] == "2003"

    def test_reruns_are_byte_identical(self, tmp_path):
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"
        argv = ["moments", "--q-range", "101:400", "--k", "2.5"]
        assert run([*argv, "--out", str(first)]) == ExitCode.OK
        assert run([*argv, "--out", str(second)]) == ExitCode.OK
        assert first.read_bytes() == second.read_bytes()
        rows = list(csv.DictReader(io.StringIO(first.read_text())))
        assert all(row["runtime_ms"] == "" for row in rows)


class TestRandomModelVerdict:
    def _check(self, argv, capsys):
        code = run(argv)
        report = json.loads(capsys.readouterr().out)
        assert report["verdict"] in ("pass", "fail")
        assert code == (ExitCode.OK if report["verdict"] == "pass" else ExitCode.AUDIT)
        assert report["data"]["lemma"] == "euler-product"
        assert report["provenance"]["seed"] == 7

    def test_small_sample(self, capsys):
        self._check(["rmf-verify", "--lemma", "2.5", "--samples", "500", "--seed", "7"], capsys)

    @pytest.mark.slow
    def test_full_sample(self, capsys):
        self._check(["rmf-verify", "--lemma", "2.5", "--samples", "100000", "--seed", "7"], capsys)


def test_hecke_provenance(tmp_path):
    out = tmp_path / "hecke.json"
    assert run(["hecke", "--limit", "1000", "--seed", "5", "--out", str(out)]) == ExitCode.OK
    provenance = json.loads(out.read_text())["provenance"]
    assert provenance["seed"] == 5
    assert isinstance(provenance["version"], str) and provenance["version"]


def test_faithful_mollifier_gates_on_est_aj(tmp_path):
    out = tmp_path / "moll.json"
    argv = ["mollifier-check", "--x", "1e6", "--k", "2", "--c0", "2", "--mode", "paper_faithful"]
    assert run([*argv, "--samples", "200", "--out", str(out)]) == ExitCode.AUDIT

    report = json.loads(out.read_text())
    audits = {audit["name"]: audit for audit in report["audits"]}
    assert audits["est_aj"]["verdict"] == "fail"
    assert report["data"]["est_aj"]["estimate"] > 1.0
