"""Command line: exit codes, outputs, byte-level determinism."""

import csv
import io
import json

import pytest

from chshkyber import cli


def run(tmp_path, name, *argv):
    out = tmp_path / name
    code = cli.main([*argv, "--out", str(out)])
    return code, out


class TestExitCodes:
    def test_unknown_flag(self):
        assert cli.main(["chsh", "--bogus"]) == 2

    def test_unknown_subcommand(self):
        assert cli.main(["frobnicate"]) == 2

    def test_bad_strategy(self, capsys):
        assert cli.main(["chsh", "--strategy", "nope"]) == 2
        assert "unknown strategy" in capsys.readouterr().err

    def test_chsh_quantum_ok(self, tmp_path):
        code, out = run(tmp_path, "q.json", "chsh", "--m", "4096", "--seed", "1")
        assert code == 0
        assert json.loads(out.read_text())["verification"]["accepted"]

    def test_chsh_lhv_rejects(self, tmp_path):
        code, _ = run(tmp_path, "l.json", "chsh", "--strategy", "lhv:++++", "--seed", "1")
        assert code == 1

    def test_session_lhv_rejects(self, tmp_path):
        code, out = run(tmp_path, "s.json", "session", "--paramset", "toy", "--channel", "lhv")
        assert code == 1
        data = json.loads(out.read_text())
        assert data["result"]["abort_reason"] == "chsh-reject"
        assert "key_hex" not in out.read_text()

    def test_invalid_promise(self, tmp_path):
        _, t = run(tmp_path, "t.json", "chsh", "--m", "16")
        assert cli.main(["hamiltonian", str(t), "--alpha", "1", "--beta", "0"]) == 2

    def test_epsilon_power_form(self):
        assert cli._epsilon("2^-32") == 2.0 ** -32


class TestOutputs:
    def test_report_csv_stdout(self, capsys):
        assert cli.main(["report", "--format", "csv"]) == 0
        rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
        assert [r["paramset"] for r in rows] == ["kyber512", "kyber768", "kyber1024"]
        assert float(rows[1]["chsh_bits"]) == pytest.approx(241.1, abs=0.1)

    def test_report_directory(self, tmp_path):
        code, out = run(tmp_path, "rep", "report")
        assert code == 0
        names = sorted(p.relative_to(out).as_posix() for p in out.rglob("*") if p.is_file())
        assert names == ["figures/chsh_visibility.png", "figures/kyber1024_security.png",
                         "figures/kyber512_security.png", "figures/kyber768_security.png",
                         "report.json", "table1.csv", "table2.csv"]

    def test_markov(self, tmp_path):
        kernel = tmp_path / "k.csv"
        code, out = run(tmp_path, "m.json", "markov", "--q", "5", "--M", "1",
                        "--noise", "uniform-on:-1,0,1", "--kernel-csv", str(kernel))
        assert code == 0
        data = json.loads(out.read_text())
        assert data["spectral"]["gap"] == pytest.approx(0.460655337, abs=1e-9)
        assert len(kernel.read_text().splitlines()) == 6

    def test_hamiltonian_from_session(self, tmp_path):
        _, s = run(tmp_path, "s.json", "session", "--paramset", "toy", "--m", "64")
        code, out = run(tmp_path, "h.json", "hamiltonian", str(s), "--alpha", "0.5", "--beta", "1")
        assert code == 0
        data = json.loads(out.read_text())
        assert data["pair_count"] == 64 and data["decision"] == "YES"

    def test_estimate(self, tmp_path):
        code, out = run(tmp_path, "e.json", "estimate", "--paramset", "kyber512", "--variant", "Standard")
        assert code == 0
        assert json.loads(out.read_text())["bits"] == 124.7

    def test_campaign_csv(self, tmp_path):
        code, out = run(tmp_path, "c.csv", "campaign", "--paramset", "toy", "--sessions", "5",
                        "--format", "csv")
        assert code == 0
        assert out.read_text().splitlines()[0] == "session_id,accepted,match,e_hat"

    def test_global_flags_before_subcommand(self, tmp_path):
        out = tmp_path / "k.json"
        assert cli.main(["--seed", "3", "--out", str(out), "keygen", "--paramset", "toy"]) == 0
        assert "public_key_hex" in json.loads(out.read_text())


INVOCATIONS = [
    ("keygen", "--paramset", "toy"),
    ("session", "--paramset", "toy"),
    ("campaign", "--paramset", "toy", "--sessions", "4"),
    ("chsh", "--m", "2048"),
    ("markov", "--q", "7", "--M", "3"),
    ("estimate",),
    ("report",),
]


@pytest.mark.parametrize("argv", INVOCATIONS, ids=lambda a: a[0])
def test_same_seed_byte_identical(tmp_path, argv):
    paths = []
    for rep in range(2):
        out = tmp_path / f"run{rep}"
        cli.main([*argv, "--seed", "7", "--out", str(out)])
        paths.append(out)
    files = [sorted(p.rglob("*")) if p.is_dir() else [p] for p in paths]
    assert len(files[0]) == len(files[1]) > 0
    for a, b in zip(*files):
        if a.is_file():
            assert a.read_bytes() == b.read_bytes(), a.name


def test_different_seed_differs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cli.main(["session", "--paramset", "toy", "--seed", "1", "--out", str(a)])
    cli.main(["session", "--paramset", "toy", "--seed", "2", "--out", str(b)])
    assert a.read_bytes() != b.read_bytes()
