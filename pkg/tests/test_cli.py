import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from pixelflykit import formats
from pixelflykit.cli import main
from pixelflykit.patterns import FlatButterflyParams, flat_butterfly_mask
from pixelflykit.regression import solve_matrix_l1


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def parse_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


class TestGenMask:
    def test_flat_butterfly_to_file(self, tmp_path, capsys):
        path = tmp_path / "fb.pxbf"
        code, out, _ = run(capsys, "gen-mask", "--pattern", "flat-butterfly", "--n", "256", "--block", "32",
                           "--max-stride", "4", "--out", str(path))
        assert code == 0 and out == ""
        assert formats.read_mask(path) == flat_butterfly_mask(FlatButterflyParams(8, 32, 4))

    def test_stdout_round_trip_and_determinism(self, capsys):
        argv = ("gen-mask", "--pattern", "random", "--n", "64", "--block", "8", "--density", "0.3", "--seed", "4")
        _, first, _ = run(capsys, *argv)
        _, second, _ = run(capsys, *argv)
        assert first == second
        assert formats.format_mask(formats.parse_mask(first)) == first

    def test_seed_changes_random_mask(self, capsys):
        base = ("gen-mask", "--pattern", "random", "--n", "64", "--block", "8", "--density", "0.3")
        _, a, _ = run(capsys, *base, "--seed", "1")
        _, b, _ = run(capsys, *base, "--seed", "2")
        assert a != b

    def test_bad_flat_butterfly(self, capsys):
        code, _, err = run(capsys, "gen-mask", "--pattern", "flat-butterfly", "--n", "100", "--block", "32")
        assert code == 1 and err.startswith("error:")


class TestCost:
    def test_report(self, tmp_path, capsys):
        path = tmp_path / "dense.pxbf"
        run(capsys, "gen-mask", "--pattern", "local", "--n", "64", "--block", "32", "--window", "1",
            "--out", str(path))
        code, out, _ = run(capsys, "cost", "--mask", str(path), "--batch", "32")
        (row,) = parse_csv(out)
        assert code == 0 and row["pattern"] == "dense"
        assert int(row["n_blockmem"]) == 128 + 128 * 32 + 64  # (1, 32) cells, dense reads, output writes
        assert int(row["n_flop"]) == 2 * 64 * 64 * 32

    def test_missing_file(self, tmp_path, capsys):
        assert run(capsys, "cost", "--mask", str(tmp_path / "nope.pxbf"))[0] == 1


class TestBench:
    def test_small_bench(self, capsys):
        code, out, _ = run(capsys, "bench", "--n", "128", "--block", "16", "--batch", "8", "--repeats", "3")
        rows = parse_csv(out)
        assert code == 0
        assert [r["pattern"] for r in rows] == ["block-aligned-random", "element-random", "dense", "flat-butterfly"]
        assert all(float(r["measured_ms_mean"]) > 0 for r in rows)


class TestAllocate:
    def test_closed_form(self, capsys):
        code, out, _ = run(capsys, "allocate", "--seq-len", "64", "--dim", "32", "--budget-params", "1000")
        body = json.loads(out)
        assert code == 0 and body["dense_params"] == 64 * 64 + 2 * 32 * 32
        assert body["attention_density"] * 64 * 64 + body["mlp_density"] * 2048 == pytest.approx(1000)

    def test_schema(self, tmp_path, capsys):
        path = tmp_path / "schema.json"
        path.write_text(json.dumps([
            {"type": "attention", "count": 2, "m": 512, "n": 512},
            {"type": "mlp", "count": 2, "m": 512, "n": 1024},
        ]))
        code, out, _ = run(capsys, "allocate", "--schema", str(path), "--budget-fraction", "0.25")
        body = json.loads(out)
        assert code == 0 and set(body["layers"]) == {"attention", "mlp"}
        used = sum(2 * e["compute"] for e in body["layers"].values())
        assert used <= body["budget"]

    def test_needs_inputs(self, capsys):
        assert run(capsys, "allocate")[0] == 1


class TestSelect:
    def test_select(self, capsys):
        code, out, _ = run(capsys, "select", "--m", "1024", "--n", "1024", "--budget-fraction", "0.25")
        body = json.loads(out)
        assert code == 0
        assert body["butterfly_params"] + body["lowrank_params"] <= body["budget"]

    def test_budget_too_small(self, capsys):
        assert run(capsys, "select", "--m", "1024", "--n", "1024", "--budget", "10")[0] == 1


class TestRegress:
    def test_matches_library(self, tmp_path, capsys, rng):
        A, B = rng.random((3, 6)), rng.random((6, 4))
        formats.write_matrix_market(tmp_path / "a.mtx", A)
        formats.write_matrix_market(tmp_path / "b.mtx", B)
        out_path = tmp_path / "m.pxbf"
        code, out, _ = run(capsys, "regress", "--A", str(tmp_path / "a.mtx"), "--B", str(tmp_path / "b.mtx"),
                           "--k", "2", "--out", str(out_path))
        assert code == 0 and out.startswith("residual_l1 ")
        np.testing.assert_array_equal(formats.read_mask(out_path).to_dense(), solve_matrix_l1(A, B, 2))

        _, brute, _ = run(capsys, "regress", "--A", str(tmp_path / "a.mtx"), "--B", str(tmp_path / "b.mtx"),
                          "--k", "2", "--brute-force", "--out", str(tmp_path / "bf.pxbf"))
        assert float(brute.split()[1]) == float(out.split()[1])

    def test_backward(self, tmp_path, capsys, rng):
        formats.write_matrix_market(tmp_path / "c.mtx", rng.standard_normal((3, 5)))
        formats.write_matrix_market(tmp_path / "b.mtx", rng.standard_normal((4, 5)))
        code, out, err = run(capsys, "regress", "--A", str(tmp_path / "c.mtx"), "--B", str(tmp_path / "b.mtx"),
                             "--k", "2", "--backward")
        assert code == 0 and "residual_l1" in err
        assert (formats.parse_mask(out).to_dense().sum(axis=1) == 2).all()


class TestTrainAndSearch:
    def test_train_toy(self, capsys):
        argv = ("train-toy", "--d", "4", "--m", "64", "--samples", "5", "--k", "2", "--steps", "20",
                "--log-every", "5", "--seed", "3")
        code, out, _ = run(capsys, *argv)
        rows = parse_csv(out)
        assert code == 0 and [int(r["step"]) for r in rows] == [0, 5, 10, 15, 20]
        assert run(capsys, *argv)[1] == out

    def test_train_divergence(self, capsys):
        code, _, err = run(capsys, "train-toy", "--d", "4", "--m", "64", "--samples", "5", "--eta", "1e200",
                           "--steps", "10")
        assert code == 1 and "error" in err

    def test_ntk_search(self, capsys):
        code, out, err = run(capsys, "ntk-search", "--d", "16", "--m", "64", "--clusters", "2", "--seeds", "2",
                             "--budget-fraction", "0.3")
        rows = parse_csv(out)
        assert code == 0 and err.startswith("best ")
        assert {r["candidate"] for r in rows} == {"local", "random", "butterfly", "global"}

    def test_expressiveness(self, capsys):
        code, out, err = run(capsys, "expressiveness", "--clusters", "8", "--seeds", "2", "--rank", "4")
        assert code == 0 and len(parse_csv(out)) == 2 and "seeds" in err


class TestVerifyAndExitCodes:
    def test_verify_quick(self, capsys):
        code, out, _ = run(capsys, "verify", "regression", "--quick")
        assert code == 0 and out.startswith("PASS regression")

    def test_usage_error(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["no-such-command"])
        assert info.value.code == 2

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "pixelflykit", "--help"], capture_output=True, text=True)
        assert proc.returncode == 0 and "gen-mask" in proc.stdout
