import csv
import io
import json
import logging
import os
import pathlib
import tempfile
import unittest
from unittest import mock

from hegemm_cli import main
from matrix_core import naive_matmul
from matrix_io import parse_matrix_text, read_matrix
from simd_backend import SLOTS_ENV_VARIABLE

EXAMPLES = pathlib.Path(__file__).parent.resolve().joinpath("..", "data", "examples")
DATA = pathlib.Path(__file__).parent.resolve().joinpath("..", "data")


def run(*argv):
    stdout, stderr = io.StringIO(), io.StringIO()
    status = main(list(argv), stdout=stdout, stderr=stderr)
    return status, stdout.getvalue(), stderr.getvalue()


class TestMultiplyCommand(unittest.TestCase):
    log = logging.getLogger(__name__)

    def test_multiply(self):
        a_path, b_path = str(EXAMPLES / "tall_a.txt"), str(EXAMPLES / "tall_b.txt")
        status, out, err = run("multiply", "--algo", "hegmm", a_path, b_path)
        self.assertEqual(status, 0, err)
        product = parse_matrix_text(out)
        self.assertEqual(product.shape, (5, 4))
        self.assertEqual(product, naive_matmul(read_matrix(a_path), read_matrix(b_path)))
        stats = json.loads(err)
        self.assertEqual(stats["cloud_mult_cc"], 3)
        self.assertGreater(stats["total_ms"], 0)

    def test_multiply_enhanced(self):
        a_path, b_path = str(EXAMPLES / "narrow_a.txt"), str(EXAMPLES / "narrow_b.txt")
        status, out, err = run("multiply", "--algo", "hegmm-en", a_path, b_path)
        self.assertEqual(status, 0, err)
        self.assertEqual(parse_matrix_text(out), naive_matmul(read_matrix(a_path), read_matrix(b_path)))
        self.assertEqual(json.loads(err)["cloud_mult_cc"], 2)

    def test_encrypted_preprocessing(self):
        a_path, b_path = str(EXAMPLES / "tall_a.txt"), str(EXAMPLES / "tall_b.txt")
        status, out, err = run("multiply", "--encrypted-preprocessing", "--order", "row", a_path, b_path)
        self.assertEqual(status, 0, err)
        self.assertEqual(parse_matrix_text(out), naive_matmul(read_matrix(a_path), read_matrix(b_path)))
        self.assertGreater(json.loads(err)["client_rot"], 0)
        status, _, _ = run("multiply", "--encrypted-preprocessing", "--algo", "hegmm-en", a_path, b_path)
        self.assertEqual(status, 1)

    def test_json_output_file(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            out_path = pathlib.Path(tmpdir, "c.json")
            status, out, err = run(
                "multiply", str(EXAMPLES / "wide_a.json"), str(EXAMPLES / "wide_b.json"), "--out", str(out_path)
            )
            self.assertEqual(status, 0, err)
            self.assertEqual(out, "")
            document = json.loads(out_path.read_text(encoding="utf-8"))
        self.assertEqual((document["rows"], document["cols"]), (2, 7))

    def test_stats_table(self):
        status, _, err = run("multiply", "--stats", "table", str(EXAMPLES / "square_a.txt"), str(EXAMPLES / "square_b.txt"))
        self.assertEqual(status, 0)
        self.assertIn("cloud_mult_cc", err)
        self.assertIn("memory_slots", err)

    def test_dimension_mismatch(self):
        status, _, err = run("multiply", str(EXAMPLES / "tall_a.txt"), str(EXAMPLES / "narrow_b.txt"))
        self.assertEqual(status, 2)
        self.assertIn("hegemm: error", err)

    def test_capacity(self):
        status, _, _ = run("--slots", "8", "multiply", str(EXAMPLES / "tall_a.txt"), str(EXAMPLES / "tall_b.txt"))
        self.assertEqual(status, 2)

    def test_unreadable_files(self):
        status, _, _ = run("multiply", str(EXAMPLES / "missing.txt"), str(EXAMPLES / "tall_b.txt"))
        self.assertEqual(status, 4)
        with tempfile.TemporaryDirectory() as tmpdir:
            broken = pathlib.Path(tmpdir, "broken.txt")
            broken.write_text("2 2\n1 x\n3 4\n", encoding="utf-8")
            status, _, _ = run("multiply", str(broken), str(EXAMPLES / "tall_b.txt"))
        self.assertEqual(status, 4)

    def test_slots_from_env(self):
        with mock.patch.dict(os.environ, {SLOTS_ENV_VARIABLE: "8"}):
            status, _, _ = run("multiply", str(EXAMPLES / "tall_a.txt"), str(EXAMPLES / "tall_b.txt"))
        self.assertEqual(status, 2)
        with mock.patch.dict(os.environ, {SLOTS_ENV_VARIABLE: "32"}):
            status, _, _ = run("multiply", str(EXAMPLES / "tall_a.txt"), str(EXAMPLES / "tall_b.txt"))
        self.assertEqual(status, 0)
        with mock.patch.dict(os.environ, {SLOTS_ENV_VARIABLE: "lots"}):
            status, _, _ = run("multiply", str(EXAMPLES / "tall_a.txt"), str(EXAMPLES / "tall_b.txt"))
        self.assertEqual(status, 1)


class TestUsage(unittest.TestCase):
    def test_no_arguments(self):
        status, _, err = run()
        self.assertEqual(status, 1)
        self.assertIn("usage", err)

    def test_bad_flag(self):
        status, _, err = run("multiply", "--frobnicate", "a", "b")
        self.assertEqual(status, 1)
        self.assertIn("hegemm: error", err)

    def test_bad_algorithm(self):
        self.assertEqual(run("multiply", "--algo", "strassen", "a", "b")[0], 1)
        self.assertEqual(run("bench", "--algos", "hegmm,strassen")[0], 1)

    def test_help(self):
        status, _, _ = run("--help")
        self.assertEqual(status, 0)


class TestDiagonalsCommand(unittest.TestCase):
    def test_eps_json(self):
        status, out, _ = run("diagonals", "--transform", "eps", "--k", "1", "--dims", "5x3", "--order", "col", "--format", "json")
        self.assertEqual(status, 0)
        document = json.loads(out)
        self.assertSequenceEqual(document["offsets"], [-10, 5])
        self.assertSequenceEqual(document["mask_weights"], [5, 10])
        self.assertEqual(document["count"], 2)
        self.assertEqual(document["bound"], 2)

    def test_table(self):
        status, out, _ = run("diagonals", "--transform", "sigma", "--dims", "3x3")
        self.assertEqual(status, 0)
        self.assertIn("offset  weight  density", out)

    def test_invalid_shift(self):
        status, _, _ = run("diagonals", "--transform", "eps", "--k", "3", "--dims", "5x3")
        self.assertEqual(status, 1)
        self.assertEqual(run("diagonals", "--transform", "tau", "--dims", "0x3")[0], 1)


class TestBlockMultiplyCommand(unittest.TestCase):
    log = logging.getLogger(__name__)

    def test_cuts_file(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            a_path, b_path = pathlib.Path(tmpdir, "a.txt"), pathlib.Path(tmpdir, "b.txt")
            a_rows = [[(3 * i + j) % 7 - 3 for j in range(12)] for i in range(12)]
            b_rows = [[(i - 2 * j) % 5 for j in range(12)] for i in range(12)]
            for path, rows in ((a_path, a_rows), (b_path, b_rows)):
                path.write_text("12 12\n" + "\n".join(" ".join(map(str, row)) for row in rows) + "\n", encoding="utf-8")
            for plan in (str(DATA / "cuts_uneven_12.txt"), "p1", "p2"):
                status, out, err = run("block-multiply", "--plan", plan, str(a_path), str(b_path))
                self.assertEqual(status, 0, err)
                self.assertEqual(parse_matrix_text(out), naive_matmul(read_matrix(a_path), read_matrix(b_path)))

    def test_mismatched_cuts(self):
        status, _, _ = run("block-multiply", "--plan", str(DATA / "cuts_uneven_12.txt"), str(EXAMPLES / "tall_a.txt"), str(EXAMPLES / "tall_b.txt"))
        self.assertEqual(status, 2)


class TestBenchCommand(unittest.TestCase):
    log = logging.getLogger(__name__)

    def test_csv_file(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            out_path = pathlib.Path(tmpdir, "report.csv")
            status, out, err = run("--seed", "4", "bench", "--cases", "5", "--dim-hi", "6", "--algos", "hegmm,hegmm-en", "--out", str(out_path))
            self.assertEqual(status, 0, err)
            self.assertEqual(out, "")
            with open(out_path, "r", encoding="utf-8", newline="") as file:
                rows = list(csv.DictReader(file))
        self.assertEqual(len(rows), 10)
        self.assertSetEqual({row["algorithm"] for row in rows}, {"hegmm", "hegmm-en"})

    def test_json_stdout(self):
        status, out, _ = run("bench", "--cases", "3", "--dim-hi", "4", "--format", "json")
        self.assertEqual(status, 0)
        document = json.loads(out)
        self.assertEqual(len(document["cases"]), 3)

    def test_invalid_range(self):
        self.assertEqual(run("bench", "--dim-lo", "5", "--dim-hi", "2")[0], 1)
