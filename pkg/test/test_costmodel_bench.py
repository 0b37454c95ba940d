import csv
import io
import json
import logging
import pathlib
import tempfile
import unittest

from hypothesis import given
from hypothesis import strategies as st

from costmodel_bench import (
    CSV_FIELDS,
    CampaignConfig,
    CampaignResult,
    CostModel,
    ReportFormat,
    ShapeCategory,
    classify_shape,
    emit_report,
    estimate_cost,
    load_report,
    run_campaign,
)
from hegemm_errors import ConfigError, MatrixFormatError
from hegmm_algos import Algorithm
from simd_backend import OpStats

counts = st.integers(0, 1000)


@st.composite
def op_stats(draw):
    return OpStats(**{name: draw(counts) for name in OpStats().as_dict()})


class TestCostModel(unittest.TestCase):
    log = logging.getLogger(__name__)

    def test_defaults(self):
        self.assertAlmostEqual(estimate_cost(OpStats(cloud_mult_cc=3)).cloud_ms, 62.622)
        self.assertEqual(estimate_cost(OpStats()).total_ms, 0)

    def test_phases(self):
        stats = OpStats(client_rot=2, cloud_add=4, n_encrypt=2, n_decrypt=1)
        cost = estimate_cost(stats, CostModel())
        self.assertAlmostEqual(cost.client_ms, 2 * 5.350 + 2 * 5.50 + 2.57)
        self.assertAlmostEqual(cost.cloud_ms, 4 * 0.550)

    def test_validation(self):
        with self.assertRaises(ConfigError):
            CostModel(add=-1)
        with self.assertRaises(ConfigError):
            CostModel(rot="fast")

    def test_load(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            path = pathlib.Path(tmpdir, "model.json")
            path.write_text(json.dumps({"rot": 1.0, "mult_cc": 10}), encoding="utf-8")
            model = CostModel.load(str(path))
            self.assertEqual(model.rot, 1.0)
            self.assertEqual(model.add, 0.550)
            path.write_text(json.dumps({"bootstrap": 1.0}), encoding="utf-8")
            with self.assertRaises(ConfigError):
                CostModel.load(str(path))
            path.write_text("{", encoding="utf-8")
            with self.assertRaises(MatrixFormatError):
                CostModel.load(str(path))

    @given(op_stats(), st.sampled_from(["add", "mult_cc", "mult_cp", "rot", "encrypt", "decrypt"]), st.floats(0, 100))
    def test_monotonic(self, stats, weight, increase):
        base = CostModel()
        raised = CostModel(**{**base.__dict__, weight: getattr(base, weight) + increase})
        before, after = estimate_cost(stats, base), estimate_cost(stats, raised)
        self.assertGreaterEqual(after.client_ms, before.client_ms)
        self.assertGreaterEqual(after.cloud_ms, before.cloud_ms)


class TestClassifyShape(unittest.TestCase):
    def test_examples(self):
        self.assertEqual(set(classify_shape(4, 4, 4)), set(ShapeCategory))
        self.assertEqual(classify_shape(2, 6, 5), (ShapeCategory.M_MIN, ShapeCategory.L_MULTIPLE_OF_M))
        self.assertEqual(classify_shape(5, 2, 7), (ShapeCategory.L_MIN,))
        self.assertEqual(classify_shape(5, 4, 2), (ShapeCategory.N_MIN,))
        with self.assertRaises(ValueError):
            classify_shape(0, 1, 1)


class TestCampaign(unittest.TestCase):
    log = logging.getLogger(__name__)

    def test_config_validation(self):
        with self.assertRaises(ConfigError):
            CampaignConfig(dim_lo=5, dim_hi=4)
        with self.assertRaises(ConfigError):
            CampaignConfig(algorithms=())
        with self.assertRaises(ConfigError):
            CampaignConfig(slot_count=100)
        with self.assertRaises(ConfigError):
            CampaignConfig(dim_lo=80, dim_hi=90)

    def test_exact_and_counts(self):
        result = run_campaign(CampaignConfig(cases=200, seed=3))
        self.assertEqual(len(result.reports), 200)
        for report in result.reports:
            for run in report.runs:
                self.assertTrue(run.exact, (report.m, report.l, report.n, run.algorithm))
                self.assertGreater(run.memory_slots, 0)
            self.assertEqual(report.run(Algorithm.HEGMM).stats.cloud_mult_cc, report.l)
            self.assertEqual(report.run(Algorithm.HEGMM_EN).stats.cloud_mult_cc, min(report.m, report.l, report.n))
        self.assertEqual(result.summary["all"].en_not_worse_fraction, 1.0)

    def test_cost_trend(self):
        result = run_campaign(CampaignConfig(cases=500, seed=8, algorithms=(Algorithm.HEGMM, Algorithm.HEGMM_EN, Algorithm.SQUARE_PAD), workers=4))
        for report in result.reports:
            en = report.run(Algorithm.HEGMM_EN).cost.cloud_ms
            plain = report.run(Algorithm.HEGMM).cost.cloud_ms
            if min(report.m, report.l, report.n) < report.l:
                self.assertLessEqual(en, plain, (report.m, report.l, report.n))
        self.assertSetEqual(set(result.summary), {"all", *(category.value for category in ShapeCategory)})
        self.assertEqual(result.summary["all"].cases, 500)
        self.assertEqual(sum(1 for report in result.reports if ShapeCategory.L_MIN in report.categories), result.summary["l-min"].cases)
        self.assertIn("hegmm-en", result.summary["m-min"].average_ratio)

    def test_deterministic(self):
        def render(workers):
            stream = io.StringIO()
            emit_report(run_campaign(CampaignConfig(cases=30, seed=5, workers=workers)), ReportFormat.JSON, stream)
            return stream.getvalue()

        first = render(1)
        self.assertEqual(first, render(1))
        self.assertEqual(first, render(3))

    def test_resampling(self):
        config = CampaignConfig(cases=20, dim_lo=1, dim_hi=40, seed=1, algorithms=(Algorithm.SQUARE_PAD,), slot_count=256)
        result = run_campaign(config)
        for report in result.reports:
            self.assertLessEqual(max(report.m, report.l, report.n), 16)
        self.assertGreater(result.resampled, 0)


class TestReports(unittest.TestCase):
    def campaign(self, cases, algorithms=tuple(Algorithm)):
        return run_campaign(CampaignConfig(cases=cases, seed=2, dim_hi=6, algorithms=algorithms))

    def test_empty_csv(self):
        stream = io.StringIO()
        emit_report(self.campaign(0), ReportFormat.CSV, stream)
        self.assertEqual(stream.getvalue(), ",".join(CSV_FIELDS) + "\n")

    def test_csv_rows(self):
        stream = io.StringIO()
        emit_report(self.campaign(1, (Algorithm.HEGMM, Algorithm.HEGMM_EN)), ReportFormat.CSV, stream)
        rows = list(csv.DictReader(io.StringIO(stream.getvalue())))
        self.assertEqual(len(rows), 2)
        self.assertSequenceEqual([row["algorithm"] for row in rows], ["hegmm", "hegmm-en"])
        self.assertEqual(rows[0]["exact"], "True")

    def test_json_round_trip(self):
        result = self.campaign(5)
        with tempfile.TemporaryDirectory() as tmpdir:
            path = pathlib.Path(tmpdir, "report.json")
            with open(path, "w", encoding="utf-8") as file:
                emit_report(result, ReportFormat.JSON, file)
            with open(path, "r", encoding="utf-8") as file:
                document = load_report(file)
        self.assertEqual(len(document["cases"]), 5)
        self.assertEqual(document["config"]["seed"], 2)
        self.assertEqual(len(document["cases"][0]["runs"]), 3)

    def test_invalid_report(self):
        with self.assertRaises(MatrixFormatError):
            load_report(io.StringIO(json.dumps({"cases": []})))
        with self.assertRaises(MatrixFormatError):
            load_report(io.StringIO("not json"))

    def test_empty_summary(self):
        result = self.campaign(0)
        self.assertIsInstance(result, CampaignResult)
        self.assertEqual(result.summary["all"].cases, 0)
        self.assertIsNone(result.summary["all"].en_not_worse_fraction)
