"""
Command line entry point of hegemm.

    python hegemm_cli.py multiply --algo hegmm-en a.txt b.txt
    python hegemm_cli.py diagonals --transform eps --k 1 --dims 5x3 --order col
    python hegemm_cli.py bench --cases 200 --format csv --out report.csv
    python hegemm_cli.py block-multiply --plan p2 a.txt b.txt

Exit status is 0 on success, 1 on usage or configuration errors, 2 on
dimension or capacity errors, 3 on arithmetic overflow and 4 on unreadable
files.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import TextIO

from costmodel_bench import CampaignConfig, CostModel, ReportFormat, emit_report, estimate_cost, run_campaign
from hegemm_errors import HegemmError, MatrixFormatError, UsageError
from hegmm_algos import Algorithm, BlockPlan, blocked_mm, hegmm, multiply
from lintrans import TransformKind, count_nonzero_diagonals, plan_for, theorem_bound, tight_bound
from matrix_core import FlattenOrder
from matrix_io import format_matrix, is_json_path, read_cuts, read_matrix
from simd_backend import BackendConfig, EmulatedBackend

log = logging.getLogger(__name__)

ORDERS = {"col": FlattenOrder.COLUMN_MAJOR, "row": FlattenOrder.ROW_MAJOR}


class ArgumentParser(argparse.ArgumentParser):
    """Reports usage errors as :class:`UsageError` instead of exiting with status 2."""

    def error(self, message):
        raise UsageError(message)


def _dims(text: str) -> tuple[int, int]:
    try:
        rows, cols = (int(part) for part in text.lower().split("x"))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected ROWSxCOLS, got '{text}'") from e
    if rows < 1 or cols < 1:
        raise argparse.ArgumentTypeError(f"dimensions must be positive, got '{text}'")
    return rows, cols


def _algorithms(text: str) -> tuple[Algorithm, ...]:
    try:
        return tuple(Algorithm.parse(name.strip()) for name in text.split(",") if name.strip())
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="hegemm", description="Homomorphic matrix multiplication on an op-counting slot emulator.")
    parser.add_argument("--slots", type=int, default=None, help="slot count N (default: $HEGEMM_SLOTS or 4096)")
    parser.add_argument("--modulus", type=int, default=None, help="reduce slot arithmetic modulo this value")
    parser.add_argument("--seed", type=int, default=0, help="random seed for bench")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    subparsers = parser.add_subparsers(dest="command", parser_class=ArgumentParser)

    algorithm_names = [algorithm.value for algorithm in Algorithm]

    multiply_parser = subparsers.add_parser("multiply", help="multiply two matrix files")
    multiply_parser.add_argument("--algo", choices=algorithm_names, default=Algorithm.HEGMM.value)
    multiply_parser.add_argument("--order", choices=["auto", *ORDERS], default="auto")
    multiply_parser.add_argument(
        "--encrypted-preprocessing", action="store_true", help="hegmm: apply sigma and tau to ciphertexts"
    )
    _add_output_arguments(multiply_parser)

    block_parser = subparsers.add_parser("block-multiply", help="multiply two matrix files block by block")
    block_parser.add_argument("--plan", default="p1", help="p1, p2 or a cuts file")
    block_parser.add_argument("--algo", choices=algorithm_names, default=Algorithm.HEGMM_EN.value)
    block_parser.add_argument("--order", choices=["auto", *ORDERS], default="auto")
    _add_output_arguments(block_parser)

    diagonals_parser = subparsers.add_parser("diagonals", help="show the diagonal plan of a transform")
    diagonals_parser.add_argument("--transform", choices=["sigma", "tau", "eps", "omega"], required=True)
    diagonals_parser.add_argument("--dims", type=_dims, required=True, help="result shape ROWSxCOLS")
    diagonals_parser.add_argument("--k", type=int, default=0, help="shift of eps and omega")
    diagonals_parser.add_argument("--l", type=int, default=None, help="period l of eps and omega")
    diagonals_parser.add_argument("--order", choices=list(ORDERS), default="col")
    diagonals_parser.add_argument("--format", choices=["table", "json"], default="table")

    bench_parser = subparsers.add_parser("bench", help="run a randomized comparison campaign")
    bench_parser.add_argument("--cases", type=int, default=CampaignConfig.cases)
    bench_parser.add_argument("--dim-lo", type=int, default=CampaignConfig.dim_lo)
    bench_parser.add_argument("--dim-hi", type=int, default=CampaignConfig.dim_hi)
    bench_parser.add_argument("--algos", type=_algorithms, default=tuple(Algorithm), help="comma separated")
    bench_parser.add_argument("--value-range", type=int, default=CampaignConfig.value_range)
    bench_parser.add_argument("--workers", type=int, default=CampaignConfig.workers)
    bench_parser.add_argument("--format", choices=[f.value for f in ReportFormat], default=ReportFormat.CSV.value)
    bench_parser.add_argument("--out", default=None, help="report file (default stdout)")
    bench_parser.add_argument("--cost-model", default=None, help="JSON file with cost weights")
    return parser


def _add_output_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("a", help="left matrix file")
    parser.add_argument("b", help="right matrix file")
    parser.add_argument("--out", default=None, help="result file (default stdout)")
    parser.add_argument("--stats", choices=["auto", "json", "table"], default="auto")
    parser.add_argument("--cost-model", default=None, help="JSON file with cost weights")


def _backend(args) -> EmulatedBackend:
    return EmulatedBackend(BackendConfig.from_env(args.slots, args.modulus))


def _order(args) -> FlattenOrder | None:
    return ORDERS.get(args.order)


def _write_result(text: str, path: str | None, stdout: TextIO):
    if path is None:
        stdout.write(text)
        return
    with open(path, "w", encoding="utf-8") as file:
        file.write(text)
    log.info("Wrote %s", path)


def _stats_document(backend: EmulatedBackend, model: CostModel) -> dict:
    stats = backend.stats()
    cost = estimate_cost(stats, model)
    document = stats.as_dict()
    document.update(
        n_add=stats.n_add,
        n_mult_cc=stats.n_mult_cc,
        n_mult_cp=stats.n_mult_cp,
        n_rot=stats.n_rot,
        client_ms=round(cost.client_ms, 6),
        cloud_ms=round(cost.cloud_ms, 6),
        total_ms=round(cost.total_ms, 6),
        peak_ciphertexts=backend.peak_live_ciphertexts,
        memory_slots=backend.peak_live_ciphertexts * backend.slot_count,
    )
    return document


def _print_table(rows: list[tuple[str, object]], stream: TextIO):
    width = max(len(name) for name, _ in rows)
    for name, value in rows:
        stream.write(f"{name.ljust(width)}  {value}\n")


def _report_stats(args, backend: EmulatedBackend, stderr: TextIO):
    model = CostModel.load(args.cost_model) if args.cost_model else CostModel()
    document = _stats_document(backend, model)
    as_json = args.stats == "json" or (args.stats == "auto" and not stderr.isatty())
    if as_json:
        stderr.write(json.dumps(document) + "\n")
    else:
        _print_table(list(document.items()), stderr)


def _multiply(args, stdout: TextIO, stderr: TextIO) -> int:
    a, b = read_matrix(args.a), read_matrix(args.b)
    backend = _backend(args)
    algorithm = Algorithm.parse(args.algo)
    if args.encrypted_preprocessing:
        if algorithm is not Algorithm.HEGMM:
            raise UsageError("--encrypted-preprocessing applies to hegmm only")
        product = hegmm(a, b, backend, _order(args) or FlattenOrder.COLUMN_MAJOR, encrypted_preprocessing=True)
    else:
        product = multiply(algorithm, a, b, backend, _order(args))
    _write_result(format_matrix(product, args.out is not None and is_json_path(args.out)), args.out, stdout)
    _report_stats(args, backend, stderr)
    return 0


def _block_multiply(args, stdout: TextIO, stderr: TextIO) -> int:
    a, b = read_matrix(args.a), read_matrix(args.b)
    m, l, n = a.rows, a.cols, b.cols
    if args.plan.lower() == "p1":
        plan = BlockPlan.p1(m, l, n)
    elif args.plan.lower() == "p2":
        plan = BlockPlan.p2(m, l, n)
    else:
        plan = read_cuts(args.plan)
    backend = _backend(args)
    product = blocked_mm(a, b, plan, Algorithm.parse(args.algo), backend, _order(args))
    _write_result(format_matrix(product, args.out is not None and is_json_path(args.out)), args.out, stdout)
    _report_stats(args, backend, stderr)
    return 0


def _transform_kind(args) -> TransformKind:
    rows, cols = args.dims
    order = ORDERS[args.order]
    try:
        if args.transform == "sigma":
            return TransformKind.sigma(rows, cols, order)
        if args.transform == "tau":
            return TransformKind.tau(rows, cols, order)
        if args.transform == "eps":
            return TransformKind.eps(args.k, rows, args.l or cols, cols, order)
        return TransformKind.omega(args.k, args.l or rows, rows, cols, order)
    except ValueError as e:
        raise UsageError(str(e)) from e


def _diagonals(args, stdout: TextIO) -> int:
    kind = _transform_kind(args)
    plan = plan_for(kind)
    document = {
        "transform": kind.describe(),
        "offsets": plan.offsets,
        "mask_weights": [entry.weight for entry in plan.entries],
        "mask_densities": [round(entry.weight / plan.output_len, 6) for entry in plan.entries],
        "count": count_nonzero_diagonals(kind),
        "bound": theorem_bound(kind),
        "tight_bound": tight_bound(kind),
    }
    if args.format == "json":
        stdout.write(json.dumps(document) + "\n")
    else:
        rows = [(name, value) for name, value in document.items() if not isinstance(value, list)]
        _print_table(rows, stdout)
        stdout.write("offset  weight  density\n")
        for offset, weight, density in zip(document["offsets"], document["mask_weights"], document["mask_densities"]):
            stdout.write(f"{offset:+6d}  {weight:6d}  {density:.6f}\n")
    return 0


def _bench(args, stdout: TextIO, stderr: TextIO) -> int:
    config = CampaignConfig(
        cases=args.cases,
        dim_lo=args.dim_lo,
        dim_hi=args.dim_hi,
        seed=args.seed,
        algorithms=args.algos,
        slot_count=BackendConfig.from_env(args.slots, args.modulus).slot_count,
        value_range=args.value_range,
        workers=args.workers,
        plaintext_modulus=args.modulus,
    )
    model = CostModel.load(args.cost_model) if args.cost_model else CostModel()
    result = run_campaign(config, model=model)
    report_format = ReportFormat(args.format)
    if args.out is None:
        emit_report(result, report_format, stdout)
    else:
        with open(args.out, "w", encoding="utf-8", newline="") as file:
            emit_report(result, report_format, file)
        log.info("Wrote report %s", args.out)
    inexact = sum(1 for report in result.reports for run in report.runs if not run.exact)
    if inexact:
        stderr.write(f"hegemm: {inexact} inexact results\n")
        return 1
    return 0


def main(argv: list[str] | None = None, stdout: TextIO | None = None, stderr: TextIO | None = None) -> int:
    """
    Run one subcommand.

    :param argv: Arguments without the program name, defaults to ``sys.argv[1:]``.
    :return int: Exit status.
    """
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(sys.argv[1:] if argv is None else argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
    except UsageError as e:
        stderr.write(parser.format_usage())
        stderr.write(f"hegemm: error: {e}\n")
        return e.exit_status
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 0

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        if args.command == "multiply":
            return _multiply(args, stdout, stderr)
        if args.command == "block-multiply":
            return _block_multiply(args, stdout, stderr)
        if args.command == "diagonals":
            return _diagonals(args, stdout)
        return _bench(args, stdout, stderr)
    except HegemmError as e:
        stderr.write(f"hegemm: error: {e}\n")
        return e.exit_status
    except OSError as e:
        stderr.write(f"hegemm: error: {e}\n")
        return MatrixFormatError.exit_status


if __name__ == "__main__":
    sys.exit(main())
