"""Command-line interface: ``sinkmatch {solve,sim,eval,bench}``.

Exit codes: 0 success, 1 usage error, 2 format or input error,
3 numerical failure.
"""

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import io
from .exceptions import (FormatError, InvalidGroundTruth, InvalidInput, NumericalUnderflow,
                         SinkmatchError)
from .fragments import MarginStrategy
from .ot import SolverConfig, exact_emd_oracle, sinkhorn_bregman, transport_cost
from .retrieval import (MatchConfig, Method, SimilarityMatrix, batch_similarity, recall_report,
                        resolve_threads)

EXIT_OK, EXIT_USAGE, EXIT_FORMAT, EXIT_NUMERICAL = 0, 1, 2, 3


@dataclass(frozen=True)
class RunConfig:
    lam: float = 0.02
    margin_phi: float = 0.05
    tau: float = 0.1
    iterations: int = 3
    eps: float = 1e-6
    margins: str = "uni"
    method: str = "omit"
    partial: bool = True
    log_domain: str = "auto"

    @classmethod
    def from_args(cls, args):
        return cls(lam=args.lam, margin_phi=args.phi, tau=args.tau, iterations=args.iters,
                   eps=args.eps, margins=args.margins, method=args.method,
                   partial=args.partial == "on", log_domain=args.log_domain)

    def solver(self):
        return SolverConfig(lam=self.lam, max_iterations=self.iterations,
                            convergence_tol=self.eps, log_domain=self.log_domain)

    def match(self):
        return MatchConfig(solver=self.solver(), tau=self.tau,
                           margins=MarginStrategy(self.margins))

    def resolved_method(self):
        method = Method.parse(self.method)
        if method is Method.OMIT and not self.partial:
            return Method.OMIT_NAIVE
        return method

    def metadata(self):
        meta = asdict(self)
        return {"lambda": meta.pop("lam"), "phi": meta.pop("margin_phi"), **meta}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_run_flags(p):
    d = RunConfig()
    p.add_argument("--lambda", dest="lam", type=float, default=d.lam,
                   help="entropic regularization weight")
    p.add_argument("--phi", type=float, default=d.margin_phi, help="triplet-loss margin")
    p.add_argument("--tau", type=float, default=d.tau, help="dustbin cost scale")
    p.add_argument("--iters", type=int, default=d.iterations, help="maximum Sinkhorn sweeps")
    p.add_argument("--eps", type=float, default=d.eps, help="convergence tolerance")
    p.add_argument("--margins", choices=["uni", "intra", "inter", "norm"], default=d.margins)
    p.add_argument("--method", choices=["omit", "omit-naive", "vse", "cam", "pem"],
                   default=d.method)
    p.add_argument("--partial", choices=["on", "off"], default="on")
    p.add_argument("--log-domain", choices=["auto", "on", "off"], default=d.log_domain)
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads (SINKMATCH_THREADS overrides)")
    p.add_argument("--output", help="write the main result here instead of stdout")


def build_parser():
    parser = _Parser(prog="sinkmatch",
                     description="Set-to-set matching with entropic optimal transport.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve one transport problem from a cost CSV")
    p.add_argument("cost_csv")
    p.add_argument("--oracle", action="store_true", help="use the exact small-instance solver")
    _add_run_flags(p)

    p = sub.add_parser("sim", help="similarity matrix between two embedding files")
    p.add_argument("images")
    p.add_argument("captions")
    _add_run_flags(p)

    p = sub.add_parser("eval", help="recall@K report for a similarity CSV")
    p.add_argument("sims_csv")
    p.add_argument("truth_jsonl")
    p.add_argument("--meta", help="metadata JSON from `sim` giving row/column ids")
    _add_run_flags(p)

    p = sub.add_parser("bench", help="time similarity methods over all pairs")
    p.add_argument("images")
    p.add_argument("captions")
    p.add_argument("--methods", default="vse,cam,omit",
                   help="comma-separated methods to time")
    _add_run_flags(p)
    return parser


def _emit(text, path):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dump(obj):
    return json.dumps(obj, indent=2) + "\n"


def cmd_solve(args, run):
    cost = io.read_matrix_csv(args.cost_csv)
    if args.oracle:
        plan, distance = exact_emd_oracle(cost)
        solver = "exact"
    else:
        plan = sinkhorn_bregman(cost, cfg=run.solver())
        distance = transport_cost(plan, cost)
        solver = "sinkhorn"
    result = {
        "plan": plan.values.tolist(),
        "distance": distance,
        "similarity": 1.0 - distance,
        "converged": bool(plan.converged),
        "iterations": int(plan.iterations_used),
        "solver": solver,
        "metadata": run.metadata(),
    }
    _emit(_dump(result), args.output)


def cmd_sim(args, run):
    images = io.read_embeddings(args.images)
    captions = io.read_embeddings(args.captions)
    threads = resolve_threads(args.threads)
    start = time.perf_counter()
    sims = batch_similarity(images, captions, run.resolved_method(), run.match(), threads)
    elapsed = time.perf_counter() - start
    meta = {
        "method": sims.method.value,
        "metadata": run.metadata(),
        "threads": threads,
        "wall_time_seconds": elapsed,
        "row_ids": sims.row_ids,
        "col_ids": sims.col_ids,
    }
    _emit(io.format_matrix_csv(sims.values), args.output)
    # keep stdout clean for the CSV when it goes there
    (sys.stdout if args.output else sys.stderr).write(_dump(meta))


def cmd_eval(args, run):
    values = io.read_matrix_csv(args.sims_csv)
    row_ids = col_ids = None
    if args.meta:
        with open(args.meta) as fh:
            meta = json.load(fh)
        row_ids, col_ids = meta["row_ids"], meta["col_ids"]
    sims = SimilarityMatrix.from_array(values, run.resolved_method(), row_ids, col_ids)
    report = recall_report(sims, io.read_truth_jsonl(args.truth_jsonl))
    _emit(_dump({**report.to_dict(), "metadata": run.metadata()}), args.output)


def cmd_bench(args, run):
    images = io.read_embeddings(args.images)
    captions = io.read_embeddings(args.captions)
    threads = resolve_threads(args.threads)
    pairs = len(images) * len(captions)
    methods = {}
    for name in [m.strip() for m in args.methods.split(",") if m.strip()]:
        method = Method.parse(name)
        start = time.perf_counter()
        batch_similarity(images, captions, method, run.match(), threads)
        total = time.perf_counter() - start
        methods[method.value] = {"total_seconds": total, "per_pair_seconds": total / pairs,
                                 "pairs": pairs}
    _emit(_dump({"methods": methods, "threads": threads, "metadata": run.metadata()}),
          args.output)


COMMANDS = {"solve": cmd_solve, "sim": cmd_sim, "eval": cmd_eval, "bench": cmd_bench}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        run = RunConfig.from_args(args)
        run.match()
    except (InvalidInput, ValueError) as exc:
        parser.error(str(exc))
    try:
        COMMANDS[args.command](args, run)
    except NumericalUnderflow as exc:
        print(f"sinkmatch: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FormatError, InvalidInput, InvalidGroundTruth, SinkmatchError, KeyError) as exc:
        print(f"sinkmatch: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        print(f"sinkmatch: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
