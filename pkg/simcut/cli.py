"""Command-line entry points: solve, prove, oracle and roundtest.

Exit codes: 0 success, 1 usage / IO / validation error, 2 every fixing
infeasible, 3 prover failure (refuted or out of budget).
"""

import argparse
import logging
import os
import sys
import time
from typing import List, Literal, Optional

import numpy as np
from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, model_validator

from simcut.errors import AllFixingsInfeasible, ProverBudgetExhausted, SimcutError
from simcut.instance import brute_force_opt, cut_matrix, load_instance
from simcut.lasserre import build_constraints
from simcut.pipeline import PipelineConfig, enumerate_fixings, resolve_targets, run
from simcut.preprocess import run_preprocess
from simcut.prover import ProverConfig, certify
from simcut.report import envelope, error_envelope, write_report
from simcut.rounding import RoundingFunction, draw_samples, inputs_from_moments, marginal_check
from simcut.sdpsolver import solve

logger = logging.getLogger("simcut.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_PROVER = 3

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


# --- Pydantic Models ---

class CliConfig(BaseModel):
    subcommand: Literal["solve", "prove", "oracle", "roundtest"]
    instance: Optional[str] = Field(None, description="Instance JSON path.")
    output: Optional[str] = Field(None, description="Report path; stdout when omitted.")
    seed: int = Field(0, ge=0)
    log_level: str = Field("INFO")
    threads: int = Field(1, ge=1)
    f_r: str = Field("paper", description="Rounding function: paper, identity or 'p:c,...'.")
    include_leaves: bool = Field(False)
    samples: int = Field(100_000, ge=1, description="Monte Carlo samples for roundtest.")

    @model_validator(mode="after")
    def _instance_needed(self):
        if self.subcommand in ("solve", "oracle") and not self.instance:
            raise ValueError(f"{self.subcommand} needs --instance")
        return self


def _default_threads() -> int:
    env = os.getenv("SIMCUT_THREADS")
    return int(env) if env else (os.cpu_count() or 1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simcut", description="Simultaneous Max-Cut toolkit")
    parser.add_argument("--log-level", default=os.getenv("SIMCUT_LOG_LEVEL", "INFO"))
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--output", "-o")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--f-r", dest="f_r", default="paper")

    solve_p = sub.add_parser("solve", help="run the full pipeline on an instance")
    common(solve_p)
    solve_p.add_argument("--instance", required=True)
    solve_p.add_argument("--epsilon", type=float, default=0.1)
    solve_p.add_argument("--r-base", type=int, default=2)
    solve_p.add_argument("--cond-edges-cap", type=int, default=2)
    solve_p.add_argument("--num-samples", type=int, default=200)
    solve_p.add_argument("--max-t", type=int, default=6)
    solve_p.add_argument("--max-s-star", type=int, default=16)
    solve_p.add_argument("--h-enumeration", choices=["exhaustive", "planted", "sampled"], default="exhaustive")
    solve_p.add_argument("--planted", help="comma-separated 0/1 values of a known optimum, vertex 1 first")
    solve_p.add_argument("--h-samples", type=int, default=64)
    solve_p.add_argument("--postprocess", choices=["exhaustive", "perturb"], default="exhaustive")
    solve_p.add_argument("--delta", type=float, default=None)
    solve_p.add_argument("--enumerate-branches", action="store_true")

    prove_p = sub.add_parser("prove", help="certify the per-edge rounding ratio")
    common(prove_p)
    prove_p.add_argument("--alpha", type=float, default=0.8780)
    prove_p.add_argument("--q-floor", type=float, default=1e-4)
    prove_p.add_argument("--max-boxes", type=int, default=5_000_000)
    prove_p.add_argument("--max-depth", type=int, default=60)
    prove_p.add_argument("--batch-size", type=int, default=4096)
    prove_p.add_argument("--no-symmetry", action="store_true")
    prove_p.add_argument("--include-leaves", action="store_true")

    oracle_p = sub.add_parser("oracle", help="exact optimum by brute force")
    common(oracle_p)
    oracle_p.add_argument("--instance", required=True)

    round_p = sub.add_parser("roundtest", help="rounding marginal and concentration diagnostics")
    common(round_p)
    round_p.add_argument("--instance")
    round_p.add_argument("--samples", type=int, default=100_000)
    round_p.add_argument("--points", type=int, default=16)
    round_p.add_argument("--epsilon", type=float, default=0.1)
    round_p.add_argument("--num-samples", type=int, default=500)
    return parser


# --- subcommands ---

def _cmd_solve(args, cfg: CliConfig, fr: RoundingFunction) -> dict:
    inst = load_instance(cfg.instance)
    pcfg = PipelineConfig(
        epsilon=args.epsilon, r_base=args.r_base, cond_edges_cap=args.cond_edges_cap,
        num_samples=args.num_samples, seed=cfg.seed, max_t=args.max_t, max_s_star=args.max_s_star,
        h_enumeration=args.h_enumeration, h_samples=args.h_samples, postprocess=args.postprocess,
        delta=args.delta, enumerate_branches=args.enumerate_branches, threads=cfg.threads,
    )
    planted = None
    if args.planted:
        planted = np.array([int(b) for b in args.planted.split(",")], dtype=np.int8)
        if planted.size != inst.n or np.any((planted != 0) & (planted != 1)):
            raise ValueError(f"--planted needs {inst.n} values in {{0, 1}}")
    report = run(inst, pcfg, planted=planted, fr=fr)
    return envelope("solve", report)


def _cmd_prove(args, cfg: CliConfig, fr: RoundingFunction) -> dict:
    pcfg = ProverConfig(
        alpha=args.alpha, q_floor=args.q_floor, max_boxes=args.max_boxes, max_depth=args.max_depth,
        batch_size=args.batch_size, use_symmetry=not args.no_symmetry, threads=cfg.threads,
    )
    cert = certify(pcfg, fr)
    status = "completed" if cert.proved else "refuted"
    return envelope("prove", cert.to_dict(include_leaves=cfg.include_leaves), status=status)


def _cmd_oracle(args, cfg: CliConfig, fr: RoundingFunction) -> dict:
    inst = load_instance(cfg.instance)
    f, report = brute_force_opt(inst)
    payload = {"n": inst.n, "k": inst.k, "assignment": [int(b) for b in f], "cut": report.to_dict()}
    return envelope("oracle", payload)


def _cmd_roundtest(args, cfg: CliConfig, fr: RoundingFunction) -> dict:
    if not cfg.instance:
        rng = np.random.default_rng(cfg.seed)
        mu = rng.uniform(-1.0, 1.0, size=args.points)
        check = marginal_check(mu, samples=cfg.samples, seed=cfg.seed, fr=fr)
        return envelope("roundtest", {"marginals": check.to_dict(), "rounding": fr.to_dict()})

    inst = load_instance(cfg.instance)
    pcfg = PipelineConfig(epsilon=args.epsilon, seed=cfg.seed, num_samples=args.num_samples)
    inst, _ = resolve_targets(inst, pcfg.brute_force_cap)
    prep = run_preprocess(inst, pcfg.params(inst.k))
    h = enumerate_fixings(prep, pcfg)[0]
    free = prep.free_vertices(inst.n)
    level = min(pcfg.r_base, max(2, len(free)))
    M = solve(build_constraints(inst, prep, h, pcfg.epsilon, level), config=pcfg.solver)
    G = draw_samples(inputs_from_moments(M, seed=cfg.seed), pcfg.num_samples, fr)
    X = np.zeros((G.shape[0], inst.n), dtype=np.int8)
    if h.support:
        X[:, list(h.support)] = np.asarray(h.values, dtype=np.int8)
    if free:
        X[:, list(free)] = G
    values = cut_matrix(inst, X)
    rows = []
    for ell in prep.low:
        mean = float(values[:, ell].mean())
        var = float(values[:, ell].var())
        rows.append({"instance": ell + 1, "mean": mean, "variance": var,
                     "relative_variance": var / mean ** 2 if mean > 0 else None})
    fixing = {str(v + 1): b for v, b in h.as_dict().items()}
    return envelope("roundtest", {"fixing": fixing, "level": level, "concentration": rows, "rounding": fr.to_dict()})


COMMANDS = {"solve": _cmd_solve, "prove": _cmd_prove, "oracle": _cmd_oracle, "roundtest": _cmd_roundtest}


def _emit(report: dict, output: Optional[str], started: Optional[float] = None) -> None:
    if started is not None:
        report["runtime_s"] = round(time.perf_counter() - started, 3)
    text = write_report(report, output)
    if not output:
        print(text)


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO), format=LOG_FORMAT)

    try:
        cfg = CliConfig(
            subcommand=args.subcommand, instance=getattr(args, "instance", None), output=args.output,
            seed=args.seed, log_level=args.log_level, threads=args.threads or _default_threads(), f_r=args.f_r,
            include_leaves=getattr(args, "include_leaves", False), samples=getattr(args, "samples", 100_000),
        )
        fr = RoundingFunction.parse(cfg.f_r)
    except (ValidationError, ValueError) as e:
        logger.error(f"Invalid arguments: {e}")
        _emit(error_envelope(args.subcommand, e), args.output)
        return EXIT_USAGE

    started = time.perf_counter()
    try:
        report = COMMANDS[cfg.subcommand](args, cfg, fr)
    except AllFixingsInfeasible as e:
        logger.error(f"Error in {cfg.subcommand}: {e}", exc_info=True)
        _emit(error_envelope(cfg.subcommand, e), cfg.output, started)
        return EXIT_INFEASIBLE
    except ProverBudgetExhausted as e:
        logger.error(f"Error in {cfg.subcommand}: {e}", exc_info=True)
        _emit(error_envelope(cfg.subcommand, e), cfg.output, started)
        return EXIT_PROVER
    except (SimcutError, ValidationError, OSError, ValueError) as e:
        logger.error(f"Error in {cfg.subcommand}: {e}", exc_info=True)
        _emit(error_envelope(cfg.subcommand, e), cfg.output, started)
        return EXIT_USAGE

    _emit(report, cfg.output, started)
    return EXIT_PROVER if report["status"] == "refuted" else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
