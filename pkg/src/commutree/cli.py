"""Command-line driver: instance generation, the two partitioning
phases, point queries, post-hoc verification and statistics export.

Exit codes are a stable contract: 0 success, 1 usage/IO/format errors,
2 parameter set exceeds the feasible set (witness printed), 3
verification failure. Every run appends a JSON-lines manifest record.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
import time

import numpy as np

from . import (instances, mi, phase1, phase2, problem, tree as treemod,
               verification)
from .errors import (CommutreeError, FormatError, OutsideTheta,
                     ThetaExceedsFeasibleSet)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_THETA_EXCEEDS = 2
EXIT_VERIFY_FAIL = 3

DEFAULT_MANIFEST = "commutree-manifest.jsonl"

log = logging.getLogger("commutree")


def _setup_logging():
    level = os.environ.get("COMMUTREE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s "
                               "%(message)s")


def _append_manifest(path, record: dict):
    record = dict(record)
    record["timestamp"] = time.time()
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True, default=str) + "\n")


def _write_events_csv(path, events):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=[
            "iter", "t_wall", "action", "cell_volume", "closed_fraction"])
        writer.writeheader()
        writer.writerows(events)


def _write_certification_csv(path, tree):
    rows = phase2.certification_rows(tree)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=[
            "leaf_id", "status", "e_abs", "e_rel", "rho", "depth"])
        writer.writeheader()
        writer.writerows(rows)


def _parse_theta(text: str) -> np.ndarray:
    try:
        return np.array([float(t) for t in text.replace(",", " ").split()])
    except ValueError as exc:
        raise CommutreeError(f"bad theta {text!r}: {exc}") from None


# ---------------------------------------------------------------------------
# Subcommands.
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    prog, poly, meta = instances.generate_instance(
        args.kind, seed=args.seed, n_r=args.n_r, horizon=args.horizon,
        tightened=(args.mode == "tightened"))
    problem.save_program(prog, poly, args.output, meta=meta)
    print(f"wrote {args.output} (p={prog.p} n={prog.n} m={prog.m})")
    return EXIT_OK


def cmd_partition(args) -> int:
    prog, poly, _ = problem.load_program(args.instance)
    cfg = phase1.Phase1Config(max_iterations=args.max_iterations,
                              deterministic=args.deterministic,
                              worker_count=args.workers)
    cache = mi.CommutationCache()
    try:
        tree = phase1.build_partition(prog, poly, cfg, cache)
    except ThetaExceedsFeasibleSet as exc:
        theta = " ".join(repr(float(v)) for v in exc.witness)
        print(f"parameter set exceeds feasible set: witness theta = "
              f"[{theta}]")
        return EXIT_THETA_EXCEEDS
    treemod.serialize(tree, args.output)
    if args.events:
        _write_events_csv(args.events, tree.events)
    stats = treemod.statistics(tree)
    print(f"wrote {args.output}: {stats.leaf_count} leaves, "
          f"{stats.iteration_count} iterations, "
          f"{stats.runtime:.2f} s")
    return EXIT_OK


def cmd_refine(args) -> int:
    if args.rho_max < 1:
        raise CommutreeError("--rho-max must be >= 1")
    prog, _, _ = problem.load_program(args.instance)
    tree = treemod.deserialize(args.tree)
    cfg = phase2.Phase2Config(
        eps_abs=args.eps_abs, eps_rel=args.eps_rel, rho_max=args.rho_max,
        pi_abs=args.pi_abs, pi_rel=args.pi_rel,
        max_iterations=args.max_iterations,
        deterministic=args.deterministic, worker_count=args.workers)
    cfg.check()
    phase2.refine_partition(tree, prog, cfg)
    treemod.serialize(tree, args.output)
    if args.certification:
        _write_certification_csv(args.certification, tree)
    warned = phase2.warned_volume_fraction(tree)
    print(f"wrote {args.output}: {len(tree.leaves())} leaves, "
          f"warned volume fraction {warned:.6f}")
    return EXIT_OK


def cmd_query(args) -> int:
    tree = treemod.deserialize(args.tree)
    theta = _parse_theta(args.theta)
    try:
        leaf = tree.query(theta)
    except OutsideTheta:
        print("theta outside the partitioned parameter set")
        return EXIT_USAGE
    bits = "".join(str(b) for b in leaf.delta) \
        if leaf.delta is not None else "-"
    print(f"delta={bits} status={leaf.status} leaf={leaf.id} "
          f"tests={tree.last_query_tests}")
    return EXIT_OK


def cmd_verify(args) -> int:
    prog, _, _ = problem.load_program(args.instance)
    tree = treemod.deserialize(args.tree)
    report = verification.verify_tree(
        tree, prog, samples_per_leaf=args.samples_per_leaf,
        seed=args.seed, query_samples=args.query_samples)
    if report.ok:
        print(f"verification passed ({report.checks} checks)")
        return EXIT_OK
    for failure in report.failures:
        print(f"FAIL: {failure}")
    print(f"verification failed: {len(report.failures)} violation(s) in "
          f"{report.checks} checks")
    return EXIT_VERIFY_FAIL


def cmd_stats(args) -> int:
    tree = treemod.deserialize(args.tree)
    stats = treemod.statistics(tree, fitted_leaf_count=args.fitted_leaf_count)
    record = dataclasses.asdict(stats)
    fractions = record.pop("status_volume_fractions")
    for status, fraction in sorted(fractions.items()):
        record[f"volume_fraction_{status}"] = fraction
    if args.output:
        with open(args.output, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(record))
            writer.writeheader()
            writer.writerow(record)
    for key, value in record.items():
        print(f"{key}={value}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing.
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="commutree",
        description="Simplicial partitioning of multiparametric "
                    "mixed-integer conic programs.")
    parser.add_argument("--manifest", default=DEFAULT_MANIFEST,
                        help="append-only JSON-lines run manifest")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write an instance file")
    p.add_argument("--kind", default="mdof",
                   help="mdof, toy1d, toy1d-offset or toy1d-kappa:<k>")
    p.add_argument("--n-r", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=int, default=instances.HORIZON)
    p.add_argument("--mode", choices=("tightened", "nominal"),
                   default="tightened")
    p.add_argument("--output", "-o", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("partition", help="run the feasibility phase")
    p.add_argument("--instance", required=True)
    p.add_argument("--output", "-o", required=True)
    p.add_argument("--events", help="per-iteration event CSV")
    p.add_argument("--max-iterations", type=int, default=100000)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--deterministic", action="store_true", default=True)
    p.add_argument("--no-deterministic", dest="deterministic",
                   action="store_false")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("refine", help="run the certification phase")
    p.add_argument("--instance", required=True)
    p.add_argument("--tree", required=True)
    p.add_argument("--output", "-o", required=True)
    p.add_argument("--certification", help="per-leaf certification CSV")
    p.add_argument("--eps-abs", type=float, default=0.0)
    p.add_argument("--eps-rel", type=float, default=0.0)
    p.add_argument("--rho-max", type=float, default=100.0)
    p.add_argument("--pi-abs", type=float, default=0.0)
    p.add_argument("--pi-rel", type=float, default=0.02)
    p.add_argument("--max-iterations", type=int, default=100000)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--deterministic", action="store_true", default=True)
    p.add_argument("--no-deterministic", dest="deterministic",
                   action="store_false")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("query", help="locate a parameter point")
    p.add_argument("--tree", required=True)
    p.add_argument("--theta", required=True,
                   help="comma- or space-separated coordinates")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("verify", help="re-check a finalized tree")
    p.add_argument("--instance", required=True)
    p.add_argument("--tree", required=True)
    p.add_argument("--samples-per-leaf", type=int, default=100)
    p.add_argument("--query-samples", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("stats", help="emit tree statistics")
    p.add_argument("--tree", required=True)
    p.add_argument("--output", "-o")
    p.add_argument("--fitted-leaf-count", type=float,
                   help="model-predicted leaf count for the normalized "
                        "overlap estimate")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    t0 = time.perf_counter()
    record = {"command": args.command,
              "args": {k: v for k, v in vars(args).items()
                       if k not in ("func", "manifest")}}
    try:
        code = args.func(args)
    except ThetaExceedsFeasibleSet as exc:
        print(f"parameter set exceeds feasible set: witness theta = "
              f"{exc.witness}")
        code = EXIT_THETA_EXCEEDS
    except (FormatError, OSError, CommutreeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_USAGE
    record["wall_time"] = time.perf_counter() - t0
    record["exit_status"] = code
    try:
        _append_manifest(args.manifest, record)
    except OSError as exc:
        log.warning("could not write manifest: %s", exc)
    return code


if __name__ == "__main__":
    sys.exit(main())
