"""Command-line front end: ``spnvi gen-ising | fit | oracle | sweep``."""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import os
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .builder import BuildConfig, build, pad_correction
from .errors import PolynomialError, SizeLimitError, UAIParseError
from .models_io import IsingSpec, gen_ising, ising_to_factor_graph, load_model, write_uai
from .optimizer import OptConfig, fit, importance_estimate
from .oracle import OracleReport, exact_log_partition, grid_log_partition
from .polynomial import Polynomial

log = logging.getLogger("spnvi")

EXIT_OK, EXIT_USAGE, EXIT_MODEL, EXIT_NONFINITE, EXIT_CAP = 0, 2, 3, 4, 5
SEED_ENV = "CIRCUIT_VI_SEED"


def version_string() -> str:
    try:
        rev = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True, text=True, timeout=5,
        ).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        rev = ""
    return f"{__version__}+g{rev}" if rev else __version__


@dataclass
class RunRecord:
    method: str
    instance: dict
    value: float | None
    wall_ms: float
    seed: int | None
    k: int | None = None
    restarts: int | None = None
    iters: int | None = None
    version: str = field(default_factory=version_string)
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, allow_nan=False)


def _default_seed() -> int:
    return int(os.environ.get(SEED_ENV, "0"))


def _read_grid(path) -> tuple[int, int] | None:
    for line in Path(path).read_text().splitlines():
        tok = line.lstrip("#").split()
        if line.startswith("#") and len(tok) == 3 and tok[0] == "grid":
            return int(tok[1]), int(tok[2])
    return None


# ---------------------------------------------------------------------------
# shared run helpers (also used by sweep workers)


def run_fit(poly: Polynomial, k: int, opt: OptConfig, build_seed: int, instance: dict, method: str = "spn"):
    cfg = BuildConfig(n=poly.num_vars, k=k, seed=build_seed)
    n_padded, offset = pad_correction(cfg)
    structure = build(cfg)
    result = fit(structure, poly, offset, opt)
    record = RunRecord(
        method=method,
        instance=instance,
        value=result.best_elbo if result.finite else None,
        wall_ms=1e3 * result.wall_time,
        seed=opt.seed,
        k=k,
        restarts=opt.restarts,
        iters=opt.iters,
        extra={
            "n_vars": poly.num_vars,
            "n_padded": n_padded,
            "elbo_offset": offset,
            "n_terms": len(poly.terms),
            "circuit_size": list(structure.size()),
            "aborted_restarts": [t.restart for t in result.traces if t.aborted],
            "lr": opt.lr,
            "tol": opt.tol,
            "time_budget": opt.time_budget,
        },
    )
    return record, result, structure, offset


def run_oracle(poly: Polynomial, method: str, grid: tuple[int, int] | None) -> OracleReport:
    if method == "enum":
        value = exact_log_partition(poly)
        return OracleReport("log_partition", value, "enumeration", 1 << poly.num_vars)
    if grid is None:
        raise ValueError("transfer oracle needs the grid shape (--rows/--cols or a '# grid R C' header)")
    rows, cols = grid
    value = grid_log_partition(poly, rows, cols)
    return OracleReport("log_partition", value, "transfer_matrix", max(rows, cols) * (1 << min(rows, cols)))


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_ising(args) -> int:
    spec = IsingSpec(args.rows, args.cols, args.gamma, args.mode, args.seed)
    poly = gen_ising(spec)
    text = f"# grid {args.rows} {args.cols}\n" + poly.to_text()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.uai:
        Path(args.uai).write_text(write_uai(ising_to_factor_graph(poly)))
    print(f"vars {poly.num_vars} terms {len(poly.terms)}", file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


def cmd_fit(args) -> int:
    try:
        poly, kind = load_model(args.model)
    except (UAIParseError, PolynomialError, SizeLimitError, OSError, ValueError) as exc:
        print(f"error: cannot load model {args.model}: {exc}", file=sys.stderr)
        return EXIT_MODEL
    if poly.num_vars == 0:
        print(f"error: model {args.model} has no variables (add a '# num_vars N' header)", file=sys.stderr)
        return EXIT_MODEL
    opt = OptConfig(
        iters=args.iters, restarts=args.restarts, lr=args.lr, tol=args.tol,
        time_budget=args.time_budget, seed=args.seed, init_scale=args.init_scale,
    )
    instance = {"model": str(args.model), "format": kind}
    method = "mf" if args.k == 1 else "spn"
    record, result, structure, offset = run_fit(poly, args.k, opt, args.seed, instance, method)
    if args.importance:
        best = structure.with_params(result.best_params)
        log_z, se = importance_estimate(best, poly, args.importance, args.seed, offset)
        record.extra["importance_log_z"] = log_z
        record.extra["importance_std_error"] = se
    out = record.to_json()
    if args.out:
        Path(args.out).write_text(out + "\n")
    else:
        print(out)
    if args.trace:
        result.write_trace_csv(args.trace)
    if not result.finite:
        print("error: every restart produced a non-finite ELBO", file=sys.stderr)
        return EXIT_NONFINITE
    return EXIT_OK


def cmd_oracle(args) -> int:
    try:
        poly, _ = load_model(args.model)
    except (UAIParseError, PolynomialError, OSError, ValueError) as exc:
        print(f"error: cannot load model {args.model}: {exc}", file=sys.stderr)
        return EXIT_MODEL
    grid = (args.rows, args.cols) if args.rows and args.cols else _read_grid(args.model)
    try:
        report = run_oracle(poly, args.method, grid)
    except SizeLimitError as exc:
        print(f"error: {exc} (cap: {exc.limit})", file=sys.stderr)
        return EXIT_CAP
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = json.dumps(report.to_dict(), sort_keys=True)
    if args.out:
        Path(args.out).write_text(out + "\n")
    else:
        print(out)
    return EXIT_OK


# --- sweep -----------------------------------------------------------------


def sweep_cells(config: dict) -> list[dict]:
    """Expand a declarative sweep config into cells, in a fixed order."""
    ks = config.get("k", [64])
    ks = ks if isinstance(ks, list) else [ks]
    modes = config.get("modes", [config.get("mode", "mixed")])
    cells = []
    for (rows, cols), mode, gamma, seed, method in itertools.product(
        config.get("sizes", []), modes, config.get("gammas", []),
        config.get("seeds", [0]), config.get("methods", []),
    ):
        for k in (ks if method in ("spn", "importance") else [1 if method == "mf" else None]):
            instance = {"rows": rows, "cols": cols, "gamma": gamma, "mode": mode, "seed": seed}
            key = f"ising-{rows}x{cols}-{mode}-g{gamma}-s{seed}|{method}" + (f"|k{k}" if k else "")
            cells.append({"key": key, "method": method, "k": k, "instance": instance})
    return cells


def run_cell(cell: dict, config: dict) -> dict:
    inst = cell["instance"]
    poly = gen_ising(IsingSpec(inst["rows"], inst["cols"], inst["gamma"], inst["mode"], inst["seed"]))
    method = cell["method"]
    start = time.perf_counter()
    try:
        if method in ("oracle-enum", "oracle-transfer"):
            report = run_oracle(poly, method.split("-")[1], (inst["rows"], inst["cols"]))
            record = RunRecord(method, inst, report.value, 1e3 * (time.perf_counter() - start), None,
                               extra={"states_visited": report.states_visited})
        elif method in ("mf", "spn", "importance"):
            opt = OptConfig(
                iters=config.get("iters", 1000), restarts=config.get("restarts", 10),
                lr=config.get("lr", 0.05), tol=config.get("tol", 1e-7),
                time_budget=config.get("time_budget"), seed=config.get("fit_seed", 0),
            )
            record, result, structure, offset = run_fit(poly, cell["k"], opt, opt.seed, inst, method)
            if method == "importance" and result.finite:
                best = structure.with_params(result.best_params)
                samples = config.get("importance_samples", 10_000)
                log_z, se = importance_estimate(best, poly, samples, opt.seed, offset)
                record.extra.update(elbo=record.value, std_error=se, samples=samples)
                record.value = log_z
        else:
            raise ValueError(f"unknown method {method!r}")
        out = asdict(record)
        out["status"] = "ok" if record.value is not None else "nonfinite"
    except Exception as exc:  # recorded per cell; the sweep keeps going
        out = asdict(RunRecord(method, inst, None, 1e3 * (time.perf_counter() - start), None, k=cell["k"]))
        out["status"] = "error"
        out["error"] = f"{type(exc).__name__}: {exc}"
    out["key"] = cell["key"]
    return out


def completed_keys(path: Path) -> set[str]:
    done = set()
    if path.exists():
        for line in path.read_text().splitlines():
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                continue  # a torn final line from an interrupted run
            if rec.get("status") == "ok":
                done.add(rec["key"])
    return done


def _drop_torn_tail(path: Path) -> None:
    """Cut a partial last line left by an interrupted run so appends start on a fresh line."""
    if not path.exists():
        return
    data = path.read_bytes()
    if data and not data.endswith(b"\n"):
        path.write_bytes(data[:data.rfind(b"\n") + 1])


def cmd_sweep(args) -> int:
    try:
        config = json.loads(Path(args.config).read_text() or "{}")
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read sweep config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    results = Path(args.results or config.get("results", "results.jsonl"))
    cells = sweep_cells(config)
    done = completed_keys(results)
    todo = [c for c in cells if c["key"] not in done]
    print(f"{len(cells)} cells, {len(cells) - len(todo)} already complete", file=sys.stderr)
    results.parent.mkdir(parents=True, exist_ok=True)
    _drop_torn_tail(results)
    with open(results, "a") as fh:
        def emit(rec):
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            fh.flush()
            print(f"{rec['key']}: {rec['status']} {rec['value']}", file=sys.stderr)

        if args.jobs > 1 and len(todo) > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                futures = [pool.submit(run_cell, c, config) for c in todo]
                for fut in as_completed(futures):
                    emit(fut.result())
        else:
            for c in todo:
                emit(run_cell(c, config))
    return EXIT_OK


# ---------------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spnvi", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--version", action="version", version=version_string())
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-ising", help="generate a random Ising grid polynomial")
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--cols", type=int, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--mode", choices=["mixed", "positive"], default="mixed")
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--out", help="polynomial text output (default stdout)")
    p.add_argument("--uai", help="also export the instance as a .uai file")
    p.set_defaults(func=cmd_gen_ising)

    p = sub.add_parser("fit", help="optimize a selective-SPN ELBO on a model")
    p.add_argument("--model", required=True, help=".uai file or polynomial text file")
    p.add_argument("--k", type=int, default=64, help="size budget; 1 gives mean-field")
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--init-scale", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--time-budget", type=float, default=None, help="wall-clock seconds for the whole fit")
    p.add_argument("--importance", type=int, default=0, metavar="SAMPLES",
                   help="also report an importance-sampling ln Z estimate")
    p.add_argument("--out", help="RunRecord JSON output (default stdout)")
    p.add_argument("--trace", help="per-iteration trace CSV")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("oracle", help="exact ln Z by enumeration or transfer matrix")
    p.add_argument("--model", required=True)
    p.add_argument("--method", choices=["enum", "transfer"], default="enum")
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("sweep", help="run a resumable grid of experiments into JSONL")
    p.add_argument("--config", required=True, help="JSON sweep description")
    p.add_argument("--results", help="JSONL output (overrides the config's 'results')")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
