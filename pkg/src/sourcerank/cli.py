"""Command-line entry point: ``sourcerank <subcommand> [flags]``.

Exit status is 0 on success, 2 on bad flags or unusable input, and 1 on
runtime failures.
"""

from __future__ import annotations

import argparse
import io
import logging
import sys
from contextlib import contextmanager
from typing import IO, Iterator, Sequence

import numpy as np

from . import __version__
from .datasets import BUILTIN, load_graph
from .diffusion import (
    DiffusionError,
    jitter_ties,
    read_observation,
    reveal_count,
    reveal_time_biased,
    reveal_unbiased,
    simulate_ic,
    simulate_trunc_gaussian,
    sample_source_degree_binned,
    write_ground_truth,
    write_observation,
)
from .eif import MuEstimationError
from .evaluation import (
    RETRY_BUDGET,
    ExperimentConfig,
    RatioConfig,
    default_jobs,
    rank_real_cascade,
    run_edge_removal_experiment,
    run_experiment,
    run_ratio_study,
)
from .graph import EdgeListParseError, GraphError, remove_random_edges_connected
from .ranking import ALGORITHMS, write_rankings_csv

logger = logging.getLogger("sourcerank")


_SIM_KEYS = ("graph", "directed", "model", "mu", "sigma", "stop_count", "bins", "fraction", "dist", "seed")
DISTS = ("unbiased", "biased")


class UsageError(Exception):
    """Bad flag values or unusable input: exit status 2."""


def _csv_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _csv_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


# option name -> (type used when read from a config file, help)
_SHARED = {
    "graph": (str, f"edge-list path or built-in name ({', '.join(BUILTIN)})"),
    "directed": (_bool, "read the edge list as directed arcs"),
    "model": (str, "diffusion model: gaussian or ic"),
    "mu": (float, "mean per-hop delay"),
    "sigma": (float, "per-hop delay standard deviation"),
    "stop_count": (int, "stop the cascade at this many infected nodes"),
    "bins": (int, "degree bins for source sampling"),
    "fraction": (float, "share of infected nodes whose time is revealed"),
    "dist": (str, "timestamp revelation: unbiased or biased"),
    "seed": (int, "random seed"),
    "jobs": (int, "worker processes (default: all cores)"),
    "runs": (int, "number of runs"),
    "gammas": (_csv_floats, "comma-separated top-percent cutoffs"),
    "algo": (str, "ranking algorithm or 'all'"),
}


def _add(p: argparse.ArgumentParser, name: str, **kw) -> None:
    typ, help_ = _SHARED[name]
    if typ is _bool and "action" not in kw:
        kw.setdefault("action", "store_true")
    else:
        kw.setdefault("type", typ)
    p.add_argument("--" + name.replace("_", "-"), dest=name, default=argparse.SUPPRESS, help=help_, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sourcerank", description="Rank infected nodes by their likelihood of being the contagion source."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")

    def common(p, *names):
        p.add_argument("--config", default=None, help="key=value file; flags given on the command line win")
        for n in names:
            if n == "model":
                _add(p, n, choices=("gaussian", "ic"))
            elif n == "dist":
                _add(p, n, choices=DISTS)
            elif n == "algo":
                _add(p, n, choices=ALGORITHMS + ("all",))
            else:
                _add(p, n)

    p = sub.add_parser("simulate", help="simulate one cascade; write observation and ground truth")
    common(p, *_SIM_KEYS)
    p.add_argument("--out", required=True, help="observation file; ground truth goes to --truth")
    p.add_argument("--truth", default=None, help="ground-truth file (default: <out>.truth)")

    p = sub.add_parser("rank", help="rank the infected nodes of an observation")
    common(p, "graph", "directed", "mu", "algo")
    p.add_argument("--obs", required=True, help="observation file: 'node [time]' per line")
    p.add_argument("--out", default=None, help="ranking CSV (default: stdout)")

    p = sub.add_parser("evaluate", help="run the accuracy protocol over many simulated cascades")
    common(p, *_SIM_KEYS, "runs", "gammas", "algo", "jobs")
    p.add_argument("--removals", type=_csv_ints, default=argparse.SUPPRESS,
                   help="comma-separated edge-removal counts; runs the protocol on each reduced graph")
    p.add_argument("--out", default=None, help="report CSV (default: stdout)")
    p.add_argument("--runs-out", default=None, help="per-run CSV")

    p = sub.add_parser("oracle-ratio", help="EIF cost over exact minimum cost on a small graph")
    common(p, "graph", "mu", "sigma", "stop_count", "bins", "runs", "seed", "jobs")
    p.add_argument("--counts", type=_csv_ints, default=argparse.SUPPRESS,
                   help="comma-separated numbers of revealed timestamps")
    p.add_argument("--out", default=None, help="summary CSV (default: stdout)")
    p.add_argument("--runs-out", default=None, help="per-run CSV")

    p = sub.add_parser("remove-edges", help="remove random edges while keeping the graph connected")
    common(p, "graph", "seed")
    p.add_argument("--count", type=int, required=True, help="number of edges to remove")
    p.add_argument("--out", default=None, help="edge list (default: stdout)")
    return parser


_FILE_TYPES = dict({k: v[0] for k, v in _SHARED.items()}, removals=_csv_ints, counts=_csv_ints)


def read_config_file(path: str) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment; dashes and underscores are interchangeable."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in _FILE_TYPES:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                out[key] = _FILE_TYPES[key](value)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"{path}:{lineno}: {exc}") from None
    return out


def _settings(args: argparse.Namespace, allowed: Sequence[str]) -> dict:
    merged = read_config_file(args.config) if args.config else {}
    stray = sorted(set(merged) - set(allowed))
    if stray:
        raise UsageError(f"config keys not used by this subcommand: {', '.join(stray)}")
    merged.update({k: v for k, v in vars(args).items() if k in allowed})
    return merged


def _algorithms(value: str | None) -> tuple[str, ...]:
    if value is None or value == "all":
        return ALGORITHMS
    if value not in ALGORITHMS:
        raise UsageError(f"unknown algorithm {value!r}")
    return (value,)


def _experiment_config(s: dict) -> ExperimentConfig:
    kw = {k: s[k] for k in ("graph", "directed", "model", "mu", "sigma", "stop_count", "bins",
                            "fraction", "dist", "runs", "gammas", "seed") if k in s}
    if "algo" in s:
        kw["algorithms"] = _algorithms(s["algo"])
    try:
        return ExperimentConfig(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load(s: dict):
    spec = s.get("graph")
    if spec is None:
        raise UsageError("--graph is required")
    try:
        return load_graph(spec, s.get("directed", False))
    except FileNotFoundError:
        raise UsageError(f"graph file not found: {spec}") from None
    except EdgeListParseError as exc:
        raise UsageError(str(exc)) from None


@contextmanager
def _output(path: str | None) -> Iterator[IO[str]]:
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def cmd_simulate(args) -> int:
    s = _settings(args, _SIM_KEYS)
    cfg = _experiment_config(dict(s, runs=1))
    g = _load(s)
    rng = np.random.default_rng(cfg.seed)
    for _ in range(RETRY_BUDGET):
        source = sample_source_degree_binned(g, cfg.bins, rng)
        try:
            if cfg.model == "gaussian":
                result = simulate_trunc_gaussian(g, source, cfg.stop_count, cfg.mu, cfg.sigma, rng)
            else:
                result = jitter_ties(simulate_ic(g, source, cfg.stop_count, rng), rng)
            break
        except DiffusionError as exc:
            logger.info("retrying: %s", exc)
    else:
        raise DiffusionError(f"no cascade reached {cfg.stop_count} nodes in {RETRY_BUDGET} attempts")
    count = reveal_count(cfg.fraction, len(result.times)) if len(result.times) > 1 else 0
    reveal = reveal_unbiased if cfg.dist == "unbiased" else reveal_time_biased
    obs = reveal(result, count, rng)
    with _output(args.out) as fh:
        write_observation(obs, g, fh)
    with _output(args.truth or args.out + ".truth") as fh:
        write_ground_truth(result, g, fh)
    return 0


def cmd_rank(args) -> int:
    s = _settings(args, ("graph", "directed", "mu", "algo"))
    g = _load(s)
    try:
        with open(args.obs, encoding="utf-8") as fh:
            obs = read_observation(fh, g)
    except FileNotFoundError:
        raise UsageError(f"observation file not found: {args.obs}") from None
    except ValueError as exc:
        raise UsageError(f"{args.obs}: {exc}") from None
    algos = _algorithms(s.get("algo", "all"))
    try:
        rankings = rank_real_cascade(g, obs, algos, s.get("mu"))
    except MuEstimationError as exc:
        raise UsageError(f"{exc} (use --mu)") from None
    except GraphError as exc:
        raise UsageError(str(exc)) from None
    with _output(args.out) as fh:
        write_rankings_csv(rankings, g, fh)
    return 0


def cmd_evaluate(args) -> int:
    s = _settings(args, _SIM_KEYS + ("runs", "gammas", "algo", "jobs", "removals"))
    cfg = _experiment_config(s)
    g = _load(s)
    jobs = s.get("jobs", default_jobs())
    if "removals" in s:
        reports = run_edge_removal_experiment(cfg, s["removals"], g, jobs)
    else:
        reports = {None: run_experiment(cfg, g, jobs)}
    with _output(args.out) as fh:
        first = True
        for k, rep in reports.items():
            body = _to_text(rep.write_csv)
            if k is not None:
                lines = body.splitlines()
                body = "\n".join(["removed," + lines[0]] * first + [f"{k},{x}" for x in lines[1:]]) + "\n"
            elif not first:
                body = body.split("\n", 1)[1]
            fh.write(body)
            first = False
    if args.runs_out:
        with _output(args.runs_out) as fh:
            first = True
            for k, rep in reports.items():
                body = _to_text(lambda f: rep.write_runs_csv(f, g))
                if k is not None:
                    lines = body.splitlines()
                    body = "\n".join(["removed," + lines[0]] * first + [f"{k},{x}" for x in lines[1:]]) + "\n"
                fh.write(body)
                first = False
    return 0


def _to_text(writer) -> str:
    buf = io.StringIO()
    writer(buf)
    return buf.getvalue()


def cmd_oracle_ratio(args) -> int:
    s = _settings(args, ("graph", "mu", "sigma", "stop_count", "bins", "runs", "seed", "jobs", "counts"))
    kw = {k: s[k] for k in ("graph", "mu", "sigma", "stop_count", "bins", "runs", "seed") if k in s}
    if "counts" in s:
        kw["counts"] = s["counts"]
    cfg = RatioConfig(**kw)
    if cfg.runs < 1:
        raise UsageError("runs must be >= 1")
    g = _load(dict(s, graph=cfg.graph))
    if g.directed:
        raise UsageError("the exact oracle needs an undirected graph")
    report = run_ratio_study(cfg, g, s.get("jobs", default_jobs()))
    with _output(args.out) as fh:
        report.write_csv(fh)
    if args.runs_out:
        with _output(args.runs_out) as fh:
            report.write_runs_csv(fh)
    return 0


def cmd_remove_edges(args) -> int:
    s = _settings(args, ("graph", "seed"))
    g = _load(s)
    rng = np.random.default_rng([s.get("seed", 0), 0x5EED])
    try:
        reduced = remove_random_edges_connected(g, args.count, rng)
    except GraphError as exc:
        raise UsageError(str(exc)) from None
    with _output(args.out) as fh:
        for a, b in reduced.undirected_edges():
            fh.write(f"{reduced.label(a)} {reduced.label(b)}\n")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "rank": cmd_rank,
    "evaluate": cmd_evaluate,
    "oracle-ratio": cmd_oracle_ratio,
    "remove-edges": cmd_remove_edges,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=(logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)],
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"sourcerank {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, ValueError, OSError) as exc:
        print(f"sourcerank {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
