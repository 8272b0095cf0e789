"""Command-line entry point: ``gridwar <subcommand> ...``.

Exit codes: 0 success, 1 validation/usage error (one ``error: ...`` line on
stderr), 2 internal error.
"""

from __future__ import annotations

import argparse
import contextlib
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Callable, Sequence

from . import __version__
from .errors import GridWarError
from .grid_f import WinProbGrid, fit_f
from .grid_g import DEFAULT_MIN_COUNT, InningRunDist, fit_g
from .gwar import (
    W_REP_DEFAULT,
    check_w_rep,
    compare_histograms,
    gwar_game,
    rank_and_report,
    read_game_runs,
    read_reference_war,
    read_seasons,
    seasons_from_games,
    tag_histogram,
    write_games,
    write_seasons,
)
from .ingest import (
    build_half_innings,
    build_start_lines,
    load_schema,
    read_half_innings,
    read_plate_appearances,
    read_start_lines,
    write_half_innings,
    write_plate_appearances,
    write_rejects,
    write_start_lines,
)
from .park import (
    DEFAULT_LAMBDA,
    DEFAULT_LAMBDA_GRID,
    ESTIMATORS,
    ParkEffectSet,
    SimulationSpec,
    build_park_design,
    fit_park,
    fit_park_baseline,
    simulate_study,
    tune_lambda,
)

log = logging.getLogger("gridwar")

SCHEMA_VERSION = 1


class UsageError(GridWarError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; the contract here is 1. Only the
    # top-level parser shows usage (unknown command); option errors stay one line.
    show_usage = False

    def error(self, message):
        if self.show_usage:
            self.print_usage(sys.stderr)
        raise UsageError(message)


# --------------------------------------------------------------------------
# argument types


def year_window(text: str) -> tuple[int, int]:
    """``2010:2019`` or a single ``2019``."""
    try:
        if ":" in text:
            lo, hi = (int(x) for x in text.split(":", 1))
        else:
            lo = hi = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid year window {text!r}") from None
    if lo > hi:
        raise argparse.ArgumentTypeError(f"year window {text!r} is not ordered")
    return lo, hi


def w_rep_value(text: str) -> float:
    try:
        return check_w_rep(float(text))
    except (ValueError, GridWarError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def pitcher_pair(text: str) -> tuple[str, str]:
    a, sep, b = text.partition(":")
    if not sep or not a or not b:
        raise argparse.ArgumentTypeError(f"expected A:B, got {text!r}")
    return a, b


def existing_file(text: str) -> Path:
    p = Path(text)
    if not p.is_file():
        raise argparse.ArgumentTypeError(f"no such file: {text}")
    return p


# --------------------------------------------------------------------------
# atomic output


@contextlib.contextmanager
def atomic_text(path: str | Path):
    """Write to a temporary sibling, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    umask = os.umask(0)
    os.umask(umask)
    try:
        os.fchmod(fd, 0o666 & ~umask)
        with os.fdopen(fd, "w", newline="") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def write_csv(path, writer: Callable[[io.TextIOBase], None]) -> None:
    with atomic_text(path) as fh:
        writer(fh)


def write_json(path, data: dict) -> None:
    data = {"schema_version": SCHEMA_VERSION, **data} if "schema_version" not in data else data
    with atomic_text(path) as fh:
        json.dump(data, fh, indent=1, sort_keys=False)
        fh.write("\n")


# --------------------------------------------------------------------------
# subcommands


def cmd_ingest(args) -> None:
    schema = load_schema(args.schema)
    parsed = read_plate_appearances(args.input, schema)
    pas = parsed.records
    rejects = list(parsed.rejects)
    starts = build_start_lines(pas, earned_only=args.earned, rejects=rejects)
    halves = build_half_innings(pas)
    out = Path(args.out)
    write_csv(out / "plate_appearances.csv", lambda fh: write_plate_appearances(pas, fh))
    write_csv(out / "half_innings.csv", lambda fh: write_half_innings(halves, fh))
    write_csv(out / "start_lines.csv", lambda fh: write_start_lines(starts, fh))
    write_csv(out / "rejects.csv", lambda fh: write_rejects(rejects, fh))
    log.info("ingested %d plate appearances, %d starts, %d rejects", len(pas), len(starts), len(rejects))


def cmd_fit_f(args) -> None:
    grid = fit_f(read_start_lines(args.starts), args.years, tol=args.tol, max_iter=args.max_iter)
    write_json(args.out, grid.to_json())


def cmd_fit_g(args) -> None:
    parsed = read_plate_appearances([args.pa])
    if parsed.rejects:
        raise GridWarError(f"{args.pa}: {len(parsed.rejects)} invalid rows (first at line {parsed.rejects[0].line})")
    write_json(args.out, fit_g(parsed.records, args.years, args.min_count).to_json())


def cmd_fit_park(args) -> None:
    halves = read_half_innings(args.half_innings)
    if args.method in ("espn", "fangraphs"):
        fx = fit_park_baseline(halves, args.years, args.method)
    else:
        fx = fit_park(build_park_design(halves, args.years), args.method, args.lam)
    write_json(args.out, fx.to_json())


def cmd_tune_lambda(args) -> None:
    halves = read_half_innings(args.half_innings)
    grid = tuple(float(x) for x in args.grid.split(",")) if args.grid else DEFAULT_LAMBDA_GRID
    result = tune_lambda(halves, args.train, args.valid, grid)
    write_json(args.out, {"kind": "lambda_tuning", "train": list(args.train), "valid": list(args.valid), **result})


def cmd_gwar(args) -> None:
    outs = args.out.split(",")
    if len(outs) != 2:
        raise UsageError("--out takes two comma-separated paths: games.csv,seasons.csv")
    starts = read_start_lines(args.starts)
    f = WinProbGrid.load(args.f)
    g = InningRunDist.load(args.g) if args.g else None
    parks = ParkEffectSet.load(args.park) if args.park else None
    games = [gwar_game(s, f, g, parks, w_rep=args.wrep, clamp=not args.unclamped) for s in starts]
    seasons = sorted(seasons_from_games(games), key=lambda s: (s.year, s.pitcher_id))
    write_csv(outs[0], lambda fh: write_games(games, fh))
    write_csv(outs[1], lambda fh: write_seasons(seasons, fh))


def cmd_compare(args) -> None:
    seasons = read_seasons(args.seasons)
    reference = read_reference_war(args.reference)
    by_year: dict[int, dict[str, float]] = {}
    for s in seasons:
        by_year.setdefault(s.year, {})[s.pitcher_id] = s.gwar
    report: dict = {"kind": "comparison", "years": {}}
    runs = read_game_runs(args.games) if args.games else None
    for year in sorted(by_year):
        if year not in reference:
            continue
        entry = rank_and_report(by_year[year], {"reference": reference[year]}, top=args.top)
        if runs is not None and args.pair:
            for a, b in args.pair:
                if (a, year) in runs and (b, year) in runs:
                    diff = compare_histograms(runs[(a, year)], runs[(b, year)])
                    entry.setdefault("histograms", []).append(
                        {"a": a, "b": b, "bins": tag_histogram(diff)})
        report["years"][str(year)] = entry
    if not report["years"]:
        raise GridWarError("no seasons overlap the reference file")
    write_json(args.out, report)


def cmd_simulate_park(args) -> None:
    from .synthetic import schedule_design

    design = schedule_design(tuple(range(args.years[0], args.years[1] + 1)), seed=args.seed)
    make = SimulationSpec.study1 if args.study == 1 else SimulationSpec.study2
    spec = make(n_sims=args.sims, seed=args.seed, lam=args.lam)
    report = simulate_study(spec, design)
    write_json(args.out, {"kind": "park_simulation", **report})


def cmd_synth(args) -> None:
    from .synthetic import LeagueConfig, simulate_league

    pas = simulate_league(LeagueConfig(years=tuple(range(args.years[0], args.years[1] + 1)), seed=args.seed))
    write_csv(args.out, lambda fh: write_plate_appearances(pas, fh))


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gridwar", description="Grid WAR for starting pitchers.")
    p.show_usage = True
    p.add_argument("--version", action="version", version=f"gridwar {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="<command>", parser_class=_Parser)

    s = sub.add_parser("ingest", help="parse play-by-play into PA, half-inning and start tables")
    s.add_argument("--input", nargs="+", required=True, type=existing_file)
    s.add_argument("--schema", type=existing_file, help="JSON column map (default: canonical headers)")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--earned", action="store_true", help="charge earned runs only (needs earned_runs_on_play)")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("fit-f", help="fit the win-probability grid f(I, R)")
    s.add_argument("--starts", required=True, type=existing_file)
    s.add_argument("--years", type=year_window)
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--max-iter", type=int, default=50)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fit_f)

    s = sub.add_parser("fit-g", help="fit the run-completion distribution g(R | S, O)")
    s.add_argument("--pa", required=True, type=existing_file)
    s.add_argument("--years", type=year_window)
    s.add_argument("--min-count", type=int, default=DEFAULT_MIN_COUNT)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fit_g)

    s = sub.add_parser("fit-park", help="estimate park effects")
    s.add_argument("--half-innings", required=True, type=existing_file)
    s.add_argument("--years", required=True, type=year_window)
    s.add_argument("--method", default="ridge",
                   choices=[e for e in ESTIMATORS if not e.endswith("_additive")] + ["espn", "fangraphs"])
    s.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fit_park)

    s = sub.add_parser("tune-lambda", help="choose the ridge penalty on a validation window")
    s.add_argument("--half-innings", required=True, type=existing_file)
    s.add_argument("--train", required=True, type=year_window)
    s.add_argument("--valid", required=True, type=year_window)
    s.add_argument("--grid", help="comma-separated penalties")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_tune_lambda)

    s = sub.add_parser("gwar", help="per-game and per-season Grid WAR")
    s.add_argument("--starts", required=True, type=existing_file)
    s.add_argument("--f", required=True, type=existing_file)
    s.add_argument("--g", type=existing_file, help="required when any start ends mid-inning")
    s.add_argument("--park", type=existing_file, help="park effects; omitted means no adjustment")
    s.add_argument("--wrep", type=w_rep_value, default=W_REP_DEFAULT)
    s.add_argument("--unclamped", action="store_true", help="do not clamp the Taylor step to one inning")
    s.add_argument("--out", required=True, help="games.csv,seasons.csv")
    s.set_defaults(func=cmd_gwar)

    s = sub.add_parser("compare", help="rank seasons and compare with a reference WAR file")
    s.add_argument("--seasons", required=True, type=existing_file)
    s.add_argument("--reference", required=True, type=existing_file)
    s.add_argument("--games", type=existing_file, help="games CSV for runs-allowed histograms")
    s.add_argument("--pair", action="append", type=pitcher_pair, help="A:B pitcher ids to histogram (repeatable)")
    s.add_argument("--top", type=int, default=5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("simulate-park", help="park-estimator simulation study on a synthetic schedule")
    s.add_argument("--study", type=int, choices=(1, 2), required=True)
    s.add_argument("--sims", type=int, default=25)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    s.add_argument("--years", type=year_window, default=(2017, 2019))
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate_park)

    s = sub.add_parser("synth", help="write a synthetic league's plate appearances")
    s.add_argument("--years", type=year_window, default=(2017, 2019))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        args.func(args)
        return 0
    except SystemExit as exc:
        # --help and --version
        return int(exc.code or 0)
    except (GridWarError, OSError, json.JSONDecodeError, KeyError) as exc:
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
