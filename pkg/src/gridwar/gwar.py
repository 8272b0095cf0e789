"""Per-game and seasonal Grid WAR for starting pitchers."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, fields
from pathlib import Path
from typing import IO, Callable, Iterable, Mapping, Protocol, Sequence

import numpy as np

from .errors import DataError, GridWarError, SchemaError
from .grid_f import INNINGS, R_MAX, FContext, WinProbGrid, eval_f
from .grid_g import R_CAP, InningRunDist
from .ingest import MID_INNING, StartLine
from .park import ParkEffectSet

W_REP_DEFAULT = 0.41
W_REP_LOWER = 0.294  # all-replacement team win percentage
W_REP_UPPER = 0.5
# keeps extrapolated probabilities strictly inside (0, 1)
PROB_EPS = 1e-9


def check_w_rep(w_rep: float) -> float:
    if not W_REP_LOWER < w_rep < W_REP_UPPER:
        raise GridWarError(f"w_rep must lie in ({W_REP_LOWER}, {W_REP_UPPER}), got {w_rep}")
    return float(w_rep)


class WinGrid(Protocol):
    def value(self, ctx: FContext, inning: int, runs: int) -> float: ...


class FittedGrid:
    """Adapter giving a fitted :class:`WinProbGrid` the ``value`` interface."""

    def __init__(self, grid: WinProbGrid):
        self.grid = grid
        self._cache: dict = {}

    def value(self, ctx: FContext, inning: int, runs: int) -> float:
        key = (ctx, inning, min(runs, R_MAX))
        if key not in self._cache:
            self._cache[key] = eval_f(self.grid, ctx, inning, runs)
        return self._cache[key]


class TabularGrid:
    """Explicit f table (9 x 11), shared by every context."""

    def __init__(self, table):
        self.table = np.asarray(table, dtype=float)
        if self.table.shape != (len(INNINGS), R_MAX + 1):
            raise ValueError(f"table must be {len(INNINGS)} x {R_MAX + 1}")

    def value(self, ctx, inning: int, runs: int) -> float:
        return float(self.table[inning - 1, min(runs, R_MAX)])


def as_grid(f) -> WinGrid:
    return FittedGrid(f) if isinstance(f, WinProbGrid) else f


# --------------------------------------------------------------------------
# per-game values


def gwar_complete(f, ctx: FContext, inning: int, runs: int, w_rep: float = W_REP_DEFAULT) -> float:
    """Grid WAR for an exit at the end of ``inning`` having allowed ``runs``."""
    if inning not in INNINGS or runs < 0:
        raise ValueError("need inning in 1..9 and runs >= 0")
    return as_grid(f).value(ctx, inning, runs) - w_rep


def taylor_shift(value: Callable[[int], float], runs: int, inning: int, alpha: float,
                 r_max: int = R_MAX, clamp: bool = True) -> float:
    """First-order approximation of f(I, R - I * alpha) from integer grid values.

    ``value(r)`` returns f(I, r). With ``clamp`` the step ``h = I|alpha|`` is
    limited to 1 so the interior cases stay interpolations.
    """
    if alpha == 0:
        return value(runs)
    h = inning * abs(alpha)
    if clamp:
        h = min(h, 1.0)
    if alpha > 0:
        if runs > 0:
            return (1 - h) * value(runs) + h * value(runs - 1)
        return (1 + h) * value(0) - h * value(1)
    if runs < r_max:
        return (1 - h) * value(runs) + h * value(runs + 1)
    if runs == r_max:
        return (1 + h) * value(r_max) - h * value(r_max - 1)
    # beyond r_max the grid is flat
    return value(r_max)


def park_adjusted_f(f, ctx: FContext, inning: int, runs: int, alpha: float, clamp: bool = True) -> float:
    grid = as_grid(f)
    if alpha == 0:
        return grid.value(ctx, inning, runs)
    v = taylor_shift(lambda r: grid.value(ctx, inning, r), runs, inning, alpha, R_MAX, clamp)
    return float(min(max(v, PROB_EPS), 1.0 - PROB_EPS))


def gwar_mid_inning(f, g: InningRunDist, ctx: FContext, inning: int, runs: int,
                    base_state: str, outs: int, w_rep: float = W_REP_DEFAULT,
                    alpha: float = 0.0, clamp: bool = True) -> float:
    """Expected end-of-inning Grid WAR for a starter leaving mid-inning."""
    grid = as_grid(f)
    cell = g.cell(base_state, outs)
    total = 0.0
    for r in range(R_CAP + 1):
        if cell[r] == 0.0:
            continue
        total += cell[r] * park_adjusted_f(grid, ctx, inning, r + runs, alpha, clamp)
    return total - w_rep


@dataclass(frozen=True)
class GwarGame:
    pitcher_id: str
    game_id: str
    year: int
    park: str
    alpha: float
    exit_kind: str
    innings: int
    exit_outs: int | None
    exit_base_state: str | None
    runs_allowed: int
    raw_gwar: float
    park_adjusted_gwar: float


def start_context(start: StartLine) -> FContext:
    return FContext(start.is_home, start.league, start.year)


def gwar_game(start: StartLine, f, g: InningRunDist | None, parks: ParkEffectSet | None,
              w_rep: float = W_REP_DEFAULT, clamp: bool = True) -> GwarGame:
    grid = as_grid(f)
    ctx = start_context(start)
    alpha = parks[start.park] if parks is not None else 0.0

    def value(a: float) -> float:
        if start.exit_kind == MID_INNING:
            if g is None:
                raise GridWarError("mid-inning exit needs a run distribution")
            return gwar_mid_inning(grid, g, ctx, start.innings, start.runs_allowed,
                                   start.exit_base_state, start.exit_outs, w_rep, a, clamp)
        return park_adjusted_f(grid, ctx, start.innings, start.runs_allowed, a, clamp) - w_rep

    raw = value(0.0)
    adjusted = raw if alpha == 0 else value(alpha)
    return GwarGame(start.pitcher_id, start.game_id, start.year, start.park, float(alpha),
                    start.exit_kind, start.innings, start.exit_outs, start.exit_base_state,
                    start.runs_allowed, float(raw), float(adjusted))


# --------------------------------------------------------------------------
# seasons


@dataclass
class GwarSeason:
    pitcher_id: str
    year: int
    gwar: float
    games: int
    raw_gwar: float
    rescaled_gwar: float | None = None


def gwar_season(games: Sequence[GwarGame]) -> GwarSeason:
    """Sum a pitcher's games left to right (park-adjusted and raw)."""
    if not games:
        raise GridWarError("no starts to aggregate")
    keys = {(g.pitcher_id, g.year) for g in games}
    if len(keys) != 1:
        raise DataError(f"games from several pitcher-seasons: {sorted(keys)}")
    total = 0.0
    raw = 0.0
    for g in games:
        total += g.park_adjusted_gwar
        raw += g.raw_gwar
    return GwarSeason(games[0].pitcher_id, games[0].year, total, len(games), raw)


def seasons_from_games(games: Iterable[GwarGame]) -> list[GwarSeason]:
    groups: dict[tuple[str, int], list[GwarGame]] = {}
    for g in games:
        groups.setdefault((g.pitcher_id, g.year), []).append(g)
    return [gwar_season(v) for v in groups.values()]


def rescale(seasons: Mapping[str, float], reference: Mapping[str, float]) -> dict[str, float]:
    """Scale every value so the shared pitchers' total matches the reference total."""
    common = sorted(set(seasons) & set(reference))
    if not common:
        raise GridWarError("no pitchers in common with the reference")
    total = sum(seasons[p] for p in common)
    if total == 0:
        raise GridWarError("Grid WAR sums to zero over the shared pitchers")
    c = sum(reference[p] for p in common) / total
    if c <= 0:
        raise GridWarError(f"rescaling factor {c:.4g} is not positive; rankings would invert")
    return {p: v * c for p, v in seasons.items()}


def _counts(runs) -> Counter:
    if isinstance(runs, Mapping):
        return Counter({int(k): int(v) for k, v in runs.items()})
    return Counter(int(r) for r in runs)


def compare_histograms(a, b) -> dict[int, int]:
    """Per-runs-allowed game count difference ``a - b``.

    Inputs are either {runs: games} mappings or sequences of per-game runs.
    Every run total from 0 to the largest observed is present in the result.
    """
    ca, cb = _counts(a), _counts(b)
    top = max(list(ca) + list(cb) + [0])
    return {r: ca.get(r, 0) - cb.get(r, 0) for r in range(top + 1)}


def tag_histogram(diff: Mapping[int, int]) -> list[dict]:
    return [
        {"runs": r, "diff": d, "sign": "positive" if d > 0 else "negative" if d < 0 else "zero"}
        for r, d in sorted(diff.items())
    ]


def rank_and_report(seasons: Mapping[str, float], reference_sets: Mapping[str, Mapping[str, float]] | None = None,
                    top: int = 5) -> dict:
    """Ranking by Grid WAR plus, per reference, the most under/overvalued pitchers.

    Ties are broken by pitcher id. Differences are taken after rescaling to the
    reference total over the shared pitchers.
    """
    order = sorted(seasons, key=lambda p: (-seasons[p], p))
    report: dict = {
        "ranking": [{"rank": i + 1, "pitcher_id": p, "gwar": seasons[p]} for i, p in enumerate(order)],
        "references": {},
    }
    for name, ref in (reference_sets or {}).items():
        scaled = rescale(seasons, ref)
        common = [p for p in order if p in ref]
        diffs = {p: scaled[p] - ref[p] for p in common}
        under = sorted(common, key=lambda p: (-diffs[p], p))[:top]
        over = sorted(common, key=lambda p: (diffs[p], p))[:top]
        report["references"][name] = {
            "rescaled": [{"pitcher_id": p, "gwar": seasons[p], "rescaled_gwar": scaled[p],
                          "reference": ref[p], "diff": diffs[p]} for p in common],
            "scale": scaled[common[0]] / seasons[common[0]] if seasons[common[0]] else None,
            "undervalued": [{"pitcher_id": p, "diff": diffs[p]} for p in under],
            "overvalued": [{"pitcher_id": p, "diff": diffs[p]} for p in over],
        }
    return report


# --------------------------------------------------------------------------
# CSV


GAME_COLUMNS = [f.name for f in fields(GwarGame)]
SEASON_COLUMNS = ["pitcher_id", "year", "gwar", "raw_gwar", "games"]


def _num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.10f}"
    return str(x)


def write_games(games: Iterable[GwarGame], out: IO[str]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(GAME_COLUMNS)
    for g in games:
        w.writerow([_num(getattr(g, c)) for c in GAME_COLUMNS])


def write_seasons(seasons: Iterable[GwarSeason], out: IO[str]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(SEASON_COLUMNS)
    for s in seasons:
        w.writerow([s.pitcher_id, s.year, _num(s.gwar), _num(s.raw_gwar), s.games])


def read_seasons(path: str | Path) -> list[GwarSeason]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if not set(SEASON_COLUMNS) <= set(reader.fieldnames or []):
            raise SchemaError(f"{path}: expected columns {SEASON_COLUMNS}")
        return [GwarSeason(r["pitcher_id"], int(r["year"]), float(r["gwar"]), int(r["games"]),
                           float(r["raw_gwar"])) for r in reader]


def read_game_runs(path: str | Path) -> dict[tuple[str, int], list[int]]:
    """Runs allowed per game, grouped by (pitcher, year), from a games CSV."""
    out: dict[tuple[str, int], list[int]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if not {"pitcher_id", "year", "runs_allowed"} <= set(reader.fieldnames or []):
            raise SchemaError(f"{path}: expected pitcher_id, year, runs_allowed columns")
        for r in reader:
            out.setdefault((r["pitcher_id"], int(r["year"])), []).append(int(r["runs_allowed"]))
    return out


def read_reference_war(path: str | Path) -> dict[int, dict[str, float]]:
    """User-supplied reference WAR CSV with columns pitcher, season, war."""
    out: dict[int, dict[str, float]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = set(reader.fieldnames or [])
        pid = "pitcher" if "pitcher" in cols else "pitcher_id" if "pitcher_id" in cols else None
        if pid is None or not {"season", "war"} <= cols:
            raise SchemaError(f"{path}: expected columns pitcher, season, war")
        for r in reader:
            try:
                out.setdefault(int(r["season"]), {})[r[pid]] = float(r["war"])
            except ValueError as exc:
                raise DataError(f"{path} line {reader.line_num}: {exc}") from None
    return out
