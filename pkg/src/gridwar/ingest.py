"""Play-by-play ingestion: plate appearances, half-innings and starter lines."""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import logging
from collections import OrderedDict
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import IO, Iterable, Sequence

from .errors import DataError, SchemaError
from .league import team_season

log = logging.getLogger(__name__)

BASE_STATES = ("000", "100", "010", "001", "110", "101", "011", "111")
LEAGUES = ("AL", "NL")
HALVES = ("top", "bottom")
MAX_INNING = 9
MAX_RUNS_PER_PA = 4

END_OF_INNING = "end_of_inning"
MID_INNING = "mid_inning"


def parse_base_state(code: str) -> str:
    """Validate a 3-character (first, second, third) occupancy code."""
    code = code.strip()
    if code not in BASE_STATES:
        raise ValueError(f"invalid base state {code!r}")
    return code


@dataclass(frozen=True)
class PlateAppearance:
    game_id: str
    year: int
    date: dt.date
    home_team: str
    away_team: str
    league: str
    park: str
    inning: int
    half: str
    pitcher_id: str
    batter_id: str
    is_starter: bool
    outs_before: int
    base_state_before: str
    runs_on_play: int
    outs_recorded: int
    earned_runs_on_play: int | None = None

    @property
    def batting_team(self) -> str:
        return self.away_team if self.half == "top" else self.home_team

    @property
    def fielding_team(self) -> str:
        return self.home_team if self.half == "top" else self.away_team


@dataclass(frozen=True)
class HalfInningRecord:
    game_id: str
    year: int
    park: str
    inning: int
    half: str
    offense_team_season: str
    defense_team_season: str
    runs: int

    @property
    def home_batting(self) -> bool:
        return self.half == "bottom"


@dataclass(frozen=True)
class StartLine:
    pitcher_id: str
    game_id: str
    year: int
    date: dt.date
    park: str
    is_home: bool
    league: str
    exit_kind: str
    innings: int
    runs_allowed: int
    team_won: bool
    exit_outs: int | None = None
    exit_base_state: str | None = None

    def __post_init__(self):
        if self.exit_kind == END_OF_INNING:
            if self.exit_outs is not None or self.exit_base_state is not None:
                raise ValueError("end-of-inning exits carry no outs/base state")
        elif self.exit_kind == MID_INNING:
            if self.exit_outs not in (0, 1, 2) or self.exit_base_state not in BASE_STATES:
                raise ValueError("mid-inning exits need outs in 0..2 and a base state")
        else:
            raise ValueError(f"unknown exit kind {self.exit_kind!r}")
        if not 1 <= self.innings <= MAX_INNING:
            raise ValueError(f"innings must be in 1..{MAX_INNING}, got {self.innings}")
        if self.runs_allowed < 0:
            raise ValueError("runs_allowed must be non-negative")


@dataclass(frozen=True)
class Rejection:
    line: int
    reason: str
    raw: str
    source: str = ""


@dataclass
class ParseResult:
    records: list[PlateAppearance] = field(default_factory=list)
    rejects: list[Rejection] = field(default_factory=list)


# --------------------------------------------------------------------------
# plate appearances

PA_COLUMNS = [f.name for f in fields(PlateAppearance)]
REQUIRED_PA_COLUMNS = [c for c in PA_COLUMNS if c != "earned_runs_on_play"]

_TRUE = {"1", "true", "t", "yes", "y"}
_FALSE = {"0", "false", "f", "no", "n"}


def load_schema(path: str | Path | None) -> dict:
    """Read a column-map JSON file.

    The file maps canonical field names to source column names, e.g.
    ``{"columns": {"game_id": "GAME_ID", "park": "PARK"}, "delimiter": ","}``.
    A flat mapping without the ``columns`` key is accepted too.
    """
    if path is None:
        return {}
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise SchemaError("schema map must be a JSON object")
    if "columns" not in raw:
        raw = {"columns": raw}
    unknown = set(raw["columns"]) - set(PA_COLUMNS)
    if unknown:
        raise SchemaError(f"schema maps unknown fields: {sorted(unknown)}")
    return raw


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ValueError(f"invalid boolean {text!r}")


def _parse_half(text: str) -> str:
    t = text.strip().lower()
    if t in ("top", "t", "0"):
        return "top"
    if t in ("bottom", "bot", "b", "1"):
        return "bottom"
    raise ValueError(f"invalid half {text!r}")


def _parse_date(text: str) -> dt.date:
    t = text.strip()
    if len(t) == 8 and t.isdigit():
        return dt.date(int(t[:4]), int(t[4:6]), int(t[6:]))
    return dt.date.fromisoformat(t)


def _parse_int(text: str, name: str, lo: int | None = None, hi: int | None = None) -> int:
    try:
        value = int(text.strip())
    except ValueError:
        raise ValueError(f"{name} is not an integer: {text!r}") from None
    if (lo is not None and value < lo) or (hi is not None and value > hi):
        raise ValueError(f"{name} out of range: {value}")
    return value


def _row_to_pa(row: dict[str, str]) -> PlateAppearance:
    league = row["league"].strip().upper()
    if league not in LEAGUES:
        raise ValueError(f"unknown league {row['league']!r}")
    try:
        base = parse_base_state(row["base_state_before"])
    except ValueError:
        raise ValueError("invalid base state") from None
    outs_before = _parse_int(row["outs_before"], "outs_before", 0, 2)
    outs_recorded = _parse_int(row["outs_recorded"], "outs_recorded", 0, 3)
    if outs_before + outs_recorded > 3:
        raise ValueError("outs_before + outs_recorded exceeds 3")
    runs = _parse_int(row["runs_on_play"], "runs_on_play", 0, MAX_RUNS_PER_PA)
    earned = None
    raw_earned = row.get("earned_runs_on_play")
    if raw_earned is not None and raw_earned.strip() != "":
        earned = _parse_int(raw_earned, "earned_runs_on_play", 0, runs)
    game_id = row["game_id"].strip()
    if not game_id:
        raise ValueError("empty game_id")
    return PlateAppearance(
        game_id=game_id,
        year=_parse_int(row["year"], "year", 1800, 3000),
        date=_parse_date(row["date"]),
        home_team=row["home_team"].strip(),
        away_team=row["away_team"].strip(),
        league=league,
        park=row["park"].strip(),
        inning=_parse_int(row["inning"], "inning", 1),
        half=_parse_half(row["half"]),
        pitcher_id=row["pitcher_id"].strip(),
        batter_id=row["batter_id"].strip(),
        is_starter=_parse_bool(row["is_starter"]),
        outs_before=outs_before,
        base_state_before=base,
        runs_on_play=runs,
        outs_recorded=outs_recorded,
        earned_runs_on_play=earned,
    )


def parse_plate_appearances(
    source: IO[str] | IO[bytes] | str,
    schema: dict | None = None,
    source_name: str = "",
) -> ParseResult:
    """Parse delimiter-separated plate appearances.

    Rows that fail validation become :class:`Rejection` entries carrying the
    physical line number (header is line 1); input order is preserved.
    """
    schema = schema or {}
    colmap: dict[str, str] = {c: c for c in PA_COLUMNS}
    colmap.update(schema.get("columns", {}))
    delimiter = schema.get("delimiter", ",")

    if isinstance(source, str):
        source = io.StringIO(source)
    elif isinstance(source, (io.BufferedIOBase, io.RawIOBase)) or "b" in getattr(source, "mode", ""):
        source = io.TextIOWrapper(source, encoding="utf-8", newline="")

    reader = csv.reader(source, delimiter=delimiter)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("input has no header row") from None
    header = [h.strip() for h in header]
    position = {name: i for i, name in enumerate(header)}
    missing = [c for c in REQUIRED_PA_COLUMNS if colmap[c] not in position]
    if missing:
        raise SchemaError(
            "missing required columns: " + ", ".join(f"{c} ({colmap[c]})" for c in missing)
        )
    wanted = {c: position[colmap[c]] for c in PA_COLUMNS if colmap[c] in position}

    result = ParseResult()
    for values in reader:
        line = reader.line_num
        if not values or all(not v.strip() for v in values):
            continue
        if len(values) != len(header):
            result.rejects.append(
                Rejection(line, f"expected {len(header)} fields, got {len(values)}",
                          delimiter.join(values), source_name)
            )
            continue
        row = {c: values[i] for c, i in wanted.items()}
        try:
            result.records.append(_row_to_pa(row))
        except ValueError as exc:
            result.rejects.append(Rejection(line, str(exc), delimiter.join(values), source_name))
    for rej in result.rejects:
        log.warning("rejected %s line %d: %s", rej.source or "<input>", rej.line, rej.reason)
    return result


def read_plate_appearances(paths: Sequence[str | Path], schema: dict | None = None) -> ParseResult:
    merged = ParseResult()
    for path in paths:
        with open(path, newline="") as fh:
            part = parse_plate_appearances(fh, schema, source_name=str(path))
        merged.records.extend(part.records)
        merged.rejects.extend(part.rejects)
    return merged


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, dt.date):
        return value.isoformat()
    return str(value)


def write_plate_appearances(records: Iterable[PlateAppearance], out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(PA_COLUMNS)
    for pa in records:
        writer.writerow([_fmt(getattr(pa, c)) for c in PA_COLUMNS])


REJECT_COLUMNS = ["source", "line", "reason", "raw"]


def write_rejects(rejects: Iterable[Rejection], out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(REJECT_COLUMNS)
    for r in rejects:
        writer.writerow([r.source, r.line, r.reason, r.raw])


# --------------------------------------------------------------------------
# half-innings


def _group_halves(pas: Sequence[PlateAppearance]) -> "OrderedDict[str, OrderedDict[tuple[int, int], list[PlateAppearance]]]":
    """game_id -> (inning, half index) -> PAs, games in first-seen order."""
    games: OrderedDict[str, dict[tuple[int, int], list[PlateAppearance]]] = OrderedDict()
    for pa in pas:
        key = (pa.inning, HALVES.index(pa.half))
        games.setdefault(pa.game_id, {}).setdefault(key, []).append(pa)
    return OrderedDict((g, OrderedDict(sorted(h.items()))) for g, h in games.items())


def build_half_innings(pas: Sequence[PlateAppearance]) -> list[HalfInningRecord]:
    """One record per (game, inning, half); top halves have the away team batting."""
    out: list[HalfInningRecord] = []
    for game_id, halves in _group_halves(pas).items():
        for (inning, _), group in halves.items():
            first = group[0]
            outs = sum(pa.outs_recorded for pa in group)
            if outs > 3:
                log.warning("game %s inning %d %s records %d outs", game_id, inning, first.half, outs)
            out.append(
                HalfInningRecord(
                    game_id=game_id,
                    year=first.year,
                    park=first.park,
                    inning=inning,
                    half=first.half,
                    offense_team_season=team_season(first.batting_team, first.year),
                    defense_team_season=team_season(first.fielding_team, first.year),
                    runs=sum(pa.runs_on_play for pa in group),
                )
            )
    return out


HALF_INNING_COLUMNS = [f.name for f in fields(HalfInningRecord)]


def write_half_innings(records: Iterable[HalfInningRecord], out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(HALF_INNING_COLUMNS)
    for r in records:
        writer.writerow([_fmt(getattr(r, c)) for c in HALF_INNING_COLUMNS])


def read_half_innings(path: str | Path) -> list[HalfInningRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(HALF_INNING_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise SchemaError(f"{path}: missing columns {sorted(missing)}")
        out = []
        for row in reader:
            try:
                out.append(
                    HalfInningRecord(
                        game_id=row["game_id"],
                        year=int(row["year"]),
                        park=row["park"],
                        inning=int(row["inning"]),
                        half=_parse_half(row["half"]),
                        offense_team_season=row["offense_team_season"],
                        defense_team_season=row["defense_team_season"],
                        runs=int(row["runs"]),
                    )
                )
            except ValueError as exc:
                raise DataError(f"{path} line {reader.line_num}: {exc}") from None
    return out


# --------------------------------------------------------------------------
# starter lines


def build_start_lines(
    pas: Sequence[PlateAppearance],
    earned_only: bool = False,
    rejects: list[Rejection] | None = None,
) -> list[StartLine]:
    """Summarize each starter's outing.

    Runs charged are those scoring on plate appearances the starter pitched;
    runners he leaves on base are accounted for downstream by the run
    distribution from his exit state. Starts without a recorded out are
    skipped and reported through ``rejects``.
    """
    out: list[StartLine] = []
    for game_id, halves in _group_halves(pas).items():
        runs_by_half = {"top": 0, "bottom": 0}
        for (_, h), group in halves.items():
            runs_by_half[HALVES[h]] += sum(pa.runs_on_play for pa in group)
        # home team fields in the top half
        for fielding_half, is_home in (("top", True), ("bottom", False)):
            side = [(inn, g) for (inn, h), g in halves.items() if HALVES[h] == fielding_half]
            line = _starter_line(game_id, side, is_home, runs_by_half, earned_only, rejects)
            if line is not None:
                out.append(line)
    return out


def _starter_line(game_id, side, is_home, runs_by_half, earned_only, rejects):
    starter_pas = [(inn, i, pa) for inn, g in side for i, pa in enumerate(g) if pa.is_starter]
    if not starter_pas:
        _reject(rejects, game_id, f"no starter flagged for {'home' if is_home else 'away'} team")
        return None
    pitchers = {pa.pitcher_id for _, _, pa in starter_pas}
    if len(pitchers) > 1:
        raise DataError(f"game {game_id}: several starters flagged for one team: {sorted(pitchers)}")
    innings = sorted({inn for inn, _, _ in starter_pas})
    if innings[-1] - innings[0] + 1 != len(innings):
        raise DataError(f"game {game_id}: starter appears in non-consecutive innings {innings}")
    by_inning: dict[int, list[int]] = {}
    for inn, i, _ in starter_pas:
        by_inning.setdefault(inn, []).append(i)
    for inn, idx in by_inning.items():
        if idx != list(range(len(idx))):
            raise DataError(f"game {game_id}: starter re-enters during inning {inn}")

    first = starter_pas[0][2]
    total_outs = sum(pa.outs_recorded for _, _, pa in starter_pas)
    if total_outs == 0:
        _reject(rejects, game_id, f"starter {first.pitcher_id} recorded no outs")
        return None

    if earned_only:
        if any(pa.earned_runs_on_play is None for _, _, pa in starter_pas):
            raise DataError(f"game {game_id}: earned runs requested but column is empty")
        runs = sum(pa.earned_runs_on_play for _, _, pa in starter_pas)
    else:
        runs = sum(pa.runs_on_play for _, _, pa in starter_pas)

    last_inning = innings[-1]
    half_pas = dict(side)[last_inning]
    k = len(by_inning[last_inning])
    last = half_pas[k - 1]
    exit_kind, exit_outs, exit_base = END_OF_INNING, None, None
    if last.outs_before + last.outs_recorded < 3:
        if k < len(half_pas):
            exit_kind = MID_INNING
            exit_outs = half_pas[k].outs_before
            exit_base = half_pas[k].base_state_before
        else:
            # half ended short of three outs (game over); nothing left to complete
            log.info("game %s: starter %s finished a truncated half-inning", game_id, last.pitcher_id)

    own, opp = ("top", "bottom") if not is_home else ("bottom", "top")
    return StartLine(
        pitcher_id=first.pitcher_id,
        game_id=game_id,
        year=first.year,
        date=first.date,
        park=first.park,
        is_home=is_home,
        league=first.league,
        exit_kind=exit_kind,
        innings=min(last_inning, MAX_INNING),
        runs_allowed=runs,
        team_won=runs_by_half[own] > runs_by_half[opp],
        exit_outs=exit_outs,
        exit_base_state=exit_base,
    )


def _reject(rejects, game_id, reason):
    log.warning("game %s: %s", game_id, reason)
    if rejects is not None:
        rejects.append(Rejection(0, reason, game_id, "start_lines"))


START_LINE_COLUMNS = [
    "pitcher_id", "game_id", "year", "date", "park", "is_home", "league",
    "exit_kind", "innings", "exit_outs", "exit_base_state", "runs_allowed", "team_won",
]


def write_start_lines(lines: Iterable[StartLine], out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(START_LINE_COLUMNS)
    for s in lines:
        writer.writerow([_fmt(getattr(s, c)) for c in START_LINE_COLUMNS])


def read_start_lines(path: str | Path) -> list[StartLine]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(START_LINE_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise SchemaError(f"{path}: missing columns {sorted(missing)}")
        out = []
        for row in reader:
            try:
                outs = row["exit_outs"].strip()
                base = row["exit_base_state"].strip()
                out.append(
                    StartLine(
                        pitcher_id=row["pitcher_id"],
                        game_id=row["game_id"],
                        year=int(row["year"]),
                        date=_parse_date(row["date"]),
                        park=row["park"],
                        is_home=_parse_bool(row["is_home"]),
                        league=row["league"],
                        exit_kind=row["exit_kind"],
                        innings=int(row["innings"]),
                        runs_allowed=int(row["runs_allowed"]),
                        team_won=_parse_bool(row["team_won"]),
                        exit_outs=int(outs) if outs else None,
                        exit_base_state=parse_base_state(base) if base else None,
                    )
                )
            except ValueError as exc:
                raise DataError(f"{path} line {reader.line_num}: {exc}") from None
    return out
