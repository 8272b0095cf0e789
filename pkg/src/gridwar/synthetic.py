"""Synthetic leagues: balanced MLB-style schedules and simulated play-by-play.

Used as the stand-in design for the park simulation studies and as the
bundled end-to-end fixture. Everything is a pure function of the seed.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .ingest import BASE_STATES, PlateAppearance
from .league import TEAMS, team_season
from .park import ParkDesign, derive_rng, design_from_indices

# games per ordered (home, away) pair
DIVISION_HOME_GAMES = 9
LEAGUE_HOME_GAMES = 3
INTERLEAGUE_HOME_GAMES = 1


def season_schedule(teams: Sequence[str], year: int, rng: np.random.Generator) -> list[tuple[str, str]]:
    """(home, away) pairs for one 162-game season, in shuffled order.

    Division rivals meet 18 times, same-league teams 6 times and interleague
    teams twice (for the 30-team alignment this gives 162 games each).
    """
    games = []
    for a, b in combinations(sorted(teams), 2):
        la, da, _ = TEAMS[a]
        lb, db, _ = TEAMS[b]
        if da == db:
            n = DIVISION_HOME_GAMES
        elif la == lb:
            n = LEAGUE_HOME_GAMES
        else:
            n = INTERLEAGUE_HOME_GAMES
        games += [(a, b)] * n + [(b, a)] * n
    order = rng.permutation(len(games))
    return [games[i] for i in order]


def schedule_design(years: Sequence[int] = (2017, 2018, 2019), seed: int = 0,
                    teams: Sequence[str] | None = None, skip_bottom_ninth: float = 0.5) -> ParkDesign:
    """Indicator design with the shape of a real multi-season half-inning table."""
    teams = sorted(teams or TEAMS)
    parks = sorted({TEAMS[t][2] for t in teams})
    team_seasons = sorted(team_season(t, y) for t in teams for y in years)
    p_pos = {p: i for i, p in enumerate(parks)}
    t_pos = {t: i for i, t in enumerate(team_seasons)}

    park_idx, off_idx, def_idx, home_bat = [], [], [], []
    for year in years:
        rng = derive_rng(seed, "schedule", year)
        sched = season_schedule(teams, year, rng)
        skip = rng.random(len(sched)) < skip_bottom_ninth
        for (home, away), skip9 in zip(sched, skip):
            p = p_pos[TEAMS[home][2]]
            h, a = t_pos[team_season(home, year)], t_pos[team_season(away, year)]
            for inning in range(1, 10):
                park_idx.append(p); off_idx.append(a); def_idx.append(h); home_bat.append(False)
                if inning == 9 and skip9:
                    continue
                park_idx.append(p); off_idx.append(h); def_idx.append(a); home_bat.append(True)
    return design_from_indices(parks, team_seasons, np.array(park_idx), np.array(off_idx),
                               np.array(def_idx), np.array(home_bat), years=(min(years), max(years)))


# --------------------------------------------------------------------------
# play-by-play simulation

# baseline plate-appearance outcome probabilities
OUTCOMES = ("out", "walk", "single", "double", "triple", "homer")
BASE_PROBS = np.array([0.680, 0.090, 0.150, 0.045, 0.005, 0.030])


@dataclass
class LeagueConfig:
    years: tuple[int, ...] = (2017, 2018, 2019)
    teams: tuple[str, ...] | None = None
    seed: int = 0
    # SDs of per-team-season log-multipliers on the rate of reaching base
    offense_sd: float = 0.10
    pitching_sd: float = 0.10
    park_sd: float = 0.06
    rotation: int = 5
    starter_batters_mean: float = 25.0
    starter_batters_sd: float = 6.0
    # a starter is lifted mid-inning once he has allowed 6 + Poisson(mean) runs
    starter_pull_runs_mean: float = 4.0
    # per-inning chance of an early exit (injury, tactical) at the boundary
    early_exit: float = 0.02
    max_innings: int = 15


def _outcome_probs(mult: float) -> np.ndarray:
    p = BASE_PROBS.copy()
    p[1:] *= mult
    p[0] = 1.0 - p[1:].sum()
    return p


def _advance(bases: list[int], outcome: str, outs: int, rng) -> tuple[list[int], int, int]:
    """Apply one outcome to (first, second, third); returns (bases, runs, outs_recorded)."""
    b1, b2, b3 = bases
    if outcome == "out":
        if b1 and outs < 2 and rng.random() < 0.12:
            # ground-ball double play; other runners move up one base
            return [0, 0, b2], b3, 2
        if b3 and outs < 2 and rng.random() < 0.30:
            return [b1, b2, 0], 1, 1
        return [b1, b2, b3], 0, 1
    if outcome == "walk":
        runs = 1 if (b1 and b2 and b3) else 0
        nb3 = 1 if (b3 or (b1 and b2)) else 0
        nb2 = 1 if (b2 or b1) else 0
        return [1, nb2, nb3], runs, 0
    if outcome == "single":
        runs = b3 + b2
        return [1, 0, b1], runs, 0
    if outcome == "double":
        runs = b3 + b2
        return [0, 1, b1], runs, 0
    if outcome == "triple":
        return [0, 0, 1], b1 + b2 + b3, 0
    return [0, 0, 0], b1 + b2 + b3 + 1, 0


def _code(bases: list[int]) -> str:
    return "".join(str(b) for b in bases)


def simulate_league(config: LeagueConfig | None = None) -> list[PlateAppearance]:
    """Plate appearances for every game of a synthetic league.

    Teams, parks, leagues and divisions follow the 2017-2019 MLB alignment;
    talent and park multipliers are drawn from the seed.
    """
    cfg = config or LeagueConfig()
    teams = sorted(cfg.teams or TEAMS)
    parks = sorted({TEAMS[t][2] for t in teams})
    talent_rng = derive_rng(cfg.seed, "talent", 0)
    park_mult = dict(zip(parks, np.exp(talent_rng.normal(0, cfg.park_sd, len(parks)))))
    park_mult["DEN02"] = park_mult.get("DEN02", 1.0) * 1.15 if "DEN02" in park_mult else 1.0

    pas: list[PlateAppearance] = []
    for year in cfg.years:
        rng = derive_rng(cfg.seed, "season", year)
        off = dict(zip(teams, np.exp(rng.normal(0, cfg.offense_sd, len(teams)))))
        pit = dict(zip(teams, np.exp(rng.normal(0, cfg.pitching_sd, len(teams)))))
        sched = season_schedule(teams, year, derive_rng(cfg.seed, "schedule", year))
        opening = dt.date(year, 4, 1)
        starts_made = {t: 0 for t in teams}
        for n, (home, away) in enumerate(sched):
            date = opening + dt.timedelta(days=n * 180 // len(sched))
            starters = {}
            for t in (home, away):
                starters[t] = f"{t.lower()}{year % 100:02d}sp{starts_made[t] % cfg.rotation + 1}"
                starts_made[t] += 1
            pas.extend(_simulate_game(
                f"{home}{year}{n:05d}", year, date, home, away, TEAMS[home][2],
                park_mult[TEAMS[home][2]], off, pit, starters, cfg, rng,
            ))
    return pas


def _relieve(st: list, team: str, relievers: dict) -> None:
    relievers[team] += 1
    st[:] = [f"{team.lower()}rp{relievers[team]}", False, 0, 0, 0, 0]


def _simulate_game(game_id, year, date, home, away, park, pmult, off, pit, starters, cfg, rng):
    league = TEAMS[home][0]
    out: list[PlateAppearance] = []
    score = {"top": 0, "bottom": 0}
    # fielding team -> [pitcher, is starter, batters faced, runs allowed, batters limit, runs limit]
    staff = {
        t: [starters[t], True, 0, 0,
            max(9, int(rng.normal(cfg.starter_batters_mean, cfg.starter_batters_sd))),
            6 + int(rng.poisson(cfg.starter_pull_runs_mean))]
        for t in (home, away)
    }
    relievers = {home: 0, away: 0}
    batter_slot = {home: 0, away: 0}
    inning = 1
    while True:
        for half in ("top", "bottom"):
            if half == "bottom" and inning >= 9 and score["bottom"] > score["top"]:
                return out
            batting = away if half == "top" else home
            fielding = home if half == "top" else away
            mult = pmult * off[batting] * pit[fielding]
            probs = _outcome_probs(mult)
            bases, outs = [0, 0, 0], 0
            st = staff[fielding]
            if st[1] and st[2] > 0 and (st[2] >= st[4] or inning > 9 or rng.random() < cfg.early_exit):
                _relieve(st, fielding, relievers)
            while outs < 3:
                if st[1] and st[3] >= st[5]:
                    _relieve(st, fielding, relievers)
                outcome = OUTCOMES[rng.choice(len(OUTCOMES), p=probs)]
                new_bases, runs, recorded = _advance(bases, outcome, outs, rng)
                if outs + recorded >= 3:
                    # no run scores on the third out
                    recorded, runs = 3 - outs, 0
                slot = batter_slot[batting]
                batter_slot[batting] = (slot + 1) % 9
                out.append(PlateAppearance(
                    game_id=game_id, year=year, date=date, home_team=home, away_team=away,
                    league=league, park=park, inning=inning, half=half, pitcher_id=st[0],
                    batter_id=f"{batting.lower()}{year % 100:02d}b{slot + 1}", is_starter=st[1],
                    outs_before=outs, base_state_before=_code(bases), runs_on_play=runs,
                    outs_recorded=recorded,
                ))
                st[2] += 1
                st[3] += runs
                score[half] += runs
                outs += recorded
                bases = new_bases
                if half == "bottom" and inning >= 9 and score["bottom"] > score["top"]:
                    return out
        if inning >= 9 and score["top"] != score["bottom"]:
            return out
        if inning >= cfg.max_innings:
            return out
        inning += 1
