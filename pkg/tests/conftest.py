import datetime as dt
import functools
import tempfile
from pathlib import Path

import pytest

from gridwar.cli import main as cli_main
from gridwar.ingest import PlateAppearance, build_start_lines
from gridwar.grid_f import fit_f
from gridwar.grid_g import fit_g
from gridwar.park import SimulationSpec, simulate_study
from gridwar.synthetic import LeagueConfig, schedule_design, simulate_league

# (criterion, passed, detail) rows collected by tests/test_acceptance.py
ACCEPTANCE: list[tuple[str, bool, str]] = []


def pa(game_id="G1", inning=1, half="top", pitcher_id="P", is_starter=True, outs_before=0,
       base="000", runs=0, outs=1, year=2019, home="NYN", away="ATL", league="NL",
       park="NYC20", batter="B", earned=None, date=dt.date(2019, 6, 1)):
    return PlateAppearance(
        game_id=game_id, year=year, date=date, home_team=home, away_team=away, league=league,
        park=park, inning=inning, half=half, pitcher_id=pitcher_id, batter_id=batter,
        is_starter=is_starter, outs_before=outs_before, base_state_before=base,
        runs_on_play=runs, outs_recorded=outs, earned_runs_on_play=earned,
    )


def quick_half(inning, half, pitcher, starter=True, **kw):
    """Three batters, three outs."""
    return [pa(inning=inning, half=half, pitcher_id=pitcher, is_starter=starter, outs_before=o, **kw)
            for o in range(3)]


def scoring_half(inning, half, pitcher, runs, starter=True, **kw):
    """``runs`` solo homers, then three outs."""
    out = [pa(inning=inning, half=half, pitcher_id=pitcher, is_starter=starter, runs=1, outs=0, **kw)
           for _ in range(runs)]
    return out + quick_half(inning, half, pitcher, starter, **kw)


@functools.lru_cache(maxsize=None)
def _league(seed: int, years: tuple[int, ...]):
    pas = simulate_league(LeagueConfig(years=years, seed=seed))
    starts = build_start_lines(pas)
    return pas, starts


@pytest.fixture(scope="session")
def league():
    """Plate appearances and start lines of the default synthetic league."""
    return _league(0, (2017, 2018, 2019))


@pytest.fixture(scope="session")
def fitted(league):
    pas, starts = league
    return fit_f(starts), fit_g(pas)


@functools.lru_cache(maxsize=None)
def design_2017_2019():
    return schedule_design((2017, 2018, 2019), seed=0)


@functools.lru_cache(maxsize=None)
def study_report(study: int, n_sims: int = 25, seed: int = 0):
    make = SimulationSpec.study1 if study == 1 else SimulationSpec.study2
    return simulate_study(make(n_sims=n_sims, seed=seed), design_2017_2019())


GOLDEN_SEASONS = Path(__file__).parent / "data" / "golden" / "gwar_seasons.csv"


def run_pipeline(work: Path, seed: int = 0) -> Path:
    """synth -> ingest -> fit-f -> fit-g -> fit-park -> gwar inside ``work``."""
    w = str(work)
    steps = [
        ["synth", "--seed", str(seed), "--out", f"{w}/pa_raw.csv"],
        ["ingest", "--input", f"{w}/pa_raw.csv", "--out", f"{w}/data"],
        ["fit-f", "--starts", f"{w}/data/start_lines.csv", "--out", f"{w}/f.json"],
        ["fit-g", "--pa", f"{w}/data/plate_appearances.csv", "--out", f"{w}/g.json"],
        ["fit-park", "--half-innings", f"{w}/data/half_innings.csv", "--years", "2017:2019",
         "--method", "ridge", "--lambda", "0.25", "--out", f"{w}/park.json"],
        ["gwar", "--starts", f"{w}/data/start_lines.csv", "--f", f"{w}/f.json", "--g", f"{w}/g.json",
         "--park", f"{w}/park.json", "--out", f"{w}/games.csv,{w}/seasons.csv"],
    ]
    for argv in steps:
        code = cli_main(argv)
        if code != 0:
            raise RuntimeError(f"pipeline step failed ({code}): {argv}")
    return work


@functools.lru_cache(maxsize=None)
def pipeline_runs() -> tuple[Path, Path]:
    """Two independent same-seed runs of the full pipeline."""
    return tuple(run_pipeline(Path(tempfile.mkdtemp(prefix=f"gridwar-{k}-"))) for k in "ab")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
