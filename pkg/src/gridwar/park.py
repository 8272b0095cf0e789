"""Additive park effects under a park + offense + defense fixed-effects model.

Each half-inning ``i`` is modelled as

    y_i = b0 + park[j(i)] + off[k_off(i)] + def[k_def(i)] + noise

with reference levels dropped (first park, first team-season by default).
Park effects are reported centered, i.e. as runs per half-inning above the
mean park. Estimators: naive OLS (parks only), full OLS, a three-step OLS
and ridge. Multiplicative ESPN/FanGraphs-style factors are provided as
baselines together with the additive transform that puts them on the same
scale.
"""

from __future__ import annotations

import json
import math
import os
import zlib
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import GridWarError, InsufficientDataError, OutOfWindowError, RankDeficiencyError
from .ingest import HalfInningRecord
from .league import COORS_FIELD, division_of, split_team_season

SCHEMA_VERSION = 1
DEFAULT_LAMBDA = 0.25
FANGRAPHS_WEIGHTS = {3: 0.8}
ESTIMATORS = ("naive_ols", "ols", "three_part_ols", "ridge", "espn_additive", "fangraphs_additive")

# relative eigenvalue floor below which a Gram direction counts as null
_NULL_TOL = 1e-10


# --------------------------------------------------------------------------
# design


@dataclass
class ParkDesign:
    """Indicator design ``[1 | P | O | D]`` over half-innings.

    ``parks`` and ``team_seasons`` list every level with the reference level
    first; the reference columns are absent from ``X``. The integer index
    arrays map each row to its levels and are what the simulation and the
    ecological metrics use.
    """

    X: sp.csr_matrix
    y: np.ndarray
    columns: list[str]
    parks: list[str]
    team_seasons: list[str]
    park_index: np.ndarray
    offense_index: np.ndarray
    defense_index: np.ndarray
    home_batting: np.ndarray
    years: tuple[int, int] | None = None
    _gram: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def park_slice(self) -> slice:
        return slice(1, len(self.parks))

    @property
    def offense_slice(self) -> slice:
        start = len(self.parks)
        return slice(start, start + len(self.team_seasons) - 1)

    @property
    def defense_slice(self) -> slice:
        start = len(self.parks) + len(self.team_seasons) - 1
        return slice(start, start + len(self.team_seasons) - 1)

    @property
    def gram(self) -> np.ndarray:
        if self._gram is None:
            self._gram = (self.X.T @ self.X).toarray()
        return self._gram

    def with_response(self, y: np.ndarray) -> "ParkDesign":
        """Same indicator structure, new outcome vector (Gram is shared)."""
        y = np.asarray(y, dtype=float)
        if y.shape != (self.n_rows,):
            raise ValueError("response length does not match design")
        return ParkDesign(self.X, y, self.columns, self.parks, self.team_seasons,
                          self.park_index, self.offense_index, self.defense_index,
                          self.home_batting, self.years, self.gram)


def _indicator(index: np.ndarray, n_levels: int) -> sp.csr_matrix:
    """One-hot block for levels 1..n_levels-1 (level 0 is the reference)."""
    rows = np.nonzero(index > 0)[0]
    return sp.csr_matrix(
        (np.ones(len(rows)), (rows, index[rows] - 1)), shape=(len(index), n_levels - 1)
    )


def design_from_indices(
    parks: Sequence[str],
    team_seasons: Sequence[str],
    park_index: np.ndarray,
    offense_index: np.ndarray,
    defense_index: np.ndarray,
    home_batting: np.ndarray,
    y: np.ndarray | None = None,
    years: tuple[int, int] | None = None,
) -> ParkDesign:
    park_index = np.asarray(park_index, dtype=np.int64)
    offense_index = np.asarray(offense_index, dtype=np.int64)
    defense_index = np.asarray(defense_index, dtype=np.int64)
    n = len(park_index)
    X = sp.hstack(
        [
            sp.csr_matrix(np.ones((n, 1))),
            _indicator(park_index, len(parks)),
            _indicator(offense_index, len(team_seasons)),
            _indicator(defense_index, len(team_seasons)),
        ],
        format="csr",
    )
    columns = (
        ["(Intercept)"]
        + [f"park:{p}" for p in parks[1:]]
        + [f"off:{t}" for t in team_seasons[1:]]
        + [f"def:{t}" for t in team_seasons[1:]]
    )
    y = np.zeros(n) if y is None else np.asarray(y, dtype=float)
    return ParkDesign(X, y, columns, list(parks), list(team_seasons), park_index,
                      offense_index, defense_index, np.asarray(home_batting, dtype=bool), years)


def _ordered_levels(values: Iterable[str], reference: str | None) -> list[str]:
    levels = sorted(set(values))
    if reference is None:
        return levels
    if reference not in levels:
        raise GridWarError(f"reference level {reference!r} not present in data")
    levels.remove(reference)
    return [reference] + levels


def build_park_design(
    half_innings: Sequence[HalfInningRecord],
    years: tuple[int, int] | None = None,
    park_reference: str | None = None,
    team_reference: str | None = None,
) -> ParkDesign:
    """Assemble the indicator design for half-innings in ``years`` (inclusive).

    Reference levels default to the alphabetically first park and team-season
    (``ANA01`` / ``ANA2017`` on 2017-2019 Retrosheet data).
    """
    rows = [h for h in half_innings if years is None or years[0] <= h.year <= years[1]]
    if not rows:
        raise InsufficientDataError(f"no half-innings in window {years}")
    parks = _ordered_levels((h.park for h in rows), park_reference)
    teams = _ordered_levels(
        [h.offense_team_season for h in rows] + [h.defense_team_season for h in rows],
        team_reference,
    )
    p_pos = {p: i for i, p in enumerate(parks)}
    t_pos = {t: i for i, t in enumerate(teams)}
    if years is None:
        ys = [h.year for h in rows]
        years = (min(ys), max(ys))
    return design_from_indices(
        parks,
        teams,
        np.array([p_pos[h.park] for h in rows]),
        np.array([t_pos[h.offense_team_season] for h in rows]),
        np.array([t_pos[h.defense_team_season] for h in rows]),
        np.array([h.home_batting for h in rows]),
        np.array([h.runs for h in rows], dtype=float),
        years,
    )


# --------------------------------------------------------------------------
# effect sets


@dataclass
class ParkEffectSet:
    alpha: dict[str, float]
    estimator: str
    lam: float | None = None
    window: tuple[int, int] | None = None
    centered: bool = True
    y_bar: float | None = None

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise GridWarError(f"unknown estimator {self.estimator!r}")

    def __getitem__(self, park: str) -> float:
        try:
            return self.alpha[park]
        except KeyError:
            raise OutOfWindowError(f"no park effect for {park!r}") from None

    def __contains__(self, park: str) -> bool:
        return park in self.alpha

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "estimator": self.estimator,
            "lambda": self.lam,
            "window": list(self.window) if self.window else None,
            "centered": self.centered,
            "y_bar": self.y_bar,
            "alpha": dict(sorted(self.alpha.items())),
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "ParkEffectSet":
        window = data.get("window")
        return cls(
            alpha={str(k): float(v) for k, v in data["alpha"].items()},
            estimator=data["estimator"],
            lam=data.get("lambda"),
            window=tuple(window) if window else None,
            centered=bool(data.get("centered", True)),
            y_bar=data.get("y_bar"),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ParkEffectSet":
        return cls.from_json(json.loads(Path(path).read_text()))


def center(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    return values - values.mean()


def _effect_set(design: ParkDesign, park_coefs: np.ndarray, estimator: str, lam=None) -> ParkEffectSet:
    full = np.concatenate([[0.0], park_coefs])
    alpha = center(full)
    return ParkEffectSet(
        alpha=dict(zip(design.parks, alpha.tolist())),
        estimator=estimator,
        lam=lam,
        window=design.years,
        centered=True,
        y_bar=float(design.y.mean()) if design.n_rows else None,
    )


# --------------------------------------------------------------------------
# solvers


def _null_space(gram: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(gram)
    scale = max(w[-1], 1.0)
    return v[:, w <= _NULL_TOL * scale]


def _require_estimable(gram: np.ndarray, columns: Sequence[str], target: slice | np.ndarray) -> None:
    """Raise unless the coefficients in ``target`` are identified."""
    null = _null_space(gram)
    if null.shape[1] == 0:
        return
    idx = np.arange(gram.shape[0])[target]
    load = np.linalg.norm(null[idx], axis=1)
    bad = [columns[i] for i, l in zip(idx, load) if l > 1e-6]
    if bad:
        raise RankDeficiencyError(
            "design is rank deficient; non-identified columns: " + ", ".join(bad), bad
        )


def least_squares(gram: np.ndarray, xty: np.ndarray) -> np.ndarray:
    """Minimum-norm solution of the normal equations."""
    beta, *_ = sla.lstsq(gram, xty, cond=_NULL_TOL, lapack_driver="gelsd")
    return beta


def ridge_solve(gram: np.ndarray, xty: np.ndarray, lam: float) -> np.ndarray:
    """Solve ``(X'X + lam * diag(0, 1, ..., 1)) b = X'y`` (intercept unpenalized)."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if lam == 0:
        return least_squares(gram, xty)
    penalized = gram.copy()
    idx = np.arange(1, gram.shape[0])
    penalized[idx, idx] += lam
    try:
        factor = sla.cho_factor(penalized, lower=False, check_finite=True)
        return sla.cho_solve(factor, xty)
    except np.linalg.LinAlgError:
        # intercept direction alone can be singular (empty design); fall back
        return least_squares(penalized, xty)


def _subset_gram(X: sp.csr_matrix, y: np.ndarray):
    return (X.T @ X).toarray(), X.T @ y


# --------------------------------------------------------------------------
# estimators


def fit_park_naive_ols(design: ParkDesign) -> ParkEffectSet:
    """OLS on intercept + park indicators only (team quality ignored)."""
    n_cols = len(design.parks)
    X = design.X[:, :n_cols]
    gram, xty = _subset_gram(X, design.y)
    _require_estimable(gram, design.columns[:n_cols], slice(0, n_cols))
    beta = least_squares(gram, xty)
    return _effect_set(design, beta[1:n_cols], "naive_ols")


def fit_park_ols(design: ParkDesign) -> ParkEffectSet:
    """OLS on the full design; park block must be identified."""
    _require_estimable(design.gram, design.columns, design.park_slice)
    beta = least_squares(design.gram, design.X.T @ design.y)
    return _effect_set(design, beta[design.park_slice], "ols")


def fit_park_ridge(design: ParkDesign, lam: float = DEFAULT_LAMBDA) -> ParkEffectSet:
    """Ridge with unpenalized intercept on unstandardized indicators."""
    if lam == 0:
        _require_estimable(design.gram, design.columns, design.park_slice)
    beta = ridge_solve(design.gram, design.X.T @ design.y, lam)
    return _effect_set(design, beta[design.park_slice], "ridge", lam)


def three_part_steps(design: ParkDesign) -> dict[str, np.ndarray]:
    """Run the three OLS steps, returning every intermediate estimate.

    1. road-batting rows: y ~ 1 + P + O  -> offense coefficients
    2. home-batting rows: y ~ 1 + P + D  -> defense coefficients
    3. all rows: y ~ 1 + b1 * offense_score + b2 * defense_score + P
    """
    road = ~design.home_batting
    home = design.home_batting
    if not road.any() or not home.any():
        raise InsufficientDataError("three-part OLS needs both road- and home-batting half-innings")
    n_p = len(design.parks)
    park_cols = np.arange(0, n_p)
    off_cols = np.arange(design.offense_slice.start, design.offense_slice.stop)
    def_cols = np.arange(design.defense_slice.start, design.defense_slice.stop)

    def step(rows, team_cols):
        cols = np.concatenate([park_cols, team_cols])
        X = design.X[rows][:, cols]
        gram, xty = _subset_gram(X, design.y[rows])
        beta = least_squares(gram, xty)
        return beta[n_p:]

    off_hat = step(road, off_cols)
    def_hat = step(home, def_cols)

    off_score = np.concatenate([[0.0], off_hat])[design.offense_index]
    def_score = np.concatenate([[0.0], def_hat])[design.defense_index]
    X3 = sp.hstack(
        [design.X[:, :1], sp.csr_matrix(off_score[:, None]), sp.csr_matrix(def_score[:, None]),
         design.X[:, 1:n_p]],
        format="csr",
    )
    gram, xty = _subset_gram(X3, design.y)
    names = ["(Intercept)", "offense_score", "defense_score"] + design.columns[1:n_p]
    _require_estimable(gram, names, slice(3, 3 + n_p - 1))
    beta = least_squares(gram, xty)
    return {"offense": off_hat, "defense": def_hat, "weights": beta[1:3], "park": beta[3:]}


def fit_park_three_part_ols(design: ParkDesign) -> ParkEffectSet:
    steps = three_part_steps(design)
    return _effect_set(design, steps["park"], "three_part_ols")


def fit_park(design: ParkDesign, method: str, lam: float = DEFAULT_LAMBDA) -> ParkEffectSet:
    if method == "naive_ols":
        return fit_park_naive_ols(design)
    if method == "ols":
        return fit_park_ols(design)
    if method == "three_part_ols":
        return fit_park_three_part_ols(design)
    if method == "ridge":
        return fit_park_ridge(design, lam)
    raise GridWarError(f"unknown park method {method!r}")


# --------------------------------------------------------------------------
# multiplicative baselines


@dataclass
class TeamAggregate:
    """Season totals for one home park's team."""

    park: str
    home_runs_scored: float
    home_runs_allowed: float
    home_games: int
    road_runs_scored: float
    road_runs_allowed: float
    road_games: int

    @property
    def home_rpg(self) -> float:
        return (self.home_runs_scored + self.home_runs_allowed) / self.home_games

    @property
    def road_rpg(self) -> float:
        return (self.road_runs_scored + self.road_runs_allowed) / self.road_games


def team_aggregates(half_innings: Sequence[HalfInningRecord], years: tuple[int, int] | None = None) -> list[TeamAggregate]:
    """Home/road run totals per team, keyed by the park it plays most home games in."""
    rows = [h for h in half_innings if years is None or years[0] <= h.year <= years[1]]
    game_home: dict[str, tuple[str, str]] = {}
    for h in rows:
        if h.game_id not in game_home:
            home_ts = h.offense_team_season if h.home_batting else h.defense_team_season
            game_home[h.game_id] = (split_team_season(home_ts)[0], h.park)

    scored = defaultdict(lambda: [0.0, 0.0])  # team -> [home, road]
    allowed = defaultdict(lambda: [0.0, 0.0])
    games = defaultdict(lambda: [set(), set()])
    park_counts: dict[str, dict[str, int]] = defaultdict(lambda: defaultdict(int))
    for h in rows:
        home_team, park = game_home[h.game_id]
        off = split_team_season(h.offense_team_season)[0]
        dfn = split_team_season(h.defense_team_season)[0]
        scored[off][0 if off == home_team else 1] += h.runs
        allowed[dfn][0 if dfn == home_team else 1] += h.runs
        for team in (off, dfn):
            games[team][0 if team == home_team else 1].add(h.game_id)
        if h.inning == 1 and h.half == "top":
            park_counts[home_team][park] += 1

    out = []
    for team in sorted(park_counts):
        park = max(sorted(park_counts[team]), key=lambda p: park_counts[team][p])
        home_g, road_g = len(games[team][0]), len(games[team][1])
        if home_g == 0 or road_g == 0:
            continue
        out.append(TeamAggregate(park, scored[team][0], allowed[team][0], home_g,
                                 scored[team][1], allowed[team][1], road_g))
    return out


def espn_park_factor(aggregates: Sequence[TeamAggregate]) -> dict[str, float]:
    """Ratio of home to road runs per game (both teams' runs)."""
    return {a.park: a.home_rpg / a.road_rpg for a in aggregates}


def fangraphs_weight(years: int) -> float:
    try:
        return FANGRAPHS_WEIGHTS[years]
    except KeyError:
        raise GridWarError(
            f"no default regression weight for a {years}-year factor; pass weight explicitly"
        ) from None


def fangraphs_factor(home_rpg: float, road_rpg: float, n_teams: int, weight: float) -> float:
    xi = (home_rpg - road_rpg) / n_teams
    pf_raw = home_rpg / (road_rpg + xi)
    ipf = (pf_raw + 1.0) / 2.0
    return 1.0 - (1.0 - ipf) * weight


def fangraphs_park_factor(
    aggregates: Sequence[TeamAggregate], years: int = 3, weight: float | None = None
) -> dict[str, float]:
    w = fangraphs_weight(years) if weight is None else weight
    n = len(aggregates)
    return {a.park: fangraphs_factor(a.home_rpg, a.road_rpg, n, w) for a in aggregates}


def to_additive(alpha, y_bar: float):
    """Multiplicative factor -> runs per half-inning above average."""
    if isinstance(alpha, Mapping):
        return {k: (v - 1.0) * y_bar for k, v in alpha.items()}
    return (np.asarray(alpha, dtype=float) - 1.0) * y_bar if np.ndim(alpha) else (alpha - 1.0) * y_bar


def fit_park_baseline(
    half_innings: Sequence[HalfInningRecord],
    years: tuple[int, int],
    kind: str,
    y_bar: float | None = None,
    weight: float | None = None,
    centered: bool = True,
) -> ParkEffectSet:
    """ESPN or FanGraphs factors on the additive scale."""
    aggs = team_aggregates(half_innings, years)
    if not aggs:
        raise InsufficientDataError(f"no team aggregates in window {years}")
    if kind == "espn":
        mult = espn_park_factor(aggs)
    elif kind == "fangraphs":
        mult = fangraphs_park_factor(aggs, years[1] - years[0] + 1, weight)
    else:
        raise GridWarError(f"unknown baseline {kind!r}")
    if y_bar is None:
        runs = [h.runs for h in half_innings if years[0] <= h.year <= years[1]]
        y_bar = float(np.mean(runs))
    parks = sorted(mult)
    add = np.array([(mult[p] - 1.0) * y_bar for p in parks])
    if centered:
        add = center(add)
    return ParkEffectSet(dict(zip(parks, add.tolist())), f"{kind}_additive", None, years, centered, y_bar)


# --------------------------------------------------------------------------
# out-of-sample evaluation


def rmse(pred: np.ndarray, obs: np.ndarray) -> float:
    return float(np.sqrt(np.mean((np.asarray(pred) - np.asarray(obs)) ** 2)))


def ecological_rmse(pred: np.ndarray, obs: np.ndarray, groups: np.ndarray) -> float:
    """RMSE between per-group mean prediction and per-group mean observation."""
    groups = np.asarray(groups)
    _, inv = np.unique(groups, return_inverse=True)
    counts = np.bincount(inv)
    diff = np.bincount(inv, weights=np.asarray(pred, float)) / counts - np.bincount(inv, weights=np.asarray(obs, float)) / counts
    return float(np.sqrt(np.mean(diff**2)))


def evaluate_out_of_sample(
    effects: ParkEffectSet,
    half_innings: Sequence[HalfInningRecord],
    test_years: tuple[int, int],
) -> dict[str, float]:
    """Score frozen park effects on a later window.

    Team quality is re-estimated on the test window by OLS of
    ``y ~ 1 + b1 * alpha[park] + O + D`` with alpha held fixed.
    """
    design = build_park_design(half_innings, test_years)
    missing = [p for p in design.parks if p not in effects]
    if missing:
        raise OutOfWindowError("parks without effects: " + ", ".join(missing))
    alpha = np.array([effects[p] for p in design.parks])
    score = alpha[design.park_index]
    n_p = len(design.parks)
    X = sp.hstack([design.X[:, :1], sp.csr_matrix(score[:, None]), design.X[:, n_p:]], format="csr")
    gram, xty = _subset_gram(X, design.y)
    beta = least_squares(gram, xty)
    pred = X @ beta
    return {
        "rmse": rmse(pred, design.y),
        "ecological_rmse": ecological_rmse(pred, design.y, design.park_index),
        "park_weight": float(beta[1]),
        "n": int(design.n_rows),
    }


def evaluate_overall_mean(
    half_innings: Sequence[HalfInningRecord],
    test_years: tuple[int, int],
    value: float | None = None,
) -> dict[str, float]:
    """Constant-prediction baseline (defaults to the test-window mean)."""
    rows = [h for h in half_innings if test_years[0] <= h.year <= test_years[1]]
    obs = np.array([h.runs for h in rows], dtype=float)
    parks = np.array([h.park for h in rows])
    pred = np.full_like(obs, obs.mean() if value is None else value)
    return {"rmse": rmse(pred, obs), "ecological_rmse": ecological_rmse(pred, obs, parks), "n": len(obs)}


DEFAULT_LAMBDA_GRID = (0.01, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0)


def tune_lambda(
    half_innings: Sequence[HalfInningRecord],
    train_years: tuple[int, int],
    valid_years: tuple[int, int],
    grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
) -> dict:
    """Pick the ridge penalty with the lowest validation RMSE."""
    design = build_park_design(half_innings, train_years)
    results = []
    for lam in grid:
        fx = fit_park_ridge(design, lam)
        scores = evaluate_out_of_sample(fx, half_innings, valid_years)
        results.append({"lambda": float(lam), **scores})
    best = min(results, key=lambda r: (r["rmse"], r["lambda"]))
    return {"best_lambda": best["lambda"], "results": results}


# --------------------------------------------------------------------------
# simulation studies

METHODS: dict[str, Callable[[ParkDesign, float], ParkEffectSet]] = {
    "naive_ols": lambda d, lam: fit_park_naive_ols(d),
    "three_part_ols": lambda d, lam: fit_park_three_part_ols(d),
    "ols": lambda d, lam: fit_park_ols(d),
    "ridge": lambda d, lam: fit_park_ridge(d, lam),
}


@dataclass
class Normal:
    mean: float
    sd: float

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.normal(self.mean, self.sd, size) if self.sd > 0 else np.full(size, self.mean, float)


@dataclass
class SimulationSpec:
    """Coefficient distributions for one simulation study.

    ``study="independent"``: every park, offense and defense coefficient is
    drawn independently. ``study="divisional_outlier"``: one park is pinned
    to an outlier value and team qualities share per-division means.
    """

    study: str
    n_sims: int = 25
    seed: int = 0
    lam: float = DEFAULT_LAMBDA
    intercept: float = 0.4
    park: Normal = field(default_factory=lambda: Normal(0.04, 0.065))
    offense: Normal = field(default_factory=lambda: Normal(0.02, 0.045))
    defense: Normal = field(default_factory=lambda: Normal(0.03, 0.07))
    noise_sd: float = 1.0
    # divisional_outlier only
    outlier_park: str = COORS_FIELD
    outlier_value: float = 0.32
    division_offense: Normal = field(default_factory=lambda: Normal(0.02, 0.05))
    division_defense: Normal = field(default_factory=lambda: Normal(0.03, 0.0))
    divisions: dict[str, str] | None = None

    def __post_init__(self):
        if self.study not in ("independent", "divisional_outlier"):
            raise GridWarError(f"unknown simulation study {self.study!r}")
        if self.n_sims < 1:
            raise GridWarError("n_sims must be at least 1")

    @classmethod
    def study1(cls, **kw) -> "SimulationSpec":
        return cls(study="independent", **kw)

    @classmethod
    def study2(cls, **kw) -> "SimulationSpec":
        kw.setdefault("intercept", 0.15)
        kw.setdefault("offense", Normal(0.0, 0.02))
        kw.setdefault("defense", Normal(0.0, 0.033))
        return cls(study="divisional_outlier", **kw)


def derive_rng(seed: int, label: str, index: int) -> np.random.Generator:
    """Independent stream for (seed, purpose, index); order of use is irrelevant."""
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(label.encode()), index]))


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def truncated_normal(rng: np.random.Generator, mean: np.ndarray, sd: float) -> np.ndarray:
    """Normal(mean, sd) conditioned on being >= 0, by rejection."""
    mean = np.asarray(mean, dtype=float)
    out = rng.normal(mean, sd)
    bad = np.nonzero(out < 0)[0]
    while bad.size:
        out[bad] = rng.normal(mean[bad], sd)
        bad = bad[out[bad] < 0]
    return out


def assign_divisions(team_seasons: Sequence[str], divisions: Mapping[str, str] | None = None) -> dict[str, str]:
    """Division label per team-season.

    Real MLB divisions are used when every team code is known; otherwise
    each year's team-seasons are dealt round-robin into six divisions.
    """
    if divisions is not None:
        return dict(divisions)
    out = {}
    known = all(division_of(split_team_season(t)[0]) for t in team_seasons)
    by_year: dict[int, list[str]] = defaultdict(list)
    for t in team_seasons:
        by_year[split_team_season(t)[1]].append(t)
    for year, teams in by_year.items():
        for i, t in enumerate(sorted(teams)):
            div = division_of(split_team_season(t)[0]) if known else f"D{i % 6}"
            out[t] = f"{div}/{year}"
    return out


def draw_truth(spec: SimulationSpec, design: ParkDesign, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """True coefficients for every level (reference levels included)."""
    n_p, n_t = len(design.parks), len(design.team_seasons)
    park = spec.park.draw(rng, n_p)
    if spec.study == "independent":
        off = spec.offense.draw(rng, n_t)
        dfn = spec.defense.draw(rng, n_t)
    else:
        if spec.outlier_park not in design.parks:
            raise GridWarError(f"outlier park {spec.outlier_park!r} not in design")
        park[design.parks.index(spec.outlier_park)] = spec.outlier_value
        divs = assign_divisions(design.team_seasons, spec.divisions)
        labels = sorted(set(divs.values()))
        div_off = dict(zip(labels, spec.division_offense.draw(rng, len(labels))))
        div_def = dict(zip(labels, spec.division_defense.draw(rng, len(labels))))
        off = np.array([div_off[divs[t]] for t in design.team_seasons]) + spec.offense.draw(rng, n_t)
        dfn = np.array([div_def[divs[t]] for t in design.team_seasons]) + spec.defense.draw(rng, n_t)
    return {"intercept": np.array([spec.intercept]), "park": park, "offense": off, "defense": dfn}


def simulate_outcomes(spec: SimulationSpec, design: ParkDesign, truth, rng) -> np.ndarray:
    mean = (
        truth["intercept"][0]
        + truth["park"][design.park_index]
        + truth["offense"][design.offense_index]
        + truth["defense"][design.defense_index]
    )
    return round_half_away(truncated_normal(rng, mean, spec.noise_sd))


def _one_draw(spec: SimulationSpec, design: ParkDesign, m: int) -> dict:
    rng = derive_rng(spec.seed, f"park-sim-{spec.study}", m)
    truth = draw_truth(spec, design, rng)
    y = simulate_outcomes(spec, design, truth, rng)
    sim = design.with_response(y)
    true_alpha = center(truth["park"])
    out = {}
    for name, fit in METHODS.items():
        est = np.array([fit(sim, spec.lam).alpha[p] for p in design.parks])
        err = est - true_alpha
        rec = {"l2": float(np.linalg.norm(err))}
        if spec.study == "divisional_outlier":
            j = design.parks.index(spec.outlier_park)
            rec["outlier_abs"] = float(abs(err[j]))
            rec["non_outlier_l2"] = float(np.linalg.norm(np.delete(err, j)))
        out[name] = rec
    return out


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("GRIDWAR_THREADS", "1")))
    except ValueError:
        return 1


def simulate_study(spec: SimulationSpec, design: ParkDesign, threads: int | None = None) -> dict:
    """Average park-effect recovery error of each estimator over ``n_sims`` draws.

    Draw ``m`` uses its own RNG stream derived from ``(seed, study, m)``, so
    results do not depend on the thread count.
    """
    design.gram  # build once before fanning out
    threads = threads or _threads()
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            draws = list(pool.map(lambda m: _one_draw(spec, design, m), range(spec.n_sims)))
    else:
        draws = [_one_draw(spec, design, m) for m in range(spec.n_sims)]

    summary = {}
    for name in METHODS:
        recs = [d[name] for d in draws]
        s = {"l2": math.fsum(r["l2"] for r in recs) / len(recs)}
        if spec.study == "divisional_outlier":
            s["outlier_abs"] = math.fsum(r["outlier_abs"] for r in recs) / len(recs)
            s["non_outlier_l2"] = math.fsum(r["non_outlier_l2"] for r in recs) / len(recs)
        summary[name] = s
    return {
        "schema_version": SCHEMA_VERSION,
        "study": spec.study,
        "n_sims": spec.n_sims,
        "seed": spec.seed,
        "lambda": spec.lam,
        "n_rows": int(design.n_rows),
        "n_parks": len(design.parks),
        "n_team_seasons": len(design.team_seasons),
        "summary": summary,
        "draws": draws,
    }
