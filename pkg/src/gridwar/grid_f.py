"""Context-neutral win probability f(I, R) by fixed-effects logistic regression."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConvergenceError, InsufficientDataError, OutOfWindowError, RankDeficiencyError, SeparationError
from .ingest import END_OF_INNING, LEAGUES, StartLine

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
R_MAX = 10
INNINGS = tuple(range(1, 10))
RUNS = tuple(range(0, R_MAX + 1))
SEPARATION_BOUND = 15.0


@dataclass(frozen=True)
class FContext:
    is_home: bool
    league: str
    year: int


@dataclass
class FDesign:
    X: np.ndarray
    y: np.ndarray
    columns: list[str]
    years: list[int]
    leagues: list[str]
    home_levels: list[bool]


def _levels_present(values: Iterable, name: str, expected: Sequence) -> None:
    present = set(values)
    missing = [v for v in expected if v not in present]
    if missing:
        raise InsufficientDataError(f"no training starts at {name} level(s) {missing}")


def build_f_design(starts: Sequence[StartLine], years: tuple[int, int] | None = None,
                   validate: bool = True) -> FDesign:
    """One-hot design for the win model.

    Only starts ending at an inning boundary are used; home starts through
    nine innings are dropped (the bottom of the ninth is not always played)
    and runs above ``R_MAX`` share the ``R_MAX`` level. Reference levels:
    inning 1, zero runs, away, AL, earliest year. Home/league columns are
    omitted when the data holds a single level. ``validate=False`` skips the
    identifiability checks (for inspecting tiny designs).
    """
    rows = [
        s for s in starts
        if s.exit_kind == END_OF_INNING
        and not (s.innings == 9 and s.is_home)
        and (years is None or years[0] <= s.year <= years[1])
    ]
    if not rows:
        raise InsufficientDataError("no eligible starts for the win model")
    y = np.array([s.team_won for s in rows], dtype=float)
    if validate:
        if len(np.unique(y)) < 2:
            raise InsufficientDataError("response has a single value; win model is not identifiable")
        _levels_present((s.innings for s in rows), "inning", INNINGS)
        _levels_present((min(s.runs_allowed, R_MAX) for s in rows), "runs", RUNS)
    yrs = sorted({s.year for s in rows})
    leagues = [lg for lg in LEAGUES if any(s.league == lg for s in rows)]
    home_levels = sorted({s.is_home for s in rows})

    columns = ["(Intercept)"]
    columns += [f"inning[{i}]" for i in INNINGS[1:]]
    columns += [f"runs[{r}]" for r in RUNS[1:]]
    if len(home_levels) > 1:
        columns.append("home")
    if len(leagues) > 1:
        columns.append(f"league[{leagues[1]}]")
    columns += [f"year[{yr}]" for yr in yrs[1:]]

    pos = {c: j for j, c in enumerate(columns)}
    X = np.zeros((len(rows), len(columns)))
    X[:, 0] = 1.0
    for i, s in enumerate(rows):
        for name in _active_columns(s.is_home, s.league, s.year, s.innings, s.runs_allowed):
            j = pos.get(name)
            if j is not None:
                X[i, j] = 1.0
    return FDesign(X, y, columns, yrs, leagues, home_levels)


def _active_columns(is_home: bool, league: str, year: int, inning: int, runs: int) -> list[str]:
    names = [f"inning[{inning}]", f"runs[{min(runs, R_MAX)}]", f"year[{year}]"]
    if is_home:
        names.append("home")
    names.append(f"league[{league}]")
    return names


# --------------------------------------------------------------------------
# IRLS


def _sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def log_likelihood(X: np.ndarray, y: np.ndarray, beta: np.ndarray) -> float:
    eta = X @ beta
    # log(1 + e^eta) computed stably
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def fit_logistic(
    X: np.ndarray,
    y: np.ndarray,
    tol: float = 1e-8,
    max_iter: int = 50,
    names: Sequence[str] | None = None,
) -> np.ndarray:
    """Bernoulli maximum likelihood under the logit link by Newton/IRLS.

    Stops when the log-likelihood improves by less than ``tol``. A coefficient
    leaving ``[-15, 15]`` is treated as quasi-separation.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    names = list(names) if names is not None else [f"x{j}" for j in range(X.shape[1])]
    beta = np.zeros(X.shape[1])
    ll = log_likelihood(X, y, beta)
    trace = [ll]
    for _ in range(max_iter):
        p = _sigmoid(X @ beta)
        w = p * (1.0 - p)
        hess = X.T @ (X * w[:, None])
        grad = X.T @ (y - p)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            raise RankDeficiencyError("information matrix is singular", names) from None
        # step halving guards the rare overshoot
        t = 1.0
        for _ in range(30):
            cand = beta + t * step
            ll_new = log_likelihood(X, y, cand)
            if ll_new >= ll - 1e-12:
                break
            t *= 0.5
        beta = cand
        trace.append(ll_new)
        big = np.abs(beta) > SEPARATION_BOUND
        if big.any():
            j = int(np.argmax(np.abs(beta)))
            raise SeparationError(
                f"quasi-separation: coefficient {names[j]} = {beta[j]:.3g} exceeds {SEPARATION_BOUND}",
                names[j],
            )
        if abs(ll_new - ll) < tol:
            return beta
        ll = ll_new
    raise ConvergenceError(f"logistic fit did not converge in {max_iter} iterations", trace)


# --------------------------------------------------------------------------
# grid


@dataclass
class WinProbGrid:
    """Fitted f(I, R); immutable once built."""

    columns: list[str]
    coefficients: np.ndarray
    years: list[int]
    leagues: list[str]
    home_levels: list[bool]
    r_max: int = R_MAX
    n_train: int = 0
    _pos: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        self._pos = {c: j for j, c in enumerate(self.columns)}

    @property
    def named_coefficients(self) -> dict[str, float]:
        return dict(zip(self.columns, self.coefficients.tolist()))

    @property
    def contexts(self) -> list[FContext]:
        return [FContext(h, lg, yr) for yr in self.years for lg in self.leagues for h in self.home_levels]

    def check_context(self, ctx: FContext) -> None:
        if ctx.year not in self.years:
            raise OutOfWindowError(f"year {ctx.year} outside training years {self.years}")
        if ctx.league not in self.leagues:
            raise OutOfWindowError(f"league {ctx.league!r} not in training data")
        if ctx.is_home not in self.home_levels:
            raise OutOfWindowError(f"is_home={ctx.is_home} not in training data")

    def linear_predictor(self, ctx: FContext, inning: int, runs: int) -> float:
        eta = self.coefficients[0]
        for name in _active_columns(ctx.is_home, ctx.league, ctx.year, inning, runs):
            j = self._pos.get(name)
            if j is not None:
                eta += self.coefficients[j]
        return float(eta)

    def table(self, ctx: FContext) -> np.ndarray:
        """9 x (r_max + 1) array of f values for one context."""
        self.check_context(ctx)
        return np.array([[eval_f(self, ctx, i, r) for r in RUNS] for i in INNINGS])

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "win_prob_grid",
            "r_max": self.r_max,
            "n_train": self.n_train,
            "years": self.years,
            "leagues": self.leagues,
            "home_levels": self.home_levels,
            "reference": {"inning": 1, "runs": 0, "home": False, "league": "AL", "year": self.years[0]},
            "coefficients": self.named_coefficients,
            "values": [
                {"is_home": c.is_home, "league": c.league, "year": c.year,
                 "f": self.table(c).tolist()}
                for c in self.contexts
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "WinProbGrid":
        coefs = data["coefficients"]
        return cls(
            columns=list(coefs),
            coefficients=np.array(list(coefs.values())),
            years=[int(y) for y in data["years"]],
            leagues=list(data["leagues"]),
            home_levels=[bool(h) for h in data["home_levels"]],
            r_max=int(data.get("r_max", R_MAX)),
            n_train=int(data.get("n_train", 0)),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "WinProbGrid":
        return cls.from_json(json.loads(Path(path).read_text()))


def fit_f(
    starts: Sequence[StartLine],
    years: tuple[int, int] | None = None,
    tol: float = 1e-8,
    max_iter: int = 50,
) -> WinProbGrid:
    design = build_f_design(starts, years)
    beta = fit_logistic(design.X, design.y, tol, max_iter, design.columns)
    log.info("fitted win model on %d starts", len(design.y))
    return WinProbGrid(design.columns, beta, design.years, design.leagues, design.home_levels,
                       n_train=len(design.y))


def eval_f(grid: WinProbGrid, ctx: FContext, inning: int, runs: int) -> float:
    """Win probability after allowing ``runs`` through ``inning`` complete innings."""
    if inning not in INNINGS:
        raise ValueError(f"inning must be in 1..9, got {inning}")
    if runs < 0:
        raise ValueError("runs must be non-negative")
    grid.check_context(ctx)
    return float(_sigmoid(grid.linear_predictor(ctx, inning, min(int(runs), grid.r_max))))


def interpolate_f(grid: WinProbGrid, ctx: FContext, inning: int, runs: float) -> float:
    """Piecewise-linear extension of R -> f(I, R) to fractional runs."""
    runs = min(max(float(runs), 0.0), float(grid.r_max))
    lo = int(np.floor(runs))
    frac = runs - lo
    f_lo = eval_f(grid, ctx, inning, lo)
    if frac == 0.0:
        return f_lo
    return (1.0 - frac) * f_lo + frac * eval_f(grid, ctx, inning, lo + 1)


def jensen_gap(grid: WinProbGrid, ctx: FContext, inning: int, runs: Sequence[int]) -> float:
    """Mean of f over games minus f at the mean number of runs."""
    runs = [int(r) for r in runs]
    if not runs:
        raise ValueError("runs must be non-empty")
    # f(mean) is the chord through the two grid points around the mean, and the
    # chord is affine, so the gap is the average distance of each game above it.
    # Games on either chord end contribute exactly zero.
    lo = sum(runs) // len(runs)
    f_lo = eval_f(grid, ctx, inning, lo)
    slope = eval_f(grid, ctx, inning, lo + 1) - f_lo
    return math.fsum(eval_f(grid, ctx, inning, r) - (f_lo + (r - lo) * slope) for r in runs) / len(runs)


def is_discretely_convex(values: Sequence[float], atol: float = 0.0) -> bool:
    v = np.asarray(values, dtype=float)
    return bool(np.all(np.diff(v, 2) >= -atol))


def row_is_convex(grid: WinProbGrid, ctx: FContext, inning: int) -> bool:
    """Convexity of the row including its flat continuation past ``r_max``."""
    row = [eval_f(grid, ctx, inning, r) for r in range(grid.r_max + 2)]
    return is_discretely_convex(row)
