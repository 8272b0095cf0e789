"""Empirical distribution of runs scored from a base-out state to inning end."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InsufficientDataError, OutOfWindowError
from .ingest import BASE_STATES, HALVES, PlateAppearance, parse_base_state

SCHEMA_VERSION = 1
R_CAP = 13
MAX_FIT_INNING = 8
DEFAULT_MIN_COUNT = 100


@dataclass
class InningRunDist:
    """``probs[s, o, r]`` for base state index ``s`` (order of ``BASE_STATES``).

    Cells with no observations hold NaN and cannot be evaluated.
    """

    probs: np.ndarray
    counts: np.ndarray
    years: tuple[int, int] | None = None

    def cell(self, base_state: str, outs: int) -> np.ndarray:
        try:
            s = BASE_STATES.index(parse_base_state(base_state))
        except ValueError:
            raise ValueError(f"invalid base state {base_state!r}") from None
        if outs not in (0, 1, 2):
            raise ValueError(f"outs must be 0, 1 or 2, got {outs}")
        if self.counts[s, outs] == 0:
            raise OutOfWindowError(f"no observations for state ({base_state}, {outs} out)")
        return self.probs[s, outs]

    def to_json(self) -> dict:
        cells = []
        for s, bs in enumerate(BASE_STATES):
            for o in range(3):
                cells.append({
                    "base_state": bs,
                    "outs": o,
                    "count": int(self.counts[s, o]),
                    "probs": None if self.counts[s, o] == 0 else self.probs[s, o].tolist(),
                })
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "inning_run_dist",
            "r_cap": R_CAP,
            "years": list(self.years) if self.years else None,
            "cells": cells,
        }

    @classmethod
    def from_json(cls, data: dict) -> "InningRunDist":
        probs = np.full((len(BASE_STATES), 3, R_CAP + 1), np.nan)
        counts = np.zeros((len(BASE_STATES), 3), dtype=np.int64)
        for c in data["cells"]:
            s = BASE_STATES.index(c["base_state"])
            counts[s, c["outs"]] = c["count"]
            if c["probs"] is not None:
                probs[s, c["outs"]] = c["probs"]
        years = data.get("years")
        return cls(probs, counts, tuple(years) if years else None)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "InningRunDist":
        return cls.from_json(json.loads(Path(path).read_text()))


def tally_runs_to_end(pas: Sequence[PlateAppearance], years: tuple[int, int] | None = None) -> np.ndarray:
    """Raw (state, outs, capped runs) counts from innings 1-8.

    Within a half-inning, plate appearances are taken in input order.
    """
    tally = np.zeros((len(BASE_STATES), 3, R_CAP + 1), dtype=np.int64)
    halves: dict[tuple[str, int, int], list[PlateAppearance]] = {}
    for pa in pas:
        if pa.inning > MAX_FIT_INNING:
            continue
        if years is not None and not years[0] <= pa.year <= years[1]:
            continue
        halves.setdefault((pa.game_id, pa.inning, HALVES.index(pa.half)), []).append(pa)
    for group in halves.values():
        remaining = sum(pa.runs_on_play for pa in group)
        for pa in group:
            s = BASE_STATES.index(pa.base_state_before)
            tally[s, pa.outs_before, min(remaining, R_CAP)] += 1
            remaining -= pa.runs_on_play
    return tally


def fit_g(
    pas: Sequence[PlateAppearance],
    years: tuple[int, int] | None = None,
    min_count: int = DEFAULT_MIN_COUNT,
) -> InningRunDist:
    """Normalize run-to-end-of-inning counts per base-out state.

    Runs beyond ``R_CAP`` are folded into the last bin so every cell sums
    to one.
    """
    if years is not None and years[0] > years[1]:
        raise ValueError(f"empty year window {years}")
    tally = tally_runs_to_end(pas, years)
    counts = tally.sum(axis=2)
    deficient = [
        f"({bs},{o})={counts[s, o]}"
        for s, bs in enumerate(BASE_STATES) for o in range(3)
        if counts[s, o] < min_count
    ]
    if deficient:
        raise InsufficientDataError(
            f"cells below minimum count {min_count}: " + ", ".join(deficient)
        )
    with np.errstate(invalid="ignore", divide="ignore"):
        probs = tally / counts[:, :, None]
    probs[counts == 0] = np.nan
    return InningRunDist(probs, counts, years)


def eval_g(dist: InningRunDist, base_state: str, outs: int, runs: int) -> float:
    """P(exactly ``runs`` more runs this inning | base state, outs)."""
    cell = dist.cell(base_state, outs)
    if runs < 0 or runs > R_CAP:
        return 0.0
    return float(cell[runs])
