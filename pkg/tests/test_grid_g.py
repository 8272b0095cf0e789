import random

import numpy as np
import pytest

from conftest import pa, quick_half
from gridwar.errors import InsufficientDataError, OutOfWindowError
from gridwar.grid_g import R_CAP, InningRunDist, eval_g, fit_g
from gridwar.ingest import BASE_STATES


def _type_a(gid, inning):
    # single, out, double play: nothing scores
    return [
        pa(game_id=gid, inning=inning, outs=0),
        pa(game_id=gid, inning=inning, base="100", outs=1),
        pa(game_id=gid, inning=inning, base="100", outs_before=1, outs=2),
    ]


def _type_b(gid, inning):
    # single, out, double, sacrifice fly, out: one run scores from (100, 1)
    return [
        pa(game_id=gid, inning=inning, outs=0),
        pa(game_id=gid, inning=inning, base="100", outs=1),
        pa(game_id=gid, inning=inning, base="100", outs_before=1, outs=0),
        pa(game_id=gid, inning=inning, base="011", outs_before=1, runs=1, outs=1),
        pa(game_id=gid, inning=inning, base="010", outs_before=2, outs=1),
    ]


def twenty_inning_fixture():
    """7 type-A, 3 type-B and 10 one-two-three half-innings, plus ignored ninth innings."""
    pas = []
    for k in range(7):
        pas += _type_a(f"A{k}", 1 + k % 8)
    for k in range(3):
        pas += _type_b(f"B{k}", 2 + k)
    for k in range(10):
        pas += quick_half(1 + k % 8, "bottom", "p", game_id=f"C{k}")
    # ninth innings never enter the tally
    pas += [pa(game_id="N", inning=9, runs=4, outs=0)] + quick_half(9, "top", "p", game_id="N")
    return pas


# hand tally: state -> {runs to end of inning: count}
HAND = {
    ("000", 0): {0: 17, 1: 3},
    ("000", 1): {0: 10},
    ("000", 2): {0: 10},
    ("100", 0): {0: 7, 1: 3},
    ("100", 1): {0: 7, 1: 3},
    ("011", 1): {1: 3},
    ("010", 2): {0: 3},
}


def test_hand_tally_fixture():
    g = fit_g(twenty_inning_fixture(), min_count=0)
    for (bs, o), tally in HAND.items():
        n = sum(tally.values())
        assert g.counts[BASE_STATES.index(bs), o] == n
        expected = np.zeros(R_CAP + 1)
        for r, c in tally.items():
            expected[r] = c / n
        np.testing.assert_array_equal(g.cell(bs, o), expected)
    assert g.counts.sum() == sum(sum(t.values()) for t in HAND.values())


def test_fixture_cell_probability():
    g = fit_g(twenty_inning_fixture(), min_count=0)
    assert eval_g(g, "100", 1, 1) == 0.3
    assert eval_g(g, "100", 1, 0) == 0.7


def test_scoreless_innings_point_mass():
    pas = []
    for k in range(20):
        pas += _type_a(f"A{k}", 1) + quick_half(2, "top", "p", game_id=f"A{k}")
    g = fit_g(pas, min_count=0)
    for s, bs in enumerate(BASE_STATES):
        for o in range(3):
            if g.counts[s, o]:
                assert eval_g(g, bs, o, 0) == 1.0


def test_overflow_folds_into_last_bin():
    big = [pa(runs=1, outs=0) for _ in range(15)] + quick_half(1, "top", "p")
    g = fit_g(big, min_count=0)
    cell = g.cell("000", 0)
    # 16 plate appearances open at (000, 0); those facing 15, 14 and 13 runs to come share the last bin
    assert cell[R_CAP] == 3 / 16
    assert cell.sum() == pytest.approx(1.0, abs=1e-12)


def test_outside_support_is_zero():
    g = fit_g(twenty_inning_fixture(), min_count=0)
    assert eval_g(g, "000", 0, 20) == 0.0
    assert eval_g(g, "000", 0, -1) == 0.0


def test_invalid_state_errors():
    g = fit_g(twenty_inning_fixture(), min_count=0)
    with pytest.raises(ValueError):
        eval_g(g, "120", 0, 0)
    with pytest.raises(ValueError):
        eval_g(g, "000", 3, 0)
    with pytest.raises(OutOfWindowError):
        eval_g(g, "111", 2, 0)


def test_deficient_cells_listed():
    with pytest.raises(InsufficientDataError) as err:
        fit_g(twenty_inning_fixture())
    assert "(111,0)=0" in str(err.value)


def test_empty_window():
    with pytest.raises(ValueError):
        fit_g(twenty_inning_fixture(), years=(2020, 2019))


def test_year_window_filters():
    g = fit_g(twenty_inning_fixture(), years=(2018, 2018), min_count=0)
    assert g.counts.sum() == 0


def test_normalization_on_league(fitted):
    _, g = fitted
    for bs in BASE_STATES:
        for o in range(3):
            assert abs(sum(eval_g(g, bs, o, r) for r in range(R_CAP + 1)) - 1.0) <= 1e-12
    assert np.all(g.probs >= 0)


def test_modes_on_league(fitted):
    # bases empty: nothing most likely; bases loaded, nobody out: one run most likely
    _, g = fitted
    assert int(np.argmax(g.cell("000", 0))) == 0
    assert int(np.argmax(g.cell("111", 0))) == 1


def test_permuted_games_identical(league):
    pas, _ = league
    sub = pas[:60000]
    games = {}
    for p in sub:
        games.setdefault(p.game_id, []).append(p)
    order = list(games)
    random.Random(3).shuffle(order)
    shuffled = [p for gid in order for p in games[gid]]
    a = fit_g(sub, min_count=0)
    b = fit_g(shuffled, min_count=0)
    np.testing.assert_array_equal(a.counts, b.counts)
    np.testing.assert_array_equal(np.nan_to_num(a.probs, nan=-1), np.nan_to_num(b.probs, nan=-1))


def test_json_round_trip(fitted, tmp_path):
    _, g = fitted
    p = tmp_path / "g.json"
    g.save(p)
    back = InningRunDist.load(p)
    np.testing.assert_array_equal(back.probs, g.probs)
    np.testing.assert_array_equal(back.counts, g.counts)
