import random

import pytest
from hypothesis import given, settings, strategies as st

from minlpkit.interval import INF, Interval
from minlpkit.sepa import (LOST_VIOLATION, NO_BOUND, CleanupStats, CutPool, Rejected, RowPrep,
                           cleanup, is_strong)


def test_range_reduction_then_scaling():
    r = RowPrep({0: 1e8, 1: 1.0}, 5.0)
    # at this point dropping x1 would lose 10 units of violation, dropping x2 only 0.5
    out = cleanup(r, [Interval(0, 1), Interval(0, 1)], point=[1e-7, 0.5])
    assert not isinstance(out, Rejected)
    assert set(out.coefs) == {0}
    assert out.coefs[0] == pytest.approx(1e8 * 2 ** -14)
    assert out.side == pytest.approx(5 * 2 ** -14)
    assert out.local and out.bounds_used == [1]


def test_range_reduction_without_bounds_rejected():
    r = RowPrep({0: 1e8, 1: 1.0}, 5.0)
    out = cleanup(r, [Interval(-INF, INF), Interval(-INF, INF)])
    assert isinstance(out, Rejected) and out.reason == NO_BOUND


def test_near_integer_coefficient_relaxed_with_bound():
    r = RowPrep({0: 2.0 + 1e-10, 1: 1.0}, 3.0)
    box = [Interval(-1, 4), Interval(0, 1)]
    out = cleanup(r, box)
    assert out.coefs[0] == 2.0
    # the bound moved the side: (2 - a) * x <= (2 - a) * 4 was added
    assert out.side == pytest.approx(3.0 + (2.0 - (2.0 + 1e-10)) * -1, abs=1e-15)
    rng = random.Random(0)
    for _ in range(1000):
        x = [rng.uniform(-1, 4), rng.uniform(0, 1)]
        if r.activity(x) <= r.side:
            assert out.activity(x) <= out.side + 1e-12


def test_rhs_near_zero():
    out = cleanup(RowPrep({0: 1.0}, 5e-10), [Interval(0, 1)])
    assert out.side == 1.1e-9
    out = cleanup(RowPrep({0: 1.0}, -5e-10), [Interval(0, 1)])
    assert out.side == 0.0


def test_ge_rows_turned_around():
    out = cleanup(RowPrep({0: 1.0, 1: 2.0}, 1.0, ">="), [Interval(0, 1)] * 2)
    assert out.sense == "<=" and out.coefs == {0: -1.0, 1: -2.0} and out.side == -1.0


def test_lost_violation_rejected_and_counted():
    stats = CleanupStats()
    out = cleanup(RowPrep({0: 1.0}, 1.0), [Interval(0, 2)], point=[1.0 + 1e-12],
                  min_violation=1e-6, stats=stats)
    assert isinstance(out, Rejected) and out.reason == LOST_VIOLATION
    assert stats.rejected[LOST_VIOLATION] == 1 and "lost-violation=1" in stats.row()


def test_weak_mode_scales_violation_up():
    r = RowPrep({0: 1.0, 1: 1.0}, 1.0)
    x = [0.5 + 1e-6, 0.5]
    out = cleanup(r, [Interval(0, 1)] * 2, point=x, strong=False)
    assert out.violation(x) >= 1e-4 * 0.5
    assert out.max_abs() < 10 / 1e-6


def test_is_strong_examples():
    # underestimator closing 25% / 10% of the gap h - w = 1
    assert is_strong(0.25, 1.0, 0.0, "under")
    assert not is_strong(0.10, 1.0, 0.0, "under")
    # tangent of a convex function at the point closes the whole gap
    assert is_strong(1.0, 1.0, 0.0, "under")
    assert is_strong(0.7, 0.0, 1.0, "over")


def test_cut_pool():
    pool = CutPool()
    g = RowPrep({0: 1.0}, 1.0)
    assert pool.add(g) and not pool.add(RowPrep({0: 1.0}, 1.0))
    assert not pool.add(RowPrep({0: 1.0}, 2.0, local=True))
    assert pool.violated([2.0], 1e-9) == [g] and pool.violated([0.0], 1e-9) == []
    assert len(pool) == 1


def random_row(rng):
    k = rng.randint(1, 5)
    coefs = {}
    for j in rng.sample(range(6), k):
        mag = 10 ** rng.uniform(-9, 9)
        if rng.random() < 0.2:
            mag = rng.randint(1, 5) + rng.choice((1, -1)) * 10 ** rng.uniform(-13, -9)
        coefs[j] = rng.choice((1, -1)) * mag
    side = rng.choice([rng.uniform(-5, 5), rng.uniform(-1e-9, 1e-9), 0.0])
    box = []
    for _ in range(6):
        lo = rng.uniform(-3, 3)
        box.append(Interval(lo, lo + rng.uniform(0.1, 4)) if rng.random() < 0.9 else Interval(-INF, INF))
    return RowPrep(coefs, side), box


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 10 ** 6), st.booleans())
def test_property_cleanup_postconditions(seed, strong):
    rng = random.Random(seed)
    r, box = random_row(rng)
    out = cleanup(r, box, strong=strong)
    if isinstance(out, Rejected):
        return
    mags = [abs(a) for a in out.coefs.values()]
    if mags:
        assert max(mags) / min(mags) <= 1e7
        if strong:
            assert 1e-4 <= max(mags) <= 1e4
    for a in out.coefs.values():
        assert a == round(a) or abs(a - round(a)) > 1e-9
    assert not (0 < out.side <= 1e-9)
    # validity at points of the box that satisfy the raw row
    for _ in range(100):
        x = [rng.uniform(b.lo, b.hi) if b.is_bounded else rng.uniform(-10, 10) for b in box]
        if r.to_le().activity(x) <= r.to_le().side:
            scale = max([abs(out.side)] + [abs(a * x[j]) for j, a in out.coefs.items()] + [1e-300])
            assert out.activity(x) <= out.side + 1e-12 * scale


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_property_cleanup_idempotent(seed):
    rng = random.Random(seed)
    r, box = random_row(rng)
    once = cleanup(r, box)
    if isinstance(once, Rejected):
        return
    twice = cleanup(once, box)
    assert twice.coefs == pytest.approx(once.coefs) and twice.side == pytest.approx(once.side)
