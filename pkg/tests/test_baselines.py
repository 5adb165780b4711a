import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lcris import channel as ch
from lcris.baselines import initial_panel, optimal_controller, realistic_controller
from lcris.env import LcConfig, expand_columns, map_action, reduce_to_columns, slot_quality
from lcris.lc_dynamics import TWO_PI, LcTimeConstants, PanelState, reachable_bounds
from lcris.scene import Snapshot

CFG = ch.ChannelConfig()
SPEC = CFG.array()


def _link(h):
    h = np.asarray(h, dtype=complex)
    return ch.LinkChannel(h=h, gain=1.0, k_factor=0.0, nlos=h.copy())


def crafted_snapshot(column_targets):
    """Channels whose co-phasing solution is exactly ``column_targets`` per column."""
    w = expand_columns(column_targets, SPEC.n_z)
    chans = {"A-U": _link([0.0]), "A-R": _link(np.full(SPEC.n, 1e-5)),
             "R-U": _link(1e-5 * np.exp(-1j * w))}
    geom = {t: ch.LinkGeometry(10.0, tag=t) for t in ch.LINK_TAGS}
    return Snapshot(0, np.zeros(3), 20.0, geom, chans, chans, {t: 10.0 for t in ch.LINK_TAGS})


def random_snapshot(rng):
    chans = {"A-U": _link(1e-7 * ch.sample_nlos(1, 1.0, rng)),
             "A-R": _link(1e-5 * ch.sample_nlos(SPEC.n, 1.0, rng)),
             "R-U": _link(1e-4 * ch.sample_nlos(SPEC.n, 1.0, rng))}
    geom = {t: ch.LinkGeometry(10.0, tag=t) for t in ch.LINK_TAGS}
    return Snapshot(0, np.zeros(3), 20.0, geom, chans, chans, {t: 10.0 for t in ch.LINK_TAGS})


def panel_at(phases, tau=LcTimeConstants()):
    return PanelState(phases=np.asarray(phases, dtype=float), tau=tau)


def test_optimal_identity_and_timing():
    snap = random_snapshot(np.random.default_rng(0))
    phases, timing = optimal_controller(snap, 10e-3)
    amp = abs(snap.h_au.h[0] + ch.effective_channel(snap.h_ar, snap.h_ru, phases, SPEC))
    assert amp == pytest.approx(ch.coherent_bound(snap.h_au, snap.h_ar, snap.h_ru, SPEC), rel=1e-9)
    assert (timing.t_c, timing.t_k) == (0.0, 10e-3)


def test_realistic_reachable_target():
    start = np.full(30, np.pi)
    # rising from pi for 4 ms
    target = TWO_PI - np.pi * np.exp(-4 / 9)
    achieved, timing, panel = realistic_controller(crafted_snapshot(np.full(30, target)),
                                                   panel_at(start))
    np.testing.assert_allclose(achieved, target, atol=1e-9)
    assert timing.t_c == pytest.approx(4e-3, rel=1e-9)
    assert timing.t_k == pytest.approx(6e-3, rel=1e-9)
    np.testing.assert_array_equal(panel.phases, achieved)


def test_realistic_halts_at_slot_end():
    achieved, timing, _ = realistic_controller(crafted_snapshot(np.full(30, np.pi / 2)),
                                               panel_at(np.full(30, np.pi)))
    np.testing.assert_allclose(achieved, 2.22532350296957968, atol=1e-12)
    assert timing.t_c == 10e-3 and timing.t_k == 0.0


def test_realistic_hold():
    start = np.linspace(0.5, 5.5, 30)
    achieved, timing, _ = realistic_controller(crafted_snapshot(start), panel_at(start))
    np.testing.assert_allclose(achieved, start, atol=1e-9)
    assert timing.t_c == pytest.approx(0.0, abs=1e-9)


def test_realistic_mixed_columns():
    start = np.full(30, np.pi)
    targets = np.full(30, np.pi)
    targets[3] = np.pi / 2  # unreachable within the slot
    targets[7] = TWO_PI - np.pi * np.exp(-4 / 9)
    achieved, timing, _ = realistic_controller(crafted_snapshot(targets), panel_at(start))
    assert achieved[3] == pytest.approx(np.pi * np.exp(-10 / 29))
    assert achieved[7] == pytest.approx(targets[7])
    assert timing.t_k == 0.0


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=40)
def test_realistic_stays_in_reachable_bounds(seed):
    rng = np.random.default_rng(seed)
    panel = initial_panel(LcConfig(), 30, rng)
    achieved, timing, _ = realistic_controller(random_snapshot(rng), panel)
    lo, hi = reachable_bounds(panel, panel.t_s)
    assert np.all(achieved >= lo - 1e-9) and np.all(achieved <= hi + 1e-9)
    assert 0 <= timing.t_c <= panel.t_s
    assert timing.t_c + timing.t_k == pytest.approx(panel.t_s)


def test_fast_lc_recovers_columnwise_optimum():
    fast = LcTimeConstants(1e-9, 1e-9)
    rng = np.random.default_rng(5)
    snap = random_snapshot(rng)
    start = rng.uniform(0.1, 6.0, 30)
    achieved, timing, _ = realistic_controller(snap, panel_at(start, fast))
    cols = reduce_to_columns(optimal_controller(snap, 10e-3)[0])
    np.testing.assert_allclose(achieved, np.clip(cols, 1e-3, TWO_PI - 1e-3), atol=1e-9)
    assert timing.t_k == pytest.approx(10e-3, abs=1e-7)


def test_optimal_dominates_on_random_snapshots():
    rng = np.random.default_rng(123)
    for _ in range(1000):
        snap = random_snapshot(rng)
        best, _ = slot_quality(snap, optimal_controller(snap, 10e-3)[0], CFG, SPEC)
        panel = initial_panel(LcConfig(), 30, rng)
        real, _, _ = realistic_controller(snap, panel)
        other = map_action(rng.uniform(-1, 1, 30), panel)
        for cols in (real, other):
            snr, _ = slot_quality(snap, expand_columns(cols), CFG, SPEC)
            assert snr <= best * (1 + 1e-9)
