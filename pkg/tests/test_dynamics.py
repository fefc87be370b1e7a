from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from asep_hydro.dynamics import (BoundaryVariant, Configuration, EventSource, ModelParams,
                                 boundary_rates, detailed_balance_ratio, dump_snapshot,
                                 load_snapshot, micro_time, replica_streams, run_events,
                                 run_until, sample_initial, step)
from asep_hydro.lattice import LatticeSpec

DRIFT = ModelParams.from_delta((0.4, 0.0, 0.0))


def _bond_id(lat, coords, axis):
    """Event id of the bond (x, x + e_axis)."""
    return lat.encode(coords) * lat.dim + axis - 1


def test_params_require_unit_mean_jump_rate():
    with pytest.raises(ValueError, match="must equal 2"):
        ModelParams((1.2,), (0.9,))


def test_drift_aligned_needs_positive_drift():
    with pytest.raises(ValueError, match="delta_1 > 0"):
        ModelParams.from_delta((0.0, 0.0))
    with pytest.raises(ValueError):
        ModelParams.from_delta((-0.2,))


def test_reversible_default_exponent_and_factor():
    p = ModelParams.from_delta((0.0,), variant=BoundaryVariant.REVERSIBLE)
    assert p.speedup_exponent == 2.0
    assert p.boundary_factor(0.1) == 1
    q = ModelParams.from_delta((0.0,), variant="reversible", speedup_exponent=3)
    assert q.boundary_factor(Fraction(1, 10)) == 10


def test_bulk_rates_follow_occupation():
    lat = LatticeSpec(2, 3)
    params = ModelParams((1.2, 1.0, 1.0), (0.8, 1.0, 1.0), 0.0, 0.0)
    occ = np.zeros(lat.site_count, dtype=np.uint8)
    x, y = (0, 0, 0), (1, 0, 0)
    occ[lat.encode(x)] = 1
    rates = Configuration(lat, params, occ).rates()
    assert rates[_bond_id(lat, x, 1)] == pytest.approx(1.2)  # particle at x, hole at x + e1
    occ[lat.encode(y)] = 1
    rates = Configuration(lat, params, occ).rates()
    assert rates[_bond_id(lat, x, 1)] == 0.0
    occ[lat.encode(x)] = 0
    rates = Configuration(lat, params, occ).rates()
    assert rates[_bond_id(lat, x, 1)] == pytest.approx(0.8)  # particle at x + e1 jumps back


def test_drift_aligned_boundary_rates():
    lat = LatticeSpec(10, 1)
    params = ModelParams.from_delta((0.4,), b_left=0.0, b_right=0.3)
    create, annihilate = boundary_rates(lat, params)
    assert create[0] == pytest.approx(0.2)  # delta1 / 2 at b = 0
    assert annihilate[1] == pytest.approx(0.4 * (0.5 - 0.03)) == pytest.approx(0.188)
    assert create[1] == 0.0 and annihilate[0] == 0.0


def test_creation_needs_empty_site():
    lat = LatticeSpec(2, 1)
    occ = np.zeros(lat.site_count, dtype=np.uint8)
    n_bonds = lat.site_count
    assert Configuration(lat, ModelParams.from_delta((0.4,)), occ).rates()[n_bonds] == pytest.approx(0.2)
    occ[0] = 1
    assert Configuration(lat, ModelParams.from_delta((0.4,)), occ).rates()[n_bonds] == 0.0


def test_boundary_rates_reject_large_b():
    with pytest.raises(ValueError, match="1/\\(2 eps\\)"):
        boundary_rates(LatticeSpec(2, 1), ModelParams.from_delta((0.4,), b_left=1.0))


def test_boundary_profile_is_evaluated_per_face_site():
    lat = LatticeSpec(3, 2)
    params = ModelParams.from_delta((0.4, 0.0), b_left=lambda u: u[:, 1], b_right=0.0)
    create, _ = boundary_rates(lat, params)
    u2 = lat.axis_positions(1)
    np.testing.assert_allclose(create[:lat.face_size], 0.4 * (0.5 + lat.eps * u2))


@pytest.mark.parametrize("rho,expected", [
    (Fraction(1, 2), 1),
    (Fraction(3, 4), 3),
    (Fraction(1, 2) + Fraction(1, 10) * Fraction(1, 5), Fraction(13, 12)),
])
def test_detailed_balance_ratio_exact(rho, expected):
    params = ModelParams.from_delta((0.4,), variant="reversible", speedup_exponent=3)
    assert detailed_balance_ratio(params, rho, eps=Fraction(1, 10)) == expected


def test_detailed_balance_not_applicable_to_drift_aligned():
    with pytest.raises(ValueError):
        detailed_balance_ratio(ModelParams.from_delta((0.4,)), 0.5)


def test_sample_initial_fair_coin_mean():
    lat = LatticeSpec(8, 3)
    occ = sample_initial(lat, 0.0, 0)
    se = 0.5 / np.sqrt(lat.site_count)
    assert abs(occ.mean() - 0.5) < 4 * se


def test_sample_initial_near_full():
    lat = LatticeSpec(4, 2)
    occ = sample_initial(lat, (0.5 - 1e-9) * lat.inv_eps, 1)
    assert occ.sum() == lat.site_count


def test_sample_initial_is_deterministic():
    lat = LatticeSpec(2, 3)
    assert np.array_equal(sample_initial(lat, 0.0, 42), sample_initial(lat, 0.0, 42))


def test_sample_initial_rejects_saturating_profile():
    with pytest.raises(ValueError, match="outside"):
        sample_initial(LatticeSpec(4, 1), 0.5 * 4, 0)


def test_empty_lattice_reversible_only_flips():
    lat = LatticeSpec(1, 1)
    params = ModelParams((1.0,), (1.0,), variant="reversible")
    cfg = Configuration(lat, params, np.zeros(3, dtype=np.uint8))
    rates = cfg.rates()
    assert np.all(rates[:lat.site_count] == 0) and rates[lat.site_count:].sum() > 0
    rec = step(cfg, EventSource.from_seed(0))
    assert rec.kind == "flip" and rec.delta == 1


def test_full_lattice_only_annihilation():
    lat = LatticeSpec(2, 2)
    cfg = Configuration(lat, ModelParams.from_delta((0.4, 0.0)), np.ones(lat.site_count, dtype=np.uint8))
    rates = cfg.rates()
    n_bonds = lat.site_count * lat.dim
    f = lat.face_size
    assert np.all(rates[:n_bonds] == 0)
    assert np.all(rates[n_bonds:n_bonds + f] == 0)  # no creation
    assert np.all(rates[n_bonds + f:] > 0)  # annihilation on the right face


def test_rate_cache_matches_full_recompute():
    lat = LatticeSpec(2, 3)
    params = ModelParams((1.2, 0.7, 1.0), (0.8, 1.3, 1.0), b_left=0.3, b_right=-0.2)
    cfg = Configuration(lat, params, sample_initial(lat, 0.0, 3))
    run_events(cfg, EventSource.from_seed(3, 1), 10_000)
    assert cfg.cache_matches()
    assert cfg.particle_count == int(cfg.occupancy.sum())


def test_exchanges_conserve_particles():
    lat = LatticeSpec(2, 2)
    params = ModelParams.from_delta((0.4, 0.0), b_left=0.5, b_right=0.5)
    cfg = Configuration(lat, params, sample_initial(lat, 0.0, 5))
    src = EventSource.from_seed(5, 1)
    faces = set(range(lat.face_size)) | set(range(lat.site_count - lat.face_size, lat.site_count))
    for _ in range(3000):
        before = cfg.particle_count
        rec = step(cfg, src)
        if rec.kind == "exchange":
            assert rec.delta == 0 and cfg.particle_count == before
        else:
            assert abs(rec.delta) == 1 and cfg.particle_count == before + rec.delta
            assert rec.site in faces
    assert cfg.particle_count == int(cfg.occupancy.sum())
    assert cfg.events.total == 3000


def test_waiting_times_are_exponential_at_frozen_rate():
    # scale each waiting time by the total rate in force before the event
    lat = LatticeSpec(2, 2)
    cfg = Configuration(lat, ModelParams.from_delta((0.4, 0.0)),
                        sample_initial(lat, 0.0, 9))
    src = EventSource.from_seed(9, 1)
    n = 100_000
    scaled = np.empty(n)
    for i in range(n):
        rate, t0 = cfg.total_rate, cfg.time
        step(cfg, src)
        scaled[i] = (cfg.time - t0) * rate
    assert stats.kstest(scaled, "expon").pvalue > 0.01
    # the same draws at total rate R = 5 have mean 1/5
    waits = scaled / 5.0
    assert abs(waits.mean() - 0.2) < 3 * waits.std(ddof=1) / np.sqrt(n)


def test_run_until_zero_time_is_identity():
    lat = LatticeSpec(2, 3)
    occ = sample_initial(lat, 0.0, 1)
    cfg = Configuration(lat, DRIFT, occ)
    res = run_until(cfg, EventSource.from_seed(1), 0.0, [0.0])
    assert res.events == 0
    assert np.array_equal(res.snapshots[0], occ) and np.array_equal(res.final, occ)


def test_micro_time_scaling():
    assert micro_time(1.0, 0.25) == 16.0
    lat = LatticeSpec(4, 1)
    cfg = Configuration(lat, ModelParams.from_delta((0.4,)), sample_initial(lat, 0.0, 2))
    res = run_until(cfg, EventSource.from_seed(2), 1.0)
    assert res.micro_time == 16.0


def test_event_count_matches_mean_total_rate():
    # under the product measure at 1/2 with b = 0 (stationary), E[#events in T] = E[R] * T
    lat = LatticeSpec(2, 3)
    params = ModelParams.from_delta((0.4, 0.0, 0.0))
    side, f = lat.side, lat.face_size
    bonds = f * (side - 1) + 2 * lat.site_count
    mean_rate = 0.5 * bonds + 2 * f * 0.4 / 4
    horizon = 2.0
    counts = []
    for r in range(50):
        init, waits, picks = replica_streams(77, r)
        cfg = Configuration(lat, params, sample_initial(lat, 0.0, init))
        counts.append(run_until(cfg, EventSource(waits, picks), horizon * lat.eps**2).events)
    counts = np.array(counts, dtype=float)
    se = counts.std(ddof=1) / np.sqrt(len(counts))
    assert abs(counts.mean() - mean_rate * horizon) < 3 * se


def test_runs_are_reproducible():
    lat = LatticeSpec(3, 2)
    params = ModelParams.from_delta((0.4, 0.0), b_left=0.2, b_right=0.2)

    def run():
        init, waits, picks = replica_streams(123, 4)
        cfg = Configuration(lat, params, sample_initial(lat, 0.0, init))
        return run_until(cfg, EventSource(waits, picks), 0.5, [0.1, 0.3])

    a, b = run(), run()
    assert a.events == b.events
    assert all(np.array_equal(x, y) for x, y in zip(a.snapshots + [a.final], b.snapshots + [b.final]))


def test_snapshot_roundtrip(tmp_path):
    lat = LatticeSpec(3, 3)
    occ = sample_initial(lat, 0.0, 8)
    dump_snapshot(tmp_path / "s.snap", lat, occ, 99, 12.5)
    lat2, occ2, seed, t = load_snapshot(tmp_path / "s.snap")
    assert lat2 == lat and seed == 99 and t == 12.5
    assert np.array_equal(occ, occ2)


def test_snapshot_rejects_foreign_file(tmp_path):
    (tmp_path / "x.snap").write_bytes(b"\0" * 64)
    with pytest.raises(ValueError):
        load_snapshot(tmp_path / "x.snap")
