import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spillover.dataio import EventSurprises, Month
from spillover.shockid import (
    EmptyAdmissibleSetError,
    InadmissibleAngleError,
    InsufficientEventsError,
    NonContiguousArcError,
    NotPositiveDefiniteError,
    RotationGrid,
    ZeroVarianceError,
    admissible_angles,
    cholesky2,
    decompose,
    decomposition,
    draw_admissible,
    identify,
    median_rotation,
    poor_mans_split,
    read_decomposition_report,
    rotation,
    sample_covariance,
    write_decomposition_report,
)

SPACING = 2 * math.pi / 999


def events(pairs, start=dt.date(2001, 1, 10)):
    dates = [start + dt.timedelta(days=30 * i) for i in range(len(pairs))]
    a = np.asarray(pairs, dtype=float).reshape(-1, 2)
    return EventSurprises(dates, a[:, 0], a[:, 1])


def brute_force_admissible(C, n=999):
    """Independent scalar re-evaluation of the four inequalities."""
    out = []
    for k in range(n):
        t = -math.pi + 2 * math.pi * k / n
        c, s = math.cos(t), math.sin(t)
        a11, a12 = C[0][0] * c, -C[0][0] * s
        a21, a22 = C[1][0] * c + C[1][1] * s, -C[1][0] * s + C[1][1] * c
        if a11 > 0 and a21 < 0 and a12 > 0 and a22 > 0:
            out.append(t)
    return out


def whitened(n, seed):
    z = np.random.default_rng(seed).standard_normal((n, 2))
    z -= z.mean(axis=0)
    L = np.linalg.cholesky(z.T @ z / (n - 1))
    return np.linalg.solve(L, z.T).T


# --- grid ---------------------------------------------------------------------


def test_grid_spacing_and_range():
    g = RotationGrid()
    a = g.angles
    assert a.size == 999
    assert a[0] == -math.pi and a[-1] < math.pi
    np.testing.assert_allclose(np.diff(a), g.spacing, rtol=0, atol=1e-12)
    assert g.spacing == 2 * math.pi / 999


# --- covariance and Cholesky ---------------------------------------------------


def test_sample_covariance_hand_values():
    np.testing.assert_allclose(sample_covariance(events([(2, 1), (0, -1), (-2, 0)])), [[4, 1], [1, 1]])


def test_singular_covariance_flagged_downstream():
    S = sample_covariance(events([(1, 1), (-1, -1)]))
    np.testing.assert_allclose(S, [[2, 2], [2, 2]])
    with pytest.raises(NotPositiveDefiniteError):
        cholesky2(S)


def test_sample_covariance_errors():
    with pytest.raises(ZeroVarianceError):
        sample_covariance(events([(1, 0), (-1, 0)]))
    with pytest.raises(InsufficientEventsError):
        sample_covariance(events([(1, 2)]))


@pytest.mark.parametrize(
    "S, C",
    [
        ([[1, 0], [0, 1]], [[1, 0], [0, 1]]),
        ([[4, 2], [2, 5]], [[2, 0], [1, 2]]),
    ],
)
def test_cholesky2_examples(S, C):
    out = cholesky2(np.array(S, float))
    np.testing.assert_allclose(out, C, atol=1e-15)
    np.testing.assert_allclose(out @ out.T, S, atol=1e-12)


def test_cholesky2_rejects_non_spd():
    with pytest.raises(NotPositiveDefiniteError):
        cholesky2(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(NotPositiveDefiniteError):
        cholesky2(np.array([[-1.0, 0.0], [0.0, 1.0]]))


# --- admissible set -------------------------------------------------------------


def test_identity_admissible_quarter_circle():
    adm = admissible_angles(np.eye(2))
    oracle = brute_force_admissible([[1, 0], [0, 1]])
    assert adm.size == len(oracle)
    np.testing.assert_allclose(adm, oracle, rtol=0, atol=1e-12)
    assert adm[0] > -math.pi / 2 and adm[-1] < 0
    assert adm[0] - SPACING <= -math.pi / 2 and adm[-1] + SPACING >= 0


def test_correlated_arc_matches_grid_oracle():
    C = [[1, 0], [0.9, 0.43589]]
    adm = admissible_angles(np.array(C))
    oracle = brute_force_admissible(C)
    assert adm.size == len(oracle)
    np.testing.assert_allclose(adm, oracle, rtol=0, atol=1e-12)
    assert abs(adm[0] - (-1.5708)) <= SPACING
    assert abs(adm[-1] - (-1.1214)) <= SPACING


def test_steep_negative_loading_arc_rechecks():
    C = np.array([[1, 0], [-5, 0.1]])
    adm = admissible_angles(C)
    assert adm.size > 0
    for t in adm:
        A = C @ rotation(t)
        assert A[0, 0] > 0 and A[1, 0] < 0 and A[0, 1] > 0 and A[1, 1] > 0


def test_empty_admissible_set_named():
    # arc narrower than the grid spacing
    C = np.array([[1, 0], [-1e4, 1e-3]])
    with pytest.raises(EmptyAdmissibleSetError):
        admissible_angles(C)


@settings(max_examples=200, deadline=None)
@given(
    st.floats(0.05, 20), st.floats(0.05, 20), st.floats(-0.98, 0.98), st.floats(0.01, 100)
)
def test_admissible_set_equivariant_to_rate_scale(sd_ir, sd_eq, rho, c):
    S = np.array([[sd_ir**2, rho * sd_ir * sd_eq], [rho * sd_ir * sd_eq, sd_eq**2]])
    D = np.diag([c, 1.0])
    try:
        a = admissible_angles(cholesky2(S))
    except EmptyAdmissibleSetError:
        return
    b = admissible_angles(cholesky2(D @ S @ D))
    np.testing.assert_array_equal(a, b)


# --- median ---------------------------------------------------------------------


def test_identity_median_near_minus_quarter_pi():
    theta = median_rotation(admissible_angles(np.eye(2)))
    assert abs(theta + math.pi / 4) <= SPACING


def test_correlated_median():
    adm = admissible_angles(np.array([[1, 0], [0.9, 0.43589]]))
    assert abs(median_rotation(adm) - (-1.3461)) <= SPACING


def test_median_singleton_and_even_count():
    assert median_rotation([0.3]) == 0.3
    g = RotationGrid().angles
    assert median_rotation(g[100:104]) == g[101]


def test_median_handles_arc_crossing_pi():
    g = RotationGrid().angles
    arc = np.concatenate([g[:3], g[-4:]])  # wraps through +-pi
    theta = median_rotation(arc)
    assert theta == g[-1]


def test_median_rejects_split_arcs_and_empty():
    g = RotationGrid().angles
    with pytest.raises(NonContiguousArcError):
        median_rotation(np.concatenate([g[10:20], g[40:50]]))
    with pytest.raises(EmptyAdmissibleSetError):
        median_rotation([])


# --- decomposition -------------------------------------------------------------


def test_identity_decomposition_formula():
    U = whitened(200, 0)
    ev = events(U)
    s = decompose(ev, -math.pi / 4)
    d = U - U.mean(axis=0)
    np.testing.assert_allclose(s.mp, (d[:, 0] - d[:, 1]) / math.sqrt(2), atol=1e-12)
    np.testing.assert_allclose(s.info, (d[:, 0] + d[:, 1]) / math.sqrt(2), atol=1e-12)


def test_synthesis_then_inversion_recovers_shocks():
    S = np.array([[4.0, -0.5], [-0.5, 0.5]])
    C = cholesky2(S)
    th0 = median_rotation(admissible_angles(C))
    U = whitened(500, 3)
    M = U @ (C @ rotation(th0)).T + np.array([0.1, -0.2])
    s = decompose(events(M), th0)
    np.testing.assert_allclose(np.column_stack([s.mp, s.info]), U, atol=1e-8)


def test_zero_demeaned_surprises_give_zero_shocks():
    U = whitened(50, 1)
    ev = events(U)
    d = decomposition(ev)
    flat = events(np.tile(d.mean, (50, 1)))
    s = decompose(flat, d.theta_star, d)
    assert np.all(s.mp == 0) and np.all(s.info == 0)


def test_inadmissible_angle_rejected():
    ev = events(whitened(30, 2))
    with pytest.raises(InadmissibleAngleError):
        decompose(ev, math.pi / 4)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.integers(5, 200))
def test_decomposition_invariants(seed, n):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, 2)) @ rng.standard_normal((2, 2)) + rng.standard_normal(2)
    ev = events(M)
    try:
        d, s = identify(ev)
    except (EmptyAdmissibleSetError, NotPositiveDefiniteError):
        return
    u = np.column_stack([s.mp, s.info])
    np.testing.assert_allclose(np.var(u, axis=0, ddof=1), 1.0, atol=1e-8)
    assert abs(np.corrcoef(u.T)[0, 1]) <= 1e-8
    recon = u @ (d.chol @ rotation(d.theta_star)).T + d.mean
    assert np.abs(recon - M).max() <= 1e-10 * max(1.0, np.abs(M).max())
    assert d.theta_star in d.admissible


# --- poor man's sign restriction -------------------------------------------------


@pytest.mark.parametrize(
    "ir, eq, mp, info",
    [(5, -0.3, 5, 0), (5, 0.3, 0, 5), (0, 0.2, 0, 0), (-4, -0.1, 0, -4), (-4, 0.1, -4, 0), (3, 0, 0, 0)],
)
def test_poor_mans_cases(ir, eq, mp, info):
    s = poor_mans_split(events([(ir, eq)]))
    assert s.mp.tolist() == [mp] and s.info.tolist() == [info]


@given(
    st.lists(st.tuples(st.floats(-50, 50, allow_subnormal=False), st.floats(-5, 5)), min_size=1, max_size=50),
    st.floats(0.01, 100),
)
def test_poor_mans_exclusive_and_scale_stable(pairs, c):
    ev = events(pairs)
    s = poor_mans_split(ev)
    assert np.all(s.mp * s.info == 0)
    t = poor_mans_split(ev.scaled(ir_factor=c))
    assert np.array_equal(s.mp != 0, t.mp != 0) and np.array_equal(s.info != 0, t.info != 0)


# --- draws ------------------------------------------------------------------------


def test_draw_singleton():
    assert draw_admissible([0.25], 5, 1).tolist() == [0.25] * 5


def test_draw_frequencies_and_determinism():
    a = np.linspace(-1, 0, 100)
    d = draw_admissible(a, 100_000, 42)
    counts = np.bincount(np.searchsorted(a, d), minlength=100) / d.size
    assert np.all(np.abs(counts - 0.01) <= 0.005)
    assert set(d) <= set(a)
    np.testing.assert_array_equal(d, draw_admissible(a, 100_000, 42))


def test_draw_errors():
    with pytest.raises(EmptyAdmissibleSetError):
        draw_admissible([], 3, 0)
    with pytest.raises(ValueError):
        draw_admissible([0.1], 0, 0)


# --- export ---------------------------------------------------------------------


def test_decomposition_report_round_trip(tmp_path):
    ev = events(whitened(12, 4) @ np.array([[2.0, 0.1], [-0.5, 0.3]]))
    d, s = identify(ev)
    p = tmp_path / "shocks.csv"
    write_decomposition_report(ev, s, p)
    header = p.read_text().splitlines()[0]
    assert header == "date,ir,eq,mp,info,method,theta_star"
    ev2, s2 = read_decomposition_report(p)
    np.testing.assert_array_equal(s2.mp, s.mp)
    assert s2.provenance["theta_star"] == d.theta_star


def test_monthly_aggregation_of_shocks():
    ev = EventSurprises(
        [dt.date(2004, 6, 5), dt.date(2004, 6, 28), dt.date(2004, 8, 2)],
        np.array([5.0, 2.0, -1.0]),
        np.array([-0.3, 0.2, 0.1]),
    )
    m = poor_mans_split(ev).to_monthly(Month(2004, 6), Month(2004, 8))
    assert m.mp.tolist() == [5.0, 0.0, -1.0]
    assert m.info.tolist() == [2.0, 0.0, 0.0]
    assert m.frequency == "month"
