import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cloakcheck.errors import DegreeMismatch, NoBoundedBranch
from cloakcheck.radial_dtn import (
    FROBENIUS,
    DtNSpectrum,
    Piece,
    RadialScenario,
    analytic_near_cloak_mu,
    analytic_truncated_mu,
    catalog_names,
    cloak_scenario,
    compare_spectra,
    cylinder_scenario,
    dtn_spectrum,
    fitted_exponent,
    flux_decay_profile,
    homogeneous_scenario,
    indicial_exponents,
    interior_invisibility_test,
    load_scenario,
    loglog_slope,
    mode_energy,
    near_cloak_scenario,
    near_cloak_spectrum,
    recognize_family,
    scenario_from_dict,
    solve_mode,
)

RADII_50 = np.linspace(1.0, 2.0, 52)[1:-1]


class TestExamples:
    def test_homogeneous_n1(self):
        m = solve_mode(homogeneous_scenario(), 1)
        r = np.linspace(0.1, 2.0, 9)
        np.testing.assert_allclose(m.R(r), r / 2, rtol=1e-10)
        assert m.R_prime(2.0) == pytest.approx(0.5, rel=1e-10)
        assert m.mu == pytest.approx(0.5, rel=1e-10)

    def test_cloak_n3(self):
        m = solve_mode(cloak_scenario(), 3)
        assert m.exponent == pytest.approx(3.0, abs=1e-9)
        np.testing.assert_allclose(m.R(RADII_50), (RADII_50 - 1) ** 3, rtol=1e-10)

    def test_cylinder_n1(self):
        m = solve_mode(cylinder_scenario(1.0), 1)
        assert m.exponent == pytest.approx(math.sqrt(2), rel=1e-10)
        np.testing.assert_allclose(m.R(RADII_50), (RADII_50 - 1) ** math.sqrt(2), rtol=1e-9)
        assert m.mu == pytest.approx(math.sqrt(2) / 4, rel=1e-10)

    def test_spectra_closed_forms(self):
        n = np.arange(21)
        np.testing.assert_allclose(dtn_spectrum(homogeneous_scenario()).mu, n / 2)
        np.testing.assert_allclose(dtn_spectrum(cloak_scenario()).mu, n / 2)
        np.testing.assert_allclose(dtn_spectrum(cylinder_scenario(1.0), 5).mu,
                                   np.sqrt(n[:6] * (n[:6] + 1)) / 4)


ORACLES = [
    ("homogeneous", homogeneous_scenario, lambda r, n, lam: (r / 2) ** n),
    ("cloak", cloak_scenario, lambda r, n, lam: (r - 1) ** n),
    ("cyl0.2", lambda: cylinder_scenario(0.2), lambda r, n, lam: (r - 1) ** lam),
    ("cyl0.5", lambda: cylinder_scenario(0.5), lambda r, n, lam: (r - 1) ** lam),
    ("cyl1", lambda: cylinder_scenario(1.0), lambda r, n, lam: (r - 1) ** lam),
]


@pytest.mark.parametrize("name,make,closed", ORACLES, ids=[o[0] for o in ORACLES])
def test_oracle_agreement_at_50_radii(name, make, closed):
    s = make()
    r = np.linspace(s.r_core, 2.0, 52)[1:-1]
    rho = s.family.get("rho")
    worst = 0.0
    for n in range(21):
        lam = math.sqrt(n * (n + 1)) / rho if rho else n
        m = solve_mode(s, n)
        want = closed(r, n, lam)
        got = m.R(r)
        # relative error, floored at the smallest normal scale of R
        mask = want > 1e-250
        worst = max(worst, float(np.max(np.abs(got[mask] - want[mask]) / want[mask])))
    assert worst <= 1e-8


@pytest.mark.parametrize("rho", [0.2, 0.5, 1.0])
@pytest.mark.parametrize("n", [1, 2, 5, 10])
def test_fitted_cylinder_exponents(rho, n):
    m = solve_mode(cylinder_scenario(rho), n)
    lam = math.sqrt(n * (n + 1)) / rho
    assert fitted_exponent(m) == pytest.approx(lam, rel=1e-6)


def test_numeric_equals_closed_path():
    for s in (homogeneous_scenario(), cloak_scenario(), cylinder_scenario(0.5)):
        a = dtn_spectrum(s, 20, method="numeric")
        b = dtn_spectrum(s, 20, method="closed")
        assert a.method == "numeric" and b.method == "closed"
        np.testing.assert_allclose(a.mu[1:], b.mu[1:], rtol=1e-10)


def test_ode_residual():
    # (alpha R')' = n(n+1) beta R, checked with centred differences of the flux
    for s, n in ((cloak_scenario(), 4), (cylinder_scenario(0.5), 3), (homogeneous_scenario(), 2)):
        m = solve_mode(s, n)
        r = np.linspace(s.r_core + 0.2, 1.9, 12)
        h = 1e-5
        lhs = (m.flux(r + h) - m.flux(r - h)) / (2 * h)
        rhs = n * (n + 1) * np.array([m.beta(x) for x in r]) * m.R(r)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-6)


class TestInvariants:
    @pytest.mark.parametrize("make", [homogeneous_scenario, cloak_scenario,
                                      lambda: cylinder_scenario(0.2),
                                      lambda: near_cloak_scenario(0.2)])
    def test_mu0_zero_and_increasing(self, make):
        spec = dtn_spectrum(make(), 10, method="numeric")
        assert abs(spec.mu[0]) <= 1e-10
        assert np.all(np.diff(spec.mu) > 0)

    @pytest.mark.parametrize("make", [cloak_scenario, lambda: cylinder_scenario(0.2),
                                      lambda: cylinder_scenario(1.0)])
    @pytest.mark.parametrize("n", [1, 2, 7])
    def test_bounded_branch_selected(self, make, n):
        s = make()
        ind = indicial_exponents(s.pieces[0], n)
        assert ind.opposite_signs
        m = solve_mode(s, n)
        r = s.r_core + np.geomspace(1e-8, 1.0, 30)
        R = m.R(r)
        assert np.all(np.isfinite(R)) and np.abs(R).max() <= 1.0 + 1e-12
        # inner limit is the constant 0 for n >= 1, flux vanishes there
        assert abs(m.R(s.r_core + 1e-12)) < 1e-9
        assert abs(m.flux(s.r_core + 1e-9)) < 1e-8

    def test_continuity_across_fill_interface(self):
        s = cloak_scenario().with_fill(1.0, 1e-2)
        m = solve_mode(s, 2)
        r_i = s.r_core
        # d log R / dr is about 1e4 just outside, so probe very close
        assert m.R(r_i - 1e-13) == pytest.approx(m.R(r_i + 1e-13), rel=1e-7)
        assert m.flux(r_i - 1e-13) == pytest.approx(m.flux(r_i + 1e-13), rel=1e-7)

    def test_power_form(self):
        # boundary energy = volume energy; the sphere area factor R_out^2 = 4
        rng = np.random.default_rng(11)
        for s in (homogeneous_scenario(), cloak_scenario(), cylinder_scenario(0.5)):
            a = rng.standard_normal(11)
            modes = [solve_mode(s, n) for n in range(11)]
            boundary = sum(4 * m.mu * a[n] ** 2 for n, m in enumerate(modes))
            volume = sum(mode_energy(m) * a[n] ** 2 for n, m in enumerate(modes))
            assert boundary == pytest.approx(volume, rel=1e-8)

    def test_deterministic(self):
        a = interior_invisibility_test(cloak_scenario(), [0.1, 1.0], (1e-3,))
        b = interior_invisibility_test(cloak_scenario(), [0.1, 1.0], (1e-3,))
        assert a.rows == b.rows


class TestCompare:
    def test_self(self):
        s = dtn_spectrum(cylinder_scenario(0.3), 8)
        c = compare_spectra(s, s)
        assert c.max_rel_diff == 0 and c.verdict == "equal"

    def test_cloak_equals_homogeneous(self):
        c = compare_spectra(dtn_spectrum(cloak_scenario(), 20, method="numeric"),
                            dtn_spectrum(homogeneous_scenario(), 20, method="numeric"), 1e-8)
        assert c.verdict == "equal"

    def test_cylinder_distinct(self):
        a = dtn_spectrum(cylinder_scenario(0.2), 20)
        c = compare_spectra(a, dtn_spectrum(homogeneous_scenario(), 20))
        assert c.verdict == "distinct"
        n = np.arange(1, 21)
        np.testing.assert_allclose(a.mu[1:], 0.05 * np.sqrt(n * (n + 1)), rtol=1e-12)

    def test_degree_mismatch(self):
        with pytest.raises(DegreeMismatch):
            compare_spectra(dtn_spectrum(cloak_scenario(), 3),
                            dtn_spectrum(cloak_scenario(), 4))


class TestNearCloak:
    EPS = (0.4, 0.2, 0.1, 0.05)

    def test_converges_monotonically(self):
        gaps = [abs(solve_mode(near_cloak_scenario(e), 1).mu - 0.5) for e in self.EPS]
        assert all(b < a for a, b in zip(gaps, gaps[1:]))

    @pytest.mark.parametrize("eps", EPS)
    def test_matches_transmission_oracle(self, eps):
        for n in (1, 3):
            mu = solve_mode(near_cloak_scenario(eps), n).mu
            assert mu == pytest.approx(analytic_near_cloak_mu(eps, (1.0, 1.0), n), abs=1e-8)

    def test_gap_ratio(self):
        g = [solve_mode(near_cloak_scenario(e), 1).mu - 0.5 for e in (0.4, 0.2)]
        o = [analytic_near_cloak_mu(e, (1.0, 1.0), 1) - 0.5 for e in (0.4, 0.2)]
        assert g[0] / g[1] == pytest.approx(o[0] / o[1], abs=1e-8)

    def test_not_perfect(self):
        a = solve_mode(near_cloak_scenario(0.2, (1.0, 1.0)), 1).mu
        b = solve_mode(near_cloak_scenario(0.2, (10.0, 10.0)), 1).mu
        assert b - a > 1e-6

    def test_spectrum_wrapper(self):
        spec = near_cloak_spectrum(0.1, n_max=3)
        assert spec.mu[1] == pytest.approx(analytic_near_cloak_mu(0.1, (1.0, 1.0), 1), abs=1e-8)


class TestInvisibility:
    def test_cloak(self):
        rep = interior_invisibility_test(cloak_scenario(), [0.1, 1.0, 10.0])
        assert rep.decreasing()
        for d in rep.deltas:
            mus = [analytic_truncated_mu("cloak", {}, d, f, 1) for f in (0.1, 1.0, 10.0)]
            assert rep.spreads[(d, 1)] == pytest.approx(max(mus) - min(mus), abs=1e-8)

    def test_cylinder_small_rho(self):
        rep = interior_invisibility_test(cylinder_scenario(0.2), [0.1, 1.0, 10.0], degrees=(1, 2))
        fills = (0.1, 1.0, 10.0)
        for n in (1, 2):
            # the exact spreads (~delta^(2 lambda)) sit far below roundoff here
            assert max(rep.spread_sequence(n)) < 1e-12
            exact = []
            for d in rep.deltas:
                mus = [analytic_truncated_mu("cylinder", {"rho": 0.2}, d, f, n) for f in fills]
                exact.append(max(mus) - min(mus))
            assert all(b <= a for a, b in zip(exact, exact[1:]))

    def test_rejects_regular_scenarios(self):
        with pytest.raises(ValueError):
            interior_invisibility_test(homogeneous_scenario(), [1.0, 2.0])


class TestFlux:
    def test_cloak_n1_value(self):
        m = solve_mode(cloak_scenario(), 1)
        assert m.flux(1.01) == pytest.approx(2e-4, rel=1e-8)

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_decay_slope(self, n):
        m = solve_mode(cloak_scenario(), n)
        r = np.geomspace(1e-3, 1e-1, 30) + 1.0
        prof = flux_decay_profile(m, r)
        slope = loglog_slope([x - 1 for x, _ in prof], [f for _, f in prof])
        assert slope == pytest.approx(n + 1, abs=0.01)

    def test_homogeneous_flux_does_not_vanish(self):
        m = solve_mode(homogeneous_scenario(), 1)
        np.testing.assert_allclose(m.flux([0.5, 1.0, 1.5]), np.array([0.5, 1.0, 1.5]) ** 2 / 2,
                                   rtol=1e-9)


class TestScenarios:
    def test_catalog(self):
        assert catalog_names() == ["cloak3d", "cylinder", "homogeneous", "nearcloak"]
        assert recognize_family(load_scenario("cloak3d"))[0] == "cloak"
        assert recognize_family(load_scenario("cylinder", rho=0.5)) == ("cylinder", {"rho": 0.5})
        assert load_scenario("nearcloak", epsilon=0.2).family["epsilon"] == 0.2

    def test_to_dict_round_trip(self):
        s = cylinder_scenario(0.7)
        t = scenario_from_dict(s.to_dict())
        assert solve_mode(t, 2).mu == pytest.approx(solve_mode(s, 2).mu, rel=1e-12)

    @pytest.mark.parametrize("pieces,cond", [
        ([(0.0, 1.0), (1.1, 2.0)], "regular_center"),
        ([(0.5, 2.0)], "regular_center"),
        ([(0.0, 2.0)], "bogus"),
    ])
    def test_validation(self, pieces, cond):
        ps = [Piece.from_expressions(a, b, "r^2", "1", origin=0.0) for a, b in pieces]
        with pytest.raises(ValueError):
            RadialScenario(ps, cond)

    def test_frobenius_needs_vanishing_alpha(self):
        with pytest.raises(ValueError):
            RadialScenario([Piece.from_expressions(1.0, 2.0, "r^2", "1", origin=1.0)], FROBENIUS)

    def test_irregular_point_has_no_bounded_branch(self):
        s = RadialScenario([Piece.from_expressions(1.0, 2.0, "(r-1)^2", "1/(r-1)", origin=1.0)],
                           FROBENIUS)
        with pytest.raises(NoBoundedBranch):
            solve_mode(s, 1)

    def test_tol_range(self):
        with pytest.raises(ValueError):
            solve_mode(cloak_scenario(), 1, tol=1e-2)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.15, 3.0), st.integers(1, 8))
def test_cylinder_spectrum_property(rho, n):
    m = solve_mode(cylinder_scenario(rho), n)
    assert m.mu == pytest.approx(rho * math.sqrt(n * (n + 1)) / 4, rel=1e-9)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.05, 0.9), st.floats(0.1, 10.0))
def test_near_cloak_property(eps, k):
    mu = solve_mode(near_cloak_scenario(eps, (k, k)), 1).mu
    assert mu == pytest.approx(analytic_near_cloak_mu(eps, (k, k), 1), abs=1e-8)
    assert isinstance(dtn_spectrum(near_cloak_scenario(eps), 1, method="numeric"), DtNSpectrum)
