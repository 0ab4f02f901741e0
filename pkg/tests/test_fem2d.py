import math

import numpy as np
import pytest

from cloakcheck.errors import NonPDTensor, SingularSystem
from cloakcheck.fem2d import (
    Mesh,
    assemble,
    boundary_mass,
    build_disk_mesh,
    discrete_dtn,
    disk_rayleigh_quotients,
    dtn_difference,
    energy,
    fitted_order,
    invariance_experiment,
    solve_dirichlet,
)
from cloakcheck.tensor_core import SymmetricTensorField
from cloakcheck.transform import identity_map, radial_profile_map, twist_map

IDENT = SymmetricTensorField.identity(2)


def boundary_angles(mesh):
    p = mesh.nodes[mesh.boundary_nodes]
    return np.arctan2(p[:, 1], p[:, 0])


class TestMesh:
    @pytest.mark.parametrize("n", [2, 3, 8])
    def test_valid(self, n):
        assert build_disk_mesh(n, 1.5).validate()

    def test_h_halves(self):
        hs = [build_disk_mesh(n).h for n in (6, 12, 24, 48)]
        for a, b in zip(hs, hs[1:]):
            assert b / a == pytest.approx(0.5, rel=0.2)

    def test_area_deficit(self):
        for n in (4, 8, 16):
            m = build_disk_mesh(n, 2.0)
            deficit = 4 * math.pi - m.signed_areas().sum()
            assert 0 < deficit <= 2.0 * m.h ** 2

    def test_deterministic_and_text_round_trip(self):
        a, b = build_disk_mesh(5), build_disk_mesh(5)
        assert a.to_text() == b.to_text()
        assert a.to_text().splitlines()[0] == "nodes 91 triangles 150 boundary 30"
        c = Mesh.from_text(a.to_text())
        np.testing.assert_array_equal(c.nodes, a.nodes)
        np.testing.assert_array_equal(c.triangles, a.triangles)
        np.testing.assert_array_equal(c.boundary_nodes, a.boundary_nodes)
        assert c.validate()

    def test_invalid_meshes(self):
        with pytest.raises(ValueError):
            build_disk_mesh(1)
        m = build_disk_mesh(3)
        flipped = Mesh(m.nodes, m.triangles[:, ::-1], m.boundary_nodes, 1.0)
        with pytest.raises(ValueError):
            flipped.validate()


def reference_triangle():
    return Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]),
                np.array([0, 1, 2]), radius=1.0)


class TestAssembly:
    def test_reference_element(self):
        K = assemble(IDENT, reference_triangle()).toarray()
        np.testing.assert_allclose(K, [[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]])

    def test_linear_in_sigma(self):
        m = build_disk_mesh(4)
        K1 = assemble(IDENT, m)
        K2 = assemble(SymmetricTensorField.constant(2 * np.eye(2)), m)
        assert abs(K2 - 2 * K1).max() == 0

    def test_anisotropic_energy(self):
        m = build_disk_mesh(5)
        a, b = 3.0, 0.5
        K = assemble(SymmetricTensorField.constant(np.diag([a, b])), m)
        area = m.signed_areas().sum()
        assert energy(K, m.nodes[:, 0]) == pytest.approx(a * area, rel=1e-12)
        assert energy(K, m.nodes[:, 1]) == pytest.approx(b * area, rel=1e-12)

    def test_symmetric_psd_zero_row_sums(self):
        m = build_disk_mesh(5)
        K = assemble(SymmetricTensorField.from_expressions([["1+x^2", "0.2*y"], ["0.2*y", "2"]]),
                     m)
        assert abs(K - K.T).max() == 0
        assert np.abs(K.sum(axis=1)).max() <= 1e-10 * abs(K).max()
        assert np.linalg.eigvalsh(K.toarray())[0] >= -1e-10

    def test_quadrature_orders_agree_for_constants(self):
        m = build_disk_mesh(4)
        s = SymmetricTensorField.constant([[2.0, 0.3], [0.3, 1.0]])
        assert abs(assemble(s, m, 1) - assemble(s, m, 3)).max() <= 1e-14

    def test_non_pd(self):
        with pytest.raises(NonPDTensor):
            assemble(SymmetricTensorField.constant(np.diag([1.0, -1.0])), build_disk_mesh(3))

    def test_singular(self):
        m = build_disk_mesh(3)
        K = assemble(SymmetricTensorField.constant(np.zeros((2, 2))), m)
        with pytest.raises(SingularSystem):
            solve_dirichlet(K, m, np.ones(len(m.boundary_nodes)))


class TestSolve:
    def test_constant(self):
        m = build_disk_mesh(6)
        u = solve_dirichlet(assemble(IDENT, m), m, np.ones(len(m.boundary_nodes)))
        np.testing.assert_allclose(u, 1.0, atol=1e-12)

    def test_affine_exact(self):
        m = build_disk_mesh(6)
        K = assemble(IDENT, m)
        u = solve_dirichlet(K, m, m.nodes[m.boundary_nodes, 0])
        np.testing.assert_allclose(u, m.nodes[:, 0], atol=1e-10)
        ii = m.interior_nodes
        assert np.abs((K @ u)[ii]).max() <= 1e-10

    def test_cos2_converges_at_second_order(self):
        errs, hs = [], []
        for n in (6, 12, 24):
            m = build_disk_mesh(n)
            th = boundary_angles(m)
            u = solve_dirichlet(assemble(IDENT, m), m, np.cos(2 * th))
            x, y = m.nodes.T
            errs.append(np.abs(u - (x * x - y * y)).max())
            hs.append(m.h)
        assert fitted_order(hs, errs) >= 1.8


@pytest.fixture(scope="module")
def setup():
    m = build_disk_mesh(10)
    K = assemble(SymmetricTensorField.from_expressions([["1+x^2", "0"], ["0", "2"]]), m)
    return m, K, discrete_dtn(K, m)


class TestDtN:
    def test_invariants(self, setup):
        m, K, D = setup
        assert D.check()
        np.testing.assert_allclose(D.matrix @ np.ones(len(m.boundary_nodes)), 0,
                                   atol=1e-10 * np.abs(D.matrix).max())

    def test_energy_identity(self, setup):
        m, K, D = setup
        rng = np.random.default_rng(0)
        for _ in range(5):
            f = rng.standard_normal(len(m.boundary_nodes))
            u = solve_dirichlet(K, m, f)
            assert f @ D.matrix @ f == pytest.approx(energy(K, u), rel=1e-9)

    def test_reciprocity(self, setup):
        m, K, D = setup
        rng = np.random.default_rng(1)
        for _ in range(20):
            f, g = rng.standard_normal((2, len(m.boundary_nodes)))
            assert f @ D.matrix @ g == pytest.approx(g @ D.matrix @ f, rel=1e-10)

    def test_scaling(self, setup):
        m, K, D = setup
        D3 = discrete_dtn(3.0 * K, m)
        np.testing.assert_allclose(D3.matrix, 3.0 * D.matrix, rtol=1e-10,
                                   atol=1e-12 * np.abs(D.matrix).max())

    def test_boundary_mass_integrates_perimeter(self, setup):
        m, _, D = setup
        M = boundary_mass(m)
        one = np.ones(len(m.boundary_nodes))
        assert one @ M @ one == pytest.approx(2 * len(one) * math.sin(math.pi / len(one)))
        assert D.mass_boundary.shape == M.shape

    def test_csv_export(self, setup):
        _, _, D = setup
        rows = D.to_csv().strip().splitlines()
        assert len(rows) == D.matrix.shape[0]
        assert float(rows[0].split(",")[0]) == D.matrix[0, 0]


def test_rayleigh_quotients_converge_to_k():
    data = disk_rayleigh_quotients([6, 12, 24, 48])
    hs = [h for h, _ in data]
    for i, k in enumerate((1, 2, 3)):
        err = [abs(q[i] - k) for _, q in data]
        assert err[-1] < 2e-3 * k
        assert fitted_order(hs, err) >= 1.5


class TestInvariance:
    def test_identity_map_gives_zero(self):
        rep = invariance_experiment(IDENT, identity_map(2, 1.0), [4, 8])
        assert max(rep.errors) <= 1e-12

    @pytest.mark.parametrize("F,sigma", [
        (twist_map("1-r"), IDENT),
        (radial_profile_map("r+0.2*r*(1-r)"),
         SymmetricTensorField.from_expressions([["1+x^2", "0"], ["0", "2"]])),
    ], ids=["twist", "radial"])
    def test_low_modes_converge(self, F, sigma):
        rep = invariance_experiment(sigma, F, [6, 12, 24], modes=5)
        assert all(r <= 0.5 for r in rep.ratios)
        assert rep.order >= 1.5

    def test_full_norm_is_dominated_by_boundary_modes(self):
        # both maps change sigma on the circle, so the unresolved top modes
        # carry an O(1) share of the difference at every resolution
        rep = invariance_experiment(IDENT, twist_map("1-r"), [6, 12, 24])
        assert min(rep.errors) > 0.3
        assert all(r > 0.8 for r in rep.ratios)

    def test_full_norm_converges_when_dF_is_identity_on_boundary(self):
        rep = invariance_experiment(IDENT, twist_map("(1-r)^2"), [6, 12, 24])
        assert all(r <= 0.5 for r in rep.ratios)

    def test_difference_is_relative(self):
        m = build_disk_mesh(4)
        D = discrete_dtn(assemble(IDENT, m), m)
        D2 = discrete_dtn(assemble(SymmetricTensorField.constant(2 * np.eye(2)), m), m)
        assert dtn_difference(D, D2) == pytest.approx(1.0)
        assert dtn_difference(D, D2, modes=3) == pytest.approx(1.0)
