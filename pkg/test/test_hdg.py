import argparse

import numpy as np
import pytest

import config
import fespaces
import hdg
import interp
import mesh as meshlib
import polycalc
import sparsela
import study
from fespaces import SpaceTag
from polycalc import X, ZERO, MultiPoly

config.args = argparse.Namespace()
config.RUNNING_TEST = True


@pytest.fixture(scope='class')
def spaces():
    return fespaces.Spaces(meshlib.build_structured_cube(2), with_sigma=False)


@pytest.fixture(scope='class')
def data():
    return polycalc.build_manufactured(1e-4)


@pytest.fixture(scope='class')
def system(spaces, data):
    return hdg.assemble_hdg(spaces, hdg.HdgParams(nu=1e-4), data)


class TestParams:
    def test_defaults(self):
        params = hdg.HdgParams()
        assert params.alpha == config.DEFAULT_ALPHA
        assert params.nu == config.DEFAULT_NU
        assert params.h_mode == config.DEFAULT_H_MODE

    def test_converts(self):
        assert hdg.HdgParams(alpha='8').alpha == 8.0

    @pytest.mark.parametrize('kwargs', [{'alpha': 0}, {'alpha': -1}, {'nu': 0}, {'h_mode': 'mean'}])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            hdg.HdgParams(**kwargs)


class TestLayout:
    def test_counts(self, spaces):
        layout = hdg.KinematicLayout(spaces)
        m = spaces.mesh
        free_facets = m.n_facets - len(m.facets_with_label(meshlib.DIRICHLET))
        assert layout.n_free == 3 * free_facets + 2 * free_facets + free_facets
        assert layout.element_dofs.shape == (m.n_tets, hdg.N_LOCAL)
        assert layout.element_dofs.max() == layout.n_free - 1

    def test_dirichlet_dofs_dropped(self, spaces):
        layout = hdg.KinematicLayout(spaces)
        m = spaces.mesh
        dirichlet = m.facet_labels[m.tet_facets] == meshlib.DIRICHLET
        v_dofs = layout.element_dofs[:, hdg.LOCAL_V].reshape(-1, 4, 3)
        w_dofs = layout.element_dofs[:, hdg.LOCAL_W]
        assert np.all(v_dofs[dirichlet] == -1)
        assert np.all(w_dofs[dirichlet] == -1)
        assert np.all(w_dofs[~dirichlet] >= 0)

    def test_fields_and_pack(self, spaces):
        layout = hdg.KinematicLayout(spaces)
        x = np.random.default_rng(0).standard_normal(layout.n_free)
        u, uhat, omega = layout.fields(x)
        assert u.space == SpaceTag.Vh and omega.space == SpaceTag.Wh
        assert np.all(u.coefficients[spaces[SpaceTag.Vh].dirichlet_mask] == 0)
        assert np.allclose(layout.pack(u, uhat, omega), x)


class TestAssembly:
    def test_symmetric(self, system):
        assert sparsela.is_symmetric(system.A)
        assert sparsela.is_symmetric(system.matrix())

    def test_shapes(self, system, spaces):
        n = system.layout.n_free
        assert system.A.shape == (n, n)
        assert system.B.shape == (spaces.mesh.n_tets, n)
        assert system.matrix().shape == (n + spaces.mesh.n_tets,) * 2

    def test_energy(self, system, spaces):
        params = hdg.HdgParams(nu=1e-4)
        rng = np.random.default_rng(1)
        for _ in range(3):
            x = rng.standard_normal(system.layout.n_free)
            u, uhat, omega = system.layout.fields(x)
            energy = hdg.hdg_energy(u, uhat, omega, params)
            assert x @ (system.A @ x) == pytest.approx(energy, rel=1e-10)

    def test_divergence_block(self, system):
        x = np.random.default_rng(2).standard_normal(system.layout.n_free)
        u, _, _ = system.layout.fields(x)
        volumes = system.spaces.mesh.geometry.volumes
        assert np.allclose(system.B @ x, -volumes * u.divergence())

    def test_zero_load(self, spaces):
        system = hdg.assemble_hdg(spaces, hdg.HdgParams())
        assert not np.any(system.rhs())
        solution = hdg.solve_hdg(system)
        assert solution.stats.kind == 'trivial'
        assert not np.any(solution.p.coefficients)

    def test_alpha_raises_smallest_eigenvalue(self, spaces):
        sweep = hdg.coercivity_sweep(spaces, [2.0, 16.0])
        assert [alpha for alpha, _ in sweep] == [2.0, 16.0]
        assert sweep[1][1] >= sweep[0][1]

    def test_coercive_at_default_alpha(self, spaces):
        [(alpha, smallest)] = hdg.coercivity_sweep(spaces, [config.DEFAULT_ALPHA])
        assert alpha == config.DEFAULT_ALPHA
        assert smallest > 0

    def test_linear_in_viscosity(self, spaces):
        low = hdg.assemble_hdg(spaces, hdg.HdgParams(nu=1.0))
        high = hdg.assemble_hdg(spaces, hdg.HdgParams(nu=10.0))
        assert abs(high.A - 10 * low.A).max() <= config.IDENTITY_TOLERANCE * abs(high.A).max()
        assert abs(high.B - low.B).max() == 0


class TestNeumann:
    def test_groups(self, spaces):
        groups = hdg.neumann_groups(spaces.mesh)
        assert len(groups) == 1
        normal, facets = groups[0]
        assert np.allclose(normal, [-1, 0, 0])
        assert len(facets) == 8

    def test_no_groups(self):
        assert hdg.neumann_groups(meshlib.build_structured_cube(1, None)) == []

    def test_pure_dirichlet_rejected(self):
        s = fespaces.Spaces(meshlib.build_structured_cube(1, None), with_sigma=False)
        system = hdg.assemble_hdg(s, hdg.HdgParams())
        with pytest.raises(ValueError):
            hdg.solve_hdg(system)


class TestSolve:
    def test_manufactured(self, system, data):
        solution = hdg.solve_hdg(system)
        assert solution.stats.residual <= config.RESIDUAL_TOLERANCE
        defect, scale = hdg.divergence_defect(solution.u)
        assert defect <= config.DIV_FREE_TOLERANCE * scale
        errors = study.error_norms(solution, data)
        assert all(np.isfinite(v) and v > 0 for v in errors.values())

    def test_interpolant_is_divergence_free(self, spaces, data):
        u = interp.interp_V(spaces, data.u)
        defect, scale = hdg.divergence_defect(u)
        assert defect <= 1e-10 * scale

    def test_hydrostatic_solution_exact(self, spaces):
        # Zero velocity under a gradient load: the interpolated pressure solves the system.
        data = polycalc.ManufacturedSolution.from_fields([ZERO, ZERO, ZERO], X, 1.0)
        system = hdg.assemble_hdg(spaces, hdg.HdgParams(nu=1.0), data)
        exact = hdg.interpolate_exact(spaces, data)
        assert hdg.consistency_residual(system, exact) <= 1e-12
        solution = hdg.solve_hdg(system)
        assert np.abs(solution.kinematic()).max() <= 1e-10
        assert np.allclose(solution.p.coefficients, exact.p.coefficients)

    def test_constant_pressure(self, spaces):
        data = polycalc.ManufacturedSolution.from_fields([ZERO, ZERO, ZERO], MultiPoly.constant(2.0), 1.0)
        solution = hdg.solve_hdg(hdg.assemble_hdg(spaces, hdg.HdgParams(nu=1.0), data))
        assert np.allclose(solution.p.coefficients, 2.0)

    def test_pressure_scales_with_viscosity(self, spaces, data):
        # f = nu (-div eps(u) + grad p): the velocity stays, the pressure scales with nu.
        solutions = [
            hdg.solve_hdg(
                hdg.assemble_hdg(
                    spaces,
                    hdg.HdgParams(nu=nu),
                    polycalc.ManufacturedSolution.from_fields(data.u, data.pressure * nu, nu),
                )
            )
            for nu in [1.0, 1e-2]
        ]
        u0, u1 = (s.u.coefficients for s in solutions)
        assert np.abs(u1 - u0).max() <= 1e-8 * np.abs(u0).max()
        p0, p1 = (s.p.coefficients for s in solutions)
        assert np.abs(p1 - 1e-2 * p0).max() <= 1e-8 * np.abs(1e-2 * p0).max()

    def test_pressure_robust(self, spaces):
        report = study.pressure_robustness_experiment('hdg', spaces)
        assert report.kinematic_change <= 1e-8
        assert report.pressure_error <= 1e-8
        assert report.passed


class TestRefinement:
    @pytest.fixture(scope='class')
    def levels(self):
        return [fespaces.Spaces(meshlib.build_structured_cube(n), with_sigma=False) for n in [2, 4]]

    def test_boundary_mean_decreases(self, levels, data):
        means = [
            hdg.boundary_tangential_mean(study.solve_method('hdg', s, data, alpha=12.0).u)
            for s in levels
        ]
        assert means[1] < means[0]

    def test_consistency_decreases(self, levels, data):
        defects = [
            hdg.consistency_defect(
                hdg.assemble_hdg(s, hdg.HdgParams(nu=data.nu), data), hdg.interpolate_exact(s, data)
            )
            for s in levels
        ]
        assert all(d > 0 for d in defects)
        assert defects[1] < defects[0]

    def test_sparse_saddle_solve(self, levels, data):
        # Large enough for SuperLU; the pressure block of the saddle matrix is empty.
        system = hdg.assemble_hdg(levels[1], hdg.HdgParams(nu=data.nu), data)
        assert system.matrix().shape[0] > config.DENSE_SOLVE_THRESHOLD
        solution = hdg.solve_hdg(system)
        assert solution.stats.kind == 'sparse'
        assert solution.stats.residual <= config.RESIDUAL_TOLERANCE
