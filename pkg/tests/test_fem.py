import numpy as np
import pytest

from nsto import fem, mesh
from nsto.errors import InvalidMaterialError, ShapeError
from nsto.linsolve import SolverConfig


def quadrature_oracle_q4(E, nu, h=1.0, n_gauss=4):
    """Independent scalar-loop Q4 plane-stress stiffness at n_gauss^2 points."""
    c = E / (1 - nu * nu) * np.array(
        [[1, nu, 0], [nu, 1, 0], [0, 0, (1 - nu) / 2]]
    )
    pts, wts = np.polynomial.legendre.leggauss(n_gauss)
    # corner order (0,0),(1,0),(1,1),(0,1) in natural coords
    corners = [(-1, -1), (1, -1), (1, 1), (-1, 1)]
    k = np.zeros((8, 8))
    for xi, wx in zip(pts, wts):
        for eta, wy in zip(pts, wts):
            b = np.zeros((3, 8))
            for a, (cx, cy) in enumerate(corners):
                dn_dxi = 0.25 * cx * (1 + cy * eta)
                dn_deta = 0.25 * cy * (1 + cx * xi)
                # jacobian of the square element is (h/2) I
                dn_dx = dn_dxi * 2.0 / h
                dn_dy = dn_deta * 2.0 / h
                b[0, 2 * a] = dn_dx
                b[1, 2 * a + 1] = dn_dy
                b[2, 2 * a] = dn_dy
                b[2, 2 * a + 1] = dn_dx
            det_j = (h / 2.0) ** 2
            k += wx * wy * det_j * (b.T @ c @ b)
    return k


def test_element_stiffness_matches_quadrature_oracle():
    mat = fem.Material(youngs_modulus=1.0, poisson_ratio=0.3)
    k = fem.element_stiffness(mat, 2)
    oracle = quadrature_oracle_q4(1.0, 0.3)
    assert np.max(np.abs(k - oracle)) < 1e-12


def test_element_stiffness_symmetric_with_three_zero_modes():
    mat = fem.Material(youngs_modulus=2.5, poisson_ratio=0.25)
    k = fem.element_stiffness(mat, 2)
    assert np.max(np.abs(k - k.T)) < 1e-12 * np.max(np.abs(k))
    eigs = np.linalg.eigvalsh(k)
    assert np.sum(np.abs(eigs) < 1e-12) == 3
    assert np.all(eigs > -1e-12)


def test_element_stiffness_3d_six_zero_modes():
    mat = fem.Material()
    k = fem.element_stiffness(mat, 3, 1.0)
    assert k.shape == (24, 24)
    eigs = np.linalg.eigvalsh(k)
    assert np.sum(np.abs(eigs) < 1e-10) == 6


def test_element_stiffness_linear_in_youngs_modulus():
    k1 = fem.element_stiffness(fem.Material(youngs_modulus=1.0), 2)
    k2 = fem.element_stiffness(fem.Material(youngs_modulus=2.0), 2)
    np.testing.assert_allclose(k2, 2.0 * k1, rtol=1e-14)


def test_element_stiffness_rigid_translation_rows():
    k = fem.element_stiffness(fem.Material(), 2)
    tx = np.tile([1.0, 0.0], 4)
    ty = np.tile([0.0, 1.0], 4)
    assert np.max(np.abs(k @ tx)) < 1e-14
    assert np.max(np.abs(k @ ty)) < 1e-14


def test_invalid_material_rejected():
    with pytest.raises(InvalidMaterialError):
        fem.Material(poisson_ratio=0.5).validate()
    with pytest.raises(InvalidMaterialError):
        fem.Material(youngs_modulus=1e-10, e_min=1e-9).validate()
    with pytest.raises(InvalidMaterialError):
        fem.Material(e_min=0.0).validate()


def test_assemble_full_density_equals_unpenalized():
    grid = mesh.build_grid((3, 2))
    mat = fem.Material()
    rho = np.ones(grid.n_elements)
    k3 = fem.assemble(grid, rho, 3.0, mat).toarray()
    k1 = fem.assemble(grid, rho, 1.0, mat).toarray()
    np.testing.assert_allclose(k3, k1, rtol=1e-14)


def test_assemble_zero_density_scales_by_floor():
    grid = mesh.build_grid((2, 2))
    mat = fem.Material()
    k0 = fem.assemble(grid, np.zeros(grid.n_elements), 3.0, mat).toarray()
    k1 = fem.assemble(grid, np.ones(grid.n_elements), 3.0, mat).toarray()
    np.testing.assert_allclose(k0, mat.e_min * k1, rtol=1e-12,
                               atol=1e-12 * np.abs(k0).max())


def test_assemble_single_element_simp_scale():
    grid = mesh.build_grid((1, 1))
    mat = fem.Material()
    ke = fem.element_stiffness(mat, 2)
    k = fem.assemble(grid, np.array([0.5]), 3.0, mat).toarray()
    scale = mat.e_min + 0.125 * (mat.youngs_modulus - mat.e_min)
    edofs = mesh.element_dofs(grid)[0]
    np.testing.assert_allclose(k[np.ix_(edofs, edofs)], scale * ke, rtol=1e-14)


def test_assemble_symmetric():
    grid = mesh.build_grid((4, 3))
    rho = np.random.default_rng(0).uniform(0.1, 1.0, grid.n_elements)
    k = fem.assemble(grid, rho, 3.0, fem.Material())
    diff = (k - k.T).tocoo()
    assert np.max(np.abs(diff.data)) < 1e-14 if diff.nnz else True


def test_assemble_wrong_density_length():
    grid = mesh.build_grid((2, 2))
    with pytest.raises(ShapeError):
        fem.assemble(grid, np.ones(3), 3.0, fem.Material())


def _single_element_system():
    grid = mesh.build_grid((1, 1))
    mat = fem.Material()
    rho = np.ones(1)
    K = fem.assemble(grid, rho, 3.0, mat)
    # fix nodes 0, 1, 3 entirely; load node 2 (x=1, y=1)
    fixed = np.array([0, 1, 2, 3, 6, 7])
    F = np.zeros(8)
    F[5] = -1.0
    return grid, mat, rho, K, F, fixed


def test_solve_matches_dense_oracle_single_element():
    grid, mat, rho, K, F, fixed = _single_element_system()
    U, stats = fem.solve_displacement(K, F, fixed, SolverConfig(), grid)
    free = np.setdiff1d(np.arange(8), fixed)
    kd = K.toarray()[np.ix_(free, free)]
    u_oracle = np.linalg.solve(kd, F[free])
    assert np.max(np.abs(U[free] - u_oracle)) < 1e-10
    assert np.all(U[fixed] == 0.0)
    assert stats.converged


def test_solve_zero_force_zero_displacement():
    grid, mat, rho, K, F, fixed = _single_element_system()
    U, stats = fem.solve_displacement(K, np.zeros(8), fixed, SolverConfig(), grid)
    assert np.all(U == 0.0)


def test_solve_linearity_in_force():
    grid, mat, rho, K, F, fixed = _single_element_system()
    U1, _ = fem.solve_displacement(K, F, fixed, SolverConfig(), grid)
    U2, _ = fem.solve_displacement(K, 2.0 * F, fixed, SolverConfig(), grid)
    np.testing.assert_allclose(U2, 2.0 * U1, rtol=1e-6, atol=1e-14)


def test_reduced_system_diagonal_positive():
    grid = mesh.build_grid((4, 2))
    rho = np.full(grid.n_elements, 0.4)
    K = fem.assemble(grid, rho, 3.0, fem.Material())
    fixed = np.arange(0, 6)
    kr, fr, free = fem.reduce_system(K, np.ones(grid.n_dofs), fixed)
    assert np.all(kr.diagonal() > 0)


def _mbb_problem(nx, ny):
    grid = mesh.build_grid((nx, ny))
    x1, y1 = float(nx), float(ny)
    spec = mesh.BoundarySpec(
        fixed=(
            mesh.FixedRegion(mesh.Box((0.0, 0.0), (0.0, y1)), (0,)),
            mesh.FixedRegion(mesh.Box((x1, 0.0), (x1, 0.0)), (1,)),
        ),
        loads=(mesh.LoadRegion(mesh.Box((0.0, y1), (0.0, y1)), (0.0, -1.0)),),
    )
    return grid, mesh.resolve_boundary(grid, spec)


def test_compliance_self_adjoint():
    grid, b = _mbb_problem(8, 4)
    mat = fem.Material()
    rho = np.random.default_rng(1).uniform(0.3, 0.9, grid.n_elements)
    K = fem.assemble(grid, rho, 3.0, mat)
    U, _ = fem.solve_displacement(K, b.force, b.fixed_dofs, SolverConfig(tolerance=1e-12), grid)
    C, dC = fem.compliance_and_gradient(rho, U, grid, 3.0, mat)
    assert abs(C - b.force @ U) / C < 1e-8
    assert C > 0


def test_compliance_zero_displacement():
    grid, b = _mbb_problem(4, 2)
    rho = np.full(grid.n_elements, 0.5)
    C, dC = fem.compliance_and_gradient(rho, np.zeros(grid.n_dofs), grid, 3.0, fem.Material())
    assert C == 0.0
    assert np.all(dC == 0.0)


def test_compliance_gradient_nonpositive():
    grid, b = _mbb_problem(6, 4)
    mat = fem.Material()
    rho = np.random.default_rng(2).uniform(0.3, 0.9, grid.n_elements)
    K = fem.assemble(grid, rho, 3.0, mat)
    U, _ = fem.solve_displacement(K, b.force, b.fixed_dofs, SolverConfig(), grid)
    C, dC = fem.compliance_and_gradient(rho, U, grid, 3.0, mat)
    assert np.all(dC <= 0.0)


def _fd_gradient_check(grid, boundary, ndim_label):
    """Central finite differences with a dense direct solve as oracle."""
    mat = fem.Material()
    tau = 3.0
    rng = np.random.default_rng(7)
    rho = rng.uniform(0.3, 0.9, grid.n_elements)
    free = np.setdiff1d(np.arange(grid.n_dofs), boundary.fixed_dofs)

    def compliance(r):
        K = fem.assemble(grid, r, tau, mat).toarray()
        u = np.linalg.solve(K[np.ix_(free, free)], boundary.force[free])
        return boundary.force[free] @ u

    K = fem.assemble(grid, rho, tau, mat)
    U, _ = fem.solve_displacement(
        K, boundary.force, boundary.fixed_dofs, SolverConfig(tolerance=1e-12), grid
    )
    _, dC = fem.compliance_and_gradient(rho, U, grid, tau, mat)
    h = 1e-5
    max_rel = 0.0
    for e in range(grid.n_elements):
        rp, rm = rho.copy(), rho.copy()
        rp[e] += h
        rm[e] -= h
        fd = (compliance(rp) - compliance(rm)) / (2 * h)
        max_rel = max(max_rel, abs(fd - dC[e]) / max(abs(fd), 1e-12))
    assert max_rel < 1e-4, f"{ndim_label}: max relative error {max_rel}"


def test_compliance_gradient_finite_difference_2d():
    grid, b = _mbb_problem(6, 4)
    _fd_gradient_check(grid, b, "2d")


def test_compliance_gradient_finite_difference_3d():
    grid = mesh.build_grid((4, 2, 2))
    spec = mesh.BoundarySpec(
        fixed=(mesh.FixedRegion(mesh.Box((0.0, 0.0, 0.0), (0.0, 2.0, 2.0)), (0, 1, 2)),),
        loads=(mesh.LoadRegion(mesh.Box((4.0, 0.0, 0.0), (4.0, 0.0, 2.0)), (0.0, -1.0, 0.0)),),
    )
    b = mesh.resolve_boundary(grid, spec)
    _fd_gradient_check(grid, b, "3d")


def test_passive_elements_pinned_in_assembly_and_gradient():
    grid = mesh.build_grid((4, 4))
    spec = mesh.BoundarySpec(
        fixed=(mesh.FixedRegion(mesh.Box((0.0, 0.0), (0.0, 4.0)), (0, 1)),),
        loads=(mesh.LoadRegion(mesh.Box((4.0, 0.0), (4.0, 0.0)), (0.0, -1.0)),),
        passive=(mesh.PassiveRegion(mesh.Box((1.0, 3.0), (3.0, 4.0)), "void"),),
    )
    b = mesh.resolve_boundary(grid, spec)
    mat = fem.Material()
    rho = np.full(grid.n_elements, 0.7)
    K = fem.assemble(grid, rho, 3.0, mat, b.passive)
    # assembly must ignore the nominal density on void elements
    rho2 = rho.copy()
    rho2[b.passive == mesh.PASSIVE_VOID] = 0.123
    K2 = fem.assemble(grid, rho2, 3.0, mat, b.passive)
    assert abs(K - K2).max() == 0.0
    U, _ = fem.solve_displacement(K, b.force, b.fixed_dofs, SolverConfig(), grid)
    _, dC = fem.compliance_and_gradient(rho, U, grid, 3.0, mat, b.passive)
    assert np.all(dC[b.passive != mesh.PASSIVE_FREE] == 0.0)
