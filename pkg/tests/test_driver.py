import numpy as np
import pytest

from ferrofem import assembly, driver, fespace, material, refelem, verify
from ferrofem.driver import FhdConfig
from ferrofem.material import MaterialParams

CASE = verify.case_2d_l0()


def make_cfg(n=8, **kw):
    kw.setdefault("case", CASE)
    return FhdConfig(n=n, pair=kw.pop("pair", "l0"), **kw)


def zero_external(pts):
    return np.zeros((len(pts), 2))


class TestConfig:
    def test_requires_exactly_one_source(self):
        with pytest.raises(ValueError):
            FhdConfig(n=4)
        with pytest.raises(ValueError):
            FhdConfig(n=4, case=CASE, h_ext=zero_external)

    def test_rejects_unknown_pair(self):
        with pytest.raises(ValueError):
            FhdConfig(n=4, pair="l2", case=CASE)

    def test_rejects_zero_iterations(self):
        with pytest.raises(ValueError):
            FhdConfig(n=4, case=CASE, picard_iters=0)


class TestInitialGuesses:
    def test_zero_data_zero_potential(self):
        cfg = FhdConfig(n=4, h_ext=zero_external)
        phi, rep = driver.initial_guess_phi(cfg)
        assert np.abs(phi.coeffs).max() == 0.0

    def test_poisson_guess_independent_of_magnetization_constants(self):
        # with an applied field the seed operator and data never touch the
        # magnetization law, so Ms and gamma cannot influence the seed
        def h_ext(pts):
            x, y = pts[:, 0], pts[:, 1]
            return np.stack(
                [x * (1 - x) * np.cos(np.pi * y), y * (1 - y) * np.cos(np.pi * x)],
                axis=1,
            )

        phi_a, _ = driver.initial_guess_phi(
            FhdConfig(n=6, params=MaterialParams(Ms=1.0, gamma=1.0), h_ext=h_ext)
        )
        phi_b, _ = driver.initial_guess_phi(
            FhdConfig(n=6, params=MaterialParams(Ms=3.0, gamma=2.0), h_ext=h_ext)
        )
        assert np.array_equal(phi_a.coeffs, phi_b.coeffs)
        assert np.abs(phi_a.coeffs).max() > 0

    def test_poisson_seed_gap_bounded_and_killed_by_sweeps(self):
        # the seed converges to the (fixed) continuous gap between the linear
        # and nonlinear solutions, about 0.0495 in the H1 seminorm here; the
        # sweeps then contract it below the discretization error
        gaps = []
        for n in (8, 16):
            cfg = make_cfg(n=n, picard_iters=6)
            setup = driver._Setup(cfg)
            phi0, _ = driver.initial_guess_phi(cfg, _setup=setup)
            phi, _ = driver.picard_elliptic(cfg, _setup=setup)
            gaps.append(setup.grad_norm_phi(phi0.coeffs - phi.coeffs))
        assert all(g < 0.06 for g in gaps)
        assert abs(gaps[1] - gaps[0]) < 0.2 * gaps[0]  # level-independent limit

    def test_stokes_guess_zero_force(self):
        cfg = FhdConfig(n=4, h_ext=zero_external)
        u, p, rep = driver.initial_guess_velocity(cfg)
        assert np.abs(u.coeffs).max() == 0.0
        assert np.abs(p.coeffs).max() == 0.0

    def test_stokes_guess_divergence_orthogonal_and_mean_free(self):
        cfg = make_cfg(n=8)
        setup = driver._Setup(cfg)
        u, p, rep = driver.initial_guess_velocity(cfg, _setup=setup)
        div = setup.saddle.B @ u.coeffs
        assert np.abs(div).max() < 1e-10
        assert abs(setup.saddle.mean @ p.coeffs) < 1e-12 * max(np.abs(p.coeffs).max(), 1)


class TestPicard:
    def test_zero_rhs_fixed_point(self):
        cfg = FhdConfig(n=4, h_ext=zero_external, picard_iters=3)
        phi, info = driver.picard_elliptic(cfg)
        assert np.abs(phi.coeffs).max() == 0.0

    def test_converges_to_nonlinear_solution(self):
        # tolerance mode: the nonlinear residual vanishes at stagnation
        cfg = make_cfg(n=8, picard_iters=30, picard_tol=1e-12)
        setup = driver._Setup(cfg)
        phi, info = driver.picard_elliptic(cfg, _setup=setup)
        a = assembly.assemble_weighted_stiffness(setup.S, phi, cfg.params, cfg.quad_bump)
        res = (setup.rhs_phi - a @ phi.coeffs)[setup.S.free_mask]
        assert np.linalg.norm(res) <= 1e-9
        assert info["updates"][-1] < 1e-12

    def test_two_sweeps_close_to_six(self):
        cfg2 = make_cfg(n=16)
        cfg6 = make_cfg(n=16, picard_iters=6)
        setup = driver._Setup(cfg2)
        phi2, _ = driver.picard_elliptic(cfg2, _setup=setup)
        phi6, _ = driver.picard_elliptic(cfg6, _setup=setup)
        err = verify.error_h1_semi(phi6, CASE.grad_phi)
        gap = setup.grad_norm_phi(phi2.coeffs - phi6.coeffs)
        assert gap <= 0.05 * err

    def test_external_mode_stability_bound(self):
        prm = MaterialParams(mu0=3.0)

        def h_ext(pts):
            x, y = pts[:, 0], pts[:, 1]
            return np.stack(
                [x * (1 - x) * np.cos(np.pi * y), y * (1 - y) * np.cos(np.pi * x)],
                axis=1,
            )

        cfg = FhdConfig(n=8, params=prm, h_ext=h_ext, picard_iters=4)
        setup = driver._Setup(cfg)
        phi, _ = driver.picard_elliptic(cfg, _setup=setup)
        he_norm = verify.exact_norm(setup.mesh, h_ext, "l2vec")
        assert setup.grad_norm_phi(phi.coeffs) <= he_norm / prm.mu0 * (1 + 1e-10)


class TestOseen:
    def test_zero_force_zero_solution(self):
        cfg = FhdConfig(n=4, h_ext=zero_external, oseen_iters=2)
        u, p, info = driver.oseen_ns(cfg)
        assert np.abs(u.coeffs).max() == 0.0

    def test_energy_identity_zero_bc(self):
        def f(pts):
            return np.stack([np.sin(np.pi * pts[:, 1]), np.sin(np.pi * pts[:, 0])], axis=1)

        prm = MaterialParams(eta=0.5)
        cfg = FhdConfig(n=8, params=prm, h_ext=zero_external, body_force=f, oseen_iters=3)
        setup = driver._Setup(cfg)
        u, p, info = driver.oseen_ns(cfg, _setup=setup)
        energy = prm.eta * setup.grad_norm_u(u.coeffs) ** 2
        work = float(setup.rhs_u @ u.coeffs)
        assert energy <= work * (1 + 1e-10)
        assert energy == pytest.approx(work, rel=1e-9)

    def test_iterates_divergence_orthogonal(self):
        cfg = make_cfg(n=8, oseen_iters=3)
        setup = driver._Setup(cfg)
        u, p, info = driver.oseen_ns(cfg, _setup=setup)
        # (div u_h, q_h) = 0 for every pressure basis function (the full
        # field including the lifted boundary values is discretely solenoidal)
        assert np.abs(setup.saddle.B @ u.coeffs).max() < 1e-10


class TestRecovery:
    def test_zero_potential_recovers_zeros(self):
        cfg = FhdConfig(n=4, h_ext=zero_external)
        sol = driver.solve_fhd(cfg)
        for field in (sol.phi, sol.H, sol.M, sol.u, sol.psi):
            assert np.abs(field.coeffs).max() < 1e-14
        assert np.allclose(sol.p.coeffs, sol.p_tilde.coeffs, atol=1e-14)

    def test_curl_free_identity_coefficient_path(self):
        sol = driver.solve_fhd(make_cfg(n=16))
        assert sol.diagnostics["curl_h_inf"] <= 1e-12

    @pytest.mark.parametrize("pair", ["l0", "l1"])
    def test_mass_path_cross_validates_gradient_path(self, pair):
        case = CASE if pair == "l0" else verify.case_2d_l1()
        sa = driver.solve_fhd(FhdConfig(n=8, pair=pair, case=case))
        sb = driver.solve_fhd(
            FhdConfig(n=8, pair=pair, case=case, recover_h_via_mass=True)
        )
        scale = np.abs(sa.H.coeffs).max()
        assert np.abs(sa.H.coeffs - sb.H.coeffs).max() <= 1e-9 * scale

    def test_magnetization_saturates_before_projection(self):
        cfg = make_cfg(n=8)
        sol = driver.solve_fhd(cfg)
        rule = refelem.quadrature(4)
        hv, _ = fespace.eval_field(sol.H, fespace.tabulate(sol.H.space, rule))
        m = material.magnetization(hv, cfg.params)
        assert np.sqrt((m * m).sum(axis=-1)).max() < cfg.params.Ms

    def test_pressure_composition_and_mean(self):
        cfg = make_cfg(n=8)
        sol = driver.solve_fhd(cfg)
        setup_mean = assembly.assemble_stokes_blocks(
            sol.u.space, sol.p.space, cfg.params.eta
        ).mean
        assert abs(setup_mean @ sol.p.coeffs) < 1e-12
        # p = p_tilde + mu0 psi up to the constant shift
        shift = sol.p.coeffs - (sol.p_tilde.coeffs + cfg.params.mu0 * sol.psi.coeffs)
        assert np.abs(shift - shift[0]).max() < 1e-12

    def test_flux_density_identity(self):
        cfg = make_cfg(n=4)
        sol = driver.solve_fhd(cfg)
        assert np.allclose(
            sol.B.coeffs, cfg.params.mu0 * (sol.H.coeffs + sol.M.coeffs), atol=1e-14
        )

    def test_external_field_full_solve(self):
        prm = MaterialParams(mu0=2.0, Ms=2.0, gamma=0.5)

        def h_ext(pts):
            x, y = pts[:, 0], pts[:, 1]
            return np.stack(
                [x * (1 - x) * np.cos(np.pi * y), y * (1 - y) * np.cos(np.pi * x)],
                axis=1,
            )

        sol = driver.solve_fhd(FhdConfig(n=8, params=prm, h_ext=h_ext))
        assert np.abs(sol.phi.coeffs).max() > 0
        assert sol.diagnostics["curl_h_inf"] <= 1e-12
        assert np.abs(sol.u.coeffs).max() == 0.0  # no body force
        assert np.abs(sol.psi.coeffs).max() > 0
        # with zero flow the total pressure is the mean-shifted magnetic part
        expect = prm.mu0 * sol.psi.coeffs
        expect = expect - np.average(expect, weights=sol.p.space.mesh.areas)
        assert np.abs(sol.p.coeffs - expect).max() < 1e-12


class TestSolveFhd:
    def test_stage_error_tagged(self, monkeypatch):
        cfg = make_cfg(n=4)

        def boom(*a, **k):
            raise driver.linalg.SolverError(
                driver.linalg.SolveReport(np.inf, 0, "singular"), "forced"
            )

        monkeypatch.setattr(driver, "picard_elliptic", boom)
        with pytest.raises(driver.StageError, match="potential"):
            driver.solve_fhd(cfg)

    def test_decoupled_chains_independent(self):
        cfg = make_cfg(n=8)
        sol = driver.solve_fhd(cfg)
        setup = driver._Setup(cfg)
        phi, _ = driver.picard_elliptic(cfg, _setup=setup)
        u, p, _ = driver.oseen_ns(cfg, _setup=setup)
        assert np.array_equal(sol.phi.coeffs, phi.coeffs)
        assert np.array_equal(sol.u.coeffs, u.coeffs)
        assert np.array_equal(sol.p_tilde.coeffs, p.coeffs)

    def test_deterministic(self):
        a = driver.solve_fhd(make_cfg(n=8))
        b = driver.solve_fhd(make_cfg(n=8))
        for fa, fb in ((a.phi, b.phi), (a.u, b.u), (a.p, b.p), (a.M, b.M)):
            assert np.array_equal(fa.coeffs, fb.coeffs)

    def test_galerkin_residual_of_last_sweep(self):
        cfg = make_cfg(n=8)
        setup = driver._Setup(cfg)
        phi_prev, _ = driver.picard_elliptic(
            FhdConfig(n=8, case=CASE, picard_iters=1), _setup=setup
        )
        sweep_cfg = FhdConfig(n=8, case=CASE, picard_iters=1)
        phi, _ = driver.picard_elliptic(sweep_cfg, phi0=phi_prev, _setup=setup)
        a = assembly.assemble_weighted_stiffness(
            setup.S, phi_prev, cfg.params, cfg.quad_bump
        )
        res = (setup.rhs_phi - a @ phi.coeffs)[setup.S.free_mask]
        assert np.linalg.norm(res) <= 1e-9 * max(np.linalg.norm(setup.rhs_phi), 1.0)
