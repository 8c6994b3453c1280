import numpy as np
import pytest
from scipy.special import gammaln

from rnmlab.errors import ConditioningError, DegenerateRootError, DomainError
from rnmlab.fieldops import cutoff_field
from rnmlab.kernel import (
    ApproxKernel,
    KernelModel,
    berezin,
    build_kernel,
    bulk_scale,
    correlation2,
    default_kernel_rule,
    eval_approx_kernel,
    eval_weighted_kernel,
    heat_kernel,
    kernel_trace,
    one_point,
)
from rnmlab.numerics import make_polar_quadrature
from rnmlab.potential import Potential, obstacle, solve_droplet


def ginibre_log_norms(n):
    ks = np.arange(n)
    return np.log(np.pi) + gammaln(ks + 1) - (ks + 1) * np.log(n)


class TestBuildKernel:
    def test_ginibre_norms_closed_form(self, ginibre):
        km = build_kernel(ginibre, 32)
        exact = ginibre_log_norms(32)
        rel = np.abs(np.expm1(km.log_norms - exact))
        assert rel.max() <= 1e-9

    def test_n1_trace(self, ginibre):
        km = build_kernel(ginibre, 1)
        assert kernel_trace(km) == pytest.approx(1.0, rel=1e-10)

    def test_perturbed_norm_sandwich(self, ginibre):
        h = cutoff_field("x", 1.5, 2.75, name="h")
        n = 12
        km = build_kernel(ginibre, n, h=h)
        # Gram diagonal in units of the unperturbed norms must lie within
        # exp(±2 sup|h|).
        rule = default_kernel_rule(km)
        raw = KernelModel(n=n, potential=ginibre, h=h, mode="gram",
                          log_norms=km.log_norms, linv=None,
                          effective_radius=km.effective_radius,
                          droplet_radius=km.droplet_radius)
        z = rule.points_complex()
        psi = raw.features(z)
        diag = np.sum(rule.weights[:, None] * np.abs(psi) ** 2, axis=0).real
        r = np.linspace(0, 2.75, 400)
        sup_h = np.max(np.abs(h(r, np.zeros_like(r))))
        assert np.all(diag <= np.exp(2 * sup_h) + 1e-9)
        assert np.all(diag >= np.exp(-2 * sup_h) - 1e-9)

    def test_trace_identity_both_potentials(self, ginibre, quartic):
        for p in (ginibre, quartic):
            for n in (8, 16):
                km = build_kernel(p, n)
                assert kernel_trace(km) == pytest.approx(n, rel=1e-6)

    def test_gram_conditioning_failure(self, ginibre):
        # rank-deficient Gram: fewer quadrature nodes than basis elements
        rule = make_polar_quadrature(2.0, 4, 4)
        h = cutoff_field("x", 1.5, 2.75, name="h")
        with pytest.raises(ConditioningError):
            build_kernel(ginibre, 40, h=h, rule=rule)


class TestEvalKernel:
    def test_hermitian_symmetry(self, kernel16):
        rng = np.random.default_rng(11)
        z = rng.standard_normal(100) + 1j * rng.standard_normal(100)
        w = rng.standard_normal(100) + 1j * rng.standard_normal(100)
        for zi, wi in zip(z[:20], w[:20]):
            a = eval_weighted_kernel(kernel16, zi, wi)
            b = eval_weighted_kernel(kernel16, wi, zi)
            assert abs(a - np.conjugate(b)) <= 1e-12 * max(1.0, abs(a))

    def test_reproducing_member(self, kernel8):
        # f(z) = <f, K_z> for a weighted-monomial member of the space
        rule = make_polar_quadrature(kernel8.effective_radius, 120, 64,
                                     breakpoints=(kernel8.droplet_radius,))
        z0 = 0.4 + 0.3j
        zz = rule.points_complex()
        f = kernel8.features(zz)[:, 3]
        lhs = np.sum(rule.weights * f
                     * np.conj(kernel8.kval(zz, np.atleast_1d(z0))[:, 0]))
        target = kernel8.features(np.atleast_1d(z0))[0, 3]
        assert abs(lhs - target) <= 1e-6 * max(1.0, abs(target))

    def test_bulk_diagonal(self, ginibre):
        km = build_kernel(ginibre, 32)
        val = one_point(km, 0.5 + 0j)
        assert abs(val - 1 / np.pi) <= 0.02 / np.pi
        km64 = build_kernel(ginibre, 64)
        assert abs(one_point(km64, 0.5 + 0j) - 1 / np.pi) <= abs(val - 1 / np.pi)

    def test_no_overflow_far_out(self, kernel16):
        # raw monomial pieces would overflow here; log-space assembly must not
        val = eval_weighted_kernel(kernel16, 9.0 + 0j, 9.5 + 0j)
        assert np.isfinite(abs(val))
        assert abs(val) < 1e-200

    def test_fast_path_matches_gram_path(self, ginibre, kernel8):
        herm = Potential.hermitian([(1, 1, 0.5)])
        km_gram = build_kernel(herm, 8)
        assert km_gram.mode == "gram" and kernel8.mode == "radial"
        rng = np.random.default_rng(2)
        z = 1.3 * (rng.standard_normal(40) + 1j * rng.standard_normal(40))
        diff = np.abs(km_gram.kval(z, z) - kernel8.kval(z, z))
        assert diff.max() <= 1e-8


class TestOnePoint:
    def test_integral_one(self, kernel16):
        rule = default_kernel_rule(kernel16)
        total = np.sum(rule.weights * one_point(kernel16, rule.points_complex()))
        assert total == pytest.approx(1.0, rel=1e-6)

    def test_nonnegative(self, kernel16):
        rng = np.random.default_rng(8)
        z = 2 * (rng.standard_normal(50) + 1j * rng.standard_normal(50))
        assert np.all(one_point(kernel16, z) >= 0)

    def test_exterior_suppression_constant(self, ginibre, disk, disk_obstacle):
        rad = np.linspace(1.15, 1.6, 12)
        consts = []
        for n in (16, 32, 64):
            km = build_kernel(ginibre, n)
            ratio = km.kdiag(rad + 0j) / (n * np.exp(-2 * n * disk_obstacle.gap_radial(rad)))
            consts.append(ratio.max())
        assert consts[1] <= consts[0] * 1.05
        assert consts[2] <= consts[1] * 1.05


class TestCorrelation2:
    def test_zero_on_diagonal(self, kernel8):
        assert correlation2(kernel8, 0.3 + 0.1j, 0.3 + 0.1j) == 0.0

    def test_decorrelation_far_pairs(self, kernel16):
        z, w = 0.55 + 0j, -0.55 + 0j
        r2 = correlation2(kernel16, z, w)
        prod = kernel16.kdiag(z) * kernel16.kdiag(w)
        assert abs(r2 / prod - 1.0) <= 0.01

    def test_pair_integral(self, kernel8):
        # standard determinantal identity: double integral of R2 = n(n-1)
        n = kernel8.n
        rule = make_polar_quadrature(kernel8.effective_radius, 100, 96,
                                     breakpoints=(kernel8.droplet_radius,))
        z = rule.points_complex()
        w = rule.weights
        trace = np.sum(w * kernel8.kdiag(z))
        k2 = 0.0
        for s in range(0, z.size, 2048):
            sl = slice(s, s + 2048)
            k2 += np.sum(np.abs(kernel8.kval(z, z[sl])) ** 2
                         * (w[:, None] * w[sl][None, :]))
        assert trace ** 2 - k2 == pytest.approx(n * (n - 1), rel=1e-4)


class TestApproxKernel:
    def test_diagonal_identity(self, ginibre, quartic):
        for p in (ginibre, quartic):
            ak = ApproxKernel(p)
            for w in (0.1 + 0.2j, 0.4 - 0.1j):
                val = eval_approx_kernel(ak, 24, w, w)
                target = 24 * p.laplacian(w) / (2 * np.pi)
                assert abs(abs(val) - target) <= 1e-10 * target

    def test_difference_bounded_across_n(self, ginibre):
        ak = ApproxKernel(ginibre)
        rng = np.random.default_rng(21)
        zs = 0.35 * (rng.standard_normal(12) + 1j * rng.standard_normal(12))
        offsets = 0.25 * (rng.standard_normal(12) + 1j * rng.standard_normal(12))
        sups = []
        for n in (16, 32, 64):
            km = build_kernel(ginibre, n)
            diffs = []
            for z, off in zip(zs, offsets):
                w = z + off / np.sqrt(n) * np.sqrt(16)
                exact = abs(eval_weighted_kernel(km, z, w))
                approx = abs(eval_approx_kernel(ak, n, z, w))
                diffs.append(abs(exact - approx))
            sups.append(max(diffs))
        assert sups[1] <= sups[0] * 1.25 + 1e-9
        assert sups[2] <= sups[0] * 1.25 + 1e-9

    def test_constant_perturbation_cancels(self, ginibre):
        # constant h: the linearization factors cancel exactly
        h = cutoff_field(1.0, 1.5, 2.5, name="const")
        ak0 = ApproxKernel(ginibre)
        akh = ApproxKernel(ginibre, h=h)
        z, w = 0.3 + 0.1j, 0.35 + 0.05j
        a = eval_approx_kernel(ak0, 16, z, w)
        b = eval_approx_kernel(akh, 16, z, w)
        assert abs(a - b) <= 1e-10 * abs(a)


class TestBerezinHeat:
    def test_berezin_normalization(self, kernel16):
        w0 = 0.3 + 0.2j
        rule = default_kernel_rule(kernel16)
        mass = np.sum(rule.weights * berezin(kernel16, w0, rule.points_complex()))
        assert mass == pytest.approx(1.0, rel=1e-6)

    def test_berezin_degenerate_root(self, kernel16):
        with pytest.raises(DegenerateRootError):
            berezin(kernel16, 60.0 + 0j, 0.0 + 0j)

    def test_heat_kernel_values(self, ginibre):
        # c = 1 for the quadratic field: value n/pi at the root
        assert heat_kernel(ginibre, 16, 0.3 + 0j, 0.3 + 0j) \
            == pytest.approx(16 / np.pi, rel=1e-14)

    def test_heat_kernel_normalization_and_tail(self, ginibre):
        n = 16
        w0 = 0.1 + 0j
        rule = make_polar_quadrature(3.0, 300, 64, center=w0)
        mass = np.sum(rule.weights
                      * heat_kernel(ginibre, n, w0, rule.points_complex()))
        assert mass == pytest.approx(1.0, abs=1e-10)
        # closed-form Gaussian tail outside the bulk scale radius
        dn = bulk_scale(n)
        tail = np.exp(-n * dn * dn)
        assert tail <= 1.0 / n ** 3

    def test_heat_domain_error(self):
        p = Potential.radial([(2, 0.25)])  # ΔQ vanishes at the origin
        with pytest.raises(DomainError):
            heat_kernel(p, 8, 0j, 0.1 + 0j)

    def test_berezin_close_to_heat_near_root(self, ginibre):
        n = 64
        km = build_kernel(ginibre, n)
        w0 = 0.2 + 0.1j
        z = w0 + np.linspace(-0.1, 0.1, 21) + 0j
        b = berezin(km, w0, z)
        h = heat_kernel(ginibre, n, w0, z)
        assert np.max(np.abs(b - h)) <= 1.5 * n * bulk_scale(n)


class TestSerialization:
    def test_radial_round_trip(self, kernel8):
        back = KernelModel.from_json(kernel8.to_json())
        z = np.array([0.3 + 0.1j, -0.5 + 0.4j])
        assert np.allclose(back.kval(z, z), kernel8.kval(z, z), rtol=0, atol=1e-14)

    def test_gram_round_trip(self, ginibre):
        h = cutoff_field("x", 1.5, 2.75, name="h")
        km = build_kernel(ginibre, 6, h=h)
        back = KernelModel.from_json(km.to_json())
        z = np.array([0.3 + 0.1j, -0.5 + 0.4j])
        assert np.allclose(back.kval(z, z), km.kval(z, z), rtol=0, atol=1e-12)
