import os

import numpy as np
import pytest
from scipy import stats as sps

from rnmlab.errors import ParameterError, ParseError, SchemaError
from rnmlab.kernel import build_kernel, one_point
from rnmlab.sampler import (
    ChainConfig,
    Configuration,
    hamiltonian,
    load_configurations,
    metropolis_log_ratio,
    sample_dpp,
    sample_dpp_stream,
    sample_mcmc,
    save_configurations,
)


class TestHamiltonian:
    def test_single_point_ginibre(self, ginibre):
        assert hamiltonian(ginibre, None, [0j]) == 0.0

    def test_two_symmetric_points(self, ginibre):
        # direct substitution: interaction -2 log(2a), field 2n * 2Q(a) with n=2
        a = 0.7
        expected = -2 * np.log(2 * a) + 8 * float(ginibre.value(np.array([a + 0j]))[0])
        assert hamiltonian(ginibre, None, [-a + 0j, a + 0j]) \
            == pytest.approx(expected, rel=1e-14)

    def test_permutation_invariance(self, quartic):
        rng = np.random.default_rng(3)
        pts = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        a = hamiltonian(quartic, None, pts)
        b = hamiltonian(quartic, None, pts[::-1])
        perm = rng.permutation(6)
        c = hamiltonian(quartic, None, pts[perm])
        assert a == b == c

    def test_coincident_points_infinite(self, ginibre):
        assert hamiltonian(ginibre, None, [0.3 + 0j, 0.3 + 0j]) == np.inf

    def test_perturbation_lowers_energy(self, ginibre, cutoff_re_z):
        pts = np.array([0.5 + 0j, -0.2 + 0.1j])
        h0 = hamiltonian(ginibre, None, pts)
        h1 = hamiltonian(ginibre, cutoff_re_z, pts)
        shift = -2 * np.sum(cutoff_re_z(pts.real, pts.imag))
        assert h1 - h0 == pytest.approx(shift, abs=1e-12)


class TestDppSampler:
    def test_determinism(self, kernel16):
        c1 = sample_dpp(kernel16, 42)
        c2 = sample_dpp(kernel16, 42)
        assert np.array_equal(c1.points, c2.points)
        c3 = sample_dpp(kernel16, 43)
        assert not np.array_equal(c1.points, c3.points)

    def test_configuration_contract(self, kernel16):
        c = sample_dpp(kernel16, 7)
        assert c.n == 16 and c.points.size == 16
        assert np.all(np.isfinite(c.points))
        assert c.tag == "dpp"

    def test_points_inside_effective_support(self, kernel16):
        # exterior suppression: nearly all mass within R + 5 log^2(n)/sqrt(n)
        samples = [sample_dpp_stream(kernel16, 5, i) for i in range(60)]
        pts = np.concatenate([c.points for c in samples])
        frac = np.mean(np.abs(pts) <= 1.0 + 5 * np.log(16.0) ** 2 / 4.0)
        assert frac >= 0.99

    def test_empirical_one_point_density(self, ginibre, kernel16):
        # L1 distance of the radial histogram against the kernel prediction
        samples = [sample_dpp_stream(kernel16, 11, i) for i in range(500)]
        pts = np.concatenate([c.points for c in samples])
        edges = np.linspace(0.0, kernel16.effective_radius, 25)
        hist, _ = np.histogram(np.abs(pts), bins=edges)
        emp = hist / (16 * len(samples))
        mids = 0.5 * (edges[1:] + edges[:-1])
        widths = np.diff(edges)
        pred = one_point(kernel16, mids + 0j) * 2 * np.pi * mids * widths
        assert np.sum(np.abs(emp - pred)) <= 0.05

    def test_two_point_chi2_against_explicit_density(self, ginibre):
        # the n = 2 process has density prop. to |z1-z2|^2 e^{-2n(Q+Q)};
        # after integrating the angles the sorted radii (u, v) have density
        # prop. to (u^2+v^2) u v e^{-2(u^2+v^2)} on u < v  (n = 2)
        km = build_kernel(ginibre, 2)
        count = 10_000
        samples = [sample_dpp_stream(km, 17, i) for i in range(count)]
        radii = np.sort(np.abs(np.array([c.points for c in samples])), axis=1)
        edges = np.array([0.0, 0.35, 0.55, 0.75, 0.95, 1.2, 3.5])
        obs = np.histogram2d(radii[:, 0], radii[:, 1], bins=[edges, edges])[0]

        from scipy.integrate import dblquad
        def dens(u, v):
            return (u * u + v * v) * u * v * np.exp(-2 * (u * u + v * v))
        z_norm = dblquad(dens, 0, 6.0, lambda v: 0, lambda v: 6.0)[0]
        k = edges.size - 1
        exp_probs = np.zeros((k, k))
        for i in range(k):
            for j in range(k):
                if edges[j + 1] <= edges[i]:
                    continue  # upper triangle only: u < v
                lo_v, hi_v = edges[j], edges[j + 1]
                exp_probs[i, j] = 2 * dblquad(
                    dens,
                    max(lo_v, 0), hi_v,
                    lambda v, i=i: edges[i],
                    lambda v, i=i: min(edges[i + 1], v))[0] / z_norm
        mask = exp_probs * count >= 10
        chi2 = np.sum((obs[mask] - count * exp_probs[mask]) ** 2
                      / (count * exp_probs[mask]))
        dof = int(mask.sum()) - 1
        pvalue = sps.chi2.sf(chi2, dof)
        assert pvalue > 0.01


class TestMcmcSampler:
    def test_chain_config_validation(self):
        with pytest.raises(ParameterError):
            ChainConfig(sweeps=10, burn_in=10)
        with pytest.raises(ParameterError):
            ChainConfig(sweeps=10, burn_in=0, thinning=0)

    def test_acceptance_rate_recorded(self, ginibre):
        cc = ChainConfig(sweeps=220, burn_in=20, thinning=10, seed=3)
        configs = list(sample_mcmc(ginibre, None, 16, cc))
        assert len(configs) == 20
        assert all(0 < c.acceptance < 1 for c in configs)
        assert all(c.tag == "mcmc" for c in configs)

    def test_symmetric_proposal_ratio(self, ginibre):
        # acceptance uses only the energy difference: the ratio for a move
        # equals minus the ratio for the reverse move
        rng = np.random.default_rng(5)
        pts = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        cand = pts[3] + 0.2 - 0.1j
        fwd = metropolis_log_ratio(ginibre, None, 8, pts, 3, cand)
        swapped = pts.copy()
        swapped[3] = cand
        back = metropolis_log_ratio(ginibre, None, 8, swapped, 3, pts[3])
        assert fwd == pytest.approx(-back, rel=1e-12)

    def test_radial_statistic_matches_dpp(self, ginibre, kernel16):
        cc = ChainConfig(sweeps=4100, burn_in=100, thinning=4, seed=9)
        mcmc = list(sample_mcmc(ginibre, None, 16, cc))
        stat_m = np.array([np.sum(np.abs(c.points) ** 2) for c in mcmc])
        dpp = [sample_dpp_stream(kernel16, 23, i) for i in range(400)]
        stat_d = np.array([np.sum(np.abs(c.points) ** 2) for c in dpp])
        se_d = stat_d.std(ddof=1) / np.sqrt(stat_d.size)
        # batch means for the correlated chain
        batches = np.array([b.mean() for b in np.array_split(stat_m, 25)])
        se_m = batches.std(ddof=1) / np.sqrt(batches.size)
        diff = abs(stat_m.mean() - stat_d.mean())
        assert diff <= 3 * np.hypot(se_m, se_d)

    def test_pair_distance_matches_rejection_sampling(self, ginibre):
        # n = 2: |λ1-λ2| against brute-force rejection from the explicit law
        cc = ChainConfig(sweeps=10_600, burn_in=600, thinning=1, seed=31)
        mcmc = list(sample_mcmc(ginibre, None, 2, cc))
        gaps = np.array([abs(c.points[0] - c.points[1]) for c in mcmc])

        rng = np.random.default_rng(100)
        kept = []
        while len(kept) < 10_000:
            z = rng.standard_normal((8192, 2)) + 1j * rng.standard_normal((8192, 2))
            z *= 0.5  # proposal stddev per coordinate
            w = np.abs(z[:, 0] - z[:, 1]) ** 2
            u = rng.random(8192)
            kept.extend(np.abs(z[u * 8.0 < w, 0] - z[u * 8.0 < w, 1]))
        brute = np.asarray(kept[:10_000])
        ks = sps.ks_2samp(gaps, brute)
        assert ks.statistic <= 0.05

    def test_split_chain_agreement(self, ginibre):
        cc = ChainConfig(sweeps=2100, burn_in=100, thinning=2, seed=13)
        energies = np.array([hamiltonian(ginibre, None, c.points)
                             for c in sample_mcmc(ginibre, None, 8, cc)])
        a, b = np.array_split(energies, 2)
        na, nb = len(a), len(b)
        pooled = np.sqrt(a.var(ddof=1) / na + b.var(ddof=1) / nb)
        assert abs(a.mean() - b.mean()) <= 3 * pooled * np.sqrt(10)
        # variance-ratio proxy for chain stability
        ratio = max(a.var(ddof=1), b.var(ddof=1)) / min(a.var(ddof=1),
                                                        b.var(ddof=1))
        assert ratio < 2.5


class TestExchangeability:
    def test_reversal_leaves_statistics(self, kernel16, cutoff_abs2, ginibre):
        from rnmlab.stats import linear_statistic
        c = sample_dpp(kernel16, 3)
        rev = Configuration(points=c.points[::-1], n=c.n,
                            potential_id=c.potential_id,
                            perturbation_id=c.perturbation_id,
                            tag=c.tag, seed=c.seed)
        assert linear_statistic(c, cutoff_abs2) \
            == pytest.approx(linear_statistic(rev, cutoff_abs2), rel=1e-15)
        assert hamiltonian(ginibre, None, c.points) \
            == pytest.approx(hamiltonian(ginibre, None, rev.points), rel=1e-15)


class TestPersistence:
    def test_round_trip_bit_exact(self, kernel8, tmp_path):
        configs = [sample_dpp_stream(kernel8, 5, i) for i in range(100)]
        path = tmp_path / "configs.jsonl"
        save_configurations(path, configs)
        loaded = load_configurations(path)
        assert len(loaded) == 100
        for a, b in zip(configs, loaded):
            assert np.array_equal(a.points, b.points)
            assert (a.n, a.tag, a.seed) == (b.n, b.tag, b.seed)

    def test_wrong_n_vs_header(self, kernel8, tmp_path):
        path = tmp_path / "bad.jsonl"
        c = sample_dpp(kernel8, 1)
        save_configurations(path, [c])
        lines = path.read_text().splitlines()
        tampered = lines[1].replace('"n":8', '"n":9')
        path.write_text(lines[0] + "\n" + tampered + "\n")
        with pytest.raises(SchemaError):
            load_configurations(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert load_configurations(path) == []

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "broken.jsonl"
        path.write_text('{"header":{"n":2,"pot":"p","tag":"dpp"}}\n{oops\n')
        with pytest.raises(ParseError) as err:
            load_configurations(path)
        assert err.value.details["line"] == 2
