"""Linear statistics, fluctuation estimators, and Ward-identity verification.

The expected fluctuation of a linear statistic at size n is
``n (∫ f u_n - ∫ f u)`` with u_n the normalized kernel diagonal and u the
equilibrium density.  The Ward identity states that the random variable

    W+[v] = (1/2) sum_{j!=k} (v(λ_j)-v(λ_k))/(λ_j-λ_k)
            - 2n Tr[v ∂Q] + Tr[∂v]

has exactly zero expectation for Lipschitz compactly supported v; under the
weight perturbed by -h/n the variable gains the term ``+ 2 Tr[v ∂h]``.  All
expectations here are computed deterministically from the kernel (the
identity is exact, so the reported residual measures quadrature only).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .errors import ParameterError
from .fieldops import dn_field
from .numerics import integrate, make_polar_quadrature

WARD_BLOCK = 1024
WARD_RADIAL = 56
WARD_ANGULAR = 72


def ward_rule(km, v, n_radial=WARD_RADIAL, n_angular=WARD_ANGULAR):
    """Polar rule for the double-pair integrals of the Ward machinery.

    Node counts stay moderate because the pair sums are quadratic in the
    rule size; breakpoints at the droplet radius and at the cutoff joints of
    v keep the integrands piecewise smooth.
    """
    r_max = max(km.effective_radius, v.support_radius)
    breaks = tuple(sorted({km.droplet_radius,
                           *(b for b in v.chi_joint_radii() if 0 < b < r_max)}))
    return make_polar_quadrature(r_max, n_radial, n_angular, breakpoints=breaks)


def linear_statistic(config, f):
    """Sum of f over the configuration points; exact and permutation invariant."""
    pts = config.points
    return float(np.sum(f(pts.real, pts.imag)))


def equilibrium_average(d, f, rule=None):
    """∫ f dσ over the droplet (σ has density ΔQ/(2π) there)."""
    if rule is None:
        from .fieldops import _droplet_rule
        rule = _droplet_rule(d, extra_breaks=f.chi_joint_radii())
    return integrate(rule, lambda x, y: np.asarray(f(x, y)) * d.density_xy(x, y))


def fluctuation_mean(km, d, f, rule=None):
    """Kernel-exact expected fluctuation n(∫ f u_n - σ(f)) of Tr f."""
    if rule is None:
        breaks = sorted({d.radius, *f.chi_joint_radii()})
        r_max = max(f.support_radius, km.effective_radius)
        from .numerics import make_polar_quadrature
        rule = make_polar_quadrature(r_max, 320, 256,
                                     breakpoints=tuple(b for b in breaks
                                                       if 0 < b < r_max))
    mean_n = integrate(rule, lambda x, y: np.asarray(f(x, y))
                       * km.kdiag(x + 1j * y) / km.n)
    inside = integrate(rule, lambda x, y: np.asarray(f(x, y)) * d.density_xy(x, y))
    return km.n * (mean_n - inside)


@dataclass(frozen=True)
class FluctuationReport:
    """Expected fluctuation against its limit for one (n, f, method) cell."""

    n: int
    f_name: str
    nu_n: float
    nu_limit: float | None
    method: str = "kernel"        # "kernel" | "mc"
    std_error: float | None = None

    @property
    def gap(self):
        return None if self.nu_limit is None else self.nu_n - self.nu_limit


# ---------------------------------------------------------------------------
# Ward identity machinery
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WardReport:
    """Expectations of the three Ward terms and their residual.

    ``residual`` is I - II + III (+ the perturbation expectation when the
    kernel carries one); ``relative`` compares it against the largest term.
    """

    n: int
    v_name: str
    term_i: complex
    term_ii: complex
    term_iii: complex
    term_perturbation: complex
    relative: float

    @property
    def residual(self):
        return (self.term_i - self.term_ii + self.term_iii
                + self.term_perturbation)


@dataclass(frozen=True)
class WardDecompositionReport:
    """Both sides of the pair-term decomposition and the error-term sizes."""

    n: int
    v_name: str
    lhs: complex                   # (1/2n) ∬ ratio · R2
    term_obstacle: complex         # 2 ∫ v ∂Q̌ · (kernel diagonal)
    term_cauchy_field: complex     # ∫ v D_n u_n
    term_kernel_square: complex    # (1/2n) ∬ ratio · |K|^2
    eps_smoothing: complex         # ∬ ratio |K|^2 / n - ∫ ∂v u_n
    eps_quadratic: complex         # -(1/2) ∫ ∂̄v D_n^2 / n

    @property
    def rhs(self):
        return self.term_obstacle + self.term_cauchy_field - self.term_kernel_square

    @property
    def relative(self):
        scale = max(abs(self.lhs), abs(self.term_obstacle),
                    abs(self.term_cauchy_field), abs(self.term_kernel_square))
        return abs(self.lhs - self.rhs) / scale if scale else 0.0


def _pair_sums(km, v, rule):
    """Blocked double sums ∬ ratio(z,w) R1⊗R1 and ∬ ratio |K|^2.

    ``ratio`` is the divided difference (v(z)-v(w))/(z-w), extended along
    the diagonal by ∂v (the two-point intensity vanishes there, so the
    extension only guards against 0/0 on coincident nodes).
    """
    z = rule.points_complex()
    w = rule.weights
    phi = km.features(z)
    r1 = np.sum(np.abs(phi) ** 2, axis=1)
    vvals = v.value(z)
    dv, _ = v.wirtinger(z)
    acc_r1r1 = 0.0 + 0.0j
    acc_k2 = 0.0 + 0.0j
    size = z.size
    for start in range(0, size, WARD_BLOCK):
        sl = slice(start, min(start + WARD_BLOCK, size))
        kblock = phi @ phi[sl].conj().T          # (N, B)
        dz = z[:, None] - z[sl][None, :]
        coincident = dz == 0
        dz_safe = np.where(coincident, 1.0, dz)
        ratio = (vvals[:, None] - vvals[sl][None, :]) / dz_safe
        ratio = np.where(coincident, dv[:, None] * np.ones_like(ratio), ratio)
        ww = w[:, None] * w[sl][None, :]
        acc_k2 += np.sum(ratio * (np.abs(kblock) ** 2) * ww)
        acc_r1r1 += np.sum(ratio * (r1[:, None] * r1[sl][None, :]) * ww)
    return acc_r1r1, acc_k2, z, w, r1, vvals, dv


def ward_check_kernel(km, v, rule=None):
    """Deterministic Ward residual for the field v under the kernel's law."""
    if rule is None:
        rule = ward_rule(km, v)
    acc_r1r1, acc_k2, z, w, r1, vvals, dv = _pair_sums(km, v, rule)
    term_i = 0.5 * (acc_r1r1 - acc_k2)
    del_q = km.potential.wirtinger_del(z)
    term_ii = 2.0 * km.n * np.sum(w * vvals * del_q * r1)
    term_iii = np.sum(w * dv * r1)
    term_pert = 0.0 + 0.0j
    if km.h is not None:
        from .numerics import Dual2
        X, Y = Dual2.seed(z.real, z.imag)
        dh = km.h(X, Y)
        del_h = 0.5 * (dh.dx - 1j * dh.dy)
        term_pert = 2.0 * np.sum(w * vvals * del_h * r1)
    scale = max(abs(term_i), abs(term_ii), abs(term_iii), abs(term_pert))
    residual = term_i - term_ii + term_iii + term_pert
    return WardReport(
        n=km.n, v_name=v.name,
        term_i=complex(term_i), term_ii=complex(term_ii),
        term_iii=complex(term_iii), term_perturbation=complex(term_pert),
        relative=float(abs(residual) / scale) if scale else 0.0)


def ward_decomposition_check(km, v, d, obs, rule=None):
    """Both sides of the exact rewriting of the pair term, plus error terms.

    LHS: the expectation of the normalized pair sum, (1/2n) ∬ ratio R2.
    RHS: 2 ∫ v ∂Q̌ K + ∫ v D_n u_n - (1/2n) ∬ ratio |K|^2.  Also reports the
    two o(1) error terms of the limit form of the identity.
    """
    if rule is None:
        rule = ward_rule(km, v)
    acc_r1r1, acc_k2, z, w, r1, vvals, dv = _pair_sums(km, v, rule)
    n = km.n
    lhs = (acc_r1r1 - acc_k2) / (2.0 * n)
    del_qcheck = obs.two_del(z) / 2.0
    term_obstacle = 2.0 * np.sum(w * vvals * del_qcheck * r1)
    dvals = dn_field(km, d, z)
    u_n = r1 / n
    term_cauchy = np.sum(w * vvals * dvals * u_n)
    term_k2 = acc_k2 / (2.0 * n)
    _, delbar_v = v.wirtinger(z)
    eps_smoothing = acc_k2 / n - np.sum(w * dv * u_n)
    eps_quadratic = -0.5 * np.sum(w * delbar_v * dvals ** 2) / n
    return WardDecompositionReport(
        n=n, v_name=v.name, lhs=complex(lhs),
        term_obstacle=complex(term_obstacle),
        term_cauchy_field=complex(term_cauchy),
        term_kernel_square=complex(term_k2),
        eps_smoothing=complex(eps_smoothing),
        eps_quadratic=complex(eps_quadratic))


# ---------------------------------------------------------------------------
# Monte Carlo estimators
# ---------------------------------------------------------------------------

def _jackknife_se(values, statistic):
    values = np.asarray(values, dtype=float)
    n = values.size
    loo = np.array([statistic(np.delete(values, i)) for i in range(n)])
    return float(np.sqrt((n - 1) * np.mean((loo - loo.mean()) ** 2)))


@dataclass(frozen=True)
class MonteCarloFluctuations:
    """Sample mean/variance of the centered linear statistic with jackknife SEs."""

    count: int
    mean: float
    variance: float
    se_mean: float
    se_variance: float


def mc_fluctuation(samples, f, d, rule=None):
    """Sample fluctuation statistics of Tr f over configurations.

    Mean is of ``Tr f - n σ(f)``; variance is the sample variance of Tr f.
    """
    samples = list(samples)
    if len(samples) < 100:
        raise ParameterError("need at least 100 samples", count=len(samples))
    base = samples[0].n * equilibrium_average(d, f, rule=rule)
    traces = np.array([linear_statistic(c, f) for c in samples])
    flucts = traces - base
    if len(samples) > 2000:
        # Jackknife cost is quadratic; block it for very long streams.
        blocks = np.array_split(flucts, 1000)
        flucts_j = np.array([b.mean() for b in blocks])
    else:
        flucts_j = flucts
    se_mean = _jackknife_se(flucts_j, np.mean)
    se_var = _jackknife_se(flucts, lambda x: np.var(x, ddof=1))
    return MonteCarloFluctuations(
        count=len(samples),
        mean=float(flucts.mean()),
        variance=float(np.var(traces, ddof=1)),
        se_mean=se_mean,
        se_variance=se_var)


@dataclass(frozen=True)
class CltReport:
    """Normality diagnostics of standardized fluctuations."""

    count: int
    ks_statistic: float | None
    ks_pvalue: float | None
    skewness: float | None
    excess_kurtosis: float | None
    se_skewness: float | None
    se_kurtosis: float | None
    skipped: bool = False
    reason: str | None = None


def clt_test(samples, h, d, rule=None):
    """KS statistic and first four standardized moments of the fluctuations."""
    samples = list(samples)
    if len(samples) < 1000:
        raise ParameterError("need at least 1000 samples", count=len(samples))
    traces = np.array([linear_statistic(c, h) for c in samples])
    var = float(np.var(traces, ddof=1))
    scale = float(np.mean(traces ** 2)) + 1.0
    if var <= 1e-12 * scale:
        return CltReport(count=len(samples), ks_statistic=None, ks_pvalue=None,
                         skewness=None, excess_kurtosis=None,
                         se_skewness=None, se_kurtosis=None,
                         skipped=True, reason="degenerate variance")
    std = (traces - traces.mean()) / np.sqrt(var)
    ks = sps.kstest(std, "norm")
    m = len(samples)
    return CltReport(
        count=m,
        ks_statistic=float(ks.statistic),
        ks_pvalue=float(ks.pvalue),
        skewness=float(sps.skew(std)),
        excess_kurtosis=float(sps.kurtosis(std)),
        se_skewness=float(np.sqrt(6.0 / m)),
        se_kurtosis=float(np.sqrt(24.0 / m)),
    )
