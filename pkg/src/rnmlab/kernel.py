"""Exact weighted reproducing kernels and their bulk approximations.

The n-point eigenvalue process is determinantal with kernel
``K_n(z, w) e^(-n(Q(z)+Q(w)))`` where K_n reproduces analytic polynomials of
degree < n in L^2(e^(-2nQ)).  For radial potentials the monomials are
orthogonal, so the kernel is assembled from their norms
``h_k = 2π ∫ r^(2k+1) e^(-2nQ(r)) dr`` (the fast path).  For perturbed
weights ``Q - h/n`` or Hermitian-polynomial potentials, the monomial Gram
matrix is built by polar quadrature, preconditioned by the radial reference
norms, and inverted through its Cholesky factor.

All kernel evaluations track log-magnitude and phase internally: the raw
monomial pieces ``z^k e^(-nQ(z))`` overflow double range already for modest
n, while the assembled features are bounded by the kernel diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .errors import (
    ConditioningError,
    DegenerateRootError,
    DomainError,
    EvaluationError,
    ParameterError,
)
from .numerics import (
    find_root,
    integrate,
    make_polar_quadrature,
    make_radial_quadrature,
)
from .potential import Potential, obstacle, solve_droplet

NORM_NODES = 400
GRAM_BLOCK = 4096
TAIL_EXPONENT = 60.0
COND_LIMIT = 1e12


def _radial_envelope(p):
    """Radial potential from the diagonal coefficients (identity for radial)."""
    if p.kind == "radial":
        return p
    diag = [(j, c.real) for (j, k), c in p.table if j == k and j >= 1]
    return Potential.radial(diag)


def _sup_abs_on_disk(f, radius, n_r=48, n_t=64):
    r = np.linspace(0.0, radius, n_r)
    t = np.linspace(0.0, 2.0 * np.pi, n_t, endpoint=False)
    R, T = np.meshgrid(r, t, indexing="ij")
    return float(np.max(np.abs(f(R * np.cos(T), R * np.sin(T)))))


def effective_support_radius(p, n, h=None, tail=TAIL_EXPONENT):
    """Radius beyond which the one-point intensity is negligible.

    Uses the exterior suppression exponent 2n (Q - Q̌); for a perturbed
    weight the bound is loosened by the sup of |h|.
    """
    env = _radial_envelope(p)
    d = solve_droplet(env)
    obs = obstacle(env, d)
    slack = 0.0
    if h is not None:
        slack = 4.0 * _sup_abs_on_disk(h, h.support_radius)
    target = (tail + slack) / (2.0 * n)
    r_hi = d.radius * 2.0
    while float(obs.gap_radial(r_hi)) < target:
        r_hi *= 2.0
        if r_hi > 1e6:
            raise ParameterError("weight decays too slowly for a finite rule")
    r = find_root(lambda s: float(obs.gap_radial(s)) - target, d.radius, r_hi)
    if h is not None:
        r = max(r, h.support_radius)
    return float(r), d.radius


def _reference_log_norms(p, n, r_eff, droplet_radius):
    """log h_k for k < n under the radial envelope weight, by radial quadrature."""
    env = _radial_envelope(p)
    rule = make_radial_quadrature(0.0, r_eff, NORM_NODES,
                                  breakpoints=(droplet_radius,))
    r = rule.xs
    logw = np.log(rule.weights) + np.log(r) - 2.0 * n * env.radial_value(r)
    ks = np.arange(n)
    # exponents[i, k] = (2k) log r_i + log(w_i r_i e^{-2nQ})
    expo = 2.0 * np.outer(np.log(r), ks) + logw[:, None]
    return logsumexp(expo, axis=0) + np.log(2.0 * np.pi)


@dataclass
class KernelModel:
    """Weighted reproducing kernel of the n-point process.

    ``mode`` is "radial" (diagonal norms) or "gram" (inverse Cholesky factor
    of the preconditioned monomial Gram matrix).  Instances are immutable
    after construction and cheap to share.
    """

    n: int
    potential: Potential
    h: object | None
    mode: str
    log_norms: np.ndarray
    linv: np.ndarray | None
    effective_radius: float
    droplet_radius: float
    rule_descriptor: dict = field(default_factory=dict)

    # -- feature evaluation ---------------------------------------------------

    def _weight_exponent(self, z):
        """-n Q̃(z) with Q̃ = Q - h/n, as the real exponent -nQ + h."""
        expo = -self.n * self.potential.value(z)
        if self.h is not None:
            expo = expo + np.asarray(self.h(z.real, z.imag), dtype=float)
        return expo

    def features(self, z):
        """Matrix of orthonormal weighted basis functions at the points z.

        Rows are points, columns the n basis elements; the weighted kernel is
        ``features(Z) @ features(W).conj().T``.
        """
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        ks = np.arange(self.n)
        out = np.zeros((z.size, self.n), dtype=complex)
        nz = z != 0
        if nz.any():
            logz = np.log(z[nz])
            expo = (np.multiply.outer(logz, ks)
                    + self._weight_exponent(z[nz])[:, None]
                    - 0.5 * self.log_norms[None, :])
            out[nz] = np.exp(expo)
        if (~nz).any():
            out[~nz, 0] = np.exp(self._weight_exponent(z[~nz])
                                 - 0.5 * self.log_norms[0])
        if self.linv is not None:
            out = out @ self.linv.T
        return out

    def kdiag(self, z):
        """One-point intensity (kernel diagonal) at z."""
        z = np.asarray(z, dtype=complex)
        scalar = z.ndim == 0
        phi = self.features(np.atleast_1d(z))
        vals = np.sum(np.abs(phi) ** 2, axis=1)
        return float(vals[0]) if scalar else vals.reshape(z.shape)

    def kval(self, z, w):
        """Weighted kernel matrix between point sets z (rows) and w (columns)."""
        pz = self.features(z)
        pw = self.features(w)
        return pz @ pw.conj().T

    # -- serialization --------------------------------------------------------

    def to_json(self):
        obj = {
            "n": self.n,
            "potential": self.potential.to_json(),
            "perturbation": self.h.to_json() if self.h is not None else None,
            "mode": self.mode,
            "log_norms": [float(v) for v in self.log_norms],
            "factor_inverse": None,
            "effective_radius": self.effective_radius,
            "droplet_radius": self.droplet_radius,
            "quadrature": self.rule_descriptor,
        }
        if self.linv is not None:
            obj["factor_inverse"] = [[[float(c.real), float(c.imag)] for c in row]
                                     for row in self.linv]
        return obj

    @staticmethod
    def from_json(obj):
        from .fieldops import TestFunction
        h = TestFunction.from_json(obj["perturbation"]) \
            if obj.get("perturbation") else None
        linv = None
        if obj.get("factor_inverse") is not None:
            linv = np.array([[complex(c[0], c[1]) for c in row]
                             for row in obj["factor_inverse"]])
        return KernelModel(
            n=int(obj["n"]),
            potential=Potential.from_json(obj["potential"]),
            h=h,
            mode=obj["mode"],
            log_norms=np.asarray(obj["log_norms"], dtype=float),
            linv=linv,
            effective_radius=float(obj["effective_radius"]),
            droplet_radius=float(obj["droplet_radius"]),
            rule_descriptor=obj.get("quadrature", {}),
        )


def build_kernel(p, n, h=None, rule=None):
    """Kernel model for the weight ``e^(-2n(Q - h/n))``.

    Radial potentials with no perturbation use the diagonal fast path;
    otherwise the monomial Gram matrix is assembled on a polar rule and
    factorized, with the condition number monitored.
    """
    n = int(n)
    if n < 1:
        raise ParameterError("kernel order must be at least 1", n=n)
    r_eff, r_drop = effective_support_radius(p, n, h)
    log_norms = _reference_log_norms(p, n, r_eff, r_drop)
    if p.kind == "radial" and h is None:
        return KernelModel(
            n=n, potential=p, h=None, mode="radial",
            log_norms=log_norms, linv=None,
            effective_radius=r_eff, droplet_radius=r_drop,
            rule_descriptor={"kind": "radial", "r_max": r_eff,
                             "n_nodes": NORM_NODES},
        )
    if rule is None:
        n_ang = max(256, 2 * n)
        rule = make_polar_quadrature(r_eff, NORM_NODES, n_ang,
                                     breakpoints=(r_drop,))
    raw = KernelModel(
        n=n, potential=p, h=h, mode="gram",
        log_norms=log_norms, linv=None,
        effective_radius=r_eff, droplet_radius=r_drop,
    )
    gram = np.zeros((n, n), dtype=complex)
    z_nodes = rule.points_complex()
    for start in range(0, z_nodes.size, GRAM_BLOCK):
        sl = slice(start, start + GRAM_BLOCK)
        psi = raw.features(z_nodes[sl])
        gram += psi.T @ (rule.weights[sl, None] * psi.conj())
    gram = 0.5 * (gram + gram.conj().T)
    cond = float(np.linalg.cond(gram))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise ConditioningError(
            "monomial Gram matrix is too ill-conditioned; enlarge the "
            "quadrature rule or reduce n", condition=cond)
    from .numerics import hermitian_factor
    factor = hermitian_factor(gram)
    linv = solve_triangular(factor, np.eye(n, dtype=factor.dtype), lower=True)
    return KernelModel(
        n=n, potential=p, h=h, mode="gram",
        log_norms=log_norms, linv=linv,
        effective_radius=r_eff, droplet_radius=r_drop,
        rule_descriptor=dict(rule.domain),
    )


def eval_weighted_kernel(km, z, w):
    """Weighted kernel value at a single pair of points."""
    return complex(km.kval(np.atleast_1d(complex(z)),
                           np.atleast_1d(complex(w)))[0, 0])


def one_point(km, z):
    """Normalized one-point intensity u_n(z) = (kernel diagonal)/n."""
    return km.kdiag(z) / km.n


def correlation2(km, z, w):
    """Two-point intensity R2(z, w); nonnegative up to a numerical zero floor."""
    k_zz = km.kdiag(z)
    k_ww = km.kdiag(w)
    k_zw = eval_weighted_kernel(km, z, w)
    val = k_zz * k_ww - abs(k_zw) ** 2
    return max(float(val), 0.0)


def default_kernel_rule(km, n_radial=240, n_angular=256, extra_breaks=()):
    """Polar rule covering the kernel's effective support."""
    breaks = tuple(sorted({km.droplet_radius,
                           *(b for b in extra_breaks
                             if 0 < b < km.effective_radius)}))
    return make_polar_quadrature(km.effective_radius, n_radial, n_angular,
                                 breakpoints=breaks)


def kernel_trace(km, rule=None):
    """Quadrature trace of the kernel diagonal (equals n for a projection)."""
    if rule is None:
        rule = default_kernel_rule(km)
    return integrate(rule, lambda x, y: km.kdiag(x + 1j * y))


# ---------------------------------------------------------------------------
# Bulk approximation, Berezin and heat kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ApproxKernel:
    """Leading bulk approximation built from the polarized potential.

    On the diagonal its modulus is exactly ``n ΔQ(w)/(2π)`` for w in the
    droplet; a perturbation h enters through its first-order linearization
    ``h_w(z) = h(w) + (z - w) ∂h(w)``.
    """

    potential: Potential
    h: object | None = None

    def exponent(self, n, z, w):
        z = np.asarray(z, dtype=complex)
        w = np.asarray(w, dtype=complex)
        poly = self.potential.poly
        expo = n * (2.0 * poly.polarized(z, np.conjugate(w))
                    - poly.value(z) - poly.value(w))
        if self.h is not None:
            from .numerics import Dual2
            wX, wY = Dual2.seed(np.real(w), np.imag(w))
            dh = self.h(wX, wY)
            del_h = 0.5 * (dh.dx - 1j * dh.dy)
            h_w = dh.val + (z - w) * del_h
            h_z = np.asarray(self.h(np.real(z), np.imag(z)))
            expo = expo + h_z + dh.val - 2.0 * h_w
        return expo


def eval_approx_kernel(ak, n, z, w):
    """Weighted bulk kernel, assembled in log-magnitude/phase form."""
    poly = ak.potential.poly
    pref = (2.0 / np.pi) * n * poly.del_z().del_zbar().polarized(
        np.asarray(z, dtype=complex), np.conjugate(np.asarray(w, dtype=complex)))
    expo = ak.exponent(n, z, w)
    total = np.log(pref.astype(complex)) + expo
    if np.any(np.real(total) > 700.0):
        raise EvaluationError("bulk kernel exponent exceeds the safe range; "
                              "the pair is far outside the bulk regime")
    out = np.exp(total)
    return complex(out) if out.ndim == 0 else out


def berezin(km, w, z):
    """Probability density rooted at w: |K(z, w)|^2 / K(w, w)."""
    wc = complex(w)
    diag = km.kdiag(wc)
    if diag <= 0.0:
        raise DegenerateRootError("kernel diagonal vanishes at the root point",
                                  w=(wc.real, wc.imag))
    z = np.asarray(z, dtype=complex)
    scalar = z.ndim == 0
    vals = np.abs(km.kval(np.atleast_1d(z).ravel(),
                          np.atleast_1d(wc))[:, 0]) ** 2 / diag
    return float(vals[0]) if scalar else vals.reshape(z.shape)


def heat_kernel(p, n, w, z):
    """Gaussian comparison kernel (1/π) c n e^(-c n |z-w|^2), c = 2∂∂̄Q(w)."""
    wc = complex(w)
    c = 0.5 * float(p.laplacian(wc))
    if c <= 0.0:
        raise DomainError("heat-kernel rate requires ∂∂̄Q(w) > 0", c=c)
    z = np.asarray(z, dtype=complex)
    vals = (c * n / np.pi) * np.exp(-c * n * np.abs(z - wc) ** 2)
    return float(vals) if vals.ndim == 0 else vals


def bulk_scale(n):
    """Resolution scale log^2 n / sqrt(n) separating bulk from boundary."""
    return np.log(n) ** 2 / np.sqrt(n)
