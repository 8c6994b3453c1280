"""Shared numerical substrate with no domain knowledge.

Provides tensor polar quadrature (Gauss-Legendre in radius, uniform
trapezoid in angle), second-order forward-mode dual numbers for exact
derivatives of smooth fields, uniform-grid Fourier analysis on the circle,
Hermitian Cholesky factorization, and a deterministic bracketed root finder.

Conventions used throughout the package:

* scalar fields are callables ``f(x, y)`` accepting floats, numpy arrays,
  or :class:`Dual2` seeds (elementwise in every case);
* integration weights always include the area/length element, so
  ``integrate(rule, f)`` is a plain weighted sum;
* summation is numpy's pairwise reduction, which is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack as _lapack

from .errors import (
    BracketError,
    ConditioningError,
    EvaluationError,
    ParameterError,
)

# Default tolerances.  Identities implemented on top of this module are exact,
# so failures should be attributable to resolution, not hidden slack.
AREA_RTOL = 1e-12
HERMITIAN_RTOL = 1e-12
FACTOR_RTOL = 1e-10
ROOT_RTOL = 1e-12


# ---------------------------------------------------------------------------
# Second-order dual numbers
# ---------------------------------------------------------------------------

class Dual2:
    """Value, gradient, and Hessian of a field of two real variables.

    Components may be real or complex scalars or numpy arrays; all arithmetic
    is elementwise.  The chain rule is applied exactly, so derivatives of
    polynomial/exponential compositions carry no discretization error.
    """

    __slots__ = ("val", "dx", "dy", "dxx", "dxy", "dyy")

    # Keep numpy from broadcasting over Dual2: ndarray ops defer to our
    # reflected operators instead of producing object arrays.
    __array_ufunc__ = None

    def __init__(self, val, dx=0.0, dy=0.0, dxx=0.0, dxy=0.0, dyy=0.0):
        self.val = val
        self.dx = dx
        self.dy = dy
        self.dxx = dxx
        self.dxy = dxy
        self.dyy = dyy

    @staticmethod
    def seed(x, y):
        """Independent-variable pair for evaluating a field at (x, y)."""
        return Dual2(x, dx=1.0), Dual2(y, dy=1.0)

    @property
    def gradient(self):
        return self.dx, self.dy

    @property
    def laplacian(self):
        return self.dxx + self.dyy

    def conjugate(self):
        return Dual2(
            np.conjugate(self.val),
            np.conjugate(self.dx),
            np.conjugate(self.dy),
            np.conjugate(self.dxx),
            np.conjugate(self.dxy),
            np.conjugate(self.dyy),
        )

    def real_part(self):
        return Dual2(
            np.real(self.val), np.real(self.dx), np.real(self.dy),
            np.real(self.dxx), np.real(self.dxy), np.real(self.dyy),
        )

    # -- arithmetic ---------------------------------------------------------

    @staticmethod
    def _lift(other):
        if isinstance(other, Dual2):
            return other
        return Dual2(other)

    def __add__(self, other):
        o = self._lift(other)
        return Dual2(self.val + o.val, self.dx + o.dx, self.dy + o.dy,
                     self.dxx + o.dxx, self.dxy + o.dxy, self.dyy + o.dyy)

    __radd__ = __add__

    def __neg__(self):
        return Dual2(-self.val, -self.dx, -self.dy, -self.dxx, -self.dxy, -self.dyy)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) + (-self)

    def __mul__(self, other):
        o = self._lift(other)
        a, b = self, o
        return Dual2(
            a.val * b.val,
            a.dx * b.val + a.val * b.dx,
            a.dy * b.val + a.val * b.dy,
            a.dxx * b.val + 2.0 * a.dx * b.dx + a.val * b.dxx,
            a.dxy * b.val + a.dx * b.dy + a.dy * b.dx + a.val * b.dxy,
            a.dyy * b.val + 2.0 * a.dy * b.dy + a.val * b.dyy,
        )

    __rmul__ = __mul__

    def compose(self, f0, f1, f2):
        """Univariate chain rule: return g(self) given g, g', g'' at self.val."""
        return Dual2(
            f0,
            f1 * self.dx,
            f1 * self.dy,
            f2 * self.dx * self.dx + f1 * self.dxx,
            f2 * self.dx * self.dy + f1 * self.dxy,
            f2 * self.dy * self.dy + f1 * self.dyy,
        )

    def _reciprocal(self):
        v = self.val
        return self.compose(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))

    def __truediv__(self, other):
        return self * self._lift(other)._reciprocal()

    def __rtruediv__(self, other):
        return self._lift(other) * self._reciprocal()

    def __pow__(self, k):
        if isinstance(k, (int, np.integer)):
            if k == 0:
                one = np.ones_like(np.asarray(self.val))
                return Dual2(one if one.ndim else 1.0)
            if k == 1:
                return Dual2(self.val, self.dx, self.dy, self.dxx, self.dxy, self.dyy)
            v = self.val
            return self.compose(v ** k, k * v ** (k - 1), k * (k - 1) * v ** (k - 2))
        v = self.val
        return self.compose(np.power(v, k), k * np.power(v, k - 1),
                            k * (k - 1) * np.power(v, k - 2))

    def __repr__(self):
        return (f"Dual2(val={self.val!r}, grad=({self.dx!r}, {self.dy!r}), "
                f"hess=({self.dxx!r}, {self.dxy!r}, {self.dyy!r}))")


def dexp(u):
    """exp for Dual2 or plain values."""
    if isinstance(u, Dual2):
        e = np.exp(u.val)
        return u.compose(e, e, e)
    return np.exp(u)


def dlog(u):
    """Natural log for Dual2 or plain values."""
    if isinstance(u, Dual2):
        v = u.val
        return u.compose(np.log(v), 1.0 / v, -1.0 / (v * v))
    return np.log(u)


def dsqrt(u):
    if isinstance(u, Dual2):
        s = np.sqrt(u.val)
        return u.compose(s, 0.5 / s, -0.25 / (s * u.val))
    return np.sqrt(u)


def dual_eval(f, z):
    """Evaluate ``f`` with dual seeds at ``z`` (complex or (x, y) pair).

    Returns a :class:`Dual2` holding the value, gradient, and Hessian; results
    are exact for polynomial/exponential compositions.
    """
    if isinstance(z, tuple):
        x, y = z
    else:
        zc = complex(z)
        x, y = zc.real, zc.imag
    X, Y = Dual2.seed(x, y)
    out = f(X, Y)
    if not isinstance(out, Dual2):
        out = Dual2(out)
    return out


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and positive weights over a polar disk/annulus or a radial interval.

    Weights include the Jacobian (``r dr dθ`` for polar rules, ``dr`` for
    radial ones), so integration is the plain weighted sum of node values.
    """

    kind: str                      # "polar" | "radial"
    xs: np.ndarray                 # x coordinates (polar) or radii (radial)
    ys: np.ndarray | None
    weights: np.ndarray
    domain: dict = field(default_factory=dict)
    radial_nodes: np.ndarray | None = None
    radial_weights: np.ndarray | None = None
    angles: np.ndarray | None = None
    center: complex = 0j

    @property
    def size(self):
        return self.weights.size

    def points_complex(self):
        if self.kind != "polar":
            raise ParameterError("complex nodes are defined for polar rules only")
        return self.xs + 1j * self.ys


def _gauss_segments(a, b, total_nodes, breakpoints):
    """Per-segment Gauss-Legendre nodes/weights on [a, b] split at breakpoints."""
    cuts = sorted({float(c) for c in breakpoints if a < c < b})
    edges = [a, *cuts, b]
    lengths = np.diff(edges)
    if len(edges) == 2:
        counts = [int(total_nodes)]
    else:
        counts = [max(8, int(round(total_nodes * L / (b - a)))) for L in lengths]
    nodes, weights = [], []
    for (lo, hi), m in zip(zip(edges[:-1], edges[1:]), counts):
        t, w = np.polynomial.legendre.leggauss(m)
        nodes.append(0.5 * (hi - lo) * t + 0.5 * (hi + lo))
        weights.append(0.5 * (hi - lo) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def make_polar_quadrature(r_max, n_radial, n_angular, center=0j, breakpoints=()):
    """Tensor rule on the disk of radius ``r_max`` about ``center``.

    Gauss-Legendre in radius (optionally split at ``breakpoints`` so that
    piecewise-smooth integrands keep their convergence rate) and the uniform
    trapezoid rule in angle, which is exact for trigonometric polynomials of
    degree below ``n_angular``.
    """
    if not r_max > 0:
        raise ParameterError("r_max must be positive", r_max=r_max)
    if int(n_radial) < 4 or int(n_angular) < 4:
        raise ParameterError("node counts must be at least 4",
                             n_radial=n_radial, n_angular=n_angular)
    r, wr = _gauss_segments(0.0, float(r_max), int(n_radial), breakpoints)
    thetas = 2.0 * np.pi * np.arange(int(n_angular)) / int(n_angular)
    wtheta = 2.0 * np.pi / int(n_angular)
    R, T = np.meshgrid(r, thetas, indexing="ij")
    xs = (R * np.cos(T)).ravel() + complex(center).real
    ys = (R * np.sin(T)).ravel() + complex(center).imag
    w = (wr[:, None] * r[:, None] * wtheta * np.ones_like(thetas)[None, :]).ravel()
    area = np.pi * r_max * r_max
    if abs(w.sum() - area) > AREA_RTOL * area:
        raise ParameterError("quadrature failed its area self-check",
                             area_error=float(abs(w.sum() - area)))
    return QuadratureRule(
        kind="polar", xs=xs, ys=ys, weights=w,
        domain={"shape": "polar", "r_max": float(r_max),
                "n_radial": int(n_radial), "n_angular": int(n_angular),
                "breakpoints": [float(c) for c in breakpoints],
                "center": [complex(center).real, complex(center).imag]},
        radial_nodes=r, radial_weights=wr, angles=thetas, center=complex(center),
    )


def make_annular_quadrature(r_in, r_out, n_radial, n_angular, center=0j,
                            breakpoints=()):
    """Tensor rule on the annulus r_in < |z - center| < r_out.

    Positive-integrand integrals over the annulus avoid the cancellation of
    computing a small tail as a difference of near-unit disk masses.
    """
    if not 0 <= r_in < r_out:
        raise ParameterError("need 0 <= r_in < r_out", r_in=r_in, r_out=r_out)
    if int(n_radial) < 4 or int(n_angular) < 4:
        raise ParameterError("node counts must be at least 4")
    r, wr = _gauss_segments(float(r_in), float(r_out), int(n_radial),
                            breakpoints)
    thetas = 2.0 * np.pi * np.arange(int(n_angular)) / int(n_angular)
    wtheta = 2.0 * np.pi / int(n_angular)
    R, T = np.meshgrid(r, thetas, indexing="ij")
    xs = (R * np.cos(T)).ravel() + complex(center).real
    ys = (R * np.sin(T)).ravel() + complex(center).imag
    w = (wr[:, None] * r[:, None] * wtheta * np.ones_like(thetas)[None, :]).ravel()
    return QuadratureRule(
        kind="polar", xs=xs, ys=ys, weights=w,
        domain={"shape": "annulus", "r_in": float(r_in), "r_out": float(r_out),
                "n_radial": int(n_radial), "n_angular": int(n_angular),
                "center": [complex(center).real, complex(center).imag]},
        radial_nodes=r, radial_weights=wr, angles=thetas, center=complex(center),
    )


def make_radial_quadrature(a, b, n_nodes, breakpoints=()):
    """Gauss-Legendre rule on the interval [a, b] (weights are plain ``dr``)."""
    if not b > a:
        raise ParameterError("empty radial interval", a=a, b=b)
    if int(n_nodes) < 4:
        raise ParameterError("node counts must be at least 4", n_nodes=n_nodes)
    r, wr = _gauss_segments(float(a), float(b), int(n_nodes), breakpoints)
    length = b - a
    if abs(wr.sum() - length) > AREA_RTOL * length:
        raise ParameterError("quadrature failed its length self-check")
    return QuadratureRule(
        kind="radial", xs=r, ys=None, weights=wr,
        domain={"shape": "radial", "a": float(a), "b": float(b),
                "n_nodes": int(n_nodes), "breakpoints": [float(c) for c in breakpoints]},
        radial_nodes=r, radial_weights=wr,
    )


def integrate(rule, fld):
    """Weighted sum of node evaluations; deterministic (pairwise reduction).

    ``fld`` receives ``(xs, ys)`` for polar rules and ``(r,)`` for radial
    ones, and must return finite values at every node.
    """
    if rule.kind == "polar":
        values = np.asarray(fld(rule.xs, rule.ys))
    else:
        values = np.asarray(fld(rule.xs))
    values = np.broadcast_to(values, rule.weights.shape)
    finite = np.isfinite(values)
    if not finite.all():
        i = int(np.argmin(finite))
        if rule.kind == "polar":
            where = f"({rule.xs[i]!r}, {rule.ys[i]!r})"
        else:
            where = f"r={rule.xs[i]!r}"
        raise EvaluationError(f"non-finite field value at node {i}, point {where}",
                              node=i)
    total = np.sum(rule.weights * values)
    return complex(total) if np.iscomplexobj(values) else float(total)


# ---------------------------------------------------------------------------
# Fourier analysis on the circle
# ---------------------------------------------------------------------------

def circle_fft(samples):
    """Fourier coefficients of samples on the uniform grid of [0, 2π).

    For input of power-of-two length N, returns ``(k, c)`` with
    ``k = -N/2 .. N/2-1`` such that the trigonometric polynomial
    ``sum c_k exp(i k θ)`` interpolates the samples.
    """
    s = np.asarray(samples)
    n = s.shape[-1]
    if n < 8 or (n & (n - 1)) != 0:
        raise ParameterError("sample count must be a power of two >= 8", length=n)
    c = np.fft.fftshift(np.fft.fft(s) / n)
    k = np.fft.fftshift(np.fft.fftfreq(n, d=1.0 / n)).astype(int)
    return k, c


def circle_ifft(coeffs):
    """Inverse of :func:`circle_fft`: samples on the uniform grid."""
    c = np.asarray(coeffs)
    n = c.shape[-1]
    if n < 8 or (n & (n - 1)) != 0:
        raise ParameterError("coefficient count must be a power of two >= 8", length=n)
    return np.fft.ifft(np.fft.ifftshift(c) * n)


# ---------------------------------------------------------------------------
# Dense linear algebra and root finding
# ---------------------------------------------------------------------------

def hermitian_factor(gram):
    """Lower-triangular F with F F* = G for Hermitian positive-definite G."""
    G = np.asarray(gram)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ParameterError("matrix must be square", shape=G.shape)
    scale = float(np.abs(G).max()) or 1.0
    if float(np.abs(G - G.conj().T).max()) > HERMITIAN_RTOL * scale:
        raise ParameterError("matrix is not Hermitian within tolerance")
    potrf = _lapack.zpotrf if np.iscomplexobj(G) else _lapack.dpotrf
    c, info = potrf(G, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise ConditioningError(
            f"factorization failed: non-positive pivot at index {info - 1}",
            pivot=info - 1)
    if info < 0:
        raise ParameterError("invalid matrix passed to factorization", lapack_info=info)
    return c


def find_root(g, a, b):
    """Root of ``g`` in [a, b] by a deterministic bisection/secant hybrid.

    Requires a sign change on the bracket and returns ``x`` with
    ``|g(x)| <= 1e-12 * scale`` where ``scale`` is the initial bracket
    magnitude.
    """
    a, b = float(a), float(b)
    fa, fb = float(g(a)), float(g(b))
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if np.sign(fa) == np.sign(fb):
        raise BracketError("no sign change on bracket", a=a, b=b, ga=fa, gb=fb)
    scale = max(abs(fa), abs(fb))
    target = ROOT_RTOL * scale
    x_prev, f_prev = a, fa
    x_cur, f_cur = b, fb
    for _ in range(200):
        # Secant proposal, fall back to bisection when it leaves the bracket.
        denom = f_cur - f_prev
        if denom != 0.0:
            x_new = x_cur - f_cur * (x_cur - x_prev) / denom
        else:
            x_new = 0.5 * (a + b)
        if not (a < x_new < b):
            x_new = 0.5 * (a + b)
        f_new = float(g(x_new))
        if abs(f_new) <= target or (b - a) <= 4.0 * np.finfo(float).eps * max(1.0, abs(x_new)):
            return x_new
        if np.sign(f_new) == np.sign(fa):
            a, fa = x_new, f_new
        else:
            b, fb = x_new, f_new
        x_prev, f_prev = x_cur, f_cur
        x_cur, f_cur = x_new, f_new
    return x_cur
