"""Test functions and potential-theoretic field operations on the droplet.

Test functions are expression trees over (x, y) built from constants,
coordinates, +, *, -, integer powers, exp, and a compactly supporting cutoff
``chi(a, b, r)``.  The cutoff equals 1 for r <= a and 0 for r >= b, with a
monotone quintic-smoothstep joint in the variable r^2, so it is a piecewise
polynomial that is C^2 everywhere (including the origin).

The droplet being a disk, harmonic extension of boundary data is done by
Fourier series on the circle: for ``|z| > R`` the extension is
``sum c_k (R/|z|)^|k| e^(i k θ)``, bounded at infinity.  Arclength on the
boundary is ``R dθ`` and boundary integrals use the trapezoid rule on the
FFT grid, which is spectrally accurate for smooth data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    BoundaryEvaluationError,
    ParameterError,
    ResolutionError,
    UnsupportedPotentialError,
)
from .numerics import (
    Dual2,
    circle_fft,
    dexp,
    dsqrt,
    integrate,
    make_polar_quadrature,
    make_radial_quadrature,
)
from .potential import log_laplacian_fields

DEFAULT_MODES = 256
DECAY_RTOL = 1e-10


# ---------------------------------------------------------------------------
# Expression grammar
# ---------------------------------------------------------------------------

def _smooth_step_down(s, lo2, hi2):
    """1 -> 0 transition in the variable s = r^2, C^2 quintic joints.

    Returns (value, d/ds, d2/ds2) as arrays matching s.
    """
    den = hi2 - lo2
    u = (np.asarray(s) - lo2) / den
    uc = np.clip(u, 0.0, 1.0)
    inside = (u > 0.0) & (u < 1.0)
    val = 1.0 - (10.0 * uc**3 - 15.0 * uc**4 + 6.0 * uc**5)
    d1 = np.where(inside, -30.0 * uc**2 * (1.0 - uc) ** 2 / den, 0.0)
    d2 = np.where(inside, -60.0 * uc * (1.0 - uc) * (1.0 - 2.0 * uc) / den**2, 0.0)
    return val, d1, d2


def _chi_of_s(s, lo2, hi2):
    """Cutoff as a function of s = r^2, for Dual2 or plain values."""
    if isinstance(s, Dual2):
        f0, f1, f2 = _smooth_step_down(s.val, lo2, hi2)
        return s.compose(f0, f1, f2)
    return _smooth_step_down(s, lo2, hi2)[0]


def _is_r_atom(node):
    return node == "r" or (isinstance(node, (list, tuple)) and list(node) == ["r"])


def _compile(node):
    """Compile an expression node to a closure over (x, y)."""
    if isinstance(node, str):
        if node == "x":
            return lambda x, y: x
        if node == "y":
            return lambda x, y: y
        if node == "r":
            return lambda x, y: dsqrt(x * x + y * y)
        raise ParameterError(f"unknown symbol {node!r} in expression",
                             reason="expr_grammar")
    if isinstance(node, (int, float)):
        c = float(node)
        return lambda x, y: c
    if not isinstance(node, (list, tuple)) or not node:
        raise ParameterError(f"malformed expression node {node!r}",
                             reason="expr_grammar")
    op, *args = node
    if op == "r" and not args:
        return _compile("r")
    if op == "+":
        if not args:
            raise ParameterError("'+' needs at least one operand",
                                 reason="expr_grammar")
        parts = [_compile(a) for a in args]
        def _sum(x, y, parts=parts):
            acc = parts[0](x, y)
            for p in parts[1:]:
                acc = acc + p(x, y)
            return acc
        return _sum
    if op == "*":
        if not args:
            raise ParameterError("'*' needs at least one operand",
                                 reason="expr_grammar")
        parts = [_compile(a) for a in args]
        def _prod(x, y, parts=parts):
            acc = parts[0](x, y)
            for p in parts[1:]:
                acc = acc * p(x, y)
            return acc
        return _prod
    if op == "-":
        if len(args) == 1:
            f = _compile(args[0])
            return lambda x, y: -f(x, y)
        if len(args) == 2:
            f, g = _compile(args[0]), _compile(args[1])
            return lambda x, y: f(x, y) - g(x, y)
        raise ParameterError("'-' takes one or two operands", reason="expr_grammar")
    if op == "pow":
        if len(args) != 2 or not isinstance(args[1], (int, float)):
            raise ParameterError("'pow' takes an expression and a numeric exponent",
                                 reason="expr_grammar")
        f = _compile(args[0])
        k = int(args[1]) if float(args[1]).is_integer() else float(args[1])
        return lambda x, y: f(x, y) ** k
    if op == "exp":
        if len(args) != 1:
            raise ParameterError("'exp' takes one operand", reason="expr_grammar")
        f = _compile(args[0])
        return lambda x, y: dexp(f(x, y))
    if op == "chi":
        if len(args) != 3 or not isinstance(args[0], (int, float)) \
                or not isinstance(args[1], (int, float)):
            raise ParameterError("'chi' takes numeric radii a, b and an argument",
                                 reason="expr_grammar")
        a, b = float(args[0]), float(args[1])
        if not 0.0 < a < b:
            raise ParameterError("cutoff radii must satisfy 0 < a < b",
                                 reason="expr_grammar", a=a, b=b)
        lo2, hi2 = a * a, b * b
        if _is_r_atom(args[2]):
            # Evaluate through s = x^2 + y^2 so the cutoff is smooth at the
            # origin (r itself has a derivative singularity there).
            return lambda x, y: _chi_of_s(x * x + y * y, lo2, hi2)
        f = _compile(args[2])
        def _chi(x, y, f=f):
            t = f(x, y)
            return _chi_of_s(t * t, lo2, hi2)
        return _chi
    raise ParameterError(f"unknown operator {op!r} in expression",
                         reason="expr_grammar")


def _chi_radii(node, out):
    """Collect cutoff joint radii from an expression tree."""
    if isinstance(node, (list, tuple)) and node:
        if node[0] == "chi" and len(node) == 4:
            out.add(float(node[1]))
            out.add(float(node[2]))
        for child in node[1:]:
            _chi_radii(child, out)
    return out


class TestFunction:
    """Smooth compactly supported scalar field with exact derivatives.

    Wraps a compiled expression tree; calls accept floats, numpy arrays, or
    :class:`Dual2` seeds.  The declared support radius is sample-checked at
    construction.
    """

    def __init__(self, expr, support_radius, name="f"):
        self.expr = expr
        self.support_radius = float(support_radius)
        self.name = str(name)
        if not self.support_radius > 0:
            raise ParameterError("support radius must be positive",
                                 radius=support_radius)
        self._fn = _compile(expr)
        self._check_support()

    def _check_support(self):
        thetas = np.linspace(0.0, 2.0 * np.pi, 16, endpoint=False)
        inner = np.abs(self(0.5 * self.support_radius * np.cos(thetas),
                            0.5 * self.support_radius * np.sin(thetas)))
        scale = 1.0 + float(np.max(inner))
        for factor in (1.0 + 1e-9, 1.25, 2.0, 5.0):
            rr = factor * self.support_radius
            vals = self(rr * np.cos(thetas), rr * np.sin(thetas))
            if np.max(np.abs(vals)) > 1e-12 * scale:
                raise ParameterError(
                    "field does not vanish beyond its declared support radius",
                    reason="support", radius=self.support_radius, at=float(rr))

    def __call__(self, x, y):
        return self._fn(x, y)

    def value_at(self, z):
        zc = complex(z)
        return float(self(zc.real, zc.imag))

    def dual_at(self, z):
        zc = complex(z)
        X, Y = Dual2.seed(zc.real, zc.imag)
        out = self(X, Y)
        return out if isinstance(out, Dual2) else Dual2(out)

    def chi_joint_radii(self):
        return sorted(_chi_radii(self.expr, set()))

    def to_json(self):
        return {"name": self.name, "expr": self.expr,
                "support_radius": self.support_radius}

    @staticmethod
    def from_json(obj):
        if not isinstance(obj, dict) or not {"expr", "support_radius"} <= set(obj):
            raise ParameterError("test function JSON needs 'expr' and "
                                 "'support_radius'", reason="bad_schema")
        return TestFunction(obj["expr"], obj["support_radius"],
                            name=obj.get("name", "f"))

    @property
    def cache_key(self):
        return json.dumps({"e": self.expr, "s": self.support_radius},
                          separators=(",", ":"))


def chi_expr(a, b):
    return ["chi", float(a), float(b), ["r"]]


def cutoff_field(expr, a, b, name="f"):
    """Test function ``expr * chi_[a,b](r)`` supported in the disk of radius b."""
    return TestFunction(["*", expr, chi_expr(a, b)], support_radius=b, name=name)


def _z_power_exprs(m):
    """(Re z^m, Im z^m) as expression trees."""
    re, im = 1.0, 0.0
    for _ in range(m):
        re, im = ["-", ["*", re, "x"], ["*", im, "y"]], \
                 ["+", ["*", re, "y"], ["*", im, "x"]]
    return re, im


@dataclass(frozen=True)
class ComplexField:
    """Complex vector field as a pair of real test functions (im may be None)."""

    re: TestFunction
    im: TestFunction | None = None
    name: str = "v"

    @property
    def support_radius(self):
        r = self.re.support_radius
        return max(r, self.im.support_radius) if self.im is not None else r

    def chi_joint_radii(self):
        radii = set(self.re.chi_joint_radii())
        if self.im is not None:
            radii |= set(self.im.chi_joint_radii())
        return sorted(radii)

    def value(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.asarray(self.re(z.real, z.imag), dtype=complex)
        if self.im is not None:
            out = out + 1j * np.asarray(self.im(z.real, z.imag))
        return out

    def wirtinger(self, z):
        """(∂v, ∂̄v) at z (vectorized over complex arrays)."""
        z = np.asarray(z, dtype=complex)
        X, Y = Dual2.seed(z.real.astype(float), z.imag.astype(float))
        dre = self.re(X, Y)
        rx, ry = dre.dx, dre.dy
        if self.im is not None:
            dim = self.im(X, Y)
            ix, iy = dim.dx, dim.dy
        else:
            ix = iy = np.zeros_like(rx)
        del_v = 0.5 * ((rx + iy) + 1j * (ix - ry))
        delbar_v = 0.5 * ((rx - iy) + 1j * (ix + ry))
        return del_v, delbar_v


def equivariant_cutoff_field(radial_coeffs, a, b, name="v"):
    """Field ``z (sum_k c_k |z|^(2k)) chi_[a,b](r)``.

    For rotation-invariant ensembles these are the fields whose Ward terms
    survive the angular average (plain powers z^m with m != 1 balance to
    zero identically).
    """
    s = ["+", ["*", "x", "x"], ["*", "y", "y"]]
    poly = ["+", *[["*", float(c), ["pow", s, k]] if k else float(c)
                   for k, c in enumerate(radial_coeffs)]]
    chi = chi_expr(a, b)
    re_tf = TestFunction(["*", "x", poly, chi], b, name + "_re")
    im_tf = TestFunction(["*", "y", poly, chi], b, name + "_im")
    return ComplexField(re=re_tf, im=im_tf, name=name)


def analytic_cutoff_field(coeffs, a, b, name="v"):
    """Field ``(sum_m c_m z^m) * chi_[a,b](r)`` with real coefficients c_m."""
    re_terms, im_terms = [], []
    for m, c in enumerate(coeffs):
        if c == 0:
            continue
        re_m, im_m = _z_power_exprs(m)
        re_terms.append(["*", float(c), re_m])
        im_terms.append(["*", float(c), im_m])
    chi = chi_expr(a, b)
    re_expr = ["*", ["+", *re_terms], chi] if re_terms else 0.0
    im_expr = ["*", ["+", *im_terms], chi] if im_terms else 0.0
    re_tf = TestFunction(re_expr if re_terms else ["*", 0.0, "x"], b, name + "_re")
    im_tf = TestFunction(im_expr if im_terms else ["*", 0.0, "x"], b, name + "_im")
    return ComplexField(re=re_tf, im=im_tf, name=name)


# ---------------------------------------------------------------------------
# Boundary Fourier data and harmonic extension
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryFourier:
    """Fourier coefficients of a field restricted to the droplet boundary."""

    radius: float
    ks: np.ndarray
    coeffs: np.ndarray

    @property
    def modes(self):
        return int(self.ks[-1]) + 1

    def coefficient(self, k):
        idx = int(k) - int(self.ks[0])
        if idx < 0 or idx >= self.ks.size:
            return 0.0
        return complex(self.coeffs[idx])

    def exterior_value(self, z):
        """sum c_k (R/|z|)^|k| e^(ikθ); the bounded harmonic extension outside."""
        z = np.asarray(z, dtype=complex)
        r = np.abs(z)
        theta = np.angle(z)
        damp = (self.radius / r[..., None]) ** np.abs(self.ks)
        phases = np.exp(1j * np.multiply.outer(theta, self.ks.astype(float)))
        return np.real(np.sum(self.coeffs * damp * phases, axis=-1))

    def exterior_radial_derivative(self, theta):
        """d/dr of the exterior extension at r = R+ for the given angles."""
        theta = np.asarray(theta, dtype=float)
        phases = np.exp(1j * np.multiply.outer(theta, self.ks.astype(float)))
        return np.real(np.sum(-np.abs(self.ks) / self.radius * self.coeffs * phases,
                              axis=-1))

    def boundary_value(self, theta):
        theta = np.asarray(theta, dtype=float)
        phases = np.exp(1j * np.multiply.outer(theta, self.ks.astype(float)))
        return np.real(np.sum(self.coeffs * phases, axis=-1))


_BF_CACHE = {}


def boundary_fourier(g, droplet, modes=DEFAULT_MODES):
    """Boundary restriction of ``g`` as a Fourier series with |k| <= modes.

    Uses the circle FFT of ``2 * modes`` samples; fails with a resolution
    error if the top coefficients have not decayed, in which case raise
    ``modes``.
    """
    m = int(modes)
    if m < 16 or (m & (m - 1)) != 0:
        raise ParameterError("mode count must be a power of two >= 16", modes=modes)
    key = (getattr(g, "cache_key", None), float(droplet.radius), m)
    if key[0] is not None and key in _BF_CACHE:
        return _BF_CACHE[key]
    thetas = 2.0 * np.pi * np.arange(2 * m) / (2 * m)
    samples = np.asarray(g(droplet.radius * np.cos(thetas),
                           droplet.radius * np.sin(thetas)), dtype=float)
    ks, coeffs = circle_fft(samples.astype(complex))
    peak = float(np.max(np.abs(coeffs)))
    if peak > 0:
        top = float(np.max(np.abs(coeffs[np.abs(ks) >= m - 1])))
        if top > DECAY_RTOL * peak:
            raise ResolutionError(
                "boundary spectrum has not decayed; raise the mode count",
                modes=m, top_coefficient=top, peak=peak)
    bf = BoundaryFourier(radius=float(droplet.radius), ks=ks, coeffs=coeffs)
    if key[0] is not None:
        _BF_CACHE[key] = bf
    return bf


def harmonic_extension(g, droplet, z, modes=DEFAULT_MODES):
    """g inside the droplet; bounded harmonic extension of g|∂S outside."""
    bf = boundary_fourier(g, droplet, modes)
    z = np.asarray(z, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    out = np.empty(z.shape, dtype=float)
    inside = np.abs(z) <= droplet.radius
    if inside.any():
        zi = z[inside]
        out[inside] = np.asarray(g(zi.real, zi.imag), dtype=float)
    if (~inside).any():
        out[~inside] = bf.exterior_value(z[~inside])
    return float(out[0]) if scalar else out


def neumann_jump(g, droplet, theta, modes=DEFAULT_MODES):
    """Sum of interior and exterior normal derivatives on the boundary.

    Interior term: -d g/dr at R- via dual numbers.  Exterior term: the
    radial derivative of the Fourier extension at R+, which is
    ``-sum (|k|/R) c_k e^(ikθ)``; with the exterior domain's normal pointing
    back toward the droplet this contributes with the same sign.
    """
    bf = boundary_fourier(g, droplet, modes)
    theta = np.asarray(theta, dtype=float)
    R = droplet.radius
    X, Y = Dual2.seed(R * np.cos(theta), R * np.sin(theta))
    d = g(X, Y)
    if not isinstance(d, Dual2):
        d = Dual2(np.asarray(d))
    radial_in = np.cos(theta) * d.dx + np.sin(theta) * d.dy
    return -radial_in + bf.exterior_radial_derivative(theta)


def _droplet_rule(droplet, extra_breaks=(), n_radial=240, n_angular=256):
    breaks = tuple(b for b in extra_breaks if 0 < b < droplet.radius)
    return make_polar_quadrature(droplet.radius, n_radial, n_angular,
                                 breakpoints=breaks)


def dirichlet_form(f, g, droplet, modes=DEFAULT_MODES, rule=None):
    """(1/2π) ∫ ∇f^S · ∇g^S over the plane.

    Interior part by quadrature of dual-number gradients; exterior part in
    closed Fourier form, ``sum_k |k| c_k(f) conj(c_k(g))``.
    """
    if rule is None:
        joints = sorted(set(f.chi_joint_radii()) | set(g.chi_joint_radii()))
        rule = _droplet_rule(droplet, extra_breaks=joints)

    def grad_dot(x, y):
        X, Y = Dual2.seed(x, y)
        df, dg = f(X, Y), g(X, Y)
        if not isinstance(df, Dual2):
            df = Dual2(np.asarray(df))
        if not isinstance(dg, Dual2):
            dg = Dual2(np.asarray(dg))
        return df.dx * dg.dx + df.dy * dg.dy

    interior = integrate(rule, grad_dot)
    bf_f = boundary_fourier(f, droplet, modes)
    bf_g = boundary_fourier(g, droplet, modes)
    ks = bf_f.ks
    exterior = float(np.real(np.sum(np.abs(ks) * bf_f.coeffs
                                    * np.conjugate(bf_g.coeffs))))
    return interior / (2.0 * np.pi) + exterior


def exterior_dirichlet_energy_quadrature(g, droplet, r_trunc, modes=DEFAULT_MODES,
                                         n_radial=200, n_angular=256):
    """∫_{R<|z|<r_trunc} |∇g^S|^2 by quadrature plus the closed analytic tail.

    Cross-check path for the Fourier form used by :func:`dirichlet_form`.
    """
    bf = boundary_fourier(g, droplet, modes)
    R = droplet.radius
    ks = bf.ks.astype(float)

    def grad_sq(r):
        damp = (R / r[:, None]) ** np.abs(ks)
        thetas = 2.0 * np.pi * np.arange(n_angular) / n_angular
        phases = np.exp(1j * np.outer(thetas, ks))
        u_r = np.real((bf.coeffs * (-np.abs(ks) / r[:, None]) * damp) @ phases.T)
        u_t = np.real((bf.coeffs * (1j * ks) * damp) @ phases.T) / r[:, None]
        return (2.0 * np.pi / n_angular) * np.sum(u_r**2 + u_t**2, axis=1) * r

    rule = make_radial_quadrature(R, r_trunc, n_radial)
    annulus = integrate(rule, grad_sq)
    tail = 2.0 * np.pi * float(np.sum(np.abs(ks) * np.abs(bf.coeffs) ** 2
                                      * (R / r_trunc) ** (2.0 * np.abs(ks))))
    return annulus + tail


# ---------------------------------------------------------------------------
# Limit functionals of the fluctuation theory
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FluctuationLimit:
    """Limit of the expected fluctuation with its three addends."""

    value: float
    smooth_term: float       # ∫_S Δf
    density_term: float      # ∫_S f Δ(log ΔQ)
    boundary_term: float     # ∮ f N(L^S) ds

    def parts(self):
        return self.smooth_term, self.density_term, self.boundary_term


def fluctuation_mean_limit(f, p, d, modes=DEFAULT_MODES, rule=None):
    """Large-n limit of the expected fluctuation of the linear statistic of f.

    Equals ``(1/8π) [∫_S Δf + ∫_S f ΔL + ∮ f N(L^S) ds]`` with L = log ΔQ;
    for potentials with constant ΔQ the last two terms vanish identically.
    """
    L, dL = log_laplacian_fields(p)
    if rule is None:
        rule = _droplet_rule(d, extra_breaks=f.chi_joint_radii())

    def lap_f(x, y):
        X, Y = Dual2.seed(x, y)
        out = f(X, Y)
        return out.laplacian if isinstance(out, Dual2) else np.zeros_like(x)

    t_smooth = integrate(rule, lap_f)
    t_density = integrate(rule, lambda x, y: np.asarray(f(x, y)) * dL(x, y))
    m = int(modes)
    thetas = 2.0 * np.pi * np.arange(2 * m) / (2 * m)
    jump = neumann_jump(L, d, thetas, modes=m)
    f_bdry = np.asarray(f(d.radius * np.cos(thetas), d.radius * np.sin(thetas)))
    t_boundary = float(np.sum(f_bdry * jump) * d.radius * (2.0 * np.pi / (2 * m)))
    total = (t_smooth + t_density + t_boundary) / (8.0 * np.pi)
    return FluctuationLimit(value=total, smooth_term=t_smooth,
                            density_term=t_density, boundary_term=t_boundary)


def variance_limit(h, d, modes=DEFAULT_MODES, rule=None):
    """Limit variance of the centered linear statistic of a real field h."""
    v = dirichlet_form(h, h, d, modes=modes, rule=rule)
    return max(v, 0.0)


def perturbation_shift(f, h, d, modes=DEFAULT_MODES, rule=None):
    """Limit of the mean shift induced by perturbing the potential by -h/n."""
    return dirichlet_form(f, h, d, modes=modes, rule=rule)


# ---------------------------------------------------------------------------
# Cauchy transforms
# ---------------------------------------------------------------------------

def cauchy_transform_sigma(d, obs, z):
    """Cauchy transform of the equilibrium measure at z (closed form 2∂Q̌).

    Raises on the boundary where the closed form would be evaluated on the
    contact set edge.
    """
    z = np.asarray(z, dtype=complex)
    if np.any(np.abs(np.abs(z) - d.radius) < 1e-9 * max(1.0, d.radius)):
        raise BoundaryEvaluationError("Cauchy transform requested on the "
                                      "droplet boundary")
    out = obs.two_del(z)
    return complex(out) if out.ndim == 0 else out


def cauchy_transform_sigma_quadrature(d, z, n_nodes=400):
    """Verification path: radial quadrature of ∫ dσ(ζ)/(z-ζ).

    The angular integral over each shell is exact (mean value of the Cauchy
    kernel over a circle), leaving a one-dimensional radial quadrature of the
    mass inside |z|.
    """
    zc = complex(z)
    s = abs(zc)
    if s == 0.0:
        return 0.0 + 0.0j
    upper = min(s, d.radius)
    rule = make_radial_quadrature(0.0, upper, n_nodes)
    mass = integrate(rule, lambda t: d.potential.laplacian(t + 0j) * t)
    return complex(mass / zc)


# ---------------------------------------------------------------------------
# Cauchy field of the finite-n fluctuation measure
# ---------------------------------------------------------------------------

class _RadialMassProfile:
    """Cumulative mass of a radial one-point intensity, cached per radius."""

    def __init__(self, km, d):
        self.km = km
        self.breaks = (d.radius,)
        self.r_eff = km.effective_radius
        self._cache = {}

    def __call__(self, s):
        s = float(s)
        if s <= 0.0:
            return 0.0
        key = round(s, 15)
        got = self._cache.get(key)
        if got is not None:
            return got
        upper = min(s, self.r_eff)
        rule = make_radial_quadrature(0.0, upper, 160,
                                      breakpoints=tuple(b for b in self.breaks
                                                        if 0 < b < upper))
        val = integrate(rule, lambda t: self.km.kdiag(t + 0j) * t)
        val *= 2.0 * np.pi / self.km.n
        self._cache[key] = val
        return val


def _radial_mass(km, d):
    prof = getattr(km, "_radial_mass_profile", None)
    if prof is None:
        prof = _RadialMassProfile(km, d)
        km._radial_mass_profile = prof
    return prof


def dn_field(km, d, z):
    """Cauchy transform of n (u_n - u) at z, for radial unperturbed kernels.

    By radial symmetry the angular integral is exact, leaving
    ``n (m_n(|z|) - m_σ(|z|)) / z`` with m the cumulative masses inside |z|.
    """
    if km.potential.kind != "radial" or km.h is not None:
        raise UnsupportedPotentialError(
            "the fluctuation Cauchy field uses the radial reduction and "
            "requires an unperturbed radial kernel")
    prof = _radial_mass(km, d)
    p = km.potential
    z = np.asarray(z, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    out = np.zeros(z.shape, dtype=complex)
    for i, zi in enumerate(z.ravel()):
        s = abs(zi)
        if s == 0.0:
            continue
        m_n = prof(s)
        m_sigma = float(p.r_qprime(min(s, d.radius)))
        out.ravel()[i] = km.n * (m_n - m_sigma) / zi
    return complex(out[0]) if scalar else out


def dn_field_report(km, d, z):
    """(value, warning) variant; warns when z sits near the droplet boundary."""
    value = dn_field(km, d, z)
    warning = None
    spacing = km.effective_radius / 160.0
    if abs(abs(complex(z)) - d.radius) < spacing:
        warning = ("evaluation point within one radial quadrature spacing of "
                   "the droplet boundary; accuracy may be reduced")
    return value, warning


# ---------------------------------------------------------------------------
# Green/Neumann identity residual (verification utility)
# ---------------------------------------------------------------------------

def green_identity_residual(g, phi, d, modes=DEFAULT_MODES,
                            n_radial=240, n_angular=256):
    """Residual of ∫_S φ Δg + ∮ φ N(g^S) ds = ∫ g^S Δφ.

    ``phi`` must be compactly supported; ``g`` smooth near the droplet.
    Returns (lhs, rhs, |lhs - rhs|).
    """
    rule_in = _droplet_rule(d, extra_breaks=phi.chi_joint_radii(),
                            n_radial=n_radial, n_angular=n_angular)

    def phi_lap_g(x, y):
        X, Y = Dual2.seed(x, y)
        dg = g(X, Y)
        lap = dg.laplacian if isinstance(dg, Dual2) else np.zeros_like(x)
        return np.asarray(phi(x, y)) * lap

    interior = integrate(rule_in, phi_lap_g)
    m = int(modes)
    thetas = 2.0 * np.pi * np.arange(2 * m) / (2 * m)
    jump = neumann_jump(g, d, thetas, modes=m)
    phi_b = np.asarray(phi(d.radius * np.cos(thetas), d.radius * np.sin(thetas)))
    boundary = float(np.sum(phi_b * jump) * d.radius * np.pi / m)
    lhs = interior + boundary

    breaks = sorted({d.radius, *phi.chi_joint_radii()})
    rule_plane = make_polar_quadrature(phi.support_radius, n_radial, n_angular,
                                       breakpoints=tuple(b for b in breaks
                                                         if 0 < b < phi.support_radius))

    def gs_lap_phi(x, y):
        X, Y = Dual2.seed(x, y)
        dphi = phi(X, Y)
        lap = dphi.laplacian if isinstance(dphi, Dual2) else np.zeros_like(x)
        gs = harmonic_extension(g, d, x + 1j * y, modes=m)
        return gs * lap

    rhs = integrate(rule_plane, gs_lap_phi)
    return lhs, rhs, abs(lhs - rhs)
