"""External fields, their derivatives, and the radial equilibrium problem.

A potential is a real-valued bivariate polynomial in ``z`` and ``conj(z)``
with Hermitian coefficients.  The radial kind ``Q(z) = sum_j a_j |z|^(2j)``
is the fully supported geometry: its droplet is the disk whose radius solves
``R Q'(R) = 1`` (the unit-mass condition for the equilibrium density
``ΔQ/(2π)`` on the droplet), and the obstacle function has the closed
exterior branch ``Q(R) + log(r/R)``.

Wirtinger convention: ``∂ = (∂/∂x - i ∂/∂y)/2``, and the Laplacian is the
standard one, ``Δ = 4 ∂ ∂̄``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    DomainError,
    ParameterError,
    RegularityError,
    UnsupportedGeometryError,
)
from .numerics import Dual2, dlog, find_root, integrate, make_polar_quadrature

RADIAL = "radial"
HERMITIAN = "hermitian"

MASS_TOL = 1e-8
RADIUS_TOL = 1e-10
C1_TOL = 1e-10


class Poly2:
    """Bivariate polynomial ``sum c_{jk} z^j conj(z)^k`` with a sparse table."""

    def __init__(self, table):
        self.table = {(int(j), int(k)): complex(c)
                      for (j, k), c in table.items() if c != 0}

    def value(self, z):
        z = np.asarray(z, dtype=complex)
        zb = np.conjugate(z)
        out = np.zeros_like(z)
        for (j, k), c in self.table.items():
            out = out + c * z ** j * zb ** k
        return out

    def polarized(self, z, wbar):
        """Analytic continuation Q(z, w̄): analytic in z, anti-analytic in w."""
        z = np.asarray(z, dtype=complex)
        wbar = np.asarray(wbar, dtype=complex)
        out = np.zeros(np.broadcast(z, wbar).shape, dtype=complex)
        for (j, k), c in self.table.items():
            out = out + c * z ** j * wbar ** k
        return out

    def dual(self, x, y):
        """Evaluate through dual numbers; works for Dual2 or plain inputs."""
        if not isinstance(x, Dual2):
            x = Dual2(x)
        if not isinstance(y, Dual2):
            y = Dual2(y)
        z = x + y * 1j
        zb = z.conjugate()
        out = Dual2(np.zeros_like(np.asarray(z.val)))
        for (j, k), c in self.table.items():
            out = out + (z ** j) * (zb ** k) * c
        return out

    def del_z(self):
        return Poly2({(j - 1, k): j * c for (j, k), c in self.table.items() if j >= 1})

    def del_zbar(self):
        return Poly2({(j, k - 1): k * c for (j, k), c in self.table.items() if k >= 1})

    def laplacian(self):
        """4 ∂∂̄ of the polynomial, again as a polynomial table."""
        return Poly2({(j - 1, k - 1): 4.0 * j * k * c
                      for (j, k), c in self.table.items() if j >= 1 and k >= 1})

    def is_hermitian(self, tol=1e-13):
        for (j, k), c in self.table.items():
            mirror = self.table.get((k, j), 0.0)
            if abs(np.conjugate(mirror) - c) > tol * max(1.0, abs(c)):
                return False
        return True


@dataclass(frozen=True)
class Potential:
    """External field with exact derivatives and polarization.

    ``kind`` is ``"radial"`` (coefficients ``a_j`` of ``|z|^(2j)``, stored on
    the diagonal of the table) or ``"hermitian"`` (full Hermitian table
    ``c_{jk}``).  Construction verifies realness, the logarithmic growth
    condition, and records the verified growth margin.
    """

    kind: str
    table: tuple          # sorted ((j, k), complex) pairs
    growth_margin: float

    # -- constructors -------------------------------------------------------

    @staticmethod
    def radial(coeffs):
        """Radial field from pairs (j, a_j) with j >= 1, real a_j."""
        table = {}
        for j, a in coeffs:
            if int(j) != j or j < 1:
                raise ParameterError("radial powers must be integers >= 1",
                                     power=j, reason="bad_degree")
            a = float(a)
            if a == 0.0:
                continue
            table[(int(j), int(j))] = table.get((int(j), int(j)), 0.0) + a
        return Potential._build(RADIAL, table)

    @staticmethod
    def hermitian(entries):
        """Hermitian-polynomial field from (j, k, c) entries.

        Missing mirror entries are filled in as conjugates; inconsistent
        mirrors are rejected.
        """
        table = {}
        for j, k, c in entries:
            if int(j) != j or int(k) != k or j < 0 or k < 0:
                raise ParameterError("powers must be nonnegative integers",
                                     reason="bad_degree", j=j, k=k)
            table[(int(j), int(k))] = table.get((int(j), int(k)), 0.0) + complex(c)
        for (j, k), c in list(table.items()):
            mirror = table.get((k, j))
            if mirror is None:
                table[(k, j)] = np.conjugate(c)
            elif abs(np.conjugate(mirror) - c) > 1e-13 * max(1.0, abs(c)):
                raise ParameterError(
                    "coefficients are not Hermitian-symmetric",
                    reason="not_real", j=j, k=k)
        return Potential._build(HERMITIAN, table)

    @staticmethod
    def ginibre():
        return Potential.radial([(1, 0.5)])

    @staticmethod
    def _build(kind, table):
        table = {key: c for key, c in table.items() if c != 0}
        if not table:
            raise ParameterError("potential has no terms", reason="bad_degree")
        poly = Poly2(table)
        if not poly.is_hermitian():
            raise ParameterError("potential is not real-valued",
                                 reason="not_real")
        diag = {j: c.real for (j, k), c in table.items() if j == k}
        top_diag = max(diag) if diag else 0
        if top_diag < 1 or diag[top_diag] <= 0:
            raise ParameterError(
                "growth condition requires a positive leading radial "
                "coefficient of degree >= 1", reason="growth")
        top_total = max(j + k for j, k in table)
        if top_total > 2 * top_diag:
            raise ParameterError(
                "off-diagonal terms dominate the leading radial term",
                reason="growth")
        margin = Potential._growth_margin(poly)
        if margin <= 0:
            raise ParameterError("potential grows too slowly at infinity",
                                 reason="growth", margin=margin)
        items = tuple(sorted((key, c) for key, c in table.items()))
        return Potential(kind=kind, table=items, growth_margin=margin)

    @staticmethod
    def _growth_margin(poly):
        slopes = []
        thetas = np.linspace(0.0, 2.0 * np.pi, 64, endpoint=False)
        for r in (1e3, 1e4):
            q = poly.value(r * np.exp(1j * thetas)).real
            slopes.append(float(np.min(q)) / math.log(r))
        return min(slopes) - 1.0

    # -- evaluation ---------------------------------------------------------

    @cached_property
    def poly(self):
        return Poly2(dict(self.table))

    @cached_property
    def laplacian_poly(self):
        return self.poly.laplacian()

    @cached_property
    def del_poly(self):
        return self.poly.del_z()

    def value(self, z):
        return self.poly.value(z).real

    def wirtinger_del(self, z):
        """∂Q(z) with ∂ = (∂x - i ∂y)/2."""
        return self.del_poly.value(z)

    def laplacian(self, z):
        return self.laplacian_poly.value(z).real

    def dual(self, x, y):
        """Real dual-number evaluation of Q (value, gradient, Hessian)."""
        return self.poly.dual(x, y).real_part()

    def __call__(self, x, y):
        x = np.asarray(x) if not isinstance(x, Dual2) else x
        if isinstance(x, Dual2) or isinstance(y, Dual2):
            return self.dual(x, y)
        z = np.asarray(x) + 1j * np.asarray(y)
        return self.value(z)

    # -- radial profile helpers ---------------------------------------------

    def _require_radial(self, what):
        if self.kind != RADIAL:
            raise UnsupportedGeometryError(
                f"{what} requires a radial potential", kind=self.kind)

    @cached_property
    def radial_coeffs(self):
        """Pairs (j, a_j) of the radial profile Q(r) = sum a_j r^(2j)."""
        self._require_radial("radial profile")
        return tuple(sorted((j, c.real) for (j, k), c in self.table if j == k))

    def radial_value(self, r):
        r = np.asarray(r, dtype=float)
        return sum(a * r ** (2 * j) for j, a in self.radial_coeffs)

    def radial_prime(self, r):
        r = np.asarray(r, dtype=float)
        return sum(2 * j * a * r ** (2 * j - 1) for j, a in self.radial_coeffs)

    def r_qprime(self, r):
        """r Q'(r); equals the equilibrium mass inside radius r (r <= R)."""
        r = np.asarray(r, dtype=float)
        return sum(2 * j * a * r ** (2 * j) for j, a in self.radial_coeffs)

    # -- serialization -------------------------------------------------------

    def to_json(self):
        if self.kind == RADIAL:
            coeffs = [[j, a] for j, a in self.radial_coeffs]
        else:
            coeffs = [[j, k, c.real, c.imag] for (j, k), c in self.table]
        return {"kind": self.kind, "coeffs": coeffs}

    @staticmethod
    def from_json(obj):
        if not isinstance(obj, dict) or set(obj) != {"kind", "coeffs"}:
            raise ParameterError("potential JSON must have exactly the keys "
                                 "'kind' and 'coeffs'", reason="bad_schema")
        kind, coeffs = obj["kind"], obj["coeffs"]
        if kind == RADIAL:
            if not all(isinstance(e, (list, tuple)) and len(e) == 2 for e in coeffs):
                raise ParameterError("radial coefficients must be [j, a_j] pairs",
                                     reason="bad_schema")
            return Potential.radial([(e[0], e[1]) for e in coeffs])
        if kind == HERMITIAN:
            if not all(isinstance(e, (list, tuple)) and len(e) == 4 for e in coeffs):
                raise ParameterError("hermitian coefficients must be "
                                     "[j, k, re, im] quadruples", reason="bad_schema")
            return Potential.hermitian([(e[0], e[1], complex(e[2], e[3]))
                                        for e in coeffs])
        raise ParameterError(f"unknown potential kind {kind!r}", reason="bad_schema")

    @cached_property
    def ident(self):
        return json.dumps(self.to_json(), separators=(",", ":"), sort_keys=True)


def eval_potential(p, z, order=2):
    """(Q, ∂Q, ΔQ) at ``z`` via dual numbers; ΔQ = 4 ∂∂̄Q.

    ``order`` limits the work: 0 returns (Q, None, None), 1 adds ∂Q.
    """
    zc = complex(z)
    if order == 0:
        return float(p.value(zc)), None, None
    X, Y = Dual2.seed(zc.real, zc.imag)
    d = p.dual(X, Y)
    del_q = 0.5 * (d.dx - 1j * d.dy)
    if order == 1:
        return float(d.val), complex(del_q), None
    return float(d.val), complex(del_q), float(d.laplacian)


def polarize(p, z, wbar):
    """Q(z, w̄): the unique polynomial extension analytic in z, anti-analytic in w.

    Satisfies ``Q(z, conj(z)) = Q(z)`` and the Hermitian symmetry
    ``Q(z, w̄) = conj(Q(w, z̄))``.
    """
    return p.poly.polarized(z, wbar)


# ---------------------------------------------------------------------------
# Droplet and obstacle function
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Droplet:
    """Disk droplet of a radial potential, with equilibrium density ΔQ/(2π)."""

    potential: Potential
    radius: float

    center = 0j

    def density(self, z):
        z = np.asarray(z, dtype=complex)
        inside = np.abs(z) <= self.radius
        return np.where(inside, self.potential.laplacian(z) / (2.0 * np.pi), 0.0)

    def density_xy(self, x, y):
        return self.density(np.asarray(x) + 1j * np.asarray(y))

    def boundary_point(self, theta):
        return self.radius * np.exp(1j * np.asarray(theta))

    def mass(self, n_radial=200, n_angular=64):
        rule = make_polar_quadrature(self.radius, n_radial, n_angular)
        return integrate(rule, self.density_xy)


def solve_droplet(p):
    """Droplet of a radial potential: the disk with ``R Q'(R) = 1``.

    Verifies at construction that ``r Q'(r)`` is strictly increasing (a
    non-monotone profile signals an annular droplet, which is out of scope)
    and that the equilibrium density has unit quadrature mass.
    """
    if p.kind != RADIAL:
        raise UnsupportedGeometryError(
            "droplet solving is implemented for radial potentials only;"
            " the droplet of a general Hermitian-polynomial field is not a disk",
            kind=p.kind)
    r_hi = 1.0
    while p.r_qprime(r_hi) < 1.0:
        r_hi *= 2.0
        if r_hi > 1e8:
            raise RegularityError("droplet radius equation has no solution")
    grid = np.linspace(1e-6, 2.0 * r_hi, 4096)
    vals = p.r_qprime(grid)
    if not np.all(np.diff(vals) > 0):
        raise RegularityError(
            "r Q'(r) is not strictly increasing: droplet is not a single disk")
    radius = find_root(lambda r: p.r_qprime(r) - 1.0, 1e-12, r_hi)
    if abs(radius * p.radial_prime(radius) - 1.0) > RADIUS_TOL:
        raise RegularityError("droplet radius equation solved inaccurately",
                              residual=float(radius * p.radial_prime(radius) - 1.0))
    d = Droplet(potential=p, radius=float(radius))
    m = d.mass()
    if abs(m - 1.0) > MASS_TOL:
        raise RegularityError("equilibrium density does not have unit mass",
                              mass=float(m))
    return d


@dataclass(frozen=True)
class ObstacleFunction:
    """Maximal subharmonic minorant of Q with logarithmic growth.

    Equals Q on the droplet; outside the disk the closed form is
    ``Q(R) + log(r/R)`` (boundary value plus the Green's function of the
    disk complement with pole at infinity).
    """

    potential: Potential
    droplet: Droplet
    boundary_value: float

    def value(self, z):
        z = np.asarray(z, dtype=complex)
        r = np.abs(z)
        R = self.droplet.radius
        inside = self.potential.value(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            outside = self.boundary_value + np.log(np.maximum(r, R) / R)
        return np.where(r <= R, inside, outside)

    def two_del(self, z):
        """2 ∂Q̌(z): equals 2∂Q on the droplet and 1/z outside.

        This is the closed form of the Cauchy transform of the equilibrium
        measure.
        """
        z = np.asarray(z, dtype=complex)
        r = np.abs(z)
        R = self.droplet.radius
        with np.errstate(divide="ignore", invalid="ignore"):
            outside = np.where(r > 0, 1.0 / np.where(r > 0, z, 1.0), 0.0)
        return np.where(r <= R, 2.0 * self.potential.wirtinger_del(z), outside)

    def gap(self, z):
        """Q - Q̌ >= 0; vanishes on the droplet, grows like Q - log r outside."""
        z = np.asarray(z, dtype=complex)
        r = np.abs(z)
        R = self.droplet.radius
        with np.errstate(divide="ignore", invalid="ignore"):
            g = self.potential.value(z) - (
                self.boundary_value + np.log(np.maximum(r, R) / R))
        return np.where(r <= R, 0.0, g)

    def gap_radial(self, r):
        return self.gap(np.asarray(r, dtype=float) + 0j)

    def log_potential_sigma(self, z):
        """Logarithmic potential of the equilibrium measure (diagnostic).

        Radial reduction: the potential of the shell of radius t at ``z``
        is ``-log max(t, |z|)`` per unit mass.
        """
        d = self.droplet
        p = self.potential
        s = float(abs(complex(z)))
        from .numerics import make_radial_quadrature
        rule = make_radial_quadrature(0.0, d.radius, 400,
                                      breakpoints=(s,) if 0 < s < d.radius else ())

        def shell(t):
            dm = p.laplacian(t + 0j) * t  # dσ of the shell, per dr
            return -dm * np.log(np.maximum(t, s))

        return integrate(rule, shell)

    def equilibrium_constant(self):
        """Q̌ + U^σ on the boundary (constant for the equilibrium measure).

        Exposed as a diagnostic only; no reference value is asserted.
        """
        zb = self.droplet.boundary_point(0.0)
        return float(self.value(zb).real + self.log_potential_sigma(zb))


def obstacle(p, d):
    """Obstacle function of (p, d) with its contact and C1 invariants verified."""
    R = d.radius
    qR = float(p.value(R + 0j))
    if abs(p.radial_prime(R) - 1.0 / R) > C1_TOL:
        raise RegularityError("obstacle function is not C1 at the boundary",
                              mismatch=float(p.radial_prime(R) - 1.0 / R))
    obs = ObstacleFunction(potential=p, droplet=d, boundary_value=qR)
    grid = np.linspace(1e-3, 4.0 * R, 1024)
    if np.min(p.value(grid + 0j) - obs.value(grid + 0j)) < -1e-12:
        raise RegularityError("obstacle function exceeds the potential")
    return obs


# ---------------------------------------------------------------------------
# log ΔQ and its Laplacian
# ---------------------------------------------------------------------------

class LogLaplacianField:
    """L = log ΔQ as a dual-capable scalar field; raises off the domain ΔQ > 0."""

    def __init__(self, potential):
        self.potential = potential
        self._dq = potential.laplacian_poly

    def __call__(self, x, y):
        d = self._dq.dual(x, y).real_part() if isinstance(x, Dual2) or isinstance(y, Dual2) \
            else None
        if d is not None:
            if np.any(np.asarray(d.val) <= 0):
                raise DomainError("ΔQ <= 0 at evaluation point")
            return dlog(d)
        vals = self._dq.value(np.asarray(x) + 1j * np.asarray(y)).real
        if np.any(vals <= 0):
            raise DomainError("ΔQ <= 0 at evaluation point")
        return np.log(vals)


class LogLaplacianLaplacian:
    """ΔL = Δ log ΔQ, evaluated exactly through second-order duals."""

    def __init__(self, potential):
        self.field = LogLaplacianField(potential)

    def __call__(self, x, y):
        X, Y = Dual2.seed(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return self.field(X, Y).laplacian


def log_laplacian_fields(p):
    """(L, ΔL) for L = log ΔQ, both exact via dual-number composition."""
    return LogLaplacianField(p), LogLaplacianLaplacian(p)
