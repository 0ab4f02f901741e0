"""Diffeomorphisms, Jacobians and push-forward of conductivities.

The map family is closed: radial profile maps ``x -> phi(|x|) x/|x|``,
rigid rotations, planar twists ``(r, th) -> (r, th + tau(r))`` and
compositions of these.  Every member carries an exact inverse and a
closed-form Jacobian, so no root finding happens on production paths.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import sympy as sp
from scipy.stats import qmc

from .errors import (
    DegenerateJacobian,
    DimensionError,
    InvalidEpsilon,
    OutsideCodomain,
    OutsideDomain,
)
from .expr import Expression
from .tensor_core import (
    CARTESIAN,
    SPHERICAL,
    DomainSpec,
    SymmetricTensorField,
    spherical_to_cartesian,
)

DET_FLOOR = 1e-14
_GEOM_TOL = 1e-12


def _as_batch(points, dim):
    p = np.asarray(points, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    if p.shape[-1] != dim:
        raise DimensionError(f"expected {dim}D points, got shape {np.shape(points)}")
    return p, single


class Diffeomorphism:
    """Base class.  Subclasses implement the batched ``_forward``,
    ``_inverse`` and ``_jacobian`` on arrays of shape ``(N, dim)``."""

    dim: int
    domain: DomainSpec
    codomain: DomainSpec
    fixes_boundary: bool

    def forward(self, x):
        p, single = _as_batch(x, self.dim)
        if not np.all(self.domain.contains(p, _GEOM_TOL)):
            raise OutsideDomain(f"point(s) outside the domain of {self!r}")
        out = self._forward(p)
        return out[0] if single else out

    def inverse(self, y):
        p, single = _as_batch(y, self.dim)
        if not np.all(self.codomain.contains(p, _GEOM_TOL)):
            raise OutsideCodomain(f"point(s) outside the codomain of {self!r}")
        out = self._inverse(p)
        return out[0] if single else out

    def jacobian(self, x):
        p, single = _as_batch(x, self.dim)
        out = self._jacobian(p)
        return out[0] if single else out

    __call__ = forward

    def jacobian_singular_values(self, x):
        """Singular values of ``dF`` in descending order, batched."""
        return np.linalg.svd(self._jacobian(np.atleast_2d(x)), compute_uv=False)

    def jacobian_det(self, x):
        return np.linalg.det(self._jacobian(np.atleast_2d(x)))

    def then(self, outer):
        """``outer o self``."""
        return Composition(outer, self)


@dataclass(frozen=True, repr=False)
class RadialMap(Diffeomorphism):
    """``x -> phi(r) x / r`` about ``center``, with ``r = |x - center|``."""

    profile: Expression
    inverse_profile: Expression
    domain: DomainSpec
    codomain: DomainSpec
    name: str = "radial"
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "_dprofile", self.profile.diff("r"))

    @property
    def dim(self):
        return self.domain.dim

    @property
    def fixes_boundary(self):
        R = self.domain.r_out
        return abs(self.profile(r=R) - R) <= _GEOM_TOL * R

    def phi(self, r):
        return self.profile(r=r)

    def dphi(self, r):
        return self._dprofile(r=r)

    def phi_inv(self, s):
        return self.inverse_profile(r=s)

    def _polar(self, p):
        c = np.asarray(self.domain.center)
        d = p - c
        r = np.linalg.norm(d, axis=-1)
        return c, d, r

    def _forward(self, p):
        c, d, r = self._polar(p)
        with np.errstate(invalid="ignore", divide="ignore"):
            scale = np.where(r > 0, self.phi(r) / r, self.dphi(r))
        return c + d * scale[:, None]

    def _inverse(self, p):
        c, d, r = self._polar(p)
        with np.errstate(invalid="ignore", divide="ignore"):
            scale = np.where(r > 0, self.phi_inv(r) / r, 1.0 / self.dphi(0.0 * r))
        return c + d * scale[:, None]

    def _jacobian(self, p):
        _, d, r = self._polar(p)
        if np.any(r == 0):
            raise OutsideDomain("radial map Jacobian is undefined at its center")
        u = d / r[:, None]
        P = u[:, :, None] * u[:, None, :]
        tang = (self.phi(r) / r)[:, None, None]
        return self.dphi(r)[:, None, None] * P + tang * (np.eye(self.dim) - P)

    # closed forms: SVD of the formed matrix loses the radial value when
    # phi(r)/r is huge (near the puncture of the blow-up map)
    def jacobian_singular_values(self, x):
        _, _, r = self._polar(np.atleast_2d(x))
        radial = np.abs(self.dphi(r))
        tang = np.abs(self.phi(r) / r)
        sv = np.stack([radial] + [tang] * (self.dim - 1), -1)
        return -np.sort(-sv, axis=-1)

    def jacobian_det(self, x):
        _, _, r = self._polar(np.atleast_2d(x))
        return self.dphi(r) * (self.phi(r) / r) ** (self.dim - 1)

    def __repr__(self):
        return f"RadialMap({self.name}, phi={self.profile.source})"


@dataclass(frozen=True, repr=False)
class Rotation(Diffeomorphism):
    matrix: np.ndarray
    domain: DomainSpec
    name: str = "rotation"

    @property
    def dim(self):
        return self.domain.dim

    @property
    def codomain(self):
        return self.domain

    @property
    def fixes_boundary(self):
        return bool(np.allclose(self.matrix, np.eye(self.dim), atol=_GEOM_TOL))

    def _forward(self, p):
        c = np.asarray(self.domain.center)
        return c + (p - c) @ self.matrix.T

    def _inverse(self, p):
        c = np.asarray(self.domain.center)
        return c + (p - c) @ self.matrix

    def _jacobian(self, p):
        return np.broadcast_to(self.matrix, (len(p), self.dim, self.dim)).copy()

    def __repr__(self):
        return "Rotation()"


def _rot2(t):
    c, s = np.cos(t), np.sin(t)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


_J2 = np.array([[0.0, -1.0], [1.0, 0.0]])


@dataclass(frozen=True, repr=False)
class Twist2D(Diffeomorphism):
    """Planar twist ``(r, th) -> (r, th + tau(r))`` on a disk centred at 0."""

    tau: Expression
    domain: DomainSpec
    name: str = "twist2d"

    def __post_init__(self):
        if self.domain.dim != 2:
            raise DimensionError("twist maps are planar")
        object.__setattr__(self, "_dtau", self.tau.diff("r"))

    @property
    def dim(self):
        return 2

    @property
    def codomain(self):
        return self.domain

    @property
    def fixes_boundary(self):
        return abs(float(self.tau(r=self.domain.r_out))) <= _GEOM_TOL

    def _forward(self, p):
        r = np.hypot(p[:, 0], p[:, 1])
        return np.einsum("nij,nj->ni", _rot2(self.tau(r=r)), p)

    def _inverse(self, p):
        r = np.hypot(p[:, 0], p[:, 1])
        return np.einsum("nij,nj->ni", _rot2(-self.tau(r=r)), p)

    def _jacobian(self, p):
        r = np.hypot(p[:, 0], p[:, 1])
        with np.errstate(invalid="ignore", divide="ignore"):
            u = np.where(r[:, None] > 0, p / r[:, None], 0.0)
        Jx = p @ _J2.T
        inner = np.eye(2) + self._dtau(r=r)[:, None, None] * Jx[:, :, None] * u[:, None, :]
        return np.einsum("nij,njk->nik", _rot2(self.tau(r=r)), inner)

    def __repr__(self):
        return f"Twist2D(tau={self.tau.source})"


@dataclass(frozen=True, repr=False)
class Composition(Diffeomorphism):
    """``outer o inner``."""

    outer: Diffeomorphism
    inner: Diffeomorphism

    def __post_init__(self):
        if self.outer.dim != self.inner.dim:
            raise DimensionError("cannot compose maps of different dimension")

    @property
    def dim(self):
        return self.inner.dim

    @property
    def domain(self):
        return self.inner.domain

    @property
    def codomain(self):
        return self.outer.codomain

    @property
    def fixes_boundary(self):
        return self.outer.fixes_boundary and self.inner.fixes_boundary

    def _forward(self, p):
        return self.outer.forward(self.inner._forward(p))

    def _inverse(self, p):
        return self.inner._inverse(np.atleast_2d(self.outer.inverse(p)))

    def _jacobian(self, p):
        q = self.inner._forward(p)
        return np.einsum("nij,njk->nik", self.outer._jacobian(q), self.inner._jacobian(p))

    def __repr__(self):
        return f"Composition({self.outer!r}, {self.inner!r})"


# -- constructors ---------------------------------------------------------------

def identity_map(dim=3, radius=2.0):
    dom = DomainSpec.disk(radius) if dim == 2 else DomainSpec.ball(radius)
    return RadialMap(Expression("r"), Expression("r"), dom, dom, name="identity",
                     config={"map": "identity"})


def scaling_map(factor, dim=3):
    """``x -> factor * x`` on a large ball; does not fix any boundary."""
    big = 1e6
    center = (0.0,) * dim
    dom = DomainSpec("ball", center, big)
    cod = DomainSpec("ball", center, big * factor)
    return RadialMap(Expression(f"{factor}*r"), Expression(f"r/{factor}"), dom, cod,
                     name="scaling", config={"map": "scaling", "factor": factor})


def blow_up_map():
    """Stretch the punctured ball ``B(0,2) minus {0}`` onto the shell ``1 < |y| < 2``."""
    return RadialMap(Expression("r/2 + 1"), Expression("2*(r - 1)"),
                     DomainSpec.punctured_ball(2.0), DomainSpec.annulus(1.0, 2.0),
                     name="blow_up", config={"map": "blow_up"})


def near_cloak_map(epsilon):
    """Affine radial profile sending ``eps < |x| < 2`` onto ``1 < |y| < 2``.

    ``phi(eps) = 1``, ``phi(2) = 2``; tends to :func:`blow_up_map` as eps -> 0.
    """
    eps = float(epsilon)
    if not 0.0 < eps < 1.0:
        raise InvalidEpsilon(f"epsilon must lie in (0, 1), got {epsilon}")
    prof = Expression(f"(r + 2 - 2*{eps!r})/(2 - {eps!r})")
    inv = Expression(f"(2 - {eps!r})*r - 2 + 2*{eps!r}")
    return RadialMap(prof, inv, DomainSpec.annulus(eps, 2.0), DomainSpec.annulus(1.0, 2.0),
                     name="near_cloak", config={"map": "near_cloak", "epsilon": eps})


def radial_profile_map(profile, radius=1.0, dim=2, inverse=None):
    """Radial map from a profile expression in ``r``.

    The inverse is solved symbolically when not given; the branch that
    inverts the profile on sample radii is kept.
    """
    prof = Expression(profile)
    if inverse is None:
        r, s = sp.symbols("r s", real=True)
        sol = sp.solve(sp.Eq(prof.sym.subs(sp.Symbol("r", real=True), r), s), r)
        rs = np.linspace(0.05, 0.95, 7) * radius
        inv = None
        for cand in sol:
            e = Expression.from_sympy(cand.subs(s, sp.Symbol("r", real=True)))
            if not e.sym.is_real and e.sym.has(sp.I):
                continue
            with np.errstate(all="ignore"), warnings.catch_warnings():
                warnings.simplefilter("ignore", np.exceptions.ComplexWarning)
                try:
                    back = np.asarray(e(r=prof(r=rs)), dtype=float)
                except (TypeError, ValueError):
                    continue
            if np.all(np.isfinite(back)) and np.allclose(back, rs, atol=1e-10):
                inv = e
                break
        if inv is None:
            raise ValueError(f"no closed-form inverse found for profile {profile!r}")
    else:
        inv = Expression(inverse)
    center = (0.0,) * dim
    dom = DomainSpec("disk" if dim == 2 else "ball", center, radius)
    return RadialMap(prof, inv, dom, dom, name="radial",
                     config={"map": "radial", "profile": str(profile)})


def twist_map(tau, radius=1.0):
    return Twist2D(Expression(tau), DomainSpec.disk(radius))


def rotation_map(matrix, radius=1.0):
    m = np.asarray(matrix, dtype=float)
    center = (0.0,) * m.shape[0]
    return Rotation(m, DomainSpec("disk" if m.shape[0] == 2 else "ball", center, radius))


def map_from_config(cfg):
    """Build a map from its config record, e.g. ``{"map": "near_cloak", "epsilon": 0.1}``."""
    kind = cfg.get("map")
    if kind == "blow_up":
        return blow_up_map()
    if kind == "near_cloak":
        return near_cloak_map(cfg["epsilon"])
    if kind == "twist2d":
        return twist_map(cfg["tau"], cfg.get("radius", 1.0))
    if kind == "radial":
        return radial_profile_map(cfg["profile"], cfg.get("radius", 1.0), cfg.get("dim", 2),
                                  cfg.get("inverse"))
    if kind == "identity":
        return identity_map(cfg.get("dim", 3), cfg.get("radius", 2.0))
    if kind == "compose":
        maps = [map_from_config(c) for c in cfg["maps"]]
        out = maps[0]
        for m in maps[1:]:
            out = Composition(m, out)
        return out
    raise ValueError(f"unknown map kind {kind!r}")


# -- push-forward -----------------------------------------------------------------

def push_forward(F: Diffeomorphism, sigma: SymmetricTensorField) -> SymmetricTensorField:
    """``(F_* sigma)(y) = dF sigma dF^T / det dF`` at ``x = F^{-1}(y)``.

    The result is a Cartesian field on ``F.codomain``.
    """
    if sigma.dim != F.dim:
        raise DimensionError("map and tensor dimensions differ")
    base = spherical_to_cartesian(sigma) if sigma.coords == SPHERICAL else sigma

    def fn(y):
        if not np.all(F.codomain.contains(y, _GEOM_TOL)):
            raise OutsideCodomain("push-forward evaluated outside the map's codomain")
        x = F._inverse(y)
        J = F._jacobian(x)
        det = np.linalg.det(J)
        if np.any(np.abs(det) < DET_FLOOR):
            raise DegenerateJacobian(f"|det dF| = {np.abs(det).min():.3e}")
        m = np.einsum("nij,njk,nlk->nil", J, base.fn(x), J) / det[:, None, None]
        return 0.5 * (m + np.swapaxes(m, 1, 2))

    return SymmetricTensorField(F.dim, CARTESIAN, fn)


def push_forward_radial_coefficients(F: RadialMap, alpha, beta):
    """Push radial coefficient profiles through a radial map.

    For a spherically symmetric conductivity written in density form as
    ``diag(alpha(r) sin th, beta(r) sin th, beta(r)/sin th)`` the push-forward
    by ``r -> phi(r)`` is again of that form with

    ``alpha~(s) = phi'(r) alpha(r)``,  ``beta~(s) = beta(r) / phi'(r)``,
    ``r = phi^{-1}(s)``.

    Expressions in, expressions out (exact, via sympy); any other callables
    give callables back.
    """
    if isinstance(alpha, Expression) and isinstance(beta, Expression):
        r = sp.Symbol("r", real=True)
        back = F.inverse_profile.sym
        dphi = F._dprofile.sym
        a_t = sp.simplify((dphi * alpha.sym).subs(r, back))
        b_t = sp.simplify((beta.sym / dphi).subs(r, back))
        return Expression.from_sympy(a_t), Expression.from_sympy(b_t)

    def alpha_t(s):
        r = F.phi_inv(s)
        return F.dphi(r) * alpha(r)

    def beta_t(s):
        r = F.phi_inv(s)
        return beta(r) / F.dphi(r)

    return alpha_t, beta_t


# -- Jacobian admissibility -----------------------------------------------------

@dataclass
class JacobianConditionReport:
    c0_estimate: float
    c1_estimate: float
    n_samples: int
    violations: list

    @property
    def ok(self):
        return not self.violations and self.c0_estimate > 0 and self.c1_estimate > 0


def _directions(k, dim, rng):
    if dim == 2:
        t = 2 * np.pi * (np.arange(k) + rng.random()) / k
        return np.stack([np.cos(t), np.sin(t)], -1)
    # Fibonacci sphere with a seeded random rotation
    i = np.arange(k) + 0.5
    z = 1 - 2 * i / k
    phi = np.pi * (1 + 5 ** 0.5) * i
    pts = np.stack([np.sqrt(1 - z * z) * np.cos(phi), np.sqrt(1 - z * z) * np.sin(phi), z], -1)
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    return pts @ q.T


def sample_domain(domain: DomainSpec, n_samples, seed=0, exclude=None, exclude_radius=1e-8):
    """Radial-angular sample set covering the closed domain.

    Radii come from a scrambled Halton sequence with both radial end points
    included; directions from a rotated Fibonacci lattice.
    """
    rng = np.random.default_rng(seed)
    dim = domain.dim
    k = max(1, int(np.ceil(np.sqrt(n_samples))))
    m = max(2, int(np.ceil(n_samples / k)))
    r_lo = max(domain.r_in, exclude_radius)
    r_hi = domain.r_out
    u = qmc.Halton(1, scramble=True, seed=rng).random(m - 2)[:, 0] if m > 2 else np.empty(0)
    radii = np.concatenate([[r_lo], r_lo + (r_hi - r_lo) * np.sort(u), [r_hi]])
    dirs = _directions(k, dim, rng)
    pts = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, dim)[:n_samples]
    pts = pts + np.asarray(domain.center)
    if exclude is not None:
        keep = np.linalg.norm(pts - np.asarray(exclude), axis=-1) > exclude_radius
        pts = pts[keep]
    return pts


def check_jacobian_conditions(F: Diffeomorphism, y, n_samples, seed=0) -> JacobianConditionReport:
    """Empirical infima of ``sigma_min(dF)`` and ``det(dF) dist(x, y)``."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    y = np.asarray(y, dtype=float)
    pts = sample_domain(F.domain, n_samples, seed, exclude=y)
    smin = F.jacobian_singular_values(pts)[:, -1]
    det = F.jacobian_det(pts)
    c1 = det * np.linalg.norm(pts - y, axis=-1)
    bad = (smin <= 0) | (c1 <= 0)
    return JacobianConditionReport(float(smin.min()), float(c1.min()), len(pts),
                                   [tuple(p) for p in pts[bad]])
