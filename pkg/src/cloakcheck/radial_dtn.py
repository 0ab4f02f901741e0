"""DtN spectra of spherically symmetric anisotropic conductivities.

A radial scenario on the ball ``|x| < R`` (``R = 2`` throughout the catalog)
is written in density-weighted spherical form

    sigma = diag(alpha(r) sin th, beta(r) sin th, beta(r) / sin th),

so that separating ``u = R_n(r) Y_n`` turns the conductivity equation into

    (alpha R_n')' = n (n + 1) beta R_n.

The DtN eigenvalue on degree-``n`` harmonics, measured as flux per unit area
of the outer sphere for unit boundary amplitude, is

    mu_n = alpha(R) R_n'(R) / (R^2 R_n(R)).

Numerics work with the Riccati variable ``q = alpha R'/R`` (the flux per unit
potential), which stays smooth where ``alpha`` degenerates, together with
``log R``.  Each piece is integrated in ``t = log(r - origin)`` so the
algebraic behaviour near a degenerate radius becomes uniform in ``t``.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Callable, Optional, Sequence

import numpy as np
import sympy as sp
from scipy.integrate import quad, solve_ivp

from .errors import DegreeMismatch, NoBoundedBranch, ToleranceNotMet
from .expr import Expression
from .transform import near_cloak_map, push_forward_radial_coefficients

REGULAR_CENTER = "regular_center"
FROBENIUS = "frobenius"
MATCHED = "matched_interior"

DELTA0_SCHEDULE = (1e-4, 1e-5, 1e-6)
INVISIBILITY_DELTAS = (1e-2, 1e-3, 1e-4)
DEFAULT_NMAX = 20
_ENDPOINT_TOL = 1e-12


@dataclass(frozen=True)
class Piece:
    """Radial coefficients on ``[a, b]``.

    ``origin`` is the radius used for the logarithmic integration variable;
    set it to the point where ``alpha`` degenerates when that point is at or
    just left of ``a``.
    """

    a: float
    b: float
    alpha: Callable = field(repr=False)
    beta: Callable = field(repr=False)
    origin: Optional[float] = None
    alpha_src: Optional[str] = None
    beta_src: Optional[str] = None
    dalpha: Optional[Callable] = field(default=None, repr=False)
    exprs: Optional[tuple] = field(default=None, repr=False, compare=False)

    @classmethod
    def from_expressions(cls, a, b, alpha, beta, origin=None, params=None):
        ea = alpha if isinstance(alpha, Expression) else Expression(alpha, params)
        eb = beta if isinstance(beta, Expression) else Expression(beta, params)
        return cls(float(a), float(b), ea.radial, eb.radial, origin, ea.source, eb.source,
                   ea.diff("r").radial, (ea, eb))

    def offset_coefficients(self, origin):
        """``(alpha, beta, alpha')`` as functions of ``d = r - origin``.

        Expression-backed pieces are shifted symbolically so that factors
        like ``(r - 1)`` are exact for tiny ``d``; otherwise ``r = origin + d``.
        """
        return _shifted(self, float(origin))

    def alpha_prime(self, r):
        if self.dalpha is not None:
            return self.dalpha(r)
        h = 1e-6 * (self.b - self.a)
        return (self.alpha(r + h) - self.alpha(r - h)) / (2 * h)

    @property
    def log_origin(self):
        if self.origin is not None and self.origin < self.a + _ENDPOINT_TOL:
            return self.origin
        return self.a - (self.b - self.a)

    def restricted(self, a):
        return Piece(a, self.b, self.alpha, self.beta, self.origin,
                     self.alpha_src, self.beta_src, self.dalpha, self.exprs)


@dataclass(frozen=True)
class RadialScenario:
    """Spherically symmetric conductivity on ``(r_core, radius]``.

    ``inner_condition``:

    ``regular_center``  first piece starts at 0, solution regular there;
    ``frobenius``       first piece starts at ``r_core > 0`` where ``alpha``
                        vanishes; the bounded Frobenius branch is selected;
    ``matched_interior`` an isotropic-type fill ``alpha = ka r^2, beta = kb``
                        occupies ``[0, r_core]`` (``interior = (ka, kb)``)
                        with value and flux continuity at ``r_core``.
    """

    pieces: tuple
    inner_condition: str
    interior: Optional[tuple] = None
    description: str = ""
    name: str = ""
    family: Optional[dict] = None

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        if not self.pieces:
            raise ValueError("scenario needs at least one piece")
        for p, q in zip(self.pieces, self.pieces[1:]):
            if abs(p.b - q.a) > _ENDPOINT_TOL:
                raise ValueError(f"pieces leave a gap or overlap at r = {p.b} / {q.a}")
        for p in self.pieces:
            if not p.a < p.b:
                raise ValueError(f"empty piece [{p.a}, {p.b}]")
            r = p.a + (p.b - p.a) * np.linspace(0.01, 0.99, 25)
            if np.any(np.asarray(p.alpha(r)) <= 0) or np.any(np.asarray(p.beta(r)) <= 0):
                raise ValueError(f"alpha and beta must be positive inside [{p.a}, {p.b}]")
        cond = self.inner_condition
        if cond == REGULAR_CENTER and abs(self.r_core) > _ENDPOINT_TOL:
            raise ValueError("regular_center requires the first piece to start at 0")
        if cond == FROBENIUS:
            p = self.pieces[0]
            a_near = abs(p.alpha(p.a + 1e-9 * (p.b - p.a)))
            a_mid = abs(p.alpha(0.5 * (p.a + p.b)))
            if not a_near < 1e-6 * a_mid:
                raise ValueError("frobenius condition needs alpha -> 0 at the inner radius")
        if cond == MATCHED:
            if self.interior is None or min(self.interior) <= 0:
                raise ValueError("matched_interior needs positive interior coefficients")
        if cond not in (REGULAR_CENTER, FROBENIUS, MATCHED):
            raise ValueError(f"unknown inner condition {cond!r}")

    @property
    def r_core(self):
        return self.pieces[0].a

    @property
    def radius(self):
        return self.pieces[-1].b

    def solve_pieces(self):
        """Pieces the integrator walks through, starting at a singular point."""
        if self.inner_condition == MATCHED:
            ka, kb = self.interior
            fill = Piece(0.0, self.r_core, lambda r: ka * r * r, lambda r: kb, 0.0,
                         f"{ka!r}*r^2", f"{kb!r}", lambda r: 2 * ka * r)
            return (fill,) + self.pieces
        return self.pieces

    def with_fill(self, fill, delta):
        """Truncate the singular piece at ``r_core + delta`` and put ``fill`` inside."""
        a = self.r_core + delta
        first = self.pieces[0].restricted(a)
        ka, kb = _fill_pair(fill)
        return RadialScenario((first,) + self.pieces[1:], MATCHED, (ka, kb),
                              f"{self.name or 'scenario'} truncated at r = {a:g}",
                              name=f"{self.name}_trunc")

    def to_dict(self):
        pcs = []
        for p in self.pieces:
            if p.alpha_src is None or p.beta_src is None:
                raise ValueError("scenario pieces lack expression sources")
            # parameters are baked into the stored expressions
            a_src, b_src = ((Expression.from_sympy(e.sym).source for e in p.exprs)
                            if p.exprs else (p.alpha_src, p.beta_src))
            d = {"interval": [p.a, p.b], "alpha": a_src, "beta": b_src}
            if p.origin is not None:
                d["origin"] = p.origin
            pcs.append(d)
        out = {"name": self.name, "description": self.description,
               "inner_condition": self.inner_condition, "pieces": pcs}
        if self.interior is not None:
            out["interior"] = list(self.interior)
        return out


@lru_cache(maxsize=512)
def _shifted(piece, origin):
    if piece.exprs is None or origin == 0.0:
        return (lambda d: piece.alpha(origin + d), lambda d: piece.beta(origin + d),
                lambda d: piece.alpha_prime(origin + d))
    r = sp.Symbol("r", real=True)
    o = sp.nsimplify(origin)
    if float(o) != origin:
        o = sp.Float(origin)
    out = []
    for sym in (piece.exprs[0].sym, piece.exprs[1].sym, sp.diff(piece.exprs[0].sym, r)):
        out.append(Expression.from_sympy(sp.expand(sym.subs(r, o + r))).radial)
    return tuple(out)


def _fill_pair(fill):
    if np.ndim(fill) == 0:
        return float(fill), float(fill)
    ka, kb = fill
    return float(ka), float(kb)


# -- catalog -----------------------------------------------------------------

def homogeneous_scenario(radius=2.0):
    return RadialScenario(
        (Piece.from_expressions(0.0, radius, "r^2", "1", origin=0.0),),
        REGULAR_CENTER, description="homogeneous unit conductivity",
        name="homogeneous", family={"name": "homogeneous"})


def cloak_scenario():
    return RadialScenario(
        (Piece.from_expressions(1.0, 2.0, "2*(r-1)^2", "2", origin=1.0),),
        FROBENIUS, description="push-forward of the unit conductivity by the blow-up map",
        name="cloak3d", family={"name": "cloak"})


def cylinder_scenario(rho=1.0):
    rho = float(rho)
    if rho <= 0:
        raise ValueError("rho must be positive")
    return RadialScenario(
        (Piece.from_expressions(1.0, 2.0, "rho^2*(r-1)", "1/(r-1)", origin=1.0,
                                params={"rho": rho}),),
        FROBENIUS, description=f"half-cylinder metric with sphere radius rho = {rho:g}",
        name="cylinder", family={"name": "cylinder", "rho": rho})


def near_cloak_scenario(epsilon, interior=(1.0, 1.0)):
    """Push the unit conductivity through the affine near-cloak profile and
    fill ``|x| < 1`` with ``alpha = ka r^2, beta = kb``."""
    F = near_cloak_map(epsilon)
    a_t, b_t = push_forward_radial_coefficients(F, Expression("r^2"), Expression("1"))
    eps = float(epsilon)
    origin = (2 - 2 * eps) / (2 - eps)  # image of r = 0 under the affine profile
    piece = Piece.from_expressions(1.0, 2.0, a_t, b_t, origin)
    ka, kb = _fill_pair(interior)
    return RadialScenario((piece,), MATCHED, (ka, kb),
                          f"near-cloak, epsilon = {eps:g}", name="nearcloak",
                          family={"name": "nearcloak", "epsilon": eps, "interior": [ka, kb]})


def scenario_from_dict(doc, overrides=None):
    """Build a scenario from a catalog record (see ``scenarios/*.json``)."""
    doc = dict(doc)
    params = dict(doc.get("params", {}))
    params.update(overrides or {})
    kind = doc.get("kind", "pieces")
    if kind == "near_cloak":
        return near_cloak_scenario(params.get("epsilon", doc.get("epsilon")),
                                   params.get("interior", doc.get("interior", [1.0, 1.0])))
    pieces = tuple(Piece.from_expressions(p["interval"][0], p["interval"][1], p["alpha"],
                                          p["beta"], p.get("origin"), params)
                   for p in doc["pieces"])
    interior = tuple(doc["interior"]) if doc.get("interior") is not None else None
    family = doc.get("family")
    if family is not None:
        family = dict(family)
        for k in family.get("params", []):
            family[k] = params[k]
    return RadialScenario(pieces, doc["inner_condition"], interior,
                          doc.get("description", ""), doc.get("name", ""), family)


def catalog_names():
    files = resources.files("cloakcheck").joinpath("scenarios")
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def load_catalog_record(name):
    path = resources.files("cloakcheck").joinpath("scenarios", f"{name}.json")
    if not path.is_file():
        raise KeyError(f"no scenario named {name!r}; known: {catalog_names()}")
    return json.loads(path.read_text())


def load_scenario(name_or_path, **overrides):
    """Load a catalog scenario by name, or a scenario JSON file by path."""
    if str(name_or_path).endswith(".json"):
        with open(name_or_path) as fh:
            doc = json.load(fh)
    else:
        doc = load_catalog_record(name_or_path)
    return scenario_from_dict(doc, overrides)


# -- Frobenius analysis ---------------------------------------------------------

def _local_power(f, a, h):
    """Leading power and coefficient of ``f(a + s) ~ c s^p`` as ``s -> 0+``.

    Two log-log slopes on dyadic intervals, combined by one Richardson step
    to remove the O(s) bias of non-monomial profiles.
    """
    s = h * np.array([1.0, 0.5, 0.25])
    v = np.abs(np.array([f(a + si) for si in s], dtype=float))
    lv = np.log(v)
    p1 = (lv[0] - lv[1]) / math.log(2.0)
    p2 = (lv[1] - lv[2]) / math.log(2.0)
    p = 2 * p2 - p1
    c1 = v[1] / s[1] ** p
    c2 = v[2] / s[2] ** p
    return p, 2 * c2 - c1


@dataclass(frozen=True)
class IndicialData:
    power_alpha: float
    power_beta: float
    ratio: float  # beta / alpha leading-coefficient ratio
    exponent: float  # bounded (selected) root
    rejected: float

    @property
    def opposite_signs(self):
        return self.exponent >= 0 > self.rejected


def indicial_exponents(piece: Piece, n, h=1e-3) -> IndicialData:
    """Roots of the indicial equation at the left end of ``piece``.

    With ``alpha ~ a0 s^p`` and ``beta ~ b0 s^(p-2)`` (the Fuchsian case),
    substituting ``R = s^lam`` gives ``lam (lam + p - 1) = n(n+1) b0/a0``.
    If ``beta`` is less singular the right-hand side is zero.
    """
    scale = h * (piece.b - piece.a)
    fa, fb, _ = piece.offset_coefficients(piece.a)
    p, a0 = _local_power(fa, 0.0, scale)
    q, b0 = _local_power(fb, 0.0, scale)
    if n == 0:
        # constants always solve the mode-0 equation with zero flux
        return IndicialData(p, q, b0 / a0, 0.0, min(0.0, 1.0 - p))
    if abs(q - (p - 2)) < 1e-6:
        c = n * (n + 1) * b0 / a0
    elif q > p - 2:
        c = 0.0
    else:
        raise NoBoundedBranch(
            f"irregular singular point at r = {piece.a} (alpha ~ s^{p:.3g}, beta ~ s^{q:.3g})")
    disc = math.sqrt((p - 1) ** 2 + 4 * c)
    hi = 0.5 * (-(p - 1) + disc)
    lo = 0.5 * (-(p - 1) - disc)
    if hi < -1e-12:
        raise NoBoundedBranch(f"no nonnegative indicial root at r = {piece.a} for n = {n}")
    return IndicialData(p, q, b0 / a0, max(hi, 0.0), lo)


# -- mode solve -------------------------------------------------------------------

@dataclass
class _Segment:
    piece: Piece
    origin: float
    t0: float
    t1: float
    sol: object  # scipy OdeSolution over t


@dataclass
class ModeSolution:
    """Radial factor ``R_n`` of a separated solution, normalized ``R(radius) = 1``."""

    degree: int
    scenario: RadialScenario = field(repr=False)
    exponent: float
    rejected_exponent: float
    mu: float
    error_estimate: float
    _segments: list = field(repr=False, default_factory=list)
    _log_norm: float = 0.0
    _start: tuple = (0.0, 0.0, 0.0)  # (s0, z0, logR0) at the Frobenius start

    def _locate(self, r):
        for seg in self._segments:
            if r <= seg.piece.b + _ENDPOINT_TOL:
                return seg
        return self._segments[-1]

    def _state(self, r):
        """(q, log R) at radius r, log R unnormalized."""
        first = self._segments[0]
        s0, z0, l0 = self._start
        s = r - first.piece.a
        if s < s0:
            # Frobenius start layer: leading-order branch R ~ s^lam
            if s <= 0:
                return 0.0, (-math.inf if z0 > 0 else l0)
            alpha = first.piece.offset_coefficients(first.origin)[0]
            return alpha(s) * z0 / s, l0 + z0 * math.log(s / s0)
        seg = self._locate(r)
        d = r - seg.origin
        z, lr = seg.sol(min(max(math.log(d), seg.t0), seg.t1))
        alpha = seg.piece.offset_coefficients(seg.origin)[0]
        return float(alpha(d) * z / d), float(lr)

    def R(self, r):
        r = np.asarray(r, dtype=float)
        out = np.array([math.exp(self._state(ri)[1] - self._log_norm) for ri in r.ravel()])
        return out.reshape(r.shape) if r.shape else float(out[0])

    def flux(self, r):
        """Radial flux ``alpha R'`` (per unit solid angle)."""
        r = np.asarray(r, dtype=float)
        vals = []
        for ri in r.ravel():
            q, lr = self._state(ri)
            vals.append(q * math.exp(lr - self._log_norm))
        out = np.array(vals)
        return out.reshape(r.shape) if r.shape else float(out[0])

    def R_prime(self, r):
        r = np.asarray(r, dtype=float)
        vals = []
        for ri in r.ravel():
            q, lr = self._state(ri)
            alpha = self._locate(ri).piece.alpha(ri)
            vals.append(q / alpha * math.exp(lr - self._log_norm))
        out = np.array(vals)
        return out.reshape(r.shape) if r.shape else float(out[0])

    def alpha(self, r):
        return self._locate(r).piece.alpha(r)

    def beta(self, r):
        return self._locate(r).piece.beta(r)

    @property
    def inner_radius(self):
        return self._segments[0].piece.a


def _rtol(tol):
    return float(np.clip(tol * 1e-2, 2.5e-14, 1e-6))


def _integrate(pieces, n, delta0, lam, tol):
    """Integrate (z, log R) outward from the Frobenius start layer.

    ``z = d R'/R`` with ``d = r - origin`` obeys, in ``t = log d``,

        dz/dt = z + n(n+1) d^2 beta/alpha - d alpha'/alpha z - z^2,

    whose fixed point on a power-law piece is the indicial root, so the
    integrator coasts through degenerate layers.  At interfaces the flux
    ratio ``q = alpha z / d`` is carried over.
    """
    nn = n * (n + 1)
    rtol = _rtol(tol)
    first = pieces[0]
    s0 = delta0 * (first.b - first.a)
    z = lam
    logR = lam * math.log(s0)
    start = (s0, z, logR)
    segments = []
    q = None
    for k, piece in enumerate(pieces):
        o = first.a if k == 0 else piece.log_origin
        rs = first.a + s0 if k == 0 else piece.a
        if k > 0:
            z = q * (rs - o) / piece.alpha(rs)
        alpha, beta, dalpha = piece.offset_coefficients(o)

        def rhs(t, y, alpha=alpha, beta=beta, dalpha=dalpha):
            d = math.exp(t)
            a = alpha(d)
            zz = y[0]
            return (zz + nn * d * d * beta(d) / a - d * dalpha(d) / a * zz - zz * zz, zz)

        t0, t1 = math.log(rs - o), math.log(piece.b - o)
        sol = solve_ivp(rhs, (t0, t1), [z, logR], method="DOP853", rtol=rtol,
                        atol=rtol, dense_output=True)
        if not sol.success:
            raise ToleranceNotMet(f"integrator failed on [{piece.a}, {piece.b}]: {sol.message}")
        z, logR = sol.y[0, -1], sol.y[1, -1]
        q = alpha(piece.b - o) * z / (piece.b - o)
        segments.append(_Segment(piece, o, t0, t1, sol.sol))
    return segments, start, q, logR


def solve_mode(s: RadialScenario, n: int, tol: float = 1e-10) -> ModeSolution:
    """Bounded separated solution of degree ``n``.

    The start layer uses the bounded Frobenius branch at the innermost
    singular radius; runs at three start offsets are Richardson-extrapolated
    and their disagreement is the reported error estimate.
    """
    if n < 0:
        raise ValueError("degree must be nonnegative")
    if not 1e-13 <= tol <= 1e-4:
        raise ValueError("tol must lie in [1e-13, 1e-4]")
    pieces = s.solve_pieces()
    ind = indicial_exponents(pieces[0], n)
    runs = [_integrate(pieces, n, d0, ind.exponent, tol) for d0 in DELTA0_SCHEDULE]
    R_out = s.radius
    mus = [q / R_out ** 2 for (_, _, q, _) in runs]
    # first-order Richardson in the start offset (ratio 10 between offsets)
    ext1 = (10 * mus[1] - mus[0]) / 9
    ext2 = (10 * mus[2] - mus[1]) / 9
    err = abs(ext2 - ext1)
    if err > max(tol, 1e-13) * max(1.0, abs(ext2)):
        raise ToleranceNotMet(
            f"degree {n}: start-layer extrapolation spread {err:.3e} exceeds tol {tol:.1e}")
    segments, start, q, logR = runs[-1]
    m = ModeSolution(n, s, ind.exponent, ind.rejected, ext2, err, segments, logR, start)
    return m


# -- spectra ------------------------------------------------------------------

@dataclass
class DtNSpectrum:
    degrees: np.ndarray
    mu: np.ndarray
    solver_tol: float
    method: str = "numeric"
    label: str = ""

    @property
    def n_max(self):
        return int(self.degrees[-1])

    def rows(self):
        return [(int(n), float(m)) for n, m in zip(self.degrees, self.mu)]


def recognize_family(s: RadialScenario, rtol=1e-12):
    """Match a scenario's coefficients against the closed-form families.

    Returns ``(name, params)`` or ``None``.
    """
    if len(s.pieces) != 1:
        return None
    p = s.pieces[0]
    r = p.a + (p.b - p.a) * np.linspace(0.05, 1.0, 11)
    al, be = np.asarray(p.alpha(r), float), np.asarray(p.beta(r), float)

    def close(x, y):
        return np.allclose(x, y, rtol=rtol, atol=0)

    if s.inner_condition == REGULAR_CENTER and p.a == 0.0:
        if close(al, r * r) and close(be, np.ones_like(r)):
            return "homogeneous", {"radius": p.b}
    if s.inner_condition == FROBENIUS and p.a == 1.0 and p.b == 2.0:
        if close(al, 2 * (r - 1) ** 2) and close(be, 2 * np.ones_like(r)):
            return "cloak", {}
        rho2 = al[-1] / (r[-1] - 1)
        if rho2 > 0 and close(al, rho2 * (r - 1)) and close(be, 1 / (r - 1)):
            return "cylinder", {"rho": math.sqrt(rho2)}
    return None


def closed_form_mu(family, params, n):
    """DtN eigenvalue from the separated closed forms."""
    if family == "homogeneous":
        return n / params["radius"]
    if family == "cloak":
        # R = (r-1)^n, alpha(2) = 2
        return 2.0 * n / 4.0
    if family == "cylinder":
        rho = params["rho"]
        return rho * rho * (math.sqrt(n * (n + 1)) / rho) / 4.0
    raise KeyError(family)


def dtn_spectrum(s: RadialScenario, n_max: int = DEFAULT_NMAX, tol: float = 1e-10,
                 method: str = "auto", workers: int = 1) -> DtNSpectrum:
    """DtN eigenvalues ``mu_0 .. mu_nmax``.

    ``method``: ``"auto"`` uses the closed form when the scenario is a
    recognized family and integrates otherwise; ``"numeric"`` and
    ``"closed"`` force one path.
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    degrees = np.arange(n_max + 1)
    fam = recognize_family(s) if method in ("auto", "closed") else None
    if method == "closed" and fam is None:
        raise ValueError("scenario does not match a closed-form family")
    if fam is not None:
        mu = np.array([closed_form_mu(fam[0], fam[1], int(n)) for n in degrees])
        return DtNSpectrum(degrees, mu, tol, "closed", s.name)

    def one(n):
        return solve_mode(s, int(n), tol).mu

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            mu = list(ex.map(one, degrees))
    else:
        mu = [one(n) for n in degrees]
    return DtNSpectrum(degrees, np.array(mu), tol, "numeric", s.name)


@dataclass
class SpectrumComparison:
    degrees: np.ndarray
    mu: np.ndarray
    reference: np.ndarray
    abs_diff: np.ndarray
    rel_diff: np.ndarray
    max_rel_diff: float
    tol: float
    verdict: str

    def rows(self):
        return [dict(degree=int(n), mu=float(a), reference=float(b), abs_diff=float(d),
                     rel_diff=float(e))
                for n, a, b, d, e in zip(self.degrees, self.mu, self.reference,
                                         self.abs_diff, self.rel_diff)]


def compare_spectra(a: DtNSpectrum, b: DtNSpectrum, tol: float = 1e-6) -> SpectrumComparison:
    """Per-degree differences of ``a`` against the reference ``b``.

    The verdict is ``"equal"`` when the largest relative difference over
    degrees >= 1 is within ``tol``, else ``"distinct"``.
    """
    if len(a.degrees) != len(b.degrees) or np.any(a.degrees != b.degrees):
        raise DegreeMismatch(f"degree ranges differ: {a.n_max} vs {b.n_max}")
    absd = np.abs(a.mu - b.mu)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(np.abs(b.mu) > 0, absd / np.abs(b.mu), np.where(absd == 0, 0.0, np.inf))
    mask = a.degrees >= 1
    mx = float(rel[mask].max()) if mask.any() else 0.0
    return SpectrumComparison(a.degrees, a.mu, b.mu, absd, rel, mx, tol,
                              "equal" if mx <= tol else "distinct")


def near_cloak_spectrum(epsilon, interior=(1.0, 1.0), n_max=DEFAULT_NMAX, tol=1e-10):
    return dtn_spectrum(near_cloak_scenario(epsilon, interior), n_max, tol, method="numeric")


# -- piecewise-analytic transmission oracles ------------------------------------

def _fill_interface_flux(fill, r_i, n):
    """``alpha R'/R`` of the regular interior solution at the interface."""
    ka, kb = _fill_pair(fill)
    lam = 0.5 * (-1 + math.sqrt(1 + 4 * n * (n + 1) * kb / ka))
    return ka * lam * r_i


def _harmonic_mu(r0, target_q, n, radius=2.0):
    """Harmonic ``u = r^n + b r^(-n-1)`` with ``r^2 u'/u = target_q`` at ``r0``;
    returns its DtN eigenvalue at ``radius``."""
    b = r0 ** (2 * n + 1) * (n * r0 - target_q) / ((n + 1) * r0 + target_q)
    R = radius
    num = n * R ** (n - 1) - (n + 1) * b * R ** (-n - 2)
    den = R ** n + b * R ** (-n - 1)
    return num / den


def analytic_near_cloak_mu(epsilon, interior, n):
    """Near-cloak eigenvalue from the harmonic solution in the pre-image ball."""
    # flux per unit potential is invariant under the radial change of variables
    return _harmonic_mu(float(epsilon), _fill_interface_flux(interior, 1.0, n), n)


def analytic_truncated_mu(family, params, delta, fill, n):
    """Eigenvalue of a singular scenario truncated at ``1 + delta`` with a fill."""
    q_star = _fill_interface_flux(fill, 1.0 + delta, n)
    if family == "cloak":
        # pre-image radius of 1 + delta under the blow-up map is 2 delta
        return _harmonic_mu(2.0 * delta, q_star, n)
    if family == "cylinder":
        rho = params["rho"]
        lam = math.sqrt(n * (n + 1)) / rho
        k = rho * rho * lam
        w = (k - q_star) / (k + q_star)
        B = w * delta ** (2 * lam)
        return k * (1 - B) / (1 + B) / 4.0
    raise KeyError(family)


# -- invisibility and flux diagnostics ----------------------------------------------

@dataclass
class InvisibilityReport:
    rows: list  # dicts: delta, fill, degree, mu
    spreads: dict  # (delta, degree) -> spread across fills
    deltas: tuple
    degrees: tuple
    fills: tuple

    def spread_sequence(self, degree=1):
        return [self.spreads[(d, degree)] for d in self.deltas]

    def decreasing(self, degree=1):
        seq = self.spread_sequence(degree)
        return all(b < a for a, b in zip(seq, seq[1:]))


def interior_invisibility_test(s: RadialScenario, fills: Sequence, deltas=INVISIBILITY_DELTAS,
                               degrees=(1,), tol=1e-10) -> InvisibilityReport:
    """Vary the interior fill of a truncated singular scenario and record the
    spread of the DtN eigenvalues across fills for each truncation."""
    if s.inner_condition != FROBENIUS:
        raise ValueError("interior invisibility needs a frobenius-singular scenario")
    for d in deltas:
        if not 0 < d < 0.5:
            raise ValueError(f"truncation delta must lie in (0, 0.5), got {d}")
    fills = tuple(fills)
    for f in fills:
        if min(_fill_pair(f)) <= 0:
            raise ValueError("fills must be positive")
    rows, spreads = [], {}
    for d in deltas:
        for n in degrees:
            vals = []
            for f in fills:
                mu = solve_mode(s.with_fill(f, d), int(n), tol).mu
                vals.append(mu)
                rows.append(dict(delta=d, fill=_fill_pair(f), degree=int(n), mu=mu))
            spreads[(d, int(n))] = float(max(vals) - min(vals))
    return InvisibilityReport(rows, spreads, tuple(deltas), tuple(int(n) for n in degrees), fills)


def flux_decay_profile(m: ModeSolution, radii):
    """``[(r, alpha(r) R'(r)), ...]`` along the given radii."""
    return [(float(r), float(m.flux(r))) for r in radii]


def loglog_slope(xs, ys):
    xs, ys = np.log(np.asarray(xs, float)), np.log(np.abs(np.asarray(ys, float)))
    return float(np.polyfit(xs, ys, 1)[0])


def fitted_exponent(m: ModeSolution, s_lo=1e-5, s_hi=1e-3, k=25):
    """Log-log slope of ``R`` against ``r - r_inner`` close to the inner radius."""
    s = np.geomspace(s_lo, s_hi, k)
    return loglog_slope(s, m.R(m.inner_radius + s))


def mode_energy(m: ModeSolution):
    """``int alpha R'^2 + n(n+1) beta R^2 dr`` over the solve interval."""
    nn = m.degree * (m.degree + 1)

    def integrand(r):
        q, lr = m._state(r)
        R = math.exp(lr - m._log_norm)
        a = m.alpha(r)
        return q * q / a * R * R + nn * m.beta(r) * R * R

    total = 0.0
    for seg in m._segments:
        lo = seg.piece.a
        val, _ = quad(integrand, lo, seg.piece.b, epsabs=0, epsrel=1e-12, limit=400)
        total += val
    return total
