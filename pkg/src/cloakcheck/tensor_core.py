"""Conductivity tensors, Riemannian metrics and their dictionary.

Points are always Cartesian.  A field's ``coords`` tag says in which basis
the *matrix* is expressed:

``"cartesian"``
    the plain tensor ``sigma^{jk}``.
``"spherical"``
    components against the coordinates ``(r, th, ph)`` in 3D (``th`` polar
    angle, ``ph`` azimuth) or ``(r, th)`` in 2D, *including* the volume
    density factor ``det(dx/dq)``.  In this convention the homogeneous
    conductivity reads ``diag(r^2 sin th, sin th, 1/sin th)`` and the
    conductivity equation keeps its divergence form in the coordinates.

Fields evaluate on a single point ``(dim,)`` or a batch ``(N, dim)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    CoordinateSingularity,
    DimensionError,
    NonInvertibleMetric,
    SingularConductivity,
)
from .expr import Expression, coordinate_values

EPS_PD = 1e-10
EPS_AXIS = 1e-9

CARTESIAN = "cartesian"
SPHERICAL = "spherical"


def _batch(points, dim):
    p = np.asarray(points, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    if p.shape[-1] != dim:
        raise DimensionError(f"expected {dim}D points, got shape {np.shape(points)}")
    return p, single


@dataclass(frozen=True)
class SymmetricTensorField:
    """Pointwise symmetric positive semi-definite matrix field.

    ``fn`` maps a batch of Cartesian points ``(N, dim)`` to ``(N, dim, dim)``.
    ``entries`` keeps the expression sources when the field was built from
    text, so it can be written back to JSON.
    """

    dim: int
    coords: str
    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    entries: Optional[tuple] = None
    params: Optional[dict] = None

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise DimensionError(f"dim must be 2 or 3, got {self.dim}")
        if self.coords not in (CARTESIAN, SPHERICAL):
            raise ValueError(f"unknown coords {self.coords!r}")

    def __call__(self, points):
        p, single = _batch(points, self.dim)
        out = np.asarray(self.fn(p), dtype=float)
        return out[0] if single else out

    eval = __call__

    @classmethod
    def constant(cls, matrix, coords=CARTESIAN):
        m = np.array(matrix, dtype=float)
        dim = m.shape[0]
        return cls(dim, coords, lambda p: np.broadcast_to(m, (len(p), dim, dim)).copy(),
                   entries=tuple(tuple(repr(float(v)) for v in row) for row in m))

    @classmethod
    def identity(cls, dim):
        return cls.constant(np.eye(dim))

    @classmethod
    def from_expressions(cls, entries, coords=CARTESIAN, params=None):
        """Build a field from a square nested list of expression strings."""
        dim = len(entries)
        if any(len(row) != dim for row in entries):
            raise DimensionError("entries must be a square matrix")
        exprs = [[Expression(entries[j][k], params) for k in range(dim)] for j in range(dim)]

        def fn(p):
            v = coordinate_values(p)
            out = np.empty((len(p), dim, dim))
            for j in range(dim):
                for k in range(dim):
                    out[:, j, k] = exprs[j][k](**v)
            return out

        return cls(dim, coords, fn,
                   entries=tuple(tuple(str(e) for e in row) for row in entries),
                   params=dict(params or {}))

    def to_json(self):
        if self.entries is None:
            raise ValueError("field was not built from expressions; cannot serialize")
        doc = {"coords": self.coords, "dim": self.dim,
               "entries": [list(row) for row in self.entries]}
        if self.params:
            doc["params"] = self.params
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text) if isinstance(text, str) else text
        field_ = cls.from_expressions(doc["entries"], doc.get("coords", CARTESIAN),
                                      doc.get("params"))
        if field_.dim != doc.get("dim", field_.dim):
            raise DimensionError("declared dim does not match entries")
        return field_

    def check(self, points, psd_tol=1e-12, sym_tol=1e-14):
        """Return the worst asymmetry and PSD defect over ``points``.

        Raises ``ValueError`` if either invariant is violated.
        """
        m = np.atleast_3d(self(np.atleast_2d(points)))
        scale = np.maximum(np.abs(m).max(axis=(1, 2)), np.finfo(float).tiny)
        asym = np.abs(m - np.swapaxes(m, 1, 2)).max(axis=(1, 2)) / scale
        eig = np.linalg.eigvalsh(0.5 * (m + np.swapaxes(m, 1, 2)))
        trace = np.trace(m, axis1=1, axis2=2)
        defect = -eig[:, 0] / np.maximum(np.abs(trace), np.finfo(float).tiny)
        if asym.max() > sym_tol:
            raise ValueError(f"field not symmetric (relative asymmetry {asym.max():.3e})")
        if defect.max() > psd_tol:
            raise ValueError(f"field not positive semi-definite (defect {defect.max():.3e})")
        return float(asym.max()), float(max(defect.max(), 0.0))


@dataclass(frozen=True)
class MetricField:
    """Riemannian metric ``g_{jk}``, symmetric positive definite."""

    dim: int
    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    coords: str = CARTESIAN
    eps_pd: float = EPS_PD

    def __call__(self, points):
        p, single = _batch(points, self.dim)
        out = np.asarray(self.fn(p), dtype=float)
        return out[0] if single else out

    eval = __call__

    @classmethod
    def constant(cls, matrix, coords=CARTESIAN):
        m = np.array(matrix, dtype=float)
        return cls(m.shape[0], lambda p: np.broadcast_to(m, (len(p),) + m.shape).copy(), coords)

    @classmethod
    def from_expressions(cls, entries, coords=CARTESIAN, params=None):
        tf = SymmetricTensorField.from_expressions(entries, coords, params)
        return cls(tf.dim, tf.fn, coords)

    def check(self, points):
        m = np.atleast_3d(self(np.atleast_2d(points)))
        eig = np.linalg.eigvalsh(m)
        if eig[:, 0].min() < self.eps_pd:
            raise ValueError(f"metric not positive definite (min eigenvalue {eig[:, 0].min():.3e})")
        return float(eig[:, 0].min())


@dataclass(frozen=True)
class DomainSpec:
    """Geometric domain.  ``kind`` is one of ball, annulus, punctured_ball, disk."""

    kind: str
    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 1.0
    r_in: float = 0.0
    puncture: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ("ball", "annulus", "punctured_ball", "disk"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.kind == "annulus" and not (0 <= self.r_in < self.radius):
            raise ValueError("annulus needs 0 <= r_in < r_out")

    @classmethod
    def ball(cls, radius, center=(0.0, 0.0, 0.0)):
        return cls("ball", tuple(center), radius)

    @classmethod
    def annulus(cls, r_in, r_out, center=(0.0, 0.0, 0.0)):
        return cls("annulus", tuple(center), r_out, r_in)

    @classmethod
    def punctured_ball(cls, radius, puncture=(0.0, 0.0, 0.0), center=(0.0, 0.0, 0.0)):
        return cls("punctured_ball", tuple(center), radius, puncture=tuple(puncture))

    @classmethod
    def disk(cls, radius, center=(0.0, 0.0)):
        return cls("disk", tuple(center), radius)

    @property
    def dim(self):
        return len(self.center)

    @property
    def r_out(self):
        return self.radius

    def contains(self, points, tol=1e-12):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        d = np.linalg.norm(p - np.asarray(self.center), axis=-1)
        inside = d <= self.radius * (1 + tol)
        if self.kind == "annulus":
            inside &= d > self.r_in
        elif self.kind == "punctured_ball":
            inside &= np.linalg.norm(p - np.asarray(self.puncture), axis=-1) > 0
        return inside


# -- sigma <-> g dictionary -------------------------------------------------

def sigma_matrix_from_metric(g):
    """``det(g)^{1/2} g^{-1}`` for a single matrix or a batch."""
    g = np.asarray(g, dtype=float)
    if g.shape[-1] < 3:
        raise DimensionError("the conductivity/metric dictionary needs dim >= 3")
    det = np.linalg.det(g)
    if np.any(det <= 0):
        raise NonInvertibleMetric(f"det(g) = {np.min(det):.3e} <= 0")
    return np.sqrt(det)[..., None, None] * np.linalg.inv(g)


def metric_matrix_from_sigma(sigma):
    """``det(sigma)^{1/(n-2)} sigma^{-1}``, the exact inverse of the above."""
    s = np.asarray(sigma, dtype=float)
    n = s.shape[-1]
    if n < 3:
        raise DimensionError("the conductivity/metric dictionary needs dim >= 3")
    det = np.linalg.det(s)
    if np.any(det <= 0):
        raise SingularConductivity(f"det(sigma) = {np.min(det):.3e} <= 0")
    return (det ** (1.0 / (n - 2)))[..., None, None] * np.linalg.inv(s)


def sigma_from_metric(g: MetricField) -> SymmetricTensorField:
    if g.dim < 3:
        raise DimensionError("sigma_from_metric needs dim >= 3")
    return SymmetricTensorField(g.dim, g.coords, lambda p: sigma_matrix_from_metric(g.fn(p)))


def metric_from_sigma(sigma: SymmetricTensorField) -> MetricField:
    if sigma.dim < 3:
        raise DimensionError("metric_from_sigma needs dim >= 3")
    return MetricField(sigma.dim, lambda p: metric_matrix_from_sigma(sigma.fn(p)), sigma.coords)


# -- coordinate representations ----------------------------------------------

def coordinate_jacobian(points, eps_axis=EPS_AXIS):
    """Jacobian ``dx/dq`` of the spherical (3D) or polar (2D) chart.

    Columns are ordered ``(r, th, ph)`` / ``(r, th)``.  Returns ``(J, det J)``
    with batch leading dimension.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    v = coordinate_values(p)
    r, th = v["r"], v["th"]
    if np.any(r < eps_axis):
        raise CoordinateSingularity("point at (or too close to) the origin")
    if p.shape[-1] == 2:
        c, s = np.cos(th), np.sin(th)
        J = np.stack([np.stack([c, -r * s], -1), np.stack([s, r * c], -1)], -2)
        return J, r
    st, ct = np.sin(th), np.cos(th)
    if np.any(st < eps_axis):
        raise CoordinateSingularity("point on (or too close to) the polar axis")
    cp, sp_ = np.cos(v["ph"]), np.sin(v["ph"])
    J = np.empty((len(p), 3, 3))
    J[:, :, 0] = np.stack([st * cp, st * sp_, ct], -1)
    J[:, :, 1] = (r[:, None] * np.stack([ct * cp, ct * sp_, -st], -1))
    J[:, :, 2] = (r[:, None] * np.stack([-st * sp_, st * cp, np.zeros_like(st)], -1))
    return J, r * r * st


def spherical_to_cartesian(field_: SymmetricTensorField, eps_axis=EPS_AXIS) -> SymmetricTensorField:
    """Re-express a density-weighted spherical field as a plain Cartesian tensor.

    ``sigma_cart = J sigma_sph J^T / det J`` with ``J = dx/dq``.
    """
    if field_.coords != SPHERICAL:
        raise ValueError("field is not in spherical coordinates")

    def fn(p):
        J, det = coordinate_jacobian(p, eps_axis)
        m = np.einsum("nij,njk,nlk->nil", J, field_.fn(p), J) / det[:, None, None]
        return 0.5 * (m + np.swapaxes(m, 1, 2))

    return SymmetricTensorField(field_.dim, CARTESIAN, fn)


def cartesian_to_spherical(field_: SymmetricTensorField, eps_axis=EPS_AXIS) -> SymmetricTensorField:
    if field_.coords != CARTESIAN:
        raise ValueError("field is not in Cartesian coordinates")

    def fn(p):
        J, det = coordinate_jacobian(p, eps_axis)
        Jinv = np.linalg.inv(J)
        m = np.einsum("nij,njk,nlk->nil", Jinv, field_.fn(p), Jinv) * det[:, None, None]
        return 0.5 * (m + np.swapaxes(m, 1, 2))

    return SymmetricTensorField(field_.dim, SPHERICAL, fn)


def homogeneous_spherical(dim=3):
    """The unit conductivity written in density-weighted spherical form."""
    if dim == 3:
        return SymmetricTensorField.from_expressions(
            [["r^2*sin(th)", "0", "0"], ["0", "sin(th)", "0"], ["0", "0", "1/sin(th)"]],
            SPHERICAL)
    return SymmetricTensorField.from_expressions([["r", "0"], ["0", "1/r"]], SPHERICAL)
