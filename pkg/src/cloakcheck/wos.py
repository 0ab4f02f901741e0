"""Walk-on-spheres estimates of harmonic functions and hitting probabilities.

Walks are simulated in blocks of ``BLOCK`` paths, vectorized with numpy.
Block ``k`` draws from a Philox stream keyed by ``(seed, k)``; at every step
each walk in the block consumes its own row of the draw, so a walk's path
depends only on ``(seed, walk index)`` and never on thread count.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from .errors import NonConvergence
from .expr import Expression

BLOCK = 4096
MAX_STEPS = 10 ** 6
SHELL_FACTOR = 1e-4


@dataclass(frozen=True)
class WalkEstimate:
    mean: float
    stderr: float
    n_samples: int
    seed: int
    eps_shell: float

    def to_json(self):
        return json.dumps({"mean": self.mean, "stderr": self.stderr, "n": self.n_samples,
                           "seed": self.seed, "eps_shell": self.eps_shell})

    def within(self, value, k=3.0):
        return abs(self.mean - value) <= k * self.stderr


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    @property
    def dim(self):
        return len(self.center)


@dataclass(frozen=True)
class BoundaryFunction:
    """Boundary data ``f`` with an optional closed-form harmonic extension."""

    values: Callable
    extension: Optional[Callable] = None
    bounds: tuple = (-math.inf, math.inf)
    name: str = "f"

    def __call__(self, pts):
        return np.asarray(self.values(pts), dtype=float)


def constant_data(c=1.0):
    c = float(c)
    const = lambda p: np.full(len(np.atleast_2d(p)), c)  # noqa: E731
    return BoundaryFunction(const, const, (c, c), f"const({c})")


def dipole_data(domain: Ball, direction=None, amplitude=1.0):
    """``f = amplitude * <e, x - c>/R`` on the sphere; extends linearly inside."""
    c = np.asarray(domain.center, dtype=float)
    e = np.zeros(domain.dim) if direction is None else np.asarray(direction, dtype=float)
    if direction is None:
        e[0] = 1.0
    e = e / np.linalg.norm(e)
    R, a = float(domain.radius), float(amplitude)
    fn = lambda p: a * ((np.atleast_2d(p) - c) @ e) / R  # noqa: E731
    return BoundaryFunction(fn, fn, (-abs(a), abs(a)), f"dipole({a})")


def expression_data(source, params=None):
    """Boundary data from an expression in ``x, y, z, r, th, ph``."""
    from .expr import coordinate_values

    ex = Expression(source, params)
    return BoundaryFunction(lambda p: ex(**coordinate_values(np.atleast_2d(p))), name=source)


@dataclass(frozen=True)
class HittingQuery:
    start: tuple
    target: Ball
    domain: Ball
    eps_shell: Optional[float] = None

    def __post_init__(self):
        x = np.asarray(self.start, dtype=float)
        yc = np.asarray(self.target.center, dtype=float)
        oc = np.asarray(self.domain.center, dtype=float)
        if not (len(x) == len(yc) == len(oc)):
            raise ValueError("start, target and domain dimensions differ")
        if np.linalg.norm(yc - oc) + self.target.radius >= self.domain.radius:
            raise ValueError("target ball must lie strictly inside the domain")
        if np.linalg.norm(x - oc) >= self.domain.radius:
            raise ValueError("start point must lie inside the domain")

    @property
    def shell(self):
        return self.eps_shell if self.eps_shell is not None else SHELL_FACTOR * self.domain.radius


def _stream(seed, block):
    return np.random.Generator(np.random.Philox(key=[int(seed) & (2 ** 64 - 1), int(block)]))


def _directions(rng, m, dim):
    u = rng.standard_normal((m, dim))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def _run_block(step_radius, classify, x0, m, dim, seed, block, max_steps):
    """Walk ``m`` paths from ``x0``; ``classify`` maps final positions to scores."""
    rng = _stream(seed, block)
    pos = np.tile(np.asarray(x0, dtype=float), (m, 1))
    score = np.empty(m)
    active = np.arange(m)
    for _ in range(max_steps):
        p = pos[active]
        rad, done = step_radius(p)
        if done.any():
            score[active[done]] = classify(p[done])
            keep = ~done
            active, p, rad = active[keep], p[keep], rad[keep]
        if active.size == 0:
            return score
        # full-block draw: walk i always consumes row i, whoever is still active
        pos[active] = p + rad[:, None] * _directions(rng, m, dim)[active]
    raise NonConvergence(f"{active.size} walks exceeded the step budget of {max_steps}")


def _estimate(step_radius, classify, x0, n, seed, eps, threads, max_steps):
    n = int(n)
    if n < 2:
        raise ValueError("need at least two walks")
    dim = len(x0)
    sizes = [min(BLOCK, n - k) for k in range(0, n, BLOCK)]
    jobs = [(s, b) for b, s in enumerate(sizes)]

    def work(job):
        return _run_block(step_radius, classify, x0, job[0], dim, seed, job[1], max_steps)

    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(work, jobs))
    else:
        parts = [work(j) for j in jobs]
    vals = np.concatenate(parts)
    mean = math.fsum(vals) / n
    var = math.fsum((vals - mean) ** 2) / (n - 1)
    return WalkEstimate(float(mean), math.sqrt(var / n), n, int(seed), float(eps))


def wos_harmonic(domain: Ball, f, x, n, seed=0, eps_shell=None, threads=1, max_steps=MAX_STEPS):
    """Estimate the harmonic extension of ``f`` at ``x`` (Kakutani's formula).

    Walks stop inside a shell of width ``eps_shell`` (default ``1e-4 R``)
    and score ``f`` at the radial projection onto the sphere.
    """
    c = np.asarray(domain.center, dtype=float)
    R = float(domain.radius)
    x = np.asarray(x, dtype=float)
    if len(x) != domain.dim:
        raise ValueError("point and domain dimensions differ")
    if np.linalg.norm(x - c) >= R:
        raise ValueError("x must lie strictly inside the domain")
    eps = SHELL_FACTOR * R if eps_shell is None else float(eps_shell)

    def step(p):
        d = R - np.linalg.norm(p - c, axis=1)
        return d, d < eps

    def classify(p):
        q = p - c
        return f(c + R * q / np.linalg.norm(q, axis=1, keepdims=True))

    return _estimate(step, classify, x, n, seed, eps, threads, max_steps)


def hitting_probability(q: HittingQuery, n, seed=0, threads=1, max_steps=MAX_STEPS):
    """Probability that Brownian motion from ``q.start`` reaches the target
    ball before leaving the domain.

    Each step uses the largest ball avoiding both spheres; a walk is
    absorbed by whichever shell it enters first.
    """
    oc = np.asarray(q.domain.center, dtype=float)
    yc = np.asarray(q.target.center, dtype=float)
    R, a, eps = float(q.domain.radius), float(q.target.radius), float(q.shell)

    def step(p):
        d_out = R - np.linalg.norm(p - oc, axis=1)
        d_in = np.linalg.norm(p - yc, axis=1) - a
        return np.minimum(d_out, d_in), (d_out < eps) | (d_in < eps)

    def classify(p):
        d_out = R - np.linalg.norm(p - oc, axis=1)
        d_in = np.linalg.norm(p - yc, axis=1) - a
        return (d_in <= d_out).astype(float)

    return _estimate(step, classify, np.asarray(q.start, dtype=float), n, seed, eps,
                     threads, max_steps)


def concentric_hitting(a, b, d, dim=3):
    """Closed-form hitting probability of the sphere ``|x| = a`` before ``|x| = b``."""
    if d <= a:
        return 1.0
    if dim == 2:
        return math.log(b / d) / math.log(b / a)
    k = dim - 2
    return (d ** -k - b ** -k) / (a ** -k - b ** -k)


@dataclass(frozen=True)
class UniquenessReport:
    x: tuple
    puncture: tuple
    estimate: WalkEstimate
    exact: Optional[float]
    shells: tuple
    hitting: tuple
    hitting_exact: tuple
    bounds: tuple
    holds: tuple

    def to_dict(self):
        d = asdict(self)
        d["estimate"] = asdict(self.estimate)
        d["hitting"] = [asdict(h) for h in self.hitting]
        return d


def uniqueness_demo(x, puncture, f: BoundaryFunction = None, n=100_000, seed=0,
                    shells=(0.1, 0.01), radius=2.0, eps_shell=None, threads=1):
    """Compare the walk estimate at ``x`` with the harmonic extension of ``f``
    and bound the mass the walks could lose to small balls around the puncture.

    For each shell radius ``a`` the bound is ``3 stderr + P(hit B(y, a)) max|f|``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(puncture, dtype=float)
    dom = Ball(tuple(0.0 * x), float(radius))
    f = f if f is not None else dipole_data(dom)
    est = wos_harmonic(dom, f, x, n, seed, eps_shell, threads)
    exact = float(f.extension(x[None])[0]) if f.extension is not None else None
    fmax = max(abs(f.bounds[0]), abs(f.bounds[1]))
    hits, closed, bounds, holds = [], [], [], []
    for i, a in enumerate(shells):
        qy = HittingQuery(tuple(x), Ball(tuple(y), a), dom, eps_shell=1e-3 * a)
        h = hitting_probability(qy, n, seed + 1 + i, threads)
        hits.append(h)
        # concentric barrier about y inside the ball of radius R + |y|
        closed.append(concentric_hitting(a, radius + np.linalg.norm(y), np.linalg.norm(x - y),
                                         len(x)))
        bound = 3 * est.stderr + h.mean * fmax
        bounds.append(bound)
        holds.append(exact is None or abs(est.mean - exact) <= bound)
    return UniquenessReport(tuple(x), tuple(y), est, exact, tuple(shells), tuple(hits),
                            tuple(closed), tuple(bounds), tuple(holds))


def loglog_slope(a, p):
    return float(np.polyfit(np.log(a), np.log(p), 1)[0])


def shrinking_target_sweep(radii=(0.1, 0.01, 0.001), d=0.5, b=2.0, n=100_000, seed=0,
                           shell_ratio=1e-3, threads=1):
    """Hitting estimates for concentric targets of shrinking radius.

    The absorption shell scales with the target (``shell_ratio * a``).
    """
    out = []
    for i, a in enumerate(radii):
        q = HittingQuery((d, 0.0, 0.0), Ball((0.0, 0.0, 0.0), a), Ball((0.0, 0.0, 0.0), b),
                         eps_shell=shell_ratio * a)
        out.append(hitting_probability(q, n, seed + i, threads))
    return out
