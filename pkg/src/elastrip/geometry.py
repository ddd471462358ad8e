"""Rough-surface profiles, the flattening transform and ensemble sampling.

A profile is a finite real trigonometric series on the periodic cell,
confined to the slab m < f < M_sup.  The flattening map H sends the
reference strip (surface f0) to the sampled strip (surface f): it shifts
only the vertical coordinate, by a cutoff-weighted multiple of f - f0, so
its Jacobian is a rank-one update of the identity and it is the identity
near the top plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstraintError, SingularTransformError
from .params import StripGeometry

_LIPSCHITZ_SAFETY = 1.05


@dataclass(frozen=True)
class HarmonicTerm:
    """One cell-periodic term: c*cos(2pi j.x/Lambda) + s*sin(2pi j.x/Lambda)."""

    j1: int
    j2: int
    c: float = 0.0
    s: float = 0.0


@dataclass
class SurfaceProfile:
    """Periodized Lipschitz graph built from a finite trigonometric series."""

    offset: float
    terms: tuple[HarmonicTerm, ...]
    cell: tuple[float, float]
    L: float = field(init=False)
    f_min: float = field(init=False)
    f_max: float = field(init=False)

    def __post_init__(self):
        self.terms = tuple(self.terms)
        n = 256
        x1 = self.cell[0] * np.arange(n) / n
        x2 = self.cell[1] * np.arange(n) / n
        X1, X2 = np.meshgrid(x1, x2, indexing="ij")
        f = self.values(X1, X2)
        g1, g2 = self.gradients(X1, X2)
        self.f_min = float(f.min())
        self.f_max = float(f.max())
        sup_grad = float(np.sqrt(g1**2 + g2**2).max())
        self.L = _LIPSCHITZ_SAFETY * sup_grad if sup_grad > 0 else 0.0

    def _phases(self, x1, x2):
        for t in self.terms:
            yield t, 2 * np.pi * (t.j1 * np.asarray(x1) / self.cell[0]
                                  + t.j2 * np.asarray(x2) / self.cell[1])

    def values(self, x1, x2):
        out = np.full(np.broadcast_shapes(np.shape(x1), np.shape(x2)), self.offset, dtype=float)
        for t, ph in self._phases(x1, x2):
            out = out + t.c * np.cos(ph) + t.s * np.sin(ph)
        return out

    def gradients(self, x1, x2):
        shape = np.broadcast_shapes(np.shape(x1), np.shape(x2))
        g1 = np.zeros(shape)
        g2 = np.zeros(shape)
        for t, ph in self._phases(x1, x2):
            d = -t.c * np.sin(ph) + t.s * np.cos(ph)
            g1 = g1 + d * 2 * np.pi * t.j1 / self.cell[0]
            g2 = g2 + d * 2 * np.pi * t.j2 / self.cell[1]
        return g1, g2

    def is_flat(self) -> bool:
        return all(t.c == 0 and t.s == 0 for t in self.terms)

    def sup_distance_1inf(self, other: "SurfaceProfile", n: int = 256) -> float:
        """sup|f - f0| + sup|grad f - grad f0| on an evaluation grid."""
        x1 = self.cell[0] * np.arange(n) / n
        x2 = self.cell[1] * np.arange(n) / n
        X1, X2 = np.meshgrid(x1, x2, indexing="ij")
        dv = np.abs(self.values(X1, X2) - other.values(X1, X2)).max()
        g1a, g2a = self.gradients(X1, X2)
        g1b, g2b = other.gradients(X1, X2)
        dg = np.sqrt((g1a - g1b) ** 2 + (g2a - g2b) ** 2).max()
        return float(dv + dg)


def make_profile(offset: float, terms, geom: StripGeometry,
                 eval_factor: int = 8, solver_n: int = 32) -> SurfaceProfile:
    """Build a profile and verify slab containment on a fine evaluation grid."""
    prof = SurfaceProfile(offset=float(offset),
                          terms=tuple(HarmonicTerm(*t) if not isinstance(t, HarmonicTerm) else t
                                      for t in terms),
                          cell=geom.cell)
    n = max(256, eval_factor * solver_n)
    x1 = geom.cell[0] * np.arange(n) / n
    x2 = geom.cell[1] * np.arange(n) / n
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    f = prof.values(X1, X2)
    if f.min() <= geom.m or f.max() >= geom.M_sup:
        k = np.unravel_index(int(np.argmax(np.maximum(geom.m - f, f - geom.M_sup))), f.shape)
        raise ConstraintError(
            f"profile leaves the slab ({geom.m}, {geom.M_sup}): "
            f"f({x1[k[0]]:.4f}, {x2[k[1]]:.4f}) = {f[k]:.6f}"
        )
    return prof


@dataclass(frozen=True)
class CutoffFn:
    """Piecewise-linear vertical cutoff: 1 on [0, delta], 0 beyond gamma_gap.

    alpha(x) = 1 for x <= delta, descends linearly to 0 at x = gamma_gap.
    Slope magnitude 1/(gamma_gap - delta) < 1/(gamma_gap - 2*delta) for
    delta < gamma_gap/2, which is the admissibility margin.
    """

    delta: float
    gamma_gap: float

    def __post_init__(self):
        if not (0 < self.delta < self.gamma_gap / 2):
            raise ConstraintError(
                f"need 0 < delta < gamma_gap/2, got delta={self.delta}, gap={self.gamma_gap}"
            )

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        t = (self.gamma_gap - x) / (self.gamma_gap - self.delta)
        return np.clip(t, 0.0, 1.0)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x > self.delta) & (x < self.gamma_gap)
        return np.where(inside, -1.0 / (self.gamma_gap - self.delta), 0.0)


@dataclass
class TransformData:
    """Pointwise transform data: image, Jacobian, determinant, inverse."""

    x: np.ndarray
    J: np.ndarray
    det_J: float
    J_inv: np.ndarray


def transform_fields(y1, y2, y3, f0: SurfaceProfile, f: SurfaceProfile, cutoff: CutoffFn):
    """Vectorized transform: x3, J-row (J1, J2, J3) and det at broadcastable points.

    H(y) = y + alpha(y3 - f0(y')) * (f(y') - f0(y')) * e3; the Jacobian is
    I + e3 (J1, J2, J3) with det = 1 + J3.
    """
    f0v = f0.values(y1, y2)
    fv = f.values(y1, y2)
    df = fv - f0v
    arg = np.asarray(y3) - f0v
    a = cutoff(arg)
    ap = cutoff.derivative(arg)
    g01, g02 = f0.gradients(y1, y2)
    g1, g2 = f.gradients(y1, y2)
    J1 = a * (g1 - g01) - ap * g01 * df
    J2 = a * (g2 - g02) - ap * g02 * df
    J3 = ap * df
    x3 = np.asarray(y3) + a * df
    return x3, J1, J2, J3


def transform_map(y, f0: SurfaceProfile, f: SurfaceProfile, cutoff: CutoffFn) -> TransformData:
    """Transform one point; raises if the Jacobian is singular (|J3| >= 1)."""
    y = np.asarray(y, dtype=float)
    x3, J1, J2, J3 = transform_fields(y[0], y[1], y[2], f0, f, cutoff)
    J1, J2, J3 = float(J1), float(J2), float(J3)
    if abs(J3) >= 1:
        raise SingularTransformError(
            f"|J3| = {abs(J3):.4f} >= 1 at y = {tuple(y)}; "
            "surface amplitude too large for this cutoff"
        )
    J = np.eye(3)
    J[2, 0] += J1
    J[2, 1] += J2
    J[2, 2] += J3
    det = 1.0 + J3
    J_inv = np.eye(3)
    J_inv[2, 0] -= J1 / det
    J_inv[2, 1] -= J2 / det
    J_inv[2, 2] = 1.0 / det
    x = np.array([y[0], y[1], float(x3)])
    return TransformData(x=x, J=J, det_J=det, J_inv=J_inv)


def invert_vertical(x3, y1, y2, f0: SurfaceProfile, f: SurfaceProfile,
                    cutoff: CutoffFn, h: float, n_iter: int = 80):
    """Solve x3 = y3 + alpha(y3 - f0)(f - f0) for y3 by monotone bisection.

    Vectorized over broadcastable point arrays; the map is strictly
    increasing in y3 because |J3| < 1.
    """
    f0v = f0.values(y1, y2)
    lo = np.broadcast_to(f0v, np.shape(x3)).copy()
    hi = np.full(np.shape(x3), h, dtype=float)
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        x_mid, _, _, _ = transform_fields(y1, y2, mid, f0, f, cutoff)
        go_up = x_mid < np.asarray(x3)
        lo = np.where(go_up, mid, lo)
        hi = np.where(go_up, hi, mid)
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class CoefficientLaw:
    """Uniform law on surface harmonics: amplitudes in [-amp_j, amp_j] per term.

    ``bands`` lists (j1, j2, max_amplitude).  The analytic worst case of
    ||f - f0||_{1,inf} over the law's support is
    sum_j 2*|a_j| (1 + 2 pi |j| / Lambda) (cos and sin parts both drawn).
    """

    bands: tuple[tuple[int, int, float], ...]

    def worst_case_1inf(self, cell) -> float:
        total = 0.0
        for j1, j2, amp in self.bands:
            kmag = 2 * np.pi * math.hypot(j1 / cell[0], j2 / cell[1])
            total += 2 * amp * (1 + kmag)
        return total


@dataclass(frozen=True)
class SourceSpec:
    """Random-source family parameters: vertical bump position band and scale."""

    amplitude: float = 1.0
    n_terms: int = 2
    max_mode: int = 1


@dataclass
class RandomSample:
    """One draw of the ensemble: a surface and a reference-strip source."""

    surface: SurfaceProfile
    source: "object"
    sample_id: int
    rng_stream: tuple[int, int]


def _sample_rng(seed: int, sample_id: int) -> np.random.Generator:
    # counter-based stream: independent of draw order across samples
    return np.random.default_rng(np.random.Philox(key=(seed << 32) + sample_id))


def sample_ensemble(seed: int, n: int, M0: float, law: CoefficientLaw,
                    geom: StripGeometry, f0: SurfaceProfile,
                    source_spec: SourceSpec | None = None,
                    max_retries: int = 100) -> list[RandomSample]:
    """Draw n admissible samples; rejection-resample out-of-class surfaces."""
    from .sources import BumpSource  # local import to avoid a cycle

    if n <= 0:
        raise ConstraintError("ensemble size must be positive")
    source_spec = source_spec or SourceSpec()
    samples = []
    for sample_id in range(n):
        rng = _sample_rng(seed, sample_id)
        surface = None
        for _ in range(max_retries):
            terms = []
            for j1, j2, amp in law.bands:
                c, s = rng.uniform(-amp, amp, size=2)
                terms.append(HarmonicTerm(j1, j2, c, s))
            cand = SurfaceProfile(offset=f0.offset, terms=tuple(terms), cell=geom.cell)
            in_slab = geom.m < cand.f_min and cand.f_max < geom.M_sup
            if in_slab and cand.sup_distance_1inf(f0) <= M0:
                surface = cand
                break
        if surface is None:
            raise ConstraintError(
                f"sample {sample_id}: no admissible surface in {max_retries} retries"
            )
        source = BumpSource.random(rng, geom, f0, spec=source_spec)
        samples.append(RandomSample(surface=surface, source=source,
                                    sample_id=sample_id, rng_stream=(seed, sample_id)))
    return samples
