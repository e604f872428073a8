"""Polyhedral convex Lipschitz functions with exact subdifferential geometry.

The central object is :class:`MaxAffineFunction` f(x) = max_i <a_i, x> + b_i.
On top of it this module provides

* exact subdifferentials (:func:`subdifferential`) and exact diameters of
  subdifferential images of balls (:func:`diam_subdiff_ball`),
* the near-singularity set scan and its greedy covering
  (:func:`covering_number_sigma`), audited against the count bound
  48 d^2 (R+4eta)^{d-1} Lip / (alpha eta^{d-1}),
* the integral diameter estimate with its bound
  48 d^2 beta_d 2^{3d+q-1} (q/(q-1)) (R+4eta)^{d-1} Lip^q eta,
* the L1-gradient diameter inequality check (:func:`verify_lemma_diam_l1`),
* Lipschitz extension by the envelope of sampled supports,
* :func:`kink_ladder`, the worst-case function whose N evenly spaced kinks
  each carry a subdifferential jump of exactly 2L/N.

Exactness strategy: in 1D every quantity is computed from the upper envelope
of the affine pieces (slopes active on an interval are a contiguous run of
envelope slopes).  In 2D a fast kernel brackets the active set over each
ball between a probe-certified lower set and a pairwise-slack upper set;
query points whose brackets disagree are resolved exactly by enumerating
the finitely many candidate minimizers (tie-line intersections, tie-line /
circle crossings, per-piece circle minimizers) of the relevant max-affine
slack over the closed ball.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .geometry_measures import unit_ball_volume

__all__ = [
    "MaxAffineFunction",
    "SubdiffPolytope",
    "SingularSetReport",
    "subdifferential",
    "diam_subdiff_ball",
    "covering_number_sigma",
    "IntegralDiamEstimate",
    "integral_diam_estimate",
    "verify_lemma_diam_l1",
    "lipschitz_extension",
    "kink_ladder",
    "breakpoints_1d",
]

_TIE_TOL = 1e-12
_ALPHA_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class MaxAffineFunction:
    """f(x) = max_i <a_i, x> + b_i with at least one affine piece."""

    slopes: np.ndarray
    intercepts: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.slopes, dtype=float))
        b = np.atleast_1d(np.asarray(self.intercepts, dtype=float))
        if a.shape[0] != b.shape[0]:
            raise ValueError("slope/intercept count mismatch")
        if a.shape[0] == 0:
            raise ValueError("need at least one affine piece")
        if not (np.isfinite(a).all() and np.isfinite(b).all()):
            raise ValueError("pieces must be finite")
        object.__setattr__(self, "slopes", a)
        object.__setattr__(self, "intercepts", b)

    @property
    def dim(self) -> int:
        return self.slopes.shape[1]

    @property
    def n_pieces(self) -> int:
        return self.slopes.shape[0]

    @property
    def lip(self) -> float:
        return float(np.linalg.norm(self.slopes, axis=1).max())

    def piece_values(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return pts @ self.slopes.T + self.intercepts

    def __call__(self, points: np.ndarray):
        points = np.asarray(points, dtype=float)
        single = points.ndim <= 1
        vals = self.piece_values(points).max(axis=1)
        return float(vals[0]) if single else vals

    def gradient(self, points: np.ndarray) -> np.ndarray:
        """Slope of an argmax piece per point (any selection at ties)."""
        idx = np.argmax(self.piece_values(points), axis=1)
        return self.slopes[idx]

    @staticmethod
    def from_supports(points: np.ndarray, values: np.ndarray, slopes: np.ndarray) -> "MaxAffineFunction":
        """Envelope of supporting planes value + <slope, . - point>."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        g = np.atleast_2d(np.asarray(slopes, dtype=float))
        v = np.asarray(values, dtype=float)
        return MaxAffineFunction(g, v - (g * pts).sum(axis=1))

    def deduplicated(self) -> "MaxAffineFunction":
        rows = np.column_stack([self.slopes, self.intercepts])
        rows = np.unique(rows, axis=0)
        return MaxAffineFunction(rows[:, :-1], rows[:, -1])

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(",".join(f"a_{c + 1}" for c in range(self.dim)) + ",b\n")
            for a, b in zip(self.slopes, self.intercepts):
                fh.write(",".join(repr(float(x)) for x in a) + f",{float(b)!r}\n")

    @staticmethod
    def from_csv(path) -> "MaxAffineFunction":
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return MaxAffineFunction(rows[:, :-1], rows[:, -1])

    # internal: cached upper envelope for 1D queries --------------------
    def _envelope(self):
        if self.dim != 1:
            raise ValueError("envelope is a 1D structure")
        cached = self.__dict__.get("_env")
        if cached is not None:
            return cached
        order = np.lexsort((-self.intercepts, self.slopes[:, 0]))
        s = self.slopes[order, 0]
        b = self.intercepts[order]
        keep = np.ones(len(s), dtype=bool)
        keep[1:] = s[1:] > s[:-1]  # equal slopes: first (largest b) wins
        s, b = s[keep], b[keep]
        env_s, env_b, bp = [], [], []
        for a_i, b_i in zip(s, b):
            while env_s:
                x = (env_b[-1] - b_i) / (a_i - env_s[-1])
                if bp and x <= bp[-1]:
                    env_s.pop(), env_b.pop(), bp.pop()
                    continue
                env_s.append(a_i), env_b.append(b_i), bp.append(x)
                break
            else:
                env_s.append(a_i), env_b.append(b_i)
        env = (np.array(env_s), np.array(env_b), np.array(bp))
        object.__setattr__(self, "_env", env)
        return env


def breakpoints_1d(f: MaxAffineFunction) -> np.ndarray:
    """Kink locations of a 1D max-affine function, sorted ascending."""
    return f._envelope()[2].copy()


# ---------------------------------------------------------------------------
# subdifferential polytopes
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SubdiffPolytope:
    """Convex hull of finitely many slope vectors (subdifferential image)."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if v.shape[0] == 0:
            raise ValueError("empty polytope")
        object.__setattr__(self, "vertices", np.unique(v, axis=0))

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    def diam(self) -> float:
        return _pairwise_diam(self.vertices)

    def is_singleton(self, tol: float = 1e-10) -> bool:
        return self.diam() < tol

    def extreme_vertex(self, direction: np.ndarray) -> np.ndarray:
        """Vertex maximizing <direction, v>; lexicographic tie-break."""
        d = np.asarray(direction, dtype=float)
        scores = self.vertices @ d
        best = np.flatnonzero(scores >= scores.max() - 1e-14)
        tie = self.vertices[best]
        return tie[np.lexsort(tie.T[::-1])][-1].copy()

    def project(self, point: np.ndarray) -> tuple[np.ndarray, float]:
        """Closest point of the hull and its distance (d <= 2 exact)."""
        p = np.asarray(point, dtype=float)
        V = self.vertices
        if V.shape[0] == 1:
            return V[0].copy(), float(np.linalg.norm(p - V[0]))
        best_pt, best_d = None, np.inf
        for v in V:
            dist = float(np.linalg.norm(p - v))
            if dist < best_d:
                best_pt, best_d = v.copy(), dist
        for a in range(len(V)):
            for b in range(a + 1, len(V)):
                e = V[b] - V[a]
                ee = float(e @ e)
                if ee < 1e-30:
                    continue
                t = float(np.clip((p - V[a]) @ e / ee, 0.0, 1.0))
                cand = V[a] + t * e
                dist = float(np.linalg.norm(p - cand))
                if dist < best_d:
                    best_pt, best_d = cand, dist
        if self.dim == 2 and len(V) >= 3:
            for a in range(len(V)):
                for b in range(a + 1, len(V)):
                    for c in range(b + 1, len(V)):
                        M = np.column_stack([V[b] - V[a], V[c] - V[a]])
                        det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
                        if abs(det) < 1e-14:
                            continue
                        lam = np.linalg.solve(M, p - V[a])
                        if lam.min() >= -1e-12 and lam.sum() <= 1 + 1e-12:
                            return p.copy(), 0.0
        return best_pt, best_d

    def contains(self, point: np.ndarray, tol: float = 1e-8) -> bool:
        return self.project(point)[1] <= tol

    def min_norm_point(self) -> np.ndarray:
        return self.project(np.zeros(self.dim))[0]


def _pairwise_diam(vectors: np.ndarray) -> float:
    v = np.atleast_2d(vectors)
    if v.shape[0] <= 1:
        return 0.0
    d2 = ((v[:, None, :] - v[None, :, :]) ** 2).sum(-1)
    return float(np.sqrt(d2.max()))


def subdifferential(f: MaxAffineFunction, x: np.ndarray, tau: float = 0.0) -> SubdiffPolytope:
    """Hull of slopes of pieces within tau of the max at x (tau=0: exact)."""
    if tau < 0:
        raise ValueError("activity tolerance must be >= 0")
    vals = f.piece_values(x)[0]
    active = vals >= vals.max() - tau
    return SubdiffPolytope(f.slopes[active])


# ---------------------------------------------------------------------------
# active slopes over balls
# ---------------------------------------------------------------------------

def _active_run_1d(f: MaxAffineFunction, lo: np.ndarray, hi: np.ndarray):
    """Envelope index range [i_lo, i_hi] active on closed windows [lo, hi]."""
    env_s, _, bp = f._envelope()
    i_lo = np.searchsorted(bp, lo - _TIE_TOL, side="left")
    i_hi = np.searchsorted(bp, hi + _TIE_TOL, side="right")
    return env_s, i_lo, i_hi


def _ball_diams_1d(f: MaxAffineFunction, centers: np.ndarray, eta: float) -> np.ndarray:
    env_s, i_lo, i_hi = _active_run_1d(f, centers - eta, centers + eta)
    return env_s[i_hi] - env_s[i_lo]


_PROBE_CACHE: dict[int, np.ndarray] = {}


def _probe_directions() -> np.ndarray:
    probes = _PROBE_CACHE.get(2)
    if probes is None:
        rings = [np.zeros((1, 2))]
        for radius, count in ((1.0, 24), (0.62, 12), (0.31, 6)):
            ang = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False) + 0.37 / count
            rings.append(radius * np.stack([np.cos(ang), np.sin(ang)], axis=1))
        probes = np.vstack(rings)
        _PROBE_CACHE[2] = probes
    return probes


def _exact_ball_actives_2d(A: np.ndarray, B: np.ndarray, x: np.ndarray, eta: float) -> np.ndarray:
    """Exact active mask over the closed ball B(x, eta) for candidate pieces.

    Piece i is active iff min over the ball of (max_j f_j - f_i) <= tol.
    That max-affine slack attains its ball minimum at one of: the center, a
    tie-line/circle crossing, a triple-tie point, or a per-pair circle
    minimizer; all are enumerated below.
    """
    k = len(B)
    pts = [x]
    for j in range(k):
        for l in range(j + 1, k):
            n = A[j] - A[l]
            nn = float(n @ n)
            if nn < 1e-30:
                continue
            e = (B[l] - B[j]) - float(n @ x)
            h2 = eta * eta - e * e / nn
            if h2 >= -1e-18:
                h = math.sqrt(max(h2, 0.0))
                c0 = x + n * (e / nn)
                tv = np.array([-n[1], n[0]]) / math.sqrt(nn)
                pts.append(c0 + h * tv)
                pts.append(c0 - h * tv)
    for j in range(k):
        for l in range(j + 1, k):
            for m in range(l + 1, k):
                M = np.array([A[j] - A[l], A[j] - A[m]])
                det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
                if abs(det) < 1e-30:
                    continue
                z = np.linalg.solve(M, np.array([B[l] - B[j], B[m] - B[j]]))
                if (z - x) @ (z - x) <= eta * eta * (1 + 1e-9) + 1e-30:
                    pts.append(z)
    P = np.asarray(pts)
    V = P @ A.T + B
    slack = V.max(axis=1)[:, None] - V
    h_min = slack.min(axis=0)

    # per-ordered-pair circle minimizers of (f_j - f_i)
    diff = A[None, :, :] - A[:, None, :]          # diff[i, j] = A_j - A_i
    norms = np.sqrt((diff ** 2).sum(-1))
    ii, jj = np.nonzero(norms > 1e-15)
    if len(ii):
        Z = x[None, :] - eta * diff[ii, jj] / norms[ii, jj][:, None]
        VZ = Z @ A.T + B
        h_pair = VZ.max(axis=1) - VZ[np.arange(len(ii)), ii]
        np.minimum.at(h_min, ii, h_pair)
    return h_min <= _TIE_TOL


def _active_slopes_2d(f: MaxAffineFunction, x: np.ndarray, eta: float) -> np.ndarray:
    A, B = f.slopes, f.intercepts
    vals = A @ x + B
    gap = eta * np.sqrt((((A[:, None, :] - A[None, :, :]) ** 2)).sum(-1))
    upper = ((vals[:, None] - vals[None, :] + gap) >= -_TIE_TOL).all(axis=1)
    cand = np.flatnonzero(upper)
    if len(cand) == 1:
        return A[cand]
    active = _exact_ball_actives_2d(A[cand], B[cand], x, eta)
    return A[cand[active]]


def _ball_diams_2d(f: MaxAffineFunction, centers: np.ndarray, eta: float) -> np.ndarray:
    lo2, hi2, amb = _kernels.ball_activity_2d(
        f.slopes, f.intercepts, centers, eta, _probe_directions(), _TIE_TOL)
    diam = np.sqrt(hi2)
    for t in np.flatnonzero(amb):
        diam[t] = _pairwise_diam(_active_slopes_2d(f, centers[t], eta))
    return diam


def _ball_diams(f: MaxAffineFunction, centers: np.ndarray, eta: float) -> np.ndarray:
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if f.dim == 1:
        return _ball_diams_1d(f, centers[:, 0], eta)
    if f.dim == 2:
        return _ball_diams_2d(f, centers, eta)
    raise NotImplementedError("ball scans are implemented for d in {1, 2}")


def diam_subdiff_ball(f: MaxAffineFunction, x: np.ndarray, eta: float) -> float:
    """Exact diameter of the set of slopes active somewhere in B(x, eta)."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(_ball_diams(f, x[None, :], eta)[0])


# ---------------------------------------------------------------------------
# singular-set covering
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SingularSetReport:
    """Greedy 8-eta covering of the detected near-singularity set."""

    eta: float
    alpha: float
    R: float
    centers: np.ndarray
    count: int
    bound: float
    lip: float

    def __post_init__(self):
        if math.isnan(self.bound) or (self.centers.size and np.isnan(self.centers).any()):
            raise ValueError("NaN in singularity report")
        if self.alpha <= 2.0 * self.lip and self.count > self.bound:
            raise AssertionError(
                f"covering count {self.count} exceeds the bound {self.bound}")

    def to_csv(self, path):
        d = self.centers.shape[1] if self.centers.size else 1
        with open(path, "w") as fh:
            fh.write(",".join(f"x_{c + 1}" for c in range(d)) + "\n")
            for row in self.centers:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
            fh.write(f"# count={self.count},bound={self.bound!r},eta={self.eta!r},"
                     f"alpha={self.alpha!r},R={self.R!r}\n")


def _scan_grid(d: int, R: float, step: float) -> np.ndarray:
    n = int(math.floor(2.0 * R / step + 1e-9))
    axis = -R + step * np.arange(n + 1)
    if axis[-1] < R - 1e-12:
        axis = np.append(axis, R)
    if d == 1:
        return axis[:, None]
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    return pts[(pts ** 2).sum(1) <= R * R * (1 + 1e-12)]


def count_bound(d: int, R: float, eta: float, alpha: float, lip: float) -> float:
    """48 d^2 (R+4eta)^{d-1} Lip / (alpha eta^{d-1})."""
    return 48.0 * d * d * (R + 4.0 * eta) ** (d - 1) * lip / (alpha * eta ** (d - 1))


def covering_number_sigma(f: MaxAffineFunction, eta: float, alpha: float, R: float) -> SingularSetReport:
    """Scan B(0,R) on a step-eta/4 grid for points with
    diam of the active-slope set over B(x, eta) >= alpha, then greedily cover
    the detected set with balls of radius 8 eta centered at detected points.

    The greedy centers are pairwise > 8 eta apart, so the reported count is
    simultaneously a valid covering size and subject to the packing-style
    count bound.
    """
    if min(eta, alpha, R) <= 0:
        raise ValueError("eta, alpha, R must be positive")
    d = f.dim
    lip = f.lip
    bound = count_bound(d, R, eta, alpha, lip)
    if alpha > 2.0 * lip:
        return SingularSetReport(eta, alpha, R, np.empty((0, d)), 0, bound, lip)
    pts = _scan_grid(d, R, eta / 4.0)
    diams = _ball_diams(f, pts, eta)
    detected = pts[diams >= alpha - _ALPHA_TOL]
    centers = []
    uncovered = np.ones(len(detected), dtype=bool)
    while uncovered.any():
        idx = int(np.argmax(uncovered))
        c = detected[idx]
        centers.append(c)
        dist2 = ((detected - c) ** 2).sum(1)
        uncovered &= dist2 > (8.0 * eta) ** 2 * (1 + 1e-12)
    centers = np.array(centers) if centers else np.empty((0, d))
    return SingularSetReport(eta, alpha, R, centers, len(centers), bound, lip)


# ---------------------------------------------------------------------------
# integral diameter estimate
# ---------------------------------------------------------------------------

class IntegralDiamEstimate(NamedTuple):
    estimate: float
    bound: float


def integral_bound(d: int, q: float, R: float, eta: float, lip: float) -> float:
    """48 d^2 beta_d 2^{3d+q-1} (q/(q-1)) (R+4eta)^{d-1} Lip^q eta."""
    beta = unit_ball_volume(d)
    c = 48.0 * d * d * beta * 2.0 ** (3 * d + q - 1) * (q / (q - 1.0)) * (R + 4.0 * eta) ** (d - 1)
    return c * lip ** q * eta


def integral_diam_estimate(f: MaxAffineFunction, eta: float, q: float, R: float) -> IntegralDiamEstimate:
    """Integral over B(0,R) of diam(active slopes over B(x, eta))^q, with the
    matching upper bound.

    1D: the integrand is piecewise constant in x with breakpoints at
    kink +- eta, so midpoint evaluation on the breakpoint-aligned partition
    integrates it exactly.  2D: midpoint rule on a uniform grid of step
    min(eta/8, R/512) restricted to the ball.
    """
    if q <= 1:
        raise ValueError("q must exceed 1")
    if eta <= 0 or R <= 0:
        raise ValueError("eta and R must be positive")
    bound = integral_bound(f.dim, q, R, eta, f.lip)
    if f.dim == 1:
        bp = breakpoints_1d(f)
        cuts = np.concatenate([bp - eta, bp + eta])
        cuts = cuts[(cuts > -R) & (cuts < R)]
        cuts = np.unique(np.concatenate([[-R], cuts, [R]]))
        mids = 0.5 * (cuts[1:] + cuts[:-1])
        widths = np.diff(cuts)
        vals = _ball_diams(f, mids[:, None], eta)
        return IntegralDiamEstimate(float((vals ** q) @ widths), bound)
    if f.dim == 2:
        h = min(eta / 8.0, R / 512.0)
        n = int(math.ceil(2.0 * R / h))
        axis = -R + h * (np.arange(n) + 0.5)
        gx, gy = np.meshgrid(axis, axis, indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        pts = pts[(pts ** 2).sum(1) <= R * R]
        vals = _ball_diams(f, pts, eta)
        return IntegralDiamEstimate(float((vals ** q).sum() * h * h), bound)
    raise NotImplementedError("integral scans are implemented for d in {1, 2}")


# ---------------------------------------------------------------------------
# gradient-integral inequality
# ---------------------------------------------------------------------------

def verify_lemma_diam_l1(f: MaxAffineFunction, x: np.ndarray, eta: float) -> tuple[float, float]:
    """(lhs, rhs) of  diam(active slopes over B(x,eta))
    <= (12 / (beta_d eta^d)) * integral of |grad f| over B(x, 4 eta)."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lhs = diam_subdiff_ball(f, x, eta)
    beta = unit_ball_volume(f.dim)
    if f.dim == 1:
        env_s, _, bp = f._envelope()
        cuts = np.unique(np.concatenate(
            [[x[0] - 4 * eta], bp[(bp > x[0] - 4 * eta) & (bp < x[0] + 4 * eta)], [x[0] + 4 * eta]]))
        mids = 0.5 * (cuts[1:] + cuts[:-1])
        idx = np.searchsorted(bp, mids)
        integral = float(np.abs(env_s[idx]) @ np.diff(cuts))
    elif f.dim == 2:
        h = 8.0 * eta / 256.0
        axis = h * (np.arange(256) + 0.5) - 4.0 * eta
        gx, gy = np.meshgrid(axis, axis, indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        pts = pts[(pts ** 2).sum(1) <= 16.0 * eta * eta] + x
        norms = np.linalg.norm(f.gradient(pts), axis=1)
        integral = float(norms.sum() * h * h)
    else:
        raise NotImplementedError("implemented for d in {1, 2}")
    rhs = 12.0 / (beta * eta ** f.dim) * integral
    return lhs, rhs


# ---------------------------------------------------------------------------
# Lipschitz extension
# ---------------------------------------------------------------------------

def lipschitz_extension(f, sample_points: np.ndarray | None = None) -> MaxAffineFunction:
    """Global envelope sup over samples of f(x0) + <g(x0), . - x0>.

    A MaxAffineFunction is already the envelope of its own pieces and is
    returned unchanged.  Any other convex oracle must expose ``value(points)``
    and ``any_subgradient(points)``; supports are sampled at
    ``sample_points``.
    """
    if isinstance(f, MaxAffineFunction):
        return f
    if sample_points is None:
        raise ValueError("sample points required for non-polyhedral oracles")
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    values = np.asarray(f.value(pts), dtype=float)
    slopes = np.atleast_2d(np.asarray(f.any_subgradient(pts), dtype=float))
    return MaxAffineFunction.from_supports(pts, values, slopes)


# ---------------------------------------------------------------------------
# worst-case kink construction
# ---------------------------------------------------------------------------

def kink_ladder(n_kinks: int, lip: float, radius: float) -> MaxAffineFunction:
    """1D max-affine with n_kinks evenly spaced kinks inside [-radius, radius].

    Slopes step uniformly from -lip to +lip, so every kink carries a
    subdifferential jump of exactly 2*lip/n_kinks; the kinks sit at
    (2i/(n+1) - 1)*radius for i = 1..n.
    """
    n = int(n_kinks)
    if n < 1 or lip <= 0 or radius <= 0:
        raise ValueError("need n_kinks >= 1 and positive lip, radius")
    i = np.arange(n + 1, dtype=float)
    slopes = (2.0 * i / n - 1.0) * lip
    intercepts = (2.0 * lip * radius / (n * (n + 1.0))) * i * (n - i)
    return MaxAffineFunction(slopes[:, None], intercepts)
