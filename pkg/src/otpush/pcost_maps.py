"""p-cost machinery: xi_p(z) = |z|^p gradients with a Holder-certified
inverse, c-concave potentials in Laguerre (min) form, the induced optimal
transport map, and the convex partner function.

A c-concave potential is stored as phi(x) = min_j xi_p(x - y_j) - psi_j,
which is the cbar-transform of the finitely supported function psi and is
therefore exactly c-concave (fixed point of the double transform).  Every
derived quantity factors through this form:

* T_phi(x) = x - (grad xi_p)^{-1}(grad phi(x)) equals the active atom y_j*
  exactly, so pushforwards of differentiable points carry no roundoff;
* the convex partner  C x^2/2 - phi  (C = p(p-1) R^{p-2}) is an exact
  max-affine function for p = 2 and a sampled convex oracle otherwise;
* the c-superdifferential image of a ball and its diameter bound
  8 p (1 + R^{(p-2)/(p-1)}) (eta^{1/(p-1)} + diam(dphi(ball))^{1/(p-1)})
  come from the endpoint correspondence y = x - (grad xi_p)^{-1}(C x - g).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .convex_analysis import MaxAffineFunction, diam_subdiff_ball

__all__ = [
    "PCost",
    "CConcavePotential",
    "SmoothPotential",
    "SingularPointError",
    "BoundaryEscapeError",
    "grad_xi_p",
    "grad_xi_p_inverse",
    "transport_from_gradient",
    "t_phi",
    "phi_to_convex",
    "convex_to_phi",
    "ConvexPartnerOracle",
    "diam_partial_c",
]

_DIFF_TOL = 1e-10


class SingularPointError(RuntimeError):
    """The potential is not differentiable at the queried point."""


class BoundaryEscapeError(RuntimeError):
    """The transported point left the closed domain ball."""


@dataclass(frozen=True)
class PCost:
    """Ground cost xi_p(x - y) = |x - y|^p on the ball B(0, R), p >= 2."""

    p: float
    R: float

    def __post_init__(self):
        if self.p < 2:
            raise ValueError("cost exponent must satisfy p >= 2")
        if self.R <= 0:
            raise ValueError("domain radius must be positive")

    @property
    def lip(self) -> float:
        return self.p * self.R ** (self.p - 1.0)

    @property
    def concavity(self) -> float:
        """C_{p,R}: x -> C|x|^2/2 - xi_p(x) is concave on B(0, R)."""
        return self.p * (self.p - 1.0) * self.R ** (self.p - 2.0)

    @property
    def holder_constant(self) -> float:
        return 3.0 / self.p ** (1.0 / (self.p - 1.0))

    @property
    def holder_exponent(self) -> float:
        return 1.0 / (self.p - 1.0)

    def xi(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return np.linalg.norm(z, axis=-1) ** self.p


def _norms(z: np.ndarray) -> np.ndarray:
    return np.sqrt((z * z).sum(axis=-1, keepdims=True))


def grad_xi_p(z: np.ndarray, p: float) -> np.ndarray:
    """p z |z|^{p-2} (0 at 0); exact 2z for p = 2."""
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    zz = np.atleast_2d(z)
    if p == 2:
        out = 2.0 * zz
    else:
        out = p * zz * _norms(zz) ** (p - 2.0)
    return out[0] if single else out


def grad_xi_p_inverse(z: np.ndarray, p: float) -> np.ndarray:
    """z / (p^{1/(p-1)} |z|^{(p-2)/(p-1)}) with 0 mapped to 0."""
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    zz = np.atleast_2d(z)
    if p == 2:
        out = zz / 2.0
    else:
        n = _norms(zz)
        safe = np.maximum(n, 1e-300)
        out = np.where(n > 1e-300, zz / (p ** (1.0 / (p - 1.0)) * safe ** ((p - 2.0) / (p - 1.0))), 0.0)
    return out[0] if single else out


def transport_from_gradient(x: np.ndarray, g: np.ndarray, p: float) -> np.ndarray:
    """x - (grad xi_p)^{-1}(g): the transport formula from a gradient value."""
    return np.asarray(x, dtype=float) - grad_xi_p_inverse(g, p)


# ---------------------------------------------------------------------------
# c-concave potentials in min form
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CConcavePotential:
    """phi(x) = min_j |x - y_j|^p - psi_j on the ball B(0, R).

    As a cbar-transform of a finitely supported function, phi satisfies
    phi = (phi^c)^cbar by construction (the flag ``c_concave`` records it).
    """

    atoms: np.ndarray
    offsets: np.ndarray
    p: float
    R: float

    def __post_init__(self):
        y = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        psi = np.atleast_1d(np.asarray(self.offsets, dtype=float))
        if y.shape[0] != psi.shape[0] or y.shape[0] == 0:
            raise ValueError("need one offset per atom, at least one atom")
        if not (np.isfinite(y).all() and np.isfinite(psi).all()):
            raise ValueError("atoms and offsets must be finite")
        PCost(self.p, self.R)  # validates p, R
        object.__setattr__(self, "atoms", y)
        object.__setattr__(self, "offsets", psi)

    @property
    def c_concave(self) -> bool:
        return True

    @property
    def cost(self) -> PCost:
        return PCost(self.p, self.R)

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def piece_values(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d2 = ((pts[:, None, :] - self.atoms[None, :, :]) ** 2).sum(-1)
        pieces = d2 if self.p == 2 else d2 ** (self.p / 2.0)
        return pieces - self.offsets

    def value(self, points: np.ndarray):
        points = np.asarray(points, dtype=float)
        single = points.ndim <= 1
        vals = self.piece_values(points).min(axis=1)
        return float(vals[0]) if single else vals

    def __call__(self, points: np.ndarray):
        return self.value(points)

    def active_atoms(self, x: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        """Indices of atoms attaining the min at x within tol (scaled)."""
        vals = self.piece_values(x)[0]
        m = vals.min()
        return np.flatnonzero(vals <= m + tol * (1.0 + abs(m)))

    def piece_gradients(self, x: np.ndarray, idx: np.ndarray) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return grad_xi_p(x[None, :] - self.atoms[idx], self.p)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """grad phi at a differentiable point; SingularPointError otherwise."""
        idx = self.active_atoms(x)
        grads = self.piece_gradients(x, idx)
        if len(idx) > 1:
            spread = np.linalg.norm(grads - grads[0], axis=1).max()
            if spread >= _DIFF_TOL:
                raise SingularPointError(f"gradient spread {spread} at {x}")
        return grads[0]

    def is_differentiable(self, x: np.ndarray) -> bool:
        try:
            self.gradient(x)
            return True
        except SingularPointError:
            return False

    def one_sided_derivatives(self, x: float) -> tuple[float, float]:
        """1D left/right derivatives (min of smooth pieces: left = max of
        active piece slopes, right = min)."""
        if self.dim != 1:
            raise ValueError("one-sided derivatives are 1D")
        idx = self.active_atoms(np.atleast_1d(x))
        slopes = self.piece_gradients(np.atleast_1d(x), idx)[:, 0]
        return float(slopes.max()), float(slopes.min())

    def max_active_distance(self, n: int = 4097) -> float:
        """Largest |x - y_active(x)| over a dense grid on the domain ball.

        Values <= R certify that the Lipschitz / partner-convexity constants
        of the cost apply to every active difference.
        """
        if self.dim == 1:
            pts = np.linspace(-self.R, self.R, n)[:, None]
        else:
            k = max(int(np.sqrt(n)), 3)
            ax = np.linspace(-self.R, self.R, k)
            pts = np.stack(np.meshgrid(*([ax] * self.dim), indexing="ij"), -1).reshape(-1, self.dim)
            pts = pts[np.linalg.norm(pts, axis=1) <= self.R]
        idx = np.argmin(self.piece_values(pts), axis=1)
        return float(np.linalg.norm(pts - self.atoms[idx], axis=1).max())

    def sampled_invariant_check(self, n: int = 4096, seed: int = 0):
        """Sampled Lipschitz (<= p R^{p-1}) and midpoint-convexity of the
        partner C|x|^2/2 - phi; raises AssertionError on violation."""
        rng = np.random.default_rng(seed)
        d = self.dim
        pts = rng.uniform(-self.R, self.R, (n, d))
        pts = pts[np.linalg.norm(pts, axis=1) <= self.R]
        a, b = pts[: len(pts) // 2], pts[len(pts) // 2: 2 * (len(pts) // 2)]
        va, vb = self.value(a), self.value(b)
        gap = np.linalg.norm(a - b, axis=1)
        ok = gap > 1e-12
        lip = self.cost.lip
        worst = (np.abs(va - vb)[ok] / gap[ok]).max()
        if worst > lip * (1 + 1e-9):
            raise AssertionError(f"sampled Lipschitz ratio {worst} exceeds {lip}")
        C = self.cost.concavity
        mid = 0.5 * (a + b)
        conv = (C / 2.0) * (pts ** 2).sum(1)
        fa = (C / 2.0) * (a ** 2).sum(1) - va
        fb = (C / 2.0) * (b ** 2).sum(1) - vb
        fm = (C / 2.0) * (mid ** 2).sum(1) - self.value(mid)
        viol = (fm - 0.5 * (fa + fb)).max()
        if viol > 1e-9 * (1.0 + np.abs(fm).max()):
            raise AssertionError(f"midpoint convexity violated by {viol}")


@dataclass(frozen=True, eq=False)
class SmoothPotential:
    """Closed-form everywhere-differentiable potential (value and gradient
    callables), for potentials outside the min-form family such as phi = 0
    or linear phi."""

    value_fn: object
    grad_fn: object
    p: float
    R: float

    @property
    def c_concave(self) -> bool:
        return True

    @property
    def cost(self) -> PCost:
        return PCost(self.p, self.R)

    def value(self, points: np.ndarray):
        points = np.asarray(points, dtype=float)
        single = points.ndim <= 1
        vals = np.asarray(self.value_fn(np.atleast_2d(points)), dtype=float)
        return float(vals[0]) if single else vals

    def __call__(self, points: np.ndarray):
        return self.value(points)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.asarray(self.grad_fn(x[None, :]), dtype=float)[0]

    def is_differentiable(self, x: np.ndarray) -> bool:
        return True

    @staticmethod
    def zero(p: float, R: float, dim: int) -> "SmoothPotential":
        return SmoothPotential(lambda pts: np.zeros(len(pts)),
                               lambda pts: np.zeros_like(pts), p, R)

    @staticmethod
    def linear(a: np.ndarray, p: float, R: float) -> "SmoothPotential":
        a = np.asarray(a, dtype=float)
        return SmoothPotential(lambda pts: pts @ a,
                               lambda pts: np.broadcast_to(a, pts.shape).copy(), p, R)


def t_phi(potential, x: np.ndarray) -> np.ndarray:
    """Optimal transport map T_phi(x) = x - (grad xi_p)^{-1}(grad phi(x)).

    For the min form the formula collapses exactly to the active atom, which
    is what is returned; a SingularPointError signals that a subgradient
    selection policy is required instead, and a BoundaryEscapeError flags an
    image outside the closed domain ball by more than 1e-8.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if isinstance(potential, SmoothPotential):
        y = transport_from_gradient(x, potential.gradient(x), potential.p)
    else:
        idx = potential.active_atoms(x)
        if len(idx) > 1:
            grads = potential.piece_gradients(x, idx)
            spread = np.linalg.norm(grads - grads[0], axis=1).max()
            if spread >= _DIFF_TOL:
                raise SingularPointError(f"transport map undefined at {x}")
        y = potential.atoms[idx[0]].copy()
    if np.linalg.norm(y) > potential.R + 1e-8:
        raise BoundaryEscapeError(f"image {y} escapes the domain ball")
    return y


# ---------------------------------------------------------------------------
# convex partner
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConvexPartnerOracle:
    """phi_conv(x) = C |x|^2 / 2 - phi(x) for p > 2 (non-polyhedral).

    Exposes ``value`` and ``any_subgradient`` (both batched) so it can be
    sampled into a max-affine envelope by ``lipschitz_extension``.
    """

    potential: CConcavePotential

    @property
    def concavity(self) -> float:
        return self.potential.cost.concavity

    @property
    def lipschitz_bound(self) -> float:
        c = self.potential.cost
        return c.p ** 2 * c.R ** (c.p - 1.0)

    def value(self, points: np.ndarray):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return (self.concavity / 2.0) * (pts ** 2).sum(1) - self.potential.value(pts)

    def any_subgradient(self, points: np.ndarray) -> np.ndarray:
        """C x - (gradient of one active piece): a valid subgradient even at
        kinks, since active smooth pieces of a max support it from below."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        idx = np.argmin(self.potential.piece_values(pts), axis=1)
        piece_grad = grad_xi_p(pts - self.potential.atoms[idx], self.potential.p)
        return self.concavity * pts - piece_grad


def phi_to_convex(potential: CConcavePotential):
    """Convex partner of a c-concave potential.

    p = 2: the exact max-affine function max_j 2<y_j, x> + (psi_j - |y_j|^2).
    p > 2: a ConvexPartnerOracle exposing value/any_subgradient.
    """
    if potential.p == 2:
        slopes = 2.0 * potential.atoms
        intercepts = potential.offsets - (potential.atoms ** 2).sum(1)
        return MaxAffineFunction(slopes, intercepts)
    return ConvexPartnerOracle(potential)


def convex_to_phi(f: MaxAffineFunction, R: float, p: float = 2.0) -> CConcavePotential:
    """Inverse conversion |x|^2 - f(x) -> min form (quadratic cost only)."""
    if p != 2:
        raise ValueError("inverse conversion is specific to p = 2")
    atoms = f.slopes / 2.0
    offsets = f.intercepts + (f.slopes ** 2).sum(1) / 4.0
    return CConcavePotential(atoms, offsets, 2.0, R)


# ---------------------------------------------------------------------------
# c-superdifferential image diameters
# ---------------------------------------------------------------------------

def diam_partial_c(potential: CConcavePotential, x: np.ndarray, eta: float) -> tuple[float | None, float]:
    """(exact, bound) for the diameter of the c-superdifferential image of
    B(x, eta) intersected with the domain.

    bound = 8 p (1 + R^{(p-2)/(p-1)}) (eta^{1/(p-1)} + D^{1/(p-1)}) with
    D = diam of the partner subdifferential over the ball.  The exact value
    uses the correspondence y = z - (grad xi_p)^{-1}(C z - g): monotone
    endpoint evaluation in 1D (any p), half the partner diameter for p = 2;
    None otherwise.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    p, R, C = potential.p, potential.R, potential.cost.concavity

    if potential.p == 2:
        partner = phi_to_convex(potential)
        D = diam_subdiff_ball(partner, x, eta)
        exact = D / 2.0
    elif potential.dim == 1:
        lo = max(float(x[0]) - eta, -R)
        hi = min(float(x[0]) + eta, R)
        dm_lo, _ = potential.one_sided_derivatives(lo)   # left derivative = max slope
        _, dp_hi = potential.one_sided_derivatives(hi)   # right derivative = min slope
        D = max((C * hi - dp_hi) - (C * lo - dm_lo), 0.0)  # partner subdiff range
        y_min = lo - float(grad_xi_p_inverse(np.array([dm_lo]), p)[0])
        y_max = hi - float(grad_xi_p_inverse(np.array([dp_hi]), p)[0])
        exact = max(y_max - y_min, 0.0)
    else:
        raise NotImplementedError("exact image diameter needs p = 2 or dimension 1")
    bound = 8.0 * p * (1.0 + R ** ((p - 2.0) / (p - 1.0))) * (
        eta ** (1.0 / (p - 1.0)) + D ** (1.0 / (p - 1.0)))
    return exact, bound
