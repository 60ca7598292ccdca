"""Local differential geometry of the tangent bundle of an adjoint orbit.

The orbit O through a seed element a of a compact algebra g carries the
stabilizer splitting g = k + m with k = ker ad(a) and m = im ad(a); m is
identified with the tangent space at a.  Points of TO are pairs (x, v) of
algebra elements with x on the orbit and v tangent at x.  The ambient
invariant product identifies T*O with TO, so the canonical 1-form becomes
theta_(x,v)(dx, dv) = <v, dx>.

Charts: a chart with frame {m_1..m_f} (orthonormal, inside m) and base
fiber offset v0 maps coordinates (u, w) to

    ( Ad(e^xi(u)) a,  Ad(e^xi(u)) (v0 + W(w)) ),   xi(u) = sum u_i m_i,
                                                   W(w)  = sum w_i m_i.

Ad(e^xi) is computed as the matrix exponential of ad(xi) on coefficient
vectors.  Coordinate derivatives of the exponential are exact: with
M = ad(xi(u)) and Delta_i = ad(m_i),

    d/du_i exp(M) = exp(M) . dexp(-M, Delta_i),
    dexp(Y, Z) = sum_{k>=0} ad_Y^k(Z) / (k+1)!,

the series truncated once a term drops below 1e-16.  Finite differences
appear only in the single outer exterior derivative of 2-form fields.

Two invariant 2-forms are realised as matrix fields in chart coordinates:
the canonical form (exterior derivative of theta) and the canonical form
plus the pullback of the orbit form  omega_x([x,s1],[x,s2]) = -<x,[s1,s2]>
under the bundle projection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    ChartDegeneracyError,
    ChartRangeError,
    DegeneracyError,
    DomainError,
    InputError,
)
from .lie_core import RANK_RTOL, LieAlgebra, Subspace, kernel, projector_distance, span

DEXP_TOL = 1e-16
DEXP_MAX_TERMS = 80

FD_STEP_DEFAULT = 1e-4
FD_STEP_MIN = 1e-6
FD_STEP_MAX = 1e-3


# ---------------------------------------------------------------------------
# Orbit data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OrbitConfig:
    """An adjoint orbit: seed element, stabilizer algebra and its complement."""

    alg: LieAlgebra
    seed: np.ndarray          # the orbit seed a, coefficients
    stabilizer: Subspace      # k = ker ad(a)
    tangent: Subspace         # m = im ad(a), identified with T_a O
    seed_spectrum: np.ndarray  # sorted eigenvalues of the matrix of a (times -i)

    @property
    def orbit_dim(self) -> int:
        return self.tangent.dim


def orbit_config(alg: LieAlgebra, a: np.ndarray) -> OrbitConfig:
    """Stabilizer splitting for the orbit through ``a``."""
    a = np.asarray(a, dtype=float)
    if np.linalg.norm(a) < 1e-14:
        raise DomainError("orbit seed is zero: the orbit is a point")
    ad_a = alg.ad(a)
    stab = kernel(ad_a)
    tang = span(ad_a)
    if stab.dim + tang.dim != alg.dim:
        raise DomainError("kernel and image of ad(seed) do not split the algebra")
    # For the invariant product, im ad(a) is exactly the orthocomplement of
    # the kernel; check rather than assume.
    comp = kernel(stab.basis.T)
    if projector_distance(tang, comp) > 1e-10:
        raise DomainError("image of ad(seed) is not the orthocomplement of its kernel")
    spectrum = np.sort(np.linalg.eigvalsh(1j * alg.matrix_of(a)))
    return OrbitConfig(alg=alg, seed=a, stabilizer=stab, tangent=tang, seed_spectrum=spectrum)


@dataclass(frozen=True)
class TangentBundlePoint:
    """A point (x, v) of TO: x on the orbit, v tangent at x."""

    x: np.ndarray
    v: np.ndarray


def point_residuals(config: OrbitConfig, point: TangentBundlePoint) -> tuple[float, float]:
    """(spectrum mismatch of x, fiber residual of v against im ad(x))."""
    alg = config.alg
    spec = np.sort(np.linalg.eigvalsh(1j * alg.matrix_of(point.x)))
    spec_err = float(np.max(np.abs(spec - config.seed_spectrum)))
    ad_x = alg.ad(point.x)
    fiber = span(ad_x)
    v_err = fiber.residual(point.v)
    return spec_err, v_err


def validate_point(config: OrbitConfig, point: TangentBundlePoint, tol: float = 1e-8) -> None:
    spec_err, v_err = point_residuals(config, point)
    if spec_err > tol:
        raise DomainError(f"x is not on the orbit (spectrum mismatch {spec_err:.2e})")
    if v_err > tol * max(1.0, float(np.linalg.norm(point.v))):
        raise DomainError(f"v is not tangent at x (fiber residual {v_err:.2e})")


def infinitesimal_action(config: OrbitConfig, xi: np.ndarray, point: TangentBundlePoint) -> np.ndarray:
    """Action vector field of xi at (x, v): the stacked pair ([xi,x], [xi,v])."""
    alg = config.alg
    return np.concatenate([alg.bracket(xi, point.x), alg.bracket(xi, point.v)])


def ambient_tangent_space(config: OrbitConfig, point: TangentBundlePoint) -> Subspace:
    """Tangent space of TO at (x, v) inside g + g.

    Spanned by the action pairs ([e_i,x],[e_i,v]) over the algebra basis
    together with the fiber directions (0, t) for t in im ad(x).
    """
    alg = config.alg
    n = alg.dim
    ad_x = alg.ad(point.x)
    ad_v = alg.ad(point.v)
    action = np.vstack([-ad_x, -ad_v])  # columns: ([e_i,x],[e_i,v]) = -(ad x, ad v) e_i
    fiber_basis = span(ad_x).basis
    fiber = np.vstack([np.zeros_like(fiber_basis), fiber_basis])
    space = span(np.hstack([action, fiber]))
    if space.dim != 2 * config.orbit_dim:
        raise DegeneracyError(
            f"tangent space of TO has rank {space.dim}, expected {2 * config.orbit_dim}"
        )
    return space


# ---------------------------------------------------------------------------
# Exponential machinery
# ---------------------------------------------------------------------------


def dexp_apply(m: np.ndarray, deltas: np.ndarray, tol: float = DEXP_TOL) -> np.ndarray:
    """Apply dexp(m, .) = sum_k ad_m^k(.) / (k+1)! to a stack of matrices."""
    deltas = np.asarray(deltas, dtype=float)
    total = deltas.copy()
    term = deltas.copy()
    for k in range(1, DEXP_MAX_TERMS):
        term = (m @ term - term @ m) / (k + 1.0)
        total += term
        if np.max(np.abs(term)) < tol:
            return total
    raise ChartDegeneracyError("dexp series did not converge; coordinates too large")


# ---------------------------------------------------------------------------
# Charts
# ---------------------------------------------------------------------------


class Chart:
    """Local coordinates on TO around a base point (see module docstring).

    ``rotation`` conjugates the whole chart by a fixed group element, given
    as its adjoint matrix on coefficients; used to transport charts when
    testing invariance.  Evaluations are cached per coordinate tuple, so a
    chart instance must be treated as immutable.
    """

    def __init__(self, config: OrbitConfig, base_v: np.ndarray, frame: np.ndarray,
                 rotation: np.ndarray | None = None, box: float = 0.5):
        base_v = np.asarray(base_v, dtype=float)
        frame = np.asarray(frame, dtype=float)
        if frame.ndim != 2 or frame.shape[0] != config.alg.dim:
            raise InputError("frame must be an (algebra dim) x f matrix")
        if config.tangent.residual(base_v) > 1e-10 * max(1.0, np.linalg.norm(base_v)):
            raise InputError("base fiber offset must lie in the tangent space at the seed")
        leak = np.linalg.norm(frame - config.tangent.projector() @ frame)
        if leak > 1e-10:
            raise InputError("frame columns must lie in the tangent space at the seed")
        if np.linalg.norm(frame.T @ frame - np.eye(frame.shape[1])) > 1e-10:
            raise InputError("frame columns must be orthonormal")
        self.config = config
        self.base_v = base_v
        self.frame = frame
        self.rotation = None if rotation is None else np.asarray(rotation, dtype=float)
        self.box = float(box)
        self._points: dict[bytes, TangentBundlePoint] = {}
        self._pushes: dict[bytes, np.ndarray] = {}

    @property
    def frame_dim(self) -> int:
        return self.frame.shape[1]

    @property
    def coord_dim(self) -> int:
        return 2 * self.frame.shape[1]

    @property
    def base(self) -> TangentBundlePoint:
        return self.point(np.zeros(self.coord_dim))

    def _coords(self, coords) -> np.ndarray:
        c = np.asarray(coords, dtype=float)
        if c.shape != (self.coord_dim,):
            raise InputError(f"expected {self.coord_dim} coordinates, got {c.shape}")
        if np.max(np.abs(c), initial=0.0) > self.box:
            raise ChartRangeError(f"coordinates leave the validity box |c| <= {self.box}")
        return c

    def point(self, coords) -> TangentBundlePoint:
        c = self._coords(coords)
        key = c.tobytes()
        hit = self._points.get(key)
        if hit is not None:
            return hit
        f = self.frame_dim
        alg = self.config.alg
        xi = self.frame @ c[:f]
        big = scipy.linalg.expm(alg.ad(xi))
        if self.rotation is not None:
            big = self.rotation @ big
        x = big @ self.config.seed
        v = big @ (self.base_v + self.frame @ c[f:])
        result = TangentBundlePoint(x=x, v=v)
        self._points[key] = result
        return result

    def pushforward(self, coords) -> np.ndarray:
        """Ambient derivative matrix, (2n) x coord_dim.

        Column i < f is the u_i-derivative (conjugation direction), column
        f + i the w_i-derivative (fiber direction).
        """
        c = self._coords(coords)
        key = c.tobytes()
        hit = self._pushes.get(key)
        if hit is not None:
            return hit
        f = self.frame_dim
        alg = self.config.alg
        n = alg.dim
        xi = self.frame @ c[:f]
        m = alg.ad(xi)
        big = scipy.linalg.expm(m)
        if self.rotation is not None:
            big = self.rotation @ big
        deltas = np.stack([alg.ad(self.frame[:, i]) for i in range(f)])
        trans = dexp_apply(-m, deltas)
        fiber_at_base = self.base_v + self.frame @ c[f:]
        push = np.zeros((2 * n, 2 * f))
        for i in range(f):
            gen = big @ trans[i]
            push[:n, i] = gen @ self.config.seed
            push[n:, i] = gen @ fiber_at_base
            push[n:, f + i] = big @ self.frame[:, i]
        sig = np.linalg.svd(push, compute_uv=False)
        if sig[-1] <= RANK_RTOL * sig[0]:
            raise ChartDegeneracyError("chart pushforward lost column rank")
        self._pushes[key] = push
        return push


def chart_map(chart: Chart, coords) -> TangentBundlePoint:
    return chart.point(coords)


def chart_pushforward(chart: Chart, coords) -> np.ndarray:
    return chart.pushforward(coords)


def shifted(coords: np.ndarray, index: int, step: float) -> np.ndarray:
    """Copy of coords with one entry shifted; single addition per component."""
    out = np.array(coords, dtype=float, copy=True)
    out[index] += step
    return out


# ---------------------------------------------------------------------------
# Forms
# ---------------------------------------------------------------------------


def tautological_oneform(config: OrbitConfig, point: TangentBundlePoint, tangent_pair) -> float:
    """theta at (x, v) applied to an ambient tangent pair (dx, dv): <v, dx>."""
    pair = np.asarray(tangent_pair, dtype=float)
    n = config.alg.dim
    if pair.shape != (2 * n,):
        raise InputError(f"tangent pair must have length {2 * n}")
    dx = pair[:n]
    fiber = span(config.alg.ad(point.x))
    if fiber.residual(dx) > 1e-6 * max(1.0, np.linalg.norm(dx)):
        raise DomainError("base component of the tangent pair is not tangent to the orbit")
    return float(np.dot(point.v, dx))


def _check_fd_step(fd_step: float) -> float:
    if not (FD_STEP_MIN <= fd_step <= FD_STEP_MAX):
        raise InputError(f"fd_step must lie in [{FD_STEP_MIN}, {FD_STEP_MAX}]")
    return float(fd_step)


def _theta_components(chart: Chart, coords: np.ndarray) -> np.ndarray:
    """theta applied to every pushforward column at the given coordinates."""
    push = chart.pushforward(coords)
    n = chart.config.alg.dim
    v = chart.point(coords).v
    return push[:n].T @ v


def canonical_form_matrix(chart: Chart, coords, fd_step: float = FD_STEP_DEFAULT) -> np.ndarray:
    """Canonical 2-form (exterior derivative of theta) in chart coordinates.

    W_ij = d_i theta_j - d_j theta_i with the outer derivatives taken by
    central differences of size ``fd_step``; skew by construction.
    """
    h = _check_fd_step(fd_step)
    c = chart._coords(np.asarray(coords, dtype=float))
    d = chart.coord_dim
    grad = np.zeros((d, d))
    for i in range(d):
        plus = _theta_components(chart, shifted(c, i, +h))
        minus = _theta_components(chart, shifted(c, i, -h))
        grad[i] = (plus - minus) / (2.0 * h)
    return grad - grad.T


def kks_form(config: OrbitConfig, x: np.ndarray, alpha: np.ndarray, beta: np.ndarray) -> float:
    """Invariant orbit 2-form at x on tangent vectors alpha, beta.

    Vectors are lifted through minimal-norm solutions of [x, s] = alpha and
    the value is -<x, [s1, s2]>; invariance of the product makes the value
    independent of the lift.
    """
    alg = config.alg
    ad_x = alg.ad(x)
    fiber = span(ad_x)
    for vec in (alpha, beta):
        if fiber.residual(vec) > 1e-6 * max(1.0, float(np.linalg.norm(vec))):
            raise DomainError("vector is not tangent to the orbit at x")
    s1 = np.linalg.lstsq(ad_x, np.asarray(alpha, dtype=float), rcond=None)[0]
    s2 = np.linalg.lstsq(ad_x, np.asarray(beta, dtype=float), rcond=None)[0]
    return -float(np.dot(x, alg.bracket(s1, s2)))


def orbit_form_pullback_matrix(chart: Chart, coords) -> np.ndarray:
    """Pullback of the orbit 2-form under the bundle projection, in chart coords."""
    c = chart._coords(np.asarray(coords, dtype=float))
    alg = chart.config.alg
    n = alg.dim
    point = chart.point(c)
    push_x = chart.pushforward(c)[:n]
    ad_x = alg.ad(point.x)
    lifts = np.linalg.lstsq(ad_x, push_x, rcond=None)[0]
    matrix = -np.einsum("ai,bj,abk,k->ij", lifts, lifts, alg.structure, point.x)
    return 0.5 * (matrix - matrix.T)


def omega2_matrix(chart: Chart, coords, fd_step: float = FD_STEP_DEFAULT) -> np.ndarray:
    """Canonical form plus the pullback of the orbit form, in chart coords."""
    return canonical_form_matrix(chart, coords, fd_step) + orbit_form_pullback_matrix(chart, coords)


class FormField:
    """A cached matrix field coords -> skew matrix over a fixed chart."""

    def __init__(self, fn, dim: int, name: str):
        self._fn = fn
        self.dim = int(dim)
        self.name = name
        self._cache: dict[bytes, np.ndarray] = {}

    def __call__(self, coords) -> np.ndarray:
        c = np.asarray(coords, dtype=float)
        key = c.tobytes()
        hit = self._cache.get(key)
        if hit is None:
            hit = self._fn(c)
            self._cache[key] = hit
        return hit


def canonical_form_field(chart: Chart, fd_step: float = FD_STEP_DEFAULT) -> FormField:
    h = _check_fd_step(fd_step)
    return FormField(lambda c: canonical_form_matrix(chart, c, h), chart.coord_dim, "canonical")


def combined_form_field(chart: Chart, fd_step: float = FD_STEP_DEFAULT) -> FormField:
    h = _check_fd_step(fd_step)
    return FormField(lambda c: omega2_matrix(chart, c, h), chart.coord_dim, "combined")


def closedness_residual(form_field, coords, fd_step: float = FD_STEP_DEFAULT) -> float:
    """Max cyclic-sum residual d_i W_jk + d_j W_ki + d_k W_ij over index triples."""
    h = _check_fd_step(fd_step)
    c = np.asarray(coords, dtype=float)
    d = len(c)
    partials = np.empty((d, d, d))
    for l in range(d):
        plus = form_field(shifted(c, l, +h))
        minus = form_field(shifted(c, l, -h))
        partials[l] = (plus - minus) / (2.0 * h)
    cyc = partials + np.transpose(partials, (1, 2, 0)) + np.transpose(partials, (2, 0, 1))
    return float(np.max(np.abs(cyc)))


def form_on_ambient_vectors(chart: Chart, coords, matrix: np.ndarray, vectors: np.ndarray,
                            tol: float = 1e-8) -> np.ndarray:
    """Chart-frame coordinates of ambient tangent vectors (columns).

    Solves push @ cvec = vector in the least-squares sense and insists the
    vectors actually lie in the tangent image; combine with the form matrix
    as cvec.T @ matrix @ cvec to evaluate the form on ambient vectors.
    """
    push = chart.pushforward(coords)
    cvecs, *_ = np.linalg.lstsq(push, vectors, rcond=None)
    resid = np.linalg.norm(push @ cvecs - vectors, axis=0)
    scale = np.maximum(np.linalg.norm(vectors, axis=0), 1.0)
    if np.any(resid > tol * scale):
        raise DomainError("vector is not in the chart tangent image")
    return cvecs
