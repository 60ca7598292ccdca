"""Restriction of the invariant symplectic pencil to the regular stratum.

Given the orbit data for a seed a, a generic slice seed x0 in m determines
the principal isotropy algebra h = {y in k : [x0, y] = 0}.  Around h the
module assembles:

  * the normalizer n(h) and its orthocomplement p ("transversal"),
  * the centralizer of h (a compact subalgebra containing a), split into
    its stabilizer part and its moving part,
  * the slice: the orthocomplement of [x0, k] inside m, a linear section
    that commutes with h elementwise,
  * the center of the centralizer.

Points whose isotropy algebra equals h exactly are called regular.  At a
regular point the action vectors of p span a canonical complement of the
tangent space of the regular stratum, orthogonal to it for every invariant
nondegenerate 2-form; in adapted coordinates every such form is therefore
block diagonal on the stratum.  Restricting both pencil forms to the
sub-orbit bundle of the centralizer then produces a pencil of its own, and
brackets of invariant functions computed ambiently or after restriction
agree at regular points.  All of this is certified numerically here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    ChartRangeError,
    ConvergenceError,
    DegeneracyError,
    DomainError,
    GenericityError,
    InputError,
    SetupError,
)
from .lie_core import (
    RANK_RTOL,
    LieAlgebra,
    Subspace,
    centralizer,
    complement_within,
    full_subspace,
    kernel,
    normalizer,
    orthogonal_complement,
    projector_distance,
    random_invariant_product,
    span,
    subalgebra_residual,
    subspace_contains,
    subspace_sum,
    zero_subspace,
)
from .orbit_charts import (
    FD_STEP_DEFAULT,
    Chart,
    FormField,
    OrbitConfig,
    TangentBundlePoint,
    _check_fd_step,
    ambient_tangent_space,
    canonical_form_field,
    combined_form_field,
    dexp_apply,
    infinitesimal_action,
    shifted,
)
from .poisson_pencil import PoissonField, invert_form
from .seeding import stream, unit_vector

REGULARITY_TOL = 1e-8


# ---------------------------------------------------------------------------
# Principal isotropy and setup
# ---------------------------------------------------------------------------


def stabilizer_within(alg: LieAlgebra, sub: Subspace, x: np.ndarray) -> Subspace:
    """{y in sub : [x, y] = 0} via the kernel of ad(x) restricted to sub."""
    if sub.dim == 0:
        return sub
    coeffs = kernel(alg.ad(x) @ sub.basis)
    return span(sub.basis @ coeffs.basis)


def principal_isotropy(config: OrbitConfig, samples: int = 16, seed: int = 0):
    """Generic slice seed x0 in m and its stabilizer h inside k.

    Draws ``samples`` unit elements of m, keeps the first one whose
    stabilizer dimension matches the minimum, and re-checks the minimum on
    a doubled draw; a mismatch raises GenericityError.
    """
    if samples < 8:
        raise InputError("principal isotropy sampling needs at least 8 samples")
    alg = config.alg
    draws = []
    for idx in range(2 * samples):
        rng = stream(seed, "principal-isotropy", idx)
        x0 = config.tangent.basis @ unit_vector(rng, config.tangent.dim)
        stab = stabilizer_within(alg, config.stabilizer, x0)
        draws.append((x0, stab))
    first_min = min(s.dim for _, s in draws[:samples])
    full_min = min(s.dim for _, s in draws)
    if first_min != full_min:
        raise GenericityError(
            f"stabilizer dimension unstable under doubling ({first_min} vs {full_min}); raise samples"
        )
    for x0, stab in draws:
        if stab.dim == full_min:
            return x0, stab
    raise GenericityError("unreachable: no draw achieved the minimum")  # pragma: no cover


@dataclass(frozen=True)
class ReductionSetup:
    """All subalgebra data entering the restriction argument."""

    config: OrbitConfig
    x0: np.ndarray               # generic slice seed in m
    isotropy: Subspace           # h, principal isotropy algebra
    normalizer: Subspace         # n(h)
    transversal: Subspace        # p, orthocomplement of n(h)
    centralizer: Subspace        # all y with [y, h] = 0; contains the orbit seed
    sub_stabilizer: Subspace     # centralizer ^ k
    sub_tangent: Subspace        # orthocomplement of sub_stabilizer in the centralizer
    slice_space: Subspace        # orthocomplement of [x0, k] inside m
    center: Subspace             # center of the centralizer

    @property
    def alg(self) -> LieAlgebra:
        return self.config.alg

    def dims(self) -> dict:
        return {
            "k": self.config.stabilizer.dim,
            "m": self.config.tangent.dim,
            "h": self.isotropy.dim,
            "n(h)": self.normalizer.dim,
            "p": self.transversal.dim,
            "g_hat": self.centralizer.dim,
            "k_hat": self.sub_stabilizer.dim,
            "m_hat": self.sub_tangent.dim,
            "slice": self.slice_space.dim,
            "z(g_hat)": self.center.dim,
        }


def _max_bracket_norm(alg: LieAlgebra, a: Subspace, b: Subspace) -> float:
    worst = 0.0
    for i in range(a.dim):
        images = alg.ad(a.basis[:, i]) @ b.basis
        if images.size:
            worst = max(worst, float(np.max(np.linalg.norm(images, axis=0))))
    return worst


def setup_residuals(setup: ReductionSetup) -> dict:
    """Residuals of every structural identity the setup is built on."""
    alg = setup.alg
    cfg = setup.config
    fixed_plus = subspace_sum(setup.centralizer, setup.isotropy)
    sub_moved = span(alg.ad(setup.x0) @ setup.sub_stabilizer.basis) if setup.sub_stabilizer.dim else zero_subspace(alg.dim)
    slice_alt = complement_within(sub_moved, setup.sub_tangent)
    return {
        "isotropy_in_stabilizer": subspace_contains(cfg.stabilizer, setup.isotropy),
        "seed_commutes_with_isotropy": _max_bracket_norm(alg, span(setup.x0), setup.isotropy),
        "slice_commutes_with_isotropy": _max_bracket_norm(alg, setup.slice_space, setup.isotropy),
        "slice_inside_sub_tangent": subspace_contains(setup.sub_tangent, setup.slice_space),
        "slice_matches_sub_complement": projector_distance(setup.slice_space, slice_alt),
        "orbit_seed_in_centralizer": setup.centralizer.residual(cfg.seed),
        "normalizer_splitting": projector_distance(
            subspace_sum(setup.transversal, setup.normalizer), full_subspace(alg.dim)
        ),
        "fixed_plus_isotropy_is_normalizer": projector_distance(fixed_plus, setup.normalizer),
        "centralizer_inside_normalizer": subspace_contains(setup.normalizer, setup.centralizer),
        "subalgebras_closed": max(
            subalgebra_residual(alg, s)
            for s in (setup.isotropy, setup.normalizer, setup.centralizer,
                      setup.sub_stabilizer, setup.center)
        ),
    }


_SETUP_TOLERANCES = {
    "isotropy_in_stabilizer": 1e-10,
    "seed_commutes_with_isotropy": 1e-10,
    "slice_commutes_with_isotropy": 1e-10,
    "slice_inside_sub_tangent": 1e-8,
    "slice_matches_sub_complement": 1e-8,
    "orbit_seed_in_centralizer": 1e-10,
    "normalizer_splitting": 1e-10,
    "fixed_plus_isotropy_is_normalizer": 1e-8,
    "centralizer_inside_normalizer": 1e-10,
    "subalgebras_closed": 1e-10,
}


def reduction_setup(config: OrbitConfig, samples: int = 16, seed: int = 0) -> ReductionSetup:
    """Assemble and validate every subspace entering the restriction."""
    alg = config.alg
    x0, iso = principal_isotropy(config, samples=samples, seed=seed)
    norm = normalizer(alg, iso)
    transversal = orthogonal_complement(alg, norm)
    cent = centralizer(alg, iso)
    sub_stab = stabilizer_within(alg, cent, config.seed)
    sub_tan = complement_within(sub_stab, cent)
    moved = span(alg.ad(x0) @ config.stabilizer.basis) if config.stabilizer.dim else zero_subspace(alg.dim)
    slice_space = complement_within(moved, config.tangent)
    center = fixed_subspace_within(alg, cent, cent)
    setup = ReductionSetup(
        config=config,
        x0=x0,
        isotropy=iso,
        normalizer=norm,
        transversal=transversal,
        centralizer=cent,
        sub_stabilizer=sub_stab,
        sub_tangent=sub_tan,
        slice_space=slice_space,
        center=center,
    )
    for name, value in setup_residuals(setup).items():
        if value > _SETUP_TOLERANCES[name]:
            raise SetupError(f"setup identity '{name}' failed with residual {value:.3e}")
    return setup


def fixed_subspace_within(alg: LieAlgebra, sub: Subspace, ambient: Subspace) -> Subspace:
    """Joint kernel of ad over sub, restricted to ambient (no invariance check)."""
    if sub.dim == 0 or ambient.dim == 0:
        return Subspace(basis=ambient.basis.copy())
    stacked = np.vstack([alg.ad(sub.basis[:, j]) @ ambient.basis for j in range(sub.dim)])
    coeffs = kernel(stacked)
    return span(ambient.basis @ coeffs.basis)


# ---------------------------------------------------------------------------
# Slice normalisation
# ---------------------------------------------------------------------------


def slice_normal_form(setup: ReductionSetup, y: np.ndarray, max_iter: int = 200,
                      tol: float = 1e-8):
    """Rotate y in m into the slice by stabilizer conjugations.

    Ascends the objective <z, x0> over the adjoint orbit of y under the
    stabilizer: backtracking gradient steps (initial step 0.5, halved on
    rejection) carry the iterate into a basin, then Newton steps on the
    orbit directions finish the job -- the Hessian of the objective along
    the orbit can be conditioned badly enough (about 40:1 on a full flag
    configuration) that first-order contraction alone cannot reach 1e-8
    within the iteration budget.  A start occasionally drifts toward an
    ill-conditioned non-global critical point; in that case the search
    restarts from fixed stabilizer rotations of y, which stays inside the
    orbit of y and therefore inside the contract.  At a critical point the
    iterate is orthogonal to [x0, k], i.e. it lies in the slice.
    Conjugation is an isometry, so the norm of y is preserved exactly.

    Returns (normalised element, total iterations used).
    """
    alg = setup.alg
    cfg = setup.config
    y = np.asarray(y, dtype=float)
    if cfg.tangent.residual(y) > 1e-10 * max(1.0, np.linalg.norm(y)):
        raise DomainError("input must lie in the tangent space at the seed")
    moved = span(alg.ad(setup.x0) @ cfg.stabilizer.basis) if cfg.stabilizer.dim else zero_subspace(alg.dim)
    stab_basis = cfg.stabilizer.basis

    def residual(z):
        return float(np.linalg.norm(moved.basis.T @ z)) if moved.dim else 0.0

    z = y.copy()
    res = residual(z)
    if res <= tol:
        return z, 0

    def newton_candidates(z):
        """Second-order trial steps: full Newton, then damped versions.

        Damping regularises the nearly flat orbit directions that occur
        close to degenerate critical points, where the pure Newton step
        overshoots the quadratic model's region of validity.
        """
        kdim = stab_basis.shape[1]
        grad_k = stab_basis.T @ alg.bracket(z, setup.x0)
        hess = np.empty((kdim, kdim))
        for b in range(kdim):
            inner = alg.bracket(stab_basis[:, b], z)
            for a in range(kdim):
                hess[a, b] = np.dot(alg.bracket(stab_basis[:, a], inner), setup.x0)
        hess = 0.5 * (hess + hess.T)
        scale = max(float(np.max(np.abs(hess))), 1e-12)
        for damping in (0.0, 0.03, 0.3):
            damped = hess - damping * scale * np.eye(kdim)
            delta = -np.linalg.lstsq(damped, grad_k, rcond=1e-12)[0]
            size = np.linalg.norm(delta)
            if size > 1.0:
                delta *= 1.0 / size
            yield scipy.linalg.expm(alg.ad(stab_basis @ delta)) @ z

    def ascend(z, budget):
        """Single-start search; returns (iterate, iterations, converged).

        Declares a stall when no step is acceptable or when the residual
        improves by less than ten percent across a 25-iteration window, so
        the caller can restart instead of feeding a drifting iterate.
        """
        res = residual(z)
        value = float(np.dot(z, setup.x0))
        window = []
        for it in range(1, budget + 1):
            if res <= tol:
                return z, it - 1, True
            window.append(res)
            if len(window) > 25:
                window.pop(0)
                if res > 0.9 * window[0]:
                    return z, it - 1, False
            if res < 0.3:
                second_order = False
                for cand in newton_candidates(z):
                    cand_res = residual(cand)
                    if cand_res < 0.5 * res:
                        z, res = cand, cand_res
                        value = float(np.dot(z, setup.x0))
                        second_order = True
                        break
                if second_order:
                    continue
            grad = stab_basis @ (stab_basis.T @ alg.bracket(z, setup.x0))
            gnorm2 = float(np.dot(grad, grad))
            step = 0.5
            accepted = False
            while step > 1e-14:
                cand = scipy.linalg.expm(alg.ad(step * grad)) @ z
                cand_value = float(np.dot(cand, setup.x0))
                cand_res = residual(cand)
                # Near the maximum the objective gain drops under the float
                # resolution of an O(1) number; the residual is first order
                # in the distance to the critical point and informative.
                if cand_value > value + 1e-4 * step * gnorm2 or cand_res < res * (1.0 - 1e-4 * step):
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                return z, it, False
            z, value, res = cand, cand_value, cand_res
        return z, budget, res <= tol

    kdim = stab_basis.shape[1]
    starts = [z]
    for r in range(1, 8):
        rng = stream(r, "slice-restart-offsets")
        offset = 1.5 * unit_vector(rng, kdim)
        starts.append(scipy.linalg.expm(alg.ad(stab_basis @ offset)) @ z)
    used = 0
    best = residual(z)
    for start in starts:
        budget = max_iter - used
        if budget <= 0:
            break
        out, spent, converged = ascend(start, budget)
        used += spent
        best = min(best, residual(out))
        if converged:
            return out, used
    raise ConvergenceError(
        f"slice normalisation stalled at residual {best:.3e}",
        best_residual=best,
        iterations=used,
    )


# ---------------------------------------------------------------------------
# Regularity, tangent splitting
# ---------------------------------------------------------------------------


def isotropy_algebra(setup: ReductionSetup, point: TangentBundlePoint) -> Subspace:
    """All xi with [xi, x] = 0 and [xi, v] = 0."""
    alg = setup.alg
    return kernel(np.vstack([alg.ad(point.x), alg.ad(point.v)]))


def regularity_distance(setup: ReductionSetup, point: TangentBundlePoint) -> float:
    """Projector distance between the point's isotropy algebra and h."""
    iso = isotropy_algebra(setup, point)
    if iso.dim != setup.isotropy.dim:
        return float("inf")
    return projector_distance(iso, setup.isotropy)


def is_regular(setup: ReductionSetup, point: TangentBundlePoint, tol: float = REGULARITY_TOL) -> bool:
    return regularity_distance(setup, point) <= tol


def regular_tangent_space(setup: ReductionSetup, point: TangentBundlePoint) -> Subspace:
    """Tangent space of the regular stratum at a regular point.

    Computed as the joint kernel of the linearised isotropy action
    (dx, dv) -> ([z, dx], [z, dv]) inside the tangent space of TO.
    """
    if not is_regular(setup, point):
        raise DomainError("point is not regular: isotropy algebra differs from h")
    ambient = ambient_tangent_space(setup.config, point)
    iso = setup.isotropy
    if iso.dim == 0:
        return ambient
    alg = setup.alg
    blocks = []
    for j in range(iso.dim):
        op = alg.ad(iso.basis[:, j])
        big = scipy.linalg.block_diag(op, op)
        blocks.append(big @ ambient.basis)
    coeffs = kernel(np.vstack(blocks))
    return span(ambient.basis @ coeffs.basis)


def canonical_complement(setup: ReductionSetup, point: TangentBundlePoint,
                         transversal: Subspace | None = None) -> Subspace:
    """Span of the action vectors of the transversal p at a regular point."""
    if not is_regular(setup, point):
        raise DomainError("point is not regular: isotropy algebra differs from h")
    trans = setup.transversal if transversal is None else transversal
    n = setup.alg.dim
    if trans.dim == 0:
        return zero_subspace(2 * n)
    cols = np.column_stack([
        infinitesimal_action(setup.config, trans.basis[:, i], point) for i in range(trans.dim)
    ])
    out = span(cols)
    if out.dim != trans.dim:
        raise DegeneracyError(
            f"action of the transversal dropped rank ({out.dim} < {trans.dim}) at the point"
        )
    return out


def complement_product_independence(setup: ReductionSetup, point: TangentBundlePoint,
                                    seed: int) -> float:
    """Canonical complement recomputed from a random invariant product.

    Returns the projector distance between the action span of the base
    transversal and of the transversal taken orthogonal with respect to a
    random h-invariant product; the spans must agree at regular points.
    """
    alg = setup.alg
    prod = random_invariant_product(alg, setup.isotropy, seed)
    alt = orthogonal_complement(alg, setup.normalizer, prod)
    base_span = canonical_complement(setup, point)
    alt_span = canonical_complement(setup, point, transversal=alt)
    return projector_distance(base_span, alt_span)


@dataclass(frozen=True)
class SplittingReport:
    """Pairing of a form across the canonical splitting at a regular point."""

    pairing: float          # max |form(complement vector, stratum vector)|
    sigma_complement: float  # smallest singular value of the complement block
    sigma_stratum: float     # smallest singular value of the stratum block


def splitting_orthogonality(setup: ReductionSetup, chart: Chart, coords,
                            form_matrix: np.ndarray) -> SplittingReport:
    """Evaluate an ambient form across the canonical splitting.

    ``form_matrix`` is the form in the chart frame at ``coords``; the
    complement and stratum bases are converted into that frame before
    pairing.  For a trivial transversal the pairing is vacuously zero and
    the complement block is reported as nondegenerate by convention.
    """
    point = chart.point(coords)
    comp = canonical_complement(setup, point)
    strat = regular_tangent_space(setup, point)
    push = chart.pushforward(coords)
    cs, *_ = np.linalg.lstsq(push, strat.basis, rcond=None)
    block_strat = cs.T @ form_matrix @ cs
    sigma_strat = float(np.linalg.svd(block_strat, compute_uv=False)[-1])
    if comp.dim == 0:
        return SplittingReport(pairing=0.0, sigma_complement=float("inf"), sigma_stratum=sigma_strat)
    cp, *_ = np.linalg.lstsq(push, comp.basis, rcond=None)
    pairing = float(np.max(np.abs(cp.T @ form_matrix @ cs)))
    block_comp = cp.T @ form_matrix @ cp
    sigma_comp = float(np.linalg.svd(block_comp, compute_uv=False)[-1])
    return SplittingReport(pairing=pairing, sigma_complement=sigma_comp, sigma_stratum=sigma_strat)


# ---------------------------------------------------------------------------
# Adapted coordinates
# ---------------------------------------------------------------------------


class AdaptedChart:
    """Coordinates (y, s) -> exp(sum y_i p_i) . sub_chart(s).

    The first block of coordinates moves transversally to the regular
    stratum along the action of p, the rest reuses a chart of the stratum;
    at y = 0 the coordinate frame splits into the canonical complement and
    the stratum tangent.  Quacks like Chart for the form-field machinery.
    """

    def __init__(self, setup: ReductionSetup, sub_chart: Chart, box: float = 0.5):
        self.setup = setup
        self.sub_chart = sub_chart
        self.config = sub_chart.config
        self.box = float(box)
        self._points: dict[bytes, TangentBundlePoint] = {}
        self._pushes: dict[bytes, np.ndarray] = {}

    @property
    def transversal_dim(self) -> int:
        return self.setup.transversal.dim

    @property
    def coord_dim(self) -> int:
        return self.transversal_dim + self.sub_chart.coord_dim

    def _coords(self, coords) -> np.ndarray:
        c = np.asarray(coords, dtype=float)
        if c.shape != (self.coord_dim,):
            raise InputError(f"expected {self.coord_dim} coordinates, got {c.shape}")
        if np.max(np.abs(c), initial=0.0) > self.box:
            raise ChartRangeError(f"coordinates leave the validity box |c| <= {self.box}")
        return c

    def _split(self, c):
        p = self.transversal_dim
        return c[:p], c[p:]

    def point(self, coords) -> TangentBundlePoint:
        c = self._coords(coords)
        key = c.tobytes()
        hit = self._points.get(key)
        if hit is not None:
            return hit
        y, s = self._split(c)
        alg = self.setup.alg
        big = scipy.linalg.expm(alg.ad(self.setup.transversal.basis @ y))
        inner = self.sub_chart.point(s)
        result = TangentBundlePoint(x=big @ inner.x, v=big @ inner.v)
        self._points[key] = result
        return result

    def pushforward(self, coords) -> np.ndarray:
        c = self._coords(coords)
        key = c.tobytes()
        hit = self._pushes.get(key)
        if hit is not None:
            return hit
        y, s = self._split(c)
        alg = self.setup.alg
        n = alg.dim
        p = self.transversal_dim
        m = alg.ad(self.setup.transversal.basis @ y)
        big = scipy.linalg.expm(m)
        inner = self.sub_chart.point(s)
        push = np.zeros((2 * n, self.coord_dim))
        if p:
            deltas = np.stack([alg.ad(self.setup.transversal.basis[:, i]) for i in range(p)])
            trans = dexp_apply(-m, deltas)
            for i in range(p):
                gen = big @ trans[i]
                push[:n, i] = gen @ inner.x
                push[n:, i] = gen @ inner.v
        sub_push = self.sub_chart.pushforward(s)
        push[:n, p:] = big @ sub_push[:n]
        push[n:, p:] = big @ sub_push[n:]
        self._pushes[key] = push
        return push


@dataclass(frozen=True)
class BlockReport:
    """Block structure of a form in adapted coordinates."""

    off_diagonal: float      # max |entry| coupling transversal and stratum coords
    sigma_transversal: float
    sigma_stratum: float


def adapted_block_report(adapted: AdaptedChart, coords, form_matrix: np.ndarray) -> BlockReport:
    p = adapted.transversal_dim
    if p == 0:
        sig = float(np.linalg.svd(form_matrix, compute_uv=False)[-1])
        return BlockReport(off_diagonal=0.0, sigma_transversal=float("inf"), sigma_stratum=sig)
    top = form_matrix[:p, :p]
    off = form_matrix[:p, p:]
    bottom = form_matrix[p:, p:]
    return BlockReport(
        off_diagonal=float(np.max(np.abs(off))),
        sigma_transversal=float(np.linalg.svd(top, compute_uv=False)[-1]),
        sigma_stratum=float(np.linalg.svd(bottom, compute_uv=False)[-1]),
    )


# ---------------------------------------------------------------------------
# Restricted pencil
# ---------------------------------------------------------------------------


@dataclass
class RestrictedPencilData:
    """Charts and fields for the ambient pencil and its restriction."""

    setup: ReductionSetup
    ambient_chart: Chart
    sub_chart: Chart
    w1_sub: FormField
    w2_sub: FormField
    p1_sub: PoissonField
    p2_sub: PoissonField
    fd_step: float
    _ambient: tuple | None = field(default=None, repr=False)

    def pad_coords(self, sub_coords) -> np.ndarray:
        """Ambient-chart coordinates of a sub-chart point.

        The ambient frame starts with the sub frame, so sub coordinates
        embed by zero padding in both the conjugation and fiber blocks.
        """
        s = np.asarray(sub_coords, dtype=float)
        fh = self.sub_chart.frame_dim
        f = self.ambient_chart.frame_dim
        if s.shape != (2 * fh,):
            raise InputError(f"expected {2 * fh} sub-chart coordinates")
        c = np.zeros(2 * f)
        c[:fh] = s[:fh]
        c[f:f + fh] = s[fh:]
        return c

    def ambient_fields(self):
        """Lazily built ambient form fields and their inverses."""
        if self._ambient is None:
            w1 = canonical_form_field(self.ambient_chart, self.fd_step)
            w2 = combined_form_field(self.ambient_chart, self.fd_step)
            self._ambient = (w1, w2, invert_form(w1), invert_form(w2))
        return self._ambient


def restricted_pencil(setup: ReductionSetup, base_point: TangentBundlePoint,
                      fd_step: float = FD_STEP_DEFAULT) -> RestrictedPencilData:
    """Charts and form fields for the pencil restricted to the sub-orbit bundle.

    The base point must be (a, y) with y in the slice; the sub chart uses
    the moving part of the centralizer as frame, the ambient chart extends
    that frame to all of m so that sub coordinates embed by zero padding.
    """
    fd_step = _check_fd_step(fd_step)
    cfg = setup.config
    if np.linalg.norm(base_point.x - cfg.seed) > 1e-10 * max(1.0, np.linalg.norm(cfg.seed)):
        raise DomainError("restriction base must sit over the orbit seed")
    if setup.slice_space.residual(base_point.v) > REGULARITY_TOL * max(1.0, np.linalg.norm(base_point.v)):
        raise DomainError("restriction base fiber must lie in the slice")
    if not is_regular(setup, base_point):
        raise DomainError("restriction base point is not regular")
    sub_frame = setup.sub_tangent.basis
    rest = complement_within(setup.sub_tangent, cfg.tangent)
    ambient_frame = np.hstack([sub_frame, rest.basis])
    sub_chart = Chart(cfg, base_v=base_point.v, frame=sub_frame)
    ambient_chart = Chart(cfg, base_v=base_point.v, frame=ambient_frame)
    w1 = canonical_form_field(sub_chart, fd_step)
    w2 = combined_form_field(sub_chart, fd_step)
    return RestrictedPencilData(
        setup=setup,
        ambient_chart=ambient_chart,
        sub_chart=sub_chart,
        w1_sub=w1,
        w2_sub=w2,
        p1_sub=invert_form(w1, provenance="restricted"),
        p2_sub=invert_form(w2, provenance="restricted"),
        fd_step=fd_step,
    )


def sample_regular_coords(setup: ReductionSetup, data: RestrictedPencilData, count: int,
                          seed: int, stage: str = "regular-points", scale: float = 0.1,
                          max_attempts: int = 400) -> list[np.ndarray]:
    """Deterministic sub-chart coordinates whose images are regular points."""
    out = []
    attempt = 0
    dim = data.sub_chart.coord_dim
    while len(out) < count:
        if attempt >= max_attempts:
            raise GenericityError(f"could not find {count} regular points in {max_attempts} draws")
        rng = stream(seed, stage, attempt)
        coords = rng.uniform(-scale, scale, dim)
        attempt += 1
        if is_regular(setup, data.sub_chart.point(coords)):
            out.append(coords)
    return out


# ---------------------------------------------------------------------------
# Invariant functions and bracket agreement
# ---------------------------------------------------------------------------


def invariant_function(alg: LieAlgebra, word):
    """Trace of a word in the matrices of x and v, as a function on TO.

    ``word`` is a nonempty sequence over {"x", "v"}; conjugation-invariance
    of the trace makes the function invariant under the group action.
    """
    symbols = tuple(word)
    if not symbols or any(s not in ("x", "v") for s in symbols):
        raise InputError("word must be a nonempty sequence over {'x', 'v'}")

    def fn(point: TangentBundlePoint) -> float:
        mats = {"x": alg.matrix_of(point.x), "v": alg.matrix_of(point.v)}
        acc = mats[symbols[0]]
        for s in symbols[1:]:
            acc = acc @ mats[s]
        return float(np.real(np.trace(acc)))

    fn.word = symbols
    return fn


def chart_differential(chart, fn, coords, fd_step: float = FD_STEP_DEFAULT) -> np.ndarray:
    """Central-difference differential of fn composed with the chart."""
    h = _check_fd_step(fd_step)
    c = np.asarray(coords, dtype=float)
    out = np.empty(chart.coord_dim)
    for i in range(chart.coord_dim):
        plus = fn(chart.point(shifted(c, i, +h)))
        minus = fn(chart.point(shifted(c, i, -h)))
        out[i] = (plus - minus) / (2.0 * h)
    return out


@dataclass(frozen=True)
class BracketAgreement:
    ambient: float
    restricted: float

    @property
    def residual(self) -> float:
        return abs(self.ambient - self.restricted)

    @property
    def relative_residual(self) -> float:
        return self.residual / (1.0 + abs(self.ambient))


def bracket_agreement(setup: ReductionSetup, data: RestrictedPencilData, f, g,
                      coords, t) -> BracketAgreement:
    """Ambient versus restricted pencil bracket of two invariant functions.

    ``coords`` are sub-chart coordinates of a regular point; ``t`` is a
    pencil parameter with t1 + t2 != 0 so both members are invertible.
    """
    t1, t2 = (float(v) for v in (t.t1, t.t2)) if hasattr(t, "t1") else (float(t[0]), float(t[1]))
    if abs(t1 + t2) < 1e-12:
        raise DomainError("pencil parameter lies on the degenerate line t1 + t2 = 0")
    s = np.asarray(coords, dtype=float)
    point = data.sub_chart.point(s)
    if not is_regular(setup, point):
        raise DomainError("image point is not regular")
    c = data.pad_coords(s)
    _, _, p1a, p2a = data.ambient_fields()
    pt_ambient = t1 * p1a(c) + t2 * p2a(c)
    df = chart_differential(data.ambient_chart, f, c, data.fd_step)
    dg = chart_differential(data.ambient_chart, g, c, data.fd_step)
    ambient = float(df @ pt_ambient @ dg)
    pt_sub = t1 * data.p1_sub(s) + t2 * data.p2_sub(s)
    dfs = chart_differential(data.sub_chart, f, s, data.fd_step)
    dgs = chart_differential(data.sub_chart, g, s, data.fd_step)
    restricted = float(dfs @ pt_sub @ dgs)
    return BracketAgreement(ambient=ambient, restricted=restricted)


# ---------------------------------------------------------------------------
# Local freeness and transversality
# ---------------------------------------------------------------------------


def isotropy_excess(setup: ReductionSetup, points) -> int:
    """Max over points of dim(isotropy within the centralizer) - dim(center)."""
    alg = setup.alg
    cent = setup.centralizer
    worst = 0
    for point in points:
        stacked = np.vstack([alg.ad(point.x) @ cent.basis, alg.ad(point.v) @ cent.basis])
        excess = kernel(stacked).dim - setup.center.dim
        worst = max(worst, excess)
    return worst


def transversality_deficiency(setup: ReductionSetup, point: TangentBundlePoint) -> int:
    """Rank deficit of centralizer action plus slice fibers at a slice point."""
    alg = setup.alg
    n = alg.dim
    cent = setup.centralizer
    cols = [
        np.concatenate([alg.bracket(cent.basis[:, i], point.x), alg.bracket(cent.basis[:, i], point.v)])
        for i in range(cent.dim)
    ]
    for j in range(setup.slice_space.dim):
        cols.append(np.concatenate([np.zeros(n), setup.slice_space.basis[:, j]]))
    mat = np.column_stack(cols)
    sig = np.linalg.svd(mat, compute_uv=False)
    rank = int(np.sum(sig > RANK_RTOL * max(sig[0], 1e-300)))
    return 2 * setup.sub_tangent.dim - rank
