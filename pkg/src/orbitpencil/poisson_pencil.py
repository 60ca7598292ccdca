"""Pencils of Poisson bivectors as inverse form matrices.

A bivector field is a matrix field P(coords); the Jacobi identity is
certified on coordinate functions, which is a complete certificate basis
by the Leibniz rule:

    J_ijk = sum_l ( P_li d_l P_jk + P_lj d_l P_ki + P_lk d_l P_ij ) = 0.

The inner derivatives are central differences; residuals land near the
truncation error ~ fd_step^2 for genuine Poisson fields.  The tolerance
ladder is: certify below 1e-5, reject (negative controls) above 1e-3; the
gap guards against silent miscalibration.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, InputError
from .orbit_charts import FD_STEP_DEFAULT, FormField, _check_fd_step, shifted

logger = logging.getLogger(__name__)

# A pencil member counts as singular below this relative spectral cutoff.
FORM_SINGULAR_RTOL = 1e-8


@dataclass(frozen=True)
class PencilParameter:
    """A point (t1, t2) of the pencil plane, away from the origin."""

    t1: float
    t2: float

    def __post_init__(self):
        if self.t1 == 0.0 and self.t2 == 0.0:
            raise InputError("pencil parameter (0, 0) is excluded")


def _as_parameter(t) -> PencilParameter:
    if isinstance(t, PencilParameter):
        return t
    t1, t2 = (float(v) for v in t)
    return PencilParameter(t1, t2)


class PoissonField:
    """A cached skew matrix field with a provenance label."""

    def __init__(self, evaluator, dim: int, provenance: str):
        self._fn = evaluator
        self.dim = int(dim)
        self.provenance = provenance
        self._cache: dict[bytes, np.ndarray] = {}

    def __call__(self, coords) -> np.ndarray:
        c = np.asarray(coords, dtype=float)
        key = c.tobytes()
        hit = self._cache.get(key)
        if hit is None:
            mat = np.asarray(self._fn(c), dtype=float)
            hit = 0.5 * (mat - mat.T)
            self._cache[key] = hit
        return hit


def invert_form(form_field: FormField, provenance: str = "inverse-of-form") -> PoissonField:
    """Pointwise inverse of a nondegenerate form field, re-skew-symmetrised."""

    def evaluator(coords):
        w = form_field(coords)
        sig = np.linalg.svd(w, compute_uv=False)
        if sig[-1] <= FORM_SINGULAR_RTOL * sig[0]:
            raise DegeneracyError("form matrix is singular at the sampled point", coords=coords)
        logger.debug("inverting %s form, cond %.3e", form_field.name, sig[0] / sig[-1])
        inv = np.linalg.inv(w)
        inv = 0.5 * (inv - inv.T)
        resid = np.linalg.norm(inv @ w - np.eye(w.shape[0]))
        if resid > 1e-9:
            raise DegeneracyError(
                f"inverse inaccurate (|PW - I| = {resid:.2e}); form too ill-conditioned",
                coords=coords,
            )
        return inv

    return PoissonField(evaluator, form_field.dim, provenance)


def pencil(p1: PoissonField, p2: PoissonField, t) -> PoissonField:
    """Pointwise linear combination t1 P1 + t2 P2."""
    param = _as_parameter(t)
    if p1.dim != p2.dim:
        raise InputError(f"pencil members disagree in dimension: {p1.dim} vs {p2.dim}")
    return PoissonField(
        lambda c: param.t1 * p1(c) + param.t2 * p2(c),
        p1.dim,
        "pencil",
    )


def jacobi_residual(field: PoissonField, coords, fd_step: float = FD_STEP_DEFAULT) -> float:
    """Max Jacobi-identity residual over coordinate-function triples."""
    h = _check_fd_step(fd_step)
    c = np.asarray(coords, dtype=float)
    d = field.dim
    center = field(c)
    partials = np.empty((d, d, d))
    for l in range(d):
        partials[l] = (field(shifted(c, l, +h)) - field(shifted(c, l, -h))) / (2.0 * h)
    mixed = np.einsum("li,ljk->ijk", center, partials)
    cyc = mixed + np.transpose(mixed, (1, 2, 0)) + np.transpose(mixed, (2, 0, 1))
    return float(np.max(np.abs(cyc)))


def compatibility_residual(p1: PoissonField, p2: PoissonField, coords,
                           fd_step: float = FD_STEP_DEFAULT) -> float:
    """Jacobi residual of the sum; small values certify the pair at the point."""
    return jacobi_residual(pencil(p1, p2, (1.0, 1.0)), coords, fd_step)


@dataclass(frozen=True)
class DegeneracySample:
    """Smallest singular value and numerical rank of one pencil member."""

    t: tuple[float, float]
    sigma_min: float
    rank: int


def degeneracy_profile(p1: PoissonField, p2: PoissonField, coords, t_samples) -> list[DegeneracySample]:
    """sigma_min and rank of t1 P1 + t2 P2 at fixed coords, over t samples."""
    c = np.asarray(coords, dtype=float)
    m1 = p1(c)
    m2 = p2(c)
    out = []
    for t in t_samples:
        param = _as_parameter(t)
        mat = param.t1 * m1 + param.t2 * m2
        sig = np.linalg.svd(mat, compute_uv=False)
        rank = int(np.sum(sig > FORM_SINGULAR_RTOL * max(sig[0], 1e-300)))
        out.append(DegeneracySample(t=(param.t1, param.t2), sigma_min=float(sig[-1]), rank=rank))
    return out


def unit_circle_parameters(count: int = 16) -> list[tuple[float, float]]:
    """t-samples on the unit circle, phased so two land on t1 + t2 = 0."""
    start = 3.0 * np.pi / 4.0
    angles = start + 2.0 * np.pi * np.arange(count) / count
    return [(float(np.cos(a)), float(np.sin(a))) for a in angles]
