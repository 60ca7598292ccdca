"""Configuration, check registry, pipeline orchestration and reports.

A run is fully determined by (configuration, master seed): every random
draw comes from a stream keyed by a stage label and sample index, so
serial and parallel executions produce identical numbers and the JSON
report is byte-identical across reruns.  Wall-clock timings are kept out
of the JSON for that reason; the text rendering shows them.

Check rows carry a short ``anchor`` sentence stating the mathematical
claim being certified, a ``mode`` saying whether the value is an upper
("max") or lower ("min") bounded quantity, and the tolerance actually
used.  Negative controls assert that a deliberately broken input lands
beyond a rejection threshold; the run verdict requires every positive
check to pass and every control to fail as designed.
"""

from __future__ import annotations

import itertools
import json
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import dirac_reduction as dr
from . import families
from . import lie_core as lc
from . import orbit_charts as oc
from . import poisson_pencil as pp
from .errors import ConfigError, WorkbenchError
from .seeding import stream, unit_vector

CHART_SCALE = 0.1  # sampling box for chart coordinates

_FAMILY_LIMITS = {"su": (2, 4), "so": (3, 5)}


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class WorkbenchConfig:
    algebra: dict
    seed_element: dict
    samples: int = 10
    fd_step: float = 1e-4
    tolerances: dict = field(default_factory=dict)
    t_samples: list = field(default_factory=lambda: [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (0.3, 0.7), (1.0, -1.0)])
    seed: int = 0
    checks: object = "all"

    def resolved(self) -> dict:
        """Plain representation echoed into reports."""
        return {
            "algebra": self.algebra,
            "seed_element": self.seed_element,
            "samples": self.samples,
            "fd_step": self.fd_step,
            "tolerances": dict(sorted(self.tolerances.items())),
            "t_samples": [list(t) for t in self.t_samples],
            "seed": self.seed,
            "checks": self.checks if self.checks == "all" else list(self.checks),
        }


def _parse_complex_matrix(rows):
    try:
        mat = np.asarray([[complex(entry[0], entry[1]) for entry in row] for row in rows])
    except (TypeError, IndexError) as exc:
        raise ConfigError(f"custom matrices must be nested [re, im] pairs: {exc}") from exc
    return mat


def encode_complex_matrix(mat: np.ndarray) -> list:
    """Row-major nesting with [re, im] entries, the wire format for matrices."""
    return [[[float(np.real(e)), float(np.imag(e))] for e in row] for row in np.asarray(mat, dtype=complex)]


def config_from_dict(raw: dict) -> WorkbenchConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    known = {"algebra", "seed_element", "samples", "fd_step", "tolerances", "t_samples", "seed", "checks"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown configuration fields: {sorted(unknown)}")
    for required in ("algebra", "seed_element"):
        if required not in raw:
            raise ConfigError(f"missing required field '{required}'")
    cfg = WorkbenchConfig(
        algebra=raw["algebra"],
        seed_element=raw["seed_element"],
        samples=int(raw.get("samples", 10)),
        fd_step=float(raw.get("fd_step", 1e-4)),
        tolerances=dict(raw.get("tolerances", {})),
        t_samples=[
            (float(t[0]), float(t[1]))
            for t in raw.get("t_samples", [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (0.3, 0.7), (1.0, -1.0)])
        ],
        seed=int(raw.get("seed", 0)),
        checks=raw.get("checks", "all"),
    )
    validate_config(cfg)
    return cfg


def validate_config(cfg: WorkbenchConfig) -> None:
    if not (oc.FD_STEP_MIN <= cfg.fd_step <= oc.FD_STEP_MAX):
        raise ConfigError(f"fd_step must lie in [{oc.FD_STEP_MIN}, {oc.FD_STEP_MAX}]")
    if cfg.samples < 8:
        raise ConfigError("samples must be at least 8")
    alg_spec = cfg.algebra
    if not isinstance(alg_spec, dict):
        raise ConfigError("algebra must be an object")
    if "family" in alg_spec:
        fam = alg_spec.get("family")
        if fam not in _FAMILY_LIMITS:
            raise ConfigError(f"unknown algebra family '{fam}'")
        lo, hi = _FAMILY_LIMITS[fam]
        n = alg_spec.get("n")
        if not isinstance(n, int) or not (lo <= n <= hi):
            raise ConfigError(f"{fam}(n) supports {lo} <= n <= {hi}")
    elif "custom" in alg_spec:
        if not isinstance(alg_spec["custom"], list) or not alg_spec["custom"]:
            raise ConfigError("custom algebra needs a nonempty list of basis matrices")
    else:
        raise ConfigError("algebra must give either a family or a custom basis")
    se = cfg.seed_element
    if not isinstance(se, dict) or not ({"diag_spectrum", "coeffs"} & set(se)):
        raise ConfigError("seed_element must give diag_spectrum or coeffs")
    if "diag_spectrum" in se:
        spec = np.asarray(se["diag_spectrum"], dtype=float)
        if spec.size == 0:
            raise ConfigError("diag_spectrum is empty")
        if alg_spec.get("family") == "so":
            if np.allclose(spec, 0.0):
                raise ConfigError("diag_spectrum is degenerate: all rotation angles vanish")
        elif np.allclose(spec - np.mean(spec), 0.0):
            raise ConfigError("diag_spectrum is degenerate: all entries equal")
    for t in cfg.t_samples:
        if t[0] == 0.0 and t[1] == 0.0:
            raise ConfigError("t_samples must avoid (0, 0)")
    if all(abs(t[0] + t[1]) <= 1e-12 for t in cfg.t_samples):
        raise ConfigError("t_samples needs at least one parameter off the degenerate line t1 + t2 = 0")
    if cfg.checks != "all":
        if not isinstance(cfg.checks, (list, tuple)):
            raise ConfigError("checks must be 'all' or a list of names")
        names = {spec.name for spec in REGISTRY}
        unknown = set(cfg.checks) - names
        if unknown:
            raise ConfigError(f"unknown checks: {sorted(unknown)}")
    unknown_tols = set(cfg.tolerances) - {spec.name for spec in REGISTRY}
    if unknown_tols:
        raise ConfigError(f"tolerances for unknown checks: {sorted(unknown_tols)}")


def load_config(path) -> WorkbenchConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"configuration is not valid JSON (line {exc.lineno}, col {exc.colno})") from exc
    return config_from_dict(raw)


def build_algebra(cfg: WorkbenchConfig) -> lc.LieAlgebra:
    spec = cfg.algebra
    if "family" in spec:
        return families.su(spec["n"]) if spec["family"] == "su" else families.so(spec["n"])
    mats = [_parse_complex_matrix(m) for m in spec["custom"]]
    name = spec.get("name", "custom")
    try:
        return lc.algebra_from_matrices(name, np.asarray(mats))
    except WorkbenchError as exc:
        raise ConfigError(f"custom basis rejected: {exc}") from exc


def build_seed(cfg: WorkbenchConfig, alg: lc.LieAlgebra) -> np.ndarray:
    se = cfg.seed_element
    try:
        if "diag_spectrum" in se:
            return families.diagonal_seed(alg, se["diag_spectrum"])
        coeffs = np.asarray(se["coeffs"], dtype=float)
        if coeffs.shape != (alg.dim,):
            raise ConfigError(f"coeffs must have length {alg.dim}")
        return coeffs
    except WorkbenchError as exc:
        raise ConfigError(f"seed element rejected: {exc}") from exc


# ---------------------------------------------------------------------------
# Pipeline context
# ---------------------------------------------------------------------------


@dataclass
class PipelineContext:
    config: WorkbenchConfig
    alg: lc.LieAlgebra
    orbit: oc.OrbitConfig
    setup: dr.ReductionSetup
    data: dr.RestrictedPencilData
    adapted: dr.AdaptedChart
    ambient_coords: list
    regular_coords: list
    p1: pp.PoissonField
    p2: pp.PoissonField
    w1: oc.FormField
    w2: oc.FormField

    @property
    def fd(self) -> float:
        return self.config.fd_step

    @property
    def samples(self) -> int:
        return self.config.samples

    @property
    def seed(self) -> int:
        return self.config.seed


def prepare_context(cfg: WorkbenchConfig) -> PipelineContext:
    alg = build_algebra(cfg)
    seed_elt = build_seed(cfg, alg)
    orbit = oc.orbit_config(alg, seed_elt)
    setup = dr.reduction_setup(orbit, samples=max(8, cfg.samples), seed=cfg.seed)
    base = oc.TangentBundlePoint(x=orbit.seed, v=setup.x0)
    data = dr.restricted_pencil(setup, base, fd_step=cfg.fd_step)
    adapted = dr.AdaptedChart(setup, data.sub_chart)
    w1, w2, p1, p2 = data.ambient_fields()
    ambient_coords = [
        stream(cfg.seed, "ambient-points", i).uniform(-CHART_SCALE, CHART_SCALE, data.ambient_chart.coord_dim)
        for i in range(cfg.samples)
    ]
    regular_coords = dr.sample_regular_coords(setup, data, cfg.samples, seed=cfg.seed,
                                              scale=CHART_SCALE)
    return PipelineContext(
        config=cfg, alg=alg, orbit=orbit, setup=setup, data=data, adapted=adapted,
        ambient_coords=ambient_coords, regular_coords=regular_coords,
        p1=p1, p2=p2, w1=w1, w2=w2,
    )


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CheckSpec:
    name: str
    anchor: str
    tolerance: float
    mode: str          # "max": pass if value <= tol; "min": pass if value >= tol
    kind: str          # "check" or "control"
    stage: str
    fn: object
    applicable: object = None  # optional predicate on the context


@dataclass(frozen=True)
class CheckResult:
    name: str
    anchor: str
    residual: float
    tolerance: float
    mode: str
    passed: bool

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "anchor": self.anchor,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "mode": self.mode,
            "pass": self.passed,
        }


def _algebra_closure(ctx):
    basis = ctx.alg.basis
    comm = np.einsum("aij,bjk->abik", basis, basis)
    comm = comm - np.transpose(comm, (1, 0, 2, 3))
    recon = np.einsum("abc,cij->abij", ctx.alg.structure, basis)
    num = np.linalg.norm(comm - recon, axis=(2, 3))
    den = np.maximum(np.linalg.norm(comm, axis=(2, 3)), 1.0)
    return float(np.max(num / den))


def _algebra_jacobi(ctx):
    return lc.jacobi_residual_of_structure(ctx.alg.structure)


def _algebra_invariance(ctx):
    ad = ctx.alg.ad_basis
    return float(np.max(np.abs(ad + np.transpose(ad, (0, 2, 1)))))


def _orbit_splitting(ctx):
    orbit = ctx.orbit
    comp = lc.kernel(orbit.stabilizer.basis.T)
    worst = lc.projector_distance(orbit.tangent, comp)
    for j in range(orbit.stabilizer.dim):
        worst = max(worst, float(np.linalg.norm(ctx.alg.bracket(orbit.stabilizer.basis[:, j], orbit.seed))))
    return worst


def _chart_exactness(ctx):
    chart = ctx.data.ambient_chart
    h = 1e-5
    worst = 0.0
    for i in range(min(ctx.samples, 10)):
        coords = stream(ctx.seed, "chart-exactness", i).uniform(-CHART_SCALE, CHART_SCALE, chart.coord_dim)
        push = chart.pushforward(coords)
        fd = np.empty_like(push)
        for j in range(chart.coord_dim):
            plus = chart.point(oc.shifted(coords, j, +h))
            minus = chart.point(oc.shifted(coords, j, -h))
            fd[:, j] = np.concatenate([plus.x - minus.x, plus.v - minus.v]) / (2.0 * h)
        worst = max(worst, float(np.max(np.abs(push - fd))))
    return worst


def _spectrum_preservation(ctx):
    chart = ctx.data.ambient_chart
    worst = 0.0
    for i in range(100):
        coords = stream(ctx.seed, "spectrum-points", i).uniform(-CHART_SCALE, CHART_SCALE, chart.coord_dim)
        spec_err, fiber_err = oc.point_residuals(ctx.orbit, chart.point(coords))
        worst = max(worst, spec_err, fiber_err)
    return worst


def _setup_residual(name):
    def fn(ctx):
        return dr.setup_residuals(ctx.setup)[name]
    return fn


def _closedness(field_attr):
    def fn(ctx):
        form = getattr(ctx, field_attr)
        return max(oc.closedness_residual(form, c, ctx.fd) for c in ctx.ambient_coords)
    return fn


def _nondegeneracy(field_attr):
    def fn(ctx):
        form = getattr(ctx, field_attr)
        return min(float(np.linalg.svd(form(c), compute_uv=False)[-1]) for c in ctx.ambient_coords)
    return fn


def _form_invariance(ctx):
    chart = ctx.data.ambient_chart
    worst = 0.0
    for i in range(3):
        rng = stream(ctx.seed, "form-invariance", i)
        zeta = 0.3 * unit_vector(rng, ctx.alg.dim)
        rot = scipy.linalg.expm(ctx.alg.ad(zeta))
        moved = oc.Chart(ctx.orbit, base_v=chart.base_v, frame=chart.frame, rotation=rot)
        coords = ctx.ambient_coords[i % len(ctx.ambient_coords)]
        w1_moved = oc.canonical_form_matrix(moved, coords, ctx.fd)
        w2_moved = w1_moved + oc.orbit_form_pullback_matrix(moved, coords)
        worst = max(
            worst,
            float(np.max(np.abs(w1_moved - ctx.w1(coords)))),
            float(np.max(np.abs(w2_moved - ctx.w2(coords)))),
        )
    return worst


def _control_coords(ctx) -> np.ndarray:
    # Fixed alternating pattern: controls must trip for every seed.
    dim = ctx.data.ambient_chart.coord_dim
    return 0.09 * np.array([1.0 if i % 2 == 0 else -1.0 for i in range(dim)])


def _control_corrupted_closedness(ctx):
    # Replace one entry by a nonlinear function of a coordinate the entry
    # does not otherwise couple to; closedness must reject it.
    base = ctx.w1

    def corrupted(c):
        mat = np.array(base(c), copy=True)
        bump = np.sin(3.0 * c[2])
        mat[0, 1] += bump
        mat[1, 0] -= bump
        return mat

    bad = oc.FormField(corrupted, base.dim, "corrupted")
    return oc.closedness_residual(bad, _control_coords(ctx), ctx.fd)


def _jacobi(field_attr):
    def fn(ctx):
        pfield = getattr(ctx, field_attr)
        return max(pp.jacobi_residual(pfield, c, ctx.fd) for c in ctx.ambient_coords)
    return fn


def _compatibility(ctx):
    return max(pp.compatibility_residual(ctx.p1, ctx.p2, c, ctx.fd) for c in ctx.ambient_coords)


def _corrupted_field(ctx) -> pp.PoissonField:
    base = ctx.p1

    def corrupted(c):
        mat = np.array(base(c), copy=True)
        bump = c[2] * c[3]
        mat[0, 1] += bump
        mat[1, 0] -= bump
        return mat

    return pp.PoissonField(corrupted, base.dim, "pencil")


def _jacobi_homogeneity(ctx):
    # Power-of-two scalings are exact in floating point; for the generic
    # factor use the corrupted field, whose residual is far from the
    # cancellation floor.
    coords = ctx.ambient_coords[0]
    worst = 0.0
    base = pp.jacobi_residual(ctx.p1, coords, ctx.fd)
    scaled = pp.jacobi_residual(pp.PoissonField(lambda c: 2.0 * ctx.p1(c), ctx.p1.dim, "pencil"), coords, ctx.fd)
    worst = max(worst, abs(scaled - 4.0 * base) / max(4.0 * base, 1e-300))
    bad = _corrupted_field(ctx)
    base = pp.jacobi_residual(bad, coords, ctx.fd)
    for lam in (2.0, 10.0):
        scaled = pp.jacobi_residual(
            pp.PoissonField(lambda c, s=lam: s * bad(c), bad.dim, "pencil"), coords, ctx.fd
        )
        worst = max(worst, abs(scaled - lam ** 2 * base) / max(lam ** 2 * base, 1e-300))
    return worst


def _pencil_circle(ctx):
    coords = ctx.ambient_coords[0]
    worst = 0.0
    for t in pp.unit_circle_parameters(16):
        worst = max(worst, pp.jacobi_residual(pp.pencil(ctx.p1, ctx.p2, t), coords, ctx.fd))
    return worst


def _degeneracy(on_line: bool, restricted: bool):
    def fn(ctx):
        if restricted:
            p1, p2 = ctx.data.p1_sub, ctx.data.p2_sub
            coords = ctx.regular_coords[0]
        else:
            p1, p2 = ctx.p1, ctx.p2
            coords = ctx.ambient_coords[0]
        profile = pp.degeneracy_profile(p1, p2, coords, pp.unit_circle_parameters(16))
        on = [s.sigma_min for s in profile if abs(s.t[0] + s.t[1]) < 1e-12]
        off = [s.sigma_min for s in profile if abs(s.t[0] + s.t[1]) >= 1e-12]
        return max(on) if on_line else min(off)
    return fn


def _control_corrupted_jacobi(ctx):
    bad = _corrupted_field(ctx)
    return pp.jacobi_residual(bad, _control_coords(ctx), ctx.fd)


def _splitting_reports(ctx):
    reports = []
    members = [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (0.3, 0.7), (2.0, -1.0)]
    for s in ctx.regular_coords:
        c = ctx.data.pad_coords(s)
        m1 = ctx.w1(c)
        m2 = ctx.w2(c)
        for t1, t2 in members:
            reports.append(
                dr.splitting_orthogonality(ctx.setup, ctx.data.ambient_chart, c, t1 * m1 + t2 * m2)
            )
    return reports


def _splitting_pairing(ctx):
    return max(r.pairing for r in _splitting_reports(ctx))


def _splitting_nondegeneracy(ctx):
    return min(min(r.sigma_complement, r.sigma_stratum) for r in _splitting_reports(ctx))


def _adapted_reports(ctx, offsets):
    p_dim = ctx.setup.transversal.dim
    reports = []
    for s in ctx.regular_coords[:5]:
        for y in offsets:
            coords = np.concatenate([y, s]) if p_dim else np.asarray(s, dtype=float)
            w1 = oc.canonical_form_matrix(ctx.adapted, coords, ctx.fd)
            w2 = w1 + oc.orbit_form_pullback_matrix(ctx.adapted, coords)
            reports.append(dr.adapted_block_report(ctx.adapted, coords, w1))
            reports.append(dr.adapted_block_report(ctx.adapted, coords, w2))
    return reports


def _adapted_zero_offsets(ctx):
    p_dim = ctx.setup.transversal.dim
    return [np.zeros(p_dim)] if p_dim else [np.zeros(0)]


def _adapted_off_diagonal(ctx):
    return max(r.off_diagonal for r in _adapted_reports(ctx, _adapted_zero_offsets(ctx)))


def _adapted_nondegeneracy(ctx):
    return min(min(r.sigma_transversal, r.sigma_stratum) for r in _adapted_reports(ctx, _adapted_zero_offsets(ctx)))


def _control_adapted_off(ctx):
    p_dim = ctx.setup.transversal.dim
    offsets = [0.05 * unit_vector(stream(ctx.seed, "adapted-offsets", i), p_dim) for i in range(3)]
    reports = []
    for y in offsets:
        coords = np.concatenate([y, ctx.regular_coords[0]])
        w1 = oc.canonical_form_matrix(ctx.adapted, coords, ctx.fd)
        reports.append(dr.adapted_block_report(ctx.adapted, coords, w1))
    return max(r.off_diagonal for r in reports)


def _product_complement_independence(ctx):
    trials = max(20, ctx.samples)
    return lc.complement_independence(ctx.alg, ctx.setup.isotropy, seed=ctx.seed, trials=trials).paired


def _action_complement_independence(ctx):
    worst = 0.0
    for i, s in enumerate(ctx.regular_coords[:3]):
        point = ctx.data.sub_chart.point(s)
        worst = max(worst, dr.complement_product_independence(ctx.setup, point, seed=(ctx.seed << 8) + i))
    return worst


def _restricted_closedness(ctx):
    return max(
        oc.closedness_residual(form, s, ctx.fd)
        for form in (ctx.data.w1_sub, ctx.data.w2_sub)
        for s in ctx.regular_coords
    )


def _restricted_nondegeneracy(ctx):
    return min(
        float(np.linalg.svd(form(s), compute_uv=False)[-1])
        for form in (ctx.data.w1_sub, ctx.data.w2_sub)
        for s in ctx.regular_coords
    )


def _restricted_compatibility(ctx):
    worst = 0.0
    for s in ctx.regular_coords:
        worst = max(
            worst,
            pp.jacobi_residual(ctx.data.p1_sub, s, ctx.fd),
            pp.jacobi_residual(ctx.data.p2_sub, s, ctx.fd),
            pp.compatibility_residual(ctx.data.p1_sub, ctx.data.p2_sub, s, ctx.fd),
        )
    return worst


_BRACKET_WORDS = [("v", "v"), ("x", "x", "v", "v"), ("x", "v", "x", "v"), ("v", "v", "v", "v")]


def _bracket_agreement(ctx):
    fns = [dr.invariant_function(ctx.alg, w) for w in _BRACKET_WORDS]
    params = [t for t in ctx.config.t_samples if abs(t[0] + t[1]) > 1e-12]
    worst = 0.0
    for f, g in itertools.combinations(fns, 2):
        for t in params:
            for s in ctx.regular_coords[:5]:
                worst = max(worst, dr.bracket_agreement(ctx.setup, ctx.data, f, g, s, t).relative_residual)
    return worst


def _invariant_function_invariance(ctx):
    fns = [dr.invariant_function(ctx.alg, w) for w in _BRACKET_WORDS]
    point = ctx.data.sub_chart.point(ctx.regular_coords[0])
    worst = 0.0
    for i in range(20):
        rng = stream(ctx.seed, "function-invariance", i)
        rot = scipy.linalg.expm(ctx.alg.ad(unit_vector(rng, ctx.alg.dim)))
        moved = oc.TangentBundlePoint(x=rot @ point.x, v=rot @ point.v)
        for f in fns:
            worst = max(worst, abs(f(moved) - f(point)))
    return worst


def _local_freeness(ctx):
    points = [ctx.data.sub_chart.point(s) for s in ctx.regular_coords]
    return float(dr.isotropy_excess(ctx.setup, points))


def _control_zero_section_isotropy(ctx):
    zero = oc.TangentBundlePoint(x=ctx.orbit.seed, v=np.zeros(ctx.alg.dim))
    return float(dr.isotropy_excess(ctx.setup, [zero]))


def _transversality(ctx):
    worst = 0
    evaluated = 0
    for i in range(min(ctx.samples, 5)):
        rng = stream(ctx.seed, "slice-points", i)
        y = ctx.setup.slice_space.basis @ unit_vector(rng, ctx.setup.slice_space.dim)
        point = oc.TangentBundlePoint(x=ctx.orbit.seed, v=y)
        if not dr.is_regular(ctx.setup, point):
            continue
        evaluated += 1
        worst = max(worst, dr.transversality_deficiency(ctx.setup, point))
    if evaluated == 0:
        # a vacuous pass would be meaningless; report an audit failure
        return float(2 * ctx.setup.sub_tangent.dim)
    return float(worst)


def _control_zero_section_transversality(ctx):
    zero = oc.TangentBundlePoint(x=ctx.orbit.seed, v=np.zeros(ctx.alg.dim))
    return float(dr.transversality_deficiency(ctx.setup, zero))


def _slice_normalization(ctx):
    moved = lc.span(ctx.alg.ad(ctx.setup.x0) @ ctx.orbit.stabilizer.basis)
    worst = 0.0
    for i in range(ctx.samples):
        rng = stream(ctx.seed, "slice-normalization", i)
        y = ctx.orbit.tangent.basis @ unit_vector(rng, ctx.orbit.tangent.dim)
        z, _ = dr.slice_normal_form(ctx.setup, y, max_iter=200, tol=1e-8)
        resid = float(np.linalg.norm(moved.basis.T @ z)) if moved.dim else 0.0
        worst = max(worst, resid)
    return worst


def _slice_isometry(ctx):
    worst = 0.0
    for i in range(ctx.samples):
        rng = stream(ctx.seed, "slice-normalization", i)
        y = ctx.orbit.tangent.basis @ unit_vector(rng, ctx.orbit.tangent.dim)
        z, _ = dr.slice_normal_form(ctx.setup, y, max_iter=200, tol=1e-8)
        worst = max(worst, abs(np.linalg.norm(z) - np.linalg.norm(y)))
    return worst


def _has_transversal(ctx):
    return ctx.setup.transversal.dim > 0


REGISTRY: list[CheckSpec] = [
    CheckSpec("algebra_closure", "basis brackets stay inside the basis span", 1e-12, "max", "check", "algebra", _algebra_closure),
    CheckSpec("algebra_jacobi", "structure constants satisfy the Jacobi identity", 1e-12, "max", "check", "algebra", _algebra_jacobi),
    CheckSpec("algebra_invariance", "trace product is invariant: adjoint operators are skew", 1e-12, "max", "check", "algebra", _algebra_invariance),
    CheckSpec("orbit_splitting", "stabilizer kernel and orbit tangent image split the algebra orthogonally", 1e-8, "max", "check", "orbit", _orbit_splitting),
    CheckSpec("chart_exactness", "chart derivatives match central finite differences", 1e-8, "max", "check", "orbit", _chart_exactness),
    CheckSpec("spectrum_preservation", "chart points keep the seed spectrum and tangent fibers", 1e-8, "max", "check", "orbit", _spectrum_preservation),
    CheckSpec("isotropy_in_stabilizer", "principal isotropy algebra sits inside the orbit stabilizer", 1e-10, "max", "check", "setup", _setup_residual("isotropy_in_stabilizer")),
    CheckSpec("seed_commutes_with_isotropy", "slice seed commutes with the principal isotropy algebra", 1e-10, "max", "check", "setup", _setup_residual("seed_commutes_with_isotropy")),
    CheckSpec("slice_commutes_with_isotropy", "the whole slice commutes with the principal isotropy algebra", 1e-10, "max", "check", "setup", _setup_residual("slice_commutes_with_isotropy")),
    CheckSpec("slice_inside_sub_tangent", "slice lies inside the moving part of the centralizer", 1e-8, "max", "check", "setup", _setup_residual("slice_inside_sub_tangent")),
    CheckSpec("slice_matches_sub_complement", "slice equals the complement of the moved sub-stabilizer", 1e-8, "max", "check", "setup", _setup_residual("slice_matches_sub_complement")),
    CheckSpec("orbit_seed_in_centralizer", "orbit seed lies in the centralizer of the isotropy algebra", 1e-10, "max", "check", "setup", _setup_residual("orbit_seed_in_centralizer")),
    CheckSpec("normalizer_splitting", "normalizer and its orthocomplement span the algebra", 1e-10, "max", "check", "setup", _setup_residual("normalizer_splitting")),
    CheckSpec("fixed_plus_isotropy_is_normalizer", "fixed vectors plus the isotropy algebra give the normalizer", 1e-8, "max", "check", "setup", _setup_residual("fixed_plus_isotropy_is_normalizer")),
    CheckSpec("centralizer_inside_normalizer", "centralizer is contained in the normalizer", 1e-10, "max", "check", "setup", _setup_residual("centralizer_inside_normalizer")),
    CheckSpec("subalgebras_closed", "every constructed subalgebra is bracket-closed", 1e-10, "max", "check", "setup", _setup_residual("subalgebras_closed")),
    CheckSpec("canonical_closedness", "canonical 2-form is closed", 1e-5, "max", "check", "forms", _closedness("w1")),
    CheckSpec("combined_closedness", "canonical plus pulled-back orbit form is closed", 1e-5, "max", "check", "forms", _closedness("w2")),
    CheckSpec("canonical_nondegeneracy", "canonical 2-form is nondegenerate at sampled points", 1e-6, "min", "check", "forms", _nondegeneracy("w1")),
    CheckSpec("combined_nondegeneracy", "combined 2-form is nondegenerate at sampled points", 1e-6, "min", "check", "forms", _nondegeneracy("w2")),
    CheckSpec("form_invariance", "both forms are invariant under the group action", 1e-8, "max", "check", "forms", _form_invariance),
    CheckSpec("control_corrupted_closedness", "corrupting one entry breaks closedness beyond the rejection bar", 1e-2, "min", "control", "forms", _control_corrupted_closedness),
    CheckSpec("pencil_jacobi_canonical", "inverse of the canonical form satisfies the Jacobi identity", 1e-5, "max", "check", "pencil", _jacobi("p1")),
    CheckSpec("pencil_jacobi_combined", "inverse of the combined form satisfies the Jacobi identity", 1e-5, "max", "check", "pencil", _jacobi("p2")),
    CheckSpec("pencil_compatibility", "the sum of the two inverse bivectors satisfies the Jacobi identity", 1e-5, "max", "check", "pencil", _compatibility),
    CheckSpec("jacobi_homogeneity", "the Jacobi residual scales quadratically under bivector scaling", 1e-6, "max", "check", "pencil", _jacobi_homogeneity),
    CheckSpec("pencil_circle", "Jacobi residual stays small on the whole unit circle of parameters", 4e-5, "max", "check", "pencil", _pencil_circle),
    CheckSpec("control_corrupted_jacobi", "corrupting one bivector entry breaks the Jacobi identity", 1e-3, "min", "control", "pencil", _control_corrupted_jacobi),
    CheckSpec("splitting_pairing", "invariant forms pair action complement and regular stratum to zero", 1e-8, "max", "check", "splitting", _splitting_pairing),
    CheckSpec("splitting_nondegeneracy", "both restricted blocks of the splitting stay nondegenerate", 1e-6, "min", "check", "splitting", _splitting_nondegeneracy),
    CheckSpec("adapted_off_diagonal", "adapted coordinates block-diagonalise invariant forms on the stratum", 1e-8, "max", "check", "splitting", _adapted_off_diagonal),
    CheckSpec("adapted_nondegeneracy", "both diagonal blocks in adapted coordinates are nondegenerate", 1e-6, "min", "check", "splitting", _adapted_nondegeneracy),
    CheckSpec("control_adapted_off_submanifold", "off the stratum the adapted blocks couple again", 1e-6, "min", "control", "splitting", _control_adapted_off, _has_transversal),
    CheckSpec("product_complement_independence", "complement of the normalizer plus isotropy is product independent", 1e-8, "max", "check", "splitting", _product_complement_independence),
    CheckSpec("action_complement_independence", "the canonical complement is independent of the invariant product", 1e-8, "max", "check", "splitting", _action_complement_independence),
    CheckSpec("restricted_closedness", "restricted forms stay closed on the sub-orbit bundle", 1e-5, "max", "check", "restricted", _restricted_closedness),
    CheckSpec("restricted_nondegeneracy", "restricted forms stay nondegenerate on the sub-orbit bundle", 1e-6, "min", "check", "restricted", _restricted_nondegeneracy),
    CheckSpec("restricted_compatibility", "restricted inverse bivectors form a compatible pair", 1e-5, "max", "check", "restricted", _restricted_compatibility),
    CheckSpec("invariant_function_invariance", "trace-word functions are invariant under random conjugations", 1e-10, "max", "check", "brackets", _invariant_function_invariance),
    CheckSpec("bracket_agreement", "ambient and restricted pencil brackets agree on invariant functions", 1e-5, "max", "check", "brackets", _bracket_agreement),
    CheckSpec("local_freeness", "isotropy inside the centralizer never exceeds its center at regular points", 0.5, "max", "check", "freeness", _local_freeness),
    CheckSpec("control_zero_section_isotropy", "the zero section carries excess isotropy", 0.5, "min", "control", "freeness", _control_zero_section_isotropy),
    CheckSpec("transversality", "centralizer action plus slice fibers span the sub-orbit bundle tangent", 0.5, "max", "check", "freeness", _transversality),
    CheckSpec("control_zero_section_transversality", "the spanning audit fails on the zero section", 0.5, "min", "control", "freeness", _control_zero_section_transversality),
    CheckSpec("slice_normalization", "stabilizer conjugations rotate any tangent vector into the slice", 1e-8, "max", "check", "freeness", _slice_normalization),
    CheckSpec("slice_isometry", "slice normalisation preserves norms", 1e-10, "max", "check", "freeness", _slice_isometry),
    CheckSpec("degeneracy_on_line", "the ambient pencil degenerates where the parameters cancel", 1e-8, "max", "check", "degeneracy", _degeneracy(True, False)),
    CheckSpec("degeneracy_off_line", "away from the cancellation line the ambient pencil is nondegenerate", 1e-4, "min", "check", "degeneracy", _degeneracy(False, False)),
    CheckSpec("restricted_degeneracy_on_line", "the restricted pencil degenerates where the parameters cancel", 1e-8, "max", "check", "degeneracy", _degeneracy(True, True)),
    CheckSpec("restricted_degeneracy_off_line", "away from the cancellation line the restricted pencil is nondegenerate", 1e-4, "min", "check", "degeneracy", _degeneracy(False, True)),
]


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------


@dataclass
class ReductionReport:
    config: dict
    dims: dict
    reduction: str  # "trivial" when the principal isotropy algebra vanishes
    checks: list
    negative_controls: list
    timing: dict
    verdict: str
    error: dict | None = None

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {
            "config": self.config,
            "dims": self.dims,
            "reduction": self.reduction,
            "checks": [c.to_dict() for c in self.checks],
            "negative_controls": [c.to_dict() for c in self.negative_controls],
            "verdict": self.verdict,
        }
        if self.error is not None:
            out["error"] = self.error
        if include_timing:
            out["timing_ms"] = self.timing
        return out

    def to_json(self) -> str:
        # Timing is wall-clock noise and is deliberately left out so that
        # reruns with the same config and seed emit identical bytes.
        return json.dumps(self.to_dict(include_timing=False), indent=2, allow_nan=False)

    def to_text(self) -> str:
        lines = []
        lines.append(f"verdict: {self.verdict}")
        lines.append(f"reduction: {self.reduction}")
        lines.append("dims: " + ", ".join(f"{k}={v}" for k, v in self.dims.items()))
        header = f"{'check':38s} {'mode':4s} {'residual':>13s} {'tolerance':>10s} {'verdict':>8s}"
        lines.append(header)
        lines.append("-" * len(header))
        for row in self.checks:
            lines.append(
                f"{row.name:38s} {row.mode:4s} {row.residual:13.4e} {row.tolerance:10.1e} "
                f"{'pass' if row.passed else 'FAIL':>8s}"
            )
        if self.negative_controls:
            lines.append("negative controls (these must trip):")
            for row in self.negative_controls:
                lines.append(
                    f"{row.name:38s} {row.mode:4s} {row.residual:13.4e} {row.tolerance:10.1e} "
                    f"{'pass' if row.passed else 'FAIL':>8s}"
                )
        if self.error is not None:
            lines.append(f"error at stage {self.error['stage']}: {self.error['message']}")
        if self.timing:
            lines.append("timing (ms): " + ", ".join(f"{k}={v:.1f}" for k, v in self.timing.items()))
        return "\n".join(lines) + "\n"


def _finite(value) -> float:
    value = float(value)
    if not np.isfinite(value):
        # min-mode aggregates can be vacuously unbounded; clamp for JSON.
        return float(np.sign(value)) * 1e300
    return value


def run_pipeline(cfg: WorkbenchConfig, parallel: bool = False) -> ReductionReport:
    """Run every enabled check and assemble the report.

    Raises ConfigError for invalid configurations; any other stage failure
    is captured inside the report with verdict "fail".
    """
    validate_config(cfg)
    selected = set(s.name for s in REGISTRY) if cfg.checks == "all" else set(cfg.checks)
    timing: dict = {}
    t0 = time.perf_counter()
    try:
        ctx = prepare_context(cfg)
    except WorkbenchError as exc:
        return ReductionReport(
            config=cfg.resolved(), dims={}, reduction="unknown", checks=[],
            negative_controls=[], timing={}, verdict="fail",
            error={"stage": "setup", "message": str(exc)},
        )
    timing["prepare"] = (time.perf_counter() - t0) * 1e3

    specs = [s for s in REGISTRY if s.name in selected and (s.applicable is None or s.applicable(ctx))]

    def run_one(spec: CheckSpec):
        start = time.perf_counter()
        value = _finite(spec.fn(ctx))
        elapsed = (time.perf_counter() - start) * 1e3
        tol = float(cfg.tolerances.get(spec.name, spec.tolerance))
        passed = value <= tol if spec.mode == "max" else value >= tol
        return CheckResult(spec.name, spec.anchor, value, tol, spec.mode, passed), elapsed

    results: dict[str, CheckResult] = {}
    error = None
    if parallel:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=4) as pool:
            futures = [(spec, pool.submit(run_one, spec)) for spec in specs]
            for spec, fut in futures:
                try:
                    result, elapsed = fut.result()
                except Exception as exc:  # report the stage, fail the run
                    error = {"stage": spec.stage, "check": spec.name, "message": str(exc)}
                    break
                results[spec.name] = result
                timing[spec.stage] = timing.get(spec.stage, 0.0) + elapsed
    else:
        for spec in specs:
            try:
                result, elapsed = run_one(spec)
            except Exception as exc:  # report the stage, fail the run
                error = {"stage": spec.stage, "check": spec.name, "message": str(exc)}
                break
            results[spec.name] = result
            timing[spec.stage] = timing.get(spec.stage, 0.0) + elapsed

    finished = [(s, results[s.name]) for s in specs if s.name in results]
    checks = [r for s, r in finished if s.kind == "check"]
    controls = [r for s, r in finished if s.kind == "control"]
    verdict = "pass" if error is None and all(r.passed for _, r in finished) else "fail"
    return ReductionReport(
        config=cfg.resolved(),
        dims=ctx.setup.dims(),
        reduction="trivial" if ctx.setup.isotropy.dim == 0 else "nontrivial",
        checks=checks,
        negative_controls=controls,
        timing=timing,
        verdict=verdict,
        error=error,
    )


def emit_report(report: ReductionReport, path, fmt: str = "json") -> None:
    if fmt not in ("json", "text"):
        raise ConfigError(f"unknown report format '{fmt}'")
    payload = report.to_json() if fmt == "json" else report.to_text()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(payload)


def load_report(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
