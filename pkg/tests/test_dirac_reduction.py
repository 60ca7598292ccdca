import numpy as np
import pytest

from orbitpencil import dirac_reduction as dr
from orbitpencil import lie_core as lc
from orbitpencil import orbit_charts as oc
from orbitpencil import poisson_pencil as pp
from orbitpencil.errors import DomainError
from orbitpencil.seeding import stream, unit_vector


def stabilizer_dim_oracle(alg, stab_basis, x):
    """dim {y in span : [x, y] = 0} via matrix commutators and an SVD."""
    mx = alg.matrix_of(x)
    cols = []
    for j in range(stab_basis.shape[1]):
        mj = alg.matrix_of(stab_basis[:, j])
        cols.append(alg.element_from_matrix(mx @ mj - mj @ mx))
    mat = np.column_stack(cols)
    sig = np.linalg.svd(mat, compute_uv=False)
    rank = int(np.sum(sig > 1e-9 * max(sig[0], 1.0)))
    return stab_basis.shape[1] - rank


# ---------------------------------------------------------------------------
# Principal isotropy and setup
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "fixture,expected_h",
    [("setup_su2", 0), ("setup_cp2", 1), ("setup_su3_regular", 0)],
)
def test_principal_isotropy_dimension(request, fixture, expected_h):
    setup = request.getfixturevalue(fixture)
    assert setup.isotropy.dim == expected_h
    # kernel oracle on the chosen sample
    alg = setup.alg
    dim = stabilizer_dim_oracle(alg, setup.config.stabilizer.basis, setup.x0)
    assert dim == expected_h


def test_cp2_setup_dimensions_pinned(setup_cp2):
    assert setup_cp2.dims() == {
        "k": 4, "m": 4, "h": 1, "n(h)": 4, "p": 4,
        "g_hat": 4, "k_hat": 2, "m_hat": 2, "slice": 1, "z(g_hat)": 1,
    }


def test_su2_setup_is_trivial_reduction(setup_su2):
    dims = setup_su2.dims()
    assert dims["h"] == 0 and dims["p"] == 0
    assert dims["g_hat"] == 3 and dims["m_hat"] == dims["m"]
    assert dims["z(g_hat)"] == 0


def test_setup_residuals_tight(setup_cp2, setup_su2, setup_su3_regular):
    for setup in (setup_cp2, setup_su2, setup_su3_regular):
        res = dr.setup_residuals(setup)
        assert res["slice_commutes_with_isotropy"] <= 1e-10
        assert res["seed_commutes_with_isotropy"] <= 1e-10
        assert max(res.values()) <= 1e-8


# ---------------------------------------------------------------------------
# Slice normalisation
# ---------------------------------------------------------------------------


def test_slice_normal_form_fixed_point(setup_cp2):
    y = 0.8 * setup_cp2.x0
    z, iterations = dr.slice_normal_form(setup_cp2, y)
    assert iterations == 0
    assert np.array_equal(z, y)


def test_slice_normal_form_su2_quarter_turn(su2, pauli_elements):
    # x0 = E1, y = E2: the maximiser is a quarter turn about E3, y' = +/-E1
    e1, e2, e3 = pauli_elements
    config = oc.orbit_config(su2, e3)
    setup = dr.reduction_setup(config, samples=16, seed=0)
    # rebuild with the closed-form slice seed: rotate so x0 = E1 direction
    setup = dr.ReductionSetup(
        config=config, x0=e1 / np.linalg.norm(e1), isotropy=setup.isotropy,
        normalizer=setup.normalizer, transversal=setup.transversal,
        centralizer=setup.centralizer, sub_stabilizer=setup.sub_stabilizer,
        sub_tangent=setup.sub_tangent,
        slice_space=lc.span(e1), center=setup.center,
    )
    z, _ = dr.slice_normal_form(setup, e2)
    overlap = abs(np.dot(z, e1)) / (np.linalg.norm(z) * np.linalg.norm(e1))
    assert overlap >= 1.0 - 1e-9
    assert abs(np.linalg.norm(z) - np.linalg.norm(e2)) <= 1e-10


def test_slice_normal_form_batch_cp2(setup_cp2):
    config = setup_cp2.config
    moved = lc.span(setup_cp2.alg.ad(setup_cp2.x0) @ config.stabilizer.basis)
    for i in range(50):
        rng = stream(99, "slice-batch", i)
        y = config.tangent.basis @ unit_vector(rng, config.tangent.dim)
        z, iterations = dr.slice_normal_form(setup_cp2, y, max_iter=200, tol=1e-8)
        assert iterations <= 200
        assert np.linalg.norm(moved.basis.T @ z) <= 1e-8
        assert abs(np.linalg.norm(z) - 1.0) <= 1e-10


def test_slice_normal_form_rejects_offspace_input(setup_cp2):
    with pytest.raises(DomainError):
        dr.slice_normal_form(setup_cp2, setup_cp2.config.seed)


# ---------------------------------------------------------------------------
# Regularity, tangent spaces, complements
# ---------------------------------------------------------------------------


def test_isotropy_algebra_base_cases(setup_su2, setup_cp2):
    config = setup_su2.config
    zero_section = oc.TangentBundlePoint(x=config.seed, v=np.zeros(3))
    iso = dr.isotropy_algebra(setup_su2, zero_section)
    assert lc.projector_distance(iso, config.stabilizer) <= 1e-10
    # su(2) point (E3, E1)-style: trivial isotropy
    point = oc.TangentBundlePoint(x=config.seed, v=setup_su2.x0)
    assert dr.isotropy_algebra(setup_su2, point).dim == 0
    # generic slice point of the nontrivial configuration: exactly h
    point2 = oc.TangentBundlePoint(x=setup_cp2.config.seed, v=setup_cp2.x0)
    iso2 = dr.isotropy_algebra(setup_cp2, point2)
    assert iso2.dim == setup_cp2.isotropy.dim
    assert lc.projector_distance(iso2, setup_cp2.isotropy) <= 1e-8
    assert dr.is_regular(setup_cp2, point2)


def test_regular_tangent_space(setup_su2, setup_cp2, data_cp2, regular_coords_cp2):
    # trivial isotropy: the whole ambient tangent space
    base = oc.TangentBundlePoint(x=setup_su2.config.seed, v=setup_su2.x0)
    full = dr.regular_tangent_space(setup_su2, base)
    assert full.dim == 2 * setup_su2.config.orbit_dim
    # nontrivial: dimension equals twice the sub-orbit dimension, and the
    # sub-chart tangent image sits inside the fixed space
    for coords in regular_coords_cp2[:3]:
        point = data_cp2.sub_chart.point(coords)
        fixed = dr.regular_tangent_space(setup_cp2, point)
        assert fixed.dim == 2 * setup_cp2.sub_tangent.dim
        push = data_cp2.sub_chart.pushforward(coords)
        inside = lc.span(push)
        assert lc.subspace_contains(fixed, inside) <= 1e-8


def test_regular_tangent_space_rejects_irregular(setup_cp2):
    zero_section = oc.TangentBundlePoint(x=setup_cp2.config.seed, v=np.zeros(setup_cp2.alg.dim))
    with pytest.raises(DomainError):
        dr.regular_tangent_space(setup_cp2, zero_section)


def test_canonical_complement(setup_su2, setup_cp2, data_cp2, regular_coords_cp2):
    base = oc.TangentBundlePoint(x=setup_su2.config.seed, v=setup_su2.x0)
    assert dr.canonical_complement(setup_su2, base).dim == 0
    for coords in regular_coords_cp2[:3]:
        point = data_cp2.sub_chart.point(coords)
        comp = dr.canonical_complement(setup_cp2, point)
        assert comp.dim == setup_cp2.transversal.dim
        strat = dr.regular_tangent_space(setup_cp2, point)
        stacked = np.hstack([comp.basis, strat.basis])
        sig = np.linalg.svd(stacked, compute_uv=False)
        assert sig[-1] > 1e-6  # trivial intersection
        assert comp.dim + strat.dim == 2 * setup_cp2.config.orbit_dim


def test_complement_product_independence(setup_cp2, data_cp2, regular_coords_cp2):
    point = data_cp2.sub_chart.point(regular_coords_cp2[0])
    for seed in (3, 17):
        assert dr.complement_product_independence(setup_cp2, point, seed) <= 1e-8


# ---------------------------------------------------------------------------
# Splitting orthogonality and adapted coordinates
# ---------------------------------------------------------------------------


def test_splitting_orthogonality_cp2(setup_cp2, data_cp2, regular_coords_cp2):
    w1, w2, _, _ = data_cp2.ambient_fields()
    members = [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (0.3, 0.7), (2.0, -1.0)]
    for coords in regular_coords_cp2:
        padded = data_cp2.pad_coords(coords)
        m1, m2 = w1(padded), w2(padded)
        for t1, t2 in members:
            report = dr.splitting_orthogonality(setup_cp2, data_cp2.ambient_chart, padded, t1 * m1 + t2 * m2)
            assert report.pairing <= 1e-8
            assert report.sigma_complement > 1e-6
            assert report.sigma_stratum > 1e-6


def test_splitting_orthogonality_trivial_case(setup_su2, data_su2):
    coords = np.zeros(data_su2.ambient_chart.coord_dim)
    w1 = data_su2.ambient_fields()[0]
    report = dr.splitting_orthogonality(setup_su2, data_su2.ambient_chart, coords, w1(coords))
    assert report.pairing == 0.0
    assert report.sigma_stratum > 1e-6


def test_adapted_chart_blocks(setup_cp2, data_cp2, regular_coords_cp2):
    adapted = dr.AdaptedChart(setup_cp2, data_cp2.sub_chart)
    p_dim = setup_cp2.transversal.dim
    for coords in regular_coords_cp2[:5]:
        full = np.concatenate([np.zeros(p_dim), coords])
        for matrix in (
            oc.canonical_form_matrix(adapted, full),
            oc.omega2_matrix(adapted, full),
        ):
            report = dr.adapted_block_report(adapted, full, matrix)
            assert report.off_diagonal <= 1e-8
            assert report.sigma_transversal > 1e-6
            assert report.sigma_stratum > 1e-6


def test_adapted_chart_negative_control(setup_cp2, data_cp2, regular_coords_cp2):
    # off the stratum the coupling blocks wake up
    adapted = dr.AdaptedChart(setup_cp2, data_cp2.sub_chart)
    p_dim = setup_cp2.transversal.dim
    rng = np.random.default_rng(5)
    best = 0.0
    for _ in range(3):
        y = 0.05 * unit_vector(rng, p_dim)
        full = np.concatenate([y, regular_coords_cp2[0]])
        matrix = oc.canonical_form_matrix(adapted, full)
        best = max(best, dr.adapted_block_report(adapted, full, matrix).off_diagonal)
    assert best > 1e-6


def test_adapted_chart_trivial_case(setup_su2, data_su2):
    adapted = dr.AdaptedChart(setup_su2, data_su2.sub_chart)
    assert adapted.coord_dim == data_su2.sub_chart.coord_dim
    coords = np.full(adapted.coord_dim, 0.02)
    direct = data_su2.sub_chart.point(coords)
    via = adapted.point(coords)
    assert np.allclose(via.x, direct.x, atol=1e-14)
    assert np.allclose(via.v, direct.v, atol=1e-14)


def test_adapted_pushforward_matches_finite_differences(setup_cp2, data_cp2):
    adapted = dr.AdaptedChart(setup_cp2, data_cp2.sub_chart)
    rng = np.random.default_rng(6)
    coords = rng.uniform(-0.05, 0.05, adapted.coord_dim)
    push = adapted.pushforward(coords)
    h = 1e-5
    fd = np.empty_like(push)
    for j in range(adapted.coord_dim):
        plus = adapted.point(oc.shifted(coords, j, +h))
        minus = adapted.point(oc.shifted(coords, j, -h))
        fd[:, j] = np.concatenate([plus.x - minus.x, plus.v - minus.v]) / (2 * h)
    assert np.max(np.abs(push - fd)) <= 1e-8


# ---------------------------------------------------------------------------
# Restricted pencil
# ---------------------------------------------------------------------------


def test_restricted_pencil_trivial_case_is_ambient(setup_su2, data_su2):
    # with trivial isotropy the sub chart and the ambient chart coincide
    assert data_su2.sub_chart.coord_dim == data_su2.ambient_chart.coord_dim
    coords = np.full(data_su2.sub_chart.coord_dim, 0.03)
    w1_sub = data_su2.w1_sub(coords)
    w1_amb = data_su2.ambient_fields()[0](data_su2.pad_coords(coords))
    assert np.max(np.abs(w1_sub - w1_amb)) <= 1e-12


def test_restricted_pencil_base_validation(setup_cp2):
    with pytest.raises(DomainError):
        bad = oc.TangentBundlePoint(x=setup_cp2.config.seed, v=setup_cp2.config.tangent.basis[:, 0] * 0.0)
        dr.restricted_pencil(setup_cp2, bad)  # zero fiber is not regular
    with pytest.raises(DomainError):
        off_slice = setup_cp2.sub_tangent.basis @ np.array([1.0, 1.0])
        off_slice = off_slice - setup_cp2.slice_space.project(off_slice)
        dr.restricted_pencil(setup_cp2, oc.TangentBundlePoint(x=setup_cp2.config.seed, v=off_slice))


def test_restricted_pencil_certification_cp2(setup_cp2, data_cp2, regular_coords_cp2):
    for coords in regular_coords_cp2:
        assert oc.closedness_residual(data_cp2.w1_sub, coords, 1e-4) <= 1e-5
        assert oc.closedness_residual(data_cp2.w2_sub, coords, 1e-4) <= 1e-5
        for form in (data_cp2.w1_sub, data_cp2.w2_sub):
            assert np.linalg.svd(form(coords), compute_uv=False)[-1] > 1e-6
        assert pp.compatibility_residual(data_cp2.p1_sub, data_cp2.p2_sub, coords, 1e-4) <= 1e-5


def test_restricted_degeneracy_profile(data_cp2, regular_coords_cp2):
    profile = pp.degeneracy_profile(
        data_cp2.p1_sub, data_cp2.p2_sub, regular_coords_cp2[0], pp.unit_circle_parameters(16)
    )
    for sample in profile:
        if abs(sample.t[0] + sample.t[1]) < 1e-12:
            assert sample.sigma_min <= 1e-8
        else:
            assert sample.sigma_min > 1e-4


# ---------------------------------------------------------------------------
# Invariant functions and bracket agreement
# ---------------------------------------------------------------------------


def test_invariant_function_basics(su3, setup_cp2, data_cp2, regular_coords_cp2):
    f_xx = dr.invariant_function(su3, ("x", "x"))
    f_xv = dr.invariant_function(su3, ("x", "v"))
    vals = []
    for coords in regular_coords_cp2[:5]:
        point = data_cp2.sub_chart.point(coords)
        vals.append(f_xx(point))
        assert abs(f_xv(point)) <= 1e-12  # v is orthogonal to ker ad(x), x included
    assert np.ptp(vals) <= 1e-10  # spectrum invariance: constant on the orbit


def test_invariant_function_conjugation_invariance(su3, data_cp2, regular_coords_cp2):
    import scipy.linalg

    words = [("v", "v"), ("x", "x", "v", "v"), ("x", "v", "x", "v"), ("v", "v", "v", "v")]
    fns = [dr.invariant_function(su3, w) for w in words]
    point = data_cp2.sub_chart.point(regular_coords_cp2[0])
    rng = np.random.default_rng(8)
    for _ in range(20):
        rot = scipy.linalg.expm(su3.ad(rng.standard_normal(su3.dim)))
        moved = oc.TangentBundlePoint(x=rot @ point.x, v=rot @ point.v)
        for f in fns:
            assert abs(f(moved) - f(point)) <= 1e-10


def test_invariant_function_rejects_bad_word(su3):
    with pytest.raises(Exception):
        dr.invariant_function(su3, ())
    with pytest.raises(Exception):
        dr.invariant_function(su3, ("x", "y"))


def test_bracket_agreement_skew_diagonal(setup_cp2, data_cp2, regular_coords_cp2):
    f = dr.invariant_function(setup_cp2.alg, ("v", "v"))
    report = dr.bracket_agreement(setup_cp2, data_cp2, f, f, regular_coords_cp2[0], (1.0, 1.0))
    assert abs(report.ambient) <= 1e-10
    assert abs(report.restricted) <= 1e-10


def test_bracket_agreement_trivial_reduction(setup_su2, data_su2):
    # ambient and restricted structures coincide outright
    alg = setup_su2.alg
    f = dr.invariant_function(alg, ("v", "v"))
    g = dr.invariant_function(alg, ("x", "v", "x", "v"))
    rng = np.random.default_rng(9)
    for _ in range(3):
        coords = rng.uniform(-0.08, 0.08, data_su2.sub_chart.coord_dim)
        if not dr.is_regular(setup_su2, data_su2.sub_chart.point(coords)):
            continue
        report = dr.bracket_agreement(setup_su2, data_su2, f, g, coords, (1.0, 1.0))
        assert report.residual <= 1e-10


def test_bracket_agreement_rejects_degenerate_parameter(setup_cp2, data_cp2, regular_coords_cp2):
    f = dr.invariant_function(setup_cp2.alg, ("v", "v"))
    g = dr.invariant_function(setup_cp2.alg, ("x", "x", "v", "v"))
    with pytest.raises(DomainError):
        dr.bracket_agreement(setup_cp2, data_cp2, f, g, regular_coords_cp2[0], (1.0, -1.0))


# ---------------------------------------------------------------------------
# Local freeness and transversality
# ---------------------------------------------------------------------------


def test_isotropy_excess(setup_su2, setup_cp2, data_cp2, regular_coords_cp2):
    base = oc.TangentBundlePoint(x=setup_su2.config.seed, v=setup_su2.x0)
    assert dr.isotropy_excess(setup_su2, [base]) == 0
    points = [data_cp2.sub_chart.point(c) for c in regular_coords_cp2]
    assert dr.isotropy_excess(setup_cp2, points) == 0
    zero = oc.TangentBundlePoint(x=setup_cp2.config.seed, v=np.zeros(setup_cp2.alg.dim))
    assert dr.isotropy_excess(setup_cp2, [zero]) > 0


def test_transversality(setup_su2, setup_cp2):
    for setup in (setup_su2, setup_cp2):
        for scale in (0.6, 1.0, 1.4):
            y = scale * setup.x0
            point = oc.TangentBundlePoint(x=setup.config.seed, v=y)
            assert dr.transversality_deficiency(setup, point) == 0
        zero = oc.TangentBundlePoint(x=setup.config.seed, v=np.zeros(setup.alg.dim))
        assert dr.transversality_deficiency(setup, zero) > 0


def test_restricted_forms_match_intrinsic_suborbit_forms(setup_cp2, data_cp2):
    """Dual-route check: restriction equals the intrinsic sub-orbit pencil.

    The centralizer is rebuilt as a standalone algebra from its matrix
    realisation; the sub-orbit of the seed inside it gets its own charts
    and its own two forms, computed entirely through the small algebra's
    structure constants.  Those intrinsic matrix fields must agree with
    the restriction-computed fields at matching coordinates.
    """
    su3 = setup_cp2.alg
    ghat = setup_cp2.centralizer
    mats = np.asarray([su3.matrix_of(ghat.basis[:, j]) for j in range(ghat.dim)])
    sub_alg = lc.algebra_from_matrices("centralizer", mats)
    a_hat = sub_alg.element_from_matrix(su3.matrix_of(setup_cp2.config.seed))
    cfg_hat = oc.orbit_config(sub_alg, a_hat)
    assert cfg_hat.orbit_dim == setup_cp2.sub_tangent.dim
    # translate the ambient sub-chart frame and base fiber elementwise;
    # basis coefficients on both sides are isometric for the trace product
    frame_hat = np.column_stack([
        sub_alg.element_from_matrix(su3.matrix_of(data_cp2.sub_chart.frame[:, i]))
        for i in range(data_cp2.sub_chart.frame_dim)
    ])
    v_hat = sub_alg.element_from_matrix(su3.matrix_of(data_cp2.sub_chart.base_v))
    chart_hat = oc.Chart(cfg_hat, base_v=v_hat, frame=frame_hat)
    rng = np.random.default_rng(3)
    for _ in range(3):
        coords = rng.uniform(-0.08, 0.08, chart_hat.coord_dim)
        w1_intrinsic = oc.canonical_form_matrix(chart_hat, coords)
        w2_intrinsic = oc.omega2_matrix(chart_hat, coords)
        assert np.max(np.abs(w1_intrinsic - data_cp2.w1_sub(coords))) <= 1e-9
        assert np.max(np.abs(w2_intrinsic - data_cp2.w2_sub(coords))) <= 1e-9


def test_slice_normal_form_iteration_budget(setup_cp2):
    from orbitpencil.errors import ConvergenceError

    rng = np.random.default_rng(4)
    y = setup_cp2.config.tangent.basis @ unit_vector(rng, setup_cp2.config.tangent.dim)
    with pytest.raises(ConvergenceError) as info:
        dr.slice_normal_form(setup_cp2, y, max_iter=1, tol=1e-14)
    assert info.value.best_residual is not None


# ---------------------------------------------------------------------------
# Nonabelian principal isotropy: the richest built-in reduction
# ---------------------------------------------------------------------------


def test_nonabelian_reduction_full_chain(setup_cp3, data_cp3):
    setup, data = setup_cp3, data_cp3
    assert setup.dims() == {
        "k": 9, "m": 6, "h": 4, "n(h)": 7, "p": 8,
        "g_hat": 4, "k_hat": 2, "m_hat": 2, "slice": 1, "z(g_hat)": 1,
    }
    # the isotropy algebra is nonabelian here, unlike every su(3) case
    assert lc.subalgebra_residual(setup.alg, setup.isotropy) <= 1e-10
    briefly_abelian = _max_pairwise_bracket(setup.alg, setup.isotropy)
    assert briefly_abelian > 1e-2

    coords_list = dr.sample_regular_coords(setup, data, 3, seed=5)
    w1, w2, p1a, p2a = data.ambient_fields()
    adapted = dr.AdaptedChart(setup, data.sub_chart)
    f = dr.invariant_function(setup.alg, ("v", "v"))
    g = dr.invariant_function(setup.alg, ("x", "v", "x", "v"))
    for coords in coords_list:
        # restricted pencil stays compatible and symplectic
        assert pp.compatibility_residual(data.p1_sub, data.p2_sub, coords, 1e-4) <= 1e-5
        assert np.linalg.svd(data.w1_sub(coords), compute_uv=False)[-1] > 1e-6
        # canonical splitting stays form-orthogonal with an 8-dim complement
        padded = data.pad_coords(coords)
        report = dr.splitting_orthogonality(setup, data.ambient_chart, padded, w1(padded))
        assert report.pairing <= 1e-8
        assert min(report.sigma_complement, report.sigma_stratum) > 1e-6
        # adapted blocks vanish on the stratum
        full = np.concatenate([np.zeros(setup.transversal.dim), coords])
        block = dr.adapted_block_report(adapted, full, oc.canonical_form_matrix(adapted, full))
        assert block.off_diagonal <= 1e-8
        # brackets agree ambient vs restricted
        for t in ((1.0, 1.0), (0.3, 0.7)):
            assert dr.bracket_agreement(setup, data, f, g, coords, t).relative_residual <= 1e-5
    points = [data.sub_chart.point(c) for c in coords_list]
    assert dr.isotropy_excess(setup, points) == 0
    base = oc.TangentBundlePoint(x=setup.config.seed, v=setup.x0)
    assert dr.transversality_deficiency(setup, base) == 0


def _max_pairwise_bracket(alg, sub):
    worst = 0.0
    for i in range(sub.dim):
        for j in range(i + 1, sub.dim):
            worst = max(worst, float(np.linalg.norm(alg.bracket(sub.basis[:, i], sub.basis[:, j]))))
    return worst
