"""Dense linear algebra of compact matrix Lie algebras.

Conventions used throughout the package:

  * An algebra is handed over as a list of anti-Hermitian matrices.  The
    trace form <X, Y> = -Re tr(XY) is positive definite exactly on compact
    matrix algebras and is automatically invariant, so it is taken as the
    base scalar product.
  * The stored basis is re-orthonormalised against that product once, at
    construction time.  Coefficient vectors therefore live in an ordinary
    Euclidean R^n: orthogonal complements, projectors and kernels never
    need a Gram matrix unless a *different* invariant product is in play.
  * Structure constants are computed once from the matrix realisation and
    cached; every bracket afterwards is a tensor contraction.
  * Rank decisions use singular values with the relative cutoff RANK_RTOL.
  * Subspaces are compared through their orthogonal projectors (Frobenius
    distance), which is basis independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InputError

# Singular values below RANK_RTOL * sigma_max are treated as zero.  All
# subspace data is O(1) after orthonormalisation, so one cutoff suffices.
RANK_RTOL = 1e-9

# Frobenius distance of projectors below which two subspaces count as equal.
SUBSPACE_TOL = 1e-8


# ---------------------------------------------------------------------------
# Algebra container
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LieAlgebra:
    """A compact matrix Lie algebra with an orthonormal basis.

    Attributes:
        name: label such as "su(3)".
        basis: (n, d, d) complex array; basis[i] is the i-th basis matrix,
            orthonormal for <X, Y> = -Re tr(XY).
        structure: (n, n, n) real array c with [E_i, E_j] = sum_k c[i,j,k] E_k.
        ad_basis: (n, n, n) real array; ad_basis[i] is the matrix of ad(E_i)
            acting on coefficient vectors.
        product: the Gram matrix of the basis, the identity by construction.
    """

    name: str
    basis: np.ndarray
    structure: np.ndarray
    ad_basis: np.ndarray
    product: np.ndarray

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def matrix_dim(self) -> int:
        return self.basis.shape[1]

    def matrix_of(self, coeffs: np.ndarray) -> np.ndarray:
        """Matrix realisation of a coefficient vector."""
        coeffs = _as_element(self, coeffs)
        return np.tensordot(coeffs, self.basis, axes=(0, 0))

    def element_from_matrix(self, mat: np.ndarray, tol: float = 1e-10) -> np.ndarray:
        """Coefficients of a matrix, which must lie in the basis span."""
        mat = np.asarray(mat, dtype=complex)
        if mat.shape != (self.matrix_dim, self.matrix_dim):
            raise InputError(
                f"expected a {self.matrix_dim}x{self.matrix_dim} matrix, got {mat.shape}"
            )
        coeffs = -np.real(np.einsum("kij,ji->k", self.basis, mat))
        recon = self.matrix_of(coeffs)
        err = np.linalg.norm(recon - mat)
        if err > tol * (1.0 + np.linalg.norm(mat)):
            raise DomainError(f"matrix is not in the span of the basis (residual {err:.2e})")
        return coeffs

    def ad(self, coeffs: np.ndarray) -> np.ndarray:
        """Matrix of ad(x) on coefficient vectors: ad(x) y = [x, y]."""
        coeffs = _as_element(self, coeffs)
        return np.tensordot(coeffs, self.ad_basis, axes=(0, 0))

    def bracket(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Lie bracket [x, y] through the cached structure constants."""
        x = _as_element(self, x)
        y = _as_element(self, y)
        return np.einsum("i,j,ijk->k", x, y, self.structure)

    def inner(self, x: np.ndarray, y: np.ndarray) -> float:
        """Base invariant product; plain dot product in the orthonormal basis."""
        return float(np.dot(_as_element(self, x), _as_element(self, y)))


def _as_element(alg: LieAlgebra, coeffs) -> np.ndarray:
    vec = np.asarray(coeffs, dtype=float)
    if vec.shape != (alg.dim,):
        raise InputError(f"expected a coefficient vector of length {alg.dim}, got {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise InputError("coefficient vector contains non-finite entries")
    return vec


def algebra_from_matrices(name, matrices, check_tol: float = 1e-12) -> LieAlgebra:
    """Build a LieAlgebra from a spanning list of anti-Hermitian matrices.

    Verifies, to ``check_tol`` (relative): closure of the matrix brackets in
    the span, antisymmetry and the Jacobi identity of the structure
    constants, and invariance of the trace product (skewness of every ad).
    """
    mats = np.asarray(matrices, dtype=complex)
    if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
        raise InputError("basis must be a list of square matrices of equal size")
    n = mats.shape[0]

    herm = np.linalg.norm(mats + np.conj(np.transpose(mats, (0, 2, 1))), axis=(1, 2))
    scale = np.linalg.norm(mats, axis=(1, 2))
    if np.any(herm > 1e-10 * np.maximum(scale, 1.0)):
        raise InputError("basis matrices must be anti-Hermitian")

    gram = -np.real(np.einsum("aij,bji->ab", mats, mats))
    gram = 0.5 * (gram + gram.T)
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        raise InputError(
            "trace product is not positive definite: basis is dependent or the algebra is not compact"
        ) from None
    # Rows of inv(chol) recombine the input into an orthonormal basis.
    basis = np.einsum("ai,ijk->ajk", np.linalg.inv(chol), mats)

    comm = np.einsum("aij,bjk->abik", basis, basis)
    comm = comm - np.transpose(comm, (1, 0, 2, 3))
    structure = -np.real(np.einsum("abij,cji->abc", comm, basis))
    structure = 0.5 * (structure - np.transpose(structure, (1, 0, 2)))

    recon = np.einsum("abc,cij->abij", structure, basis)
    closure = np.linalg.norm(comm - recon, axis=(2, 3))
    comm_scale = np.maximum(np.linalg.norm(comm, axis=(2, 3)), 1.0)
    closure_residual = float(np.max(closure / comm_scale))
    if closure_residual > check_tol:
        raise InputError(f"matrix brackets leave the basis span (residual {closure_residual:.2e})")

    jac = jacobi_residual_of_structure(structure)
    if jac > check_tol:
        raise InputError(f"structure constants violate the Jacobi identity ({jac:.2e})")

    ad_basis = np.transpose(structure, (0, 2, 1))
    skew = float(np.max(np.abs(ad_basis + np.transpose(ad_basis, (0, 2, 1)))))
    if skew > check_tol:
        raise InputError(f"trace product is not ad-invariant (ad skewness {skew:.2e})")

    return LieAlgebra(
        name=str(name),
        basis=basis,
        structure=structure,
        ad_basis=ad_basis,
        product=np.eye(n),
    )


def jacobi_residual_of_structure(structure: np.ndarray) -> float:
    """Max-norm of the Jacobi identity applied to structure constants."""
    cyc = np.einsum("ijm,mkl->ijkl", structure, structure)
    total = cyc + np.transpose(cyc, (1, 2, 0, 3)) + np.transpose(cyc, (2, 0, 1, 3))
    return float(np.max(np.abs(total)))


# ---------------------------------------------------------------------------
# Subspaces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Subspace:
    """A linear subspace given by an orthonormal column basis (n x k)."""

    basis: np.ndarray

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=float)
        if basis.ndim != 2:
            raise InputError("subspace basis must be a 2-d array of columns")
        k = basis.shape[1]
        if k:
            gram_err = np.linalg.norm(basis.T @ basis - np.eye(k))
            if gram_err > 1e-10:
                raise InputError(f"subspace basis is not orthonormal (residual {gram_err:.2e})")
        object.__setattr__(self, "basis", basis)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def project(self, vec: np.ndarray) -> np.ndarray:
        return self.basis @ (self.basis.T @ np.asarray(vec, dtype=float))

    def residual(self, vec: np.ndarray) -> float:
        """Norm of the component of ``vec`` outside the subspace."""
        vec = np.asarray(vec, dtype=float)
        return float(np.linalg.norm(vec - self.project(vec)))

    def contains(self, vec: np.ndarray, tol: float = SUBSPACE_TOL) -> bool:
        vec = np.asarray(vec, dtype=float)
        return self.residual(vec) <= tol * max(1.0, np.linalg.norm(vec))


def span(vectors: np.ndarray, rtol: float = RANK_RTOL) -> Subspace:
    """Orthonormalised span of the columns of ``vectors`` (rank-revealing).

    The rank cutoff is rtol times the largest singular value, floored at
    rtol itself: every meaningful operator here is O(1) after basis
    orthonormalisation, so an all-noise input must have rank zero rather
    than inherit rank from its own rounding errors.
    """
    mat = np.asarray(vectors, dtype=float)
    if mat.ndim == 1:
        mat = mat[:, None]
    if mat.ndim != 2:
        raise InputError("span expects a matrix of column vectors")
    if mat.shape[1] == 0:
        return Subspace(basis=np.zeros((mat.shape[0], 0)))
    u, s, _ = np.linalg.svd(mat, full_matrices=False)
    rank = int(np.sum(s > rtol * max(s[0], 1.0))) if s.size else 0
    return Subspace(basis=u[:, :rank])


def zero_subspace(n: int) -> Subspace:
    return Subspace(basis=np.zeros((n, 0)))


def full_subspace(n: int) -> Subspace:
    return Subspace(basis=np.eye(n))


def kernel(mat: np.ndarray, rtol: float = RANK_RTOL) -> Subspace:
    """Right null space of a matrix as a Subspace of its column index space.

    Rank cutoff as in :func:`span`: rtol times the largest singular value,
    floored at rtol, so a matrix that vanishes to rounding has full kernel.
    """
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2:
        raise InputError("kernel expects a 2-d matrix")
    rows, cols = mat.shape
    if rows == 0 or cols == 0:
        return full_subspace(cols)
    _, s, vt = np.linalg.svd(mat, full_matrices=True)
    if s.size == 0:
        return full_subspace(cols)
    rank = int(np.sum(s > rtol * max(s[0], 1.0)))
    return Subspace(basis=vt[rank:].T.copy())


def subspace_sum(a: Subspace, b: Subspace) -> Subspace:
    return span(np.hstack([a.basis, b.basis]))


def projector_distance(a: Subspace, b: Subspace) -> float:
    return float(np.linalg.norm(a.projector() - b.projector()))


def subspace_contains(outer: Subspace, inner: Subspace) -> float:
    """Residual of the inclusion inner <= outer (0 means contained)."""
    if inner.dim == 0:
        return 0.0
    rest = inner.basis - outer.projector() @ inner.basis
    return float(np.linalg.norm(rest))


def complement_within(inner: Subspace, outer: Subspace) -> Subspace:
    """Orthogonal complement of ``inner`` inside ``outer`` (base product)."""
    if subspace_contains(outer, inner) > SUBSPACE_TOL:
        raise DomainError("inner subspace is not contained in the outer one")
    coeffs = kernel(inner.basis.T @ outer.basis)
    return span(outer.basis @ coeffs.basis)


def subalgebra_residual(alg: LieAlgebra, sub: Subspace) -> float:
    """How far brackets of basis pairs stick out of the subspace."""
    if sub.dim == 0:
        return 0.0
    proj = sub.projector()
    worst = 0.0
    for i in range(sub.dim):
        images = alg.ad(sub.basis[:, i]) @ sub.basis
        worst = max(worst, float(np.linalg.norm(images - proj @ images)))
    return worst


def _require_subalgebra(alg: LieAlgebra, sub: Subspace, tol: float = 1e-10) -> None:
    res = subalgebra_residual(alg, sub)
    if res > tol:
        raise DomainError(f"subspace is not closed under the bracket (residual {res:.2e})")


# ---------------------------------------------------------------------------
# Centralizers, normalizers, complements
# ---------------------------------------------------------------------------


def bracket(alg: LieAlgebra, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return alg.bracket(x, y)


def adjoint_operator(alg: LieAlgebra, x: np.ndarray) -> np.ndarray:
    return alg.ad(x)


def centralizer(alg: LieAlgebra, sub: Subspace) -> Subspace:
    """Joint kernel of ad over a basis of ``sub``: all y with [y, sub] = 0."""
    if sub.dim == 0:
        return full_subspace(alg.dim)
    stacked = np.vstack([alg.ad(sub.basis[:, j]) for j in range(sub.dim)])
    return kernel(stacked)


def normalizer(alg: LieAlgebra, sub: Subspace) -> Subspace:
    """All xi with [xi, sub] contained in sub; sub must be a subalgebra."""
    _require_subalgebra(alg, sub)
    if sub.dim == 0:
        return full_subspace(alg.dim)
    out = np.eye(alg.dim) - sub.projector()
    # [xi, s_j] = -ad(s_j) xi, so project the images of -ad(s_j) off sub.
    stacked = np.vstack([out @ alg.ad(sub.basis[:, j]) for j in range(sub.dim)])
    return kernel(stacked)


def orthogonal_complement(alg: LieAlgebra, sub: Subspace, prod: "InvariantProduct | None" = None) -> Subspace:
    """Complement of ``sub`` with respect to ``prod`` (base product if None).

    The returned basis is orthonormal for the *base* product; only the span
    is determined by ``prod``.
    """
    n = alg.dim
    if sub.dim == 0:
        return full_subspace(n)
    if prod is None:
        comp = kernel(sub.basis.T)
    else:
        comp = kernel(sub.basis.T @ prod.matrix)
    if comp.dim != n - sub.dim:
        raise DomainError(
            f"complement has dimension {comp.dim}, expected {n - sub.dim}"
        )
    return comp


def fixed_vector_space(alg: LieAlgebra, sub: Subspace, ambient: Subspace, tol: float = SUBSPACE_TOL) -> Subspace:
    """Joint kernel of ad(z)|_ambient over z in ``sub``.

    ``ambient`` must be invariant under ad(sub); for ambient equal to the
    whole algebra this returns the centralizer of ``sub``.
    """
    if sub.dim == 0:
        return Subspace(basis=ambient.basis.copy())
    proj_out = np.eye(alg.dim) - ambient.projector()
    blocks = []
    for j in range(sub.dim):
        images = alg.ad(sub.basis[:, j]) @ ambient.basis
        leak = np.linalg.norm(proj_out @ images)
        if leak > tol:
            raise DomainError(f"ambient subspace is not ad-invariant (leak {leak:.2e})")
        blocks.append(images)
    coeffs = kernel(np.vstack(blocks))
    return span(ambient.basis @ coeffs.basis)


# ---------------------------------------------------------------------------
# Invariant scalar products
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InvariantProduct:
    """A symmetric positive-definite matrix representing a scalar product."""

    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise InputError("product matrix must be square")
        if np.linalg.norm(mat - mat.T) > 1e-12 * max(1.0, np.linalg.norm(mat)):
            raise InputError("product matrix must be symmetric")
        if np.min(np.linalg.eigvalsh(mat)) <= 0.0:
            raise InputError("product matrix must be positive definite")
        object.__setattr__(self, "matrix", mat)


def product_invariance_residual(alg: LieAlgebra, sub: Subspace, matrix: np.ndarray) -> float:
    """Max norm of M ad(z) + ad(z)^T M over a basis z of ``sub``."""
    worst = 0.0
    for j in range(sub.dim):
        a = alg.ad(sub.basis[:, j])
        worst = max(worst, float(np.max(np.abs(matrix @ a + a.T @ matrix))))
    return worst


def invariant_product_space(alg: LieAlgebra, sub: Subspace) -> list[np.ndarray]:
    """Basis of symmetric solutions of M ad(z) + ad(z)^T M = 0, z in sub.

    The base product (the identity) is always in the span.
    """
    _require_subalgebra(alg, sub)
    n = alg.dim
    sym_basis = []
    for i in range(n):
        for j in range(i, n):
            mat = np.zeros((n, n))
            if i == j:
                mat[i, i] = 1.0
            else:
                mat[i, j] = mat[j, i] = 1.0 / np.sqrt(2.0)
            sym_basis.append(mat)
    sym_basis = np.asarray(sym_basis)

    if sub.dim == 0:
        return [m.copy() for m in sym_basis]

    rows = []
    for z in range(sub.dim):
        a = alg.ad(sub.basis[:, z])
        # Each symmetric basis element maps to M a + a^T M, flattened.
        mapped = np.einsum("sij,jk->sik", sym_basis, a) + np.einsum("ji,sjk->sik", a, sym_basis)
        rows.append(mapped.reshape(len(sym_basis), n * n).T)
    coeffs = kernel(np.vstack(rows))
    sols = [np.tensordot(coeffs.basis[:, c], sym_basis, axes=(0, 0)) for c in range(coeffs.dim)]

    # Sanity: the base product satisfies the constraints, so it must project
    # fully onto the solution span.
    flat = np.eye(n).reshape(-1)
    mat = np.asarray([s.reshape(-1) for s in sols]).T
    resid = np.linalg.norm(flat - mat @ np.linalg.lstsq(mat, flat, rcond=None)[0])
    if resid > 1e-10 * n:
        raise DomainError("base product missing from the invariant solution space")
    return sols


def random_invariant_product(alg: LieAlgebra, sub: Subspace, seed: int) -> InvariantProduct:
    """Base product plus a seeded random invariant perturbation, kept SPD.

    The perturbation is halved until the smallest eigenvalue stays above
    0.1 times the base one, which keeps every sampled product well
    conditioned.  Deterministic for a fixed seed.
    """
    sols = invariant_product_space(alg, sub)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=[int(seed), 0x1A7D]))
    weights = rng.standard_normal(len(sols))
    perturb = sum(w * s for w, s in zip(weights, sols))
    perturb = perturb / max(1.0, np.linalg.norm(perturb))

    scale = 1.0
    floor = 0.1  # 0.1 x the smallest eigenvalue of the base product (identity)
    for _ in range(80):
        candidate = np.eye(alg.dim) + scale * perturb
        if np.min(np.linalg.eigvalsh(candidate)) > floor:
            break
        scale *= 0.5
    else:  # pragma: no cover - the base product is an interior point
        candidate = np.eye(alg.dim)

    inv_res = product_invariance_residual(alg, sub, candidate)
    if inv_res > 1e-10:
        raise DomainError(f"sampled product lost invariance (residual {inv_res:.2e})")
    return InvariantProduct(matrix=candidate)


@dataclass(frozen=True)
class ComplementIndependence:
    """Distances observed while varying the invariant product.

    paired: max Frobenius distance between projectors onto complement + sub;
        the quantity that must vanish.
    unpaired: max distance between the complements alone; can be large,
        which is what makes the paired identity non-trivial.
    """

    paired: float
    unpaired: float


def complement_independence(alg: LieAlgebra, sub: Subspace, seed: int, trials: int) -> ComplementIndependence:
    """Compare complements of the normalizer across random invariant products.

    For each trial draws two invariant products, takes the complements of
    the normalizer of ``sub`` with respect to each, and measures how far the
    sums (complement + sub) differ as subspaces.
    """
    _require_subalgebra(alg, sub)
    norm = normalizer(alg, sub)
    paired = 0.0
    unpaired = 0.0
    for t in range(trials):
        alpha = random_invariant_product(alg, sub, seed=(seed << 12) + 2 * t)
        beta = random_invariant_product(alg, sub, seed=(seed << 12) + 2 * t + 1)
        comp_a = orthogonal_complement(alg, norm, alpha)
        comp_b = orthogonal_complement(alg, norm, beta)
        paired = max(paired, projector_distance(subspace_sum(comp_a, sub), subspace_sum(comp_b, sub)))
        unpaired = max(unpaired, projector_distance(comp_a, comp_b))
    return ComplementIndependence(paired=paired, unpaired=unpaired)
