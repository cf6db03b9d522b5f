"""Dense linear-algebra core: one rank-tolerance policy for the whole
package, subspace bases, and bounded-coefficient row-basis selection.

All operations are pure functions of their arguments and safe to call
concurrently.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import IllConditioned, InputError, NotRankDeficient, NumericalFailure
from .matrixio import as_matrix

EPS = float(np.finfo(float).eps)

# Singular values counted nonzero but within this factor of the rank
# cutoff make the rank decision untrustworthy; verdict-level callers
# surface IllConditioned.  Values below the cutoff are ordinary
# numerical zeros (orthogonal reductions leave junk of a few eps*smax)
# and never flag.
_AMBIGUITY_BAND = 8.0


@dataclass(frozen=True)
class Tolerances:
    """Numerical policy shared by every module.

    ``rank_rel`` is the relative singular-value cutoff; ``None`` selects
    the standard rule ``eps * max(rows, cols)`` per matrix.  Radii of the
    probe schedule must be strictly decreasing.
    """

    rank_rel: float | None = None
    grad_abs: float = 1e-9
    residual_abs: float = 1e-10
    probe_radius_schedule: tuple = (1e-2, 1e-3, 1e-4)
    probe_samples: int = 2000
    rng_seed: int = 0

    def __post_init__(self):
        if self.rank_rel is not None and self.rank_rel <= 0:
            raise InputError("rank_rel must be positive")
        if self.grad_abs <= 0 or self.residual_abs <= 0:
            raise InputError("thresholds must be strictly positive")
        if self.probe_samples <= 0:
            raise InputError("probe_samples must be a positive count")
        radii = tuple(float(r) for r in self.probe_radius_schedule)
        if any(r <= 0 for r in radii):
            raise InputError("probe radii must be strictly positive")
        if any(a <= b for a, b in zip(radii, radii[1:])):
            raise InputError("probe radii must be strictly decreasing")
        object.__setattr__(self, "probe_radius_schedule", radii)

    def rank_cutoff(self, shape, smax):
        rel = self.rank_rel if self.rank_rel is not None else EPS * max(shape)
        return rel * smax


DEFAULT_TOL = Tolerances()


@dataclass
class SubspaceBasis:
    """Orthonormal basis of a subspace, stored column-wise."""

    columns: np.ndarray
    dim: int

    @property
    def ambient(self):
        return self.columns.shape[0]


@dataclass
class BoundedBasisResult:
    """Row-basis selection with guaranteed coefficient bound.

    ``coeffs`` expresses the non-basis rows (ascending row order) as
    combinations of the basis rows, columns aligned with ``basis_rows``.
    ``coeff_inf_norm`` records what the selection actually achieved; the
    guarantee is only ``bound = 2**(m - r - 1)``.
    """

    basis_rows: tuple
    coeffs: np.ndarray
    bound: float
    coeff_inf_norm: float = field(default=0.0)

    @property
    def nonbasis_rows(self):
        m = len(self.basis_rows) + self.coeffs.shape[0]
        inside = set(self.basis_rows)
        return tuple(i for i in range(m) if i not in inside)


def svd(mat, full_matrices=True):
    """SVD returning (U, s, V) with ``U @ diag(s) @ V.T == mat``."""
    mat = as_matrix(mat)
    try:
        u, s, vt = np.linalg.svd(mat, full_matrices=full_matrices)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD did not converge: {exc}") from exc
    return u, s, vt.T


def singular_values(mat):
    mat = as_matrix(mat)
    try:
        return np.linalg.svd(mat, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD did not converge: {exc}") from exc


def rank(mat, tol=DEFAULT_TOL):
    """Numerical rank: singular values above ``rank_rel * smax``."""
    mat = as_matrix(mat)
    s = singular_values(mat)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol.rank_cutoff(mat.shape, s[0])))


def rank_is_ambiguous(mat, tol=DEFAULT_TOL):
    """True when some singular value counted as nonzero sits inside the
    ambiguity band just above the rank cutoff."""
    s = singular_values(as_matrix(mat))
    if s.size == 0 or s[0] == 0.0:
        return False
    cutoff = tol.rank_cutoff(mat.shape, s[0])
    return bool(np.any((s > cutoff) & (s <= cutoff * _AMBIGUITY_BAND)))


def null_space(mat, tol=DEFAULT_TOL):
    """Orthonormal basis of ``{v : mat @ v = 0}``."""
    mat = as_matrix(mat)
    _, s, v = svd(mat)
    r = 0
    if s.size and s[0] > 0.0:
        r = int(np.sum(s > tol.rank_cutoff(mat.shape, s[0])))
    basis = v[:, r:]
    return SubspaceBasis(columns=basis, dim=basis.shape[1])


def column_space(mat, tol=DEFAULT_TOL):
    """Orthonormal basis of the range of ``mat``."""
    mat = as_matrix(mat)
    u, s, _ = svd(mat)
    r = 0
    if s.size and s[0] > 0.0:
        r = int(np.sum(s > tol.rank_cutoff(mat.shape, s[0])))
    basis = u[:, :r]
    return SubspaceBasis(columns=basis, dim=r)


def _principal_cosines(b1, b2):
    if b1.dim == 0 or b2.dim == 0:
        return np.zeros(0)
    gram = b1.columns.T @ b2.columns
    return np.clip(np.linalg.svd(gram, compute_uv=False), 0.0, 1.0)


def intersection_dim(basis1, basis2, tol=DEFAULT_TOL):
    """Dimension of the intersection of two subspaces.

    Computed two independent ways -- the dimension identity
    ``dim(U) + dim(V) - rank([B1 B2])`` and the count of principal-angle
    cosines at 1 -- and cross-checked.  Disagreement means the instance
    sits too close to the rank threshold for a verdict.
    """
    if basis1.ambient != basis2.ambient:
        raise InputError("subspace bases live in different ambient dimensions")
    if basis1.dim == 0 or basis2.dim == 0:
        return 0
    stacked = np.hstack([basis1.columns, basis2.columns])
    by_rank = basis1.dim + basis2.dim - rank(stacked, tol)
    cos = _principal_cosines(basis1, basis2)
    # the cosines carry rounding from two SVD layers, so the threshold
    # keeps a floor of a few dozen ulps below exact alignment
    thr = tol.rank_rel if tol.rank_rel is not None else EPS * max(basis1.ambient, 2)
    thr = max(thr, 64.0 * EPS)
    by_angles = int(np.sum(cos >= 1.0 - thr))
    if by_rank != by_angles:
        raise IllConditioned(
            "subspace intersection dimension is ambiguous: "
            f"rank identity gives {by_rank}, principal angles give {by_angles}"
        )
    return by_rank


def _row_coefficients(v_basis, row):
    # unique solution of a @ v_basis = row when v_basis has full row rank
    sol, *_ = np.linalg.lstsq(v_basis.T, row, rcond=None)
    return sol


def bounded_basis(mat, tol=DEFAULT_TOL):
    """Select ``r`` rows spanning the row space so that every other row is
    a combination of them with coefficients bounded by ``2**(m - r - 1)``.

    Starts from the pivoted-QR row order and runs an exchange loop: while
    the row being adjoined has a coefficient above the inductive bound
    for the current step, the argmax basis row is swapped out.  Each
    adjoined row causes at most one swap, so the loop terminates in at
    most ``m - r`` passes.
    """
    mat = as_matrix(mat)
    m = mat.shape[0]
    r = rank(mat, tol)
    if r >= m:
        raise NotRankDeficient(f"matrix has full row rank {r}; no dependent rows")
    bound = 2.0 ** (m - r - 1)
    if r == 0:
        coeffs = np.zeros((m, 0))
        return BoundedBasisResult(basis_rows=(), coeffs=coeffs, bound=bound)

    # pivoted QR on columns of mat.T ranks the rows by importance
    _, _, piv = scipy.linalg.qr(mat.T, pivoting=True, mode="economic")
    basis = list(piv[:r])
    pending = list(piv[r:])

    for step, j in enumerate(pending, start=1):
        threshold = 2.0 ** (step - 1)
        a = _row_coefficients(mat[basis], mat[j])
        istar = int(np.argmax(np.abs(a)))
        if abs(a[istar]) > threshold * (1.0 + 64.0 * EPS):
            basis[istar] = j

    basis_sorted = sorted(basis)
    nonbasis = [i for i in range(m) if i not in set(basis_sorted)]
    vb = mat[basis_sorted]
    coeffs = np.zeros((len(nonbasis), r))
    for out, i in enumerate(nonbasis):
        coeffs[out] = _row_coefficients(vb, mat[i])

    inf_norm = float(np.max(np.abs(coeffs))) if coeffs.size else 0.0
    if inf_norm > bound * (1.0 + 1e-9):
        raise NumericalFailure(
            f"row-basis exchange exceeded its coefficient bound: "
            f"{inf_norm} > {bound}"
        )
    return BoundedBasisResult(
        basis_rows=tuple(int(i) for i in basis_sorted),
        coeffs=coeffs,
        bound=bound,
        coeff_inf_norm=inf_norm,
    )


def truncated_svd(mat, max_rank):
    """Best approximation of ``mat`` with rank at most ``max_rank``."""
    mat = as_matrix(mat)
    k = int(max_rank)
    if k >= min(mat.shape):
        return mat.copy()
    if k <= 0:
        return np.zeros_like(mat)
    u, s, v = svd(mat, full_matrices=False)
    return (u[:, :k] * s[:k]) @ v[:, :k].T
