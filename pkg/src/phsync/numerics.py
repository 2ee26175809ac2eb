"""Dense matrix kernels, block masks, and seeded randomness.

Everything in this module is deterministic: the power iteration starts from
a vector derived from a fixed internal seed, and `SeededRng` keys a PCG64
stream by (seed, stream_id) so that identical keys reproduce identical draw
sequences across runs and platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DimensionError, NumericError, StructureError

__all__ = [
    "BlockMask",
    "SeededRng",
    "exp_diag",
    "lambda_max_sym",
    "masked_assemble",
    "power_iteration",
    "skew_from_free",
]

# Keys the start vector of every power iteration; independent of user seeds.
_START_VECTOR_KEY = 0x9E3779B9

POWER_TOL = 1e-12
POWER_MAX_ITER = 10_000


def skew_from_free(a: np.ndarray) -> np.ndarray:
    """Antisymmetrize a free square matrix: J = A - A^T, so J + J^T = 0 exactly."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"skew_from_free needs a square matrix, got shape {a.shape}")
    return a - a.T


def exp_diag(d: np.ndarray) -> np.ndarray:
    """Diagonal matrix with strictly positive entries exp(d_i).

    Entries with |d_i| > 300 are rejected rather than silently overflowing
    to inf (or rounding to zero).
    """
    d = np.atleast_1d(np.asarray(d, dtype=float))
    if d.ndim != 1:
        raise DimensionError(f"exp_diag needs a vector, got shape {d.shape}")
    if not np.all(np.isfinite(d)) or np.any(np.abs(d) > 300.0):
        raise NumericError("exp_diag entries must be finite with |d_i| <= 300")
    return np.diag(np.exp(d))


def _start_vector(dim: int) -> np.ndarray:
    gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence([_START_VECTOR_KEY, dim])))
    v = gen.standard_normal(dim)
    return v / np.linalg.norm(v)


def power_iteration(
    matvec,
    dim: int,
    tol: float = POWER_TOL,
    max_iter: int = POWER_MAX_ITER,
    residual_tol: float = None,
):
    """Dominant eigenpair of a symmetric PSD operator given as a matvec closure.

    Stops when successive Rayleigh quotients differ by less than tol * |lambda|.
    The Rayleigh value converges twice as fast as the eigenvector, so callers
    that consume the vector (e.g. for eigenvalue derivatives) may request a
    polish phase that keeps iterating until ||M v - lambda v|| drops below
    residual_tol * |lambda|; the polish never raises on budget exhaustion
    because the value is already converged (a repeated dominant eigenvalue
    legitimately stalls it). Returns (eigenvalue, unit eigenvector, iterations).
    """
    v = _start_vector(dim)
    rayleigh_prev = None
    value_converged = False
    rayleigh = 0.0
    for it in range(1, max_iter + 1):
        w = matvec(v)
        rayleigh = float(v @ w)
        norm_w = float(np.linalg.norm(w))
        if norm_w == 0.0:
            # Operator annihilates v; for a PSD operator this means lambda_max = 0.
            return 0.0, v, it
        if rayleigh_prev is not None and abs(rayleigh - rayleigh_prev) <= tol * max(abs(rayleigh), 1e-300):
            value_converged = True
            vector_ok = True
            if residual_tol is not None:
                scale = max(abs(rayleigh), 1e-300)
                vector_ok = float(np.linalg.norm(w - rayleigh * v)) <= residual_tol * scale
            if vector_ok:
                return rayleigh, w / norm_w, it
        rayleigh_prev = rayleigh
        v = w / norm_w
    if value_converged:
        return rayleigh, v, max_iter
    raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations")


def lambda_max_sym(m: np.ndarray, tol: float = POWER_TOL, residual_tol: float = 1e-9):
    """Largest eigenvalue (and unit eigenvector) of a symmetric PSD matrix.

    Power iteration on M + sigma*I with sigma = trace(M)/n; the shift keeps
    the dominant eigenvalue of the PSD input strictly largest in magnitude.
    The eigenvector is polished to the given relative residual so it is fit
    for eigenvalue-derivative use. With a repeated dominant eigenvalue any
    unit vector of the dominant eigenspace may be returned.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"lambda_max_sym needs a square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m))) if m.size else 1.0)
    if float(np.max(np.abs(m - m.T))) > 1e-12 * scale:
        raise StructureError("matrix is not symmetric within 1e-12 relative tolerance")
    n = m.shape[0]
    if not np.any(m):
        v = np.zeros(n)
        v[0] = 1.0
        return 0.0, v
    sigma = float(np.trace(m)) / n
    try:
        lam_shifted, v, _ = power_iteration(
            lambda x: m @ x + sigma * x, n, tol=tol, residual_tol=residual_tol
        )
        return lam_shifted - sigma, v
    except ConvergenceError:
        # A nearly repeated dominant pair stalls the iteration beyond its
        # budget; the dense solve is exact there and the returned vector
        # spans the dominant eigenspace (any such vector is acceptable).
        eigvals, eigvecs = np.linalg.eigh(m)
        return float(eigvals[-1]), eigvecs[:, -1].copy()


@dataclass(frozen=True, eq=False)
class BlockMask:
    """Binary block pattern with per-block row/column dimensions.

    pattern[i, j] == 0 forces block (i, j) of any assembled matrix to zero.
    """

    pattern: np.ndarray
    row_dims: tuple
    col_dims: tuple

    def __post_init__(self):
        pattern = np.asarray(self.pattern, dtype=np.int8)
        object.__setattr__(self, "pattern", pattern)
        object.__setattr__(self, "row_dims", tuple(int(d) for d in self.row_dims))
        object.__setattr__(self, "col_dims", tuple(int(d) for d in self.col_dims))
        if pattern.ndim != 2:
            raise DimensionError("mask pattern must be a 2-D array")
        if pattern.shape != (len(self.row_dims), len(self.col_dims)):
            raise DimensionError(
                f"mask pattern shape {pattern.shape} does not match block dims "
                f"({len(self.row_dims)}, {len(self.col_dims)})"
            )
        if not np.isin(pattern, (0, 1)).all():
            raise StructureError("mask entries must be 0 or 1")
        if any(d <= 0 for d in self.row_dims) or any(d <= 0 for d in self.col_dims):
            raise StructureError("block dimensions must be positive")

    @property
    def block_rows(self) -> int:
        return len(self.row_dims)

    @property
    def block_cols(self) -> int:
        return len(self.col_dims)

    @property
    def row_offsets(self) -> np.ndarray:
        return np.concatenate(([0], np.cumsum(self.row_dims)))

    @property
    def col_offsets(self) -> np.ndarray:
        return np.concatenate(([0], np.cumsum(self.col_dims)))

    @property
    def total_rows(self) -> int:
        return int(sum(self.row_dims))

    @property
    def total_cols(self) -> int:
        return int(sum(self.col_dims))

    def with_dims(self, row_dims, col_dims) -> "BlockMask":
        """Same pattern, different per-block dimensions."""
        return BlockMask(self.pattern.copy(), tuple(row_dims), tuple(col_dims))

    def allowed_positions(self):
        """Mask-enabled (i, j) block positions in row-major order."""
        rows, cols = np.nonzero(self.pattern)
        return [(int(i), int(j)) for i, j in zip(rows, cols)]


def masked_assemble(mask: BlockMask, blocks: dict) -> np.ndarray:
    """Assemble a dense matrix from blocks; entries outside the mask are exactly zero.

    Blocks may be omitted at allowed positions (treated as zero); supplying a
    block at a masked-out position is a structure violation.
    """
    out = np.zeros((mask.total_rows, mask.total_cols))
    roff = mask.row_offsets
    coff = mask.col_offsets
    for (i, j), blk in blocks.items():
        if not (0 <= i < mask.block_rows and 0 <= j < mask.block_cols):
            raise StructureError(f"block index ({i}, {j}) outside mask")
        if mask.pattern[i, j] == 0:
            raise StructureError(f"block supplied at masked-out position ({i}, {j})")
        blk = np.asarray(blk, dtype=float)
        expect = (mask.row_dims[i], mask.col_dims[j])
        if blk.shape != expect:
            raise DimensionError(f"block ({i}, {j}) has shape {blk.shape}, expected {expect}")
        out[roff[i]:roff[i + 1], coff[j]:coff[j + 1]] = blk
    return out


class SeededRng:
    """Deterministic PCG64 stream keyed by (seed, stream_id).

    Two instances built from the same key produce bit-identical sequences;
    parallel workers should use distinct stream ids derived from one seed.
    """

    __slots__ = ("seed", "stream_id", "gen")

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([self.seed, self.stream_id]))
        )

    def stream(self, stream_id: int) -> "SeededRng":
        """Independent stream sharing this rng's seed."""
        return SeededRng(self.seed, stream_id)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def normal(self, scale=1.0, size=None):
        return self.gen.normal(0.0, scale, size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def __repr__(self):
        return f"SeededRng(seed={self.seed}, stream_id={self.stream_id})"
