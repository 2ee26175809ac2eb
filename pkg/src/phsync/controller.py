"""Distributed port-Hamiltonian controller with a built-in L2-gain bound.

The controller is

    xi_dot = [J - (alpha*I + Lambda)] dH/dxi + G y
    u      = G^T dH/dxi

where J is block-diagonal skew-symmetric (one block per node), Lambda is a
positive diagonal built as exp(d), G carries the communication sparsity of
the block mask, and H is a log-cosh or quadratic energy function. The
damping floor

    alpha = epsilon * lambda_max(G G^T)

caps the y -> u gain at 1/epsilon for *every* value of the free parameters,
which is what makes unconstrained gradient training safe: no projection or
constraint handling is ever needed.

All structure lives in the free parametrization: any real-valued blocks
(A_i, d, G_ij, K_i) assemble into a controller that satisfies the gain
certificate, so optimizers may move the parameters arbitrarily.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from .errors import DimensionError, ParametrizationError, StructureError
from .numerics import BlockMask, SeededRng, lambda_max_sym, masked_assemble, skew_from_free

__all__ = [
    "HamiltonianSpec",
    "LogCosh",
    "PhController",
    "PhParams",
    "Quadratic",
    "assemble",
    "checkpoint_from_json",
    "checkpoint_to_json",
    "controller_output",
    "controller_rhs",
    "controller_from_checkpoint",
    "grad_hamiltonian",
    "hamiltonian",
    "init_params",
]

RANK_TOL = 1e-10
_G_SINGULAR_WARN = 1e-8


@dataclass(frozen=True, eq=False)
class LogCosh:
    """H(xi) = sum_k log cosh((blkdiag(K_i) xi)_k); gradient K_i^T tanh(K_i xi_i)."""

    k_blocks: tuple


@dataclass(frozen=True, eq=False)
class Quadratic:
    """H(xi) = 0.5 ||blkdiag(K_i) xi||^2; gradient K_i^T K_i xi_i."""

    k_blocks: tuple


HamiltonianSpec = Union[LogCosh, Quadratic]


@dataclass(frozen=True, eq=False)
class PhParams:
    """Free (unconstrained) trainable parameters of the controller.

    a_blocks[i] is the pre-skew square matrix for node i's interconnection
    block, d the log-damping vector, g_blocks maps mask-allowed block
    positions (i, j) to q_i x p_j input blocks, and the Hamiltonian carries
    one K_i per node.
    """

    q_dims: tuple
    p_dims: tuple
    a_blocks: tuple
    d: np.ndarray
    g_blocks: dict
    ham: HamiltonianSpec
    epsilon: float

    def __post_init__(self):
        object.__setattr__(self, "q_dims", tuple(int(q) for q in self.q_dims))
        object.__setattr__(self, "p_dims", tuple(int(p) for p in self.p_dims))
        object.__setattr__(self, "d", np.asarray(self.d, dtype=float))
        if self.epsilon <= 0:
            raise ParametrizationError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def n_nodes(self) -> int:
        return len(self.q_dims)

    @property
    def state_dim(self) -> int:
        return int(sum(self.q_dims))

    @property
    def h_dims(self) -> tuple:
        return tuple(int(k.shape[0]) for k in self.ham.k_blocks)


@dataclass(frozen=True, eq=False)
class PhController:
    """Assembled controller matrices plus the certified damping level.

    j_c is exactly skew, lam_diag holds the strictly positive diagonal of
    Lambda, g_c is zero outside the communication mask, and alpha equals
    epsilon * lambda_max(g_c g_c^T) with `dominant_eigvec` the matching unit
    eigenvector (used for the damping gradient).
    """

    j_c: np.ndarray
    lam_diag: np.ndarray
    g_c: np.ndarray
    alpha: float
    dominant_eigvec: np.ndarray
    ham: HamiltonianSpec
    epsilon: float
    q_dims: tuple
    p_dims: tuple
    k_dense: np.ndarray
    mask: BlockMask

    @property
    def state_dim(self) -> int:
        return int(sum(self.q_dims))

    @property
    def input_dim(self) -> int:
        return int(sum(self.p_dims))

    @property
    def h_dims(self) -> tuple:
        return tuple(int(k.shape[0]) for k in self.ham.k_blocks)

    @property
    def lambda_mat(self) -> np.ndarray:
        return np.diag(self.lam_diag)


def _block_diag(blocks) -> np.ndarray:
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    r = c = 0
    for b in blocks:
        out[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


def _has_full_column_rank(mat: np.ndarray, tol: float = RANK_TOL) -> bool:
    # Column-by-column elimination with row pivoting; a pivot below tol
    # means the column is dependent on the previous ones.
    a = np.array(mat, dtype=float)
    rows, cols = a.shape
    if rows < cols:
        return False
    row = 0
    for col in range(cols):
        piv = row + int(np.argmax(np.abs(a[row:, col])))
        if abs(a[piv, col]) <= tol:
            return False
        if piv != row:
            a[[row, piv]] = a[[piv, row]]
        below = a[row + 1:, col] / a[row, col]
        a[row + 1:] -= np.outer(below, a[row])
        row += 1
    return True


def _gram_top_eig(g_c: np.ndarray):
    """lambda_max(G G^T) with its unit eigenvector, via the smaller Gram matrix.

    G G^T and G^T G share nonzero eigenvalues; iterating on the smaller one
    is much cheaper when the state dimension exceeds the input dimension.
    """
    rows, cols = g_c.shape
    if not np.any(g_c):
        v = np.zeros(rows)
        v[0] = 1.0
        return 0.0, v
    if cols < rows:
        lam, w = lambda_max_sym(g_c.T @ g_c)
        if lam <= 0.0:
            v = np.zeros(rows)
            v[0] = 1.0
            return 0.0, v
        gv = g_c @ w
        return lam, gv / np.linalg.norm(gv)
    return lambda_max_sym(g_c @ g_c.T)


def assemble(params: PhParams, mask: BlockMask) -> PhController:
    """Build the certified controller from free parameters.

    Every diagonal mask block must be enabled (each node listens to itself),
    each K_i must have full column rank (keeps the energy function radially
    unbounded), and the damping is recomputed from the current G so the gain
    certificate holds at every training iterate, not only at convergence.
    """
    n = params.n_nodes
    if mask.block_rows != n or mask.block_cols != n:
        raise DimensionError(
            f"mask is {mask.block_rows}x{mask.block_cols} blocks, expected {n}x{n}"
        )
    if np.any(np.diag(mask.pattern) != 1):
        raise StructureError("communication mask must enable every diagonal block")
    if len(params.a_blocks) != n or len(params.ham.k_blocks) != n:
        raise DimensionError("need one A block and one K block per node")

    skew_blocks = []
    for i, (a, q) in enumerate(zip(params.a_blocks, params.q_dims)):
        a = np.asarray(a, dtype=float)
        if a.shape != (q, q):
            raise DimensionError(f"A block {i} has shape {a.shape}, expected ({q}, {q})")
        skew_blocks.append(skew_from_free(a))
    j_c = _block_diag(skew_blocks)

    nc = params.state_dim
    if params.d.shape != (nc,):
        raise DimensionError(f"d must have length {nc}, got {params.d.shape}")
    if np.any(np.abs(params.d) > 300.0) or not np.all(np.isfinite(params.d)):
        raise ParametrizationError("log-damping entries must be finite with |d_i| <= 300")
    lam_diag = np.exp(params.d)

    for i, (k, q) in enumerate(zip(params.ham.k_blocks, params.q_dims)):
        k = np.asarray(k, dtype=float)
        if k.ndim != 2 or k.shape[1] != q:
            raise DimensionError(f"K block {i} has shape {k.shape}, expected (h_{i}, {q})")
        if k.shape[0] < q:
            raise ParametrizationError(
                f"K block {i} is {k.shape[0]}x{k.shape[1]}; needs at least as many rows as columns"
            )
        if not _has_full_column_rank(k):
            raise ParametrizationError(f"K block {i} is rank deficient (tolerance {RANK_TOL})")

    g_mask = mask.with_dims(params.q_dims, params.p_dims)
    g_c = masked_assemble(g_mask, params.g_blocks)
    lam_top, eigvec = _gram_top_eig(g_c)
    alpha = params.epsilon * lam_top

    k_dense = _block_diag([np.asarray(k, dtype=float) for k in params.ham.k_blocks])
    ctrl = PhController(
        j_c=j_c,
        lam_diag=lam_diag,
        g_c=g_c,
        alpha=alpha,
        dominant_eigvec=eigvec,
        ham=params.ham,
        epsilon=params.epsilon,
        q_dims=params.q_dims,
        p_dims=params.p_dims,
        k_dense=k_dense,
        mask=g_mask,
    )
    return ctrl


def hamiltonian(c: PhController, xi: np.ndarray) -> float:
    """Energy H(xi); H(0) = 0 and H >= 0 for both built-in kinds."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (c.state_dim,):
        raise DimensionError(f"xi must have length {c.state_dim}, got {xi.shape}")
    z = c.k_dense @ xi
    if isinstance(c.ham, LogCosh):
        # log cosh(z) = |z| + log1p(exp(-2|z|)) - log 2, stable for large |z|
        az = np.abs(z)
        return float(np.sum(az + np.log1p(np.exp(-2.0 * az)) - np.log(2.0)))
    return 0.5 * float(z @ z)


def grad_hamiltonian(c: PhController, xi: np.ndarray) -> np.ndarray:
    """Energy gradient dH/dxi, block-wise K_i^T tanh(K_i xi_i) or K_i^T K_i xi_i."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (c.state_dim,):
        raise DimensionError(f"xi must have length {c.state_dim}, got {xi.shape}")
    z = c.k_dense @ xi
    if isinstance(c.ham, LogCosh):
        return c.k_dense.T @ np.tanh(z)
    return c.k_dense.T @ z


def controller_rhs(c: PhController, xi: np.ndarray, y: np.ndarray) -> np.ndarray:
    """State velocity [J - (alpha I + Lambda)] dH/dxi + G y."""
    y = np.asarray(y, dtype=float)
    if y.shape != (c.input_dim,):
        raise DimensionError(f"y must have length {c.input_dim}, got {y.shape}")
    g = grad_hamiltonian(c, xi)
    return c.j_c @ g - c.alpha * g - c.lam_diag * g + c.g_c @ y


def controller_output(c: PhController, xi: np.ndarray) -> np.ndarray:
    """Control output u = G^T dH/dxi."""
    return c.g_c.T @ grad_hamiltonian(c, xi)


def init_params(
    mask: BlockMask,
    q_dims,
    h_dims,
    epsilon: float,
    ham_kind: str,
    rng: SeededRng,
    p_dims=None,
) -> PhParams:
    """Draw fresh parameters: fan-in scaled normal weights, zero log-damping.

    Standard deviation 1/sqrt(fan-in) per block keeps early rollouts
    well-conditioned; d = 0 starts with unit damping Lambda = I.
    """
    q_dims = tuple(int(q) for q in q_dims)
    h_dims = tuple(int(h) for h in h_dims)
    n = len(q_dims)
    if p_dims is None:
        p_dims = (1,) * n
    p_dims = tuple(int(p) for p in p_dims)
    if len(h_dims) != n or len(p_dims) != n:
        raise DimensionError("q_dims, h_dims, p_dims must have one entry per node")

    a_blocks = tuple(rng.normal(scale=1.0 / np.sqrt(q), size=(q, q)) for q in q_dims)
    d = np.zeros(sum(q_dims))
    g_blocks = {}
    for i in range(n):
        for j in range(n):
            if mask.pattern[i, j]:
                g_blocks[(i, j)] = rng.normal(
                    scale=1.0 / np.sqrt(p_dims[j]), size=(q_dims[i], p_dims[j])
                )
    k_blocks = tuple(
        rng.normal(scale=1.0 / np.sqrt(q), size=(h, q)) for q, h in zip(q_dims, h_dims)
    )
    if ham_kind == "logcosh":
        ham = LogCosh(k_blocks)
    elif ham_kind == "quadratic":
        ham = Quadratic(k_blocks)
    else:
        raise ParametrizationError(f"unknown Hamiltonian kind {ham_kind!r}")
    return PhParams(q_dims, p_dims, a_blocks, d, g_blocks, ham, float(epsilon))


# -- checkpoint serialization -------------------------------------------------

def _format_json(obj, indent=0) -> str:
    # Hand-rolled writer so floats carry 17 significant digits (bit-faithful
    # round-trip) with a deterministic layout.
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f'{pad}  {json.dumps(str(k))}: {_format_json(v, indent + 1)}'
            for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        inner = ", ".join(_format_json(v, indent) for v in obj)
        if len(inner) <= 100:
            return "[" + inner + "]"
        items = [f"{pad}  {_format_json(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        if not np.isfinite(obj):
            raise ValueError("cannot serialize non-finite float")
        return format(float(obj), ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if obj is None:
        return "null"
    raise TypeError(f"cannot serialize {type(obj)!r}")


def checkpoint_to_json(
    params: PhParams,
    mask: BlockMask,
    alpha: float,
    seed: int,
    config_hash: str = "",
) -> str:
    """Serialize parameters plus metadata; arrays row-major, floats at 17 digits.

    Warns (without altering anything) when G is close to losing full rank;
    the gain certificate does not depend on rank, so this is diagnostic only.
    """
    g_c = masked_assemble(mask.with_dims(params.q_dims, params.p_dims), params.g_blocks)
    if np.any(g_c):
        gram = g_c.T @ g_c
        lam_top, _ = lambda_max_sym(gram)
        lam_small, _ = lambda_max_sym(lam_top * np.eye(gram.shape[0]) - gram)
        sigma_min = float(np.sqrt(max(lam_top - lam_small, 0.0)))
    else:
        sigma_min = 0.0
    if sigma_min < _G_SINGULAR_WARN:
        warnings.warn(
            f"input matrix G is near rank-deficient (sigma_min={sigma_min:.3e})",
            stacklevel=2,
        )

    ham_kind = "logcosh" if isinstance(params.ham, LogCosh) else "quadratic"
    doc = {
        "format": "ph-controller-checkpoint-v1",
        "epsilon": float(params.epsilon),
        "q_dims": list(params.q_dims),
        "h_dims": list(params.h_dims),
        "p_dims": list(params.p_dims),
        "mask": [[int(v) for v in row] for row in mask.pattern],
        "A_blocks": [np.asarray(a, float).tolist() for a in params.a_blocks],
        "d": params.d.tolist(),
        "G_blocks": {
            f"{i},{j}": np.asarray(params.g_blocks[(i, j)], float).tolist()
            for (i, j) in sorted(params.g_blocks)
        },
        "K_blocks": [np.asarray(k, float).tolist() for k in params.ham.k_blocks],
        "ham_kind": ham_kind,
        "alpha": float(alpha),
        "seed": int(seed),
        "config_hash": config_hash,
    }
    return _format_json(doc) + "\n"


def checkpoint_from_json(text: str):
    """Parse a checkpoint; returns (params, mask, stored_alpha, meta)."""
    doc = json.loads(text)
    if doc.get("format") != "ph-controller-checkpoint-v1":
        raise ParametrizationError(f"unrecognized checkpoint format {doc.get('format')!r}")
    q_dims = tuple(int(q) for q in doc["q_dims"])
    p_dims = tuple(int(p) for p in doc.get("p_dims", [1] * len(q_dims)))
    pattern = np.asarray(doc["mask"], dtype=np.int8)
    mask = BlockMask(pattern, (1,) * len(q_dims), (1,) * len(q_dims))
    g_blocks = {}
    for key, val in doc["G_blocks"].items():
        i, j = (int(s) for s in key.split(","))
        g_blocks[(i, j)] = np.asarray(val, dtype=float)
    k_blocks = tuple(np.asarray(k, dtype=float) for k in doc["K_blocks"])
    ham = LogCosh(k_blocks) if doc["ham_kind"] == "logcosh" else Quadratic(k_blocks)
    params = PhParams(
        q_dims=q_dims,
        p_dims=p_dims,
        a_blocks=tuple(np.asarray(a, dtype=float) for a in doc["A_blocks"]),
        d=np.asarray(doc["d"], dtype=float),
        g_blocks=g_blocks,
        ham=ham,
        epsilon=float(doc["epsilon"]),
    )
    meta = {"seed": int(doc.get("seed", 0)), "config_hash": doc.get("config_hash", "")}
    return params, mask, float(doc["alpha"]), meta


def controller_from_checkpoint(text: str):
    """Rebuild the controller with the *stored* damping level.

    The stored alpha is kept verbatim (not recomputed) so that a tampered
    checkpoint shows up as a positive certificate residual downstream.
    Returns (controller, params, mask, meta).
    """
    params, mask, stored_alpha, meta = checkpoint_from_json(text)
    ctrl = assemble(params, mask)
    ctrl = replace(ctrl, alpha=stored_alpha)
    return ctrl, params, mask, meta
