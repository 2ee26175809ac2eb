import math

import numpy as np
import pytest

from phsync.errors import (
    ConvergenceError,
    DimensionError,
    NumericError,
    StructureError,
)
from phsync.numerics import (
    BlockMask,
    SeededRng,
    exp_diag,
    lambda_max_sym,
    masked_assemble,
    skew_from_free,
)

from oracles import eig_max_bruteforce


def test_skew_from_free_example():
    out = skew_from_free(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert np.array_equal(out, np.array([[0.0, -1.0], [1.0, 0.0]]))


def test_skew_from_free_zero_and_scalar():
    assert np.array_equal(skew_from_free(np.zeros((3, 3))), np.zeros((3, 3)))
    assert np.array_equal(skew_from_free(np.array([[5.0]])), np.array([[0.0]]))


def test_skew_from_free_rejects_non_square():
    with pytest.raises(DimensionError):
        skew_from_free(np.ones((2, 3)))


def test_skew_is_exactly_antisymmetric_for_random_inputs():
    rng = SeededRng(11)
    for _ in range(100):
        n = int(rng.integers(1, 9))
        a = rng.normal(size=(n, n)) * 10.0 ** rng.integers(-3, 4)
        j = skew_from_free(a)
        assert np.array_equal(j + j.T, np.zeros((n, n)))


def test_exp_diag_examples():
    assert np.array_equal(exp_diag(np.zeros(2)), np.eye(2))
    assert np.allclose(exp_diag([math.log(2.0)]), [[2.0]])
    assert abs(exp_diag([-1.0])[0, 0] - 0.36787944117) < 1e-10
    assert abs(exp_diag([-1.0])[0, 0] - math.exp(-1.0)) < 1e-15


def test_exp_diag_entries_strictly_positive():
    rng = SeededRng(12)
    for _ in range(50):
        d = rng.uniform(-300.0, 300.0, size=int(rng.integers(1, 12)))
        out = np.diag(exp_diag(d))
        assert np.all(out > 0.0)


def test_exp_diag_rejects_overflow_range():
    with pytest.raises(NumericError):
        exp_diag([301.0])
    with pytest.raises(NumericError):
        exp_diag([-301.0])
    with pytest.raises(NumericError):
        exp_diag([np.nan])


def test_lambda_max_diagonal_and_identity():
    lam, _ = lambda_max_sym(np.diag([2.0, 1.0]))
    assert abs(lam - 2.0) < 1e-9
    lam, _ = lambda_max_sym(np.eye(5))
    assert abs(lam - 1.0) < 1e-9


def test_lambda_max_hand_computed_2x2():
    # Roots of lambda^2 - 3 lambda + 1: largest is (3 + sqrt(5)) / 2.
    m = np.array([[2.0, 1.0], [1.0, 1.0]])
    lam, v = lambda_max_sym(m)
    assert abs(lam - (3.0 + math.sqrt(5.0)) / 2.0) < 1e-9
    assert abs(lam - 2.6180339887) < 1e-9
    assert np.linalg.norm(m @ v - lam * v) < 1e-8


def test_lambda_max_zero_matrix():
    lam, v = lambda_max_sym(np.zeros((4, 4)))
    assert lam == 0.0
    assert abs(np.linalg.norm(v) - 1.0) < 1e-12


def test_lambda_max_rejects_asymmetric():
    with pytest.raises(StructureError):
        lambda_max_sym(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_lambda_max_rejects_non_square():
    with pytest.raises(DimensionError):
        lambda_max_sym(np.ones((2, 3)))


def test_lambda_max_agrees_with_bruteforce_on_random_psd():
    rng = SeededRng(13)
    for trial in range(200):
        n = int(rng.integers(1, 17))
        b = rng.normal(size=(n, max(1, n - int(rng.integers(0, n)))))
        m = b @ b.T
        m = 0.5 * (m + m.T)
        lam, v = lambda_max_sym(m)
        ref = eig_max_bruteforce(m)
        scale = max(abs(ref), 1e-12)
        assert abs(lam - ref) <= 1e-9 * scale, f"trial {trial}: {lam} vs {ref}"
        assert np.linalg.norm(m @ v - lam * v) <= 1e-6 * scale


def test_power_iteration_convergence_error():
    # A rotation-like antisymmetric operator never settles its Rayleigh quotient.
    from phsync.numerics import power_iteration

    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    with pytest.raises(ConvergenceError):
        power_iteration(lambda v: rot @ v, 2, tol=1e-16, max_iter=50)


def _unit_mask(pattern):
    pattern = np.asarray(pattern)
    return BlockMask(pattern, (1,) * pattern.shape[0], (1,) * pattern.shape[1])


def test_masked_assemble_block_diagonal():
    mask = _unit_mask(np.eye(2, dtype=int))
    out = masked_assemble(mask, {(0, 0): [[1.0]], (1, 1): [[2.0]]})
    assert np.array_equal(out, np.diag([1.0, 2.0]))


def test_masked_assemble_single_allowed_block():
    mask = BlockMask(np.array([[1]]), (1,), (2,))
    out = masked_assemble(mask, {(0, 0): [[3.0, 4.0]]})
    assert np.array_equal(out, [[3.0, 4.0]])


def test_masked_assemble_zero_enforced():
    mask = _unit_mask([[1, 0], [1, 1]])
    out = masked_assemble(mask, {(0, 0): [[1.0]], (1, 0): [[2.0]], (1, 1): [[3.0]]})
    assert np.array_equal(out, [[1.0, 0.0], [2.0, 3.0]])


def test_masked_assemble_rejects_masked_position():
    mask = _unit_mask([[1, 0], [1, 1]])
    with pytest.raises(StructureError):
        masked_assemble(mask, {(0, 1): [[9.0]]})


def test_masked_assemble_rejects_bad_block_shape():
    mask = BlockMask(np.array([[1]]), (2,), (2,))
    with pytest.raises(DimensionError):
        masked_assemble(mask, {(0, 0): np.ones((1, 2))})


def test_masked_assemble_exact_zeros_on_random_masks():
    rng = SeededRng(14)
    for _ in range(50):
        br = int(rng.integers(1, 5))
        bc = int(rng.integers(1, 5))
        pattern = (rng.uniform(size=(br, bc)) < 0.5).astype(int)
        row_dims = tuple(int(rng.integers(1, 4)) for _ in range(br))
        col_dims = tuple(int(rng.integers(1, 4)) for _ in range(bc))
        mask = BlockMask(pattern, row_dims, col_dims)
        blocks = {
            (i, j): rng.normal(size=(row_dims[i], col_dims[j]))
            for i in range(br)
            for j in range(bc)
            if pattern[i, j]
        }
        out = masked_assemble(mask, blocks)
        ro = mask.row_offsets
        co = mask.col_offsets
        for i in range(br):
            for j in range(bc):
                blk = out[ro[i]:ro[i + 1], co[j]:co[j + 1]]
                if pattern[i, j]:
                    assert np.array_equal(blk, blocks[(i, j)])
                else:
                    assert not blk.any()


def test_block_mask_validation():
    with pytest.raises(StructureError):
        BlockMask(np.array([[2]]), (1,), (1,))
    with pytest.raises(StructureError):
        BlockMask(np.array([[1]]), (0,), (1,))
    with pytest.raises(DimensionError):
        BlockMask(np.array([[1, 0]]), (1,), (1,))


def test_seeded_rng_is_reproducible():
    a = SeededRng(42, 3)
    b = SeededRng(42, 3)
    assert np.array_equal(a.normal(size=100), b.normal(size=100))
    assert np.array_equal(a.integers(0, 1000, size=50), b.integers(0, 1000, size=50))


def test_seeded_rng_streams_differ():
    a = SeededRng(42, 0)
    b = SeededRng(42, 1)
    assert not np.array_equal(a.normal(size=32), b.normal(size=32))


def test_seeded_rng_stream_matches_direct_construction():
    assert np.array_equal(
        SeededRng(5).stream(9).uniform(size=16), SeededRng(5, 9).uniform(size=16)
    )
