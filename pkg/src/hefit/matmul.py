"""Matrix products over encoded operands.

Four routines, two packings each of ``A B^T`` (shapes ``(a,b) x (c,b)``) and
``A^T B`` (shapes ``(a,c) x (a,b)``):

* :func:`diag_abt` / :func:`diag_atb` — complex-packed diagonal extraction
  against a tiled operand; c/2 diagonal passes recombined by conjugation.
* :func:`col_major_abt` / :func:`row_major_atb` — one mask-replicate-reduce
  pass per row/column of the small dimension; simpler, rotation-heavier.

:func:`count_formula` gives the exact closed-form ledger cost (CMult, Mult,
Rot) of each routine for a given shape and slot grid; the executed ledgers
match it operation for operation, which the test suite pins with zero
tolerance.
"""

from __future__ import annotations

import math

import numpy as np

from .encoding import (
    EncodedMatrix,
    col_sums,
    make_mask,
    next_pow2,
    pattern_matrix,
    prot_up,
    rot_left,
    rot_up,
    row_sums,
)
from .errors import ShapeMismatch


def _log2(n: int) -> int:
    return int(math.log2(n))


def _check_pair(A: EncodedMatrix, B: EncodedMatrix, a_tiling: str, b_tiling: str, name: str):
    if A.ctx is not B.ctx:
        raise ShapeMismatch(f"{name}: operands from different contexts")
    if A.tiling != a_tiling or B.tiling != b_tiling:
        raise ShapeMismatch(
            f"{name}: expected tilings ({a_tiling}, {b_tiling}), "
            f"got ({A.tiling}, {B.tiling})"
        )


def _rowwise_mul(A: EncodedMatrix, R: EncodedMatrix) -> EncodedMatrix:
    """A (m x n grid) times a single-block-row matrix R (1 x n), rowwise."""
    ctx = A.ctx
    blocks = tuple(
        tuple(ctx.mult(A.blocks[p][q], R.blocks[0][q]) for q in range(A.grid[1]))
        for p in range(A.grid[0])
    )
    return EncodedMatrix(ctx, blocks, A.shape, "none", None)


def _colwise_mul(C: EncodedMatrix, B: EncodedMatrix) -> EncodedMatrix:
    """C (m x 1 grid) times B (m x n), broadcasting C across block columns."""
    ctx = B.ctx
    blocks = tuple(
        tuple(ctx.mult(C.blocks[p][0], B.blocks[p][q]) for q in range(B.grid[1]))
        for p in range(B.grid[0])
    )
    return EncodedMatrix(ctx, blocks, B.shape, "none", None)


# -- diagonal-extraction pair ---------------------------------------------------


def diag_abt(A: EncodedMatrix, B: EncodedMatrix, scale: float = 1.0) -> EncodedMatrix:
    """``scale * A B^T`` for A (a x b) untiled, B (c x b) vertically tiled.

    The tiled B is complex-packed (rows k and k+c/2 share a slot), so only
    c/2 rotated copies are needed; each pass multiplies, sums columns, and
    masks the pair of diagonals it contributes.  A final conjugation doubles
    the real part.  Output: (a x c) horizontally tiled, period c; consumes
    3 levels.
    """
    _check_pair(A, B, "none", "vertical", "diag_abt")
    if A.shape[1] != B.shape[1]:
        raise ShapeMismatch(f"diag_abt: inner dims differ, {A.shape} vs {B.shape}")
    ctx = A.ctx
    c = B.period
    if c > ctx.grid_cols:
        raise ShapeMismatch(f"diag_abt: period {c} exceeds block columns {ctx.grid_cols}")
    m = A.grid[0]
    out_shape = (A.shape[0], B.shape[0])

    if c == 1:
        prod = _rowwise_mul(A, B)
        sums = col_sums(prod)
        ones = make_mask(ctx, 0, 1, grid=(m, 1), scale=scale)
        return sums.mul(ones).with_meta(shape=out_shape, tiling="horizontal", period=1)

    rolled = rot_up(B, c // 2)
    packed = B.add(rolled.map_blocks(ctx.mul_i))
    acc = None
    for k in range(c // 2):
        shifted = rot_up(packed, k)
        prod = _rowwise_mul(A, shifted)
        sums = col_sums(prod)
        mask = make_mask(ctx, k, c, grid=(m, 1), complexified=True, scale=scale)
        term = sums.mul(mask)
        acc = term if acc is None else acc.add(term)
    out = acc.add(acc.conj())
    return out.with_meta(shape=out_shape, tiling="horizontal", period=c)


def diag_atb(A: EncodedMatrix, B: EncodedMatrix, scale: float = 1.0) -> EncodedMatrix:
    """``scale * A^T B`` for A (a x c) horizontally tiled, B (a x b) untiled.

    A is complex-packed via a columnwise rotation; each diagonal pass aligns
    operands either by rotating A cleanly (costs a level per pass) or, when
    A sits at the lower level, by flat-rotating A and partially row-rotating
    B instead (the rotation-heavy branch saves A's budget).  Output:
    (c x b) vertically tiled, period c.
    """
    _check_pair(A, B, "horizontal", "none", "diag_atb")
    if A.shape[0] != B.shape[0]:
        raise ShapeMismatch(f"diag_atb: outer dims differ, {A.shape} vs {B.shape}")
    ctx = A.ctx
    c = A.period
    if c > ctx.grid_rows or ctx.grid_rows % c:
        raise ShapeMismatch(f"diag_atb: period {c} incompatible with block rows {ctx.grid_rows}")
    n = B.grid[1]
    out_shape = (A.shape[1], B.shape[1])

    if c == 1:
        prod = _colwise_mul(A, B)
        sums = row_sums(prod)
        ones = make_mask(ctx, 0, 1, grid=(1, n), scale=scale)
        return sums.mul(ones).with_meta(shape=out_shape, tiling="vertical", period=1)

    use_partial = A.level < B.level
    packed = A.add(rot_left(A, c // 2).map_blocks(ctx.mul_i))
    acc = None
    for k in range(c // 2):
        if use_partial:
            left = packed.lrot(k)
            right = prot_up(B, k)
        else:
            left = rot_left(packed, k)
            right = B
        prod = _colwise_mul(left, right)
        sums = row_sums(prod)
        mask = make_mask(ctx, -k, c, grid=(1, n), complexified=True, scale=scale)
        term = sums.mul(mask)
        acc = term if acc is None else acc.add(term)
    out = acc.add(acc.conj())
    return out.with_meta(shape=out_shape, tiling="vertical", period=c)


# -- mask-replicate-reduce pair -------------------------------------------------


def col_major_abt(A: EncodedMatrix, B: EncodedMatrix, scale: float = 1.0) -> EncodedMatrix:
    """``scale * A B^T`` with both operands untiled; one pass per row of B.

    Row j of B is isolated, replicated to every block row, multiplied into
    A, and the row sums are parked in output column j.  Output: (a x c)
    untiled; consumes 3 levels (isolate, product, park).
    """
    _check_pair(A, B, "none", "none", "col_major_abt")
    if A.shape[1] != B.shape[1]:
        raise ShapeMismatch(f"col_major_abt: inner dims differ, {A.shape} vs {B.shape}")
    ctx = A.ctx
    s0, s1 = ctx.grid_rows, ctx.grid_cols
    c = B.shape[0]
    if B.grid[0] != 1 or c > s1:
        raise ShapeMismatch(f"col_major_abt: B rows {c} must fit one block and {s1} columns")
    m, n = A.grid

    col0 = np.zeros((s0, s1))
    col0[:, 0] = scale
    col0_block = ctx.pack(col0.ravel())

    acc = None
    for j in range(c):
        rowj = np.zeros((s0, s1))
        rowj[j, :] = 1.0
        picked = B.mul(pattern_matrix(ctx, rowj, grid=B.grid))
        for t in range(_log2(s0)):
            picked = picked.add(picked.lrot((1 << t) * s1))
        prod = _rowwise_mul(A, picked)
        folded = []
        for p in range(m):
            blk = prod.blocks[p][0]
            for q in range(1, n):
                blk = ctx.add(blk, prod.blocks[p][q])
            for t in range(_log2(s1)):
                blk = ctx.add(blk, ctx.lrot(blk, 1 << t))
            blk = ctx.cmult(blk, col0_block)
            blk = ctx.rrot(blk, j)
            folded.append((blk,))
        term = EncodedMatrix(ctx, tuple(folded), (A.shape[0], c), "none", None)
        acc = term if acc is None else acc.add(term)
    return acc.with_meta(shape=(A.shape[0], c))


def row_major_atb(A: EncodedMatrix, B: EncodedMatrix, scale: float = 1.0) -> EncodedMatrix:
    """``scale * A^T B`` with both operands untiled; one pass per column of A.

    Column j of A is pulled into column 0, broadcast across each row,
    multiplied into B, and the column totals are masked into output row j.
    Output: (c x b) untiled; consumes 3 levels (isolate, product, park).
    """
    _check_pair(A, B, "none", "none", "row_major_atb")
    if A.shape[0] != B.shape[0]:
        raise ShapeMismatch(f"row_major_atb: outer dims differ, {A.shape} vs {B.shape}")
    ctx = A.ctx
    s0, s1 = ctx.grid_rows, ctx.grid_cols
    c = A.shape[1]
    if A.grid[1] != 1 or c > s0:
        raise ShapeMismatch(f"row_major_atb: A columns {c} must fit one block and {s0} rows")
    n = B.grid[1]

    col0 = np.zeros((s0, s1))
    col0[:, 0] = 1.0
    col0_block = ctx.pack(col0.ravel())

    acc = None
    for j in range(c):
        picked = A.lrot(j)
        picked = picked.map_blocks(lambda b: ctx.cmult(b, col0_block))
        for t in range(_log2(s1)):
            picked = picked.add(picked.rrot(1 << t))
        prod = _colwise_mul(picked, B)
        sums = row_sums(prod)
        rowj = np.zeros((s0, s1))
        rowj[j, :] = scale
        term = sums.mul(pattern_matrix(ctx, rowj, grid=(1, n)))
        acc = term if acc is None else acc.add(term)
    return acc.with_meta(shape=(c, B.shape[1]))


# -- closed-form ledger costs ---------------------------------------------------

ALGORITHMS = (
    "diag_abt",
    "diag_atb_rl",
    "diag_atb_pru",
    "col_major",
    "row_major",
    "jin_abt",
    "jin_atb",
)


def count_formula(algorithm: str, shape: tuple[int, int, int], s0: int, s1: int) -> dict[str, int]:
    """Exact {CMult, Mult, Rot} cost of one product on an (s0, s1) slot grid.

    ``shape = (a, b, c)`` with the small dimension c (classes).  The
    ``diag_atb_*`` variants name the two alignment branches.  ``jin_*`` are
    the per-sample-packing baseline estimates (never executed here): ABᵀ
    needs b*c plain products and no rotations; AᵀB rotates every product
    down its block, log2(s0*s1) steps each.
    """
    a, b, c = (int(v) for v in shape)
    if min(a, b, c) < 1:
        raise ShapeMismatch(f"count_formula: bad shape {shape}")
    m = -(-a // s0)
    n = -(-b // s1)
    ls0, ls1 = _log2(s0), _log2(s1)
    h = c // 2

    if algorithm == "diag_abt":
        if c == 1:
            return {"CMult": 2 * m, "Mult": m * n, "Rot": 2 * m * ls1}
        return {"CMult": c * m, "Mult": h * m * n, "Rot": h * (n + 2 * m * ls1)}
    if algorithm == "diag_atb_rl":
        if c == 1:
            return {"CMult": n, "Mult": m * n, "Rot": n * ls0}
        return {"CMult": h * (m + n), "Mult": h * m * n, "Rot": h * (2 * m + n * ls0)}
    if algorithm == "diag_atb_pru":
        if c == 1:
            return {"CMult": n, "Mult": m * n, "Rot": n * ls0}
        return {
            "CMult": m + (h - 1) * m * n + h * n,
            "Mult": h * m * n,
            "Rot": 2 * m + (h - 1) * (m + m * n) + h * n * ls0,
        }
    if algorithm in ("col_major", "row_major"):
        return {
            "CMult": c * (n + m),
            "Mult": c * m * n,
            "Rot": c * (n * ls0 + m * ls1 + m) - m,
        }
    if algorithm == "jin_abt":
        return {"CMult": 0, "Mult": b * c, "Rot": 0}
    if algorithm == "jin_atb":
        return {"CMult": 0, "Mult": b * c, "Rot": b * c * _log2(s0 * s1)}
    raise ShapeMismatch(f"count_formula: unknown algorithm {algorithm!r}")


def tiled_for_abt(ctx, b_matrix, encrypted=True, level=None):
    """Convenience: encode the (c x b) operand of diag_abt (vertical tiling)."""
    from .encoding import encode

    return encode(ctx, b_matrix, tiling="vertical", encrypted=encrypted, level=level)


def expected_period(c: int) -> int:
    return next_pow2(c)
