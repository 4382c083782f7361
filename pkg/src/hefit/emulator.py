"""Slot-level emulator for leveled homomorphic arithmetic on packed vectors.

A ciphertext is modeled as a fixed-width vector of complex slots plus a
remaining multiplicative budget (its *level*).  Arithmetic on slots is exact
IEEE double precision — there is no noise model — so a plaintext computation
that mirrors the same operation order is a bit-exact oracle for the emulated
one.  What the emulator does track faithfully:

* level bookkeeping (multiplications consume one level; a multiply at level 0
  raises :class:`~hefit.errors.DepthExhausted` unless auto-bootstrap is on),
* an operation ledger with per-op cost weights, giving a latency estimate for
  the sequence of homomorphic ops that a real backend would execute.

Plaintext blocks (``encrypted=False``) flow through the same code paths with
an infinite level and are never ledgered, which lets any pipeline double as
its own reference implementation.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

from .errors import DepthExhausted, SlotCountMismatch

OP_KINDS = ("Add", "CMult", "Mult", "Rot", "Conj", "Bootstrap")

# Per-op latency estimates in milliseconds.  Conjugation is a Galois
# automorphism like a rotation, so it shares the rotation weight.
DEFAULT_OP_WEIGHTS_MS = {
    "Add": 0.085,
    "CMult": 0.9,
    "Mult": 1.6,
    "Rot": 1.2,
    "Conj": 1.2,
    "Bootstrap": 159.0,
}

PLAINTEXT_LEVEL = math.inf


def is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class CipherBlock:
    """One packed slot vector plus its remaining multiplicative budget.

    Instances are immutable: the slot array is made read-only on
    construction and every operation returns a fresh block.
    """

    slots: np.ndarray
    level: float
    encrypted: bool = True

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(np.asarray(self.slots, dtype=np.complex128))
        arr.setflags(write=False)
        object.__setattr__(self, "slots", arr)

    def __len__(self) -> int:
        return int(self.slots.shape[0])


class OpLedger:
    """Thread-safe counters for every homomorphic operation executed."""

    def __init__(self, weights: dict[str, float] | None = None):
        self.weights = dict(DEFAULT_OP_WEIGHTS_MS)
        if weights:
            self.weights.update(weights)
        self._counts = {kind: 0 for kind in OP_KINDS}
        self._lock = threading.Lock()

    def record(self, kind: str, n: int = 1) -> None:
        with self._lock:
            self._counts[kind] += n

    def counts(self) -> dict[str, int]:
        with self._lock:
            return dict(self._counts)

    # `snapshot`/`delta` make "count exactly what this call executed" checks
    # one-liners in tests and benches.
    def snapshot(self) -> dict[str, int]:
        return self.counts()

    def delta(self, before: dict[str, int]) -> dict[str, int]:
        now = self.counts()
        return {kind: now[kind] - before.get(kind, 0) for kind in OP_KINDS}

    @property
    def estimated_ms(self) -> float:
        counts = self.counts()
        return float(sum(counts[k] * self.weights.get(k, 0.0) for k in OP_KINDS))

    def estimate_ms(self, counts: dict[str, int]) -> float:
        return float(sum(counts.get(k, 0) * self.weights.get(k, 0.0) for k in OP_KINDS))

    def reset(self) -> None:
        with self._lock:
            for kind in OP_KINDS:
                self._counts[kind] = 0


class EmulatorContext:
    """Holds the slot geometry, the ledger, and all primitive operations.

    Slots are viewed as a ``grid_rows x grid_cols`` matrix in row-major order
    (``slot_count = grid_rows * grid_cols``, all powers of two).  Rotations
    are cyclic over the flat slot vector.

    ``auto_bootstrap=False`` means a multiplicative op on a level-0 operand
    raises; with ``True`` the operand is first restored to ``max_level`` and
    the Bootstrap counter ticks.  Training pipelines switch it on; count
    benchmarks leave it off so ledgers stay pure.
    """

    def __init__(
        self,
        slot_count: int = 4096,
        grid_rows: int = 64,
        *,
        max_level: int = 12,
        op_weights: dict[str, float] | None = None,
        auto_bootstrap: bool = False,
    ):
        if not is_pow2(slot_count):
            raise SlotCountMismatch(f"slot_count must be a power of two, got {slot_count}")
        if not is_pow2(grid_rows) or grid_rows > slot_count:
            raise SlotCountMismatch(
                f"grid_rows must be a power of two <= slot_count, got {grid_rows}"
            )
        if max_level < 1:
            raise ValueError(f"max_level must be >= 1, got {max_level}")
        self.slot_count = slot_count
        self.grid_rows = grid_rows
        self.grid_cols = slot_count // grid_rows
        self.max_level = max_level
        self.auto_bootstrap = auto_bootstrap
        self.ledger = OpLedger(op_weights)
        # (role, tag) pairs recorded for every decode of encrypted data.
        self.decode_events: list[tuple[str, str | None]] = []

    # -- block construction -------------------------------------------------

    def _slot_array(self, values) -> np.ndarray:
        arr = np.asarray(values, dtype=np.complex128).ravel()
        if arr.shape[0] != self.slot_count:
            raise SlotCountMismatch(
                f"expected {self.slot_count} slots, got {arr.shape[0]}"
            )
        return arr

    def encrypt(self, values, level: int | None = None) -> CipherBlock:
        lvl = self.max_level if level is None else level
        if not (0 <= lvl <= self.max_level):
            raise ValueError(f"level must be in [0, {self.max_level}], got {lvl}")
        return CipherBlock(self._slot_array(values), lvl, True)

    def pack(self, values) -> CipherBlock:
        """Pack plaintext values into a block usable by all ops (unledgered)."""
        return CipherBlock(self._slot_array(values), PLAINTEXT_LEVEL, False)

    # -- operand plumbing ----------------------------------------------------

    def _operand(self, v):
        """Normalize an op argument to (values, encrypted, level)."""
        if isinstance(v, CipherBlock):
            if len(v) != self.slot_count:
                raise SlotCountMismatch(
                    f"block has {len(v)} slots, context expects {self.slot_count}"
                )
            return v.slots, v.encrypted, v.level
        if isinstance(v, (int, float, complex, np.integer, np.floating, np.complexfloating)):
            return complex(v), False, PLAINTEXT_LEVEL
        return self._slot_array(v), False, PLAINTEXT_LEVEL

    def _depth_ready(self, level: float, encrypted: bool, op: str) -> float:
        """Check an operand can afford one multiplicative level."""
        if not encrypted or level >= 1:
            return level
        if self.auto_bootstrap:
            self.ledger.record("Bootstrap")
            return self.max_level
        raise DepthExhausted(f"{op}: operand at level {int(level)} cannot be multiplied")

    # -- arithmetic ----------------------------------------------------------

    def add(self, x, y) -> CipherBlock:
        vx, ex, lx = self._operand(x)
        vy, ey, ly = self._operand(y)
        encrypted = ex or ey
        if encrypted:
            self.ledger.record("Add")
        return CipherBlock(vx + vy, min(lx, ly), encrypted)

    def sub(self, x, y) -> CipherBlock:
        """Subtraction; costs one Add (negation is a free sign flip)."""
        vx, ex, lx = self._operand(x)
        vy, ey, ly = self._operand(y)
        encrypted = ex or ey
        if encrypted:
            self.ledger.record("Add")
        return CipherBlock(vx - vy, min(lx, ly), encrypted)

    def mult(self, x, y) -> CipherBlock:
        """Elementwise product.  Two ciphertexts cost a Mult, a ciphertext and
        a plaintext cost a CMult, two plaintexts are free.  Consumes one level
        of every encrypted operand."""
        vx, ex, lx = self._operand(x)
        vy, ey, ly = self._operand(y)
        if ex:
            lx = self._depth_ready(lx, ex, "mult")
        if ey:
            ly = self._depth_ready(ly, ey, "mult")
        if ex and ey:
            self.ledger.record("Mult")
        elif ex or ey:
            self.ledger.record("CMult")
        level = min(lx, ly)
        if ex or ey:
            level = level - 1
        return CipherBlock(vx * vy, level, ex or ey)

    def cmult(self, x, y) -> CipherBlock:
        """Multiply by plaintext (scalar, array, or plaintext block)."""
        if isinstance(y, CipherBlock) and y.encrypted:
            raise TypeError("cmult expects a plaintext second operand")
        return self.mult(x, y)

    def lrot(self, x: CipherBlock, r: int) -> CipherBlock:
        """Cyclic left rotation of the flat slot vector by r positions.

        Rotation by 0 (mod slot_count) is an uncounted no-op; negative r is a
        right rotation.  Rotations never consume a level."""
        vx, ex, lx = self._operand(x)
        r = int(r) % self.slot_count
        if r == 0:
            return x if isinstance(x, CipherBlock) else CipherBlock(vx, lx, ex)
        if ex:
            self.ledger.record("Rot")
        return CipherBlock(np.roll(vx, -r), lx, ex)

    def rrot(self, x: CipherBlock, r: int) -> CipherBlock:
        return self.lrot(x, -int(r))

    def conj(self, x: CipherBlock) -> CipherBlock:
        vx, ex, lx = self._operand(x)
        if ex:
            self.ledger.record("Conj")
        return CipherBlock(np.conj(vx), lx, ex)

    def mul_i(self, x: CipherBlock) -> CipherBlock:
        """Multiply every slot by the imaginary unit.

        This is a packing trick, not a homomorphic multiplication: it is
        depth-free and unledgered."""
        vx, ex, lx = self._operand(x)
        return CipherBlock(vx * 1j, lx, ex)

    def bootstrap(self, x: CipherBlock) -> CipherBlock:
        """Restore a ciphertext to max_level.  Slots are unchanged (the
        emulator is noise-free); plaintext blocks pass through untouched."""
        if not isinstance(x, CipherBlock) or not x.encrypted:
            return x
        self.ledger.record("Bootstrap")
        return CipherBlock(x.slots, self.max_level, True)

    # -- audit ----------------------------------------------------------------

    def note_decode(self, role: str, tag: str | None = None) -> None:
        self.decode_events.append((role, tag))

    def decodes_by(self, role: str) -> list[tuple[str, str | None]]:
        return [ev for ev in self.decode_events if ev[0] == role]
