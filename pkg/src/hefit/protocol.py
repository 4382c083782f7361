"""Length-prefixed binary channel between the training parties.

Every record on the wire is::

    u32 little-endian length   (length of everything after this field)
    u8  message type
    payload bytes

The payload of matrix-bearing messages is one or more serialized
:class:`~hefit.encoding.EncodedMatrix` values, each self-describing:

    u8  format version (1)
    u32 rows, u32 cols            logical shape
    u8  tiling (0 none / 1 vertical / 2 horizontal)
    u32 period
    u32 grid_rows, u32 grid_cols  block-grid dimensions
    u32 slot_count, u32 block_rows   (context compatibility check)
    u8  encrypted flag
    then per block, row-major:
      f64 level (+inf for plaintext blocks)
      slot_count * complex128, little-endian

The in-process :func:`channel_pair` endpoints speak exactly this format
over shared byte buffers, so swapping in a socket later is a transport
change only.
"""

from __future__ import annotations

import math
import struct

import numpy as np

from .emulator import CipherBlock, EmulatorContext
from .encoding import EncodedMatrix
from .errors import ProtocolError

# Message types.
MSG_BATCH = 1  # EncryptedBatch: features matrix + one-hot labels matrix
MSG_VAL_LOGITS = 2  # EncryptedValLogits: one logits matrix
MSG_STOP = 3  # StopSignal: one decision byte (see DECISION_*)
MSG_WEIGHTS = 4  # FinalWeights: one weights matrix

MESSAGE_NAMES = {
    MSG_BATCH: "EncryptedBatch",
    MSG_VAL_LOGITS: "EncryptedValLogits",
    MSG_STOP: "StopSignal",
    MSG_WEIGHTS: "FinalWeights",
}

# StopSignal decision byte.
DECISION_CONTINUE = 0  # validation loss did not improve; keep training
DECISION_IMPROVED = 1  # improved; server should snapshot current weights
DECISION_STOP = 2  # patience exhausted; send the best snapshot back

_MATRIX_VERSION = 1
_TILING_CODES = {"none": 0, "vertical": 1, "horizontal": 2}
_TILING_NAMES = {v: k for k, v in _TILING_CODES.items()}

_HEAD = struct.Struct("<BIIBIIIIIB")
_LEVEL = struct.Struct("<d")
_FRAME_LEN = struct.Struct("<I")


def pack_matrix(matrix: EncodedMatrix) -> bytes:
    """Serialize an encoded matrix, preserving per-block levels."""
    ctx = matrix.ctx
    rows, cols = matrix.shape
    gr, gc = matrix.grid
    parts = [
        _HEAD.pack(
            _MATRIX_VERSION,
            rows,
            cols,
            _TILING_CODES[matrix.tiling],
            matrix.period or 0,
            gr,
            gc,
            ctx.slot_count,
            ctx.grid_rows,
            int(matrix.encrypted),
        )
    ]
    for row in matrix.blocks:
        for block in row:
            parts.append(_LEVEL.pack(float(block.level)))
            parts.append(np.asarray(block.slots, dtype="<c16").tobytes())
    return b"".join(parts)


def unpack_matrix(ctx: EmulatorContext, data: bytes, offset: int = 0) -> tuple[EncodedMatrix, int]:
    """Rebuild a matrix from :func:`pack_matrix` bytes; returns (matrix, next offset)."""
    try:
        (version, rows, cols, tcode, period, gr, gc, slots, block_rows, enc) = _HEAD.unpack_from(
            data, offset
        )
    except struct.error as exc:
        raise ProtocolError(f"truncated matrix header: {exc}") from None
    if version != _MATRIX_VERSION:
        raise ProtocolError(f"unsupported matrix format version {version}")
    if tcode not in _TILING_NAMES:
        raise ProtocolError(f"unknown tiling code {tcode}")
    if slots != ctx.slot_count or block_rows != ctx.grid_rows:
        raise ProtocolError(
            f"context mismatch: message packed for {slots} slots x {block_rows} rows, "
            f"receiver uses {ctx.slot_count} x {ctx.grid_rows}"
        )
    pos = offset + _HEAD.size
    block_bytes = _LEVEL.size + 16 * slots
    need = gr * gc * block_bytes
    if len(data) - pos < need:
        raise ProtocolError(f"truncated matrix body: need {need} bytes, have {len(data) - pos}")
    grid = []
    for _ in range(gr):
        row = []
        for _ in range(gc):
            (raw_level,) = _LEVEL.unpack_from(data, pos)
            level = math.inf if math.isinf(raw_level) else int(raw_level)
            vals = np.frombuffer(data, dtype="<c16", count=slots, offset=pos + _LEVEL.size)
            row.append(CipherBlock(vals.astype(np.complex128), level, bool(enc)))
            pos += block_bytes
        grid.append(tuple(row))
    matrix = EncodedMatrix(
        ctx=ctx,
        blocks=tuple(grid),
        shape=(rows, cols),
        tiling=_TILING_NAMES[tcode],
        period=period or None,
    )
    return matrix, pos


class ChannelEndpoint:
    """One side of a duplex, length-prefix-framed byte channel."""

    def __init__(self, rx: bytearray, tx: bytearray):
        self._rx = rx
        self._tx = tx

    def send(self, msg_type: int, payload: bytes = b"") -> None:
        if msg_type not in MESSAGE_NAMES:
            raise ProtocolError(f"unknown message type {msg_type}")
        self._tx += _FRAME_LEN.pack(1 + len(payload))
        self._tx.append(msg_type)
        self._tx += payload

    def recv(self) -> tuple[int, bytes]:
        if len(self._rx) < _FRAME_LEN.size:
            raise ProtocolError("no message pending")
        (length,) = _FRAME_LEN.unpack_from(self._rx, 0)
        if length < 1 or len(self._rx) < _FRAME_LEN.size + length:
            raise ProtocolError(f"truncated frame: declared {length} bytes")
        start = _FRAME_LEN.size
        msg_type = self._rx[start]
        payload = bytes(self._rx[start + 1 : start + length])
        del self._rx[: start + length]
        if msg_type not in MESSAGE_NAMES:
            raise ProtocolError(f"unknown message type {msg_type}")
        return msg_type, payload

    def pending(self) -> bool:
        return len(self._rx) >= _FRAME_LEN.size

    # Typed helpers so call sites read like the protocol description.

    def send_batch(self, features: EncodedMatrix, labels: EncodedMatrix) -> None:
        self.send(MSG_BATCH, pack_matrix(features) + pack_matrix(labels))

    def send_val_logits(self, logits: EncodedMatrix) -> None:
        self.send(MSG_VAL_LOGITS, pack_matrix(logits))

    def send_stop_signal(self, decision: int) -> None:
        if decision not in (DECISION_CONTINUE, DECISION_IMPROVED, DECISION_STOP):
            raise ProtocolError(f"invalid stop-signal decision {decision}")
        self.send(MSG_STOP, bytes([decision]))

    def send_weights(self, weights: EncodedMatrix) -> None:
        self.send(MSG_WEIGHTS, pack_matrix(weights))

    def recv_batch(self, ctx: EmulatorContext) -> tuple[EncodedMatrix, EncodedMatrix]:
        payload = self._expect(MSG_BATCH)
        features, pos = unpack_matrix(ctx, payload)
        labels, pos = unpack_matrix(ctx, payload, pos)
        if pos != len(payload):
            raise ProtocolError(f"{len(payload) - pos} stray bytes after batch payload")
        return features, labels

    def recv_val_logits(self, ctx: EmulatorContext) -> EncodedMatrix:
        return self._expect_matrix(MSG_VAL_LOGITS, ctx)

    def recv_stop_signal(self) -> int:
        payload = self._expect(MSG_STOP)
        if len(payload) != 1 or payload[0] not in (
            DECISION_CONTINUE,
            DECISION_IMPROVED,
            DECISION_STOP,
        ):
            raise ProtocolError("malformed stop signal")
        return payload[0]

    def recv_weights(self, ctx: EmulatorContext) -> EncodedMatrix:
        return self._expect_matrix(MSG_WEIGHTS, ctx)

    def _expect(self, msg_type: int) -> bytes:
        got, payload = self.recv()
        if got != msg_type:
            raise ProtocolError(
                f"expected {MESSAGE_NAMES[msg_type]}, got {MESSAGE_NAMES.get(got, got)}"
            )
        return payload

    def _expect_matrix(self, msg_type: int, ctx: EmulatorContext) -> EncodedMatrix:
        payload = self._expect(msg_type)
        matrix, pos = unpack_matrix(ctx, payload)
        if pos != len(payload):
            raise ProtocolError(f"{len(payload) - pos} stray bytes after matrix payload")
        return matrix


def channel_pair() -> tuple[ChannelEndpoint, ChannelEndpoint]:
    """Two connected endpoints sharing in-memory byte streams."""
    a_to_b = bytearray()
    b_to_a = bytearray()
    return ChannelEndpoint(b_to_a, a_to_b), ChannelEndpoint(a_to_b, b_to_a)
