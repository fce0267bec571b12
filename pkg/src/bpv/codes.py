"""Bit-packed binary codes: packing, Hamming distance, and file I/O.

A code of width ``c`` is stored as ``ceil(c / 64)`` unsigned 64-bit words.
Bit ``i`` of the code lives in word ``i // 64`` at bit position ``i % 64``
(least-significant-bit first), so on little-endian byte order the packed
bytes read back in the same order they are written to disk. Padding bits
beyond the width are always zero, which keeps XOR-popcount distances exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError, WidthMismatch, WidthOverflow

MAX_CODE_WIDTH = 4096

_CODES_MAGIC = "BPV-CODES v1"
_VECS_MAGIC = "BPV-VECS v1"


def words_per_code(width: int) -> int:
    """Number of uint64 words needed for a code of ``width`` bits."""
    _check_width(width)
    return (width + 63) // 64


def _check_width(width: int) -> None:
    if not 1 <= width <= MAX_CODE_WIDTH:
        raise WidthOverflow(
            f"code width must be in [1, {MAX_CODE_WIDTH}], got {width}"
        )


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack 0/1 vectors into uint64 words.

    Args:
        bits: array of shape ``(c,)`` or ``(n, c)`` holding only 0s and 1s.

    Returns:
        uint64 array of shape ``(ceil(c/64),)`` or ``(n, ceil(c/64))``.

    Raises:
        WidthOverflow: if ``c`` is 0 or larger than ``MAX_CODE_WIDTH``.
        ValueError: if any entry is not 0 or 1.
    """
    bits = np.asarray(bits)
    if bits.ndim not in (1, 2):
        raise ValueError(f"expected 1-D or 2-D bit array, got ndim={bits.ndim}")
    width = bits.shape[-1]
    _check_width(width)
    if bits.size and not np.isin(bits, (0, 1)).all():
        raise ValueError("bit array entries must be 0 or 1")
    squeeze = bits.ndim == 1
    rows = np.ascontiguousarray(bits.reshape(-1, width).astype(np.uint8))
    packed = np.packbits(rows, axis=1, bitorder="little")
    n_words = words_per_code(width)
    padded = np.zeros((rows.shape[0], n_words * 8), dtype=np.uint8)
    padded[:, : packed.shape[1]] = packed
    words = padded.view("<u8").astype(np.uint64)
    return words[0] if squeeze else words


def unpack_bits(words: np.ndarray, width: int) -> np.ndarray:
    """Inverse of :func:`pack_bits`.

    Args:
        words: uint64 array of shape ``(n_words,)`` or ``(n, n_words)``.
        width: code width in bits; must fit in the given words.

    Returns:
        uint8 array of 0s and 1s with shape ``(width,)`` or ``(n, width)``.
    """
    words = np.asarray(words, dtype=np.uint64)
    squeeze = words.ndim == 1
    rows = np.ascontiguousarray(words.reshape(-1, words.shape[-1]))
    if rows.shape[1] != words_per_code(width):
        raise WidthMismatch(
            f"width {width} needs {words_per_code(width)} words, "
            f"got {rows.shape[1]}"
        )
    as_bytes = rows.astype("<u8").view(np.uint8)
    bits = np.unpackbits(as_bytes, axis=1, bitorder="little")[:, :width]
    return bits[0] if squeeze else bits


@dataclass(frozen=True)
class BinaryCode:
    """A single fixed-width binary code in packed form."""

    words: np.ndarray  # (n_words,) uint64, padding bits zero
    width: int

    @classmethod
    def from_bits(cls, bits: np.ndarray) -> "BinaryCode":
        bits = np.asarray(bits)
        return cls(words=pack_bits(bits), width=int(bits.shape[-1]))

    def unpack(self) -> np.ndarray:
        return unpack_bits(self.words, self.width)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryCode):
            return NotImplemented
        return self.width == other.width and bool(
            np.array_equal(self.words, other.words)
        )


def hamming(a: BinaryCode, b: BinaryCode) -> int:
    """Hamming distance between two codes of equal width.

    Raises:
        WidthMismatch: if the widths differ.
    """
    if a.width != b.width:
        raise WidthMismatch(f"code widths differ: {a.width} != {b.width}")
    return int(np.bitwise_count(np.bitwise_xor(a.words, b.words)).sum())


def hamming_to_many(query_words: np.ndarray, code_matrix: np.ndarray) -> np.ndarray:
    """Hamming distance from one packed code to each row of a packed matrix.

    No width bookkeeping here; both operands must share the same word
    count with zeroed padding, which the index construction guarantees.
    """
    diff = np.bitwise_xor(code_matrix, query_words[np.newaxis, :])
    return np.bitwise_count(diff).sum(axis=1, dtype=np.int64)


def _mask_padding(words: np.ndarray, width: int) -> np.ndarray:
    """Return a copy with bits at positions >= width forced to zero."""
    out = np.array(words, dtype=np.uint64, copy=True)
    rem = width % 64
    if rem:
        mask = np.uint64((1 << rem) - 1)
        out[..., -1] &= mask
    return out


def write_codes(path: str, ids: list[str], words: np.ndarray, width: int) -> None:
    """Write packed codes with their document ids.

    Layout: ASCII header line ``BPV-CODES v1 <width> <count>``, then one
    record per document: u16 little-endian id byte length, the UTF-8 id
    bytes, and ``ceil(width/8)`` code bytes in little-endian bit order.
    """
    words = np.asarray(words, dtype=np.uint64)
    n_words = words_per_code(width)
    if words.ndim != 2 or words.shape[1] != n_words:
        raise WidthMismatch(
            f"expected code matrix of shape (n, {n_words}) for width {width}"
        )
    if len(ids) != words.shape[0]:
        raise ValueError("ids and codes disagree on document count")
    bytes_per_code = (width + 7) // 8
    as_bytes = np.ascontiguousarray(words).astype("<u8").view(np.uint8)
    as_bytes = as_bytes.reshape(words.shape[0], n_words * 8)[:, :bytes_per_code]
    with open(path, "wb") as fh:
        fh.write(f"{_CODES_MAGIC} {width} {len(ids)}\n".encode("ascii"))
        for i, doc_id in enumerate(ids):
            id_bytes = doc_id.encode("utf-8")
            if len(id_bytes) > 0xFFFF:
                raise ValueError(f"document id too long: {doc_id[:40]}...")
            fh.write(len(id_bytes).to_bytes(2, "little"))
            fh.write(id_bytes)
            fh.write(as_bytes[i].tobytes())


def read_codes(path: str) -> tuple[list[str], np.ndarray, int]:
    """Read a codes file written by :func:`write_codes`.

    Returns:
        ``(ids, words, width)`` where ``words`` has shape
        ``(count, ceil(width/64))``.

    Raises:
        FormatError: on bad magic, truncated records, or nonzero padding.
    """
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").rstrip("\n")
        parts = header.split(" ")
        if parts[:2] != _CODES_MAGIC.split(" ") or len(parts) != 4:
            raise FormatError(f"{path}: not a codes file (header {header!r})")
        try:
            width, count = int(parts[2]), int(parts[3])
        except ValueError as exc:
            raise FormatError(f"{path}: bad header counts") from exc
        _check_width(width)
        if count < 0:
            raise FormatError(f"{path}: negative record count")
        bytes_per_code = (width + 7) // 8
        n_words = words_per_code(width)
        ids: list[str] = []
        raw = np.zeros((count, n_words * 8), dtype=np.uint8)
        for i in range(count):
            len_bytes = fh.read(2)
            if len(len_bytes) != 2:
                raise FormatError(f"{path}: truncated at record {i}")
            id_len = int.from_bytes(len_bytes, "little")
            id_bytes = fh.read(id_len)
            code_bytes = fh.read(bytes_per_code)
            if len(id_bytes) != id_len or len(code_bytes) != bytes_per_code:
                raise FormatError(f"{path}: truncated at record {i}")
            ids.append(id_bytes.decode("utf-8"))
            raw[i, :bytes_per_code] = np.frombuffer(code_bytes, dtype=np.uint8)
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after {count} records")
    words = raw.view("<u8").astype(np.uint64)
    masked = _mask_padding(words, width)
    if not np.array_equal(masked, words):
        raise FormatError(f"{path}: nonzero padding bits beyond width {width}")
    return ids, words, width


def write_vectors(path: str, ids: list[str], vectors: np.ndarray) -> None:
    """Write real-valued document vectors.

    Layout mirrors the codes file: ASCII header ``BPV-VECS v1 <dim> <count>``,
    then per record a u16 little-endian id length, the id bytes, and
    ``dim`` float32 values in little-endian order.
    """
    vectors = np.asarray(vectors, dtype=np.float32)
    if vectors.ndim != 2:
        raise ValueError("expected a 2-D vector matrix")
    if len(ids) != vectors.shape[0]:
        raise ValueError("ids and vectors disagree on document count")
    dim = vectors.shape[1]
    with open(path, "wb") as fh:
        fh.write(f"{_VECS_MAGIC} {dim} {len(ids)}\n".encode("ascii"))
        for i, doc_id in enumerate(ids):
            id_bytes = doc_id.encode("utf-8")
            if len(id_bytes) > 0xFFFF:
                raise ValueError(f"document id too long: {doc_id[:40]}...")
            fh.write(len(id_bytes).to_bytes(2, "little"))
            fh.write(id_bytes)
            fh.write(vectors[i].astype("<f4").tobytes())


def read_vectors(path: str) -> tuple[list[str], np.ndarray]:
    """Read a vectors file written by :func:`write_vectors`."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").rstrip("\n")
        parts = header.split(" ")
        if parts[:2] != _VECS_MAGIC.split(" ") or len(parts) != 4:
            raise FormatError(f"{path}: not a vectors file (header {header!r})")
        try:
            dim, count = int(parts[2]), int(parts[3])
        except ValueError as exc:
            raise FormatError(f"{path}: bad header counts") from exc
        if dim < 1 or count < 0:
            raise FormatError(f"{path}: bad header counts")
        ids: list[str] = []
        vecs = np.zeros((count, dim), dtype=np.float32)
        rec_bytes = dim * 4
        for i in range(count):
            len_bytes = fh.read(2)
            if len(len_bytes) != 2:
                raise FormatError(f"{path}: truncated at record {i}")
            id_len = int.from_bytes(len_bytes, "little")
            id_bytes = fh.read(id_len)
            vec_bytes = fh.read(rec_bytes)
            if len(id_bytes) != id_len or len(vec_bytes) != rec_bytes:
                raise FormatError(f"{path}: truncated at record {i}")
            ids.append(id_bytes.decode("utf-8"))
            vecs[i] = np.frombuffer(vec_bytes, dtype="<f4")
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after {count} records")
    return ids, vecs
