import numpy as np


def pack_bits(values, bits: int) -> bytes:
    """Pack non-negative integers into a little-endian bit stream of `bits` each."""
    v = np.asarray(values, dtype=np.int64).reshape(-1)
    if v.size and (v.min() < 0 or v.max() >= (1 << bits)):
        raise ValueError(f"values do not fit in {bits} bits")
    shifts = np.arange(bits, dtype=np.int64)
    bitstream = ((v[:, None] >> shifts) & 1).astype(np.uint8).reshape(-1)
    return np.packbits(bitstream, bitorder="little").tobytes()


def unpack_bits(data: bytes, bits: int, count: int = None) -> np.ndarray:
    """Inverse of pack_bits; returns int64 values."""
    bitstream = np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8), bitorder="little")
    if count is None:
        count = bitstream.size // bits
    bitstream = bitstream[:count * bits].reshape(count, bits).astype(np.int64)
    return (bitstream << np.arange(bits, dtype=np.int64)).sum(axis=1)
