"""Baseline JPEG encoder/decoder for single-component (grayscale) images.

Encoder: edge-replicated padding to 8-pixel multiples, orthonormal float
DCT, quality-scaled quantization with round-half-away-from-zero, and the
standard luminance Huffman tables. Streams are plain baseline sequential
JPEG files (SOI/APP0/DQT/SOF0/DHT/SOS/EOI) decodable by any conforming
decoder.

Decoder: full marker parser plus an exact port of the classic integer
"slow" inverse DCT used by libjpeg, so decoded pixel planes are bitwise
identical to what mainstream libjpeg-based decoders produce for the same
stream.
"""

from dataclasses import dataclass

import numpy as np

from .resample import bicubic_resize

# Standard luminance quantization table, natural (row-major) order.
BASE_LUMA_QUANT = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.int32,
)

# ZIGZAG[k] = flat natural-order index of the k-th zigzag coefficient.
ZIGZAG = np.array(
    [
        0, 1, 8, 16, 9, 2, 3, 10,
        17, 24, 32, 25, 18, 11, 4, 5,
        12, 19, 26, 33, 40, 48, 41, 34,
        27, 20, 13, 6, 7, 14, 21, 28,
        35, 42, 49, 56, 57, 50, 43, 36,
        29, 22, 15, 23, 30, 37, 44, 51,
        58, 59, 52, 45, 38, 31, 39, 46,
        53, 60, 61, 54, 47, 55, 62, 63,
    ],
    dtype=np.int64,
)

# Standard luminance Huffman table specs (BITS counts per code length 1..16
# followed by the symbol values in code order).
DC_BITS = (0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0)
DC_VALS = tuple(range(12))
AC_BITS = (0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7D)
AC_VALS = (
    0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06,
    0x13, 0x51, 0x61, 0x07, 0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xA1, 0x08,
    0x23, 0x42, 0xB1, 0xC1, 0x15, 0x52, 0xD1, 0xF0, 0x24, 0x33, 0x62, 0x72,
    0x82, 0x09, 0x0A, 0x16, 0x17, 0x18, 0x19, 0x1A, 0x25, 0x26, 0x27, 0x28,
    0x29, 0x2A, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3A, 0x43, 0x44, 0x45,
    0x46, 0x47, 0x48, 0x49, 0x4A, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59,
    0x5A, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69, 0x6A, 0x73, 0x74, 0x75,
    0x76, 0x77, 0x78, 0x79, 0x7A, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89,
    0x8A, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9A, 0xA2, 0xA3,
    0xA4, 0xA5, 0xA6, 0xA7, 0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4, 0xB5, 0xB6,
    0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3, 0xC4, 0xC5, 0xC6, 0xC7, 0xC8, 0xC9,
    0xCA, 0xD2, 0xD3, 0xD4, 0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA, 0xE1, 0xE2,
    0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9, 0xEA, 0xF1, 0xF2, 0xF3, 0xF4,
    0xF5, 0xF6, 0xF7, 0xF8, 0xF9, 0xFA,
)


class JpegFormatError(ValueError):
    """Malformed or unsupported JPEG data; carries the byte offset."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


@dataclass
class JpegStream:
    """An encoded baseline JPEG byte stream and its coded dimensions."""

    data: bytes
    width: int
    height: int

    @property
    def bits(self):
        return 8 * len(self.data)

    def bpp(self, num_pixels=None):
        """Bits per pixel; by default against the coded image's own pixels."""
        if num_pixels is None:
            num_pixels = self.width * self.height
        return self.bits / num_pixels

    @classmethod
    def from_bytes(cls, data):
        width, height = _peek_dimensions(data)
        return cls(bytes(data), width, height)

    @classmethod
    def from_file(cls, path):
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())

    def to_file(self, path):
        with open(path, "wb") as f:
            f.write(self.data)


def quant_table_from_qf(qf):
    """Quality factor (1..100) to an 8x8 luminance quantization table.

    Uses the standard quality scaling: scale 5000/qf below 50, otherwise
    200 - 2*qf, entries clamped to [1, 255].
    """
    if not 1 <= int(qf) <= 100:
        raise ValueError(f"quality factor must be in [1, 100], got {qf}")
    qf = int(qf)
    scale = 5000 // qf if qf < 50 else 200 - 2 * qf
    table = (BASE_LUMA_QUANT.astype(np.int64) * scale + 50) // 100
    return np.clip(table, 1, 255).astype(np.int32)


# ---------------------------------------------------------------------------
# Float DCT (encoder side)

def _dct_matrix():
    u = np.arange(8.0)[:, None]
    x = np.arange(8.0)[None, :]
    m = 0.5 * np.cos((2.0 * x + 1.0) * u * np.pi / 16.0)
    m[0, :] /= np.sqrt(2.0)
    return m


_DCT_M = _dct_matrix()


def dct8x8_forward(block):
    """2-D type-II DCT with JPEG's orthonormal scaling of one 8x8 block.

    The block is expected to be level-shifted (samples minus 128).
    """
    block = np.asarray(block, dtype=np.float64)
    if block.shape != (8, 8):
        raise ValueError(f"expected an 8x8 block, got {block.shape}")
    return _DCT_M @ block @ _DCT_M.T


def dct8x8_inverse(coeffs):
    """Exact float inverse of dct8x8_forward."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape != (8, 8):
        raise ValueError(f"expected an 8x8 block, got {coeffs.shape}")
    return _DCT_M.T @ coeffs @ _DCT_M


def _dct_blocks(blocks):
    return np.einsum("ij,bjk,lk->bil", _DCT_M, blocks, _DCT_M, optimize=True)


# ---------------------------------------------------------------------------
# Integer inverse DCT (decoder side), ported from the classic "islow" routine.
# Fixed point with CONST_BITS=13 fractional bits, two passes with an
# intermediate kept at PASS1_BITS=2 extra bits of precision.

_CONST_BITS = 13
_PASS1_BITS = 2
_F_0_298631336 = 2446
_F_0_390180644 = 3196
_F_0_541196100 = 4433
_F_0_765366865 = 6270
_F_0_899976223 = 7373
_F_1_175875602 = 9633
_F_1_501321110 = 12299
_F_1_847759065 = 15137
_F_1_961570560 = 16069
_F_2_053119869 = 16819
_F_2_562915447 = 20995
_F_3_072711026 = 25172

# Post-IDCT lookup: maps (value & 1023) to the clamped, level-shifted sample,
# reproducing the reference range-limit table.
_RANGE_LUT = np.empty(1024, dtype=np.uint8)
_RANGE_LUT[0:128] = np.arange(128, 256)
_RANGE_LUT[128:512] = 255
_RANGE_LUT[512:896] = 0
_RANGE_LUT[896:1024] = np.arange(0, 128)


def _descale(x, n):
    return (x + (1 << (n - 1))) >> n


def _idct_rotation(i0, i1, i2, i3, i4, i5, i6, i7):
    """Shared even/odd butterfly of the islow algorithm.

    Inputs are the eight spectral samples along one axis (arrays of any
    matching shape, int64, already multiplied by 2^CONST_BITS where the
    algorithm requires). Returns the four (even + odd) output pairs before
    descaling: (t10+t3, t10-t3, t11+t2, t11-t2, t12+t1, t12-t1, t13+t0, t13-t0).
    """
    z1 = (i2 + i6) * _F_0_541196100
    tmp2 = z1 - i6 * _F_1_847759065
    tmp3 = z1 + i2 * _F_0_765366865
    tmp0 = (i0 + i4) << _CONST_BITS
    tmp1 = (i0 - i4) << _CONST_BITS
    t10, t13 = tmp0 + tmp3, tmp0 - tmp3
    t11, t12 = tmp1 + tmp2, tmp1 - tmp2

    t0, t1, t2, t3 = i7, i5, i3, i1
    z1, z2 = t0 + t3, t1 + t2
    z3, z4 = t0 + t2, t1 + t3
    z5 = (z3 + z4) * _F_1_175875602
    t0 = t0 * _F_0_298631336
    t1 = t1 * _F_2_053119869
    t2 = t2 * _F_3_072711026
    t3 = t3 * _F_1_501321110
    z1 = z1 * -_F_0_899976223
    z2 = z2 * -_F_2_562915447
    z3 = z3 * -_F_1_961570560 + z5
    z4 = z4 * -_F_0_390180644 + z5
    t0 += z1 + z3
    t1 += z2 + z4
    t2 += z2 + z3
    t3 += z1 + z4
    return (t10 + t3, t10 - t3, t11 + t2, t11 - t2, t12 + t1, t12 - t1, t13 + t0, t13 - t0)


def _idct_islow_blocks(coeffs, quant):
    """Integer inverse DCT of dequantized blocks, bit-exact with libjpeg.

    coeffs: (b, 8, 8) int array in natural order; quant: (8, 8) table.
    Returns (b, 8, 8) uint8 samples (level shift and clamping included).
    """
    blk = coeffs.astype(np.int64) * quant.astype(np.int64)[None, :, :]

    cols = [blk[:, r, :] for r in range(8)]  # each (b, 8): row r, all columns
    outs = _idct_rotation(*cols)
    order = (0, 7, 1, 6, 2, 5, 3, 4)
    ws = np.empty_like(blk)
    for val, r in zip(outs, order):
        ws[:, r, :] = _descale(val, _CONST_BITS - _PASS1_BITS)

    rows = [ws[:, :, c] for c in range(8)]
    outs = _idct_rotation(*rows)
    final_shift = _CONST_BITS + _PASS1_BITS + 3
    pix = np.empty((blk.shape[0], 8, 8), dtype=np.uint8)
    for val, c in zip(outs, order):
        pix[:, :, c] = _RANGE_LUT[_descale(val, final_shift) & 1023]
    return pix


# ---------------------------------------------------------------------------
# Huffman coding

def _build_codes(bits, vals):
    """Canonical Huffman codes: symbol -> (code, length)."""
    codes = {}
    code = 0
    k = 0
    for length in range(1, 17):
        for _ in range(bits[length - 1]):
            codes[vals[k]] = (code, length)
            code += 1
            k += 1
        code <<= 1
    return codes


_DC_CODES = _build_codes(DC_BITS, DC_VALS)
_AC_CODES = _build_codes(AC_BITS, AC_VALS)


class _BitWriter:
    """MSB-first bit accumulator with JPEG 0xFF byte stuffing."""

    def __init__(self):
        self.buf = bytearray()
        self.acc = 0
        self.nbits = 0

    def write(self, code, length):
        self.acc = (self.acc << length) | code
        self.nbits += length
        while self.nbits >= 8:
            byte = (self.acc >> (self.nbits - 8)) & 0xFF
            self.buf.append(byte)
            if byte == 0xFF:
                self.buf.append(0x00)
            self.nbits -= 8
        self.acc &= (1 << self.nbits) - 1

    def flush(self):
        if self.nbits:
            pad = 8 - self.nbits
            self.write((1 << pad) - 1, pad)
        return bytes(self.buf)


def _magnitude(v):
    """JPEG magnitude category and value bits for a signed coefficient."""
    if v == 0:
        return 0, 0
    size = int(abs(v)).bit_length()
    if v < 0:
        v += (1 << size) - 1
    return size, v


def _encode_scan(quantized):
    """Entropy-code quantized zigzag blocks (b, 64) into scan bytes."""
    writer = _BitWriter()
    prev_dc = 0
    for block in quantized:
        diff = int(block[0]) - prev_dc
        prev_dc = int(block[0])
        size, bits = _magnitude(diff)
        code, length = _DC_CODES[size]
        writer.write(code, length)
        if size:
            writer.write(bits, size)

        nz = np.nonzero(block[1:])[0]
        k = 0  # index into AC positions 1..63, zero-based
        for pos in nz:
            run = int(pos) - k
            while run >= 16:
                code, length = _AC_CODES[0xF0]
                writer.write(code, length)
                run -= 16
            size, bits = _magnitude(int(block[1 + pos]))
            code, length = _AC_CODES[(run << 4) | size]
            writer.write(code, length)
            writer.write(bits, size)
            k = int(pos) + 1
        if k != 63:
            code, length = _AC_CODES[0x00]
            writer.write(code, length)
    return writer.flush()


# ---------------------------------------------------------------------------
# Stream assembly

def _marker(tag, payload=b""):
    if payload:
        return bytes([0xFF, tag]) + (len(payload) + 2).to_bytes(2, "big") + payload
    return bytes([0xFF, tag])


def _dqt_segment(table):
    return _marker(0xDB, bytes([0x00]) + bytes(int(v) for v in table.flat[ZIGZAG]))


def _sof0_segment(width, height):
    payload = bytes([8]) + height.to_bytes(2, "big") + width.to_bytes(2, "big")
    payload += bytes([1, 0x01, 0x11, 0x00])
    return _marker(0xC0, payload)


def _dht_segment(table_class, table_id, bits, vals):
    payload = bytes([(table_class << 4) | table_id]) + bytes(bits) + bytes(vals)
    return _marker(0xC4, payload)


def _app0_jfif():
    return _marker(0xE0, b"JFIF\x00" + bytes([1, 1, 0, 0, 1, 0, 1, 0, 0]))


def jpeg_encode(img, qf):
    """Encode a uint8 grayscale plane as a baseline JPEG stream.

    Arbitrary dimensions are allowed; the right/bottom edges are
    replicated out to multiples of 8 (decoders crop back via the SOF
    dimensions).
    """
    img = np.asarray(img)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ValueError(f"expected a uint8 plane, got {img.dtype} shape {img.shape}")
    height, width = img.shape
    if height < 1 or width < 1 or height > 65535 or width > 65535:
        raise ValueError(f"unsupported dimensions {width}x{height}")
    quant = quant_table_from_qf(qf)

    pad_h = (-height) % 8
    pad_w = (-width) % 8
    padded = np.pad(img, ((0, pad_h), (0, pad_w)), mode="edge")
    bh, bw = padded.shape[0] // 8, padded.shape[1] // 8
    blocks = padded.reshape(bh, 8, bw, 8).transpose(0, 2, 1, 3).reshape(-1, 8, 8)
    shifted = blocks.astype(np.float64) - 128.0

    coeffs = _dct_blocks(shifted)
    scaled = coeffs / quant[None, :, :]
    quantized = (np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)).astype(np.int32)
    # Keep AC magnitudes within the standard table's 10-bit categories.
    quantized[:, :, :].reshape(-1, 64)[:, 1:] = np.clip(
        quantized.reshape(-1, 64)[:, 1:], -1023, 1023
    )
    zz = quantized.reshape(-1, 64)[:, ZIGZAG]

    scan = _encode_scan(zz)
    out = bytearray()
    out += _marker(0xD8)
    out += _app0_jfif()
    out += _dqt_segment(quant)
    out += _sof0_segment(width, height)
    out += _dht_segment(0, 0, DC_BITS, DC_VALS)
    out += _dht_segment(1, 0, AC_BITS, AC_VALS)
    out += _marker(0xDA, bytes([1, 0x01, 0x00, 0, 63, 0]))
    out += scan
    out += _marker(0xD9)
    return JpegStream(bytes(out), width, height)


# ---------------------------------------------------------------------------
# Decoder

class _HuffLut:
    """16-bit-peek decode table for one Huffman table."""

    def __init__(self, bits, vals):
        self.sym = np.zeros(1 << 16, dtype=np.uint16)
        self.length = np.zeros(1 << 16, dtype=np.uint8)
        for symbol, (code, length) in _build_codes(bits, vals).items():
            lo = code << (16 - length)
            hi = (code + 1) << (16 - length)
            self.sym[lo:hi] = symbol
            self.length[lo:hi] = length


_POW2 = (1 << np.arange(15, -1, -1)).astype(np.int64)


class _BitReader:
    def __init__(self, body, base_offset):
        self.bits = np.unpackbits(np.frombuffer(body, dtype=np.uint8))
        self.nbits = len(self.bits)
        # Padding so 16-bit peeks near the end never run off the array.
        self.bits = np.concatenate([self.bits, np.ones(16, dtype=np.uint8)])
        self.pos = 0
        self.base_offset = base_offset

    def _offset(self):
        return self.base_offset + self.pos // 8

    def peek16(self):
        return int(self.bits[self.pos : self.pos + 16] @ _POW2)

    def skip(self, n):
        self.pos += n
        if self.pos > self.nbits:
            raise JpegFormatError("truncated entropy-coded data", self._offset())

    def read(self, n):
        if n == 0:
            return 0
        if self.pos + n > self.nbits:
            raise JpegFormatError("truncated entropy-coded data", self._offset())
        val = int(self.bits[self.pos : self.pos + n] @ _POW2[16 - n :])
        self.pos += n
        return val

    def decode_symbol(self, lut):
        idx = self.peek16()
        length = int(lut.length[idx])
        if length == 0:
            raise JpegFormatError("invalid Huffman code", self._offset())
        self.skip(length)
        return int(lut.sym[idx])


def _extend(value, size):
    if size == 0:
        return 0
    if value < (1 << (size - 1)):
        return value - (1 << size) + 1
    return value


def _peek_dimensions(data):
    """Width/height from the SOF0 segment without a full decode."""
    pos = _expect_soi(data)
    while pos + 4 <= len(data):
        marker, seg_start, seg_end = _next_segment(data, pos)
        if marker == 0xC0:
            h = int.from_bytes(data[seg_start + 1 : seg_start + 3], "big")
            w = int.from_bytes(data[seg_start + 3 : seg_start + 5], "big")
            return w, h
        if marker == 0xDA:
            break
        pos = seg_end
    raise JpegFormatError("no SOF0 segment found", pos)


def _expect_soi(data):
    if len(data) < 2 or data[0] != 0xFF or data[1] != 0xD8:
        raise JpegFormatError("missing SOI marker", 0)
    return 2


def _next_segment(data, pos):
    """Returns (marker, payload_start, payload_end) for the segment at pos."""
    if pos + 2 > len(data):
        raise JpegFormatError("unexpected end of stream", pos)
    if data[pos] != 0xFF:
        raise JpegFormatError(f"expected marker, found 0x{data[pos]:02x}", pos)
    while pos < len(data) and data[pos] == 0xFF:
        pos += 1  # fill bytes are legal between segments
    if pos >= len(data):
        raise JpegFormatError("unexpected end of stream", pos)
    marker = data[pos]
    pos += 1
    if marker in (0xD8, 0xD9) or 0xD0 <= marker <= 0xD7 or marker == 0x01:
        return marker, pos, pos
    if pos + 2 > len(data):
        raise JpegFormatError("truncated segment header", pos)
    seg_len = int.from_bytes(data[pos : pos + 2], "big")
    if seg_len < 2 or pos + seg_len > len(data):
        raise JpegFormatError(f"bad segment length {seg_len}", pos)
    return marker, pos + 2, pos + seg_len


def _parse_dqt(data, start, end, tables, offset):
    pos = start
    while pos < end:
        pq_tq = data[pos]
        precision, table_id = pq_tq >> 4, pq_tq & 0x0F
        pos += 1
        count = 64 * (2 if precision else 1)
        if pos + count > end:
            raise JpegFormatError("truncated DQT segment", offset + pos)
        if precision:
            vals = np.frombuffer(data[pos : pos + count], dtype=">u2").astype(np.int32)
        else:
            vals = np.frombuffer(data[pos : pos + count], dtype=np.uint8).astype(np.int32)
        table = np.zeros(64, dtype=np.int32)
        table[ZIGZAG] = vals
        tables[table_id] = table.reshape(8, 8)
        pos += count


def _parse_dht(data, start, end, tables, offset):
    pos = start
    while pos < end:
        tc_th = data[pos]
        table_class, table_id = tc_th >> 4, tc_th & 0x0F
        if pos + 17 > end:
            raise JpegFormatError("truncated DHT segment", offset + pos)
        bits = list(data[pos + 1 : pos + 17])
        nvals = sum(bits)
        if pos + 17 + nvals > end:
            raise JpegFormatError("truncated DHT segment", offset + pos)
        vals = list(data[pos + 17 : pos + 17 + nvals])
        tables[(table_class, table_id)] = _HuffLut(bits, vals)
        pos += 17 + nvals


def _find_scan_end(data, start):
    """End of entropy-coded data: first 0xFF followed by a real marker."""
    pos = start
    n = len(data)
    while pos < n - 1:
        if data[pos] == 0xFF and data[pos + 1] != 0x00:
            return pos
        pos += 1
    return n


def jpeg_decode(stream):
    """Decode a baseline single-component JPEG stream to a uint8 plane.

    Accepts a JpegStream, bytes, or bytearray. Raises JpegFormatError
    (with a byte offset) on malformed or unsupported input.
    """
    data = stream.data if isinstance(stream, JpegStream) else bytes(stream)
    pos = _expect_soi(data)

    qtables = {}
    htables = {}
    frame = None
    scan = None
    while True:
        marker, seg_start, seg_end = _next_segment(data, pos)
        if marker == 0xD9:
            raise JpegFormatError("EOI before scan data", seg_start)
        elif marker == 0xDB:
            _parse_dqt(data, seg_start, seg_end, qtables, 0)
        elif marker == 0xC4:
            _parse_dht(data, seg_start, seg_end, htables, 0)
        elif marker == 0xC0 or marker == 0xC1:
            ncomp = data[seg_start + 5]
            if ncomp != 1:
                raise JpegFormatError(
                    f"only single-component streams supported, got {ncomp} components",
                    seg_start,
                )
            frame = {
                "height": int.from_bytes(data[seg_start + 1 : seg_start + 3], "big"),
                "width": int.from_bytes(data[seg_start + 3 : seg_start + 5], "big"),
                "sampling": data[seg_start + 7],
                "quant_id": data[seg_start + 8],
            }
            if data[seg_start] != 8:
                raise JpegFormatError("only 8-bit precision supported", seg_start)
            if frame["sampling"] != 0x11:
                raise JpegFormatError("subsampled single component unsupported", seg_start)
        elif marker in (0xC2, 0xC3, 0xC5, 0xC6, 0xC7, 0xC9, 0xCA, 0xCB, 0xCD, 0xCE, 0xCF):
            raise JpegFormatError(
                f"non-baseline frame marker 0xff{marker:02x} unsupported", seg_start
            )
        elif marker == 0xDD:
            interval = int.from_bytes(data[seg_start : seg_start + 2], "big")
            if interval != 0:
                raise JpegFormatError("restart intervals unsupported", seg_start)
        elif marker == 0xDA:
            if frame is None:
                raise JpegFormatError("SOS before SOF", seg_start)
            ns = data[seg_start]
            if ns != 1:
                raise JpegFormatError(f"expected 1 scan component, got {ns}", seg_start)
            dc_id = data[seg_start + 2] >> 4
            ac_id = data[seg_start + 2] & 0x0F
            scan = {"dc": dc_id, "ac": ac_id, "body_start": seg_end}
            break
        # APPn, COM, anything else with a length: skip
        pos = seg_end

    if frame["quant_id"] not in qtables:
        raise JpegFormatError(f"missing quantization table {frame['quant_id']}", pos)
    if (0, scan["dc"]) not in htables or (1, scan["ac"]) not in htables:
        raise JpegFormatError("missing Huffman tables for scan", pos)
    quant = qtables[frame["quant_id"]]
    dc_lut = htables[(0, scan["dc"])]
    ac_lut = htables[(1, scan["ac"])]

    width, height = frame["width"], frame["height"]
    bw, bh = (width + 7) // 8, (height + 7) // 8
    nblocks = bw * bh

    body_start = scan["body_start"]
    body_end = _find_scan_end(data, body_start)
    body = data[body_start:body_end].replace(b"\xff\x00", b"\xff")
    reader = _BitReader(body, body_start)

    zz = np.zeros((nblocks, 64), dtype=np.int32)
    prev_dc = 0
    for b in range(nblocks):
        size = reader.decode_symbol(dc_lut)
        prev_dc += _extend(reader.read(size), size)
        zz[b, 0] = prev_dc
        k = 1
        while k < 64:
            rs = reader.decode_symbol(ac_lut)
            if rs == 0x00:
                break
            if rs == 0xF0:
                k += 16
                continue
            run, size = rs >> 4, rs & 0x0F
            k += run
            if k > 63:
                raise JpegFormatError("AC run past end of block", reader._offset())
            zz[b, k] = _extend(reader.read(size), size)
            k += 1

    coeffs = np.zeros((nblocks, 64), dtype=np.int32)
    coeffs[:, ZIGZAG] = zz
    pix = _idct_islow_blocks(coeffs.reshape(-1, 8, 8), quant)
    plane = pix.reshape(bh, bw, 8, 8).transpose(0, 2, 1, 3).reshape(bh * 8, bw * 8)
    return plane[:height, :width].copy()


# ---------------------------------------------------------------------------
# Degradation operator: downsample then compress

def degrade(img, qf):
    """Apply the two-step degradation to a uint8 HR plane.

    Returns (y, z): y is the antialiased bicubic half-size image, z is
    y after a JPEG round trip at the given quality factor. Odd input
    dimensions are cropped to even before downsampling.
    """
    img = np.asarray(img)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ValueError(f"expected a uint8 plane, got {img.dtype} shape {img.shape}")
    h, w = img.shape
    if h < 16 or w < 16:
        raise ValueError(f"image {w}x{h} too small to degrade (minimum 16x16)")
    img = img[: h - (h % 2), : w - (w % 2)]
    y = bicubic_resize(img, 0.5)
    z = jpeg_decode(jpeg_encode(y, qf))
    return y, z
