"""KD-tree geometry codec.

Points are quantized to a ``2**q`` lattice per axis over the cloud's bounding
box.  The occupied lattice is then described top-down: every node is an
axis-aligned cell range that is split at its midpoint, cycling through the
non-degenerate axes, and only the point count of the smaller half is sent,
as ``v = floor(n/2) - min(n_low, n_high)`` plus a side bit telling which
half is the smaller one.  Coordinates are never transmitted; they are implied
by the path from the root.  Duplicate cells keep their multiplicity.

``compression_level`` (0-10) selects how rich the entropy contexts are:

=======  ==================================================================
0        one context for all count bits, one for side bits; lone-point
         paths sent as raw bits
1-4      count bits keyed by bit width (parent-count bucket) and bit position
5-7      count bits keyed by width and the already coded high bits; side
         bits keyed by axis
8-10     the 5-7 contexts additionally keyed by tree depth; lone-point
         paths adaptively coded per depth
=======  ==================================================================
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numba
import numpy as np

from . import entropy as ec
from .errors import ContractViolationError, CorruptionError, EmptyInputError, FormatError
from .errors import InvalidParameterError
from .frame import CODEC_KDTREE, EncodedFrame, f32_box
from .pointcloud import PointCloud

MAX_Q = 14
MAX_LEVEL = 10
DEFAULT_LEVEL = 7

_MAX_DEPTH = 3 * MAX_Q
_W = 33  # count widths 0..32
_V_CTX = (_MAX_DEPTH + 1) * _W * 64
_S_BASE = _V_CTX
_S_CTX = 2 * (_MAX_DEPTH + 1)
_L_BASE = _S_BASE + _S_CTX
_L_CTX = _MAX_DEPTH + 1
N_CONTEXTS = _L_BASE + _L_CTX

_jit = numba.njit(cache=True, nogil=True)


@dataclass(frozen=True)
class QuantizationParams:
    level: int
    origin: np.ndarray
    upper: np.ndarray

    @property
    def extent(self) -> np.ndarray:
        return self.upper - self.origin

    @property
    def cells(self) -> int:
        return 1 << self.level

    @property
    def step(self) -> np.ndarray:
        """Cell edge per axis; zero on a degenerate (flat) axis."""
        return self.extent / self.cells

    @property
    def active_axes(self) -> tuple[int, ...]:
        if self.level == 0:
            return ()
        return tuple(a for a in range(3) if self.extent[a] > 0)

    def centers(self, cells: np.ndarray) -> np.ndarray:
        return self.origin + (cells + 0.5) * self.step


@dataclass
class QuantizedCloud:
    cells: np.ndarray
    params: QuantizationParams

    def __len__(self) -> int:
        return self.cells.shape[0]

    def centers(self) -> np.ndarray:
        return self.params.centers(self.cells)


def make_params(lo: np.ndarray, hi: np.ndarray, q: int) -> QuantizationParams:
    if not 0 <= q <= MAX_Q:
        raise InvalidParameterError(f"quantization level {q} outside 0..{MAX_Q}")
    lo32, hi32 = f32_box(lo, hi)
    return QuantizationParams(int(q), lo32, hi32)


def quantize(cloud: PointCloud, q: int) -> QuantizedCloud:
    """Map points to integer cells of the ``2**q`` lattice spanning the bbox."""
    if not isinstance(q, (int, np.integer)) or not 0 <= q <= MAX_Q:
        raise InvalidParameterError(f"quantization level {q!r} outside 0..{MAX_Q}")
    if len(cloud) == 0:
        raise EmptyInputError("cannot quantize an empty cloud")
    xyz = np.ascontiguousarray(cloud.xyz)
    params = make_params(*_extrema(xyz), int(q))
    return QuantizedCloud(_cells_for(xyz, params), params)


def _cells_for(xyz: np.ndarray, params: QuantizationParams) -> np.ndarray:
    return _cells_kernel(np.ascontiguousarray(xyz), params.origin, params.step, params.cells - 1)


@_jit
def _cells_kernel(xyz, origin, step, top):
    n = xyz.shape[0]
    cells = np.zeros((n, 3), dtype=np.int64)
    for a in range(3):
        if step[a] <= 0:
            continue
        inv = step[a]
        o = origin[a]
        for i in range(n):
            c = np.int64(np.floor((xyz[i, a] - o) / inv))
            if c < 0:
                c = 0
            elif c > top:
                c = top
            cells[i, a] = c
    return cells


@_jit
def _extrema(xyz):
    lo = xyz[0].copy()
    hi = xyz[0].copy()
    for i in range(1, xyz.shape[0]):
        for a in range(3):
            v = xyz[i, a]
            if v < lo[a]:
                lo[a] = v
            elif v > hi[a]:
                hi[a] = v
    return lo, hi


def dequantize(qc: QuantizedCloud) -> PointCloud:
    return PointCloud(qc.centers())


def split_code(n_total: int, n_low: int) -> tuple[int, int | None]:
    """Count code of one split: ``(v, side)``.

    ``side`` is 0 when the low half is the smaller one, 1 when the high half
    is, and ``None`` for a perfectly balanced split.
    """
    if n_total < 0 or not 0 <= n_low <= n_total:
        raise ContractViolationError(f"n_low={n_low} outside 0..n_total={n_total}")
    n_high = n_total - n_low
    v = n_total // 2 - min(n_low, n_high)
    if n_low == n_high:
        return v, None
    return v, 0 if n_low < n_high else 1


def split_decode(n_total: int, v: int, side: int | None) -> int:
    """Recover ``n_low`` from a split code."""
    if not 0 <= v <= n_total // 2:
        raise ContractViolationError(f"count code {v} impossible for {n_total} points")
    smaller = n_total // 2 - v
    if side is None:
        if 2 * smaller != n_total:
            raise ContractViolationError("balanced split requires an even, halved count")
        return smaller
    return smaller if side == 0 else n_total - smaller


def code_width(n_total: int) -> int:
    """Bits needed for ``v`` given the parent count."""
    return (n_total // 2).bit_length()


# ---------------------------------------------------------------------------
# compiled traversal
# ---------------------------------------------------------------------------


@_jit
def _tier(level):
    if level == 0:
        return 0
    if level <= 4:
        return 1
    if level <= 7:
        return 2
    return 3


@_jit
def _v_ctx(tier, depth, width, j, prefix):
    if tier == 0:
        return 0
    if tier == 1:
        node = j
    elif j < 5:
        node = (1 << j) | prefix
    else:
        node = 32 + j
    d = depth if tier == 3 else 0
    return (d * _W + width) * 64 + node


@_jit
def _s_ctx(tier, depth, axis, v):
    if tier == 0:
        return _S_BASE
    z = 1 if v == 0 else 0
    if tier == 1:
        return _S_BASE + z
    if tier == 2:
        return _S_BASE + 2 * (axis + 1) + z
    return _S_BASE + 2 * depth + z


@_jit
def _l_ctx(depth):
    return _L_BASE + depth


@_jit
def _bit_schedule(axes, q):
    """Axis and bit index split at each depth."""
    m = axes.size
    depth = q * m
    sched_axis = np.empty(depth, dtype=np.int64)
    sched_bit = np.empty(depth, dtype=np.int64)
    for t in range(depth):
        sched_axis[t] = axes[t % m]
        sched_bit[t] = q - 1 - t // m
    return sched_axis, sched_bit


@_jit
def _interleave(cells, axes, q):
    sched_axis, sched_bit = _bit_schedule(axes, q)
    depth = sched_axis.size
    n = cells.shape[0]
    keys = np.zeros(n, dtype=np.int64)
    for i in range(n):
        k = 0
        for t in range(depth):
            k = (k << 1) | ((cells[i, sched_axis[t]] >> sched_bit[t]) & 1)
        keys[i] = k
    return keys


@_jit
def _deinterleave(keys, axes, q):
    sched_axis, sched_bit = _bit_schedule(axes, q)
    depth = sched_axis.size
    n = keys.size
    cells = np.zeros((n, 3), dtype=np.int64)
    for i in range(n):
        k = keys[i]
        for t in range(depth):
            cells[i, sched_axis[t]] |= ((k >> (depth - 1 - t)) & 1) << sched_bit[t]
    return cells


@_jit
def _encode_tree(keys, depth, axes, level, freq, totals, inc, limit, out):
    """Depth-first KD traversal; returns the payload length written to ``out``.

    Each iteration codes exactly one binary symbol so that the coder
    registers stay in locals.  Phases: 0 = count bits, 1 = side bit,
    2 = path bits of a lone point.
    """
    tier = _tier(level)
    m = max(axes.size, 1)
    low = 0
    rng = ec.MASK32
    cache = 0
    csize = 1
    pos = 0
    first = 1
    cap = 2 * depth + 4
    st_lo = np.empty(cap, dtype=np.int64)
    st_hi = np.empty(cap, dtype=np.int64)
    st_t = np.empty(cap, dtype=np.int64)
    sp = 0
    if depth > 0 and keys.size > 0:
        st_lo[0] = 0
        st_hi[0] = keys.size
        st_t[0] = 0
        sp = 1
    have = False
    phase = 0
    lo = hi = t = s = tt = 0
    n_low = n_high = w = j = v = prefix = key = 0
    while True:
        if not have:
            if sp == 0:
                break
            sp -= 1
            lo = st_lo[sp]
            hi = st_hi[sp]
            t = st_t[sp]
            if hi - lo == 1:
                phase = 2
                key = keys[lo]
                tt = t
            else:
                b = depth - 1 - t
                # first index with bit b set; keys in [lo, hi) share all higher bits
                thresh = ((keys[lo] >> (b + 1)) << (b + 1)) | (np.int64(1) << b)
                a_ = lo
                z_ = hi
                while a_ < z_:
                    mid = (a_ + z_) >> 1
                    if keys[mid] < thresh:
                        a_ = mid + 1
                    else:
                        z_ = mid
                s = a_
                n_low = s - lo
                n_high = hi - s
                half = (hi - lo) >> 1
                v = half - min(n_low, n_high)
                w = 0
                x = half
                while x > 0:
                    w += 1
                    x >>= 1
                j = 0
                prefix = 0
                phase = 0
            have = True

        if phase == 0:
            bit = (v >> (w - 1 - j)) & 1
            ctx = _v_ctx(tier, t, w, j, prefix)
        elif phase == 1:
            bit = 0 if n_low < n_high else 1
            ctx = _s_ctx(tier, t, axes[t % m], v)
        else:
            bit = (key >> (depth - 1 - tt)) & 1
            ctx = -1 if tier < 3 else _l_ctx(tt)

        if ctx < 0:
            rng >>= 1
            if bit:
                low += rng
        else:
            r = rng // totals[ctx]
            f0 = freq[ctx, 0]
            if bit == 0:
                rng = r * f0
            else:
                low += r * f0
                rng = r * freq[ctx, 1]
            freq[ctx, bit] += inc
            totals[ctx] += inc
            if totals[ctx] > limit:
                ec.rescale(freq, totals, ctx)
        while rng < ec.TOP:
            rng <<= 8
            low, cache, csize, pos, first = ec.shift_low(low, cache, csize, pos, first, out)

        done = False
        if phase == 0:
            if j < 5:
                prefix = (prefix << 1) | bit
            j += 1
            if j == w:
                if n_low != n_high:
                    phase = 1
                else:
                    done = True
        elif phase == 1:
            done = True
        else:
            tt += 1
            if tt == depth:
                have = False
        if done:
            have = False
            if t + 1 < depth:
                if n_high > 0:
                    st_lo[sp] = s
                    st_hi[sp] = hi
                    st_t[sp] = t + 1
                    sp += 1
                if n_low > 0:
                    st_lo[sp] = lo
                    st_hi[sp] = s
                    st_t[sp] = t + 1
                    sp += 1
    for _ in range(5):
        low, cache, csize, pos, first = ec.shift_low(low, cache, csize, pos, first, out)
    return pos


@_jit
def _decode_tree(buf, n_all, depth, axes, level, freq, totals, inc, limit):
    """Mirror of :func:`_encode_tree`.  Returns ``(keys, status)`` with
    status 0 = ok, 1 = payload underrun, 2 = inconsistent payload."""
    tier = _tier(level)
    m = max(axes.size, 1)
    keys = np.zeros(n_all, dtype=np.int64)
    if depth == 0 or n_all == 0:
        return keys, 0
    nbuf = buf.size
    rng = ec.MASK32
    code = 0
    pos = 0
    for _ in range(4):
        code <<= 8
        if pos < nbuf:
            code |= buf[pos]
        pos += 1
    if pos > nbuf:
        return keys, 1
    cap = 2 * depth + 4
    st_n = np.empty(cap, dtype=np.int64)
    st_t = np.empty(cap, dtype=np.int64)
    st_p = np.empty(cap, dtype=np.int64)
    st_n[0] = n_all
    st_t[0] = 0
    st_p[0] = 0
    sp = 1
    out_pos = 0
    have = False
    phase = 0
    n = t = pfx = tt = 0
    half = w = j = v = prefix = smaller = 0
    while True:
        if not have:
            if sp == 0:
                break
            sp -= 1
            n = st_n[sp]
            t = st_t[sp]
            pfx = st_p[sp]
            if t == depth:
                for i in range(n):
                    keys[out_pos + i] = pfx
                out_pos += n
                continue
            if n == 1:
                phase = 2
                tt = t
            else:
                half = n >> 1
                w = 0
                x = half
                while x > 0:
                    w += 1
                    x >>= 1
                v = 0
                j = 0
                prefix = 0
                phase = 0
            have = True

        if phase == 0:
            ctx = _v_ctx(tier, t, w, j, prefix)
        elif phase == 1:
            ctx = _s_ctx(tier, t, axes[t % m], v)
        else:
            ctx = -1 if tier < 3 else _l_ctx(tt)

        if ctx < 0:
            rng >>= 1
            bit = 0
            if code >= rng:
                code -= rng
                bit = 1
        else:
            bit, code, rng, ok = ec.dec_split(code, rng, freq[ctx, 0], freq[ctx, 1], totals[ctx])
            if not ok:
                return keys, 2
            freq[ctx, bit] += inc
            totals[ctx] += inc
            if totals[ctx] > limit:
                ec.rescale(freq, totals, ctx)
        while rng < ec.TOP:
            rng <<= 8
            code <<= 8
            if pos < nbuf:
                code |= buf[pos]
            pos += 1
        if pos > nbuf:
            return keys, 1

        done = False
        n_low = 0
        if phase == 0:
            v = (v << 1) | bit
            if j < 5:
                prefix = (prefix << 1) | bit
            j += 1
            if j == w:
                if v > half:
                    return keys, 2
                smaller = half - v
                if 2 * smaller == n:
                    n_low = smaller
                    done = True
                else:
                    phase = 1
        elif phase == 1:
            n_low = smaller if bit == 0 else n - smaller
            done = True
        else:
            pfx |= np.int64(bit) << (depth - 1 - tt)
            tt += 1
            if tt == depth:
                keys[out_pos] = pfx
                out_pos += 1
                have = False
        if done:
            have = False
            n_high = n - n_low
            if n_high > 0:
                st_n[sp] = n_high
                st_t[sp] = t + 1
                st_p[sp] = pfx | (np.int64(1) << (depth - 1 - t))
                sp += 1
            if n_low > 0:
                st_n[sp] = n_low
                st_t[sp] = t + 1
                st_p[sp] = pfx
                sp += 1
    if out_pos != n_all or pos != nbuf:
        return keys, 2
    return keys, 0


def _model() -> ec.AdaptiveModel:
    return ec.AdaptiveModel.uniform(N_CONTEXTS, 2)


def _encode_payload(keys: np.ndarray, depth: int, axes: np.ndarray, level: int) -> bytes:
    # typical frames need well under depth/8 bytes per point; retry with the
    # hard bound (< 3 symbols per point per level) on overflow
    for cap in (keys.size * (depth + 16) // 4 + 4096,
                ec.output_capacity(3 * keys.size * depth)):
        out = np.empty(cap, dtype=np.uint8)
        model = _model()
        n = _encode_tree(keys, depth, axes, level, model.freq, model.totals,
                         model.increment, model.limit, out)
        if n <= cap:
            return out[:n].tobytes()
    raise AssertionError("kdtree payload exceeded its hard size bound")


def encode_quantized(qc: QuantizedCloud, compression_level: int = DEFAULT_LEVEL,
                     profile: int = 0) -> EncodedFrame:
    if not 0 <= compression_level <= MAX_LEVEL:
        raise InvalidParameterError(f"compression level {compression_level} outside 0..{MAX_LEVEL}")
    p = qc.params
    axes = np.array(p.active_axes, dtype=np.int64)
    depth = p.level * axes.size
    keys = np.sort(_interleave(qc.cells, axes, p.level))
    payload = _encode_payload(keys, depth, axes, compression_level) if depth else b""
    return EncodedFrame(
        codec=CODEC_KDTREE,
        param=p.level,
        point_count=len(qc),
        bbox_min=tuple(float(v) for v in p.origin),
        bbox_max=tuple(float(v) for v in p.upper),
        payload=payload,
        profile=profile,
        ext=struct.pack("<B", compression_level),
    )


def encode(cloud: PointCloud, q: int, compression_level: int = DEFAULT_LEVEL,
           profile: int = 0) -> EncodedFrame:
    """Quantize ``cloud`` at level ``q`` and code it as a KD-tree frame."""
    if not 0 <= compression_level <= MAX_LEVEL:
        raise InvalidParameterError(f"compression level {compression_level} outside 0..{MAX_LEVEL}")
    return encode_quantized(quantize(cloud, q), compression_level, profile)


def decode_cells(frame: EncodedFrame) -> QuantizedCloud:
    if frame.codec != CODEC_KDTREE:
        raise FormatError(f"frame holds codec {frame.codec_name}, not kdtree")
    if frame.param > MAX_Q or len(frame.ext) != 1:
        raise FormatError("malformed kdtree frame header")
    level = frame.ext[0]
    if level > MAX_LEVEL:
        raise FormatError(f"compression level {level} outside 0..{MAX_LEVEL}")
    params = QuantizationParams(int(frame.param), np.array(frame.bbox_min, dtype=np.float64),
                                np.array(frame.bbox_max, dtype=np.float64))
    if (params.extent < 0).any():
        raise FormatError("inverted bounding box")
    axes = np.array(params.active_axes, dtype=np.int64)
    depth = params.level * axes.size
    model = _model()
    buf = np.frombuffer(frame.payload, dtype=np.uint8)
    keys, status = _decode_tree(buf, frame.point_count, depth, axes, level, model.freq,
                                model.totals, model.increment, model.limit)
    if status == 1:
        raise CorruptionError("payload underrun while decoding kdtree")
    if status == 2:
        raise CorruptionError("inconsistent kdtree counts in payload")
    return QuantizedCloud(_deinterleave(keys, axes, params.level), params)


def decode(frame: EncodedFrame) -> PointCloud:
    """Reconstruct the cell-center multiset (order: KD traversal order)."""
    return dequantize(decode_cells(frame))
