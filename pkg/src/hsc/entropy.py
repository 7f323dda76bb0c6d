"""Adaptive multi-context range coder.

The coder keeps a 32-bit range and a 33-bit ``low`` register with carry
propagation (LZMA style byte output).  Symbol probabilities come from
per-context frequency tables that start uniform (every count = 1), grow by
a fixed increment after each coded symbol and are halved once a context's
total exceeds ``limit``.  Only integer arithmetic is used, so payloads are
byte-identical across platforms.

Two layers are exposed:

* :func:`encode_symbols` / :func:`decode_symbols` work on whole
  ``(context, symbol)`` streams and are what most callers want.
* The ``enc_*`` / ``dec_*`` numba kernels operate on explicit state arrays
  so that the geometry codecs can interleave modelling and coding inside
  their own compiled loops.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence

import numba
import numpy as np

from .errors import ContractViolationError, CorruptionError, DecodeUnderrunError

TOP = 1 << 24
MASK32 = (1 << 32) - 1
DEFAULT_INCREMENT = 32
DEFAULT_LIMIT = 1 << 16

# encoder state slots
_LOW, _RANGE, _CACHE, _CACHE_SIZE, _POS, _FIRST = 0, 1, 2, 3, 4, 5
# decoder state slots
_DRANGE, _CODE, _DPOS, _UNDERRUN, _BAD = 0, 1, 2, 3, 4

_jit = numba.njit(cache=True, nogil=True)


class AdaptiveModel:
    """Per-context adaptive frequency tables.

    ``alphabet_sizes[c]`` is the number of symbols context ``c`` can emit.
    The model is mutated by coding; use :meth:`copy` to keep a pristine
    initial state for the decoder.
    """

    def __init__(
        self,
        alphabet_sizes: Sequence[int] | np.ndarray,
        increment: int = DEFAULT_INCREMENT,
        limit: int = DEFAULT_LIMIT,
    ) -> None:
        alpha = np.asarray(alphabet_sizes, dtype=np.int64)
        if alpha.ndim != 1 or alpha.size == 0:
            raise ContractViolationError("alphabet_sizes must be a non-empty 1-D sequence")
        if (alpha < 1).any():
            raise ContractViolationError("every context needs at least one symbol")
        if int(alpha.max()) * increment > limit:
            raise ContractViolationError("alphabet too large for the coder precision bound")
        if limit > (1 << 16):
            raise ContractViolationError("limit must not exceed 2**16")
        self.alphabet_sizes = alpha
        self.increment = int(increment)
        self.limit = int(limit)
        width = int(alpha.max())
        self.freq = (np.arange(width) < alpha[:, None]).astype(np.int32)
        self.totals = alpha.copy()

    @classmethod
    def uniform(cls, n_contexts: int, alphabet_size: int, **kw) -> AdaptiveModel:
        return cls(np.full(n_contexts, alphabet_size, dtype=np.int64), **kw)

    @property
    def n_contexts(self) -> int:
        return int(self.alphabet_sizes.size)

    def copy(self) -> AdaptiveModel:
        other = object.__new__(AdaptiveModel)
        other.alphabet_sizes = self.alphabet_sizes.copy()
        other.increment = self.increment
        other.limit = self.limit
        other.freq = self.freq.copy()
        other.totals = self.totals.copy()
        return other


# ---------------------------------------------------------------------------
# compiled kernels
#
# Hot loops keep the coder registers in local variables; helpers that take
# arrays are only called on the slow paths (byte output, rescaling) because
# numba reference-counts array arguments on every call.
# ---------------------------------------------------------------------------


@_jit
def enc_init():
    st = np.zeros(6, dtype=np.int64)
    st[_RANGE] = MASK32
    st[_CACHE_SIZE] = 1
    st[_FIRST] = 1
    return st


@_jit
def shift_low(low, cache, csize, pos, first, out):
    """Emit the settled top byte of ``low``; returns updated registers."""
    if low < 0xFF000000 or low > MASK32:
        carry = low >> 32
        c = cache
        while True:
            if first:
                # leading byte is always zero and is never emitted
                first = 0
            else:
                if pos < out.size:
                    out[pos] = (c + carry) & 0xFF
                pos += 1
            c = 0xFF
            csize -= 1
            if csize == 0:
                break
        cache = (low >> 24) & 0xFF
    csize += 1
    low = (low & 0x00FFFFFF) << 8
    return low, cache, csize, pos, first


@_jit
def rescale(freq, totals, ctx):
    t = 0
    for i in range(freq.shape[1]):
        f = freq[ctx, i]
        if f > 0:
            f = (f + 1) >> 1
            freq[ctx, i] = f
            t += f
    totals[ctx] = t


@_jit
def _encode_into(st, out, ctxs, syms, freq, totals, inc, limit):
    """Code ``syms`` under ``ctxs``; a negative context means one raw bit."""
    low = st[_LOW]
    rng = st[_RANGE]
    cache = st[_CACHE]
    csize = st[_CACHE_SIZE]
    pos = st[_POS]
    first = st[_FIRST]
    for i in range(ctxs.size):
        ctx = ctxs[i]
        sym = syms[i]
        if ctx < 0:
            rng >>= 1
            if sym:
                low += rng
        else:
            cum = 0
            for k in range(sym):
                cum += freq[ctx, k]
            r = rng // totals[ctx]
            low += r * cum
            rng = r * freq[ctx, sym]
            freq[ctx, sym] += inc
            totals[ctx] += inc
            if totals[ctx] > limit:
                rescale(freq, totals, ctx)
        while rng < TOP:
            rng <<= 8
            low, cache, csize, pos, first = shift_low(low, cache, csize, pos, first, out)
    st[_LOW] = low
    st[_RANGE] = rng
    st[_CACHE] = cache
    st[_CACHE_SIZE] = csize
    st[_POS] = pos
    st[_FIRST] = first


@_jit
def enc_finish(st, out):
    low = st[_LOW]
    cache = st[_CACHE]
    csize = st[_CACHE_SIZE]
    pos = st[_POS]
    first = st[_FIRST]
    for _ in range(5):
        low, cache, csize, pos, first = shift_low(low, cache, csize, pos, first, out)
    st[_POS] = pos
    return pos


@_jit
def dec_init(buf):
    st = np.zeros(5, dtype=np.int64)
    st[_DRANGE] = MASK32
    code = 0
    for k in range(4):
        code <<= 8
        if k < buf.size:
            code |= buf[k]
        else:
            st[_UNDERRUN] = 1
    st[_CODE] = code
    st[_DPOS] = 4
    return st


@_jit
def dec_split(code, rng, f0, f1, total):
    """Binary decision: returns ``(bit, code, range, ok)`` before renormalization."""
    r = rng // total
    split = r * f0
    if code < split:
        return 0, code, split, True
    code -= split
    rng = r * f1
    return 1, code, rng, code < rng


@_jit
def _decode_into(st, buf, ctxs, out, freq, totals, inc, limit):
    rng = st[_DRANGE]
    code = st[_CODE]
    pos = st[_DPOS]
    bad = st[_BAD]
    n = freq.shape[1]
    nbuf = buf.size
    for i in range(ctxs.size):
        ctx = ctxs[i]
        if ctx < 0:
            rng >>= 1
            sym = 0
            if code >= rng:
                code -= rng
                sym = 1
        else:
            total = totals[ctx]
            r = rng // total
            target = code // r
            if target >= total:
                bad = 1
                target = total - 1
            cum = 0
            sym = 0
            while sym < n:
                f = freq[ctx, sym]
                if cum + f > target:
                    break
                cum += f
                sym += 1
            code -= r * cum
            rng = r * freq[ctx, sym]
            freq[ctx, sym] += inc
            totals[ctx] += inc
            if totals[ctx] > limit:
                rescale(freq, totals, ctx)
        out[i] = sym
        while rng < TOP:
            rng <<= 8
            code <<= 8
            if pos < nbuf:
                code |= buf[pos]
            pos += 1
        if pos > nbuf:
            break
    st[_DRANGE] = rng
    st[_CODE] = code
    st[_DPOS] = pos
    st[_BAD] = bad
    if pos > nbuf:
        st[_UNDERRUN] = 1


@_jit
def dec_status(st):
    """0 = fine, 1 = ran past the payload, 2 = impossible code value."""
    if st[_UNDERRUN]:
        return 1
    if st[_BAD]:
        return 2
    return 0


class StreamEncoder:
    """Resumable encoder over a growable byte buffer."""

    def __init__(self, model: AdaptiveModel, capacity: int = 1024) -> None:
        self.model = model
        self.state = enc_init()
        self.out = np.empty(max(capacity, 16), dtype=np.uint8)

    def write(self, contexts: np.ndarray, symbols: np.ndarray) -> None:
        contexts = np.ascontiguousarray(contexts, dtype=np.int64)
        symbols = np.ascontiguousarray(symbols, dtype=np.int64)
        need = int(self.state[_POS]) + output_capacity(contexts.size)
        if need > self.out.size:
            grown = np.empty(max(need, 2 * self.out.size), dtype=np.uint8)
            grown[: self.out.size] = self.out
            self.out = grown
        m = self.model
        _encode_into(self.state, self.out, contexts, symbols, m.freq, m.totals,
                     m.increment, m.limit)

    def finish(self) -> bytes:
        if int(self.state[_POS]) + 8 > self.out.size:
            grown = np.empty(self.out.size + 16, dtype=np.uint8)
            grown[: self.out.size] = self.out
            self.out = grown
        n = enc_finish(self.state, self.out)
        return self.out[:n].tobytes()


class StreamDecoder:
    """Resumable decoder mirroring :class:`StreamEncoder`."""

    def __init__(self, payload: bytes, model: AdaptiveModel) -> None:
        self.model = model
        self.buf = np.frombuffer(payload, dtype=np.uint8)
        self.state = dec_init(self.buf)

    def read(self, contexts: np.ndarray) -> np.ndarray:
        contexts = np.ascontiguousarray(contexts, dtype=np.int64)
        out = np.zeros(contexts.size, dtype=np.int64)
        m = self.model
        _decode_into(self.state, self.buf, contexts, out, m.freq, m.totals,
                     m.increment, m.limit)
        raise_for_status(dec_status(self.state))
        return out

    @property
    def consumed(self) -> int:
        return int(self.state[_DPOS])


def output_capacity(n_symbols: int) -> int:
    """Byte bound for ``n_symbols`` coded symbols (each costs < 17 bits)."""
    return 3 * n_symbols + 16


def raise_for_status(status: int) -> None:
    if status == 1:
        raise DecodeUnderrunError("payload ended before all symbols were decoded")
    if status == 2:
        raise CorruptionError("payload contains an impossible code value")


# ---------------------------------------------------------------------------
# public stream API
# ---------------------------------------------------------------------------


def _split_pairs(symbols) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(symbols, tuple) and len(symbols) == 2 and isinstance(symbols[0], np.ndarray):
        ctxs, syms = symbols
    else:
        arr = np.asarray(list(symbols) if not isinstance(symbols, np.ndarray) else symbols,
                         dtype=np.int64)
        if arr.size == 0:
            return np.zeros(0, np.int64), np.zeros(0, np.int64)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ContractViolationError("symbols must be (context, symbol) pairs")
        ctxs, syms = arr[:, 0], arr[:, 1]
    return (np.ascontiguousarray(ctxs, dtype=np.int64),
            np.ascontiguousarray(syms, dtype=np.int64))


def _check_contexts(ctxs: np.ndarray, model: AdaptiveModel) -> None:
    if ctxs.size and (ctxs.min() < 0 or ctxs.max() >= model.n_contexts):
        raise ContractViolationError("context index outside the model")


def encode_symbols(symbols: Iterable[tuple[int, int]] | tuple[np.ndarray, np.ndarray],
                   model: AdaptiveModel) -> bytes:
    """Range-code ``(context, symbol)`` pairs; ``model`` adapts in place.

    ``symbols`` may also be given as a ``(contexts, symbols)`` pair of arrays.
    """
    ctxs, syms = _split_pairs(symbols)
    _check_contexts(ctxs, model)
    if syms.size and ((syms < 0).any() or (syms >= model.alphabet_sizes[ctxs]).any()):
        bad = int(np.flatnonzero((syms < 0) | (syms >= model.alphabet_sizes[ctxs]))[0])
        raise ContractViolationError(
            f"symbol {int(syms[bad])} at position {bad} outside alphabet of context {int(ctxs[bad])}"
        )
    enc = StreamEncoder(model, output_capacity(syms.size))
    enc.write(ctxs, syms)
    return enc.finish()


def decode_symbols(payload: bytes, contexts: Sequence[int] | np.ndarray,
                   model: AdaptiveModel) -> list[int]:
    """Inverse of :func:`encode_symbols` given the same context sequence and initial model."""
    ctxs = np.asarray(contexts, dtype=np.int64).reshape(-1)
    _check_contexts(ctxs, model)
    return StreamDecoder(payload, model).read(ctxs).tolist()
