"""Basic trigonometric functions ``cos(z; q)`` and ``sin(z; q)``.

    cos(z; q) = sum_n (-1)**n q**(n*n)     (z (1-q))**(2n)   / (q; q)_{2n}
    sin(z; q) = sum_n (-1)**n q**(n*(n+1)) (z (1-q))**(2n+1) / (q; q)_{2n+1}

Both series alternate with terms that first grow like ``q**(n*n) w**(2n)``
and then collapse, so for large ``|z|`` the sum is a difference of huge
numbers. Every evaluation tracks the largest term; when fewer than
``min_reliable_bits`` bits of the result survive in binary64 the sum is redone
with ``mpmath`` at ``extended_bits``. If even that is not enough a
:class:`~qdirac.errors.PrecisionLossWarning` is issued.
"""
from __future__ import annotations

import math
import threading
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import mpmath
import numpy as np

from .errors import BracketError, DomainError, PrecisionLossWarning

KINDS = ("cos", "sin")
_TERM_CUTOFF = 2.0 ** -64
_MAX_TERMS = 10_000


class SeriesValue(NamedTuple):
    value: float
    exact: Optional[mpmath.mpf]
    bits: int
    lost_bits: float
    flagged: bool


class QTrigContext:
    """Evaluation settings for one value of ``q``.

    Parameters
    ----------
    q : float in (0, 1)
    precision_bits : int
        Mantissa width of the first attempt; 53 means plain binary64.
    extended_bits : int or None
        Mantissa width used on escalation. ``None`` disables escalation, which
        makes binary64 the highest available precision.
    escalation_threshold : float
        Arguments with ``|z|(1-q)`` above this go straight to extended precision.
    min_reliable_bits : int
        Escalate (or flag) when fewer bits than this survive cancellation.
    """

    def __init__(self, q: float, precision_bits: int = 53, extended_bits: Optional[int] = 256,
                 escalation_threshold: float = 1024.0, min_reliable_bits: int = 20):
        q = float(q)
        if not 0.0 < q < 1.0:
            raise DomainError(f"q must lie in (0, 1), got {q}")
        if precision_bits < 53:
            raise DomainError("precision_bits must be >= 53")
        if extended_bits is not None and extended_bits < precision_bits:
            raise DomainError("extended_bits must be >= precision_bits")
        self.q = q
        self.precision_bits = int(precision_bits)
        self.extended_bits = None if extended_bits is None else int(extended_bits)
        self.escalation_threshold = float(escalation_threshold)
        self.min_reliable_bits = int(min_reliable_bits)
        self._lock = threading.Lock()
        self._poch = [1.0]
        self._poch_mp = {}

    def __repr__(self):
        return (f"QTrigContext(q={self.q}, precision_bits={self.precision_bits}, "
                f"extended_bits={self.extended_bits})")

    @property
    def max_bits(self) -> int:
        return self.extended_bits or self.precision_bits

    def binary64(self) -> "QTrigContext":
        """Same settings with escalation switched off."""
        return QTrigContext(self.q, 53, None, math.inf, self.min_reliable_bits)

    def pochhammer(self, n: int) -> float:
        if n < 0:
            raise DomainError("n must be >= 0")
        cache = self._poch
        if n >= len(cache):
            with self._lock:
                while len(cache) <= n:
                    k = len(cache)
                    cache.append(cache[-1] * (1.0 - self.q ** k))
        return cache[n]

    def pochhammer_mp(self, n: int, bits: int):
        with self._lock:
            cache = self._poch_mp.setdefault(bits, [])
            if len(cache) <= n:
                with mpmath.workprec(bits):
                    q = mpmath.mpf(self.q)
                    if not cache:
                        cache.append(mpmath.mpf(1))
                    while len(cache) <= n:
                        cache.append(cache[-1] * (1 - q ** len(cache)))
            return cache[n]


def q_pochhammer(ctx: QTrigContext, n: int) -> float:
    """``(q; q)_n = prod_{i=1..n} (1 - q**i)``."""
    return ctx.pochhammer(n)


def _check_kind(kind):
    if kind not in KINDS:
        raise DomainError(f"kind must be 'cos' or 'sin', got {kind!r}")


def _series_binary64(ctx: QTrigContext, kind: str, z: np.ndarray):
    """Vectorised float sum; returns (sum, max |term|, z f'(z))."""
    q = ctx.q
    w = z * (1.0 - q)
    w2 = w * w
    term = np.ones_like(w) if kind == "cos" else z.astype(float)
    total = term.copy()
    peak = np.abs(term)
    off = 0 if kind == "cos" else 1
    zd = off * term
    active = np.ones(w.shape, dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(1, _MAX_TERMS):
            e1 = 2 * n - 1 + off
            ratio = w2 * q ** e1 / ((1.0 - q ** e1) * (1.0 - q ** (e1 + 1)))
            term = np.where(active, -term * ratio, 0.0)
            total = total + term
            a = np.abs(term)
            peak = np.maximum(peak, a)
            zd = zd + (2 * n + off) * term
            done = (ratio < 0.5) & (a <= _TERM_CUTOFF * np.maximum(np.abs(total), peak * 2.0 ** -1074))
            active &= ~done & np.isfinite(term)
            if not active.any():
                break
    return total, peak, zd


def _series_mp(ctx: QTrigContext, kind: str, z, bits: int):
    """Sum in ``bits`` of mantissa; returns (sum, max |term|, z f'(z))."""
    with mpmath.workprec(bits):
        q = mpmath.mpf(ctx.q)
        z = mpmath.mpf(z)
        w = z * (1 - q)
        w2 = w * w
        off = 0 if kind == "cos" else 1
        term = mpmath.mpf(1) if kind == "cos" else z
        total = term
        dtotal = mpmath.mpf(off) * term
        peak = abs(term)
        eps = mpmath.mpf(2) ** -(bits + 10)
        for n in range(1, _MAX_TERMS):
            e1 = 2 * n - 1 + off
            ratio = w2 * q ** e1 / ((1 - q ** e1) * (1 - q ** (e1 + 1)))
            term = -term * ratio
            total += term
            dtotal += (2 * n + off) * term
            a = abs(term)
            if a > peak:
                peak = a
            if ratio < 0.5 and a <= eps * max(abs(total), peak * eps):
                break
        return +total, peak, +dtotal


def _lost_bits(peak, total, zd) -> float:
    """Bits of ``peak`` cancelled away in ``total``.

    Cancellation below ``|z f'(z)| 2**-53`` is not counted: that is the
    uncertainty a binary64 argument already carries, so a value that close
    to a zero is as resolved as its argument allows.
    """
    peak = abs(mpmath.mpf(peak))
    if peak == 0:
        return 0.0
    scale = max(abs(mpmath.mpf(total)), abs(mpmath.mpf(zd)) * mpmath.mpf(2) ** -53)
    if scale == 0:
        return math.inf
    return max(0.0, float(mpmath.log(peak / scale, 2)))


def evaluate(ctx: QTrigContext, kind: str, z: float, warn: bool = True) -> SeriesValue:
    """Evaluate one series value with escalation bookkeeping."""
    _check_kind(kind)
    z = float(z)
    if not math.isfinite(z):
        raise DomainError("z must be finite")
    vals = evaluate_many(ctx, kind, np.array([z]), warn=warn, keep_exact=True)
    return vals[0]


def evaluate_many(ctx: QTrigContext, kind: str, z: Sequence[float], warn: bool = True,
                  keep_exact: bool = False):
    """Vectorised :func:`evaluate`; returns a list of :class:`SeriesValue`."""
    _check_kind(kind)
    z = np.asarray(z, dtype=float)
    out = [None] * z.size
    flat = z.ravel()
    if ctx.precision_bits == 53:
        total, peak, zd = _series_binary64(ctx, kind, flat)
    else:
        total = peak = None
    n_flagged = 0
    for i, zi in enumerate(flat):
        wi = abs(zi) * (1.0 - ctx.q)
        escalate = True
        if total is not None and math.isfinite(total[i]) and math.isfinite(peak[i]):
            lost = _lost_bits(peak[i], total[i], zd[i])
            reliable = 53 - lost
            escalate = wi > ctx.escalation_threshold or reliable < ctx.min_reliable_bits
            if not escalate or ctx.extended_bits is None:
                flagged = reliable < ctx.min_reliable_bits
                n_flagged += flagged
                out[i] = SeriesValue(float(total[i]), None, 53, lost, bool(flagged))
                continue
        if total is not None and ctx.extended_bits is None:
            # binary64 overflowed and nothing higher is available
            out[i] = SeriesValue(float(total[i]), None, 53, math.inf, True)
            n_flagged += 1
            continue
        bits = ctx.max_bits if total is not None else ctx.precision_bits
        s, pk, d = _series_mp(ctx, kind, zi, bits)
        lost = _lost_bits(pk, s, d)
        if bits < ctx.max_bits and bits - lost < ctx.min_reliable_bits:
            bits = ctx.max_bits
            s, pk, d = _series_mp(ctx, kind, zi, bits)
            lost = _lost_bits(pk, s, d)
        flagged = bits - lost < ctx.min_reliable_bits
        n_flagged += flagged
        out[i] = SeriesValue(float(s), s if keep_exact else None, bits, lost, bool(flagged))
    if warn and n_flagged:
        warnings.warn(
            f"{kind}(z; q={ctx.q}): {n_flagged} value(s) lost more than "
            f"{ctx.max_bits - ctx.min_reliable_bits} of {ctx.max_bits} bits to cancellation",
            PrecisionLossWarning, stacklevel=3)
    return out


def _values(ctx, kind, z):
    arr = np.asarray(z, dtype=float)
    vals = evaluate_many(ctx, kind, arr.ravel())
    res = np.array([v.value for v in vals]).reshape(arr.shape)
    return float(res) if res.ndim == 0 else res


def q_cos(ctx: QTrigContext, z):
    """``cos(z; q)`` for a real scalar or array."""
    return _values(ctx, "cos", z)


def q_sin(ctx: QTrigContext, z):
    """``sin(z; q)`` for a real scalar or array."""
    return _values(ctx, "sin", z)


def growth_envelope(ctx: QTrigContext, r: float) -> float:
    """``exp(-(log(r (1-q)))**2 / log q)``, the maximum-modulus growth law."""
    if not r > 0:
        raise DomainError(f"r must be positive, got {r}")
    lw = math.log(r * (1.0 - ctx.q))
    try:
        return math.exp(-lw * lw / math.log(ctx.q))
    except OverflowError:
        return math.inf


# -- zeros ------------------------------------------------------------------

def zero_seed(q: float, kind: str, m: int) -> float:
    """Asymptotic location of the m-th positive zero."""
    shift = 0.5 if kind == "cos" else 0.0
    return q ** (-m + shift) / (1.0 - q)


@dataclass(frozen=True)
class ZeroTable:
    kind: str
    q: float
    zeros: np.ndarray
    residuals: np.ndarray
    refinement_tol: float
    exact: Optional[tuple] = None
    bits: int = 53

    def __len__(self):
        return len(self.zeros)

    def deviation(self, m: int):
        """``x_m (1-q) q**(m - 1/2) - 1`` (cos) or ``y_m (1-q) q**m - 1`` (sin).

        Uses the extended-precision zeros when available and returns an mpf in
        that case.
        """
        if self.exact is not None:
            with mpmath.workprec(self.bits):
                q = mpmath.mpf(self.q)
                shift = mpmath.mpf(0.5) if self.kind == "cos" else 0
                return self.exact[m - 1] * (1 - q) * q ** (m - shift) - 1
        shift = 0.5 if self.kind == "cos" else 0.0
        return float(self.zeros[m - 1]) * (1.0 - self.q) * self.q ** (m - shift) - 1.0

    def to_csv(self) -> str:
        lines = ["m,zero,residual"]
        for m, (z, r) in enumerate(zip(self.zeros, self.residuals), start=1):
            lines.append(f"{m},{float(z)!r},{float(r)!r}")
        return "\n".join(lines) + "\n"


def _geometric_grid(lo: float, hi: float, per_octave: int) -> np.ndarray:
    n = max(2, int(math.ceil(math.log2(hi / lo) * per_octave)) + 1)
    return np.geomspace(lo, hi, n)


def _signs(ctx, kind, z):
    return np.sign([v.value for v in evaluate_many(ctx, kind, z)])


def _brackets(ctx, kind, grid):
    s = _signs(ctx, kind, grid)
    out = []
    for i in range(len(grid) - 1):
        if s[i] == 0:
            out.append((grid[i], grid[i]))
        elif s[i] * s[i + 1] < 0:
            out.append((grid[i], grid[i + 1]))
    return out


def _bisect(ctx, kind, lo, hi, rtol):
    if lo == hi:
        return lo, hi
    # signs this close to a root are resolved only as far as the argument is;
    # the final zero is checked by the caller
    flo = evaluate(ctx, kind, lo, warn=False).value
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo <= rtol * mid or mid in (lo, hi):
            break
        fm = evaluate(ctx, kind, mid, warn=False).value
        if fm == 0.0:
            return mid, mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return lo, hi


def _relative_residual(ctx, kind, x):
    """``|f(x) / (x f'(x))|``, the relative distance to the root by one Newton step.

    Also issues the precision-loss warning when ``f(x)`` itself is unreliable.
    """
    v = evaluate(ctx, kind, x)
    bits = max(v.bits, 64)
    f, _, zd = _series_mp(ctx, kind, x, bits)
    return float(abs(f / zd)) if zd != 0 else math.inf


def _newton_polish(ctx, kind, lo, hi, rtol, bits):
    with mpmath.workprec(bits):
        x = (mpmath.mpf(lo) + mpmath.mpf(hi)) / 2
        lo_b = mpmath.mpf(lo) - abs(mpmath.mpf(lo)) * 1e-12
        hi_b = mpmath.mpf(hi) + abs(mpmath.mpf(hi)) * 1e-12
        for _ in range(60):
            f, _, zd = _series_mp(ctx, kind, x, bits)
            df = zd / x
            if df == 0:
                break
            step = f / df
            x = x - step
            if not lo_b <= x <= hi_b:
                raise BracketError(f"Newton step left the bracket near {float(x)}")
            if abs(step) <= rtol * abs(x):
                break
        return +x


def trig_zeros(ctx: QTrigContext, kind: str, count: int, refinement_tol: float = 1e-12,
               scan_density: int = 64, seeded_from: int = 5) -> ZeroTable:
    """First ``count`` positive zeros of ``cos(.; q)`` or ``sin(.; q)``.

    Zeros below the geometric midpoint between the 4th and 5th asymptotic
    seeds are found by a dense geometric sign scan; higher zeros are
    bracketed in ``[seed q**0.5, seed q**-0.5]``. Brackets are bisected in
    binary64 (with escalation); a ``refinement_tol`` below 1e-15 is reached by
    Newton steps at ``ctx.extended_bits`` and the table then keeps the
    extended-precision zeros in ``exact``.
    """
    _check_kind(kind)
    if count < 1:
        raise DomainError("count must be >= 1")
    q = ctx.q
    z_lo = 0.05
    boundary = zero_seed(q, kind, seeded_from) * math.sqrt(q)
    brackets = _brackets(ctx, kind, _geometric_grid(z_lo, boundary, scan_density))
    if len(brackets) != seeded_from - 1:
        # asymptotic regime not reached yet: scan densely all the way
        top = max(boundary, zero_seed(q, kind, count) / math.sqrt(q))
        brackets = _brackets(ctx, kind, _geometric_grid(z_lo, top, scan_density))
        while len(brackets) < count and top < 1e300:
            top *= 4.0
            brackets = _brackets(ctx, kind, _geometric_grid(z_lo, top, scan_density))
        brackets = brackets[:count]
    else:
        brackets = brackets[:count]
        for m in range(len(brackets) + 1, count + 1):
            seed = zero_seed(q, kind, m)
            found = _brackets(ctx, kind, _geometric_grid(seed * math.sqrt(q), seed / math.sqrt(q), 16))
            if len(found) != 1:
                raise BracketError(
                    f"{kind} zero m={m}: {len(found)} sign changes near seed {seed:.6g}", index=m)
            brackets.append(found[0])
    if len(brackets) < count:
        raise BracketError(f"only {len(brackets)} {kind} zeros found", index=len(brackets) + 1)

    float_tol = max(refinement_tol, 4 * 2.0 ** -53)
    polish = refinement_tol < 1e-15 and ctx.extended_bits is not None
    zeros, exact, residuals = [], [], []
    for lo, hi in brackets:
        lo, hi = _bisect(ctx, kind, lo, hi, float_tol)
        if polish:
            x = _newton_polish(ctx, kind, lo, hi, refinement_tol, ctx.extended_bits)
            exact.append(x)
            zeros.append(float(x))
        else:
            f_lo = evaluate(ctx, kind, lo, warn=False).value
            f_hi = evaluate(ctx, kind, hi, warn=False).value
            zeros.append(lo if abs(f_lo) <= abs(f_hi) else hi)
        residuals.append(_relative_residual(ctx, kind, zeros[-1]))
    zeros = np.array(zeros)
    if np.any(np.diff(zeros) <= 0):
        raise BracketError(f"{kind} zeros not strictly increasing")
    return ZeroTable(kind, q, zeros, np.array(residuals), refinement_tol,
                     tuple(exact) if polish else None,
                     ctx.extended_bits if polish else 53)
