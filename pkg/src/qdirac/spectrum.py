"""Eigenvalues and eigenfunctions of the q-Dirac boundary value problem.

The eigenvalues are the real zeros of the characteristic function

    Delta(lam) = k21 phi1(a, lam) + k22 phi2(a/q, lam)

where ``phi`` is the solution satisfying the left boundary condition. They
are located by a sign scan on a grid that is uniform near zero and geometric
beyond, bisected in binary64 and polished by Newton steps in extended
precision, since for large indices the eigenvalue needs more digits than a
double holds before the boundary condition is met.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

import mpmath
import numpy as np

from .errors import (BracketError, DegenerateNormalizationError, DomainError,
                     MissedEigenvalueWarning)
from .qcore import QLattice, Spinor, jackson_integral
from .qtrig import QTrigContext, q_cos, q_sin
from .solver import (BoundarySpec, Problem, boundary_values, march_mp_with_derivative,
                     solution_mp)

CASES = ("1i", "1ii", "2i", "2ii")
# exponent offset of the leading term q**(-m + shift) / (a (1-q))
_CASE_SHIFT = {"1i": 0.5, "1ii": 0.5, "2i": 1.0, "2ii": 0.0}
# eigenvalue law remainder exponent: O(q**(m * rate))
_CASE_RATE = {"1i": 0.5, "1ii": 1.0, "2i": 0.5, "2ii": 1.0}


def boundary_case(boundary: BoundarySpec) -> Optional[str]:
    """Which asymptotic regime applies, or None when no coefficient pattern matches."""
    if boundary.k11 == 0 and boundary.k12 != 0:
        head = "1"
    elif boundary.k12 == 0 and boundary.k11 != 0:
        head = "2"
    else:
        return None
    if boundary.k21 == 0:
        return head + "i"
    if boundary.k22 == 0:
        return head + "ii"
    return None


def _sin_type(case):
    # Delta is a multiple of sin(.; q) with zero potentials, so lam = 0 is an eigenvalue
    return case in ("1i", "2ii")


def asymptotic_eigenvalue(case: str, lattice: QLattice, m: int,
                          boundary: Optional[BoundarySpec] = None) -> float:
    """Leading term of the m-th eigenvalue for the given boundary case."""
    if case not in CASES:
        raise DomainError(f"unknown case {case!r}; expected one of {CASES}")
    if boundary is not None and boundary_case(boundary) != case:
        raise DomainError(f"boundary {boundary} does not match case {case}")
    if m < 1:
        raise DomainError("m must be >= 1")
    q, a = lattice.q, lattice.a
    return q ** (-m + _CASE_SHIFT[case]) / (a * (1.0 - q))


def char_delta(problem: Problem, ctx: Optional[QTrigContext] = None, lam=0.0):
    """``k21 phi1(a) + k22 phi2(a/q)``; accepts a scalar or an array of lambdas.

    Overflowing solutions are recomputed in extended precision; a magnitude
    beyond binary64 comes back as a signed infinity.
    """
    b = problem.boundary
    arr = np.asarray(lam, dtype=float)
    y1a, ext = boundary_values(problem, arr.ravel())
    with np.errstate(invalid="ignore"):
        d = b.k21 * y1a + b.k22 * ext
    d = d.reshape(arr.shape)
    return float(d) if d.ndim == 0 else d


def q_inner_product(s1: Spinor, s2: Spinor, tail: str = "poly") -> float:
    """``int_0^a (y1 z1 + y2 z2) d_q x``."""
    if s1.lattice != s2.lattice:
        raise DomainError("spinors live on different lattices")
    return jackson_integral(s1.y1 * s2.y1 + s1.y2 * s2.y2, 0, tail=tail)


@dataclass(frozen=True)
class EigenResult:
    index: int
    lam: float
    phi: Spinor = field(repr=False)
    q_norm_sq: float
    delta_prime: float
    bracket: Tuple[float, float]
    residual: float
    lam_mp: object = field(default=None, repr=False, compare=False)


class Check(NamedTuple):
    passed: bool
    value: float
    tol: float


@dataclass
class SpectrumReport:
    eigenvalues: List[EigenResult]
    orthogonality_matrix: np.ndarray
    asymptotic_ratios: np.ndarray
    verification_flags: Dict[str, Check]
    case: Optional[str] = None

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([e.lam for e in self.eigenvalues])

    def by_index(self, m: int) -> EigenResult:
        for e in self.eigenvalues:
            if e.index == m:
                return e
        raise KeyError(m)

    def positive(self) -> List[EigenResult]:
        return [e for e in self.eigenvalues if e.index >= 1]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.verification_flags.values())

    def rows(self):
        for e, ratio in zip(self.eigenvalues, self.asymptotic_ratios):
            yield (e.index, e.lam, e.q_norm_sq, e.delta_prime, e.residual, float(ratio))

    def to_csv(self) -> str:
        lines = ["m,lambda,q_norm_sq,delta_prime,residual,asymptotic_ratio"]
        for row in self.rows():
            lines.append(",".join([str(row[0])] + [repr(float(x)) for x in row[1:]]))
        return "\n".join(lines) + "\n"

    def orthogonality_csv(self) -> str:
        idx = [e.index for e in self.eigenvalues]
        lines = ["m," + ",".join(str(i) for i in idx)]
        for i, row in zip(idx, self.orthogonality_matrix):
            lines.append(f"{i}," + ",".join(repr(float(x)) for x in row))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        def num(x):
            x = float(x)
            return x if math.isfinite(x) else None

        return {
            "case": self.case,
            "eigenvalues": [
                dict(zip(("m", "lambda", "q_norm_sq", "delta_prime", "residual",
                          "asymptotic_ratio"), (row[0],) + tuple(num(x) for x in row[1:])))
                for row in self.rows()
            ],
            "orthogonality_matrix": [[num(x) for x in row] for row in self.orthogonality_matrix],
            "verification_flags": {k: {"passed": bool(c.passed), "value": num(c.value),
                                       "tol": num(c.tol)}
                                   for k, c in self.verification_flags.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


# -- root finding -----------------------------------------------------------

def _scan_grid(problem: Problem, case, count, density, top_factor=1.0):
    lat = problem.lattice
    first = asymptotic_eigenvalue(case or "1ii", lat, 1)
    low = first * lat.q
    top = asymptotic_eigenvalue(case or "1ii", lat, count) / lat.q * top_factor
    uniform = np.linspace(0.0, low, density + 1)
    geo = np.geomspace(low, top, max(2, int(math.ceil(math.log2(top / low) * density)) + 1))
    return np.concatenate((uniform, geo[1:]))


def _brackets(problem, grid):
    d = char_delta(problem, None, grid)
    s = np.sign(d)
    exact = [float(grid[i]) for i in np.nonzero(s == 0)[0]]
    change = np.nonzero(s[:-1] * s[1:] < 0)[0]
    return [(float(grid[i]), float(grid[i + 1])) for i in change], exact


def _bisect_all(problem, brackets, rtol, floor):
    """Bisect every bracket at once (one vectorised march per halving)."""
    if not brackets:
        return []
    lo = np.array([b[0] for b in brackets])
    hi = np.array([b[1] for b in brackets])
    flo = char_delta(problem, None, lo)
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        width_ok = (hi - lo) <= rtol * np.maximum(np.abs(mid), floor)
        stuck = (mid == lo) | (mid == hi)
        if np.all(width_ok | stuck):
            break
        fm = char_delta(problem, None, mid)
        same = np.sign(fm) == np.sign(flo)
        lo = np.where(same, mid, lo)
        flo = np.where(same, fm, flo)
        hi = np.where(same, hi, mid)
    fhi = char_delta(problem, None, hi)
    roots = np.where(np.abs(flo) <= np.abs(fhi), lo, hi)
    return list(zip(roots.tolist(), lo.tolist(), hi.tolist()))


def _polish_bits(problem, lam, base_bits):
    # the march loses about log2 of the growth envelope to cancellation
    lat = problem.lattice
    w = abs(float(lam)) * lat.a * (1.0 - lat.q)
    lost = 0.0 if w <= 1.0 else -math.log(w) ** 2 / math.log(lat.q) / math.log(2.0)
    return max(base_bits, 128 + 2 * int(math.ceil(lost)))


def _delta_mp(problem, lam, bits):
    b = problem.boundary
    y1, _, ext, d1, dext = march_mp_with_derivative(problem, lam, bits)
    with mpmath.workprec(bits):
        return b.k21 * y1[0] + b.k22 * ext, b.k21 * d1 + b.k22 * dext


def _polish(problem, lam, lo, hi, bits, max_iter=80):
    """Safeguarded Newton on Delta in extended precision, kept inside ``[lo, hi]``."""
    with mpmath.workprec(bits):
        x = mpmath.mpf(lam)
        lo, hi = mpmath.mpf(lo), mpmath.mpf(hi)
        stop = max(abs(x), mpmath.mpf(1)) * mpmath.mpf(2) ** (-(bits // 2 + 8))
        for _ in range(max_iter):
            d, dp = _delta_mp(problem, x, bits)
            if d == 0:
                break
            step = d / dp if dp != 0 else mpmath.mpf(0)
            nxt = x - step
            if dp == 0 or not lo <= nxt <= hi:
                nxt = (lo + hi) / 2
            if abs(nxt - x) <= stop:
                x = nxt
                break
            x = nxt
        return x


def _assign_indices(roots, case):
    """Index convention: positives 1, 2, ... and negatives -1, -2, ... counted outward.

    When the zero-potential characteristic function is sin-type the root of
    smallest magnitude is index 0 and the others are counted from it.
    """
    roots = sorted(roots, key=lambda r: r[0])
    lams = np.array([r[0] for r in roots])
    if len(lams) == 0:
        return []
    if _sin_type(case):
        centre = int(np.argmin(np.abs(lams)))
    else:
        zero = np.nonzero(lams == 0.0)[0]
        centre = int(zero[0]) if len(zero) else None
    out = []
    if centre is not None:
        for i, r in enumerate(roots):
            out.append((i - centre, r))
    else:
        n_neg = int(np.sum(lams < 0))
        for i, r in enumerate(roots):
            out.append((i - n_neg + 1 if i >= n_neg else i - n_neg, r))
    return out


def find_eigenvalues(problem: Problem, ctx: Optional[QTrigContext] = None, count: int = 8,
                     both_signs: bool = True, scan_density: int = 96,
                     refine_tol: float = 1e-12, orthogonality_tol: Optional[float] = None,
                     simplicity_tol: float = 1e-6) -> SpectrumReport:
    """Eigenvalues with index ``1..count`` (and ``-count..-1`` when ``both_signs``).

    The scan covers ``[0, q * seed_1]`` uniformly with ``scan_density`` points
    and continues geometrically with ``scan_density`` points per octave up to
    ``seed_count / q``, extending by factors of 4 if fewer roots turn up.
    """
    if count < 1:
        raise DomainError("count must be >= 1")
    lat = problem.lattice
    case = boundary_case(problem.boundary)
    floor = asymptotic_eigenvalue(case or "1ii", lat, 1) * 1e-3

    roots: list = []
    extend = 1.0
    for _ in range(6):
        grid = _scan_grid(problem, case, count, scan_density, extend)
        if both_signs:
            grid = np.concatenate((-grid[:0:-1], grid))
        brackets, exact = _brackets(problem, grid)
        roots = [(x, x, x) for x in exact] + _bisect_all(problem, brackets, refine_tol, floor)
        indexed = _assign_indices(roots, case)
        n_pos = sum(1 for m, _ in indexed if m >= 1)
        n_neg = sum(1 for m, _ in indexed if m <= -1)
        if n_pos >= count and (not both_signs or n_neg >= count):
            break
        extend *= 4.0
    else:
        raise BracketError(f"found {n_pos} positive / {n_neg} negative eigenvalues, "
                           f"wanted {count}", index=min(n_pos, n_neg) + 1)

    keep = [(m, r) for m, r in indexed
            if (0 <= m <= count) or (both_signs and -count <= m < 0)]
    base_bits = ctx.extended_bits if ctx is not None else 256
    results = []
    for m, (lam, lo, hi) in keep:
        bits = _polish_bits(problem, lam, base_bits)
        lam_mp = _polish(problem, lam, lo, hi, bits)
        sol = solution_mp(problem, lam_mp, bits)
        d, dp = _delta_mp(problem, lam_mp, bits)
        results.append(EigenResult(
            index=m, lam=float(lam_mp), phi=sol.phi,
            q_norm_sq=q_inner_product(sol.phi, sol.phi),
            delta_prime=float(dp),
            bracket=(lo, hi),
            residual=abs(float(d)),
            lam_mp=lam_mp,
        ))

    n = len(results)
    gram = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            g = q_inner_product(results[i].phi, results[j].phi)
            g /= math.sqrt(results[i].q_norm_sq * results[j].q_norm_sq)
            gram[i, j] = gram[j, i] = g
    np.fill_diagonal(gram, 1.0)

    ratios = np.full(n, np.nan)
    for k, e in enumerate(results):
        if case is not None and e.index >= 1:
            ratios[k] = e.lam / asymptotic_eigenvalue(case, lat, e.index)

    zero_pot = not (np.any(problem.p.values) or np.any(problem.r.values))
    if orthogonality_tol is None:
        orthogonality_tol = 1e-9 if zero_pot else 1e-6
    off = gram - np.eye(n)
    flags = {
        "orthogonality": Check(bool(np.max(np.abs(off), initial=0.0) <= orthogonality_tol),
                               float(np.max(np.abs(off), initial=0.0)), orthogonality_tol),
    }
    defects = [simplicity_check(problem, e) for e in results]
    worst = max(defects, default=0.0)
    flags["simplicity"] = Check(worst <= simplicity_tol, worst, simplicity_tol)
    flags["reality"] = Check(all(lo <= e.lam <= hi for e, (lo, hi) in
                                 ((e, e.bracket) for e in results)), float(len(results)), 0.0)
    if case is not None:
        rate = _CASE_RATE[case]
        worst_ratio = 0.0
        ok = True
        for e, ratio in zip(results, ratios):
            if e.index >= 5:
                dev = abs(ratio - 1.0)
                bound = 5.0 * lat.q ** (rate * e.index)
                ok &= dev <= bound
                worst_ratio = max(worst_ratio, dev / bound)
                seed = asymptotic_eigenvalue(case, lat, e.index)
                if not seed * math.sqrt(lat.q) <= e.lam <= seed / math.sqrt(lat.q):
                    warnings.warn(f"eigenvalue m={e.index} ({e.lam:.6g}) is not in the window "
                                  f"around its asymptotic seed {seed:.6g}",
                                  MissedEigenvalueWarning, stacklevel=2)
        flags["asymptotics"] = Check(bool(ok), worst_ratio, 1.0)
    return SpectrumReport(results, gram, ratios, flags, case)


def simplicity_check(problem: Problem, eig: EigenResult, eigen_tol: float = 1e-8,
                     derivative: str = "analytic", rel_step: float = 1e-6) -> float:
    """Relative defect ``|Delta'(lam) - c ||phi||^2| / |Delta'(lam)|``.

    ``c`` is the proportionality constant ``(k21, k22) = c (phi2(a/q), -phi1(a))``
    read off from the larger of the two boundary values. A small defect
    certifies the norm identity and a nonzero derivative, i.e. a simple
    eigenvalue. Raises :class:`DomainError` when ``eig.lam`` is not an
    eigenvalue, i.e. when the Newton step ``|Delta / Delta'|`` exceeds
    ``eigen_tol * max(1, |lam|)``.

    ``derivative="central"`` replaces the propagated ``Delta'`` by a central
    difference with step ``rel_step * max(1, |lam|)``.
    """
    if derivative not in ("analytic", "central"):
        raise DomainError(f"derivative must be 'analytic' or 'central', got {derivative!r}")
    b = problem.boundary
    lam = eig.lam_mp if eig.lam_mp is not None else eig.lam
    bits = _polish_bits(problem, eig.lam, 256)
    y1, _, ext, d1, dext = march_mp_with_derivative(problem, lam, bits)
    with mpmath.workprec(bits):
        delta = b.k21 * y1[0] + b.k22 * ext
        dprime = b.k21 * d1 + b.k22 * dext
        # Newton distance to the nearest root of Delta
        if dprime == 0 or abs(delta) > eigen_tol * max(1.0, abs(eig.lam)) * abs(dprime):
            raise DomainError(f"lambda={eig.lam} is not an eigenvalue: "
                              f"|Delta|={float(abs(delta)):.3g}")
        if derivative == "central":
            h = rel_step * max(1.0, abs(eig.lam))
            dprime = (_delta_mp(problem, lam + h, bits)[0]
                      - _delta_mp(problem, lam - h, bits)[0]) / (2 * h)
    sol = solution_mp(problem, lam, bits)
    y1a, y2e = sol.phi1_a, sol.phi2_ext
    dprime = float(dprime)
    big = max(abs(y1a), abs(y2e))
    if big <= 1e-300:
        raise DegenerateNormalizationError("phi1(a) and phi2(a/q) both vanish")
    c = b.k21 / y2e if abs(y2e) >= abs(y1a) else -b.k22 / y1a
    norm_sq = q_inner_product(sol.phi, sol.phi)
    return abs(dprime - c * norm_sq) / abs(dprime)


def eigenfunction_asymptotics_check(problem: Problem, ctx: QTrigContext, eig: EigenResult,
                                    min_index: int = 5) -> float:
    """Largest ratio of ``|phi - leading term|`` to the growth envelope over the nodes.

    The leading terms are ``k12 cos(lam x; q) - k11 sin(lam x; q)`` and
    ``-k12 sqrt(q) sin(lam sqrt(q) x; q) - k11 cos(lam sqrt(q) x; q)``; the
    envelopes are ``|lam|**-1 exp(-(log(|lam| x (1-q)))**2 / log q)`` with
    ``x`` replaced by ``sqrt(q) x`` for the second component.
    """
    if abs(eig.index) < min_index or eig.lam == 0.0:
        raise DomainError(f"index {eig.index} below min_index={min_index}")
    lat = problem.lattice
    b = problem.boundary
    q = lat.q
    sq = math.sqrt(q)
    lam = eig.lam
    x = lat.nodes
    lead1 = b.k12 * q_cos(ctx, lam * x) - b.k11 * q_sin(ctx, lam * x)
    lead2 = -b.k12 * sq * q_sin(ctx, lam * sq * x) - b.k11 * q_cos(ctx, lam * sq * x)

    def log_envelope(arg):
        lw = np.log(abs(lam) * arg * (1.0 - q))
        return -lw * lw / math.log(q) - math.log(abs(lam))

    phi = eig.phi
    with np.errstate(divide="ignore"):
        r1 = np.log(np.abs(phi.y1.values - lead1)) - log_envelope(x)
        r2 = np.log(np.abs(phi.y2.values - lead2)) - log_envelope(sq * x)
    return float(np.exp(max(np.max(r1), np.max(r2))))
