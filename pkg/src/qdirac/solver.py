"""Solutions of the q-Dirac system on a lattice.

    -(1/q) D_{1/q} y2(x) + p(x) y1(x) = lam y1(x)
            D_q  y1(x) + r(x) y2(x) = lam y2(x)

Writing out the difference quotients gives two exact node relations,

    y2(t/q) = y2(t) + t(1-q) (p(t) - lam) y1(t)
    y1(t)   = y1(qt) - t(1-q) (r(t) - lam) y2(t)

which :func:`propagate` marches outward from the deepest node. The second
route, :func:`successive_approx`, iterates the Volterra form obtained by
variation of constants against the free solutions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import mpmath
import numpy as np

from .errors import ConvergenceError, DomainError, NumericalError
from .qcore import LatticeFn, QLattice, Spinor, read_lattice_fn
from .qtrig import QTrigContext, q_cos, q_sin


class SolverOverflowError(NumericalError):
    """Lattice values left the binary64 range."""


@dataclass(frozen=True)
class BoundarySpec:
    k11: float
    k12: float
    k21: float
    k22: float

    def __post_init__(self):
        for name in ("k11", "k12", "k21", "k22"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise DomainError(f"{name} must be finite")
            object.__setattr__(self, name, float(v))
        if self.k11 == 0 and self.k12 == 0:
            raise DomainError("k11 and k12 cannot both vanish")
        if self.k21 == 0 and self.k22 == 0:
            raise DomainError("k21 and k22 cannot both vanish")


@dataclass(frozen=True)
class Problem:
    lattice: QLattice
    p: LatticeFn
    r: LatticeFn
    boundary: BoundarySpec

    def __post_init__(self):
        if self.p.lattice != self.lattice or self.r.lattice != self.lattice:
            raise DomainError("potentials must be sampled on the problem lattice")
        if self.lattice.depth < 2:
            raise DomainError("lattice depth must be >= 2")
        if not (np.all(np.isfinite(self.p.values)) and np.all(np.isfinite(self.r.values))):
            raise DomainError("potentials must be finite")

    @classmethod
    def zero_potential(cls, lattice: QLattice, boundary: BoundarySpec) -> "Problem":
        z = lattice.constant(0.0)
        return cls(lattice, z, z, boundary)

    def shifted(self, c: float) -> "Problem":
        """Same problem with ``c`` added to both potentials."""
        return Problem(self.lattice, self.p + c, self.r + c, self.boundary)


@dataclass(frozen=True)
class SolutionAtLambda:
    lam: float
    phi: Spinor
    phi2_ext: float
    method: str
    residual: float
    iterations: int = 0

    @property
    def phi1_a(self) -> float:
        return float(self.phi.y1.values[0])


def make_potential(descriptor: str, lattice: QLattice) -> LatticeFn:
    """Build a potential from ``zero``, ``constant:<c>``, ``linear:<c>`` or ``csv:<path>``."""
    kind, _, arg = str(descriptor).strip().partition(":")
    kind = kind.lower()
    if kind == "zero" and not arg:
        return lattice.constant(0.0)
    if kind == "constant":
        return lattice.constant(float(arg))
    if kind == "linear":
        c = float(arg)
        return lattice.sample(lambda x: c * x, zero_limit=0.0)
    if kind == "csv":
        return read_lattice_fn(Path(arg), lattice)
    raise DomainError(f"unknown potential descriptor {descriptor!r}")


# -- free solutions ---------------------------------------------------------

def _free_columns(lattice: QLattice, ctx: QTrigContext, lam: float):
    """cos/sin at lam*t and lam*sqrt(q)*t for every node and the ext node."""
    t = np.append(lattice.nodes, lattice.ext_node)
    sq = math.sqrt(lattice.q)
    c = np.asarray(q_cos(ctx, lam * t))
    s = np.asarray(q_sin(ctx, lam * t))
    cs = np.asarray(q_cos(ctx, lam * sq * t))
    ss = np.asarray(q_sin(ctx, lam * sq * t))
    return c, s, cs, ss


def free_solutions(lattice: QLattice, ctx: QTrigContext, lam: float) -> Tuple[Spinor, Spinor]:
    """The two solutions of the potential-free system,

    ``(cos(lam x; q), -sqrt(q) sin(lam sqrt(q) x; q))`` and
    ``(sin(lam x; q), cos(lam sqrt(q) x; q))``,
    sampled on all nodes plus ``a/q``.
    """
    if ctx.q != lattice.q:
        raise DomainError("context and lattice use different q")
    c, s, cs, ss = _free_columns(lattice, ctx, float(lam))
    sq = math.sqrt(lattice.q)

    def fn(vals, zero):
        return LatticeFn(lattice, vals[:-1], ext_value=vals[-1], zero_limit=zero)

    first = Spinor(fn(c, 1.0), fn(-sq * ss, 0.0))
    second = Spinor(fn(s, 0.0), fn(cs, 1.0))
    return first, second


def wronskian(s1: Spinor, s2: Spinor, node_index: int) -> float:
    """``s1.y1(t) s2.y2(t/q) - s2.y1(t) s1.y2(t/q)`` at node ``t``."""
    up = node_index - 1 if node_index > 0 else -1
    return s1.y1.at(node_index) * s2.y2.at(up) - s2.y1.at(node_index) * s1.y2.at(up)


# -- lattice recursion ------------------------------------------------------

def _march(problem: Problem, lam):
    """Outward march for an array of lambdas; returns y1, y2 (rows per lambda) and y2(a/q)."""
    lat = problem.lattice
    b = problem.boundary
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    h = lat.weights
    p = problem.p.values
    r = problem.r.values
    N = lat.depth
    y1 = np.empty((lam.size, N + 1))
    y2 = np.empty((lam.size, N + 1))
    y1[:, N] = b.k12
    y2[:, N] = -b.k11
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(N, 0, -1):
            y2[:, n - 1] = y2[:, n] + h[n] * (p[n] - lam) * y1[:, n]
            y1[:, n - 1] = y1[:, n] - h[n - 1] * (r[n - 1] - lam) * y2[:, n - 1]
        ext = y2[:, 0] + h[0] * (p[0] - lam) * y1[:, 0]
    return y1, y2, ext


def _march_mp(problem: Problem, lam: float, bits: int = 256):
    lat = problem.lattice
    b = problem.boundary
    with mpmath.workprec(bits):
        lam = mpmath.mpf(lam)
        h = [mpmath.mpf(x) for x in lat.weights]
        p = [mpmath.mpf(x) for x in problem.p.values]
        r = [mpmath.mpf(x) for x in problem.r.values]
        N = lat.depth
        y1 = [None] * (N + 1)
        y2 = [None] * (N + 1)
        y1[N] = mpmath.mpf(b.k12)
        y2[N] = mpmath.mpf(-b.k11)
        for n in range(N, 0, -1):
            y2[n - 1] = y2[n] + h[n] * (p[n] - lam) * y1[n]
            y1[n - 1] = y1[n] - h[n - 1] * (r[n - 1] - lam) * y2[n - 1]
        ext = y2[0] + h[0] * (p[0] - lam) * y1[0]
    return y1, y2, ext


def march_mp_with_derivative(problem: Problem, lam, bits: int = 256):
    """Extended-precision march that also carries ``d/dlam`` of every value.

    Returns ``(y1, y2, ext, dy1_a, dext)`` as mpmath numbers; ``lam`` may be
    an mpf so that eigenvalues finer than binary64 can be used.
    """
    lat = problem.lattice
    b = problem.boundary
    with mpmath.workprec(bits):
        lam = mpmath.mpf(lam)
        h = [mpmath.mpf(x) for x in lat.weights]
        p = [mpmath.mpf(x) - lam for x in problem.p.values]
        r = [mpmath.mpf(x) - lam for x in problem.r.values]
        N = lat.depth
        y1 = [None] * (N + 1)
        y2 = [None] * (N + 1)
        y1[N] = mpmath.mpf(b.k12)
        y2[N] = mpmath.mpf(-b.k11)
        d1 = mpmath.mpf(0)
        d2 = mpmath.mpf(0)
        for n in range(N, 0, -1):
            d2 = d2 + h[n] * (p[n] * d1 - y1[n])
            y2[n - 1] = y2[n] + h[n] * p[n] * y1[n]
            d1 = d1 - h[n - 1] * (r[n - 1] * d2 - y2[n - 1])
            y1[n - 1] = y1[n] - h[n - 1] * r[n - 1] * y2[n - 1]
        ext = y2[0] + h[0] * p[0] * y1[0]
        dext = d2 + h[0] * (p[0] * d1 - y1[0])
    return y1, y2, ext, d1, dext


def solution_mp(problem: Problem, lam, bits: int = 256) -> SolutionAtLambda:
    """Solution at a (possibly extended-precision) lambda, rounded to binary64 values."""
    y1, y2, ext, _, _ = march_mp_with_derivative(problem, lam, bits)
    v1 = np.array([float(v) for v in y1])
    v2 = np.array([float(v) for v in y2])
    if not (np.all(np.isfinite(v1)) and np.all(np.isfinite(v2)) and math.isfinite(float(ext))):
        raise SolverOverflowError(f"solution overflows binary64 at lambda={float(lam)}")
    return _solution(problem, float(lam), v1, v2, float(ext), "recursion-mp")


def _solution(problem, lam, y1, y2, ext, method, iterations=0):
    lat = problem.lattice
    b = problem.boundary
    phi = Spinor(LatticeFn(lat, y1, zero_limit=b.k12),
                 LatticeFn(lat, y2, ext_value=ext, zero_limit=-b.k11))
    sol = SolutionAtLambda(float(lam), phi, float(ext), method, 0.0, iterations)
    return SolutionAtLambda(sol.lam, phi, sol.phi2_ext, method, system_defect(problem, sol),
                            iterations)


def propagate(problem: Problem, lam: float) -> SolutionAtLambda:
    """Solution with ``phi(0) = (k12, -k11)`` by the exact node recursion.

    The initial condition is imposed at the deepest node. Raises
    :class:`SolverOverflowError` when the values leave the binary64 range.
    """
    y1, y2, ext = _march(problem, lam)
    if not (np.all(np.isfinite(y1)) and np.all(np.isfinite(y2)) and np.all(np.isfinite(ext))):
        raise SolverOverflowError(f"solution overflows binary64 at lambda={lam}")
    return _solution(problem, lam, y1[0], y2[0], ext[0], "recursion")


def boundary_values(problem: Problem, lam) -> Tuple[np.ndarray, np.ndarray]:
    """``(phi1(a), phi2(a/q))`` for an array of lambdas, escalating on overflow."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    y1, _, ext = _march(problem, lam)
    y1a = y1[:, 0].copy()
    bad = ~(np.isfinite(y1a) & np.isfinite(ext))
    for i in np.nonzero(bad)[0]:
        m1, _, me = _march_mp(problem, lam[i])
        # keep the sign; magnitude beyond binary64 saturates to +-inf
        y1a[i] = float(m1[0])
        ext[i] = float(me)
    return y1a, ext


# -- integral equations -----------------------------------------------------

def _suffix(x, strict):
    s = np.cumsum(x[::-1])[::-1]
    return s - x if strict else s


def successive_approx(problem: Problem, ctx: QTrigContext, lam: float, tol: float = 1e-12,
                      max_iter: int = 200) -> SolutionAtLambda:
    """Fixed point of the integral equations by Picard iteration.

    Starting from the free term ``k12 * first - k11 * second`` the map

        phi1(x) = k12 C(x) - k11 S(x)
                  + int_0^{qx} [S(x) C(t) - C(x) S(t)] p(t) phi1(t) d_q t
                  - int_0^x [C(x) C(sqrt(q) t) + sqrt(q) S(x) S(sqrt(q) t)] r(t) phi2(t) d_q t
        phi2(x) = -k12 sqrt(q) S(sqrt(q) x) - k11 C(sqrt(q) x)
                  + int_0^{qx} [C(sqrt(q) x) C(t) + sqrt(q) S(sqrt(q) x) S(t)] p(t) phi1(t) d_q t
                  + sqrt(q) int_0^x [S(sqrt(q) x) C(sqrt(q) t) - C(sqrt(q) x) S(sqrt(q) t)]
                                    r(t) phi2(t) d_q t

    (``C(x) = cos(lam x; q)``, ``S(x) = sin(lam x; q)``) is applied until the
    sup-norm change is at most ``tol * max(1, sup|phi|)``. The Jackson sums run
    over the stored nodes; the piece below the deepest node uses the limits at 0.
    """
    if tol <= 0 or max_iter < 1:
        raise DomainError("tol must be positive and max_iter >= 1")
    lat = problem.lattice
    if ctx.q != lat.q:
        raise DomainError("context and lattice use different q")
    b = problem.boundary
    sq = math.sqrt(lat.q)
    c, s, cs, ss = _free_columns(lat, ctx, float(lam))
    C, S, Cs, Ss = c[:-1], s[:-1], cs[:-1], ss[:-1]
    Ce, Se = cs[-1], ss[-1]
    w = lat.weights
    mass = lat.q * lat.nodes[-1]
    p, r = problem.p.values, problem.r.values
    a0 = problem.p.zero_limit * b.k12
    b0 = problem.r.zero_limit * -b.k11

    f1 = b.k12 * C - b.k11 * S
    f2 = -b.k12 * sq * Ss - b.k11 * Cs
    f2e = -b.k12 * sq * Se - b.k11 * Ce
    y1, y2, y2e = f1, f2, f2e
    change = math.inf
    for it in range(1, max_iter + 1):
        A = w * p * y1
        B = w * r * y2
        pc = _suffix(C * A, True) + mass * a0
        ps = _suffix(S * A, True)
        rc = _suffix(Cs * B, False) + mass * b0
        rs = _suffix(Ss * B, False)
        n1 = f1 + S * pc - C * ps - C * rc - sq * S * rs
        n2 = f2 + Cs * pc + sq * Ss * ps + sq * (Ss * rc - Cs * rs)
        pc0, ps0, rc0, rs0 = pc[0] + C[0] * A[0], ps[0] + S[0] * A[0], rc[0], rs[0]
        n2e = f2e + Ce * pc0 + sq * Se * ps0 + sq * (Se * rc0 - Ce * rs0)
        scale = max(1.0, np.max(np.abs(n1)), np.max(np.abs(n2)))
        change = max(np.max(np.abs(n1 - y1)), np.max(np.abs(n2 - y2)), abs(n2e - y2e))
        y1, y2, y2e = n1, n2, n2e
        if not math.isfinite(change):
            break
        if change <= tol * scale:
            return _solution(problem, lam, y1, y2, y2e, "integral_equation", it)
    raise ConvergenceError(
        f"successive approximation did not converge in {max_iter} iterations "
        f"(last change {change:.3g})", last_change=change)


def system_defect(problem: Problem, sol: SolutionAtLambda) -> float:
    """Largest residual of the two node relations over the lattice.

    Both equations are multiplied through by the step ``t(1-q)``, i.e. this is
    ``t(1-q)`` times the defect of ``-(1/q) D_{1/q} y2 + (p - lam) y1`` and of
    ``D_q y1 + (r - lam) y2``. The unscaled defect divides rounding noise by
    ``t`` and is meaningless at deep nodes.
    """
    lat = problem.lattice
    h = lat.weights
    lam = sol.lam
    y1 = sol.phi.y1.values
    y2 = np.append(sol.phi2_ext, sol.phi.y2.values)  # index n+1 <-> node n
    first = y2[:-1] - y2[1:] - h * (problem.p.values - lam) * y1
    second = y1[:-1] - y1[1:] + h[:-1] * (problem.r.values[:-1] - lam) * y2[1:-1]
    return float(max(np.max(np.abs(first)), np.max(np.abs(second))))
