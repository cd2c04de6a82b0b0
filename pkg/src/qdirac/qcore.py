"""q-calculus on a truncated q-geometric lattice.

The lattice is ``{a, aq, aq**2, ..., aq**N}`` together with one extension
node ``a/q``. Functions live on the lattice as :class:`LatticeFn` samples and
carry their limit at zero, which stands in for every node below ``aq**N``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Optional, Union

import numpy as np

from .errors import DomainError, LatticeIndexError

DEFAULT_DEPTH = 64
TAIL_ORDER = 6
ZERO_WINDOW = 5


def _readonly(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class QLattice:
    q: float
    a: float
    depth: int
    nodes: np.ndarray = field(repr=False, compare=False)
    ext_node: float = field(compare=False)

    @property
    def size(self) -> int:
        return self.depth + 1

    @property
    def weights(self) -> np.ndarray:
        """Jackson quadrature weights ``t_n (1 - q)``."""
        return self.nodes * (1.0 - self.q)

    def sample(self, func: Callable[[float], float], zero_limit: Optional[float] = None) -> "LatticeFn":
        """Evaluate ``func`` on every node and on the extension node."""
        values = [float(func(t)) for t in self.nodes]
        ext = float(func(self.ext_node))
        if zero_limit is None:
            zero_limit = float(func(0.0))
        return LatticeFn(self, values, ext_value=ext, zero_limit=zero_limit)

    def constant(self, c: float) -> "LatticeFn":
        return LatticeFn(self, np.full(self.size, float(c)), ext_value=float(c), zero_limit=float(c))


def build_lattice(q: float, a: float, depth: int = DEFAULT_DEPTH) -> QLattice:
    """Nodes ``a q**n`` for ``n = 0..depth`` and the extension node ``a/q``.

    Nodes come from repeated multiplication so that ``nodes[n+1] == q * nodes[n]``
    holds bit for bit.
    """
    q = float(q)
    a = float(a)
    if not (0.0 < q < 1.0):
        raise DomainError(f"q must lie in (0, 1), got {q}")
    if not (a > 0.0 and math.isfinite(a)):
        raise DomainError(f"a must be positive and finite, got {a}")
    if int(depth) != depth or depth < 1:
        raise DomainError(f"depth must be an integer >= 1, got {depth}")
    depth = int(depth)
    nodes = np.empty(depth + 1)
    t = a
    for n in range(depth + 1):
        nodes[n] = t
        t = t * q
    nodes.setflags(write=False)
    return QLattice(q=q, a=a, depth=depth, nodes=nodes, ext_node=a / q)


class LatticeFn:
    """Real samples of a function on a :class:`QLattice`.

    ``values[n]`` is the value at ``lattice.nodes[n]``; ``ext_value`` (optional)
    is the value at ``a/q``; ``zero_limit`` is the value at 0 for a function
    that is q-regular there. When ``zero_limit`` is omitted the deepest sample
    is used.
    """

    __slots__ = ("lattice", "values", "ext_value", "zero_limit")

    def __init__(self, lattice: QLattice, values, ext_value: Optional[float] = None,
                 zero_limit: Optional[float] = None):
        values = _readonly(values)
        if values.shape != (lattice.size,):
            raise DomainError(
                f"expected {lattice.size} values for depth {lattice.depth}, got {values.shape}")
        self.lattice = lattice
        self.values = values
        self.ext_value = None if ext_value is None else float(ext_value)
        self.zero_limit = float(values[-1] if zero_limit is None else zero_limit)

    def __repr__(self):
        return (f"LatticeFn(depth={self.lattice.depth}, values=[{self.values[0]:.6g}, ...], "
                f"ext_value={self.ext_value}, zero_limit={self.zero_limit})")

    def __len__(self):
        return len(self.values)

    def at(self, index: int) -> float:
        """Value at node ``index``; ``-1`` denotes the extension node ``a/q``."""
        if index == -1:
            if self.ext_value is None:
                raise LatticeIndexError("ext_value is not set")
            return self.ext_value
        if not 0 <= index <= self.lattice.depth:
            raise LatticeIndexError(f"node index {index} outside 0..{self.lattice.depth}")
        return float(self.values[index])

    def _combine(self, other, op):
        if isinstance(other, LatticeFn):
            if other.lattice is not self.lattice and other.lattice != self.lattice:
                raise DomainError("lattice functions live on different lattices")
            ext = None
            if self.ext_value is not None and other.ext_value is not None:
                ext = op(self.ext_value, other.ext_value)
            return LatticeFn(self.lattice, op(self.values, other.values), ext,
                             op(self.zero_limit, other.zero_limit))
        other = float(other)
        ext = None if self.ext_value is None else op(self.ext_value, other)
        return LatticeFn(self.lattice, op(self.values, other), ext, op(self.zero_limit, other))

    def __add__(self, other):
        return self._combine(other, lambda x, y: x + y)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, lambda x, y: x - y)

    def __rsub__(self, other):
        return self._combine(other, lambda x, y: y - x)

    def __mul__(self, other):
        return self._combine(other, lambda x, y: x * y)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0


@dataclass(frozen=True)
class Spinor:
    """A two-component lattice function ``(y1, y2)``."""

    y1: LatticeFn
    y2: LatticeFn

    def __post_init__(self):
        if self.y1.lattice != self.y2.lattice:
            raise DomainError("spinor components must share one lattice")

    @property
    def lattice(self) -> QLattice:
        return self.y1.lattice

    def scaled(self, c: float) -> "Spinor":
        return Spinor(self.y1 * c, self.y2 * c)


# -- difference operators ---------------------------------------------------

def q_diff(f: LatticeFn, node_index: int) -> float:
    """q-derivative ``(f(x) - f(qx)) / (x (1 - q))`` at a lattice node.

    ``node_index = -1`` differentiates at ``a/q`` using ``f(a/q)`` and ``f(a)``.
    """
    lat = f.lattice
    if node_index == -1:
        x = lat.ext_node
        return (f.at(-1) - f.at(0)) / (x * (1.0 - lat.q))
    if not 0 <= node_index <= lat.depth - 1:
        raise LatticeIndexError(
            f"q_diff needs nodes {node_index} and {node_index + 1}; depth is {lat.depth}")
    x = lat.nodes[node_index]
    return (f.values[node_index] - f.values[node_index + 1]) / (x * (1.0 - lat.q))


def q_inv_diff(f: LatticeFn, node_index: int) -> float:
    """``D_{1/q} f`` at node ``n``; identical to :func:`q_diff` at node ``n - 1``."""
    if node_index == 0:
        if f.ext_value is None:
            raise LatticeIndexError("q_inv_diff at node 0 needs ext_value")
        return q_diff(f, -1)
    if not 1 <= node_index <= f.lattice.depth:
        raise LatticeIndexError(f"node index {node_index} outside 0..{f.lattice.depth}")
    return q_diff(f, node_index - 1)


def q_diff_values(f: LatticeFn) -> np.ndarray:
    """q-derivative at nodes ``0..depth-1`` as an array."""
    lat = f.lattice
    v = f.values
    return (v[:-1] - v[1:]) / (lat.nodes[:-1] * (1.0 - lat.q))


class ZeroDerivative(NamedTuple):
    value: float
    converged: bool
    spread: float


def q_diff_at_zero(f: LatticeFn, tol: float = 1e-8) -> ZeroDerivative:
    """Estimate ``D_q f(0)`` from the quotients ``(f(t_n) - f(0)) / t_n``.

    Two Richardson passes (ratios ``q`` and ``q**2``) are applied to the five
    deepest usable nodes. When ``f(0) != 0`` nodes below ``a * 1e-4`` are
    skipped because the numerator there is pure rounding. ``converged`` is
    False when the last two extrapolants differ by more than
    ``tol * max(1, |value|)``.
    """
    lat = f.lattice
    q = lat.q
    f0 = f.zero_limit
    last = lat.depth
    if f0 != 0.0:
        usable = np.nonzero(lat.nodes >= lat.a * 1e-4)[0]
        last = int(usable[-1])
    first = max(0, last - ZERO_WINDOW + 1)
    t = lat.nodes[first:last + 1]
    quot = (f.values[first:last + 1] - f0) / t
    est = quot
    for k in (1, 2):
        if len(est) < 2:
            break
        r = q ** k
        est = (est[1:] - r * est[:-1]) / (1.0 - r)
    value = float(est[-1])
    spread = float(abs(est[-1] - est[-2])) if len(est) >= 2 else math.inf
    return ZeroDerivative(value, spread <= tol * max(1.0, abs(value)), spread)


# -- Jackson integral -------------------------------------------------------

def _tail(f: LatticeFn, mode: str) -> float:
    lat = f.lattice
    q, tN = lat.q, lat.nodes[-1]
    if mode == "none":
        return 0.0
    if mode == "constant":
        # mass of the nodes below t_N: sum_{n>N} t_n (1 - q) = q t_N
        return q * tN * f.zero_limit
    if mode != "poly":
        raise DomainError(f"unknown tail mode {mode!r}")
    k = min(TAIL_ORDER, lat.size)
    # polynomial in s = t / t_N through (0, f(0)) and the k deepest nodes
    s = np.concatenate(([0.0], q ** -np.arange(k, dtype=float)))
    y = np.concatenate(([f.zero_limit], f.values[::-1][:k]))
    coef = np.linalg.solve(np.vander(s, increasing=True), y)
    j = np.arange(k + 1)
    return float((1.0 - q) * tN * np.sum(coef * q ** (j + 1) / (1.0 - q ** (j + 1))))


def jackson_integral(f: LatticeFn, upper_index: int = 0, tail: str = "poly") -> float:
    """Jackson integral ``int_0^x f(t) d_q t`` with ``x = nodes[upper_index]``.

    The series ``x (1 - q) sum q**n f(x q**n)`` is summed over the stored nodes.
    The remainder below the deepest node is estimated by ``tail``:

    ``"poly"``
        integrate the polynomial through ``f(0)`` and the deepest samples
        (exact for polynomials of degree <= 6);
    ``"constant"``
        ``f(0)`` times the remaining geometric mass;
    ``"none"``
        drop it.
    """
    lat = f.lattice
    if not 0 <= upper_index <= lat.depth:
        raise LatticeIndexError(f"upper index {upper_index} outside 0..{lat.depth}")
    w = lat.weights[upper_index:]
    return float(np.dot(w, f.values[upper_index:])) + _tail(f, tail)


# -- CSV exchange -----------------------------------------------------------

PathOrFile = Union[str, Path, io.TextIOBase]


def format_lattice_fn(f: LatticeFn) -> str:
    """Render ``n,t,value`` rows; an ``-1`` row carries the extension node."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "t", "value"])
    for n, (t, v) in enumerate(zip(f.lattice.nodes, f.values)):
        w.writerow([n, repr(float(t)), repr(float(v))])
    if f.ext_value is not None:
        w.writerow([-1, repr(float(f.lattice.ext_node)), repr(f.ext_value)])
    return buf.getvalue()


def write_lattice_fn(f: LatticeFn, dest: PathOrFile) -> None:
    text = format_lattice_fn(f)
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(text)
    else:
        dest.write(text)


def read_lattice_fn(source: PathOrFile, lattice: QLattice,
                    zero_limit: Optional[float] = None) -> LatticeFn:
    """Parse the ``n,t,value`` format onto ``lattice``; node count must match."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text()
    else:
        text = source.read()
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows or set(rows[0]) != {"n", "t", "value"}:
        raise DomainError("expected header n,t,value")
    values = {}
    ext = None
    for row in rows:
        n = int(row["n"])
        t = float(row["t"])
        v = float(row["value"])
        if n == -1:
            ext = v
            ref = lattice.ext_node
        elif 0 <= n <= lattice.depth:
            values[n] = v
            ref = lattice.nodes[n]
        else:
            raise DomainError(f"node index {n} outside lattice of depth {lattice.depth}")
        if abs(t - ref) > 1e-12 * abs(ref):
            raise DomainError(f"row {n}: t={t!r} does not match lattice node {ref!r}")
    if len(values) != lattice.size:
        raise DomainError(f"expected {lattice.size} node rows, got {len(values)}")
    return LatticeFn(lattice, [values[n] for n in range(lattice.size)], ext_value=ext,
                     zero_limit=zero_limit)
