import math
import threading
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qdirac import (BracketError, DomainError, PrecisionLossWarning, QTrigContext, evaluate,
                    growth_envelope, q_cos, q_pochhammer, q_sin, trig_zeros, zero_seed)

# 60-digit direct series sums, computed once with mpmath
COS_1_HALF = 0.67926125280013187
SIN_1_HALF = 0.90639386286161405
# first zeros at q = 0.5 (independent bisection at 400 bits)
COS_ZEROS_HALF = [1.85407042437, 5.58897889322, 11.3133729897, 22.6274169108]
SIN_ZEROS_HALF = [3.66673167156, 7.99303819657, 15.9999922688]
# max(|cos(r;q)|, |sin(r;q)|) / envelope(r) over r = 2**2 .. 2**20 at q = 0.5
ENVELOPE_CONSTANT = 0.7477


def oracle(kind, z, q, dps=60):
    with mpmath.workdps(dps):
        q = mpmath.mpf(q)
        w = mpmath.mpf(z) * (1 - q)
        if kind == "cos":
            return mpmath.nsum(lambda n: (-1) ** n * q ** (n * n) * w ** (2 * n)
                               / mpmath.qp(q, q, 2 * n), [0, mpmath.inf])
        return mpmath.nsum(lambda n: (-1) ** n * q ** (n * (n + 1)) * w ** (2 * n + 1)
                           / mpmath.qp(q, q, 2 * n + 1), [0, mpmath.inf])


def test_pinned_values_agree_with_oracle():
    assert float(oracle("cos", 1, 0.5)) == pytest.approx(COS_1_HALF, rel=1e-15)
    assert float(oracle("sin", 1, 0.5)) == pytest.approx(SIN_1_HALF, rel=1e-15)


@pytest.mark.parametrize("n,expected", [(0, 1.0), (1, 0.5), (2, 0.375)])
def test_pochhammer_examples(ctx05, n, expected):
    assert q_pochhammer(ctx05, n) == expected


def test_pochhammer_recursion_and_limit():
    ctx = QTrigContext(0.7)
    vals = [q_pochhammer(ctx, n) for n in range(200)]
    assert all(b == pytest.approx(a * (1 - 0.7 ** n), rel=1e-15)
               for n, (a, b) in enumerate(zip(vals, vals[1:]), 1))
    assert all(b < a for a, b in zip(vals, vals[1:80]))
    assert vals[-1] == pytest.approx(float(mpmath.qp(0.7)), rel=1e-13)
    with pytest.raises(DomainError):
        q_pochhammer(ctx, -1)


def test_pochhammer_cache_concurrent():
    ctx = QTrigContext(0.6)
    out = {}

    def work(k):
        out[k] = [q_pochhammer(ctx, n) for n in range(0, 300, k)]

    threads = [threading.Thread(target=work, args=(k,)) for k in range(1, 9)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    ref = QTrigContext(0.6)
    for k, vals in out.items():
        assert vals == [q_pochhammer(ref, n) for n in range(0, 300, k)]


def test_context_validation():
    for q in (0.0, 1.0, -0.5, 2.0):
        with pytest.raises(DomainError):
            QTrigContext(q)
    with pytest.raises(DomainError):
        QTrigContext(0.5, precision_bits=24)


def test_cos_examples(ctx05):
    assert q_cos(ctx05, 0.0) == 1.0
    assert q_cos(ctx05, 1.0) == pytest.approx(COS_1_HALF, rel=1e-15)
    assert q_cos(ctx05, -1.0) == q_cos(ctx05, 1.0)


def test_sin_examples(ctx05):
    assert q_sin(ctx05, 0.0) == 0.0
    assert q_sin(ctx05, 1.0) == pytest.approx(SIN_1_HALF, rel=1e-15)
    assert q_sin(ctx05, -1.0) == -q_sin(ctx05, 1.0)


@pytest.mark.parametrize("q", [0.2, 0.5, 0.8])
@pytest.mark.parametrize("z", [0.3, 2.0, 17.0, 350.0, 4000.0])
def test_series_against_oracle(q, z):
    ctx = QTrigContext(q)
    for kind in ("cos", "sin"):
        ref = float(oracle(kind, z, q, dps=120))
        v = evaluate(ctx, kind, z)
        assert not v.flagged
        # accuracy is what survives cancellation, and never below the escalation floor
        allowed = 2.0 ** (v.lost_bits - v.bits + 4)
        assert allowed <= 2.0 ** -ctx.min_reliable_bits
        assert abs(v.value - ref) <= allowed * abs(ref) + 1e-300


def test_array_input(ctx05):
    z = np.array([[0.0, 1.0], [-1.0, 3.0]])
    c = q_cos(ctx05, z)
    assert c.shape == (2, 2)
    assert c[0, 1] == q_cos(ctx05, 1.0) and c[1, 1] == q_cos(ctx05, 3.0)


@given(st.floats(-1e4, 1e4, allow_nan=False), st.sampled_from([0.3, 0.5, 0.7]))
def test_parity(z, q):
    ctx = QTrigContext(q)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PrecisionLossWarning)
        assert q_cos(ctx, -z) == q_cos(ctx, z)
        assert q_sin(ctx, -z) == -q_sin(ctx, z)


def test_escalation_for_large_arguments(ctx05):
    v = evaluate(ctx05, "cos", 3000.0)
    assert v.bits == 256 and not v.flagged
    small = evaluate(ctx05, "cos", 1.0)
    assert small.bits == 53


def test_binary64_flags_cancellation_near_zero(ctx05):
    x12 = trig_zeros(ctx05, "cos", 12).zeros[-1]
    with pytest.warns(PrecisionLossWarning):
        v = evaluate(ctx05.binary64(), "cos", x12)
    assert v.flagged
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert not evaluate(ctx05, "cos", x12).flagged


def test_non_finite_argument(ctx05):
    with pytest.raises(DomainError):
        evaluate(ctx05, "cos", math.inf)
    with pytest.raises(DomainError):
        evaluate(ctx05, "tan", 1.0)


def test_envelope_examples(ctx05):
    assert growth_envelope(ctx05, 2.0) == 1.0
    assert growth_envelope(ctx05, 4.0) == pytest.approx(2.0, rel=1e-15)
    with pytest.raises(DomainError):
        growth_envelope(ctx05, 0.0)


def test_envelope_bounds_real_line(ctx05):
    ratios = []
    with warnings.catch_warnings():
        # sin(2**k; 1/2) sits on a zero, where the value is pure cancellation
        warnings.simplefilter("ignore", PrecisionLossWarning)
        for k in range(2, 21):
            r = 2.0 ** k
            ratios.append(max(abs(q_cos(ctx05, r)), abs(q_sin(ctx05, r)))
                          / growth_envelope(ctx05, r))
    assert max(ratios) == pytest.approx(ENVELOPE_CONSTANT, abs=1e-4)


@pytest.mark.parametrize("kind,expected", [("cos", COS_ZEROS_HALF), ("sin", SIN_ZEROS_HALF)])
def test_first_zeros(ctx05, kind, expected):
    table = trig_zeros(ctx05, kind, len(expected))
    assert table.zeros == pytest.approx(expected, rel=1e-11)
    assert np.all(table.residuals <= 1e-12)


@pytest.mark.parametrize("q", [0.3, 0.5, 0.7])
@pytest.mark.parametrize("kind", ["cos", "sin"])
def test_zero_table_invariants(q, kind):
    ctx = QTrigContext(q)
    table = trig_zeros(ctx, kind, 10)
    assert len(table) == 10
    assert table.zeros[0] > 0
    assert np.all(np.diff(table.zeros) > 0)
    assert np.all(table.residuals <= 1e-11)
    # one sign change between consecutive zeros: midpoints alternate in sign
    mids = np.sqrt(table.zeros[:-1] * table.zeros[1:])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PrecisionLossWarning)
        f = q_cos if kind == "cos" else q_sin
        signs = np.sign(f(ctx, mids))
    assert np.all(signs[:-1] * signs[1:] < 0)


def test_zero_seeds():
    assert zero_seed(0.5, "cos", 3) == pytest.approx(2 ** 3.5)
    assert zero_seed(0.5, "sin", 3) == 16.0


@pytest.mark.parametrize("kind", ["cos", "sin"])
def test_zero_law_constant(ctx05, kind):
    # |deviation| <= C q**m with C fitted once at m = 5
    table = trig_zeros(ctx05, kind, 12, refinement_tol=1e-40)
    C = 1e-11
    for m in range(5, 13):
        assert abs(table.deviation(m)) <= C * 0.5 ** m


def test_zero_table_csv(ctx05):
    text = trig_zeros(ctx05, "cos", 3).to_csv()
    lines = text.splitlines()
    assert lines[0] == "m,zero,residual"
    assert [int(x.split(",")[0]) for x in lines[1:]] == [1, 2, 3]


def test_zero_count_validated(ctx05):
    with pytest.raises(DomainError):
        trig_zeros(ctx05, "cos", 0)


def test_bracket_failure_reports_index(ctx05, monkeypatch):
    import qdirac.qtrig as qt

    real = qt._brackets

    def sparse(ctx, kind, grid):
        out = real(ctx, kind, grid)
        return [] if grid[0] > 30 else out

    monkeypatch.setattr(qt, "_brackets", sparse)
    with pytest.raises(BracketError) as info:
        trig_zeros(ctx05, "cos", 7)
    assert info.value.index == 5
