import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qdirac import (BoundarySpec, ConvergenceError, DomainError, LatticeFn, Problem,
                    QTrigContext, Spinor, build_lattice, format_lattice_fn, free_solutions,
                    make_potential, propagate, q_cos, q_diff, q_sin, successive_approx,
                    system_defect, wronskian)
from qdirac.solver import SolutionAtLambda, solution_mp

from conftest import random_problem

CASE_1II = BoundarySpec(0.0, 1.0, 1.0, 0.0)
seeds = st.integers(0, 2 ** 32 - 1)


def test_boundary_spec_validation():
    with pytest.raises(DomainError):
        BoundarySpec(0, 0, 1, 1)
    with pytest.raises(DomainError):
        BoundarySpec(1, 1, 0, 0)
    with pytest.raises(DomainError):
        BoundarySpec(math.nan, 1, 1, 1)


def test_problem_validation(lat05):
    other = build_lattice(0.5, 2.0, 64)
    with pytest.raises(DomainError):
        Problem(lat05, other.constant(0.0), lat05.constant(0.0), CASE_1II)
    shallow = build_lattice(0.5, 1.0, 1)
    with pytest.raises(DomainError):
        Problem.zero_potential(shallow, CASE_1II)
    with pytest.raises(DomainError):
        Problem(lat05, lat05.constant(math.inf), lat05.constant(0.0), CASE_1II)


def test_make_potential(lat05, tmp_path):
    assert np.all(make_potential("zero", lat05).values == 0)
    assert np.all(make_potential("constant:0.25", lat05).values == 0.25)
    lin = make_potential("linear:3", lat05)
    assert np.array_equal(lin.values, 3 * lat05.nodes) and lin.zero_limit == 0.0
    path = tmp_path / "p.csv"
    path.write_text(format_lattice_fn(lin))
    assert np.array_equal(make_potential(f"csv:{path}", lat05).values, lin.values)
    for bad in ("bogus", "constant:x", "zero:1"):
        with pytest.raises((DomainError, ValueError)):
            make_potential(bad, lat05)


def test_free_solutions_at_zero(lat05, ctx05):
    first, second = free_solutions(lat05, ctx05, 0.0)
    assert np.all(first.y1.values == 1) and np.all(first.y2.values == 0)
    assert np.all(second.y1.values == 0) and np.all(second.y2.values == 1)


def test_free_solutions_solve_free_system(lat05, ctx05):
    problem = Problem.zero_potential(lat05, CASE_1II)
    for s in free_solutions(lat05, ctx05, 3.0):
        sol = SolutionAtLambda(3.0, s, s.y2.ext_value, "free", 0.0)
        assert system_defect(problem, sol) <= 1e-11
        # the literal q-derivatives at nodes where they are well conditioned
        for n in range(0, 12):
            d1 = q_diff(s.y1, n)
            d2 = q_diff(s.y2, n - 1 if n else -1)
            assert d1 == pytest.approx(3.0 * s.y2.values[n], abs=1e-9)
            assert -d2 / 0.5 == pytest.approx(3.0 * s.y1.values[n], abs=1e-9)


@pytest.mark.parametrize("q", [0.5, 0.7])
@pytest.mark.parametrize("lam", [-4.0, 0.5, 2.0, 8.0])
def test_wronskian_of_free_solutions(q, lam):
    lat = build_lattice(q, 1.0, 64)
    s1, s2 = free_solutions(lat, QTrigContext(q), lam)
    for n in range(lat.size):
        assert wronskian(s1, s2, n) == pytest.approx(1.0, abs=1e-11)


def test_wronskian_antisymmetry(lat05, ctx05):
    s1, s2 = free_solutions(lat05, ctx05, 1.7)
    for n in (0, 5, 64):
        assert wronskian(s1, s1, n) == 0.0
        assert wronskian(s2, s1, n) == -wronskian(s1, s2, n)


def test_propagate_at_zero_lambda(lat05):
    b = BoundarySpec(0.3, -0.8, 1.0, 1.0)
    sol = propagate(Problem.zero_potential(lat05, b), 0.0)
    assert np.all(sol.phi.y1.values == -0.8)
    assert np.all(sol.phi.y2.values == -0.3)
    assert sol.phi2_ext == -0.3


def test_propagate_matches_free_solution(lat05, ctx05):
    sol = propagate(Problem.zero_potential(lat05, CASE_1II), 2.0)
    first, _ = free_solutions(lat05, ctx05, 2.0)
    scale = max(np.max(np.abs(first.y1.values)), np.max(np.abs(first.y2.values)))
    assert np.max(np.abs(sol.phi.y1.values - first.y1.values)) <= 1e-10 * scale
    assert np.max(np.abs(sol.phi.y2.values - first.y2.values)) <= 1e-10 * scale
    assert sol.phi2_ext == pytest.approx(first.y2.ext_value, abs=1e-10 * scale)


def test_spectral_shift_is_exact(lat05):
    b = BoundarySpec(0.4, 1.0, 1.0, -2.0)
    base = propagate(Problem.zero_potential(lat05, b), 0.0)
    shifted = propagate(Problem.zero_potential(lat05, b).shifted(0.75), 0.75)
    assert np.array_equal(base.phi.y1.values, shifted.phi.y1.values)
    assert np.array_equal(base.phi.y2.values, shifted.phi.y2.values)


@given(seeds, st.floats(-5, 5))
def test_spectral_shift_random(seed, c):
    rng = np.random.default_rng(seed)
    lat = build_lattice(0.5, 1.0, 40)
    pr = random_problem(rng, lat)
    lam = float(rng.uniform(-5, 5))
    a = propagate(pr, lam)
    b = propagate(pr.shifted(c), lam + c)
    # (p + c) - (lam + c) rounds like p - lam up to one ulp of each
    assert np.allclose(a.phi.y1.values, b.phi.y1.values, rtol=1e-12, atol=1e-12)
    assert np.allclose(a.phi.y2.values, b.phi.y2.values, rtol=1e-12, atol=1e-12)


@given(seeds)
def test_propagate_is_linear_in_initial_data(seed):
    rng = np.random.default_rng(seed)
    lat = build_lattice(0.5, 1.0, 64)
    base = random_problem(rng, lat)
    k1, k2 = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)
    lam = float(rng.uniform(-5, 5))

    def run(k11, k12):
        pr = Problem(lat, base.p, base.r, BoundarySpec(k11, k12, 1.0, 0.0))
        return propagate(pr, lam)

    a, b, ab = run(*k1), run(*k2), run(*(k1 + k2))
    for u, v, w in ((a.phi.y1, b.phi.y1, ab.phi.y1), (a.phi.y2, b.phi.y2, ab.phi.y2)):
        scale = max(1.0, np.max(np.abs(w.values)))
        assert np.max(np.abs(u.values + v.values - w.values)) <= 1e-12 * scale


def test_propagate_defect_is_roundoff(lat05):
    rng = np.random.default_rng(3)
    pr = random_problem(rng, lat05)
    sol = propagate(pr, 1.3)
    assert sol.residual <= 1e-14
    assert sol.method == "recursion"


def test_perturbed_solution_has_defect(lat05):
    rng = np.random.default_rng(4)
    pr = random_problem(rng, lat05)
    sol = propagate(pr, 1.0)
    vals = sol.phi.y1.values.copy()
    vals[10] += 0.1
    bad = Spinor(LatticeFn(lat05, vals), sol.phi.y2)
    perturbed = SolutionAtLambda(1.0, bad, sol.phi2_ext, "recursion", 0.0)
    assert system_defect(pr, perturbed) > 0.01


def test_successive_approx_zero_potential(lat05, ctx05):
    b = BoundarySpec(0.3, 1.2, 1.0, 0.0)
    sol = successive_approx(Problem.zero_potential(lat05, b), ctx05, 2.5)
    assert sol.iterations == 1
    x = lat05.nodes
    sq = math.sqrt(0.5)
    e1 = 1.2 * q_cos(ctx05, 2.5 * x) - 0.3 * q_sin(ctx05, 2.5 * x)
    e2 = -1.2 * sq * q_sin(ctx05, 2.5 * sq * x) - 0.3 * q_cos(ctx05, 2.5 * sq * x)
    assert np.array_equal(sol.phi.y1.values, e1)
    assert np.array_equal(sol.phi.y2.values, e2)


@given(seeds)
def test_successive_approx_matches_propagate(seed):
    rng = np.random.default_rng(seed)
    lat = build_lattice(0.5, 1.0, 64)
    ctx = QTrigContext(0.5)
    pr = random_problem(rng, lat)
    lam = float(rng.uniform(-5, 5))
    a = propagate(pr, lam)
    b = successive_approx(pr, ctx, lam, tol=1e-12)
    sup = max(np.max(np.abs(a.phi.y1.values)), np.max(np.abs(a.phi.y2.values)))
    assert np.max(np.abs(a.phi.y1.values - b.phi.y1.values)) <= 1e-9 * sup
    assert np.max(np.abs(a.phi.y2.values - b.phi.y2.values)) <= 1e-9 * sup
    assert abs(a.phi2_ext - b.phi2_ext) <= 1e-9 * max(sup, abs(a.phi2_ext))
    assert b.residual <= 10 * 1e-12 * max(1.0, sup)


def test_successive_approx_small_potential_converges_fast(lat05, ctx05):
    rng = np.random.default_rng(11)
    pr = random_problem(rng, lat05, bound=1e-3)
    sol = successive_approx(pr, ctx05, 1.0, tol=1e-12)
    assert sol.iterations <= 4


def test_successive_approx_reports_non_convergence(lat05, ctx05):
    pr = Problem.zero_potential(lat05, CASE_1II).shifted(1.0)
    with pytest.raises(ConvergenceError) as info:
        successive_approx(pr, ctx05, 3.0, tol=1e-12, max_iter=2)
    assert info.value.last_change > 0
    with pytest.raises(DomainError):
        successive_approx(pr, ctx05, 3.0, tol=0.0)
    with pytest.raises(DomainError):
        successive_approx(pr, QTrigContext(0.6), 3.0)


def test_lagrange_identity_literal():
    # at q = 0.9 the deepest node is ~1e-3, so node-wise q-derivatives are well conditioned
    rng = np.random.default_rng(7)
    lat = build_lattice(0.9, 1.0, 64)
    for _ in range(5):
        pr = random_problem(rng, lat)
        l1, l2 = rng.uniform(-5, 5, 2)
        y, z = propagate(pr, l1).phi, propagate(pr, l2).phi
        up_y = np.concatenate(([y.y2.ext_value], y.y2.values[:-1]))
        up_z = np.concatenate(([z.y2.ext_value], z.y2.values[:-1]))
        F = LatticeFn(lat, y.y1.values * up_z - up_y * z.y1.values)
        rhs = (l1 - l2) * (y.y1.values * z.y1.values + y.y2.values * z.y2.values)
        for n in range(lat.depth):
            assert q_diff(F, n) == pytest.approx(rhs[n], abs=1e-10 * max(1.0, abs(rhs[n])))


def test_solution_mp_matches_propagate(lat05):
    rng = np.random.default_rng(5)
    pr = random_problem(rng, lat05)
    a = propagate(pr, 2.2)
    b = solution_mp(pr, 2.2)
    assert np.allclose(a.phi.y1.values, b.phi.y1.values, rtol=1e-13, atol=1e-14)
    assert b.phi2_ext == pytest.approx(a.phi2_ext, rel=1e-13)
