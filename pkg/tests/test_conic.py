import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdsec.conic import (
    ConicProgram,
    INFEASIBLE,
    LinExpr,
    OPTIMAL,
    UNBOUNDED,
    hermitian_sqrt,
    im_inner,
    quad_form_rows,
    re_inner,
    stack_complex,
    unstack_complex,
)


def test_soc_projection_micro_program():
    p = ConicProgram()
    t = p.add_var("t")
    p.maximize(-p.x(t))
    p.soc([LinExpr.constant(3.0), LinExpr.constant(4.0)], p.x(t))
    sol = p.solve()
    assert sol.status == OPTIMAL
    assert sol.x[t] == pytest.approx(5.0, abs=1e-6)


def test_rotated_cone_micro_program():
    p = ConicProgram()
    x = p.add_var("x")
    u = p.add_var("u")
    y = p.add_var("y")
    p.maximize(-p.x(u))
    p.eq(p.x(y), 2.0)
    p.eq(p.x(x), 4.0)
    p.rsoc([p.x(x)], p.x(u), p.x(y))
    sol = p.solve()
    assert sol.status == OPTIMAL
    assert sol.x[u] == pytest.approx(8.0, abs=1e-6)


def test_contradictory_rows_report_infeasible():
    p = ConicProgram()
    x = p.add_var("x")
    p.maximize(p.x(x))
    p.le(p.x(x), 0.0)
    p.ge(p.x(x), 1.0)
    sol = p.solve()
    assert sol.status == INFEASIBLE


def test_unbounded_program_reports_unbounded():
    p = ConicProgram()
    x = p.add_var("x")
    p.maximize(p.x(x))
    p.ge(p.x(x), 0.0)
    sol = p.solve()
    assert sol.status == UNBOUNDED


def test_repeat_solve_deterministic():
    p = ConicProgram()
    x = p.add_vars("x", 3)
    p.maximize(p.x(x[0]) + p.x(x[1]) * 0.5)
    p.soc([p.x(x[0]), p.x(x[1])], LinExpr.constant(2.0))
    p.le(p.x(x[2]) + p.x(x[0]), 1.5)
    a = p.solve()
    b = p.solve()
    assert a.status == b.status == OPTIMAL
    assert abs(a.objective - b.objective) <= 1e-9


def test_solution_satisfies_blocks_within_tolerance():
    rng = np.random.default_rng(0)
    for trial in range(10):
        p = ConicProgram()
        x = p.add_vars("x", 4)
        c = rng.standard_normal(4)
        obj = LinExpr({int(i): float(c[j]) for j, i in enumerate(x)})
        p.maximize(obj)
        for i in x:
            p.le(p.x(i), 1.0)
            p.ge(p.x(i), -1.0)
        p.soc([p.x(x[0]) + 0.3, p.x(x[1]) * 2.0], p.x(x[2]) + 1.5)
        p.rsoc([p.x(x[3]) - 0.2], p.x(x[0]) + 1.1, p.x(x[1]) + 1.2)
        sol = p.solve(tol=1e-8)
        assert sol.status == OPTIMAL
        assert p.max_violation(sol.x) <= 1e-7


def test_removing_a_row_never_decreases_optimum():
    rng = np.random.default_rng(7)
    for trial in range(6):
        p = ConicProgram()
        x = p.add_vars("x", 3)
        c = rng.standard_normal(3)
        p.maximize(LinExpr({int(i): float(c[j]) for j, i in enumerate(x)}))
        for i in x:
            p.le(p.x(i), 1.0)
            p.ge(p.x(i), -1.0)
        rows = 3 + rng.integers(0, 3)
        for _ in range(rows):
            a = rng.standard_normal(3)
            expr = LinExpr({int(i): float(a[j]) for j, i in enumerate(x)})
            p.le(expr, float(rng.uniform(0.1, 1.0)))
        base = p.solve().objective
        # removing any single inequality can only enlarge the feasible set
        drop = int(rng.integers(6, len(p.blocks)))
        relaxed = p.without_block(drop).solve().objective
        assert relaxed >= base - 1e-7


def test_shifted_solve_matches_unshifted():
    p = ConicProgram()
    x = p.add_vars("x", 2)
    p.maximize(p.x(x[0]) + p.x(x[1]))
    p.soc([p.x(x[0]), p.x(x[1])], LinExpr.constant(1.0))
    plain = p.solve()
    shifted = p.solve(shift=np.array([0.3, 0.1]))
    assert shifted.status == OPTIMAL
    assert shifted.objective == pytest.approx(plain.objective, abs=1e-7)
    assert shifted.objective == pytest.approx(math.sqrt(2.0), abs=1e-6)


def test_identity_quadratic_form_embeds_to_sum_of_squares():
    p = ConicProgram()
    w = p.add_complex("w", 2)
    rows = quad_form_rows(np.eye(2), w)
    x = np.zeros(p.n)
    x[w.re] = [1.0, 2.0]
    x[w.im] = [3.0, 4.0]
    total = sum(r.value(x) ** 2 for r in rows)
    assert total == pytest.approx(1 + 4 + 9 + 16, rel=1e-12)


def test_re_inner_matches_hand_expansion():
    # h = 1 + i: Re{h^H w} = Re{(1 - i)(wr + i wi)} = wr + wi
    p = ConicProgram()
    w = p.add_complex("w", 1)
    expr = re_inner(np.array([1.0 + 1.0j]), w)
    x = np.zeros(p.n)
    x[w.re] = 0.7
    x[w.im] = -0.2
    assert expr.value(x) == pytest.approx(0.7 - 0.2, rel=1e-12)
    imx = im_inner(np.array([1.0 + 1.0j]), w)
    # Im{(1 - i) w} = wi - wr
    assert imx.value(x) == pytest.approx(-0.2 - 0.7, rel=1e-12)


@given(
    re=st.lists(st.floats(-5, 5), min_size=1, max_size=6),
    im=st.lists(st.floats(-5, 5), min_size=1, max_size=6),
)
@settings(max_examples=50, deadline=None)
def test_stack_round_trip(re, im):
    n = min(len(re), len(im))
    z = np.array(re[:n]) + 1j * np.array(im[:n])
    assert np.array_equal(unstack_complex(stack_complex(z), n), z)


def test_quad_form_matches_random_hermitian():
    rng = np.random.default_rng(3)
    n = 4
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q = a @ a.conj().T
    p = ConicProgram()
    w = p.add_complex("w", n)
    rows = quad_form_rows(q, w)
    z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x = np.zeros(p.n)
    x[w.re] = z.real
    x[w.im] = z.imag
    total = sum(r.value(x) ** 2 for r in rows)
    assert total == pytest.approx(float(np.real(z.conj() @ q @ z)), rel=1e-10)


def test_hermitian_sqrt_rejects_non_hermitian():
    with pytest.raises(ValueError):
        hermitian_sqrt(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_dump_is_one_line_per_block():
    p = ConicProgram()
    x = p.add_var("x")
    t = p.add_var("t")
    p.maximize(p.x(x))
    p.le(p.x(x), 1.0)
    p.soc([p.x(x)], p.x(t))
    p.rsoc([p.x(x)], p.x(t), LinExpr.constant(1.0))
    text = p.dump()
    lines = text.splitlines()
    assert lines[0].startswith("maximize")
    assert len(lines) == 1 + len(p.blocks)
    assert any(line.startswith("lin:") for line in lines)
    assert any(line.startswith("soc:") for line in lines)
    assert any(line.startswith("rsoc:") for line in lines)
