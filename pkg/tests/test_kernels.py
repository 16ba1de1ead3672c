import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rounduq import bounds, errors, kernels
from rounduq.kernels import TriDiagonal
from rounduq.precision import FP16, FP32, FP64, round_array, round_to_format

# random data can produce tiny products; let them go subnormal
H16 = FP16.with_subnormals()


def _dot_loop(a, b, fmt):
    # scalar transcription of the recursive summation
    s = round_to_format(a[0] * b[0], fmt)
    for x, y in zip(a[1:], b[1:]):
        s = round_to_format(s + round_to_format(x * y, fmt), fmt)
    return s


def _thomas_loop(sub, diag, sup, b, fmt):
    n = len(diag)
    r = lambda z: round_to_format(z, fmt)  # noqa: E731
    u, l = [diag[0]], []
    for i in range(1, n):
        l.append(r(sub[i - 1] / u[i - 1]))
        u.append(r(diag[i] - r(l[-1] * sup[i - 1])))
    y = [b[0]]
    for i in range(1, n):
        y.append(r(b[i] - r(l[i - 1] * y[i - 1])))
    x = [0.0] * n
    x[-1] = r(y[-1] / u[-1])
    for i in range(n - 2, -1, -1):
        x[i] = r(r(y[i] - r(sup[i] * x[i + 1])) / u[i])
    return np.array(x), np.array(l), np.array(u)


def _fp16_vec(g, n):
    return round_array(g.uniform(-1, 1, n), H16)


def test_dot_examples():
    e1 = np.array([1.0, 0.0, 0.0])
    y, run = kernels.dot_emulated(e1, np.array([0.5, 2.0, 4.0]), FP16)
    assert y == 0.5 and run.measured_bwd == 0.0
    y, run = kernels.dot_emulated(np.ones(3), np.ones(3), FP16)
    assert y == 3.0
    # 2048 + 1 is a tie in fp16 and rounds back to 2048
    y, run = kernels.dot_emulated(np.array([2048.0, 1.0]), np.ones(2), FP16)
    assert y == 2048.0
    assert math.isclose(run.measured_bwd, 1 / 2049)


def test_dot_against_scalar_loop():
    g = np.random.default_rng(0)
    for n in (1, 2, 7, 64):
        a, b = _fp16_vec(g, n), _fp16_vec(g, n)
        y, _ = kernels.dot_emulated(a, b, H16)
        assert y == _dot_loop(a, b, H16)


def test_dot_bound_entries():
    g = np.random.default_rng(1)
    a, b = _fp16_vec(g, 100), _fp16_vec(g, 100)
    _, run = kernels.dot_emulated(a, b, H16)
    zeta = bounds.solve_member_confidence(0.99, 100)
    v = run.bounds["VIBEA"]
    assert v.valid and v.member_zeta == zeta
    assert v.gamma == bounds.gamma_vibea(zeta, FP16.unit_roundoff, 100).gamma
    assert math.isclose(v.confidence, 0.99)
    assert run.bounds["DBEA"].confidence == 1.0
    assert run.measured_bwd <= run.bounds["DBEA"].bwd_bound
    assert run.op_counts == {"gamma": 100, "union": 100}
    _, big = kernels.dot_emulated(np.ones(2048), np.ones(2048) / 2048, FP16)
    assert not big.bounds["DBEA"].valid


def test_dot_errors():
    with pytest.raises(errors.ShapeMismatch):
        kernels.dot_emulated(np.ones(3), np.ones(4), FP16)
    with pytest.raises(errors.EmptyInput):
        kernels.dot_emulated(np.ones(0), np.ones(0), FP16)
    with pytest.raises(errors.NotRepresentable):
        kernels.dot_emulated(np.array([0.1]), np.array([1.0]), FP16)


def test_matvec_and_matmul_against_dot():
    g = np.random.default_rng(2)
    A = round_array(g.uniform(-1, 1, (5, 9)), H16)
    B = round_array(g.uniform(-1, 1, (9, 4)), H16)
    x = _fp16_vec(g, 9)
    y, run = kernels.matvec_emulated(A, x, H16)
    assert np.array_equal(y, [_dot_loop(r, x, H16) for r in A])
    assert run.op_counts["union"] == 45
    C, run = kernels.matmul_emulated(A, B, H16)
    expect = np.array([[_dot_loop(r, c, H16) for c in B.T] for r in A])
    assert np.array_equal(C, expect)
    assert run.op_counts["union"] == 5 * 9 * 4
    with pytest.raises(errors.ShapeMismatch):
        kernels.matmul_emulated(A, A, H16)


def test_matvec_zero_row_is_excluded():
    A = np.array([[0.0, 0.0], [1.0, 2.0]])
    _, run = kernels.matvec_emulated(A, np.array([1.0, 1.0]), FP16)
    assert run.excluded == 1


@settings(max_examples=50)
@given(st.integers(1, 30), st.integers(0, 2 ** 32 - 1))
def test_backward_error_bounded_by_dbea(n, seed):
    g = np.random.default_rng(seed)
    a, b = _fp16_vec(g, n), _fp16_vec(g, n)
    _, run = kernels.dot_emulated(a, b, H16)
    assert run.measured_bwd <= bounds.gamma_dbea(FP16.unit_roundoff, n).gamma


def _laplace(n):
    return TriDiagonal(np.ones(n - 1), np.full(n, -2.0), np.ones(n - 1))


def test_thomas_hand_case():
    LU = kernels.thomas_factor(_laplace(3), FP64)
    assert np.array_equal(LU.sub_l, [-0.5, -2.0 / 3.0])
    assert np.array_equal(LU.diag_u, [-2.0, -1.5, -2.0 + 2.0 / 3.0])
    assert math.isclose(LU.diag_u[2], -4.0 / 3.0, rel_tol=1e-15)
    x, run = kernels.thomas_solve(_laplace(3), np.array([-1.0, 0.0, -1.0]), FP64)
    assert np.allclose(x, [1.0, 1.0, 1.0])
    # L U reproduces A
    L = np.eye(3) + np.diag(LU.sub_l, -1)
    U = np.diag(LU.diag_u) + np.diag(LU.super_nu, 1)
    assert np.allclose(L @ U, _laplace(3).to_dense())


def test_thomas_identity():
    A = TriDiagonal(np.zeros(4), np.ones(5), np.zeros(4))
    b = np.array([1.0, -2.0, 0.5, 0.25, 3.0])
    x, run = kernels.thomas_solve(A, b, FP16)
    assert np.array_equal(x, b)
    assert run.measured_bwd == 0.0
    assert run.op_counts["union"] == 7 * 5 - 6


def _random_system(g, n, fmt):
    sub = round_array(g.uniform(-1, 1, n - 1), fmt)
    sup = round_array(g.uniform(-1, 1, n - 1), fmt)
    diag = round_array(g.uniform(3, 4, n) * np.sign(g.uniform(-1, 1, n)), fmt)
    b = round_array(g.uniform(-1, 1, n), fmt)
    return TriDiagonal(sub, diag, sup), b


@pytest.mark.parametrize("fmt", [H16, FP32], ids=["fp16", "fp32"])
def test_thomas_against_scalar_loop(fmt):
    g = np.random.default_rng(3)
    for n in (2, 5, 40):
        A, b = _random_system(g, n, fmt)
        x, _ = kernels.thomas_solve(A, b, fmt)
        xl, _, _ = _thomas_loop(A.sub, A.diag, A.sup, b, fmt)
        assert np.array_equal(x, xl)


def test_thomas_reference_matches_dense_solve():
    g = np.random.default_rng(4)
    A, b = _random_system(g, 50, FP64)
    x, run = kernels.thomas_solve(A, b, FP64)
    assert np.allclose(x, np.linalg.solve(A.to_dense(), b), rtol=1e-13, atol=1e-14)
    # not exactly zero: the residual itself is evaluated in double
    assert run.measured_bwd <= 4 * 2.0 ** -53
    assert np.allclose(kernels.reference_inverse(A), np.linalg.inv(A.to_dense()), atol=1e-13)


def test_thomas_backward_error_identity():
    g = np.random.default_rng(5)
    A, b = _random_system(g, 30, H16)
    LU = kernels.thomas_factor(A, H16)
    y = kernels.thomas_forward(LU, b, H16)
    x = kernels.thomas_backward(LU, y, H16)
    d = kernels.thomas_diagnostics(A, b, LU, x)
    w = np.abs(np.eye(30) + np.diag(LU.sub_l, -1)) @ np.abs(np.diag(LU.diag_u) + np.diag(LU.super_nu, 1)) @ np.abs(x)
    assert np.allclose(d.lu_abs_x, w, rtol=1e-14)
    assert math.isclose(d.bwd, np.max(np.abs(A.to_dense() @ x - b) / w), rel_tol=1e-12)
    assert math.isclose(d.c_abs, np.max(np.abs(np.linalg.inv(A.to_dense())) @ w), rel_tol=1e-10)


def test_thomas_bound_variants():
    u = 2.0 ** -11
    out = kernels.thomas_bounds(u, 10, 0.99)
    g1, g2 = (bounds.gamma_dbea(u, k).gamma for k in (1, 2))
    assert out["DBEA"].gamma == g1 + g2 + g1 * g2
    assert out["DBEA_final"].gamma == 2 * g1 + g2 + g1 * g2
    assert math.isclose(out["VIBEA"].confidence, 0.99)
    assert out["VIBEA"].member_zeta == bounds.solve_member_confidence(0.99, 64)


def test_thomas_covered_by_dbea_statistically():
    g = np.random.default_rng(6)
    hits = 0
    for _ in range(200):
        A, b = _random_system(g, 20, H16)
        _, run = kernels.thomas_solve(A, b, H16)
        assert run.measured_bwd <= run.bounds["DBEA_final"].bwd_bound
        hits += run.measured_bwd <= run.bounds["VIBEA"].bwd_bound
    assert hits / 200 >= 0.99 - 3 * math.sqrt(0.99 * 0.01 / 200)


def test_thomas_zero_pivot():
    A = TriDiagonal(np.array([1.0]), np.array([1.0, 1.0]), np.array([1.0]))
    with pytest.raises(errors.ZeroPivot) as e:
        kernels.thomas_solve(A, np.array([1.0, 1.0]), FP16)
    assert e.value.index == 1
    A = TriDiagonal(np.array([1.0]), np.array([0.0, 1.0]), np.array([1.0]))
    with pytest.raises(errors.ZeroPivot) as e:
        kernels.thomas_factor(A, FP16)
    assert e.value.index == 0


def test_tridiagonal_validation():
    with pytest.raises(errors.ShapeMismatch):
        TriDiagonal(np.ones(3), np.ones(3), np.ones(2))
    A = _laplace(4)
    assert np.array_equal(A.matvec(np.ones(4)), A.to_dense() @ np.ones(4))
    with pytest.raises(errors.ShapeMismatch):
        kernels.thomas_solve(A, np.ones(3), FP16)


def test_dot_experiment_deterministic_and_modeled():
    a = kernels.dot_experiment(32, H16, 50, seed=9, with_model=True, chunk=7)
    b = kernels.dot_experiment(32, H16, 50, seed=9, with_model=True)
    assert np.array_equal(a.measured_bwd, b.measured_bwd)
    assert np.array_equal(a.modeled_bwd, b.modeled_bwd)
    assert a.coverage("DBEA") == 1.0
    assert np.all(a.modeled_bwd <= a.bounds["DBEA"].bwd_bound)


def test_dot_modeled_zero_errors_is_exact():
    g = np.random.default_rng(7)
    a, b = g.normal(size=(3, 10)), g.normal(size=(3, 10))
    s = kernels.dot_modeled(a, b, np.zeros((3, 10)), np.zeros((3, 10)))
    assert np.allclose(s, np.sum(a * b, axis=1))


def test_kernel_run_serializes():
    _, run = kernels.dot_emulated(np.ones(4), np.ones(4), FP16)
    d = run.to_dict()
    assert d["kernel"] == "dot" and d["bounds"]["VIBEA"]["valid"] is True
