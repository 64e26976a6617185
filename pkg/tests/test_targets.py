import math

import numpy as np
import pytest

from mpcnkit.errors import (
    DegenerateStateError,
    DimensionError,
    ParameterError,
    UnsupportedOperationError,
)
from mpcnkit.targets import (
    Gaussian,
    GenExponential,
    StudentLike,
    TailClass,
    curvature_statistic,
    custom_target,
    grad_log_density,
    log_density,
    log_density_batch,
    log_norm,
    make_target,
    regular_variation_limit,
)

FAMILIES = [
    StudentLike(2, 4.0),
    StudentLike(5, 9.0),
    Gaussian(3, 1.5),
    GenExponential(2, 1.0, 1.0),
    GenExponential(4, 0.5, 3.0),
]


def test_known_values():
    assert log_density(StudentLike(2, 4.0), [0.0, 0.0]) == 0.0
    assert log_density(Gaussian(2, 1.0), [1.0, 1.0]) == -1.0
    assert log_density(GenExponential(2, 2.0, 1.0), [3.0, 4.0]) == pytest.approx(-10.0)


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        log_density(Gaussian(2), [1.0, 2.0, 3.0])


@pytest.mark.parametrize("bad", [dict(d=1, alpha=3.0), dict(d=2, alpha=0.0), dict(d=2, alpha=-1.0)])
def test_student_params(bad):
    with pytest.raises((ParameterError, DimensionError)):
        StudentLike(**bad)


def test_genexp_needs_p_at_least_one():
    with pytest.raises(ParameterError):
        GenExponential(2, 1.0, 0.5)


def test_finite_everywhere_off_origin():
    for t in FAMILIES:
        for r in (1e-300, 1e-8, 1.0, 1e8, 1e150):
            x = np.zeros(t.dim)
            x[0] = r
            v = log_density(t, x)
            assert not math.isnan(v) and v < math.inf
            if t.family == "student":
                assert math.isfinite(v)


def test_student_huge_norm_no_overflow():
    t = StudentLike(2, 6.0)
    v = log_density(t, [1e200, 1e200])
    assert math.isfinite(v)
    assert v == pytest.approx(-3.0 * (2 * 200 * math.log(10) + math.log(2)), rel=1e-12)


@pytest.mark.parametrize("t", FAMILIES, ids=lambda t: f"{t.family}-{t.dim}")
def test_gradient_matches_finite_differences(t):
    rng = np.random.default_rng(11)
    h = 1e-6
    for _ in range(100):
        x = rng.standard_normal(t.dim) * rng.choice([0.5, 2.0, 10.0])
        g = grad_log_density(t, x)
        fd = np.empty(t.dim)
        for j in range(t.dim):
            e = np.zeros(t.dim)
            e[j] = h * max(1.0, abs(x[j]))
            fd[j] = (log_density(t, x + e) - log_density(t, x - e)) / (2 * e[j])
        assert np.linalg.norm(g - fd) <= 1e-5 * max(np.linalg.norm(g), 1e-8)


def test_gaussian_gradient_exact():
    x = np.array([0.3, -2.0, 5.0])
    assert np.array_equal(grad_log_density(Gaussian(3, 1.0), x), -x)


def test_genexp_gradient_exact():
    x = np.array([3.0, 4.0])
    assert np.allclose(grad_log_density(GenExponential(2, 1.0, 1.0), x), -x / 5.0, rtol=0, atol=1e-15)


def test_gradient_unavailable():
    t = custom_target(2, lambda x: -float(x @ x))
    with pytest.raises(UnsupportedOperationError):
        grad_log_density(t, [1.0, 0.0])


@pytest.mark.parametrize("t", FAMILIES, ids=lambda t: f"{t.family}-{t.dim}")
def test_curvature_is_minus_one(t):
    rng = np.random.default_rng(2)
    for _ in range(20):
        x = rng.standard_normal(t.dim) * 7.0
        assert curvature_statistic(t, x) == pytest.approx(-1.0, abs=1e-12)


def test_curvature_zero_gradient():
    with pytest.raises(DegenerateStateError):
        curvature_statistic(Gaussian(2), [0.0, 0.0])


@pytest.mark.parametrize("t", FAMILIES, ids=lambda t: f"{t.family}-{t.dim}")
def test_curvature_rotation_invariant(t):
    rng = np.random.default_rng(3)
    q, _ = np.linalg.qr(rng.standard_normal((t.dim, t.dim)))
    for _ in range(10):
        x = rng.standard_normal(t.dim) * 3.0
        assert curvature_statistic(t, q @ x) == pytest.approx(curvature_statistic(t, x), abs=1e-12)


@pytest.mark.parametrize("t", FAMILIES, ids=lambda t: f"{t.family}-{t.dim}")
def test_radially_non_increasing_beyond_one(t):
    rng = np.random.default_rng(4)
    for _ in range(200):
        u = rng.standard_normal(t.dim)
        u /= np.linalg.norm(u)
        a, b = np.sort(1.0 + rng.exponential(50.0, 2))
        assert log_density(t, b * u) <= log_density(t, a * u)


def test_batch_matches_scalar():
    rng = np.random.default_rng(5)
    for t in FAMILIES:
        X = rng.standard_normal((50, t.dim)) * 30
        assert np.allclose(log_density_batch(t, X), [log_density(t, x) for x in X], rtol=1e-13, atol=0)


def test_regular_variation_unit_sphere():
    t = StudentLike(3, 5.0)
    x = np.array([0.0, 0.6, 0.8])
    assert regular_variation_limit(t, x, 1e6) == pytest.approx(1.0, rel=0.01)


def test_regular_variation_power_law():
    t = StudentLike(2, 4.0)
    assert regular_variation_limit(t, [2.0, 0.0], 1e6) == pytest.approx(2.0**-4, rel=1e-3)
    assert regular_variation_limit(t, [1e3, 0.0], 1e3) == pytest.approx(1e-12, rel=0.01)


def test_regular_variation_identity():
    t = StudentLike(2, 4.0)
    u = np.full(2, 1 / math.sqrt(2))
    assert regular_variation_limit(t, u, 1.0) == 1.0


def test_regular_variation_wrong_tail():
    with pytest.raises(UnsupportedOperationError):
        regular_variation_limit(Gaussian(2), [1.0, 0.0], 10.0)


def test_tail_metadata():
    assert StudentLike(2, 6).tail == TailClass.regularly_varying(6.0)
    assert Gaussian(2).tail.kind == "rapidly_varying"
    assert not GenExponential(2).tail.is_regular


def test_make_target_by_name():
    assert make_target("student", 3, alpha=5).descriptor() == StudentLike(3, 5).descriptor()
    with pytest.raises(ParameterError):
        make_target("cauchy-ish", 2)


def test_log_norm_extremes():
    assert log_norm([1e300, 1e300]) == pytest.approx(300 * math.log(10) + 0.5 * math.log(2))
    assert log_norm([1e-300, 0.0]) == pytest.approx(-300 * math.log(10))
    assert log_norm([0.0, 0.0]) == -math.inf
