import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvcosine import ContractError, EmpiricalMeasure, UnsupportedError, w2_entropic, w2_exact, w2_quantile_1d
from mvcosine.measure import coupling_cost, read_cloud_csv, w2_to_origin, write_cloud_csv

from conftest import brute_force_w2


def test_two_point_clouds():
    mu = EmpiricalMeasure([[0.0], [2.0]])
    nu = EmpiricalMeasure([[1.0], [3.0]])
    assert w2_exact(mu, nu) == pytest.approx(1.0, abs=1e-15)
    assert w2_quantile_1d(mu, nu) == pytest.approx(1.0, abs=1e-15)


def test_w2_to_origin_is_root_second_moment():
    mu = EmpiricalMeasure([[3.0, 4.0], [0.0, 0.0]])
    assert w2_to_origin(mu) == pytest.approx(np.sqrt(12.5))


def test_identical_clouds_zero(cloud_pair):
    mu, _ = cloud_pair
    assert w2_exact(mu, mu) == 0.0


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 6), d=st.integers(1, 3), seed=st.integers(0, 2**16))
def test_exact_matches_brute_force(n, d, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((2, n, d))
    assert w2_exact(EmpiricalMeasure(x), EmpiricalMeasure(y)) == pytest.approx(brute_force_w2(x, y), abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 30), seed=st.integers(0, 2**16))
def test_metric_properties(n, seed):
    rng = np.random.default_rng(seed)
    a, b, c = (EmpiricalMeasure(rng.standard_normal((n, 2))) for _ in range(3))
    ab, ba = w2_exact(a, b), w2_exact(b, a)
    assert ab == pytest.approx(ba, abs=1e-12)
    assert ab <= w2_exact(a, c) + w2_exact(c, b) + 1e-12


def test_translation_shifts_by_norm(rng):
    x = rng.standard_normal((20, 3))
    shift = np.array([1.0, -2.0, 0.5])
    assert w2_exact(EmpiricalMeasure(x), EmpiricalMeasure(x + shift)) == pytest.approx(np.linalg.norm(shift), rel=1e-12)


def test_any_coupling_is_an_upper_bound(cloud_pair, rng):
    mu, nu = cloud_pair
    assert w2_exact(mu, nu) <= coupling_cost(mu, nu, rng.permutation(5)) + 1e-12


def test_guards(cloud_pair):
    mu, nu = cloud_pair
    with pytest.raises(ContractError):
        w2_exact(mu, EmpiricalMeasure(np.zeros((4, 2))))
    with pytest.raises(ContractError):
        w2_exact(mu, EmpiricalMeasure(np.zeros((5, 3))))
    with pytest.raises(UnsupportedError):
        w2_exact(mu, EmpiricalMeasure(nu.points, weights=[0.4, 0.3, 0.1, 0.1, 0.1]))
    with pytest.raises(UnsupportedError):
        w2_exact(EmpiricalMeasure(np.zeros((8, 1))), EmpiricalMeasure(np.ones((8, 1))), cap=4)
    with pytest.raises(UnsupportedError):
        w2_quantile_1d(mu, nu)
    with pytest.raises(ContractError):
        EmpiricalMeasure([[1.0]], weights=[0.5])
    with pytest.raises(ContractError):
        w2_entropic(mu, nu, reg=0.0)


def test_entropic_close_to_exact(rng):
    worst = 0.0
    for _ in range(10):
        n = int(rng.integers(5, 40))
        mu = EmpiricalMeasure(rng.standard_normal((n, 2)))
        nu = EmpiricalMeasure(rng.standard_normal((n, 2)) + 0.5)
        exact = w2_exact(mu, nu)
        from mvcosine.measure import sq_cost_matrix

        reg = 0.01 * float(np.median(sq_cost_matrix(mu.points, nu.points)))
        res = w2_entropic(mu, nu, reg)
        assert res.approximate
        worst = max(worst, abs(res.value - exact) / exact)
    assert worst < 0.02


def test_entropic_self_distance_is_zero(cloud_pair):
    mu, _ = cloud_pair
    assert w2_entropic(mu, mu, 0.05).value == pytest.approx(0.0, abs=1e-6)


def test_csv_round_trip(tmp_path, cloud_pair):
    mu, _ = cloud_pair
    path = tmp_path / "cloud.csv"
    write_cloud_csv(path, mu)
    back = read_cloud_csv(path)
    np.testing.assert_array_equal(back.points, mu.points)


def test_csv_rejects_ragged(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2\n3\n")
    with pytest.raises(ContractError):
        read_cloud_csv(path)
