import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvcosine import ContractError, CosineFamily, SpectralGenerator, a_sine_apply, cosine_apply, identity_residuals, scalar_family, sine_apply
from mvcosine.cosine_family import operator_norm_power, random_time_pairs

from conftest import random_orthogonal


def test_scalar_cosine_closed_form():
    fam = scalar_family(-4.0)
    assert cosine_apply(fam, np.pi / 2, [1.0]) == pytest.approx([-1.0], abs=1e-15)


def test_cosine_at_zero_is_identity(rng):
    gen = SpectralGenerator(-(np.arange(1, 5) ** 2.0), basis=random_orthogonal(rng, 4))
    fam = CosineFamily(gen, 2.0)
    x = rng.standard_normal(4)
    np.testing.assert_allclose(cosine_apply(fam, 0.0, x), x, atol=1e-15)
    np.testing.assert_allclose(sine_apply(fam, 0.0, x), 0.0, atol=0)


def test_diagonal_cosine_values():
    fam = CosineFamily(SpectralGenerator([-1.0, -4.0]), 4.0)
    np.testing.assert_allclose(cosine_apply(fam, np.pi, [1.0, 1.0]), [-1.0, 1.0], atol=1e-15)


def test_sine_values():
    assert sine_apply(scalar_family(-1.0, 4.0), np.pi, [1.0])[0] == pytest.approx(0.0, abs=1e-15)
    assert sine_apply(scalar_family(0.0, 4.0), 3.0, [2.0])[0] == 6.0


def test_a_sine_zero_mode():
    assert a_sine_apply(scalar_family(0.0, 4.0), 1.3, [2.0])[0] == 0.0
    assert a_sine_apply(scalar_family(-4.0), 0.3, [1.0])[0] == pytest.approx(-2.0 * np.sin(0.6))


def test_dimension_mismatch_raises():
    with pytest.raises(ContractError):
        cosine_apply(scalar_family(-1.0), 0.5, [1.0, 2.0])


@pytest.mark.parametrize("kwargs", [dict(eigenvalues=[0.5]), dict(eigenvalues=[-1.0, -2.0], basis=[[1.0, 0.1], [0.0, 1.0]])])
def test_invalid_generator(kwargs):
    with pytest.raises(ContractError):
        SpectralGenerator(**kwargs)


def test_damping_bound_below_norm_rejected():
    with pytest.raises(ContractError):
        SpectralGenerator([-1.0, -1.0], damping=[[0.0, 2.0], [0.0, 0.0]], damping_bound=1.0)


def test_power_iteration_matches_spectral_norm(rng):
    b = rng.standard_normal((5, 5))
    assert operator_norm_power(b) == pytest.approx(np.linalg.norm(b, 2), rel=1e-8)


def test_m1_bound_dominates_grid(rng):
    gen = SpectralGenerator(-rng.uniform(0, 10, 6), basis=random_orthogonal(rng, 6))
    fam = CosineFamily(gen, 3.0)
    ts = np.linspace(0, 3.0, 5001)
    assert np.max(fam.sine_norm(ts) ** 2 + fam.cosine_norm(ts) ** 2) <= fam.m1_bound


def test_understated_m1_rejected():
    with pytest.raises(ContractError):
        CosineFamily(SpectralGenerator([0.0]), 2.0, m1_bound=1.5)


def test_operator_matrices_agree_with_apply(rng):
    gen = SpectralGenerator([-1.0, -3.0, 0.0], basis=random_orthogonal(rng, 3))
    fam = CosineFamily(gen, 1.0)
    x = rng.standard_normal(3)
    np.testing.assert_allclose(fam.cosine_matrix(0.7) @ x, cosine_apply(fam, 0.7, x), atol=1e-14)
    np.testing.assert_allclose(fam.sine_matrix(0.7) @ x, sine_apply(fam, 0.7, x), atol=1e-14)


def test_sin_step_integral_matches_quadrature():
    gen = SpectralGenerator([-4.0, 0.0])
    from scipy.integrate import quad

    exact = gen.sin_step_integral(0.2, 0.9)
    for i in range(2):
        ref = quad(lambda u: gen.sin_multiplier(u)[i], 0.2, 0.9)[0]
        assert exact[i] == pytest.approx(ref, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(
    lam=st.lists(st.floats(-50.0, 0.0), min_size=1, max_size=5),
    seed=st.integers(0, 2**16),
)
def test_identities_hold_for_random_spectra(lam, seed):
    rng = np.random.default_rng(seed)
    gen = SpectralGenerator(lam, basis=random_orthogonal(rng, len(lam)))
    fam = CosineFamily(gen, 2.0)
    res = identity_residuals(fam, random_time_pairs(2.0, 50, seed), trials=4, seed=seed)
    assert res.passed(1e-8)


class _DetunedGenerator(SpectralGenerator):
    def cos_multiplier(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        return np.cos(1.01 * t * self.frequencies)


def test_identity_residuals_detect_a_detuned_cosine():
    good = identity_residuals(scalar_family(-4.0), random_time_pairs(1.0, 100))
    assert good.passed()
    bad = identity_residuals(CosineFamily(_DetunedGenerator([-4.0]), 1.0), random_time_pairs(1.0, 100))
    assert not bad.passed()
    assert bad.sine_integral > 1e-3
