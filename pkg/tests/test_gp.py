"""Tests for the Gaussian-process surrogate and UCB acquisition."""

import math

import numpy as np
import pytest

from fedhpo.errors import ConditioningError
from fedhpo.gp import gp_fit_posterior, maximize_acquisition, posterior, squared_exponential, ucb
from fedhpo.models import BOConfig, GPState, KernelParams

NOISELESS = KernelParams(signal_variance=1.0, lengthscale=0.5, noise_variance=0.0)
NOISY = KernelParams(signal_variance=1.5, lengthscale=0.7, noise_variance=0.01)


def test_squared_exponential():
    """Test kernel values and symmetry."""
    kernel = KernelParams(signal_variance=2.0, lengthscale=0.5)
    points = np.array([-3.0, -2.5, -1.0])

    gram = squared_exponential(points, points, kernel)

    assert np.allclose(np.diag(gram), 2.0)
    assert np.allclose(gram, gram.T)
    assert gram[0, 1] == pytest.approx(2.0 * math.exp(-0.5))


def test_prior_without_observations():
    """Test the zero-mean prior."""
    mean, std = gp_fit_posterior(GPState(kernel=KernelParams(signal_variance=4.0)), -2.0)

    assert mean == 0.0
    assert std == 2.0


def test_noiseless_single_observation_is_interpolated():
    """Test exact recovery at the only observed point."""
    state = GPState(kernel=NOISELESS).observe(-2.0, 0.7)

    mean, std = gp_fit_posterior(state, -2.0)

    assert mean == pytest.approx(0.7, abs=1e-12)
    assert std == pytest.approx(0.0, abs=1e-12)


def test_noiseless_observations_are_interpolated():
    """Test interpolation at every observed point."""
    state = GPState(kernel=NOISELESS).observe(-3.0, 0.2).observe(-2.0, 0.9)

    mean, std = posterior(state, [-3.0, -2.0])

    assert mean == pytest.approx([0.2, 0.9], abs=1e-9)
    assert np.all(std <= 1e-6)


def test_posterior_std_bounded_by_signal():
    """Test 0 <= sigma <= sigma_f with the prior recovered far from data."""
    state = GPState(kernel=KernelParams(signal_variance=1.0, lengthscale=0.3)).observe(-3.0, 0.4).observe(-2.5, 0.6)
    queries = np.linspace(-4.0, 5.0, 200)

    _, std = posterior(state, queries)

    assert np.all(std >= 0.0)
    assert np.all(std <= 1.0 + 1e-12)
    assert std[-1] == pytest.approx(1.0)


def test_duplicate_inputs_recover_with_jitter():
    """Test that a singular kernel matrix is fixed by diagonal jitter."""
    state = GPState(kernel=NOISELESS).observe(-2.0, 0.5).observe(-2.0, 0.5)

    mean, std = gp_fit_posterior(state, -2.0)

    assert mean == pytest.approx(0.5, rel=1e-6)
    assert math.isfinite(std)


def test_conditioning_error_after_all_attempts(mocker):
    """Test that factorization gives up after the jitter schedule."""
    cholesky = mocker.patch("fedhpo.gp.np.linalg.cholesky", side_effect=np.linalg.LinAlgError("not PD"))
    state = GPState(kernel=NOISELESS).observe(-2.0, 0.5)

    with pytest.raises(ConditioningError) as excinfo:
        gp_fit_posterior(state, -1.0)

    assert cholesky.call_count == 8
    assert excinfo.value.code == "gp_conditioning"


def test_ucb():
    """Test mu + beta * sigma and the sigma guard."""
    assert ucb(0.5, 0.1, 2.0) == pytest.approx(0.7)
    assert ucb(np.array([0.1, 0.2]), np.array([0.0, 0.5]), 1.0) == pytest.approx([0.1, 0.7])

    with pytest.raises(ValueError):
        ucb(0.5, -0.1, 2.0)


def test_acquisition_tie_goes_to_lower_bound():
    """Test that a flat acquisition picks the smallest input."""
    cfg = BOConfig()

    assert maximize_acquisition(GPState(kernel=cfg.kernel), cfg) == pytest.approx(-4.0)


def test_acquisition_stays_within_bounds():
    """Test that the maximizer lies on the search grid."""
    cfg = BOConfig(eta_min=1e-3, eta_max=1e-1, acquisition_points=50)
    state = GPState(kernel=cfg.kernel).observe(-2.9, 0.1).observe(-1.1, 0.1).observe(-2.0, 0.9)

    u = maximize_acquisition(state, cfg)

    assert -3.0 <= u <= -1.0
    assert np.isclose(np.linspace(-3.0, -1.0, 50), u).any()


def _k(a, b, kernel=NOISY):
    return kernel.signal_variance * math.exp(-((a - b) ** 2) / (2 * kernel.lengthscale**2))


def _closed_form(inputs, values, query, inverse):
    gram = [[_k(a, b) + (NOISY.noise_variance if i == j else 0.0) for j, b in enumerate(inputs)] for i, a in enumerate(inputs)]
    inv = inverse(gram)
    cross = [_k(query, a) for a in inputs]
    weights = [sum(cross[i] * inv[i][j] for i in range(len(inputs))) for j in range(len(inputs))]
    mean = sum(w * y for w, y in zip(weights, values))
    variance = NOISY.signal_variance - sum(w * c for w, c in zip(weights, cross))
    return mean, math.sqrt(variance)


def _inverse_2x2(m):
    det = m[0][0] * m[1][1] - m[0][1] * m[1][0]
    return [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]


def _inverse_3x3(m):
    cofactor = [
        [
            (m[(r + 1) % 3][(c + 1) % 3] * m[(r + 2) % 3][(c + 2) % 3])
            - (m[(r + 1) % 3][(c + 2) % 3] * m[(r + 2) % 3][(c + 1) % 3])
            for c in range(3)
        ]
        for r in range(3)
    ]
    det = sum(m[0][c] * cofactor[0][c] for c in range(3))
    return [[cofactor[c][r] / det for c in range(3)] for r in range(3)]


@pytest.mark.parametrize("query", [-3.5, -2.2, -1.0, 0.4])
def test_posterior_matches_closed_form_two_observations(query):
    """Test mean and stddev against the explicit 2x2 inverse."""
    inputs, values = [-3.0, -1.8], [0.35, 0.8]
    state = GPState(kernel=NOISY).observe(inputs[0], values[0]).observe(inputs[1], values[1])

    mean, std = gp_fit_posterior(state, query)

    expected_mean, expected_std = _closed_form(inputs, values, query, _inverse_2x2)
    assert mean == pytest.approx(expected_mean, abs=1e-9)
    assert std == pytest.approx(expected_std, abs=1e-9)


@pytest.mark.parametrize("query", [-3.9, -2.6, -2.0, -0.5])
def test_posterior_matches_closed_form_three_observations(query):
    """Test mean and stddev against the explicit 3x3 adjugate inverse."""
    inputs, values = [-3.2, -2.4, -1.1], [0.2, 0.9, 0.55]
    state = GPState(kernel=NOISY)
    for u, a in zip(inputs, values):
        state = state.observe(u, a)

    mean, std = gp_fit_posterior(state, query)

    expected_mean, expected_std = _closed_form(inputs, values, query, _inverse_3x3)
    assert mean == pytest.approx(expected_mean, abs=1e-9)
    assert std == pytest.approx(expected_std, abs=1e-9)


def test_ucb_is_non_decreasing_in_beta():
    """Test UCB monotonicity in beta wherever the posterior is uncertain."""
    rng = np.random.default_rng(5)
    for _ in range(20):
        state = GPState(kernel=KernelParams(lengthscale=float(rng.uniform(0.2, 1.0))))
        for u in rng.uniform(-4.0, -1.0, size=int(rng.integers(1, 6))):
            state = state.observe(float(u), float(rng.uniform()))
        mean, std = posterior(state, np.linspace(-4.0, -1.0, 64))
        betas = np.sort(rng.uniform(0.0, 5.0, size=6))

        scores = np.stack([ucb(mean, std, beta) for beta in betas])

        uncertain = std > 0
        assert np.all(np.diff(scores[:, uncertain], axis=0) >= 0.0)


def test_acquisition_argmax_survives_monotone_transform(mocker):
    """Test that a strictly increasing transform of the scores keeps the chosen point."""
    rng = np.random.default_rng(8)
    cfg = BOConfig(eta_min=1e-4, eta_max=1e-1, acquisition_points=200)
    states = []
    for _ in range(10):
        state = GPState(kernel=cfg.kernel)
        for u in rng.uniform(-4.0, -1.0, size=3):
            state = state.observe(float(u), float(rng.uniform()))
        states.append(state)
    plain = [maximize_acquisition(state, cfg) for state in states]

    mocker.patch("fedhpo.gp.ucb", side_effect=lambda mu, sigma, beta: np.exp(3.0 * (mu + beta * sigma)))
    transformed = [maximize_acquisition(state, cfg) for state in states]

    assert transformed == plain
