import numpy as np
import pytest
from scipy import integrate, stats

from hai_sbi.density import (
    EncoderConfig,
    EncoderWeights,
    HeadOutput,
    forward,
    grad,
    init_weights,
    load_weights,
    log_prob,
    mean_nll,
    nll,
    sample,
    save_weights,
)

LOG_2PI = np.log(2 * np.pi)


def zero_weights(config):
    w = init_weights(config, seed=0)
    return EncoderWeights([np.zeros_like(a) for a in w.weights],
                          [np.zeros_like(b) for b in w.biases])


class TestConfig:
    def test_head_output_dims(self):
        diag = EncoderConfig(4, 8, 3, "diag-gaussian")
        assert diag.head_output_dim == 6
        full = EncoderConfig(4, 8, 2, "full-gaussian")
        assert full.head_output_dim == 5  # 2 means + 2 log-diag + 1 off-diag
        scalar = EncoderConfig(4, 8, 1, "scalar-gaussian")
        assert scalar.head_output_dim == 2

    def test_scalar_head_needs_dim_one(self):
        with pytest.raises(ValueError):
            EncoderConfig(4, 8, 2, "scalar-gaussian")

    def test_three_hidden_layers(self):
        cfg = EncoderConfig(5, 7, 2, "diag-gaussian")
        dims = cfg.layer_dims()
        assert dims == [(7, 5), (7, 7), (7, 7), (4, 7)]


class TestForward:
    def test_zero_weights_standard_head(self):
        cfg = EncoderConfig(3, 4, 2, "diag-gaussian")
        head = forward(zero_weights(cfg), cfg, np.array([0.5, 0.1, 0.9]))
        assert np.array_equal(head.mean, np.zeros(2))
        assert np.array_equal(head.diag, np.ones(2))

    def test_zero_weights_full_head_identity_cholesky(self):
        cfg = EncoderConfig(3, 4, 2, "full-gaussian")
        head = forward(zero_weights(cfg), cfg, np.array([0.5, 0.1, 0.9]))
        assert np.array_equal(head.chol, np.eye(2))

    def test_deterministic(self):
        cfg = EncoderConfig(6, 8, 3, "full-gaussian")
        w = init_weights(cfg, seed=3)
        x = np.linspace(0, 1, 6)
        a, b = forward(w, cfg, x), forward(w, cfg, x)
        assert np.array_equal(a.mean, b.mean)
        assert np.array_equal(a.chol, b.chol)

    def test_full_head_shapes(self):
        cfg = EncoderConfig(4, 5, 2, "full-gaussian")
        head = forward(init_weights(cfg, 1), cfg, np.ones(4))
        assert head.mean.shape == (2,)
        assert head.chol.shape == (2, 2)
        assert head.chol[0, 1] == 0.0
        assert (np.diag(head.chol) > 0).all()

    def test_dimension_mismatch(self):
        cfg = EncoderConfig(4, 5, 2, "diag-gaussian")
        with pytest.raises(ValueError):
            forward(init_weights(cfg, 1), cfg, np.ones(5))


class TestNll:
    def test_standard_normal_at_zero(self):
        head = HeadOutput(mean=np.zeros(1), diag=np.ones(1))
        assert nll(head, [0.0]) == pytest.approx(0.5 * LOG_2PI, rel=1e-12)
        assert nll(head, [0.0]) == pytest.approx(0.91894, abs=5e-6)

    def test_bivariate_identity_at_mean(self):
        head = HeadOutput(mean=np.array([0.3, -0.2]), diag=np.ones(2))
        assert nll(head, [0.3, -0.2]) == pytest.approx(LOG_2PI, rel=1e-12)

    def test_full_covariance_matches_scipy(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            d = rng.integers(1, 4)
            chol = np.tril(rng.normal(size=(d, d)))
            chol[np.diag_indices(d)] = np.exp(rng.normal(size=d) * 0.5)
            mean = rng.normal(size=d)
            theta = rng.normal(size=d)
            head = HeadOutput(mean=mean, chol=chol)
            ref = stats.multivariate_normal(mean, chol @ chol.T).logpdf(theta)
            assert nll(head, theta) == pytest.approx(-ref, rel=1e-10)

    def test_lognormal_density_matches_scipy(self):
        head = HeadOutput(mean=np.array([-1.99]), diag=np.array([0.15]))
        theta = 0.13
        ref = stats.lognorm(s=0.15, scale=np.exp(-1.99)).logpdf(theta)
        assert log_prob(head, [theta], transform="log") == pytest.approx(ref, rel=1e-12)

    def test_log_transform_needs_positive(self):
        head = HeadOutput(mean=np.zeros(1), diag=np.ones(1))
        with pytest.raises(ValueError):
            nll(head, [-0.2], transform="log")

    def test_log_prob_is_negated_nll(self):
        head = HeadOutput(mean=np.array([0.4]), diag=np.array([2.0]))
        assert log_prob(head, [1.0]) == -nll(head, [1.0])


def finite_difference_worst_error(cfg, seed, batch=3, eps=1e-5):
    w = init_weights(cfg, seed)
    rng = np.random.default_rng(seed + 1000)
    xs = rng.normal(size=(batch, cfg.input_dim))
    thetas = rng.normal(size=(batch, cfg.target_dim))
    if cfg.target_transform == "log":
        thetas = np.abs(thetas) + 0.05
    g = grad(w, cfg, xs, thetas)
    worst = 0.0
    for layer in range(len(w.weights)):
        for arr, garr in ((w.weights[layer], g.weights[layer]),
                          (w.biases[layer], g.biases[layer])):
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                ix = it.multi_index
                orig = arr[ix]
                arr[ix] = orig + eps
                hi = mean_nll(w, cfg, xs, thetas)
                arr[ix] = orig - eps
                lo = mean_nll(w, cfg, xs, thetas)
                arr[ix] = orig
                num = (hi - lo) / (2 * eps)
                denom = max(abs(num), abs(garr[ix]), 1e-8)
                worst = max(worst, abs(num - garr[ix]) / denom)
    return worst


class TestGrad:
    @pytest.mark.parametrize("head_kind,d", [
        ("scalar-gaussian", 1), ("diag-gaussian", 2), ("diag-gaussian", 3),
        ("full-gaussian", 2), ("full-gaussian", 3),
    ])
    @pytest.mark.parametrize("transform", ["natural", "log"])
    def test_matches_central_differences(self, head_kind, d, transform):
        cfg = EncoderConfig(input_dim=4, hidden_width=6, target_dim=d,
                            head_kind=head_kind, target_transform=transform)
        assert finite_difference_worst_error(cfg, seed=d * 7 + 1) < 1e-4

    def test_duplicated_rows_equal_single_row(self):
        cfg = EncoderConfig(3, 5, 2, "diag-gaussian")
        w = init_weights(cfg, 2)
        x = np.array([[0.1, 0.5, -0.3]])
        th = np.array([[0.2, -0.1]])
        g1 = grad(w, cfg, x, th)
        g4 = grad(w, cfg, np.repeat(x, 4, axis=0), np.repeat(th, 4, axis=0))
        for a, b in zip(g1.flat_arrays(), g4.flat_arrays()):
            assert np.allclose(a, b, rtol=1e-12, atol=1e-15)

    def test_dead_network_first_layer_gradient_zero(self):
        # all-zero weights: raw output is constant, nothing propagates back
        cfg = EncoderConfig(3, 4, 1, "scalar-gaussian")
        w = zero_weights(cfg)
        g = grad(w, cfg, np.array([[1.0, 2.0, 3.0]]), np.array([[0.5]]))
        assert np.array_equal(g.weights[0], np.zeros_like(w.weights[0]))
        assert g.biases[-1].any()  # the head bias does get a gradient

    def test_empty_batch_rejected(self):
        cfg = EncoderConfig(3, 4, 1, "scalar-gaussian")
        w = init_weights(cfg, 0)
        with pytest.raises(ValueError):
            grad(w, cfg, np.empty((0, 3)), np.empty((0, 1)))


class TestSample:
    def test_degenerate_scale_pins_draws(self):
        head = HeadOutput(mean=np.array([0.7, -1.2]), diag=np.full(2, 1e-12))
        draws = sample(head, 50, seed=1)
        assert np.allclose(draws, [0.7, -1.2], atol=1e-9)

    def test_truncation_strictly_positive(self):
        head = HeadOutput(mean=np.array([0.01, -0.02]), diag=np.array([0.05, 0.05]))
        draws = sample(head, 500, truncate_at_zero=True, seed=2)
        assert draws.shape == (500, 2)
        assert (draws > 0).all()

    def test_log_transform_positive_without_truncation(self):
        head = HeadOutput(mean=np.array([-2.0]), diag=np.array([1.0]))
        draws = sample(head, 200, transform="log", seed=3)
        assert (draws > 0).all()

    def test_moments_match_head(self):
        chol = np.array([[0.5, 0.0], [-0.3, 0.4]])
        head = HeadOutput(mean=np.array([1.0, -1.0]), chol=chol)
        n = 100_000
        draws = sample(head, n, seed=4)
        cov = chol @ chol.T
        for j in range(2):
            se = np.sqrt(cov[j, j] / n)
            assert abs(draws[:, j].mean() - head.mean[j]) <= 3 * se
        sample_cov = np.cov(draws, rowvar=False)
        for i in range(2):
            for j in range(2):
                se = np.sqrt((cov[i, i] * cov[j, j] + cov[i, j] ** 2) / n)
                assert abs(sample_cov[i, j] - cov[i, j]) <= 4 * se

    def test_degenerate_truncation_raises(self):
        head = HeadOutput(mean=np.array([-20.0]), diag=np.array([0.5]))
        with pytest.raises(RuntimeError, match="degenerate"):
            sample(head, 10, truncate_at_zero=True, seed=5)

    def test_seeded_reproducibility(self):
        head = HeadOutput(mean=np.zeros(3), diag=np.ones(3))
        assert np.array_equal(sample(head, 64, seed=9), sample(head, 64, seed=9))


def test_density_integrates_to_one():
    head = HeadOutput(mean=np.array([0.3]), diag=np.array([0.7]))
    lo, hi = 0.3 - 7.0, 0.3 + 7.0
    total, err = integrate.quad(lambda t: np.exp(log_prob(head, [t])), lo, hi)
    assert abs(total - 1.0) < 1e-6


def test_serialization_round_trip_bit_exact(tmp_path):
    cfg = EncoderConfig(5, 6, 2, "full-gaussian", target_transform="log")
    w = init_weights(cfg, seed=11)
    path = tmp_path / "weights.json"
    save_weights(w, cfg, path, extra={"target_shift": [0.1, 0.2]})
    w2, cfg2, extra = load_weights(path)
    assert cfg2 == cfg
    assert extra["target_shift"] == [0.1, 0.2]
    x = np.linspace(-1, 1, 5)
    theta = np.array([0.4, 0.9])
    a = nll(forward(w, cfg, x), theta, cfg.target_transform)
    b = nll(forward(w2, cfg2, x), theta, cfg2.target_transform)
    assert a == b  # bit-exact

    for orig, loaded in zip(w.flat_arrays(), w2.flat_arrays()):
        assert np.array_equal(orig, loaded)


def test_covariance_positive_definite_for_random_weights():
    cfg = EncoderConfig(4, 6, 3, "full-gaussian")
    for seed in range(8):
        w = init_weights(cfg, seed)
        head = forward(w, cfg, np.random.default_rng(seed).normal(size=4))
        eigvals = np.linalg.eigvalsh(head.covariance())
        assert (eigvals > 0).all()
