#include <doctest.h>

#include "helpers.hpp"

using namespace scbridge;

namespace {

BridgeConfig bridge(double horizon = 1.0, double sigma = 0.2, std::size_t steps = 50) {
    BridgeConfig cfg;
    cfg.horizon = horizon;
    cfg.sigma = sigma;
    cfg.steps = steps;
    return cfg;
}

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) {
        out[i++] = x;
    }
    return out;
}

ActivationVector bits(std::initializer_list<int> v) {
    ActivationVector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (int x : v) {
        out[i++] = static_cast<std::uint8_t>(x);
    }
    return out;
}

}  // namespace

TEST_SUITE("bridge_continuous") {
    TEST_CASE("endpoints are pinned") {
        Rng rng(1);
        const Vector x0 = vec({1.0, -2.0, 0.5});
        const Vector xT = vec({0.0, 3.0, 7.0});
        const BridgeConfig cfg = bridge(2.0, 5.0);
        CHECK(interpolate(x0, xT, 0.0, cfg, rng) == x0);
        CHECK(interpolate(x0, xT, 2.0, cfg, rng) == xT);
        CHECK_THROWS_AS(interpolate(x0, xT, 2.5, cfg, rng), RangeError);
        CHECK_THROWS_AS(interpolate(x0, xT, -0.1, cfg, rng), RangeError);
    }

    TEST_CASE("noiseless midpoint") {
        Rng rng(2);
        const Vector mid = interpolate(vec({0.0, 4.0}), vec({2.0, 0.0}), 0.5, bridge(1.0, 0.0), rng);
        CHECK(mid == vec({1.0, 2.0}));
    }

    TEST_CASE("midpoint law at sigma 0.2") {
        Rng rng(3);
        const BridgeConfig cfg = bridge();
        const Vector x0 = vec({0.0});
        const Vector xT = vec({1.0});
        const int n = 100000;
        double sum = 0.0;
        double sq = 0.0;
        for (int k = 0; k < n; ++k) {
            const double v = interpolate(x0, xT, 0.5, cfg, rng)[0];
            sum += v;
            sq += v * v;
        }
        const double mean = sum / n;
        const double var = sq / n - mean * mean;
        const double expected_var = 0.04 * 0.25;
        CHECK(std::abs(mean - 0.5) < 4 * std::sqrt(expected_var / n));
        CHECK(std::abs(var / expected_var - 1.0) < 0.05);
    }

    TEST_CASE("masked loss examples") {
        CHECK(masked_endpoint_loss(vec({1.0, 2.0}), vec({1.0, 2.0})).loss == 0.0);
        const MaskedLoss l = masked_endpoint_loss(vec({5.0, 1.0}), vec({0.0, 2.0}));
        CHECK(l.loss == doctest::Approx(1.0));
        CHECK(l.grad == vec({0.0, -2.0}));
        CHECK(masked_endpoint_loss(vec({0.0, 0.0}), vec({3.0, 4.0})).loss == doctest::Approx(12.5));
        const MaskedLoss degenerate = masked_endpoint_loss(vec({1.0, 2.0}), vec({0.0, 0.0}));
        CHECK(degenerate.degenerate);
        CHECK(degenerate.loss == 0.0);
        CHECK(degenerate.grad.isZero(0.0));
        CHECK(unmasked_endpoint_loss(vec({5.0, 1.0}), vec({0.0, 2.0})).loss == doctest::Approx(13.0));
    }

    TEST_CASE("masked coordinates never receive gradient") {
        Rng rng(4);
        for (int trial = 0; trial < 50; ++trial) {
            Vector truth = testing::random_matrix(1, 10, rng).row(0).transpose();
            for (Eigen::Index i = 0; i < truth.size(); i += 3) {
                truth[i] = 0.0;
            }
            const Vector pred = testing::random_matrix(1, 10, rng).row(0).transpose();
            const MaskedLoss l = masked_endpoint_loss(pred, truth);
            for (Eigen::Index i = 0; i < truth.size(); i += 3) {
                CHECK(l.grad[i] == 0.0);
            }
            for (Eigen::Index i = 0; i < truth.size(); ++i) {
                Vector up = pred;
                Vector down = pred;
                up[i] += 1e-6;
                down[i] -= 1e-6;
                const double fd =
                    (masked_endpoint_loss(up, truth).loss - masked_endpoint_loss(down, truth).loss) / 2e-6;
                CHECK(testing::relative_error(l.grad[i], fd) < 1e-6);
            }
        }
    }

    TEST_CASE("drift examples and clamp") {
        const BridgeConfig cfg = bridge();
        CHECK(drift_from_endpoint(vec({3.0}), vec({3.0}), 0.3, cfg)[0] == 0.0);
        CHECK(drift_from_endpoint(vec({2.0}), vec({0.0}), 0.5, cfg)[0] == doctest::Approx(4.0));
        const Vector v = drift_from_endpoint(vec({1.0}), vec({0.0}), 1.0 - 1e-12, cfg);
        CHECK(std::isfinite(v[0]));
        CHECK(v[0] == doctest::Approx(1.0 / cfg.step_size()));
    }

    TEST_CASE("drift matches the velocity form away from the clamp") {
        Rng rng(5);
        const BridgeConfig cfg = bridge(2.0);
        std::uniform_real_distribution<double> time(0.0, cfg.horizon - 2 * cfg.step_size());
        for (int k = 0; k < 100; ++k) {
            const Vector x = testing::random_matrix(1, 4, rng).row(0).transpose();
            const Vector p = testing::random_matrix(1, 4, rng).row(0).transpose();
            const double t = time(rng);
            const Vector v = drift_from_endpoint(p, x, t, cfg);
            CHECK(((p - x) / (cfg.horizon - t) - v).cwiseAbs().maxCoeff() < 1e-12);
        }
    }

    TEST_CASE("constant oracle reaches its target exactly") {
        Rng rng(6);
        const Matrix target = testing::random_matrix(1, 5, rng);
        const EndpointPredictor oracle = [&](double, const Matrix& x, const ConditionKey&) {
            return Matrix(target.replicate(x.rows(), 1));
        };
        const Matrix x0 = testing::random_matrix(3, 5, rng);
        const Matrix out = sample_endpoint(x0, oracle, ConditionKey{}, bridge(1.0, 0.0), rng);
        for (Eigen::Index r = 0; r < out.rows(); ++r) {
            CHECK(out.row(r) == target.row(0));
        }
        // One step lands on the predictor output at t = 0.
        Matrix seen;
        const EndpointPredictor recording = [&](double t, const Matrix& x, const ConditionKey&) {
            CHECK(t == 0.0);
            seen = x * 2.0;
            return seen;
        };
        CHECK(sample_endpoint(x0, recording, ConditionKey{}, bridge(1.0, 0.0, 1), rng) == seen);
    }

    TEST_CASE("noisy oracle is unbiased") {
        Rng rng(7);
        const EndpointPredictor oracle = [](double, const Matrix& x, const ConditionKey&) {
            return Matrix(Matrix::Constant(x.rows(), x.cols(), 1.5));
        };
        const int n = 10000;
        const Matrix out = sample_endpoint(Matrix(Matrix::Zero(n, 2)), oracle, ConditionKey{}, bridge(), rng);
        for (Eigen::Index c = 0; c < 2; ++c) {
            const double mean = out.col(c).mean();
            const double sd = std::sqrt((out.col(c).array() - mean).square().sum() / (n - 1));
            CHECK(std::abs(mean - 1.5) <= 4 * sd / std::sqrt(double(n)) + 1e-12);
        }
    }

    TEST_CASE("non-finite predictor output names the step") {
        Rng rng(8);
        const EndpointPredictor broken = [](double t, const Matrix& x, const ConditionKey&) {
            Matrix out = x;
            if (t > 0.3) {
                out(0, 0) = std::numeric_limits<double>::infinity();
            }
            return out;
        };
        try {
            sample_endpoint(Matrix(Matrix::Zero(1, 2)), broken, ConditionKey{}, bridge(), rng);
            FAIL("expected NumericalError");
        } catch (const NumericalError& e) {
            CHECK(std::string(e.what()).find("step") != std::string::npos);
        }
    }

    TEST_CASE("bridge config validation") {
        BridgeConfig cfg;
        cfg.steps = 0;
        CHECK_THROWS_AS(cfg.validate(), RangeError);
        cfg = {};
        cfg.horizon = -1.0;
        CHECK_THROWS_AS(cfg.validate(), RangeError);
        cfg = {};
        cfg.sigma = -0.1;
        CHECK_THROWS_AS(cfg.validate(), RangeError);
    }
}

TEST_SUITE("bridge_discrete") {
    TEST_CASE("discretize examples") {
        CHECK(discretize(vec({0.0, 1.2, 0.0})) == bits({0, 1, 0}));
        CHECK(discretize(vec({0.0, 0.0})) == bits({0, 0}));
        CHECK(discretize(vec({-0.5, 0.0, 3.0})) == bits({1, 0, 1}));
    }

    TEST_CASE("mixture interpolation") {
        Rng rng(1);
        const BridgeConfig cfg = bridge(2.0);
        const ActivationVector d0 = bits({0, 1, 1, 0});
        const ActivationVector dT = bits({1, 0, 1, 0});
        CHECK(discrete_interpolate(d0, dT, 0.0, cfg, rng) == d0);
        CHECK(discrete_interpolate(d0, dT, 2.0, cfg, rng) == dT);
        CHECK_THROWS_AS(discrete_interpolate(d0, dT, 3.0, cfg, rng), RangeError);
        CHECK(kappa(0.5, cfg) == 0.25);

        const int n = 100000;
        int ones = 0;
        for (int k = 0; k < n; ++k) {
            ones += discrete_interpolate(bits({0}), bits({1}), 1.0, cfg, rng)[0];
        }
        CHECK(std::abs(ones / double(n) - 0.5) < 4 * std::sqrt(0.25 / n));
    }

    TEST_CASE("posterior loss examples") {
        CHECK(posterior_loss(vec({30.0, -30.0}), bits({1, 0})).loss < 1e-10);
        CHECK(posterior_loss(vec({0.0, 0.0, 0.0}), bits({1, 0, 1})).loss == doctest::Approx(3 * std::log(2.0)));
        CHECK(posterior_loss(vec({0.0}), bits({1})).grad[0] == doctest::Approx(-0.5));
        // Large logits stay finite.
        const PosteriorLoss extreme = posterior_loss(vec({800.0, -800.0}), bits({0, 1}));
        CHECK(extreme.loss == doctest::Approx(1600.0));
    }

    TEST_CASE("posterior loss gradient matches central differences") {
        Rng rng(2);
        std::bernoulli_distribution coin(0.5);
        for (int trial = 0; trial < 20; ++trial) {
            const Vector logits = testing::random_matrix(1, 6, rng, 3.0).row(0).transpose();
            ActivationVector target(6);
            for (Eigen::Index i = 0; i < 6; ++i) {
                target[i] = coin(rng) ? 1 : 0;
            }
            const PosteriorLoss l = posterior_loss(logits, target);
            for (Eigen::Index i = 0; i < 6; ++i) {
                Vector up = logits;
                Vector down = logits;
                up[i] += 1e-5;
                down[i] -= 1e-5;
                const double fd = (posterior_loss(up, target).loss - posterior_loss(down, target).loss) / 2e-5;
                CHECK(testing::relative_error(l.grad[i], fd) < 1e-4);
            }
        }
    }

    TEST_CASE("flip probabilities") {
        const BridgeConfig cfg = bridge();
        CHECK(flip_probability(0, 0.0, 0.2, 0.02, cfg) == 0.0);
        CHECK(flip_probability(1, 1.0, 0.2, 0.02, cfg) == 0.0);
        CHECK(flip_probability(0, 0.5, 0.5, 0.02, cfg) == doctest::Approx(0.02));
        CHECK(flip_probability(0, 1.0, 0.98, 0.02, cfg) == 1.0);
        CHECK(flip_probability(1, 0.0, 0.98, 0.02, cfg) == 1.0);
        Rng rng(3);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (int k = 0; k < 1000; ++k) {
            const double h = 0.001 + 0.1 * unit(rng);
            const double t = (cfg.horizon - h) * unit(rng);
            for (std::uint8_t s : {std::uint8_t{0}, std::uint8_t{1}}) {
                const double p = flip_probability(s, unit(rng), t, h, cfg);
                CHECK(p >= 0.0);
                CHECK(p <= 1.0);
            }
        }
    }

    TEST_CASE("ctmc step behaviour") {
        Rng rng(4);
        const BridgeConfig cfg = bridge();
        const ActivationVector d = bits({0, 1, 1, 0});
        CHECK(ctmc_step(d, d.cast<double>(), 0.4, 0.02, cfg, rng) == d);
        const ActivationVector target = bits({1, 1, 0, 0});
        CHECK(ctmc_step(d, target.cast<double>(), 0.98, 0.02, cfg, rng) == target);
        CHECK_THROWS_AS(ctmc_step(d, Vector::Constant(4, 1.5), 0.4, 0.02, cfg, rng), InputError);
        CHECK_THROWS_AS(ctmc_step(d, Vector::Constant(4, 0.5), 0.99, 0.02, cfg, rng), RangeError);

        const int n = 100000;
        int flips = 0;
        for (int k = 0; k < n; ++k) {
            flips += ctmc_step(bits({0}), vec({0.5}), 0.5, 0.02, cfg, rng)[0];
        }
        CHECK(std::abs(flips / double(n) - 0.02) < 4 * std::sqrt(0.02 * 0.98 / n));
    }

    TEST_CASE("oracle samplers") {
        Rng rng(5);
        const BridgeConfig cfg = bridge();
        const BinaryMatrix d0 = (testing::random_matrix(20, 8, rng).array() > 0.0).cast<std::uint8_t>();
        const BinaryMatrix dT = (testing::random_matrix(20, 8, rng).array() > 0.0).cast<std::uint8_t>();
        const ActivationPredictor to_target = [&](double, const BinaryMatrix&, const ConditionKey&) {
            return Matrix(dT.cast<double>());
        };
        CHECK(sample_activation(d0, to_target, ConditionKey{}, cfg, rng) == dT);
        const ActivationPredictor stay = [](double, const BinaryMatrix& d, const ConditionKey&) {
            return Matrix(d.cast<double>());
        };
        CHECK(sample_activation(d0, stay, ConditionKey{}, cfg, rng) == d0);
    }
}
