#include <doctest.h>

#include <numeric>

#include <json.hpp>

#include "helpers.hpp"

using namespace scbridge;

namespace {

double mean_pair_distance(const Matrix& a, const Matrix& b) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < b.rows(); ++j) {
            double sq = 0.0;
            for (Eigen::Index g = 0; g < a.cols(); ++g) {
                sq += (a(i, g) - b(j, g)) * (a(i, g) - b(j, g));
            }
            total += std::sqrt(sq);
        }
    }
    return total / static_cast<double>(a.rows() * b.rows());
}

Matrix shuffled_rows(const Matrix& m, Rng& rng) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(m.rows()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    Matrix out(m.rows(), m.cols());
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        out.row(r) = m.row(order[static_cast<std::size_t>(r)]);
    }
    return out;
}

BinaryMatrix with_frequencies(const std::vector<double>& freq, int rows) {
    BinaryMatrix m(rows, static_cast<Eigen::Index>(freq.size()));
    for (std::size_t g = 0; g < freq.size(); ++g) {
        const int on = static_cast<int>(std::lround(freq[g] * rows));
        for (int r = 0; r < rows; ++r) {
            m(r, static_cast<Eigen::Index>(g)) = r < on ? 1 : 0;
        }
    }
    return m;
}

}  // namespace

TEST_SUITE("metrics") {
    TEST_CASE("e-distance examples") {
        Rng rng(1);
        const Matrix a = testing::random_matrix(15, 4, rng);
        CHECK(e_distance(a, a) == 0.0);
        CHECK(e_distance(a, shuffled_rows(a, rng)) == 0.0);

        Matrix pa(2, 2);
        Matrix pb(2, 2);
        pa << 0.0, 0.0, 0.0, 0.0;
        pb << 3.0, 4.0, 3.0, 4.0;
        CHECK(e_distance(pa, pb) == doctest::Approx(10.0));
        CHECK_THROWS_AS(e_distance(pa.topRows(1), pb), InputError);
        CHECK_THROWS_AS(e_distance(pa, Matrix::Zero(2, 3)), DimensionError);
    }

    TEST_CASE("e-distance matches a double loop") {
        Rng rng(2);
        for (int trial = 0; trial < 10; ++trial) {
            const Matrix a = testing::random_matrix(20, 5, rng);
            const Matrix b = testing::random_matrix(23, 5, rng, 1.5);
            const double oracle =
                2.0 * mean_pair_distance(a, b) - mean_pair_distance(a, a) - mean_pair_distance(b, b);
            CHECK(std::abs(e_distance(a, b) - oracle) < 1e-12);
            CHECK(e_distance(a, b) == e_distance(shuffled_rows(a, rng), shuffled_rows(b, rng)));
        }
    }

    TEST_CASE("e-distance is small for halves of one sample") {
        Rng rng(3);
        double sum = 0.0;
        double sq = 0.0;
        const int reps = 100;
        for (int k = 0; k < reps; ++k) {
            const Matrix pool = testing::random_matrix(200, 3, rng);
            const Matrix a = pool.topRows(100);
            const Matrix b = pool.bottomRows(100);
            // Remove the self-pair bias so the statistic is centred on zero.
            const double unbiased = e_distance(a, b) - mean_pair_distance(a, a) / 99.0 - mean_pair_distance(b, b) / 99.0;
            sum += unbiased;
            sq += unbiased * unbiased;
        }
        const double mean = sum / reps;
        const double se = std::sqrt((sq / reps - mean * mean) / reps);
        CHECK(std::abs(mean) < 3 * se);
    }

    TEST_CASE("emd examples and oracle") {
        Rng rng(4);
        const Matrix a = testing::random_matrix(10, 3, rng);
        CHECK(emd_per_gene(a, a, rng) == 0.0);
        CHECK(emd_per_gene(Matrix::Zero(2, 1), Matrix::Constant(2, 1, 3.0), rng) == 9.0);
        CHECK_THROWS_AS(emd_per_gene(Matrix::Zero(0, 1), Matrix::Zero(2, 1), rng), InputError);

        // Sorted pairing is optimal in one dimension: compare with the best of all assignments.
        for (int trial = 0; trial < 20; ++trial) {
            const Matrix x = testing::random_matrix(6, 2, rng);
            const Matrix y = testing::random_matrix(6, 2, rng, 2.0);
            double oracle = 0.0;
            for (Eigen::Index g = 0; g < 2; ++g) {
                std::vector<int> perm(6);
                std::iota(perm.begin(), perm.end(), 0);
                double best = std::numeric_limits<double>::infinity();
                do {
                    double c = 0.0;
                    for (int i = 0; i < 6; ++i) {
                        c += (x(i, g) - y(perm[static_cast<std::size_t>(i)], g)) *
                             (x(i, g) - y(perm[static_cast<std::size_t>(i)], g));
                    }
                    best = std::min(best, c / 6.0);
                } while (std::next_permutation(perm.begin(), perm.end()));
                oracle += best / 2.0;
            }
            CHECK(std::abs(emd_per_gene(x, y, rng) - oracle) < 1e-12);
        }
    }

    TEST_CASE("emd downsampling and atoms") {
        Rng rng(5);
        const Matrix big = Matrix::Constant(50, 2, 1.0);
        const Matrix small = Matrix::Constant(5, 2, 4.0);
        CHECK(emd_per_gene(big, small, rng) == 9.0);
        for (double p : {0.0, 1.0, 2.5}) {
            for (double q : {-1.0, 0.5, 3.0}) {
                for (double r : {-2.0, 1.5}) {
                    auto d = [&](double u, double v) {
                        return std::sqrt(emd_per_gene(Matrix::Constant(2, 1, u), Matrix::Constant(2, 1, v), rng));
                    };
                    CHECK(d(p, r) <= d(p, q) + d(q, r) + 1e-12);
                }
            }
        }
    }

    TEST_CASE("differentially expressed genes") {
        Rng rng(6);
        const Matrix control = testing::random_matrix(40, 30, rng, 0.1);
        Matrix perturbed = control;
        perturbed.col(17).array() += 5.0;
        CHECK(de_genes(control, perturbed, 1) == std::vector<std::size_t>{17});
        CHECK(de_genes(control, perturbed, 30).size() == 30);

        const Matrix shifted = testing::random_matrix(40, 30, rng);
        const Vector score = (shifted.colwise().mean() - control.colwise().mean()).cwiseAbs().transpose();
        std::vector<std::size_t> order(30);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return score[static_cast<Eigen::Index>(a)] > score[static_cast<Eigen::Index>(b)];
        });
        order.resize(10);
        CHECK(de_genes(control, shifted, 10) == order);
        CHECK_THROWS_AS(de_genes(control, shifted, 31), RangeError);
    }

    TEST_CASE("activation correlation") {
        const std::vector<double> f{0.1, 0.5, 0.9, 0.3};
        std::vector<double> g;
        for (double v : f) {
            g.push_back(1.0 - v);
        }
        const BinaryMatrix truth = with_frequencies(f, 10);
        CHECK(activation_pcc(truth, truth) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(activation_pcc(with_frequencies(g, 10), truth) == doctest::Approx(-1.0).epsilon(1e-12));
        const BinaryMatrix flat = with_frequencies({0.5, 0.5, 0.5, 0.5}, 10);
        CHECK_THROWS_AS(activation_pcc(flat, truth), InputError);

        Rng rng(7);
        const Vector x = testing::random_matrix(100, 1, rng).col(0);
        const Vector y = testing::random_matrix(100, 1, rng).col(0) + 0.3 * x;
        double mx = 0.0;
        double my = 0.0;
        for (Eigen::Index i = 0; i < 100; ++i) {
            mx += x[i] / 100.0;
            my += y[i] / 100.0;
        }
        double sxy = 0.0;
        double sxx = 0.0;
        double syy = 0.0;
        for (Eigen::Index i = 0; i < 100; ++i) {
            sxy += (x[i] - mx) * (y[i] - my);
            sxx += (x[i] - mx) * (x[i] - mx);
            syy += (y[i] - my) * (y[i] - my);
        }
        CHECK(std::abs(pearson(x, y) - sxy / std::sqrt(sxx * syy)) < 1e-12);
    }

    TEST_CASE("report fields and serialization") {
        Rng rng(8);
        const Matrix truth = testing::random_matrix(30, 50, rng).cwiseMax(0.0);
        const Matrix control = testing::random_matrix(30, 50, rng).cwiseMax(0.0);
        const MetricsReport perfect = compute_metrics(truth, truth, control, rng);
        CHECK(perfect.e_distance == 0.0);
        CHECK(perfect.emd_all == 0.0);
        CHECK(perfect.emd_de20 == 0.0);
        REQUIRE(perfect.activation_pcc_all.has_value());
        CHECK(*perfect.activation_pcc_all == doctest::Approx(1.0));
        CHECK(compute_metrics(control, truth, control, rng).e_distance > 0.0);

        const auto j = nlohmann::json::parse(to_json(perfect));
        std::vector<std::string> keys;
        for (const auto& [k, v] : j.items()) {
            keys.push_back(k);
        }
        std::vector<std::string> expected = metrics_fields();
        std::sort(keys.begin(), keys.end());
        std::sort(expected.begin(), expected.end());
        CHECK(keys == expected);

        const std::string header = csv_header();
        CHECK(std::count(header.begin(), header.end(), ',') + 1 == static_cast<long>(metrics_fields().size()));
        const std::string row = csv_row(perfect);
        CHECK(std::count(row.begin(), row.end(), ',') == std::count(header.begin(), header.end(), ','));

        MetricsReport undefined = perfect;
        undefined.activation_pcc_de20.reset();
        CHECK(nlohmann::json::parse(to_json(undefined))["activation_pcc_de20"].is_null());
        CHECK(csv_row(undefined).find("NA") != std::string::npos);
    }
}
