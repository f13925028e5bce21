#include "scbridge/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "scbridge/errors.hpp"

namespace scbridge {

void SinkhornConfig::validate() const {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
        throw RangeError("sinkhorn: epsilon must be positive");
    }
    if (!(tolerance > 0.0)) {
        throw RangeError("sinkhorn: tolerance must be positive");
    }
    if (max_iters == 0) {
        throw RangeError("sinkhorn: max_iters must be at least 1");
    }
}

Matrix cost_matrix(const Matrix& source, const Matrix& target, CostMetric metric) {
    if (source.cols() != target.cols()) {
        throw DimensionError("cost_matrix: source has " + std::to_string(source.cols()) + " features, target has " +
                             std::to_string(target.cols()));
    }
    switch (metric) {
        case CostMetric::squared_euclidean:
        case CostMetric::euclidean: {
            const Vector src_sq = source.rowwise().squaredNorm();
            const Vector tgt_sq = target.rowwise().squaredNorm();
            Matrix cost = -2.0 * source * target.transpose();
            cost.colwise() += src_sq;
            cost.rowwise() += tgt_sq.transpose();
            cost = cost.cwiseMax(0.0);
            if (metric == CostMetric::euclidean) {
                cost = cost.cwiseSqrt();
            }
            return cost;
        }
        case CostMetric::cosine_distance: {
            const Vector src_norm = source.rowwise().norm();
            const Vector tgt_norm = target.rowwise().norm();
            if ((src_norm.array() == 0.0).any() || (tgt_norm.array() == 0.0).any()) {
                throw InputError("cost_matrix: cosine distance is undefined for a zero-norm row");
            }
            Matrix cosine = source * target.transpose();
            cosine.array().colwise() /= src_norm.array();
            cosine.array().rowwise() /= tgt_norm.transpose().array();
            return (1.0 - cosine.array()).cwiseMax(0.0).matrix();
        }
    }
    throw InputError("cost_matrix: unknown metric");
}

namespace {

// log(sum(exp(v))) for each row of `m`.
Vector row_logsumexp(const Eigen::ArrayXXd& m) {
    const Eigen::ArrayXd max = m.rowwise().maxCoeff();
    return (max + (m.colwise() - max).exp().rowwise().sum().log()).matrix();
}

}  // namespace

SinkhornResult sinkhorn(const Matrix& cost, const SinkhornConfig& cfg) {
    cfg.validate();
    if (cost.rows() != cost.cols() || cost.rows() == 0) {
        throw DimensionError("sinkhorn: cost must be a non-empty square matrix");
    }
    if (!cost.allFinite()) {
        throw InputError("sinkhorn: cost contains non-finite entries");
    }
    const Eigen::Index n = cost.rows();
    const double marginal = 1.0 / static_cast<double>(n);
    const double log_marginal = std::log(marginal);

    double eps = cfg.epsilon;
    if (cfg.epsilon_mode == EpsilonMode::relative_to_mean_cost) {
        const double mean = cost.mean();
        eps = mean > 0.0 ? cfg.epsilon * mean : cfg.epsilon;
    }

    // Scaled log potentials f/eps, g/eps against -C/eps. Iterations run on scalings u, v of the
    // stabilized kernel exp(-C/eps + f + g); whenever a scaling drifts far from 1 it is folded back
    // into the potentials, and a plain log-domain update is used if the kernel underflows.
    // Small eps relative to the cost range is reached through a halving schedule with warm starts.
    Eigen::ArrayXXd log_kernel;
    Eigen::ArrayXd f = Eigen::ArrayXd::Zero(n);
    Eigen::ArrayXd g = Eigen::ArrayXd::Zero(n);
    Eigen::ArrayXd u = Eigen::ArrayXd::Ones(n);
    Eigen::ArrayXd v = Eigen::ArrayXd::Ones(n);
    Matrix kernel;
    bool kernel_valid = false;

    auto absorb = [&] {
        f += u.log();
        g += v.log();
        u.setOnes();
        v.setOnes();
        kernel_valid = false;
    };
    auto log_step = [&] {
        absorb();
        f = log_marginal - row_logsumexp(log_kernel.rowwise() + g.transpose()).array();
        g = log_marginal - row_logsumexp((log_kernel.colwise() + f).transpose()).array();
    };
    constexpr double kAbsorbBound = 1e30;

    SinkhornResult result;
    result.epsilon = eps;
    result.residual = std::numeric_limits<double>::infinity();

    // Runs at most `budget` iterations at the current kernel; returns the iterations used.
    auto solve = [&](std::size_t budget, bool fresh) {
        std::size_t used = 0;
        double residual = std::numeric_limits<double>::infinity();
        for (std::size_t it = 0; it < budget; ++it) {
            if (fresh && it == 0) {
                log_step();
                used = 1;
                continue;
            }
            if (!kernel_valid) {
                kernel = ((log_kernel.colwise() + f).rowwise() + g.transpose()).exp().matrix();
                kernel_valid = true;
            }
            const Eigen::ArrayXd kv = (kernel * v.matrix()).array();
            // Columns are exact after the previous update; rows carry the residual.
            residual = (u * kv - marginal).abs().maxCoeff();
            used = it;
            if (residual < cfg.tolerance) {
                break;
            }
            used = it + 1;
            if (!((kv > 0.0).all())) {
                log_step();
                continue;
            }
            u = marginal / kv;
            const Eigen::ArrayXd ktu = (kernel.transpose() * u.matrix()).array();
            if (!((ktu > 0.0).all())) {
                log_step();
                continue;
            }
            v = marginal / ktu;
            if (u.maxCoeff() > kAbsorbBound || v.maxCoeff() > kAbsorbBound || u.minCoeff() < 1.0 / kAbsorbBound ||
                v.minCoeff() < 1.0 / kAbsorbBound) {
                absorb();
            }
        }
        return used;
    };

    constexpr double kDirectRange = 32.0;
    const double range = cost.maxCoeff() - cost.minCoeff();
    std::vector<double> schedule;
    for (double stage = range / kDirectRange; stage > eps; stage *= 0.5) {
        schedule.push_back(stage);
    }
    schedule.push_back(eps);

    std::size_t remaining = cfg.max_iters;
    double previous = 0.0;
    for (std::size_t k = 0; k < schedule.size() && remaining > 0; ++k) {
        const double stage = schedule[k];
        if (k > 0) {
            absorb();
            f *= previous / stage;
            g *= previous / stage;
        }
        log_kernel = -cost.array() / stage;
        kernel_valid = false;
        const bool last = k + 1 == schedule.size();
        // Intermediate stages only warm-start the next one.
        constexpr std::size_t kStageIters = 100;
        const std::size_t budget =
            last ? remaining
                 : std::min(kStageIters, std::max<std::size_t>(1, remaining / (2 * (schedule.size() - k))));
        remaining -= solve(budget, k == 0);
        previous = stage;
    }
    result.iterations = cfg.max_iters - remaining;

    absorb();
    result.plan = ((log_kernel.colwise() + f).rowwise() + g.transpose()).exp().matrix();
    const double row_residual = (result.plan.rowwise().sum().array() - marginal).abs().maxCoeff();
    const double col_residual = (result.plan.colwise().sum().array() - marginal).abs().maxCoeff();
    result.residual = std::max(row_residual, col_residual);
    result.converged = result.residual < cfg.tolerance;
    return result;
}

double transport_cost(const Matrix& plan, const Matrix& cost) {
    if (plan.rows() != cost.rows() || plan.cols() != cost.cols()) {
        throw DimensionError("transport_cost: plan and cost shapes differ");
    }
    return plan.cwiseProduct(cost).sum();
}

std::vector<Pair> extract_pairs(const Matrix& plan, Rng& rng, PairExtraction mode) {
    std::vector<Pair> pairs;
    pairs.reserve(static_cast<std::size_t>(plan.cols()));
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (Eigen::Index j = 0; j < plan.cols(); ++j) {
        const auto column = plan.col(j);
        if ((column.array() < 0.0).any() || !column.allFinite()) {
            throw InputError("extract_pairs: plan column " + std::to_string(j) + " has negative or non-finite mass");
        }
        const double mass = column.sum();
        if (!(mass > 0.0)) {
            throw InputError("extract_pairs: plan column " + std::to_string(j) + " has no mass");
        }
        Eigen::Index chosen = 0;
        if (mode == PairExtraction::argmax) {
            column.maxCoeff(&chosen);
        } else {
            const double u = uniform(rng) * mass;
            double cumulative = 0.0;
            chosen = plan.rows() - 1;
            for (Eigen::Index i = 0; i < plan.rows(); ++i) {
                cumulative += column[i];
                if (u < cumulative) {
                    chosen = i;
                    break;
                }
            }
            // Guard against landing past the last positive entry through rounding.
            while (column[chosen] == 0.0 && chosen > 0) {
                --chosen;
            }
        }
        pairs.push_back(Pair{static_cast<std::size_t>(chosen), static_cast<std::size_t>(j)});
    }
    return pairs;
}

std::vector<Pair> extract_pairs(const CouplingPlan& plan, Rng& rng, PairExtraction mode) {
    if (plan.source_ids.size() != static_cast<std::size_t>(plan.plan.rows()) ||
        plan.target_ids.size() != static_cast<std::size_t>(plan.plan.cols())) {
        throw DimensionError("extract_pairs: id lists do not match the plan shape");
    }
    auto pairs = extract_pairs(plan.plan, rng, mode);
    for (auto& p : pairs) {
        p = Pair{plan.source_ids[p.source], plan.target_ids[p.target]};
    }
    return pairs;
}

namespace {

std::vector<std::size_t> sample_controls(const std::vector<std::size_t>& pool, std::size_t count, Rng& rng) {
    std::vector<std::size_t> chosen;
    chosen.reserve(count);
    if (pool.size() >= count) {
        std::vector<std::size_t> shuffled = pool;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        chosen.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(count));
    } else {
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        for (std::size_t k = 0; k < count; ++k) {
            chosen.push_back(pool[pick(rng)]);
        }
    }
    return chosen;
}

}  // namespace

PairingMap epoch_pairing(const ExpressionDataset& ds, const PairingOptions& options, Rng& rng, PairingStats* stats) {
    options.sinkhorn.validate();
    ds.require_controls();
    const auto controls = ds.controls_by_cell_type();

    PairingMap result;
    for (const auto& [key, all_targets] : ds.perturbed_groups()) {
        const auto& pool = controls.at(key.cell_type);
        std::vector<std::size_t> targets = all_targets;
        std::size_t chunk = targets.size();
        if (options.max_batch > 0 && options.max_batch < targets.size()) {
            std::shuffle(targets.begin(), targets.end(), rng);
            chunk = options.max_batch;
        }

        auto& pairs = result[key];
        pairs.reserve(targets.size());
        for (std::size_t begin = 0; begin < targets.size(); begin += chunk) {
            const std::size_t end = std::min(begin + chunk, targets.size());
            CouplingPlan plan;
            plan.condition = key;
            plan.target_ids.assign(targets.begin() + static_cast<std::ptrdiff_t>(begin),
                                   targets.begin() + static_cast<std::ptrdiff_t>(end));
            plan.source_ids = sample_controls(pool, plan.target_ids.size(), rng);

            if (options.mode == PairingMode::random) {
                std::shuffle(plan.source_ids.begin(), plan.source_ids.end(), rng);
                for (std::size_t k = 0; k < plan.target_ids.size(); ++k) {
                    pairs.push_back(Pair{plan.source_ids[k], plan.target_ids[k]});
                }
                continue;
            }

            const Matrix cost = cost_matrix(ds.gather(plan.source_ids), ds.gather(plan.target_ids),
                                            options.sinkhorn.metric);
            auto solved = sinkhorn(cost, options.sinkhorn);
            if (stats) {
                ++stats->plans;
                stats->unconverged += solved.converged ? 0 : 1;
                stats->worst_residual = std::max(stats->worst_residual, solved.residual);
            }
            plan.plan = std::move(solved.plan);
            auto extracted = extract_pairs(plan, rng, options.extraction);
            pairs.insert(pairs.end(), extracted.begin(), extracted.end());
        }
    }
    return result;
}

void write_pairs(std::ostream& out, const ExpressionDataset& ds, const PairingMap& pairs) {
    out << "condition,source_id,target_id\n";
    for (const auto& [key, list] : pairs) {
        const std::string condition = ds.vocab.perturbation_name(key.perturbation) + "|" +
                                      ds.vocab.cell_type_name(key.cell_type) + "|" + format_number(key.dosage);
        for (const auto& p : list) {
            out << condition << ',' << ds.cells[p.source].id << ',' << ds.cells[p.target].id << '\n';
        }
    }
}

}  // namespace scbridge
