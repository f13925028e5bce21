#include "scbridge/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "scbridge/errors.hpp"

namespace scbridge {

void TrainConfig::validate() const {
    if (epochs < 1) {
        throw RangeError("train: epochs must be at least 1");
    }
    if (batch_size < 1) {
        throw RangeError("train: batch_size must be at least 1");
    }
    if (arch.hidden_width < 1) {
        throw RangeError("train: hidden_width must be at least 1");
    }
    if (!std::isfinite(arch.activation_skip) || arch.activation_skip < 0.0) {
        throw RangeError("train: activation_skip must be finite and non-negative");
    }
    if (!(ema_decay >= 0.0 && ema_decay < 1.0)) {
        throw RangeError("train: ema_decay must be in [0, 1)");
    }
    optimizer.validate();
    bridge.validate();
    pairing.sinkhorn.validate();
}

BridgeBatch build_batch(const ExpressionDataset& ds, std::span<const Pair> pairs, const BridgeConfig& cfg, Rng& rng) {
    const auto n = static_cast<Eigen::Index>(pairs.size());
    const auto g = static_cast<Eigen::Index>(ds.gene_count());
    BridgeBatch batch;
    batch.x0.resize(n, g);
    batch.xT.resize(n, g);
    batch.x_t.resize(n, g);
    batch.d_t.resize(n, g);
    batch.times.reserve(pairs.size());
    batch.conditions.reserve(pairs.size());

    std::uniform_real_distribution<double> time_dist(0.0, cfg.horizon - cfg.step_size());
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& pair = pairs[static_cast<std::size_t>(r)];
        const Vector x0 = ds.values.row(static_cast<Eigen::Index>(pair.source)).transpose();
        const Vector xT = ds.values.row(static_cast<Eigen::Index>(pair.target)).transpose();
        const double t = time_dist(rng);
        batch.x0.row(r) = x0.transpose();
        batch.xT.row(r) = xT.transpose();
        batch.x_t.row(r) = interpolate(x0, xT, t, cfg, rng).transpose();
        batch.d_t.row(r) = discrete_interpolate(discretize(x0), discretize(xT), t, cfg, rng).transpose();
        batch.times.push_back(t);
        batch.conditions.push_back(ds.cells[pair.target].condition);
    }
    batch.d0 = discretize(batch.x0);
    batch.dT = discretize(batch.xT);
    return batch;
}

BatchLoss accumulate_gradients(BridgeModel& model, const BridgeBatch& batch) {
    const auto n = static_cast<double>(batch.size());
    std::vector<double> scaled_times(batch.times.size());
    std::transform(batch.times.begin(), batch.times.end(), scaled_times.begin(),
                   [&](double t) { return t / model.bridge.horizon; });

    BatchLoss loss;
    {
        ActivationCache cache;
        const Matrix pred =
            model.endpoint_output(model.endpoint.forward(batch.x_t, scaled_times, batch.conditions, &cache), batch.x_t);
        Matrix grad(pred.rows(), pred.cols());
        for (Eigen::Index r = 0; r < pred.rows(); ++r) {
            const Vector p = pred.row(r).transpose();
            const Vector y = batch.xT.row(r).transpose();
            const MaskedLoss row = model.activation ? masked_endpoint_loss(p, y) : unmasked_endpoint_loss(p, y);
            loss.l_cont += row.loss / n;
            loss.degenerate += row.degenerate ? 1 : 0;
            grad.row(r) = row.grad.transpose() / n;
        }
        model.endpoint.backward(cache, grad, batch.conditions);
    }
    if (model.activation) {
        ActivationCache cache;
        const Matrix logits = model.activation_logits(
            model.activation->forward(batch.d_t.cast<double>(), scaled_times, batch.conditions, &cache), batch.d_t);
        Matrix grad(logits.rows(), logits.cols());
        for (Eigen::Index r = 0; r < logits.rows(); ++r) {
            const PosteriorLoss row = posterior_loss(logits.row(r).transpose(), batch.dT.row(r).transpose());
            loss.l_disc += row.loss / n;
            grad.row(r) = row.grad.transpose() / n;
        }
        model.activation->backward(cache, grad, batch.conditions);
    }
    return loss;
}

namespace {

std::string metric_name(CostMetric metric) {
    switch (metric) {
        case CostMetric::squared_euclidean:
            return "squared_euclidean";
        case CostMetric::euclidean:
            return "euclidean";
        case CostMetric::cosine_distance:
            return "cosine_distance";
    }
    return "unknown";
}

}  // namespace

BridgeModel init_model(const ExpressionDataset& dataset, const TrainConfig& cfg, Rng& rng) {
    BridgeModel model;
    model.genes = dataset.genes;
    model.vocab = dataset.vocab;
    model.bridge = cfg.bridge;
    model.arch = cfg.arch;
    model.variant.pairing = cfg.pairing.mode == PairingMode::random ? "random" : "ot";
    model.variant.metric = metric_name(cfg.pairing.sinkhorn.metric);
    model.endpoint = BridgeNetwork::create(dataset.gene_count(), dataset.vocab, cfg.arch, rng);
    if (cfg.use_activation_model) {
        model.activation = BridgeNetwork::create(dataset.gene_count(), dataset.vocab, cfg.arch, rng);
    }
    return model;
}

TrainResult train(const ExpressionDataset& dataset, const TrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    dataset.validate();
    dataset.require_controls();

    Rng rng(cfg.seed);
    TrainResult result;
    result.model = init_model(dataset, cfg, rng);

    std::size_t perturbed = 0;
    for (std::size_t i = 0; i < dataset.cell_count(); ++i) {
        if (dataset.cells[i].is_control()) {
            continue;
        }
        ++perturbed;
        if ((dataset.values.row(static_cast<Eigen::Index>(i)).array() == 0.0).all()) {
            ++result.degenerate_targets;
        }
    }
    if (perturbed == 0) {
        throw DataError("train: dataset has no perturbed cells");
    }
    if (static_cast<double>(result.degenerate_targets) > 0.01 * static_cast<double>(perturbed)) {
        result.warnings.push_back(std::to_string(result.degenerate_targets) + " of " + std::to_string(perturbed) +
                                  " perturbed cells have no expressed gene and contribute no continuous loss");
    }

    const bool averaging = cfg.ema_decay > 0.0;
    BridgeModel averaged = averaging ? result.model : BridgeModel{};

    const auto start = std::chrono::steady_clock::now();
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const PairingMap pairing = epoch_pairing(dataset, cfg.pairing, rng, &result.pairing);
        std::vector<Pair> pairs;
        for (const auto& [key, list] : pairing) {
            pairs.insert(pairs.end(), list.begin(), list.end());
        }
        std::shuffle(pairs.begin(), pairs.end(), rng);

        double sum_cont = 0.0;
        double sum_disc = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t begin = 0; begin < pairs.size(); begin += cfg.batch_size, ++batch_index) {
            const std::size_t end = std::min(begin + cfg.batch_size, pairs.size());
            const std::span<const Pair> slice(pairs.data() + begin, end - begin);
            const BridgeBatch batch = build_batch(dataset, slice, cfg.bridge, rng);
            const BatchLoss loss = accumulate_gradients(result.model, batch);
            if (!std::isfinite(loss.l_cont) || !std::isfinite(loss.l_disc)) {
                throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(batch_index));
            }
            optimizer_step(result.model.endpoint.params, cfg.optimizer);
            if (result.model.activation) {
                optimizer_step(result.model.activation->params, cfg.optimizer);
            }
            if (averaging) {
                ema_update(averaged.endpoint.params, result.model.endpoint.params, cfg.ema_decay);
                if (averaged.activation) {
                    ema_update(averaged.activation->params, result.model.activation->params, cfg.ema_decay);
                }
            }
            const auto weight = static_cast<double>(slice.size());
            sum_cont += loss.l_cont * weight;
            sum_disc += loss.l_disc * weight;
        }

        EpochLog entry;
        entry.epoch = epoch;
        entry.l_cont = sum_cont / static_cast<double>(pairs.size());
        entry.l_disc = sum_disc / static_cast<double>(pairs.size());
        entry.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.log.push_back(entry);
        if (on_epoch) {
            on_epoch(averaging ? averaged : result.model, entry);
        }
    }
    if (averaging) {
        result.model = std::move(averaged);
    }
    if (result.pairing.unconverged > 0) {
        result.warnings.push_back(std::to_string(result.pairing.unconverged) + " of " +
                                  std::to_string(result.pairing.plans) +
                                  " Sinkhorn plans stopped at max_iters; worst marginal residual " +
                                  format_number(result.pairing.worst_residual));
    }
    return result;
}

Generation generate(const BridgeModel& model, const Matrix& controls, const ConditionKey& condition, Rng& rng) {
    model.vocab.check(condition);
    if (static_cast<std::size_t>(controls.cols()) != model.gene_count()) {
        throw DimensionError("generate: controls have " + std::to_string(controls.cols()) + " genes, model has " +
                             std::to_string(model.gene_count()));
    }
    Generation out;
    out.endpoints = sample_endpoint(controls, model.endpoint_predictor(), condition, model.bridge, rng);
    if (model.activation) {
        out.activations = sample_activation(discretize(controls), model.activation_predictor(), condition,
                                            model.bridge, rng);
        out.values = out.endpoints.cwiseProduct(out.activations.cast<double>());
    } else {
        out.activations = BinaryMatrix::Ones(controls.rows(), controls.cols());
        out.values = out.endpoints;
    }
    return out;
}

std::vector<std::size_t> sample_control_rows(const ExpressionDataset& ds, std::uint32_t cell_type, std::size_t count,
                                             Rng& rng) {
    const auto controls = ds.controls_by_cell_type();
    auto it = controls.find(cell_type);
    if (it == controls.end()) {
        throw DataError("no control cells for cell type " + ds.vocab.cell_type_name(cell_type));
    }
    std::vector<std::size_t> pool = it->second;
    std::vector<std::size_t> chosen;
    if (pool.size() >= count) {
        std::shuffle(pool.begin(), pool.end(), rng);
        chosen.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
    } else {
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        for (std::size_t k = 0; k < count; ++k) {
            chosen.push_back(pool[pick(rng)]);
        }
    }
    return chosen;
}

EvaluationReport evaluate(const BridgeModel& model, const ExpressionDataset& test, const ExpressionDataset& train,
                          std::uint64_t seed, bool self_test) {
    if (test.cell_count() == 0) {
        throw DataError("evaluate: test set is empty");
    }
    if (test.genes != model.genes || train.genes != model.genes) {
        throw DataError("evaluate: dataset genes do not match the model");
    }
    Rng rng(seed);
    const auto train_controls = train.controls_by_cell_type();

    EvaluationReport report;
    for (const auto& [key, rows] : test.perturbed_groups()) {
        // Test and train share a vocabulary; translate through names in case they were loaded separately.
        ConditionKey model_key = key;
        model_key.cell_type = model.vocab.cell_type_id(test.vocab.cell_type_name(key.cell_type));
        model_key.perturbation = model.vocab.perturbation_id(test.vocab.perturbation_name(key.perturbation));
        const std::uint32_t train_type = train.vocab.cell_type_id(test.vocab.cell_type_name(key.cell_type));

        auto pool = train_controls.find(train_type);
        if (pool == train_controls.end()) {
            throw DataError("evaluate: no training controls for cell type " + test.vocab.cell_type_name(key.cell_type));
        }
        const Matrix truth = test.gather(rows);
        const Matrix control = train.gather(pool->second);
        const auto control_rows = sample_control_rows(train, train_type, rows.size(), rng);
        const Matrix start = train.gather(control_rows);

        ConditionReport entry;
        entry.condition = model_key;
        const Matrix pred = self_test ? truth : generate(model, start, model_key, rng).values;
        entry.metrics = compute_metrics(pred, truth, control, rng);
        entry.control_e_distance = e_distance(start, truth);
        report.conditions.push_back(entry);
    }
    aggregate(report);
    return report;
}

void aggregate(EvaluationReport& report) {
    report.mean = MetricsReport{};
    report.stddev = MetricsReport{};
    if (report.conditions.empty()) {
        return;
    }
    auto stats = [&](auto getter) {
        std::vector<double> values;
        for (const auto& c : report.conditions) {
            if (const std::optional<double> v = getter(c.metrics)) {
                values.push_back(*v);
            }
        }
        if (values.empty()) {
            return std::pair<std::optional<double>, std::optional<double>>{};
        }
        const double count = static_cast<double>(values.size());
        const double mean = std::accumulate(values.begin(), values.end(), 0.0) / count;
        double sq = 0.0;
        for (double v : values) {
            sq += (v - mean) * (v - mean);
        }
        return std::pair<std::optional<double>, std::optional<double>>{mean, std::sqrt(sq / count)};
    };
    auto fill = [&](auto getter, auto setter) {
        auto [mean, sd] = stats(getter);
        setter(report.mean, mean);
        setter(report.stddev, sd);
    };
    fill([](const MetricsReport& m) { return std::optional<double>(m.e_distance); },
         [](MetricsReport& m, std::optional<double> v) { m.e_distance = v.value_or(0.0); });
    fill([](const MetricsReport& m) { return std::optional<double>(m.emd_all); },
         [](MetricsReport& m, std::optional<double> v) { m.emd_all = v.value_or(0.0); });
    fill([](const MetricsReport& m) { return std::optional<double>(m.emd_de20); },
         [](MetricsReport& m, std::optional<double> v) { m.emd_de20 = v.value_or(0.0); });
    fill([](const MetricsReport& m) { return std::optional<double>(m.emd_de40); },
         [](MetricsReport& m, std::optional<double> v) { m.emd_de40 = v.value_or(0.0); });
    fill([](const MetricsReport& m) { return m.activation_pcc_all; },
         [](MetricsReport& m, std::optional<double> v) { m.activation_pcc_all = v; });
    fill([](const MetricsReport& m) { return m.activation_pcc_de20; },
         [](MetricsReport& m, std::optional<double> v) { m.activation_pcc_de20 = v; });
    fill([](const MetricsReport& m) { return m.activation_pcc_de40; },
         [](MetricsReport& m, std::optional<double> v) { m.activation_pcc_de40 = v; });
    std::size_t n_pred = 0;
    std::size_t n_true = 0;
    for (const auto& c : report.conditions) {
        n_pred += c.metrics.n_pred;
        n_true += c.metrics.n_true;
    }
    report.mean.n_pred = n_pred;
    report.mean.n_true = n_true;
}

}  // namespace scbridge
