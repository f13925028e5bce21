#include "commands.hpp"

#include <fstream>
#include <iostream>

#include <scbridge/scbridge.hpp>

namespace scbridge::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

fs::path output_dir(const Config& cfg) {
    const fs::path dir = cfg.get_string("out");
    fs::create_directories(dir);
    return dir;
}

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write '" + path.string() + "'");
    }
    return out;
}

void write_config(const fs::path& dir, const Config& cfg) {
    auto out = open_output(dir / "config.json");
    out << cfg.dump().dump(2) << '\n';
}

template <class Enum>
Enum parse_choice(const Config& cfg, const std::string& key, std::initializer_list<std::pair<const char*, Enum>> options) {
    const std::string value = cfg.get_string(key);
    std::string allowed;
    for (const auto& [name, e] : options) {
        if (value == name) {
            return e;
        }
        allowed += allowed.empty() ? name : std::string(", ") + name;
    }
    throw UsageError("setting '" + key + "' must be one of " + allowed + ", got '" + value + "'");
}

std::size_t get_size(const Config& cfg, const std::string& key) { return static_cast<std::size_t>(cfg.get_uint(key)); }

TrainConfig train_config(const Config& cfg) {
    TrainConfig tc;
    tc.seed = cfg.get_uint("seed");
    tc.epochs = get_size(cfg, "train.epochs");
    tc.batch_size = get_size(cfg, "train.batch_size");
    tc.use_activation_model = cfg.get_bool("train.use_activation_model");
    tc.ema_decay = cfg.get_double("train.ema_decay");

    tc.optimizer.learning_rate = cfg.get_double("optimizer.learning_rate");
    tc.optimizer.beta1 = cfg.get_double("optimizer.beta1");
    tc.optimizer.beta2 = cfg.get_double("optimizer.beta2");
    tc.optimizer.epsilon = cfg.get_double("optimizer.epsilon");
    tc.optimizer.weight_decay = cfg.get_double("optimizer.weight_decay");

    tc.bridge.horizon = cfg.get_double("bridge.horizon");
    tc.bridge.sigma = cfg.get_double("bridge.sigma");
    tc.bridge.steps = get_size(cfg, "bridge.steps");

    tc.arch.hidden_width = get_size(cfg, "arch.hidden_width");
    tc.arch.hidden_layers = get_size(cfg, "arch.hidden_layers");
    tc.arch.residual_endpoint = cfg.get_bool("arch.residual_endpoint");
    tc.arch.activation_skip = cfg.get_double("arch.activation_skip");

    tc.pairing.mode = parse_choice<PairingMode>(cfg, "pairing.mode",
                                                {{"ot", PairingMode::optimal_transport}, {"random", PairingMode::random}});
    tc.pairing.extraction = parse_choice<PairExtraction>(
        cfg, "pairing.extraction", {{"sample", PairExtraction::sample}, {"argmax", PairExtraction::argmax}});
    tc.pairing.max_batch = get_size(cfg, "pairing.max_batch");
    tc.pairing.sinkhorn.epsilon = cfg.get_double("sinkhorn.epsilon");
    tc.pairing.sinkhorn.epsilon_mode = parse_choice<EpsilonMode>(
        cfg, "sinkhorn.epsilon_mode",
        {{"relative", EpsilonMode::relative_to_mean_cost}, {"absolute", EpsilonMode::absolute}});
    tc.pairing.sinkhorn.max_iters = get_size(cfg, "sinkhorn.max_iters");
    tc.pairing.sinkhorn.tolerance = cfg.get_double("sinkhorn.tolerance");
    tc.pairing.sinkhorn.metric = parse_choice<CostMetric>(cfg, "sinkhorn.metric",
                                                          {{"squared_euclidean", CostMetric::squared_euclidean},
                                                           {"euclidean", CostMetric::euclidean},
                                                           {"cosine_distance", CostMetric::cosine_distance}});
    try {
        tc.validate();
    } catch (const RangeError& e) {
        throw UsageError(e.what());
    }
    return tc;
}

ExpressionDataset load_dataset(const Config& cfg, const std::string& key) {
    const auto hint = parse_choice<ProvenanceHint>(
        cfg, "data.provenance",
        {{"detect", ProvenanceHint::detect}, {"raw", ProvenanceHint::raw}, {"log1p", ProvenanceHint::log1p}});
    return load_matrix(cfg.get_string(key), hint);
}

// Re-expresses `key` from `from`'s vocabulary in `to`'s.
ConditionKey translate(const ConditionKey& key, const Vocabulary& from, const Vocabulary& to) {
    ConditionKey out = key;
    out.cell_type = to.cell_type_id(from.cell_type_name(key.cell_type));
    out.perturbation = to.perturbation_id(from.perturbation_name(key.perturbation));
    return out;
}

ConditionKey parse_condition(const std::string& text, const Vocabulary& vocab) {
    const auto first = text.find('|');
    const auto second = first == std::string::npos ? std::string::npos : text.find('|', first + 1);
    if (second == std::string::npos) {
        throw UsageError("generate.condition must look like 'perturbation|cell_type|dosage', got '" + text + "'");
    }
    ConditionKey key;
    key.perturbation = vocab.perturbation_id(text.substr(0, first));
    key.cell_type = vocab.cell_type_id(text.substr(first + 1, second - first - 1));
    try {
        key.dosage = std::stod(text.substr(second + 1));
    } catch (const std::exception&) {
        throw UsageError("generate.condition has an unreadable dosage: '" + text + "'");
    }
    vocab.check(key);
    return key;
}

void write_log(std::ostream& out, const EpochLog& entry) {
    out << entry.epoch << ',' << format_number(entry.l_cont) << ',' << format_number(entry.l_disc) << ','
        << format_number(entry.wallclock_s) << '\n';
}

}  // namespace

void cmd_synth(const Config& cfg) {
    SyntheticSpec spec;
    spec.seed = cfg.get_uint("seed");
    spec.n_genes = get_size(cfg, "synth.n_genes");
    spec.n_cells_per_condition = get_size(cfg, "synth.n_cells_per_condition");
    spec.n_conditions = get_size(cfg, "synth.n_conditions");
    spec.n_cell_types = get_size(cfg, "synth.n_cell_types");
    spec.cluster_count = get_size(cfg, "synth.cluster_count");
    spec.shift_magnitude = cfg.get_double("synth.shift_magnitude");
    spec.sparsity = cfg.get_double("synth.sparsity");
    spec.dosages = cfg.get_doubles("synth.dosages");
    try {
        spec.validate();
    } catch (const RangeError& e) {
        throw UsageError(e.what());
    }

    const fs::path dir = output_dir(cfg);
    const SyntheticData data = synth_generate(spec);
    save_matrix(dir / "expression.csv", data.dataset);
    auto shifts = open_output(dir / "shifts.csv");
    write_shifts(shifts, data);
    write_config(dir, cfg);
    std::cout << "wrote " << data.dataset.cell_count() << " cells x " << data.dataset.gene_count() << " genes to "
              << (dir / "expression.csv").string() << '\n';
}

void cmd_train(const Config& cfg) {
    const TrainConfig tc = train_config(cfg);
    SplitOptions so;
    so.mode = parse_choice<SplitMode>(
        cfg, "split.mode",
        {{"by_condition_group", SplitMode::by_condition_group}, {"by_perturbation", SplitMode::by_perturbation}});
    so.fraction = cfg.get_double("split.fraction");
    so.keep_vocabulary_seen = cfg.get_bool("split.keep_vocabulary_seen");
    so.seed = cfg.has("split.seed") ? cfg.get_uint("split.seed") : tc.seed;
    const std::size_t checkpoint_every = get_size(cfg, "train.checkpoint_every");
    const std::size_t hvg = get_size(cfg, "data.hvg");

    ExpressionDataset ds = load_dataset(cfg, "data.path");
    if (ds.provenance == Provenance::raw) {
        NormalizeResult norm = log1p_normalize(ds);
        if (norm.dropped_cells > 0) {
            std::cerr << "warning: dropped " << norm.dropped_cells << " cells with zero total count\n";
        }
        ds = std::move(norm.dataset);
    }
    if (hvg > 0) {
        ds = select_hvg(ds, hvg);
    }
    ds.validate();
    ds.require_controls();

    const fs::path dir = output_dir(cfg);
    const SplitResult parts = split(ds, so);
    save_matrix(dir / "split_train.csv", parts.train);
    save_matrix(dir / "split_test.csv", parts.test);
    write_config(dir, cfg);

    auto log = open_output(dir / "train_log.csv");
    log << "epoch,l_cont,l_disc,wallclock_s\n";
    const auto on_epoch = [&](const BridgeModel& model, const EpochLog& entry) {
        write_log(log, entry);
        log.flush();
        if (checkpoint_every > 0 && entry.epoch % checkpoint_every == 0 && entry.epoch < tc.epochs) {
            model.save(dir / "checkpoints" / ("epoch_" + std::to_string(entry.epoch)));
        }
    };
    const TrainResult result = train(parts.train, tc, on_epoch);
    result.model.save(dir / "model");
    for (const auto& warning : result.warnings) {
        std::cerr << "warning: " << warning << '\n';
    }
    const EpochLog& last = result.log.back();
    std::cout << "trained " << tc.epochs << " epochs on " << parts.train.cell_count() << " cells; final l_cont "
              << format_number(last.l_cont) << ", l_disc " << format_number(last.l_disc) << '\n';
}

void cmd_generate(const Config& cfg) {
    const std::uint64_t seed = cfg.get_uint("seed");
    const BridgeModel model = BridgeModel::load(cfg.get_string("model.path"));
    const ExpressionDataset controls = load_dataset(cfg, "generate.controls");
    if (controls.genes != model.genes) {
        throw DataError("generate: control genes do not match the model");
    }

    // (model condition, number of cells) to generate.
    std::vector<std::pair<ConditionKey, std::size_t>> jobs;
    if (cfg.has("generate.test")) {
        const ExpressionDataset test = load_dataset(cfg, "generate.test");
        for (const auto& [key, rows] : test.perturbed_groups()) {
            jobs.emplace_back(translate(key, test.vocab, model.vocab), rows.size());
        }
    } else if (cfg.has("generate.condition")) {
        const ConditionKey key = parse_condition(cfg.get_string("generate.condition"), model.vocab);
        jobs.emplace_back(key, get_size(cfg, "generate.count"));
    } else {
        throw UsageError("generate needs generate.test or generate.condition");
    }

    Rng rng(seed);
    ExpressionDataset predictions;
    predictions.genes = model.genes;
    predictions.vocab = model.vocab;
    predictions.provenance = Provenance::log1p;
    ExpressionDataset activations = predictions;
    std::vector<Matrix> value_blocks;
    std::vector<Matrix> activation_blocks;
    std::size_t total = 0;
    for (const auto& [key, requested] : jobs) {
        if (key.is_control()) {
            throw UsageError("generate: cannot generate the control condition");
        }
        const std::string type_name = model.vocab.cell_type_name(key.cell_type);
        if (!controls.vocab.has_cell_type(type_name)) {
            throw DataError("generate: no control cells for cell type " + type_name);
        }
        const std::uint32_t type = controls.vocab.cell_type_id(type_name);
        std::size_t count = requested;
        if (count == 0) {
            const auto pools = controls.controls_by_cell_type();
            const auto it = pools.find(type);
            count = it == pools.end() ? 0 : it->second.size();
        }
        const auto rows = sample_control_rows(controls, type, count, rng);
        const Generation gen = generate(model, controls.gather(rows), key, rng);
        value_blocks.push_back(gen.values);
        activation_blocks.push_back(gen.activations.cast<double>());
        for (std::size_t k = 0; k < count; ++k, ++total) {
            const CellRecord cell{"gen" + std::to_string(total), key};
            predictions.cells.push_back(cell);
            activations.cells.push_back(cell);
        }
    }
    predictions.values.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(model.gene_count()));
    activations.values.resize(predictions.values.rows(), predictions.values.cols());
    Eigen::Index row = 0;
    for (std::size_t b = 0; b < value_blocks.size(); ++b) {
        predictions.values.middleRows(row, value_blocks[b].rows()) = value_blocks[b];
        activations.values.middleRows(row, value_blocks[b].rows()) = activation_blocks[b];
        row += value_blocks[b].rows();
    }

    const fs::path dir = output_dir(cfg);
    save_matrix(dir / "predictions.csv", predictions);
    save_matrix(dir / "activations.csv", activations);
    write_config(dir, cfg);
    std::cout << "generated " << total << " cells for " << jobs.size() << " condition(s)\n";
}

void cmd_evaluate(const Config& cfg) {
    const std::uint64_t seed = cfg.get_uint("seed");
    const bool self_test = cfg.get_bool("evaluate.self_test");
    const BridgeModel model = BridgeModel::load(cfg.get_string("model.path"));
    const ExpressionDataset test = load_dataset(cfg, "evaluate.test");
    const ExpressionDataset train = load_dataset(cfg, "evaluate.train");
    const EvaluationReport report = evaluate(model, test, train, seed, self_test);

    const std::string tag = self_test ? "self_test" : model.variant_tag();
    auto condition_name = [&](const ConditionKey& key) {
        return model.vocab.perturbation_name(key.perturbation) + "|" + model.vocab.cell_type_name(key.cell_type) +
               "|" + format_number(key.dosage);
    };

    ordered_json doc;
    doc["variant"] = tag;
    doc["conditions"] = ordered_json::array();
    for (const auto& c : report.conditions) {
        ordered_json entry;
        entry["condition"] = condition_name(c.condition);
        entry["metrics"] = ordered_json::parse(to_json(c.metrics));
        entry["control_e_distance"] = c.control_e_distance;
        doc["conditions"].push_back(std::move(entry));
    }
    doc["mean"] = ordered_json::parse(to_json(report.mean));
    doc["std"] = ordered_json::parse(to_json(report.stddev));

    const fs::path dir = output_dir(cfg);
    {
        auto out = open_output(dir / ("metrics_" + tag + ".json"));
        out << doc.dump(2) << '\n';
    }
    {
        auto out = open_output(dir / ("metrics_" + tag + ".csv"));
        out << "condition," << csv_header() << '\n';
        for (const auto& c : report.conditions) {
            out << condition_name(c.condition) << ',' << csv_row(c.metrics) << '\n';
        }
        out << "mean," << csv_row(report.mean) << '\n';
        out << "std," << csv_row(report.stddev) << '\n';
    }
    write_config(dir, cfg);
    std::cout << "evaluated " << report.conditions.size() << " condition(s); mean e_distance "
              << format_number(report.mean.e_distance) << '\n';
}

}  // namespace scbridge::cli
