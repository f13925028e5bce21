#include "scbridge/model.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "scbridge/checkpoint.hpp"
#include "scbridge/errors.hpp"

namespace scbridge {

namespace {

constexpr int kModelFormat = 1;

}  // namespace

RowVector time_features(double t, double horizon) {
    constexpr std::size_t n_freq = kTimeFeatures / 2;
    const double s = t / horizon;
    RowVector out(static_cast<Eigen::Index>(kTimeFeatures));
    for (std::size_t k = 0; k < n_freq; ++k) {
        const double freq = std::pow(1000.0, static_cast<double>(k) / static_cast<double>(n_freq - 1));
        out[static_cast<Eigen::Index>(2 * k)] = std::sin(freq * s);
        out[static_cast<Eigen::Index>(2 * k + 1)] = std::cos(freq * s);
    }
    return out;
}

BridgeNetwork BridgeNetwork::create(std::size_t n_genes, const Vocabulary& vocab, const ArchitectureConfig& arch,
                                    Rng& rng) {
    MlpShape shape;
    shape.input_width = n_genes + kTimeFeatures + kEmbeddingWidth;
    shape.hidden_widths.assign(arch.hidden_layers, arch.hidden_width);
    shape.output_width = n_genes;
    BridgeNetwork net;
    net.params = init_mlp(shape, rng);
    net.tables = add_condition_tables(net.params, vocab, rng);
    return net;
}

Matrix BridgeNetwork::assemble_input(const Matrix& states, std::span<const double> times,
                                     std::span<const ConditionKey> conditions) const {
    const auto n_genes = static_cast<Eigen::Index>(gene_count());
    if (states.cols() != n_genes) {
        throw DimensionError("predictor expects " + std::to_string(n_genes) + " genes, got " +
                             std::to_string(states.cols()));
    }
    if (times.size() != static_cast<std::size_t>(states.rows()) ||
        conditions.size() != static_cast<std::size_t>(states.rows())) {
        throw DimensionError("predictor: times and conditions must have one entry per row");
    }
    const Eigen::Index width = n_genes + static_cast<Eigen::Index>(kTimeFeatures + kEmbeddingWidth);
    Matrix input(states.rows(), width);
    input.leftCols(n_genes) = states;
    // Condition and time are usually shared across a batch; reuse the previous row's features when they are.
    RowVector time_row;
    RowVector embed_row;
    for (Eigen::Index r = 0; r < states.rows(); ++r) {
        const auto idx = static_cast<std::size_t>(r);
        if (r == 0 || times[idx] != times[idx - 1]) {
            time_row = time_features(times[idx], 1.0);
        }
        if (r == 0 || !(conditions[idx] == conditions[idx - 1])) {
            embed_row = embed(conditions[idx], params, tables);
        }
        input.block(r, n_genes, 1, static_cast<Eigen::Index>(kTimeFeatures)) = time_row;
        input.block(r, n_genes + static_cast<Eigen::Index>(kTimeFeatures), 1,
                    static_cast<Eigen::Index>(kEmbeddingWidth)) = embed_row;
    }
    return input;
}

Matrix BridgeNetwork::forward(const Matrix& states, std::span<const double> times,
                              std::span<const ConditionKey> conditions, ActivationCache* cache) const {
    return scbridge::forward(params, assemble_input(states, times, conditions), cache);
}

void BridgeNetwork::backward(const ActivationCache& cache, const Matrix& output_grad,
                             std::span<const ConditionKey> conditions) {
    const Matrix input_grad = scbridge::backward(params, cache, output_grad);
    if (conditions.size() != static_cast<std::size_t>(input_grad.rows())) {
        throw DimensionError("backward: one condition per row required");
    }
    const Eigen::Index offset = input_grad.cols() - static_cast<Eigen::Index>(kEmbeddingWidth);
    for (Eigen::Index r = 0; r < input_grad.rows(); ++r) {
        embed_backward(conditions[static_cast<std::size_t>(r)],
                       input_grad.block(r, offset, 1, static_cast<Eigen::Index>(kEmbeddingWidth)), params, tables);
    }
}

Matrix BridgeModel::predict_endpoint(double t, const Matrix& x_t, const ConditionKey& condition) const {
    vocab.check(condition);
    const std::vector<double> times(static_cast<std::size_t>(x_t.rows()), t / bridge.horizon);
    const std::vector<ConditionKey> conditions(static_cast<std::size_t>(x_t.rows()), condition);
    return endpoint_output(endpoint.forward(x_t, times, conditions), x_t);
}

Matrix BridgeModel::endpoint_output(const Matrix& network_output, const Matrix& x_t) const {
    if (!arch.residual_endpoint) {
        return network_output;
    }
    return network_output + x_t;
}

Matrix BridgeModel::activation_logits(const Matrix& network_output, const BinaryMatrix& d_t) const {
    if (arch.activation_skip == 0.0) {
        return network_output;
    }
    return (network_output.array() + arch.activation_skip * (2.0 * d_t.cast<double>().array() - 1.0)).matrix();
}

Matrix BridgeModel::predict_activation(double t, const BinaryMatrix& d_t, const ConditionKey& condition) const {
    if (!activation) {
        throw StateError("model has no activation predictor");
    }
    vocab.check(condition);
    const std::vector<double> times(static_cast<std::size_t>(d_t.rows()), t / bridge.horizon);
    const std::vector<ConditionKey> conditions(static_cast<std::size_t>(d_t.rows()), condition);
    const Matrix logits = activation_logits(activation->forward(d_t.cast<double>(), times, conditions), d_t);
    return logits.unaryExpr([](double z) { return sigmoid(z); });
}

EndpointPredictor BridgeModel::endpoint_predictor() const {
    return [this](double t, const Matrix& x_t, const ConditionKey& c) { return predict_endpoint(t, x_t, c); };
}

ActivationPredictor BridgeModel::activation_predictor() const {
    return [this](double t, const BinaryMatrix& d_t, const ConditionKey& c) { return predict_activation(t, d_t, c); };
}

std::string BridgeModel::variant_tag() const {
    std::string tag;
    if (variant.pairing == "random") {
        tag = "random_pairing";
    } else if (variant.metric != "squared_euclidean") {
        tag = "ot_" + variant.metric;
    }
    if (!activation) {
        tag += tag.empty() ? "no_discrete" : "_no_discrete";
    }
    return tag.empty() ? "full" : tag;
}

namespace {

void write_params(const std::filesystem::path& path, const ParameterSet& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write checkpoint '" + path.string() + "'");
    }
    save_parameters(out, params);
}

ParameterSet read_params(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open checkpoint '" + path.string() + "'");
    }
    return load_parameters(in);
}

}  // namespace

void BridgeModel::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json meta;
    meta["format"] = kModelFormat;
    meta["genes"] = genes;
    meta["bridge"] = {{"horizon", bridge.horizon}, {"sigma", bridge.sigma}, {"steps", bridge.steps}};
    meta["architecture"] = {{"hidden_width", arch.hidden_width},
                            {"hidden_layers", arch.hidden_layers},
                            {"residual_endpoint", arch.residual_endpoint},
                            {"activation_skip", arch.activation_skip}};
    meta["variant"] = {{"pairing", variant.pairing}, {"metric", variant.metric}};
    meta["has_activation_model"] = activation.has_value();
    {
        std::ofstream out(dir / "model.json", std::ios::binary);
        if (!out) {
            throw DataError("cannot write '" + (dir / "model.json").string() + "'");
        }
        out << meta.dump(2) << '\n';
    }
    {
        std::ofstream out(dir / "vocab.txt", std::ios::binary);
        vocab.save(out);
    }
    write_params(dir / "endpoint.bin", endpoint.params);
    if (activation) {
        write_params(dir / "activation.bin", activation->params);
    }
}

BridgeModel BridgeModel::load(const std::filesystem::path& dir) {
    std::ifstream meta_in(dir / "model.json");
    if (!meta_in) {
        throw DataError("cannot open checkpoint '" + (dir / "model.json").string() + "'");
    }
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(meta_in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed '" + (dir / "model.json").string() + "': " + e.what());
    }
    if (meta.value("format", 0) != kModelFormat) {
        throw DataError("unsupported checkpoint format in '" + dir.string() + "'");
    }

    BridgeModel model;
    try {
        model.genes = meta.at("genes").get<std::vector<std::string>>();
        model.bridge.horizon = meta.at("bridge").at("horizon").get<double>();
        model.bridge.sigma = meta.at("bridge").at("sigma").get<double>();
        model.bridge.steps = meta.at("bridge").at("steps").get<std::size_t>();
        model.arch.hidden_width = meta.at("architecture").at("hidden_width").get<std::size_t>();
        model.arch.hidden_layers = meta.at("architecture").at("hidden_layers").get<std::size_t>();
        model.arch.residual_endpoint = meta.at("architecture").at("residual_endpoint").get<bool>();
        model.arch.activation_skip = meta.at("architecture").at("activation_skip").get<double>();
        model.variant.pairing = meta.at("variant").at("pairing").get<std::string>();
        model.variant.metric = meta.at("variant").at("metric").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError("incomplete '" + (dir / "model.json").string() + "': " + e.what());
    }
    {
        std::ifstream vocab_in(dir / "vocab.txt");
        if (!vocab_in) {
            throw DataError("cannot open '" + (dir / "vocab.txt").string() + "'");
        }
        model.vocab = Vocabulary::load(vocab_in);
    }
    model.endpoint.params = read_params(dir / "endpoint.bin");
    if (meta.value("has_activation_model", false)) {
        BridgeNetwork net;
        net.params = read_params(dir / "activation.bin");
        model.activation = std::move(net);
    }
    const std::size_t expected_input = model.genes.size() + kTimeFeatures + kEmbeddingWidth;
    auto check = [&](const BridgeNetwork& net, const char* name) {
        if (net.params.input_width() != expected_input || net.params.output_width() != model.genes.size() ||
            net.params.embeddings.size() != 3) {
            throw DataError(std::string("checkpoint ") + name + " network does not match model.json");
        }
    };
    check(model.endpoint, "endpoint");
    if (model.activation) {
        check(*model.activation, "activation");
    }
    return model;
}

}  // namespace scbridge
