#include <doctest.h>

#include "helpers.hpp"

using namespace scbridge;

namespace {

SyntheticSpec tiny_spec(double shift = 2.0) {
    SyntheticSpec spec;
    spec.n_genes = 8;
    spec.n_cells_per_condition = 24;
    spec.n_conditions = 2;
    spec.n_cell_types = 2;
    spec.shift_magnitude = shift;
    return spec;
}

TrainConfig tiny_config(std::size_t epochs) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.arch.hidden_width = 16;
    cfg.arch.hidden_layers = 2;
    return cfg;
}

// Networks whose output ignores the input: zero weights, chosen output bias.
BridgeNetwork constant_network(const Matrix& bias, const Vocabulary& vocab, Rng& rng) {
    ArchitectureConfig arch;
    arch.hidden_width = 4;
    arch.hidden_layers = 1;
    BridgeNetwork net = BridgeNetwork::create(static_cast<std::size_t>(bias.cols()), vocab, arch, rng);
    for (auto& layer : net.params.layers) {
        layer.weight.value.setZero();
    }
    net.params.layers.back().bias.value = bias;
    return net;
}

}  // namespace

TEST_SUITE("training") {
    TEST_CASE("batches pair the discrete tuple with its endpoints") {
        const ExpressionDataset ds = synth_generate(tiny_spec()).dataset;
        Rng rng(1);
        const PairingMap pairing = epoch_pairing(ds, PairingOptions{}, rng);
        const auto& pairs = pairing.begin()->second;
        BridgeConfig cfg;
        const BridgeBatch batch = build_batch(ds, pairs, cfg, rng);
        CHECK(batch.size() == pairs.size());
        CHECK(batch.x0.rows() == static_cast<Eigen::Index>(pairs.size()));
        CHECK(batch.conditions.size() == pairs.size());
        CHECK(batch.d0 == discretize(batch.x0));
        CHECK(batch.dT == discretize(batch.xT));
        for (double t : batch.times) {
            CHECK(t >= 0.0);
            CHECK(t <= cfg.horizon - cfg.step_size());
        }
    }

    TEST_CASE("training is deterministic for a fixed seed") {
        const ExpressionDataset ds = synth_generate(tiny_spec()).dataset;
        const TrainConfig cfg = tiny_config(3);
        const TrainResult a = train(ds, cfg);
        const TrainResult b = train(ds, cfg);
        CHECK(a.model.endpoint.params.layers[0].weight.value == b.model.endpoint.params.layers[0].weight.value);
        CHECK(a.model.activation->params.layers[1].bias.value == b.model.activation->params.layers[1].bias.value);
        REQUIRE(a.log.size() == 3);
        for (std::size_t k = 0; k < 3; ++k) {
            CHECK(a.log[k].l_cont == b.log[k].l_cont);
            CHECK(a.log[k].l_disc == b.log[k].l_disc);
            CHECK(a.log[k].total() == a.log[k].l_cont + a.log[k].l_disc);
        }
        TrainConfig other = cfg;
        other.seed = 1;
        CHECK(train(ds, other).model.endpoint.params.layers[0].weight.value !=
              a.model.endpoint.params.layers[0].weight.value);
    }

    TEST_CASE("null shift trains with finite, non-increasing loss") {
        const ExpressionDataset ds = synth_generate(tiny_spec(0.0)).dataset;
        int improved = 0;
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            TrainConfig cfg = tiny_config(10);
            cfg.seed = seed;
            const TrainResult r = train(ds, cfg);
            for (const auto& e : r.log) {
                CHECK(std::isfinite(e.l_cont));
                CHECK(std::isfinite(e.l_disc));
            }
            improved += r.log.back().l_cont <= r.log.front().l_cont ? 1 : 0;
        }
        CHECK(improved >= 2);
    }

    TEST_CASE("batch larger than the data and the no-discrete variant") {
        const ExpressionDataset ds = synth_generate(tiny_spec()).dataset;
        TrainConfig cfg = tiny_config(1);
        cfg.batch_size = 100000;
        cfg.use_activation_model = false;
        const TrainResult r = train(ds, cfg);
        CHECK(r.log.size() == 1);
        CHECK_FALSE(r.model.activation.has_value());
        CHECK(r.log[0].l_disc == 0.0);
        CHECK(r.model.variant_tag() == "no_discrete");
    }

    TEST_CASE("invalid training configuration") {
        const ExpressionDataset ds = synth_generate(tiny_spec()).dataset;
        TrainConfig cfg = tiny_config(0);
        CHECK_THROWS_AS(train(ds, cfg), RangeError);
        cfg = tiny_config(1);
        cfg.batch_size = 0;
        CHECK_THROWS_AS(train(ds, cfg), RangeError);
        cfg = tiny_config(1);
        cfg.ema_decay = 1.0;
        CHECK_THROWS_AS(train(ds, cfg), RangeError);
        cfg = tiny_config(1);
        cfg.arch.activation_skip = -1.0;
        CHECK_THROWS_AS(train(ds, cfg), RangeError);
    }

    TEST_CASE("epoch callback sees every epoch") {
        const ExpressionDataset ds = synth_generate(tiny_spec()).dataset;
        std::vector<std::size_t> seen;
        train(ds, tiny_config(4), [&](const BridgeModel& m, const EpochLog& e) {
            CHECK(m.gene_count() == ds.gene_count());
            seen.push_back(e.epoch);
        });
        CHECK(seen == std::vector<std::size_t>{1, 2, 3, 4});
    }

    TEST_CASE("generation composes the two samplers") {
        Vocabulary vocab;
        vocab.add_cell_type("a");
        vocab.add_perturbation("p");
        Rng rng(2);
        Matrix target(1, 4);
        target << 1.5, -2.0, 3.0, 0.25;
        Matrix logits(1, 4);
        logits << 60.0, -60.0, 60.0, 60.0;
        BridgeModel model;
        model.genes = {"a", "b", "c", "d"};
        model.vocab = vocab;
        model.arch.residual_endpoint = false;
        model.arch.activation_skip = 0.0;
        model.endpoint = constant_network(target, vocab, rng);
        model.activation = constant_network(logits, vocab, rng);

        const Matrix controls = testing::random_matrix(6, 4, rng).cwiseAbs();
        const Generation g = generate(model, controls, ConditionKey{0, 1, 0.0}, rng);
        REQUIRE(g.values.rows() == 6);
        Matrix expected = target;
        expected(0, 1) = 0.0;
        for (Eigen::Index r = 0; r < 6; ++r) {
            CHECK(g.endpoints.row(r) == target.row(0));
            CHECK(g.values.row(r) == expected.row(0));
        }

        model.activation = constant_network(Matrix::Constant(1, 4, -60.0), vocab, rng);
        CHECK(generate(model, controls, ConditionKey{0, 1, 0.0}, rng).values.isZero(0.0));
        CHECK_THROWS_AS(generate(model, controls, ConditionKey{0, 7, 0.0}, rng), VocabularyError);
        CHECK_THROWS_AS(generate(model, Matrix::Zero(2, 3), ConditionKey{0, 1, 0.0}, rng), DimensionError);
    }

    TEST_CASE("evaluation") {
        const ExpressionDataset ds = synth_generate(tiny_spec()).dataset;
        SplitOptions options;
        options.keep_vocabulary_seen = true;
        options.fraction = 0.5;
        const SplitResult s = split(ds, options);
        const BridgeModel model = train(s.train, tiny_config(2)).model;

        const EvaluationReport a = evaluate(model, s.test, s.train, 5);
        const EvaluationReport b = evaluate(model, s.test, s.train, 5);
        REQUIRE(a.conditions.size() == s.test.perturbed_groups().size());
        for (std::size_t k = 0; k < a.conditions.size(); ++k) {
            CHECK(a.conditions[k].metrics.e_distance == b.conditions[k].metrics.e_distance);
            CHECK(a.conditions[k].metrics.n_pred == a.conditions[k].metrics.n_true);
            CHECK(a.conditions[k].control_e_distance > 0.0);
        }

        const EvaluationReport self = evaluate(model, s.test, s.train, 5, true);
        for (const auto& c : self.conditions) {
            CHECK(c.metrics.e_distance == 0.0);
            CHECK(c.metrics.emd_all == 0.0);
        }
        CHECK(self.mean.e_distance == 0.0);
        CHECK(self.stddev.e_distance == 0.0);
    }

    TEST_CASE("aggregate uses the population standard deviation") {
        EvaluationReport report;
        for (double v : {1.0, 3.0}) {
            ConditionReport c;
            c.metrics.e_distance = v;
            c.metrics.activation_pcc_all = v / 4.0;
            report.conditions.push_back(c);
        }
        report.conditions[1].metrics.activation_pcc_de20 = 0.5;
        aggregate(report);
        CHECK(report.mean.e_distance == doctest::Approx(2.0));
        CHECK(report.stddev.e_distance == doctest::Approx(1.0));
        CHECK(*report.mean.activation_pcc_all == doctest::Approx(0.5));
    }
}
