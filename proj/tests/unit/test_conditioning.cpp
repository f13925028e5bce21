#include <doctest.h>

#include <sstream>

#include "helpers.hpp"

using namespace scbridge;

namespace {

struct Tables {
    Vocabulary vocab;
    ParameterSet params;
    ConditionTables tables;
};

Tables make_tables(std::uint64_t seed) {
    Tables t;
    t.vocab.add_cell_type("k562");
    t.vocab.add_cell_type("rpe1");
    t.vocab.add_perturbation("tp53");
    t.vocab.add_perturbation("myc");
    Rng rng(seed);
    t.tables = add_condition_tables(t.params, t.vocab, rng);
    return t;
}

}  // namespace

TEST_SUITE("conditioning") {
    TEST_CASE("vocabulary ids and names") {
        Vocabulary v;
        CHECK(v.perturbation_count() == 1);
        CHECK(v.perturbation_name(kControlId) == "control");
        CHECK(v.add_cell_type("a") == 0);
        CHECK(v.add_cell_type("b") == 1);
        CHECK(v.add_cell_type("a") == 0);
        CHECK(v.add_perturbation("p") == 1);
        CHECK(v.cell_type_id("b") == 1);
        CHECK_THROWS_AS(v.cell_type_id("zzz"), VocabularyError);
        try {
            v.perturbation_id("missing_pert");
            FAIL("expected VocabularyError");
        } catch (const VocabularyError& e) {
            CHECK(std::string(e.what()).find("missing_pert") != std::string::npos);
        }
        CHECK_THROWS_AS(v.check(ConditionKey{2, 0, 0.0}), VocabularyError);
        CHECK_THROWS_AS(v.check(ConditionKey{0, 2, 0.0}), VocabularyError);
        CHECK_THROWS_AS(v.check(ConditionKey{0, 1, -1.0}), VocabularyError);
        CHECK_NOTHROW(v.check(ConditionKey{1, 1, 0.5}));
    }

    TEST_CASE("vocabulary text round trip") {
        Vocabulary v;
        v.add_cell_type("a");
        v.add_perturbation("p");
        v.add_perturbation("q");
        std::stringstream buffer;
        v.save(buffer);
        CHECK(Vocabulary::load(buffer) == v);
        std::stringstream bad("cell_type,3,a\n");
        CHECK_THROWS_AS(Vocabulary::load(bad), DataError);
    }

    TEST_CASE("embedding lookups") {
        const Tables t = make_tables(1);
        const ConditionKey key{1, 2, 0.0};
        CHECK(embed(key, t.params, t.tables) == embed(key, t.params, t.tables));
        const RowVector e = embed(key, t.params, t.tables);
        CHECK(e.size() == static_cast<Eigen::Index>(kEmbeddingWidth));
        const auto w = static_cast<Eigen::Index>(kTableWidth);
        CHECK(e.head(w) == t.params.embeddings[t.tables.cell_type].value.row(1));
        CHECK(e.tail(w) == t.params.embeddings[t.tables.perturbation].value.row(2));
        CHECK(embed(ConditionKey{0, 1, 0.0}, t.params, t.tables) != embed(ConditionKey{0, 2, 0.0}, t.params, t.tables));

        const RowVector dosed = embed(ConditionKey{1, 2, 2.0}, t.params, t.tables);
        const RowVector direction = t.params.embeddings[t.tables.dosage_direction].value.row(0);
        CHECK((dosed - e - 2.0 * direction).cwiseAbs().maxCoeff() < 1e-15);

        CHECK_THROWS_AS(embed(ConditionKey{5, 0, 0.0}, t.params, t.tables), VocabularyError);
        ParameterSet bare;
        CHECK_THROWS_AS(embed(key, bare), StateError);
    }

    TEST_CASE("embedding gradients reach the used rows only") {
        Tables t = make_tables(2);
        const ConditionKey key{0, 1, 1.5};
        t.params.zero_grad();
        RowVector g = RowVector::Ones(static_cast<Eigen::Index>(kEmbeddingWidth));
        embed_backward(key, g, t.params, t.tables);
        const Param& ct = t.params.embeddings[t.tables.cell_type];
        const Param& pert = t.params.embeddings[t.tables.perturbation];
        const Param& dir = t.params.embeddings[t.tables.dosage_direction];
        CHECK(ct.grad.row(0).isOnes());
        CHECK(ct.grad.row(1).isZero(0.0));
        CHECK(pert.grad.row(1).isOnes());
        CHECK(pert.grad.row(2).isZero(0.0));
        CHECK((dir.grad.array() == 1.5).all());
        CHECK_THROWS_AS(embed_backward(key, RowVector::Ones(3), t.params, t.tables), DimensionError);
    }

    TEST_CASE("seeded init is deterministic") {
        const Tables a = make_tables(3);
        const Tables b = make_tables(3);
        CHECK(a.params.embeddings[0].value == b.params.embeddings[0].value);
        CHECK(a.params.embeddings[0].value.cwiseAbs().maxCoeff() < 10 * kEmbeddingInitScale);
    }

    TEST_CASE("time features") {
        const RowVector zero = time_features(0.0, 2.0);
        CHECK(zero.size() == static_cast<Eigen::Index>(kTimeFeatures));
        for (Eigen::Index k = 0; k < zero.size(); k += 2) {
            CHECK(zero[k] == 0.0);
            CHECK(zero[k + 1] == 1.0);
        }
        const RowVector half = time_features(1.0, 2.0);
        CHECK(half[0] == doctest::Approx(std::sin(0.5)));
        CHECK(half[kTimeFeatures - 2] == doctest::Approx(std::sin(500.0)));
        CHECK(time_features(0.3, 1.0) == time_features(0.6, 2.0));
    }
}

TEST_SUITE("model") {
    TEST_CASE("network input layout and skip terms") {
        Vocabulary vocab;
        vocab.add_cell_type("a");
        vocab.add_perturbation("p");
        Rng rng(4);
        ArchitectureConfig arch;
        arch.hidden_width = 8;
        arch.hidden_layers = 1;
        BridgeModel model;
        model.genes = {"g0", "g1", "g2"};
        model.vocab = vocab;
        model.arch = arch;
        model.endpoint = BridgeNetwork::create(3, vocab, arch, rng);
        model.activation = BridgeNetwork::create(3, vocab, arch, rng);

        const Matrix x = testing::random_matrix(2, 3, rng);
        const std::vector<double> times{0.25, 0.25};
        const std::vector<ConditionKey> keys(2, ConditionKey{0, 1, 0.0});
        const Matrix input = model.endpoint.assemble_input(x, times, keys);
        CHECK(input.cols() == static_cast<Eigen::Index>(3 + kTimeFeatures + kEmbeddingWidth));
        CHECK(input.leftCols(3) == x);

        const Matrix raw = model.endpoint.forward(x, times, keys);
        CHECK(model.predict_endpoint(0.25, x, keys[0]) == raw + x);
        model.arch.residual_endpoint = false;
        CHECK(model.predict_endpoint(0.25, x, keys[0]) == raw);

        BinaryMatrix d(1, 3);
        d << 1, 0, 1;
        const std::vector<ConditionKey> one_key{keys[0]};
        const Matrix logits = model.activation->forward(d.cast<double>(), std::vector<double>{0.25}, one_key);
        const Matrix q = model.predict_activation(0.25, d, keys[0]);
        CHECK(q(0, 0) == doctest::Approx(sigmoid(logits(0, 0) + model.arch.activation_skip)));
        CHECK(q(0, 1) == doctest::Approx(sigmoid(logits(0, 1) - model.arch.activation_skip)));
        CHECK((q.array() >= 0.0).all());
        CHECK((q.array() <= 1.0).all());
    }

    TEST_CASE("save and load reproduce predictions bit-exactly") {
        SyntheticSpec spec;
        spec.n_genes = 6;
        spec.n_cells_per_condition = 10;
        spec.n_conditions = 2;
        spec.n_cell_types = 1;
        const ExpressionDataset ds = synth_generate(spec).dataset;
        TrainConfig cfg;
        cfg.epochs = 2;
        cfg.arch.hidden_width = 16;
        cfg.arch.hidden_layers = 2;
        const BridgeModel model = train(ds, cfg).model;
        const auto dir = std::filesystem::temp_directory_path() / "scbridge_unit_model";
        std::filesystem::remove_all(dir);
        model.save(dir);
        const BridgeModel back = BridgeModel::load(dir);
        CHECK(back.genes == model.genes);
        CHECK(back.vocab == model.vocab);
        CHECK(back.arch.activation_skip == model.arch.activation_skip);
        CHECK(back.variant_tag() == model.variant_tag());
        const Matrix x = ds.values.topRows(4);
        const ConditionKey key{0, 1, 0.0};
        CHECK(back.predict_endpoint(0.4, x, key) == model.predict_endpoint(0.4, x, key));
        CHECK(back.predict_activation(0.4, discretize(x), key) == model.predict_activation(0.4, discretize(x), key));
        std::filesystem::remove_all(dir);
        CHECK_THROWS_AS(BridgeModel::load(dir), DataError);
    }
}
