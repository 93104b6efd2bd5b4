#include <cmath>
#include <sstream>

#include "doctest.h"

#include "appraisal/errors.hpp"
#include "appraisal/neural.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

using namespace appraisal;
using namespace appraisal::neural;

namespace {

Parameter filled(std::string name, std::vector<std::size_t> shape, double value = 0.0) {
    Parameter p{std::move(name), Tensor(std::move(shape)), {}};
    p.value.fill(value);
    p.zero_grad();
    return p;
}

LstmParams zero_lstm(std::size_t d, std::size_t H) {
    return {filled("wi", {d, 4 * H}), filled("wh", {H, 4 * H}), filled("b", {4 * H}), H};
}

LstmParams random_lstm(std::size_t d, std::size_t H, Rng& rng) {
    auto p = zero_lstm(d, H);
    for (auto* t : {&p.w_input.value, &p.w_hidden.value, &p.bias.value})
        for (auto& v : t->data()) v = rng.uniform(-0.8, 0.8);
    return p;
}

Tensor random_inputs(std::size_t T, std::size_t d, Rng& rng) {
    Tensor x({T, d});
    for (auto& v : x.data()) v = rng.uniform(-1, 1);
    return x;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

const std::vector<Architecture> kAll{Architecture::Lstm, Architecture::BiLstm, Architecture::LstmAttention,
                                     Architecture::BiLstmAttention};

/// Zero recurrent weights and a head that only reads its bias.
NeuralModel constant_model(Architecture arch, std::size_t d, double yes_bias) {
    auto m = NeuralModel::initialize(ModelConfig::from(arch, 1, 2, d), 1);
    for (auto* p : m.parameters()) p->value.fill(0.0);
    m.head.bias.value[1] = yes_bias;
    return m;
}

TrainConfig quick_config(int epochs = 3) {
    TrainConfig tc;
    tc.batch_size = 10;
    tc.epochs = epochs;
    tc.dropout_p = 0.5;
    tc.seed = 3;
    return tc;
}

}  // namespace

TEST_CASE("architecture names and configuration validation") {
    for (auto a : kAll) CHECK(parse_architecture(to_string(a)) == a);
    CHECK(to_string(Architecture::BiLstmAttention) == "bilstm-a");
    CHECK_THROWS_AS(parse_architecture("gru"), ConfigError);
    CHECK(ModelConfig::from(Architecture::BiLstm, 2, 128, 300).output_dim() == 256);
    CHECK_THROWS_AS(ModelConfig::from(Architecture::Lstm, 0, 128, 300).validate(), ConfigError);
    TrainConfig tc;
    CHECK(tc.batch_size == 64);
    CHECK(tc.dropout_p == 0.75);
    CHECK(tc.epochs == 20);
    tc.dropout_p = 1.0;
    CHECK_THROWS_AS(tc.validate(), ConfigError);
}

TEST_CASE("per-source presets set epochs and dropout") {
    const auto glove = preset_train_config(EmbeddingPreset::Glove);
    CHECK(glove.epochs == 20);
    CHECK(glove.dropout_p == 0.75);
    const auto cove = preset_train_config(EmbeddingPreset::Cove);
    CHECK(cove.epochs == 4);
    CHECK(cove.dropout_p == 0.75);
    const auto elmo = preset_train_config(EmbeddingPreset::Elmo);
    CHECK(elmo.epochs == 8);
    CHECK(elmo.dropout_p == 0.5);
    CHECK(elmo.batch_size == 64);
    CHECK(parse_preset("elmo") == EmbeddingPreset::Elmo);
}

TEST_CASE("zero LSTM parameters give exactly zero hidden states") {
    Rng rng(1);
    const auto h = lstm_forward(random_inputs(5, 3, rng), zero_lstm(3, 4));
    CHECK(h.shape() == std::vector<std::size_t>{5, 4});
    for (double v : h.values()) CHECK(v == 0.0);
    const auto bi = bilstm_forward(random_inputs(3, 3, rng), zero_lstm(3, 2), zero_lstm(3, 2));
    CHECK(bi.shape() == std::vector<std::size_t>{3, 4});
    for (double v : bi.values()) CHECK(v == 0.0);
}

TEST_CASE("one LSTM step with hand-set 1x1 parameters") {
    auto p = zero_lstm(1, 1);
    const double wi[4] = {0.5, -0.3, 0.8, 0.2}, wh[4] = {0.1, 0.4, -0.6, 0.7}, b[4] = {0.05, 1.0, -0.1, 0.3};
    for (int k = 0; k < 4; ++k) {
        p.w_input.value[static_cast<std::size_t>(k)] = wi[k];
        p.w_hidden.value[static_cast<std::size_t>(k)] = wh[k];
        p.bias.value[static_cast<std::size_t>(k)] = b[k];
    }
    const double x = 0.9, h0 = 0.2, c0 = -0.4;
    const double i = sigmoid(wi[0] * x + wh[0] * h0 + b[0]);
    const double f = sigmoid(wi[1] * x + wh[1] * h0 + b[1]);
    const double g = std::tanh(wi[2] * x + wh[2] * h0 + b[2]);
    const double o = sigmoid(wi[3] * x + wh[3] * h0 + b[3]);
    const double c = f * c0 + i * g;
    const double h = o * std::tanh(c);
    const auto out = lstm_forward(Tensor::matrix({{x}}), p, {h0}, {c0});
    CHECK(std::abs(out[0] - h) <= 1e-12);
    CHECK_THROWS_AS(lstm_forward(Tensor::matrix({{x, x}}), p), ShapeError);
}

TEST_CASE("bidirectional output mirrors under input reversal and direction swap") {
    Rng rng(6);
    const std::size_t T = 5, d = 3, H = 2;
    const auto fwd = random_lstm(d, H, rng), bwd = random_lstm(d, H, rng);
    const auto x = random_inputs(T, d, rng);
    Tensor reversed({T, d});
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < d; ++j) reversed(t, j) = x(T - 1 - t, j);
    const auto a = bilstm_forward(x, fwd, bwd);
    const auto b = bilstm_forward(reversed, bwd, fwd);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t j = 0; j < H; ++j) {
            CHECK(a(t, j) == b(T - 1 - t, H + j));
            CHECK(a(t, H + j) == b(T - 1 - t, j));
        }
    }
}

TEST_CASE("attention pooling examples") {
    Rng rng(2);
    AttentionParams ap{filled("W", {2, 2}), filled("b", {2}), filled("v", {2, 1})};
    for (auto* t : {&ap.projection.value, &ap.bias.value, &ap.score.value})
        for (auto& v : t->data()) v = rng.uniform(-1, 1);

    SUBCASE("identical states give uniform weights") {
        const auto r = attention_pool(Tensor::matrix({{0.3, -0.2}, {0.3, -0.2}, {0.3, -0.2}, {0.3, -0.2}}), {}, ap);
        for (double w : r.weights) CHECK(w == doctest::Approx(0.25).epsilon(1e-15));
    }
    SUBCASE("single step has weight one") {
        const auto r = attention_pool(Tensor::matrix({{0.7, 0.1}}), {}, ap);
        CHECK(r.weights == std::vector<double>{1.0});
        CHECK(r.context == std::vector<double>{0.7, 0.1});
    }
    SUBCASE("hand-computed two-step example") {
        AttentionParams hp{filled("W", {2, 2}), filled("b", {2}), filled("v", {2, 1})};
        hp.projection.value = Tensor::matrix({{1.0, 0.5}, {-0.5, 2.0}});
        hp.bias.value = Tensor::vector({0.1, -0.2});
        hp.score.value = Tensor::matrix({{1.5}, {-1.0}});
        const double h[2][2] = {{0.4, -0.3}, {0.9, 0.2}};
        double e[2];
        for (int t = 0; t < 2; ++t) {
            // Row vector times W, as the model multiplies h_t W.
            const double z0 = h[t][0] * 1.0 + h[t][1] * -0.5 + 0.1;
            const double z1 = h[t][0] * 0.5 + h[t][1] * 2.0 - 0.2;
            e[t] = 1.5 * std::tanh(z0) - 1.0 * std::tanh(z1);
        }
        const double a0 = 1.0 / (1.0 + std::exp(e[1] - e[0])), a1 = 1.0 - a0;
        const auto r = attention_pool(Tensor::matrix({{h[0][0], h[0][1]}, {h[1][0], h[1][1]}}), {}, hp);
        CHECK(std::abs(r.weights[0] - a0) <= 1e-12);
        CHECK(std::abs(r.weights[1] - a1) <= 1e-12);
        CHECK(std::abs(r.context[0] - (a0 * h[0][0] + a1 * h[1][0])) <= 1e-12);
        CHECK(std::abs(r.context[1] - (a0 * h[0][1] + a1 * h[1][1])) <= 1e-12);
    }
    SUBCASE("masked positions get zero weight and all-masked is an error") {
        const auto r = attention_pool(Tensor::matrix({{1, 2}, {3, 4}, {5, 6}}), {1, 0, 1}, ap);
        CHECK(r.weights[1] == 0.0);
        CHECK(std::abs(r.weights[0] + r.weights[2] - 1.0) <= 1e-12);
        CHECK_THROWS_AS(attention_pool(Tensor::matrix({{1, 2}}), {0}, ap), UsageError);
    }
}

TEST_CASE("classifier head examples") {
    Tape tape;
    HeadParams zero{filled("w", {2, 2}), filled("b", {2})};
    const auto pooled = tape.constant(Tensor::matrix({{1.0, 0.0}}));
    CHECK(classify(pooled, bind(tape, std::as_const(zero))).value() == Tensor::matrix({{0.0, 0.0}}));
    HeadParams eye{filled("w", {2, 2}), filled("b", {2})};
    eye.weight.value = Tensor::matrix({{1, 0}, {0, 1}});
    CHECK(classify(pooled, bind(tape, std::as_const(eye))).value() == Tensor::matrix({{1.0, 0.0}}));
}

TEST_CASE("reported probability is the softmax of the logits") {
    const auto table = testing::random_table({"hello"}, 3, 1);
    const StaticEmbeddingInput enc(table, "toy");
    const auto m = testing::moment("x", "hello there", true);
    const auto p = predict_one(constant_model(Architecture::Lstm, 3, std::log(3.0)), enc, m);
    CHECK(p.probability == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(p.label);
    const auto tie = predict_one(constant_model(Architecture::Lstm, 3, 0.0), enc, m);
    CHECK(tie.probability == 0.5);
    CHECK_FALSE(tie.label);
}

TEST_CASE("whole-model gradients match central differences at small dimensions") {
    const std::size_t d = 5;
    Rng data_rng(31);
    const Tensor s1 = random_inputs(3, d, data_rng), s2 = random_inputs(2, d, data_rng);
    const std::vector<const Tensor*> batch{&s1, &s2};
    const std::vector<int> targets{1, 0};
    for (auto arch : kAll) {
        for (int layers : {1, 2}) {
            CAPTURE(to_string(arch));
            CAPTURE(layers);
            auto model = NeuralModel::initialize(ModelConfig::from(arch, layers, 4, d), 17);
            CHECK(testing::model_gradient_error(model, batch, targets) <= 1e-4);
        }
    }
}

TEST_CASE("padding never changes a sequence's logits") {
    const std::size_t d = 4;
    Rng rng(8);
    const Tensor shortest = random_inputs(2, d, rng), longer = random_inputs(6, d, rng);
    for (auto arch : kAll) {
        for (int layers : {1, 2}) {
            const auto model = NeuralModel::initialize(ModelConfig::from(arch, layers, 3, d), 5);
            Tape t1, t2, t3;
            const auto alone = forward(t1, model, {&shortest}).logits.value();
            const auto batched = forward(t2, model, {&longer, &shortest}).logits.value();
            const auto padded = forward(t3, model, {&shortest}, 12).logits.value();
            CAPTURE(to_string(arch));
            CHECK(alone[0] == batched(1, 0));
            CHECK(alone[1] == batched(1, 1));
            CHECK(alone == padded);
        }
    }
}

TEST_CASE("forward rejects empty batches and sequences") {
    const auto model = NeuralModel::initialize(ModelConfig::from(Architecture::Lstm, 1, 2, 3), 1);
    Tape t;
    CHECK_THROWS_AS(forward(t, model, {}), UsageError);
    const Tensor empty({0, 3}), wrong({2, 4});
    CHECK_THROWS_AS(forward(t, model, {&empty}), InputError);
    CHECK_THROWS_AS(forward(t, model, {&wrong}), ShapeError);
}

TEST_CASE("training is deterministic, lowers the loss and leaves embeddings untouched") {
    auto c = testing::synthetic_corpus(40, 8, 11);
    const auto before = c.table.data();
    const StaticEmbeddingInput enc(c.table, "synthetic");
    const auto mc = ModelConfig::from(Architecture::LstmAttention, 1, 8, 8);
    const auto a = train(c.data, c.data, Task::Agency, mc, quick_config(4), enc);
    const auto b = train(c.data, c.data, Task::Agency, mc, quick_config(4), enc);
    REQUIRE(a.epochs.size() == 4);
    for (std::size_t e = 0; e < a.epochs.size(); ++e) {
        CHECK(a.epochs[e].train_loss == b.epochs[e].train_loss);
        CHECK(a.epochs[e].dev_accuracy == b.epochs[e].dev_accuracy);
    }
    CHECK(a.epochs.back().train_loss < a.epochs.front().train_loss);
    CHECK(c.table.data() == before);

    // Returned parameters belong to the best epoch; ties go to the earliest.
    int best = 1;
    for (const auto& r : a.epochs)
        if (r.dev_accuracy > a.epochs[static_cast<std::size_t>(best - 1)].dev_accuracy) best = r.epoch;
    CHECK(a.best_epoch == best);
    CHECK(dev_accuracy(a.model, enc, c.data, Task::Agency) == a.epochs[static_cast<std::size_t>(best - 1)].dev_accuracy);
}

TEST_CASE("training errors") {
    auto c = testing::synthetic_corpus(10, 4, 1);
    const StaticEmbeddingInput enc(c.table, "synthetic");
    const auto mc = ModelConfig::from(Architecture::Lstm, 1, 2, 4);
    CHECK_THROWS_AS(train(Dataset(), c.data, Task::Agency, mc, quick_config(1), enc), UsageError);
    CHECK_THROWS_AS(train(c.data, Dataset(), Task::Agency, mc, quick_config(1), enc), UsageError);
    auto big = quick_config(3);
    big.learning_rate = 1e308;
    CHECK_THROWS_AS(train(c.data, c.data, Task::Agency, mc, big, enc), TrainingError);
    const auto wrong_dim = ModelConfig::from(Architecture::Lstm, 1, 2, 5);
    CHECK_THROWS_AS(train(c.data, c.data, Task::Agency, wrong_dim, quick_config(1), enc), ConfigError);
}

TEST_CASE("epoch report CSV") {
    std::ostringstream out;
    write_epoch_csv(out, {{1, 0.5, 0.75}, {2, 0.25, 0.8}});
    CHECK(out.str() == "epoch,train_loss,dev_accuracy\n1,0.500000,0.7500\n2,0.250000,0.8000\n");
}

TEST_CASE("attention predictions") {
    const auto table = testing::random_table({"good", "day"}, 4, 2);
    const StaticEmbeddingInput enc(table, "toy");
    const auto model = NeuralModel::initialize(ModelConfig::from(Architecture::BiLstmAttention, 2, 3, 4), 9);
    const auto p = predict_with_attention(model, enc, "A good, good day!");
    CHECK(p.tokens == std::vector<std::string>{"a", "good", "good", "day"});
    REQUIRE(p.weights.size() == 4);
    double s = 0;
    for (double w : p.weights) {
        CHECK(w >= 0);
        s += w;
    }
    CHECK(std::abs(s - 1.0) <= 1e-9);
    CHECK(predict_with_attention(model, enc, "good").weights == std::vector<double>{1.0});
    CHECK_THROWS_AS(predict_with_attention(model, enc, "?!"), InputError);
    const auto plain = NeuralModel::initialize(ModelConfig::from(Architecture::BiLstm, 1, 3, 4), 9);
    CHECK_THROWS_AS(predict_with_attention(plain, enc, "good day"), UsageError);
    CHECK(predict_one(plain, enc, testing::moment("x", "good day", true)).weights.empty());
}

TEST_CASE("batched prediction equals one-at-a-time prediction") {
    auto c = testing::synthetic_corpus(23, 6, 4);
    const StaticEmbeddingInput enc(c.table, "synthetic");
    const auto model = NeuralModel::initialize(ModelConfig::from(Architecture::LstmAttention, 2, 5, 6), 3);
    const auto batched = predict(model, enc, c.data, 7);
    for (std::size_t i = 0; i < c.data.size(); ++i) {
        const auto one = predict_one(model, enc, c.data[i]);
        CHECK(batched[i].probability == one.probability);
        CHECK(batched[i].weights == one.weights);
    }
}

TEST_CASE("token truncation and contextual inputs") {
    const auto table = testing::random_table({"a"}, 2, 1);
    const StaticEmbeddingInput enc(table, "toy", true, 3);
    const auto e = enc.encode(testing::moment("x", "a b c d e", true));
    CHECK(e.tokens.size() == 3);
    CHECK(e.inputs.rows() == 3);

    ContextualSequenceFile file(2);
    file.insert("x", Tensor::matrix({{1, 2}, {3, 4}}));
    const ContextualInput ctx(file, "ctx");
    CHECK(ctx.encode(testing::moment("x", "hi there", true)).inputs == Tensor::matrix({{1, 2}, {3, 4}}));
    CHECK_THROWS_AS(ctx.encode(testing::moment("x", "one two three", true)), DataError);
    CHECK_THROWS_AS(ctx.encode(testing::moment("y", "hi there", true)), KeyError);
}

TEST_CASE("grid has one cell per architecture, layer count and width") {
    auto c = testing::synthetic_corpus(16, 4, 5);
    const StaticEmbeddingInput enc(c.table, "synthetic");
    GridSpec spec;
    spec.hidden = {2, 3, 4};
    spec.threads = 2;
    const auto tc = quick_config(1);
    const auto cells = grid_search(c.data, c.data, Task::Social, tc, spec, enc);
    REQUIRE(cells.size() == 24);
    CHECK(cells[0].architecture == Architecture::Lstm);
    CHECK(cells[0].layers == 1);
    CHECK(cells[0].hidden == 2);
    CHECK(cells[23].architecture == Architecture::BiLstmAttention);
    CHECK(cells[23].layers == 2);
    CHECK(cells[23].hidden == 4);
    CHECK(best_cells(cells).size() == 4);

    // Re-execution oracle for one cell.
    const auto& cell = cells[9];
    auto cell_tc = tc;
    cell_tc.seed = cell_seed(tc.seed, cell.architecture, cell.layers, cell.hidden);
    const auto again = train(c.data, c.data, Task::Social,
                             ModelConfig::from(cell.architecture, cell.layers, cell.hidden, 4), cell_tc, enc);
    CHECK(again.epochs.back().dev_accuracy == cell.dev_accuracy);

    std::ostringstream out;
    write_grid_csv(out, cells);
    std::size_t lines = 0;
    std::string line, header;
    std::istringstream in(out.str());
    std::getline(in, header);
    while (std::getline(in, line)) ++lines;
    CHECK(header == "layers,hidden,lstm,bilstm,lstm-a,bilstm-a");
    CHECK(lines == 6);
}

TEST_CASE("grid results do not depend on the thread count") {
    auto c = testing::synthetic_corpus(12, 4, 6);
    const StaticEmbeddingInput enc(c.table, "synthetic");
    GridSpec spec;
    spec.architectures = {Architecture::LstmAttention, Architecture::BiLstm};
    spec.layers = {1};
    spec.hidden = {2, 3};
    spec.threads = 1;
    const auto one = grid_search(c.data, c.data, Task::Agency, quick_config(2), spec, enc);
    spec.threads = 3;
    const auto three = grid_search(c.data, c.data, Task::Agency, quick_config(2), spec, enc);
    REQUIRE(one.size() == three.size());
    for (std::size_t i = 0; i < one.size(); ++i) CHECK(one[i].dev_accuracy == three[i].dev_accuracy);
}
