#include "appraisal/neural.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "appraisal/checkpoint.hpp"
#include "appraisal/errors.hpp"
#include "appraisal/features.hpp"
#include "appraisal/text.hpp"

namespace appraisal::neural {

using tensor::concat;

// ------------------------------------------------------------------ configs

std::string to_string(Architecture arch) {
    switch (arch) {
        case Architecture::Lstm: return "lstm";
        case Architecture::BiLstm: return "bilstm";
        case Architecture::LstmAttention: return "lstm-a";
        case Architecture::BiLstmAttention: return "bilstm-a";
    }
    return "?";
}

Architecture parse_architecture(const std::string& name) {
    const auto n = ascii_lower(name);
    if (n == "lstm") return Architecture::Lstm;
    if (n == "bilstm") return Architecture::BiLstm;
    if (n == "lstm-a") return Architecture::LstmAttention;
    if (n == "bilstm-a") return Architecture::BiLstmAttention;
    throw ConfigError("unknown architecture '" + name + "' (expected lstm, bilstm, lstm-a or bilstm-a)");
}

bool is_bidirectional(Architecture arch) {
    return arch == Architecture::BiLstm || arch == Architecture::BiLstmAttention;
}

bool has_attention(Architecture arch) {
    return arch == Architecture::LstmAttention || arch == Architecture::BiLstmAttention;
}

Architecture ModelConfig::architecture() const {
    if (bidirectional) return attention ? Architecture::BiLstmAttention : Architecture::BiLstm;
    return attention ? Architecture::LstmAttention : Architecture::Lstm;
}

ModelConfig ModelConfig::from(Architecture arch, int layers, int hidden, std::size_t input_dim, InputSource source) {
    ModelConfig mc;
    mc.layers = layers;
    mc.hidden = hidden;
    mc.bidirectional = is_bidirectional(arch);
    mc.attention = has_attention(arch);
    mc.source = source;
    mc.input_dim = input_dim;
    return mc;
}

void ModelConfig::validate() const {
    if (layers < 1) throw ConfigError("layers must be >= 1, got " + std::to_string(layers));
    if (hidden < 1) throw ConfigError("hidden must be >= 1, got " + std::to_string(hidden));
    if (input_dim < 1) throw ConfigError("input dimension must be >= 1");
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1, got " + std::to_string(batch_size));
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout_p must lie in [0, 1)");
    if (epochs < 1) throw ConfigError("epochs must be >= 1, got " + std::to_string(epochs));
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
}

TrainConfig preset_train_config(EmbeddingPreset preset) {
    TrainConfig tc;
    switch (preset) {
        case EmbeddingPreset::Glove: tc.epochs = 20; tc.dropout_p = 0.75; break;
        case EmbeddingPreset::Cove: tc.epochs = 4; tc.dropout_p = 0.75; break;
        case EmbeddingPreset::Elmo: tc.epochs = 8; tc.dropout_p = 0.5; break;
    }
    return tc;
}

EmbeddingPreset parse_preset(const std::string& name) {
    const auto n = ascii_lower(name);
    if (n == "glove") return EmbeddingPreset::Glove;
    if (n == "cove") return EmbeddingPreset::Cove;
    if (n == "elmo") return EmbeddingPreset::Elmo;
    throw ConfigError("unknown embedding preset '" + name + "' (expected glove, cove or elmo)");
}

// ------------------------------------------------------------------ inputs

namespace {

std::vector<std::string> checked_tokens(const Moment& m, bool lowercase) {
    auto tokens = tokenize(m.text, lowercase);
    if (tokens.empty()) throw InputError("moment '" + m.id + "' has no tokens");
    return tokens;
}

}  // namespace

EncodedText StaticEmbeddingInput::encode(const Moment& moment) const {
    auto tokens = checked_tokens(moment, lowercase_);
    if (tokens.size() > max_tokens_) tokens.resize(max_tokens_);
    auto inputs = embed_sequence(tokens, table_);
    return {std::move(tokens), std::move(inputs)};
}

EncodedText ContextualInput::encode(const Moment& moment) const {
    auto tokens = checked_tokens(moment, lowercase_);
    const Tensor& full = file_.lookup(moment.id);
    if (full.rows() != tokens.size()) {
        throw DataError("contextual vectors for '" + moment.id + "' have " + std::to_string(full.rows()) +
                        " rows but the moment has " + std::to_string(tokens.size()) + " tokens");
    }
    const std::size_t T = std::min(tokens.size(), max_tokens_);
    tokens.resize(T);
    const std::size_t d = full.cols();
    std::vector<double> rows(full.data().begin(), full.data().begin() + static_cast<std::ptrdiff_t>(T * d));
    return {std::move(tokens), Tensor::matrix(T, d, std::move(rows))};
}

// ------------------------------------------------------------------ parameters

namespace {

Parameter uniform_param(std::string name, std::vector<std::size_t> shape, double k, Rng& rng) {
    Parameter p;
    p.name = std::move(name);
    p.value = Tensor(std::move(shape));
    for (double& v : p.value.data()) v = rng.uniform(-k, k);
    p.zero_grad();
    return p;
}

}  // namespace

NeuralModel NeuralModel::initialize(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    NeuralModel m;
    m.config = config;
    Rng rng(seed);
    const std::size_t H = static_cast<std::size_t>(config.hidden);
    const std::size_t Hout = config.output_dim();
    const double k_rec = 1.0 / std::sqrt(static_cast<double>(H));
    const double k_out = 1.0 / std::sqrt(static_cast<double>(Hout));
    const int dirs = config.bidirectional ? 2 : 1;
    for (int l = 0; l < config.layers; ++l) {
        const std::size_t d = l == 0 ? config.input_dim : Hout;
        std::vector<LstmParams> layer;
        for (int dir = 0; dir < dirs; ++dir) {
            const std::string prefix = "layer" + std::to_string(l) + (dir == 0 ? ".fwd." : ".bwd.");
            LstmParams p;
            p.hidden = H;
            p.w_input = uniform_param(prefix + "w_input", {d, 4 * H}, k_rec, rng);
            p.w_hidden = uniform_param(prefix + "w_hidden", {H, 4 * H}, k_rec, rng);
            p.bias = uniform_param(prefix + "bias", {4 * H}, k_rec, rng);
            layer.push_back(std::move(p));
        }
        m.layers.push_back(std::move(layer));
    }
    if (config.attention) {
        AttentionParams a;
        a.projection = uniform_param("attention.projection", {Hout, Hout}, k_out, rng);
        a.bias = uniform_param("attention.bias", {Hout}, k_out, rng);
        a.score = uniform_param("attention.score", {Hout, 1}, k_out, rng);
        m.attention = std::move(a);
    }
    m.head.weight = uniform_param("head.weight", {Hout, 2}, k_out, rng);
    m.head.bias = uniform_param("head.bias", {2}, k_out, rng);
    return m;
}

std::vector<Parameter*> NeuralModel::parameters() {
    std::vector<Parameter*> out;
    for (auto& layer : layers) {
        for (auto& p : layer) {
            out.push_back(&p.w_input);
            out.push_back(&p.w_hidden);
            out.push_back(&p.bias);
        }
    }
    if (attention) {
        out.push_back(&attention->projection);
        out.push_back(&attention->bias);
        out.push_back(&attention->score);
    }
    out.push_back(&head.weight);
    out.push_back(&head.bias);
    return out;
}

std::vector<const Parameter*> NeuralModel::parameters() const {
    auto mut = const_cast<NeuralModel*>(this)->parameters();
    return {mut.begin(), mut.end()};
}

// ------------------------------------------------------------------ binding

LstmVars bind(Tape& tape, LstmParams& p) {
    return {tape.parameter(p.w_input), tape.parameter(p.w_hidden), tape.parameter(p.bias), p.hidden};
}
LstmVars bind(Tape& tape, const LstmParams& p) {
    return {tape.constant_ref(p.w_input.value), tape.constant_ref(p.w_hidden.value), tape.constant_ref(p.bias.value),
            p.hidden};
}
AttentionVars bind(Tape& tape, AttentionParams& p) {
    return {tape.parameter(p.projection), tape.parameter(p.bias), tape.parameter(p.score)};
}
AttentionVars bind(Tape& tape, const AttentionParams& p) {
    return {tape.constant_ref(p.projection.value), tape.constant_ref(p.bias.value), tape.constant_ref(p.score.value)};
}
HeadVars bind(Tape& tape, HeadParams& p) { return {tape.parameter(p.weight), tape.parameter(p.bias)}; }
HeadVars bind(Tape& tape, const HeadParams& p) {
    return {tape.constant_ref(p.weight.value), tape.constant_ref(p.bias.value)};
}

// ------------------------------------------------------------------ forward pieces

namespace {

bool all_ones(const Tensor& m) {
    return std::all_of(m.data().begin(), m.data().end(), [](double v) { return v == 1.0; });
}

Tensor complement(const Tensor& m) {
    Tensor out(m.shape());
    for (std::size_t i = 0; i < m.size(); ++i) out[i] = 1.0 - m[i];
    return out;
}

}  // namespace

std::vector<Var> lstm_forward(Tape& tape, const std::vector<Var>& inputs, const LstmVars& params, Var h0, Var c0,
                              const std::vector<Var>& masks, bool reverse) {
    const std::size_t T = inputs.size();
    if (T == 0) throw UsageError("lstm_forward: empty sequence");
    if (!masks.empty() && masks.size() != T) throw ShapeError("lstm_forward: one mask per step required");
    const std::size_t H = params.hidden;
    const auto& wi = params.w_input.value();
    const auto& wh = params.w_hidden.value();
    if (wi.cols() != 4 * H || wh.rows() != H || wh.cols() != 4 * H || params.bias.value().size() != 4 * H) {
        throw ShapeError("lstm_forward: parameter shapes do not match hidden size " + std::to_string(H));
    }
    if (inputs[0].value().cols() != wi.rows()) {
        throw ShapeError("lstm_forward: input width " + std::to_string(inputs[0].value().cols()) +
                         " does not match parameter rows " + std::to_string(wi.rows()));
    }
    Var h = h0, c = c0;
    std::vector<Var> out(T);
    for (std::size_t s = 0; s < T; ++s) {
        const std::size_t t = reverse ? T - 1 - s : s;
        Var z = add(add(matmul(inputs[t], params.w_input), matmul(h, params.w_hidden)), params.bias);
        Var i = sigmoid(slice_cols(z, 0, H));
        Var f = sigmoid(slice_cols(z, H, H));
        Var g = tanh(slice_cols(z, 2 * H, H));
        Var o = sigmoid(slice_cols(z, 3 * H, H));
        Var c_new = add(mul(f, c), mul(i, g));
        Var h_new = mul(o, tanh(c_new));
        if (!masks.empty() && !all_ones(masks[t].value())) {
            Var keep = masks[t];
            Var hold = tape.constant(complement(keep.value()));
            c = add(mul_rows(c_new, keep), mul_rows(c, hold));
            h = add(mul_rows(h_new, keep), mul_rows(h, hold));
        } else {
            c = c_new;
            h = h_new;
        }
        out[t] = h;
    }
    return out;
}

std::vector<Var> bilstm_forward(Tape& tape, const std::vector<Var>& inputs, const LstmVars& fwd, const LstmVars& bwd,
                                const std::vector<Var>& masks) {
    if (inputs.empty()) throw UsageError("bilstm_forward: empty sequence");
    const std::size_t B = inputs[0].value().rows();
    auto zeros = [&](std::size_t H) { return tape.constant(Tensor::matrix(B, H)); };
    auto f = lstm_forward(tape, inputs, fwd, zeros(fwd.hidden), zeros(fwd.hidden), masks, false);
    auto b = lstm_forward(tape, inputs, bwd, zeros(bwd.hidden), zeros(bwd.hidden), masks, true);
    std::vector<Var> out(inputs.size());
    for (std::size_t t = 0; t < inputs.size(); ++t) out[t] = concat({f[t], b[t]});
    return out;
}

AttentionOutput attention_pool(Tape& tape, const std::vector<Var>& hiddens, const Tensor& mask,
                               const AttentionVars& params) {
    (void)tape;
    const std::size_t T = hiddens.size();
    if (T == 0) throw UsageError("attention_pool: empty sequence");
    const std::size_t B = hiddens[0].value().rows();
    if (mask.rows() != B || mask.cols() != T) {
        throw ShapeError("attention_pool: mask shape " + mask.shape_string() + " does not match " + std::to_string(B) +
                         " x " + std::to_string(T));
    }
    std::vector<Var> scores;
    scores.reserve(T);
    for (const Var& h : hiddens) {
        scores.push_back(matmul(tanh(add(matmul(h, params.projection), params.bias)), params.score));
    }
    Var weights = masked_softmax(concat(scores), mask);
    Var context = mul_rows(hiddens[0], slice_cols(weights, 0, 1));
    for (std::size_t t = 1; t < T; ++t) context = add(context, mul_rows(hiddens[t], slice_cols(weights, t, 1)));
    return {context, weights};
}

Var classify(Var pooled, const HeadVars& head) { return add(matmul(pooled, head.weight), head.bias); }

namespace {

std::vector<Var> sequence_steps(Tape& tape, const Tensor& inputs) {
    if (inputs.rank() != 2) throw ShapeError("expected a T x d input matrix, got " + inputs.shape_string());
    if (inputs.rows() == 0) throw UsageError("empty sequence");
    std::vector<Var> steps;
    for (std::size_t t = 0; t < inputs.rows(); ++t) {
        std::vector<double> row(inputs.data().begin() + static_cast<std::ptrdiff_t>(t * inputs.cols()),
                                inputs.data().begin() + static_cast<std::ptrdiff_t>((t + 1) * inputs.cols()));
        steps.push_back(tape.constant(Tensor::matrix(1, inputs.cols(), std::move(row))));
    }
    return steps;
}

Tensor stack_rows(const std::vector<Var>& steps) {
    const std::size_t T = steps.size(), H = steps[0].value().cols();
    Tensor out = Tensor::matrix(T, H);
    for (std::size_t t = 0; t < T; ++t) {
        std::copy(steps[t].value().data().begin(), steps[t].value().data().end(), out.data().begin() + t * H);
    }
    return out;
}

Var initial_state(Tape& tape, const std::vector<double>& v, std::size_t H) {
    if (v.empty()) return tape.constant(Tensor::matrix(1, H));
    if (v.size() != H) throw ShapeError("initial state has " + std::to_string(v.size()) + " entries, expected " + std::to_string(H));
    return tape.constant(Tensor::matrix(1, H, v));
}

}  // namespace

Tensor lstm_forward(const Tensor& inputs, const LstmParams& params, const std::vector<double>& h0,
                    const std::vector<double>& c0) {
    Tape tape;
    auto steps = sequence_steps(tape, inputs);
    auto vars = bind(tape, params);
    auto out = lstm_forward(tape, steps, vars, initial_state(tape, h0, params.hidden),
                            initial_state(tape, c0, params.hidden), {}, false);
    return stack_rows(out);
}

Tensor bilstm_forward(const Tensor& inputs, const LstmParams& fwd, const LstmParams& bwd) {
    Tape tape;
    auto steps = sequence_steps(tape, inputs);
    return stack_rows(bilstm_forward(tape, steps, bind(tape, fwd), bind(tape, bwd), {}));
}

PooledSequence attention_pool(const Tensor& hiddens, const std::vector<double>& mask, const AttentionParams& params) {
    Tape tape;
    auto steps = sequence_steps(tape, hiddens);
    const std::size_t T = steps.size();
    if (!mask.empty() && mask.size() != T) throw ShapeError("attention_pool: mask length does not match T");
    Tensor m = Tensor::matrix(1, T, mask.empty() ? std::vector<double>(T, 1.0) : mask);
    auto out = attention_pool(tape, steps, m, bind(tape, params));
    return {out.context.value().values(), out.weights.value().values()};
}

// ------------------------------------------------------------------ full network

namespace {

template <typename Model>
ForwardOutput forward_impl(Tape& tape, Model& model, const std::vector<const Tensor*>& sequences, bool training,
                           double dropout_p, Rng* rng, std::size_t pad_to) {
    const std::size_t B = sequences.size();
    if (B == 0) throw UsageError("forward: empty batch");
    const std::size_t d = model.config.input_dim;
    std::size_t T = pad_to;
    for (const Tensor* s : sequences) {
        if (s->rank() != 2 || s->cols() != d) {
            throw ShapeError("forward: sequence shape " + s->shape_string() + " does not match input dimension " +
                             std::to_string(d));
        }
        if (s->rows() == 0) throw InputError("forward: empty sequence in batch");
        T = std::max(T, s->rows());
    }

    Tensor mask_bt = Tensor::matrix(B, T);
    std::vector<Var> xs(T), masks(T);
    for (std::size_t t = 0; t < T; ++t) {
        Tensor x = Tensor::matrix(B, d);
        Tensor m = Tensor::matrix(B, 1);
        for (std::size_t b = 0; b < B; ++b) {
            const Tensor& s = *sequences[b];
            if (t >= s.rows()) continue;
            std::copy(s.data().begin() + static_cast<std::ptrdiff_t>(t * d),
                      s.data().begin() + static_cast<std::ptrdiff_t>((t + 1) * d), x.data().begin() + b * d);
            m[b] = 1.0;
            mask_bt(b, t) = 1.0;
        }
        xs[t] = tape.constant(std::move(x));
        masks[t] = tape.constant(std::move(m));
    }

    const std::size_t H = static_cast<std::size_t>(model.config.hidden);
    for (auto& layer : model.layers) {
        if (model.config.bidirectional) {
            xs = bilstm_forward(tape, xs, bind(tape, layer[0]), bind(tape, layer[1]), masks);
        } else {
            Var h0 = tape.constant(Tensor::matrix(B, H));
            Var c0 = tape.constant(Tensor::matrix(B, H));
            xs = lstm_forward(tape, xs, bind(tape, layer[0]), h0, c0, masks, false);
        }
    }

    ForwardOutput out;
    out.steps = T;
    Var pooled;
    if (model.attention) {
        auto att = attention_pool(tape, xs, mask_bt, bind(tape, *model.attention));
        pooled = att.context;
        out.attention = att.weights;
    } else if (!model.config.bidirectional) {
        // Masked steps carry the state, so the last step holds each row's final state.
        pooled = xs[T - 1];
    } else {
        // Forward direction ends at T-1; the reversed pass ends at t = 0.
        pooled = concat({slice_cols(xs[T - 1], 0, H), slice_cols(xs[0], H, H)});
    }
    if (training && dropout_p > 0.0) pooled = dropout(pooled, dropout_p, true, *rng);
    out.logits = classify(pooled, bind(tape, model.head));
    return out;
}

}  // namespace

ForwardOutput forward(Tape& tape, NeuralModel& model, const std::vector<const Tensor*>& sequences, bool training,
                      double dropout_p, Rng& rng, std::size_t pad_to) {
    return forward_impl(tape, model, sequences, training, dropout_p, &rng, pad_to);
}

ForwardOutput forward(Tape& tape, const NeuralModel& model, const std::vector<const Tensor*>& sequences,
                      std::size_t pad_to) {
    return forward_impl(tape, model, sequences, false, 0.0, nullptr, pad_to);
}

// ------------------------------------------------------------------ inference

namespace {

double prob_yes(const Tensor& logits, std::size_t row) {
    const double a = logits(row, 0), b = logits(row, 1);
    const double m = std::max(a, b);
    const double ea = std::exp(a - m), eb = std::exp(b - m);
    return eb / (ea + eb);
}

std::vector<NeuralPrediction> predict_encoded(const NeuralModel& model, std::vector<EncodedText> encoded) {
    std::vector<const Tensor*> seqs;
    for (const auto& e : encoded) seqs.push_back(&e.inputs);
    Tape tape;
    auto out = forward(tape, model, seqs);
    const Tensor& logits = out.logits.value();
    std::vector<NeuralPrediction> preds(encoded.size());
    for (std::size_t b = 0; b < encoded.size(); ++b) {
        auto& p = preds[b];
        p.label = logits(b, 1) > logits(b, 0);
        p.probability = prob_yes(logits, b);
        if (out.attention) {
            const Tensor& w = out.attention->value();
            p.weights.assign(w.data().begin() + static_cast<std::ptrdiff_t>(b * w.cols()),
                             w.data().begin() + static_cast<std::ptrdiff_t>(b * w.cols() + encoded[b].tokens.size()));
        }
        p.tokens = std::move(encoded[b].tokens);
    }
    return preds;
}

void check_encoder(const NeuralModel& model, const InputEncoder& encoder) {
    if (encoder.dim() != model.config.input_dim) {
        throw ConfigError("input vectors have dimension " + std::to_string(encoder.dim()) + " but the model expects " +
                          std::to_string(model.config.input_dim));
    }
}

}  // namespace

std::vector<NeuralPrediction> predict(const NeuralModel& model, const InputEncoder& encoder, const Dataset& data,
                                      std::size_t batch_size) {
    check_encoder(model, encoder);
    if (batch_size == 0) batch_size = 1;
    std::vector<NeuralPrediction> out;
    out.reserve(data.size());
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        const std::size_t end = std::min(data.size(), start + batch_size);
        std::vector<EncodedText> batch;
        for (std::size_t i = start; i < end; ++i) batch.push_back(encoder.encode(data[i]));
        for (auto& p : predict_encoded(model, std::move(batch))) out.push_back(std::move(p));
    }
    return out;
}

NeuralPrediction predict_one(const NeuralModel& model, const InputEncoder& encoder, const Moment& moment) {
    check_encoder(model, encoder);
    std::vector<EncodedText> batch;
    batch.push_back(encoder.encode(moment));
    return std::move(predict_encoded(model, std::move(batch))[0]);
}

NeuralPrediction predict_with_attention(const NeuralModel& model, const InputEncoder& encoder, const Moment& moment) {
    if (!model.attention) throw UsageError("model " + to_string(model.config.architecture()) + " has no attention layer");
    return predict_one(model, encoder, moment);
}

NeuralPrediction predict_with_attention(const NeuralModel& model, const InputEncoder& encoder, const std::string& text) {
    Moment m;
    m.id = "<text>";
    m.text = text;
    return predict_with_attention(model, encoder, m);
}

double dev_accuracy(const NeuralModel& model, const InputEncoder& encoder, const Dataset& dev, Task task) {
    const auto gold = dev.labels(task);
    if (gold.empty()) throw UsageError("dev split is empty");
    const auto preds = predict(model, encoder, dev);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) hit += preds[i].label == gold[i];
    return static_cast<double>(hit) / static_cast<double>(gold.size());
}

// ------------------------------------------------------------------ training

namespace {

struct Adam {
    std::vector<Tensor> m, v;
    long step = 0;

    explicit Adam(const std::vector<Parameter*>& params) {
        for (const auto* p : params) {
            m.emplace_back(p->value.shape());
            v.emplace_back(p->value.shape());
        }
    }

    void update(const std::vector<Parameter*>& params, const TrainConfig& tc) {
        ++step;
        const double c1 = 1.0 - std::pow(tc.beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(tc.beta2, static_cast<double>(step));
        for (std::size_t k = 0; k < params.size(); ++k) {
            auto w = params[k]->value.data();
            auto g = params[k]->grad.data();
            auto mk = m[k].data();
            auto vk = v[k].data();
            for (std::size_t i = 0; i < w.size(); ++i) {
                mk[i] = tc.beta1 * mk[i] + (1.0 - tc.beta1) * g[i];
                vk[i] = tc.beta2 * vk[i] + (1.0 - tc.beta2) * g[i] * g[i];
                const double mhat = mk[i] / c1, vhat = vk[i] / c2;
                w[i] -= tc.learning_rate * mhat / (std::sqrt(vhat) + tc.adam_eps);
            }
        }
    }
};

}  // namespace

TrainResult train(const Dataset& train_set, const Dataset& dev_set, Task task, const ModelConfig& mc,
                  const TrainConfig& tc, const InputEncoder& encoder) {
    mc.validate();
    tc.validate();
    if (train_set.empty()) throw UsageError("training split is empty");
    if (dev_set.empty()) throw UsageError("dev split is empty");
    if (mc.input_dim != encoder.dim()) {
        throw ConfigError("model input dimension " + std::to_string(mc.input_dim) + " differs from the vectors' " +
                          std::to_string(encoder.dim()));
    }
    const auto labels = train_set.labels(task);
    (void)dev_set.labels(task);

    TrainResult result{NeuralModel::initialize(mc, mix_seed(tc.seed, "init")), {}, 0};
    NeuralModel& model = result.model;
    model.task = task;
    model.preprocessing = {encoder.lowercase(), encoder.max_tokens(), encoder.source_id()};
    auto params = model.parameters();
    Adam adam(params);
    Rng order_rng(mix_seed(tc.seed, "order"));
    Rng drop_rng(mix_seed(tc.seed, "dropout"));

    std::vector<Tensor> best;
    double best_acc = -1.0;
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const std::size_t bs = static_cast<std::size_t>(tc.batch_size);

    for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
        order_rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t batch_no = 0;
        for (std::size_t start = 0; start < order.size(); start += bs, ++batch_no) {
            const std::size_t end = std::min(order.size(), start + bs);
            std::vector<EncodedText> batch;
            std::vector<int> targets;
            for (std::size_t k = start; k < end; ++k) {
                batch.push_back(encoder.encode(train_set[order[k]]));
                targets.push_back(labels[order[k]] ? 1 : 0);
            }
            std::vector<const Tensor*> seqs;
            for (const auto& e : batch) seqs.push_back(&e.inputs);
            try {
                Tape tape;
                auto out = forward(tape, model, seqs, true, tc.dropout_p, drop_rng);
                Var loss = cross_entropy_with_logits(out.logits, targets);
                for (auto* p : params) p->zero_grad();
                tape.backward(loss);
                for (auto* p : params) {
                    if (!p->grad.all_finite()) throw NumericError("gradient of " + p->name + " is not finite");
                }
                adam.update(params, tc);
                for (auto* p : params) {
                    if (!p->value.all_finite()) throw NumericError("update of " + p->name + " is not finite");
                }
                loss_sum += loss.value()[0] * static_cast<double>(end - start);
            } catch (const NumericError& e) {
                throw TrainingError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_no + 1) +
                                    ": " + e.what());
            }
        }
        EpochReport rep;
        rep.epoch = epoch;
        rep.train_loss = loss_sum / static_cast<double>(order.size());
        try {
            rep.dev_accuracy = dev_accuracy(model, encoder, dev_set, task);
        } catch (const NumericError& e) {
            throw TrainingError("epoch " + std::to_string(epoch) + ", dev evaluation: " + e.what());
        }
        result.epochs.push_back(rep);
        if (rep.dev_accuracy > best_acc) {
            best_acc = rep.dev_accuracy;
            result.best_epoch = epoch;
            best.clear();
            for (const auto* p : params) best.push_back(p->value);
        }
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        params[k]->value = std::move(best[k]);
        params[k]->zero_grad();
    }
    return result;
}

void write_epoch_csv(std::ostream& out, const std::vector<EpochReport>& epochs) {
    out << "epoch,train_loss,dev_accuracy\n";
    for (const auto& e : epochs) {
        out << e.epoch << ',' << format_fixed(e.train_loss, 6) << ',' << format_fixed(e.dev_accuracy, 4) << '\n';
    }
}

// ------------------------------------------------------------------ grid

std::uint64_t cell_seed(std::uint64_t base_seed, Architecture arch, int layers, int hidden) {
    return mix_seed(base_seed, to_string(arch) + "/" + std::to_string(layers) + "/" + std::to_string(hidden));
}

namespace {

unsigned thread_count(unsigned requested, std::size_t jobs) {
    unsigned n = requested;
    if (n == 0) {
        n = 1;
        if (const char* env = std::getenv("APPRAISAL_LAB_THREADS")) {
            try {
                const long long v = parse_int(env);
                if (v >= 1) n = static_cast<unsigned>(v);
            } catch (const Error&) {
                throw ConfigError(std::string("APPRAISAL_LAB_THREADS must be a positive integer, got '") + env + "'");
            }
        }
    }
    return static_cast<unsigned>(std::max<std::size_t>(1, std::min<std::size_t>(n, jobs)));
}

}  // namespace

std::vector<GridCell> grid_search(const Dataset& train_set, const Dataset& dev_set, Task task, const TrainConfig& tc,
                                  const GridSpec& spec, const InputEncoder& encoder,
                                  const std::filesystem::path& model_dir) {
    tc.validate();
    std::vector<GridCell> cells;
    for (auto arch : spec.architectures) {
        for (int l : spec.layers) {
            for (int h : spec.hidden) cells.push_back({arch, l, h, 0.0, 0});
        }
    }
    if (cells.empty()) throw ConfigError("grid has no cells");
    if (!model_dir.empty()) std::filesystem::create_directories(model_dir);

    std::vector<std::exception_ptr> errors(cells.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < cells.size(); k = next++) {
            auto& cell = cells[k];
            try {
                auto mc = ModelConfig::from(cell.architecture, cell.layers, cell.hidden, encoder.dim(), encoder.source());
                TrainConfig cell_tc = tc;
                cell_tc.seed = cell_seed(tc.seed, cell.architecture, cell.layers, cell.hidden);
                auto res = train(train_set, dev_set, task, mc, cell_tc, encoder);
                cell.best_epoch = res.best_epoch;
                cell.dev_accuracy = res.epochs[static_cast<std::size_t>(res.best_epoch - 1)].dev_accuracy;
                if (!model_dir.empty()) {
                    const std::string stem =
                        to_string(cell.architecture) + "_L" + std::to_string(cell.layers) + "_H" + std::to_string(cell.hidden);
                    save_model(model_dir / (stem + ".ckpt"), res.model);
                    std::ofstream csv(model_dir / (stem + "_epochs.csv"));
                    write_epoch_csv(csv, res.epochs);
                }
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    const unsigned n = thread_count(spec.threads, cells.size());
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < n; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return cells;
}

std::vector<GridCell> best_cells(const std::vector<GridCell>& cells) {
    std::vector<GridCell> best;
    for (const auto& c : cells) {
        auto it = std::find_if(best.begin(), best.end(), [&](const GridCell& b) { return b.architecture == c.architecture; });
        if (it == best.end()) {
            best.push_back(c);
        } else if (c.dev_accuracy > it->dev_accuracy) {
            *it = c;
        }
    }
    return best;
}

void write_grid_csv(std::ostream& out, const std::vector<GridCell>& cells) {
    std::vector<Architecture> archs;
    std::vector<std::pair<int, int>> points;
    for (const auto& c : cells) {
        if (std::find(archs.begin(), archs.end(), c.architecture) == archs.end()) archs.push_back(c.architecture);
        const std::pair<int, int> pt{c.layers, c.hidden};
        if (std::find(points.begin(), points.end(), pt) == points.end()) points.push_back(pt);
    }
    out << "layers,hidden";
    for (auto a : archs) out << ',' << to_string(a);
    out << '\n';
    for (const auto& [l, h] : points) {
        out << l << ',' << h;
        for (auto a : archs) {
            auto it = std::find_if(cells.begin(), cells.end(), [&](const GridCell& c) {
                return c.architecture == a && c.layers == l && c.hidden == h;
            });
            out << ',' << (it == cells.end() ? std::string("NA") : format_fixed(it->dev_accuracy, 4));
        }
        out << '\n';
    }
}

// ------------------------------------------------------------------ persistence

void save_model(const std::filesystem::path& path, const NeuralModel& model) {
    Checkpoint cp;
    cp.meta = {
        {"kind", "neural"},
        {"version", kLibraryVersion},
        {"architecture", to_string(model.config.architecture())},
        {"layers", model.config.layers},
        {"hidden", model.config.hidden},
        {"input_dim", model.config.input_dim},
        {"source", model.config.source == InputSource::StaticTable ? "static_table" : "contextual_file"},
        {"task", to_string(model.task)},
        {"preprocessing",
         {{"lowercase", model.preprocessing.lowercase},
          {"max_tokens", model.preprocessing.max_tokens},
          {"source_id", model.preprocessing.source_id}}},
    };
    for (const auto* p : model.parameters()) cp.add(p->name, p->value);
    save_checkpoint(path, cp);
}

NeuralModel load_model(const std::filesystem::path& path) {
    const auto cp = load_checkpoint(path);
    if (cp.meta.value("kind", "") != "neural") throw LoadError("'" + path.string() + "' is not a neural model checkpoint");
    try {
        const auto& m = cp.meta;
        const auto source = m.at("source").get<std::string>() == "contextual_file" ? InputSource::ContextualFile
                                                                                     : InputSource::StaticTable;
        auto config = ModelConfig::from(parse_architecture(m.at("architecture").get<std::string>()), m.at("layers").get<int>(),
                                        m.at("hidden").get<int>(), m.at("input_dim").get<std::size_t>(), source);
        NeuralModel model = NeuralModel::initialize(config, 0);
        model.task = parse_task(m.at("task").get<std::string>());
        const auto& pre = m.at("preprocessing");
        model.preprocessing = {pre.at("lowercase").get<bool>(), pre.at("max_tokens").get<std::size_t>(),
                               pre.at("source_id").get<std::string>()};
        for (auto* p : model.parameters()) {
            const Tensor& t = cp.array(p->name);
            if (!t.same_shape(p->value)) {
                throw LoadError("array '" + p->name + "' has shape " + t.shape_string() + ", expected " +
                                p->value.shape_string());
            }
            p->value = t;
            p->zero_grad();
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("malformed neural checkpoint metadata in '" + path.string() + "': " + e.what());
    }
}

}  // namespace appraisal::neural
