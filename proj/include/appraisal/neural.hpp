#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "appraisal/corpus.hpp"
#include "appraisal/embeddings.hpp"
#include "appraisal/tensor.hpp"

namespace appraisal::neural {

using tensor::Parameter;
using tensor::Tape;
using tensor::Tensor;
using tensor::Var;

enum class Architecture { Lstm, BiLstm, LstmAttention, BiLstmAttention };

std::string to_string(Architecture arch);
Architecture parse_architecture(const std::string& name);
bool is_bidirectional(Architecture arch);
bool has_attention(Architecture arch);

enum class InputSource { StaticTable, ContextualFile };

struct ModelConfig {
    int layers = 1;
    int hidden = 128;
    bool bidirectional = false;
    bool attention = false;
    InputSource source = InputSource::StaticTable;
    std::size_t input_dim = 300;

    Architecture architecture() const;
    static ModelConfig from(Architecture arch, int layers, int hidden, std::size_t input_dim,
                            InputSource source = InputSource::StaticTable);
    std::size_t output_dim() const { return static_cast<std::size_t>(hidden) * (bidirectional ? 2 : 1); }
    void validate() const;
};

/// Grid axes used for the GloVe experiments.
inline const std::vector<int> kGridLayers{1, 2};
inline const std::vector<int> kGridHidden{128, 256, 512};

struct TrainConfig {
    int batch_size = 64;
    double dropout_p = 0.75;
    int epochs = 20;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Per-source presets: static GloVe tables train 20 epochs at dropout 0.75,
/// CoVe-style vectors 4 epochs at 0.75, ELMo-style vectors 8 epochs at 0.5.
enum class EmbeddingPreset { Glove, Cove, Elmo };
TrainConfig preset_train_config(EmbeddingPreset preset);
EmbeddingPreset parse_preset(const std::string& name);

// ------------------------------------------------------------------ inputs

/// A tokenized moment and its T x d network input.
struct EncodedText {
    std::vector<std::string> tokens;
    Tensor inputs;
};

/// Maps moments to input matrices. Sequences are cut at `max_tokens`.
class InputEncoder {
public:
    virtual ~InputEncoder() = default;
    virtual std::size_t dim() const = 0;
    virtual InputSource source() const = 0;
    virtual std::string source_id() const = 0;
    virtual bool lowercase() const = 0;
    virtual std::size_t max_tokens() const = 0;
    /// Throws InputError when the moment tokenizes to nothing.
    virtual EncodedText encode(const Moment& moment) const = 0;
};

class StaticEmbeddingInput final : public InputEncoder {
public:
    StaticEmbeddingInput(const EmbeddingTable& table, std::string source_id, bool lowercase = true,
                         std::size_t max_tokens = 128)
        : table_(table), id_(std::move(source_id)), lowercase_(lowercase), max_tokens_(max_tokens) {}

    std::size_t dim() const override { return table_.dim(); }
    InputSource source() const override { return InputSource::StaticTable; }
    std::string source_id() const override { return id_; }
    bool lowercase() const override { return lowercase_; }
    std::size_t max_tokens() const override { return max_tokens_; }
    EncodedText encode(const Moment& moment) const override;

private:
    const EmbeddingTable& table_;
    std::string id_;
    bool lowercase_;
    std::size_t max_tokens_;
};

/// Looks vectors up by moment id; the stored row count must equal the token count.
class ContextualInput final : public InputEncoder {
public:
    ContextualInput(const ContextualSequenceFile& file, std::string source_id, bool lowercase = true,
                    std::size_t max_tokens = 128)
        : file_(file), id_(std::move(source_id)), lowercase_(lowercase), max_tokens_(max_tokens) {}

    std::size_t dim() const override { return file_.dim(); }
    InputSource source() const override { return InputSource::ContextualFile; }
    std::string source_id() const override { return id_; }
    bool lowercase() const override { return lowercase_; }
    std::size_t max_tokens() const override { return max_tokens_; }
    EncodedText encode(const Moment& moment) const override;

private:
    const ContextualSequenceFile& file_;
    std::string id_;
    bool lowercase_;
    std::size_t max_tokens_;
};

// ------------------------------------------------------------------ parameters

/// Gates fused column-wise in the order input, forget, cell, output.
struct LstmParams {
    Parameter w_input;   // d x 4H
    Parameter w_hidden;  // H x 4H
    Parameter bias;      // 4H
    std::size_t hidden = 0;
};

struct AttentionParams {
    Parameter projection;  // Hout x Hout
    Parameter bias;        // Hout
    Parameter score;       // Hout x 1
};

struct HeadParams {
    Parameter weight;  // Hout x 2, column 0 = "no", column 1 = "yes"
    Parameter bias;    // 2
};

struct Preprocessing {
    bool lowercase = true;
    std::size_t max_tokens = 128;
    std::string source_id;
};

struct NeuralModel {
    ModelConfig config;
    Preprocessing preprocessing;
    Task task = Task::Agency;
    /// layers[l][0] forward, layers[l][1] backward (bidirectional only).
    std::vector<std::vector<LstmParams>> layers;
    std::optional<AttentionParams> attention;
    HeadParams head;

    /// Uniform(-k, k) with k = 1/sqrt(H) for recurrent weights and
    /// k = 1/sqrt(Hout) for attention and head.
    static NeuralModel initialize(const ModelConfig& config, std::uint64_t seed);
    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;
};

// ------------------------------------------------------------------ forward pieces

/// Parameters placed on a tape: trainable when bound from a mutable
/// Parameter, constant when bound from a const one.
struct LstmVars {
    Var w_input, w_hidden, bias;
    std::size_t hidden = 0;
};
struct AttentionVars {
    Var projection, bias, score;
};
struct HeadVars {
    Var weight, bias;
};

LstmVars bind(Tape& tape, LstmParams& p);
LstmVars bind(Tape& tape, const LstmParams& p);
AttentionVars bind(Tape& tape, AttentionParams& p);
AttentionVars bind(Tape& tape, const AttentionParams& p);
HeadVars bind(Tape& tape, HeadParams& p);
HeadVars bind(Tape& tape, const HeadParams& p);

/// One recurrent pass. `masks[t]` is a rows x 1 column: 1 where step t is inside
/// the sequence; outside it the state is carried unchanged, so padding never
/// leaks into a sequence. `reverse` walks t = T-1 .. 0 (the state stays at h0
/// until a sequence's last token). Returns the hidden state at every step.
std::vector<Var> lstm_forward(Tape& tape, const std::vector<Var>& inputs, const LstmVars& params, Var h0, Var c0,
                              const std::vector<Var>& masks, bool reverse = false);

/// Forward and reversed passes concatenated per step (rows x 2H each).
std::vector<Var> bilstm_forward(Tape& tape, const std::vector<Var>& inputs, const LstmVars& fwd, const LstmVars& bwd,
                                const std::vector<Var>& masks);

struct AttentionOutput {
    Var context;  // rows x Hout
    Var weights;  // rows x T
};

/// e_t = v . tanh(W h_t + b); weights = masked_softmax(e); context = sum_t weight_t h_t.
AttentionOutput attention_pool(Tape& tape, const std::vector<Var>& hiddens, const Tensor& mask,
                               const AttentionVars& params);

/// pooled x W + b -> (rows x 2) logits.
Var classify(Var pooled, const HeadVars& head);

// Single-sequence conveniences (no tape exposed).

/// T x d inputs -> T x H hidden states. Empty h0/c0 mean zero state.
Tensor lstm_forward(const Tensor& inputs, const LstmParams& params, const std::vector<double>& h0 = {},
                    const std::vector<double>& c0 = {});
/// T x d inputs -> T x 2H; columns [0, H) forward, [H, 2H) reversed pass.
Tensor bilstm_forward(const Tensor& inputs, const LstmParams& fwd, const LstmParams& bwd);
struct PooledSequence {
    std::vector<double> context;
    std::vector<double> weights;
};
/// `mask` has T entries (nonzero = valid); empty means all valid.
PooledSequence attention_pool(const Tensor& hiddens, const std::vector<double>& mask, const AttentionParams& params);

struct ForwardOutput {
    Var logits;
    std::optional<Var> attention;
    std::size_t steps = 0;
};

/// Full network over a batch of T_i x d sequences (each T_i >= 1). Sequences
/// are padded to max(T_i, pad_to) and each is processed only over its own
/// length. The mutable overload records trainable parameters.
ForwardOutput forward(Tape& tape, NeuralModel& model, const std::vector<const Tensor*>& sequences, bool training,
                      double dropout_p, Rng& rng, std::size_t pad_to = 0);
ForwardOutput forward(Tape& tape, const NeuralModel& model, const std::vector<const Tensor*>& sequences,
                      std::size_t pad_to = 0);

// ------------------------------------------------------------------ training

struct EpochReport {
    int epoch = 0;
    double train_loss = 0;
    double dev_accuracy = 0;
};

struct TrainResult {
    NeuralModel model;
    std::vector<EpochReport> epochs;
    int best_epoch = 0;
};

/// Mini-batch Adam on mean cross-entropy; returns the parameters of the epoch
/// with the highest dev accuracy (earliest on ties).
TrainResult train(const Dataset& train_set, const Dataset& dev_set, Task task, const ModelConfig& mc,
                  const TrainConfig& tc, const InputEncoder& encoder);

/// `epoch,train_loss,dev_accuracy`
void write_epoch_csv(std::ostream& out, const std::vector<EpochReport>& epochs);

// ------------------------------------------------------------------ inference

struct NeuralPrediction {
    bool label = false;
    /// softmax P(yes)
    double probability = 0;
    std::vector<std::string> tokens;
    /// Attention weights over `tokens`; empty for attention-free models.
    std::vector<double> weights;
};

std::vector<NeuralPrediction> predict(const NeuralModel& model, const InputEncoder& encoder, const Dataset& data,
                                      std::size_t batch_size = 64);
NeuralPrediction predict_one(const NeuralModel& model, const InputEncoder& encoder, const Moment& moment);
/// Throws UsageError for attention-free models.
NeuralPrediction predict_with_attention(const NeuralModel& model, const InputEncoder& encoder, const Moment& moment);
NeuralPrediction predict_with_attention(const NeuralModel& model, const InputEncoder& encoder, const std::string& text);

double dev_accuracy(const NeuralModel& model, const InputEncoder& encoder, const Dataset& dev, Task task);

// ------------------------------------------------------------------ grid

struct GridCell {
    Architecture architecture = Architecture::Lstm;
    int layers = 1;
    int hidden = 128;
    double dev_accuracy = 0;
    int best_epoch = 0;
};

struct GridSpec {
    std::vector<Architecture> architectures{Architecture::Lstm, Architecture::BiLstm, Architecture::LstmAttention,
                                            Architecture::BiLstmAttention};
    std::vector<int> layers = kGridLayers;
    std::vector<int> hidden = kGridHidden;
    /// 0 = read APPRAISAL_LAB_THREADS, default 1.
    unsigned threads = 0;
};

/// Seed for one grid cell, derived from the base seed and the cell coordinates.
std::uint64_t cell_seed(std::uint64_t base_seed, Architecture arch, int layers, int hidden);

/// Trains every (architecture, layers, hidden) cell; cells run in parallel on
/// independent tapes. Result order: architectures outer, then layers, then hidden.
std::vector<GridCell> grid_search(const Dataset& train_set, const Dataset& dev_set, Task task, const TrainConfig& tc,
                                  const GridSpec& spec, const InputEncoder& encoder,
                                  const std::filesystem::path& model_dir = {});

/// Best cell per architecture, ties to the earlier cell.
std::vector<GridCell> best_cells(const std::vector<GridCell>& cells);

/// `layers,hidden,<arch>...` one row per grid point, dev accuracy with 4 decimals.
void write_grid_csv(std::ostream& out, const std::vector<GridCell>& cells);

// ------------------------------------------------------------------ persistence

void save_model(const std::filesystem::path& path, const NeuralModel& model);
NeuralModel load_model(const std::filesystem::path& path);

}  // namespace appraisal::neural
