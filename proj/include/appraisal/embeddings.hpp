#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "appraisal/tensor.hpp"

namespace appraisal {

/// Static word vectors. Out-of-vocabulary tokens map to the zero vector.
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    EmbeddingTable(std::vector<std::string> tokens, std::size_t dim, std::vector<double> rows);

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return tokens_.size(); }
    bool contains(const std::string& token) const { return index_.count(token) != 0; }
    const std::vector<std::string>& tokens() const { return tokens_; }
    /// Row-major V x dim storage.
    const std::vector<double>& data() const { return rows_; }
    std::span<const double> row(const std::string& token) const;

private:
    std::size_t dim_ = 0;
    std::vector<std::string> tokens_;
    std::vector<double> rows_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// `token v1 ... vd` per line, space separated; d comes from the first line.
/// A repeated token keeps its last row (a warning goes to stderr). When `keep`
/// is given, rows for other tokens are validated but not stored, which keeps
/// multi-gigabyte vector files loadable.
EmbeddingTable load_embedding_text(const std::filesystem::path& path,
                                   const std::unordered_set<std::string>* keep = nullptr);
EmbeddingTable load_embedding_text(std::istream& in, const std::string& source_name = "<stream>",
                                   const std::unordered_set<std::string>* keep = nullptr);

/// T x d matrix of rows for `tokens`; OOV rows are zero. An empty token list
/// gives a 0 x d matrix.
tensor::Tensor embed_sequence(const std::vector<std::string>& tokens, const EmbeddingTable& table);

/// Per-sentence contextual vectors exported by an external encoder.
class ContextualSequenceFile {
public:
    ContextualSequenceFile() = default;
    explicit ContextualSequenceFile(std::size_t dim) : dim_(dim) {}

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return sentences_.size(); }
    bool contains(const std::string& id) const { return sentences_.count(id) != 0; }

    /// Throws KeyError for unknown ids.
    const tensor::Tensor& lookup(const std::string& id) const;
    /// Adds or replaces; the matrix must be length x dim.
    void insert(const std::string& id, tensor::Tensor matrix);
    /// Ids in insertion order.
    const std::vector<std::string>& ids() const { return order_; }

    /// Header `CTXEMB v1 <d_ctx> <n_sentences>`, then per sentence `<id> <length>`
    /// followed by `length` lines of d_ctx floats. Floats are written in
    /// shortest round-trip form.
    void write(const std::filesystem::path& path) const;

private:
    std::size_t dim_ = 0;
    std::map<std::string, tensor::Tensor> sentences_;
    std::vector<std::string> order_;
};

ContextualSequenceFile load_contextual(const std::filesystem::path& path);
ContextualSequenceFile load_contextual(std::istream& in, const std::string& source_name = "<stream>");

}  // namespace appraisal
