#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "appraisal/corpus.hpp"

namespace appraisal {

/// Joins the tokens of a multi-word gram. Tokens never contain it.
inline constexpr char kGramSeparator = '\x1f';

/// Maximal runs of ASCII letters, digits and non-ASCII bytes; everything
/// else separates and is dropped. Lowercasing is ASCII-only.
std::vector<std::string> tokenize(std::string_view text, bool lowercase = true);

struct NgramConfig {
    int n_min = 1;
    int n_max = 4;
    bool lowercase = true;
    int min_document_frequency = 1;

    void validate() const;
    friend bool operator==(const NgramConfig&, const NgramConfig&) = default;
};

/// All contiguous grams for n in [n_min, n_max], shortest first, in position order.
std::vector<std::string> extract_ngrams(const std::vector<std::string>& tokens, const NgramConfig& config);

class SparseVector {
public:
    using Entry = std::pair<std::uint32_t, double>;

    SparseVector() = default;
    explicit SparseVector(std::size_t dim) : dim_(dim) {}
    /// Sorts, merges duplicates by summation and drops zeros. Throws ShapeError
    /// on out-of-range indices and DataError on non-finite values.
    SparseVector(std::size_t dim, std::vector<Entry> entries);

    std::size_t dim() const { return dim_; }
    std::size_t nnz() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::vector<Entry>& entries() const { return entries_; }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    double norm2() const;
    /// Value at index (0 when absent).
    double at(std::uint32_t index) const;

    friend bool operator==(const SparseVector&, const SparseVector&) = default;

private:
    std::size_t dim_ = 0;
    std::vector<Entry> entries_;
};

/// Gram index in lexicographic byte order over the kept grams.
class Vocabulary {
public:
    Vocabulary() = default;
    Vocabulary(NgramConfig config, std::vector<std::string> grams, std::vector<std::uint32_t> document_frequency,
               std::size_t document_count);

    std::size_t size() const { return grams_.size(); }
    const NgramConfig& config() const { return config_; }
    const std::vector<std::string>& grams() const { return grams_; }
    const std::vector<std::uint32_t>& document_frequency() const { return df_; }
    std::size_t document_count() const { return document_count_; }

    /// Index of `gram`, or -1.
    long long find(const std::string& gram) const;
    /// Order-sensitive FNV-1a over grams and config; identifies the vocabulary in model files.
    std::uint64_t fingerprint() const;

    /// Writes `gram<TAB>index<TAB>df` per line in index order; the gram
    /// separator is written as a space.
    void dump(const std::filesystem::path& path) const;

private:
    NgramConfig config_;
    std::vector<std::string> grams_;
    std::vector<std::uint32_t> df_;
    std::size_t document_count_ = 0;
    std::unordered_map<std::string, std::uint32_t> index_;
};

Vocabulary fit_vocabulary(const std::vector<std::vector<std::string>>& token_lists, const NgramConfig& config);
Vocabulary fit_vocabulary(const Dataset& corpus, const NgramConfig& config);

SparseVector vectorize_counts(const std::vector<std::string>& tokens, const Vocabulary& vocab);
SparseVector vectorize_counts(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                              const NgramConfig& config);

/// Smoothed idf, ln((1+N)/(1+df)) + 1, with L2 row normalization.
class TfidfModel {
public:
    TfidfModel() = default;
    explicit TfidfModel(std::vector<double> idf, std::size_t document_count = 0);

    const std::vector<double>& idf() const { return idf_; }
    std::size_t document_count() const { return document_count_; }
    std::size_t dim() const { return idf_.size(); }

    SparseVector transform(const SparseVector& counts) const;

private:
    std::vector<double> idf_;
    std::size_t document_count_ = 0;
};

TfidfModel fit_tfidf(const std::vector<SparseVector>& count_vectors, const Vocabulary& vocab);
SparseVector transform_tfidf(const TfidfModel& model, const SparseVector& v);

enum class FeatureKind { Bow, BowTfidf };
std::string to_string(FeatureKind kind);
FeatureKind parse_feature_kind(const std::string& name);

/// Text -> sparse features, fitted once on a training corpus.
struct Featurizer {
    FeatureKind kind = FeatureKind::Bow;
    Vocabulary vocab;
    TfidfModel tfidf;

    static Featurizer fit(const Dataset& train, const NgramConfig& config, FeatureKind kind);
    SparseVector operator()(std::string_view text) const;
    std::vector<SparseVector> transform(const Dataset& data) const;
};

}  // namespace appraisal
