#include "appraisal/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "appraisal/errors.hpp"
#include "appraisal/rng.hpp"
#include "appraisal/text.hpp"

namespace appraisal {

std::vector<std::string> tokenize(std::string_view text, bool lowercase) {
    std::vector<std::string> tokens;
    std::string current;
    for (char raw : text) {
        const auto c = static_cast<unsigned char>(raw);
        const bool word = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
        if (word) {
            current.push_back(lowercase && c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : raw);
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

void NgramConfig::validate() const {
    if (n_min < 1 || n_max < n_min) {
        throw ConfigError("n-gram range must satisfy 1 <= n_min <= n_max (got " + std::to_string(n_min) + ".." +
                          std::to_string(n_max) + ")");
    }
    if (min_document_frequency < 1) throw ConfigError("min_document_frequency must be >= 1");
}

std::vector<std::string> extract_ngrams(const std::vector<std::string>& tokens, const NgramConfig& config) {
    config.validate();
    std::vector<std::string> grams;
    const std::size_t len = tokens.size();
    for (int n = config.n_min; n <= config.n_max; ++n) {
        const auto width = static_cast<std::size_t>(n);
        if (width > len) break;
        for (std::size_t start = 0; start + width <= len; ++start) {
            std::string gram = tokens[start];
            for (std::size_t k = 1; k < width; ++k) {
                gram.push_back(kGramSeparator);
                gram += tokens[start + k];
            }
            grams.push_back(std::move(gram));
        }
    }
    return grams;
}

SparseVector::SparseVector(std::size_t dim, std::vector<Entry> entries) : dim_(dim) {
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.first < b.first; });
    for (const auto& [index, value] : entries) {
        if (index >= dim) {
            throw ShapeError("sparse index " + std::to_string(index) + " out of range for dimension " +
                             std::to_string(dim));
        }
        if (!std::isfinite(value)) throw DataError("non-finite feature value at index " + std::to_string(index));
        if (!entries_.empty() && entries_.back().first == index) {
            entries_.back().second += value;
        } else {
            entries_.emplace_back(index, value);
        }
    }
    std::erase_if(entries_, [](const Entry& e) { return e.second == 0.0; });
}

double SparseVector::norm2() const {
    double sum = 0;
    for (const auto& e : entries_) sum += e.second * e.second;
    return std::sqrt(sum);
}

double SparseVector::at(std::uint32_t index) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), index,
                               [](const Entry& e, std::uint32_t i) { return e.first < i; });
    return it != entries_.end() && it->first == index ? it->second : 0.0;
}

Vocabulary::Vocabulary(NgramConfig config, std::vector<std::string> grams, std::vector<std::uint32_t> df,
                       std::size_t document_count)
    : config_(config), grams_(std::move(grams)), df_(std::move(df)), document_count_(document_count) {
    if (grams_.size() != df_.size()) throw ShapeError("vocabulary gram/df size mismatch");
    index_.reserve(grams_.size());
    for (std::size_t i = 0; i < grams_.size(); ++i) {
        if (!index_.emplace(grams_[i], static_cast<std::uint32_t>(i)).second) {
            throw DataError("duplicate gram in vocabulary");
        }
    }
}

long long Vocabulary::find(const std::string& gram) const {
    auto it = index_.find(gram);
    return it == index_.end() ? -1 : static_cast<long long>(it->second);
}

std::uint64_t Vocabulary::fingerprint() const {
    std::string head = std::to_string(config_.n_min) + "," + std::to_string(config_.n_max) + "," +
                       (config_.lowercase ? "1" : "0") + "," + std::to_string(config_.min_document_frequency);
    std::uint64_t h = fnv1a(head);
    for (const auto& g : grams_) {
        h = fnv1a(g, h);
        h = fnv1a(std::string_view("\n", 1), h);
    }
    return h;
}

void Vocabulary::dump(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write '" + path.string() + "'");
    for (std::size_t i = 0; i < grams_.size(); ++i) {
        std::string shown = grams_[i];
        std::replace(shown.begin(), shown.end(), kGramSeparator, ' ');
        out << shown << '\t' << i << '\t' << df_[i] << '\n';
    }
}

Vocabulary fit_vocabulary(const std::vector<std::vector<std::string>>& token_lists, const NgramConfig& config) {
    config.validate();
    if (token_lists.empty()) throw FitError("cannot fit a vocabulary on an empty corpus");
    std::map<std::string, std::uint32_t> df;
    for (const auto& tokens : token_lists) {
        auto grams = extract_ngrams(tokens, config);
        std::sort(grams.begin(), grams.end());
        grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
        for (auto& g : grams) ++df[std::move(g)];
    }
    std::vector<std::string> kept;
    std::vector<std::uint32_t> kept_df;
    for (auto& [gram, count] : df) {
        if (count >= static_cast<std::uint32_t>(config.min_document_frequency)) {
            kept.push_back(gram);
            kept_df.push_back(count);
        }
    }
    if (kept.empty()) throw FitError("vocabulary is empty after min_document_frequency filtering");
    return Vocabulary(config, std::move(kept), std::move(kept_df), token_lists.size());
}

Vocabulary fit_vocabulary(const Dataset& corpus, const NgramConfig& config) {
    std::vector<std::vector<std::string>> token_lists;
    token_lists.reserve(corpus.size());
    for (const auto& m : corpus) token_lists.push_back(tokenize(m.text, config.lowercase));
    return fit_vocabulary(token_lists, config);
}

SparseVector vectorize_counts(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
    std::vector<SparseVector::Entry> entries;
    for (const auto& gram : extract_ngrams(tokens, vocab.config())) {
        const auto idx = vocab.find(gram);
        if (idx >= 0) entries.emplace_back(static_cast<std::uint32_t>(idx), 1.0);
    }
    return SparseVector(vocab.size(), std::move(entries));
}

SparseVector vectorize_counts(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                              const NgramConfig& config) {
    if (config.n_min != vocab.config().n_min || config.n_max != vocab.config().n_max) {
        throw ConfigError("n-gram range differs from the one the vocabulary was fitted with");
    }
    return vectorize_counts(tokens, vocab);
}

TfidfModel::TfidfModel(std::vector<double> idf, std::size_t document_count)
    : idf_(std::move(idf)), document_count_(document_count) {
    for (double w : idf_) {
        if (!(w > 0) || !std::isfinite(w)) throw DataError("idf weights must be positive and finite");
    }
}

SparseVector TfidfModel::transform(const SparseVector& counts) const {
    if (counts.dim() != idf_.size()) {
        throw ShapeError("tf-idf dimension " + std::to_string(idf_.size()) + " does not match vector dimension " +
                         std::to_string(counts.dim()));
    }
    std::vector<SparseVector::Entry> weighted;
    weighted.reserve(counts.nnz());
    double sq = 0;
    for (const auto& [i, c] : counts) {
        const double w = c * idf_[i];
        weighted.emplace_back(i, w);
        sq += w * w;
    }
    if (sq > 0) {
        const double norm = std::sqrt(sq);
        for (auto& e : weighted) e.second /= norm;
    }
    return SparseVector(counts.dim(), std::move(weighted));
}

TfidfModel fit_tfidf(const std::vector<SparseVector>& count_vectors, const Vocabulary& vocab) {
    std::vector<std::size_t> df(vocab.size(), 0);
    for (const auto& v : count_vectors) {
        if (v.dim() != vocab.size()) {
            throw ShapeError("count vector dimension " + std::to_string(v.dim()) + " does not match vocabulary size " +
                             std::to_string(vocab.size()));
        }
        for (const auto& e : v) ++df[e.first];
    }
    const double n = static_cast<double>(count_vectors.size());
    std::vector<double> idf(vocab.size());
    for (std::size_t t = 0; t < idf.size(); ++t) {
        idf[t] = std::log((1.0 + n) / (1.0 + static_cast<double>(df[t]))) + 1.0;
    }
    return TfidfModel(std::move(idf), count_vectors.size());
}

SparseVector transform_tfidf(const TfidfModel& model, const SparseVector& v) { return model.transform(v); }

std::string to_string(FeatureKind kind) { return kind == FeatureKind::Bow ? "bow" : "bow-tfidf"; }

FeatureKind parse_feature_kind(const std::string& name) {
    const auto lower = ascii_lower(name);
    if (lower == "bow") return FeatureKind::Bow;
    if (lower == "bow-tfidf" || lower == "bow+tfidf" || lower == "tfidf") return FeatureKind::BowTfidf;
    throw ConfigError("unknown feature kind '" + name + "' (expected bow or bow-tfidf)");
}

Featurizer Featurizer::fit(const Dataset& train, const NgramConfig& config, FeatureKind kind) {
    Featurizer f;
    f.kind = kind;
    f.vocab = fit_vocabulary(train, config);
    if (kind == FeatureKind::BowTfidf) {
        std::vector<SparseVector> counts;
        counts.reserve(train.size());
        for (const auto& m : train) counts.push_back(vectorize_counts(tokenize(m.text, config.lowercase), f.vocab));
        f.tfidf = fit_tfidf(counts, f.vocab);
    }
    return f;
}

SparseVector Featurizer::operator()(std::string_view text) const {
    auto counts = vectorize_counts(tokenize(text, vocab.config().lowercase), vocab);
    return kind == FeatureKind::BowTfidf ? tfidf.transform(counts) : counts;
}

std::vector<SparseVector> Featurizer::transform(const Dataset& data) const {
    std::vector<SparseVector> out;
    out.reserve(data.size());
    for (const auto& m : data) out.push_back((*this)(m.text));
    return out;
}

}  // namespace appraisal
