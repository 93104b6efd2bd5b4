#pragma once

// Fixtures shared by the unit and acceptance tests.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "appraisal/corpus.hpp"
#include "appraisal/embeddings.hpp"
#include "appraisal/rng.hpp"

namespace testing {

inline std::filesystem::path scratch_dir() {
    static const auto dir = [] {
        auto d = std::filesystem::temp_directory_path() /
                 ("appraisal-tests-" + std::to_string(static_cast<long long>(::getpid())));
        std::filesystem::create_directories(d);
        return d;
    }();
    return dir;
}

inline std::filesystem::path write_file(const std::string& name, const std::string& contents) {
    static std::atomic<int> counter{0};
    auto path = scratch_dir() / (std::to_string(counter++) + "_" + name);
    std::ofstream(path, std::ios::binary) << contents;
    return path;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline appraisal::Moment moment(std::string id, std::string text, std::optional<bool> agency,
                                std::optional<bool> social = std::nullopt) {
    return {std::move(id), std::move(text), agency, social};
}

/// Separable corpus: each sentence holds one class marker ("yesmarker" or
/// "nomarker") among filler words. Fillers are not in the embedding table,
/// so only the markers carry input signal. Labels are set for both tasks.
struct SyntheticCorpus {
    appraisal::Dataset data;
    std::vector<std::size_t> marker_position;
    appraisal::EmbeddingTable table;
};

inline SyntheticCorpus synthetic_corpus(std::size_t n = 100, std::size_t dim = 16, std::uint64_t seed = 42) {
    appraisal::Rng rng(seed);
    SyntheticCorpus c;
    std::vector<appraisal::Moment> ms;
    for (std::size_t i = 0; i < n; ++i) {
        const bool yes = i % 2 == 0;
        const std::size_t len = 4 + rng.below(7);
        const std::size_t pos = rng.below(len);
        std::string text;
        for (std::size_t t = 0; t < len; ++t) {
            if (t) text += ' ';
            text += t == pos ? (yes ? "yesmarker" : "nomarker") : "filler" + std::to_string(rng.below(20));
        }
        ms.push_back(moment("s" + std::to_string(i), text, yes, yes));
        c.marker_position.push_back(pos);
    }
    c.data = appraisal::Dataset(std::move(ms));
    std::vector<double> rows;
    for (std::size_t i = 0; i < 2 * dim; ++i) rows.push_back(rng.uniform(-1, 1));
    c.table = appraisal::EmbeddingTable({"yesmarker", "nomarker"}, dim, std::move(rows));
    return c;
}

/// Random table over the given words.
inline appraisal::EmbeddingTable random_table(const std::vector<std::string>& words, std::size_t dim,
                                              std::uint64_t seed) {
    appraisal::Rng rng(seed);
    std::vector<double> rows;
    for (std::size_t i = 0; i < words.size() * dim; ++i) rows.push_back(rng.uniform(-1, 1));
    return appraisal::EmbeddingTable(words, dim, std::move(rows));
}

}  // namespace testing
