#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "appraisal/corpus.hpp"
#include "appraisal/neural.hpp"

namespace appraisal::report {

struct HeatmapLabels {
    Task task = Task::Agency;
    bool predicted = false;
    std::optional<bool> gold;
    /// Shown in the caption when non-empty.
    std::string id;
};

struct HeatmapDoc {
    std::vector<std::string> tokens;
    std::vector<double> weights;
    HeatmapLabels labels;
    /// Standalone HTML5 page holding this one sentence.
    std::string html;
};

/// Token cell alpha = weight / max(weights), printed with 6 decimals.
/// Throws UsageError on empty input, a length mismatch, negative or
/// non-finite weights, or weights not summing to 1 within 1e-6.
HeatmapDoc render_heatmap(const std::vector<std::string>& tokens, const std::vector<double>& weights,
                          const HeatmapLabels& labels);

/// One HTML5 page holding several sentences.
std::string render_heatmap_page(const std::vector<HeatmapDoc>& docs, const std::string& title);

std::string html_escape(std::string_view text);

/// Dataset indices of the given ids, in the given order. Unknown id -> KeyError.
std::vector<std::size_t> select_by_id(const Dataset& data, const std::vector<std::string>& ids);

/// Seeded sample of up to `per_class` moments with gold "yes" followed by up to
/// `per_class` with gold "no".
std::vector<std::size_t> sample_per_class(const Dataset& data, Task task, std::size_t per_class, std::uint64_t seed);

/// Runs the attention model over the chosen moments and renders each.
std::vector<HeatmapDoc> heatmaps(const neural::NeuralModel& model, const neural::InputEncoder& encoder,
                                 const Dataset& data, const std::vector<std::size_t>& indices, Task task);

struct RankedWord {
    std::string word;
    double score = 0;
    /// Number of selected moments containing the word.
    std::size_t count = 0;
};

struct WordRanking {
    Task task = Task::Agency;
    bool positive_class = true;
    std::size_t k = 35;
    std::vector<RankedWord> entries;
};

struct RankOptions {
    bool positive_class = true;
    std::size_t k = 35;
    std::size_t min_count = 5;
    /// Select moments by gold label; false selects by the model's prediction.
    bool use_gold = true;
};

/// Sums each word's attention weight over the selected moments, drops words seen
/// in fewer than min_count moments and keeps the top k (score descending, then
/// word ascending). Throws ReportError when nothing survives.
WordRanking rank_words(const neural::NeuralModel& model, const neural::InputEncoder& encoder, const Dataset& data,
                       Task task, const RankOptions& options = {});

/// Same aggregation over precomputed (tokens, weights) pairs.
std::vector<RankedWord> rank_attention(const std::vector<std::vector<std::string>>& tokens,
                                       const std::vector<std::vector<double>>& weights, std::size_t k,
                                       std::size_t min_count);

/// `rank,word,score,count`, score with 6 decimals.
void write_ranking_csv(std::ostream& out, const WordRanking& ranking);

}  // namespace appraisal::report
