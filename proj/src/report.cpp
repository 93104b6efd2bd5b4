#include "appraisal/report.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "appraisal/csv.hpp"
#include "appraisal/errors.hpp"
#include "appraisal/text.hpp"

namespace appraisal::report {

std::string html_escape(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (char c : text) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&#39;"; break;
            default: out += c;
        }
    }
    return out;
}

namespace {

const char* yes_no(bool v) { return v ? "yes" : "no"; }

constexpr const char* kStyle =
    "body{font-family:sans-serif;margin:2em}"
    "figure{margin:0 0 1.5em 0}"
    "figcaption{font-size:0.85em;color:#444;margin-bottom:0.3em}"
    ".tok{padding:0.1em 0.2em;margin:0 0.05em;border-radius:0.2em}";

std::string figure_html(const HeatmapDoc& doc) {
    const double peak = *std::max_element(doc.weights.begin(), doc.weights.end());
    std::ostringstream out;
    out << "<figure class=\"heatmap\">\n<figcaption>";
    if (!doc.labels.id.empty()) out << "id " << html_escape(doc.labels.id) << "; ";
    out << "task: " << to_string(doc.labels.task) << "; predicted: " << yes_no(doc.labels.predicted)
        << "; gold: " << (doc.labels.gold ? yes_no(*doc.labels.gold) : "unknown") << "</figcaption>\n<p>";
    for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
        const double alpha = peak > 0 ? doc.weights[i] / peak : 0.0;
        if (i) out << ' ';
        out << "<span class=\"tok\" data-weight=\"" << format_fixed(doc.weights[i], 6)
            << "\" style=\"background-color: rgba(220, 38, 38, " << format_fixed(alpha, 6) << ")\">"
            << html_escape(doc.tokens[i]) << "</span>";
    }
    out << "</p>\n</figure>\n";
    return out.str();
}

std::string page(const std::string& title, const std::string& body) {
    std::ostringstream out;
    out << "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>" << html_escape(title)
        << "</title>\n<style>" << kStyle << "</style>\n</head>\n<body>\n"
        << body << "</body>\n</html>\n";
    return out.str();
}

}  // namespace

HeatmapDoc render_heatmap(const std::vector<std::string>& tokens, const std::vector<double>& weights,
                          const HeatmapLabels& labels) {
    if (tokens.empty()) throw UsageError("render_heatmap: no tokens");
    if (tokens.size() != weights.size()) {
        throw UsageError("render_heatmap: " + std::to_string(tokens.size()) + " tokens but " +
                         std::to_string(weights.size()) + " weights");
    }
    double total = 0;
    for (double w : weights) {
        if (!std::isfinite(w) || w < 0) throw UsageError("render_heatmap: weights must be finite and nonnegative");
        total += w;
    }
    if (std::fabs(total - 1.0) > 1e-6) {
        throw UsageError("render_heatmap: weights sum to " + format_double(total) + ", expected 1");
    }
    HeatmapDoc doc{tokens, weights, labels, {}};
    doc.html = page("Attention heatmap (" + to_string(labels.task) + ")", figure_html(doc));
    return doc;
}

std::string render_heatmap_page(const std::vector<HeatmapDoc>& docs, const std::string& title) {
    if (docs.empty()) throw UsageError("render_heatmap_page: no sentences");
    std::string body = "<h1>" + html_escape(title) + "</h1>\n";
    for (const auto& d : docs) body += figure_html(d);
    return page(title, body);
}

std::vector<std::size_t> select_by_id(const Dataset& data, const std::vector<std::string>& ids) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < data.size(); ++i) index.emplace(data[i].id, i);
    std::vector<std::size_t> out;
    for (const auto& id : ids) {
        auto it = index.find(id);
        if (it == index.end()) throw KeyError("no moment with id '" + id + "'");
        out.push_back(it->second);
    }
    return out;
}

std::vector<std::size_t> sample_per_class(const Dataset& data, Task task, std::size_t per_class, std::uint64_t seed) {
    const auto gold = data.labels(task);
    std::vector<std::size_t> out;
    for (bool cls : {true, false}) {
        std::vector<std::size_t> pool;
        for (std::size_t i = 0; i < gold.size(); ++i) {
            if (gold[i] == cls) pool.push_back(i);
        }
        Rng rng(mix_seed(seed, cls ? "heatmap-yes" : "heatmap-no"));
        rng.shuffle(pool);
        if (pool.size() > per_class) pool.resize(per_class);
        out.insert(out.end(), pool.begin(), pool.end());
    }
    return out;
}

std::vector<HeatmapDoc> heatmaps(const neural::NeuralModel& model, const neural::InputEncoder& encoder,
                                 const Dataset& data, const std::vector<std::size_t>& indices, Task task) {
    if (!model.attention) throw UsageError("heatmaps need a model with attention");
    std::vector<Moment> chosen;
    for (auto i : indices) {
        if (i >= data.size()) throw UsageError("heatmaps: index out of range");
        chosen.push_back(data[i]);
    }
    const Dataset subset(chosen);
    const auto preds = neural::predict(model, encoder, subset);
    std::vector<HeatmapDoc> docs;
    for (std::size_t k = 0; k < chosen.size(); ++k) {
        HeatmapLabels labels{task, preds[k].label, chosen[k].label(task), chosen[k].id};
        docs.push_back(render_heatmap(preds[k].tokens, preds[k].weights, labels));
    }
    return docs;
}

std::vector<RankedWord> rank_attention(const std::vector<std::vector<std::string>>& tokens,
                                       const std::vector<std::vector<double>>& weights, std::size_t k,
                                       std::size_t min_count) {
    if (tokens.size() != weights.size()) throw UsageError("rank_attention: tokens and weights differ in length");
    struct Acc {
        std::vector<double> parts;
        std::size_t moments = 0;
    };
    std::map<std::string, Acc> acc;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i].size() != weights[i].size()) throw UsageError("rank_attention: token/weight length mismatch");
        std::set<std::string> seen;
        for (std::size_t t = 0; t < tokens[i].size(); ++t) {
            auto& a = acc[tokens[i][t]];
            a.parts.push_back(weights[i][t]);
            if (seen.insert(tokens[i][t]).second) ++a.moments;
        }
    }
    std::vector<RankedWord> out;
    for (auto& [word, a] : acc) {
        if (a.moments < min_count) continue;
        // Summing in sorted order makes the total independent of moment order.
        std::sort(a.parts.begin(), a.parts.end());
        double s = 0;
        for (double p : a.parts) s += p;
        out.push_back({word, s, a.moments});
    }
    std::sort(out.begin(), out.end(), [](const RankedWord& a, const RankedWord& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.word < b.word;
    });
    if (out.size() > k) out.resize(k);
    return out;
}

WordRanking rank_words(const neural::NeuralModel& model, const neural::InputEncoder& encoder, const Dataset& data,
                       Task task, const RankOptions& options) {
    if (!model.attention) throw UsageError("rank_words needs a model with attention");
    if (options.k == 0) throw UsageError("rank_words: k must be >= 1");
    const auto preds = neural::predict(model, encoder, data);
    std::vector<bool> selector;
    if (options.use_gold) {
        selector = data.labels(task);
    } else {
        for (const auto& p : preds) selector.push_back(p.label);
    }
    std::vector<std::vector<std::string>> toks;
    std::vector<std::vector<double>> ws;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (selector[i] != options.positive_class) continue;
        toks.push_back(preds[i].tokens);
        ws.push_back(preds[i].weights);
    }
    WordRanking r{task, options.positive_class, options.k, rank_attention(toks, ws, options.k, options.min_count)};
    if (r.entries.empty()) {
        throw ReportError("no word occurs in at least " + std::to_string(options.min_count) + " " +
                          (options.use_gold ? "gold" : "predicted") + " " + yes_no(options.positive_class) +
                          " moments");
    }
    return r;
}

void write_ranking_csv(std::ostream& out, const WordRanking& ranking) {
    out << "rank,word,score,count\n";
    for (std::size_t i = 0; i < ranking.entries.size(); ++i) {
        const auto& e = ranking.entries[i];
        std::vector<std::string> row{std::to_string(i + 1), e.word, format_fixed(e.score, 6), std::to_string(e.count)};
        csv::write_row(out, row);
    }
}

}  // namespace appraisal::report
