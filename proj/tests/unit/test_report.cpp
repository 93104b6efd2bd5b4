#include <algorithm>
#include <sstream>

#include "doctest.h"

#include "appraisal/errors.hpp"
#include "appraisal/report.hpp"
#include "html_check.hpp"
#include "support.hpp"

using namespace appraisal;
using namespace appraisal::report;

namespace {

HeatmapLabels agency_labels(bool predicted, std::optional<bool> gold = std::nullopt) {
    return {Task::Agency, predicted, gold, ""};
}

}  // namespace

TEST_CASE("single token heatmap is fully saturated") {
    const auto doc = render_heatmap({"hello"}, {1.0}, agency_labels(true, true));
    const auto cells = testing::heatmap_cells(doc.html);
    REQUIRE(cells.size() == 1);
    CHECK(cells[0].alpha == 1.0);
    CHECK(cells[0].text == "hello");
    CHECK(testing::html_problems(doc.html).empty());
    CHECK(doc.html.find("task: agency; predicted: yes; gold: yes") != std::string::npos);
}

TEST_CASE("alpha is weight over the maximum weight") {
    const auto doc = render_heatmap({"a", "b"}, {0.9, 0.1}, agency_labels(false));
    const auto cells = testing::heatmap_cells(doc.html);
    REQUIRE(cells.size() == 2);
    CHECK(cells[0].alpha == 1.0);
    CHECK(cells[1].alpha == doctest::Approx(0.111111).epsilon(1e-9));
    CHECK(doc.html.find("gold: unknown") != std::string::npos);
}

TEST_CASE("heatmap preconditions") {
    CHECK_THROWS_AS(render_heatmap({}, {}, agency_labels(true)), UsageError);
    CHECK_THROWS_AS(render_heatmap({"a"}, {0.5, 0.5}, agency_labels(true)), UsageError);
    CHECK_THROWS_AS(render_heatmap({"a", "b"}, {0.5, 0.4}, agency_labels(true)), UsageError);
    CHECK_THROWS_AS(render_heatmap({"a", "b"}, {1.5, -0.5}, agency_labels(true)), UsageError);
    CHECK_THROWS_AS(render_heatmap_page({}, "t"), UsageError);
}

TEST_CASE("tokens and captions are escaped") {
    HeatmapLabels labels{Task::Social, true, false, "<id&1>"};
    const auto doc = render_heatmap({"<b>", "a&b", "\"q\""}, {0.2, 0.3, 0.5}, labels);
    CHECK(testing::html_problems(doc.html).empty());
    CHECK(doc.html.find("&lt;b&gt;") != std::string::npos);
    CHECK(doc.html.find("a&amp;b") != std::string::npos);
    CHECK(doc.html.find("id &lt;id&amp;1&gt;") != std::string::npos);
}

TEST_CASE("the HTML checker catches broken documents") {
    CHECK_FALSE(testing::html_problems("<html><body></body></html>").empty());
    const std::string ok = "<!DOCTYPE html><html><head><meta charset=\"utf-8\"><title>x</title></head><body><p>a</p></body></html>";
    CHECK(testing::html_problems(ok).empty());
    CHECK_FALSE(testing::html_problems("<!DOCTYPE html><html><head><meta charset=\"utf-8\"><title>x</title></head><body><p>a</body></html>").empty());
    CHECK_FALSE(testing::html_problems("<!DOCTYPE html><html><head><meta charset=\"utf-8\"><title>x</title></head><body>a & b</body></html>").empty());
}

TEST_CASE("intensity order equals weight order on random sentences") {
    Rng rng(19);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + rng.below(20);
        std::vector<std::string> tokens;
        std::vector<double> w(n);
        double total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            tokens.push_back("t" + std::to_string(i));
            w[i] = rng.uniform() < 0.2 ? 0.0 : rng.uniform();
            total += w[i];
        }
        if (total == 0) w[0] = total = 1;
        for (auto& v : w) v /= total;
        const auto doc = render_heatmap(tokens, w, agency_labels(true));
        const auto cells = testing::heatmap_cells(doc.html);
        REQUIRE(cells.size() == n);
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = 0; b < n; ++b)
                if (w[a] <= w[b]) CHECK(cells[a].alpha <= cells[b].alpha);
        CHECK(testing::html_problems(doc.html).empty());
    }
}

TEST_CASE("multi-sentence page is valid and holds every figure") {
    std::vector<HeatmapDoc> docs;
    for (int i = 0; i < 12; ++i) docs.push_back(render_heatmap({"x", "y"}, {0.25, 0.75}, agency_labels(i % 2 == 0)));
    const auto html = render_heatmap_page(docs, "Agency & more");
    CHECK(testing::html_problems(html).empty());
    CHECK(testing::heatmap_cells(html).size() == 24);
}

TEST_CASE("marker word ranks first on a toy corpus") {
    std::vector<std::vector<std::string>> toks;
    std::vector<std::vector<double>> ws;
    for (int i = 0; i < 10; ++i) {
        toks.push_back({"i", "marker", "the", i % 2 ? "day" : "night"});
        ws.push_back({0.02, 0.94, 0.02, 0.02});
    }
    const auto r = rank_attention(toks, ws, 35, 5);
    REQUIRE(r.size() == 5);
    CHECK(r[0].word == "marker");
    CHECK(r[0].count == 10);
    CHECK(r[0].score == doctest::Approx(9.4));
    // Remaining ties are alphabetical.
    CHECK(r[1].word == "i");
    CHECK(r[2].word == "the");
    CHECK(r[3].word == "day");
    CHECK(r[4].word == "night");
    CHECK(rank_attention(toks, ws, 2, 5).size() == 2);
    CHECK(rank_attention(toks, ws, 35, 11).empty());
}

TEST_CASE("ranking counts moments, not occurrences") {
    const auto r = rank_attention({{"a", "a", "b"}, {"b"}}, {{0.25, 0.25, 0.5}, {1.0}}, 10, 2);
    REQUIRE(r.size() == 1);
    CHECK(r[0].word == "b");
    CHECK(r[0].count == 2);
    CHECK(r[0].score == 1.5);
}

TEST_CASE("ranking does not depend on moment order") {
    Rng rng(23);
    std::vector<std::vector<std::string>> toks;
    std::vector<std::vector<double>> ws;
    for (int i = 0; i < 60; ++i) {
        std::vector<std::string> t;
        std::vector<double> w;
        double total = 0;
        const auto n = 1 + rng.below(8);
        for (std::size_t k = 0; k < n; ++k) {
            t.push_back("w" + std::to_string(rng.below(10)));
            w.push_back(rng.uniform());
            total += w.back();
        }
        for (auto& v : w) v /= total;
        toks.push_back(t);
        ws.push_back(w);
    }
    const auto a = rank_attention(toks, ws, 35, 3);
    std::vector<std::size_t> order(toks.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<std::vector<std::string>> t2;
    std::vector<std::vector<double>> w2;
    for (auto i : order) t2.push_back(toks[i]), w2.push_back(ws[i]);
    const auto b = rank_attention(t2, w2, 35, 3);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].word == b[i].word);
        CHECK(a[i].score == b[i].score);
    }
}

TEST_CASE("rank_words over a model and the ranking CSV") {
    auto c = testing::synthetic_corpus(30, 4, 3);
    const neural::StaticEmbeddingInput enc(c.table, "synthetic");
    const auto model =
        neural::NeuralModel::initialize(neural::ModelConfig::from(neural::Architecture::LstmAttention, 1, 3, 4), 2);
    RankOptions opts;
    opts.k = 3;
    const auto r = rank_words(model, enc, c.data, Task::Agency, opts);
    CHECK(r.entries.size() <= 3);
    CHECK(r.k == 3);
    const auto again = rank_words(model, enc, c.data, Task::Agency, opts);
    REQUIRE(again.entries.size() == r.entries.size());
    for (std::size_t i = 0; i < r.entries.size(); ++i) CHECK(again.entries[i].score == r.entries[i].score);
    for (const auto& e : r.entries) CHECK(e.word != "nomarker");

    std::ostringstream out;
    write_ranking_csv(out, WordRanking{Task::Agency, true, 2, {{"x", 1.5, 7}, {"y,z", 0.25, 5}}});
    CHECK(out.str() == "rank,word,score,count\n1,x,1.500000,7\n2,\"y,z\",0.250000,5\n");

    opts.min_count = 1000;
    CHECK_THROWS_AS(rank_words(model, enc, c.data, Task::Agency, opts), ReportError);
    const auto plain = neural::NeuralModel::initialize(neural::ModelConfig::from(neural::Architecture::Lstm, 1, 3, 4), 2);
    CHECK_THROWS_AS(rank_words(plain, enc, c.data, Task::Agency), UsageError);
}

TEST_CASE("sampling and id selection") {
    auto c = testing::synthetic_corpus(20, 4, 3);
    const auto s = sample_per_class(c.data, Task::Agency, 6, 42);
    REQUIRE(s.size() == 12);
    for (std::size_t i = 0; i < 6; ++i) CHECK(*c.data[s[i]].agency);
    for (std::size_t i = 6; i < 12; ++i) CHECK_FALSE(*c.data[s[i]].agency);
    CHECK(sample_per_class(c.data, Task::Agency, 6, 42) == s);
    CHECK(sample_per_class(c.data, Task::Agency, 100, 1).size() == 20);
    CHECK(select_by_id(c.data, {"s3", "s0"}) == std::vector<std::size_t>{3, 0});
    CHECK_THROWS_AS(select_by_id(c.data, {"nope"}), KeyError);

    const neural::StaticEmbeddingInput enc(c.table, "synthetic");
    const auto model =
        neural::NeuralModel::initialize(neural::ModelConfig::from(neural::Architecture::BiLstmAttention, 1, 3, 4), 2);
    const auto docs = heatmaps(model, enc, c.data, s, Task::Agency);
    REQUIRE(docs.size() == 12);
    CHECK(docs[0].labels.gold == true);
    CHECK(testing::html_problems(render_heatmap_page(docs, "sample")).empty());
}
