#include <sstream>

#include "doctest.h"

#include "appraisal/embeddings.hpp"
#include "appraisal/errors.hpp"
#include "support.hpp"

using namespace appraisal;
using tensor::Tensor;

namespace {

EmbeddingTable table_from(const std::string& text) {
    std::istringstream in(text);
    return load_embedding_text(in, "toy");
}

ContextualSequenceFile contextual_from(const std::string& text) {
    std::istringstream in(text);
    return load_contextual(in, "ctx");
}

}  // namespace

TEST_CASE("two-line embedding file loads as written") {
    const auto t = table_from("a 1 0\nb 0 1\n");
    CHECK(t.dim() == 2);
    CHECK(t.size() == 2);
    CHECK(t.data() == std::vector<double>{1, 0, 0, 1});
    CHECK(t.contains("a"));
    CHECK_FALSE(t.contains("z"));
}

TEST_CASE("embedding loader errors") {
    CHECK_THROWS_AS(table_from(""), LoadError);
    CHECK_THROWS_AS(load_embedding_text("/nonexistent/glove.txt"), LoadError);
    try {
        table_from("a 1 0\nb 0\nc 1 1\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("toy:2") != std::string::npos);
    }
    CHECK_THROWS_AS(table_from("a 1 0\nb x 1\n"), ParseError);
}

TEST_CASE("a repeated token keeps its last row") {
    const auto t = table_from("a 1 0\na 2 3\n");
    CHECK(t.size() == 1);
    CHECK(t.data() == std::vector<double>{2, 3});
}

TEST_CASE("keep filter stores only the requested tokens but validates all") {
    std::istringstream in("a 1 0\nb 0 1\nc 5 5\n");
    const std::unordered_set<std::string> keep{"b"};
    const auto t = load_embedding_text(in, "toy", &keep);
    CHECK(t.size() == 1);
    CHECK(t.contains("b"));
    std::istringstream bad("a 1 0\nb 0 1\nc 5\n");
    CHECK_THROWS_AS(load_embedding_text(bad, "toy", &keep), ParseError);
}

TEST_CASE("embed_sequence looks up rows with zero for OOV") {
    const auto t = table_from("a 1 0\nb 0 1\n");
    CHECK(embed_sequence({"a", "b"}, t) == Tensor::matrix({{1, 0}, {0, 1}}));
    CHECK(embed_sequence({"z"}, t) == Tensor::matrix({{0, 0}}));
    const auto empty = embed_sequence({}, t);
    CHECK(empty.rows() == 0);
    CHECK(empty.cols() == 2);
}

TEST_CASE("embed_sequence shape is tokens by dim for random inputs") {
    Rng rng(21);
    const auto t = testing::random_table({"w0", "w1", "w2"}, 7, 3);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::string> tokens;
        const auto len = rng.below(30);
        for (std::size_t i = 0; i < len; ++i) tokens.push_back("w" + std::to_string(rng.below(6)));
        const auto m = embed_sequence(tokens, t);
        CHECK(m.shape() == std::vector<std::size_t>{len, 7});
    }
}

TEST_CASE("contextual fixture with one sentence") {
    const auto f = contextual_from("CTXEMB v1 3 1\ns1 2\n1 2 3\n4 5 6\n");
    CHECK(f.dim() == 3);
    CHECK(f.lookup("s1") == Tensor::matrix({{1, 2, 3}, {4, 5, 6}}));
    CHECK_THROWS_AS(f.lookup("s2"), KeyError);
}

TEST_CASE("contextual dimension 1024 is accepted") {
    std::string body = "CTXEMB v1 1024 1\nx 1\n";
    for (int i = 0; i < 1024; ++i) body += (i ? " " : "") + std::to_string(i % 7);
    body += "\n";
    CHECK(contextual_from(body).dim() == 1024);
}

TEST_CASE("contextual arity and framing errors") {
    CHECK_THROWS_AS(contextual_from("CTXEMB v1 3 1\ns1 2\n1 2 3\n"), DataError);
    CHECK_THROWS_AS(contextual_from("CTXEMB v1 3 1\ns1 1\n1 2 3\n4 5 6\n"), DataError);
    CHECK_THROWS_AS(contextual_from("CTXEMB v1 3 1\ns1 1\n1 2\n"), DataError);
    CHECK_THROWS_AS(contextual_from("CTXEMB v2 3 1\n"), ParseError);
    CHECK_THROWS_AS(contextual_from(""), LoadError);
    CHECK_THROWS_AS(contextual_from("CTXEMB v1 2 2\na 1\n1 1\na 1\n2 2\n"), DataError);
}

TEST_CASE("contextual files round-trip bit-identically") {
    Rng rng(77);
    ContextualSequenceFile f(5);
    for (int s = 0; s < 6; ++s) {
        Tensor m({1 + rng.below(4), 5});
        for (auto& v : m.data()) v = rng.uniform(-1, 1) * std::pow(10.0, static_cast<double>(rng.below(12)) - 6);
        f.insert("id" + std::to_string(s), m);
    }
    const auto path = testing::scratch_dir() / "ctx.txt";
    f.write(path);
    const auto back = load_contextual(path);
    CHECK(back.ids() == f.ids());
    for (const auto& id : f.ids()) CHECK(back.lookup(id) == f.lookup(id));
    CHECK_THROWS_AS(f.insert("bad", Tensor({2, 4})), ShapeError);
}
