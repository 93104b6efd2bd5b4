#include "appraisal/embeddings.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "appraisal/errors.hpp"
#include "appraisal/text.hpp"

namespace appraisal {

EmbeddingTable::EmbeddingTable(std::vector<std::string> tokens, std::size_t dim, std::vector<double> rows)
    : dim_(dim), tokens_(std::move(tokens)), rows_(std::move(rows)) {
    if (rows_.size() != tokens_.size() * dim_) throw ShapeError("embedding table rows do not match token count");
    for (double v : rows_) {
        if (!std::isfinite(v)) throw DataError("embedding table holds a non-finite value");
    }
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (!index_.emplace(tokens_[i], i).second) throw DataError("duplicate embedding token '" + tokens_[i] + "'");
    }
}

std::span<const double> EmbeddingTable::row(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return {};
    return std::span<const double>(rows_).subspan(it->second * dim_, dim_);
}

namespace {

std::vector<std::string_view> split_spaces(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        const std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

}  // namespace

EmbeddingTable load_embedding_text(std::istream& in, const std::string& source_name,
                                   const std::unordered_set<std::string>* keep) {
    std::vector<std::string> tokens;
    std::vector<double> rows;
    std::unordered_map<std::string, std::size_t> seen;
    std::size_t dim = 0;
    std::string line;
    std::size_t line_no = 0;
    bool any_line = false;
    while (std::getline(in, line)) {
        ++line_no;
        const auto parts = split_spaces(line);
        if (parts.empty()) continue;
        if (dim == 0) {
            if (parts.size() < 2) throw ParseError(source_name + ":" + std::to_string(line_no) + ": no vector components");
            dim = parts.size() - 1;
        }
        if (parts.size() > dim + 1) {
            // Common Crawl vectors contain a few tokens with embedded spaces (". . .");
            // those can never come out of tokenize(), so they are skipped.
            bool spaced_token = true;
            for (std::size_t k = 1; k < parts.size() - dim; ++k) {
                try {
                    parse_double(parts[k]);
                    spaced_token = false;
                } catch (const ParseError&) {
                }
            }
            if (spaced_token) {
                std::cerr << "warning: " << source_name << ":" << line_no << ": skipping token containing spaces\n";
                continue;
            }
        }
        if (parts.size() != dim + 1) {
            throw ParseError(source_name + ":" + std::to_string(line_no) + ": expected " + std::to_string(dim) +
                             " components, found " + std::to_string(parts.size() - 1));
        }
        std::vector<double> values(dim);
        for (std::size_t k = 0; k < dim; ++k) {
            try {
                values[k] = parse_double(parts[k + 1]);
            } catch (const ParseError&) {
                throw ParseError(source_name + ":" + std::to_string(line_no) + ": non-numeric component '" +
                                 std::string(parts[k + 1]) + "'");
            }
            if (!std::isfinite(values[k])) {
                throw ParseError(source_name + ":" + std::to_string(line_no) + ": non-finite component");
            }
        }
        any_line = true;
        std::string token(parts[0]);
        if (keep && !keep->count(token)) continue;
        if (auto it = seen.find(token); it != seen.end()) {
            std::cerr << "warning: " << source_name << ":" << line_no << ": duplicate token '" << token
                      << "', keeping the later vector\n";
            std::copy(values.begin(), values.end(), rows.begin() + static_cast<std::ptrdiff_t>(it->second * dim));
            continue;
        }
        seen.emplace(token, tokens.size());
        tokens.push_back(std::move(token));
        rows.insert(rows.end(), values.begin(), values.end());
    }
    if (!any_line) throw LoadError(source_name + ": embedding file is empty");
    if (tokens.empty()) std::cerr << "warning: " << source_name << ": no embedding rows matched the requested tokens\n";
    return EmbeddingTable(std::move(tokens), dim, std::move(rows));
}

EmbeddingTable load_embedding_text(const std::filesystem::path& path, const std::unordered_set<std::string>* keep) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open '" + path.string() + "'");
    return load_embedding_text(in, path.string(), keep);
}

tensor::Tensor embed_sequence(const std::vector<std::string>& tokens, const EmbeddingTable& table) {
    tensor::Tensor out({tokens.size(), table.dim()});
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        const auto row = table.row(tokens[t]);
        if (!row.empty()) std::copy(row.begin(), row.end(), out.data().begin() + static_cast<std::ptrdiff_t>(t * table.dim()));
    }
    return out;
}

const tensor::Tensor& ContextualSequenceFile::lookup(const std::string& id) const {
    auto it = sentences_.find(id);
    if (it == sentences_.end()) throw KeyError("no contextual vectors for sentence id '" + id + "'");
    return it->second;
}

void ContextualSequenceFile::insert(const std::string& id, tensor::Tensor matrix) {
    if (matrix.rank() != 2 || matrix.cols() != dim_) {
        throw ShapeError("contextual matrix " + matrix.shape_string() + " does not have " + std::to_string(dim_) +
                         " columns");
    }
    if (id.empty() || id.find_first_of(" \t\r\n") != std::string::npos) {
        throw DataError("contextual sentence id must be non-empty without whitespace");
    }
    auto [it, inserted] = sentences_.insert_or_assign(id, std::move(matrix));
    if (inserted) order_.push_back(id);
}

void ContextualSequenceFile::write(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write '" + path.string() + "'");
    out << "CTXEMB v1 " << dim_ << ' ' << order_.size() << '\n';
    for (const auto& id : order_) {
        const auto& m = sentences_.at(id);
        out << id << ' ' << m.rows() << '\n';
        for (std::size_t r = 0; r < m.rows(); ++r) {
            for (std::size_t c = 0; c < dim_; ++c) {
                if (c) out << ' ';
                out << format_double(m(r, c));
            }
            out << '\n';
        }
    }
}

ContextualSequenceFile load_contextual(std::istream& in, const std::string& source_name) {
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& what) {
        return DataError(source_name + ":" + std::to_string(line_no) + ": " + what);
    };
    auto next_line = [&]() -> bool {
        while (std::getline(in, line)) {
            ++line_no;
            if (!trim(line).empty()) return true;
        }
        return false;
    };

    if (!next_line()) throw LoadError(source_name + ": contextual file is empty");
    const auto header = split_spaces(line);
    if (header.size() != 4 || header[0] != "CTXEMB" || header[1] != "v1") {
        throw ParseError(source_name + ":" + std::to_string(line_no) + ": expected header 'CTXEMB v1 <d_ctx> <n_sentences>'");
    }
    long long dim = 0, count = 0;
    try {
        dim = parse_int(header[2]);
        count = parse_int(header[3]);
    } catch (const ParseError&) {
        throw ParseError(source_name + ":" + std::to_string(line_no) + ": malformed header numbers");
    }
    if (dim <= 0 || count < 0) throw ParseError(source_name + ": header needs d_ctx > 0 and n_sentences >= 0");

    ContextualSequenceFile file(static_cast<std::size_t>(dim));
    for (long long s = 0; s < count; ++s) {
        if (!next_line()) throw fail("expected " + std::to_string(count) + " sentences, found " + std::to_string(s));
        const auto head = split_spaces(line);
        if (head.size() != 2) throw fail("expected '<id> <length>'");
        long long length = 0;
        try {
            length = parse_int(head[1]);
        } catch (const ParseError&) {
            throw fail("sentence length is not an integer");
        }
        if (length < 0) throw fail("negative sentence length");
        const std::string id(head[0]);
        if (file.contains(id)) throw fail("duplicate sentence id '" + id + "'");
        tensor::Tensor m({static_cast<std::size_t>(length), static_cast<std::size_t>(dim)});
        for (long long r = 0; r < length; ++r) {
            if (!next_line()) throw fail("sentence '" + id + "' ends after " + std::to_string(r) + " of " + std::to_string(length) + " vectors");
            const auto parts = split_spaces(line);
            if (parts.size() != static_cast<std::size_t>(dim)) {
                throw fail("vector has " + std::to_string(parts.size()) + " components, header declares " + std::to_string(dim));
            }
            for (long long c = 0; c < dim; ++c) {
                double v = 0;
                try {
                    v = parse_double(parts[static_cast<std::size_t>(c)]);
                } catch (const ParseError&) {
                    throw ParseError(source_name + ":" + std::to_string(line_no) + ": non-numeric component");
                }
                if (!std::isfinite(v)) throw fail("non-finite component");
                m(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = v;
            }
        }
        file.insert(id, std::move(m));
    }
    if (next_line()) {
        const auto parts = split_spaces(line);
        if (parts.size() == static_cast<std::size_t>(dim)) {
            throw fail("more vectors than the declared sentence lengths account for");
        }
        throw fail("trailing content after " + std::to_string(count) + " sentences");
    }
    return file;
}

ContextualSequenceFile load_contextual(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open '" + path.string() + "'");
    return load_contextual(in, path.string());
}

}  // namespace appraisal
