#include "appraisal/csv.hpp"

#include "appraisal/errors.hpp"

namespace appraisal::csv {

std::optional<Record> Reader::next() {
    int c = in_.get();
    if (c == std::char_traits<char>::eof()) return std::nullopt;

    Record record;
    record.line = line_;
    std::string field;
    enum class State { FieldStart, Unquoted, Quoted, QuoteInQuoted } state = State::FieldStart;

    auto fail = [&](const std::string& what) {
        throw ParseError("malformed CSV at line " + std::to_string(line_) + ": " + what);
    };

    for (;; c = in_.get()) {
        const bool eof = c == std::char_traits<char>::eof();
        if (eof) {
            if (state == State::Quoted) fail("unterminated quoted field (record began at line " +
                                             std::to_string(record.line) + ")");
            record.fields.push_back(std::move(field));
            return record;
        }
        const char ch = static_cast<char>(c);
        switch (state) {
            case State::FieldStart:
                if (ch == '"') {
                    state = State::Quoted;
                    continue;
                }
                state = State::Unquoted;
                [[fallthrough]];
            case State::Unquoted:
                if (ch == ',') {
                    record.fields.push_back(std::move(field));
                    field.clear();
                    state = State::FieldStart;
                } else if (ch == '\n' || ch == '\r') {
                    if (ch == '\r' && in_.peek() == '\n') in_.get();
                    ++line_;
                    record.fields.push_back(std::move(field));
                    return record;
                } else if (ch == '"') {
                    fail("quote inside unquoted field");
                } else {
                    field.push_back(ch);
                }
                break;
            case State::Quoted:
                if (ch == '"') {
                    state = State::QuoteInQuoted;
                } else {
                    if (ch == '\n') ++line_;
                    field.push_back(ch);
                }
                break;
            case State::QuoteInQuoted:
                if (ch == '"') {
                    field.push_back('"');
                    state = State::Quoted;
                } else if (ch == ',') {
                    record.fields.push_back(std::move(field));
                    field.clear();
                    state = State::FieldStart;
                } else if (ch == '\n' || ch == '\r') {
                    if (ch == '\r' && in_.peek() == '\n') in_.get();
                    ++line_;
                    record.fields.push_back(std::move(field));
                    return record;
                } else {
                    fail("unexpected character after closing quote");
                }
                break;
        }
    }
}

std::string escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char ch : field) {
        if (ch == '"') out.push_back('"');
        out.push_back(ch);
    }
    out.push_back('"');
    return out;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        out << escape(fields[i]);
    }
    out << '\n';
}

}  // namespace appraisal::csv
