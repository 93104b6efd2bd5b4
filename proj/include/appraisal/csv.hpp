#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace appraisal::csv {

/// One parsed record plus the 1-based file line on which it started.
struct Record {
    std::vector<std::string> fields;
    std::size_t line = 0;
};

/// Streaming RFC-4180 reader: comma separator, double-quote quoting with ""
/// escapes, LF or CRLF record ends, newlines allowed inside quoted fields.
class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    /// Next record, or nullopt at end of input. Throws ParseError on
    /// malformed quoting.
    std::optional<Record> next();

private:
    std::istream& in_;
    std::size_t line_ = 1;
};

/// Quotes a field when it contains a comma, quote, CR or LF.
std::string escape(std::string_view field);

void write_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace appraisal::csv
