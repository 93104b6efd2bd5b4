#include "appraisal/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "appraisal/csv.hpp"
#include "appraisal/errors.hpp"
#include "appraisal/rng.hpp"
#include "appraisal/text.hpp"

namespace appraisal {

std::string to_string(Task task) { return task == Task::Agency ? "agency" : "social"; }

Task parse_task(const std::string& name) {
    const std::string lower = ascii_lower(name);
    if (lower == "agency") return Task::Agency;
    if (lower == "social" || lower == "sociality") return Task::Social;
    throw ConfigError("unknown task '" + name + "' (expected agency or social)");
}

Dataset::Dataset(std::vector<Moment> moments, Provenance provenance)
    : moments_(std::move(moments)), provenance_(std::move(provenance)) {
    std::unordered_set<std::string> seen;
    seen.reserve(moments_.size());
    for (const auto& m : moments_) {
        if (trim(m.text).empty()) throw DataError("moment '" + m.id + "' has empty text");
        if (!seen.insert(m.id).second) throw DataError("duplicate moment id '" + m.id + "'");
    }
}

std::vector<bool> Dataset::labels(Task task) const {
    std::vector<bool> out;
    out.reserve(moments_.size());
    for (const auto& m : moments_) {
        const auto& label = m.label(task);
        if (!label) throw DataError("moment '" + m.id + "' has no " + to_string(task) + " label");
        out.push_back(*label);
    }
    return out;
}

std::optional<bool> parse_label(std::string_view raw) {
    const std::string value = ascii_lower(trim(raw));
    if (value.empty()) return std::nullopt;
    if (value == "yes" || value == "1") return true;
    if (value == "no" || value == "0") return false;
    throw DataError("label '" + std::string(raw) + "' is not one of yes/no/1/0");
}

namespace {

std::optional<std::size_t> locate(const std::vector<std::string>& header,
                                  const std::optional<std::string>& name, bool required) {
    if (!name || name->empty()) {
        if (required) throw ConfigError("text column must be mapped");
        return std::nullopt;
    }
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (trim(header[i]) == *name) return i;
    }
    throw ConfigError("mapped column '" + *name + "' not found in CSV header");
}

}  // namespace

Dataset load_csv_stream(std::istream& in, const ColumnMap& columns, Provenance provenance) {
    csv::Reader reader(in);
    auto header = reader.next();
    if (!header) throw ParseError("CSV has no header row");
    auto& names = header->fields;
    if (!names.empty() && names[0].rfind("\xEF\xBB\xBF", 0) == 0) names[0].erase(0, 3);

    const auto text_col = *locate(names, columns.text, true);
    const auto id_col = locate(names, columns.id, false);
    const auto agency_col = locate(names, columns.agency, false);
    const auto social_col = locate(names, columns.social, false);

    std::vector<Moment> moments;
    std::size_t row = 0;
    while (auto record = reader.next()) {
        auto& fields = record->fields;
        if (fields.size() == 1 && fields[0].empty()) continue;  // blank line
        ++row;
        if (fields.size() != names.size()) {
            throw ParseError("row " + std::to_string(row) + " (line " + std::to_string(record->line) +
                             ") has " + std::to_string(fields.size()) + " fields, header has " +
                             std::to_string(names.size()));
        }
        Moment m;
        m.id = id_col ? std::string(trim(fields[*id_col])) : std::to_string(row);
        m.text = fields[text_col];
        if (trim(m.text).empty()) {
            throw DataError("row " + std::to_string(row) + " has empty text");
        }
        try {
            if (agency_col) m.agency = parse_label(fields[*agency_col]);
            if (social_col) m.social = parse_label(fields[*social_col]);
        } catch (const DataError& e) {
            throw DataError("row " + std::to_string(row) + ": " + e.what());
        }
        moments.push_back(std::move(m));
    }
    return Dataset(std::move(moments), std::move(provenance));
}

Dataset load_csv(const std::filesystem::path& path, const ColumnMap& columns) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open '" + path.string() + "'");
    return load_csv_stream(in, columns, Provenance{path, std::chrono::system_clock::now()});
}

void write_csv(const std::filesystem::path& path, const Dataset& dataset) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write '" + path.string() + "'");
    auto label = [](const std::optional<bool>& l) -> std::string {
        if (!l) return "";
        return *l ? "yes" : "no";
    };
    csv::write_row(out, {"hmid", "moment", "agency", "social"});
    for (const auto& m : dataset) csv::write_row(out, {m.id, m.text, label(m.agency), label(m.social)});
}

Fraction Fraction::parse(const std::string& raw) {
    const std::string text(trim(raw));
    auto bad = [&] { return ConfigError("invalid fraction '" + raw + "'"); };
    Fraction f;
    if (auto slash = text.find('/'); slash != std::string::npos) {
        auto parse_u = [&](std::string_view s) {
            std::uint64_t v = 0;
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc() || p != s.data() + s.size()) throw bad();
            return v;
        };
        f.numerator = parse_u(std::string_view(text).substr(0, slash));
        f.denominator = parse_u(std::string_view(text).substr(slash + 1));
    } else {
        const auto dot = text.find('.');
        const std::string whole = text.substr(0, dot);
        const std::string frac = dot == std::string::npos ? "" : text.substr(dot + 1);
        if ((whole.empty() && frac.empty()) || frac.size() > 18) throw bad();
        for (char c : whole + frac) {
            if (c < '0' || c > '9') throw bad();
        }
        f.denominator = 1;
        for (std::size_t i = 0; i < frac.size(); ++i) f.denominator *= 10;
        const std::string digits = whole + frac;
        f.numerator = 0;
        for (char c : digits) {
            if (f.numerator > (UINT64_MAX - 9) / 10) throw bad();
            f.numerator = f.numerator * 10 + static_cast<std::uint64_t>(c - '0');
        }
    }
    if (f.denominator == 0 || f.numerator == 0 || f.numerator >= f.denominator) {
        throw ConfigError("fraction '" + raw + "' must lie strictly between 0 and 1");
    }
    const auto g = std::gcd(f.numerator, f.denominator);
    f.numerator /= g;
    f.denominator /= g;
    return f;
}

std::uint64_t Fraction::floor_times(std::uint64_t n) const {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(n) * numerator) / denominator);
}

std::string Fraction::str() const { return std::to_string(numerator) + "/" + std::to_string(denominator); }

Split split(const Dataset& dataset, const SplitSpec& spec) {
    if (dataset.empty()) throw UsageError("cannot split an empty dataset");
    const std::size_t n = dataset.size();
    const std::size_t n_train = spec.train_fraction.floor_times(n);
    if (n_train == 0 || n_train == n) {
        throw ConfigError("train fraction " + spec.train_fraction.str() + " leaves an empty side for N=" +
                          std::to_string(n));
    }

    Rng rng(spec.seed);
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> dev_idx;
    if (!spec.stratify_by) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        train_idx.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
        dev_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    } else {
        const auto gold = dataset.labels(*spec.stratify_by);
        std::vector<std::size_t> pos, neg;
        for (std::size_t i = 0; i < n; ++i) (gold[i] ? pos : neg).push_back(i);
        rng.shuffle(pos);
        rng.shuffle(neg);
        // largest-remainder allocation so the train total is still floor(f*N)
        std::size_t take_pos = spec.train_fraction.floor_times(pos.size());
        std::size_t take_neg = spec.train_fraction.floor_times(neg.size());
        const auto rem = [&](std::size_t k) {
            return (static_cast<unsigned __int128>(k) * spec.train_fraction.numerator) %
                   spec.train_fraction.denominator;
        };
        while (take_pos + take_neg < n_train) {
            if (rem(pos.size()) >= rem(neg.size()) && take_pos < pos.size()) {
                ++take_pos;
            } else {
                ++take_neg;
            }
        }
        train_idx.assign(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(take_pos));
        train_idx.insert(train_idx.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(take_neg));
        dev_idx.assign(pos.begin() + static_cast<std::ptrdiff_t>(take_pos), pos.end());
        dev_idx.insert(dev_idx.end(), neg.begin() + static_cast<std::ptrdiff_t>(take_neg), neg.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(dev_idx.begin(), dev_idx.end());

    auto gather = [&](const std::vector<std::size_t>& idx) {
        std::vector<Moment> out;
        out.reserve(idx.size());
        for (auto i : idx) out.push_back(dataset[i]);
        return Dataset(std::move(out), dataset.provenance());
    };
    return Split{gather(train_idx), gather(dev_idx)};
}

ClassPrior class_prior(const Dataset& dataset, Task task) {
    if (dataset.empty()) throw DataError("class prior of an empty dataset");
    ClassPrior prior;
    for (bool label : dataset.labels(task)) prior.positives += label ? 1 : 0;
    prior.total = dataset.size();
    return prior;
}

}  // namespace appraisal
