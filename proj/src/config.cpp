#include "appraisal/config.hpp"

#include <fstream>

#include "appraisal/checkpoint.hpp"
#include "appraisal/errors.hpp"
#include "appraisal/text.hpp"

namespace appraisal {

const std::vector<std::pair<std::string, std::string>>& RunConfig::schema() {
    static const std::vector<std::pair<std::string, std::string>> keys{
        {"run.task", "agency"},
        {"run.seed", "0"},
        {"run.out", "out"},
        {"run.threads", "0"},

        {"data.path", ""},
        {"data.train", ""},
        {"data.dev", ""},
        {"data.text_column", "moment"},
        {"data.id_column", "hmid"},
        {"data.agency_column", "agency"},
        {"data.social_column", "social"},

        {"split.fraction", "0.8"},
        {"split.seed", ""},
        {"split.stratify", ""},

        {"linear.model", "svm"},
        {"linear.features", "bow-tfidf"},
        {"linear.ngram_min", "1"},
        {"linear.ngram_max", "4"},
        {"linear.min_df", "1"},
        {"linear.C", "1"},
        {"linear.tolerance", "1e-10"},
        {"linear.max_epochs", "2000"},
        {"linear.nb_alpha", "1"},

        {"neural.model", "lstm-a"},
        {"neural.layers", "1"},
        {"neural.hidden", "128"},
        {"neural.embeddings", ""},
        {"neural.contextual", ""},
        {"neural.preset", "glove"},
        {"neural.epochs", ""},
        {"neural.dropout", ""},
        {"neural.batch_size", "64"},
        {"neural.learning_rate", "0.001"},
        {"neural.lowercase", "true"},
        {"neural.max_tokens", "128"},

        {"grid.architectures", "lstm,bilstm,lstm-a,bilstm-a"},
        {"grid.layers", "1,2"},
        {"grid.hidden", "128,256,512"},
        {"grid.save_models", "false"},

        {"report.k", "35"},
        {"report.min_count", "5"},
        {"report.class", "positive"},
        {"report.rank_by", "gold"},
        {"report.per_class", "6"},
        {"report.ids", ""},
    };
    return keys;
}

RunConfig::RunConfig() {
    for (const auto& [k, v] : schema()) values_[k] = v;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
    it->second = value;
}

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
    return it->second;
}

long long RunConfig::get_int(const std::string& key) const {
    try {
        return parse_int(get(key));
    } catch (const ParseError&) {
        throw ConfigError(key + " must be an integer, got '" + get(key) + "'");
    }
}

double RunConfig::get_double(const std::string& key) const {
    try {
        return parse_double(get(key));
    } catch (const ParseError&) {
        throw ConfigError(key + " must be a number, got '" + get(key) + "'");
    }
}

bool RunConfig::get_bool(const std::string& key) const {
    const auto v = ascii_lower(get(key));
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    throw ConfigError(key + " must be true or false, got '" + get(key) + "'");
}

std::optional<std::string> RunConfig::get_optional(const std::string& key) const {
    const auto& v = get(key);
    if (v.empty()) return std::nullopt;
    return v;
}

RunConfig RunConfig::parse(std::istream& in, const std::string& source_name) {
    RunConfig cfg;
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        const std::string where = source_name + ":" + std::to_string(line_no);
        if (t.front() == '[') {
            if (t.back() != ']') throw ConfigError(where + ": unterminated section header");
            section = std::string(trim(t.substr(1, t.size() - 2)));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string_view::npos) throw ConfigError(where + ": expected 'key = value'");
        const auto key = std::string(trim(t.substr(0, eq)));
        const auto value = std::string(trim(t.substr(eq + 1)));
        if (section.empty()) throw ConfigError(where + ": key '" + key + "' outside any section");
        try {
            cfg.set(section + "." + key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + ": " + e.what());
        }
    }
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    return parse(in, path.string());
}

void RunConfig::write(std::ostream& out) const {
    out << "# appraisal-lab " << kLibraryVersion << " resolved configuration\n";
    std::string section;
    for (const auto& [key, def] : schema()) {
        const auto dot = key.find('.');
        const auto sec = key.substr(0, dot);
        if (sec != section) {
            out << '\n' << '[' << sec << "]\n";
            section = sec;
        }
        out << key.substr(dot + 1) << " = " << values_.at(key) << '\n';
    }
}

void RunConfig::write(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path.string() + "'");
    write(out);
}

}  // namespace appraisal
