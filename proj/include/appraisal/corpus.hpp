#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace appraisal {

enum class Task { Agency, Social };

std::string to_string(Task task);
Task parse_task(const std::string& name);

/// One happy-moment text with optional binary labels (true = yes).
struct Moment {
    std::string id;
    std::string text;
    std::optional<bool> agency;
    std::optional<bool> social;

    const std::optional<bool>& label(Task task) const { return task == Task::Agency ? agency : social; }
};

struct Provenance {
    std::filesystem::path source;
    std::chrono::system_clock::time_point loaded_at{};
};

/// Moments in file order, ids unique. Immutable once built.
class Dataset {
public:
    Dataset() = default;
    /// Validates id uniqueness and non-empty text; throws DataError.
    explicit Dataset(std::vector<Moment> moments, Provenance provenance = {});

    const std::vector<Moment>& moments() const { return moments_; }
    const Provenance& provenance() const { return provenance_; }
    std::size_t size() const { return moments_.size(); }
    bool empty() const { return moments_.empty(); }
    const Moment& operator[](std::size_t i) const { return moments_[i]; }
    auto begin() const { return moments_.begin(); }
    auto end() const { return moments_.end(); }

    /// Gold labels for `task`; throws DataError naming the first unlabeled moment.
    std::vector<bool> labels(Task task) const;

private:
    std::vector<Moment> moments_;
    Provenance provenance_;
};

/// Column names in the CSV header. An empty optional (or empty string) means
/// the column is not mapped; a mapped column that is absent is a ConfigError.
struct ColumnMap {
    std::string text = "moment";
    std::optional<std::string> id = "hmid";
    std::optional<std::string> agency = "agency";
    std::optional<std::string> social = "social";
};

/// Accepts yes/no (any case) and 1/0; empty means unlabeled.
std::optional<bool> parse_label(std::string_view raw);

Dataset load_csv(const std::filesystem::path& path, const ColumnMap& columns = {});
Dataset load_csv_stream(std::istream& in, const ColumnMap& columns, Provenance provenance = {});

/// Writes `hmid,moment,agency,social` with labels as yes/no (empty when missing).
void write_csv(const std::filesystem::path& path, const Dataset& dataset);

/// Exact rational in (0,1).
struct Fraction {
    std::uint64_t numerator = 4;
    std::uint64_t denominator = 5;

    /// Parses a decimal ("0.8") or ratio ("4/5") literal exactly.
    static Fraction parse(const std::string& text);
    std::uint64_t floor_times(std::uint64_t n) const;
    double value() const { return static_cast<double>(numerator) / static_cast<double>(denominator); }
    std::string str() const;
};

struct SplitSpec {
    Fraction train_fraction{};
    std::uint64_t seed = 0;
    /// Opt-in: shuffle each class of this task separately.
    std::optional<Task> stratify_by;
};

struct Split {
    Dataset train;
    Dataset dev;
};

/// Seeded uniform shuffle of indices, then a prefix/suffix cut at
/// floor(fraction * N). Each side keeps file order.
Split split(const Dataset& dataset, const SplitSpec& spec);

/// count(yes) / N as an exact ratio.
struct ClassPrior {
    std::size_t positives = 0;
    std::size_t total = 0;
    double value() const { return static_cast<double>(positives) / static_cast<double>(total); }
    double complement() const { return static_cast<double>(total - positives) / static_cast<double>(total); }
};

ClassPrior class_prior(const Dataset& dataset, Task task);

}  // namespace appraisal
