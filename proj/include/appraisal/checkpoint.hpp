#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "appraisal/tensor.hpp"

namespace appraisal {

inline constexpr const char* kLibraryVersion = "0.1.0";

/// Versioned model container: a magic line, one line of JSON metadata listing
/// every array's name and shape, then the arrays as little-endian float64 in
/// listed order. Doubles survive save/load bit for bit.
struct Checkpoint {
    nlohmann::json meta = nlohmann::json::object();
    std::vector<std::pair<std::string, tensor::Tensor>> arrays;

    void add(std::string name, tensor::Tensor value);
    /// Throws LoadError when absent.
    const tensor::Tensor& array(const std::string& name) const;
    bool has(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace appraisal
