#include "appraisal/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "appraisal/errors.hpp"

namespace appraisal {

namespace {

constexpr const char* kMagic = "APPRAISAL-LAB CHECKPOINT v1";

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

}  // namespace

void Checkpoint::add(std::string name, tensor::Tensor value) {
    if (has(name)) throw UsageError("checkpoint already holds an array named '" + name + "'");
    arrays.emplace_back(std::move(name), std::move(value));
}

bool Checkpoint::has(const std::string& name) const {
    for (const auto& [n, t] : arrays) {
        if (n == name) return true;
    }
    return false;
}

const tensor::Tensor& Checkpoint::array(const std::string& name) const {
    for (const auto& [n, t] : arrays) {
        if (n == name) return t;
    }
    throw LoadError("checkpoint has no array named '" + name + "'");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    nlohmann::json header;
    header["meta"] = checkpoint.meta;
    header["arrays"] = nlohmann::json::array();
    for (const auto& [name, t] : checkpoint.arrays) {
        header["arrays"].push_back({{"name", name}, {"shape", t.shape()}});
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write '" + path.string() + "'");
    out << kMagic << '\n' << header.dump() << '\n';
    for (const auto& [name, t] : checkpoint.arrays) {
        out.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!out) throw LoadError("failed writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open '" + path.string() + "'");
    std::string magic, header_line;
    std::getline(in, magic);
    if (magic != kMagic) throw LoadError("'" + path.string() + "' is not a model checkpoint");
    std::getline(in, header_line);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("corrupt checkpoint header in '" + path.string() + "': " + e.what());
    }
    Checkpoint cp;
    cp.meta = header.value("meta", nlohmann::json::object());
    for (const auto& entry : header.at("arrays")) {
        auto shape = entry.at("shape").get<std::vector<std::size_t>>();
        tensor::Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!in) throw LoadError("checkpoint '" + path.string() + "' is truncated");
        cp.arrays.emplace_back(entry.at("name").get<std::string>(), std::move(t));
    }
    return cp;
}

}  // namespace appraisal
