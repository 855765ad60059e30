// SPDX-License-Identifier: Apache-2.0
#include "layerlab/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "layerlab/common.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

namespace layerlab {

void Checkpoint::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write checkpoint " + path.string());
    out << "layerlab-checkpoint v1\n";
    out << "counters " << counters.size() << "\n";
    for (const auto& [name, v] : counters) out << name << " " << v << "\n";
    out << "tensors " << tensors.size() << "\n";
    for (const auto& [name, t] : tensors) {
        out << name << " " << t.rank();
        for (int e : t.shape) out << " " << e;
        out << "\n";
    }
    out << "end\n";
    for (const auto& [name, t] : tensors) {
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
    if (!out) throw ConfigError("short write for checkpoint " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read checkpoint " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != "layerlab-checkpoint v1")
        throw ConfigError("bad checkpoint magic in " + path.string());

    Checkpoint ck;
    std::string word;
    std::size_t n = 0;
    in >> word >> n;
    if (word != "counters") throw ConfigError("bad checkpoint header");
    for (std::size_t i = 0; i < n; ++i) {
        std::string name;
        int64_t v;
        in >> name >> v;
        ck.counters[name] = v;
    }
    in >> word >> n;
    if (word != "tensors") throw ConfigError("bad checkpoint header");
    std::vector<std::pair<std::string, std::vector<int>>> order;
    for (std::size_t i = 0; i < n; ++i) {
        std::string name;
        int rank;
        in >> name >> rank;
        std::vector<int> shape(rank);
        for (int& e : shape) in >> e;
        order.emplace_back(std::move(name), std::move(shape));
    }
    in >> word;
    if (word != "end") throw ConfigError("bad checkpoint header terminator");
    in.get();  // newline before the binary block
    for (auto& [name, shape] : order) {
        Tensor t = Tensor::zeros(shape);
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!in) throw ConfigError("truncated checkpoint " + path.string());
        ck.tensors[name] = std::move(t);
    }
    return ck;
}

std::map<std::string, Tensor> Checkpoint::take_prefix(
    const std::string& prefix) const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, t] : tensors) {
        if (name.rfind(prefix, 0) == 0) out[name.substr(prefix.size())] = t;
    }
    return out;
}

void Checkpoint::put_prefix(const std::string& prefix,
                            const std::map<std::string, Tensor>& tensors_in) {
    for (const auto& [name, t] : tensors_in) tensors[prefix + name] = t;
}

}  // namespace layerlab
