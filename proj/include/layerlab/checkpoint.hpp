// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "layerlab/tensor.hpp"

namespace layerlab {

// Named-tensor container. On disk: a plain-text header (counters, then one
// line per tensor: name, rank, extents) terminated by "end", followed by the
// raw little-endian 64-bit floats of each tensor in header (name) order.
struct Checkpoint {
    std::map<std::string, int64_t> counters;
    std::map<std::string, Tensor> tensors;

    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);

    // Tensors whose name starts with `prefix`, with the prefix stripped.
    std::map<std::string, Tensor> take_prefix(const std::string& prefix) const;
    void put_prefix(const std::string& prefix,
                    const std::map<std::string, Tensor>& tensors_in);
};

}  // namespace layerlab
