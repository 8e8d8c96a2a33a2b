#pragma once

#include <map>
#include <string>

#include "wayflow/tensor.hpp"

namespace wayflow {

// Container file for model state.
//
// Layout (all integers little-endian):
//   magic "WITC" | version u32 | config length u64 + UTF-8 bytes |
//   tensor count u32 | per tensor: name length u32 + bytes, rank u32,
//   dims u64 each, dtype u32 (0 = float32 LE), raw data |
//   crc32 u32 over every preceding byte.
//
// Tensor payloads are stored as float32; in-memory tensors are float64, so
// writing quantizes once and a write/read/write cycle is byte-stable.
struct Checkpoint {
    static constexpr uint32_t kVersion = 1;

    std::string config_text;  // line config; carries the `kind = ...` tag
    std::map<std::string, Tensor> tensors;

    bool has(const std::string& name) const { return tensors.count(name) != 0; }
    const Tensor& get(const std::string& name) const;

    // All tensors whose name starts with `prefix`, with the prefix removed.
    std::map<std::string, Tensor> with_prefix(const std::string& prefix) const;
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace wayflow
