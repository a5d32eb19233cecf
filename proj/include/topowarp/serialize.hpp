#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "topowarp/tensor.hpp"

namespace topowarp {

// Flat binary tensor format: magic "TNSR", version u32, rank u32, extents as
// u64, then the data as 64-bit reals — every number little-endian.
void write_tnsr(std::ostream& os, const Tensor& t);
Tensor read_tnsr(std::istream& is);
void save_tnsr(const std::string& path, const Tensor& t);
Tensor load_tnsr(const std::string& path);

// Checkpoint: a plain-text header carrying config key/value pairs and a
// tensor manifest (name, byte offset, shape), followed by the named tensors
// concatenated as TNSR records. Offsets are relative to the end of the
// header.
struct Checkpoint {
    std::vector<std::pair<std::string, std::string>> config;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor& tensor(const std::string& name) const;
    const std::string* config_value(const std::string& key) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace topowarp
