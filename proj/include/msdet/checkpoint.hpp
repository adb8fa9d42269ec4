#pragma once

#include <string>

#include "msdet/tensor.hpp"

namespace msdet::checkpoint {

// Binary snapshot of every parameter and buffer in a store, in registration
// order. Layout: magic "SS4M", u32 version, u32 entry count, then per entry
// {u32 name length, name bytes, u32 rank, u32 dim per axis, float payload}.
// Values round-trip bit-exactly. Integers and floats are little-endian.

void save(const ParamStore& store, const std::string& path);

// Loads into an already-constructed store; every entry must match an
// existing parameter by name and shape. Throws std::runtime_error on a
// malformed file or any mismatch.
void load(ParamStore& store, const std::string& path);

}  // namespace msdet::checkpoint
