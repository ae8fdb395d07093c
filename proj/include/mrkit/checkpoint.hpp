// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "mrkit/tensor.hpp"

namespace mrkit::engine {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Single-file parameter checkpoint. Byte layout (all integers little-endian):
//
//   magic   "MRCK"                      4 bytes
//   version u32                         currently 1
//   count   u64                         number of tensors
//   per tensor:
//     name_len u32, name bytes
//     dtype    u8                       0 = f64, 1 = i64
//     rank     u32, dims i64 * rank
//     payload  raw values, little-endian, numel * 8 bytes
//
// Truncation, bad magic, or a payload length that disagrees with the header
// raises CorruptCheckpoint; an unknown version raises VersionMismatch.
void write_checkpoint(const std::string& path,
                      const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(const std::string& path);

}  // namespace mrkit::engine
