#pragma once

// Self-describing checkpoint container.
//
//   magic     8 bytes  "EVFCKPT1"
//   version   u32      (1)
//   meta_len  u32, meta bytes (UTF-8 JSON: kind, config, fingerprint)
//   count     u32
//   count x { name_len u32, name bytes, rank u32, dims u64[rank],
//             payload f64[prod(dims)] }
//
// All integers and floats are little-endian.

#include <filesystem>
#include <string>

#include "evf/nn.hpp"

namespace evf {

inline constexpr char kCheckpointMagic[8] = {'E', 'V', 'F', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string meta_json;
  nn::ParamList tensors;

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies values from `ckpt` into `params` by name; shapes must agree.
void load_params(const Checkpoint& ckpt, nn::ParamList& params);

}  // namespace evf
