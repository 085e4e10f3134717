#include "evf/checkpoint.hpp"

#include <algorithm>
#include <fstream>

#include "evf/binio.hpp"
#include "evf/errors.hpp"

namespace evf {

using binio::read_le;
using binio::write_le;

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_le<std::uint32_t>(os, kCheckpointVersion);
  binio::write_string(os, ckpt.meta_json);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    binio::write_string(os, name);
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) write_le<std::uint64_t>(os, d);
    for (double v : t.data()) write_le<double>(os, v);
  }
  if (!os) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || !std::equal(magic, magic + 8, kCheckpointMagic)) {
    throw IoError("not a checkpoint file (bad magic): " + path.string());
  }
  const auto version = read_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.meta_json = binio::read_string(is);
  const auto count = read_le<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = binio::read_string(is, 4096);
    const auto rank = read_le<std::uint32_t>(is);
    if (rank > 8) throw IoError("checkpoint tensor '" + name + "' has implausible rank");
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(read_le<std::uint64_t>(is));
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = read_le<double>(is);
    ckpt.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return ckpt;
}

void load_params(const Checkpoint& ckpt, nn::ParamList& params) {
  for (auto& [name, t] : params) {
    const Tensor* src = ckpt.find(name);
    if (!src) throw DataError("checkpoint has no tensor named '" + name + "'");
    if (src->shape() != t.shape()) {
      throw DimensionError("checkpoint tensor '" + name + "' has shape " + shape_str(src->shape()) +
                           ", model expects " + shape_str(t.shape()));
    }
    t.assign(src->data());
  }
}

}  // namespace evf
