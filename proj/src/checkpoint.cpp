#include "poseforge/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "poseforge/io.hpp"

namespace poseforge::nn {

namespace {

constexpr char kMagic[4] = {'P', 'F', 'C', 'K'};

void write_tensor(std::ostream& out, const Mat<float>& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) write_f32(out, m.data()[i]);
}

void read_tensor(std::istream& in, Mat<float>& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = read_f32(in);
}

}  // namespace

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path) {
  const auto& specs = param_specs();
  std::ostringstream out(std::ios::binary);
  out.write(kMagic, 4);
  write_u32(out, ckpt.version);
  write_u64(out, ckpt.iteration);
  write_u32(out, static_cast<std::uint32_t>(kParamCount));
  for (const auto& spec : specs) {
    write_u32(out, static_cast<std::uint32_t>(spec.shape.size()));
    for (auto d : spec.shape) write_u32(out, d);
  }
  for (std::size_t i = 0; i < kParamCount; ++i) {
    if (ckpt.params[i].rows() != specs[i].rows || ckpt.params[i].cols() != specs[i].cols) {
      throw Error("save_checkpoint: tensor " + std::string(specs[i].name) + " has the wrong shape");
    }
    write_tensor(out, ckpt.params[i]);
  }
  for (std::size_t i = 0; i < kParamCount; ++i) write_tensor(out, ckpt.adam.m[i]);
  for (std::size_t i = 0; i < kParamCount; ++i) write_tensor(out, ckpt.adam.v[i]);
  write_u64(out, ckpt.adam.t);
  write_u32(out, static_cast<std::uint32_t>(ckpt.config_echo.size()));
  out.write(ckpt.config_echo.data(), static_cast<std::streamsize>(ckpt.config_echo.size()));

  auto tmp = path;
  tmp += ".tmp";
  write_text_file(tmp, out.str());
  std::filesystem::rename(tmp, path);
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("checkpoint not found: " + path.string());
  in.exceptions(std::ios::failbit | std::ios::badbit);
  const std::string where = "PFCK checkpoint " + path.string();
  try {
    char magic[4];
    in.read(magic, 4);
    if (!std::equal(magic, magic + 4, kMagic)) throw Error(where + ": bad magic (not a PFCK checkpoint)");
    ModelCheckpoint ckpt;
    ckpt.version = read_u32(in);
    if (ckpt.version != kCheckpointVersion) {
      throw Error(where + ": unsupported version " + std::to_string(ckpt.version));
    }
    ckpt.iteration = read_u64(in);
    const auto& specs = param_specs();
    if (read_u32(in) != kParamCount) throw Error(where + ": shape table has the wrong tensor count");
    for (const auto& spec : specs) {
      const auto rank = read_u32(in);
      if (rank != spec.shape.size()) throw Error(where + ": rank mismatch for " + std::string(spec.name));
      for (auto d : spec.shape) {
        if (read_u32(in) != d) throw Error(where + ": shape mismatch for " + std::string(spec.name));
      }
    }
    ckpt.params = ConvNetParams<float>::zeros();
    ckpt.adam = AdamState<float>::fresh();
    for (std::size_t i = 0; i < kParamCount; ++i) read_tensor(in, ckpt.params[i]);
    for (std::size_t i = 0; i < kParamCount; ++i) read_tensor(in, ckpt.adam.m[i]);
    for (std::size_t i = 0; i < kParamCount; ++i) read_tensor(in, ckpt.adam.v[i]);
    ckpt.adam.t = read_u64(in);
    const auto len = read_u32(in);
    ckpt.config_echo.resize(len);
    in.read(ckpt.config_echo.data(), len);
    if (in.peek() != std::char_traits<char>::eof()) throw Error(where + ": trailing bytes");
    return ckpt;
  } catch (const std::ios::failure&) {
    throw Error(where + ": truncated file");
  }
}

}  // namespace poseforge::nn
