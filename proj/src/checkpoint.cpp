#include "dpcwt/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "dpcwt/errors.hpp"

namespace dpcwt {

namespace {

constexpr char kMagic[8] = {'D', 'P', 'C', 'W', 'T', 'N', 'E', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void put_u64(std::ofstream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

void put_f64(std::ofstream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint32_t get_u32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::ifstream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::ifstream& in) { return std::bit_cast<double>(get_u64(in)); }

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  params.arch.validate();
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(kMagic, sizeof kMagic);
    put_u32(out, kVersion);
    put_u32(out, params.arch.hidden_activation == Activation::relu ? 0u : 1u);
    put_u32(out, static_cast<std::uint32_t>(params.arch.layer_sizes.size()));
    for (const int s : params.arch.layer_sizes) put_u32(out, static_cast<std::uint32_t>(s));
    const std::vector<double> flat = params.flatten();
    put_u64(out, flat.size());
    for (const double v : flat) put_f64(out, v);
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());

  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw IoError(path.string() + ": not a checkpoint file");
  if (get_u32(in) != kVersion) throw IoError(path.string() + ": unsupported version");

  ArchitectureSpec arch;
  const std::uint32_t act = get_u32(in);
  if (act > 1) throw IoError(path.string() + ": unknown activation code");
  arch.hidden_activation = act == 0 ? Activation::relu : Activation::tanh;
  const std::uint32_t layers = get_u32(in);
  if (layers < 2 || layers > 64) throw IoError(path.string() + ": implausible layer count");
  arch.layer_sizes.resize(layers);
  for (auto& s : arch.layer_sizes) s = static_cast<int>(get_u32(in));
  if (!in) throw IoError(path.string() + ": truncated header");
  arch.validate();

  const std::uint64_t count = get_u64(in);
  if (count != arch.parameter_count())
    throw IoError(path.string() + ": parameter count does not match the layer sizes");
  std::vector<double> flat(count);
  for (auto& v : flat) v = get_f64(in);
  if (!in) throw IoError(path.string() + ": truncated parameters");
  return ModelParams::unflatten(arch, flat);
}

}  // namespace dpcwt
