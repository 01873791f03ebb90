#include "poseforge/io.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>

#include "poseforge/common.hpp"

namespace poseforge {

std::vector<std::string_view> split(std::string_view text, char delim) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(delim, start);
    if (pos == std::string_view::npos) {
      parts.push_back(text.substr(start));
      return parts;
    }
    parts.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

namespace {

template <typename T>
T parse_number(std::string_view field, const std::string& where, const char* kind) {
  T value{};
  const char* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end || field.empty()) {
    throw Error(where + ": expected " + kind + ", got '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace

int parse_int(std::string_view field, const std::string& where) {
  return parse_number<int>(field, where, "integer");
}

std::uint64_t parse_u64(std::string_view field, const std::string& where) {
  return parse_number<std::uint64_t>(field, where, "unsigned integer");
}

double parse_double(std::string_view field, const std::string& where) {
  return parse_number<double>(field, where, "number");
}

bool parse_bool(std::string_view field, const std::string& where) {
  if (field == "true" || field == "1") return true;
  if (field == "false" || field == "0") return false;
  throw Error(where + ": expected true/false, got '" + std::string(field) + "'");
}

std::string format_double(double value) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), ptr);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest.data(), &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

static_assert(std::endian::native == std::endian::little, "binary formats assume little-endian hosts");

void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
void write_f32(std::ostream& out, float v) { out.write(reinterpret_cast<const char*>(&v), 4); }

namespace {
template <typename T>
T read_raw(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) throw Error("unexpected end of file");
  return v;
}
}  // namespace

std::uint32_t read_u32(std::istream& in) { return read_raw<std::uint32_t>(in); }
std::uint64_t read_u64(std::istream& in) { return read_raw<std::uint64_t>(in); }
float read_f32(std::istream& in) { return read_raw<float>(in); }

}  // namespace poseforge
