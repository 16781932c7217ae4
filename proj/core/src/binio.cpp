#include "gramtex/binio.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <iterator>

#include "gramtex/error.hpp"

namespace gramtex {
namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= std::uint64_t{static_cast<unsigned char>(in[pos + i])} << (8 * i);
  }
  return v;
}

}  // namespace

void write_container(const std::filesystem::path& path, std::string_view magic,
                     const std::string& spec, const std::vector<double>& payload) {
  std::string bytes;
  bytes.reserve(4 + 8 + spec.size() + 8 * payload.size() + 8);
  bytes.append(magic);
  put_u64(bytes, spec.size());
  bytes.append(spec);
  for (double v : payload) put_u64(bytes, std::bit_cast<std::uint64_t>(v));
  put_u64(bytes, bytes.size());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

Container read_container(const std::filesystem::path& path, std::string_view magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < magic.size()) throw Error(ErrorCode::Truncated, path.string());
  if (std::string_view(bytes).substr(0, magic.size()) != magic) {
    throw Error(ErrorCode::BadMagic, path.string() + " does not start with \"" +
                                         std::string(magic) + "\"");
  }
  if (bytes.size() < magic.size() + 16) throw Error(ErrorCode::Truncated, path.string());
  const std::uint64_t footer = get_u64(bytes, bytes.size() - 8);
  if (footer != bytes.size() - 8) {
    throw Error(ErrorCode::Truncated, path.string() + ": footer says " + std::to_string(footer) +
                                          " bytes, found " + std::to_string(bytes.size() - 8));
  }
  const std::uint64_t spec_len = get_u64(bytes, magic.size());
  const std::size_t spec_begin = magic.size() + 8;
  if (spec_len > bytes.size() - 8 - spec_begin) {
    throw Error(ErrorCode::Truncated, path.string() + ": spec block overruns file");
  }
  const std::size_t payload_begin = spec_begin + spec_len;
  const std::size_t payload_bytes = bytes.size() - 8 - payload_begin;
  if (payload_bytes % 8 != 0) {
    throw Error(ErrorCode::Truncated, path.string() + ": partial payload value");
  }
  Container c;
  c.spec = bytes.substr(spec_begin, spec_len);
  c.payload.resize(payload_bytes / 8);
  for (std::size_t i = 0; i < c.payload.size(); ++i) {
    c.payload[i] = std::bit_cast<double>(get_u64(bytes, payload_begin + 8 * i));
  }
  return c;
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(std::string_view text) {
  double v = 0.0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size()) {
    throw Error(ErrorCode::Parse, "not a number: \"" + std::string(text) + "\"");
  }
  return v;
}

}  // namespace gramtex
