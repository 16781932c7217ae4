#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace gramtex {

/// Shared binary container used by the weight ("GMW1") and classifier
/// ("GMC1") files:
///
///   magic[4] | u64 spec_len | spec (UTF-8 text) | f64 payload... | u64 footer
///
/// All integers and doubles are little-endian; the footer holds the number of
/// bytes preceding it, so any truncation is detected.
struct Container {
  std::string spec;
  std::vector<double> payload;
};

void write_container(const std::filesystem::path& path, std::string_view magic,
                     const std::string& spec, const std::vector<double>& payload);

/// Throws BadMagic, Truncated, or Io.
Container read_container(const std::filesystem::path& path, std::string_view magic);

/// Shortest decimal text that parses back to the identical double.
std::string format_double(double v);
double parse_double(std::string_view text);

}  // namespace gramtex
