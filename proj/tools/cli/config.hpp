#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "gramtex/classify.hpp"
#include "gramtex/synthesis.hpp"

namespace gramtex::cli {

/// Everything a command can be configured with. Stored as plain key=value
/// text, one key per line, '#' starting a comment line.
struct JobConfig {
  SynthesisJob job;
  HeadTrainOptions head;
  SyntheticSpec data;
  std::size_t validation_per_class = 20;
  SvmOptions svm;

  std::string network;  // weight file; empty uses tex-net-small(network_seed)
  std::uint64_t network_seed = 1;
  std::string classifiers;
  std::string source;
  std::string content;
  std::string style;
  std::string init_path;
  EditMode edit_mode = EditMode::Texture;
  /// "class=weight" pairs for edit.
  std::vector<std::pair<std::string, double>> attributes;
  std::size_t snapshot_every = 0;

  /// Applies one key=value assignment. Throws Parse on unknown keys or
  /// malformed values.
  void set(const std::string& key, const std::string& value);
  /// Applies every non-comment line of `is`.
  void read(std::istream& is);
  /// All keys in a fixed order.
  void write(std::ostream& os) const;

  static JobConfig load(const std::filesystem::path& path);
  static std::vector<std::string> keys();
};

std::string serialize(const JobConfig& config);

}  // namespace gramtex::cli
