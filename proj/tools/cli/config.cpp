#include "config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "gramtex/binio.hpp"
#include "gramtex/error.hpp"

namespace gramtex::cli {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_uint(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw Error(ErrorCode::Parse, key + ": expected a non-negative integer, got \"" + v + "\"");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    return parse_double(v);
  } catch (const Error&) {
    throw Error(ErrorCode::Parse, key + ": expected a number, got \"" + v + "\"");
  }
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ",") + s;
  return out;
}

struct Field {
  std::string key;
  std::function<std::string(const JobConfig&)> get;
  std::function<void(JobConfig&, const std::string&)> set;
};

#define GT_REAL(name, member)                                                 \
  Field {                                                                     \
    name, [](const JobConfig& c) { return format_double(c.member); },         \
        [](JobConfig& c, const std::string& v) { c.member = parse_real(name, v); } \
  }
#define GT_SIZE(name, member)                                                         \
  Field {                                                                             \
    name, [](const JobConfig& c) { return std::to_string(c.member); },                \
        [](JobConfig& c, const std::string& v) { c.member = parse_uint<std::size_t>(name, v); } \
  }
#define GT_TEXT(name, member)                                      \
  Field {                                                          \
    name, [](const JobConfig& c) { return c.member; },             \
        [](JobConfig& c, const std::string& v) { c.member = v; }   \
  }
#define GT_LIST(name, member)                                                 \
  Field {                                                                     \
    name, [](const JobConfig& c) { return join(c.member); },                  \
        [](JobConfig& c, const std::string& v) { c.member = split_list(v); }  \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      // synthesis objective
      GT_LIST("texture_layers", job.texture_layers),
      GT_REAL("texture_weight", job.texture_weight),
      GT_TEXT("content_layer", job.content_layer),
      GT_REAL("content_weight", job.content_weight),
      GT_LIST("class_layers", job.class_layers),
      GT_REAL("class_weight", job.class_weight),
      GT_REAL("prior_weight", job.prior_weight),
      GT_REAL("tv_exponent", job.tv_exponent),
      GT_REAL("temperature", job.temperature),
      {"normalization", [](const JobConfig& c) { return std::string(to_string(c.job.normalization)); },
       [](JobConfig& c, const std::string& v) { c.job.normalization = parse_grad_normalization(v); }},
      // initialization and solver
      {"init", [](const JobConfig& c) { return std::string(to_string(c.job.init)); },
       [](JobConfig& c, const std::string& v) { c.job.init = parse_init_mode(v); }},
      GT_TEXT("init_image", init_path),
      GT_REAL("init_std", job.init_std),
      GT_REAL("fallback_init_std", job.fallback_init_std),
      GT_SIZE("out_h", job.out_h),
      GT_SIZE("out_w", job.out_w),
      GT_SIZE("iterations", job.iterations),
      GT_SIZE("memory", job.memory),
      {"seed", [](const JobConfig& c) { return std::to_string(c.job.seed); },
       [](JobConfig& c, const std::string& v) { c.job.seed = parse_uint<std::uint64_t>("seed", v); }},
      GT_SIZE("snapshot_every", snapshot_every),
      // quilting
      GT_SIZE("quilt_patch", job.quilt.patch),
      GT_SIZE("quilt_overlap", job.quilt.overlap),
      GT_REAL("quilt_tolerance", job.quilt.tolerance),
      GT_REAL("quilt_alpha", job.quilt_alpha),
      // inputs
      GT_TEXT("network", network),
      {"network_seed", [](const JobConfig& c) { return std::to_string(c.network_seed); },
       [](JobConfig& c, const std::string& v) {
         c.network_seed = parse_uint<std::uint64_t>("network_seed", v);
       }},
      GT_TEXT("classifiers", classifiers),
      GT_TEXT("source", source),
      GT_TEXT("content", content),
      GT_TEXT("style", style),
      // editing
      {"edit_mode", [](const JobConfig& c) { return std::string(to_string(c.edit_mode)); },
       [](JobConfig& c, const std::string& v) { c.edit_mode = parse_edit_mode(v); }},
      {"attributes",
       [](const JobConfig& c) {
         std::string out;
         for (const auto& [name, w] : c.attributes) {
           out += (out.empty() ? "" : ",") + name + ":" + format_double(w);
         }
         return out;
       },
       [](JobConfig& c, const std::string& v) {
         c.attributes.clear();
         for (const auto& item : split_list(v)) {
           const auto colon = item.rfind(':');
           if (colon == std::string::npos || colon == 0) {
             throw Error(ErrorCode::Parse, "attributes: expected class:weight, got \"" + item + "\"");
           }
           c.attributes.emplace_back(item.substr(0, colon),
                                     parse_real("attributes", item.substr(colon + 1)));
         }
       }},
      // head training and jitter
      {"head", [](const JobConfig& c) { return std::string(to_string(c.head.head)); },
       [](JobConfig& c, const std::string& v) { c.head.head = parse_head(v); }},
      {"jitter", [](const JobConfig& c) { return std::string(to_string(c.head.jitter.level)); },
       [](JobConfig& c, const std::string& v) { c.head.jitter.level = parse_jitter(v); }},
      GT_SIZE("crop", head.jitter.crop),
      GT_SIZE("margin", head.jitter.margin),
      GT_SIZE("max_epochs", head.max_epochs),
      GT_SIZE("batch", head.batch),
      GT_REAL("learning_rate", head.learning_rate),
      GT_REAL("bilinear_lr_scale", head.bilinear_lr_scale),
      GT_SIZE("lr_patience", head.lr_patience),
      GT_REAL("momentum", head.momentum),
      GT_REAL("weight_decay", head.weight_decay),
      GT_SIZE("fc_hidden", head.fc_hidden),
      GT_TEXT("feature_layer", head.feature_layer),
      // synthetic data
      {"data_classes",
       [](const JobConfig& c) {
         std::vector<std::string> names;
         for (auto k : c.data.classes) names.emplace_back(to_string(k));
         return join(names);
       },
       [](JobConfig& c, const std::string& v) {
         c.data.classes.clear();
         for (const auto& n : split_list(v)) c.data.classes.push_back(parse_texture_kind(n));
       }},
      GT_SIZE("data_per_class", data.per_class),
      GT_SIZE("data_height", data.height),
      GT_SIZE("data_width", data.width),
      GT_SIZE("data_region", data.region),
      GT_REAL("data_noise", data.noise),
      GT_SIZE("validation_per_class", validation_per_class),
      // linear classifiers
      GT_REAL("svm_c", svm.c_reg),
      GT_SIZE("svm_epochs", svm.epochs),
  };
  return table;
}

#undef GT_REAL
#undef GT_SIZE
#undef GT_TEXT
#undef GT_LIST

}  // namespace

void JobConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(*this, trim(value));
      return;
    }
  }
  throw Error(ErrorCode::Parse, "unknown config key \"" + key + "\"");
}

void JobConfig::read(std::istream& is) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::Parse, "line " + std::to_string(lineno) + ": expected key=value");
    }
    set(trim(t.substr(0, eq)), t.substr(eq + 1));
  }
}

void JobConfig::write(std::ostream& os) const {
  for (const auto& f : fields()) os << f.key << '=' << f.get(*this) << '\n';
}

JobConfig JobConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::Io, "cannot open config " + path.string());
  JobConfig c;
  c.read(is);
  return c;
}

std::vector<std::string> JobConfig::keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

std::string serialize(const JobConfig& config) {
  std::ostringstream os;
  config.write(os);
  return os.str();
}

}  // namespace gramtex::cli
