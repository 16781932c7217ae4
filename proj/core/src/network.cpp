#include "gramtex/network.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "gramtex/binio.hpp"
#include "gramtex/error.hpp"
#include "gramtex/rng.hpp"

namespace gramtex {
namespace {

constexpr std::string_view kWeightMagic = "GMW1";
constexpr std::string_view kSpecHeader = "gramtex-network 1";

struct ParsedName {
  std::string prefix;
  std::size_t block = 0;
  std::size_t index = 0;
};

std::optional<std::size_t> parse_size(std::string_view s) {
  std::size_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// "relu4_2" -> {"relu", 4, 2}
std::optional<ParsedName> parse_vgg_name(std::string_view name) {
  const auto digit = name.find_first_of("0123456789");
  const auto underscore = name.rfind('_');
  if (digit == std::string_view::npos || digit == 0 || underscore == std::string_view::npos ||
      underscore < digit) {
    return std::nullopt;
  }
  const auto block = parse_size(name.substr(digit, underscore - digit));
  const auto index = parse_size(name.substr(underscore + 1));
  if (!block || !index) return std::nullopt;
  return ParsedName{std::string(name.substr(0, digit)), *block, *index};
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool: return "maxpool";
  }
  return "?";
}

LayerSpec LayerSpec::conv(std::string name, std::size_t kernel, std::size_t in, std::size_t out,
                          std::size_t pad, std::size_t stride) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::Conv;
  s.kernel = kernel;
  s.in_channels = in;
  s.out_channels = out;
  s.pad = pad;
  s.stride = stride;
  return s;
}

LayerSpec LayerSpec::relu(std::string name) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::Relu;
  return s;
}

LayerSpec LayerSpec::maxpool(std::string name, std::size_t window, std::size_t stride) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::MaxPool;
  s.window = window;
  s.stride = stride;
  return s;
}

Network::Network(std::vector<LayerSpec> layers, std::vector<ConvParams> params,
                 std::vector<double> mean)
    : layers_(std::move(layers)), params_(std::move(params)), mean_(std::move(mean)) {
  std::size_t next = 0;
  for (const auto& l : layers_) {
    param_of_layer_.push_back(l.kind == LayerKind::Conv ? next++ : SIZE_MAX);
  }
  validate();
}

void Network::validate() const {
  if (layers_.empty()) throw Error(ErrorCode::InvalidArgument, "network has no layers");
  if (mean_.empty()) throw Error(ErrorCode::InvalidArgument, "network has no input channels");
  std::set<std::string> seen;
  std::size_t channels = mean_.size();
  std::size_t conv_count = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    if (l.name.empty() || !seen.insert(l.name).second) {
      throw Error(ErrorCode::InvalidArgument, "layer names must be unique and non-empty: \"" +
                                                  l.name + "\"");
    }
    switch (l.kind) {
      case LayerKind::Conv: {
        if (l.kernel == 0 || l.stride == 0 || l.out_channels == 0) {
          throw Error(ErrorCode::InvalidArgument, l.name + ": kernel, stride, out must be >= 1");
        }
        if (l.in_channels != channels) {
          throw Error(ErrorCode::DimensionMismatch,
                      l.name + ": in_channels " + std::to_string(l.in_channels) +
                          " but previous layer produces " + std::to_string(channels));
        }
        if (i + 1 >= layers_.size() || layers_[i + 1].kind != LayerKind::Relu) {
          throw Error(ErrorCode::InvalidArgument, l.name + ": conv must be followed by a relu");
        }
        if (conv_count >= params_.size()) {
          throw Error(ErrorCode::SpecMismatch, l.name + ": missing parameters");
        }
        const ConvParams& p = params_[conv_count];
        const std::vector<std::size_t> want{l.kernel, l.kernel, l.in_channels, l.out_channels};
        if (p.weights.dims() != want || p.bias.size() != l.out_channels) {
          throw Error(ErrorCode::SpecMismatch, l.name + ": parameters " +
                                                   dims_string(p.weights.dims()) +
                                                   " do not match declared " + dims_string(want));
        }
        if (!p.weights.all_finite() ||
            !std::all_of(p.bias.begin(), p.bias.end(), [](double v) { return std::isfinite(v); })) {
          throw Error(ErrorCode::NonFinite, l.name + ": non-finite parameters");
        }
        channels = l.out_channels;
        ++conv_count;
        break;
      }
      case LayerKind::MaxPool:
        if (l.window == 0 || l.stride == 0) {
          throw Error(ErrorCode::InvalidArgument, l.name + ": window and stride must be >= 1");
        }
        break;
      case LayerKind::Relu:
        break;
    }
  }
  if (conv_count != params_.size()) {
    throw Error(ErrorCode::SpecMismatch, "parameter count " + std::to_string(params_.size()) +
                                             " != conv layer count " + std::to_string(conv_count));
  }
}

std::optional<std::size_t> Network::find(std::string_view name) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t Network::index_of(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw Error(ErrorCode::UnknownLayer, "\"" + std::string(name) + "\"");
}

std::string Network::resolve(std::string_view name) const {
  if (find(name)) return std::string(name);
  const auto want = parse_vgg_name(name);
  if (!want) throw Error(ErrorCode::UnknownLayer, "\"" + std::string(name) + "\"");
  const LayerSpec* best = nullptr;
  std::size_t best_index = 0;
  const LayerSpec* first = nullptr;
  std::size_t first_index = SIZE_MAX;
  for (const auto& l : layers_) {
    const auto have = parse_vgg_name(l.name);
    if (!have || have->prefix != want->prefix || have->block != want->block) continue;
    if (have->index <= want->index && (!best || have->index > best_index)) {
      best = &l;
      best_index = have->index;
    }
    if (have->index < first_index) {
      first = &l;
      first_index = have->index;
    }
  }
  if (best) return best->name;
  if (first) return first->name;
  throw Error(ErrorCode::UnknownLayer, "\"" + std::string(name) + "\" has no counterpart");
}

std::size_t Network::param_index(std::size_t layer) const {
  if (layer >= layers_.size() || param_of_layer_[layer] == SIZE_MAX) {
    throw Error(ErrorCode::InvalidArgument, "layer " + std::to_string(layer) + " is not conv");
  }
  return param_of_layer_[layer];
}

const ConvParams& Network::conv_params(std::size_t layer) const {
  return params_[param_index(layer)];
}

std::size_t Network::output_channels(std::size_t layer) const {
  std::size_t c = mean_.size();
  for (std::size_t i = 0; i <= layer && i < layers_.size(); ++i) {
    if (layers_[i].kind == LayerKind::Conv) c = layers_[i].out_channels;
  }
  return c;
}

std::size_t Network::cumulative_stride(std::size_t layer) const {
  std::size_t s = 1;
  for (std::size_t i = 0; i <= layer && i < layers_.size(); ++i) {
    if (layers_[i].kind != LayerKind::Relu) s *= layers_[i].stride;
  }
  return s;
}

std::size_t Network::receptive_field(std::size_t layer) const {
  std::size_t rf = 1, jump = 1;
  for (std::size_t i = 0; i <= layer && i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    if (l.kind == LayerKind::Conv) {
      rf += (l.kernel - 1) * jump;
      jump *= l.stride;
    } else if (l.kind == LayerKind::MaxPool) {
      rf += (l.window - 1) * jump;
      jump *= l.stride;
    }
  }
  return rf;
}

std::optional<std::pair<std::size_t, std::size_t>> Network::output_extent(std::size_t layer,
                                                                          std::size_t h,
                                                                          std::size_t w) const {
  for (std::size_t i = 0; i <= layer && i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    if (l.kind == LayerKind::Conv) {
      if (h + 2 * l.pad < l.kernel || w + 2 * l.pad < l.kernel) return std::nullopt;
      h = (h + 2 * l.pad - l.kernel) / l.stride + 1;
      w = (w + 2 * l.pad - l.kernel) / l.stride + 1;
    } else if (l.kind == LayerKind::MaxPool) {
      if (h < l.window || w < l.window) return std::nullopt;
      h = (h - l.window) / l.stride + 1;
      w = (w - l.window) / l.stride + 1;
    }
  }
  if (h == 0 || w == 0) return std::nullopt;
  return std::make_pair(h, w);
}

// --- ActivationSet -----------------------------------------------------------

const Tensor& ActivationSet::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) {
    throw Error(ErrorCode::UnknownLayer, "\"" + std::string(name) + "\" was not collected");
  }
  return cache_.outputs[it->second + 1];
}

std::size_t ActivationSet::layer_index(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) {
    throw Error(ErrorCode::UnknownLayer, "\"" + std::string(name) + "\" was not collected");
  }
  return it->second;
}

std::set<std::string> ActivationSet::names() const {
  std::set<std::string> out;
  for (const auto& [name, _] : index_) out.insert(name);
  return out;
}

ActivationSet forward_collect(const Network& net, const Tensor& image,
                              const std::set<std::string>& layer_names) {
  if (image.rank() != 3 || image.channels() != net.input_channels()) {
    throw Error(ErrorCode::DimensionMismatch,
                "image " + dims_string(image.dims()) + " vs network input channels " +
                    std::to_string(net.input_channels()));
  }
  ActivationSet acts;
  std::size_t deepest = 0;
  for (const auto& name : layer_names) {
    const std::size_t idx = net.index_of(name);
    if (!net.output_extent(idx, image.height(), image.width())) {
      throw Error(ErrorCode::ImageTooSmall, dims_string(image.dims()) + " leaves no spatial " +
                                                "location at layer " + name);
    }
    acts.index_[name] = idx;
    deepest = std::max(deepest, idx + 1);
  }

  ForwardCache& cache = acts.cache_;
  cache.input_dims = image.dims();
  Tensor centered = image;
  const std::size_t c = image.channels();
  for (std::size_t i = 0; i < centered.size(); ++i) centered[i] -= net.mean()[i % c];
  cache.outputs.reserve(deepest + 1);
  cache.outputs.push_back(std::move(centered));
  cache.argmax.resize(deepest);

  for (std::size_t i = 0; i < deepest; ++i) {
    const LayerSpec& l = net.layers()[i];
    const Tensor& in = cache.outputs.back();
    switch (l.kind) {
      case LayerKind::Conv: {
        const ConvParams& p = net.conv_params(i);
        cache.outputs.push_back(conv2d(in, p.weights, p.bias, l.pad, l.stride));
        break;
      }
      case LayerKind::Relu:
        cache.outputs.push_back(relu(in));
        break;
      case LayerKind::MaxPool: {
        MaxPoolResult r = maxpool(in, l.window, l.stride);
        cache.argmax[i] = std::move(r.argmax);
        cache.outputs.push_back(std::move(r.output));
        break;
      }
    }
  }
  return acts;
}

namespace {

NetworkGrads backward_impl(const Network& net, const ActivationSet& acts, const LayerGrads& grads,
                           bool with_params) {
  const ForwardCache& cache = acts.cache();
  NetworkGrads out;
  if (with_params) {
    for (const auto& p : net.parameters()) {
      out.params.push_back({Tensor::zeros_like(p.weights), std::vector<double>(p.bias.size())});
    }
  }
  std::size_t top = 0;
  for (const auto& [name, g] : grads) {
    const std::size_t idx = acts.layer_index(name);
    if (!g.same_shape(cache.outputs[idx + 1])) {
      throw Error(ErrorCode::DimensionMismatch, "gradient for " + name + " is " +
                                                    dims_string(g.dims()) + ", activation is " +
                                                    dims_string(cache.outputs[idx + 1].dims()));
    }
    top = std::max(top, idx + 1);
  }
  if (top == 0) {
    out.input = Tensor(cache.input_dims);
    return out;
  }

  std::map<std::size_t, const Tensor*> injected;
  for (const auto& [name, g] : grads) injected[acts.layer_index(name)] = &g;

  Tensor upstream = Tensor::zeros_like(cache.outputs[top]);
  for (std::size_t i = top; i-- > 0;) {
    if (auto it = injected.find(i); it != injected.end()) upstream += *it->second;
    const LayerSpec& l = net.layers()[i];
    const Tensor& in = cache.outputs[i];
    switch (l.kind) {
      case LayerKind::Conv: {
        const std::size_t pi = net.param_index(i);
        Conv2dGrads g = conv2d_backward(in, net.parameters()[pi].weights, upstream, l.pad,
                                        l.stride, with_params);
        if (with_params) {
          out.params[pi].weights += g.weights;
          for (std::size_t k = 0; k < g.bias.size(); ++k) out.params[pi].bias[k] += g.bias[k];
        }
        upstream = std::move(g.input);
        break;
      }
      case LayerKind::Relu:
        upstream = relu_backward(in, upstream);
        break;
      case LayerKind::MaxPool: {
        Tensor g(in.dims());
        const auto& argmax = cache.argmax[i];
        for (std::size_t o = 0; o < upstream.size(); ++o) g[argmax[o]] += upstream[o];
        upstream = std::move(g);
        break;
      }
    }
  }
  out.input = std::move(upstream);
  return out;
}

}  // namespace

Tensor backward_to_input(const Network& net, const ActivationSet& acts, const LayerGrads& grads) {
  return backward_impl(net, acts, grads, false).input;
}

NetworkGrads backward_full(const Network& net, const ActivationSet& acts, const LayerGrads& grads) {
  return backward_impl(net, acts, grads, true);
}

// --- construction --------------------------------------------------------------

Network init_random(std::vector<LayerSpec> spec, std::vector<double> mean, std::uint64_t seed) {
  const CounterRng root(seed);
  std::vector<ConvParams> params;
  for (const auto& l : spec) {
    if (l.kind != LayerKind::Conv) continue;
    CounterRng rng = root.split(l.name);
    const double stddev =
        std::sqrt(2.0 / static_cast<double>(l.kernel * l.kernel * l.in_channels));
    ConvParams p{Tensor({l.kernel, l.kernel, l.in_channels, l.out_channels}),
                 std::vector<double>(l.out_channels, 0.0)};
    for (double& w : p.weights.data()) w = stddev * rng.normal();
    params.push_back(std::move(p));
  }
  return Network(std::move(spec), std::move(params), std::move(mean));
}

std::vector<LayerSpec> tex_net_small_spec() {
  const std::size_t widths[] = {8, 16, 32, 64, 64};
  std::vector<LayerSpec> layers;
  std::size_t in = 3;
  for (std::size_t b = 0; b < 5; ++b) {
    const std::string block = std::to_string(b + 1);
    if (b > 0) layers.push_back(LayerSpec::maxpool("pool" + std::to_string(b)));
    layers.push_back(LayerSpec::conv("conv" + block + "_1", 3, in, widths[b]));
    layers.push_back(LayerSpec::relu("relu" + block + "_1"));
    in = widths[b];
  }
  return layers;
}

std::vector<double> default_mean() { return {0.485, 0.456, 0.406}; }

Network tex_net_small(std::uint64_t seed) {
  return init_random(tex_net_small_spec(), default_mean(), seed);
}

// --- weight files ----------------------------------------------------------------

namespace {

std::string spec_text(const Network& net) {
  std::ostringstream os;
  os << kSpecHeader << '\n' << "mean";
  for (double m : net.mean()) os << ' ' << format_double(m);
  os << '\n';
  for (const auto& l : net.layers()) {
    os << to_string(l.kind) << ' ' << l.name;
    if (l.kind == LayerKind::Conv) {
      os << " kernel=" << l.kernel << " in=" << l.in_channels << " out=" << l.out_channels
         << " pad=" << l.pad << " stride=" << l.stride;
    } else if (l.kind == LayerKind::MaxPool) {
      os << " window=" << l.window << " stride=" << l.stride;
    }
    os << '\n';
  }
  return os.str();
}

std::size_t need_field(const std::map<std::string, std::size_t>& fields, const std::string& key,
                       const std::string& layer) {
  auto it = fields.find(key);
  if (it == fields.end()) {
    throw Error(ErrorCode::Parse, "layer " + layer + " lacks field \"" + key + "\"");
  }
  return it->second;
}

std::pair<std::vector<LayerSpec>, std::vector<double>> parse_spec_text(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kSpecHeader) {
    throw Error(ErrorCode::Parse, "weight spec block has unexpected header \"" + line + "\"");
  }
  std::vector<double> mean;
  std::vector<LayerSpec> layers;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string kind, name;
    ls >> kind;
    if (kind == "mean") {
      std::string tok;
      while (ls >> tok) mean.push_back(parse_double(tok));
      continue;
    }
    ls >> name;
    std::map<std::string, std::size_t> fields;
    std::string tok;
    while (ls >> tok) {
      const auto eq = tok.find('=');
      const auto v = eq == std::string::npos ? std::nullopt
                                             : parse_size(std::string_view(tok).substr(eq + 1));
      if (!v) throw Error(ErrorCode::Parse, "bad layer field \"" + tok + "\"");
      fields[tok.substr(0, eq)] = *v;
    }
    if (kind == "conv") {
      layers.push_back(LayerSpec::conv(name, need_field(fields, "kernel", name),
                                       need_field(fields, "in", name),
                                       need_field(fields, "out", name),
                                       need_field(fields, "pad", name),
                                       need_field(fields, "stride", name)));
    } else if (kind == "relu") {
      layers.push_back(LayerSpec::relu(name));
    } else if (kind == "maxpool") {
      layers.push_back(LayerSpec::maxpool(name, need_field(fields, "window", name),
                                          need_field(fields, "stride", name)));
    } else {
      throw Error(ErrorCode::Parse, "unknown layer kind \"" + kind + "\"");
    }
  }
  return {std::move(layers), std::move(mean)};
}

}  // namespace

void save_weights(const Network& net, const std::filesystem::path& path) {
  std::vector<double> payload;
  for (const auto& p : net.parameters()) {
    payload.insert(payload.end(), p.weights.data().begin(), p.weights.data().end());
    payload.insert(payload.end(), p.bias.begin(), p.bias.end());
  }
  write_container(path, kWeightMagic, spec_text(net), payload);
}

Network load_weights(const std::filesystem::path& path) {
  Container c = read_container(path, kWeightMagic);
  auto [layers, mean] = parse_spec_text(c.spec);
  if (layers.empty()) throw Error(ErrorCode::InvalidArgument, path.string() + ": no layers");
  std::size_t need = 0;
  for (const auto& l : layers) {
    if (l.kind == LayerKind::Conv) {
      need += l.kernel * l.kernel * l.in_channels * l.out_channels + l.out_channels;
    }
  }
  if (need != c.payload.size()) {
    throw Error(ErrorCode::SpecMismatch, path.string() + ": declared layers need " +
                                             std::to_string(need) + " values, file holds " +
                                             std::to_string(c.payload.size()));
  }
  std::vector<ConvParams> params;
  std::size_t pos = 0;
  for (const auto& l : layers) {
    if (l.kind != LayerKind::Conv) continue;
    const std::size_t nw = l.kernel * l.kernel * l.in_channels * l.out_channels;
    std::vector<double> w(c.payload.begin() + static_cast<std::ptrdiff_t>(pos),
                          c.payload.begin() + static_cast<std::ptrdiff_t>(pos + nw));
    pos += nw;
    std::vector<double> b(c.payload.begin() + static_cast<std::ptrdiff_t>(pos),
                          c.payload.begin() + static_cast<std::ptrdiff_t>(pos + l.out_channels));
    pos += l.out_channels;
    params.push_back(
        {Tensor({l.kernel, l.kernel, l.in_channels, l.out_channels}, std::move(w)), std::move(b)});
  }
  return Network(std::move(layers), std::move(params), std::move(mean));
}

}  // namespace gramtex
