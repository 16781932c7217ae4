#include "gramtex/classify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "gramtex/bilinear.hpp"
#include "gramtex/binio.hpp"
#include "gramtex/error.hpp"
#include "gramtex/losses.hpp"
#include "gramtex/optimize.hpp"
#include "gramtex/rng.hpp"

namespace gramtex {
namespace {

constexpr std::string_view kClassifierMagic = "GMC1";
constexpr std::string_view kClassifierHeader = "gramtex-classifiers 1";
constexpr std::string_view kHeadHeader = "gramtex-head 1";

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void check_dim(const LinearClassifier& m, std::size_t d) {
  if (d != m.dim) {
    throw Error(ErrorCode::DimensionMismatch, "classifier for " + m.layer + " expects dim " +
                                                  std::to_string(m.dim) + ", got " +
                                                  std::to_string(d));
  }
}

void check_label_name(const std::string& name) {
  if (name.empty() || name.find_first_of(" \t\r\n") != std::string::npos) {
    throw Error(ErrorCode::InvalidArgument, "class names must be non-empty without whitespace: \"" +
                                                name + "\"");
  }
}

}  // namespace

// --- LinearClassifier -------------------------------------------------------------

std::vector<double> LinearClassifier::raw_scores(std::span<const double> x) const {
  check_dim(*this, x.size());
  std::vector<double> s(classes());
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double* w = weights.data() + k * dim;
    double acc = bias[k];
    for (std::size_t i = 0; i < dim; ++i) acc += w[i] * x[i];
    s[k] = acc;
  }
  return s;
}

std::vector<double> LinearClassifier::scores(std::span<const double> x) const {
  std::vector<double> s = raw_scores(x);
  for (std::size_t k = 0; k < s.size(); ++k) s[k] = scale[k] * s[k] + offset[k];
  return s;
}

std::vector<double> LinearClassifier::score_backward(std::span<const double> upstream) const {
  if (upstream.size() != classes()) {
    throw Error(ErrorCode::DimensionMismatch, "score_backward expects one value per class");
  }
  std::vector<double> dx(dim, 0.0);
  for (std::size_t k = 0; k < classes(); ++k) {
    const double s = upstream[k] * scale[k];
    if (s == 0.0) continue;
    const double* w = weights.data() + k * dim;
    for (std::size_t i = 0; i < dim; ++i) dx[i] += s * w[i];
  }
  return dx;
}

std::size_t LinearClassifier::label_index(std::string_view name) const {
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] == name) return k;
  }
  return classes();
}

// --- training ------------------------------------------------------------------------

LinearClassifier train_one_vs_all(const std::vector<std::vector<double>>& features,
                                  const std::vector<std::size_t>& labels,
                                  const SvmOptions& options,
                                  std::vector<std::string> label_names) {
  if (features.empty() || features.size() != labels.size()) {
    throw Error(ErrorCode::InvalidArgument, "need one label per feature vector");
  }
  const std::size_t n = features.size();
  const std::size_t dim = features[0].size();
  for (const auto& f : features) {
    if (f.size() != dim) throw Error(ErrorCode::DimensionMismatch, "ragged feature vectors");
  }
  const std::size_t classes = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::size_t> counts(classes, 0);
  for (auto l : labels) ++counts[l];
  if (std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) < 2) {
    throw Error(ErrorCode::InvalidArgument, "one-vs-all training needs at least two classes");
  }
  if (!(options.c_reg > 0.0)) throw Error(ErrorCode::InvalidArgument, "C must be > 0");
  if (label_names.empty()) {
    for (std::size_t k = 0; k < classes; ++k) label_names.push_back("class" + std::to_string(k));
  }
  if (label_names.size() != classes) {
    throw Error(ErrorCode::InvalidArgument, "label name count does not match classes");
  }

  LinearClassifier model;
  model.labels = std::move(label_names);
  model.dim = dim;
  model.weights.assign(classes * dim, 0.0);
  model.bias.assign(classes, 0.0);
  model.scale.assign(classes, 1.0);
  model.offset.assign(classes, 0.0);

  // Pegasos on F(w) = lambda/2 |w|^2 + (1/n) sum hinge, lambda = 1 / (C n),
  // which is the C-SVM primal divided by C n. The bias rides along as a
  // constant-1 feature; w = a * v keeps the shrink step O(1).
  const double lambda = 1.0 / (options.c_reg * static_cast<double>(n));
  const CounterRng root(options.seed);
  for (std::size_t k = 0; k < classes; ++k) {
    std::vector<double> v(dim + 1, 0.0);
    double a = 1.0;
    std::vector<double> best(dim + 1, 0.0);
    double best_obj = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> order(n);
    std::size_t t = 0;
    auto margin = [&](std::size_t i) {
      double s = v[dim];
      for (std::size_t d = 0; d < dim; ++d) s += v[d] * features[i][d];
      return a * s;
    };
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      CounterRng rng = root.split(k).split(epoch);
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
      for (std::size_t i : order) {
        ++t;
        const double eta = 1.0 / (lambda * static_cast<double>(t));
        const double y = labels[i] == k ? 1.0 : -1.0;
        const bool violated = y * margin(i) < 1.0;
        const double shrink = 1.0 - eta * lambda;
        if (shrink <= 0.0) {
          std::fill(v.begin(), v.end(), 0.0);
          a = 1.0;
        } else {
          a *= shrink;
        }
        if (violated) {
          const double c = eta * y / a;
          for (std::size_t d = 0; d < dim; ++d) v[d] += c * features[i][d];
          v[dim] += c;
        }
        if (a < 1e-100) {
          for (double& x : v) x *= a;
          a = 1.0;
        }
      }
      double obj = 0.0, sq = 0.0;
      for (double x : v) sq += x * x;
      obj = 0.5 * sq * a * a;
      for (std::size_t i = 0; i < n; ++i) {
        const double y = labels[i] == k ? 1.0 : -1.0;
        obj += options.c_reg * std::max(0.0, 1.0 - y * margin(i));
      }
      if (obj < best_obj) {
        best_obj = obj;
        for (std::size_t d = 0; d <= dim; ++d) best[d] = a * v[d];
      }
    }
    std::copy(best.begin(), best.begin() + static_cast<std::ptrdiff_t>(dim),
              model.weights.begin() + static_cast<std::ptrdiff_t>(k * dim));
    model.bias[k] = best[dim];
  }
  calibrate(model, features, labels);
  return model;
}

void calibrate(LinearClassifier& model, const std::vector<std::vector<double>>& features,
               const std::vector<std::size_t>& labels) {
  const std::size_t classes = model.classes();
  std::vector<std::vector<double>> raw;
  raw.reserve(features.size());
  for (const auto& f : features) raw.push_back(model.raw_scores(f));
  for (std::size_t k = 0; k < classes; ++k) {
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < raw.size(); ++i) (labels[i] == k ? pos : neg).push_back(raw[i][k]);
    model.scale[k] = 1.0;
    model.offset[k] = 0.0;
    if (pos.empty() || neg.empty()) continue;
    const double mp = median(pos), mn = median(neg);
    const double gap = mp - mn;
    if (std::abs(gap) > 1e-12 * std::max({1.0, std::abs(mp), std::abs(mn)})) {
      model.scale[k] = 2.0 / gap;
      model.offset[k] = 1.0 - model.scale[k] * mp;
    } else {
      // Indistinguishable medians: centre only.
      model.offset[k] = -0.5 * (mp + mn);
    }
  }
}

Prediction predict(const LinearClassifier& model, std::span<const double> feature) {
  Prediction p;
  p.scores = model.scores(feature);
  p.label = 0;
  for (std::size_t k = 1; k < p.scores.size(); ++k) {
    if (p.scores[k] > p.scores[p.label]) p.label = k;
  }
  return p;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double m = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (double& v : p) {
    v = std::exp(v - m);
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

std::vector<double> softmax_head(const LinearClassifier& model, std::span<const double> feature,
                                 double temperature) {
  std::vector<double> s = model.scores(feature);
  for (double& v : s) v /= temperature;
  return softmax(s);
}

// --- classifier files -----------------------------------------------------------------

void save_classifiers(const ClassifierSet& set, const std::filesystem::path& path) {
  std::ostringstream spec;
  spec << kClassifierHeader << '\n';
  std::vector<double> payload;
  for (const auto& [layer, m] : set) {
    if (layer.empty() || layer.find_first_of(" \t\r\n") != std::string::npos) {
      throw Error(ErrorCode::InvalidArgument, "bad classifier layer name \"" + layer + "\"");
    }
    spec << "classifier " << layer << " classes=" << m.classes() << " dim=" << m.dim << '\n';
    for (const auto& l : m.labels) {
      check_label_name(l);
      spec << "label " << l << '\n';
    }
    payload.insert(payload.end(), m.weights.begin(), m.weights.end());
    payload.insert(payload.end(), m.bias.begin(), m.bias.end());
    payload.insert(payload.end(), m.scale.begin(), m.scale.end());
    payload.insert(payload.end(), m.offset.begin(), m.offset.end());
  }
  write_container(path, kClassifierMagic, spec.str(), payload);
}

ClassifierSet load_classifiers(const std::filesystem::path& path) {
  const Container c = read_container(path, kClassifierMagic);
  std::istringstream is(c.spec);
  std::string line;
  if (!std::getline(is, line) || line != kClassifierHeader) {
    throw Error(ErrorCode::Parse, path.string() + " is not a classifier bundle");
  }
  struct Pending {
    LinearClassifier model;
    std::size_t classes = 0;
  };
  std::vector<Pending> pending;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "classifier") {
      Pending p;
      std::string classes_tok, dim_tok;
      ls >> p.model.layer >> classes_tok >> dim_tok;
      if (classes_tok.rfind("classes=", 0) != 0 || dim_tok.rfind("dim=", 0) != 0) {
        throw Error(ErrorCode::Parse, "bad classifier line \"" + line + "\"");
      }
      p.classes = static_cast<std::size_t>(parse_double(classes_tok.substr(8)));
      p.model.dim = static_cast<std::size_t>(parse_double(dim_tok.substr(4)));
      pending.push_back(std::move(p));
    } else if (kind == "label" && !pending.empty()) {
      std::string name;
      ls >> name;
      pending.back().model.labels.push_back(name);
    } else {
      throw Error(ErrorCode::Parse, "unexpected line \"" + line + "\"");
    }
  }
  std::size_t need = 0;
  for (const auto& p : pending) need += p.classes * (p.model.dim + 3);
  if (need != c.payload.size()) {
    throw Error(ErrorCode::SpecMismatch, path.string() + ": declared classifiers need " +
                                             std::to_string(need) + " values, file holds " +
                                             std::to_string(c.payload.size()));
  }
  ClassifierSet set;
  auto it = c.payload.begin();
  auto take = [&](std::size_t count) {
    std::vector<double> v(it, it + static_cast<std::ptrdiff_t>(count));
    it += static_cast<std::ptrdiff_t>(count);
    return v;
  };
  for (auto& p : pending) {
    if (p.model.labels.size() != p.classes) {
      throw Error(ErrorCode::SpecMismatch, p.model.layer + ": label count mismatch");
    }
    p.model.weights = take(p.classes * p.model.dim);
    p.model.bias = take(p.classes);
    p.model.scale = take(p.classes);
    p.model.offset = take(p.classes);
    set.emplace(p.model.layer, std::move(p.model));
  }
  return set;
}

// --- descriptors ----------------------------------------------------------------------

std::vector<double> gram_descriptor(const Network& net, const Tensor& image,
                                    const std::string& layer) {
  const ActivationSet acts = forward_collect(net, image, {layer});
  return normalize(bilinear_pool(acts.at(layer), layer));
}

ClassifierSet train_layer_classifiers(const Network& net, const LabeledImages& data,
                                      const std::vector<std::string>& layers,
                                      const SvmOptions& options) {
  const std::set<std::string> wanted(layers.begin(), layers.end());
  std::map<std::string, std::vector<std::vector<double>>> feats;
  for (const auto& img : data.images) {
    const ActivationSet acts = forward_collect(net, img, wanted);
    for (const auto& l : wanted) feats[l].push_back(normalize(bilinear_pool(acts.at(l), l)));
  }
  ClassifierSet set;
  for (const auto& l : wanted) {
    LinearClassifier m = train_one_vs_all(feats[l], data.labels, options, data.class_names);
    m.layer = l;
    set.emplace(l, std::move(m));
  }
  return set;
}

// --- jitter ------------------------------------------------------------------------------

std::string_view to_string(HeadKind head) {
  return head == HeadKind::Bilinear ? "bilinear" : "fc";
}

std::string_view to_string(JitterLevel level) {
  switch (level) {
    case JitterLevel::F1: return "f1";
    case JitterLevel::F5: return "f5";
    case JitterLevel::F25: return "f25";
  }
  return "?";
}

HeadKind parse_head(std::string_view text) {
  if (text == "bilinear") return HeadKind::Bilinear;
  if (text == "fc") return HeadKind::FullyConnected;
  throw Error(ErrorCode::Parse, "head must be bilinear|fc, got \"" + std::string(text) + "\"");
}

JitterLevel parse_jitter(std::string_view text) {
  if (text == "f1") return JitterLevel::F1;
  if (text == "f5") return JitterLevel::F5;
  if (text == "f25") return JitterLevel::F25;
  throw Error(ErrorCode::Parse, "jitter must be f1|f5|f25, got \"" + std::string(text) + "\"");
}

std::vector<CropOffset> JitterConfig::offsets() const {
  switch (level) {
    case JitterLevel::F1:
      return {center()};
    case JitterLevel::F5:
      return {center(), {0, 0}, {0, margin}, {margin, 0}, {margin, margin}};
    case JitterLevel::F25: {
      std::vector<CropOffset> grid;
      for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 5; ++j) grid.push_back({i * margin / 4, j * margin / 4});
      }
      return grid;
    }
  }
  return {center()};
}

Tensor crop_image(const Tensor& image, CropOffset offset, std::size_t crop, bool flip) {
  if (image.rank() != 3 || offset.dy + crop > image.height() ||
      offset.dx + crop > image.width()) {
    throw Error(ErrorCode::DimensionMismatch, "crop of " + std::to_string(crop) + " at (" +
                                                  std::to_string(offset.dy) + ", " +
                                                  std::to_string(offset.dx) + ") leaves " +
                                                  dims_string(image.dims()));
  }
  const std::size_t c = image.channels();
  Tensor out({crop, crop, c});
  for (std::size_t y = 0; y < crop; ++y) {
    for (std::size_t x = 0; x < crop; ++x) {
      const std::size_t sx = offset.dx + (flip ? crop - 1 - x : x);
      for (std::size_t ch = 0; ch < c; ++ch) out.at(y, x, ch) = image.at(offset.dy + y, sx, ch);
    }
  }
  return out;
}

// --- heads ------------------------------------------------------------------------------------

namespace {

struct HeadForward {
  GramFeature gram;               // bilinear
  std::vector<double> input;      // normalized gram or flattened activation
  std::vector<double> hidden;     // fc, post-relu
  std::vector<double> probs;
};

HeadForward head_forward(const HeadModel& head, const Tensor& features) {
  HeadForward hf;
  const std::size_t classes = head.labels.size();
  std::vector<double> logits;
  if (head.kind == HeadKind::Bilinear) {
    hf.gram = bilinear_pool(features, head.layer);
    hf.input = normalize(hf.gram);
    if (hf.input.size() != head.input_dim) {
      throw Error(ErrorCode::DimensionMismatch, "bilinear head input size mismatch");
    }
    logits.assign(head.b1.begin(), head.b1.end());
    for (std::size_t k = 0; k < classes; ++k) {
      const double* w = head.w1.data() + k * head.input_dim;
      for (std::size_t i = 0; i < head.input_dim; ++i) logits[k] += w[i] * hf.input[i];
    }
  } else {
    hf.input.assign(features.data().begin(), features.data().end());
    if (hf.input.size() != head.input_dim) {
      throw Error(ErrorCode::DimensionMismatch,
                  "fc head expects " + std::to_string(head.input_dim) + " inputs, got " +
                      std::to_string(hf.input.size()));
    }
    hf.hidden.assign(head.b1.begin(), head.b1.end());
    for (std::size_t j = 0; j < head.hidden; ++j) {
      const double* w = head.w1.data() + j * head.input_dim;
      double s = hf.hidden[j];
      for (std::size_t i = 0; i < head.input_dim; ++i) s += w[i] * hf.input[i];
      hf.hidden[j] = s > 0.0 ? s : 0.0;
    }
    logits.assign(head.b2.begin(), head.b2.end());
    for (std::size_t k = 0; k < classes; ++k) {
      const double* w = head.w2.data() + k * head.hidden;
      for (std::size_t j = 0; j < head.hidden; ++j) logits[k] += w[j] * hf.hidden[j];
    }
  }
  hf.probs = softmax(logits);
  return hf;
}

// Accumulates head parameter gradients; returns dLoss/dFeatures.
Tensor head_backward(const HeadModel& head, const Tensor& features, const HeadForward& hf,
                     std::span<const double> dlogits, HeadModel& grad) {
  const std::size_t classes = head.labels.size();
  if (head.kind == HeadKind::Bilinear) {
    std::vector<double> dy(head.input_dim, 0.0);
    for (std::size_t k = 0; k < classes; ++k) {
      grad.b1[k] += dlogits[k];
      const double* w = head.w1.data() + k * head.input_dim;
      double* gw = grad.w1.data() + k * head.input_dim;
      for (std::size_t i = 0; i < head.input_dim; ++i) {
        gw[i] += dlogits[k] * hf.input[i];
        dy[i] += dlogits[k] * w[i];
      }
    }
    return bilinear_backward(features, normalize_backward(hf.gram, dy));
  }
  std::vector<double> dh(head.hidden, 0.0);
  for (std::size_t k = 0; k < classes; ++k) {
    grad.b2[k] += dlogits[k];
    const double* w = head.w2.data() + k * head.hidden;
    double* gw = grad.w2.data() + k * head.hidden;
    for (std::size_t j = 0; j < head.hidden; ++j) {
      gw[j] += dlogits[k] * hf.hidden[j];
      dh[j] += dlogits[k] * w[j];
    }
  }
  Tensor dfeat = Tensor::zeros_like(features);
  for (std::size_t j = 0; j < head.hidden; ++j) {
    if (hf.hidden[j] <= 0.0) continue;
    grad.b1[j] += dh[j];
    const double* w = head.w1.data() + j * head.input_dim;
    double* gw = grad.w1.data() + j * head.input_dim;
    for (std::size_t i = 0; i < head.input_dim; ++i) {
      gw[i] += dh[j] * hf.input[i];
      dfeat[i] += dh[j] * w[i];
    }
  }
  return dfeat;
}

HeadModel zero_like(const HeadModel& h) {
  HeadModel z = h;
  for (auto* v : {&z.w1, &z.b1, &z.w2, &z.b2}) std::fill(v->begin(), v->end(), 0.0);
  return z;
}

// Flat views over every trainable parameter, network first then head.
std::vector<std::span<double>> parameter_spans(Network& net, HeadModel& head) {
  std::vector<std::span<double>> spans;
  for (auto& p : net.parameters()) {
    spans.emplace_back(p.weights.data());
    spans.emplace_back(p.bias);
  }
  for (auto* v : {&head.w1, &head.b1, &head.w2, &head.b2}) {
    if (!v->empty()) spans.emplace_back(*v);
  }
  return spans;
}

std::vector<std::span<double>> gradient_spans(NetworkGrads& g, HeadModel& head) {
  std::vector<std::span<double>> spans;
  for (auto& p : g.params) {
    spans.emplace_back(p.weights.data());
    spans.emplace_back(p.bias);
  }
  for (auto* v : {&head.w1, &head.b1, &head.w2, &head.b2}) {
    if (!v->empty()) spans.emplace_back(*v);
  }
  return spans;
}

}  // namespace

std::vector<double> head_probabilities(const Network& net, const HeadModel& head,
                                       const Tensor& image) {
  const ActivationSet acts = forward_collect(net, image, {head.layer});
  return head_forward(head, acts.at(head.layer)).probs;
}

double head_error(const Network& net, const HeadModel& head, const LabeledImages& data,
                  const JitterConfig& jitter) {
  if (data.size() == 0) throw Error(ErrorCode::InvalidArgument, "empty evaluation set");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Tensor crop = crop_image(data.images[i], jitter.center(), jitter.crop, false);
    const std::vector<double> p = head_probabilities(net, head, crop);
    const auto best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    if (best != data.labels[i]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(data.size());
}

HeadTrainResult train_head_scratch(const LabeledImages& train, const LabeledImages& validation,
                                   const HeadTrainOptions& options) {
  if (train.size() == 0 || validation.size() == 0) {
    throw Error(ErrorCode::InvalidArgument, "train_head_scratch needs non-empty datasets");
  }
  const CounterRng root(options.seed);
  HeadTrainResult result{init_random(tex_net_small_spec(), default_mean(),
                                     root.split("network").next_u64()),
                         {}, 1.0, {}, 0};
  Network& net = result.network;
  HeadModel& head = result.head;
  const std::string layer = net.resolve(options.feature_layer);
  const std::size_t layer_idx = net.index_of(layer);
  const auto extent = net.output_extent(layer_idx, options.jitter.crop, options.jitter.crop);
  if (!extent) throw Error(ErrorCode::ImageTooSmall, "crop too small for " + layer);
  const std::size_t channels = net.output_channels(layer_idx);
  const std::size_t classes = train.class_names.size();

  head.kind = options.head;
  head.layer = layer;
  head.labels = train.class_names;
  CounterRng init = root.split("head");
  if (head.kind == HeadKind::Bilinear) {
    head.input_dim = channels * channels;
    head.w1.resize(classes * head.input_dim);
    for (double& w : head.w1) w = 0.01 * init.normal();
    head.b1.assign(classes, 0.0);
  } else {
    head.input_dim = extent->first * extent->second * channels;
    head.hidden = options.fc_hidden;
    head.w1.resize(head.hidden * head.input_dim);
    const double s1 = std::sqrt(2.0 / static_cast<double>(head.input_dim));
    for (double& w : head.w1) w = s1 * init.normal();
    head.b1.assign(head.hidden, 0.0);
    head.w2.resize(classes * head.hidden);
    const double s2 = std::sqrt(1.0 / static_cast<double>(head.hidden));
    for (double& w : head.w2) w = s2 * init.normal();
    head.b2.assign(classes, 0.0);
  }

  std::vector<std::span<double>> params = parameter_spans(net, head);
  const std::size_t network_spans = 2 * net.parameters().size();
  std::vector<std::vector<double>> velocity;
  for (auto s : params) velocity.emplace_back(s.size(), 0.0);

  const std::vector<CropOffset> offsets = options.jitter.offsets();
  LrSchedule schedule;
  schedule.learning_rate = options.learning_rate;
  schedule.patience = options.lr_patience;
  const std::size_t batch = std::max<std::size_t>(1, options.batch);

  for (std::size_t epoch = 0; epoch < options.max_epochs && !schedule.stop; ++epoch) {
    CounterRng rng = root.split("epoch").split(epoch);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      NetworkGrads acc;
      HeadModel head_grad = zero_like(head);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        const CropOffset off = offsets[rng.below(offsets.size())];
        const bool flip = rng.below(2) == 1;
        const Tensor crop = crop_image(train.images[i], off, options.jitter.crop, flip);
        const ActivationSet acts = forward_collect(net, crop, {layer});
        const Tensor& feat = acts.at(layer);
        const HeadForward hf = head_forward(head, feat);
        std::vector<double> dlogits = hf.probs;
        dlogits[train.labels[i]] -= 1.0;
        const Tensor dfeat = head_backward(head, feat, hf, dlogits, head_grad);
        NetworkGrads g = backward_full(net, acts, {{layer, dfeat}});
        if (acc.params.empty()) {
          acc = std::move(g);
        } else {
          for (std::size_t p = 0; p < acc.params.size(); ++p) {
            acc.params[p].weights += g.params[p].weights;
            for (std::size_t k = 0; k < g.params[p].bias.size(); ++k) {
              acc.params[p].bias[k] += g.params[p].bias[k];
            }
          }
        }
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      std::vector<std::span<double>> grads = gradient_spans(acc, head_grad);
      const SgdOptions sgd{schedule.learning_rate, options.momentum, options.weight_decay};
      SgdOptions head_sgd = sgd;
      if (head.kind == HeadKind::Bilinear) head_sgd.learning_rate *= options.bilinear_lr_scale;
      for (std::size_t p = 0; p < params.size(); ++p) {
        for (double& g : grads[p]) g *= inv;
        sgd_momentum_step(params[p], grads[p], velocity[p], p < network_spans ? sgd : head_sgd);
      }
    }
    result.validation_history.push_back(head_error(net, head, validation, options.jitter));
    result.epochs_run = epoch + 1;
    lr_schedule_step(schedule, result.validation_history);
  }
  result.validation_error = result.validation_history.back();
  return result;
}

void save_head(const HeadModel& head, const std::filesystem::path& path) {
  std::ostringstream spec;
  spec << kHeadHeader << '\n'
       << "head " << to_string(head.kind) << " layer=" << head.layer
       << " input=" << head.input_dim << " hidden=" << head.hidden << '\n';
  for (const auto& l : head.labels) {
    check_label_name(l);
    spec << "label " << l << '\n';
  }
  std::vector<double> payload;
  for (const auto* v : {&head.w1, &head.b1, &head.w2, &head.b2}) {
    payload.insert(payload.end(), v->begin(), v->end());
  }
  write_container(path, kClassifierMagic, spec.str(), payload);
}

HeadModel load_head(const std::filesystem::path& path) {
  const Container c = read_container(path, kClassifierMagic);
  std::istringstream is(c.spec);
  std::string line;
  if (!std::getline(is, line) || line != kHeadHeader) {
    throw Error(ErrorCode::Parse, path.string() + " is not a head model");
  }
  HeadModel head;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "head") {
      std::string name, layer_tok, input_tok, hidden_tok;
      ls >> name >> layer_tok >> input_tok >> hidden_tok;
      head.kind = parse_head(name);
      if (layer_tok.rfind("layer=", 0) != 0 || input_tok.rfind("input=", 0) != 0 ||
          hidden_tok.rfind("hidden=", 0) != 0) {
        throw Error(ErrorCode::Parse, "bad head line \"" + line + "\"");
      }
      head.layer = layer_tok.substr(6);
      head.input_dim = static_cast<std::size_t>(parse_double(input_tok.substr(6)));
      head.hidden = static_cast<std::size_t>(parse_double(hidden_tok.substr(7)));
    } else if (kind == "label") {
      std::string name;
      ls >> name;
      head.labels.push_back(name);
    } else {
      throw Error(ErrorCode::Parse, "unexpected line \"" + line + "\"");
    }
  }
  const std::size_t k = head.labels.size();
  const bool fc = head.kind == HeadKind::FullyConnected;
  const std::size_t n1 = (fc ? head.hidden : k) * head.input_dim;
  const std::size_t nb1 = fc ? head.hidden : k;
  const std::size_t n2 = fc ? k * head.hidden : 0;
  const std::size_t nb2 = fc ? k : 0;
  if (n1 + nb1 + n2 + nb2 != c.payload.size()) {
    throw Error(ErrorCode::SpecMismatch, path.string() + ": head payload size mismatch");
  }
  auto it = c.payload.begin();
  auto take = [&](std::size_t count) {
    std::vector<double> v(it, it + static_cast<std::ptrdiff_t>(count));
    it += static_cast<std::ptrdiff_t>(count);
    return v;
  };
  head.w1 = take(n1);
  head.b1 = take(nb1);
  head.w2 = take(n2);
  head.b2 = take(nb2);
  return head;
}

// --- sweep -------------------------------------------------------------------------------------

const SweepSummary& SweepResult::cell(HeadKind head, JitterLevel jitter) const {
  for (const auto& s : summary) {
    if (s.head == head && s.jitter == jitter) return s;
  }
  throw Error(ErrorCode::InvalidArgument, "sweep has no such cell");
}

void SweepResult::write_csv(std::ostream& os) const {
  os << "head,jitter,seed,val_error\n";
  for (const auto& r : rows) {
    os << to_string(r.head) << ',' << to_string(r.jitter) << ',' << r.seed << ','
       << format_double(r.val_error) << '\n';
  }
}

SweepResult jitter_sweep(const SweepOptions& options) {
  if (options.seeds.empty()) throw Error(ErrorCode::InvalidArgument, "sweep needs seeds");
  const HeadKind heads[] = {HeadKind::Bilinear, HeadKind::FullyConnected};
  const JitterLevel levels[] = {JitterLevel::F1, JitterLevel::F5, JitterLevel::F25};
  SweepResult result;
  for (std::uint64_t seed : options.seeds) {
    SyntheticSpec train_spec = options.data;
    train_spec.seed = CounterRng(seed).split("train-data").next_u64();
    SyntheticSpec val_spec = options.data;
    val_spec.seed = CounterRng(seed).split("validation-data").next_u64();
    val_spec.per_class = options.validation_per_class;
    const LabeledImages train = make_synthetic_dataset(train_spec);
    const LabeledImages val = make_synthetic_dataset(val_spec);
    for (HeadKind h : heads) {
      for (JitterLevel j : levels) {
        HeadTrainOptions o = options.base;
        o.head = h;
        o.jitter.level = j;
        o.seed = seed;
        result.rows.push_back({h, j, seed, train_head_scratch(train, val, o).validation_error});
      }
    }
  }
  for (HeadKind h : heads) {
    for (JitterLevel j : levels) {
      std::vector<double> v;
      for (const auto& r : result.rows) {
        if (r.head == h && r.jitter == j) v.push_back(r.val_error);
      }
      const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      double var = 0.0;
      for (double e : v) var += (e - mean) * (e - mean);
      const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
      result.summary.push_back({h, j, mean, sd, v.size()});
    }
  }
  return result;
}

}  // namespace gramtex
