#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <set>

#include "gramtex/bilinear.hpp"
#include "gramtex/binio.hpp"
#include "gramtex/classify.hpp"
#include "gramtex/error.hpp"
#include "gramtex/losses.hpp"
#include "gramtex/network.hpp"
#include "gramtex/rng.hpp"
#include "gramtex/tensor.hpp"

namespace gramtex::cli {
namespace {

Tensor gaussian(std::vector<std::size_t> dims, CounterRng& rng, double scale = 1.0) {
  Tensor t(std::move(dims));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

/// Entries with magnitude in [0.1, 1.1] and random sign, keeping ReLU
/// inputs away from the kink.
Tensor away_from_zero(std::vector<std::size_t> dims, CounterRng& rng) {
  Tensor t(std::move(dims));
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = (0.1 + rng.uniform()) * (rng.below(2) ? 1.0 : -1.0);
  }
  return t;
}

/// Distinct values spaced 0.05 apart in random order, so max-pool winners
/// are stable under small perturbations.
Tensor distinct(std::vector<std::size_t> dims, CounterRng& rng) {
  Tensor t(std::move(dims));
  std::vector<std::size_t> order(t.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.05 * static_cast<double>(order[i]) - 1.0;
  return t;
}

double inner(const Tensor& a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// A small conv/relu/pool stack for network-level checks on 8 x 8 inputs.
Network tiny_network(std::uint64_t seed) {
  return init_random({LayerSpec::conv("conv1_1", 3, 3, 4), LayerSpec::relu("relu1_1"),
                      LayerSpec::maxpool("pool1"), LayerSpec::conv("conv2_1", 3, 4, 4),
                      LayerSpec::relu("relu2_1")},
                     {0.5, 0.4, 0.3}, seed);
}

/// ReLU on/off states and max-pool winners of every layer up to `deepest`.
std::vector<std::size_t> activation_pattern(const Network& net, const Tensor& image,
                                            const std::string& deepest) {
  const ActivationSet acts = forward_collect(net, image, {deepest});
  const ForwardCache& cache = acts.cache();
  std::vector<std::size_t> pattern;
  for (std::size_t i = 0; i + 1 < cache.outputs.size(); ++i) {
    if (net.layers()[i].kind != LayerKind::Conv) continue;
    for (double v : cache.outputs[i + 1].data()) pattern.push_back(v > 0.0);
  }
  for (const auto& a : cache.argmax) pattern.insert(pattern.end(), a.begin(), a.end());
  return pattern;
}

using PatternFn = std::function<std::vector<std::size_t>(const Tensor&)>;

/// Central differences are only meaningful when both probe points share the
/// base point's piecewise-linear region; coordinates whose probes cross a
/// ReLU or max-pool boundary are skipped.
std::function<bool(std::size_t)> same_region(PatternFn pattern, const Tensor& point,
                                             double epsilon) {
  const double h = epsilon * std::max(rms(point), FiniteDiffOptions{}.rms_floor);
  auto base = std::make_shared<std::vector<std::size_t>>(pattern(point));
  return [pattern = std::move(pattern), point, h, base](std::size_t i) {
    Tensor x = point;
    for (double s : {h, -h}) {
      x[i] = point[i] + s;
      if (pattern(x) != *base) return false;
    }
    return true;
  };
}

PatternFn image_pattern(const Network& net, const std::string& deepest) {
  return [&net, deepest](const Tensor& x) { return activation_pattern(net, x, deepest); };
}

class Suite {
 public:
  Suite(std::string module, double corrupt) : module_(std::move(module)), corrupt_(corrupt) {}

  void check(const std::string& name, const DifferentiableFn& f, const Tensor& point,
             double epsilon = 1e-4, std::function<bool(std::size_t)> include = {},
             double abs_floor = 1e-8) {
    const DifferentiableFn g = [&](const Tensor& x, Tensor& grad) {
      const double v = f(x, grad);
      if (corrupt_ != 0.0) grad *= 1.0 + corrupt_;
      return v;
    };
    FiniteDiffOptions options;
    options.epsilon = epsilon;
    options.include = std::move(include);
    options.abs_floor = abs_floor;
    const FiniteDiffReport r = finite_diff_report(g, point, options);
    results_.push_back({module_, name, r.max_rel_error, r.checked, r.worst_index, r.analytic,
                        r.numeric, r.max_rel_error < kGradTolerance});
  }

  std::vector<GradCheckResult> take() { return std::move(results_); }

 private:
  std::string module_;
  double corrupt_;
  std::vector<GradCheckResult> results_;
};

void tensor_suite(Suite& s, CounterRng rng) {
  for (const auto& [pad, stride] : {std::pair<std::size_t, std::size_t>{1, 1}, {0, 2}}) {
    const std::string tag = " pad=" + std::to_string(pad) + " stride=" + std::to_string(stride);
    const Tensor x = gaussian({8, 8, 3}, rng);
    const Tensor w = gaussian({3, 3, 3, 4}, rng, 0.3);
    const std::vector<double> b{0.1, -0.2, 0.3, 0.05};
    const Tensor probe = gaussian(conv2d(x, w, b, pad, stride).dims(), rng);
    s.check("conv2d input" + tag, [&](const Tensor& v, Tensor& grad) {
      grad = conv2d_backward(v, w, probe, pad, stride, false).input;
      return dot(conv2d(v, w, b, pad, stride), probe);
    }, x);
    s.check("conv2d weights" + tag, [&](const Tensor& v, Tensor& grad) {
      grad = conv2d_backward(x, v, probe, pad, stride).weights;
      return dot(conv2d(x, v, b, pad, stride), probe);
    }, w);
    s.check("conv2d bias" + tag, [&](const Tensor& v, Tensor& grad) {
      grad = Tensor({4}, conv2d_backward(x, w, probe, pad, stride).bias);
      return dot(conv2d(x, w, v.values(), pad, stride), probe);
    }, Tensor({4}, b));
  }
  {
    const Tensor x = away_from_zero({6, 6, 4}, rng);
    const Tensor probe = gaussian(x.dims(), rng);
    s.check("relu", [&](const Tensor& v, Tensor& grad) {
      grad = relu_backward(v, probe);
      return dot(relu(v), probe);
    }, x);
  }
  for (const auto& [window, stride] : {std::pair<std::size_t, std::size_t>{2, 2}, {3, 2}}) {
    const Tensor x = distinct({7, 7, 2}, rng);
    const Tensor probe = gaussian(maxpool(x, window, stride).output.dims(), rng);
    s.check("maxpool window=" + std::to_string(window), [&](const Tensor& v, Tensor& grad) {
      const MaxPoolResult m = maxpool(v, window, stride);
      grad = maxpool_backward(m, probe);
      return dot(m.output, probe);
    }, x, 1e-3);
  }
}

void network_suite(Suite& s, CounterRng rng) {
  Network net = tiny_network(rng.next_u64());
  for (auto& p : net.parameters()) {
    for (double& b : p.bias) b = 0.1 * rng.normal();
  }
  const Tensor image = gaussian({8, 8, 3}, rng, 0.5);
  const std::set<std::string> layers{"relu1_1", "pool1", "relu2_1"};
  const ActivationSet base = forward_collect(net, image, layers);
  LayerGrads probes;
  for (const auto& l : layers) probes[l] = gaussian(base.at(l).dims(), rng);
  auto value = [&](const Network& n, const Tensor& x) {
    const ActivationSet acts = forward_collect(n, x, layers);
    double v = 0.0;
    for (const auto& l : layers) v += dot(acts.at(l), probes.at(l));
    return v;
  };
  s.check("backward_to_input", [&](const Tensor& x, Tensor& grad) {
    grad = backward_to_input(net, forward_collect(net, x, layers), probes);
    return value(net, x);
  }, image, 1e-4, same_region(image_pattern(net, "relu2_1"), image, 1e-4));
  for (std::size_t p = 0; p < net.parameters().size(); ++p) {
    s.check("backward_full weights[" + std::to_string(p) + "]", [&](const Tensor& w, Tensor& grad) {
      Network n = net;
      n.parameters()[p].weights = w;
      grad = backward_full(n, forward_collect(n, image, layers), probes).params[p].weights;
      return value(n, image);
    }, net.parameters()[p].weights, 1e-4, same_region([&](const Tensor& w) {
      Network n = net;
      n.parameters()[p].weights = w;
      return activation_pattern(n, image, "relu2_1");
    }, net.parameters()[p].weights, 1e-4));
    s.check("backward_full bias[" + std::to_string(p) + "]", [&](const Tensor& b, Tensor& grad) {
      Network n = net;
      n.parameters()[p].bias = b.values();
      grad = Tensor({b.size()},
                    backward_full(n, forward_collect(n, image, layers), probes).params[p].bias);
      return value(n, image);
    }, Tensor({net.parameters()[p].bias.size()}, net.parameters()[p].bias), 1e-4,
    same_region([&](const Tensor& b) {
      Network n = net;
      n.parameters()[p].bias = b.values();
      return activation_pattern(n, image, "relu2_1");
    }, Tensor({net.parameters()[p].bias.size()}, net.parameters()[p].bias), 1e-4));
  }
}

void bilinear_suite(Suite& s, CounterRng rng) {
  const Tensor f = gaussian({5, 6, 4}, rng);
  const Tensor probe = gaussian({4, 4}, rng);
  s.check("bilinear_pool", [&](const Tensor& x, Tensor& grad) {
    grad = bilinear_backward(x, probe);
    return dot(bilinear_pool(x).matrix, probe);
  }, f);
  // Positive features keep every Gram entry away from the signed-sqrt kink.
  Tensor fpos = f;
  for (std::size_t i = 0; i < fpos.size(); ++i) fpos[i] = 0.2 + std::abs(fpos[i]);
  const GramFeature g = bilinear_pool(fpos);
  const Tensor r = gaussian({16}, rng);
  s.check("normalize", [&](const Tensor& b, Tensor& grad) {
    const GramFeature gb{b, "", false};
    grad = normalize_backward(gb, r.values());
    return inner(r, normalize(gb));
  }, g.matrix);
  s.check("normalize o bilinear_pool", [&](const Tensor& x, Tensor& grad) {
    const GramFeature gx = bilinear_pool(x);
    grad = bilinear_backward(x, normalize_backward(gx, r.values()));
    return inner(r, normalize(gx));
  }, fpos);
}

void losses_suite(Suite& s, CounterRng rng) {
  const Tensor gram = gaussian({4, 4}, rng);
  const Tensor target = gaussian({4, 4}, rng);
  s.check("gram_loss", [&](const Tensor& b, Tensor& grad) {
    ScalarGrad l = gram_loss(b, target);
    grad = std::move(l.grad);
    return l.value;
  }, gram);
  const Tensor feat = gaussian({4, 4, 3}, rng);
  const Tensor feat_target = gaussian({4, 4, 3}, rng);
  s.check("content_loss", [&](const Tensor& x, Tensor& grad) {
    ScalarGrad l = content_loss(x, feat_target);
    grad = std::move(l.grad);
    return l.value;
  }, feat);
  const Tensor logits = gaussian({5}, rng);
  s.check("class_loss", [&](const Tensor& z, Tensor& grad) {
    const ClassLoss l = class_loss(z.values(), 2);
    grad = Tensor({z.size()}, l.grad_logits);
    return l.value;
  }, logits);
  // A checkerboard plus noise keeps every local gradient magnitude near 1,
  // away from the non-smooth point of the beta < 2 prior.
  Tensor image = gaussian({8, 8, 3}, rng, 0.2);
  for (std::size_t i = 0; i < image.size(); ++i) {
    const std::size_t pixel = i / 3;
    image[i] += static_cast<double>((pixel / 8 + pixel % 8) % 2);
  }
  for (double beta : {2.0, 1.5, 1.0}) {
    s.check("tv_prior beta=" + format_double(beta), [&](const Tensor& x, Tensor& grad) {
      ScalarGrad l = tv_prior(x, beta);
      grad = std::move(l.grad);
      return l.value;
    }, image);
  }
}

void classify_suite(Suite& s, CounterRng rng) {
  LinearClassifier m;
  m.dim = 16;
  m.labels = {"a", "b", "c"};
  m.weights = gaussian({3, 16}, rng).values();
  m.bias = {0.1, -0.3, 0.2};
  m.scale = {1.5, 0.7, 2.0};
  m.offset = {-0.2, 0.1, 0.4};
  const Tensor x = gaussian({16}, rng);
  s.check("score_backward", [&](const Tensor& v, Tensor& grad) {
    const ClassLoss l = class_loss(m.scores(v.values()), 1);
    grad = Tensor({16}, m.score_backward(l.grad_logits));
    return l.value;
  }, x);
  Tensor f = gaussian({4, 4, 4}, rng);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = 0.2 + std::abs(f[i]);
  s.check("class nll through gram features", [&](const Tensor& v, Tensor& grad) {
    const GramFeature g = bilinear_pool(v);
    const ClassLoss l = class_loss(m.scores(normalize(g)), 0);
    grad = bilinear_backward(v, normalize_backward(g, m.score_backward(l.grad_logits)));
    return l.value;
  }, f);
}

void objective_suite(Suite& s, CounterRng rng) {
  const Network net = tex_net_small(rng.next_u64());
  const std::size_t size = 16;
  auto img = [&] {
    Tensor t({size, size, 3});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform();
    return t;
  };
  const Tensor source = img();
  const Tensor x = img();
  ObjectiveSpec spec;
  spec.normalization = GradNormalization::None;
  const std::vector<std::string> tex_layers{"relu1_1", "relu2_1", "relu3_1"};
  const ActivationSet src = forward_collect(net, source, {tex_layers.begin(), tex_layers.end()});
  for (const auto& l : tex_layers) spec.texture.push_back({l, 1.0, bilinear_pool(src.at(l)).matrix});
  spec.content = ContentTerm{"relu2_1", 0.5, forward_collect(net, img(), {"relu2_1"}).at("relu2_1")};

  // The class head reads relu1_1, whose Gram entries stay well away from the
  // signed-square-root kink at zero on these inputs.
  ClassifierSet classifiers;
  LinearClassifier m;
  m.layer = "relu1_1";
  m.labels = {"a", "b"};
  m.dim = 8 * 8;
  m.weights = gaussian({2, m.dim}, rng, 0.5).values();
  m.bias = {0.0, 0.0};
  m.scale = {1.0, 1.0};
  m.offset = {0.0, 0.0};
  classifiers.emplace(m.layer, m);
  spec.classes.push_back({1, 2.0, {"relu1_1"}});
  spec.prior_weight = 1e-2;

  s.check("total_objective", [&](const Tensor& v, Tensor& grad) {
    LossReport r = total_objective(net, v, spec, &classifiers);
    grad = std::move(r.image_grad);
    return r.total;
  }, x, 1e-4, same_region(image_pattern(net, "relu3_1"), x, 1e-4));
}

}  // namespace

std::vector<std::string> gradcheck_modules() {
  return {"tensor", "network", "bilinear", "losses", "classify", "objective"};
}

std::vector<GradCheckResult> run_gradcheck(std::string_view module, std::uint64_t seed,
                                           double corrupt) {
  using Runner = std::function<void(Suite&, CounterRng)>;
  const std::vector<std::pair<std::string, Runner>> suites{
      {"tensor", tensor_suite},     {"network", network_suite},
      {"bilinear", bilinear_suite}, {"losses", losses_suite},
      {"classify", classify_suite}, {"objective", objective_suite},
  };
  const CounterRng root(seed);
  std::vector<GradCheckResult> out;
  bool matched = false;
  for (const auto& [name, run] : suites) {
    if (module != "all" && module != name) continue;
    matched = true;
    Suite suite(name, corrupt);
    run(suite, root.split(name));
    for (auto& r : suite.take()) out.push_back(std::move(r));
  }
  if (!matched) {
    throw Error(ErrorCode::InvalidArgument, "unknown gradcheck module \"" + std::string(module) + "\"");
  }
  return out;
}

}  // namespace gramtex::cli
