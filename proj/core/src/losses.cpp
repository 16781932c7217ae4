#include "gramtex/losses.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "gramtex/bilinear.hpp"
#include "gramtex/error.hpp"

namespace gramtex {
namespace {

ScalarGrad squared_difference(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw Error(ErrorCode::DimensionMismatch, std::string(what) + ": " + dims_string(a.dims()) +
                                                  " vs target " + dims_string(b.dims()));
  }
  ScalarGrad r{0.0, Tensor::zeros_like(a)};
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    r.value += d * d;
    r.grad[i] = 2.0 * d;
  }
  return r;
}

void add_scaled(LayerGrads& grads, const std::string& layer, double scale, const Tensor& g) {
  auto it = grads.find(layer);
  if (it == grads.end()) {
    Tensor scaled = g;
    scaled *= scale;
    grads.emplace(layer, std::move(scaled));
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) it->second[i] += scale * g[i];
  }
}

}  // namespace

ScalarGrad gram_loss(const Tensor& gram, const Tensor& target) {
  return squared_difference(gram, target, "gram_loss");
}

ScalarGrad content_loss(const Tensor& features, const Tensor& target) {
  return squared_difference(features, target, "content_loss");
}

ClassLoss class_loss(std::span<const double> logits, std::size_t target) {
  if (target >= logits.size()) {
    throw Error(ErrorCode::InvalidArgument, "class target " + std::to_string(target) +
                                                " out of range for " +
                                                std::to_string(logits.size()) + " classes");
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - m);
  const double lse = m + std::log(sum);
  ClassLoss r;
  r.value = lse - logits[target];
  r.grad_logits.resize(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) {
    r.grad_logits[k] = std::exp(logits[k] - lse) - (k == target ? 1.0 : 0.0);
  }
  return r;
}

ClassLoss class_loss_from_probs(std::span<const double> probs, std::size_t target) {
  if (target >= probs.size()) {
    throw Error(ErrorCode::InvalidArgument, "class target " + std::to_string(target) +
                                                " out of range for " +
                                                std::to_string(probs.size()) + " classes");
  }
  double sum = 0.0;
  for (double p : probs) {
    if (p < 0.0) throw Error(ErrorCode::InvalidArgument, "negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw Error(ErrorCode::InvalidArgument, "probabilities sum to " + std::to_string(sum));
  }
  ClassLoss r;
  r.value = -std::log(probs[target]);
  r.grad_logits.assign(probs.begin(), probs.end());
  r.grad_logits[target] -= 1.0;
  return r;
}

ScalarGrad tv_prior(const Tensor& image, double exponent) {
  if (image.rank() != 3 || image.height() < 2 || image.width() < 2) {
    throw Error(ErrorCode::InvalidArgument,
                "tv_prior needs an H x W x C image with H, W >= 2, got " +
                    dims_string(image.dims()));
  }
  if (!(exponent > 0.0)) throw Error(ErrorCode::InvalidArgument, "tv exponent must be > 0");
  const std::size_t h = image.height(), w = image.width(), c = image.channels();
  ScalarGrad r{0.0, Tensor::zeros_like(image)};
  const double half = exponent / 2.0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double v = image.at(y, x, ch);
        const double dx = x + 1 < w ? image.at(y, x + 1, ch) - v : 0.0;
        const double dy = y + 1 < h ? image.at(y + 1, x, ch) - v : 0.0;
        const double d = dx * dx + dy * dy;
        if (d == 0.0) continue;
        const double term = exponent == 2.0 ? d : std::pow(d, half);
        r.value += term;
        const double slope = exponent == 2.0 ? 1.0 : half * term / d;  // d(term)/d(d)
        if (x + 1 < w) r.grad.at(y, x + 1, ch) += slope * 2.0 * dx;
        if (y + 1 < h) r.grad.at(y + 1, x, ch) += slope * 2.0 * dy;
        r.grad.at(y, x, ch) -= slope * 2.0 * (dx + dy);
      }
    }
  }
  return r;
}

std::string_view to_string(GradNormalization mode) {
  switch (mode) {
    case GradNormalization::None: return "none";
    case GradNormalization::L1Image: return "l1";
    case GradNormalization::L2Target: return "l2target";
  }
  return "?";
}

GradNormalization parse_grad_normalization(std::string_view text) {
  if (text == "none") return GradNormalization::None;
  if (text == "l1") return GradNormalization::L1Image;
  if (text == "l2target") return GradNormalization::L2Target;
  throw Error(ErrorCode::Parse, "grad normalization must be none|l1|l2target, got \"" +
                                    std::string(text) + "\"");
}

void ObjectiveSpec::validate() const {
  auto check = [](double w, const std::string& what) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw Error(ErrorCode::InvalidArgument, what + " weight must be finite and >= 0");
    }
  };
  for (const auto& t : texture) check(t.weight, "texture:" + t.layer);
  if (content) check(content->weight, "content:" + content->layer);
  for (const auto& c : classes) {
    check(c.weight, "class");
    if (c.layers.empty()) throw Error(ErrorCode::InvalidArgument, "class term with no layers");
  }
  check(prior_weight, "prior");
  if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be > 0");
  if (texture.empty() && !content && classes.empty() && prior_weight == 0.0) {
    throw Error(ErrorCode::InvalidArgument, "objective has no terms");
  }
}

double LossReport::term(std::string_view name) const {
  for (const auto& [n, v] : per_term) {
    if (n == name) return v;
  }
  throw Error(ErrorCode::InvalidArgument, "no loss term \"" + std::string(name) + "\"");
}

LossReport total_objective(const Network& net, const Tensor& image, const ObjectiveSpec& spec,
                           const ClassifierSet* classifiers) {
  spec.validate();
  std::set<std::string> layers;
  for (const auto& t : spec.texture) layers.insert(t.layer);
  if (spec.content) layers.insert(spec.content->layer);
  for (const auto& c : spec.classes) {
    if (!classifiers) throw Error(ErrorCode::InvalidArgument, "class terms need classifiers");
    for (const auto& l : c.layers) {
      if (!classifiers->count(l)) {
        throw Error(ErrorCode::InvalidArgument, "no classifier for layer " + l);
      }
      layers.insert(l);
    }
  }

  const ActivationSet acts = forward_collect(net, image, layers);
  LossReport report;
  report.image_grad = Tensor::zeros_like(image);
  LayerGrads combined;

  for (const auto& t : spec.texture) {
    const Tensor& f = acts.at(t.layer);
    const GramFeature g = bilinear_pool(f, t.layer);
    const ScalarGrad loss = gram_loss(g.matrix, t.target);
    report.per_term.emplace_back("texture:" + t.layer, loss.value);
    report.total += t.weight * loss.value;
    if (t.weight == 0.0) continue;
    const Tensor df = bilinear_backward(f, loss.grad);
    switch (spec.normalization) {
      case GradNormalization::None:
        add_scaled(combined, t.layer, t.weight, df);
        break;
      case GradNormalization::L2Target: {
        const double n = l2_norm(t.target);
        add_scaled(combined, t.layer, n > 0.0 ? t.weight / n : t.weight, df);
        break;
      }
      case GradNormalization::L1Image: {
        const Tensor g_img = backward_to_input(net, acts, {{t.layer, df}});
        const double n1 = l1_norm(g_img);
        if (n1 > 0.0) {
          const double s = t.weight / n1;
          for (std::size_t i = 0; i < g_img.size(); ++i) report.image_grad[i] += s * g_img[i];
        }
        break;
      }
    }
  }

  if (spec.content) {
    const ContentTerm& c = *spec.content;
    const ScalarGrad loss = content_loss(acts.at(c.layer), c.target);
    report.per_term.emplace_back("content:" + c.layer, loss.value);
    report.total += c.weight * loss.value;
    if (c.weight != 0.0) add_scaled(combined, c.layer, c.weight, loss.grad);
  }

  for (std::size_t j = 0; j < spec.classes.size(); ++j) {
    const ClassTerm& term = spec.classes[j];
    double value = 0.0;
    for (const auto& layer : term.layers) {
      const LinearClassifier& cls = classifiers->at(layer);
      const Tensor& f = acts.at(layer);
      const GramFeature g = bilinear_pool(f, layer);
      const std::vector<double> y = normalize(g);
      if (y.size() != cls.dim) {
        throw Error(ErrorCode::DimensionMismatch,
                    "classifier for " + layer + " expects dim " + std::to_string(cls.dim) +
                        ", feature has " + std::to_string(y.size()));
      }
      std::vector<double> logits = cls.scores(y);
      for (double& l : logits) l /= spec.temperature;
      const ClassLoss loss = class_loss(logits, term.target_class);
      value += loss.value;
      if (term.weight == 0.0) continue;
      std::vector<double> dscores = loss.grad_logits;
      for (double& d : dscores) d /= spec.temperature;
      const std::vector<double> dy = cls.score_backward(dscores);
      const Tensor dgram = normalize_backward(g, dy);
      add_scaled(combined, layer, term.weight, bilinear_backward(f, dgram));
    }
    report.per_term.emplace_back("class:" + std::to_string(j), value);
    report.total += term.weight * value;
  }

  if (!combined.empty()) report.image_grad += backward_to_input(net, acts, combined);

  const ScalarGrad tv = tv_prior(image, spec.tv_exponent);
  report.per_term.emplace_back("prior", tv.value);
  report.total += spec.prior_weight * tv.value;
  if (spec.prior_weight != 0.0) {
    for (std::size_t i = 0; i < tv.grad.size(); ++i) {
      report.image_grad[i] += spec.prior_weight * tv.grad[i];
    }
  }
  return report;
}

}  // namespace gramtex
