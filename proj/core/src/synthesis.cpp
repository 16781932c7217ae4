#include "gramtex/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "gramtex/error.hpp"
#include "gramtex/image.hpp"
#include "gramtex/rng.hpp"

namespace gramtex {

std::string_view to_string(InitMode mode) {
  switch (mode) {
    case InitMode::Rand: return "rand";
    case InitMode::Quilt: return "quilt";
    case InitMode::Image: return "image";
  }
  return "?";
}

InitMode parse_init_mode(std::string_view text) {
  if (text == "rand") return InitMode::Rand;
  if (text == "quilt") return InitMode::Quilt;
  if (text == "image") return InitMode::Image;
  throw Error(ErrorCode::Parse, "init must be rand|quilt|image, got \"" + std::string(text) + "\"");
}

std::string_view to_string(EditMode mode) {
  return mode == EditMode::Texture ? "texture" : "content";
}

EditMode parse_edit_mode(std::string_view text) {
  if (text == "texture") return EditMode::Texture;
  if (text == "content") return EditMode::Content;
  throw Error(ErrorCode::Parse, "mode must be texture|content, got \"" + std::string(text) + "\"");
}

std::vector<std::pair<std::size_t, std::size_t>> ScaleSet::sizes(const Network& net,
                                                                 const std::string& layer,
                                                                 std::size_t height,
                                                                 std::size_t width) const {
  const std::size_t idx = net.index_of(net.resolve(layer));
  const std::size_t field = net.receptive_field(idx);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (double s : exponents) {
    const double f = std::exp2(s);
    const auto h = static_cast<std::size_t>(std::lround(static_cast<double>(height) * f));
    const auto w = static_cast<std::size_t>(std::lround(static_cast<double>(width) * f));
    if (h < field || w < field || h * w > max_pixels) continue;
    if (!net.output_extent(idx, h, w)) continue;
    out.emplace_back(h, w);
  }
  return out;
}

GramFeature multiscale_gram(const Network& net, const Tensor& image, const std::string& layer,
                            const ScaleSet& scales, ScaleAggregation mode) {
  const std::string resolved = net.resolve(layer);
  const auto sizes = scales.sizes(net, resolved, image.height(), image.width());
  if (sizes.empty()) {
    throw Error(ErrorCode::ImageTooSmall,
                "no scale of a " + dims_string(image.dims()) + " image survives for " + resolved);
  }
  Tensor acc;
  std::vector<double> acc_norm;
  for (const auto& [h, w] : sizes) {
    const Tensor scaled = h == image.height() && w == image.width() ? image
                                                                     : resize_bilinear(image, h, w);
    const ActivationSet acts = forward_collect(net, scaled, {resolved});
    GramFeature g = bilinear_pool(acts.at(resolved), resolved);
    if (mode == ScaleAggregation::AverageRaw) {
      if (acc.empty()) acc = Tensor::zeros_like(g.matrix);
      acc += g.matrix;
    } else {
      const std::vector<double> y = normalize(g);
      if (acc_norm.empty()) acc_norm.assign(y.size(), 0.0);
      for (std::size_t i = 0; i < y.size(); ++i) acc_norm[i] += y[i];
    }
  }
  const double inv = 1.0 / static_cast<double>(sizes.size());
  GramFeature out;
  out.source_layer = resolved;
  out.normalized = true;
  if (mode == ScaleAggregation::AverageRaw) {
    acc *= inv;
    const std::size_t c = acc.dim(0);
    out.matrix = Tensor({c, c}, normalize(GramFeature{std::move(acc), resolved, false}));
  } else {
    const auto c = static_cast<std::size_t>(std::lround(std::sqrt(acc_norm.size())));
    for (double& v : acc_norm) v *= inv;
    out.matrix = Tensor({c, c}, std::move(acc_norm));
  }
  return out;
}

void SynthesisJob::validate() const {
  if (out_h == 0 || out_w == 0) throw Error(ErrorCode::InvalidArgument, "output size must be > 0");
  if (texture_weight < 0.0 || content_weight < 0.0 || class_weight < 0.0 || prior_weight < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "term weights must be >= 0");
  }
  if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be > 0");
  if (init_std < 0.0 || fallback_init_std < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "init std must be >= 0");
  }
  if (quilt_alpha < 0.0 || quilt_alpha > 1.0) {
    throw Error(ErrorCode::InvalidArgument, "quilt_alpha must lie in [0, 1]");
  }
  if (memory == 0) throw Error(ErrorCode::InvalidArgument, "L-BFGS memory must be > 0");
}

namespace {

Tensor fit_to(const Tensor& image, const SynthesisJob& job) {
  if (image.rank() != 3) {
    throw Error(ErrorCode::DimensionMismatch, "expected an H x W x C image, got " +
                                                  dims_string(image.dims()));
  }
  if (image.height() == job.out_h && image.width() == job.out_w) return image;
  return resize_bilinear(image, job.out_h, job.out_w);
}

double centered_std(const Tensor& image) {
  const std::vector<double> means = channel_means(image);
  const std::size_t c = image.channels();
  double ss = 0.0;
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double d = image[i] - means[i % c];
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(image.size()));
}

ObjectiveSpec base_spec(const SynthesisJob& job) {
  ObjectiveSpec spec;
  spec.prior_weight = job.prior_weight;
  spec.tv_exponent = job.tv_exponent;
  spec.temperature = job.temperature;
  spec.normalization = job.normalization;
  return spec;
}

ContentTerm content_term(const Network& net, const Tensor& content, const SynthesisJob& job) {
  const std::string layer = net.resolve(job.content_layer);
  const ActivationSet acts = forward_collect(net, fit_to(content, job), {layer});
  return {layer, job.content_weight, acts.at(layer)};
}

}  // namespace

std::vector<TextureTerm> texture_targets(const Network& net, const Tensor& source,
                                         const SynthesisJob& job) {
  if (source.empty()) throw Error(ErrorCode::InvalidArgument, "texture terms need a source image");
  std::set<std::string> layers;
  for (const auto& l : job.texture_layers) layers.insert(net.resolve(l));
  const ActivationSet acts = forward_collect(net, fit_to(source, job), layers);
  std::vector<TextureTerm> terms;
  for (const auto& l : job.texture_layers) {
    const std::string r = net.resolve(l);
    bool seen = false;
    for (const auto& t : terms) seen = seen || t.layer == r;
    if (seen) continue;
    terms.push_back({r, job.texture_weight, bilinear_pool(acts.at(r), r).matrix});
  }
  return terms;
}

Tensor initial_image(const Network& net, const Tensor& source, const Tensor& correspondence,
                     const SynthesisJob& job) {
  const CounterRng root(job.seed);
  switch (job.init) {
    case InitMode::Image: {
      const Tensor& start = !job.init_image.empty() ? job.init_image
                            : !correspondence.empty() ? correspondence
                                                      : source;
      if (start.empty()) throw Error(ErrorCode::InvalidArgument, "image init needs an image");
      return fit_to(start, job);
    }
    case InitMode::Quilt: {
      if (source.empty()) throw Error(ErrorCode::InvalidArgument, "quilt init needs a source");
      QuiltParams qp = job.quilt;
      qp.out_h = job.out_h;
      qp.out_w = job.out_w;
      qp.seed = root.split("quilt").next_u64();
      const Tensor src = fit_to(source, job);
      if (!correspondence.empty()) {
        return quilt_transfer(src, fit_to(correspondence, job), qp, job.quilt_alpha);
      }
      return quilt(src, qp);
    }
    case InitMode::Rand: {
      double sd = job.init_std;
      if (sd == 0.0) sd = source.empty() ? job.fallback_init_std : centered_std(fit_to(source, job));
      const std::vector<double>& mean = net.mean();
      const std::size_t c = mean.size();
      Tensor x({job.out_h, job.out_w, c});
      CounterRng rng = root.split("rand-init");
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = mean[i % c] + sd * rng.normal();
      return x;
    }
  }
  throw Error(ErrorCode::InvalidArgument, "unknown init mode");
}

SynthesisResult run_objective(const Network& net, const ObjectiveSpec& spec, Tensor x0,
                              const SynthesisJob& job, const ClassifierSet* classifiers) {
  spec.validate();
  SynthesisResult result;
  result.objective = spec;
  result.initial = x0;
  const Objective f = [&](const Tensor& x, Tensor& grad) {
    LossReport r = total_objective(net, x, spec, classifiers);
    grad = std::move(r.image_grad);
    return r.total;
  };
  LbfgsOptions opt;
  opt.max_iters = job.iterations;
  opt.memory = job.memory;
  opt.on_iterate = job.on_iterate;
  LbfgsResult r = lbfgs_minimize(f, std::move(x0), opt);
  result.image = std::move(r.x);
  result.trace = std::move(r.trace);
  return result;
}

SynthesisResult synthesize_texture(const Network& net, const Tensor& source,
                                   const SynthesisJob& job) {
  job.validate();
  ObjectiveSpec spec = base_spec(job);
  spec.texture = texture_targets(net, source, job);
  return run_objective(net, spec, initial_image(net, source, {}, job), job);
}

SynthesisResult style_transfer(const Network& net, const Tensor& content, const Tensor& style,
                               const SynthesisJob& job) {
  job.validate();
  if (content.empty()) throw Error(ErrorCode::InvalidArgument, "style transfer needs content");
  ObjectiveSpec spec = base_spec(job);
  spec.texture = texture_targets(net, style, job);
  if (job.content_weight > 0.0) spec.content = content_term(net, content, job);
  return run_objective(net, spec, initial_image(net, style, content, job), job);
}

std::vector<std::string> resolve_class_layers(const Network& net,
                                              const ClassifierSet& classifiers,
                                              const SynthesisJob& job) {
  if (job.class_layers.empty()) throw Error(ErrorCode::InvalidArgument, "no classifier layers");
  std::vector<std::string> out;
  for (const auto& l : job.class_layers) {
    const std::string r = net.resolve(l);
    if (!classifiers.count(r)) {
      throw Error(ErrorCode::InvalidArgument, "no classifier for layer " + l +
                                                  (r != l ? " (" + r + ")" : std::string()));
    }
    if (std::find(out.begin(), out.end(), r) == out.end()) out.push_back(r);
  }
  return out;
}

SynthesisResult invert_category(const Network& net, const ClassifierSet& classifiers,
                                std::size_t class_id, const SynthesisJob& job,
                                const Tensor& source) {
  job.validate();
  ObjectiveSpec spec = base_spec(job);
  const std::vector<std::string> layers = resolve_class_layers(net, classifiers, job);
  for (const auto& l : layers) {
    if (class_id >= classifiers.at(l).classes()) {
      throw Error(ErrorCode::InvalidArgument, "class index " + std::to_string(class_id) +
                                                  " out of range for " + l);
    }
  }
  spec.classes.push_back({class_id, job.class_weight, layers});
  return run_objective(net, spec, initial_image(net, source, {}, job), job, &classifiers);
}

SynthesisResult edit_with_attribute(const Network& net, const ClassifierSet& classifiers,
                                    const Tensor& source,
                                    const std::vector<AttributeTarget>& targets, EditMode mode,
                                    const SynthesisJob& job) {
  job.validate();
  if (targets.empty()) throw Error(ErrorCode::InvalidArgument, "edit needs at least one target");
  if (source.empty()) throw Error(ErrorCode::InvalidArgument, "edit needs a source image");
  ObjectiveSpec spec = base_spec(job);
  if (mode == EditMode::Texture) {
    spec.texture = texture_targets(net, source, job);
  } else {
    spec.content = content_term(net, source, job);
  }
  const std::vector<std::string> layers = resolve_class_layers(net, classifiers, job);
  for (const auto& t : targets) {
    if (t.weight < 0.0) throw Error(ErrorCode::InvalidArgument, "attribute weights must be >= 0");
    for (const auto& l : layers) {
      if (t.class_id >= classifiers.at(l).classes()) {
        throw Error(ErrorCode::InvalidArgument, "class index out of range for " + l);
      }
    }
    spec.classes.push_back({t.class_id, t.weight, layers});
  }
  return run_objective(net, spec, initial_image(net, source, {}, job), job, &classifiers);
}

}  // namespace gramtex
