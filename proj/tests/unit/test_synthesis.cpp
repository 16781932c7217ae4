#include <cmath>

#include "doctest.h"
#include "gramtex/error.hpp"
#include "gramtex/image.hpp"
#include "gramtex/synthesis.hpp"
#include "gramtex/textures.hpp"
#include "support.hpp"

using namespace gramtex;

namespace {

SynthesisJob small_job(std::size_t size, std::size_t iterations) {
  SynthesisJob job;
  job.texture_layers = {"relu1_1", "relu2_1", "relu3_1"};
  job.class_layers = {"relu2_1"};
  job.content_layer = "relu2_1";
  job.out_h = job.out_w = size;
  job.iterations = iterations;
  job.seed = 1;
  return job;
}

Tensor texture(TextureKind kind, std::size_t size, std::uint64_t seed) {
  CounterRng rng(seed);
  return render_texture(kind, size, size, rng);
}

// Stripes-vs-dots (optionally plus checker) classifiers on relu2_1.
ClassifierSet toy_classifiers(const Network& net, std::size_t classes) {
  SyntheticSpec spec;
  spec.classes = {TextureKind::Stripes, TextureKind::Dots, TextureKind::Checker};
  spec.classes.resize(classes);
  spec.per_class = 8;
  spec.height = spec.width = 24;
  spec.seed = 5;
  return train_layer_classifiers(net, make_synthetic_dataset(spec), {"relu2_1"}, {1.0, 100, 1});
}

double probability(const Network& net, const ClassifierSet& set, const Tensor& img,
                   std::size_t k) {
  const LinearClassifier& m = set.at("relu2_1");
  return softmax_head(m, gram_descriptor(net, img, "relu2_1"))[k];
}

}  // namespace

TEST_SUITE("synthesis") {
  TEST_CASE("scale sets drop sizes below the receptive field or above the pixel cap") {
    const Network net = tex_net_small(1);
    ScaleSet s;
    using Sizes = std::vector<std::pair<std::size_t, std::size_t>>;
    CHECK(s.sizes(net, "relu5_1", 48, 48) == Sizes{{136, 136}, {96, 96}});
    s.max_pixels = 100 * 100;
    CHECK(s.sizes(net, "relu5_1", 48, 48) == Sizes{{96, 96}});
    CHECK(ScaleSet::single().sizes(net, "relu1_1", 10, 12) == Sizes{{10, 12}});
    CHECK_THROWS_AS(multiscale_gram(net, test::random_image(40, 40, 1), "relu5_1",
                                    ScaleSet::single()),
                    Error);
  }

  TEST_CASE("a single unit scale reproduces the plain normalized Gram feature") {
    const Network net = tex_net_small(2);
    const Tensor img = test::random_image(20, 20, 3);
    const std::vector<double> want =
        normalize(bilinear_pool(forward_collect(net, img, {"relu2_1"}).at("relu2_1")));
    for (auto mode : {ScaleAggregation::AverageRaw, ScaleAggregation::AverageNormalized}) {
      const GramFeature g = multiscale_gram(net, img, "relu2_2", ScaleSet::single(), mode);
      CHECK(g.normalized);
      CHECK(g.source_layer == "relu2_1");
      CHECK(g.matrix.values() == want);
    }
  }

  TEST_CASE("two scales: both aggregation rules match a hand computation") {
    const Network net = tex_net_small(3);
    const Tensor img = test::random_image(24, 24, 4);
    const ScaleSet two{{0.0, -1.0}, 1 << 20};
    const Tensor big = bilinear_pool(forward_collect(net, img, {"relu1_1"}).at("relu1_1")).matrix;
    const Tensor half_img = resize_bilinear(img, 12, 12);
    const Tensor small =
        bilinear_pool(forward_collect(net, half_img, {"relu1_1"}).at("relu1_1")).matrix;

    Tensor mean = big;
    mean += small;
    mean *= 0.5;
    const auto raw = normalize(GramFeature{mean, "relu1_1", false});
    const GramFeature a = multiscale_gram(net, img, "relu1_1", two, ScaleAggregation::AverageRaw);
    for (std::size_t i = 0; i < raw.size(); ++i)
      CHECK(a.matrix[i] == doctest::Approx(raw[i]).epsilon(1e-12));

    const auto yb = normalize(GramFeature{big, "", false});
    const auto ys = normalize(GramFeature{small, "", false});
    const GramFeature n =
        multiscale_gram(net, img, "relu1_1", two, ScaleAggregation::AverageNormalized);
    for (std::size_t i = 0; i < yb.size(); ++i)
      CHECK(n.matrix[i] == doctest::Approx(0.5 * (yb[i] + ys[i])).epsilon(1e-12));
  }

  TEST_CASE("starting at the source gives a zero objective") {
    const Network net = tex_net_small(1);
    const Tensor src = texture(TextureKind::Weave, 24, 2);
    SynthesisJob job = small_job(24, 0);
    job.init = InitMode::Image;
    job.prior_weight = 0.0;
    const SynthesisResult r = synthesize_texture(net, src, job);
    CHECK(r.trace.objective.at(0) == 0.0);
    CHECK(r.image == src);
  }

  TEST_CASE("texture synthesis drives the objective below one percent of its start") {
    const Network net = tex_net_small(1);
    const Tensor src = texture(TextureKind::Checker, 32, 3);
    SynthesisJob job;
    job.out_h = job.out_w = 32;
    job.iterations = 100;
    job.seed = 2;
    const SynthesisResult r = synthesize_texture(net, src, job);
    REQUIRE(r.trace.iterations() > 0);
    CHECK(r.trace.objective.back() < 0.01 * r.trace.objective.front());
    for (std::size_t i = 1; i < r.trace.objective.size(); ++i)
      CHECK(r.trace.objective[i] <= r.trace.objective[i - 1]);
  }

  TEST_CASE("rand init is centered on the network mean with the source's spread") {
    const Network net = tex_net_small(1);
    const Tensor src = texture(TextureKind::Stripes, 32, 4);
    SynthesisJob job = small_job(32, 0);
    const Tensor x = initial_image(net, src, {}, job);
    const auto m = channel_means(x);
    for (std::size_t c = 0; c < 3; ++c) CHECK(m[c] == doctest::Approx(net.mean()[c]).epsilon(0.05));
    const auto ms = channel_means(src);
    double ss_src = 0.0, ss_x = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      ss_src += std::pow(src[i] - ms[i % 3], 2);
      ss_x += std::pow(x[i] - net.mean()[i % 3], 2);
    }
    CHECK(std::sqrt(ss_x / ss_src) == doctest::Approx(1.0).epsilon(0.1));
    CHECK(initial_image(net, src, {}, job) == x);
    job.seed = 2;
    CHECK(!(initial_image(net, src, {}, job) == x));

    job.init = InitMode::Quilt;
    job.quilt.patch = 8;
    const Tensor q = initial_image(net, src, {}, job);
    CHECK(q.dims() == std::vector<std::size_t>{32, 32, 3});
  }

  TEST_CASE("transfer without a content weight is plain texture synthesis") {
    const Network net = tex_net_small(1);
    const Tensor style = texture(TextureKind::Dots, 24, 5);
    const Tensor content = texture(TextureKind::Bricks, 24, 6);
    const SynthesisJob job = small_job(24, 10);
    const SynthesisResult a = style_transfer(net, content, style, job);
    const SynthesisResult b = synthesize_texture(net, style, job);
    CHECK(a.image == b.image);
    CHECK(a.trace.objective == b.trace.objective);
  }

  TEST_CASE("transfer with content weight moves toward the content activations") {
    const Network net = tex_net_small(1);
    const Tensor style = texture(TextureKind::Dots, 24, 5);
    const Tensor content = texture(TextureKind::Bricks, 24, 6);
    SynthesisJob job = small_job(24, 30);
    job.content_weight = 1.0;
    const SynthesisResult r = style_transfer(net, content, style, job);
    REQUIRE(r.objective.content.has_value());
    CHECK(r.objective.content->layer == "relu2_1");
    const auto before = total_objective(net, r.initial, r.objective);
    const auto after = total_objective(net, r.image, r.objective);
    CHECK(after.term("content:relu2_1") < before.term("content:relu2_1"));
  }

  TEST_CASE("inversion with only the prior smooths the start") {
    const Network net = tex_net_small(1);
    const ClassifierSet set = toy_classifiers(net, 2);
    SynthesisJob job = small_job(24, 20);
    job.class_weight = 0.0;
    job.prior_weight = 1.0;
    const SynthesisResult r = invert_category(net, set, 0, job);
    CHECK(tv_prior(r.image).value < tv_prior(r.initial).value);
  }

  TEST_CASE("a stronger prior never yields a rougher inversion") {
    const Network net = tex_net_small(1);
    const ClassifierSet set = toy_classifiers(net, 2);
    SynthesisJob job = small_job(24, 40);
    job.prior_weight = 1e-3;
    const double tv1 = tv_prior(invert_category(net, set, 1, job).image).value;
    job.prior_weight = 1e-2;
    const double tv10 = tv_prior(invert_category(net, set, 1, job).image).value;
    CHECK(tv10 <= tv1);
  }

  TEST_CASE("inversion raises the target-class probability") {
    const Network net = tex_net_small(1);
    const ClassifierSet set = toy_classifiers(net, 2);
    SynthesisJob job = small_job(24, 40);
    const SynthesisResult r = invert_category(net, set, 0, job);
    CHECK(probability(net, set, r.image, 0) > probability(net, set, r.initial, 0));
    CHECK_THROWS_AS(invert_category(net, set, 2, job), Error);
    job.class_layers = {"relu4_1"};
    CHECK_THROWS_AS(invert_category(net, set, 0, job), Error);
  }

  TEST_CASE("editing with zero attribute weight is plain synthesis") {
    const Network net = tex_net_small(1);
    const ClassifierSet set = toy_classifiers(net, 2);
    const Tensor src = texture(TextureKind::Dots, 24, 7);
    const SynthesisJob job = small_job(24, 10);
    const SynthesisResult e = edit_with_attribute(net, set, src, {{0, 0.0}}, EditMode::Texture, job);
    const SynthesisResult s = synthesize_texture(net, src, job);
    CHECK(e.image == s.image);
    CHECK_THROWS_AS(edit_with_attribute(net, set, src, {}, EditMode::Texture, job), Error);
  }

  TEST_CASE("a weighted attribute pulls the edit toward its class") {
    const Network net = tex_net_small(1);
    const ClassifierSet set = toy_classifiers(net, 2);
    const Tensor src = texture(TextureKind::Dots, 24, 7);
    const SynthesisJob job = small_job(24, 30);
    for (EditMode mode : {EditMode::Texture, EditMode::Content}) {
      SynthesisJob j = job;
      if (mode == EditMode::Content) j.content_weight = 1.0;
      const SynthesisResult base = edit_with_attribute(net, set, src, {{0, 0.0}}, mode, j);
      const SynthesisResult edit = edit_with_attribute(net, set, src, {{0, 1.0}}, mode, j);
      CHECK(probability(net, set, edit.image, 0) > probability(net, set, base.image, 0));
    }
  }

  TEST_CASE("two attribute targets both gain against a third class") {
    const Network net = tex_net_small(1);
    const ClassifierSet set = toy_classifiers(net, 3);
    const Tensor src = texture(TextureKind::Checker, 24, 8);
    const SynthesisJob job = small_job(24, 30);
    const SynthesisResult base =
        edit_with_attribute(net, set, src, {{0, 0.0}, {1, 0.0}}, EditMode::Texture, job);
    const SynthesisResult mix =
        edit_with_attribute(net, set, src, {{0, 1.0}, {1, 1.0}}, EditMode::Texture, job);
    CHECK(probability(net, set, mix.image, 0) > probability(net, set, base.image, 0));
    CHECK(probability(net, set, mix.image, 1) > probability(net, set, base.image, 1));
  }

  TEST_CASE("job validation and mode parsing") {
    SynthesisJob job;
    job.memory = 0;
    CHECK_THROWS_AS(job.validate(), Error);
    job = SynthesisJob{};
    job.quilt_alpha = 2.0;
    CHECK_THROWS_AS(job.validate(), Error);
    CHECK(parse_init_mode("quilt") == InitMode::Quilt);
    CHECK_THROWS_AS(parse_init_mode("noise"), Error);
    CHECK(parse_edit_mode("content") == EditMode::Content);
  }
}
