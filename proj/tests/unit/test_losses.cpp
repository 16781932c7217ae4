#include <cmath>

#include "doctest.h"
#include "gramtex/bilinear.hpp"
#include "gramtex/error.hpp"
#include "gramtex/losses.hpp"
#include "support.hpp"

using namespace gramtex;

namespace {

Network small_net(std::uint64_t seed) {
  return init_random({LayerSpec::conv("conv1_1", 3, 3, 4), LayerSpec::relu("relu1_1"),
                      LayerSpec::maxpool("pool1"), LayerSpec::conv("conv2_1", 3, 4, 5),
                      LayerSpec::relu("relu2_1")},
                     {0.5, 0.5, 0.5}, seed);
}

Tensor gram_of(const Network& net, const Tensor& img, const std::string& layer) {
  return bilinear_pool(forward_collect(net, img, {layer}).at(layer)).matrix;
}

// Independent TV oracle: loops over the two difference directions separately.
double tv_oracle(const Tensor& img, double beta) {
  double s = 0.0;
  for (std::size_t y = 0; y < img.height(); ++y)
    for (std::size_t x = 0; x < img.width(); ++x)
      for (std::size_t c = 0; c < img.channels(); ++c) {
        double dx = 0.0, dy = 0.0;
        if (x + 1 < img.width()) dx = img.at(y, x + 1, c) - img.at(y, x, c);
        if (y + 1 < img.height()) dy = img.at(y + 1, x, c) - img.at(y, x, c);
        s += std::pow(dx * dx + dy * dy, beta / 2.0);
      }
  return s;
}

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("gram and content losses are plain squared distances") {
    const Tensor a = test::random_tensor({3, 3}, 1), b = test::random_tensor({3, 3}, 2);
    const ScalarGrad g = gram_loss(a, b);
    double want = 0.0;
    for (std::size_t i = 0; i < 9; ++i) want += (a[i] - b[i]) * (a[i] - b[i]);
    CHECK(g.value == doctest::Approx(want));
    CHECK(g.grad[4] == doctest::Approx(2.0 * (a[4] - b[4])));
    CHECK(gram_loss(a, a).value == 0.0);
    CHECK_THROWS_AS(gram_loss(a, Tensor({2, 2})), Error);

    const Tensor f = test::random_tensor({2, 2, 3}, 3);
    CHECK(content_loss(f, f).value == 0.0);
    CHECK(content_loss(f, Tensor({2, 2, 3})).value == doctest::Approx(std::pow(l2_norm(f), 2)));
  }

  TEST_CASE("class loss is the softmax negative log-likelihood") {
    const std::vector<double> logits{1.0, -0.5, 2.0};
    const ClassLoss l = class_loss(logits, 1);
    const double z = std::exp(1.0) + std::exp(-0.5) + std::exp(2.0);
    CHECK(l.value == doctest::Approx(-std::log(std::exp(-0.5) / z)));
    CHECK(l.grad_logits[0] == doctest::Approx(std::exp(1.0) / z));
    CHECK(l.grad_logits[1] == doctest::Approx(std::exp(-0.5) / z - 1.0));
    double sum = 0.0;
    for (double g : l.grad_logits) sum += g;
    CHECK(std::abs(sum) < 1e-15);
    // Large logits stay finite.
    const ClassLoss big = class_loss(std::vector<double>{1000.0, 0.0}, 1);
    CHECK(big.value == doctest::Approx(1000.0));
    CHECK_THROWS_AS(class_loss(logits, 3), Error);

    const std::vector<double> probs{0.2, 0.5, 0.3};
    CHECK(class_loss_from_probs(probs, 2).value == doctest::Approx(-std::log(0.3)));
    CHECK_THROWS_AS(class_loss_from_probs(std::vector<double>{0.2, 0.2}, 0), Error);
  }

  TEST_CASE("tv prior matches an independent sum for several exponents") {
    const Tensor img = test::random_image(6, 5, 4);
    for (double beta : {1.0, 1.5, 2.0, 3.0}) {
      CHECK(tv_prior(img, beta).value == doctest::Approx(tv_oracle(img, beta)).epsilon(1e-12));
    }
    const Tensor flat({4, 4, 3}, 0.7);
    const ScalarGrad z = tv_prior(flat, 2.0);
    CHECK(z.value == 0.0);
    CHECK(l2_norm(z.grad) == 0.0);
    CHECK_THROWS_AS(tv_prior(Tensor({1, 4, 3}), 2.0), Error);
    CHECK_THROWS_AS(tv_prior(img, 0.0), Error);
  }

  TEST_CASE("objective is zero with gradient zero when the image is its own target") {
    const Network net = small_net(2);
    const Tensor img = test::random_image(12, 12, 5);
    ObjectiveSpec spec;
    for (const char* l : {"relu1_1", "relu2_1"}) spec.texture.push_back({l, 1.0, gram_of(net, img, l)});
    spec.content = ContentTerm{"relu2_1", 0.3, forward_collect(net, img, {"relu2_1"}).at("relu2_1")};
    spec.normalization = GradNormalization::None;
    const LossReport r = total_objective(net, img, spec);
    CHECK(r.total == 0.0);
    CHECK(l2_norm(r.image_grad) == 0.0);
    CHECK(r.term("texture:relu1_1") == 0.0);
    CHECK(r.term("prior") > 0.0);
    CHECK_THROWS_AS(r.term("texture:relu9_9"), Error);
  }

  TEST_CASE("total is the weighted sum of the reported terms") {
    const Network net = small_net(3);
    const Tensor img = test::random_image(12, 12, 6), src = test::random_image(12, 12, 7);
    ObjectiveSpec spec;
    spec.texture.push_back({"relu1_1", 2.0, gram_of(net, src, "relu1_1")});
    spec.texture.push_back({"relu2_1", 0.5, gram_of(net, src, "relu2_1")});
    spec.prior_weight = 0.1;
    spec.tv_exponent = 1.5;
    for (auto mode : {GradNormalization::None, GradNormalization::L1Image,
                      GradNormalization::L2Target}) {
      spec.normalization = mode;
      const LossReport r = total_objective(net, img, spec);
      const double want = 2.0 * r.term("texture:relu1_1") + 0.5 * r.term("texture:relu2_1") +
                          0.1 * r.term("prior");
      CHECK(r.total == doctest::Approx(want).epsilon(1e-12));
      CHECK(r.term("prior") == doctest::Approx(tv_oracle(img, 1.5)));
    }
  }

  TEST_CASE("l1 normalization gives each texture term a unit-l1 image gradient") {
    const Network net = small_net(4);
    const Tensor img = test::random_image(12, 12, 8), src = test::random_image(12, 12, 9);
    for (const char* layer : {"relu1_1", "relu2_1"}) {
      ObjectiveSpec spec;
      spec.texture.push_back({layer, 3.0, gram_of(net, src, layer)});
      spec.normalization = GradNormalization::L1Image;
      const LossReport r = total_objective(net, img, spec);
      CHECK(l1_norm(r.image_grad) == doctest::Approx(3.0).epsilon(1e-12));

      // Direction agrees with the exact gradient.
      spec.normalization = GradNormalization::None;
      const LossReport exact = total_objective(net, img, spec);
      const double cosine = dot(r.image_grad, exact.image_grad) /
                            (l2_norm(r.image_grad) * l2_norm(exact.image_grad));
      CHECK(cosine == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  TEST_CASE("l2-target normalization divides each term's gradient by the target norm") {
    const Network net = small_net(5);
    const Tensor img = test::random_image(12, 12, 10), src = test::random_image(12, 12, 11);
    ObjectiveSpec spec;
    spec.texture.push_back({"relu2_1", 1.0, gram_of(net, src, "relu2_1")});
    spec.normalization = GradNormalization::None;
    const Tensor exact = total_objective(net, img, spec).image_grad;
    spec.normalization = GradNormalization::L2Target;
    const Tensor scaled = total_objective(net, img, spec).image_grad;
    const double n = l2_norm(spec.texture[0].target);
    for (std::size_t i = 0; i < exact.size(); ++i)
      CHECK(scaled[i] == doctest::Approx(exact[i] / n).epsilon(1e-10));
  }

  TEST_CASE("validation rejects malformed objectives") {
    ObjectiveSpec empty;
    CHECK_THROWS_AS(empty.validate(), Error);
    ObjectiveSpec neg;
    neg.prior_weight = -1.0;
    CHECK_THROWS_AS(neg.validate(), Error);
    ObjectiveSpec temp;
    temp.prior_weight = 1.0;
    temp.temperature = 0.0;
    CHECK_THROWS_AS(temp.validate(), Error);
    ObjectiveSpec cls;
    cls.classes.push_back({0, 1.0, {}});
    CHECK_THROWS_AS(cls.validate(), Error);
    ObjectiveSpec no_set;
    no_set.classes.push_back({0, 1.0, {"relu1_1"}});
    CHECK_THROWS_AS(total_objective(small_net(1), test::random_image(8, 8, 1), no_set), Error);
    CHECK(parse_grad_normalization("l2target") == GradNormalization::L2Target);
    CHECK_THROWS_AS(parse_grad_normalization("l3"), Error);
  }
}
