#include <array>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "gramtex/error.hpp"
#include "gramtex/rng.hpp"

using namespace gramtex;

TEST_SUITE("rng") {
  TEST_CASE("philox4x32-10 matches the published known-answer vectors") {
    using A4 = std::array<std::uint32_t, 4>;
    CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
          A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
  }

  TEST_CASE("equal seeds and streams give equal sequences") {
    CounterRng a(42, 3), b(42, 3), c(42, 4), d(43, 3);
    bool differs_c = false, differs_d = false;
    for (int i = 0; i < 64; ++i) {
      const auto va = a.next_u64();
      CHECK(va == b.next_u64());
      differs_c = differs_c || va != c.next_u64();
      differs_d = differs_d || va != d.next_u64();
    }
    CHECK(differs_c);
    CHECK(differs_d);
  }

  TEST_CASE("split is a pure function of the parent key and does not advance it") {
    CounterRng parent(7);
    CounterRng twin(7);
    CounterRng child1 = parent.split("quilt");
    CounterRng child2 = parent.split("quilt");
    CHECK(parent.next_u64() == twin.next_u64());
    for (int i = 0; i < 16; ++i) CHECK(child1.next_u64() == child2.next_u64());
    CHECK(parent.split("a").key() != parent.split("b").key());
    CHECK(parent.split(1).key() != parent.split(2).key());
    // Draws made on the parent before splitting do not change the child.
    CounterRng advanced(7);
    for (int i = 0; i < 5; ++i) advanced.next_u64();
    CHECK(advanced.split("quilt").key() == CounterRng(7).split("quilt").key());
  }

  TEST_CASE("uniform lies in [0, 1) with the right mean") {
    CounterRng rng(1);
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const double u = rng.uniform();
      REQUIRE(u >= 0.0);
      REQUIRE(u < 1.0);
      sum += u;
    }
    // 5 standard errors of a U(0, 1) mean.
    CHECK(std::abs(sum / n - 0.5) < 5.0 * std::sqrt(1.0 / 12.0 / n));
  }

  TEST_CASE("normal draws have zero mean and unit variance") {
    CounterRng rng(2);
    const int n = 100000;
    double s = 0.0, ss = 0.0;
    for (int i = 0; i < n; ++i) {
      const double z = rng.normal();
      REQUIRE(std::isfinite(z));
      s += z;
      ss += z * z;
    }
    const double mean = s / n;
    const double var = ss / n - mean * mean;
    CHECK(std::abs(mean) < 5.0 / std::sqrt(n));
    // Var of the sample variance of N(0, 1) is about 2 / n.
    CHECK(std::abs(var - 1.0) < 5.0 * std::sqrt(2.0 / n));
  }

  TEST_CASE("below is bounded and close to uniform") {
    CounterRng rng(3);
    const int n = 60000;
    std::vector<int> counts(6, 0);
    for (int i = 0; i < n; ++i) {
      const auto v = rng.below(6);
      REQUIRE(v < 6);
      ++counts[v];
    }
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - n / 6.0) * (c - n / 6.0) / (n / 6.0);
    // 5 degrees of freedom; 20.5 is the 0.999 quantile.
    CHECK(chi2 < 20.5);
    CHECK(rng.below(1) == 0);
    CHECK_THROWS_AS(rng.below(0), Error);
  }
}
