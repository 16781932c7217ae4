#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "gramtex/rng.hpp"
#include "gramtex/tensor.hpp"

namespace gramtex::test {

inline Tensor random_tensor(std::vector<std::size_t> dims, std::uint64_t seed,
                            double scale = 1.0) {
  CounterRng rng(seed);
  Tensor t(std::move(dims));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

inline Tensor random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  CounterRng rng(seed);
  Tensor t({h, w, 3});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform();
  return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  const std::filesystem::path p = std::filesystem::path(GRAMTEX_TEST_TMP) / name;
  std::filesystem::create_directories(p);
  return p;
}

inline std::filesystem::path data_path(const std::string& rel) {
  return std::filesystem::path(GRAMTEX_DATA_DIR) / rel;
}

}  // namespace gramtex::test
