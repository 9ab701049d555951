#pragma once

#include <complex>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "pmsense/rng.hpp"
#include "pmsense/waveform.hpp"

namespace pmsense::test {

inline IqTrace random_trace(std::size_t n, double rate, std::uint64_t seed, double t0 = 0.0) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<cdouble> v(n);
  for (auto& x : v) x = {g(rng), g(rng)};
  return IqTrace(std::move(v), rate, t0);
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Fresh directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("pmsense_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace pmsense::test
