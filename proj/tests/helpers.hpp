#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "maneuver/core/image.hpp"
#include "maneuver/core/rng.hpp"
#include "maneuver/ingest/types.hpp"

namespace testutil {

using maneuver::ImageU8;
using maneuver::Rng;

// Random image with all values strictly positive, so zero pixels in crops
// can only come from padding.
inline ImageU8 random_image(Rng& rng, int w, int h, uint8_t lo = 10) {
  ImageU8 img(w, h, 3);
  for (auto& v : img.data) v = static_cast<uint8_t>(lo + rng.uniform_int(256 - lo));
  return img;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const size_t n = a.size();
  double ma = 0, mb = 0;
  for (size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double num = 0, da = 0, db = 0;
  for (size_t i = 0; i < n; ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    da += (a[i] - ma) * (a[i] - ma);
    db += (b[i] - mb) * (b[i] - mb);
  }
  if (da == 0 || db == 0) return 0.0;
  return num / std::sqrt(da * db);
}

// Unique scratch directory under the build tree.
inline std::string scratch_dir(const std::string& tag) {
  static int counter = 0;
  const std::string dir = "test_scratch/" + tag + "_" + std::to_string(counter++);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil
