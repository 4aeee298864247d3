#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "maneuver/flow/flow.hpp"
#include "maneuver/ingest/synth.hpp"
#include "maneuver/roi/roi.hpp"

using namespace maneuver;

namespace {

// Textured single-channel image built from the synthetic noise basis.
ImageF noise_image(uint64_t seed, int w, int h, double shift_x = 0.0, double shift_y = 0.0) {
  ImageF img(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      img.at(y, x, 0) = static_cast<float>(
          0.2 + 0.6 * synth_detail::texture(seed, x + 0.5 + shift_x, y + 0.5 + shift_y, 7.0));
    }
  }
  return img;
}

// Mean displacement over the interior, skipping a border where the
// estimator lacks support.
std::pair<double, double> interior_mean(const FlowField& f, int margin) {
  double sx = 0, sy = 0;
  int64_t n = 0;
  for (int y = margin; y < f.height - margin; ++y) {
    for (int x = margin; x < f.width - margin; ++x) {
      sx += f.at(y, x, 0);
      sy += f.at(y, x, 1);
      ++n;
    }
  }
  return {sx / n, sy / n};
}

}  // namespace

TEST_CASE("identical frames produce near-zero flow") {
  const ImageF img = noise_image(77, 112, 112);
  const FlowField f = dense_flow(img, img);
  const auto [mx, my] = interior_mean(f, 8);
  CHECK(std::abs(mx) < 0.05);
  CHECK(std::abs(my) < 0.05);
}

TEST_CASE("known translations are recovered within a quarter pixel") {
  struct Case {
    double dx, dy;
  };
  for (const Case c : {Case{3, 0}, Case{-3, 0}, Case{0, 2}, Case{0, -3}, Case{2, 1}}) {
    // prev(x) = texture(x + d), next(x) = texture(x), so content at prev(x)
    // reappears at next(x + d): the flow convention under test.
    const ImageF prev = noise_image(501, 112, 112, c.dx, c.dy);
    const ImageF next = noise_image(501, 112, 112, 0.0, 0.0);
    const FlowField f = dense_flow(prev, next);
    const auto [mx, my] = interior_mean(f, 16);
    INFO("translation " << c.dx << "," << c.dy);
    CHECK(std::abs(mx - c.dx) <= 0.25);
    CHECK(std::abs(my - c.dy) <= 0.25);
  }
}

TEST_CASE("doubling the shift roughly doubles the response") {
  const ImageF base = noise_image(502, 112, 112);
  const ImageF s1 = noise_image(502, 112, 112, 1.5, 0.0);
  const ImageF s2 = noise_image(502, 112, 112, 3.0, 0.0);
  const auto m1 = interior_mean(dense_flow(s1, base), 16);
  const auto m2 = interior_mean(dense_flow(s2, base), 16);
  CHECK(std::abs(m2.first - 2.0 * m1.first) <= 0.3);
}

TEST_CASE("tracked-vehicle crops have low flow on the vehicle, high on the road") {
  SynthConfig cfg;
  cfg.height = 164;
  cfg.nlc_count = 1;
  cfg.llc_count = 0;
  cfg.rlc_count = 0;
  cfg.nlc_amplitude_max = 3.0;
  Recording rec = generate_synthetic(cfg, 55);
  const int64_t vid = rec.tracks.begin()->first;

  const auto patches = extract_roi_sequence(rec, vid, {40, 41}, RoiScale::x2);
  const ImageF a = to_grayscale(resize_bilinear(patches[0].image, 112));
  const ImageF b = to_grayscale(resize_bilinear(patches[1].image, 112));
  const FlowField f = dense_flow(a, b);

  // The 40x30 vehicle sits in the middle of the 80 px crop; after the
  // resize to 112 it spans roughly x in [28,84], y in [35,77]. Sample well
  // inside it (the estimator smooths across the silhouette edge) and well
  // outside it for the road.
  double veh = 0, bg = 0;
  int64_t veh_n = 0, bg_n = 0;
  for (int y = 8; y < 104; ++y) {
    for (int x = 8; x < 104; ++x) {
      const double mag = std::hypot(f.at(y, x, 0), f.at(y, x, 1));
      const bool on_vehicle = x >= 38 && x < 74 && y >= 44 && y < 68;
      const bool on_road = x < 24 || x >= 88 || y < 24 || y >= 88;
      if (on_vehicle) {
        veh += mag;
        ++veh_n;
      } else if (on_road) {
        bg += mag;
        ++bg_n;
      }
    }
  }
  veh /= veh_n;
  bg /= bg_n;
  INFO("vehicle mean " << veh << " background mean " << bg);
  CHECK(veh < bg);
  CHECK(veh < 0.5 * bg);  // clear separation, not a coin flip
}

TEST_CASE("flow input stacking clips, rescales and keeps channel order") {
  FlowField f1(9, 9), f2(9, 9);
  for (int y = 0; y < 9; ++y) {
    for (int x = 0; x < 9; ++x) {
      f1.at(y, x, 0) = 5.0f;
      f1.at(y, x, 1) = -40.0f;  // past the clip
      f2.at(y, x, 0) = -5.0f;
      f2.at(y, x, 1) = 20.0f;
    }
  }
  const FlowStack stack = flow_to_input({f1, f2}, 20.0f);
  REQUIRE(stack.data.shape == std::vector<int64_t>{4, 9, 9});
  CHECK(stack.pairs() == 2);
  CHECK(stack.data[0 * 81] == 0.25f);   // dx1
  CHECK(stack.data[1 * 81] == -1.0f);   // dy1 saturated
  CHECK(stack.data[2 * 81] == -0.25f);  // dx2
  CHECK(stack.data[3 * 81] == 1.0f);    // dy2 at the clip
  for (float v : stack.data.data) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }

  // Odd symmetry: negating the field negates the encoding exactly.
  FlowField neg(9, 9);
  for (size_t i = 0; i < neg.data.size(); ++i) neg.data[i] = -f1.data[i];
  const FlowStack sp = flow_to_input({f1}, 20.0f);
  const FlowStack sn = flow_to_input({neg}, 20.0f);
  for (size_t i = 0; i < sp.data.data.size(); ++i) CHECK(sn.data.data[i] == -sp.data.data[i]);

  const FlowStack zero = flow_to_input({FlowField(9, 9)}, 20.0f);
  for (float v : zero.data.data) CHECK(v == 0.0f);
}

TEST_CASE("flow input validation") {
  CHECK_THROWS_AS(flow_to_input({}, 20.0f), Error);
  CHECK_THROWS_AS(flow_to_input({FlowField(9, 9)}, 0.0f), Error);
  FlowField small(9, 9), other(8, 8);
  CHECK_THROWS_AS(flow_to_input({small, other}, 20.0f), Error);
}

TEST_CASE("dense_flow validates its inputs") {
  ImageF rgb(32, 32, 3);
  ImageF gray(32, 32, 1);
  ImageF smaller(16, 16, 1);
  CHECK_THROWS_WITH(dense_flow(rgb, rgb), Catch::Matchers::ContainsSubstring("single-channel"));
  CHECK_THROWS_WITH(dense_flow(gray, smaller), Catch::Matchers::ContainsSubstring("differ"));
}
