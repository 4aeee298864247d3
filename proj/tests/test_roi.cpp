#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "maneuver/ingest/synth.hpp"
#include "maneuver/roi/roi.hpp"

using namespace maneuver;

namespace {

// Reference crop written directly from the documented convention, pixel by
// pixel, with no shared code beyond the rounding helper.
ImageF reference_crop(const ImageU8& frame, const SquareBox& box) {
  const int64_t side = std::llround(box.side);
  const int64_t x0 = std::llround(box.center.x - (double(side) - 1.0) / 2.0);
  const int64_t y0 = std::llround(box.center.y - (double(side) - 1.0) / 2.0);
  ImageF out(static_cast<int>(side), static_cast<int>(side), 3);
  for (int64_t i = 0; i < side; ++i) {
    for (int64_t j = 0; j < side; ++j) {
      for (int c = 0; c < 3; ++c) {
        const int64_t sx = x0 + j, sy = y0 + i;
        float v = 0.f;
        if (sx >= 0 && sx < frame.width && sy >= 0 && sy < frame.height) {
          v = frame.at(static_cast<int>(sy), static_cast<int>(sx), c) / 255.0f;
        }
        out.at(static_cast<int>(i), static_cast<int>(j), c) = v;
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("square_bbox takes the longer extent of the bounding box") {
  const std::vector<Point2d> rect = {{10.0, 20.0}, {50.0, 20.0}, {50.0, 44.0}, {10.0, 44.0}};
  const SquareBox box = square_bbox(rect);
  CHECK(box.center.x == 30.0);
  CHECK(box.center.y == 32.0);
  CHECK(box.side == 40.0);  // width 40 beats height 24

  CHECK_THROWS_AS(square_bbox({{1, 1}, {2, 2}}), Error);
  CHECK_THROWS_WITH(square_bbox({{3, 3}, {3, 3}, {3, 3}}), Catch::Matchers::ContainsSubstring("degenerate"));
}

TEST_CASE("square_bbox agrees with a brute-force extent scan") {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Point2d> poly;
    const int n = 3 + static_cast<int>(rng.uniform_int(9));
    for (int i = 0; i < n; ++i) poly.push_back({rng.uniform(-50, 150), rng.uniform(-20, 90)});
    double mnx = poly[0].x, mxx = poly[0].x, mny = poly[0].y, mxy = poly[0].y;
    for (const auto& p : poly) {
      mnx = std::min(mnx, p.x);
      mxx = std::max(mxx, p.x);
      mny = std::min(mny, p.y);
      mxy = std::max(mxy, p.y);
    }
    const SquareBox box = square_bbox(poly);
    CHECK(box.side == std::max(mxx - mnx, mxy - mny));
    CHECK(box.center.x == Catch::Approx((mnx + mxx) / 2).margin(1e-12));
    CHECK(box.center.y == Catch::Approx((mny + mxy) / 2).margin(1e-12));
  }
}

TEST_CASE("scale_box preserves the center and scales the area exactly") {
  Rng rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    SquareBox box{{rng.uniform(0, 200), rng.uniform(0, 200)}, rng.uniform(5, 80)};
    const SquareBox s1 = scale_box(box, RoiScale::x1);
    CHECK(s1.side == box.side);
    const SquareBox s2 = scale_box(box, RoiScale::x2);
    const SquareBox s4 = scale_box(box, RoiScale::x4);
    // Powers of two are exact in floating point.
    CHECK((s2.side * s2.side) / (box.side * box.side) == 4.0);
    CHECK((s4.side * s4.side) / (box.side * box.side) == 16.0);
    const SquareBox s3 = scale_box(box, RoiScale::x3);
    CHECK((s3.side * s3.side) / (box.side * box.side) == Catch::Approx(9.0).epsilon(1e-12));
    CHECK(s4.center.x == box.center.x);
    CHECK(s4.center.y == box.center.y);
  }
  CHECK_THROWS_AS(roi_scale_from_int(5), Error);
  CHECK_THROWS_AS(roi_scale_from_int(0), Error);
}

TEST_CASE("crop_pad matches the per-pixel reference on random boxes") {
  Rng rng(23);
  const ImageU8 frame = testutil::random_image(rng, 120, 90);
  for (int trial = 0; trial < 200; ++trial) {
    SquareBox box{{rng.uniform(-30, 150), rng.uniform(-30, 120)}, rng.uniform(3, 70)};
    const Patch patch = crop_pad(frame, box);
    const ImageF ref = reference_crop(frame, box);
    REQUIRE(patch.image.width == ref.width);
    REQUIRE(patch.image.data == ref.data);
  }
}

TEST_CASE("box at the origin covers exactly one quadrant of the patch") {
  Rng rng(24);
  const ImageU8 frame = testutil::random_image(rng, 100, 100);
  const Patch patch = crop_pad(frame, SquareBox{{0.0, 0.0}, 10.0});
  REQUIRE(patch.image.width == 10);
  int nonzero = 0;
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) {
      bool any = false;
      for (int c = 0; c < 3; ++c) any = any || patch.image.at(i, j, c) != 0.f;
      if (any) {
        ++nonzero;
        CHECK(i >= 5);
        CHECK(j >= 5);
      }
    }
  }
  CHECK(nonzero == 25);
}

TEST_CASE("box entirely outside the image yields an all-zero patch") {
  Rng rng(25);
  const ImageU8 frame = testutil::random_image(rng, 50, 50);
  const Patch patch = crop_pad(frame, SquareBox{{-100.0, -100.0}, 20.0});
  for (float v : patch.image.data) CHECK(v == 0.f);
}

TEST_CASE("crop geometry properties hold for randomized boxes") {
  Rng rng(26);
  const ImageU8 frame = testutil::random_image(rng, 140, 100);
  for (int trial = 0; trial < 300; ++trial) {
    const SquareBox box{{rng.uniform(-20, 160), rng.uniform(-20, 120)}, rng.uniform(4, 60)};
    const Patch patch = crop_pad(frame, box);
    const PixelRect r = box_pixel_rect(box);

    // Patch center stays within a pixel of the box center.
    const double cx = r.x0 + (double(r.w) - 1.0) / 2.0;
    const double cy = r.y0 + (double(r.h) - 1.0) / 2.0;
    CHECK(std::abs(cx - box.center.x) <= 1.0);
    CHECK(std::abs(cy - box.center.y) <= 1.0);

    // Zero pixels are exactly the set difference between box and image.
    for (int64_t i = 0; i < r.h; ++i) {
      for (int64_t j = 0; j < r.w; ++j) {
        const int64_t sx = r.x0 + j, sy = r.y0 + i;
        const bool inside = sx >= 0 && sx < frame.width && sy >= 0 && sy < frame.height;
        bool any = false;
        for (int c = 0; c < 3; ++c) {
          any = any || patch.image.at(static_cast<int>(i), static_cast<int>(j), c) != 0.f;
        }
        CHECK(any == inside);  // frame values are >= 10/255, never zero
      }
    }
  }
}

TEST_CASE("resize is identity at equal size and preserves the value range") {
  Rng rng(27);
  ImageF img(20, 20, 3);
  for (auto& v : img.data) v = static_cast<float>(rng.uniform());

  const ImageF same = resize_bilinear(img, 20);
  CHECK(same.data == img.data);

  const ImageF up = resize_bilinear(img, 112);
  float mn = 1e9f, mx = -1e9f;
  for (float v : img.data) {
    mn = std::min(mn, v);
    mx = std::max(mx, v);
  }
  for (float v : up.data) {
    CHECK(v >= mn - 1e-6f);
    CHECK(v <= mx + 1e-6f);
  }

  ImageF constant(13, 13, 3);
  for (auto& v : constant.data) v = 0.375f;
  for (float v : resize_bilinear(constant, 112).data) CHECK(v == Catch::Approx(0.375f).margin(1e-6));

  CHECK_THROWS_AS(resize_bilinear(img, 4), Error);
}

TEST_CASE("checkerboard upsampling stays mean-balanced") {
  ImageF board(2, 2, 1);
  board.at(0, 0, 0) = 0.f;
  board.at(0, 1, 0) = 1.f;
  board.at(1, 0, 0) = 1.f;
  board.at(1, 1, 0) = 0.f;
  const ImageF up = resize_bilinear(board, 64);
  double mean = 0;
  for (float v : up.data) mean += v;
  mean /= up.data.size();
  CHECK(mean == Catch::Approx(0.5).margin(1e-6));
}

TEST_CASE("roi sequence tracks the vehicle and reports gaps") {
  SynthConfig cfg;
  cfg.height = 164;
  cfg.nlc_count = 1;
  cfg.llc_count = 0;
  cfg.rlc_count = 0;
  Recording rec = generate_synthetic(cfg, 31);
  const int64_t vid = rec.tracks.begin()->first;

  std::vector<int64_t> idx = {10, 11, 12, 13};
  const auto patches = extract_roi_sequence(rec, vid, idx, RoiScale::x2, "rec0");
  REQUIRE(patches.size() == 4);
  for (size_t i = 0; i < patches.size(); ++i) {
    const auto* obs = rec.track(vid).find(idx[i]);
    const SquareBox want = scale_box(square_bbox(obs->contour), RoiScale::x2);
    CHECK(patches[i].box.center.x == want.center.x);
    CHECK(patches[i].box.side == want.side);
    CHECK(patches[i].frame_index == idx[i]);
    CHECK(patches[i].scale == 2);
    const PixelRect r = box_pixel_rect(want);
    CHECK(std::abs(r.x0 + (double(r.w) - 1) / 2.0 - want.center.x) <= 1.0);
  }

  // A frame the vehicle was never observed at is a hard error.
  Recording gappy = rec;
  TrackedVehicle& t = gappy.tracks.begin()->second;
  t.observations.erase(t.observations.begin() + 12);
  CHECK_THROWS_WITH(extract_roi_sequence(gappy, vid, idx, RoiScale::x2),
                    Catch::Matchers::ContainsSubstring("track gap"));
}

TEST_CASE("vehicle near the left edge pads the wide crop with zero columns") {
  Rng rng(28);
  std::vector<ImageU8> frames = {testutil::random_image(rng, 200, 120)};
  Recording rec;
  rec.frames = std::make_shared<MemoryFrameSource>(frames);
  rec.frame_rate = 10.0;
  TrackedVehicle v;
  v.vehicle_id = 0;
  // 40x30 vehicle hugging the left edge: center x = 20.
  v.observations.push_back({0, {{0.0, 60.0}, {40.0, 60.0}, {40.0, 90.0}, {0.0, 90.0}}});
  rec.tracks[0] = v;

  const auto patches = extract_roi_sequence(rec, 0, {0}, RoiScale::x4);
  const ImageF& img = patches[0].image;
  REQUIRE(img.width == 160);
  // Box spans x in [-60, 100): the first 60 columns are padding.
  for (int j = 0; j < 60; ++j) {
    for (int i = 0; i < img.height; ++i) {
      for (int c = 0; c < 3; ++c) CHECK(img.at(i, j, c) == 0.f);
    }
  }
  bool any = false;
  for (int i = 0; i < img.height; ++i) {
    any = any || img.at(i, 61, 0) != 0.f;
  }
  CHECK(any);
}

TEST_CASE("static scene yields identical patches per frame") {
  SynthConfig cfg;
  cfg.height = 164;
  cfg.nlc_count = 1;
  cfg.llc_count = 0;
  cfg.rlc_count = 0;
  cfg.scroll_speed_min = cfg.scroll_speed_max = 0.0;
  cfg.nlc_amplitude_min = cfg.nlc_amplitude_max = 0.0;
  cfg.frame_count = 8;
  Recording rec = generate_synthetic(cfg, 33);
  const int64_t vid = rec.tracks.begin()->first;
  const auto patches = extract_roi_sequence(rec, vid, {0, 3, 7}, RoiScale::x2);
  CHECK(patches[0].image.data == patches[1].image.data);
  CHECK(patches[0].image.data == patches[2].image.data);
}

TEST_CASE("larger scales add context around the same center") {
  // Integer-aligned static scene: the central crop of each wider patch is
  // pixel-identical to the x1 patch, so correlation is maximal.
  SynthConfig cfg;
  cfg.height = 164;
  cfg.nlc_count = 1;
  cfg.llc_count = 0;
  cfg.rlc_count = 0;
  cfg.scroll_speed_min = cfg.scroll_speed_max = 0.0;
  cfg.nlc_amplitude_min = cfg.nlc_amplitude_max = 0.0;
  cfg.start_jitter = 0.0;
  cfg.frame_count = 4;
  Recording rec = generate_synthetic(cfg, 34);
  const int64_t vid = rec.tracks.begin()->first;

  const Patch p1 = extract_roi_sequence(rec, vid, {0}, RoiScale::x1)[0];
  const PixelRect r1 = box_pixel_rect(p1.box);
  for (RoiScale s : {RoiScale::x2, RoiScale::x3, RoiScale::x4}) {
    const Patch pk = extract_roi_sequence(rec, vid, {0}, s)[0];
    const PixelRect rk = box_pixel_rect(pk.box);
    // The wide patch contains the x1 patch on the same integer pixel grid.
    const int off_i = static_cast<int>(r1.y0 - rk.y0);
    const int off_j = static_cast<int>(r1.x0 - rk.x0);
    std::vector<double> a, b;
    for (int i = 0; i < p1.image.height; ++i) {
      for (int j = 0; j < p1.image.width; ++j) {
        a.push_back(p1.image.at(i, j, 0));
        b.push_back(pk.image.at(i + off_i, j + off_j, 0));
      }
    }
    CHECK(testutil::pearson(a, b) > 0.99);
  }
}
