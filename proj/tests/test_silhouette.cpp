#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include <opencv2/imgproc.hpp>

#include "realgait/rng.hpp"
#include "realgait/silhouette.hpp"

using namespace realgait;

namespace {

std::vector<BoundingBox> two_keyframes() {
  return {{100.0, 50.0, 40.0, 110.0, 0}, {110.0, 50.0, 40.0, 110.0, 5}};
}

// Static per-pixel noise background in [0, 120).
cv::Mat noise_background(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  cv::Mat bg(rows, cols, CV_8UC3);
  for (int y = 0; y < rows; ++y)
    for (int x = 0; x < cols; ++x)
      for (int c = 0; c < 3; ++c)
        bg.at<cv::Vec3b>(y, x)[c] =
            static_cast<uchar>(rng.uniform_int(0, 119));
  return bg;
}

cv::Rect square_at(int t, int w, int h, int rows, int cols) {
  // Enters from the left at 2 px/frame; fully inside well before frame 50.
  const int xc = -w + 2 * t;
  const cv::Rect want(xc - w / 2, rows / 2 - h / 2, w, h);
  return want & cv::Rect(0, 0, cols, rows);
}

std::vector<cv::Mat> square_video(int frames, int rows, int cols,
                                  int w, int h) {
  const cv::Mat bg = noise_background(rows, cols, 77);
  std::vector<cv::Mat> video;
  for (int t = 0; t < frames; ++t) {
    cv::Mat frame = bg.clone();
    frame(square_at(t, w, h, rows, cols)).setTo(cv::Scalar(255, 255, 255));
    video.push_back(frame);
  }
  return video;
}

double mask_iou(const cv::Mat& mask, const cv::Rect& truth) {
  long inter = 0, uni = 0;
  for (int y = 0; y < mask.rows; ++y)
    for (int x = 0; x < mask.cols; ++x) {
      const bool fg = mask.at<uchar>(y, x) > 0;
      const bool in = truth.contains({x, y});
      inter += fg && in;
      uni += fg || in;
    }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

TEST_CASE("interpolate_boxes: keyframe queries return the keyframe") {
  const auto kfs = two_keyframes();
  const auto box = interpolate_boxes(kfs, 0);
  CHECK(box.x_center == doctest::Approx(100.0));
  const auto last = interpolate_boxes(kfs, 5);
  CHECK(last.x_center == doctest::Approx(110.0));
}

TEST_CASE("interpolate_boxes: linear between keyframes") {
  const auto box = interpolate_boxes(two_keyframes(), 2);
  CHECK(box.x_center == doctest::Approx(104.0));
  CHECK(box.y_center == doctest::Approx(50.0));
  CHECK(box.width == doctest::Approx(40.0));
}

TEST_CASE("interpolate_boxes: outside the keyframe span is an error") {
  CHECK_THROWS_WITH_AS(interpolate_boxes(two_keyframes(), 7),
                       doctest::Contains("outside"), std::out_of_range);
  CHECK_THROWS(interpolate_boxes(two_keyframes(), -1));
}

TEST_CASE("interpolate_boxes: monotone between monotone keyframes") {
  std::vector<BoundingBox> kfs = {{0.0, 0.0, 10.0, 10.0, 0},
                                  {20.0, 5.0, 12.0, 14.0, 5},
                                  {50.0, 9.0, 20.0, 20.0, 10}};
  double prev = -1.0;
  for (int f = 0; f <= 10; ++f) {
    const auto box = interpolate_boxes(kfs, f);
    CHECK(box.x_center > prev);
    prev = box.x_center;
  }
}

TEST_CASE("expand_box: stated factors, center unchanged") {
  BoundingBox box{100.0, 50.0, 40.0, 110.0, 3};
  const auto out = expand_box(box);
  CHECK(out.width == doctest::Approx(54.0));
  CHECK(out.height == doctest::Approx(121.0));
  CHECK(out.x_center == doctest::Approx(100.0));
  CHECK(out.y_center == doctest::Approx(50.0));
  CHECK(out.frame_index == 3);
}

TEST_CASE("crop: box fully inside returns the exact sub-image") {
  cv::Mat frame(60, 80, CV_8UC1);
  cv::randu(frame, 0, 255);
  BoundingBox box{40.0, 30.0, 20.0, 10.0, 0};
  const cv::Mat out = crop(frame, box);
  REQUIRE(out.rows == 10);
  REQUIRE(out.cols == 20);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 20; ++x)
      CHECK(out.at<uchar>(y, x) == frame.at<uchar>(25 + y, 30 + x));
}

TEST_CASE("crop: box over the top edge gets zero rows prepended") {
  cv::Mat frame = cv::Mat::ones(40, 40, CV_8UC1) * 200;
  BoundingBox box{20.0, 0.0, 10.0, 20.0, 0};  // 10 rows above the frame
  const cv::Mat out = crop(frame, box);
  REQUIRE(out.rows == 20);
  for (int x = 0; x < 10; ++x) {
    CHECK(out.at<uchar>(0, x) == 0);
    CHECK(out.at<uchar>(9, x) == 0);
    CHECK(out.at<uchar>(10, x) == 200);
  }
}

TEST_CASE("crop: box fully outside is an error") {
  cv::Mat frame = cv::Mat::zeros(40, 40, CV_8UC1);
  BoundingBox box{200.0, 200.0, 10.0, 10.0, 0};
  CHECK_THROWS(crop(frame, box));
}

TEST_CASE("normalize_silhouette: solid 50x20 block scales to 224x90 centered") {
  cv::Mat mask = cv::Mat::ones(50, 20, CV_8UC1) * 255;
  const auto frame = normalize_silhouette(mask);
  REQUIRE(frame.has_value());
  // 20 * 224/50 = 89.6, round-half-up -> 90; median column at 112 means
  // columns [68, 158).
  for (int y = 0; y < kSilhouetteSize; ++y)
    for (int x = 0; x < kSilhouetteSize; ++x) {
      const bool expect = x >= 68 && x < 158;
      CHECK(frame->grid[static_cast<std::size_t>(y) * kSilhouetteSize + x] ==
            (expect ? 1 : 0));
    }
}

TEST_CASE("normalize_silhouette: empty mask is dropped") {
  cv::Mat mask = cv::Mat::zeros(30, 30, CV_8UC1);
  CHECK_FALSE(normalize_silhouette(mask).has_value());
}

TEST_CASE("normalize_silhouette: output satisfies the frame invariants") {
  Rng rng(19);
  for (int trial = 0; trial < 30; ++trial) {
    const int h = static_cast<int>(rng.uniform_int(20, 200));
    const int w = static_cast<int>(rng.uniform_int(10, 80));
    const int y0 = static_cast<int>(rng.uniform_int(0, 20));
    const int x0 = static_cast<int>(rng.uniform_int(0, 20));
    cv::Mat mask = cv::Mat::zeros(y0 + h + 10, x0 + w + 10, CV_8UC1);
    mask(cv::Rect(x0, y0, w, h)).setTo(255);
    const auto frame = normalize_silhouette(mask);
    REQUIRE(frame.has_value());

    // Rows 0 and 223 touch foreground.
    bool top = false, bottom = false;
    for (int x = 0; x < kSilhouetteSize; ++x) {
      top |= frame->grid[static_cast<std::size_t>(x)] != 0;
      bottom |= frame->grid[static_cast<std::size_t>(kSilhouetteSize - 1) *
                                kSilhouetteSize +
                            x] != 0;
    }
    CHECK(top);
    CHECK(bottom);

    // Median column within one pixel of the canvas center.
    long total = 0, cum = 0;
    std::vector<long> cols(kSilhouetteSize, 0);
    for (int y = 0; y < kSilhouetteSize; ++y)
      for (int x = 0; x < kSilhouetteSize; ++x)
        if (frame->grid[static_cast<std::size_t>(y) * kSilhouetteSize + x]) {
          ++cols[static_cast<std::size_t>(x)];
          ++total;
        }
    int median = kSilhouetteSize - 1;
    for (int x = 0; x < kSilhouetteSize; ++x) {
      cum += cols[static_cast<std::size_t>(x)];
      if (2 * cum >= total) {
        median = x;
        break;
      }
    }
    CHECK(std::abs(median - kCenterColumn) <= 1);
  }
}

TEST_CASE("normalize_silhouette: idempotent on a normalized frame") {
  cv::Mat mask = cv::Mat::zeros(100, 60, CV_8UC1);
  mask(cv::Rect(15, 10, 30, 80)).setTo(255);
  const auto once = normalize_silhouette(mask);
  REQUIRE(once.has_value());
  cv::Mat as_image(kSilhouetteSize, kSilhouetteSize, CV_8UC1);
  for (int y = 0; y < kSilhouetteSize; ++y)
    for (int x = 0; x < kSilhouetteSize; ++x)
      as_image.at<uchar>(y, x) =
          once->grid[static_cast<std::size_t>(y) * kSilhouetteSize + x] ? 255
                                                                        : 0;
  const auto twice = normalize_silhouette(as_image);
  REQUIRE(twice.has_value());
  CHECK(once->grid == twice->grid);
}

TEST_CASE("compose_variant: binary/subtracted equals the mask pixelwise") {
  Rng rng(23);
  cv::Mat color(20, 30, CV_8UC3);
  cv::randu(color, 0, 255);
  cv::Mat mask = cv::Mat::zeros(20, 30, CV_8UC1);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 30; ++x)
      if (rng.uniform() < 0.4) mask.at<uchar>(y, x) = 255;
  InputVariant variant;
  variant.pedestrian = PedestrianMode::binary;
  variant.background = BackgroundMode::subtracted;
  const cv::Mat out = compose_variant(color, mask, variant);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 30; ++x)
      CHECK((out.at<uchar>(y, x) > 0) == (mask.at<uchar>(y, x) > 0));
}

TEST_CASE("compose_variant: color/subtracted blacks out the background") {
  cv::Mat color(10, 10, CV_8UC3, cv::Scalar(10, 20, 30));
  cv::Mat mask = cv::Mat::zeros(10, 10, CV_8UC1);
  mask(cv::Rect(2, 2, 4, 4)).setTo(255);
  InputVariant variant;
  variant.pedestrian = PedestrianMode::color;
  variant.background = BackgroundMode::subtracted;
  const cv::Mat out = compose_variant(color, mask, variant);
  CHECK(out.at<cv::Vec3b>(0, 0) == cv::Vec3b(0, 0, 0));
  CHECK(out.at<cv::Vec3b>(3, 3) == cv::Vec3b(10, 20, 30));
}

TEST_CASE("compose_variant: binary pedestrian over color background") {
  cv::Mat color(10, 10, CV_8UC3, cv::Scalar(10, 20, 30));
  cv::Mat mask = cv::Mat::zeros(10, 10, CV_8UC1);
  mask(cv::Rect(2, 2, 4, 4)).setTo(255);
  InputVariant variant;
  variant.pedestrian = PedestrianMode::binary;
  variant.background = BackgroundMode::color;
  const cv::Mat out = compose_variant(color, mask, variant);
  CHECK(out.at<cv::Vec3b>(0, 0) == cv::Vec3b(10, 20, 30));
  CHECK(out.at<cv::Vec3b>(3, 3) == cv::Vec3b(255, 255, 255));
}

TEST_CASE("compose_variant: dimension mismatch is an error") {
  cv::Mat color(10, 10, CV_8UC3);
  cv::Mat mask(12, 10, CV_8UC1);
  CHECK_THROWS(compose_variant(color, mask, {}));
}

TEST_CASE("quantize_gray: m=2 maps dark and bright apart") {
  cv::Mat gray(1, 2, CV_8UC1);
  gray.at<uchar>(0, 0) = 10;
  gray.at<uchar>(0, 1) = 200;
  const cv::Mat out = quantize_gray(gray, 2);
  CHECK(out.at<uchar>(0, 0) == 0);
  CHECK(out.at<uchar>(0, 1) == 255);
}

TEST_CASE("quantize_gray: idempotent for random images and bin counts") {
  Rng rng(29);
  for (int bins : {2, 3, 5, 8, 16, 64}) {
    cv::Mat gray(17, 13, CV_8UC1);
    for (int y = 0; y < gray.rows; ++y)
      for (int x = 0; x < gray.cols; ++x)
        gray.at<uchar>(y, x) = static_cast<uchar>(rng.uniform_int(0, 255));
    const cv::Mat once = quantize_gray(gray, bins);
    const cv::Mat twice = quantize_gray(once, bins);
    CHECK(cv::countNonZero(once != twice) == 0);
    // Levels used stay within the bin count.
    std::set<int> levels;
    for (int y = 0; y < once.rows; ++y)
      for (int x = 0; x < once.cols; ++x)
        levels.insert(once.at<uchar>(y, x));
    CHECK(static_cast<int>(levels.size()) <= bins);
  }
  CHECK_THROWS(quantize_gray(cv::Mat(4, 4, CV_8UC1), 1));
}

TEST_CASE("gmm_subtract: moving square is recovered after warm-up") {
  const int rows = 120, cols = 320, w = 20, h = 40;
  const auto video = square_video(100, rows, cols, w, h);
  const auto masks = gmm_subtract(video);
  REQUIRE(masks.size() == 100);
  for (int t = 50; t < 100; ++t) {
    const auto truth = square_at(t, w, h, rows, cols);
    CHECK(mask_iou(masks[static_cast<std::size_t>(t)], truth) >= 0.8);
  }
}

TEST_CASE("gmm_subtract: static video settles to all background") {
  const cv::Mat bg = noise_background(60, 80, 5);
  std::vector<cv::Mat> video(60, bg);
  const auto masks = gmm_subtract(video);
  for (std::size_t t = 50; t < 60; ++t) {
    const double fg_fraction =
        static_cast<double>(cv::countNonZero(masks[t])) / (60.0 * 80.0);
    CHECK(fg_fraction < 0.01);
  }
}

TEST_CASE("gmm_subtract: single frame yields a single mask") {
  const auto masks = gmm_subtract({noise_background(20, 20, 9)});
  REQUIRE(masks.size() == 1);
  CHECK(masks[0].rows == 20);
}

TEST_CASE("gmm_subtract: deterministic for identical inputs") {
  const auto video = square_video(60, 60, 120, 10, 20);
  const auto a = gmm_subtract(video);
  const auto b = gmm_subtract(video);
  for (std::size_t t = 0; t < a.size(); ++t)
    CHECK(cv::countNonZero(a[t] != b[t]) == 0);
}

TEST_CASE("gmm_subtract: empty input and size changes are errors") {
  CHECK_THROWS(gmm_subtract({}));
  std::vector<cv::Mat> video = {noise_background(20, 20, 1),
                                noise_background(30, 20, 1)};
  CHECK_THROWS(gmm_subtract(video));
}

TEST_CASE("silhouette sequence: save and load round trip") {
  SilhouetteSequence seq;
  seq.subject_id = "S1";
  seq.camera_id = 4;
  seq.video_id = "vtest";
  for (int i = 0; i < 3; ++i) {
    SilhouetteFrame f;
    f.frame_index = i * 5;
    f.traj_x = 10.0 * i;
    f.traj_y = 20.0 + i;
    f.grid.assign(
        static_cast<std::size_t>(kSilhouetteSize) * kSilhouetteSize, 0);
    for (int y = 0; y < 224; ++y)
      for (int x = 100; x < 130; ++x)
        f.grid[static_cast<std::size_t>(y) * kSilhouetteSize + x] = 1;
    seq.frames.push_back(std::move(f));
  }
  const auto dir = std::filesystem::temp_directory_path() / "rg_seq_test";
  std::filesystem::remove_all(dir);
  save_silhouette_sequence(seq, dir.string());
  const auto loaded = load_silhouette_sequence(dir.string());
  CHECK(loaded.subject_id == "S1");
  CHECK(loaded.camera_id == 4);
  REQUIRE(loaded.frames.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(loaded.frames[i].frame_index == seq.frames[i].frame_index);
    CHECK(loaded.frames[i].traj_x == doctest::Approx(seq.frames[i].traj_x));
    CHECK(loaded.frames[i].grid == seq.frames[i].grid);
  }
  std::filesystem::remove_all(dir);
}
