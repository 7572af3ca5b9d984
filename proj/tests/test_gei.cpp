#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "realgait/gei.hpp"
#include "realgait/rng.hpp"

using namespace realgait;

namespace {

SilhouetteFrame make_frame(int frame_index, int y0, int x0, int h, int w) {
  SilhouetteFrame f;
  f.frame_index = frame_index;
  f.grid.assign(static_cast<std::size_t>(kSilhouetteSize) * kSilhouetteSize, 0);
  for (int y = y0; y < y0 + h; ++y)
    for (int x = x0; x < x0 + w; ++x)
      f.grid[static_cast<std::size_t>(y) * kSilhouetteSize + x] = 1;
  return f;
}

SilhouetteFrame random_frame(int frame_index, Rng& rng) {
  SilhouetteFrame f;
  f.frame_index = frame_index;
  f.grid.resize(static_cast<std::size_t>(kSilhouetteSize) * kSilhouetteSize);
  for (auto& v : f.grid) v = rng.uniform() < 0.3 ? 1 : 0;
  return f;
}

SilhouetteSequence make_sequence(std::vector<SilhouetteFrame> frames) {
  SilhouetteSequence seq;
  seq.subject_id = "S";
  seq.camera_id = 1;
  seq.video_id = "v";
  seq.frames = std::move(frames);
  return seq;
}

}  // namespace

TEST_CASE("gei_full: identical frames reproduce the frame") {
  const auto frame = make_frame(0, 10, 20, 30, 40);
  std::vector<SilhouetteFrame> frames;
  for (int i = 0; i < 5; ++i) {
    auto f = frame;
    f.frame_index = i;
    frames.push_back(f);
  }
  const auto gei = gei_full(make_sequence(frames));
  CHECK(gei.kind == GeiKind::full);
  CHECK(gei.source_frames.size() == 5);
  for (std::size_t i = 0; i < gei.grid.size(); ++i)
    CHECK(gei.grid[i] == doctest::Approx(static_cast<float>(frame.grid[i])));
}

TEST_CASE("gei_full: ones and zeros average to one half") {
  SilhouetteFrame ones;
  ones.frame_index = 0;
  ones.grid.assign(static_cast<std::size_t>(kSilhouetteSize) * kSilhouetteSize, 1);
  SilhouetteFrame zeros;
  zeros.frame_index = 1;
  zeros.grid.assign(static_cast<std::size_t>(kSilhouetteSize) * kSilhouetteSize, 0);
  const auto gei = gei_full(make_sequence({ones, zeros}));
  for (float v : gei.grid) CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("gei_full: random sequence matches the brute-force mean oracle") {
  Rng rng(3);
  std::vector<SilhouetteFrame> frames;
  for (int i = 0; i < 10; ++i) frames.push_back(random_frame(i, rng));
  const auto seq = make_sequence(frames);
  const auto gei = gei_full(seq);
  for (std::size_t cell = 0; cell < gei.grid.size(); ++cell) {
    double acc = 0.0;
    for (const auto& f : seq.frames) acc += f.grid[cell];
    CHECK(std::abs(gei.grid[cell] - acc / 10.0) < 1e-6);
  }
}

TEST_CASE("gei_full: empty sequence is an error") {
  CHECK_THROWS(gei_full(make_sequence({})));
}

TEST_CASE("gei_cluster: two separable patterns split into their means") {
  // 7 look-alikes around each of two disjoint rectangles.
  std::vector<SilhouetteFrame> frames;
  for (int i = 0; i < 7; ++i)
    frames.push_back(make_frame(i, 10 + (i % 2), 10, 40, 30));
  for (int i = 0; i < 7; ++i)
    frames.push_back(make_frame(7 + i, 150 + (i % 2), 150, 40, 30));
  const auto seq = make_sequence(frames);

  ClusterConfig cfg;
  cfg.k = 2;
  cfg.seed = 11;
  const auto geis = gei_cluster(seq, cfg);
  REQUIRE(geis.size() == 2);

  // Partition property: source frames are disjoint and cover the sequence.
  std::set<int> seen;
  for (const auto& gei : geis) {
    CHECK(gei.source_frames.size() == 7);
    for (int f : gei.source_frames) CHECK(seen.insert(f).second);
  }
  CHECK(seen.size() == 14);

  // Nearest-centroid oracle: each cluster holds one pattern's frames.
  for (const auto& gei : geis) {
    const bool first_pattern = gei.source_frames.front() < 7;
    for (int f : gei.source_frames) CHECK((f < 7) == first_pattern);
    // The cluster mean equals the mean of its 7 look-alikes.
    std::vector<double> mean(gei.grid.size(), 0.0);
    for (int f : gei.source_frames)
      for (std::size_t i = 0; i < mean.size(); ++i)
        mean[i] += seq.frames[static_cast<std::size_t>(f)].grid[i];
    for (std::size_t i = 0; i < mean.size(); ++i)
      CHECK(std::abs(gei.grid[i] - mean[i] / 7.0) < 1e-6);
  }
}

TEST_CASE("gei_cluster: as many frames as clusters yields singletons") {
  std::vector<SilhouetteFrame> frames;
  for (int i = 0; i < 4; ++i)
    frames.push_back(make_frame(i, 20 + 40 * i, 20 + 40 * i, 20, 20));
  ClusterConfig cfg;
  cfg.k = 4;
  cfg.seed = 5;
  const auto geis = gei_cluster(make_sequence(frames), cfg);
  REQUIRE(geis.size() == 4);
  for (const auto& gei : geis) {
    REQUIRE(gei.source_frames.size() == 1);
    const auto& f = frames[static_cast<std::size_t>(gei.source_frames[0])];
    for (std::size_t i = 0; i < gei.grid.size(); ++i)
      CHECK(gei.grid[i] == doctest::Approx(static_cast<float>(f.grid[i])));
  }
}

TEST_CASE("gei_cluster: fixed seed is bit-exact reproducible") {
  Rng rng(7);
  std::vector<SilhouetteFrame> frames;
  for (int i = 0; i < 20; ++i) frames.push_back(random_frame(i, rng));
  const auto seq = make_sequence(frames);
  ClusterConfig cfg;
  cfg.k = 7;
  cfg.seed = 42;
  const auto a = gei_cluster(seq, cfg);
  const auto b = gei_cluster(seq, cfg);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].source_frames == b[i].source_frames);
    CHECK(a[i].grid == b[i].grid);
  }
}

TEST_CASE("gei_cluster: fewer frames than clusters is an error") {
  std::vector<SilhouetteFrame> frames = {make_frame(0, 10, 10, 20, 20)};
  ClusterConfig cfg;
  cfg.k = 7;
  CHECK_THROWS(gei_cluster(make_sequence(frames), cfg));
}

namespace {

// Independent total-least-squares SSE for the split-enumeration oracle.
double tls_sse(const std::vector<std::pair<double, double>>& pts, int b, int e) {
  const int n = e - b;
  double mx = 0, my = 0;
  for (int i = b; i < e; ++i) {
    mx += pts[static_cast<std::size_t>(i)].first;
    my += pts[static_cast<std::size_t>(i)].second;
  }
  mx /= n;
  my /= n;
  double cxx = 0, cyy = 0, cxy = 0;
  for (int i = b; i < e; ++i) {
    const double dx = pts[static_cast<std::size_t>(i)].first - mx;
    const double dy = pts[static_cast<std::size_t>(i)].second - my;
    cxx += dx * dx;
    cyy += dy * dy;
    cxy += dx * dy;
  }
  const double tr = cxx + cyy;
  const double det = cxx * cyy - cxy * cxy;
  return tr / 2.0 - std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
}

}  // namespace

TEST_CASE("segment_trajectory: collinear points give a single zero-SSE segment") {
  std::vector<std::pair<double, double>> pts;
  for (int i = 0; i < 20; ++i) pts.push_back({3.0 * i + 1.0, 2.0 * i - 5.0});
  const auto segments = segment_trajectory(pts, {200.0, 5});
  REQUIRE(segments.size() == 1);
  CHECK(segments[0].begin == 0);
  CHECK(segments[0].end == 20);
  CHECK(segments[0].sse == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("segment_trajectory: vertical runs are fitted exactly") {
  std::vector<std::pair<double, double>> pts;
  for (int i = 0; i < 10; ++i) pts.push_back({4.0, 1.0 * i});
  const auto segments = segment_trajectory(pts, {200.0, 5});
  REQUIRE(segments.size() == 1);
  CHECK(segments[0].sse == doctest::Approx(0.0));
  CHECK(std::abs(segments[0].dir_y) == doctest::Approx(1.0));
}

TEST_CASE("segment_trajectory: L corner splits exactly at the corner") {
  // Horizontal run then vertical run, 10 points each. The vertical line is
  // offset so the corner point fits only the first run and the optimal
  // split is unique.
  std::vector<std::pair<double, double>> pts;
  for (int i = 0; i < 10; ++i) pts.push_back({static_cast<double>(i), 0.0});
  for (int i = 1; i <= 10; ++i) pts.push_back({10.0, static_cast<double>(i)});
  const PiecewiseConfig cfg{1.0, 5};
  const auto segments = segment_trajectory(pts, cfg);
  REQUIRE(segments.size() == 2);
  CHECK(segments[0].begin == 0);
  CHECK(segments[1].end == 20);
  CHECK(segments[0].end == segments[1].begin);

  // Enumeration oracle over all legal 2-segment splits plus the 1-segment
  // option: the DP result must attain the best total cost.
  double best = tls_sse(pts, 0, 20) + cfg.penalty;
  int best_split = -1;
  for (int split = cfg.min_segment_len; split + cfg.min_segment_len <= 20;
       ++split) {
    const double cost =
        tls_sse(pts, 0, split) + tls_sse(pts, split, 20) + 2 * cfg.penalty;
    if (cost < best) {
      best = cost;
      best_split = split;
    }
  }
  CHECK(best_split == 10);
  CHECK(segments[0].end == best_split);
  const double dp_cost =
      segments[0].sse + segments[1].sse + 2 * cfg.penalty;
  CHECK(dp_cost == doctest::Approx(best).epsilon(1e-9));
}

TEST_CASE("segment_trajectory: huge penalty forces one segment") {
  Rng rng(13);
  std::vector<std::pair<double, double>> pts;
  for (int i = 0; i < 30; ++i)
    pts.push_back({rng.uniform(0, 100), rng.uniform(0, 100)});
  const auto segments = segment_trajectory(pts, {1e18, 5});
  CHECK(segments.size() == 1);
}

TEST_CASE("segment_trajectory: segments partition the points") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(2, 60));
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < n; ++i)
      pts.push_back({rng.uniform(0, 50), rng.uniform(0, 50)});
    const auto segments = segment_trajectory(pts, {50.0, 5});
    REQUIRE(!segments.empty());
    CHECK(segments.front().begin == 0);
    CHECK(segments.back().end == n);
    for (std::size_t i = 1; i < segments.size(); ++i) {
      CHECK(segments[i].begin == segments[i - 1].end);
      CHECK(segments[i].end - segments[i].begin >= 2);
    }
  }
}

TEST_CASE("segment_trajectory: fewer than 2 points is an error") {
  CHECK_THROWS(segment_trajectory({{1.0, 1.0}}, {200.0, 5}));
}

TEST_CASE("gei_piecewise: straight walk equals the full energy image") {
  std::vector<SilhouetteFrame> frames;
  for (int i = 0; i < 12; ++i) {
    auto f = make_frame(i, 50, 50 + i, 40, 20);
    f.traj_x = 100.0 + 4.0 * i;
    f.traj_y = 200.0;
    frames.push_back(f);
  }
  const auto seq = make_sequence(frames);
  const auto piecewise = gei_piecewise(seq, {200.0, 5});
  REQUIRE(piecewise.size() == 1);
  CHECK(piecewise[0].kind == GeiKind::piecewise);
  const auto full = gei_full(seq);
  CHECK(piecewise[0].grid == full.grid);
  CHECK(piecewise[0].source_frames == full.source_frames);
}

TEST_CASE("gei_piecewise: corner walk splits into two partitions") {
  std::vector<SilhouetteFrame> frames;
  for (int i = 0; i < 10; ++i) {
    auto f = make_frame(i, 50, 40 + 2 * i, 30, 15);
    f.traj_x = 10.0 * i;
    f.traj_y = 0.0;
    frames.push_back(f);
  }
  for (int i = 0; i < 10; ++i) {
    auto f = make_frame(10 + i, 120, 40 + 2 * i, 30, 15);
    f.traj_x = 100.0;
    f.traj_y = 10.0 * (i + 1);
    frames.push_back(f);
  }
  const auto seq = make_sequence(frames);
  const auto geis = gei_piecewise(seq, {10.0, 5});
  REQUIRE(geis.size() == 2);
  CHECK(geis[0].source_frames.size() == 10);
  CHECK(geis[0].source_frames.back() == 9);
  CHECK(geis[1].source_frames.front() == 10);
  // Each GEI equals the mean over its own frames.
  for (const auto& gei : geis) {
    std::vector<double> mean(gei.grid.size(), 0.0);
    for (int f : gei.source_frames) {
      std::size_t pos = 0;
      for (; pos < seq.frames.size(); ++pos)
        if (seq.frames[pos].frame_index == f) break;
      for (std::size_t i = 0; i < mean.size(); ++i)
        mean[i] += seq.frames[pos].grid[i];
    }
    for (std::size_t i = 0; i < mean.size(); ++i)
      CHECK(std::abs(gei.grid[i] -
                     mean[i] / gei.source_frames.size()) < 1e-6);
  }
}
