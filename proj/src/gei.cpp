#include "realgait/gei.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace realgait {

namespace {

GaitEnergyImage mean_of_frames(const SilhouetteSequence& seq,
                               const std::vector<int>& positions,
                               GeiKind kind) {
  GaitEnergyImage gei;
  gei.kind = kind;
  const std::size_t cells =
      static_cast<std::size_t>(kSilhouetteSize) * kSilhouetteSize;
  std::vector<double> acc(cells, 0.0);
  for (int pos : positions) {
    const auto& frame = seq.frames[static_cast<std::size_t>(pos)];
    if (frame.grid.size() != cells)
      throw std::invalid_argument("silhouette frame has wrong size");
    for (std::size_t i = 0; i < cells; ++i) acc[i] += frame.grid[i];
    gei.source_frames.push_back(frame.frame_index);
  }
  gei.grid.resize(cells);
  const double inv = 1.0 / static_cast<double>(positions.size());
  for (std::size_t i = 0; i < cells; ++i)
    gei.grid[i] = static_cast<float>(acc[i] * inv);
  return gei;
}

// Box-filter downsample of a binary frame to rows x cols, as the k-means
// feature vector.
std::vector<float> downsample(const SilhouetteFrame& frame, int rows,
                              int cols) {
  std::vector<float> out(static_cast<std::size_t>(rows) * cols, 0.0f);
  for (int r = 0; r < rows; ++r) {
    const int y0 = r * kSilhouetteSize / rows;
    const int y1 = (r + 1) * kSilhouetteSize / rows;
    for (int c = 0; c < cols; ++c) {
      const int x0 = c * kSilhouetteSize / cols;
      const int x1 = (c + 1) * kSilhouetteSize / cols;
      double acc = 0.0;
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
          acc += frame.grid[static_cast<std::size_t>(y) * kSilhouetteSize + x];
      out[static_cast<std::size_t>(r) * cols + c] =
          static_cast<float>(acc / ((y1 - y0) * (x1 - x0)));
    }
  }
  return out;
}

double sq_dist(const std::vector<float>& a, const std::vector<float>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace

GaitEnergyImage gei_full(const SilhouetteSequence& seq) {
  if (seq.frames.empty()) throw std::invalid_argument("gei_full: empty sequence");
  std::vector<int> all(seq.frames.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return mean_of_frames(seq, all, GeiKind::full);
}

std::vector<GaitEnergyImage> gei_cluster(const SilhouetteSequence& seq,
                                         const ClusterConfig& cfg) {
  const int n = static_cast<int>(seq.frames.size());
  if (n < cfg.k)
    throw std::invalid_argument("gei_cluster: fewer frames than clusters");
  if (cfg.k < 1) throw std::invalid_argument("gei_cluster: k must be >= 1");

  std::vector<std::vector<float>> feats;
  feats.reserve(static_cast<std::size_t>(n));
  for (const auto& frame : seq.frames)
    feats.push_back(downsample(frame, cfg.feature_rows, cfg.feature_cols));
  const std::size_t dim = feats.front().size();

  Rng rng(cfg.seed);
  // k-means++ seeding.
  std::vector<std::vector<float>> centers;
  centers.push_back(feats[static_cast<std::size_t>(rng.uniform_int(0, n - 1))]);
  std::vector<double> d2(static_cast<std::size_t>(n));
  while (static_cast<int>(centers.size()) < cfg.k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, sq_dist(feats[i], c));
      d2[static_cast<std::size_t>(i)] = best;
      total += best;
    }
    int chosen;
    if (total <= 0.0) {
      chosen = static_cast<int>(rng.uniform_int(0, n - 1));
    } else {
      double target = rng.uniform() * total;
      chosen = n - 1;
      for (int i = 0; i < n; ++i) {
        target -= d2[static_cast<std::size_t>(i)];
        if (target <= 0.0) {
          chosen = i;
          break;
        }
      }
    }
    centers.push_back(feats[static_cast<std::size_t>(chosen)]);
  }

  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = sq_dist(feats[i], centers[0]);
      for (int c = 1; c < cfg.k; ++c) {
        const double d = sq_dist(feats[i], centers[static_cast<std::size_t>(c)]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[static_cast<std::size_t>(i)] != best) {
        assign[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    // Recompute centers; re-seed empties from the farthest point.
    std::vector<std::vector<double>> sums(
        static_cast<std::size_t>(cfg.k), std::vector<double>(dim, 0.0));
    std::vector<int> counts(static_cast<std::size_t>(cfg.k), 0);
    for (int i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(assign[static_cast<std::size_t>(i)]);
      ++counts[c];
      for (std::size_t j = 0; j < dim; ++j) sums[c][j] += feats[i][j];
    }
    for (int c = 0; c < cfg.k; ++c) {
      if (counts[static_cast<std::size_t>(c)] == 0) {
        // Re-seed from the farthest point of any cluster that can spare one.
        int far_i = -1;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
          const auto own = static_cast<std::size_t>(assign[static_cast<std::size_t>(i)]);
          if (counts[own] < 2) continue;
          const double d = sq_dist(feats[i], centers[own]);
          if (d > far_d) {
            far_d = d;
            far_i = i;
          }
        }
        if (far_i < 0) continue;  // only singletons left; cluster stays empty
        --counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(far_i)])];
        ++counts[static_cast<std::size_t>(c)];
        centers[static_cast<std::size_t>(c)] = feats[static_cast<std::size_t>(far_i)];
        assign[static_cast<std::size_t>(far_i)] = c;
        changed = true;
      } else {
        for (std::size_t j = 0; j < dim; ++j)
          centers[static_cast<std::size_t>(c)][j] = static_cast<float>(
              sums[static_cast<std::size_t>(c)][j] /
              counts[static_cast<std::size_t>(c)]);
      }
    }
    if (!changed) break;
  }

  std::vector<GaitEnergyImage> out;
  for (int c = 0; c < cfg.k; ++c) {
    std::vector<int> members;
    for (int i = 0; i < n; ++i)
      if (assign[static_cast<std::size_t>(i)] == c) members.push_back(i);
    if (members.empty()) continue;
    out.push_back(mean_of_frames(seq, members, GeiKind::cluster));
  }
  return out;
}

namespace {

// Prefix sums enabling O(1) total-least-squares SSE of any point range.
struct ScatterSums {
  std::vector<double> x, y, xx, yy, xy;

  explicit ScatterSums(const std::vector<std::pair<double, double>>& pts) {
    const std::size_t n = pts.size();
    x.assign(n + 1, 0.0);
    y.assign(n + 1, 0.0);
    xx.assign(n + 1, 0.0);
    yy.assign(n + 1, 0.0);
    xy.assign(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      x[i + 1] = x[i] + pts[i].first;
      y[i + 1] = y[i] + pts[i].second;
      xx[i + 1] = xx[i] + pts[i].first * pts[i].first;
      yy[i + 1] = yy[i] + pts[i].second * pts[i].second;
      xy[i + 1] = xy[i] + pts[i].first * pts[i].second;
    }
  }

  // Fits a TLS line to points [b, e) and fills the segment fields. The SSE
  // is the smaller eigenvalue of the centered scatter matrix.
  TrajectorySegment fit(int b, int e) const {
    const double n = static_cast<double>(e - b);
    const double sx = x[e] - x[b], sy = y[e] - y[b];
    const double sxx = xx[e] - xx[b], syy = yy[e] - yy[b], sxy = xy[e] - xy[b];
    const double mx = sx / n, my = sy / n;
    const double cxx = sxx - n * mx * mx;
    const double cyy = syy - n * my * my;
    const double cxy = sxy - n * mx * my;
    const double tr = cxx + cyy;
    const double det = cxx * cyy - cxy * cxy;
    const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
    const double lam_min = tr / 2.0 - disc;
    const double lam_max = tr / 2.0 + disc;

    TrajectorySegment seg;
    seg.begin = b;
    seg.end = e;
    seg.cx = mx;
    seg.cy = my;
    seg.sse = std::max(0.0, lam_min);
    // Principal direction = eigenvector of lam_max.
    double dx, dy;
    if (std::abs(cxy) > 1e-12) {
      dx = lam_max - cyy;
      dy = cxy;
    } else if (cxx >= cyy) {
      dx = 1.0;
      dy = 0.0;
    } else {
      dx = 0.0;
      dy = 1.0;
    }
    const double norm = std::hypot(dx, dy);
    seg.dir_x = dx / norm;
    seg.dir_y = dy / norm;
    return seg;
  }
};

}  // namespace

std::vector<TrajectorySegment> segment_trajectory(
    const std::vector<std::pair<double, double>>& points,
    const PiecewiseConfig& cfg) {
  const int n = static_cast<int>(points.size());
  if (n < 2)
    throw std::invalid_argument("segment_trajectory: need at least 2 points");
  if (cfg.penalty <= 0.0)
    throw std::invalid_argument("segment_trajectory: penalty must be > 0");
  const int min_len = std::max(2, std::min(cfg.min_segment_len, n));

  ScatterSums sums(points);
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> best(static_cast<std::size_t>(n) + 1, inf);
  std::vector<int> cut(static_cast<std::size_t>(n) + 1, 0);
  best[0] = 0.0;
  for (int e = min_len; e <= n; ++e) {
    for (int b = 0; b + min_len <= e; ++b) {
      if (best[static_cast<std::size_t>(b)] == inf) continue;
      const double cost = best[static_cast<std::size_t>(b)] +
                          sums.fit(b, e).sse + cfg.penalty;
      if (cost < best[static_cast<std::size_t>(e)]) {
        best[static_cast<std::size_t>(e)] = cost;
        cut[static_cast<std::size_t>(e)] = b;
      }
    }
  }

  std::vector<TrajectorySegment> segments;
  int e = n;
  while (e > 0) {
    const int b = cut[static_cast<std::size_t>(e)];
    segments.push_back(sums.fit(b, e));
    e = b;
  }
  std::reverse(segments.begin(), segments.end());
  return segments;
}

std::vector<GaitEnergyImage> gei_piecewise(const SilhouetteSequence& seq,
                                           const PiecewiseConfig& cfg) {
  std::vector<std::pair<double, double>> points;
  points.reserve(seq.frames.size());
  for (const auto& frame : seq.frames)
    points.emplace_back(frame.traj_x, frame.traj_y);
  const auto segments = segment_trajectory(points, cfg);

  std::vector<GaitEnergyImage> out;
  for (const auto& seg : segments) {
    std::vector<int> members;
    for (int i = seg.begin; i < seg.end; ++i) members.push_back(i);
    out.push_back(mean_of_frames(seq, members, GeiKind::piecewise));
  }
  return out;
}

}  // namespace realgait
