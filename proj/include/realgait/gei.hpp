#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "realgait/rng.hpp"
#include "realgait/types.hpp"

namespace realgait {

enum class GeiKind { full, cluster, piecewise };

// Pixelwise mean of a set of silhouette frames; values in [0, 1].
struct GaitEnergyImage {
  std::vector<float> grid;  // kSilhouetteSize^2, row-major
  std::vector<int> source_frames;
  GeiKind kind = GeiKind::full;
};

// One straight-line piece of a walking trajectory. The line is fitted by
// total least squares (perpendicular residuals), so vertical motion is
// handled the same as horizontal.
struct TrajectorySegment {
  int begin = 0;  // index into the point list, inclusive
  int end = 0;    // exclusive
  // Line through (cx, cy) with unit direction (dir_x, dir_y).
  double cx = 0.0, cy = 0.0;
  double dir_x = 1.0, dir_y = 0.0;
  double sse = 0.0;  // sum of squared perpendicular distances, pixels^2
};

struct PiecewiseConfig {
  double penalty = 200.0;  // lambda, pixels^2 per extra segment
  int min_segment_len = 5;
};

struct ClusterConfig {
  int k = 7;
  std::uint64_t seed = 0;
  int max_iterations = 100;
  // k-means feature space: silhouette box-downsampled to this grid.
  int feature_rows = 64;
  int feature_cols = 44;
};

GaitEnergyImage gei_full(const SilhouetteSequence& seq);

// K-means over downsampled frames, one GEI per cluster. Deterministic for a
// fixed seed; empty clusters are re-seeded from the farthest point.
std::vector<GaitEnergyImage> gei_cluster(const SilhouetteSequence& seq,
                                         const ClusterConfig& cfg = {});

// Optimal segmentation minimizing sum(per-segment SSE) + penalty * segments,
// by dynamic programming over split points. Segments are contiguous, ordered
// and cover all points.
std::vector<TrajectorySegment> segment_trajectory(
    const std::vector<std::pair<double, double>>& points,
    const PiecewiseConfig& cfg = {});

// One GEI per trajectory segment (segments from the per-frame box centers).
std::vector<GaitEnergyImage> gei_piecewise(const SilhouetteSequence& seq,
                                           const PiecewiseConfig& cfg = {});

}  // namespace realgait
