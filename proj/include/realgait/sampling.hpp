#pragma once

#include <string>
#include <vector>

#include "realgait/rng.hpp"

namespace realgait {

enum class SamplingMode { random_frames, random_tracklets };

struct SamplingConfig {
  SamplingMode mode = SamplingMode::random_tracklets;
  int m = 28;  // total frames per clip (random-frame mode)
  int u = 4;   // tracklets per clip
  int l = 7;   // frames per tracklet
  int s = 6;   // step between frames inside a tracklet
  // Use the literal start-range upper bound n-l*s-s+2 instead of the maximal
  // valid bound n-(l-1)*s. The literal bound is a strict subset of the valid
  // range whenever s >= 2.
  bool strict_paper_bound = false;
};

// Frame indices chosen for one training sample. Indices are 1-based ordinals
// into the source sequence of length source_length.
struct SampledClip {
  std::vector<int> indices;
  SamplingMode mode = SamplingMode::random_frames;
  int source_length = 0;
  // Tracklet structure; meaningful only in tracklet mode. s_effective may be
  // smaller than the requested step when the sequence was too short, and
  // wrapped is set when even step 1 required cyclic repetition.
  int u = 0;
  int l = 0;
  int s_effective = 0;
  bool wrapped = false;
};

// m independent uniform draws from [1, n], with replacement.
SampledClip random_frames(int n, int m, Rng& rng);

// One strided tracklet of l frames: [r, r+s, ..., r+(l-1)s] with a uniform
// random start. Falls back to a reduced step, then to cyclic wrapping, when
// the sequence is shorter than the requested span.
SampledClip random_tracklet(int n, int l, int s, Rng& rng,
                            bool strict_paper_bound = false);

// Union of u independent tracklets; |indices| == u*l.
SampledClip random_tracklets(int n, int u, int l, int s, Rng& rng,
                             bool strict_paper_bound = false);

// Dispatch on config.mode.
SampledClip sample_clip(int n, const SamplingConfig& cfg, Rng& rng);

std::string to_string(SamplingMode mode);
SamplingMode sampling_mode_from_string(const std::string& s);

}  // namespace realgait
