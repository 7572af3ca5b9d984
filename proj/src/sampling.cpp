#include "realgait/sampling.hpp"

#include <algorithm>
#include <stdexcept>

namespace realgait {

SampledClip random_frames(int n, int m, Rng& rng) {
  if (n < 1) throw std::invalid_argument("random_frames: empty sequence");
  if (m < 1) throw std::invalid_argument("random_frames: m must be >= 1");
  SampledClip clip;
  clip.mode = SamplingMode::random_frames;
  clip.source_length = n;
  clip.indices.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i)
    clip.indices.push_back(static_cast<int>(rng.uniform_int(1, n)));
  return clip;
}

namespace {

// Appends one tracklet to `out`, resolving short sequences:
//   1. reduce s to the largest step fitting n >= (l-1)s + 1;
//   2. if even s = 1 does not fit (n < l), wrap cyclically.
void append_tracklet(int n, int l, int s, bool strict_paper_bound, Rng& rng,
                     SampledClip& out) {
  if (n < 1) throw std::invalid_argument("random_tracklet: empty sequence");
  if (l < 1 || s < 1)
    throw std::invalid_argument("random_tracklet: l and s must be >= 1");

  int step = s;
  bool wrapped = false;
  if (l > 1 && n < (l - 1) * s + 1) {
    step = (n - 1) / (l - 1);  // largest step satisfying the length bound
    if (step < 1) {
      step = 1;
      wrapped = true;
    }
  }

  int r_max;
  if (wrapped) {
    r_max = n;
  } else {
    r_max = n - (l - 1) * step;
    if (strict_paper_bound) {
      const int paper_bound = n - l * step - step + 2;
      r_max = std::clamp(paper_bound, 1, r_max);
    }
  }
  const int r = static_cast<int>(rng.uniform_int(1, r_max));
  for (int i = 0; i < l; ++i) {
    const int raw = r + i * step;
    out.indices.push_back(wrapped ? (raw - 1) % n + 1 : raw);
  }
  out.s_effective = step;
  out.wrapped = out.wrapped || wrapped;
}

}  // namespace

SampledClip random_tracklet(int n, int l, int s, Rng& rng,
                            bool strict_paper_bound) {
  return random_tracklets(n, 1, l, s, rng, strict_paper_bound);
}

SampledClip random_tracklets(int n, int u, int l, int s, Rng& rng,
                             bool strict_paper_bound) {
  if (u < 1) throw std::invalid_argument("random_tracklets: u must be >= 1");
  SampledClip clip;
  clip.mode = SamplingMode::random_tracklets;
  clip.source_length = n;
  clip.u = u;
  clip.l = l;
  clip.indices.reserve(static_cast<std::size_t>(u) * l);
  for (int t = 0; t < u; ++t)
    append_tracklet(n, l, s, strict_paper_bound, rng, clip);
  return clip;
}

SampledClip sample_clip(int n, const SamplingConfig& cfg, Rng& rng) {
  if (cfg.mode == SamplingMode::random_frames)
    return random_frames(n, cfg.m, rng);
  return random_tracklets(n, cfg.u, cfg.l, cfg.s, rng, cfg.strict_paper_bound);
}

std::string to_string(SamplingMode mode) {
  return mode == SamplingMode::random_frames ? "rf" : "rt";
}

SamplingMode sampling_mode_from_string(const std::string& s) {
  if (s == "rf") return SamplingMode::random_frames;
  if (s == "rt") return SamplingMode::random_tracklets;
  throw std::invalid_argument("unknown sampling mode: " + s);
}

}  // namespace realgait
