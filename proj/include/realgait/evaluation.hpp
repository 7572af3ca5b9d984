#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "realgait/manifest.hpp"

namespace realgait {

// Per-video embedding with identity metadata.
struct EmbeddingRecord {
  std::string subject_id;
  int camera_id = 0;
  std::vector<float> vec;
};

// In-memory store keyed by video_id. Disk layout: one raw float32
// little-endian file per video plus index.json.
class EmbeddingStore {
 public:
  void put(const std::string& video_id, EmbeddingRecord rec);
  const EmbeddingRecord& get(const std::string& video_id) const;
  bool contains(const std::string& video_id) const;
  std::size_t size() const { return records_.size(); }
  std::size_t embedding_length() const;
  const std::map<std::string, EmbeddingRecord>& records() const {
    return records_;
  }

  void save(const std::string& dir) const;
  static EmbeddingStore load(const std::string& dir);

 private:
  std::map<std::string, EmbeddingRecord> records_;
};

enum class DistanceMetric { euclidean, per_patch_mean };

struct DistanceOptions {
  DistanceMetric metric = DistanceMetric::euclidean;
  int patches = 1;  // per_patch_mean: number of equal chunks
};

struct DistanceMatrix {
  std::vector<std::string> probe_subjects;
  std::vector<std::string> gallery_subjects;
  std::vector<double> values;  // row-major |probe| x |gallery|
  std::size_t rows = 0, cols = 0;

  double at(std::size_t p, std::size_t g) const { return values[p * cols + g]; }
  double& at(std::size_t p, std::size_t g) { return values[p * cols + g]; }
};

// Pairwise distances between two embedding lists (row = probe).
DistanceMatrix distances(const std::vector<const EmbeddingRecord*>& probes,
                         const std::vector<const EmbeddingRecord*>& gallery,
                         const DistanceOptions& opts = {});

// Closed-set rank-n accuracy in percent. Ties are broken by gallery index
// order. Throws if a probe subject has no gallery entry.
double rank_n(const DistanceMatrix& dist, int n);

// Detection-and-identification rate at fixed false-acceptance rates.
// far_levels are percentages; genuine[i] marks probe rows whose subject is
// enrolled in the gallery. DIR(100) uses an infinite threshold and equals
// the closed-set rank-1 over genuine probes.
std::map<double, double> dir_at_far(const DistanceMatrix& dist,
                                    const std::vector<bool>& genuine,
                                    const std::vector<double>& far_levels = {
                                        1.0, 10.0, 50.0, 100.0});

struct EvalReport {
  Protocol protocol = Protocol::multi_scene;

  std::vector<int> rank_levels;
  std::map<int, double> multi_scene_rank;  // n -> percent

  std::map<std::pair<int, int>, double> pair_rank1;  // (probe cam, gallery cam)
  std::map<int, double> per_probe_camera_rank1;
  double mean_rank1 = 0.0;

  std::vector<double> far_levels;
  std::map<int, std::map<double, double>> per_probe_camera_dir;
  std::map<double, double> mean_dir;

  std::size_t probe_count = 0;
  std::size_t genuine_count = 0;
  std::size_t imposter_count = 0;

  std::string to_json() const;
  std::string render_text() const;
};

struct EvalOptions {
  DistanceOptions distance;
  std::vector<int> rank_levels = {1, 5, 10, 20};
  std::vector<double> far_levels = {1.0, 10.0, 50.0, 100.0};
};

// Runs every spec of one protocol and aggregates: multi-scene reports
// rank-n, cross-scene reports rank-1 per camera pair with per-probe-camera
// and overall means, open-set reports a DIR table per probe camera plus the
// mean row. Per-probe-camera values are the arithmetic mean over that
// camera's gallery pairs, and the mean row averages the camera rows.
EvalReport run_protocol(const std::vector<ProbeGallerySpec>& specs,
                        const EmbeddingStore& store,
                        const EvalOptions& opts = {});

}  // namespace realgait
