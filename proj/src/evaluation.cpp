#include "realgait/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace realgait {

namespace fs = std::filesystem;
using nlohmann::json;

void EmbeddingStore::put(const std::string& video_id, EmbeddingRecord rec) {
  if (!records_.empty() && rec.vec.size() != embedding_length())
    throw std::invalid_argument("embedding length mismatch for video " +
                                video_id);
  records_[video_id] = std::move(rec);
}

const EmbeddingRecord& EmbeddingStore::get(const std::string& video_id) const {
  auto it = records_.find(video_id);
  if (it == records_.end())
    throw std::out_of_range("missing embedding for video " + video_id);
  return it->second;
}

bool EmbeddingStore::contains(const std::string& video_id) const {
  return records_.count(video_id) > 0;
}

std::size_t EmbeddingStore::embedding_length() const {
  if (records_.empty()) return 0;
  return records_.begin()->second.vec.size();
}

void EmbeddingStore::save(const std::string& dir) const {
  fs::create_directories(dir);
  json index;
  index["embedding_length"] = embedding_length();
  json videos = json::object();
  for (const auto& [video_id, rec] : records_) {
    const std::string file = video_id + ".emb";
    std::ofstream out(fs::path(dir) / file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write embedding file " + file);
    out.write(reinterpret_cast<const char*>(rec.vec.data()),
              static_cast<std::streamsize>(rec.vec.size() * sizeof(float)));
    videos[video_id] = {{"file", file},
                        {"subject_id", rec.subject_id},
                        {"camera_id", rec.camera_id},
                        {"length", rec.vec.size()}};
  }
  index["videos"] = std::move(videos);
  std::ofstream out(fs::path(dir) / "index.json");
  out << index.dump(2) << '\n';
}

EmbeddingStore EmbeddingStore::load(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "index.json");
  if (!in)
    throw std::runtime_error("cannot open embedding index in " + dir);
  json index = json::parse(in);
  EmbeddingStore store;
  for (const auto& [video_id, vj] : index.at("videos").items()) {
    EmbeddingRecord rec;
    rec.subject_id = vj.at("subject_id").get<std::string>();
    rec.camera_id = vj.at("camera_id").get<int>();
    const auto length = vj.at("length").get<std::size_t>();
    rec.vec.resize(length);
    std::ifstream emb(fs::path(dir) / vj.at("file").get<std::string>(),
                      std::ios::binary);
    if (!emb)
      throw std::runtime_error("cannot open embedding file for " + video_id);
    emb.read(reinterpret_cast<char*>(rec.vec.data()),
             static_cast<std::streamsize>(length * sizeof(float)));
    if (static_cast<std::size_t>(emb.gcount()) != length * sizeof(float))
      throw std::runtime_error("truncated embedding file for " + video_id);
    store.put(video_id, std::move(rec));
  }
  return store;
}

namespace {

double euclidean(const std::vector<float>& a, const std::vector<float>& b,
                 std::size_t begin, std::size_t end) {
  double acc = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace

DistanceMatrix distances(const std::vector<const EmbeddingRecord*>& probes,
                         const std::vector<const EmbeddingRecord*>& gallery,
                         const DistanceOptions& opts) {
  DistanceMatrix m;
  m.rows = probes.size();
  m.cols = gallery.size();
  m.values.assign(m.rows * m.cols, 0.0);
  for (const auto* p : probes) m.probe_subjects.push_back(p->subject_id);
  for (const auto* g : gallery) m.gallery_subjects.push_back(g->subject_id);

  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) {
      const auto& a = probes[i]->vec;
      const auto& b = gallery[j]->vec;
      if (a.size() != b.size())
        throw std::invalid_argument("embedding length mismatch");
      if (opts.metric == DistanceMetric::euclidean) {
        m.at(i, j) = euclidean(a, b, 0, a.size());
      } else {
        const int patches = std::max(1, opts.patches);
        if (a.size() % patches != 0)
          throw std::invalid_argument(
              "embedding length not divisible by patch count");
        const std::size_t chunk = a.size() / patches;
        double acc = 0.0;
        for (int p = 0; p < patches; ++p)
          acc += euclidean(a, b, p * chunk, (p + 1) * chunk);
        m.at(i, j) = acc / patches;
      }
    }
  }
  return m;
}

namespace {

// Gallery indices of the n nearest entries, ascending distance, ties broken
// by gallery index.
std::vector<std::size_t> top_n(const DistanceMatrix& dist, std::size_t row,
                               std::size_t n) {
  std::vector<std::size_t> order(dist.cols);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return dist.at(row, a) < dist.at(row, b);
                   });
  order.resize(std::min(n, order.size()));
  return order;
}

}  // namespace

double rank_n(const DistanceMatrix& dist, int n) {
  if (n < 1) throw std::invalid_argument("rank_n: n must be >= 1");
  if (dist.rows == 0) throw std::invalid_argument("rank_n: no probes");
  if (dist.cols == 0) throw std::invalid_argument("rank_n: empty gallery");

  std::set<std::string> gallery_subjects(dist.gallery_subjects.begin(),
                                         dist.gallery_subjects.end());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < dist.rows; ++i) {
    if (!gallery_subjects.count(dist.probe_subjects[i]))
      throw std::invalid_argument("rank_n: probe subject " +
                                  dist.probe_subjects[i] +
                                  " absent from gallery (closed-set)");
    for (std::size_t j : top_n(dist, i, static_cast<std::size_t>(n))) {
      if (dist.gallery_subjects[j] == dist.probe_subjects[i]) {
        ++hits;
        break;
      }
    }
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(dist.rows);
}

std::map<double, double> dir_at_far(const DistanceMatrix& dist,
                                    const std::vector<bool>& genuine,
                                    const std::vector<double>& far_levels) {
  if (genuine.size() != dist.rows)
    throw std::invalid_argument("dir_at_far: flag count mismatch");
  if (dist.cols == 0) throw std::invalid_argument("dir_at_far: empty gallery");

  // Best match per probe: minimum distance and whether rank-1 is correct.
  std::vector<double> imposter_best;
  struct GenuineProbe {
    double best = 0.0;
    bool correct = false;
  };
  std::vector<GenuineProbe> genuine_probes;
  for (std::size_t i = 0; i < dist.rows; ++i) {
    std::size_t best_j = 0;
    for (std::size_t j = 1; j < dist.cols; ++j)
      if (dist.at(i, j) < dist.at(i, best_j)) best_j = j;
    if (genuine[i]) {
      genuine_probes.push_back(
          {dist.at(i, best_j),
           dist.gallery_subjects[best_j] == dist.probe_subjects[i]});
    } else {
      imposter_best.push_back(dist.at(i, best_j));
    }
  }
  std::sort(imposter_best.begin(), imposter_best.end());

  std::map<double, double> table;
  for (double far : far_levels) {
    if (far < 100.0 && imposter_best.empty())
      throw std::invalid_argument("dir_at_far: no imposters at FAR < 100%");
    // Lower empirical quantile: the realized FAR never exceeds the nominal
    // level. Threshold sits strictly below the (K+1)-th smallest imposter
    // best-match distance, K = floor(far% * #imposters).
    const auto n_imp = imposter_best.size();
    const auto k = static_cast<std::size_t>(
        std::floor(far / 100.0 * static_cast<double>(n_imp) + 1e-9));
    const double threshold = (far >= 100.0 || k >= n_imp)
                                 ? std::numeric_limits<double>::infinity()
                                 : imposter_best[k];
    std::size_t accepted = 0;
    for (const auto& gp : genuine_probes)
      if (gp.correct &&
          (std::isinf(threshold) ? true : gp.best < threshold))
        ++accepted;
    table[far] = genuine_probes.empty()
                     ? 0.0
                     : 100.0 * static_cast<double>(accepted) /
                           static_cast<double>(genuine_probes.size());
  }
  return table;
}

namespace {

std::vector<const EmbeddingRecord*> fetch(
    const EmbeddingStore& store,
    const std::vector<std::string>& video_ids) {
  std::vector<const EmbeddingRecord*> out;
  out.reserve(video_ids.size());
  for (const auto& id : video_ids) out.push_back(&store.get(id));
  return out;
}

DistanceMatrix spec_distances(const ProbeGallerySpec& spec,
                              const EmbeddingStore& store,
                              const DistanceOptions& opts) {
  std::vector<std::string> probe_ids, gallery_ids;
  for (const auto& p : spec.probe) probe_ids.push_back(p.video_id);
  for (const auto& g : spec.gallery) gallery_ids.push_back(g.video_id);
  return distances(fetch(store, probe_ids), fetch(store, gallery_ids), opts);
}

template <typename K>
double mean_of(const std::map<K, double>& values) {
  double acc = 0.0;
  for (const auto& [k, v] : values) acc += v;
  return values.empty() ? 0.0 : acc / static_cast<double>(values.size());
}

}  // namespace

EvalReport run_protocol(const std::vector<ProbeGallerySpec>& specs,
                        const EmbeddingStore& store, const EvalOptions& opts) {
  if (specs.empty()) throw std::invalid_argument("run_protocol: no specs");
  EvalReport report;
  report.protocol = specs.front().protocol;
  report.rank_levels = opts.rank_levels;
  report.far_levels = opts.far_levels;

  if (report.protocol == Protocol::multi_scene) {
    const auto& spec = specs.front();
    auto dist = spec_distances(spec, store, opts.distance);
    for (int n : opts.rank_levels)
      report.multi_scene_rank[n] = rank_n(dist, n);
    report.probe_count = spec.probe.size();
    report.genuine_count = spec.probe.size();
    return report;
  }

  // Cross-scene family: one spec per ordered camera pair.
  std::map<int, std::map<int, double>> rank1_by_probe_cam;
  std::map<int, std::map<int, std::map<double, double>>> dir_by_probe_cam;
  for (const auto& spec : specs) {
    if (!spec.scene_pair)
      throw std::invalid_argument("cross-scene spec missing camera pair");
    const auto [cam_p, cam_g] = *spec.scene_pair;
    auto dist = spec_distances(spec, store, opts.distance);
    report.probe_count += spec.probe.size();
    if (report.protocol == Protocol::cross_scene) {
      report.genuine_count += spec.probe.size();
      const double r1 = rank_n(dist, 1);
      report.pair_rank1[{cam_p, cam_g}] = r1;
      rank1_by_probe_cam[cam_p][cam_g] = r1;
    } else {
      std::vector<bool> genuine;
      for (const auto& p : spec.probe) genuine.push_back(!p.imposter);
      report.genuine_count +=
          static_cast<std::size_t>(std::count(genuine.begin(), genuine.end(), true));
      report.imposter_count += static_cast<std::size_t>(
          std::count(genuine.begin(), genuine.end(), false));
      dir_by_probe_cam[cam_p][cam_g] = dir_at_far(dist, genuine, opts.far_levels);
    }
  }

  if (report.protocol == Protocol::cross_scene) {
    for (const auto& [cam, per_gallery] : rank1_by_probe_cam)
      report.per_probe_camera_rank1[cam] = mean_of(per_gallery);
    report.mean_rank1 = mean_of(report.per_probe_camera_rank1);
  } else {
    for (const auto& [cam, per_gallery] : dir_by_probe_cam) {
      std::map<double, double> row;
      for (double far : opts.far_levels) {
        double acc = 0.0;
        for (const auto& [cam_g, table] : per_gallery) acc += table.at(far);
        row[far] = acc / static_cast<double>(per_gallery.size());
      }
      report.per_probe_camera_dir[cam] = std::move(row);
    }
    for (double far : opts.far_levels) {
      double acc = 0.0;
      for (const auto& [cam, row] : report.per_probe_camera_dir)
        acc += row.at(far);
      report.mean_dir[far] =
          report.per_probe_camera_dir.empty()
              ? 0.0
              : acc / static_cast<double>(report.per_probe_camera_dir.size());
    }
  }
  return report;
}

std::string EvalReport::to_json() const {
  json j;
  j["protocol"] = realgait::to_string(protocol);
  j["counts"] = {{"probes", probe_count},
                 {"genuine", genuine_count},
                 {"imposters", imposter_count}};
  if (protocol == Protocol::multi_scene) {
    json ranks = json::object();
    for (const auto& [n, v] : multi_scene_rank)
      ranks["rank-" + std::to_string(n)] = v;
    j["rank_accuracy"] = std::move(ranks);
  } else if (protocol == Protocol::cross_scene) {
    json pairs = json::array();
    for (const auto& [pair, v] : pair_rank1)
      pairs.push_back({{"probe_camera", pair.first},
                       {"gallery_camera", pair.second},
                       {"rank1", v}});
    j["pairs"] = std::move(pairs);
    json cams = json::object();
    for (const auto& [cam, v] : per_probe_camera_rank1)
      cams[std::to_string(cam)] = v;
    j["per_probe_camera_rank1"] = std::move(cams);
    j["mean_rank1"] = mean_rank1;
  } else {
    json cams = json::object();
    for (const auto& [cam, row] : per_probe_camera_dir) {
      json r = json::object();
      for (const auto& [far, v] : row) r[std::to_string(far)] = v;
      cams[std::to_string(cam)] = std::move(r);
    }
    j["per_probe_camera_dir"] = std::move(cams);
    json mean = json::object();
    for (const auto& [far, v] : mean_dir) mean[std::to_string(far)] = v;
    j["mean_dir"] = std::move(mean);
  }
  return j.dump(2);
}

std::string EvalReport::render_text() const {
  std::ostringstream os;
  char buf[128];
  if (protocol == Protocol::multi_scene) {
    os << "multi-scene recognition\n";
    for (const auto& [n, v] : multi_scene_rank) {
      std::snprintf(buf, sizeof(buf), "  rank-%-3d %7.2f%%\n", n, v);
      os << buf;
    }
  } else if (protocol == Protocol::cross_scene) {
    os << "cross-scene recognition (rank-1 %, mean over gallery cameras)\n";
    os << "  probe camera | rank-1\n";
    for (const auto& [cam, v] : per_probe_camera_rank1) {
      std::snprintf(buf, sizeof(buf), "  #%-12d | %6.2f\n", cam, v);
      os << buf;
    }
    std::snprintf(buf, sizeof(buf), "  %-13s | %6.2f\n", "Mean", mean_rank1);
    os << buf;
  } else {
    os << "open-set cross-scene: rank-1 DIR (%) at FAR (%)\n";
    os << "  probe camera |";
    for (double far : far_levels) {
      std::snprintf(buf, sizeof(buf), " %6.0f", far);
      os << buf;
    }
    os << '\n';
    for (const auto& [cam, row] : per_probe_camera_dir) {
      std::snprintf(buf, sizeof(buf), "  #%-12d |", cam);
      os << buf;
      for (double far : far_levels) {
        std::snprintf(buf, sizeof(buf), " %6.2f", row.at(far));
        os << buf;
      }
      os << '\n';
    }
    os << "  Mean          |";
    for (double far : far_levels) {
      std::snprintf(buf, sizeof(buf), " %6.2f", mean_dir.at(far));
      os << buf;
    }
    os << '\n';
  }
  std::snprintf(buf, sizeof(buf),
                "  probes: %zu (genuine %zu, imposters %zu)\n", probe_count,
                genuine_count, imposter_count);
  os << buf;
  return os.str();
}

}  // namespace realgait
