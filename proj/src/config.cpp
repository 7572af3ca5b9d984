#include "realgait/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace realgait {

using nlohmann::json;

namespace {

struct KeyEntry {
  const char* key;
  const char* description;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename T>
T parse_number(const std::string& s) {
  std::istringstream is(s);
  T v;
  if (!(is >> v) || !is.eof())
    throw std::invalid_argument("cannot parse number: " + s);
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw std::invalid_argument("cannot parse bool: " + s);
}

// "1e-4:150000,1e-5:100000"
std::vector<std::pair<double, long>> parse_phases(const std::string& s) {
  std::vector<std::pair<double, long>> phases;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos)
      throw std::invalid_argument("phase must be lr:iterations, got " + item);
    phases.emplace_back(parse_number<double>(item.substr(0, colon)),
                        parse_number<long>(item.substr(colon + 1)));
  }
  if (phases.empty()) throw std::invalid_argument("empty phase list");
  return phases;
}

std::string phases_to_string(const std::vector<std::pair<double, long>>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    os << v[i].first << ':' << v[i].second;
  }
  return os.str();
}

template <typename T>
std::vector<T> parse_list(const std::string& s) {
  std::vector<T> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) out.push_back(parse_number<T>(item));
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

template <typename T>
std::string list_to_string(const std::vector<T>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    os << v[i];
  }
  return os.str();
}

std::string pedestrian_to_string(const InputVariant& v) {
  switch (v.pedestrian) {
    case PedestrianMode::color: return "color";
    case PedestrianMode::binary: return "binary";
    case PedestrianMode::grayscale_quantized: return "grayscale_quantized";
  }
  return "?";
}

#define NUM_KEY(path, field, desc)                                         \
  {path, desc,                                                             \
   [](const RunConfig& c) {                                                \
     std::ostringstream os;                                                \
     os << c.field;                                                        \
     return os.str();                                                      \
   },                                                                      \
   [](RunConfig& c, const std::string& s) {                                \
     c.field = parse_number<decltype(c.field)>(s);                         \
   }}

#define BOOL_KEY(path, field, desc)                                       \
  {path, desc,                                                            \
   [](const RunConfig& c) { return c.field ? "true" : "false"; },         \
   [](RunConfig& c, const std::string& s) { c.field = parse_bool(s); }}

const std::vector<KeyEntry>& registry() {
  static const std::vector<KeyEntry> entries = {
      {"sampling.mode", "training clip sampling: rf (random frames) or rt (random tracklets)",
       [](const RunConfig& c) { return to_string(c.sampling.mode); },
       [](RunConfig& c, const std::string& s) {
         c.sampling.mode = sampling_mode_from_string(s);
       }},
      NUM_KEY("sampling.m", sampling.m, "frames per clip in rf mode"),
      NUM_KEY("sampling.u", sampling.u, "tracklets per clip in rt mode"),
      NUM_KEY("sampling.l", sampling.l, "frames per tracklet"),
      NUM_KEY("sampling.s", sampling.s, "step between frames inside a tracklet"),
      BOOL_KEY("sampling.strict_paper_bound", sampling.strict_paper_bound,
               "use the literal start-range bound n-l*s-s+2"),

      NUM_KEY("model.input_size", model.input_size, "frame edge fed to the model (256 or 64)"),
      BOOL_KEY("model.use_alignment", model.use_alignment,
               "regress and apply a per-frame affine alignment"),
      NUM_KEY("model.block23_stride", model.block23_stride,
              "stride of residual groups 2 and 3 (2, or 1 for 64-pixel input)"),
      NUM_KEY("model.ppm_scales_u", model.ppm_scales_u, "pyramid height scales U"),
      NUM_KEY("model.ppm_scales_v", model.ppm_scales_v, "pyramid width scales V"),
      NUM_KEY("model.patch_dim", model.patch_dim, "per-patch feature dimension d"),
      {"model.ppm_variant", "patch layout: ppm (height-first) or ppm_v (even grid)",
       [](const RunConfig& c) { return to_string(c.model.ppm_variant); },
       [](RunConfig& c, const std::string& s) {
         c.model.ppm_variant = ppm_variant_from_string(s);
       }},
      NUM_KEY("model.channel_scale", model.channel_scale,
              "uniform channel width multiplier for small runs"),

      NUM_KEY("train.p", train.p, "identities per batch"),
      NUM_KEY("train.k", train.k, "clips per identity"),
      NUM_KEY("train.margin", train.schedule.margin, "triplet loss margin"),
      {"train.phases", "learning-rate schedule, lr:iterations pairs",
       [](const RunConfig& c) { return phases_to_string(c.train.schedule.phases); },
       [](RunConfig& c, const std::string& s) {
         c.train.schedule.phases = parse_phases(s);
       }},
      NUM_KEY("train.seed", train.schedule.seed, "training rng seed"),
      NUM_KEY("train.checkpoint_every", train.checkpoint_every,
              "iterations between checkpoints (0 = only on demand)"),
      BOOL_KEY("train.nonzero_average", train.nonzero_average,
               "average the hinge over active triples only"),
      NUM_KEY("train.prefetch", train.prefetch,
              "batch prefetch queue depth (ignored when deterministic)"),
      NUM_KEY("adam.beta1", train.adam.beta1, "Adam first-moment decay"),
      NUM_KEY("adam.beta2", train.adam.beta2, "Adam second-moment decay"),
      NUM_KEY("adam.eps", train.adam.eps, "Adam denominator epsilon"),

      NUM_KEY("gmm.history", gmm.history, "background model history length"),
      NUM_KEY("gmm.var_threshold", gmm.var_threshold,
              "squared Mahalanobis threshold for foreground"),
      BOOL_KEY("gmm.detect_shadows", gmm.detect_shadows,
               "detect shadows and map them to background"),
      NUM_KEY("gmm.learning_rate", gmm.learning_rate,
              "model update rate (1/history by default)"),
      NUM_KEY("gmm.morph_kernel", gmm.morph_kernel,
              "mask opening kernel size, 0 disables"),

      NUM_KEY("extract.expand_height", expand.height, "box height expansion factor"),
      NUM_KEY("extract.expand_width", expand.width, "box width expansion factor"),
      BOOL_KEY("extract.write_variants", extract.write_variants,
               "additionally write composed variant crops"),
      {"extract.pedestrian", "variant pedestrian mode: color, binary, grayscale_quantized",
       [](const RunConfig& c) { return pedestrian_to_string(c.extract.variant); },
       [](RunConfig& c, const std::string& s) {
         if (s == "color") c.extract.variant.pedestrian = PedestrianMode::color;
         else if (s == "binary") c.extract.variant.pedestrian = PedestrianMode::binary;
         else if (s == "grayscale_quantized")
           c.extract.variant.pedestrian = PedestrianMode::grayscale_quantized;
         else throw std::invalid_argument("unknown pedestrian mode: " + s);
       }},
      {"extract.background", "variant background mode: color or subtracted",
       [](const RunConfig& c) {
         return c.extract.variant.background == BackgroundMode::color
                    ? "color"
                    : "subtracted";
       },
       [](RunConfig& c, const std::string& s) {
         if (s == "color") c.extract.variant.background = BackgroundMode::color;
         else if (s == "subtracted")
           c.extract.variant.background = BackgroundMode::subtracted;
         else throw std::invalid_argument("unknown background mode: " + s);
       }},
      NUM_KEY("extract.quantization_bins", extract.variant.quantization_bins,
              "gray levels for the quantized variant"),

      NUM_KEY("gei.cluster_k", gei_cluster.k, "clusters for the clustered energy image"),
      NUM_KEY("gei.seed", gei_cluster.seed, "k-means seed"),
      NUM_KEY("gei.penalty", piecewise.penalty,
              "per-segment penalty for trajectory splitting, pixels^2"),
      NUM_KEY("gei.min_segment_len", piecewise.min_segment_len,
              "minimum frames per trajectory segment"),
      NUM_KEY("gei.feature_rows", gei_cluster.feature_rows,
              "k-means feature grid rows"),
      NUM_KEY("gei.feature_cols", gei_cluster.feature_cols,
              "k-means feature grid columns"),

      {"eval.protocol", "multi_scene, cross_scene or open_set_cross_scene",
       [](const RunConfig& c) { return c.eval.protocol; },
       [](RunConfig& c, const std::string& s) {
         protocol_from_string(s);  // validation only
         c.eval.protocol = s;
       }},
      {"eval.distance", "embedding metric: euclidean or per_patch_mean",
       [](const RunConfig& c) {
         return c.eval.metric == DistanceMetric::euclidean ? "euclidean"
                                                           : "per_patch_mean";
       },
       [](RunConfig& c, const std::string& s) {
         if (s == "euclidean") c.eval.metric = DistanceMetric::euclidean;
         else if (s == "per_patch_mean")
           c.eval.metric = DistanceMetric::per_patch_mean;
         else throw std::invalid_argument("unknown distance metric: " + s);
       }},
      NUM_KEY("eval.max_frames", eval.max_frames,
              "cap on frames fed per sequence at test time"),
      {"eval.rank_levels", "rank-n levels reported for multi-scene",
       [](const RunConfig& c) { return list_to_string(c.eval.rank_levels); },
       [](RunConfig& c, const std::string& s) {
         c.eval.rank_levels = parse_list<int>(s);
       }},
      {"eval.far_levels", "false-acceptance-rate levels (%) for open-set",
       [](const RunConfig& c) { return list_to_string(c.eval.far_levels); },
       [](RunConfig& c, const std::string& s) {
         c.eval.far_levels = parse_list<double>(s);
       }},
      {"eval.probe_override", "path to a JSON subject->video probe assignment",
       [](const RunConfig& c) { return c.eval.probe_override; },
       [](RunConfig& c, const std::string& s) { c.eval.probe_override = s; }},
  };
  return entries;
}

#undef NUM_KEY
#undef BOOL_KEY

const KeyEntry& find_key(const std::string& key) {
  for (const auto& entry : registry())
    if (key == entry.key) return entry;
  throw std::invalid_argument("unknown config key: " + key);
}

std::string json_scalar_to_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) {
    std::ostringstream os;
    os.precision(17);
    os << v.get<double>();
    return os.str();
  }
  if (v.is_array()) {
    // Lists use the comma form; phase pairs use lr:iterations.
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) os << ',';
      if (v[i].is_array()) {
        if (v[i].size() != 2)
          throw std::invalid_argument("phase entries must be [lr, iterations]");
        os << v[i][0].get<double>() << ':' << v[i][1].get<long>();
      } else {
        os << json_scalar_to_string(v[i]);
      }
    }
    return os.str();
  }
  throw std::invalid_argument("unsupported config value type");
}

void apply_json_object(RunConfig& config, const json& j,
                       const std::string& prefix) {
  for (const auto& [key, value] : j.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (value.is_object())
      apply_json_object(config, value, path);
    else
      find_key(path).set(config, json_scalar_to_string(value));
  }
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  train.schedule.validate();
  protocol_from_string(eval.protocol);
  if (sampling.m < 1 || sampling.u < 1 || sampling.l < 1 || sampling.s < 1)
    throw std::invalid_argument("sampling parameters must be >= 1");
  if (train.p < 1 || train.k < 1)
    throw std::invalid_argument("train.p and train.k must be >= 1");
  if (eval.max_frames < 1)
    throw std::invalid_argument("eval.max_frames must be >= 1");
  if (extract.variant.pedestrian == PedestrianMode::grayscale_quantized &&
      extract.variant.quantization_bins < 2)
    throw std::invalid_argument("extract.quantization_bins must be >= 2");
  if (gmm.history < 1) throw std::invalid_argument("gmm.history must be >= 1");
}

void apply_key_value(RunConfig& config, const std::string& key,
                     const std::string& value) {
  find_key(key).set(config, value);
}

void apply_config_file(RunConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
    json j = json::parse(in);
    apply_json_object(config, j, "");
    return;
  }
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t");
    line = line.substr(first, last - first + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": expected key=value");
    apply_key_value(config, line.substr(0, eq), line.substr(eq + 1));
  }
}

void apply_env_overrides(RunConfig& config) {
  for (const auto& entry : registry()) {
    std::string env_name = "REALGAIT_";
    for (const char* p = entry.key; *p; ++p)
      env_name += *p == '.' ? '_' : static_cast<char>(std::toupper(*p));
    if (const char* value = std::getenv(env_name.c_str()))
      entry.set(config, value);
  }
}

std::string config_key_help() {
  const RunConfig defaults;
  std::ostringstream os;
  os << "Configuration keys (config file, REALGAIT_* env, or --set key=value):\n";
  for (const auto& entry : registry()) {
    std::ostringstream head;
    head << "  " << entry.key << " = " << entry.get(defaults);
    os << head.str();
    for (int i = static_cast<int>(head.str().size()); i < 46; ++i) os << ' ';
    os << " " << entry.description << '\n';
  }
  return os.str();
}

}  // namespace realgait
