#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "realgait/checkpoint.hpp"
#include "realgait/config.hpp"
#include "realgait/data.hpp"
#include "realgait/evaluation.hpp"
#include "realgait/gei.hpp"
#include "realgait/manifest.hpp"
#include "realgait/silhouette.hpp"
#include "realgait/training.hpp"

namespace fs = std::filesystem;
using namespace realgait;
using nlohmann::json;

namespace {

struct GlobalArgs {
  std::string config_file;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int workers = 1;
  bool deterministic = false;
};

RunConfig make_config(const GlobalArgs& args) {
  RunConfig config;
  if (!args.config_file.empty()) apply_config_file(config, args.config_file);
  apply_env_overrides(config);
  for (const auto& kv : args.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("--set expects key=value, got " + kv);
    apply_key_value(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (args.seed_given) {
    config.train.schedule.seed = args.seed;
    config.gei_cluster.seed = args.seed;
  }
  if (args.deterministic) config.train.deterministic = true;
  config.validate();
  return config;
}

// Runs fn(i) for i in [0, count) on `workers` threads. Items are
// independent, so scheduling cannot change any output.
void parallel_for(int count, int workers, const std::function<void(int)>& fn) {
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::mutex error_mu;
  std::exception_ptr error;
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::scoped_lock lock(error_mu);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

void write_png16(const std::string& path, const std::vector<float>& grid) {
  cv::Mat img(kSilhouetteSize, kSilhouetteSize, CV_16UC1);
  for (int y = 0; y < kSilhouetteSize; ++y)
    for (int x = 0; x < kSilhouetteSize; ++x) {
      const float v =
          grid[static_cast<std::size_t>(y) * kSilhouetteSize + x];
      img.at<std::uint16_t>(y, x) =
          static_cast<std::uint16_t>(std::lround(v * 65535.0f));
    }
  std::vector<std::uint8_t> bytes;
  cv::imencode(".png", img, bytes);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

int cmd_extract(const GlobalArgs& global, const std::string& manifest_path,
                const std::string& video_root, const std::string& out_root) {
  const RunConfig config = make_config(global);
  const DatasetManifest manifest = load_manifest(manifest_path);

  ExtractOptions options;
  options.gmm = config.gmm;
  options.expand = config.expand;
  if (config.extract.write_variants) options.variant = config.extract.variant;

  std::mutex report_mu;
  int total_dropped = 0;
  parallel_for(
      static_cast<int>(manifest.records.size()), global.workers, [&](int i) {
        const VideoRecord& rec = manifest.records[static_cast<std::size_t>(i)];
        const std::string video_path =
            (fs::path(video_root) / rec.video_id).string();
        if (!fs::exists(video_path))
          throw std::runtime_error("missing video input for " + rec.video_id +
                                   ": " + video_path);
        const ExtractResult result = extract_video(
            rec, video_path, (fs::path(out_root) / rec.video_id).string(),
            options);
        std::scoped_lock lock(report_mu);
        total_dropped += static_cast<int>(result.dropped_frames.size());
        std::cout << rec.video_id << ": " << result.frames_written
                  << " silhouettes";
        if (!result.dropped_frames.empty())
          std::cout << ", " << result.dropped_frames.size() << " dropped";
        std::cout << '\n';
      });
  std::cout << "extracted " << manifest.records.size() << " videos, "
            << total_dropped << " frames dropped\n";
  return 0;
}

int cmd_gei(const GlobalArgs& global, const std::string& silhouette_root,
            const std::string& out_root, const std::string& kinds) {
  const RunConfig config = make_config(global);
  std::vector<std::string> videos;
  for (const auto& entry : fs::directory_iterator(silhouette_root))
    if (entry.is_directory() && fs::exists(entry.path() / "sequence.json"))
      videos.push_back(entry.path().filename().string());
  std::sort(videos.begin(), videos.end());
  if (videos.empty())
    throw std::runtime_error("no extracted videos under " + silhouette_root);

  const bool want_full = kinds.find("full") != std::string::npos;
  const bool want_cluster = kinds.find("cluster") != std::string::npos;
  const bool want_piecewise = kinds.find("piecewise") != std::string::npos;

  parallel_for(static_cast<int>(videos.size()), global.workers, [&](int i) {
    const std::string& video_id = videos[static_cast<std::size_t>(i)];
    const SilhouetteSequence seq = load_silhouette_sequence(
        (fs::path(silhouette_root) / video_id).string());
    const fs::path out_dir = fs::path(out_root) / video_id;
    fs::create_directories(out_dir);

    json sidecar;
    sidecar["video_id"] = video_id;
    if (want_full) {
      const GaitEnergyImage gei = gei_full(seq);
      write_png16((out_dir / "gei_full.png16").string(), gei.grid);
      sidecar["full"] = {{"source_frames", gei.source_frames}};
    }
    if (want_cluster) {
      const auto geis = gei_cluster(seq, config.gei_cluster);
      json list = json::array();
      for (std::size_t c = 0; c < geis.size(); ++c) {
        write_png16(
            (out_dir / ("gei_cluster_" + std::to_string(c) + ".png16")).string(),
            geis[c].grid);
        list.push_back({{"source_frames", geis[c].source_frames}});
      }
      sidecar["cluster"] = std::move(list);
    }
    if (want_piecewise) {
      std::vector<std::pair<double, double>> points;
      for (const auto& frame : seq.frames)
        points.emplace_back(frame.traj_x, frame.traj_y);
      const auto segments = segment_trajectory(points, config.piecewise);
      const auto geis = gei_piecewise(seq, config.piecewise);
      json list = json::array();
      for (std::size_t s = 0; s < geis.size(); ++s) {
        write_png16(
            (out_dir / ("gei_piecewise_" + std::to_string(s) + ".png16")).string(),
            geis[s].grid);
        list.push_back({{"source_frames", geis[s].source_frames},
                        {"line",
                         {{"cx", segments[s].cx},
                          {"cy", segments[s].cy},
                          {"dir_x", segments[s].dir_x},
                          {"dir_y", segments[s].dir_y},
                          {"sse", segments[s].sse}}}});
      }
      sidecar["piecewise"] = std::move(list);
    }
    std::ofstream((out_dir / "gei.json").string()) << sidecar.dump(2) << '\n';
  });
  std::cout << "energy images written for " << videos.size() << " videos\n";
  return 0;
}

int cmd_train(const GlobalArgs& global, const std::string& manifest_path,
              const std::string& silhouette_root, const std::string& ckpt_dir,
              bool resume, long iterations) {
  const RunConfig config = make_config(global);
  const DatasetManifest manifest = load_manifest(manifest_path);
  DiskSequenceSource source(silhouette_root, config.model.input_size);

  Trainer trainer(config.model, config.train, config.sampling, manifest, source,
                  ckpt_dir);
  if (resume) trainer.resume();
  const double loss = trainer.run(iterations);
  trainer.save_checkpoint();
  std::cout << "stopped after iteration " << trainer.iteration()
            << ", loss " << loss << '\n';
  return 0;
}

std::string resolve_checkpoint(const std::string& path) {
  if (fs::is_directory(path)) {
    std::ifstream latest(fs::path(path) / "latest");
    std::string name;
    if (!latest || !(latest >> name))
      throw std::runtime_error("no latest checkpoint in " + path);
    return (fs::path(path) / name).string();
  }
  return path;
}

int cmd_embed(const GlobalArgs& global, const std::string& manifest_path,
              const std::string& silhouette_root, const std::string& ckpt,
              const std::string& out_dir, const std::string& split_name) {
  const RunConfig config = make_config(global);
  const DatasetManifest manifest = load_manifest(manifest_path);
  const std::string ckpt_file = resolve_checkpoint(ckpt);

  std::vector<const VideoRecord*> videos;
  if (split_name == "all") {
    for (const auto& rec : manifest.records) videos.push_back(&rec);
  } else {
    const Split split = split_name == "train" ? Split::train : Split::test;
    videos = manifest.videos_of(split);
  }

  EmbedOptions opts;
  opts.max_frames = config.eval.max_frames;

  // Forward passes cache activations inside the layers, so each worker gets
  // its own model replica and sequence source.
  const int workers =
      std::max(1, std::min(global.workers, static_cast<int>(videos.size())));
  std::vector<EmbeddingStore> partials(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  std::mutex error_mu;
  std::exception_ptr error;
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      try {
        auto model = load_model(ckpt_file);
        DiskSequenceSource source(silhouette_root, model->config().input_size);
        std::vector<const VideoRecord*> shard;
        for (std::size_t i = static_cast<std::size_t>(t); i < videos.size();
             i += static_cast<std::size_t>(workers))
          shard.push_back(videos[i]);
        partials[static_cast<std::size_t>(t)] =
            embed_videos(*model, source, shard, opts);
      } catch (...) {
        std::scoped_lock lock(error_mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& thread : pool) thread.join();
  if (error) std::rethrow_exception(error);

  EmbeddingStore store;
  for (auto& partial : partials)
    for (const auto& [video_id, rec] : partial.records())
      store.put(video_id, rec);
  store.save(out_dir);
  std::cout << "embedded " << store.size() << " videos ("
            << store.embedding_length() << " values each) into " << out_dir
            << '\n';
  return 0;
}

int cmd_eval(const GlobalArgs& global, const std::string& manifest_path,
             const std::string& store_dir, const std::string& report_path) {
  const RunConfig config = make_config(global);
  const DatasetManifest manifest = load_manifest(manifest_path);
  const EmbeddingStore store = EmbeddingStore::load(store_dir);

  ProtocolOptions options;
  if (!config.eval.probe_override.empty()) {
    std::ifstream in(config.eval.probe_override);
    if (!in)
      throw std::runtime_error("cannot open probe override file: " +
                               config.eval.probe_override);
    for (const auto& [subject, video] : json::parse(in).items())
      options.probe_override[subject] = video.get<std::string>();
  }

  const auto specs = build_probe_gallery(
      manifest, protocol_from_string(config.eval.protocol), options);

  EvalOptions eval_opts;
  eval_opts.distance.metric = config.eval.metric;
  eval_opts.distance.patches = config.model.patch_dim > 0
                                   ? static_cast<int>(store.embedding_length() /
                                                      config.model.patch_dim)
                                   : 1;
  eval_opts.rank_levels = config.eval.rank_levels;
  eval_opts.far_levels = config.eval.far_levels;

  const EvalReport report = run_protocol(specs, store, eval_opts);
  std::cout << report.render_text();
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    out << report.to_json() << '\n';
    std::ofstream text(report_path + ".txt");
    text << report.render_text();
    std::cout << "report written to " << report_path << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gait recognition toolkit: silhouette extraction, energy images,"
               " metric training and scene-level evaluation"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags remain valid after the subcommand
  app.footer(config_key_help());

  GlobalArgs global;
  app.add_option("--config", global.config_file,
                 "config file (JSON or key=value lines)");
  app.add_option("--set", global.sets, "override one config key (key=value)")
      ->take_all();
  app.add_option("--seed", global.seed, "override training/clustering seeds")
      ->each([&](const std::string&) { global.seed_given = true; });
  app.add_option("--workers", global.workers, "worker threads for extract/gei")
      ->check(CLI::PositiveNumber);
  app.add_flag("--deterministic", global.deterministic,
               "serialize all data preparation for bit-exact runs");

  std::string manifest_path, video_root, out_root, silhouette_root, ckpt_dir,
      store_dir, report_path, split_name = "test", kinds = "full,cluster,piecewise";
  bool resume = false;
  long iterations = -1;

  auto* extract = app.add_subcommand("extract",
                                     "video + boxes -> normalized silhouettes");
  extract->add_option("--manifest", manifest_path)->required();
  extract->add_option("--videos", video_root, "root with per-video inputs")
      ->required();
  extract->add_option("--out", out_root)->required();

  auto* gei = app.add_subcommand("gei", "silhouettes -> gait energy images");
  gei->add_option("--silhouettes", silhouette_root)->required();
  gei->add_option("--out", out_root)->required();
  gei->add_option("--kinds", kinds, "comma list of full,cluster,piecewise");

  auto* train = app.add_subcommand("train", "train the recognition network");
  train->add_option("--manifest", manifest_path)->required();
  train->add_option("--silhouettes", silhouette_root)->required();
  train->add_option("--ckpt", ckpt_dir, "checkpoint directory")->required();
  train->add_flag("--resume", resume, "continue from the latest checkpoint");
  train->add_option("--iterations", iterations,
                    "stop after this many additional iterations");

  auto* embed = app.add_subcommand("embed", "sequences -> embedding store");
  embed->add_option("--manifest", manifest_path)->required();
  embed->add_option("--silhouettes", silhouette_root)->required();
  embed->add_option("--ckpt", ckpt_dir, "checkpoint file or directory")
      ->required();
  embed->add_option("--out", store_dir)->required();
  embed->add_option("--split", split_name, "train, test or all");

  auto* eval = app.add_subcommand("eval", "embedding store -> protocol report");
  eval->add_option("--manifest", manifest_path)->required();
  eval->add_option("--embeddings", store_dir)->required();
  eval->add_option("--report", report_path, "also write JSON + text reports");

  CLI11_PARSE(app, argc, argv);

  try {
    if (extract->parsed())
      return cmd_extract(global, manifest_path, video_root, out_root);
    if (gei->parsed()) return cmd_gei(global, silhouette_root, out_root, kinds);
    if (train->parsed())
      return cmd_train(global, manifest_path, silhouette_root, ckpt_dir, resume,
                       iterations);
    if (embed->parsed())
      return cmd_embed(global, manifest_path, silhouette_root, ckpt_dir,
                       store_dir, split_name);
    if (eval->parsed())
      return cmd_eval(global, manifest_path, store_dir, report_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
