#include "realgait/training.hpp"

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "realgait/checkpoint.hpp"

namespace realgait {

namespace fs = std::filesystem;
using nlohmann::json;

PKBatch pk_sample(const DatasetManifest& manifest, int p, int k, Rng& rng) {
  if (p < 1 || k < 1) throw std::invalid_argument("pk_sample: p, k must be >= 1");
  std::map<std::string, std::vector<const VideoRecord*>> by_subject;
  for (const VideoRecord* rec : manifest.videos_of(Split::train))
    by_subject[rec->subject_id].push_back(rec);
  if (static_cast<int>(by_subject.size()) < p)
    throw std::invalid_argument("pk_sample: fewer than p train subjects");

  std::vector<const std::pair<const std::string, std::vector<const VideoRecord*>>*>
      subjects;
  for (const auto& entry : by_subject) subjects.push_back(&entry);
  rng.partial_shuffle(subjects, static_cast<std::size_t>(p));

  PKBatch batch;
  batch.p = p;
  batch.k = k;
  for (int si = 0; si < p; ++si) {
    const auto& [subject, videos] = *subjects[static_cast<std::size_t>(si)];
    const int count = static_cast<int>(videos.size());
    std::vector<int> picks;
    if (count >= k) {
      std::vector<int> order(videos.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      rng.partial_shuffle(order, static_cast<std::size_t>(k));
      picks.assign(order.begin(), order.begin() + k);
    } else {
      for (int i = 0; i < k; ++i)
        picks.push_back(static_cast<int>(rng.uniform_int(0, count - 1)));
    }
    for (int pick : picks) {
      PKEntry entry;
      entry.subject_id = subject;
      entry.video_id = videos[static_cast<std::size_t>(pick)]->video_id;
      entry.label = si;
      batch.entries.push_back(std::move(entry));
    }
  }
  return batch;
}

long TrainSchedule::total_iterations() const {
  long total = 0;
  for (const auto& [lr, count] : phases) total += count;
  return total;
}

double TrainSchedule::learning_rate(long iteration) const {
  long consumed = 0;
  for (const auto& [lr, count] : phases) {
    consumed += count;
    if (iteration <= consumed) return lr;
  }
  return phases.empty() ? 0.0 : phases.back().first;
}

void TrainSchedule::validate() const {
  if (phases.empty()) throw std::invalid_argument("schedule has no phases");
  for (const auto& [lr, count] : phases) {
    if (lr <= 0.0) throw std::invalid_argument("learning rate must be > 0");
    if (count <= 0) throw std::invalid_argument("phase length must be > 0");
  }
  if (margin <= 0.0) throw std::invalid_argument("margin must be > 0");
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

struct Trainer::Batch {
  nn::Tensor<float> frames;  // [sum(clip sizes), 1, S, S]
  std::vector<int> clip_sizes;
  std::vector<int> labels;
  std::string rng_after;  // generator state once this batch was drawn
};

Trainer::Trainer(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                 const SamplingConfig& sampling_cfg,
                 const DatasetManifest& manifest, const SequenceSource& source,
                 std::string checkpoint_dir)
    : model_cfg_(model_cfg),
      cfg_(train_cfg),
      sampling_cfg_(sampling_cfg),
      manifest_(manifest),
      source_(source),
      checkpoint_dir_(std::move(checkpoint_dir)),
      adam_(train_cfg.adam),
      rng_(train_cfg.schedule.seed) {
  model_cfg_.validate();
  cfg_.schedule.validate();
  model_ = std::make_unique<nn::RealGaitNet<float>>(model_cfg_);
  initialize_model(*model_, cfg_.schedule.seed);
  if (!checkpoint_dir_.empty()) fs::create_directories(checkpoint_dir_);
}

Trainer::~Trainer() = default;

Trainer::Batch Trainer::prepare_batch(Rng& rng) const {
  PKBatch pk = pk_sample(manifest_, cfg_.p, cfg_.k, rng);
  Batch batch;
  const int size = model_cfg_.input_size;
  std::vector<nn::Tensor<float>> chunks;
  int total_frames = 0;
  for (auto& entry : pk.entries) {
    const int n = source_.length(entry.video_id);
    entry.clip = sample_clip(n, sampling_cfg_, rng);
    nn::Tensor<float> frames = source_.fetch(entry.video_id, entry.clip.indices);
    batch.clip_sizes.push_back(frames.dim(0));
    batch.labels.push_back(entry.label);
    total_frames += frames.dim(0);
    chunks.push_back(std::move(frames));
  }
  batch.frames = nn::Tensor<float>({total_frames, 1, size, size});
  std::size_t offset = 0;
  for (const auto& chunk : chunks) {
    std::copy(chunk.data(), chunk.data() + chunk.numel(),
              batch.frames.data() + offset);
    offset += chunk.numel();
  }
  batch.rng_after = rng.serialize();
  return batch;
}

void Trainer::apply_batch(const Batch& batch) {
  nn::Tensor<float> features =
      model_->forward(batch.frames, batch.clip_sizes, /*train=*/true);
  auto result = batch_all_triplet(features, batch.labels,
                                  static_cast<float>(cfg_.schedule.margin),
                                  cfg_.nonzero_average);
  if (result.degenerate)
    std::cerr << "warning: degenerate batch (single identity), loss = 0\n";
  last_loss_ = result.loss;
  if (!std::isfinite(last_loss_)) {
    const std::string dump =
        (fs::path(checkpoint_dir_.empty() ? "." : checkpoint_dir_) /
         ("diverged_" + std::to_string(iteration_ + 1) + ".json"))
            .string();
    json diag;
    diag["iteration"] = iteration_ + 1;
    diag["loss"] = "non-finite";
    json norms = json::object();
    for (const auto& p : model_->params()) {
      double acc = 0.0;
      for (std::size_t i = 0; i < p.value->numel(); ++i)
        acc += static_cast<double>((*p.value)[i]) * (*p.value)[i];
      norms[p.name] = std::sqrt(acc);
    }
    diag["param_norms"] = std::move(norms);
    std::ofstream(dump) << diag.dump(2) << '\n';
    throw std::runtime_error("non-finite loss at iteration " +
                             std::to_string(iteration_ + 1) +
                             "; diagnostics in " + dump);
  }

  model_->zero_grad();
  model_->backward(result.grad);
  auto params = model_->params();
  const float lr =
      static_cast<float>(cfg_.schedule.learning_rate(iteration_ + 1));
  adam_.step(params, lr);
}

double Trainer::run(long iterations,
                    const std::function<bool(long, double)>& callback) {
  const long total = cfg_.schedule.total_iterations();
  long target = iterations < 0 ? total : std::min(total, iteration_ + iterations);

  std::ofstream metrics;
  if (!checkpoint_dir_.empty())
    metrics.open(fs::path(checkpoint_dir_) / "metrics.log", std::ios::app);
  const auto t0 = std::chrono::steady_clock::now();

  // Bounded prefetch queue. The producer owns the generator, so the batch
  // stream is identical with or without prefetch; each batch carries the
  // generator state for exact checkpointing.
  std::deque<Batch> queue;
  std::mutex mu;
  std::condition_variable cv_full, cv_empty;
  bool done = false;
  const bool threaded = !cfg_.deterministic && cfg_.prefetch > 0;
  std::thread producer;
  std::exception_ptr producer_error;
  if (threaded) {
    producer = std::thread([&] {
      try {
        Rng rng = rng_;
        for (long i = iteration_; i < target; ++i) {
          Batch batch = prepare_batch(rng);
          std::unique_lock lock(mu);
          cv_full.wait(lock, [&] {
            return done || queue.size() < static_cast<std::size_t>(cfg_.prefetch);
          });
          if (done) return;
          queue.push_back(std::move(batch));
          cv_empty.notify_one();
        }
      } catch (...) {
        std::unique_lock lock(mu);
        producer_error = std::current_exception();
        cv_empty.notify_one();
      }
    });
  }

  struct JoinGuard {
    std::thread& t;
    std::mutex& mu;
    std::condition_variable& cv;
    bool& done;
    ~JoinGuard() {
      {
        std::unique_lock lock(mu);
        done = true;
        cv.notify_all();
      }
      if (t.joinable()) t.join();
    }
  } guard{producer, mu, cv_full, done};

  while (iteration_ < target) {
    Batch batch;
    if (threaded) {
      std::unique_lock lock(mu);
      cv_empty.wait(lock, [&] { return !queue.empty() || producer_error; });
      if (producer_error) std::rethrow_exception(producer_error);
      batch = std::move(queue.front());
      queue.pop_front();
      cv_full.notify_one();
    } else {
      batch = prepare_batch(rng_);
    }
    apply_batch(batch);
    rng_.deserialize(batch.rng_after);
    ++iteration_;

    if (metrics.is_open()) {
      const double wall =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
      metrics << "iter=" << iteration_ << " loss=" << last_loss_
              << " lr=" << cfg_.schedule.learning_rate(iteration_)
              << " wall_s=" << wall << '\n';
      metrics.flush();
    }
    if (!checkpoint_dir_.empty() && cfg_.checkpoint_every > 0 &&
        iteration_ % cfg_.checkpoint_every == 0)
      save_checkpoint();
    if (callback && !callback(iteration_, last_loss_)) break;
  }
  return last_loss_;
}

void Trainer::save_checkpoint() {
  if (checkpoint_dir_.empty())
    throw std::logic_error("trainer has no checkpoint directory");
  Archive archive = archive_model(*model_);
  json meta = json::parse(archive.meta_json);
  meta["trainer"] = {{"iteration", iteration_},
                     {"rng", rng_.serialize()},
                     {"adam_steps", adam_.step_count()},
                     {"loss", last_loss_}};
  archive.meta_json = meta.dump();
  auto params = model_->params();
  for (std::size_t i = 0; i < adam_.first_moments().size(); ++i) {
    const auto& name = params[i].name;
    NamedTensor m, v;
    m.shape = adam_.first_moments()[i].shape();
    m.data.assign(
        adam_.first_moments()[i].data(),
        adam_.first_moments()[i].data() + adam_.first_moments()[i].numel());
    v.shape = adam_.second_moments()[i].shape();
    v.data.assign(
        adam_.second_moments()[i].data(),
        adam_.second_moments()[i].data() + adam_.second_moments()[i].numel());
    archive.tensors.emplace("adam.m." + name, std::move(m));
    archive.tensors.emplace("adam.v." + name, std::move(v));
  }

  const std::string name = "ckpt_" + std::to_string(iteration_);
  save_archive((fs::path(checkpoint_dir_) / name).string(), archive);
  std::ofstream latest(fs::path(checkpoint_dir_) / "latest");
  latest << name << '\n';
}

void Trainer::resume(const std::string& name) {
  std::string ckpt = name;
  if (ckpt.empty()) {
    std::ifstream latest(fs::path(checkpoint_dir_) / "latest");
    if (!latest || !(latest >> ckpt))
      throw std::runtime_error("no latest checkpoint in " + checkpoint_dir_);
  }
  const Archive archive =
      load_archive((fs::path(checkpoint_dir_) / ckpt).string());
  restore_model(*model_, archive);
  const json meta = json::parse(archive.meta_json);
  const json& tj = meta.at("trainer");
  iteration_ = tj.at("iteration").get<long>();
  rng_.deserialize(tj.at("rng").get<std::string>());
  last_loss_ = tj.at("loss").get<double>();

  adam_ = Adam<float>(cfg_.adam);
  const long adam_steps = tj.at("adam_steps").get<long>();
  if (adam_steps > 0) {
    auto params = model_->params();
    auto& m = adam_.first_moments();
    auto& v = adam_.second_moments();
    for (const auto& p : params) {
      auto mt = archive.tensors.find("adam.m." + p.name);
      auto vt = archive.tensors.find("adam.v." + p.name);
      if (mt == archive.tensors.end() || vt == archive.tensors.end())
        throw std::runtime_error("checkpoint is missing optimizer state for " +
                                 p.name);
      nn::Tensor<float> mten(p.value->shape()), vten(p.value->shape());
      std::copy(mt->second.data.begin(), mt->second.data.end(), mten.data());
      std::copy(vt->second.data.begin(), vt->second.data.end(), vten.data());
      m.push_back(std::move(mten));
      v.push_back(std::move(vten));
    }
  }
  adam_.restore(adam_steps);
}

}  // namespace realgait
