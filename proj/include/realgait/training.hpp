#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "realgait/manifest.hpp"
#include "realgait/model.hpp"
#include "realgait/rng.hpp"
#include "realgait/sampling.hpp"

namespace realgait {

// ---------------------------------------------------------------------------
// PK batches
// ---------------------------------------------------------------------------
struct PKEntry {
  std::string subject_id;
  std::string video_id;
  int label = 0;  // subject index within the batch
  SampledClip clip;
};

struct PKBatch {
  int p = 0, k = 0;
  std::vector<PKEntry> entries;  // p * k, grouped by subject
};

// p train subjects uniformly without replacement, k videos each (with
// replacement when a subject has fewer than k). Clips are attached by the
// caller.
PKBatch pk_sample(const DatasetManifest& manifest, int p, int k, Rng& rng);

// ---------------------------------------------------------------------------
// Batch-all triplet loss over per-patch sub-features.
// ---------------------------------------------------------------------------
template <typename T>
struct TripletResult {
  T loss = T(0);
  nn::Tensor<T> grad;      // same shape as the features
  long active_triples = 0;  // hinge > 0, summed over patches
  long total_triples = 0;
  bool degenerate = false;  // fewer than 2 identities or no positive pair
};

// features: [P, B, d]; labels: B identity indices. Per patch, the hinge
// margin + D(a,p) - D(a,n) is averaged over the triples it activates
// (or over all valid triples when nonzero_average is false); patch losses
// are averaged. Distances are Euclidean in the patch's d-space.
template <typename T>
TripletResult<T> batch_all_triplet(const nn::Tensor<T>& features,
                                   const std::vector<int>& labels,
                                   T margin = T(0.2),
                                   bool nonzero_average = true) {
  if (features.ndim() != 3)
    throw std::invalid_argument("batch_all_triplet: features must be [P, B, d]");
  const int p_count = features.dim(0);
  const int b = features.dim(1);
  const int d = features.dim(2);
  if (static_cast<int>(labels.size()) != b)
    throw std::invalid_argument("batch_all_triplet: label count mismatch");

  TripletResult<T> result;
  result.grad = nn::Tensor<T>(features.shape());

  // Valid triples do not depend on the patch.
  struct Triple {
    int a, p, n;
  };
  std::vector<Triple> triples;
  for (int a = 0; a < b; ++a)
    for (int pos = 0; pos < b; ++pos) {
      if (pos == a || labels[pos] != labels[a]) continue;
      for (int neg = 0; neg < b; ++neg)
        if (labels[neg] != labels[a]) triples.push_back({a, pos, neg});
    }
  if (triples.empty()) {
    result.degenerate = true;
    return result;
  }

  const T eps = T(1e-12);
  // The patch mean is split into margin * (active/denom) + distance part, so
  // a batch of identical points comes out as exactly the margin.
  double margin_ratio_acc = 0.0;
  double distance_acc = 0.0;
  bool finite = true;
  std::vector<T> dist(static_cast<std::size_t>(b) * b);
  for (int patch = 0; patch < p_count; ++patch) {
    const T* feat =
        features.data() + static_cast<std::size_t>(patch) * b * d;
    T* grad = result.grad.data() + static_cast<std::size_t>(patch) * b * d;

    for (int i = 0; i < b; ++i)
      for (int j = 0; j < b; ++j) {
        double acc = 0.0;
        for (int kdim = 0; kdim < d; ++kdim) {
          const double diff = static_cast<double>(feat[i * d + kdim]) -
                              static_cast<double>(feat[j * d + kdim]);
          acc += diff * diff;
        }
        dist[static_cast<std::size_t>(i) * b + j] =
            static_cast<T>(std::sqrt(acc));
        finite = finite && std::isfinite(acc);
      }

    // First pass: count the active triples so the averaging constant is
    // known before gradients are scattered.
    long active = 0;
    for (const auto& t : triples) {
      const T hinge = margin + dist[static_cast<std::size_t>(t.a) * b + t.p] -
                      dist[static_cast<std::size_t>(t.a) * b + t.n];
      if (hinge > T(0)) ++active;
    }
    result.total_triples += static_cast<long>(triples.size());
    result.active_triples += active;

    const long denom =
        nonzero_average ? active : static_cast<long>(triples.size());
    if (denom == 0) continue;
    const T scale = T(1) / static_cast<T>(denom);
    margin_ratio_acc +=
        static_cast<double>(active) / static_cast<double>(denom);

    double patch_distance = 0.0;
    for (const auto& t : triples) {
      const T d_ap = dist[static_cast<std::size_t>(t.a) * b + t.p];
      const T d_an = dist[static_cast<std::size_t>(t.a) * b + t.n];
      const T hinge = margin + d_ap - d_an;
      if (hinge <= T(0)) continue;
      patch_distance += static_cast<double>(d_ap) - static_cast<double>(d_an);
      // d hinge / d D(a,p) = +1, d hinge / d D(a,n) = -1.
      if (d_ap > eps) {
        const T c = scale / d_ap;
        for (int kdim = 0; kdim < d; ++kdim) {
          const T diff = feat[t.a * d + kdim] - feat[t.p * d + kdim];
          grad[t.a * d + kdim] += c * diff;
          grad[t.p * d + kdim] -= c * diff;
        }
      }
      if (d_an > eps) {
        const T c = scale / d_an;
        for (int kdim = 0; kdim < d; ++kdim) {
          const T diff = feat[t.a * d + kdim] - feat[t.n * d + kdim];
          grad[t.a * d + kdim] -= c * diff;
          grad[t.n * d + kdim] += c * diff;
        }
      }
    }
    distance_acc += patch_distance / static_cast<double>(denom);
  }

  result.loss =
      finite ? static_cast<T>(static_cast<double>(margin) *
                                  (margin_ratio_acc / p_count) +
                              distance_acc / p_count)
             : std::numeric_limits<T>::quiet_NaN();
  const T patch_scale = T(1) / static_cast<T>(p_count);
  for (std::size_t i = 0; i < result.grad.numel(); ++i)
    result.grad[i] *= patch_scale;
  return result;
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------
template <typename T>
void initialize_params(std::vector<nn::ParamRef<T>>& params, Rng& rng) {
  for (auto& p : params) {
    switch (p.init) {
      case nn::InitKind::he_conv: {
        const T stddev = static_cast<T>(std::sqrt(2.0 / p.fan_in));
        for (std::size_t i = 0; i < p.value->numel(); ++i)
          (*p.value)[i] = static_cast<T>(rng.normal()) * stddev;
        break;
      }
      case nn::InitKind::xavier: {
        const T stddev =
            static_cast<T>(std::sqrt(2.0 / (p.fan_in + p.fan_out)));
        for (std::size_t i = 0; i < p.value->numel(); ++i)
          (*p.value)[i] = static_cast<T>(rng.normal()) * stddev;
        break;
      }
      case nn::InitKind::zero:
        p.value->zero();
        break;
      case nn::InitKind::bn_scale:
        p.value->fill(T(1));
        break;
      case nn::InitKind::identity_affine_bias: {
        p.value->zero();
        (*p.value)[0] = T(1);
        (*p.value)[4] = T(1);
        break;
      }
    }
  }
}

template <typename T>
void initialize_model(nn::RealGaitNet<T>& model, std::uint64_t seed) {
  Rng rng(seed);
  auto params = model.params();
  initialize_params(params, rng);
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------
struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
class Adam {
 public:
  explicit Adam(const AdamConfig& cfg = {}) : cfg_(cfg) {}

  void step(std::vector<nn::ParamRef<T>>& params, T lr) {
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.emplace_back(p.value->shape());
        v_.emplace_back(p.value->shape());
      }
    }
    if (m_.size() != params.size())
      throw std::logic_error("Adam: parameter count changed");
    ++t_;
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T corr1 = T(1) - static_cast<T>(std::pow(cfg_.beta1, t_));
    const T corr2 = T(1) - static_cast<T>(std::pow(cfg_.beta2, t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& value = *params[i].value;
      auto& grad = *params[i].grad;
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < value.numel(); ++j) {
        m[j] = b1 * m[j] + (T(1) - b1) * grad[j];
        v[j] = b2 * v[j] + (T(1) - b2) * grad[j] * grad[j];
        const T mhat = m[j] / corr1;
        const T vhat = v[j] / corr2;
        value[j] -= lr * mhat / (std::sqrt(vhat) + static_cast<T>(cfg_.eps));
      }
    }
  }

  long step_count() const { return t_; }
  std::vector<nn::Tensor<T>>& first_moments() { return m_; }
  std::vector<nn::Tensor<T>>& second_moments() { return v_; }
  void restore(long t) { t_ = t; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<nn::Tensor<T>> m_, v_;
};

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------
struct TrainSchedule {
  std::vector<std::pair<double, long>> phases = {{1e-4, 150000},
                                                 {1e-5, 100000}};
  double margin = 0.2;
  std::uint64_t seed = 0;

  long total_iterations() const;
  double learning_rate(long iteration) const;  // 1-based
  void validate() const;
};

struct TrainConfig {
  int p = 16;
  int k = 2;
  TrainSchedule schedule;
  AdamConfig adam;
  bool nonzero_average = true;
  long checkpoint_every = 10000;
  bool deterministic = false;  // serializes data preparation
  int prefetch = 2;            // bounded queue depth when not deterministic
};

// Source of model-ready frames. Indices are 1-based sequence ordinals, and
// frames come back as [m, 1, S, S] with values in [0, 1].
class SequenceSource {
 public:
  virtual ~SequenceSource() = default;
  virtual int length(const std::string& video_id) const = 0;
  virtual nn::Tensor<float> fetch(const std::string& video_id,
                                  const std::vector<int>& indices) const = 0;
};

class Trainer {
 public:
  Trainer(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
          const SamplingConfig& sampling_cfg, const DatasetManifest& manifest,
          const SequenceSource& source, std::string checkpoint_dir);
  ~Trainer();

  // Runs until the schedule ends or `iterations` more steps complete.
  // Returns the last loss. The optional callback sees (iteration, loss) and
  // may stop training early by returning false.
  double run(long iterations = -1,
             const std::function<bool(long, double)>& callback = {});

  void save_checkpoint();
  // Restores model, optimizer and rng from <dir>/<name or latest>.
  void resume(const std::string& name = "");

  long iteration() const { return iteration_; }
  nn::RealGaitNet<float>& model() { return *model_; }

 private:
  struct Batch;
  Batch prepare_batch(Rng& rng) const;
  void apply_batch(const Batch& batch);

  ModelConfig model_cfg_;
  TrainConfig cfg_;
  SamplingConfig sampling_cfg_;
  const DatasetManifest& manifest_;
  const SequenceSource& source_;
  std::string checkpoint_dir_;

  std::unique_ptr<nn::RealGaitNet<float>> model_;
  Adam<float> adam_;
  Rng rng_;
  long iteration_ = 0;
  double last_loss_ = 0.0;
};

}  // namespace realgait
