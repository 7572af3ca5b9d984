#pragma once

#include <map>
#include <string>
#include <vector>

#include "realgait/evaluation.hpp"
#include "realgait/manifest.hpp"
#include "realgait/training.hpp"

namespace realgait {

// Serves silhouette sequences from an extraction output tree
// (<root>/<video_id>/<frame>.png), resized to the model input size with
// values in [0, 1]. Frames are cached per video after first use.
class DiskSequenceSource : public SequenceSource {
 public:
  DiskSequenceSource(std::string root, int input_size);

  int length(const std::string& video_id) const override;
  nn::Tensor<float> fetch(const std::string& video_id,
                          const std::vector<int>& indices) const override;

 private:
  const nn::Tensor<float>& frames_of(const std::string& video_id) const;

  std::string root_;
  int input_size_;
  mutable std::map<std::string, nn::Tensor<float>> cache_;
};

// Synthetic sequences held in memory; frames are [n, 1, S, S].
class InMemorySequenceSource : public SequenceSource {
 public:
  void add(const std::string& video_id, nn::Tensor<float> frames);

  int length(const std::string& video_id) const override;
  nn::Tensor<float> fetch(const std::string& video_id,
                          const std::vector<int>& indices) const override;

 private:
  std::map<std::string, nn::Tensor<float>> sequences_;
};

// Bilinear resize of a single-channel [1, 1, h, w] or [n, 1, h, w] batch.
nn::Tensor<float> resize_frames(const nn::Tensor<float>& frames, int out_size);

// Embeds whole sequences (all frames, capped) into a store.
struct EmbedOptions {
  int max_frames = 720;
};

EmbeddingStore embed_videos(nn::RealGaitNet<float>& model,
                            const SequenceSource& source,
                            const std::vector<const VideoRecord*>& videos,
                            const EmbedOptions& opts = {});

}  // namespace realgait
