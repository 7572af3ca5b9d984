#include "realgait/data.hpp"

#include <algorithm>
#include <filesystem>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "realgait/silhouette.hpp"

namespace realgait {

namespace fs = std::filesystem;

nn::Tensor<float> resize_frames(const nn::Tensor<float>& frames, int out_size) {
  const int n = frames.dim(0), h = frames.dim(2), w = frames.dim(3);
  if (h == out_size && w == out_size) return frames;
  nn::Tensor<float> out({n, 1, out_size, out_size});
  for (int i = 0; i < n; ++i) {
    cv::Mat src(h, w, CV_32FC1,
                const_cast<float*>(frames.data()) +
                    static_cast<std::size_t>(i) * h * w);
    cv::Mat dst(out_size, out_size, CV_32FC1,
                out.data() + static_cast<std::size_t>(i) * out_size * out_size);
    cv::resize(src, dst, {out_size, out_size}, 0, 0, cv::INTER_LINEAR);
  }
  return out;
}

DiskSequenceSource::DiskSequenceSource(std::string root, int input_size)
    : root_(std::move(root)), input_size_(input_size) {}

const nn::Tensor<float>& DiskSequenceSource::frames_of(
    const std::string& video_id) const {
  auto it = cache_.find(video_id);
  if (it != cache_.end()) return it->second;

  const SilhouetteSequence seq =
      load_silhouette_sequence((fs::path(root_) / video_id).string());
  if (seq.frames.empty())
    throw std::runtime_error("video " + video_id + " has no silhouettes");
  nn::Tensor<float> raw({static_cast<int>(seq.frames.size()), 1,
                         kSilhouetteSize, kSilhouetteSize});
  std::size_t offset = 0;
  for (const auto& frame : seq.frames)
    for (const auto v : frame.grid) raw[offset++] = static_cast<float>(v);
  auto [pos, inserted] =
      cache_.emplace(video_id, resize_frames(raw, input_size_));
  return pos->second;
}

int DiskSequenceSource::length(const std::string& video_id) const {
  return frames_of(video_id).dim(0);
}

nn::Tensor<float> DiskSequenceSource::fetch(
    const std::string& video_id, const std::vector<int>& indices) const {
  const nn::Tensor<float>& all = frames_of(video_id);
  const int n = all.dim(0);
  const std::size_t cell = static_cast<std::size_t>(input_size_) * input_size_;
  nn::Tensor<float> out(
      {static_cast<int>(indices.size()), 1, input_size_, input_size_});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int ordinal = indices[i];
    if (ordinal < 1 || ordinal > n)
      throw std::out_of_range("frame ordinal out of range for " + video_id);
    std::copy(all.data() + static_cast<std::size_t>(ordinal - 1) * cell,
              all.data() + static_cast<std::size_t>(ordinal) * cell,
              out.data() + i * cell);
  }
  return out;
}

void InMemorySequenceSource::add(const std::string& video_id,
                                 nn::Tensor<float> frames) {
  sequences_.emplace(video_id, std::move(frames));
}

int InMemorySequenceSource::length(const std::string& video_id) const {
  auto it = sequences_.find(video_id);
  if (it == sequences_.end())
    throw std::out_of_range("unknown video: " + video_id);
  return it->second.dim(0);
}

nn::Tensor<float> InMemorySequenceSource::fetch(
    const std::string& video_id, const std::vector<int>& indices) const {
  auto it = sequences_.find(video_id);
  if (it == sequences_.end())
    throw std::out_of_range("unknown video: " + video_id);
  const auto& all = it->second;
  const std::size_t cell =
      static_cast<std::size_t>(all.dim(2)) * all.dim(3);
  nn::Tensor<float> out(
      {static_cast<int>(indices.size()), 1, all.dim(2), all.dim(3)});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int ordinal = indices[i];
    if (ordinal < 1 || ordinal > all.dim(0))
      throw std::out_of_range("frame ordinal out of range for " + video_id);
    std::copy(all.data() + static_cast<std::size_t>(ordinal - 1) * cell,
              all.data() + static_cast<std::size_t>(ordinal) * cell,
              out.data() + i * cell);
  }
  return out;
}

EmbeddingStore embed_videos(nn::RealGaitNet<float>& model,
                            const SequenceSource& source,
                            const std::vector<const VideoRecord*>& videos,
                            const EmbedOptions& opts) {
  EmbeddingStore store;
  for (const VideoRecord* rec : videos) {
    const int n = source.length(rec->video_id);
    const int take = std::min(n, opts.max_frames);
    std::vector<int> indices(static_cast<std::size_t>(take));
    for (int i = 0; i < take; ++i) indices[static_cast<std::size_t>(i)] = i + 1;
    nn::Tensor<float> frames = source.fetch(rec->video_id, indices);
    EmbeddingRecord er;
    er.subject_id = rec->subject_id;
    er.camera_id = rec->camera_id;
    er.vec = model.embed(frames);
    store.put(rec->video_id, std::move(er));
  }
  return store;
}

}  // namespace realgait
