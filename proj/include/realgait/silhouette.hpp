#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <opencv2/core.hpp>

#include "realgait/manifest.hpp"
#include "realgait/types.hpp"

namespace realgait {

struct GmmParams {
  int history = 500;
  double var_threshold = 16.0;
  bool detect_shadows = true;          // shadow-labeled pixels -> background
  double learning_rate = 1.0 / 500.0;  // fixed; pass -1 for adaptive
  int morph_kernel = 0;                // optional opening, 0 disables
};

// Adaptive per-pixel mixture background subtraction over an ordered frame
// list. One binary mask (CV_8UC1, values {0,255}) per frame; deterministic
// for identical inputs and parameters.
std::vector<cv::Mat> gmm_subtract(const std::vector<cv::Mat>& frames,
                                  const GmmParams& params = {});

// Incremental flavour of the same model for streaming extraction.
class GmmSubtractor {
 public:
  explicit GmmSubtractor(const GmmParams& params = {});
  ~GmmSubtractor();
  cv::Mat apply(const cv::Mat& frame);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Linear interpolation of center and size between the two bracketing
// keyframes; exact at keyframes. Throws outside the keyframe span.
BoundingBox interpolate_boxes(const std::vector<BoundingBox>& keyframes,
                              int frame_index);

struct ExpandFactors {
  double height = 1.1;
  double width = 1.35;
};

// Grows the box around its center; clamping happens at crop time.
BoundingBox expand_box(const BoundingBox& box, const ExpandFactors& f = {});

// Axis-aligned crop of the box region, zero-padded where the box exceeds
// the frame. Throws when the box does not overlap the frame at all.
cv::Mat crop(const cv::Mat& frame, const BoundingBox& box);

// Height-normalizes a binary mask crop: vertical crop to the foreground
// rows, isotropic rescale to height 224, horizontal placement with the
// foreground median column at 112 on a 224x224 canvas. Returns nullopt for
// an empty mask (the frame is dropped upstream).
std::optional<SilhouetteFrame> normalize_silhouette(const cv::Mat& mask_crop);

enum class PedestrianMode { color, binary, grayscale_quantized };
enum class BackgroundMode { color, subtracted };

struct InputVariant {
  PedestrianMode pedestrian = PedestrianMode::binary;
  BackgroundMode background = BackgroundMode::subtracted;
  int quantization_bins = 3;  // >= 2, grayscale_quantized only
};

// Composes the ablation input image from a color crop and its mask crop.
cv::Mat compose_variant(const cv::Mat& color_crop, const cv::Mat& mask_crop,
                        const InputVariant& variant);

// Uniform m-bin quantization of a grayscale image over [0, 255]; idempotent.
cv::Mat quantize_gray(const cv::Mat& gray, int bins);

// Sequential frame source: a directory of numbered images or a video file.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  // Next (frame_index, BGR frame), or nullopt at end of stream.
  virtual std::optional<std::pair<int, cv::Mat>> next() = 0;
};

std::unique_ptr<FrameSource> open_frame_source(const std::string& path);

struct ExtractOptions {
  GmmParams gmm;
  ExpandFactors expand;
  // When set, additionally writes composed variant crops under variants/.
  std::optional<InputVariant> variant;
};

struct ExtractResult {
  std::string video_id;
  int frames_written = 0;
  std::vector<int> dropped_frames;
};

// Full extraction for one video: background subtraction, box interpolation,
// crop, normalization, and the on-disk layout (<frame_index>.png + a
// sequence.json sidecar). Removes partial output on failure.
ExtractResult extract_video(const VideoRecord& record,
                            const std::string& video_path,
                            const std::string& out_dir,
                            const ExtractOptions& options = {});

// Reads an extraction output directory back into memory.
SilhouetteSequence load_silhouette_sequence(const std::string& dir);

// Writes/reads the sidecar-compatible sequence for synthetic fixtures.
void save_silhouette_sequence(const SilhouetteSequence& seq,
                              const std::string& dir,
                              const std::vector<int>& dropped = {});

}  // namespace realgait
