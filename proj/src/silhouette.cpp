#include "realgait/silhouette.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <opencv2/video/background_segm.hpp>
#include <opencv2/videoio.hpp>

namespace realgait {

namespace fs = std::filesystem;
using nlohmann::json;

struct GmmSubtractor::Impl {
  cv::Ptr<cv::BackgroundSubtractorMOG2> mog2;
  GmmParams params;
  cv::Size frame_size{0, 0};
};

GmmSubtractor::GmmSubtractor(const GmmParams& params)
    : impl_(std::make_unique<Impl>()) {
  impl_->params = params;
  impl_->mog2 = cv::createBackgroundSubtractorMOG2(
      params.history, params.var_threshold, params.detect_shadows);
}

GmmSubtractor::~GmmSubtractor() = default;

cv::Mat GmmSubtractor::apply(const cv::Mat& frame) {
  if (frame.empty()) throw std::invalid_argument("gmm: empty frame");
  if (impl_->frame_size.area() == 0) {
    impl_->frame_size = frame.size();
  } else if (frame.size() != impl_->frame_size) {
    throw std::invalid_argument("gmm: frame dimension mismatch");
  }
  cv::Mat raw;
  impl_->mog2->apply(frame, raw, impl_->params.learning_rate);
  // MOG2 labels shadows 127; only definite foreground (255) is kept.
  cv::Mat mask;
  cv::compare(raw, 200, mask, cv::CMP_GT);
  if (impl_->params.morph_kernel > 0) {
    const cv::Mat kernel = cv::getStructuringElement(
        cv::MORPH_ELLIPSE,
        {impl_->params.morph_kernel, impl_->params.morph_kernel});
    cv::morphologyEx(mask, mask, cv::MORPH_OPEN, kernel);
  }
  return mask;
}

std::vector<cv::Mat> gmm_subtract(const std::vector<cv::Mat>& frames,
                                  const GmmParams& params) {
  if (frames.empty()) throw std::invalid_argument("gmm_subtract: no frames");
  GmmSubtractor sub(params);
  std::vector<cv::Mat> masks;
  masks.reserve(frames.size());
  for (const auto& frame : frames) masks.push_back(sub.apply(frame));
  return masks;
}

BoundingBox interpolate_boxes(const std::vector<BoundingBox>& keyframes,
                              int frame_index) {
  if (keyframes.empty())
    throw std::invalid_argument("interpolate_boxes: no keyframes");
  if (frame_index < keyframes.front().frame_index ||
      frame_index > keyframes.back().frame_index)
    throw std::out_of_range("interpolate_boxes: frame " +
                            std::to_string(frame_index) +
                            " outside keyframe span");

  const auto upper = std::lower_bound(
      keyframes.begin(), keyframes.end(), frame_index,
      [](const BoundingBox& kf, int f) { return kf.frame_index < f; });
  if (upper->frame_index == frame_index) return *upper;
  const auto lower = std::prev(upper);

  const double t = static_cast<double>(frame_index - lower->frame_index) /
                   static_cast<double>(upper->frame_index - lower->frame_index);
  BoundingBox box;
  box.frame_index = frame_index;
  box.x_center = lower->x_center + t * (upper->x_center - lower->x_center);
  box.y_center = lower->y_center + t * (upper->y_center - lower->y_center);
  box.width = lower->width + t * (upper->width - lower->width);
  box.height = lower->height + t * (upper->height - lower->height);
  return box;
}

BoundingBox expand_box(const BoundingBox& box, const ExpandFactors& f) {
  BoundingBox out = box;
  out.width = box.width * f.width;
  out.height = box.height * f.height;
  return out;
}

namespace {

struct PixelRect {
  int x0, y0, w, h;
};

PixelRect to_pixel_rect(const BoundingBox& box) {
  const int w = std::max<int>(1, static_cast<int>(std::lround(box.width)));
  const int h = std::max<int>(1, static_cast<int>(std::lround(box.height)));
  const int x0 = static_cast<int>(std::lround(box.x_center - box.width / 2.0));
  const int y0 = static_cast<int>(std::lround(box.y_center - box.height / 2.0));
  return {x0, y0, w, h};
}

}  // namespace

cv::Mat crop(const cv::Mat& frame, const BoundingBox& box) {
  const PixelRect r = to_pixel_rect(box);
  const cv::Rect want(r.x0, r.y0, r.w, r.h);
  const cv::Rect inside = want & cv::Rect(0, 0, frame.cols, frame.rows);
  if (inside.area() == 0)
    throw std::invalid_argument("crop: box does not overlap the frame");
  cv::Mat out = cv::Mat::zeros(r.h, r.w, frame.type());
  frame(inside).copyTo(
      out(cv::Rect(inside.x - r.x0, inside.y - r.y0, inside.width,
                   inside.height)));
  return out;
}

std::optional<SilhouetteFrame> normalize_silhouette(const cv::Mat& mask_crop) {
  if (mask_crop.type() != CV_8UC1)
    throw std::invalid_argument("normalize_silhouette: mask must be CV_8UC1");

  // Foreground row span.
  int top = -1, bottom = -1;
  for (int y = 0; y < mask_crop.rows; ++y) {
    const uchar* row = mask_crop.ptr<uchar>(y);
    for (int x = 0; x < mask_crop.cols; ++x) {
      if (row[x]) {
        if (top < 0) top = y;
        bottom = y;
        break;
      }
    }
  }
  if (top < 0) return std::nullopt;  // empty mask: frame is dropped

  cv::Mat body = mask_crop.rowRange(top, bottom + 1);
  const double scale = static_cast<double>(kSilhouetteSize) / body.rows;
  // Round-half-up on the output width keeps the rescale deterministic.
  const int out_w =
      std::max(1, static_cast<int>(std::floor(body.cols * scale + 0.5)));

  cv::Mat scaled;
  if (body.rows == kSilhouetteSize && body.cols == out_w) {
    scaled = body.clone();
    cv::threshold(scaled, scaled, 127, 255, cv::THRESH_BINARY);
  } else {
    cv::resize(body, scaled, {out_w, kSilhouetteSize}, 0, 0, cv::INTER_LINEAR);
    cv::threshold(scaled, scaled, 127, 255, cv::THRESH_BINARY);
  }

  // Median column by cumulative sum of foreground pixels over x.
  std::vector<long> col_counts(static_cast<std::size_t>(scaled.cols), 0);
  long total = 0;
  for (int y = 0; y < scaled.rows; ++y) {
    const uchar* row = scaled.ptr<uchar>(y);
    for (int x = 0; x < scaled.cols; ++x)
      if (row[x]) {
        ++col_counts[static_cast<std::size_t>(x)];
        ++total;
      }
  }
  if (total == 0) return std::nullopt;  // rescale wiped the mask out
  int median_col = scaled.cols - 1;
  long cum = 0;
  for (int x = 0; x < scaled.cols; ++x) {
    cum += col_counts[static_cast<std::size_t>(x)];
    if (2 * cum >= total) {
      median_col = x;
      break;
    }
  }

  const int offset = kCenterColumn - median_col;
  SilhouetteFrame out;
  out.grid.assign(static_cast<std::size_t>(kSilhouetteSize) * kSilhouetteSize,
                  0);
  for (int y = 0; y < kSilhouetteSize; ++y) {
    const uchar* row = scaled.ptr<uchar>(y);
    for (int x = 0; x < scaled.cols; ++x) {
      const int cx = x + offset;
      if (cx < 0 || cx >= kSilhouetteSize) continue;  // wider than the canvas
      if (row[x])
        out.grid[static_cast<std::size_t>(y) * kSilhouetteSize + cx] = 1;
    }
  }
  return out;
}

cv::Mat quantize_gray(const cv::Mat& gray, int bins) {
  if (bins < 2) throw std::invalid_argument("quantize_gray: bins must be >= 2");
  if (gray.type() != CV_8UC1)
    throw std::invalid_argument("quantize_gray: expected CV_8UC1");
  cv::Mat out(gray.size(), CV_8UC1);
  for (int y = 0; y < gray.rows; ++y) {
    const uchar* src = gray.ptr<uchar>(y);
    uchar* dst = out.ptr<uchar>(y);
    for (int x = 0; x < gray.cols; ++x) {
      const int level = std::min(bins - 1, src[x] * bins / 256);
      dst[x] = static_cast<uchar>(
          std::lround(255.0 * level / (bins - 1)));
    }
  }
  return out;
}

cv::Mat compose_variant(const cv::Mat& color_crop, const cv::Mat& mask_crop,
                        const InputVariant& variant) {
  if (color_crop.size() != mask_crop.size())
    throw std::invalid_argument("compose_variant: crop dimension mismatch");
  if (mask_crop.type() != CV_8UC1)
    throw std::invalid_argument("compose_variant: mask must be CV_8UC1");

  cv::Mat mask;
  cv::compare(mask_crop, 0, mask, cv::CMP_GT);

  switch (variant.pedestrian) {
    case PedestrianMode::color: {
      if (variant.background == BackgroundMode::color) return color_crop.clone();
      cv::Mat out = cv::Mat::zeros(color_crop.size(), color_crop.type());
      color_crop.copyTo(out, mask);
      return out;
    }
    case PedestrianMode::binary: {
      if (variant.background == BackgroundMode::subtracted) {
        cv::Mat out;
        mask.copyTo(out);
        return out;
      }
      cv::Mat out = color_crop.clone();
      out.setTo(cv::Scalar::all(255), mask);
      return out;
    }
    case PedestrianMode::grayscale_quantized: {
      cv::Mat gray;
      if (color_crop.channels() == 3)
        cv::cvtColor(color_crop, gray, cv::COLOR_BGR2GRAY);
      else
        gray = color_crop.clone();
      cv::Mat quant = quantize_gray(gray, variant.quantization_bins);
      if (variant.background == BackgroundMode::subtracted) {
        cv::Mat out = cv::Mat::zeros(gray.size(), CV_8UC1);
        quant.copyTo(out, mask);
        return out;
      }
      cv::Mat out;
      if (color_crop.channels() == 3) {
        out = color_crop.clone();
        cv::Mat quant_bgr;
        cv::cvtColor(quant, quant_bgr, cv::COLOR_GRAY2BGR);
        quant_bgr.copyTo(out, mask);
      } else {
        out = gray.clone();
        quant.copyTo(out, mask);
      }
      return out;
    }
  }
  throw std::invalid_argument("compose_variant: unknown variant");
}

namespace {

class ImageDirSource : public FrameSource {
 public:
  explicit ImageDirSource(const std::string& dir) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      const std::string stem = entry.path().stem().string();
      try {
        std::size_t pos = 0;
        const int index = std::stoi(stem, &pos);
        if (pos == stem.size()) files_[index] = entry.path().string();
      } catch (const std::exception&) {
        // non-numeric name, ignore
      }
    }
    it_ = files_.begin();
  }

  std::optional<std::pair<int, cv::Mat>> next() override {
    while (it_ != files_.end()) {
      const auto [index, path] = *it_;
      ++it_;
      cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
      if (img.empty())
        throw std::runtime_error("cannot decode image file: " + path);
      return std::make_pair(index, img);
    }
    return std::nullopt;
  }

 private:
  std::map<int, std::string> files_;
  std::map<int, std::string>::const_iterator it_;
};

class VideoFileSource : public FrameSource {
 public:
  explicit VideoFileSource(const std::string& path) : cap_(path) {
    if (!cap_.isOpened())
      throw std::runtime_error("cannot open video file: " + path);
  }

  std::optional<std::pair<int, cv::Mat>> next() override {
    cv::Mat frame;
    if (!cap_.read(frame)) return std::nullopt;
    return std::make_pair(index_++, frame);
  }

 private:
  cv::VideoCapture cap_;
  int index_ = 0;
};

}  // namespace

std::unique_ptr<FrameSource> open_frame_source(const std::string& path) {
  if (fs::is_directory(path)) return std::make_unique<ImageDirSource>(path);
  if (fs::is_regular_file(path)) return std::make_unique<VideoFileSource>(path);
  throw std::runtime_error("video input not found: " + path);
}

namespace {

void write_sidecar(const fs::path& dir, const VideoRecord& record,
                   const std::vector<SilhouetteFrame>& frames,
                   const std::vector<int>& dropped) {
  json j;
  j["video_id"] = record.video_id;
  j["subject_id"] = record.subject_id;
  j["camera_id"] = record.camera_id;
  json fr = json::array();
  for (const auto& f : frames)
    fr.push_back({{"frame", f.frame_index}, {"x", f.traj_x}, {"y", f.traj_y}});
  j["frames"] = std::move(fr);
  j["dropped"] = dropped;
  std::ofstream out(dir / "sequence.json");
  out << j.dump(2) << '\n';
}

cv::Mat frame_to_mat(const SilhouetteFrame& f) {
  cv::Mat img(kSilhouetteSize, kSilhouetteSize, CV_8UC1);
  for (int y = 0; y < kSilhouetteSize; ++y)
    for (int x = 0; x < kSilhouetteSize; ++x)
      img.at<uchar>(y, x) =
          f.grid[static_cast<std::size_t>(y) * kSilhouetteSize + x] ? 255 : 0;
  return img;
}

}  // namespace

ExtractResult extract_video(const VideoRecord& record,
                            const std::string& video_path,
                            const std::string& out_dir,
                            const ExtractOptions& options) {
  record.validate();
  const fs::path dir(out_dir);
  try {
    fs::create_directories(dir);
    auto source = open_frame_source(video_path);
    GmmSubtractor gmm(options.gmm);

    const int span_first = record.keyframes.front().frame_index;
    const int span_last = record.keyframes.back().frame_index;

    ExtractResult result;
    result.video_id = record.video_id;
    std::vector<SilhouetteFrame> kept;

    while (auto item = source->next()) {
      const auto& [frame_index, bgr] = *item;
      if (frame_index > record.frame_end || frame_index > span_last) break;
      cv::Mat mask = gmm.apply(bgr);
      if (frame_index < record.frame_start || frame_index < span_first)
        continue;

      const BoundingBox box = expand_box(
          interpolate_boxes(record.keyframes, frame_index), options.expand);
      cv::Mat mask_crop = crop(mask, box);
      auto normalized = normalize_silhouette(mask_crop);
      if (!normalized) {
        result.dropped_frames.push_back(frame_index);
        continue;
      }
      normalized->frame_index = frame_index;
      normalized->traj_x = box.x_center;
      normalized->traj_y = box.y_center;

      cv::imwrite((dir / (std::to_string(frame_index) + ".png")).string(),
                  frame_to_mat(*normalized));
      if (options.variant) {
        fs::create_directories(dir / "variants");
        cv::Mat color_crop = crop(bgr, box);
        cv::Mat variant_img =
            compose_variant(color_crop, mask_crop, *options.variant);
        cv::imwrite(
            (dir / "variants" / (std::to_string(frame_index) + ".png")).string(),
            variant_img);
      }
      kept.push_back(std::move(*normalized));
      ++result.frames_written;
    }

    if (kept.empty())
      throw std::runtime_error("no silhouettes produced for video " +
                               record.video_id);
    write_sidecar(dir, record, kept, result.dropped_frames);
    return result;
  } catch (...) {
    std::error_code ec;
    fs::remove_all(dir, ec);  // no partial outputs
    throw;
  }
}

SilhouetteSequence load_silhouette_sequence(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "sequence.json");
  if (!in)
    throw std::runtime_error("missing sequence.json in " + dir);
  json j = json::parse(in);
  SilhouetteSequence seq;
  seq.video_id = j.at("video_id").get<std::string>();
  seq.subject_id = j.at("subject_id").get<std::string>();
  seq.camera_id = j.at("camera_id").get<int>();
  for (const auto& fj : j.at("frames")) {
    SilhouetteFrame frame;
    frame.frame_index = fj.at("frame").get<int>();
    frame.traj_x = fj.at("x").get<double>();
    frame.traj_y = fj.at("y").get<double>();
    const fs::path png =
        fs::path(dir) / (std::to_string(frame.frame_index) + ".png");
    cv::Mat img = cv::imread(png.string(), cv::IMREAD_GRAYSCALE);
    if (img.empty())
      throw std::runtime_error("cannot read silhouette " + png.string());
    if (img.rows != kSilhouetteSize || img.cols != kSilhouetteSize)
      throw std::runtime_error("silhouette has wrong size: " + png.string());
    frame.grid.resize(static_cast<std::size_t>(kSilhouetteSize) *
                      kSilhouetteSize);
    for (int y = 0; y < kSilhouetteSize; ++y)
      for (int x = 0; x < kSilhouetteSize; ++x)
        frame.grid[static_cast<std::size_t>(y) * kSilhouetteSize + x] =
            img.at<uchar>(y, x) > 127 ? 1 : 0;
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

void save_silhouette_sequence(const SilhouetteSequence& seq,
                              const std::string& dir,
                              const std::vector<int>& dropped) {
  const fs::path out(dir);
  fs::create_directories(out);
  VideoRecord rec;
  rec.video_id = seq.video_id;
  rec.subject_id = seq.subject_id;
  rec.camera_id = seq.camera_id;
  for (const auto& frame : seq.frames)
    cv::imwrite((out / (std::to_string(frame.frame_index) + ".png")).string(),
                frame_to_mat(frame));
  write_sidecar(out, rec, seq.frames, dropped);
}

}  // namespace realgait
