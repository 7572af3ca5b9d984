#include "realgait/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace realgait {

using nlohmann::json;

void BoundingBox::validate() const {
  if (width <= 0.0) throw std::invalid_argument("bounding box width must be > 0");
  if (height <= 0.0)
    throw std::invalid_argument("bounding box height must be > 0");
  if (frame_index < 0)
    throw std::invalid_argument("bounding box frame_index must be >= 0");
}

void VideoRecord::validate() const {
  if (keyframes.empty())
    throw std::invalid_argument("video " + video_id + ": at least one keyframe required");
  if (frame_end < frame_start)
    throw std::invalid_argument("video " + video_id + ": empty frame_range");
  int prev = -1;
  for (const auto& kf : keyframes) {
    kf.validate();
    if (kf.frame_index <= prev)
      throw std::invalid_argument("video " + video_id + ": keyframes not sorted");
    if (kf.frame_index < frame_start || kf.frame_index > frame_end)
      throw std::invalid_argument("video " + video_id +
                                  ": keyframe outside frame_range");
    prev = kf.frame_index;
  }
}

void DatasetManifest::validate() const {
  if (keyframe_stride < 1)
    throw std::invalid_argument("keyframe_stride must be >= 1");
  std::set<std::string> video_ids;
  for (const auto& rec : records) {
    rec.validate();
    if (!video_ids.insert(rec.video_id).second)
      throw std::invalid_argument("duplicate video_id: " + rec.video_id);
    if (!split.count(rec.subject_id))
      throw std::invalid_argument("subject " + rec.subject_id +
                                  " missing from split");
  }
}

const VideoRecord& DatasetManifest::record(const std::string& video_id) const {
  for (const auto& rec : records)
    if (rec.video_id == video_id) return rec;
  throw std::out_of_range("unknown video_id: " + video_id);
}

std::vector<const VideoRecord*> DatasetManifest::videos_of(Split s) const {
  std::vector<const VideoRecord*> out;
  for (const auto& rec : records) {
    auto it = split.find(rec.subject_id);
    if (it != split.end() && it->second == s) out.push_back(&rec);
  }
  return out;
}

namespace {

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw std::invalid_argument("split value must be \"train\" or \"test\", got \"" +
                              s + "\"");
}

// The split section accepts two layouts:
//   {"S1": "train", "S2": "test"}                 (per-subject map)
//   {"train": ["S1"], "test": ["S2"]}             (per-split lists)
std::map<std::string, Split> parse_split(const json& j) {
  std::map<std::string, Split> out;
  if (!j.is_object()) throw std::invalid_argument("split must be an object");
  const bool list_form =
      (j.contains("train") && j["train"].is_array()) ||
      (j.contains("test") && j["test"].is_array());
  if (list_form) {
    for (const auto& key : {"train", "test"}) {
      if (!j.contains(key)) continue;
      for (const auto& id : j.at(key)) {
        const auto subject = id.get<std::string>();
        const Split s = split_from_string(key);
        auto [it, inserted] = out.emplace(subject, s);
        if (!inserted && it->second != s)
          throw std::invalid_argument("split conflict: subject " + subject +
                                      " listed in both splits");
      }
    }
  } else {
    for (const auto& [subject, value] : j.items())
      out.emplace(subject, split_from_string(value.get<std::string>()));
  }
  return out;
}

}  // namespace

DatasetManifest parse_manifest(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("manifest is not valid JSON: ") +
                                e.what());
  }
  DatasetManifest m;
  try {
    m.keyframe_stride = j.value("keyframe_stride", 5);
    for (const auto& rj : j.at("records")) {
      VideoRecord rec;
      rec.subject_id = rj.at("subject_id").get<std::string>();
      rec.camera_id = rj.at("camera_id").get<int>();
      rec.video_id = rj.at("video_id").get<std::string>();
      const auto& range = rj.at("frame_range");
      rec.frame_start = range.at(0).get<int>();
      rec.frame_end = range.at(1).get<int>();
      for (const auto& kj : rj.at("keyframes")) {
        BoundingBox box;
        box.frame_index = kj.at("frame").get<int>();
        box.x_center = kj.at("x").get<double>();
        box.y_center = kj.at("y").get<double>();
        box.width = kj.at("w").get<double>();
        box.height = kj.at("h").get<double>();
        rec.keyframes.push_back(box);
      }
      m.records.push_back(std::move(rec));
    }
    m.split = parse_split(j.at("split"));
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed manifest record: ") +
                                e.what());
  }
  m.validate();
  return m;
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open manifest file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_manifest(buf.str());
}

std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::multi_scene: return "multi_scene";
    case Protocol::cross_scene: return "cross_scene";
    case Protocol::open_set_cross_scene: return "open_set_cross_scene";
  }
  return "?";
}

Protocol protocol_from_string(const std::string& s) {
  if (s == "multi_scene") return Protocol::multi_scene;
  if (s == "cross_scene") return Protocol::cross_scene;
  if (s == "open_set_cross_scene") return Protocol::open_set_cross_scene;
  throw std::invalid_argument("unknown protocol: " + s);
}

namespace {

ProbeGallerySpec build_multi_scene(const DatasetManifest& manifest,
                                   const ProtocolOptions& options) {
  ProbeGallerySpec spec;
  spec.protocol = Protocol::multi_scene;

  // Group test videos per subject.
  std::map<std::string, std::vector<const VideoRecord*>> by_subject;
  for (const VideoRecord* rec : manifest.videos_of(Split::test))
    by_subject[rec->subject_id].push_back(rec);
  if (by_subject.empty()) throw std::invalid_argument("empty test split");

  for (auto& [subject, videos] : by_subject) {
    const VideoRecord* probe = nullptr;
    auto ov = options.probe_override.find(subject);
    if (ov != options.probe_override.end()) {
      for (const VideoRecord* rec : videos)
        if (rec->video_id == ov->second) probe = rec;
      if (!probe)
        throw std::invalid_argument("probe override for subject " + subject +
                                    " names unknown video " + ov->second);
    } else {
      // Smallest (camera_id, video_id) keeps the choice deterministic.
      probe = *std::min_element(
          videos.begin(), videos.end(),
          [](const VideoRecord* a, const VideoRecord* b) {
            return std::tie(a->camera_id, a->video_id) <
                   std::tie(b->camera_id, b->video_id);
          });
    }
    spec.probe.push_back({subject, probe->video_id, false});
    bool has_gallery = false;
    for (const VideoRecord* rec : videos) {
      if (rec == probe) continue;
      spec.gallery.push_back({subject, rec->video_id});
      has_gallery = true;
    }
    if (!has_gallery) spec.subjects_without_gallery.push_back(subject);
  }
  return spec;
}

std::vector<ProbeGallerySpec> build_cross_scene(const DatasetManifest& manifest,
                                                bool open_set) {
  const auto test_videos = manifest.videos_of(Split::test);
  if (test_videos.empty()) throw std::invalid_argument("empty test split");

  std::set<int> cameras;
  for (const VideoRecord* rec : test_videos) cameras.insert(rec->camera_id);

  std::vector<ProbeGallerySpec> specs;
  for (int cam_probe : cameras) {
    for (int cam_gallery : cameras) {
      if (cam_probe == cam_gallery) continue;
      ProbeGallerySpec spec;
      spec.protocol =
          open_set ? Protocol::open_set_cross_scene : Protocol::cross_scene;
      spec.scene_pair = {cam_probe, cam_gallery};

      std::set<std::string> gallery_subjects;
      for (const VideoRecord* rec : test_videos) {
        if (rec->camera_id != cam_gallery) continue;
        spec.gallery.push_back({rec->subject_id, rec->video_id});
        gallery_subjects.insert(rec->subject_id);
      }
      for (const VideoRecord* rec : test_videos) {
        if (rec->camera_id != cam_probe) continue;
        const bool enrolled = gallery_subjects.count(rec->subject_id) > 0;
        if (open_set) {
          spec.probe.push_back({rec->subject_id, rec->video_id, !enrolled});
        } else if (enrolled) {
          spec.probe.push_back({rec->subject_id, rec->video_id, false});
        }
      }
      specs.push_back(std::move(spec));
    }
  }
  return specs;
}

}  // namespace

std::vector<ProbeGallerySpec> build_probe_gallery(
    const DatasetManifest& manifest, Protocol protocol,
    const ProtocolOptions& options) {
  switch (protocol) {
    case Protocol::multi_scene:
      return {build_multi_scene(manifest, options)};
    case Protocol::cross_scene:
      return build_cross_scene(manifest, false);
    case Protocol::open_set_cross_scene:
      return build_cross_scene(manifest, true);
  }
  throw std::invalid_argument("unknown protocol");
}

}  // namespace realgait
