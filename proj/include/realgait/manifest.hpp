#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "realgait/types.hpp"

namespace realgait {

enum class Split { train, test };

struct VideoRecord {
  std::string subject_id;
  int camera_id = 0;
  std::string video_id;
  int frame_start = 0;
  int frame_end = 0;
  std::vector<BoundingBox> keyframes;  // strictly increasing frame_index

  void validate() const;
};

struct DatasetManifest {
  int keyframe_stride = 5;
  std::vector<VideoRecord> records;
  std::map<std::string, Split> split;

  void validate() const;
  const VideoRecord& record(const std::string& video_id) const;
  std::vector<const VideoRecord*> videos_of(Split s) const;
};

DatasetManifest load_manifest(const std::string& path);
DatasetManifest parse_manifest(const std::string& json_text);

enum class Protocol { multi_scene, cross_scene, open_set_cross_scene };

std::string to_string(Protocol p);
Protocol protocol_from_string(const std::string& s);

struct ProbeEntry {
  std::string subject_id;
  std::string video_id;
  bool imposter = false;  // open-set only: no same-subject gallery video
};

struct GalleryEntry {
  std::string subject_id;
  std::string video_id;
};

struct ProbeGallerySpec {
  Protocol protocol = Protocol::multi_scene;
  std::vector<ProbeEntry> probe;
  std::vector<GalleryEntry> gallery;
  // cross-scene / open-set: the (probe camera, gallery camera) pair
  std::optional<std::pair<int, int>> scene_pair;
  // multi-scene: test subjects whose only video became the probe
  std::vector<std::string> subjects_without_gallery;
};

struct ProtocolOptions {
  // multi-scene probe assignments supplied by the user; subjects not listed
  // fall back to the smallest (camera_id, video_id) rule.
  std::map<std::string, std::string> probe_override;
};

// Materializes probe/gallery assignments. multi_scene yields one spec;
// cross_scene and open_set_cross_scene yield one spec per ordered camera
// pair (A, B), A != B. Deterministic for a given manifest and options.
std::vector<ProbeGallerySpec> build_probe_gallery(
    const DatasetManifest& manifest, Protocol protocol,
    const ProtocolOptions& options = {});

}  // namespace realgait
