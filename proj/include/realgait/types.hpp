#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace realgait {

inline constexpr int kSilhouetteSize = 224;   // normalized frame edge, pixels
inline constexpr int kCenterColumn = 112;     // target median column

// Pedestrian box at one frame; (x_center, y_center) in source-video pixels.
struct BoundingBox {
  double x_center = 0.0;
  double y_center = 0.0;
  double width = 0.0;
  double height = 0.0;
  int frame_index = 0;

  void validate() const;
};

// One normalized binary silhouette. grid is row-major 224x224 with values
// in {0, 1}; the trajectory point is the box center in source pixels.
struct SilhouetteFrame {
  int frame_index = 0;
  std::vector<std::uint8_t> grid;  // kSilhouetteSize * kSilhouetteSize
  double traj_x = 0.0;
  double traj_y = 0.0;
};

struct SilhouetteSequence {
  std::string subject_id;
  int camera_id = 0;
  std::string video_id;
  std::vector<SilhouetteFrame> frames;  // frame_index strictly increasing
};

}  // namespace realgait
