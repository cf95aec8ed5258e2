#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace mrlf {

// One image attached to a post. Exactly one of `feature` (precomputed vector)
// or `raw_grid` (small C x H x W grid, flattened row-major) is populated.
struct ImageRecord {
  std::string image_id;
  std::string feature_file;  // path relative to the manifest's feature dir
  std::vector<float> feature;
  std::vector<double> raw_grid;
  std::vector<std::size_t> grid_shape;  // {C, H, W} when raw_grid is used
  double portrait_ratio = 0.0;

  bool has_feature() const { return !feature.empty(); }
  bool has_grid() const { return !raw_grid.empty(); }
};

struct PostRecord {
  std::string post_id;
  std::string text;
  std::vector<std::string> hashtags;
  std::vector<ImageRecord> images;
  int location_id = -1;
  double post_lat = 0.0;
  double post_lon = 0.0;
};

struct LocationInfo {
  int id = -1;
  std::string name;
  double center_lat = 0.0;
  double center_lon = 0.0;
  int post_count = 0;
};

struct LocationTable {
  std::vector<LocationInfo> locations;  // ids dense 0..m_l-1, index == id

  std::size_t size() const { return locations.size(); }
  const LocationInfo& at(int id) const { return locations.at(static_cast<std::size_t>(id)); }
};

}  // namespace mrlf
