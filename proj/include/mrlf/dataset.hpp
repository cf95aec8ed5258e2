#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mrlf/records.hpp"

namespace mrlf {

struct Manifest {
  std::string name;
  std::string posts_file;
  std::string locations_file;
  std::string image_feature_dir;
  int feature_dim = 512;
};

struct Dataset {
  Manifest manifest;
  std::vector<PostRecord> posts;
  LocationTable table;
};

// Loads manifest + locations JSON + posts JSONL, resolves and reads image
// feature files, and validates the schema. Errors carry the offending line
// number or path.
Dataset load_and_validate(const std::string& manifest_path);

struct FilterSettings {
  int hashtag_min_count = 50;
  int location_min_posts = 100;
  double eta = 0.5;
};

// Applies the corpus filters in the order hashtags -> images -> locations and
// re-densifies location ids. Hashtag counts come from the input corpus.
Dataset filter_dataset(const Dataset& input, const FilterSettings& settings);

struct DatasetSplit {
  std::vector<std::string> train, val, test;  // post ids
  std::array<double, 3> ratios{0.8, 0.1, 0.1};
  std::uint64_t seed = 0;

  std::string to_json_string() const;
  static DatasetSplit from_json_string(const std::string& text);
};

// Per-location proportional allocation (floor for val/test, remainder to
// train), deterministic for a given seed.
DatasetSplit stratified_split(const std::vector<PostRecord>& posts,
                              std::array<double, 3> ratios, std::uint64_t seed);

// ---- serialization helpers shared by the pipeline and the generator ----
std::string posts_to_jsonl(const std::vector<PostRecord>& posts);
std::string locations_to_json(const LocationTable& table);
std::string manifest_to_json(const Manifest& m);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// Little-endian float32 feature blob I/O.
void write_feature_file(const std::string& path, const std::vector<float>& values);
std::vector<float> read_feature_file(const std::string& path);

}  // namespace mrlf
