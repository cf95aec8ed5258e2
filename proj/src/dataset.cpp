#include "mrlf/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "mrlf/errors.hpp"
#include "mrlf/image_encoder.hpp"
#include "mrlf/rng.hpp"
#include "mrlf/text_encoder.hpp"

namespace mrlf {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(what + ": malformed JSON: " + e.what());
  }
}

template <typename T>
T get_field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key))
    throw ValidationError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(where + ": bad field '" + key + "': " + e.what());
  }
}

ImageRecord parse_image(const json& j, const std::string& where, const fs::path& feature_dir,
                        int feature_dim) {
  ImageRecord img;
  img.image_id = get_field<std::string>(j, "image_id", where);
  img.portrait_ratio = get_field<double>(j, "portrait_ratio", where);
  if (img.portrait_ratio < 0.0 || img.portrait_ratio > 1.0)
    throw ValidationError(where + ": portrait_ratio out of [0, 1]");
  bool has_file = j.contains("feature_file");
  bool has_grid = j.contains("raw_grid");
  if (has_file == has_grid)
    throw ValidationError(where + ": image '" + img.image_id +
                          "' must have exactly one of feature_file / raw_grid");
  if (has_file) {
    img.feature_file = get_field<std::string>(j, "feature_file", where);
    fs::path p = feature_dir / img.feature_file;
    if (!fs::exists(p))
      throw ValidationError(where + ": dangling image ref '" + p.string() + "'");
    img.feature = read_feature_file(p.string());
    if (static_cast<int>(img.feature.size()) != feature_dim)
      throw ValidationError(where + ": feature file '" + p.string() + "' has " +
                            std::to_string(img.feature.size()) + " floats, expected " +
                            std::to_string(feature_dim));
  } else {
    const json& g = j.at("raw_grid");
    auto shape = get_field<std::vector<std::size_t>>(g, "shape", where);
    auto data = get_field<std::vector<double>>(g, "data", where);
    if (shape.size() != 3)
      throw ValidationError(where + ": raw_grid shape must be [C, H, W]");
    std::size_t n = shape[0] * shape[1] * shape[2];
    if (n != data.size())
      throw ValidationError(where + ": raw_grid data length does not match shape");
    for (double v : data)
      if (!std::isfinite(v)) throw ValidationError(where + ": raw_grid has non-finite entries");
    img.grid_shape = shape;
    img.raw_grid = std::move(data);
  }
  return img;
}

json image_to_json(const ImageRecord& img) {
  json j;
  j["image_id"] = img.image_id;
  j["portrait_ratio"] = img.portrait_ratio;
  if (!img.feature_file.empty()) {
    j["feature_file"] = img.feature_file;
  } else {
    j["raw_grid"] = {{"shape", img.grid_shape}, {"data", img.raw_grid}};
  }
  return j;
}

}  // namespace

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_feature_file(const std::string& path, const std::vector<float>& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open for writing: " + path);
  for (float v : values) {
    auto bits = std::bit_cast<std::uint32_t>(v);
    char bytes[4] = {static_cast<char>(bits & 0xFF), static_cast<char>((bits >> 8) & 0xFF),
                     static_cast<char>((bits >> 16) & 0xFF),
                     static_cast<char>((bits >> 24) & 0xFF)};
    out.write(bytes, 4);
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<float> read_feature_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open: " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 4 != 0)
    throw ValidationError("feature file size is not a multiple of 4: " + path);
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = static_cast<std::uint8_t>(bytes[4 * i]) |
                         (static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[4 * i + 1])) << 8) |
                         (static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[4 * i + 2])) << 16) |
                         (static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[4 * i + 3])) << 24);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

Dataset load_and_validate(const std::string& manifest_path) {
  fs::path mpath(manifest_path);
  if (!fs::exists(mpath))
    throw ValidationError("manifest not found: " + manifest_path);
  json mj = parse_json(read_text_file(manifest_path), "manifest '" + manifest_path + "'");

  Dataset ds;
  std::string where = "manifest '" + manifest_path + "'";
  ds.manifest.name = get_field<std::string>(mj, "name", where);
  ds.manifest.posts_file = get_field<std::string>(mj, "posts_file", where);
  ds.manifest.locations_file = get_field<std::string>(mj, "locations_file", where);
  ds.manifest.image_feature_dir = get_field<std::string>(mj, "image_feature_dir", where);
  ds.manifest.feature_dim = get_field<int>(mj, "feature_dim", where);
  if (ds.manifest.feature_dim < 1)
    throw ValidationError(where + ": feature_dim must be positive");

  fs::path base = mpath.parent_path();
  fs::path locations_path = base / ds.manifest.locations_file;
  fs::path posts_path = base / ds.manifest.posts_file;
  fs::path feature_dir = base / ds.manifest.image_feature_dir;

  // locations
  if (!fs::exists(locations_path))
    throw ValidationError("locations file not found: " + locations_path.string());
  json lj = parse_json(read_text_file(locations_path.string()),
                       "locations '" + locations_path.string() + "'");
  if (!lj.is_array())
    throw ValidationError("locations '" + locations_path.string() + "': expected a JSON array");
  for (const auto& e : lj) {
    std::string lwhere = "locations '" + locations_path.string() + "'";
    LocationInfo info;
    info.id = get_field<int>(e, "id", lwhere);
    info.name = get_field<std::string>(e, "name", lwhere);
    info.center_lat = get_field<double>(e, "center_lat", lwhere);
    info.center_lon = get_field<double>(e, "center_lon", lwhere);
    if (e.contains("post_count")) info.post_count = e.at("post_count").get<int>();
    if (info.center_lat < -90 || info.center_lat > 90 || info.center_lon < -180 ||
        info.center_lon > 180)
      throw ValidationError(lwhere + ": location '" + info.name + "' has invalid coordinates");
    ds.table.locations.push_back(std::move(info));
  }
  std::sort(ds.table.locations.begin(), ds.table.locations.end(),
            [](const LocationInfo& a, const LocationInfo& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < ds.table.locations.size(); ++i) {
    if (ds.table.locations[i].id != static_cast<int>(i))
      throw ValidationError("locations '" + locations_path.string() +
                            "': ids must be dense 0..m_l-1");
  }

  // posts
  if (!fs::exists(posts_path))
    throw ValidationError("posts file not found: " + posts_path.string());
  std::ifstream in(posts_path.string());
  std::string line;
  std::size_t line_no = 0;
  std::unordered_set<std::string> seen_ids;
  std::vector<int> counts(ds.table.size(), 0);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string where_line = posts_path.filename().string() + " line " + std::to_string(line_no);
    json pj;
    try {
      pj = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError(where_line + ": malformed JSON: " + e.what());
    }
    PostRecord post;
    post.post_id = get_field<std::string>(pj, "post_id", where_line);
    if (!seen_ids.insert(post.post_id).second)
      throw ValidationError(where_line + ": duplicate post_id '" + post.post_id + "'");
    post.text = get_field<std::string>(pj, "text", where_line);
    post.hashtags = get_field<std::vector<std::string>>(pj, "hashtags", where_line);
    post.location_id = get_field<int>(pj, "location_id", where_line);
    if (post.location_id < 0 || static_cast<std::size_t>(post.location_id) >= ds.table.size())
      throw ValidationError(where_line + ": unknown location_id " +
                            std::to_string(post.location_id));
    post.post_lat = get_field<double>(pj, "post_lat", where_line);
    post.post_lon = get_field<double>(pj, "post_lon", where_line);
    if (post.post_lat < -90 || post.post_lat > 90 || post.post_lon < -180 || post.post_lon > 180)
      throw ValidationError(where_line + ": coordinates out of range");
    if (pj.contains("images")) {
      if (!pj.at("images").is_array())
        throw ValidationError(where_line + ": 'images' must be an array");
      for (const auto& ij : pj.at("images"))
        post.images.push_back(parse_image(ij, where_line, feature_dir, ds.manifest.feature_dim));
    }
    ++counts[static_cast<std::size_t>(post.location_id)];
    ds.posts.push_back(std::move(post));
  }
  for (std::size_t i = 0; i < counts.size(); ++i) ds.table.locations[i].post_count = counts[i];
  return ds;
}

Dataset filter_dataset(const Dataset& input, const FilterSettings& settings) {
  if (settings.eta < 0.0 || settings.eta > 1.0)
    throw ValidationError("filter_dataset: eta must be in [0, 1]");

  Dataset out;
  out.manifest = input.manifest;
  out.posts = input.posts;

  // 1. hashtags below min_count (counted over the input corpus)
  std::unordered_map<std::string, int> tag_count;
  for (const auto& post : out.posts)
    for (const auto& tag : post.hashtags) {
      std::string joined = joined_hashtag_text({tag});
      if (!joined.empty()) ++tag_count[joined];
    }
  for (auto& post : out.posts) {
    std::vector<std::string> kept;
    for (const auto& tag : post.hashtags) {
      std::string joined = joined_hashtag_text({tag});
      if (joined.empty()) continue;
      if (tag_count[joined] >= settings.hashtag_min_count) kept.push_back(tag);
    }
    post.hashtags = std::move(kept);
  }

  // 2. noisy images
  for (auto& post : out.posts) post.images = filter_noisy(post.images, settings.eta);

  // 3. under-supported locations, then id re-densification
  std::vector<int> counts(input.table.size(), 0);
  for (const auto& post : out.posts) ++counts[static_cast<std::size_t>(post.location_id)];
  std::vector<int> remap(input.table.size(), -1);
  int next_id = 0;
  for (std::size_t i = 0; i < input.table.size(); ++i) {
    if (counts[i] >= settings.location_min_posts && counts[i] > 0) remap[i] = next_id++;
  }
  std::vector<PostRecord> kept_posts;
  kept_posts.reserve(out.posts.size());
  for (auto& post : out.posts) {
    int nid = remap[static_cast<std::size_t>(post.location_id)];
    if (nid < 0) continue;
    post.location_id = nid;
    kept_posts.push_back(std::move(post));
  }
  out.posts = std::move(kept_posts);
  out.table.locations.clear();
  for (std::size_t i = 0; i < input.table.size(); ++i) {
    if (remap[i] < 0) continue;
    LocationInfo info = input.table.locations[i];
    info.id = remap[i];
    info.post_count = counts[i];
    out.table.locations.push_back(std::move(info));
  }

  if (!input.posts.empty() && out.posts.empty())
    throw ValidationError("filter_dataset: all posts filtered away");
  return out;
}

DatasetSplit stratified_split(const std::vector<PostRecord>& posts,
                              std::array<double, 3> ratios, std::uint64_t seed) {
  double rsum = ratios[0] + ratios[1] + ratios[2];
  if (ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0 || std::abs(rsum - 1.0) > 1e-9)
    throw ValidationError("stratified_split: ratios must be non-negative and sum to 1");

  std::map<int, std::vector<std::string>> by_location;
  for (const auto& post : posts) by_location[post.location_id].push_back(post.post_id);

  DatasetSplit split;
  split.ratios = ratios;
  split.seed = seed;
  Rng rng(seed);
  for (auto& [loc, ids] : by_location) {
    if (ids.size() < 3)
      throw ValidationError("stratified_split: location " + std::to_string(loc) + " has " +
                            std::to_string(ids.size()) + " posts (< 3)");
    rng.shuffle(ids);
    std::size_t n = ids.size();
    std::size_t n_val = static_cast<std::size_t>(std::floor(ratios[1] * static_cast<double>(n)));
    std::size_t n_test = static_cast<std::size_t>(std::floor(ratios[2] * static_cast<double>(n)));
    std::size_t n_train = n - n_val - n_test;  // remainder goes to train
    for (std::size_t i = 0; i < n; ++i) {
      if (i < n_train)
        split.train.push_back(ids[i]);
      else if (i < n_train + n_val)
        split.val.push_back(ids[i]);
      else
        split.test.push_back(ids[i]);
    }
  }
  return split;
}

std::string DatasetSplit::to_json_string() const {
  json j;
  j["seed"] = seed;
  j["ratios"] = ratios;
  j["train"] = train;
  j["val"] = val;
  j["test"] = test;
  return j.dump(2);
}

DatasetSplit DatasetSplit::from_json_string(const std::string& text) {
  json j = parse_json(text, "splits");
  DatasetSplit s;
  s.seed = get_field<std::uint64_t>(j, "seed", "splits");
  auto r = get_field<std::vector<double>>(j, "ratios", "splits");
  if (r.size() != 3) throw ValidationError("splits: ratios must have 3 entries");
  s.ratios = {r[0], r[1], r[2]};
  s.train = get_field<std::vector<std::string>>(j, "train", "splits");
  s.val = get_field<std::vector<std::string>>(j, "val", "splits");
  s.test = get_field<std::vector<std::string>>(j, "test", "splits");
  return s;
}

std::string posts_to_jsonl(const std::vector<PostRecord>& posts) {
  std::string out;
  for (const auto& post : posts) {
    json j;
    j["post_id"] = post.post_id;
    j["text"] = post.text;
    j["hashtags"] = post.hashtags;
    j["location_id"] = post.location_id;
    j["post_lat"] = post.post_lat;
    j["post_lon"] = post.post_lon;
    json imgs = json::array();
    for (const auto& img : post.images) imgs.push_back(image_to_json(img));
    j["images"] = imgs;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string locations_to_json(const LocationTable& table) {
  json arr = json::array();
  for (const auto& loc : table.locations) {
    arr.push_back({{"id", loc.id},
                   {"name", loc.name},
                   {"center_lat", loc.center_lat},
                   {"center_lon", loc.center_lon},
                   {"post_count", loc.post_count}});
  }
  return arr.dump(2);
}

std::string manifest_to_json(const Manifest& m) {
  json j;
  j["name"] = m.name;
  j["posts_file"] = m.posts_file;
  j["locations_file"] = m.locations_file;
  j["image_feature_dir"] = m.image_feature_dir;
  j["feature_dim"] = m.feature_dim;
  return j.dump(2);
}

}  // namespace mrlf
