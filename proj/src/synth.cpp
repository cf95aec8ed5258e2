#include "mrlf/synth.hpp"

#include <cmath>
#include <filesystem>

#include "mrlf/errors.hpp"
#include "mrlf/geo.hpp"
#include "mrlf/rng.hpp"

namespace mrlf {

namespace {

namespace fs = std::filesystem;

void check(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError("synth: " + msg);
}

}  // namespace

void synth_generate(const SynthConfig& cfg, const std::string& out_dir) {
  check(cfg.n_posts >= 0, "n_posts must be >= 0");
  check(cfg.n_locations >= 1, "n_locations must be >= 1");
  for (double s : {cfg.signal_text, cfg.signal_tags, cfg.signal_image})
    check(s >= 0.0 && s <= 1.0, "signal strengths must be in [0, 1]");
  check(cfg.noise_rate >= 0.0 && cfg.noise_rate <= 1.0, "noise_rate must be in [0, 1]");
  check(cfg.feature_dim >= 1, "feature_dim must be >= 1");
  check(cfg.max_images_per_post >= 1, "max_images_per_post must be >= 1");
  check(cfg.noise_word_vocab >= 1 && cfg.noise_tag_vocab >= 1, "noise vocabs must be >= 1");

  fs::create_directories(fs::path(out_dir) / "features");

  Rng rng(cfg.seed);

  LocationTable table;
  int grid_cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(cfg.n_locations))));
  for (int i = 0; i < cfg.n_locations; ++i) {
    LocationInfo loc;
    loc.id = i;
    loc.name = "loc_" + std::to_string(i);
    loc.center_lat = cfg.base_lat + cfg.center_spacing_deg * (i / grid_cols);
    loc.center_lon = cfg.base_lon + cfg.center_spacing_deg * (i % grid_cols);
    table.locations.push_back(std::move(loc));
  }

  std::vector<PostRecord> posts;
  posts.reserve(static_cast<std::size_t>(cfg.n_posts));
  for (int p = 0; p < cfg.n_posts; ++p) {
    int loc = p % cfg.n_locations;  // round-robin keeps classes balanced
    const LocationInfo& center = table.locations[static_cast<std::size_t>(loc)];
    PostRecord post;
    post.post_id = "p" + std::to_string(p);
    post.location_id = loc;

    // text: optional indicator word among generic filler
    std::vector<std::string> words;
    if (rng.bernoulli(cfg.signal_text)) words.push_back("landmark" + std::to_string(loc));
    std::size_t n_filler = 2 + rng.uniform_index(3);
    for (std::size_t i = 0; i < n_filler; ++i)
      words.push_back("filler" + std::to_string(rng.uniform_index(
                                     static_cast<std::size_t>(cfg.noise_word_vocab))));
    rng.shuffle(words);
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i) post.text += ' ';
      post.text += words[i];
    }

    // hashtags: optional indicator plus noise tags
    if (rng.bernoulli(cfg.signal_tags)) post.hashtags.push_back("#spot" + std::to_string(loc));
    if (rng.bernoulli(cfg.noise_rate))
      post.hashtags.push_back(
          "#tag" + std::to_string(rng.uniform_index(static_cast<std::size_t>(cfg.noise_tag_vocab))));
    if (rng.bernoulli(cfg.noise_rate))
      post.hashtags.push_back(
          "#tag" + std::to_string(rng.uniform_index(static_cast<std::size_t>(cfg.noise_tag_vocab))));

    // images: clean ones carry the location direction, noisy ones are
    // portrait-heavy and point at some other location
    std::size_t n_images = 1 + rng.uniform_index(static_cast<std::size_t>(cfg.max_images_per_post));
    for (std::size_t k = 0; k < n_images; ++k) {
      ImageRecord img;
      img.image_id = post.post_id + "_img" + std::to_string(k);
      img.feature_file = post.post_id + "_" + std::to_string(k) + ".bin";
      std::vector<float> feat(static_cast<std::size_t>(cfg.feature_dim));
      for (auto& v : feat) v = static_cast<float>(rng.uniform(-0.1, 0.1));
      bool noisy = rng.bernoulli(cfg.noise_rate);
      if (noisy) {
        img.portrait_ratio = rng.uniform(0.55, 0.95);
        std::size_t other =
            cfg.n_locations > 1
                ? (static_cast<std::size_t>(loc) + 1 +
                   rng.uniform_index(static_cast<std::size_t>(cfg.n_locations - 1))) %
                      static_cast<std::size_t>(cfg.n_locations)
                : 0;
        feat[other % static_cast<std::size_t>(cfg.feature_dim)] += 1.0f;
      } else {
        img.portrait_ratio = rng.uniform(0.0, 0.45);
        if (rng.bernoulli(cfg.signal_image))
          feat[static_cast<std::size_t>(loc) % static_cast<std::size_t>(cfg.feature_dim)] += 1.0f;
      }
      write_feature_file((fs::path(out_dir) / "features" / img.feature_file).string(), feat);
      img.feature = std::move(feat);
      post.images.push_back(std::move(img));
    }

    // coordinates: uniform in a disc around the center
    double theta = rng.uniform(0.0, 2.0 * M_PI);
    double r_km = cfg.post_radius_km * std::sqrt(rng.uniform01());
    double dlat = (r_km / kEarthRadiusKm) * (180.0 / M_PI) * std::cos(theta);
    double coslat = std::cos(center.center_lat * M_PI / 180.0);
    double dlon = (r_km / (kEarthRadiusKm * coslat)) * (180.0 / M_PI) * std::sin(theta);
    post.post_lat = center.center_lat + dlat;
    post.post_lon = center.center_lon + dlon;
    posts.push_back(std::move(post));
  }

  for (const auto& post : posts)
    ++table.locations[static_cast<std::size_t>(post.location_id)].post_count;

  Manifest manifest;
  manifest.name = "synthetic";
  manifest.posts_file = "posts.jsonl";
  manifest.locations_file = "locations.json";
  manifest.image_feature_dir = "features";
  manifest.feature_dim = cfg.feature_dim;

  write_text_file((fs::path(out_dir) / "posts.jsonl").string(), posts_to_jsonl(posts));
  write_text_file((fs::path(out_dir) / "locations.json").string(), locations_to_json(table));
  write_text_file((fs::path(out_dir) / "manifest.json").string(), manifest_to_json(manifest));
}

}  // namespace mrlf
