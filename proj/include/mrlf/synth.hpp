#pragma once

#include <cstdint>
#include <string>

#include "mrlf/dataset.hpp"

namespace mrlf {

// Controls for the synthetic dataset generator. Every location owns a
// dedicated indicator word, indicator hashtag, and unit feature direction;
// posts emit their location's indicators with the per-modality signal
// probability and pick up generic noise tokens (and noisy portrait-heavy
// images with misleading features) at the noise rate.
struct SynthConfig {
  int n_locations = 10;
  int n_posts = 2000;
  double signal_text = 0.9;
  double signal_tags = 0.9;
  double signal_image = 0.9;
  double noise_rate = 0.2;
  int noise_word_vocab = 50;
  int noise_tag_vocab = 50;
  int feature_dim = 32;
  int max_images_per_post = 2;
  double base_lat = 40.0;
  double base_lon = -74.0;
  double center_spacing_deg = 0.02;
  double post_radius_km = 0.5;
  std::uint64_t seed = 7;
};

// Generates manifest.json, posts.jsonl, locations.json and per-image feature
// files under out_dir. Bitwise deterministic for a given config.
void synth_generate(const SynthConfig& config, const std::string& out_dir);

}  // namespace mrlf
