#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace mrlf {

enum class FusionMode { early, late, none };
enum class MeanMetric { center_to_post, center_to_center };

struct Modalities {
  bool text = true;
  bool tags = true;
  bool image = true;
};

// All knobs of a run. JSON field names match member names; flags override
// file values which override these defaults.
struct TrainConfig {
  double learning_rate = 0.001;
  double rmsprop_decay = 0.9;
  double rmsprop_eps = 1e-8;
  double lr_factor = 0.8;
  int lr_patience = 10;
  double lr_floor = 1e-6;
  double dropout = 0.5;
  int heads = 8;
  int embed_dim = 100;
  int max_chars = 100;
  int max_words = 50;
  int epochs = 100;
  int batch_size = 64;
  std::uint64_t seed = 0;
  FusionMode fusion = FusionMode::early;
  Modalities modalities;
  int filters = 100;
  int attn_dim = 96;
  int ffn_hidden = 200;
  std::vector<int> char_kernel_sizes = {3, 4, 5, 6};
  std::vector<int> word_kernel_sizes = {1, 2, 3, 4};
  int hashtag_min_count = 50;
  int location_min_posts = 100;
  double eta = 0.5;
  std::array<double, 3> split_ratios = {0.8, 0.1, 0.1};
  double weight_decay = 0.0;
  bool fcro_concat = false;
  bool share_char_embed = false;
  MeanMetric mean_metric = MeanMetric::center_to_post;

  void validate() const;  // throws ValidationError

  // Width of the fused component in the post representation.
  std::size_t fused_width() const {
    return (fusion == FusionMode::early && fcro_concat)
               ? char_kernel_sizes.size() * static_cast<std::size_t>(filters)
               : static_cast<std::size_t>(filters);
  }
  // Total post-representation width (input dim of the prediction head).
  std::size_t post_repr_width() const {
    std::size_t f = static_cast<std::size_t>(filters);
    return 2 * char_kernel_sizes.size() * f + 2 * word_kernel_sizes.size() * f + f +
           fused_width();
  }
};

std::string config_to_json_string(const TrainConfig& cfg);
// `strict` rejects unknown keys.
TrainConfig config_from_json_string(const std::string& text, bool strict = true);
// FNV-1a over the canonical JSON form, as 16 hex digits.
std::string config_hash(const TrainConfig& cfg);

std::string to_string(FusionMode mode);
FusionMode fusion_from_string(const std::string& s);
std::string to_string(MeanMetric metric);
MeanMetric mean_metric_from_string(const std::string& s);

}  // namespace mrlf
