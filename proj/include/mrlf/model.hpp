#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mrlf/fusion_head.hpp"
#include "mrlf/image_encoder.hpp"
#include "mrlf/records.hpp"
#include "mrlf/tensor.hpp"
#include "mrlf/text_encoder.hpp"
#include "mrlf/train_config.hpp"

namespace mrlf {

// How image evidence enters the model.
struct ImageInputSpec {
  bool grid_mode = false;
  std::size_t feature_dim = 512;  // aggregated-vector width (feature mode)
  std::size_t grid_channels = 1;  // grid mode
};

// Every learnable weight, grouped by branch, plus a flat name -> tensor
// registry in a fixed order shared by the optimizer and checkpoints. All
// groups are always materialized so checkpoints stay shape-compatible across
// ablation masks and fusion modes; branches a run never touches simply keep
// zero gradients.
struct ModelParams {
  Tensor text_char_embed, tags_char_embed;  // same node when embeddings are shared
  Tensor text_word_embed, tags_word_embed;
  CharBranchParams text_char, tags_char;
  WordBranchParams text_word, tags_word;
  ImageHeadParams image;
  FusionParams fusion;
  Tensor head_w;  // [post_repr_width, m_l], zero-initialized

  std::vector<std::pair<std::string, Tensor>> registry;

  static ModelParams init(const TrainConfig& cfg, const Vocabulary& vocab,
                          std::size_t n_locations, const ImageInputSpec& image_spec,
                          Rng& rng);

  void zero_grad();
  // Sum of squared entries per top-level group; used in failure diagnostics.
  std::vector<std::pair<std::string, double>> group_norms() const;
};

// Per-post input after preprocessing: token ids plus aggregated image data.
struct PostInput {
  EncodedPost enc;
  std::vector<double> image_feature;          // feature mode (aggregated)
  std::vector<ImageRecord> grid_images;       // grid mode (kept images)
  bool image_absent = false;
  int label = 0;
  double lat = 0.0, lon = 0.0;
};

struct ForwardResult {
  Tensor logits;
  Tensor post_repr;
  PostComponents components;
};

ForwardResult model_forward(const PostInput& input, const ModelParams& params,
                            const TrainConfig& cfg, const ImageInputSpec& image_spec,
                            bool training, Rng& rng);

// Mean fused log-softmax cross entropy over a batch.
Tensor batch_loss(const std::vector<const PostInput*>& batch, const ModelParams& params,
                  const TrainConfig& cfg, const ImageInputSpec& image_spec, bool training,
                  Rng& rng);

}  // namespace mrlf
