#pragma once

#include <utility>
#include <vector>

#include "mrlf/tensor.hpp"

namespace mrlf {

class Rng;

// Cross-modal attention parameters for one kernel size (queries from hashtag
// conv features, keys/values from text conv features).
struct FusionPipeParams {
  Tensor wq, wk, wv;      // [filters, attn_dim] each
  Tensor ffn_w1, ffn_b1;  // [attn_dim, ffn_hidden], [ffn_hidden]
  Tensor ffn_w2, ffn_b2;  // [ffn_hidden, filters], [filters]
  Tensor ln_gain, ln_shift;  // [filters]
};

struct FusionParams {
  std::vector<FusionPipeParams> pipes;  // one per char kernel size (early fusion)
  FusionPipeParams late;                // dedicated set for the late variant
};

// Single-head scaled dot-product attention: h_tag [L_t, F] queries over
// h_text [L_x, F]; result [L_t, attn_dim].
Tensor cross_modal_attention(const Tensor& h_tag, const Tensor& h_text,
                             const FusionPipeParams& p);

// FFN + layer norm position-wise, then global max pooling to [filters].
Tensor fusion_ffn_norm(const Tensor& o_cro, const FusionPipeParams& p, bool training,
                       double dropout_rate, Rng& rng);

// Early fusion over all kernel sizes. Per-size pooled vectors are averaged by
// default; concat_sizes stacks them instead.
Tensor fuse_early(const std::vector<Tensor>& h_tag_sizes,
                  const std::vector<Tensor>& h_text_sizes, const FusionParams& params,
                  bool training, double dropout_rate, Rng& rng, bool concat_sizes = false);

// Late variant: final per-source char vectors are re-read as sequences of
// filter-width chunks and pushed through the same attention machinery.
Tensor late_fusion_variant(const Tensor& f_tag_c, const Tensor& f_text_c,
                           const FusionPipeParams& p, std::size_t chunk_width,
                           bool training, double dropout_rate, Rng& rng);

// Fixed component order of the post representation.
struct PostComponents {
  Tensor text_char;  // [4 * filters]
  Tensor text_word;  // [4 * filters]
  Tensor tag_char;   // [4 * filters]
  Tensor tag_word;   // [4 * filters]
  Tensor image;      // [filters]
  Tensor fused;      // [filters] (or [4 * filters] when per-size concat is on)
};

Tensor concat_representation(const PostComponents& parts);

// Component byte offsets into the concatenated vector, in declaration order.
std::vector<std::size_t> component_offsets(const PostComponents& parts);

// logits = f_p . w_p, probabilities by softmax, label = argmax (first wins).
struct Prediction {
  Tensor probabilities;
  int label = 0;
};
Prediction predict(const Tensor& f_p, const Tensor& w_p);

int argmax_label(const std::vector<double>& probs);

}  // namespace mrlf
