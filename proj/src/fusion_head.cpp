#include "mrlf/fusion_head.hpp"

#include <cmath>
#include <stdexcept>

#include "mrlf/rng.hpp"

namespace mrlf {

Tensor cross_modal_attention(const Tensor& h_tag, const Tensor& h_text,
                             const FusionPipeParams& p) {
  Tensor q = matmul(h_tag, p.wq);   // [L_t, A]
  Tensor k = matmul(h_text, p.wk);  // [L_x, A]
  Tensor v = matmul(h_text, p.wv);  // [L_x, A]
  double inv_scale = 1.0 / std::sqrt(static_cast<double>(p.wk.dim(1)));
  Tensor attn = softmax(scale(matmul(q, transpose(k)), inv_scale));  // [L_t, L_x]
  return matmul(attn, v);
}

Tensor fusion_ffn_norm(const Tensor& o_cro, const FusionPipeParams& p, bool training,
                       double dropout_rate, Rng& rng) {
  Tensor a = relu(linear(o_cro, p.ffn_w1, p.ffn_b1));
  a = dropout(a, dropout_rate, training, rng);
  Tensor b = linear(a, p.ffn_w2, p.ffn_b2);          // [L_t, filters]
  Tensor normed = layer_norm(b, p.ln_gain, p.ln_shift);
  return max_over_axis(normed, 0);                   // [filters]
}

Tensor fuse_early(const std::vector<Tensor>& h_tag_sizes,
                  const std::vector<Tensor>& h_text_sizes, const FusionParams& params,
                  bool training, double dropout_rate, Rng& rng, bool concat_sizes) {
  if (h_tag_sizes.size() != h_text_sizes.size() || h_tag_sizes.size() != params.pipes.size())
    throw std::invalid_argument("fuse_early: per-size input count mismatch");
  std::vector<Tensor> pooled;
  pooled.reserve(params.pipes.size());
  for (std::size_t i = 0; i < params.pipes.size(); ++i) {
    Tensor o = cross_modal_attention(h_tag_sizes[i], h_text_sizes[i], params.pipes[i]);
    pooled.push_back(fusion_ffn_norm(o, params.pipes[i], training, dropout_rate, rng));
  }
  if (concat_sizes) return concat(pooled, 0);
  return mean_of(pooled);
}

Tensor late_fusion_variant(const Tensor& f_tag_c, const Tensor& f_text_c,
                           const FusionPipeParams& p, std::size_t chunk_width,
                           bool training, double dropout_rate, Rng& rng) {
  if (f_tag_c.rank() != 1 || f_text_c.rank() != 1)
    throw std::invalid_argument("late_fusion_variant: inputs must be 1-D");
  if (f_tag_c.size() % chunk_width != 0 || f_text_c.size() % chunk_width != 0)
    throw std::invalid_argument("late_fusion_variant: size not divisible by chunk width");
  Tensor tag_seq = reshape(f_tag_c, {f_tag_c.size() / chunk_width, chunk_width});
  Tensor text_seq = reshape(f_text_c, {f_text_c.size() / chunk_width, chunk_width});
  Tensor o = cross_modal_attention(tag_seq, text_seq, p);
  return fusion_ffn_norm(o, p, training, dropout_rate, rng);
}

Tensor concat_representation(const PostComponents& parts) {
  return concat({parts.text_char, parts.text_word, parts.tag_char, parts.tag_word,
                 parts.image, parts.fused},
                0);
}

std::vector<std::size_t> component_offsets(const PostComponents& parts) {
  std::vector<std::size_t> offs;
  std::size_t off = 0;
  for (const Tensor* t : {&parts.text_char, &parts.text_word, &parts.tag_char,
                          &parts.tag_word, &parts.image, &parts.fused}) {
    offs.push_back(off);
    off += t->size();
  }
  return offs;
}

int argmax_label(const std::vector<double>& probs) {
  int best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i)
    if (probs[i] > probs[best]) best = static_cast<int>(i);
  return best;
}

Prediction predict(const Tensor& f_p, const Tensor& w_p) {
  if (w_p.dim(1) < 2)
    throw std::invalid_argument("predict: need at least 2 locations");
  Tensor logits = linear(f_p, w_p);
  Prediction out;
  out.probabilities = softmax(logits);
  out.label = argmax_label(out.probabilities.values());
  return out;
}

}  // namespace mrlf
