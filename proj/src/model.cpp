#include "mrlf/model.hpp"

#include <cmath>

#include "mrlf/rng.hpp"

namespace mrlf {

namespace {

// Glorot uniform for matrices / kernels, fan counts per trailing structure.
Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-a, a);
  return Tensor::param(std::move(shape), std::move(v));
}

Tensor zeros_param(Shape shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return Tensor::param(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor ones_param(Shape shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return Tensor::param(std::move(shape), std::vector<double>(n, 1.0));
}

Tensor embedding_table(std::size_t vocab, std::size_t dim, Rng& rng) {
  Tensor t = glorot({vocab, dim}, vocab, dim, rng);
  // PAD row starts at zero so padded positions carry no signal at init
  auto& v = t.values_mut();
  for (std::size_t j = 0; j < dim && j < v.size(); ++j) v[j] = 0.0;
  return t;
}

}  // namespace

ModelParams ModelParams::init(const TrainConfig& cfg, const Vocabulary& vocab,
                              std::size_t n_locations, const ImageInputSpec& image_spec,
                              Rng& rng) {
  cfg.validate();
  ModelParams p;
  auto reg = [&p](const std::string& name, const Tensor& t) {
    p.registry.emplace_back(name, t);
  };

  std::size_t e = static_cast<std::size_t>(cfg.embed_dim);
  std::size_t f = static_cast<std::size_t>(cfg.filters);
  std::size_t a = static_cast<std::size_t>(cfg.attn_dim);
  std::size_t h = static_cast<std::size_t>(cfg.ffn_hidden);

  p.text_char_embed = embedding_table(vocab.char_size(), e, rng);
  reg("text.char_embed", p.text_char_embed);
  if (cfg.share_char_embed) {
    p.tags_char_embed = p.text_char_embed;
  } else {
    p.tags_char_embed = embedding_table(vocab.char_size(), e, rng);
    reg("tags.char_embed", p.tags_char_embed);
  }
  p.text_word_embed = embedding_table(vocab.word_size(), e, rng);
  reg("text.word_embed", p.text_word_embed);
  p.tags_word_embed = embedding_table(vocab.hashtag_size(), e, rng);
  reg("tags.word_embed", p.tags_word_embed);

  auto make_char_branch = [&](const std::string& src) {
    CharBranchParams branch;
    branch.heads = cfg.heads;
    for (int s : cfg.char_kernel_sizes) {
      CharPipeParams pipe;
      pipe.kernel_size = s;
      std::size_t k = static_cast<std::size_t>(s);
      pipe.conv_w = glorot({f, e, k}, e * k, f * k, rng);
      pipe.conv_b = zeros_param({f});
      pipe.attn_wq = glorot({f, a}, f, a, rng);
      pipe.attn_wk = glorot({f, a}, f, a, rng);
      pipe.attn_wv = glorot({f, a}, f, a, rng);
      pipe.ffn_w1 = glorot({a, h}, a, h, rng);
      pipe.ffn_b1 = zeros_param({h});
      pipe.ffn_w2 = glorot({h, f}, h, f, rng);
      pipe.ffn_b2 = zeros_param({f});
      std::string base = src + ".char.k" + std::to_string(s) + ".";
      reg(base + "conv_w", pipe.conv_w);
      reg(base + "conv_b", pipe.conv_b);
      reg(base + "attn_wq", pipe.attn_wq);
      reg(base + "attn_wk", pipe.attn_wk);
      reg(base + "attn_wv", pipe.attn_wv);
      reg(base + "ffn_w1", pipe.ffn_w1);
      reg(base + "ffn_b1", pipe.ffn_b1);
      reg(base + "ffn_w2", pipe.ffn_w2);
      reg(base + "ffn_b2", pipe.ffn_b2);
      branch.pipes.push_back(std::move(pipe));
    }
    return branch;
  };
  auto make_word_branch = [&](const std::string& src) {
    WordBranchParams branch;
    for (int s : cfg.word_kernel_sizes) {
      WordPipeParams pipe;
      pipe.kernel_size = s;
      std::size_t k = static_cast<std::size_t>(s);
      pipe.conv_w = glorot({f, e, k}, e * k, f * k, rng);
      pipe.conv_b = zeros_param({f});
      std::string base = src + ".word.k" + std::to_string(s) + ".";
      reg(base + "conv_w", pipe.conv_w);
      reg(base + "conv_b", pipe.conv_b);
      branch.pipes.push_back(std::move(pipe));
    }
    return branch;
  };

  p.text_char = make_char_branch("text");
  p.tags_char = make_char_branch("tags");
  p.text_word = make_word_branch("text");
  p.tags_word = make_word_branch("tags");

  if (image_spec.grid_mode) {
    std::size_t c = image_spec.grid_channels;
    p.image.conv1_w = glorot({8, c, 3, 3}, c * 9, 8 * 9, rng);
    p.image.conv1_b = zeros_param({8});
    p.image.conv2_w = glorot({16, 8, 3, 3}, 8 * 9, 16 * 9, rng);
    p.image.conv2_b = zeros_param({16});
    p.image.fc_w = glorot({16, f}, 16, f, rng);
    p.image.fc_b = zeros_param({f});
    reg("image.conv1_w", p.image.conv1_w);
    reg("image.conv1_b", p.image.conv1_b);
    reg("image.conv2_w", p.image.conv2_w);
    reg("image.conv2_b", p.image.conv2_b);
  } else {
    p.image.fc_w = glorot({image_spec.feature_dim, f}, image_spec.feature_dim, f, rng);
    p.image.fc_b = zeros_param({f});
  }
  reg("image.fc_w", p.image.fc_w);
  reg("image.fc_b", p.image.fc_b);

  auto make_fusion_pipe = [&](const std::string& base) {
    FusionPipeParams pipe;
    pipe.wq = glorot({f, a}, f, a, rng);
    pipe.wk = glorot({f, a}, f, a, rng);
    pipe.wv = glorot({f, a}, f, a, rng);
    pipe.ffn_w1 = glorot({a, h}, a, h, rng);
    pipe.ffn_b1 = zeros_param({h});
    pipe.ffn_w2 = glorot({h, f}, h, f, rng);
    pipe.ffn_b2 = zeros_param({f});
    pipe.ln_gain = ones_param({f});
    pipe.ln_shift = zeros_param({f});
    reg(base + "wq", pipe.wq);
    reg(base + "wk", pipe.wk);
    reg(base + "wv", pipe.wv);
    reg(base + "ffn_w1", pipe.ffn_w1);
    reg(base + "ffn_b1", pipe.ffn_b1);
    reg(base + "ffn_w2", pipe.ffn_w2);
    reg(base + "ffn_b2", pipe.ffn_b2);
    reg(base + "ln_gain", pipe.ln_gain);
    reg(base + "ln_shift", pipe.ln_shift);
    return pipe;
  };
  for (int s : cfg.char_kernel_sizes)
    p.fusion.pipes.push_back(make_fusion_pipe("fusion.k" + std::to_string(s) + "."));
  p.fusion.late = make_fusion_pipe("fusion.late.");

  // zero-initialized head pins the uniform-prediction starting point
  p.head_w = zeros_param({cfg.post_repr_width(), n_locations});
  reg("head.w_p", p.head_w);
  return p;
}

void ModelParams::zero_grad() {
  for (auto& [name, t] : registry) t.zero_grad();
}

std::vector<std::pair<std::string, double>> ModelParams::group_norms() const {
  std::vector<std::pair<std::string, double>> norms;
  for (const auto& [name, t] : registry) {
    std::string group = name.substr(0, name.find('.'));
    double sq = 0.0;
    for (double v : t.values()) sq += v * v;
    if (!norms.empty() && norms.back().first == group)
      norms.back().second += sq;
    else
      norms.emplace_back(group, sq);
  }
  for (auto& [g, sq] : norms) sq = std::sqrt(sq);
  return norms;
}

namespace {

Tensor grid_tensor(const ImageRecord& img) {
  return Tensor::from({img.grid_shape[0], img.grid_shape[1], img.grid_shape[2]},
                      img.raw_grid);
}

}  // namespace

ForwardResult model_forward(const PostInput& input, const ModelParams& params,
                            const TrainConfig& cfg, const ImageInputSpec& image_spec,
                            bool training, Rng& rng) {
  std::size_t f = static_cast<std::size_t>(cfg.filters);
  std::size_t char_width = cfg.char_kernel_sizes.size() * f;
  std::size_t word_width = cfg.word_kernel_sizes.size() * f;

  CharBranchOut text_c, tags_c;
  PostComponents comps;

  if (cfg.modalities.text) {
    Tensor ce = embedding_lookup(input.enc.text.char_ids, params.text_char_embed);
    text_c = char_branch(ce, params.text_char, training, cfg.dropout, rng);
    comps.text_char = text_c.feature;
    Tensor we = embedding_lookup(input.enc.text.word_ids, params.text_word_embed);
    comps.text_word = word_branch(we, params.text_word);
  } else {
    comps.text_char = Tensor::zeros({char_width});
    comps.text_word = Tensor::zeros({word_width});
  }

  if (cfg.modalities.tags) {
    Tensor ce = embedding_lookup(input.enc.tags.char_ids, params.tags_char_embed);
    tags_c = char_branch(ce, params.tags_char, training, cfg.dropout, rng);
    comps.tag_char = tags_c.feature;
    Tensor we = embedding_lookup(input.enc.tags.word_ids, params.tags_word_embed);
    comps.tag_word = word_branch(we, params.tags_word);
  } else {
    comps.tag_char = Tensor::zeros({char_width});
    comps.tag_word = Tensor::zeros({word_width});
  }

  if (cfg.modalities.image) {
    if (image_spec.grid_mode) {
      std::vector<Tensor> grids;
      for (const auto& img : input.grid_images) grids.push_back(grid_tensor(img));
      comps.image = image_head_grids(grids, params.image);
    } else {
      Tensor agg = Tensor::from({image_spec.feature_dim}, input.image_feature);
      comps.image = image_head(agg, params.image);
    }
  } else {
    comps.image = Tensor::zeros({f});
  }

  bool can_fuse = cfg.modalities.text && cfg.modalities.tags;
  if (cfg.fusion == FusionMode::early && can_fuse) {
    comps.fused = fuse_early(tags_c.h_max, text_c.h_max, params.fusion, training,
                             cfg.dropout, rng, cfg.fcro_concat);
  } else if (cfg.fusion == FusionMode::late && can_fuse) {
    comps.fused = late_fusion_variant(comps.tag_char, comps.text_char, params.fusion.late,
                                      f, training, cfg.dropout, rng);
  } else {
    comps.fused = Tensor::zeros({cfg.fused_width()});
  }

  ForwardResult out;
  out.components = comps;
  Tensor f_p = concat_representation(comps);
  f_p = dropout(f_p, cfg.dropout, training, rng);
  out.post_repr = f_p;
  out.logits = linear(f_p, params.head_w);
  return out;
}

Tensor batch_loss(const std::vector<const PostInput*>& batch, const ModelParams& params,
                  const TrainConfig& cfg, const ImageInputSpec& image_spec, bool training,
                  Rng& rng) {
  std::vector<Tensor> losses;
  losses.reserve(batch.size());
  for (const PostInput* post : batch) {
    ForwardResult fwd = model_forward(*post, params, cfg, image_spec, training, rng);
    losses.push_back(cross_entropy_logits(fwd.logits, static_cast<std::size_t>(post->label)));
  }
  return losses.size() == 1 ? losses[0] : mean_of(losses);
}

}  // namespace mrlf
