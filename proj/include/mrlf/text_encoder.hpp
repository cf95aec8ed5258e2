#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mrlf/records.hpp"
#include "mrlf/tensor.hpp"

namespace mrlf {

class Rng;

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;

// Token tables built from the training split only. Token order defines ids;
// slot 0 is PAD, slot 1 is UNK in every table.
struct Vocabulary {
  std::vector<std::string> chars;     // single code points, UTF-8 encoded
  std::vector<std::string> words;
  std::vector<std::string> hashtags;  // min-count filtered
  int min_count = 50;
  int embed_dim = 100;

  std::unordered_map<std::string, int> char_to_id;
  std::unordered_map<std::string, int> word_to_id;
  std::unordered_map<std::string, int> hashtag_to_id;

  void rebuild_maps();
  std::size_t char_size() const { return chars.size(); }
  std::size_t word_size() const { return words.size(); }
  std::size_t hashtag_size() const { return hashtags.size(); }

  std::string to_json_string() const;
  static Vocabulary from_json_string(const std::string& text);
};

Vocabulary build_vocab(std::span<const PostRecord> training_posts,
                       int hashtag_min_count = 50, int embed_dim = 100);

enum class TextSource { text, hashtags };

struct EncodedText {
  std::vector<int> char_ids;  // length exactly max_chars
  std::vector<int> word_ids;  // length exactly max_words
  TextSource source = TextSource::text;
};

struct EncodedPost {
  EncodedText text;
  EncodedText tags;
};

EncodedPost encode(const PostRecord& post, const Vocabulary& vocab,
                   std::size_t max_chars = 100, std::size_t max_words = 50);

// Lowercases (ASCII) and splits into UTF-8 code points.
std::vector<std::string> split_code_points(const std::string& text);
// Whitespace tokenization with terminal punctuation stripped off.
std::vector<std::string> tokenize_words(const std::string& text);
// Lowercased, '#'-stripped hashtags joined by single spaces.
std::string joined_hashtag_text(const std::vector<std::string>& hashtags);

// Parameters of one char pipeline (a single conv kernel size).
struct CharPipeParams {
  int kernel_size = 0;
  Tensor conv_w;  // [filters, embed_dim, s]
  Tensor conv_b;  // [filters]
  Tensor attn_wq, attn_wk, attn_wv;  // [filters, attn_dim]
  Tensor ffn_w1, ffn_b1;             // [attn_dim, ffn_hidden], [ffn_hidden]
  Tensor ffn_w2, ffn_b2;             // [ffn_hidden, filters], [filters]
};

struct CharBranchParams {
  std::vector<CharPipeParams> pipes;  // one per kernel size
  int heads = 8;
};

struct WordPipeParams {
  int kernel_size = 0;
  Tensor conv_w;  // [filters, embed_dim, s]
  Tensor conv_b;  // [filters]
};

struct WordBranchParams {
  std::vector<WordPipeParams> pipes;
};

// Conv (same padding) + overlapping max pooling with window s and stride
// max(s-2, 1). embeds is [max_chars, embed_dim]; result is [L_s, filters].
Tensor char_conv_pool(const Tensor& embeds, const CharPipeParams& p);

// Pooled sequence length for input length `len` and kernel size `s`.
std::size_t char_pool_length(std::size_t len, int s);

// h is [L, filters]; projections map filters -> attn_dim split over heads.
Tensor multi_head_self_attention(const Tensor& h, const Tensor& wq, const Tensor& wk,
                                 const Tensor& wv, int heads);

// Position-wise FFN (relu + dropout between layers) followed by global max
// pooling over positions; o is [L, attn_dim], result [filters].
Tensor char_ffn_pool(const Tensor& o, const CharPipeParams& p, bool training,
                     double dropout_rate, Rng& rng);

struct CharBranchOut {
  Tensor feature;              // concat over kernel sizes
  std::vector<Tensor> h_max;   // per-size conv-layer matrices, kept for fusion
};

CharBranchOut char_branch(const Tensor& embeds, const CharBranchParams& params,
                          bool training, double dropout_rate, Rng& rng);

// Per size: conv (same padding) -> relu -> global max pool; concat of sizes.
Tensor word_branch(const Tensor& embeds, const WordBranchParams& params);

}  // namespace mrlf
