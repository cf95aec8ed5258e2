#include "mrlf/text_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "mrlf/errors.hpp"
#include "mrlf/rng.hpp"

namespace mrlf {

namespace {

using nlohmann::json;

const std::string kPadToken = "<pad>";
const std::string kUnkToken = "<unk>";
const std::string kReplacement = "\xEF\xBF\xBD";  // U+FFFD
const std::string kTerminalPunct = ".,!?;:'\"()[]{}";

char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c + 32) : c; }

int lookup(const std::unordered_map<std::string, int>& map, const std::string& tok) {
  auto it = map.find(tok);
  return it == map.end() ? kUnkId : it->second;
}

std::vector<int> pad_truncate(std::vector<int> ids, std::size_t n) {
  ids.resize(n, kPadId);
  return ids;
}

}  // namespace

std::vector<std::string> split_code_points(const std::string& text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    unsigned char b = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (b < 0x80)
      len = 1;
    else if ((b & 0xE0) == 0xC0)
      len = 2;
    else if ((b & 0xF0) == 0xE0)
      len = 3;
    else if ((b & 0xF8) == 0xF0)
      len = 4;
    else {
      out.push_back(kReplacement);
      ++i;
      continue;
    }
    if (i + len > text.size()) {
      out.push_back(kReplacement);
      ++i;
      continue;
    }
    bool valid = true;
    for (std::size_t j = 1; j < len; ++j)
      if ((static_cast<unsigned char>(text[i + j]) & 0xC0) != 0x80) valid = false;
    if (!valid) {
      out.push_back(kReplacement);
      ++i;
      continue;
    }
    if (len == 1) {
      out.push_back(std::string(1, ascii_lower(text[i])));
    } else {
      out.push_back(text.substr(i, len));
    }
    i += len;
  }
  return out;
}

std::vector<std::string> tokenize_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&]() {
    while (!cur.empty() && kTerminalPunct.find(cur.back()) != std::string::npos)
      cur.pop_back();
    if (!cur.empty()) out.push_back(cur);
    cur.clear();
  };
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      flush();
    } else {
      cur.push_back(ascii_lower(c));
    }
  }
  flush();
  return out;
}

namespace {

std::string normalize_hashtag(const std::string& tag) {
  std::size_t start = 0;
  while (start < tag.size() && tag[start] == '#') ++start;
  std::string out;
  out.reserve(tag.size() - start);
  for (std::size_t i = start; i < tag.size(); ++i) out.push_back(ascii_lower(tag[i]));
  return out;
}

}  // namespace

std::string joined_hashtag_text(const std::vector<std::string>& hashtags) {
  std::string out;
  for (const auto& tag : hashtags) {
    std::string t = normalize_hashtag(tag);
    if (t.empty()) continue;
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

void Vocabulary::rebuild_maps() {
  char_to_id.clear();
  word_to_id.clear();
  hashtag_to_id.clear();
  for (std::size_t i = 0; i < chars.size(); ++i) char_to_id.emplace(chars[i], static_cast<int>(i));
  for (std::size_t i = 0; i < words.size(); ++i) word_to_id.emplace(words[i], static_cast<int>(i));
  for (std::size_t i = 0; i < hashtags.size(); ++i)
    hashtag_to_id.emplace(hashtags[i], static_cast<int>(i));
}

Vocabulary build_vocab(std::span<const PostRecord> training_posts, int hashtag_min_count,
                       int embed_dim) {
  if (training_posts.empty())
    throw ValidationError("build_vocab: empty training corpus");

  Vocabulary v;
  v.min_count = hashtag_min_count;
  v.embed_dim = embed_dim;
  v.chars = {kPadToken, kUnkToken};
  v.words = {kPadToken, kUnkToken};
  v.hashtags = {kPadToken, kUnkToken};

  // First-appearance ordering keeps ids stable for a fixed corpus order.
  std::unordered_map<std::string, int> seen_char, seen_word;
  std::unordered_map<std::string, int> tag_count;
  std::vector<std::string> tag_order;

  auto add_chars = [&](const std::string& text) {
    for (auto& cp : split_code_points(text)) {
      if (seen_char.emplace(cp, 1).second) v.chars.push_back(cp);
    }
  };

  for (const auto& post : training_posts) {
    add_chars(post.text);
    add_chars(joined_hashtag_text(post.hashtags));
    for (auto& w : tokenize_words(post.text)) {
      if (seen_word.emplace(w, 1).second) v.words.push_back(w);
    }
    for (const auto& tag : post.hashtags) {
      std::string t = normalize_hashtag(tag);
      if (t.empty()) continue;
      auto [it, fresh] = tag_count.emplace(t, 0);
      if (fresh) tag_order.push_back(t);
      ++it->second;
    }
  }
  for (const auto& t : tag_order) {
    if (tag_count[t] >= hashtag_min_count) v.hashtags.push_back(t);
  }
  v.rebuild_maps();
  return v;
}

EncodedPost encode(const PostRecord& post, const Vocabulary& vocab, std::size_t max_chars,
                   std::size_t max_words) {
  EncodedPost out;
  out.text.source = TextSource::text;
  out.tags.source = TextSource::hashtags;

  std::vector<int> tc;
  for (auto& cp : split_code_points(post.text)) {
    if (tc.size() >= max_chars) break;
    tc.push_back(lookup(vocab.char_to_id, cp));
  }
  out.text.char_ids = pad_truncate(std::move(tc), max_chars);

  std::vector<int> tw;
  for (auto& w : tokenize_words(post.text)) {
    if (tw.size() >= max_words) break;
    tw.push_back(lookup(vocab.word_to_id, w));
  }
  out.text.word_ids = pad_truncate(std::move(tw), max_words);

  std::string joined = joined_hashtag_text(post.hashtags);
  std::vector<int> hc;
  for (auto& cp : split_code_points(joined)) {
    if (hc.size() >= max_chars) break;
    hc.push_back(lookup(vocab.char_to_id, cp));
  }
  out.tags.char_ids = pad_truncate(std::move(hc), max_chars);

  std::vector<int> hw;
  for (const auto& tag : post.hashtags) {
    if (hw.size() >= max_words) break;
    std::string t = normalize_hashtag(tag);
    if (t.empty()) continue;
    hw.push_back(lookup(vocab.hashtag_to_id, t));
  }
  out.tags.word_ids = pad_truncate(std::move(hw), max_words);
  return out;
}

std::string Vocabulary::to_json_string() const {
  json j;
  j["chars"] = chars;
  j["words"] = words;
  j["hashtags"] = hashtags;
  j["min_count"] = min_count;
  j["embed_dim"] = embed_dim;
  return j.dump(2);
}

Vocabulary Vocabulary::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("vocabulary: malformed JSON: ") + e.what());
  }
  Vocabulary v;
  try {
    v.chars = j.at("chars").get<std::vector<std::string>>();
    v.words = j.at("words").get<std::vector<std::string>>();
    v.hashtags = j.at("hashtags").get<std::vector<std::string>>();
    v.min_count = j.at("min_count").get<int>();
    v.embed_dim = j.at("embed_dim").get<int>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("vocabulary: bad schema: ") + e.what());
  }
  v.rebuild_maps();
  return v;
}

std::size_t char_pool_length(std::size_t len, int s) {
  std::size_t window = static_cast<std::size_t>(s);
  std::size_t stride = s > 2 ? static_cast<std::size_t>(s - 2) : 1;
  if (window > len)
    throw std::invalid_argument("char_pool_length: kernel larger than sequence");
  return (len - window) / stride + 1;
}

Tensor char_conv_pool(const Tensor& embeds, const CharPipeParams& p) {
  int s = p.kernel_size;
  Tensor x = transpose(embeds);  // [embed_dim, L]
  Tensor conved;
  if (s % 2 == 1) {
    conved = conv1d(x, p.conv_w, p.conv_b);
  } else {
    // asymmetric same padding for even kernel sizes
    conved = conv1d_pad(x, p.conv_w, p.conv_b, static_cast<std::size_t>((s - 1) / 2),
                        static_cast<std::size_t>(s / 2));
  }
  std::size_t stride = s > 2 ? static_cast<std::size_t>(s - 2) : 1;
  Tensor pooled = maxpool1d(conved, static_cast<std::size_t>(s), stride);
  return transpose(pooled);  // [L_s, filters]
}

Tensor multi_head_self_attention(const Tensor& h, const Tensor& wq, const Tensor& wk,
                                 const Tensor& wv, int heads) {
  std::size_t attn_dim = wq.dim(1);
  if (heads < 1 || attn_dim % static_cast<std::size_t>(heads) != 0)
    throw std::invalid_argument("multi_head_self_attention: attention dim " +
                                std::to_string(attn_dim) + " not divisible by " +
                                std::to_string(heads) + " heads");
  std::size_t dh = attn_dim / static_cast<std::size_t>(heads);
  Tensor q = matmul(h, wq);
  Tensor k = matmul(h, wk);
  Tensor v = matmul(h, wv);
  double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int i = 0; i < heads; ++i) {
    std::size_t c0 = static_cast<std::size_t>(i) * dh;
    Tensor qi = slice_cols(q, c0, dh);
    Tensor ki = slice_cols(k, c0, dh);
    Tensor vi = slice_cols(v, c0, dh);
    Tensor attn = softmax(scale(matmul(qi, transpose(ki)), inv_scale));
    outs.push_back(matmul(attn, vi));
  }
  return concat(outs, 1);  // [L, attn_dim]
}

Tensor char_ffn_pool(const Tensor& o, const CharPipeParams& p, bool training,
                     double dropout_rate, Rng& rng) {
  Tensor a = relu(linear(o, p.ffn_w1, p.ffn_b1));
  a = dropout(a, dropout_rate, training, rng);
  Tensor b = linear(a, p.ffn_w2, p.ffn_b2);  // [L, filters]
  return max_over_axis(b, 0);
}

CharBranchOut char_branch(const Tensor& embeds, const CharBranchParams& params,
                          bool training, double dropout_rate, Rng& rng) {
  CharBranchOut out;
  std::vector<Tensor> feats;
  for (const auto& pipe : params.pipes) {
    Tensor h_max = char_conv_pool(embeds, pipe);
    out.h_max.push_back(h_max);
    Tensor attended =
        multi_head_self_attention(h_max, pipe.attn_wq, pipe.attn_wk, pipe.attn_wv, params.heads);
    feats.push_back(char_ffn_pool(attended, pipe, training, dropout_rate, rng));
  }
  out.feature = concat(feats, 0);
  return out;
}

Tensor word_branch(const Tensor& embeds, const WordBranchParams& params) {
  Tensor x = transpose(embeds);  // [embed_dim, W]
  std::vector<Tensor> feats;
  for (const auto& pipe : params.pipes) {
    int s = pipe.kernel_size;
    Tensor c = conv1d_pad(x, pipe.conv_w, pipe.conv_b, static_cast<std::size_t>((s - 1) / 2),
                          static_cast<std::size_t>(s / 2));
    feats.push_back(max_over_axis(relu(c), 1));
  }
  return concat(feats, 0);
}

}  // namespace mrlf
