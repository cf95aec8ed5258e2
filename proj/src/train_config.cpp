#include "mrlf/train_config.hpp"

#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "mrlf/errors.hpp"

namespace mrlf {

namespace {

using nlohmann::json;

void fail(const std::string& msg) { throw ValidationError("config: " + msg); }

}  // namespace

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::early: return "early";
    case FusionMode::late: return "late";
    case FusionMode::none: return "none";
  }
  return "early";
}

FusionMode fusion_from_string(const std::string& s) {
  if (s == "early") return FusionMode::early;
  if (s == "late") return FusionMode::late;
  if (s == "none") return FusionMode::none;
  fail("fusion must be one of early|late|none, got '" + s + "'");
  return FusionMode::early;
}

std::string to_string(MeanMetric metric) {
  return metric == MeanMetric::center_to_post ? "center_to_post" : "center_to_center";
}

MeanMetric mean_metric_from_string(const std::string& s) {
  if (s == "center_to_post") return MeanMetric::center_to_post;
  if (s == "center_to_center") return MeanMetric::center_to_center;
  fail("mean_metric must be center_to_post|center_to_center, got '" + s + "'");
  return MeanMetric::center_to_post;
}

void TrainConfig::validate() const {
  if (learning_rate <= 0) fail("learning_rate must be positive");
  if (rmsprop_decay <= 0 || rmsprop_decay >= 1) fail("rmsprop_decay must be in (0, 1)");
  if (rmsprop_eps <= 0) fail("rmsprop_eps must be positive");
  if (lr_factor <= 0 || lr_factor >= 1) fail("lr_factor must be in (0, 1)");
  if (lr_patience < 1) fail("lr_patience must be >= 1");
  if (dropout < 0 || dropout >= 1) fail("dropout must be in [0, 1)");
  if (heads < 1) fail("heads must be >= 1");
  if (attn_dim < 1 || attn_dim % heads != 0)
    fail("attn_dim (" + std::to_string(attn_dim) + ") must be divisible by heads (" +
         std::to_string(heads) + ")");
  if (embed_dim < 1 || filters < 1 || ffn_hidden < 1) fail("model dims must be positive");
  if (max_chars < 1 || max_words < 1) fail("max_chars/max_words must be positive");
  if (epochs < 0) fail("epochs must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (char_kernel_sizes.empty() || word_kernel_sizes.empty()) fail("kernel size lists must be non-empty");
  for (int s : char_kernel_sizes)
    if (s < 1 || s > max_chars) fail("char kernel size " + std::to_string(s) + " out of range");
  for (int s : word_kernel_sizes)
    if (s < 1 || s > max_words) fail("word kernel size " + std::to_string(s) + " out of range");
  if (hashtag_min_count < 0) fail("hashtag_min_count must be >= 0");
  if (location_min_posts < 0) fail("location_min_posts must be >= 0");
  if (eta < 0 || eta > 1) fail("eta must be in [0, 1]");
  double rsum = split_ratios[0] + split_ratios[1] + split_ratios[2];
  if (split_ratios[0] < 0 || split_ratios[1] < 0 || split_ratios[2] < 0 ||
      std::abs(rsum - 1.0) > 1e-9)
    fail("split_ratios must be non-negative and sum to 1");
  if (weight_decay < 0) fail("weight_decay must be >= 0");
  if (lr_floor <= 0) fail("lr_floor must be positive");
  if (fcro_concat && fusion != FusionMode::early) fail("fcro_concat requires fusion=early");
}

std::string config_to_json_string(const TrainConfig& c) {
  json j;
  j["learning_rate"] = c.learning_rate;
  j["rmsprop_decay"] = c.rmsprop_decay;
  j["rmsprop_eps"] = c.rmsprop_eps;
  j["lr_factor"] = c.lr_factor;
  j["lr_patience"] = c.lr_patience;
  j["lr_floor"] = c.lr_floor;
  j["dropout"] = c.dropout;
  j["heads"] = c.heads;
  j["embed_dim"] = c.embed_dim;
  j["max_chars"] = c.max_chars;
  j["max_words"] = c.max_words;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["fusion"] = to_string(c.fusion);
  j["modalities"] = {{"text", c.modalities.text}, {"tags", c.modalities.tags},
                     {"image", c.modalities.image}};
  j["filters"] = c.filters;
  j["attn_dim"] = c.attn_dim;
  j["ffn_hidden"] = c.ffn_hidden;
  j["char_kernel_sizes"] = c.char_kernel_sizes;
  j["word_kernel_sizes"] = c.word_kernel_sizes;
  j["hashtag_min_count"] = c.hashtag_min_count;
  j["location_min_posts"] = c.location_min_posts;
  j["eta"] = c.eta;
  j["split_ratios"] = c.split_ratios;
  j["weight_decay"] = c.weight_decay;
  j["fcro_concat"] = c.fcro_concat;
  j["share_char_embed"] = c.share_char_embed;
  j["mean_metric"] = to_string(c.mean_metric);
  return j.dump(2);
}

TrainConfig config_from_json_string(const std::string& text, bool strict) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) fail("config must be a JSON object");

  static const std::set<std::string> known = {
      "learning_rate", "rmsprop_decay", "rmsprop_eps", "lr_factor", "lr_patience",
      "lr_floor", "dropout", "heads", "embed_dim", "max_chars", "max_words", "epochs",
      "batch_size", "seed", "fusion", "modalities", "filters", "attn_dim", "ffn_hidden",
      "char_kernel_sizes", "word_kernel_sizes", "hashtag_min_count", "location_min_posts",
      "eta", "split_ratios", "weight_decay", "fcro_concat", "share_char_embed",
      "mean_metric"};
  if (strict) {
    for (auto it = j.begin(); it != j.end(); ++it)
      if (!known.count(it.key())) fail("unknown field '" + it.key() + "'");
  }

  TrainConfig c;
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("learning_rate", c.learning_rate);
    get("rmsprop_decay", c.rmsprop_decay);
    get("rmsprop_eps", c.rmsprop_eps);
    get("lr_factor", c.lr_factor);
    get("lr_patience", c.lr_patience);
    get("lr_floor", c.lr_floor);
    get("dropout", c.dropout);
    get("heads", c.heads);
    get("embed_dim", c.embed_dim);
    get("max_chars", c.max_chars);
    get("max_words", c.max_words);
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("seed", c.seed);
    if (j.contains("fusion")) c.fusion = fusion_from_string(j.at("fusion").get<std::string>());
    if (j.contains("modalities")) {
      const auto& m = j.at("modalities");
      if (m.contains("text")) c.modalities.text = m.at("text").get<bool>();
      if (m.contains("tags")) c.modalities.tags = m.at("tags").get<bool>();
      if (m.contains("image")) c.modalities.image = m.at("image").get<bool>();
    }
    get("filters", c.filters);
    get("attn_dim", c.attn_dim);
    get("ffn_hidden", c.ffn_hidden);
    get("char_kernel_sizes", c.char_kernel_sizes);
    get("word_kernel_sizes", c.word_kernel_sizes);
    get("hashtag_min_count", c.hashtag_min_count);
    get("location_min_posts", c.location_min_posts);
    get("eta", c.eta);
    if (j.contains("split_ratios")) {
      auto v = j.at("split_ratios").get<std::vector<double>>();
      if (v.size() != 3) fail("split_ratios must have 3 entries");
      c.split_ratios = {v[0], v[1], v[2]};
    }
    get("weight_decay", c.weight_decay);
    get("fcro_concat", c.fcro_concat);
    get("share_char_embed", c.share_char_embed);
    if (j.contains("mean_metric"))
      c.mean_metric = mean_metric_from_string(j.at("mean_metric").get<std::string>());
  } catch (const ValidationError&) {
    throw;
  } catch (const json::exception& e) {
    fail(std::string("bad field type: ") + e.what());
  }
  c.validate();
  return c;
}

std::string config_hash(const TrainConfig& cfg) {
  std::string s = config_to_json_string(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace mrlf
