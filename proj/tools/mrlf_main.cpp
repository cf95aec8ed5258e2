// Command-line front end: dataset generation, preprocessing, training,
// evaluation and the ablation runner.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mrlf/checkpoint.hpp"
#include "mrlf/dataset.hpp"
#include "mrlf/errors.hpp"
#include "mrlf/synth.hpp"
#include "mrlf/train_config.hpp"
#include "mrlf/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using mrlf::TrainConfig;

namespace {

struct ConfigCli {
  std::string config_file;
  TrainConfig cfg;

  // flag storage; applied only when the flag was actually passed
  std::uint64_t seed = 0;
  int epochs = 0, batch_size = 0, heads = 0, embed_dim = 0, filters = 0, attn_dim = 0,
      ffn_hidden = 0, max_chars = 0, max_words = 0, min_count = 0, location_min_posts = 0,
      lr_patience = 0;
  double lr = 0, dropout = 0, eta = 0, lr_factor = 0, weight_decay = 0;
  std::string fusion, mean_metric;
  bool drop_text = false, drop_tags = false, drop_image = false;
  bool fcro_concat = false, share_char_embed = false;

  CLI::Option *o_seed = nullptr, *o_epochs = nullptr, *o_batch = nullptr, *o_heads = nullptr,
              *o_embed = nullptr, *o_filters = nullptr, *o_attn = nullptr, *o_ffn = nullptr,
              *o_max_chars = nullptr, *o_max_words = nullptr, *o_min_count = nullptr,
              *o_loc_min = nullptr, *o_patience = nullptr, *o_lr = nullptr,
              *o_dropout = nullptr, *o_eta = nullptr, *o_lr_factor = nullptr,
              *o_wd = nullptr, *o_fusion = nullptr, *o_mean = nullptr;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "config JSON file (flags override it)");
    o_seed = cmd->add_option("--seed", seed, "random seed");
    o_epochs = cmd->add_option("--epochs", epochs, "training epochs");
    o_batch = cmd->add_option("--batch-size", batch_size, "batch size");
    o_lr = cmd->add_option("--lr", lr, "learning rate");
    o_dropout = cmd->add_option("--dropout", dropout, "dropout rate");
    o_heads = cmd->add_option("--heads", heads, "attention heads");
    o_embed = cmd->add_option("--embed-dim", embed_dim, "embedding dimension");
    o_filters = cmd->add_option("--filters", filters, "conv filters per kernel size");
    o_attn = cmd->add_option("--attn-dim", attn_dim, "attention projection dim");
    o_ffn = cmd->add_option("--ffn-hidden", ffn_hidden, "feed-forward hidden dim");
    o_max_chars = cmd->add_option("--max-chars", max_chars, "character sequence cap");
    o_max_words = cmd->add_option("--max-words", max_words, "word sequence cap");
    o_min_count = cmd->add_option("--min-count", min_count, "hashtag min count");
    o_loc_min = cmd->add_option("--location-min-posts", location_min_posts,
                                "minimum posts per location");
    o_eta = cmd->add_option("--eta", eta, "portrait-ratio filter threshold");
    o_lr_factor = cmd->add_option("--lr-factor", lr_factor, "plateau decay factor");
    o_patience = cmd->add_option("--lr-patience", lr_patience, "plateau patience (epochs)");
    o_wd = cmd->add_option("--weight-decay", weight_decay, "decoupled weight decay");
    o_fusion = cmd->add_option("--fusion", fusion, "fusion mode: early|late|none");
    o_mean = cmd->add_option("--mean-metric", mean_metric,
                             "center_to_post|center_to_center");
    cmd->add_flag("--drop-text", drop_text, "disable the text modality");
    cmd->add_flag("--drop-tags", drop_tags, "disable the hashtag modality");
    cmd->add_flag("--drop-image", drop_image, "disable the image modality");
    cmd->add_flag("--fcro-concat", fcro_concat, "concat per-size fused vectors");
    cmd->add_flag("--share-char-embed", share_char_embed,
                  "share the char embedding across text and hashtags");
  }

  TrainConfig resolve() {
    TrainConfig out;
    if (!config_file.empty())
      out = mrlf::config_from_json_string(mrlf::read_text_file(config_file));
    if (o_seed->count()) out.seed = seed;
    if (o_epochs->count()) out.epochs = epochs;
    if (o_batch->count()) out.batch_size = batch_size;
    if (o_lr->count()) out.learning_rate = lr;
    if (o_dropout->count()) out.dropout = dropout;
    if (o_heads->count()) out.heads = heads;
    if (o_embed->count()) out.embed_dim = embed_dim;
    if (o_filters->count()) out.filters = filters;
    if (o_attn->count()) out.attn_dim = attn_dim;
    if (o_ffn->count()) out.ffn_hidden = ffn_hidden;
    if (o_max_chars->count()) out.max_chars = max_chars;
    if (o_max_words->count()) out.max_words = max_words;
    if (o_min_count->count()) out.hashtag_min_count = min_count;
    if (o_loc_min->count()) out.location_min_posts = location_min_posts;
    if (o_eta->count()) out.eta = eta;
    if (o_lr_factor->count()) out.lr_factor = lr_factor;
    if (o_patience->count()) out.lr_patience = lr_patience;
    if (o_wd->count()) out.weight_decay = weight_decay;
    if (o_fusion->count()) out.fusion = mrlf::fusion_from_string(fusion);
    if (o_mean->count()) out.mean_metric = mrlf::mean_metric_from_string(mean_metric);
    if (drop_text) out.modalities.text = false;
    if (drop_tags) out.modalities.tags = false;
    if (drop_image) out.modalities.image = false;
    if (fcro_concat) out.fcro_concat = true;
    if (share_char_embed) out.share_char_embed = true;
    out.validate();
    return out;
  }
};

void print_metrics(const mrlf::Metrics& metrics) {
  std::printf("posts     %zu\n", metrics.count);
  std::printf("accuracy  %.6f\n", metrics.accuracy);
  std::printf("mean_km   %.6f\n", metrics.mean_km);
}

json metrics_json(const mrlf::Metrics& metrics) {
  json j;
  j["count"] = metrics.count;
  j["accuracy"] = metrics.accuracy;
  j["mean_km"] = metrics.mean_km;
  j["confusion"] = metrics.confusion;
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mrlf - multi-modal social post location inference"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  mrlf::SynthConfig synth_cfg;
  std::string synth_out;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--locations", synth_cfg.n_locations, "number of locations");
  synth->add_option("--posts", synth_cfg.n_posts, "number of posts");
  synth->add_option("--signal-text", synth_cfg.signal_text, "text indicator probability");
  synth->add_option("--signal-tags", synth_cfg.signal_tags, "hashtag indicator probability");
  synth->add_option("--signal-image", synth_cfg.signal_image, "image indicator probability");
  synth->add_option("--noise", synth_cfg.noise_rate, "noise rate");
  synth->add_option("--noise-word-vocab", synth_cfg.noise_word_vocab, "filler word vocab size");
  synth->add_option("--noise-tag-vocab", synth_cfg.noise_tag_vocab, "noise hashtag vocab size");
  synth->add_option("--feature-dim", synth_cfg.feature_dim, "image feature width");
  synth->add_option("--max-images", synth_cfg.max_images_per_post, "max images per post");
  synth->add_option("--spacing", synth_cfg.center_spacing_deg, "center grid spacing (deg)");
  synth->add_option("--seed", synth_cfg.seed, "random seed");

  // prep
  auto* prep = app.add_subcommand("prep", "load, filter, split and build the vocabulary");
  std::string prep_manifest, prep_out;
  prep->add_option("--manifest", prep_manifest, "raw dataset manifest JSON")->required();
  prep->add_option("--out", prep_out, "output directory")->required();
  ConfigCli prep_cfg;
  prep_cfg.add_to(prep);

  // train
  auto* train = app.add_subcommand("train", "train a model");
  std::string train_data, train_out;
  train->add_option("--data", train_data, "manifest JSON or prepped directory")->required();
  train->add_option("--out", train_out, "output directory")->required();
  ConfigCli train_cfg;
  train_cfg.add_to(train);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_ckpt, eval_data, eval_split = "test", eval_out;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--data", eval_data, "manifest JSON or prepped directory")->required();
  eval->add_option("--split", eval_split, "train|val|test (default test)");
  eval->add_option("--out", eval_out, "write metrics JSON here");

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "train and compare config variants");
  std::string ablate_data, ablate_out;
  std::vector<std::string> ablate_variants;
  ablate_cmd->add_option("--data", ablate_data, "raw dataset manifest JSON")->required();
  ablate_cmd->add_option("--out", ablate_out, "output directory")->required();
  ablate_cmd->add_option("--variants", ablate_variants, "comma-separated variant names")
      ->required()
      ->delimiter(',');
  ConfigCli ablate_cfg;
  ablate_cfg.add_to(ablate_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) {
      mrlf::synth_generate(synth_cfg, synth_out);
      std::printf("wrote synthetic dataset to %s\n", synth_out.c_str());
      return 0;
    }
    if (*prep) {
      TrainConfig cfg = prep_cfg.resolve();
      mrlf::Dataset raw = mrlf::load_and_validate(prep_manifest);
      mrlf::PreparedData prepped = mrlf::prepare(raw, cfg);
      mrlf::write_prepared_dir(prepped, fs::path(prep_manifest).parent_path().string(), prep_out);
      std::printf("prepped %zu posts, %zu locations -> %s\n", prepped.data.posts.size(),
                  prepped.data.table.size(), prep_out.c_str());
      return 0;
    }
    if (*train) {
      TrainConfig cfg = train_cfg.resolve();
      mrlf::TrainOutputs outputs = mrlf::run_training_to_dir(cfg, train_data, train_out);
      for (const auto& row : outputs.log)
        std::printf("epoch %d  train_loss %.6f  val_loss %.6f  val_acc %.4f  val_mean_km %.4f  lr %g\n",
                    row.epoch, row.train_loss, row.val_loss, row.val_acc, row.val_mean_km, row.lr);
      std::printf("best val_loss %.6f; checkpoint written to %s\n", outputs.best_val_loss,
                  (fs::path(train_out) / "checkpoint.mrlf").c_str());
      return 0;
    }
    if (*eval) {
      mrlf::Checkpoint ckpt = mrlf::load_checkpoint(eval_ckpt);
      mrlf::Metrics metrics = mrlf::evaluate_checkpoint(ckpt, eval_data, eval_split);
      print_metrics(metrics);
      if (!eval_out.empty()) mrlf::write_text_file(eval_out, metrics_json(metrics).dump(2));
      return 0;
    }
    if (*ablate_cmd) {
      TrainConfig cfg = ablate_cfg.resolve();
      if (fs::is_directory(ablate_data))
        throw mrlf::ValidationError(
            "ablate needs the raw manifest (variants re-run preprocessing)");
      mrlf::Dataset raw = mrlf::load_and_validate(ablate_data);
      auto rows = mrlf::ablate(cfg, raw, ablate_variants);
      fs::create_directories(ablate_out);
      mrlf::write_text_file((fs::path(ablate_out) / "ablation.csv").string(),
                            mrlf::ablation_csv(rows));
      std::fputs(mrlf::ablation_pretty(rows).c_str(), stdout);
      return 0;
    }
  } catch (const mrlf::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime error: %s\n", e.what());
    return 2;
  }
  return 0;
}
