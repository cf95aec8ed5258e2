#include "mrlf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <unordered_map>

#include "mrlf/errors.hpp"
#include "mrlf/geo.hpp"
#include "mrlf/rng.hpp"

namespace mrlf {

namespace {

namespace fs = std::filesystem;

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

ImageInputSpec detect_image_spec(const Dataset& data) {
  ImageInputSpec spec;
  spec.feature_dim = static_cast<std::size_t>(data.manifest.feature_dim);
  bool any_grid = false, any_feature = false;
  for (const auto& post : data.posts)
    for (const auto& img : post.images) {
      if (img.has_grid()) {
        any_grid = true;
        spec.grid_channels = img.grid_shape[0];
      }
      if (img.has_feature()) any_feature = true;
    }
  if (any_grid && any_feature)
    throw ValidationError("dataset mixes precomputed features and raw grids");
  spec.grid_mode = any_grid;
  return spec;
}

void encode_inputs(PreparedData& prep, const TrainConfig& cfg) {
  prep.inputs.clear();
  prep.inputs.reserve(prep.data.posts.size());
  for (const auto& post : prep.data.posts) {
    PostInput input;
    input.enc = encode(post, prep.vocab, static_cast<std::size_t>(cfg.max_chars),
                       static_cast<std::size_t>(cfg.max_words));
    if (prep.image_spec.grid_mode) {
      input.grid_images = post.images;
      input.image_absent = post.images.empty();
    } else {
      AggregatedImage agg = aggregate(post.images, prep.image_spec.feature_dim);
      input.image_feature = std::move(agg.feature);
      input.image_absent = agg.image_absent;
    }
    input.label = post.location_id;
    input.lat = post.post_lat;
    input.lon = post.post_lon;
    prep.inputs.push_back(std::move(input));
  }

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < prep.data.posts.size(); ++i)
    index[prep.data.posts[i].post_id] = i;
  auto resolve = [&](const std::vector<std::string>& ids, std::vector<std::size_t>& out,
                     const char* name) {
    out.clear();
    out.reserve(ids.size());
    for (const auto& id : ids) {
      auto it = index.find(id);
      if (it == index.end())
        throw ValidationError(std::string("split '") + name + "' references unknown post id '" +
                              id + "'");
      out.push_back(it->second);
    }
  };
  resolve(prep.split.train, prep.train_idx, "train");
  resolve(prep.split.val, prep.val_idx, "val");
  resolve(prep.split.test, prep.test_idx, "test");
}

}  // namespace

void rmsprop_step(std::vector<std::pair<std::string, Tensor>>& params, RmspropState& state,
                  double lr, double decay, double eps, double weight_decay) {
  if (state.sq.empty()) {
    state.sq.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
      state.sq[i].assign(params[i].second.size(), 0.0);
  }
  if (state.sq.size() != params.size())
    throw std::invalid_argument("rmsprop_step: state does not match parameter count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i].second;
    std::vector<double> g = p.grad();
    std::vector<double>& s = state.sq[i];
    if (s.size() != g.size() || p.size() != g.size())
      throw std::invalid_argument("rmsprop_step: shape mismatch for '" + params[i].first + "'");
    std::vector<double>& v = p.values_mut();
    for (std::size_t j = 0; j < v.size(); ++j) {
      s[j] = decay * s[j] + (1.0 - decay) * g[j] * g[j];
      v[j] -= lr * g[j] / std::sqrt(s[j] + eps);
      if (weight_decay > 0.0) v[j] -= lr * weight_decay * v[j];
    }
  }
}

PreparedData prepare(const Dataset& raw, const TrainConfig& cfg) {
  cfg.validate();
  PreparedData prep;
  FilterSettings fset{cfg.hashtag_min_count, cfg.location_min_posts, cfg.eta};
  prep.data = filter_dataset(raw, fset);
  prep.split = stratified_split(prep.data.posts, cfg.split_ratios, cfg.seed);
  prep.image_spec = detect_image_spec(prep.data);

  std::unordered_map<std::string, const PostRecord*> by_id;
  for (const auto& post : prep.data.posts) by_id[post.post_id] = &post;
  std::vector<PostRecord> train_posts;
  train_posts.reserve(prep.split.train.size());
  for (const auto& id : prep.split.train) train_posts.push_back(*by_id.at(id));
  prep.vocab = build_vocab(train_posts, cfg.hashtag_min_count, cfg.embed_dim);

  encode_inputs(prep, cfg);
  return prep;
}

PreparedData prepare_from_dir(const std::string& dir, const TrainConfig& cfg) {
  cfg.validate();
  PreparedData prep;
  prep.data = load_and_validate((fs::path(dir) / "manifest.json").string());
  prep.vocab = Vocabulary::from_json_string(read_text_file((fs::path(dir) / "vocab.json").string()));
  prep.split =
      DatasetSplit::from_json_string(read_text_file((fs::path(dir) / "splits.json").string()));
  prep.image_spec = detect_image_spec(prep.data);
  encode_inputs(prep, cfg);
  return prep;
}

PreparedData prepare_from_path(const std::string& data_path, const TrainConfig& cfg) {
  if (fs::is_directory(data_path)) return prepare_from_dir(data_path, cfg);
  return prepare(load_and_validate(data_path), cfg);
}

void write_prepared_dir(const PreparedData& prep, const std::string& manifest_dir,
                        const std::string& out_dir) {
  fs::create_directories(out_dir);
  Manifest m = prep.data.manifest;
  m.posts_file = "posts.jsonl";
  m.locations_file = "locations.json";
  if (!prep.image_spec.grid_mode) {
    // keep referencing the original feature blobs rather than copying them
    fs::path orig = fs::absolute(fs::path(manifest_dir) / prep.data.manifest.image_feature_dir);
    m.image_feature_dir = orig.string();
  }
  write_text_file((fs::path(out_dir) / "manifest.json").string(), manifest_to_json(m));
  write_text_file((fs::path(out_dir) / "posts.jsonl").string(), posts_to_jsonl(prep.data.posts));
  write_text_file((fs::path(out_dir) / "locations.json").string(),
                  locations_to_json(prep.data.table));
  write_text_file((fs::path(out_dir) / "vocab.json").string(), prep.vocab.to_json_string());
  write_text_file((fs::path(out_dir) / "splits.json").string(), prep.split.to_json_string());
}

ModelParams init_params(const PreparedData& prep, const TrainConfig& cfg) {
  Rng master(cfg.seed);
  Rng init_rng = master.fork(1);
  return ModelParams::init(cfg, prep.vocab, prep.data.table.size(), prep.image_spec, init_rng);
}

Metrics evaluate_split(const PreparedData& prep, const std::vector<std::size_t>& idx,
                       const ModelParams& params, const TrainConfig& cfg) {
  std::size_t m = prep.data.table.size();
  Metrics metrics;
  metrics.confusion.assign(m, std::vector<int>(m, 0));
  metrics.count = idx.size();
  if (idx.empty()) return metrics;

  Rng eval_rng(0);  // eval path draws nothing
  std::size_t correct = 0;
  double km_sum = 0.0;
  for (std::size_t i : idx) {
    const PostInput& input = prep.inputs[i];
    ForwardResult fwd =
        model_forward(input, params, cfg, prep.image_spec, /*training=*/false, eval_rng);
    Prediction pred = predict(fwd.post_repr, params.head_w);
    int label = pred.label;
    if (label == input.label) ++correct;
    const LocationInfo& predicted = prep.data.table.at(label);
    double km =
        cfg.mean_metric == MeanMetric::center_to_post
            ? haversine_km(predicted.center_lat, predicted.center_lon, input.lat, input.lon)
            : haversine_km(predicted.center_lat, predicted.center_lon,
                           prep.data.table.at(input.label).center_lat,
                           prep.data.table.at(input.label).center_lon);
    km_sum += km;
    ++metrics.confusion[static_cast<std::size_t>(input.label)][static_cast<std::size_t>(label)];
  }
  metrics.accuracy = static_cast<double>(correct) / static_cast<double>(idx.size());
  metrics.mean_km = km_sum / static_cast<double>(idx.size());
  return metrics;
}

namespace {

double eval_loss(const PreparedData& prep, const std::vector<std::size_t>& idx,
                 const ModelParams& params, const TrainConfig& cfg) {
  if (idx.empty()) return 0.0;
  Rng eval_rng(0);
  double total = 0.0;
  for (std::size_t i : idx) {
    const PostInput& input = prep.inputs[i];
    ForwardResult fwd =
        model_forward(input, params, cfg, prep.image_spec, /*training=*/false, eval_rng);
    Tensor loss = cross_entropy_logits(fwd.logits, static_cast<std::size_t>(input.label));
    total += loss.scalar_value();
  }
  return total / static_cast<double>(idx.size());
}

std::vector<std::vector<double>> snapshot_values(const ModelParams& params) {
  std::vector<std::vector<double>> snap;
  snap.reserve(params.registry.size());
  for (const auto& [name, t] : params.registry) snap.push_back(t.values());
  return snap;
}

void restore_values(ModelParams& params, const std::vector<std::vector<double>>& snap) {
  for (std::size_t i = 0; i < params.registry.size(); ++i)
    params.registry[i].second.values_mut() = snap[i];
}

std::string norms_string(const ModelParams& params) {
  std::ostringstream os;
  bool first = true;
  for (const auto& [group, norm] : params.group_norms()) {
    os << (first ? "" : ", ") << group << "=" << norm;
    first = false;
  }
  return os.str();
}

}  // namespace

TrainOutputs train_model(const PreparedData& prep, const TrainConfig& cfg,
                         ModelParams& params) {
  cfg.validate();
  TrainOutputs out;

  Rng master(cfg.seed);
  (void)master.fork(1);             // stream 1 was consumed by init_params
  Rng train_rng = master.fork(2);   // shuffling + dropout noise

  RmspropState opt_state;
  PlateauScheduler scheduler(cfg.learning_rate, cfg.lr_factor, cfg.lr_patience, cfg.lr_floor);

  auto best_snapshot = snapshot_values(params);
  out.best_val_loss = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order = prep.train_idx;
  std::size_t n_train = order.size();
  Tape tape;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    train_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batch_id = 0;
    for (std::size_t start = 0; start < n_train; start += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t end = std::min(n_train, start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const PostInput*> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(&prep.inputs[order[i]]);
      ++batch_id;
      try {
        params.zero_grad();
        tape.clear();
        Tape::Scope scope(tape);
        Tensor loss = batch_loss(batch, params, cfg, prep.image_spec, /*training=*/true, train_rng);
        loss_sum += loss.scalar_value() * static_cast<double>(batch.size());
        tape.backward(loss);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("train: aborted at epoch " + std::to_string(epoch) + " batch " +
                                 std::to_string(batch_id) + ": " + e.what() +
                                 "; param norms: " + norms_string(params));
      }
      rmsprop_step(params.registry, opt_state, scheduler.lr(), cfg.rmsprop_decay,
                   cfg.rmsprop_eps, cfg.weight_decay);
    }
    tape.clear();

    EpochRow row;
    row.epoch = epoch;
    row.train_loss = n_train ? loss_sum / static_cast<double>(n_train) : 0.0;
    row.val_loss = eval_loss(prep, prep.val_idx, params, cfg);
    Metrics val = evaluate_split(prep, prep.val_idx, params, cfg);
    row.val_acc = val.accuracy;
    row.val_mean_km = val.mean_km;
    row.lr = scheduler.observe(row.val_loss);
    out.log.push_back(row);

    if (row.val_loss < out.best_val_loss) {
      out.best_val_loss = row.val_loss;
      best_snapshot = snapshot_values(params);
    }
  }

  restore_values(params, best_snapshot);
  if (cfg.epochs == 0) out.best_val_loss = eval_loss(prep, prep.val_idx, params, cfg);
  out.val_metrics = evaluate_split(prep, prep.val_idx, params, cfg);
  return out;
}

TrainOutputs run_training_to_dir(const TrainConfig& cfg, const std::string& data_path,
                                 const std::string& out_dir) {
  PreparedData prep = prepare_from_path(data_path, cfg);
  ModelParams params = init_params(prep, cfg);
  TrainOutputs outputs = train_model(prep, cfg, params);

  fs::create_directories(out_dir);
  save_checkpoint((fs::path(out_dir) / "checkpoint.mrlf").string(), cfg, prep.vocab,
                  prep.image_spec, prep.data.table.size(), params);
  write_text_file((fs::path(out_dir) / "metrics.csv").string(), metrics_csv(outputs.log));
  write_text_file((fs::path(out_dir) / "config.json").string(), config_to_json_string(cfg));
  return outputs;
}

Metrics evaluate_checkpoint(const Checkpoint& ckpt, const std::string& data_path,
                            const std::string& split) {
  PreparedData prep;
  if (fs::is_directory(data_path)) {
    prep.data = load_and_validate((fs::path(data_path) / "manifest.json").string());
    prep.split =
        DatasetSplit::from_json_string(read_text_file((fs::path(data_path) / "splits.json").string()));
  } else {
    Dataset raw = load_and_validate(data_path);
    FilterSettings fset{ckpt.config.hashtag_min_count, ckpt.config.location_min_posts,
                        ckpt.config.eta};
    prep.data = filter_dataset(raw, fset);
    prep.split = stratified_split(prep.data.posts, ckpt.config.split_ratios, ckpt.config.seed);
  }
  prep.vocab = ckpt.vocab;  // checkpoints carry their own vocabulary
  prep.image_spec = detect_image_spec(prep.data);
  if (prep.data.table.size() != ckpt.n_locations)
    throw ValidationError("checkpoint was trained with " + std::to_string(ckpt.n_locations) +
                          " locations but the dataset has " +
                          std::to_string(prep.data.table.size()));
  if (!prep.image_spec.grid_mode && prep.image_spec.feature_dim != ckpt.image_spec.feature_dim)
    throw ValidationError("checkpoint feature_dim does not match the dataset");
  encode_inputs(prep, ckpt.config);

  const std::vector<std::size_t>* idx = nullptr;
  if (split == "train")
    idx = &prep.train_idx;
  else if (split == "val")
    idx = &prep.val_idx;
  else if (split == "test")
    idx = &prep.test_idx;
  else
    throw ValidationError("unknown split '" + split + "' (expected train|val|test)");
  return evaluate_split(prep, *idx, ckpt.params, ckpt.config);
}

TrainConfig apply_variant(TrainConfig cfg, const std::string& variant) {
  if (variant == "full") return cfg;
  if (variant == "drop-text") {
    cfg.modalities.text = false;
    return cfg;
  }
  if (variant == "drop-tags") {
    cfg.modalities.tags = false;
    return cfg;
  }
  if (variant == "drop-image") {
    cfg.modalities.image = false;
    return cfg;
  }
  if (variant == "fusion-early") {
    cfg.fusion = FusionMode::early;
    return cfg;
  }
  if (variant == "fusion-late") {
    cfg.fusion = FusionMode::late;
    return cfg;
  }
  // eta variants isolate the image branch so the filter effect is visible
  if (variant == "eta-1.0" || variant == "eta-0.5") {
    cfg.eta = variant == "eta-1.0" ? 1.0 : 0.5;
    cfg.modalities.text = false;
    cfg.modalities.tags = false;
    return cfg;
  }
  if (variant == "min-count-1" || variant == "min-count-50") {
    cfg.hashtag_min_count = variant == "min-count-1" ? 1 : 50;
    return cfg;
  }
  throw ValidationError("ablate: unknown variant '" + variant + "'");
}

std::vector<AblationRow> ablate(const TrainConfig& base, const Dataset& raw,
                                const std::vector<std::string>& variants) {
  std::vector<AblationRow> rows;
  for (const auto& variant : variants) {
    TrainConfig cfg = apply_variant(base, variant);
    PreparedData prep = prepare(raw, cfg);
    ModelParams params = init_params(prep, cfg);
    train_model(prep, cfg, params);
    Metrics test = evaluate_split(prep, prep.test_idx, params, cfg);
    rows.push_back({variant, test.accuracy, test.mean_km, config_hash(cfg)});
  }
  return rows;
}

std::string metrics_csv(const std::vector<EpochRow>& log) {
  std::string out = "epoch,train_loss,val_loss,val_acc,val_mean_km,lr\n";
  for (const auto& row : log) {
    out += std::to_string(row.epoch) + "," + fmt_double(row.train_loss) + "," +
           fmt_double(row.val_loss) + "," + fmt_double(row.val_acc) + "," +
           fmt_double(row.val_mean_km) + "," + fmt_double(row.lr) + "\n";
  }
  return out;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "variant,acc,mean_km,config_hash\n";
  for (const auto& row : rows) {
    out += row.variant + "," + fmt_double(row.accuracy) + "," + fmt_double(row.mean_km) + "," +
           row.config_hash + "\n";
  }
  return out;
}

std::string ablation_pretty(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "variant         acc      mean_km   config_hash\n";
  for (const auto& row : rows) {
    char line[128];
    std::snprintf(line, sizeof(line), "%-14s  %6.4f   %8.4f  %s\n", row.variant.c_str(),
                  row.accuracy, row.mean_km, row.config_hash.c_str());
    os << line;
  }
  return os.str();
}

}  // namespace mrlf
