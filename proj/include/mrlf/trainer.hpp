#pragma once

#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mrlf/checkpoint.hpp"
#include "mrlf/dataset.hpp"
#include "mrlf/model.hpp"
#include "mrlf/train_config.hpp"

namespace mrlf {

// s <- decay*s + (1-decay)*g^2 ; p <- p - lr*g/sqrt(s+eps), element-wise.
// Optional decoupled weight decay: p <- p - lr*wd*p afterwards.
struct RmspropState {
  std::vector<std::vector<double>> sq;  // parallel to the parameter registry
};

void rmsprop_step(std::vector<std::pair<std::string, Tensor>>& params, RmspropState& state,
                  double lr, double decay, double eps, double weight_decay = 0.0);

// Multiplies lr by `factor` after `patience` consecutive epochs without a
// strict improvement of the best value; never drops below `floor`.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, double factor, int patience, double floor)
      : lr_(lr), factor_(factor), floor_(floor), patience_(patience) {}

  double observe(double val_loss) {
    if (val_loss < best_) {
      best_ = val_loss;
      bad_ = 0;
    } else if (++bad_ >= patience_) {
      lr_ = std::max(lr_ * factor_, floor_);
      bad_ = 0;
    }
    return lr_;
  }

  double lr() const { return lr_; }

 private:
  double lr_, factor_, floor_;
  int patience_;
  int bad_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

struct Metrics {
  double accuracy = 0.0;
  double mean_km = 0.0;
  std::vector<std::vector<int>> confusion;  // [true][predicted]
  std::size_t count = 0;
};

struct EpochRow {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double val_mean_km = 0.0;
  double lr = 0.0;
};

// Dataset after filtering, splitting, vocabulary building and encoding.
struct PreparedData {
  Dataset data;
  Vocabulary vocab;
  DatasetSplit split;
  ImageInputSpec image_spec;
  std::vector<PostInput> inputs;  // aligned with data.posts
  std::vector<std::size_t> train_idx, val_idx, test_idx;
};

PreparedData prepare(const Dataset& raw, const TrainConfig& cfg);
// Re-encodes a prepped directory (vocab.json / splits.json / filtered data).
PreparedData prepare_from_dir(const std::string& dir, const TrainConfig& cfg);
// Accepts either a manifest JSON path or a prepped directory.
PreparedData prepare_from_path(const std::string& data_path, const TrainConfig& cfg);

void write_prepared_dir(const PreparedData& prep, const std::string& manifest_dir,
                        const std::string& out_dir);

struct TrainOutputs {
  std::vector<EpochRow> log;
  double best_val_loss = std::numeric_limits<double>::infinity();
  Metrics val_metrics;  // at the restored best epoch
};

// Runs the full loop; params end up at the best-validation snapshot.
TrainOutputs train_model(const PreparedData& prep, const TrainConfig& cfg,
                         ModelParams& params);

// Deterministic parameter init for a prepared dataset and seed.
ModelParams init_params(const PreparedData& prep, const TrainConfig& cfg);

Metrics evaluate_split(const PreparedData& prep, const std::vector<std::size_t>& idx,
                       const ModelParams& params, const TrainConfig& cfg);

// Trains from a manifest or prepped dir and writes checkpoint.mrlf,
// metrics.csv and config.json into out_dir.
TrainOutputs run_training_to_dir(const TrainConfig& cfg, const std::string& data_path,
                                 const std::string& out_dir);

// Evaluation against a saved checkpoint; split is train|val|test.
Metrics evaluate_checkpoint(const Checkpoint& ckpt, const std::string& data_path,
                            const std::string& split);

struct AblationRow {
  std::string variant;
  double accuracy = 0.0;
  double mean_km = 0.0;
  std::string config_hash;
};

// Known variants: full, drop-text, drop-tags, drop-image, fusion-early,
// fusion-late, eta-1.0, eta-0.5, min-count-1, min-count-50.
TrainConfig apply_variant(TrainConfig cfg, const std::string& variant);

std::vector<AblationRow> ablate(const TrainConfig& base, const Dataset& raw,
                                const std::vector<std::string>& variants);

std::string metrics_csv(const std::vector<EpochRow>& log);
std::string ablation_csv(const std::vector<AblationRow>& rows);
std::string ablation_pretty(const std::vector<AblationRow>& rows);

}  // namespace mrlf
