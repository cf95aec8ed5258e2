#pragma once

#include <cstddef>
#include <string>

#include "mrlf/model.hpp"
#include "mrlf/text_encoder.hpp"
#include "mrlf/train_config.hpp"

namespace mrlf {

// Checkpoint container: "MRLF" magic, u32 format version, u64 header length,
// a JSON header (config, vocabulary, shapes, component offsets, config hash),
// then float64 little-endian parameter blobs in header order.
struct Checkpoint {
  TrainConfig config;
  Vocabulary vocab;
  ImageInputSpec image_spec;
  std::size_t n_locations = 0;
  ModelParams params;
};

void save_checkpoint(const std::string& path, const TrainConfig& cfg,
                     const Vocabulary& vocab, const ImageInputSpec& image_spec,
                     std::size_t n_locations, const ModelParams& params);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace mrlf
