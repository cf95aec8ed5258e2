#pragma once

#include <vector>

#include "mrlf/records.hpp"
#include "mrlf/tensor.hpp"

namespace mrlf {

// Head that maps image evidence to the shared feature width. Precomputed mode
// applies a single FC to an aggregated feature vector; raw-grid mode runs a
// small trainable conv stack before global average pooling.
struct ImageHeadParams {
  Tensor fc_w;  // [feature_dim, out] in precomputed mode, [conv2_filters, out] in grid mode
  Tensor fc_b;  // [out]
  // grid mode only
  Tensor conv1_w, conv1_b;  // [8, C, 3, 3], [8]
  Tensor conv2_w, conv2_b;  // [16, 8, 3, 3], [16]
  bool grid_mode() const { return conv1_w.defined(); }
};

// Drops every image whose portrait ratio is strictly greater than eta.
std::vector<ImageRecord> filter_noisy(const std::vector<ImageRecord>& images, double eta = 0.5);

struct AggregatedImage {
  std::vector<double> feature;  // element-wise mean; zero vector when absent
  bool image_absent = false;
};

// Element-wise mean of per-image feature vectors. An empty list yields the
// zero vector with the absent flag set.
AggregatedImage aggregate(const std::vector<ImageRecord>& images, std::size_t feature_dim);

// Precomputed mode: FC over the aggregated vector.
Tensor image_head(const Tensor& aggregated, const ImageHeadParams& params);
// Raw-grid mode: conv -> relu -> conv -> relu -> GAP -> FC per grid, outputs
// averaged over the post's grids.
Tensor image_head_grids(const std::vector<Tensor>& grids, const ImageHeadParams& params);

}  // namespace mrlf
