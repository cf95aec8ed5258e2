#include "mrlf/image_encoder.hpp"

#include <stdexcept>

namespace mrlf {

std::vector<ImageRecord> filter_noisy(const std::vector<ImageRecord>& images, double eta) {
  if (eta < 0.0 || eta > 1.0)
    throw std::invalid_argument("filter_noisy: eta must be in [0, 1]");
  std::vector<ImageRecord> kept;
  kept.reserve(images.size());
  for (const auto& img : images) {
    if (img.portrait_ratio > eta) continue;
    kept.push_back(img);
  }
  return kept;
}

AggregatedImage aggregate(const std::vector<ImageRecord>& images, std::size_t feature_dim) {
  AggregatedImage out;
  out.feature.assign(feature_dim, 0.0);
  if (images.empty()) {
    out.image_absent = true;
    return out;
  }
  for (const auto& img : images) {
    if (img.feature.size() != feature_dim)
      throw std::invalid_argument("aggregate: feature length " +
                                  std::to_string(img.feature.size()) + " != " +
                                  std::to_string(feature_dim));
    for (std::size_t i = 0; i < feature_dim; ++i)
      out.feature[i] += static_cast<double>(img.feature[i]);
  }
  double inv = 1.0 / static_cast<double>(images.size());
  for (double& v : out.feature) v *= inv;
  return out;
}

Tensor image_head(const Tensor& aggregated, const ImageHeadParams& params) {
  return linear(aggregated, params.fc_w, params.fc_b);
}

Tensor image_head_grids(const std::vector<Tensor>& grids, const ImageHeadParams& params) {
  if (grids.empty()) {
    // absent post: FC applied to a zero pooled vector, i.e. the bias path
    Tensor zero = Tensor::zeros({params.fc_w.dim(0)});
    return linear(zero, params.fc_w, params.fc_b);
  }
  std::vector<Tensor> outs;
  outs.reserve(grids.size());
  for (const auto& grid : grids) {
    Tensor a = relu(conv2d(grid, params.conv1_w, params.conv1_b));
    Tensor b = relu(conv2d(a, params.conv2_w, params.conv2_b));
    outs.push_back(linear(global_avg_pool2d(b), params.fc_w, params.fc_b));
  }
  return outs.size() == 1 ? outs[0] : mean_of(outs);
}

}  // namespace mrlf
