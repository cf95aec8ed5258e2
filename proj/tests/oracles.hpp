// Independent reference implementations used to cross-check the library.
// Everything here is deliberately written as straight loops over plain
// vectors, sharing no code with the implementation under test.
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <set>
#include <stdexcept>
#include <vector>

#include "mrlf/rng.hpp"
#include "mrlf/tensor.hpp"

namespace oracle {

// Sliding-window cross-correlation with zero padding.
// input [c_in, len], kernels [c_out, c_in, k], bias [c_out].
inline std::vector<double> conv1d(const std::vector<double>& input, std::size_t c_in,
                                  std::size_t len, const std::vector<double>& kernels,
                                  std::size_t c_out, std::size_t k,
                                  const std::vector<double>& bias, std::ptrdiff_t pad_left,
                                  std::size_t out_len) {
  std::vector<double> out(c_out * out_len, 0.0);
  for (std::size_t j = 0; j < c_out; ++j)
    for (std::size_t i = 0; i < out_len; ++i) {
      double s = bias[j];
      for (std::size_t c = 0; c < c_in; ++c)
        for (std::size_t t = 0; t < k; ++t) {
          std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(i + t) - pad_left;
          if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(len)) continue;
          s += input[c * len + static_cast<std::size_t>(pos)] * kernels[(j * c_in + c) * k + t];
        }
      out[j * out_len + i] = s;
    }
  return out;
}

inline std::vector<double> maxpool1d(const std::vector<double>& input, std::size_t channels,
                                     std::size_t len, std::size_t window, std::size_t stride) {
  std::size_t out_len = (len - window) / stride + 1;
  std::vector<double> out(channels * out_len);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t w = 0; w < out_len; ++w) {
      double best = input[c * len + w * stride];
      for (std::size_t t = 1; t < window; ++t)
        best = std::max(best, input[c * len + w * stride + t]);
      out[c * out_len + w] = best;
    }
  return out;
}

inline std::vector<double> softmax_row(const std::vector<double>& row) {
  double denom = 0.0;
  std::vector<double> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) {
    out[i] = std::exp(row[i]);
    denom += out[i];
  }
  for (double& v : out) v /= denom;
  return out;
}

// Single-head scaled dot-product attention with explicit weight enumeration.
// h_q [lq, f], h_kv [lk, f], wq/wk/wv [f, a]; returns [lq, a] plus the
// attention matrix [lq, lk] if requested.
inline std::vector<double> attention(const std::vector<double>& h_q, std::size_t lq,
                                     const std::vector<double>& h_kv, std::size_t lk,
                                     std::size_t f, const std::vector<double>& wq,
                                     const std::vector<double>& wk,
                                     const std::vector<double>& wv, std::size_t a,
                                     std::vector<double>* attn_out = nullptr) {
  auto project = [f, a](const std::vector<double>& h, std::size_t rows,
                        const std::vector<double>& w) {
    std::vector<double> out(rows * a, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < a; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < f; ++i) s += h[r * f + i] * w[i * a + j];
        out[r * a + j] = s;
      }
    return out;
  };
  std::vector<double> q = project(h_q, lq, wq);
  std::vector<double> k = project(h_kv, lk, wk);
  std::vector<double> v = project(h_kv, lk, wv);
  double scale = 1.0 / std::sqrt(static_cast<double>(a));
  std::vector<double> out(lq * a, 0.0);
  if (attn_out) attn_out->assign(lq * lk, 0.0);
  for (std::size_t r = 0; r < lq; ++r) {
    std::vector<double> scores(lk);
    for (std::size_t c = 0; c < lk; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < a; ++j) s += q[r * a + j] * k[c * a + j];
      scores[c] = s * scale;
    }
    std::vector<double> weights = softmax_row(scores);
    if (attn_out)
      for (std::size_t c = 0; c < lk; ++c) (*attn_out)[r * lk + c] = weights[c];
    for (std::size_t c = 0; c < lk; ++c)
      for (std::size_t j = 0; j < a; ++j) out[r * a + j] += weights[c] * v[c * a + j];
  }
  return out;
}

// Multi-head variant: full-width projections, per-head softmax over column
// slices, heads re-concatenated.
inline std::vector<double> multi_head_attention(const std::vector<double>& h, std::size_t l,
                                                std::size_t f, const std::vector<double>& wq,
                                                const std::vector<double>& wk,
                                                const std::vector<double>& wv, std::size_t a,
                                                std::size_t heads) {
  std::size_t dh = a / heads;
  auto project = [f, a](const std::vector<double>& hm, std::size_t rows,
                        const std::vector<double>& w) {
    std::vector<double> out(rows * a, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < a; ++j)
        for (std::size_t i = 0; i < f; ++i) out[r * a + j] += hm[r * f + i] * w[i * a + j];
    return out;
  };
  std::vector<double> q = project(h, l, wq);
  std::vector<double> k = project(h, l, wk);
  std::vector<double> v = project(h, l, wv);
  double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> out(l * a, 0.0);
  for (std::size_t head = 0; head < heads; ++head) {
    std::size_t c0 = head * dh;
    for (std::size_t r = 0; r < l; ++r) {
      std::vector<double> scores(l);
      for (std::size_t c = 0; c < l; ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < dh; ++j) s += q[r * a + c0 + j] * k[c * a + c0 + j];
        scores[c] = s * scale;
      }
      std::vector<double> weights = softmax_row(scores);
      for (std::size_t c = 0; c < l; ++c)
        for (std::size_t j = 0; j < dh; ++j)
          out[r * a + c0 + j] += weights[c] * v[c * a + c0 + j];
    }
  }
  return out;
}

inline std::vector<double> layer_norm(const std::vector<double>& row,
                                      const std::vector<double>& gain,
                                      const std::vector<double>& shift, double eps = 1e-5) {
  double mu = 0.0;
  for (double v : row) mu += v;
  mu /= static_cast<double>(row.size());
  double var = 0.0;
  for (double v : row) var += (v - mu) * (v - mu);
  var /= static_cast<double>(row.size());
  std::vector<double> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i)
    out[i] = gain[i] * (row[i] - mu) / std::sqrt(var + eps) + shift[i];
  return out;
}

// Spherical law of cosines, the cross-check route for haversine.
inline double law_of_cosines_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double kR = 6371.0088;
  constexpr double d2r = M_PI / 180.0;
  double c = std::sin(lat1 * d2r) * std::sin(lat2 * d2r) +
             std::cos(lat1 * d2r) * std::cos(lat2 * d2r) * std::cos((lon2 - lon1) * d2r);
  c = std::min(1.0, std::max(-1.0, c));
  return kR * std::acos(c);
}

// Wilson-Hilferty approximation of the chi-squared quantile.
inline double chi2_quantile(double p, double df) {
  // z for p=0.99
  double z = 2.3263478740408408;
  if (p != 0.99) throw std::invalid_argument("chi2_quantile: only p=0.99 is tabulated");
  double t = 1.0 - 2.0 / (9.0 * df) + z * std::sqrt(2.0 / (9.0 * df));
  return df * t * t * t;
}

// ---- finite differences ----

// Values on a jittered grid: pairwise gaps >= gap, so max/relu kinks stay far
// from the +-h finite-difference probes.
inline std::vector<double> well_separated(mrlf::Rng& rng, std::size_t n, double lo, double hi,
                                          double gap = 0.01, bool avoid_zero = true) {
  std::size_t slots = static_cast<std::size_t>((hi - lo) / gap);
  if (slots < 4 * n + 8) throw std::invalid_argument("well_separated: range too small");
  std::set<std::size_t> used;
  std::vector<double> out;
  while (out.size() < n) {
    std::size_t s = rng.uniform_index(slots);
    double v = lo + gap * (static_cast<double>(s) + 0.5);
    if (avoid_zero && std::abs(v) < 0.05) continue;
    if (used.insert(s).second) out.push_back(v);
  }
  return out;
}

struct GradCheck {
  std::vector<mrlf::Tensor> leaves;
  double h = 1e-5;

  void add(const mrlf::Tensor& t) { leaves.push_back(t); }

  // forward must rebuild the graph from the registered leaves and return a
  // scalar; it must be deterministic across calls (seed any rng inside).
  double max_rel_err(const std::function<mrlf::Tensor()>& forward) {
    std::vector<std::vector<double>> analytic;
    {
      mrlf::Tape tape;
      mrlf::Tape::Scope scope(tape);
      mrlf::Tensor loss = forward();
      tape.backward(loss);
      for (auto& leaf : leaves) analytic.push_back(leaf.grad());
    }
    double worst = 0.0;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
      auto& vals = leaves[li].values_mut();
      for (std::size_t i = 0; i < vals.size(); ++i) {
        double orig = vals[i];
        vals[i] = orig + h;
        double fp = forward().scalar_value();
        vals[i] = orig - h;
        double fm = forward().scalar_value();
        vals[i] = orig;
        double fd = (fp - fm) / (2.0 * h);
        double g = analytic[li][i];
        double err = std::abs(g - fd) / std::max(1.0, std::abs(g) + std::abs(fd));
        worst = std::max(worst, err);
      }
    }
    return worst;
  }
};

}  // namespace oracle
