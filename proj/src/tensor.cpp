#include "mrlf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mrlf/rng.hpp"

namespace mrlf {

namespace {

thread_local Tape* g_active_tape = nullptr;

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

NodePtr make_node(Shape shape, std::vector<double> value) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  return n;
}

void check_finite(const TensorNode& n, const char* op) {
  for (double v : n.value) {
    if (!std::isfinite(v)) {
      throw std::runtime_error(std::string("mrlf: non-finite value produced by ") + op);
    }
  }
}

// Registers the op on the active tape when gradients are being tracked and
// validates the output. Returns the wrapped result either way.
Tensor finish(const char* op, std::vector<NodePtr> inputs, NodePtr out,
              std::function<void()> rule) {
  check_finite(*out, op);
  Tape* tape = Tape::active();
  if (tape) {
    bool track = false;
    for (const auto& in : inputs)
      if (in->requires_grad) track = true;
    if (track) {
      out->requires_grad = true;
      tape->record(op, std::move(inputs), out, std::move(rule));
    }
  }
  return Tensor(std::move(out));
}

void accum(const NodePtr& n, std::size_t i, double v) {
  if (!n->requires_grad) return;
  n->ensure_grad();
  n->grad[i] += v;
}

bool has_grad(const NodePtr& n) { return !n->grad.empty(); }

void require(bool cond, const char* op, const std::string& msg) {
  if (!cond) throw std::invalid_argument(std::string("mrlf: ") + op + ": " + msg);
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

// ---- Tensor ----

Tensor Tensor::zeros(Shape shape) {
  std::size_t n = shape_numel(shape);
  return Tensor(make_node(std::move(shape), std::vector<double>(n, 0.0)));
}

Tensor Tensor::full(Shape shape, double v) {
  std::size_t n = shape_numel(shape);
  return Tensor(make_node(std::move(shape), std::vector<double>(n, v)));
}

Tensor Tensor::from(Shape shape, std::vector<double> data) {
  require(shape_numel(shape) == data.size(), "Tensor::from",
          "data length " + std::to_string(data.size()) + " does not match shape " +
              shape_str(shape));
  auto node = make_node(std::move(shape), std::move(data));
  check_finite(*node, "Tensor::from");
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

Tensor Tensor::param(Shape shape, std::vector<double> data) {
  Tensor t = from(std::move(shape), std::move(data));
  t.set_requires_grad(true);
  return t;
}

double Tensor::scalar_value() const {
  require(size() == 1, "Tensor::scalar_value", "tensor is not a scalar");
  return node_->value[0];
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(node_->value.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

// ---- Tape ----

Tape::Scope::Scope(Tape& t) : prev_(g_active_tape) { g_active_tape = &t; }
Tape::Scope::~Scope() { g_active_tape = prev_; }
Tape* Tape::active() { return g_active_tape; }

void Tape::record(const char* op, std::vector<NodePtr> inputs, NodePtr output,
                  std::function<void()> rule) {
  entries_.push_back(Entry{op, std::move(inputs), std::move(output), std::move(rule)});
}

void Tape::backward(const Tensor& loss) {
  require(loss.defined() && loss.size() == 1, "backward", "loss must be a scalar");
  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (has_grad(it->output)) it->rule();
  }
}

// ---- Elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "add",
          "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  auto an = a.node(), bn = b.node();
  std::vector<double> v(an->value);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += bn->value[i];
  auto out = make_node(an->shape, std::move(v));
  return finish("add", {an, bn}, out, [an, bn, out]() {
    for (std::size_t i = 0; i < out->grad.size(); ++i) {
      accum(an, i, out->grad[i]);
      accum(bn, i, out->grad[i]);
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "sub",
          "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  auto an = a.node(), bn = b.node();
  std::vector<double> v(an->value);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= bn->value[i];
  auto out = make_node(an->shape, std::move(v));
  return finish("sub", {an, bn}, out, [an, bn, out]() {
    for (std::size_t i = 0; i < out->grad.size(); ++i) {
      accum(an, i, out->grad[i]);
      accum(bn, i, -out->grad[i]);
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "mul",
          "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  auto an = a.node(), bn = b.node();
  std::vector<double> v(an->value);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= bn->value[i];
  auto out = make_node(an->shape, std::move(v));
  return finish("mul", {an, bn}, out, [an, bn, out]() {
    for (std::size_t i = 0; i < out->grad.size(); ++i) {
      accum(an, i, out->grad[i] * bn->value[i]);
      accum(bn, i, out->grad[i] * an->value[i]);
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  auto an = a.node();
  std::vector<double> v(an->value);
  for (double& x : v) x *= c;
  auto out = make_node(an->shape, std::move(v));
  return finish("scale", {an}, out, [an, out, c]() {
    for (std::size_t i = 0; i < out->grad.size(); ++i) accum(an, i, c * out->grad[i]);
  });
}

Tensor relu(const Tensor& x) {
  auto xn = x.node();
  std::vector<double> v(xn->value);
  for (double& e : v)
    if (e < 0.0) e = 0.0;
  auto out = make_node(xn->shape, std::move(v));
  return finish("relu", {xn}, out, [xn, out]() {
    for (std::size_t i = 0; i < out->grad.size(); ++i) {
      if (xn->value[i] > 0.0) accum(xn, i, out->grad[i]);
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  auto xn = x.node();
  require(shape_numel(shape) == xn->size(), "reshape",
          "cannot reshape " + shape_str(xn->shape) + " to " + shape_str(shape));
  auto out = make_node(std::move(shape), xn->value);
  return finish("reshape", {xn}, out, [xn, out]() {
    for (std::size_t i = 0; i < out->grad.size(); ++i) accum(xn, i, out->grad[i]);
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  require(!parts.empty(), "concat", "no inputs");
  std::size_t rank = parts[0].rank();
  require(axis < rank, "concat", "axis out of range");
  std::vector<NodePtr> ins;
  ins.reserve(parts.size());
  for (const auto& p : parts) {
    require(p.rank() == rank, "concat", "rank mismatch");
    for (std::size_t d = 0; d < rank; ++d) {
      require(d == axis || p.dim(d) == parts[0].dim(d), "concat",
              "off-axis shape mismatch: " + shape_str(p.shape()) + " vs " +
                  shape_str(parts[0].shape()));
    }
    ins.push_back(p.node());
  }
  require(rank <= 2, "concat", "only 1-D/2-D supported");

  Shape oshape = parts[0].shape();
  std::size_t total = 0;
  for (const auto& p : parts) total += p.dim(axis);
  oshape[axis] = total;

  std::vector<double> v(shape_numel(oshape));
  if (rank == 1 || axis == 0) {
    std::size_t off = 0;
    for (const auto& in : ins) {
      std::copy(in->value.begin(), in->value.end(), v.begin() + off);
      off += in->value.size();
    }
  } else {  // rank 2, axis 1
    std::size_t rows = oshape[0], ocols = oshape[1];
    std::size_t coff = 0;
    for (const auto& in : ins) {
      std::size_t icols = in->shape[1];
      for (std::size_t r = 0; r < rows; ++r)
        std::copy(in->value.begin() + r * icols, in->value.begin() + (r + 1) * icols,
                  v.begin() + r * ocols + coff);
      coff += icols;
    }
  }
  auto out = make_node(oshape, std::move(v));
  return finish("concat", ins, out, [ins, out, rank, axis]() {
    if (rank == 1 || axis == 0) {
      std::size_t off = 0;
      for (const auto& in : ins) {
        for (std::size_t i = 0; i < in->value.size(); ++i)
          accum(in, i, out->grad[off + i]);
        off += in->value.size();
      }
    } else {
      std::size_t rows = out->shape[0], ocols = out->shape[1];
      std::size_t coff = 0;
      for (const auto& in : ins) {
        std::size_t icols = in->shape[1];
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < icols; ++c)
            accum(in, r * icols + c, out->grad[r * ocols + coff + c]);
        coff += icols;
      }
    }
  });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  require(x.rank() == 2, "slice_cols", "input must be 2-D");
  auto xn = x.node();
  std::size_t rows = xn->shape[0], cols = xn->shape[1];
  require(start + count <= cols, "slice_cols", "slice out of range");
  std::vector<double> v(rows * count);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy(xn->value.begin() + r * cols + start,
              xn->value.begin() + r * cols + start + count, v.begin() + r * count);
  auto out = make_node({rows, count}, std::move(v));
  return finish("slice_cols", {xn}, out, [xn, out, start, count]() {
    std::size_t rows = xn->shape[0], cols = xn->shape[1];
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < count; ++c)
        accum(xn, r * cols + start + c, out->grad[r * count + c]);
  });
}

Tensor mean_of(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "mean_of", "no inputs");
  std::vector<NodePtr> ins;
  for (const auto& p : parts) {
    require(p.shape() == parts[0].shape(), "mean_of", "shape mismatch");
    ins.push_back(p.node());
  }
  double inv = 1.0 / static_cast<double>(parts.size());
  std::vector<double> v(ins[0]->value.size(), 0.0);
  for (const auto& in : ins)
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += in->value[i];
  for (double& e : v) e *= inv;
  auto out = make_node(ins[0]->shape, std::move(v));
  return finish("mean_of", ins, out, [ins, out, inv]() {
    for (const auto& in : ins)
      for (std::size_t i = 0; i < out->grad.size(); ++i)
        accum(in, i, inv * out->grad[i]);
  });
}

// ---- Linear algebra ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, "matmul", "inputs must be 2-D");
  auto an = a.node(), bn = b.node();
  std::size_t m = an->shape[0], k = an->shape[1], n = bn->shape[1];
  require(bn->shape[0] == k, "matmul",
          "inner dimension mismatch " + shape_str(an->shape) + " x " +
              shape_str(bn->shape));
  std::vector<double> v(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      double av = an->value[i * k + kk];
      const double* brow = bn->value.data() + kk * n;
      double* crow = v.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  auto out = make_node({m, n}, std::move(v));
  return finish("matmul", {an, bn}, out, [an, bn, out, m, k, n]() {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t kk = 0; kk < k; ++kk) {
          double s = 0.0;
          const double* grow = out->grad.data() + i * n;
          const double* brow = bn->value.data() + kk * n;
          for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
          an->grad[i * k + kk] += s;
        }
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t kk = 0; kk < k; ++kk) {
          double av = an->value[i * k + kk];
          const double* grow = out->grad.data() + i * n;
          double* brow = bn->grad.data() + kk * n;
          for (std::size_t j = 0; j < n; ++j) brow[j] += av * grow[j];
        }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require(a.rank() == 2, "transpose", "input must be 2-D");
  auto an = a.node();
  std::size_t m = an->shape[0], n = an->shape[1];
  std::vector<double> v(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) v[j * m + i] = an->value[i * n + j];
  auto out = make_node({n, m}, std::move(v));
  return finish("transpose", {an}, out, [an, out, m, n]() {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        accum(an, i * n + j, out->grad[j * m + i]);
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require(x.rank() == 1 || x.rank() == 2, "linear", "input must be 1-D or 2-D");
  require(weight.rank() == 2, "linear", "weight must be 2-D");
  auto xn = x.node(), wn = weight.node();
  std::size_t d_in = wn->shape[0], d_out = wn->shape[1];
  std::size_t rows = x.rank() == 2 ? xn->shape[0] : 1;
  require(x.shape().back() == d_in, "linear",
          "input dim " + shape_str(xn->shape) + " does not match weight " +
              shape_str(wn->shape));
  NodePtr bn;
  if (bias.defined()) {
    require(bias.shape() == Shape{d_out}, "linear", "bias shape mismatch");
    bn = bias.node();
  }
  std::vector<double> v(rows * d_out, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double* orow = v.data() + r * d_out;
    if (bn)
      std::copy(bn->value.begin(), bn->value.end(), orow);
    for (std::size_t i = 0; i < d_in; ++i) {
      double xv = xn->value[r * d_in + i];
      const double* wrow = wn->value.data() + i * d_out;
      for (std::size_t j = 0; j < d_out; ++j) orow[j] += xv * wrow[j];
    }
  }
  Shape oshape = x.rank() == 2 ? Shape{rows, d_out} : Shape{d_out};
  auto out = make_node(std::move(oshape), std::move(v));
  std::vector<NodePtr> ins = {xn, wn};
  if (bn) ins.push_back(bn);
  return finish("linear", ins, out, [xn, wn, bn, out, rows, d_in, d_out]() {
    for (std::size_t r = 0; r < rows; ++r) {
      const double* grow = out->grad.data() + r * d_out;
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < d_in; ++i) {
          double s = 0.0;
          const double* wrow = wn->value.data() + i * d_out;
          for (std::size_t j = 0; j < d_out; ++j) s += grow[j] * wrow[j];
          xn->grad[r * d_in + i] += s;
        }
      }
      if (wn->requires_grad) {
        wn->ensure_grad();
        for (std::size_t i = 0; i < d_in; ++i) {
          double xv = xn->value[r * d_in + i];
          double* wgrow = wn->grad.data() + i * d_out;
          for (std::size_t j = 0; j < d_out; ++j) wgrow[j] += xv * grow[j];
        }
      }
      if (bn && bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t j = 0; j < d_out; ++j) bn->grad[j] += grow[j];
      }
    }
  });
}

// ---- Convolution / pooling ----

namespace {

Tensor conv1d_impl(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                   std::size_t pl, std::size_t pr, const char* op) {
  require(input.rank() == 2, op, "input must be [C_in, L]");
  require(kernels.rank() == 3, op, "kernels must be [C_out, C_in, K]");
  auto in = input.node(), kn = kernels.node(), bn = bias.node();
  std::size_t c_in = in->shape[0], len = in->shape[1];
  std::size_t c_out = kn->shape[0], k = kn->shape[2];
  require(kn->shape[1] == c_in, op,
          "kernel channel mismatch " + shape_str(kn->shape) + " vs input " +
              shape_str(in->shape));
  require(bias.shape() == Shape{c_out}, op, "bias shape mismatch");
  require(len + pl + pr + 1 > k, op, "kernel longer than padded input");
  std::size_t out_len = len + pl + pr - k + 1;

  std::vector<double> v(c_out * out_len, 0.0);
  for (std::size_t j = 0; j < c_out; ++j) {
    double* orow = v.data() + j * out_len;
    for (std::size_t i = 0; i < out_len; ++i) orow[i] = bn->value[j];
    for (std::size_t c = 0; c < c_in; ++c) {
      const double* irow = in->value.data() + c * len;
      for (std::size_t t = 0; t < k; ++t) {
        double w = kn->value[(j * c_in + c) * k + t];
        // output i reads input position i + t - pl
        std::ptrdiff_t off = static_cast<std::ptrdiff_t>(t) - static_cast<std::ptrdiff_t>(pl);
        std::ptrdiff_t i0 = off < 0 ? -off : 0;
        std::ptrdiff_t i1 = std::min<std::ptrdiff_t>(
            static_cast<std::ptrdiff_t>(out_len), static_cast<std::ptrdiff_t>(len) - off);
        for (std::ptrdiff_t i = i0; i < i1; ++i)
          orow[i] += w * irow[i + off];
      }
    }
  }
  auto out = make_node({c_out, out_len}, std::move(v));
  return finish(op, {in, kn, bn}, out, [in, kn, bn, out, c_in, c_out, len, k, pl, out_len]() {
    for (std::size_t j = 0; j < c_out; ++j) {
      const double* grow = out->grad.data() + j * out_len;
      if (bn->requires_grad) {
        bn->ensure_grad();
        double s = 0.0;
        for (std::size_t i = 0; i < out_len; ++i) s += grow[i];
        bn->grad[j] += s;
      }
      for (std::size_t c = 0; c < c_in; ++c) {
        const double* irow = in->value.data() + c * len;
        for (std::size_t t = 0; t < k; ++t) {
          std::ptrdiff_t off = static_cast<std::ptrdiff_t>(t) - static_cast<std::ptrdiff_t>(pl);
          std::ptrdiff_t i0 = off < 0 ? -off : 0;
          std::ptrdiff_t i1 = std::min<std::ptrdiff_t>(
              static_cast<std::ptrdiff_t>(out_len), static_cast<std::ptrdiff_t>(len) - off);
          if (kn->requires_grad) {
            kn->ensure_grad();
            double s = 0.0;
            for (std::ptrdiff_t i = i0; i < i1; ++i) s += grow[i] * irow[i + off];
            kn->grad[(j * c_in + c) * k + t] += s;
          }
          if (in->requires_grad) {
            in->ensure_grad();
            double w = kn->value[(j * c_in + c) * k + t];
            double* igrow = in->grad.data() + c * len;
            for (std::ptrdiff_t i = i0; i < i1; ++i) igrow[i + off] += w * grow[i];
          }
        }
      }
    }
  });
}

}  // namespace

Tensor conv1d(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  require(kernels.rank() == 3, "conv1d", "kernels must be [C_out, C_in, K]");
  std::size_t k = kernels.dim(2);
  require(k % 2 == 1, "conv1d", "kernel length must be odd for same padding");
  std::size_t pad = (k - 1) / 2;
  return conv1d_impl(input, kernels, bias, pad, pad, "conv1d");
}

Tensor conv1d_pad(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                  std::size_t pad_left, std::size_t pad_right) {
  return conv1d_impl(input, kernels, bias, pad_left, pad_right, "conv1d_pad");
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  require(input.rank() == 3, "conv2d", "input must be [C_in, H, W]");
  require(kernels.rank() == 4, "conv2d", "kernels must be [C_out, C_in, KH, KW]");
  auto in = input.node(), kn = kernels.node(), bn = bias.node();
  std::size_t c_in = in->shape[0], h = in->shape[1], w = in->shape[2];
  std::size_t c_out = kn->shape[0], kh = kn->shape[2], kw = kn->shape[3];
  require(kn->shape[1] == c_in, "conv2d", "kernel channel mismatch");
  require(kh % 2 == 1 && kw % 2 == 1, "conv2d", "kernel sides must be odd");
  require(bias.shape() == Shape{c_out}, "conv2d", "bias shape mismatch");
  std::ptrdiff_t ph = (kh - 1) / 2, pw = (kw - 1) / 2;

  auto at_in = [&](std::size_t c, std::ptrdiff_t y, std::ptrdiff_t x) -> double {
    if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(h) ||
        x >= static_cast<std::ptrdiff_t>(w))
      return 0.0;
    return in->value[(c * h + static_cast<std::size_t>(y)) * w + static_cast<std::size_t>(x)];
  };

  std::vector<double> v(c_out * h * w, 0.0);
  for (std::size_t o = 0; o < c_out; ++o)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double s = bn->value[o];
        for (std::size_t c = 0; c < c_in; ++c)
          for (std::size_t dy = 0; dy < kh; ++dy)
            for (std::size_t dx = 0; dx < kw; ++dx)
              s += at_in(c, static_cast<std::ptrdiff_t>(y + dy) - ph,
                         static_cast<std::ptrdiff_t>(x + dx) - pw) *
                   kn->value[((o * c_in + c) * kh + dy) * kw + dx];
        v[(o * h + y) * w + x] = s;
      }
  auto out = make_node({c_out, h, w}, std::move(v));
  return finish("conv2d", {in, kn, bn}, out, [in, kn, bn, out, c_in, c_out, h, w, kh, kw, ph, pw]() {
    for (std::size_t o = 0; o < c_out; ++o)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          double g = out->grad[(o * h + y) * w + x];
          if (g == 0.0) continue;
          if (bn->requires_grad) {
            bn->ensure_grad();
            bn->grad[o] += g;
          }
          for (std::size_t c = 0; c < c_in; ++c)
            for (std::size_t dy = 0; dy < kh; ++dy)
              for (std::size_t dx = 0; dx < kw; ++dx) {
                std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + dy) - ph;
                std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + dx) - pw;
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) ||
                    ix >= static_cast<std::ptrdiff_t>(w))
                  continue;
                std::size_t iidx = (c * h + static_cast<std::size_t>(iy)) * w +
                                   static_cast<std::size_t>(ix);
                std::size_t kidx = ((o * c_in + c) * kh + dy) * kw + dx;
                if (kn->requires_grad) {
                  kn->ensure_grad();
                  kn->grad[kidx] += g * in->value[iidx];
                }
                if (in->requires_grad) {
                  in->ensure_grad();
                  in->grad[iidx] += g * kn->value[kidx];
                }
              }
        }
  });
}

Tensor maxpool1d(const Tensor& input, std::size_t window, std::size_t stride) {
  require(input.rank() == 2, "maxpool1d", "input must be [C, L]");
  require(window >= 1 && stride >= 1, "maxpool1d", "window and stride must be positive");
  auto in = input.node();
  std::size_t c = in->shape[0], len = in->shape[1];
  require(window <= len, "maxpool1d",
          "window " + std::to_string(window) + " exceeds length " + std::to_string(len));
  std::size_t out_len = (len - window) / stride + 1;

  std::vector<double> v(c * out_len);
  auto argmax = std::make_shared<std::vector<std::size_t>>(c * out_len);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* irow = in->value.data() + ch * len;
    for (std::size_t wi = 0; wi < out_len; ++wi) {
      std::size_t base = wi * stride;
      std::size_t best = base;
      double bv = irow[base];
      for (std::size_t t = 1; t < window; ++t) {
        if (irow[base + t] > bv) {  // strict: ties keep the first index
          bv = irow[base + t];
          best = base + t;
        }
      }
      v[ch * out_len + wi] = bv;
      (*argmax)[ch * out_len + wi] = best;
    }
  }
  auto out = make_node({c, out_len}, std::move(v));
  return finish("maxpool1d", {in}, out, [in, out, argmax, c, out_len]() {
    std::size_t len = in->shape[1];
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t wi = 0; wi < out_len; ++wi)
        accum(in, ch * len + (*argmax)[ch * out_len + wi],
              out->grad[ch * out_len + wi]);
  });
}

Tensor max_over_axis(const Tensor& x, std::size_t axis) {
  require(x.rank() == 2, "max_over_axis", "input must be 2-D");
  require(axis <= 1, "max_over_axis", "axis out of range");
  auto xn = x.node();
  std::size_t rows = xn->shape[0], cols = xn->shape[1];
  std::size_t out_n = axis == 0 ? cols : rows;
  std::size_t scan_n = axis == 0 ? rows : cols;
  std::vector<double> v(out_n);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out_n);
  for (std::size_t o = 0; o < out_n; ++o) {
    std::size_t best = 0;
    double bv = axis == 0 ? xn->value[o] : xn->value[o * cols];
    for (std::size_t s = 1; s < scan_n; ++s) {
      double cur = axis == 0 ? xn->value[s * cols + o] : xn->value[o * cols + s];
      if (cur > bv) {
        bv = cur;
        best = s;
      }
    }
    v[o] = bv;
    (*argmax)[o] = best;
  }
  auto out = make_node({out_n}, std::move(v));
  return finish("max_over_axis", {xn}, out, [xn, out, argmax, axis, out_n]() {
    std::size_t cols = xn->shape[1];
    for (std::size_t o = 0; o < out_n; ++o) {
      std::size_t s = (*argmax)[o];
      std::size_t idx = axis == 0 ? s * cols + o : o * cols + s;
      accum(xn, idx, out->grad[o]);
    }
  });
}

Tensor global_avg_pool2d(const Tensor& x) {
  require(x.rank() == 3, "global_avg_pool2d", "input must be [C, H, W]");
  auto xn = x.node();
  std::size_t c = xn->shape[0], hw = xn->shape[1] * xn->shape[2];
  double inv = 1.0 / static_cast<double>(hw);
  std::vector<double> v(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += xn->value[ch * hw + i];
    v[ch] = s * inv;
  }
  auto out = make_node({c}, std::move(v));
  return finish("global_avg_pool2d", {xn}, out, [xn, out, c, hw, inv]() {
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < hw; ++i)
        accum(xn, ch * hw + i, inv * out->grad[ch]);
  });
}

// ---- Normalization / activation ----

Tensor softmax(const Tensor& x) {
  require(x.rank() == 1 || x.rank() == 2, "softmax", "input must be 1-D or 2-D");
  auto xn = x.node();
  std::size_t cols = x.shape().back();
  std::size_t rows = xn->size() / cols;
  std::vector<double> v(xn->size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* irow = xn->value.data() + r * cols;
    double* orow = v.data() + r * cols;
    double mx = irow[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, irow[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      orow[j] = std::exp(irow[j] - mx);
      denom += orow[j];
    }
    for (std::size_t j = 0; j < cols; ++j) orow[j] /= denom;
  }
  auto out = make_node(xn->shape, std::move(v));
  return finish("softmax", {xn}, out, [xn, out, rows, cols]() {
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = out->value.data() + r * cols;
      const double* g = out->grad.data() + r * cols;
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < cols; ++j)
        accum(xn, r * cols + j, y[j] * (g[j] - dot));
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps) {
  require(x.rank() == 1 || x.rank() == 2, "layer_norm", "input must be 1-D or 2-D");
  auto xn = x.node(), gn = gain.node(), sn = shift.node();
  std::size_t cols = x.shape().back();
  std::size_t rows = xn->size() / cols;
  require(gain.shape() == Shape{cols} && shift.shape() == Shape{cols}, "layer_norm",
          "gain/shift must match the trailing dimension");

  std::vector<double> v(xn->size());
  auto xhat = std::make_shared<std::vector<double>>(xn->size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* irow = xn->value.data() + r * cols;
    double mu = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mu += irow[j];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) var += (irow[j] - mu) * (irow[j] - mu);
    var /= static_cast<double>(cols);
    double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < cols; ++j) {
      double xh = (irow[j] - mu) * is;
      (*xhat)[r * cols + j] = xh;
      v[r * cols + j] = gn->value[j] * xh + sn->value[j];
    }
  }
  auto out = make_node(xn->shape, std::move(v));
  return finish("layer_norm", {xn, gn, sn}, out, [xn, gn, sn, out, xhat, inv_std, rows, cols]() {
    for (std::size_t r = 0; r < rows; ++r) {
      const double* g = out->grad.data() + r * cols;
      const double* xh = xhat->data() + r * cols;
      double mean_dxh = 0.0, mean_dxh_xh = 0.0;
      for (std::size_t j = 0; j < cols; ++j) {
        double dxh = g[j] * gn->value[j];
        mean_dxh += dxh;
        mean_dxh_xh += dxh * xh[j];
        if (gn->requires_grad) {
          gn->ensure_grad();
          gn->grad[j] += g[j] * xh[j];
        }
        if (sn->requires_grad) {
          sn->ensure_grad();
          sn->grad[j] += g[j];
        }
      }
      mean_dxh /= static_cast<double>(cols);
      mean_dxh_xh /= static_cast<double>(cols);
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (std::size_t j = 0; j < cols; ++j) {
          double dxh = g[j] * gn->value[j];
          xn->grad[r * cols + j] +=
              (*inv_std)[r] * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
        }
      }
    }
  });
}

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
  require(rate >= 0.0 && rate < 1.0, "dropout", "rate must be in [0, 1)");
  auto xn = x.node();
  if (!training || rate == 0.0) {
    auto out = make_node(xn->shape, xn->value);
    return finish("dropout", {xn}, out, [xn, out]() {
      for (std::size_t i = 0; i < out->grad.size(); ++i) accum(xn, i, out->grad[i]);
    });
  }
  double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(xn->size());
  std::vector<double> v(xn->size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double m = rng.bernoulli(rate) ? 0.0 : keep_scale;
    (*mask)[i] = m;
    v[i] = xn->value[i] * m;
  }
  auto out = make_node(xn->shape, std::move(v));
  return finish("dropout", {xn}, out, [xn, out, mask]() {
    for (std::size_t i = 0; i < out->grad.size(); ++i)
      accum(xn, i, out->grad[i] * (*mask)[i]);
  });
}

// ---- Lookup / reduction / loss ----

Tensor embedding_lookup(const std::vector<int>& ids, const Tensor& table) {
  require(table.rank() == 2, "embedding_lookup", "table must be [V, d]");
  auto tn = table.node();
  std::size_t vocab = tn->shape[0], dim = tn->shape[1];
  for (int id : ids) {
    require(id >= 0 && static_cast<std::size_t>(id) < vocab, "embedding_lookup",
            "id " + std::to_string(id) + " out of range for vocab " + std::to_string(vocab));
  }
  std::vector<double> v(ids.size() * dim);
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy(tn->value.begin() + static_cast<std::size_t>(ids[i]) * dim,
              tn->value.begin() + (static_cast<std::size_t>(ids[i]) + 1) * dim,
              v.begin() + i * dim);
  auto out = make_node({ids.size(), dim}, std::move(v));
  auto ids_copy = std::make_shared<std::vector<int>>(ids);
  return finish("embedding_lookup", {tn}, out, [tn, out, ids_copy, dim]() {
    if (!tn->requires_grad) return;
    tn->ensure_grad();
    for (std::size_t i = 0; i < ids_copy->size(); ++i) {
      double* trow = tn->grad.data() + static_cast<std::size_t>((*ids_copy)[i]) * dim;
      const double* grow = out->grad.data() + i * dim;
      for (std::size_t j = 0; j < dim; ++j) trow[j] += grow[j];
    }
  });
}

Tensor sum(const Tensor& x) {
  auto xn = x.node();
  double s = 0.0;
  for (double v : xn->value) s += v;
  auto out = make_node({1}, {s});
  return finish("sum", {xn}, out, [xn, out]() {
    for (std::size_t i = 0; i < xn->value.size(); ++i) accum(xn, i, out->grad[0]);
  });
}

Tensor mean_all(const Tensor& x) {
  auto xn = x.node();
  double inv = 1.0 / static_cast<double>(xn->size());
  double s = 0.0;
  for (double v : xn->value) s += v;
  auto out = make_node({1}, {s * inv});
  return finish("mean_all", {xn}, out, [xn, out, inv]() {
    for (std::size_t i = 0; i < xn->value.size(); ++i) accum(xn, i, inv * out->grad[0]);
  });
}

Tensor cross_entropy_logits(const Tensor& logits, std::size_t label) {
  require(logits.rank() == 1, "cross_entropy_logits", "logits must be 1-D");
  auto ln = logits.node();
  std::size_t m = ln->size();
  require(label < m, "cross_entropy_logits",
          "label " + std::to_string(label) + " out of range for " + std::to_string(m));
  double mx = ln->value[0];
  for (double v : ln->value) mx = std::max(mx, v);
  auto probs = std::make_shared<std::vector<double>>(m);
  double denom = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    (*probs)[i] = std::exp(ln->value[i] - mx);
    denom += (*probs)[i];
  }
  for (double& p : *probs) p /= denom;
  double loss = std::log(denom) + mx - ln->value[label];
  auto out = make_node({1}, {loss});
  return finish("cross_entropy_logits", {ln}, out, [ln, out, probs, label, m]() {
    double g = out->grad[0];
    for (std::size_t i = 0; i < m; ++i)
      accum(ln, i, g * ((*probs)[i] - (i == label ? 1.0 : 0.0)));
  });
}

Tensor nll_loss(const Tensor& probs, std::size_t label) {
  require(probs.rank() == 1, "nll_loss", "probabilities must be 1-D");
  auto pn = probs.node();
  require(label < pn->size(), "nll_loss",
          "label " + std::to_string(label) + " out of range for " +
              std::to_string(pn->size()));
  double loss = -std::log(pn->value[label]);
  auto out = make_node({1}, {loss});
  return finish("nll_loss", {pn}, out, [pn, out, label]() {
    accum(pn, label, -out->grad[0] / pn->value[label]);
  });
}

}  // namespace mrlf
