#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace mrlf {

class Rng;

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a backward pass touches this node
  bool requires_grad = false;

  std::size_t size() const { return value.size(); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

using NodePtr = std::shared_ptr<TensorNode>;

// Dense row-major fp64 tensor. Copies share the underlying node; every op
// returns a fresh node, so values are immutable once created. The only
// sanctioned in-place mutation is `values_mut`, used by the optimizer.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor from(Shape shape, std::vector<double> data);
  static Tensor scalar(double v);
  // Leaf with gradient tracking enabled.
  static Tensor param(Shape shape, std::vector<double> data);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape[i]; }
  std::size_t rank() const { return node_->shape.size(); }

  const std::vector<double>& values() const { return node_->value; }
  // Optimizer-only escape hatch; invalidates nothing because leaves carry no
  // recorded forward state.
  std::vector<double>& values_mut() { return node_->value; }

  double value_at(std::size_t i) const { return node_->value[i]; }
  double at2(std::size_t r, std::size_t c) const {
    return node_->value[r * node_->shape[1] + c];
  }
  double scalar_value() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  // Gradient from the last backward pass; zeros if this leaf was never
  // touched by the recorded computation.
  std::vector<double> grad() const;
  void zero_grad();

  NodePtr node() const { return node_; }
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}

 private:
  NodePtr node_;
};

// Record of executed ops in execution (hence topological) order. backward()
// replays the rules in reverse, visiting each entry exactly once.
class Tape {
 public:
  struct Entry {
    const char* op;
    std::vector<NodePtr> inputs;
    NodePtr output;
    std::function<void()> rule;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(const char* op, std::vector<NodePtr> inputs, NodePtr output,
              std::function<void()> rule);
  void backward(const Tensor& loss);
  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }
  const Entry& entry(std::size_t i) const { return entries_[i]; }

  // RAII activation; ops record into the innermost active tape. No active
  // tape means pure forward evaluation.
  class Scope {
   public:
    explicit Scope(Tape& t);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

  static Tape* active();

 private:
  std::vector<Entry> entries_;
};

// ---- Elementwise and shape ops ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor relu(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor mean_of(const std::vector<Tensor>& parts);

// ---- Linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// x may be [D_in] or [N, D_in]; bias optional (undefined Tensor skips it).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = Tensor());

// ---- Convolution / pooling ----
// Same-padded 1-D cross-correlation, odd kernel length only.
// input [C_in, L], kernels [C_out, C_in, K], bias [C_out] -> [C_out, L].
Tensor conv1d(const Tensor& input, const Tensor& kernels, const Tensor& bias);
// Explicit zero padding; output length L + pad_left + pad_right - K + 1.
Tensor conv1d_pad(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                  std::size_t pad_left, std::size_t pad_right);
// Same-padded 2-D cross-correlation, odd kernel sides.
// input [C_in, H, W], kernels [C_out, C_in, KH, KW], bias [C_out] -> [C_out, H, W].
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias);
// input [C, L] -> [C, floor((L - window) / stride) + 1]; trailing partial
// window dropped; gradient routed to the first argmax of each window.
Tensor maxpool1d(const Tensor& input, std::size_t window, std::size_t stride);
// Max over one axis of a 2-D tensor; axis 0 gives [cols], axis 1 gives [rows].
Tensor max_over_axis(const Tensor& x, std::size_t axis);
// Mean over all entries of each channel of [C, H, W] -> [C].
Tensor global_avg_pool2d(const Tensor& x);

// ---- Normalization / activation ----
// Softmax over the trailing axis of a 1-D or 2-D tensor, max-subtracted.
Tensor softmax(const Tensor& x);
// Per-row normalization over the trailing axis (population variance).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift,
                  double eps = 1e-5);
// Inverted dropout: training zeroes entries with probability `rate` and
// scales survivors by 1/(1-rate); eval is the identity.
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);

// ---- Lookup / reduction / loss ----
Tensor embedding_lookup(const std::vector<int>& ids, const Tensor& table);
Tensor sum(const Tensor& x);
Tensor mean_all(const Tensor& x);
// Fused log-softmax cross entropy on logits [m]; backward is softmax - onehot.
Tensor cross_entropy_logits(const Tensor& logits, std::size_t label);
// -log(p[label]) on an explicit probability vector.
Tensor nll_loss(const Tensor& probs, std::size_t label);

}  // namespace mrlf
