#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cvl/rng.hpp"

namespace cvl {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);

struct TensorNode {
  Shape shape;
  std::vector<double> data;   // row-major
  std::vector<double> grad;   // empty until first accumulation
  bool requires_grad = false;
};

// Value-semantics handle over a shared node. Copies alias the same storage;
// gradients accumulate on the node and survive as long as any handle does.
class Tensor {
 public:
  Tensor() : node_(std::make_shared<TensorNode>()) { node_->shape = {0}; }

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, double stddev,
                      bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->data.size(); }
  std::size_t rows() const;  // 2-d only
  std::size_t cols() const;  // 2-d only

  std::vector<double>& data() { return node_->data; }
  const std::vector<double>& data() const { return node_->data; }

  double item() const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  bool has_grad() const { return !node_->grad.empty(); }
  // Allocates a zero-filled accumulator on first use.
  std::vector<double>& grad();
  void zero_grad();

  const std::shared_ptr<TensorNode>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<TensorNode> node_;
  friend Tensor make_op_output(Shape shape, std::vector<double> data,
                               bool tracked);
};

// Ordered record of executed operations. Construction installs the tape as
// the active recorder for the current thread; destruction restores the
// previous one. Ops record onto the active tape only when an input requires
// gradients, so code outside any tape scope runs untracked.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();
  static bool recording();

  void record(std::shared_ptr<TensorNode> out, std::function<void()> fn);

  // Seeds d(loss)/d(loss) = 1 and replays the tape once in reverse,
  // accumulating into every reachable node's grad. Clears the tape.
  void backward_from(const Tensor& loss);

  std::size_t size() const { return steps_.size(); }

 private:
  struct Step {
    std::shared_ptr<TensorNode> out;
    std::function<void()> fn;
  };
  std::vector<Step> steps_;
  Tape* parent_;
};

// Convenience: backward on the active tape.
void backward(const Tensor& loss);

// ---- operations ----

Tensor matmul(const Tensor& a, const Tensor& b);

enum class Elementwise { add, mul };
// b may broadcast: its shape must be a suffix of a's shape, and it is
// repeated along the leading axes. Gradients of b sum over those axes.
Tensor elementwise(const Tensor& a, const Tensor& b, Elementwise kind);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double c);
// Row-wise scale of a 2-d tensor by constant weights (length == rows).
Tensor scale_rows(const Tensor& a, const std::vector<double>& w);
Tensor transpose(const Tensor& a);

// Mask sentinel added to attention scores before softmax. Large enough that
// exp underflows to exactly zero after max subtraction, finite so backward
// stays NaN-free.
inline constexpr double kMaskSentinel = -1e9;

Tensor softmax(const Tensor& x, int axis = -1);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-12);
Tensor gelu(const Tensor& x);
Tensor tanh_op(const Tensor& x);

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);
Tensor cross_entropy(const Tensor& logits, int label);

Tensor sum(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);  // size-preserving view copy
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);

// Max over all tested coordinates of |analytic - central difference| /
// max(|analytic|, |cd|, 1e-8). f must be scalar-valued and rebuild its graph
// on every call. When max_coords_per_input > 0, that many coordinates are
// sampled per input with rng (all coordinates otherwise).
double grad_check(const std::function<Tensor(std::vector<Tensor>&)>& f,
                  std::vector<Tensor>& inputs, double step = 1e-3,
                  std::size_t max_coords_per_input = 0, Rng* rng = nullptr);

}  // namespace cvl
