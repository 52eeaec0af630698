#include "cvl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cvl {

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += " x ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

void ensure_grad(TensorNode& node) {
  if (node.grad.empty()) node.grad.assign(node.data.size(), 0.0);
}

void require_2d(const Tensor& t, const char* op) {
  if (t.shape().size() != 2)
    throw std::invalid_argument(std::string(op) + ": expected 2-d tensor, got " +
                                shape_str(t.shape()));
}

}  // namespace

Tensor make_op_output(Shape shape, std::vector<double> data, bool tracked) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = tracked;
  return Tensor(std::move(node));
}

// ---- Tensor ----

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  Tensor t = make_op_output(std::move(shape), std::vector<double>(n, 0.0), false);
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  Tensor t = make_op_output(std::move(shape), std::vector<double>(n, value), false);
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size())
    throw std::invalid_argument("Tensor: shape " + shape_str(shape) + " needs " +
                                std::to_string(shape_numel(shape)) +
                                " values, got " + std::to_string(data.size()));
  Tensor t = make_op_output(std::move(shape), std::move(data), false);
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = rng.normal(0.0, stddev);
  Tensor t = make_op_output(std::move(shape), std::move(data), false);
  t.set_requires_grad(requires_grad);
  return t;
}

std::size_t Tensor::rows() const {
  require_2d(*this, "rows");
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  require_2d(*this, "cols");
  return node_->shape[1];
}

double Tensor::item() const {
  if (size() != 1)
    throw std::invalid_argument("item: tensor is not scalar, shape " +
                                shape_str(node_->shape));
  return node_->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  require_2d(*this, "at");
  if (r >= node_->shape[0] || c >= node_->shape[1])
    throw std::out_of_range("at: index (" + std::to_string(r) + ", " +
                            std::to_string(c) + ") outside " +
                            shape_str(node_->shape));
  return node_->data[r * node_->shape[1] + c];
}

std::vector<double>& Tensor::grad() {
  ensure_grad(*node_);
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

// ---- Tape ----

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::Tape() : parent_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = parent_; }

Tape* Tape::active() { return g_active_tape; }

bool Tape::recording() { return g_active_tape != nullptr; }

void Tape::record(std::shared_ptr<TensorNode> out, std::function<void()> fn) {
  steps_.push_back({std::move(out), std::move(fn)});
}

void Tape::backward_from(const Tensor& loss) {
  if (loss.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(loss.shape()));
  if (!loss.node()->requires_grad)
    throw std::invalid_argument("backward: loss was not produced by tracked ops");
  ensure_grad(*loss.node());
  loss.node()->grad[0] += 1.0;
  // Execution order is a topological order, so a single reverse sweep visits
  // every consumer before its producer.
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
    if (!it->out->grad.empty()) it->fn();
  }
  steps_.clear();
}

void backward(const Tensor& loss) {
  if (!Tape::recording())
    throw std::invalid_argument("backward: no active tape");
  Tape::active()->backward_from(loss);
}

namespace {

bool should_track(std::initializer_list<const Tensor*> ins) {
  if (!Tape::recording()) return false;
  for (const Tensor* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

// ---- matmul kernels, accumulate into c ----

void mm_acc(const double* a, const double* b, double* c, std::size_t m,
            std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c[m x k] += a[m x n] * b[k x n]^T
void mm_abt_acc(const double* a, const double* b, double* c, std::size_t m,
                std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * n;
    double* ci = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += ai[j] * bp[j];
      ci[p] += s;
    }
  }
}

// c[k x n] += a[m x k]^T * b[m x n]
void mm_atb_acc(const double* a, const double* b, double* c, std::size_t m,
                std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dimensions disagree: " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  mm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  Tensor y = make_op_output({m, n}, std::move(out), should_track({&a, &b}));
  if (y.requires_grad()) {
    auto an = a.node(), bn = b.node(), on = y.node();
    Tape::active()->record(on, [an, bn, on, m, k, n] {
      if (an->requires_grad) {
        ensure_grad(*an);
        mm_abt_acc(on->grad.data(), bn->data.data(), an->grad.data(), m, n, k);
      }
      if (bn->requires_grad) {
        ensure_grad(*bn);
        mm_atb_acc(an->data.data(), on->grad.data(), bn->grad.data(), m, k, n);
      }
    });
  }
  return y;
}

Tensor elementwise(const Tensor& a, const Tensor& b, Elementwise kind) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const bool suffix =
      sb.size() <= sa.size() &&
      std::equal(sb.rbegin(), sb.rend(), sa.rbegin());
  if (!suffix)
    throw std::invalid_argument(
        std::string("elementwise ") + (kind == Elementwise::add ? "add" : "mul") +
        ": shape " + shape_str(sb) + " does not broadcast over " + shape_str(sa) +
        " (b must be a trailing suffix of a)");
  const std::size_t n = a.size(), bs = b.size();
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  std::vector<double> out(n);
  if (kind == Elementwise::add) {
    if (bs == n)
      for (std::size_t i = 0; i < n; ++i) out[i] = ad[i] + bd[i];
    else
      for (std::size_t i = 0; i < n; ++i) out[i] = ad[i] + bd[i % bs];
  } else {
    if (bs == n)
      for (std::size_t i = 0; i < n; ++i) out[i] = ad[i] * bd[i];
    else
      for (std::size_t i = 0; i < n; ++i) out[i] = ad[i] * bd[i % bs];
  }
  Tensor y = make_op_output(sa, std::move(out), should_track({&a, &b}));
  if (y.requires_grad()) {
    auto an = a.node(), bn = b.node(), on = y.node();
    Tape::active()->record(on, [an, bn, on, kind, n, bs] {
      const double* go = on->grad.data();
      if (kind == Elementwise::add) {
        if (an->requires_grad) {
          ensure_grad(*an);
          for (std::size_t i = 0; i < n; ++i) an->grad[i] += go[i];
        }
        if (bn->requires_grad) {
          ensure_grad(*bn);
          for (std::size_t i = 0; i < n; ++i) bn->grad[i % bs] += go[i];
        }
      } else {
        if (an->requires_grad) {
          ensure_grad(*an);
          for (std::size_t i = 0; i < n; ++i) an->grad[i] += go[i] * bn->data[i % bs];
        }
        if (bn->requires_grad) {
          ensure_grad(*bn);
          for (std::size_t i = 0; i < n; ++i) bn->grad[i % bs] += go[i] * an->data[i];
        }
      }
    });
  }
  return y;
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, Elementwise::add); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, Elementwise::mul); }

Tensor scale(const Tensor& a, double c) {
  const std::size_t n = a.size();
  std::vector<double> out(n);
  const double* ad = a.data().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = c * ad[i];
  Tensor y = make_op_output(a.shape(), std::move(out), should_track({&a}));
  if (y.requires_grad()) {
    auto an = a.node(), on = y.node();
    Tape::active()->record(on, [an, on, c, n] {
      if (!an->requires_grad) return;
      ensure_grad(*an);
      for (std::size_t i = 0; i < n; ++i) an->grad[i] += c * on->grad[i];
    });
  }
  return y;
}

Tensor scale_rows(const Tensor& a, const std::vector<double>& w) {
  require_2d(a, "scale_rows");
  if (w.size() != a.rows())
    throw std::invalid_argument("scale_rows: weight count " +
                                std::to_string(w.size()) + " != rows of " +
                                shape_str(a.shape()));
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  const double* ad = a.data().data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = w[i] * ad[i * c + j];
  Tensor y = make_op_output(a.shape(), std::move(out), should_track({&a}));
  if (y.requires_grad()) {
    auto an = a.node(), on = y.node();
    Tape::active()->record(on, [an, on, w, r, c] {
      if (!an->requires_grad) return;
      ensure_grad(*an);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          an->grad[i * c + j] += w[i] * on->grad[i * c + j];
    });
  }
  return y;
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  const double* ad = a.data().data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = ad[i * c + j];
  Tensor y = make_op_output({c, r}, std::move(out), should_track({&a}));
  if (y.requires_grad()) {
    auto an = a.node(), on = y.node();
    Tape::active()->record(on, [an, on, r, c] {
      if (!an->requires_grad) return;
      ensure_grad(*an);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          an->grad[i * c + j] += on->grad[j * r + i];
    });
  }
  return y;
}

namespace {

struct AxisSpan {
  std::size_t outer, len, inner;
};

AxisSpan axis_span(const Shape& shape, int axis, const char* op) {
  const int rank = static_cast<int>(shape.size());
  int ax = axis < 0 ? rank + axis : axis;
  if (ax < 0 || ax >= rank)
    throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(axis) +
                                " out of range for " + shape_str(shape));
  AxisSpan s{1, shape[static_cast<std::size_t>(ax)], 1};
  for (int i = 0; i < ax; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
  for (int i = ax + 1; i < rank; ++i) s.inner *= shape[static_cast<std::size_t>(i)];
  return s;
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  const AxisSpan sp = axis_span(x.shape(), axis, "softmax");
  std::vector<double> out(x.size());
  const double* xd = x.data().data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.len * sp.inner + in;
      double mx = xd[base];
      for (std::size_t t = 1; t < sp.len; ++t)
        mx = std::max(mx, xd[base + t * sp.inner]);
      double z = 0.0;
      for (std::size_t t = 0; t < sp.len; ++t) {
        const double e = std::exp(xd[base + t * sp.inner] - mx);
        out[base + t * sp.inner] = e;
        z += e;
      }
      const double inv = 1.0 / z;
      for (std::size_t t = 0; t < sp.len; ++t) out[base + t * sp.inner] *= inv;
    }
  }
  Tensor y = make_op_output(x.shape(), std::move(out), should_track({&x}));
  if (y.requires_grad()) {
    auto xn = x.node(), on = y.node();
    Tape::active()->record(on, [xn, on, sp] {
      if (!xn->requires_grad) return;
      ensure_grad(*xn);
      const double* yd = on->data.data();
      const double* go = on->grad.data();
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t in = 0; in < sp.inner; ++in) {
          const std::size_t base = o * sp.len * sp.inner + in;
          double dot = 0.0;
          for (std::size_t t = 0; t < sp.len; ++t) {
            const std::size_t idx = base + t * sp.inner;
            dot += go[idx] * yd[idx];
          }
          for (std::size_t t = 0; t < sp.len; ++t) {
            const std::size_t idx = base + t * sp.inner;
            xn->grad[idx] += yd[idx] * (go[idx] - dot);
          }
        }
      }
    });
  }
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  if (x.shape().empty())
    throw std::invalid_argument("layer_norm: scalar input");
  const std::size_t h = x.shape().back();
  if (h < 2)
    throw std::invalid_argument("layer_norm: last dimension must be >= 2, got " +
                                shape_str(x.shape()));
  if (gamma.size() != h || beta.size() != h)
    throw std::invalid_argument("layer_norm: gamma/beta size must be " +
                                std::to_string(h));
  if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be positive");
  const std::size_t rows = x.size() / h;
  std::vector<double> out(x.size());
  const double* xd = x.data().data();
  const double* gd = gamma.data().data();
  const double* bd = beta.data().data();
  const double invh = 1.0 / static_cast<double>(h);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xd + r * h;
    double mean = 0.0;
    for (std::size_t j = 0; j < h; ++j) mean += row[j];
    mean *= invh;
    double var = 0.0;
    for (std::size_t j = 0; j < h; ++j) {
      const double d = row[j] - mean;
      var += d * d;
    }
    var *= invh;
    const double inv = 1.0 / std::sqrt(var + eps);
    double* orow = out.data() + r * h;
    for (std::size_t j = 0; j < h; ++j)
      orow[j] = gd[j] * ((row[j] - mean) * inv) + bd[j];
  }
  Tensor y = make_op_output(x.shape(), std::move(out), should_track({&x, &gamma, &beta}));
  if (y.requires_grad()) {
    auto xn = x.node(), gn = gamma.node(), bn = beta.node(), on = y.node();
    Tape::active()->record(on, [xn, gn, bn, on, rows, h, eps, invh] {
      const double* go = on->grad.data();
      const double* xd2 = xn->data.data();
      const double* gd2 = gn->data.data();
      std::vector<double> xhat(h);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xd2 + r * h;
        const double* grow = go + r * h;
        double mean = 0.0;
        for (std::size_t j = 0; j < h; ++j) mean += row[j];
        mean *= invh;
        double var = 0.0;
        for (std::size_t j = 0; j < h; ++j) {
          const double d = row[j] - mean;
          var += d * d;
        }
        var *= invh;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < h; ++j) xhat[j] = (row[j] - mean) * inv;
        if (gn->requires_grad) {
          ensure_grad(*gn);
          for (std::size_t j = 0; j < h; ++j) gn->grad[j] += grow[j] * xhat[j];
        }
        if (bn->requires_grad) {
          ensure_grad(*bn);
          for (std::size_t j = 0; j < h; ++j) bn->grad[j] += grow[j];
        }
        if (xn->requires_grad) {
          ensure_grad(*xn);
          double s1 = 0.0, s2 = 0.0;
          for (std::size_t j = 0; j < h; ++j) {
            const double dxh = grow[j] * gd2[j];
            s1 += dxh;
            s2 += dxh * xhat[j];
          }
          double* gx = xn->grad.data() + r * h;
          for (std::size_t j = 0; j < h; ++j) {
            const double dxh = grow[j] * gd2[j];
            gx[j] += inv * (dxh - invh * s1 - xhat[j] * invh * s2);
          }
        }
      }
    });
  }
  return y;
}

namespace {
constexpr double kGeluC = 0.79788456080286535588;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}

Tensor gelu(const Tensor& x) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  const double* xd = x.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double v = xd[i];
    const double u = kGeluC * (v + kGeluA * v * v * v);
    out[i] = 0.5 * v * (1.0 + std::tanh(u));
  }
  Tensor y = make_op_output(x.shape(), std::move(out), should_track({&x}));
  if (y.requires_grad()) {
    auto xn = x.node(), on = y.node();
    Tape::active()->record(on, [xn, on, n] {
      if (!xn->requires_grad) return;
      ensure_grad(*xn);
      for (std::size_t i = 0; i < n; ++i) {
        const double v = xn->data[i];
        const double u = kGeluC * (v + kGeluA * v * v * v);
        const double t = std::tanh(u);
        const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
        const double dy = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
        xn->grad[i] += dy * on->grad[i];
      }
    });
  }
  return y;
}

Tensor tanh_op(const Tensor& x) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  const double* xd = x.data().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(xd[i]);
  Tensor y = make_op_output(x.shape(), std::move(out), should_track({&x}));
  if (y.requires_grad()) {
    auto xn = x.node(), on = y.node();
    Tape::active()->record(on, [xn, on, n] {
      if (!xn->requires_grad) return;
      ensure_grad(*xn);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = on->data[i];
        xn->grad[i] += (1.0 - t * t) * on->grad[i];
      }
    });
  }
  return y;
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
  require_2d(table, "embedding_lookup");
  const std::size_t v = table.rows(), h = table.cols();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v)
      throw std::out_of_range("embedding_lookup: id " + std::to_string(ids[i]) +
                              " at position " + std::to_string(i) +
                              " outside [0, " + std::to_string(v) + ")");
  }
  const std::size_t t = ids.size();
  std::vector<double> out(t * h);
  const double* td = table.data().data();
  for (std::size_t i = 0; i < t; ++i) {
    const double* row = td + static_cast<std::size_t>(ids[i]) * h;
    std::copy(row, row + h, out.data() + i * h);
  }
  Tensor y = make_op_output({t, h}, std::move(out), should_track({&table}));
  if (y.requires_grad()) {
    auto tn = table.node(), on = y.node();
    Tape::active()->record(on, [tn, on, ids, t, h] {
      if (!tn->requires_grad) return;
      ensure_grad(*tn);
      for (std::size_t i = 0; i < t; ++i) {
        double* grow = tn->grad.data() + static_cast<std::size_t>(ids[i]) * h;
        const double* go = on->grad.data() + i * h;
        for (std::size_t j = 0; j < h; ++j) grow[j] += go[j];
      }
    });
  }
  return y;
}

Tensor cross_entropy(const Tensor& logits, int label) {
  const std::size_t c = logits.shape().back();
  if (logits.size() != c)
    throw std::invalid_argument("cross_entropy: logits must be a single row, got " +
                                shape_str(logits.shape()));
  if (label < 0 || static_cast<std::size_t>(label) >= c)
    throw std::out_of_range("cross_entropy: label " + std::to_string(label) +
                            " outside [0, " + std::to_string(c) + ")");
  const double* xd = logits.data().data();
  double mx = xd[0];
  for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, xd[j]);
  double z = 0.0;
  for (std::size_t j = 0; j < c; ++j) z += std::exp(xd[j] - mx);
  const double loss = std::log(z) - (xd[static_cast<std::size_t>(label)] - mx);
  Tensor y = make_op_output({1}, {loss}, should_track({&logits}));
  if (y.requires_grad()) {
    auto xn = logits.node(), on = y.node();
    Tape::active()->record(on, [xn, on, label, c] {
      if (!xn->requires_grad) return;
      ensure_grad(*xn);
      const double* xd2 = xn->data.data();
      double mx2 = xd2[0];
      for (std::size_t j = 1; j < c; ++j) mx2 = std::max(mx2, xd2[j]);
      double z2 = 0.0;
      for (std::size_t j = 0; j < c; ++j) z2 += std::exp(xd2[j] - mx2);
      const double g = on->grad[0];
      for (std::size_t j = 0; j < c; ++j) {
        const double p = std::exp(xd2[j] - mx2) / z2;
        xn->grad[j] += g * (p - (static_cast<std::size_t>(label) == j ? 1.0 : 0.0));
      }
    });
  }
  return y;
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor y = make_op_output({1}, {s}, should_track({&x}));
  if (y.requires_grad()) {
    auto xn = x.node(), on = y.node();
    Tape::active()->record(on, [xn, on] {
      if (!xn->requires_grad) return;
      ensure_grad(*xn);
      const double g = on->grad[0];
      for (double& v : xn->grad) v += g;
    });
  }
  return y;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.size())
    throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) +
                                " as " + shape_str(shape));
  Tensor y = make_op_output(std::move(shape), x.data(), should_track({&x}));
  if (y.requires_grad()) {
    auto xn = x.node(), on = y.node();
    Tape::active()->record(on, [xn, on] {
      if (!xn->requires_grad) return;
      ensure_grad(*xn);
      for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i];
    });
  }
  return y;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const std::size_t c = parts.front().cols();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    require_2d(p, "concat_rows");
    if (p.cols() != c)
      throw std::invalid_argument("concat_rows: column mismatch: " +
                                  shape_str(parts.front().shape()) + " vs " +
                                  shape_str(p.shape()));
    total += p.rows();
  }
  std::vector<double> out;
  out.reserve(total * c);
  for (const Tensor& p : parts)
    out.insert(out.end(), p.data().begin(), p.data().end());
  bool track = false;
  for (const Tensor& p : parts) track = track || should_track({&p});
  Tensor y = make_op_output({total, c}, std::move(out), track);
  if (y.requires_grad()) {
    std::vector<std::shared_ptr<TensorNode>> nodes;
    for (const Tensor& p : parts) nodes.push_back(p.node());
    auto on = y.node();
    Tape::active()->record(on, [nodes, on] {
      std::size_t off = 0;
      for (const auto& pn : nodes) {
        const std::size_t sz = pn->data.size();
        if (pn->requires_grad) {
          ensure_grad(*pn);
          for (std::size_t i = 0; i < sz; ++i) pn->grad[i] += on->grad[off + i];
        }
        off += sz;
      }
    });
  }
  return y;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const std::size_t r = parts.front().rows();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    require_2d(p, "concat_cols");
    if (p.rows() != r)
      throw std::invalid_argument("concat_cols: row mismatch: " +
                                  shape_str(parts.front().shape()) + " vs " +
                                  shape_str(p.shape()));
    total += p.cols();
  }
  std::vector<double> out(r * total);
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    const std::size_t pc = p.cols();
    for (std::size_t i = 0; i < r; ++i)
      std::copy(p.data().begin() + static_cast<std::ptrdiff_t>(i * pc),
                p.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * pc),
                out.begin() + static_cast<std::ptrdiff_t>(i * total + off));
    off += pc;
  }
  bool track = false;
  for (const Tensor& p : parts) track = track || should_track({&p});
  Tensor y = make_op_output({r, total}, std::move(out), track);
  if (y.requires_grad()) {
    std::vector<std::shared_ptr<TensorNode>> nodes;
    std::vector<std::size_t> widths;
    for (const Tensor& p : parts) {
      nodes.push_back(p.node());
      widths.push_back(p.cols());
    }
    auto on = y.node();
    Tape::active()->record(on, [nodes, widths, on, r, total] {
      std::size_t coff = 0;
      for (std::size_t p = 0; p < nodes.size(); ++p) {
        const auto& pn = nodes[p];
        const std::size_t pc = widths[p];
        if (pn->requires_grad) {
          ensure_grad(*pn);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < pc; ++j)
              pn->grad[i * pc + j] += on->grad[i * total + coff + j];
        }
        coff += pc;
      }
    });
  }
  return y;
}

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count) {
  require_2d(x, "slice_rows");
  if (start + count > x.rows())
    throw std::out_of_range("slice_rows: rows [" + std::to_string(start) + ", " +
                            std::to_string(start + count) + ") outside " +
                            shape_str(x.shape()));
  const std::size_t c = x.cols();
  std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(start * c),
                          x.data().begin() + static_cast<std::ptrdiff_t>((start + count) * c));
  Tensor y = make_op_output({count, c}, std::move(out), should_track({&x}));
  if (y.requires_grad()) {
    auto xn = x.node(), on = y.node();
    Tape::active()->record(on, [xn, on, start, count, c] {
      if (!xn->requires_grad) return;
      ensure_grad(*xn);
      for (std::size_t i = 0; i < count * c; ++i)
        xn->grad[start * c + i] += on->grad[i];
    });
  }
  return y;
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  require_2d(x, "slice_cols");
  if (start + count > x.cols())
    throw std::out_of_range("slice_cols: cols [" + std::to_string(start) + ", " +
                            std::to_string(start + count) + ") outside " +
                            shape_str(x.shape()));
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(r * count);
  const double* xd = x.data().data();
  for (std::size_t i = 0; i < r; ++i)
    std::copy(xd + i * c + start, xd + i * c + start + count, out.data() + i * count);
  Tensor y = make_op_output({r, count}, std::move(out), should_track({&x}));
  if (y.requires_grad()) {
    auto xn = x.node(), on = y.node();
    Tape::active()->record(on, [xn, on, start, count, r, c] {
      if (!xn->requires_grad) return;
      ensure_grad(*xn);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < count; ++j)
          xn->grad[i * c + start + j] += on->grad[i * count + j];
    });
  }
  return y;
}

double grad_check(const std::function<Tensor(std::vector<Tensor>&)>& f,
                  std::vector<Tensor>& inputs, double step,
                  std::size_t max_coords_per_input, Rng* rng) {
  if (max_coords_per_input > 0 && rng == nullptr)
    throw std::invalid_argument("grad_check: coordinate sampling needs an rng");
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    for (Tensor& t : inputs) {
      t.set_requires_grad(true);
      t.zero_grad();
    }
    Tensor y = f(inputs);
    if (y.size() != 1)
      throw std::invalid_argument("grad_check: f must be scalar-valued");
    if (y.requires_grad()) tape.backward_from(y);
    for (Tensor& t : inputs)
      analytic.push_back(t.has_grad() ? t.grad() : std::vector<double>(t.size(), 0.0));
  }
  double max_err = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::vector<double>& x = inputs[i].data();
    std::vector<std::size_t> coords;
    if (max_coords_per_input == 0 || max_coords_per_input >= x.size()) {
      coords.resize(x.size());
      for (std::size_t j = 0; j < x.size(); ++j) coords[j] = j;
    } else {
      for (std::size_t j = 0; j < max_coords_per_input; ++j)
        coords.push_back(static_cast<std::size_t>(rng->below(x.size())));
      std::sort(coords.begin(), coords.end());
      coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    }
    for (std::size_t j : coords) {
      const double orig = x[j];
      x[j] = orig + step;
      const double fp = f(inputs).item();
      x[j] = orig - step;
      const double fm = f(inputs).item();
      x[j] = orig;
      const double cd = (fp - fm) / (2.0 * step);
      const double an = analytic[i][j];
      const double denom = std::max({std::fabs(an), std::fabs(cd), 1e-8});
      max_err = std::max(max_err, std::fabs(an - cd) / denom);
    }
  }
  return max_err;
}

}  // namespace cvl
