// Copyright 2026 The TPareto Authors
// SPDX-License-Identifier: Apache-2.0

#include "tpareto/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>
#include <utility>

namespace tpareto {

namespace detail {

using BackwardFn =
    std::function<void(const Node& self, std::span<const double> grad, std::span<std::vector<double>*> input_grads)>;

struct Node {
  Shape shape;
  std::vector<double> value;
  bool requires_grad = false;
  bool differentiable = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<const Node>> inputs;
  BackwardFn backward;
};

}  // namespace detail

namespace {

using detail::Node;

thread_local bool g_grad_enabled = true;

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::size_t view_rows(const Shape& s) {
  if (s.size() <= 1) return 1;
  return product(s) / s.back();
}

std::size_t view_cols(const Shape& s) {
  if (s.empty()) return 1;
  return s.back();
}

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

void check_finite(const char* op, const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

Tensor make(const char* op, Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
            detail::BackwardFn fn, bool differentiable = true) {
  check_finite(op, value);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  node->differentiable = differentiable;
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (any && g_grad_enabled) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const auto& t : inputs) node->inputs.push_back(t.node());
    node->backward = std::move(fn);
  }
  return Tensor(std::move(node));
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(),
          std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

// ---- Tensor ------------------------------------------------------------------

Tensor::Tensor() = default;

Tensor::Tensor(std::shared_ptr<const detail::Node> node) : node_(std::move(node)) {}

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  require(product(shape) == values.size(),
          "Tensor: " + std::to_string(values.size()) + " values for shape " + shape_str(shape));
  for (auto d : shape) require(d > 0, "Tensor: zero-sized dimension in " + shape_str(shape));
  check_finite("constant", values);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return Tensor(std::move(node));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t = constant(std::move(shape), std::move(values));
  std::const_pointer_cast<Node>(t.node_)->requires_grad = true;
  return t;
}

Tensor Tensor::zeros(Shape shape) {
  auto n = product(shape);
  return constant(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::scalar(double value) { return constant({}, {value}); }

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->value.size(); }
std::size_t Tensor::rows() const { return view_rows(node_->shape); }
std::size_t Tensor::cols() const { return view_cols(node_->shape); }
std::span<const double> Tensor::data() const { return node_->value; }
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item(): tensor has " + std::to_string(numel()) + " elements");
  return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  require(b.rows() == k, "matmul: inner dimensions " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return make("matmul", {m, n}, std::move(out), {a, b},
              [m, k, n](const Node& self, std::span<const double> g, std::span<std::vector<double>*> in) {
                const auto& A = self.inputs[0]->value;
                const auto& B = self.inputs[1]->value;
                if (auto* ga = in[0]) {
                  for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t p = 0; p < k; ++p) {
                      const double* brow = B.data() + p * n;
                      const double* grow = g.data() + i * n;
                      double acc = 0.0;
                      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                      (*ga)[i * k + p] += acc;
                    }
                  }
                }
                if (auto* gb = in[1]) {
                  for (std::size_t i = 0; i < m; ++i) {
                    const double* grow = g.data() + i * n;
                    for (std::size_t p = 0; p < k; ++p) {
                      const double av = A[i * k + p];
                      if (av == 0.0) continue;
                      double* dst = gb->data() + p * n;
                      for (std::size_t j = 0; j < n; ++j) dst[j] += av * grow[j];
                    }
                  }
                }
              });
}

Tensor transpose(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  auto A = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = A[i * n + j];
  return make("transpose", {n, m}, std::move(out), {a},
              [m, n](const Node&, std::span<const double> g, std::span<std::vector<double>*> in) {
                for (std::size_t i = 0; i < m; ++i)
                  for (std::size_t j = 0; j < n; ++j) (*in[0])[i * n + j] += g[j * m + i];
              });
}

namespace {

template <typename F>
Tensor elementwise_binary(const char* op, const Tensor& a, const Tensor& b, F f, detail::BackwardFn fn) {
  require_same_shape(op, a, b);
  auto A = a.data();
  auto B = b.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(A[i], B[i]);
  return make(op, a.shape(), std::move(out), {a, b}, std::move(fn));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise_binary("add", a, b, std::plus<>(),
                            [](const Node&, std::span<const double> g, std::span<std::vector<double>*> in) {
                              for (auto* gi : in)
                                if (gi)
                                  for (std::size_t i = 0; i < g.size(); ++i) (*gi)[i] += g[i];
                            });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise_binary("sub", a, b, std::minus<>(),
                            [](const Node&, std::span<const double> g, std::span<std::vector<double>*> in) {
                              if (in[0])
                                for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += g[i];
                              if (in[1])
                                for (std::size_t i = 0; i < g.size(); ++i) (*in[1])[i] -= g[i];
                            });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise_binary("mul", a, b, std::multiplies<>(),
                            [](const Node& self, std::span<const double> g, std::span<std::vector<double>*> in) {
                              const auto& A = self.inputs[0]->value;
                              const auto& B = self.inputs[1]->value;
                              if (in[0])
                                for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += g[i] * B[i];
                              if (in[1])
                                for (std::size_t i = 0; i < g.size(); ++i) (*in[1])[i] += g[i] * A[i];
                            });
}

Tensor scale(const Tensor& a, double factor) {
  auto A = a.data();
  std::vector<double> out(A.begin(), A.end());
  for (double& x : out) x *= factor;
  return make("scale", a.shape(), std::move(out), {a},
              [factor](const Node&, std::span<const double> g, std::span<std::vector<double>*> in) {
                for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += factor * g[i];
              });
}

Tensor add_row(const Tensor& a, const Tensor& bias) {
  const std::size_t m = a.rows(), n = a.cols();
  require(bias.numel() == n, "add_row: bias width " + std::to_string(bias.numel()) + " != " + std::to_string(n));
  auto A = a.data();
  auto Bv = bias.data();
  std::vector<double> out(A.begin(), A.end());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += Bv[j];
  return make("add_row", a.shape(), std::move(out), {a, bias},
              [m, n](const Node&, std::span<const double> g, std::span<std::vector<double>*> in) {
                if (in[0])
                  for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += g[i];
                if (in[1])
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) (*in[1])[j] += g[i * n + j];
              });
}

Tensor tanh(const Tensor& a) {
  auto A = a.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(A[i]);
  return make("tanh", a.shape(), std::move(out), {a},
              [](const Node& self, std::span<const double> g, std::span<std::vector<double>*> in) {
                const auto& y = self.value;
                for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += g[i] * (1.0 - y[i] * y[i]);
              });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const Shape& s = x.shape();
  const std::size_t r = std::max<std::size_t>(s.size(), 1);
  if (axis >= r) throw std::invalid_argument("softmax: axis " + std::to_string(axis) + " out of range");
  const std::size_t n = s.empty() ? 1 : s[axis];
  if (n == 0) throw std::invalid_argument("softmax: empty axis");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis && i < s.size(); ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];

  auto X = x.data();
  std::vector<double> out(X.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = X[base];
      for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, X[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(X[base + j * inner] - mx);
        out[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= z;
    }
  }
  return make("softmax", s, std::move(out), {x},
              [outer, inner, n](const Node& self, std::span<const double> g, std::span<std::vector<double>*> in) {
                const auto& y = self.value;
                for (std::size_t o = 0; o < outer; ++o) {
                  for (std::size_t i = 0; i < inner; ++i) {
                    const std::size_t base = o * n * inner + i;
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) s += g[base + j * inner] * y[base + j * inner];
                    for (std::size_t j = 0; j < n; ++j) {
                      const std::size_t idx = base + j * inner;
                      (*in[0])[idx] += y[idx] * (g[idx] - s);
                    }
                  }
                }
              });
}

Tensor sum(const Tensor& a) {
  auto A = a.data();
  const double total = std::accumulate(A.begin(), A.end(), 0.0);
  return make("sum", {}, {total}, {a}, [](const Node&, std::span<const double> g, std::span<std::vector<double>*> in) {
    for (double& v : *in[0]) v += g[0];
  });
}

Tensor segment_mean(const Tensor& a, std::size_t segment) {
  const std::size_t m = a.rows(), n = a.cols();
  require(segment > 0 && m % segment == 0,
          "segment_mean: " + std::to_string(m) + " rows not divisible by " + std::to_string(segment));
  const std::size_t blocks = m / segment;
  auto A = a.data();
  std::vector<double> out(blocks * n, 0.0);
  const double inv = 1.0 / static_cast<double>(segment);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[(i / segment) * n + j] += A[i * n + j];
  for (double& v : out) v *= inv;
  return make("segment_mean", {blocks, n}, std::move(out), {a},
              [m, n, segment, inv](const Node&, std::span<const double> g, std::span<std::vector<double>*> in) {
                for (std::size_t i = 0; i < m; ++i)
                  for (std::size_t j = 0; j < n; ++j) (*in[0])[i * n + j] += g[(i / segment) * n + j] * inv;
              });
}

Tensor mean_rows(const Tensor& a) { return segment_mean(a, a.rows()); }

Tensor row_sum(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  auto A = a.data();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += A[i * n + j];
  return make("row_sum", {m, 1}, std::move(out), {a},
              [m, n](const Node&, std::span<const double> g, std::span<std::vector<double>*> in) {
                for (std::size_t i = 0; i < m; ++i)
                  for (std::size_t j = 0; j < n; ++j) (*in[0])[i * n + j] += g[i];
              });
}

Tensor scale_segments(const Tensor& a, const Tensor& s, std::size_t segment) {
  const std::size_t m = a.rows(), n = a.cols();
  require(segment > 0 && m % segment == 0 && s.numel() == m / segment,
          "scale_segments: " + std::to_string(s.numel()) + " scales for " + std::to_string(m) + " rows in blocks of " +
              std::to_string(segment));
  auto A = a.data();
  auto S = s.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = A[i * n + j] * S[i / segment];
  return make("scale_segments", a.shape(), std::move(out), {a, s},
              [m, n, segment](const Node& self, std::span<const double> g, std::span<std::vector<double>*> in) {
                const auto& A = self.inputs[0]->value;
                const auto& S = self.inputs[1]->value;
                for (std::size_t i = 0; i < m; ++i) {
                  for (std::size_t j = 0; j < n; ++j) {
                    const std::size_t idx = i * n + j;
                    if (in[0]) (*in[0])[idx] += g[idx] * S[i / segment];
                    if (in[1]) (*in[1])[i / segment] += g[idx] * A[idx];
                  }
                }
              });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require(p.rows() == m, "concat_cols: row count mismatch");
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto P = parts[k].data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j) out[i * total + offset + j] = P[i * widths[k] + j];
    offset += widths[k];
  }
  return make("concat_cols", {m, total}, std::move(out), {parts.begin(), parts.end()},
              [m, total, widths](const Node&, std::span<const double> g, std::span<std::vector<double>*> in) {
                std::size_t offset = 0;
                for (std::size_t k = 0; k < widths.size(); ++k) {
                  if (auto* gk = in[k]) {
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < widths[k]; ++j) (*gk)[i * widths[k] + j] += g[i * total + offset + j];
                  }
                  offset += widths[k];
                }
              });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const std::size_t n = parts[0].cols();
  std::vector<double> out;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    require(p.cols() == n, "concat_rows: column count mismatch");
    auto P = p.data();
    out.insert(out.end(), P.begin(), P.end());
    sizes.push_back(P.size());
  }
  const std::size_t m = out.size() / n;
  return make("concat_rows", {m, n}, std::move(out), {parts.begin(), parts.end()},
              [sizes](const Node&, std::span<const double> g, std::span<std::vector<double>*> in) {
                std::size_t offset = 0;
                for (std::size_t k = 0; k < sizes.size(); ++k) {
                  if (auto* gk = in[k])
                    for (std::size_t i = 0; i < sizes[k]; ++i) (*gk)[i] += g[offset + i];
                  offset += sizes[k];
                }
              });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  const std::size_t m = a.rows(), n = a.cols();
  require(begin < end && end <= n, "slice_cols: bad range");
  const std::size_t w = end - begin;
  auto A = a.data();
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = A[i * n + begin + j];
  return make("slice_cols", {m, w}, std::move(out), {a},
              [m, n, w, begin](const Node&, std::span<const double> g, std::span<std::vector<double>*> in) {
                for (std::size_t i = 0; i < m; ++i)
                  for (std::size_t j = 0; j < w; ++j) (*in[0])[i * n + begin + j] += g[i * w + j];
              });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require(product(shape) == a.numel(), "reshape: element count mismatch");
  auto A = a.data();
  return make("reshape", std::move(shape), {A.begin(), A.end()}, {a},
              [](const Node&, std::span<const double> g, std::span<std::vector<double>*> in) {
                for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += g[i];
              });
}

Tensor batched_scores(const Tensor& q, const Tensor& k, std::size_t batch) {
  const std::size_t h = q.cols();
  require(k.cols() == h, "batched_scores: head width mismatch");
  require(batch > 0 && q.rows() % batch == 0 && k.rows() % batch == 0, "batched_scores: rows not divisible by batch");
  const std::size_t lq = q.rows() / batch, lk = k.rows() / batch;
  auto Q = q.data();
  auto K = k.data();
  std::vector<double> out(batch * lq * lk);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < lq; ++i)
      for (std::size_t j = 0; j < lk; ++j) {
        const double* qr = Q.data() + (b * lq + i) * h;
        const double* kr = K.data() + (b * lk + j) * h;
        double acc = 0.0;
        for (std::size_t c = 0; c < h; ++c) acc += qr[c] * kr[c];
        out[(b * lq + i) * lk + j] = acc;
      }
  return make("batched_scores", {batch * lq, lk}, std::move(out), {q, k},
              [batch, lq, lk, h](const Node& self, std::span<const double> g, std::span<std::vector<double>*> in) {
                const auto& Q = self.inputs[0]->value;
                const auto& K = self.inputs[1]->value;
                for (std::size_t b = 0; b < batch; ++b)
                  for (std::size_t i = 0; i < lq; ++i)
                    for (std::size_t j = 0; j < lk; ++j) {
                      const double gij = g[(b * lq + i) * lk + j];
                      const std::size_t qi = (b * lq + i) * h, kj = (b * lk + j) * h;
                      if (in[0])
                        for (std::size_t c = 0; c < h; ++c) (*in[0])[qi + c] += gij * K[kj + c];
                      if (in[1])
                        for (std::size_t c = 0; c < h; ++c) (*in[1])[kj + c] += gij * Q[qi + c];
                    }
              });
}

Tensor batched_mix(const Tensor& p, const Tensor& v, std::size_t batch) {
  const std::size_t h = v.cols();
  require(batch > 0 && p.rows() % batch == 0 && v.rows() % batch == 0, "batched_mix: rows not divisible by batch");
  const std::size_t lq = p.rows() / batch, lk = v.rows() / batch;
  require(p.cols() == lk, "batched_mix: weight width != key count");
  auto P = p.data();
  auto V = v.data();
  std::vector<double> out(batch * lq * h, 0.0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < lq; ++i)
      for (std::size_t j = 0; j < lk; ++j) {
        const double w = P[(b * lq + i) * lk + j];
        const double* vr = V.data() + (b * lk + j) * h;
        double* o = out.data() + (b * lq + i) * h;
        for (std::size_t c = 0; c < h; ++c) o[c] += w * vr[c];
      }
  return make("batched_mix", {batch * lq, h}, std::move(out), {p, v},
              [batch, lq, lk, h](const Node& self, std::span<const double> g, std::span<std::vector<double>*> in) {
                const auto& P = self.inputs[0]->value;
                const auto& V = self.inputs[1]->value;
                for (std::size_t b = 0; b < batch; ++b)
                  for (std::size_t i = 0; i < lq; ++i)
                    for (std::size_t j = 0; j < lk; ++j) {
                      const std::size_t pij = (b * lq + i) * lk + j;
                      const double* gr = g.data() + (b * lq + i) * h;
                      const std::size_t vj = (b * lk + j) * h;
                      if (in[0]) {
                        double acc = 0.0;
                        for (std::size_t c = 0; c < h; ++c) acc += gr[c] * V[vj + c];
                        (*in[0])[pij] += acc;
                      }
                      if (in[1])
                        for (std::size_t c = 0; c < h; ++c) (*in[1])[vj + c] += P[pij] * gr[c];
                    }
              });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  const std::size_t m = logits.rows(), c = logits.cols();
  require(labels.size() == m, "cross_entropy: label count mismatch");
  auto Z = logits.data();
  std::vector<double> probs(m * c);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const int y = labels[i];
    require(y >= 0 && static_cast<std::size_t>(y) < c, "cross_entropy: label out of range");
    const double* z = Z.data() + i * c;
    const double mx = *std::max_element(z, z + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(z[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(z[j] - lse);
    total += lse - z[y];
  }
  std::vector<int> ys(labels.begin(), labels.end());
  return make("cross_entropy", {}, {total / static_cast<double>(m)}, {logits},
              [m, c, probs = std::move(probs), ys = std::move(ys)](const Node&, std::span<const double> g,
                                                                   std::span<std::vector<double>*> in) {
                const double f = g[0] / static_cast<double>(m);
                for (std::size_t i = 0; i < m; ++i)
                  for (std::size_t j = 0; j < c; ++j)
                    (*in[0])[i * c + j] += f * (probs[i * c + j] - (static_cast<int>(j) == ys[i] ? 1.0 : 0.0));
              });
}

Tensor heaviside(const Tensor& a) {
  auto A = a.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] > 0.0 ? 1.0 : 0.0;
  return make("heaviside", a.shape(), std::move(out), {a}, nullptr, /*differentiable=*/false);
}

// ---- groups ----------------------------------------------------------------

std::string to_string(GroupId id) {
  switch (id) {
    case GroupId::Theta1: return "theta1";
    case GroupId::Theta2: return "theta2";
    case GroupId::Theta3: return "theta3";
    case GroupId::ThetaCls: return "theta_cls";
  }
  return "unknown";
}

GroupId group_from_string(const std::string& name) {
  if (name == "theta1") return GroupId::Theta1;
  if (name == "theta2") return GroupId::Theta2;
  if (name == "theta3") return GroupId::Theta3;
  if (name == "theta_cls") return GroupId::ThetaCls;
  throw std::invalid_argument("unknown parameter group '" + name + "'");
}

void ParameterGroup::add(std::string name, Tensor tensor) {
  if (contains(name)) throw std::invalid_argument("duplicate tensor '" + name + "' in " + to_string(id_));
  tensors_.push_back({std::move(name), std::move(tensor)});
}

const Tensor& ParameterGroup::get(const std::string& name) const {
  for (const auto& nt : tensors_)
    if (nt.name == name) return nt.tensor;
  throw std::out_of_range("no tensor '" + name + "' in " + to_string(id_));
}

bool ParameterGroup::contains(const std::string& name) const {
  return std::any_of(tensors_.begin(), tensors_.end(), [&](const NamedTensor& nt) { return nt.name == name; });
}

std::size_t ParameterGroup::dim() const {
  std::size_t n = 0;
  for (const auto& nt : tensors_) n += nt.tensor.numel();
  return n;
}

std::vector<double> ParameterGroup::flatten() const {
  std::vector<double> out;
  out.reserve(dim());
  for (const auto& nt : tensors_) {
    auto d = nt.tensor.data();
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

ParameterGroup ParameterGroup::with_values(std::span<const double> values) const {
  if (values.size() != dim())
    throw std::invalid_argument("with_values: expected " + std::to_string(dim()) + " values for " + to_string(id_));
  ParameterGroup out(id_);
  std::size_t offset = 0;
  for (const auto& nt : tensors_) {
    const std::size_t n = nt.tensor.numel();
    out.add(nt.name, Tensor::parameter(nt.tensor.shape(), {values.begin() + offset, values.begin() + offset + n}));
    offset += n;
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

// ---- backward --------------------------------------------------------------

namespace {

using GradMap = std::unordered_map<const Node*, std::vector<double>>;

GradMap run_backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be a scalar, got " +
                                (loss.defined() ? std::to_string(loss.numel()) : std::string("undefined")) +
                                " elements");
  GradMap grads;
  if (!loss.requires_grad()) return grads;

  // Post-order DFS gives a topological order; walk it in reverse.
  std::vector<const Node*> order;
  std::unordered_map<const Node*, bool> visited;
  std::vector<std::pair<const Node*, std::size_t>> stack{{loss.node().get(), 0}};
  visited[loss.node().get()] = true;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      const Node* child = node->inputs[next++].get();
      if (child->requires_grad && !visited[child]) {
        visited[child] = true;
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  grads[loss.node().get()] = {1.0};
  std::vector<std::vector<double>*> slots;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Node* node = *it;
    if (node->inputs.empty()) continue;
    if (!node->differentiable)
      throw NonDifferentiableError(std::string("backward: graph contains non-differentiable op '") + node->op + "'");
    auto found = grads.find(node);
    if (found == grads.end()) continue;
    const std::vector<double> g = std::move(found->second);
    slots.assign(node->inputs.size(), nullptr);
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      const Node* in = node->inputs[i].get();
      if (!in->requires_grad) continue;
      auto& buf = grads[in];
      if (buf.empty()) buf.assign(in->value.size(), 0.0);
      slots[i] = &buf;
    }
    node->backward(*node, g, slots);
    grads.erase(node);
  }
  return grads;
}

}  // namespace

std::vector<std::vector<double>> gradients(const Tensor& loss, std::span<const Tensor> wrt) {
  GradMap grads = run_backward(loss);
  std::vector<std::vector<double>> out;
  out.reserve(wrt.size());
  for (const auto& t : wrt) {
    auto it = grads.find(t.node().get());
    if (it == grads.end())
      out.emplace_back(t.numel(), 0.0);
    else
      out.push_back(it->second);
  }
  return out;
}

std::map<GroupId, GradientVector> backward(const Tensor& loss, std::span<const ParameterGroup> groups) {
  GradMap grads = run_backward(loss);
  std::map<GroupId, GradientVector> out;
  for (const auto& group : groups) {
    if (out.count(group.id())) throw std::invalid_argument("backward: duplicate group " + to_string(group.id()));
    GradientVector gv{group.id(), {}};
    gv.values.reserve(group.dim());
    for (const auto& nt : group.tensors()) {
      auto it = grads.find(nt.tensor.node().get());
      if (it == grads.end())
        gv.values.insert(gv.values.end(), nt.tensor.numel(), 0.0);
      else
        gv.values.insert(gv.values.end(), it->second.begin(), it->second.end());
    }
    out.emplace(group.id(), std::move(gv));
  }
  return out;
}

GradientVector finite_diff(const GroupLossFn& loss_fn, const ParameterGroup& group, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff: step must be positive");
  NoGradGuard no_grad;
  std::vector<double> theta = group.flatten();
  GradientVector out{group.id(), std::vector<double>(theta.size(), 0.0)};
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + step;
    const double up = loss_fn(group.with_values(theta));
    theta[i] = saved - step;
    const double down = loss_fn(group.with_values(theta));
    theta[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("finite_diff: loss is non-finite at coordinate " + std::to_string(i));
    out.values[i] = (up - down) / (2.0 * step);
  }
  return out;
}

}  // namespace tpareto
