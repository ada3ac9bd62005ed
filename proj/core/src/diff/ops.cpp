#include "cgdt/diff/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace cgdt::diff {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

Tensor make_output(Shape shape, std::vector<double> data, bool track) {
  return Tensor::from(std::move(shape), std::move(data), track);
}

void record(const char* op, const Tensor& out, Tape::BackwardFn fn) {
  Tape::active()->record(op, out.impl(), std::move(fn));
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

template <class F, class DA, class DB>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
  const bool a_big = a.numel() >= b.numel();
  const Shape& out_shape = a_big ? a.shape() : b.shape();
  if (!is_suffix(a_big ? b.shape() : a.shape(), out_shape)) {
    throw ShapeError(std::string(name) + ": cannot broadcast " + to_string(a.shape()) + " with " +
                     to_string(b.shape()));
  }
  const std::size_t n = numel(out_shape);
  const std::size_t na = a.numel();
  const std::size_t nb = b.numel();
  const auto& xa = a.data();
  const auto& xb = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(xa[i % na], xb[i % nb]);
  const bool track = tracking({&a, &b});
  Tensor result = make_output(out_shape, std::move(out), track);
  if (track) {
    auto ai = a.impl();
    auto bi = b.impl();
    auto oi = result.impl();
    record(name, result, [ai, bi, oi, da, db, n, na, nb]() {
      const auto& g = oi->grad;
      if (ai->requires_grad) {
        auto& ga = ai->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) ga[i % na] += g[i] * da(ai->data[i % na], bi->data[i % nb]);
      }
      if (bi->requires_grad) {
        auto& gb = bi->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) gb[i % nb] += g[i] * db(ai->data[i % na], bi->data[i % nb]);
      }
    });
  }
  return result;
}

// df receives (x, y) where y = f(x).
template <class F, class DF>
Tensor unary_op(const char* name, const Tensor& x, F f, DF df) {
  const auto& xs = x.data();
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = f(xs[i]);
  const bool track = tracking({&x});
  Tensor result = make_output(x.shape(), std::move(out), track);
  if (track) {
    auto xi = x.impl();
    auto oi = result.impl();
    record(name, result, [xi, oi, df]() {
      auto& gx = xi->ensure_grad();
      const auto& g = oi->grad;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xi->data[i], oi->data[i]);
    });
  }
  return result;
}

Shape leading(const Shape& s, std::size_t drop) { return Shape(s.begin(), s.end() - static_cast<long>(drop)); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor add_scalar(const Tensor& x, double c) {
  return unary_op("add_scalar", x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, double c) {
  return unary_op("mul_scalar", x, [c](double v) { return v * c; }, [c](double, double) { return c; });
}

Tensor neg(const Tensor& x) { return mul_scalar(x, -1.0); }

Tensor relu(const Tensor& x) {
  return unary_op(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& x) {
  return unary_op("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary_op("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor square(const Tensor& x) {
  return unary_op("square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor abs(const Tensor& x) {
  return unary_op(
      "abs", x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor tanh(const Tensor& x) {
  return unary_op("tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor softplus(const Tensor& x) {
  return unary_op(
      "softplus", x, [](double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
      [](double v, double) { return 1.0 / (1.0 + std::exp(-v)); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.dim() < 2 || b.dim() < 2) {
    throw ShapeError("matmul: operands need rank >= 2, got " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  const std::size_t m = a.shape()[a.dim() - 2];
  const std::size_t k = a.shape().back();
  const std::size_t n = b.shape().back();
  if (b.shape()[b.dim() - 2] != k) {
    throw ShapeError("matmul: inner dimensions differ: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  const bool shared_rhs = b.dim() == 2;
  if (!shared_rhs && leading(a.shape(), 2) != leading(b.shape(), 2)) {
    throw ShapeError("matmul: batch dimensions differ: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  const std::size_t batch = numel(leading(a.shape(), 2));
  Shape out_shape = leading(a.shape(), 2);
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<double> out(batch * m * n);
  if (shared_rhs) {
    MutMap(out.data(), batch * m, n).noalias() =
        ConstMap(a.data().data(), batch * m, k) * ConstMap(b.data().data(), k, n);
  } else {
    for (std::size_t i = 0; i < batch; ++i) {
      MutMap(out.data() + i * m * n, m, n).noalias() =
          ConstMap(a.data().data() + i * m * k, m, k) * ConstMap(b.data().data() + i * k * n, k, n);
    }
  }
  const bool track = tracking({&a, &b});
  Tensor result = make_output(std::move(out_shape), std::move(out), track);
  if (track) {
    auto ai = a.impl();
    auto bi = b.impl();
    auto oi = result.impl();
    record("matmul", result, [ai, bi, oi, batch, m, k, n, shared_rhs]() {
      const double* g = oi->grad.data();
      if (shared_rhs) {
        ConstMap gm(g, batch * m, n);
        if (ai->requires_grad) {
          MutMap(ai->ensure_grad().data(), batch * m, k).noalias() += gm * ConstMap(bi->data.data(), k, n).transpose();
        }
        if (bi->requires_grad) {
          MutMap(bi->ensure_grad().data(), k, n).noalias() +=
              ConstMap(ai->data.data(), batch * m, k).transpose() * gm;
        }
        return;
      }
      for (std::size_t i = 0; i < batch; ++i) {
        ConstMap gm(g + i * m * n, m, n);
        if (ai->requires_grad) {
          MutMap(ai->ensure_grad().data() + i * m * k, m, k).noalias() +=
              gm * ConstMap(bi->data.data() + i * k * n, k, n).transpose();
        }
        if (bi->requires_grad) {
          MutMap(bi->ensure_grad().data() + i * k * n, k, n).noalias() +=
              ConstMap(ai->data.data() + i * m * k, m, k).transpose() * gm;
        }
      }
    });
  }
  return result;
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const std::size_t rank = x.dim();
  if (axes.size() != rank) throw ShapeError("permute: axes do not match rank of " + to_string(x.shape()));
  std::vector<bool> seen(rank, false);
  for (auto ax : axes) {
    if (ax >= rank || seen[ax]) throw ShapeError("permute: invalid axes for " + to_string(x.shape()));
    seen[ax] = true;
  }
  const Shape& in_shape = x.shape();
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
  Shape out_shape(rank);
  std::vector<std::size_t> strides(rank);  // input stride for each output axis
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in_shape[axes[i]];
    strides[i] = in_strides[axes[i]];
  }
  const std::size_t n = x.numel();
  // map[i] = input offset of output element i
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < n; ++i) {
    map[i] = offset;
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < out_shape[d]) {
        offset += strides[d];
        break;
      }
      offset -= strides[d] * (out_shape[d] - 1);
      idx[d] = 0;
    }
  }
  std::vector<double> out(n);
  const auto& xs = x.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = xs[map[i]];
  const bool track = tracking({&x});
  Tensor result = make_output(std::move(out_shape), std::move(out), track);
  if (track) {
    auto xi = x.impl();
    auto oi = result.impl();
    record("permute", result, [xi, oi, map = std::move(map)]() {
      auto& gx = xi->ensure_grad();
      const auto& g = oi->grad;
      for (std::size_t i = 0; i < g.size(); ++i) gx[map[i]] += g[i];
    });
  }
  return result;
}

Tensor transpose_last2(const Tensor& x) {
  if (x.dim() < 2) throw ShapeError("transpose_last2: rank < 2 for " + to_string(x.shape()));
  std::vector<std::size_t> axes(x.dim());
  for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
  std::swap(axes[axes.size() - 1], axes[axes.size() - 2]);
  return permute(x, axes);
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + to_string(x.shape()) + " to " + to_string(shape));
  }
  const bool track = tracking({&x});
  Tensor result = make_output(std::move(shape), x.data(), track);
  if (track) {
    auto xi = x.impl();
    auto oi = result.impl();
    record("reshape", result, [xi, oi]() {
      auto& gx = xi->ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += oi->grad[i];
    });
  }
  return result;
}

Tensor softmax(const Tensor& x) {
  if (x.dim() == 0) throw ShapeError("softmax: scalar input");
  const std::size_t c = x.shape().back();
  const std::size_t rows = c == 0 ? 0 : x.numel() / c;
  const auto& xs = x.data();
  std::vector<double> out(x.numel(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xs.data() + r * c;
    double* o = out.data() + r * c;
    double mx = kNegInf;
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, row[j]);
    if (mx == kNegInf) continue;
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      o[j] = row[j] == kNegInf ? 0.0 : std::exp(row[j] - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < c; ++j) o[j] /= total;
  }
  const bool track = tracking({&x});
  Tensor result = make_output(x.shape(), std::move(out), track);
  if (track) {
    auto xi = x.impl();
    auto oi = result.impl();
    record("softmax", result, [xi, oi, rows, c]() {
      auto& gx = xi->ensure_grad();
      const auto& g = oi->grad;
      const auto& y = oi->data;
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += g[r * c + j] * y[r * c + j];
        for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += y[r * c + j] * (g[r * c + j] - dot);
      }
    });
  }
  return result;
}

Tensor log_softmax(const Tensor& x) {
  if (x.dim() == 0) throw ShapeError("log_softmax: scalar input");
  const std::size_t c = x.shape().back();
  const std::size_t rows = c == 0 ? 0 : x.numel() / c;
  const auto& xs = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xs.data() + r * c;
    const double mx = *std::max_element(row, row + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += std::exp(row[j] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = row[j] - lse;
  }
  const bool track = tracking({&x});
  Tensor result = make_output(x.shape(), std::move(out), track);
  if (track) {
    auto xi = x.impl();
    auto oi = result.impl();
    record("log_softmax", result, [xi, oi, rows, c]() {
      auto& gx = xi->ensure_grad();
      const auto& g = oi->grad;
      const auto& y = oi->data;
      for (std::size_t r = 0; r < rows; ++r) {
        double gsum = 0.0;
        for (std::size_t j = 0; j < c; ++j) gsum += g[r * c + j];
        for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += g[r * c + j] - std::exp(y[r * c + j]) * gsum;
      }
    });
  }
  return result;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.dim() == 0) throw ShapeError("layer_norm: scalar input");
  const std::size_t d = x.shape().back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw ShapeError("layer_norm: affine shapes " + to_string(gamma.shape()) + "/" + to_string(beta.shape()) +
                     " do not match " + to_string(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  std::vector<double> out(x.numel());
  const auto& xs = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xs.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (row[j] - mu) * inv_std[r];
      out[r * d + j] = xhat[r * d + j] * gamma.data()[j] + beta.data()[j];
    }
  }
  const bool track = tracking({&x, &gamma, &beta});
  Tensor result = make_output(x.shape(), std::move(out), track);
  if (track) {
    auto xi = x.impl();
    auto gi = gamma.impl();
    auto bi = beta.impl();
    auto oi = result.impl();
    record("layer_norm", result, [xi, gi, bi, oi, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d]() {
      const auto& g = oi->grad;
      if (gi->requires_grad || bi->requires_grad) {
        auto& gg = gi->ensure_grad();
        auto& gb = bi->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < d; ++j) {
            gg[j] += g[r * d + j] * xhat[r * d + j];
            gb[j] += g[r * d + j];
          }
        }
      }
      if (!xi->requires_grad) return;
      auto& gx = xi->ensure_grad();
      const double inv_d = 1.0 / static_cast<double>(d);
      for (std::size_t r = 0; r < rows; ++r) {
        double sum_dxhat = 0.0;
        double sum_dxhat_xhat = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double dxh = g[r * d + j] * gi->data[j];
          sum_dxhat += dxh;
          sum_dxhat_xhat += dxh * xhat[r * d + j];
        }
        for (std::size_t j = 0; j < d; ++j) {
          const double dxh = g[r * d + j] * gi->data[j];
          gx[r * d + j] +=
              inv_std[r] * inv_d * (static_cast<double>(d) * dxh - sum_dxhat - xhat[r * d + j] * sum_dxhat_xhat);
        }
      }
    });
  }
  return result;
}

Tensor dropout(const Tensor& x, double p, bool training, std::mt19937_64& rng) {
  if (!training || p <= 0.0) return x;
  if (p >= 1.0) throw std::invalid_argument("dropout probability must be < 1");
  const double scale = 1.0 / (1.0 - p);
  std::bernoulli_distribution keep(1.0 - p);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = keep(rng) ? scale : 0.0;
  return mul(x, Tensor::from(x.shape(), std::move(mask)));
}

Tensor apply_attention_mask(const Tensor& scores, std::span<const std::uint8_t> allowed) {
  if (scores.dim() != 4 || scores.shape()[2] != scores.shape()[3]) {
    throw ShapeError("apply_attention_mask: expected [B,H,L,L], got " + to_string(scores.shape()));
  }
  const std::size_t b = scores.shape()[0];
  const std::size_t h = scores.shape()[1];
  const std::size_t ll = scores.shape()[2] * scores.shape()[3];
  if (allowed.size() != b * ll) {
    throw ShapeError("apply_attention_mask: mask has " + std::to_string(allowed.size()) + " entries for scores " +
                     to_string(scores.shape()));
  }
  std::vector<double> out = scores.data();
  std::vector<std::uint8_t> flags(out.size());
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < h; ++j) {
      const std::size_t base = (i * h + j) * ll;
      for (std::size_t e = 0; e < ll; ++e) {
        flags[base + e] = allowed[i * ll + e];
        if (!flags[base + e]) out[base + e] = kNegInf;
      }
    }
  }
  const bool track = tracking({&scores});
  Tensor result = make_output(scores.shape(), std::move(out), track);
  if (track) {
    auto si = scores.impl();
    auto oi = result.impl();
    record("attention_mask", result, [si, oi, flags = std::move(flags)]() {
      auto& gs = si->ensure_grad();
      for (std::size_t i = 0; i < gs.size(); ++i) {
        if (flags[i]) gs[i] += oi->grad[i];
      }
    });
  }
  return result;
}

Tensor embedding(const Tensor& table, std::span<const std::size_t> indices) {
  if (table.dim() != 2) throw ShapeError("embedding: table must be [V,D], got " + to_string(table.shape()));
  for (auto idx : indices) {
    if (idx >= table.shape()[0]) {
      throw ShapeError("embedding: index " + std::to_string(idx) + " out of range for table " +
                       to_string(table.shape()));
    }
  }
  return gather_rows(table, indices);
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices) {
  if (x.dim() == 0) throw ShapeError("gather_rows: scalar input");
  const std::size_t d = x.shape().back();
  const std::size_t rows = d == 0 ? 0 : x.numel() / d;
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  std::vector<double> out(idx.size() * d);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= rows) {
      throw ShapeError("gather_rows: row " + std::to_string(idx[i]) + " out of range for " + to_string(x.shape()));
    }
    std::copy_n(x.data().data() + idx[i] * d, d, out.data() + i * d);
  }
  const bool track = tracking({&x});
  Tensor result = make_output({idx.size(), d}, std::move(out), track);
  if (track) {
    auto xi = x.impl();
    auto oi = result.impl();
    record("gather_rows", result, [xi, oi, idx = std::move(idx), d]() {
      auto& gx = xi->ensure_grad();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < d; ++j) gx[idx[i] * d + j] += oi->grad[i * d + j];
      }
    });
  }
  return result;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t rows = 0;
  bool track = false;
  for (const auto& p : parts) {
    if (p.dim() == 0 || Shape(p.shape().begin() + 1, p.shape().end()) != tail) {
      throw ShapeError("concat_rows: " + to_string(p.shape()) + " incompatible with " + to_string(parts[0].shape()));
    }
    rows += p.shape()[0];
    track = track || tracking({&p});
  }
  Shape out_shape = tail;
  out_shape.insert(out_shape.begin(), rows);
  std::vector<double> out;
  out.reserve(numel(out_shape));
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  Tensor result = make_output(std::move(out_shape), std::move(out), track);
  if (track) {
    std::vector<std::shared_ptr<TensorImpl>> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    auto oi = result.impl();
    record("concat_rows", result, [impls = std::move(impls), oi]() {
      std::size_t offset = 0;
      for (const auto& pi : impls) {
        if (pi->requires_grad) {
          auto& g = pi->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[offset + i];
        }
        offset += pi->data.size();
      }
    });
  }
  return result;
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= x.dim() || start + length > x.shape()[axis]) {
    throw ShapeError("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) + ") on axis " +
                     std::to_string(axis) + " of " + to_string(x.shape()));
  }
  const Shape& s = x.shape();
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t full = s[axis];
  Shape out_shape = s;
  out_shape[axis] = length;
  std::vector<double> out(outer * length * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(x.data().data() + (o * full + start) * inner, length * inner, out.data() + o * length * inner);
  }
  const bool track = tracking({&x});
  Tensor result = make_output(std::move(out_shape), std::move(out), track);
  if (track) {
    auto xi = x.impl();
    auto oi = result.impl();
    record("slice", result, [xi, oi, outer, inner, full, start, length]() {
      auto& gx = xi->ensure_grad();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < length * inner; ++i) {
          gx[(o * full + start) * inner + i] += oi->grad[o * length * inner + i];
        }
      }
    });
  }
  return result;
}

Tensor select_last(const Tensor& x, std::span<const std::size_t> indices) {
  if (x.dim() == 0) throw ShapeError("select_last: scalar input");
  const std::size_t c = x.shape().back();
  const std::size_t rows = c == 0 ? 0 : x.numel() / c;
  if (indices.size() != rows) {
    throw ShapeError("select_last: " + std::to_string(indices.size()) + " indices for " + to_string(x.shape()));
  }
  std::vector<std::size_t> flat(rows);
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (indices[r] >= c) throw ShapeError("select_last: index out of range for " + to_string(x.shape()));
    flat[r] = r * c + indices[r];
    out[r] = x.data()[flat[r]];
  }
  const bool track = tracking({&x});
  Tensor result = make_output(leading(x.shape(), 1), std::move(out), track);
  if (track) {
    auto xi = x.impl();
    auto oi = result.impl();
    record("select_last", result, [xi, oi, flat = std::move(flat)]() {
      auto& gx = xi->ensure_grad();
      for (std::size_t r = 0; r < flat.size(); ++r) gx[flat[r]] += oi->grad[r];
    });
  }
  return result;
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  const bool track = tracking({&x});
  Tensor result = make_output({}, {total}, track);
  if (track) {
    auto xi = x.impl();
    auto oi = result.impl();
    record("sum", result, [xi, oi]() {
      auto& gx = xi->ensure_grad();
      for (auto& g : gx) g += oi->grad[0];
    });
  }
  return result;
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean: empty tensor");
  return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor sum_last(const Tensor& x) {
  if (x.dim() == 0) throw ShapeError("sum_last: scalar input");
  const std::size_t c = x.shape().back();
  const std::size_t rows = c == 0 ? 0 : x.numel() / c;
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < c; ++j) out[r] += x.data()[r * c + j];
  }
  const bool track = tracking({&x});
  Tensor result = make_output(leading(x.shape(), 1), std::move(out), track);
  if (track) {
    auto xi = x.impl();
    auto oi = result.impl();
    record("sum_last", result, [xi, oi, rows, c]() {
      auto& gx = xi->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += oi->grad[r];
      }
    });
  }
  return result;
}

Tensor stop_gradient(const Tensor& x) { return Tensor::from(x.shape(), x.data(), false); }

}  // namespace cgdt::diff
