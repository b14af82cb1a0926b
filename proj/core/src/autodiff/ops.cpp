#include "transcoder/autodiff/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <numbers>
#include <string_view>

namespace transcoder::ad {

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
using ArrMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstArrMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;

template <typename T>
using NodePtr = std::shared_ptr<TensorNode<T>>;

template <typename T>
Buffer<T>& grad_buffer(TensorNode<T>& node) {
  if (node.grad.empty()) node.grad.assign(node.data.size(), T(0));
  return node.grad;
}

template <typename T>
void check_finite(std::span<const T> values, std::string_view op) {
  if (!ConstArrMap<T>(values.data(), static_cast<Eigen::Index>(values.size())).allFinite()) {
    throw NumericError("non-finite value produced by " + std::string(op));
  }
}

template <typename T>
bool tracks(const Tape<T>& tape, std::initializer_list<const DiffTensor<T>*> inputs) {
  if (tape.consumed()) throw StateError("cannot record onto a consumed tape");
  if (!tape.recording()) return false;
  for (const auto* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

template <typename T>
DiffTensor<T> make_result(Shape shape, Buffer<T> data, std::string_view op, bool requires_grad) {
  check_finite<T>(data, op);
  return DiffTensor<T>::from(std::move(shape), std::move(data), requires_grad);
}

void require(bool condition, std::string_view op, const std::string& detail) {
  if (!condition) throw ShapeError(std::string(op) + ": " + detail);
}

}  // namespace

template <typename T>
DiffTensor<T> matmul(Tape<T>& tape, const DiffTensor<T>& a, const DiffTensor<T>& b) {
  require(a.rank() == 2 && b.rank() == 2, "matmul", "expects matrices, got " + to_string(a.shape()) + " and " +
                                                         to_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, "matmul", "inner dimensions differ: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  Buffer<T> out(m * n, T(0));
  if (k > 0 && m > 0 && n > 0) {
    MatMap<T>(out.data(), m, n).noalias() = ConstMatMap<T>(a.data().data(), m, k) * ConstMatMap<T>(b.data().data(), k, n);
  }
  const bool grad = tracks(tape, {&a, &b});
  auto result = make_result<T>({m, n}, std::move(out), "matmul", grad);
  if (grad && k > 0) {
    tape.record([out = result.shared(), an = a.shared(), bn = b.shared(), m, k, n] {
      if (out->grad.empty()) return;
      ConstMatMap<T> dc(out->grad.data(), m, n);
      if (an->requires_grad) {
        MatMap<T>(grad_buffer(*an).data(), m, k).noalias() += dc * ConstMatMap<T>(bn->data.data(), k, n).transpose();
      }
      if (bn->requires_grad) {
        MatMap<T>(grad_buffer(*bn).data(), k, n).noalias() += ConstMatMap<T>(an->data.data(), m, k).transpose() * dc;
      }
    });
  }
  return result;
}

template <typename T>
DiffTensor<T> batched_matmul(Tape<T>& tape, const DiffTensor<T>& a, const DiffTensor<T>& b, bool transpose_b) {
  require(a.rank() == 3 && b.rank() == 3, "batched_matmul", "expects rank-3 tensors");
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  require(b.dim(0) == batch, "batched_matmul", "batch sizes differ");
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  require((transpose_b ? b.dim(2) : b.dim(1)) == k, "batched_matmul",
          "inner dimensions differ: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  Buffer<T> out(batch * m * n, T(0));
  if (k > 0) {
    for (std::size_t i = 0; i < batch; ++i) {
      ConstMatMap<T> am(a.data().data() + i * m * k, m, k);
      MatMap<T> cm(out.data() + i * m * n, m, n);
      if (transpose_b) {
        cm.noalias() = am * ConstMatMap<T>(b.data().data() + i * n * k, n, k).transpose();
      } else {
        cm.noalias() = am * ConstMatMap<T>(b.data().data() + i * k * n, k, n);
      }
    }
  }
  const bool grad = tracks(tape, {&a, &b});
  auto result = make_result<T>({batch, m, n}, std::move(out), "batched_matmul", grad);
  if (grad && k > 0) {
    tape.record([out = result.shared(), an = a.shared(), bn = b.shared(), batch, m, k, n, transpose_b] {
      if (out->grad.empty()) return;
      for (std::size_t i = 0; i < batch; ++i) {
        ConstMatMap<T> dc(out->grad.data() + i * m * n, m, n);
        ConstMatMap<T> am(an->data.data() + i * m * k, m, k);
        if (transpose_b) {
          ConstMatMap<T> bm(bn->data.data() + i * n * k, n, k);
          if (an->requires_grad) MatMap<T>(grad_buffer(*an).data() + i * m * k, m, k).noalias() += dc * bm;
          if (bn->requires_grad) MatMap<T>(grad_buffer(*bn).data() + i * n * k, n, k).noalias() += dc.transpose() * am;
        } else {
          ConstMatMap<T> bm(bn->data.data() + i * k * n, k, n);
          if (an->requires_grad) MatMap<T>(grad_buffer(*an).data() + i * m * k, m, k).noalias() += dc * bm.transpose();
          if (bn->requires_grad) MatMap<T>(grad_buffer(*bn).data() + i * k * n, k, n).noalias() += am.transpose() * dc;
        }
      }
    });
  }
  return result;
}

template <typename T>
DiffTensor<T> add(Tape<T>& tape, const DiffTensor<T>& a, const DiffTensor<T>& b) {
  require(a.shape() == b.shape(), "add", "shapes differ: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  Buffer<T> out(a.numel());
  const auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  const bool grad = tracks(tape, {&a, &b});
  auto result = make_result<T>(a.shape(), std::move(out), "add", grad);
  if (grad) {
    tape.record([out = result.shared(), an = a.shared(), bn = b.shared()] {
      if (out->grad.empty()) return;
      for (auto* in : {an.get(), bn.get()}) {
        if (!in->requires_grad) continue;
        auto& g = grad_buffer(*in);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += out->grad[i];
      }
    });
  }
  return result;
}

template <typename T>
DiffTensor<T> mul(Tape<T>& tape, const DiffTensor<T>& a, const DiffTensor<T>& b) {
  require(a.shape() == b.shape(), "mul", "shapes differ: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  Buffer<T> out(a.numel());
  const auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  const bool grad = tracks(tape, {&a, &b});
  auto result = make_result<T>(a.shape(), std::move(out), "mul", grad);
  if (grad) {
    tape.record([out = result.shared(), an = a.shared(), bn = b.shared()] {
      if (out->grad.empty()) return;
      const auto& dy = out->grad;
      if (an->requires_grad) {
        auto& g = grad_buffer(*an);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i] * bn->data[i];
      }
      if (bn->requires_grad) {
        auto& g = grad_buffer(*bn);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i] * an->data[i];
      }
    });
  }
  return result;
}

template <typename T>
DiffTensor<T> add_bias(Tape<T>& tape, const DiffTensor<T>& x, const DiffTensor<T>& bias) {
  require(x.rank() >= 1 && bias.rank() == 1 && bias.dim(0) == x.shape().back(), "add_bias",
          "bias " + to_string(bias.shape()) + " does not match trailing dimension of " + to_string(x.shape()));
  const std::size_t n = bias.dim(0);
  const std::size_t rows = n == 0 ? 0 : x.numel() / n;
  Buffer<T> out(x.data().begin(), x.data().end());
  const auto bd = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = out.data() + r * n;
    for (std::size_t j = 0; j < n; ++j) row[j] += bd[j];
  }
  const bool grad = tracks(tape, {&x, &bias});
  auto result = make_result<T>(x.shape(), std::move(out), "add_bias", grad);
  if (grad) {
    tape.record([out = result.shared(), xn = x.shared(), bn = bias.shared(), rows, n] {
      if (out->grad.empty()) return;
      const auto& dy = out->grad;
      if (xn->requires_grad) {
        auto& g = grad_buffer(*xn);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i];
      }
      if (bn->requires_grad) {
        auto& g = grad_buffer(*bn);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < n; ++j) g[j] += dy[r * n + j];
        }
      }
    });
  }
  return result;
}

template <typename T>
DiffTensor<T> scale(Tape<T>& tape, const DiffTensor<T>& x, T factor) {
  Buffer<T> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * factor;
  const bool grad = tracks(tape, {&x});
  auto result = make_result<T>(x.shape(), std::move(out), "scale", grad);
  if (grad) {
    tape.record([out = result.shared(), xn = x.shared(), factor] {
      if (out->grad.empty()) return;
      auto& g = grad_buffer(*xn);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += out->grad[i] * factor;
    });
  }
  return result;
}

template <typename T>
DiffTensor<T> sum(Tape<T>& tape, const DiffTensor<T>& x) {
  T total = T(0);
  for (T v : x.data()) total += v;
  const bool grad = tracks(tape, {&x});
  auto result = make_result<T>({}, Buffer<T>{total}, "sum", grad);
  if (grad) {
    tape.record([out = result.shared(), xn = x.shared()] {
      if (out->grad.empty()) return;
      auto& g = grad_buffer(*xn);
      for (auto& v : g) v += out->grad[0];
    });
  }
  return result;
}

template <typename T>
DiffTensor<T> tanh(Tape<T>& tape, const DiffTensor<T>& x) {
  Buffer<T> out(x.numel());
  const auto n = static_cast<Eigen::Index>(out.size());
  ArrMap<T>(out.data(), n) = ConstArrMap<T>(x.data().data(), n).tanh();
  const bool grad = tracks(tape, {&x});
  auto result = make_result<T>(x.shape(), std::move(out), "tanh", grad);
  if (grad) {
    tape.record([out = result.shared(), xn = x.shared()] {
      if (out->grad.empty()) return;
      auto& g = grad_buffer(*xn);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T y = out->data[i];
        g[i] += out->grad[i] * (T(1) - y * y);
      }
    });
  }
  return result;
}

template <typename T>
DiffTensor<T> gelu(Tape<T>& tape, const DiffTensor<T>& x) {
  static constexpr T kAlpha = T(0.7978845608028654);  // sqrt(2/pi)
  static constexpr T kCubic = T(0.044715);
  const auto n = static_cast<Eigen::Index>(x.numel());
  const ConstArrMap<T> v(x.data().data(), n);
  Buffer<T> th(x.numel());
  ArrMap<T>(th.data(), n) = (kAlpha * (v + kCubic * v.cube())).tanh();
  Buffer<T> out(x.numel());
  ArrMap<T>(out.data(), n) = T(0.5) * v * (T(1) + ArrMap<T>(th.data(), n));
  const bool grad = tracks(tape, {&x});
  auto result = make_result<T>(x.shape(), std::move(out), "gelu", grad);
  if (grad) {
    tape.record([out = result.shared(), xn = x.shared(), th = std::move(th), n] {
      if (out->grad.empty()) return;
      const ConstArrMap<T> v(xn->data.data(), n);
      const ConstArrMap<T> t(th.data(), n);
      const auto dt = (T(1) - t.square()) * kAlpha * (T(1) + T(3) * kCubic * v.square());
      ArrMap<T>(grad_buffer(*xn).data(), n) +=
          ConstArrMap<T>(out->grad.data(), n) * (T(0.5) * (T(1) + t) + T(0.5) * v * dt);
    });
  }
  return result;
}

template <typename T>
DiffTensor<T> softmax(Tape<T>& tape, const DiffTensor<T>& x, std::size_t axis) {
  require(axis < x.rank(), "softmax", "axis " + std::to_string(axis) + " out of range for " + to_string(x.shape()));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t len = x.dim(axis);
  Buffer<T> out(x.numel());
  const auto xd = x.data();
  if (inner == 1) {
    const auto cols = static_cast<Eigen::Index>(len);
    for (std::size_t o = 0; o < outer && len > 0; ++o) {
      const ConstArrMap<T> row(xd.data() + o * len, cols);
      ArrMap<T> y(out.data() + o * len, cols);
      y = (row - row.maxCoeff()).exp();
      y *= T(1) / y.sum();
    }
  }
  for (std::size_t o = 0; o < outer && inner > 1; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T max_v = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < len; ++j) max_v = std::max(max_v, xd[base + j * inner]);
      T total = T(0);
      for (std::size_t j = 0; j < len; ++j) {
        const T e = std::exp(xd[base + j * inner] - max_v);
        out[base + j * inner] = e;
        total += e;
      }
      const T inv = T(1) / total;
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] *= inv;
    }
  }
  const bool grad = tracks(tape, {&x});
  auto result = make_result<T>(x.shape(), std::move(out), "softmax", grad);
  if (grad) {
    tape.record([out = result.shared(), xn = x.shared(), outer, inner, len] {
      if (out->grad.empty()) return;
      auto& g = grad_buffer(*xn);
      const auto& y = out->data;
      const auto& dy = out->grad;
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * len * inner + in;
          T dot = T(0);
          for (std::size_t j = 0; j < len; ++j) dot += dy[base + j * inner] * y[base + j * inner];
          for (std::size_t j = 0; j < len; ++j) {
            const std::size_t idx = base + j * inner;
            g[idx] += y[idx] * (dy[idx] - dot);
          }
        }
      }
    });
  }
  return result;
}

template <typename T>
DiffTensor<T> layer_norm(Tape<T>& tape, const DiffTensor<T>& x, const DiffTensor<T>& gain, const DiffTensor<T>& bias,
                         double eps) {
  if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be positive");
  require(x.rank() >= 1, "layer_norm", "expects rank >= 1");
  const std::size_t n = x.shape().back();
  require(gain.rank() == 1 && gain.dim(0) == n && bias.rank() == 1 && bias.dim(0) == n, "layer_norm",
          "gain/bias must match last dimension " + std::to_string(n));
  const std::size_t rows = n == 0 ? 0 : x.numel() / n;
  Buffer<T> out(x.numel());
  Buffer<T> normalized(x.numel());
  Buffer<T> rstd(rows);
  const auto xd = x.data(), gd = gain.data(), bd = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xd.data() + r * n;
    T mean = T(0);
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= T(n);
    T var = T(0);
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= T(n);
    const T inv = T(1) / std::sqrt(var + T(eps));
    rstd[r] = inv;
    for (std::size_t j = 0; j < n; ++j) {
      const T h = (row[j] - mean) * inv;
      normalized[r * n + j] = h;
      out[r * n + j] = h * gd[j] + bd[j];
    }
  }
  const bool grad = tracks(tape, {&x, &gain, &bias});
  auto result = make_result<T>(x.shape(), std::move(out), "layer_norm", grad);
  if (grad) {
    tape.record([out = result.shared(), xn = x.shared(), gn = gain.shared(), bn = bias.shared(),
                 normalized = std::move(normalized), rstd = std::move(rstd), rows, n] {
      if (out->grad.empty()) return;
      const auto& dy = out->grad;
      if (gn->requires_grad) {
        auto& g = grad_buffer(*gn);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < n; ++j) g[j] += dy[r * n + j] * normalized[r * n + j];
      }
      if (bn->requires_grad) {
        auto& g = grad_buffer(*bn);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < n; ++j) g[j] += dy[r * n + j];
      }
      if (xn->requires_grad) {
        auto& g = grad_buffer(*xn);
        for (std::size_t r = 0; r < rows; ++r) {
          T mean_dh = T(0), mean_dh_h = T(0);
          for (std::size_t j = 0; j < n; ++j) {
            const T dh = dy[r * n + j] * gn->data[j];
            mean_dh += dh;
            mean_dh_h += dh * normalized[r * n + j];
          }
          mean_dh /= T(n);
          mean_dh_h /= T(n);
          for (std::size_t j = 0; j < n; ++j) {
            const T dh = dy[r * n + j] * gn->data[j];
            g[r * n + j] += rstd[r] * (dh - mean_dh - normalized[r * n + j] * mean_dh_h);
          }
        }
      }
    });
  }
  return result;
}

template <typename T>
DiffTensor<T> cross_entropy(Tape<T>& tape, const DiffTensor<T>& logits, std::span<const std::int32_t> targets,
                            std::int32_t pad_id) {
  require(logits.rank() >= 1, "cross_entropy", "logits must have a vocabulary dimension");
  const std::size_t vocab = logits.shape().back();
  const std::size_t rows = vocab == 0 ? 0 : logits.numel() / vocab;
  require(targets.size() == rows, "cross_entropy",
          std::to_string(targets.size()) + " targets for " + std::to_string(rows) + " positions");
  std::size_t count = 0;
  for (auto t : targets) {
    if (t == pad_id) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      throw ShapeError("cross_entropy: target id " + std::to_string(t) + " outside vocabulary of " +
                       std::to_string(vocab));
    }
    ++count;
  }
  if (count == 0) throw DataError("cross_entropy: every position is padding (empty loss)");
  const auto xd = logits.data();
  Buffer<T> probs(logits.numel(), T(0));
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] == pad_id) continue;
    const T* row = xd.data() + r * vocab;
    T max_v = row[0];
    for (std::size_t j = 1; j < vocab; ++j) max_v = std::max(max_v, row[j]);
    T denom = T(0);
    for (std::size_t j = 0; j < vocab; ++j) {
      const T e = std::exp(row[j] - max_v);
      probs[r * vocab + j] = e;
      denom += e;
    }
    for (std::size_t j = 0; j < vocab; ++j) probs[r * vocab + j] /= denom;
    const T lse = max_v + std::log(denom);
    total += static_cast<double>(lse - row[static_cast<std::size_t>(targets[r])]);
  }
  const T loss = static_cast<T>(total / static_cast<double>(count));
  const bool grad = tracks(tape, {&logits});
  auto result = make_result<T>({}, Buffer<T>{loss}, "cross_entropy", grad);
  if (grad) {
    tape.record([out = result.shared(), ln = logits.shared(), probs = std::move(probs),
                 ids = std::vector<std::int32_t>(targets.begin(), targets.end()), pad_id, rows, vocab, count] {
      if (out->grad.empty()) return;
      auto& g = grad_buffer(*ln);
      const T factor = out->grad[0] / T(count);
      for (std::size_t r = 0; r < rows; ++r) {
        if (ids[r] == pad_id) continue;
        for (std::size_t j = 0; j < vocab; ++j) g[r * vocab + j] += factor * probs[r * vocab + j];
        g[r * vocab + static_cast<std::size_t>(ids[r])] -= factor;
      }
    });
  }
  return result;
}

template <typename T>
DiffTensor<T> embedding(Tape<T>& tape, const DiffTensor<T>& table, std::span<const std::int32_t> ids) {
  require(table.rank() == 2, "embedding", "table must be a matrix");
  const std::size_t rows = table.dim(0), d = table.dim(1);
  Buffer<T> out(ids.size() * d);
  const auto td = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= rows) {
      throw ShapeError("embedding: id " + std::to_string(ids[i]) + " outside table of " + std::to_string(rows) +
                       " rows");
    }
    std::copy_n(td.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  const bool grad = tracks(tape, {&table});
  auto result = make_result<T>({ids.size(), d}, std::move(out), "embedding", grad);
  if (grad) {
    tape.record([out = result.shared(), tn = table.shared(), idx = std::vector<std::int32_t>(ids.begin(), ids.end()),
                 d] {
      if (out->grad.empty()) return;
      auto& g = grad_buffer(*tn);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        T* row = g.data() + static_cast<std::size_t>(idx[i]) * d;
        const T* src = out->grad.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) row[j] += src[j];
      }
    });
  }
  return result;
}

template <typename T>
DiffTensor<T> split_heads(Tape<T>& tape, const DiffTensor<T>& x, std::size_t batch, std::size_t seq,
                          std::size_t heads) {
  require(x.rank() == 2 && x.dim(0) == batch * seq && heads > 0 && x.dim(1) % heads == 0, "split_heads",
          "cannot split " + to_string(x.shape()) + " into " + std::to_string(heads) + " heads");
  const std::size_t d = x.dim(1), dh = d / heads;
  Buffer<T> out(x.numel());
  const auto xd = x.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t s = 0; s < seq; ++s)
      for (std::size_t h = 0; h < heads; ++h)
        std::copy_n(xd.data() + (b * seq + s) * d + h * dh, dh, out.data() + ((b * heads + h) * seq + s) * dh);
  const bool grad = tracks(tape, {&x});
  auto result = make_result<T>({batch * heads, seq, dh}, std::move(out), "split_heads", grad);
  if (grad) {
    tape.record([out = result.shared(), xn = x.shared(), batch, seq, heads, d, dh] {
      if (out->grad.empty()) return;
      auto& g = grad_buffer(*xn);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t s = 0; s < seq; ++s)
          for (std::size_t h = 0; h < heads; ++h) {
            const T* src = out->grad.data() + ((b * heads + h) * seq + s) * dh;
            T* dst = g.data() + (b * seq + s) * d + h * dh;
            for (std::size_t e = 0; e < dh; ++e) dst[e] += src[e];
          }
    });
  }
  return result;
}

template <typename T>
DiffTensor<T> merge_heads(Tape<T>& tape, const DiffTensor<T>& x, std::size_t batch, std::size_t heads) {
  require(x.rank() == 3 && x.dim(0) == batch * heads, "merge_heads", "unexpected shape " + to_string(x.shape()));
  const std::size_t seq = x.dim(1), dh = x.dim(2), d = dh * heads;
  Buffer<T> out(x.numel());
  const auto xd = x.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t s = 0; s < seq; ++s)
        std::copy_n(xd.data() + ((b * heads + h) * seq + s) * dh, dh, out.data() + (b * seq + s) * d + h * dh);
  const bool grad = tracks(tape, {&x});
  auto result = make_result<T>({batch * seq, d}, std::move(out), "merge_heads", grad);
  if (grad) {
    tape.record([out = result.shared(), xn = x.shared(), batch, seq, heads, d, dh] {
      if (out->grad.empty()) return;
      auto& g = grad_buffer(*xn);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t h = 0; h < heads; ++h)
          for (std::size_t s = 0; s < seq; ++s) {
            const T* src = out->grad.data() + (b * seq + s) * d + h * dh;
            T* dst = g.data() + ((b * heads + h) * seq + s) * dh;
            for (std::size_t e = 0; e < dh; ++e) dst[e] += src[e];
          }
    });
  }
  return result;
}

template <typename T>
DiffTensor<T> concat_prefix(Tape<T>& tape, const DiffTensor<T>& x, const DiffTensor<T>& prefix, std::size_t heads) {
  require(x.rank() == 3 && heads > 0 && x.dim(0) % heads == 0, "concat_prefix", "unexpected shape " + to_string(x.shape()));
  const std::size_t bh = x.dim(0), seq = x.dim(1), dh = x.dim(2), batch = bh / heads;
  require(prefix.rank() == 2 && prefix.dim(1) == heads * dh, "concat_prefix",
          "prefix " + to_string(prefix.shape()) + " does not match model width " + std::to_string(heads * dh));
  const std::size_t len = prefix.dim(0), total = len + seq, d = heads * dh;
  Buffer<T> out(bh * total * dh);
  const auto xd = x.data(), pd = prefix.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h) {
      T* dst = out.data() + (b * heads + h) * total * dh;
      for (std::size_t l = 0; l < len; ++l) std::copy_n(pd.data() + l * d + h * dh, dh, dst + l * dh);
      std::copy_n(xd.data() + (b * heads + h) * seq * dh, seq * dh, dst + len * dh);
    }
  const bool grad = tracks(tape, {&x, &prefix});
  auto result = make_result<T>({bh, total, dh}, std::move(out), "concat_prefix", grad);
  if (grad) {
    tape.record([out = result.shared(), xn = x.shared(), pn = prefix.shared(), batch, heads, seq, len, total, dh, d] {
      if (out->grad.empty()) return;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t h = 0; h < heads; ++h) {
          const T* src = out->grad.data() + (b * heads + h) * total * dh;
          if (pn->requires_grad) {
            auto& g = grad_buffer(*pn);
            for (std::size_t l = 0; l < len; ++l)
              for (std::size_t e = 0; e < dh; ++e) g[l * d + h * dh + e] += src[l * dh + e];
          }
          if (xn->requires_grad) {
            auto& g = grad_buffer(*xn);
            T* dst = g.data() + (b * heads + h) * seq * dh;
            for (std::size_t i = 0; i < seq * dh; ++i) dst[i] += src[len * dh + i];
          }
        }
    });
  }
  return result;
}

template <typename T>
DiffTensor<T> add_mask(Tape<T>& tape, const DiffTensor<T>& scores, std::span<const std::uint8_t> mask,
                       std::size_t heads) {
  require(scores.rank() == 3 && heads > 0 && scores.dim(0) % heads == 0, "add_mask",
          "unexpected shape " + to_string(scores.shape()));
  const std::size_t batch = scores.dim(0) / heads, plane = scores.dim(1) * scores.dim(2);
  require(mask.size() == batch * plane, "add_mask", "mask has " + std::to_string(mask.size()) + " entries, expected " +
                                                        std::to_string(batch * plane));
  Buffer<T> out(scores.data().begin(), scores.data().end());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h) {
      T* dst = out.data() + (b * heads + h) * plane;
      const std::uint8_t* m = mask.data() + b * plane;
      for (std::size_t i = 0; i < plane; ++i)
        if (m[i] != 0) dst[i] += T(kMaskedScore);
    }
  const bool grad = tracks(tape, {&scores});
  auto result = make_result<T>(scores.shape(), std::move(out), "add_mask", grad);
  if (grad) {
    tape.record([out = result.shared(), sn = scores.shared()] {
      if (out->grad.empty()) return;
      auto& g = grad_buffer(*sn);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += out->grad[i];
    });
  }
  return result;
}

template <typename T>
DiffTensor<T> dropout(Tape<T>& tape, const DiffTensor<T>& x, double rate, util::Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0, 1)");
  if (rate == 0.0) return x;
  const T keep_scale = T(1.0 / (1.0 - rate));
  Buffer<T> factors(x.numel());
  for (auto& f : factors) f = rng.uniform() < rate ? T(0) : keep_scale;
  Buffer<T> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * factors[i];
  const bool grad = tracks(tape, {&x});
  auto result = make_result<T>(x.shape(), std::move(out), "dropout", grad);
  if (grad) {
    tape.record([out = result.shared(), xn = x.shared(), factors = std::move(factors)] {
      if (out->grad.empty()) return;
      auto& g = grad_buffer(*xn);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += out->grad[i] * factors[i];
    });
  }
  return result;
}

template <typename T>
DiffTensor<T> slice_cols(Tape<T>& tape, const DiffTensor<T>& x, std::size_t start, std::size_t count) {
  require(x.rank() == 2 && start + count <= x.dim(1), "slice_cols",
          "columns [" + std::to_string(start) + ", " + std::to_string(start + count) + ") outside " +
              to_string(x.shape()));
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Buffer<T> out(rows * count);
  const auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(xd.data() + r * cols + start, count, out.data() + r * count);
  const bool grad = tracks(tape, {&x});
  auto result = make_result<T>({rows, count}, std::move(out), "slice_cols", grad);
  if (grad) {
    tape.record([out = result.shared(), xn = x.shared(), rows, cols, start, count] {
      if (out->grad.empty()) return;
      auto& g = grad_buffer(*xn);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < count; ++j) g[r * cols + start + j] += out->grad[r * count + j];
    });
  }
  return result;
}

template <typename T>
DiffTensor<T> reshape(Tape<T>& tape, const DiffTensor<T>& x, Shape shape) {
  require(numel(shape) == x.numel(), "reshape", "cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  const bool grad = tracks(tape, {&x});
  auto result = DiffTensor<T>::from(std::move(shape), Buffer<T>(x.data().begin(), x.data().end()), grad);
  if (grad) {
    tape.record([out = result.shared(), xn = x.shared()] {
      if (out->grad.empty()) return;
      auto& g = grad_buffer(*xn);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += out->grad[i];
    });
  }
  return result;
}

#define TRANSCODER_INSTANTIATE_OPS(T)                                                                          \
  template DiffTensor<T> matmul(Tape<T>&, const DiffTensor<T>&, const DiffTensor<T>&);                         \
  template DiffTensor<T> batched_matmul(Tape<T>&, const DiffTensor<T>&, const DiffTensor<T>&, bool);           \
  template DiffTensor<T> add(Tape<T>&, const DiffTensor<T>&, const DiffTensor<T>&);                            \
  template DiffTensor<T> mul(Tape<T>&, const DiffTensor<T>&, const DiffTensor<T>&);                            \
  template DiffTensor<T> add_bias(Tape<T>&, const DiffTensor<T>&, const DiffTensor<T>&);                       \
  template DiffTensor<T> scale(Tape<T>&, const DiffTensor<T>&, T);                                             \
  template DiffTensor<T> sum(Tape<T>&, const DiffTensor<T>&);                                                  \
  template DiffTensor<T> tanh(Tape<T>&, const DiffTensor<T>&);                                                 \
  template DiffTensor<T> gelu(Tape<T>&, const DiffTensor<T>&);                                                 \
  template DiffTensor<T> softmax(Tape<T>&, const DiffTensor<T>&, std::size_t);                                 \
  template DiffTensor<T> layer_norm(Tape<T>&, const DiffTensor<T>&, const DiffTensor<T>&, const DiffTensor<T>&, \
                                    double);                                                                   \
  template DiffTensor<T> cross_entropy(Tape<T>&, const DiffTensor<T>&, std::span<const std::int32_t>,          \
                                       std::int32_t);                                                          \
  template DiffTensor<T> embedding(Tape<T>&, const DiffTensor<T>&, std::span<const std::int32_t>);             \
  template DiffTensor<T> split_heads(Tape<T>&, const DiffTensor<T>&, std::size_t, std::size_t, std::size_t);   \
  template DiffTensor<T> merge_heads(Tape<T>&, const DiffTensor<T>&, std::size_t, std::size_t);                \
  template DiffTensor<T> concat_prefix(Tape<T>&, const DiffTensor<T>&, const DiffTensor<T>&, std::size_t);     \
  template DiffTensor<T> add_mask(Tape<T>&, const DiffTensor<T>&, std::span<const std::uint8_t>, std::size_t); \
  template DiffTensor<T> dropout(Tape<T>&, const DiffTensor<T>&, double, util::Rng&);                          \
  template DiffTensor<T> slice_cols(Tape<T>&, const DiffTensor<T>&, std::size_t, std::size_t);                 \
  template DiffTensor<T> reshape(Tape<T>&, const DiffTensor<T>&, Shape);

TRANSCODER_INSTANTIATE_OPS(float)
TRANSCODER_INSTANTIATE_OPS(double)

#undef TRANSCODER_INSTANTIATE_OPS

}  // namespace transcoder::ad
