#include "fmhca/ops.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

namespace fmhca {

Mask Mask::all_valid(std::size_t rows, std::size_t cols) {
  return Mask{rows, cols, std::vector<std::uint8_t>(rows * cols, 1)};
}

Mask Mask::from_keys(std::size_t rows, const KeyMask& keys) {
  Mask m{rows, keys.size(), {}};
  m.valid.reserve(rows * keys.size());
  for (std::size_t r = 0; r < rows; ++r) m.valid.insert(m.valid.end(), keys.begin(), keys.end());
  return m;
}

namespace fault {
namespace {
std::atomic<bool> g_matmul_fault{false};
}
void set_matmul_grad_fault(bool enabled) { g_matmul_fault.store(enabled); }
bool matmul_grad_fault() { return g_matmul_fault.load(); }
}  // namespace fault

namespace ops {
namespace {

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

// C[r x c] += A[r x k] * B[k x c]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t r, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < r; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T(0)) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[r x c] += A[r x k] * B[c x k]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t r, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < r; ++i) {
    const T* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// C[r x c] += A[k x r]^T * B[k x c]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t r, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* brow = b + p * n;
    for (std::size_t i = 0; i < r; ++i) {
      const T av = a[p * r + i];
      if (av == T(0)) continue;
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) throw Error(code, what);
}

template <typename T>
void require_matrix(const Tensor<T>& t, const char* op) {
  require(t.rank() <= 2, ErrorCode::ShapeMismatch,
          std::string(op) + " expects a matrix, got " + shape_string(t.shape()));
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t r = a.rows(), k = a.cols(), n = b.cols();
  require(b.rows() == k, ErrorCode::ShapeMismatch,
          "matmul " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  std::vector<T> out(r * n, T(0));
  gemm_nn(a.values().data(), b.values().data(), out.data(), r, k, n);
  return detail::make_result<T>(
      Shape{r, n}, std::move(out), {a.node(), b.node()}, [r, k, n](Node<T>& self) {
        auto& an = *self.inputs[0];
        auto& bn = *self.inputs[1];
        if (an.requires_grad) gemm_nt(self.grad.data(), bn.value.data(), an.grad_buffer().data(), r, n, k);
        if (bn.requires_grad) {
          if (fault::matmul_grad_fault()) {
            std::vector<T> tmp(k * n, T(0));
            gemm_tn(an.value.data(), self.grad.data(), tmp.data(), k, r, n);
            auto& g = bn.grad_buffer();
            for (std::size_t i = 0; i < tmp.size(); ++i) g[i] += tmp[i] * T(1.01);
          } else {
            gemm_tn(an.value.data(), self.grad.data(), bn.grad_buffer().data(), k, r, n);
          }
        }
      });
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t r = a.rows(), k = a.cols(), n = b.rows();
  require(b.cols() == k, ErrorCode::ShapeMismatch,
          "matmul_nt " + shape_string(a.shape()) + " x " + shape_string(b.shape()) + "^T");
  std::vector<T> out(r * n, T(0));
  gemm_nt(a.values().data(), b.values().data(), out.data(), r, k, n);
  return detail::make_result<T>(
      Shape{r, n}, std::move(out), {a.node(), b.node()}, [r, k, n](Node<T>& self) {
        auto& an = *self.inputs[0];
        auto& bn = *self.inputs[1];
        if (an.requires_grad) gemm_nn(self.grad.data(), bn.value.data(), an.grad_buffer().data(), r, n, k);
        if (bn.requires_grad) gemm_tn(self.grad.data(), an.value.data(), bn.grad_buffer().data(), n, r, k);
      });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_matrix(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<T> out(r * c);
  const auto v = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = v[i * c + j];
  return detail::make_result<T>(Shape{c, r}, std::move(out), {a.node()}, [r, c](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), ErrorCode::ShapeMismatch,
          "add " + shape_string(a.shape()) + " + " + shape_string(b.shape()));
  std::vector<T> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return detail::make_result<T>(a.shape(), std::move(out), {a.node(), b.node()}, [](Node<T>& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& a, const Tensor<T>& bias) {
  require_matrix(a, "add_bias");
  const std::size_t r = a.rows(), c = a.cols();
  require(bias.numel() == c, ErrorCode::ShapeMismatch,
          "add_bias " + shape_string(a.shape()) + " + " + shape_string(bias.shape()));
  std::vector<T> out(a.values().begin(), a.values().end());
  const auto bv = bias.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bv[j];
  return detail::make_result<T>(a.shape(), std::move(out), {a.node(), bias.node()},
                                [r, c](Node<T>& self) {
                                  auto& an = *self.inputs[0];
                                  auto& bn = *self.inputs[1];
                                  if (an.requires_grad) {
                                    auto& g = an.grad_buffer();
                                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                                  }
                                  if (bn.requires_grad) {
                                    auto& g = bn.grad_buffer();
                                    for (std::size_t i = 0; i < r; ++i)
                                      for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
                                  }
                                });
}

template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), ErrorCode::ShapeMismatch,
          "hadamard " + shape_string(a.shape()) + " .* " + shape_string(b.shape()));
  std::vector<T> out(a.numel());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return detail::make_result<T>(a.shape(), std::move(out), {a.node(), b.node()}, [](Node<T>& self) {
    auto& an = *self.inputs[0];
    auto& bn = *self.inputs[1];
    if (an.requires_grad) {
      auto& g = an.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn.value[i];
    }
    if (bn.requires_grad) {
      auto& g = bn.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an.value[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= factor;
  return detail::make_result<T>(a.shape(), std::move(out), {a.node()}, [factor](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.values().begin(), a.values().end());
  for (auto& v : out) v = v > T(0) ? v : T(0);
  return detail::make_result<T>(a.shape(), std::move(out), {a.node()}, [](Node<T>& self) {
    auto& in = *self.inputs[0];
    auto& g = in.grad_buffer();
    // Subgradient at exactly 0 is 0.
    for (std::size_t i = 0; i < g.size(); ++i)
      if (in.value[i] > T(0)) g[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> masked_softmax(const Tensor<T>& x, const std::optional<Mask>& mask) {
  require_matrix(x, "masked_softmax");
  const std::size_t r = x.rows(), c = x.cols();
  if (mask) {
    require(mask->rows == r && mask->cols == c, ErrorCode::ShapeMismatch,
            "softmax mask " + std::to_string(mask->rows) + "x" + std::to_string(mask->cols) +
                " vs input " + shape_string(x.shape()));
  }
  const auto xv = x.values();
  std::vector<T> out(r * c, T(0));
  for (std::size_t i = 0; i < r; ++i) {
    T row_max = -std::numeric_limits<T>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < c; ++j) {
      if (mask && !(*mask)(i, j)) continue;
      any = true;
      row_max = std::max(row_max, xv[i * c + j]);
    }
    if (!any) throw Error(ErrorCode::AllMasked, "softmax row " + std::to_string(i) + " has no valid entry");
    T total = T(0);
    for (std::size_t j = 0; j < c; ++j) {
      if (mask && !(*mask)(i, j)) continue;
      const T e = std::exp(xv[i * c + j] - row_max);
      out[i * c + j] = e;
      total += e;
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= total;
  }
  return detail::make_result<T>(x.shape(), std::move(out), {x.node()}, [r, c](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const auto& y = self.value;
    for (std::size_t i = 0; i < r; ++i) {
      T dot = T(0);
      for (std::size_t j = 0; j < c; ++j) dot += self.grad[i * c + j] * y[i * c + j];
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += y[i * c + j] * (self.grad[i * c + j] - dot);
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  require_matrix(x, "layer_norm");
  const std::size_t r = x.rows(), c = x.cols();
  require(c >= 1, ErrorCode::ShapeMismatch, "layer_norm needs at least one column");
  require(gamma.numel() == c && beta.numel() == c, ErrorCode::ShapeMismatch,
          "layer_norm affine " + shape_string(gamma.shape()) + "/" + shape_string(beta.shape()) +
              " vs input " + shape_string(x.shape()));
  const auto xv = x.values();
  const auto gv = gamma.values();
  const auto bv = beta.values();
  std::vector<T> normalized(r * c);
  std::vector<T> inv_std(r);
  std::vector<T> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    const T* row = xv.data() + i * c;
    T mean = T(0);
    for (std::size_t j = 0; j < c; ++j) mean += row[j];
    mean /= static_cast<T>(c);
    T var = T(0);
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<T>(c);
    inv_std[i] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      const T n = (row[j] - mean) * inv_std[i];
      normalized[i * c + j] = n;
      out[i * c + j] = n * gv[j] + bv[j];
    }
  }
  return detail::make_result<T>(
      x.shape(), std::move(out), {x.node(), gamma.node(), beta.node()},
      [r, c, normalized = std::move(normalized), inv_std = std::move(inv_std)](Node<T>& self) {
        auto& xn = *self.inputs[0];
        auto& gn = *self.inputs[1];
        auto& bn = *self.inputs[2];
        if (gn.requires_grad) {
          auto& g = gn.grad_buffer();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j] * normalized[i * c + j];
        }
        if (bn.requires_grad) {
          auto& g = bn.grad_buffer();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
        }
        if (xn.requires_grad) {
          auto& g = xn.grad_buffer();
          std::vector<T> dn(c);
          for (std::size_t i = 0; i < r; ++i) {
            T mean_dn = T(0), mean_dn_n = T(0);
            for (std::size_t j = 0; j < c; ++j) {
              dn[j] = self.grad[i * c + j] * gn.value[j];
              mean_dn += dn[j];
              mean_dn_n += dn[j] * normalized[i * c + j];
            }
            mean_dn /= static_cast<T>(c);
            mean_dn_n /= static_cast<T>(c);
            for (std::size_t j = 0; j < c; ++j)
              g[i * c + j] += inv_std[i] * (dn[j] - mean_dn - normalized[i * c + j] * mean_dn_n);
          }
        }
      });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Rng& rng, bool training) {
  require(rate >= 0.0 && rate < 1.0, ErrorCode::InvalidArgument,
          "dropout rate must lie in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> factors(x.numel());
  for (auto& f : factors) f = rng.uniform() >= rate ? keep_scale : T(0);
  std::vector<T> out(x.numel());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factors[i];
  return detail::make_result<T>(x.shape(), std::move(out), {x.node()},
                                [factors = std::move(factors)](Node<T>& self) {
                                  auto& g = self.inputs[0]->grad_buffer();
                                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factors[i];
                                });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  require(shape_numel(shape) == a.numel(), ErrorCode::ShapeMismatch,
          "reshape " + shape_string(a.shape()) + " -> " + shape_string(shape));
  std::vector<T> out(a.values().begin(), a.values().end());
  return detail::make_result<T>(std::move(shape), std::move(out), {a.node()}, [](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t end) {
  require_matrix(a, "slice_rows");
  const std::size_t c = a.cols();
  require(begin < end && end <= a.rows(), ErrorCode::ShapeMismatch,
          "slice_rows [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
              shape_string(a.shape()));
  const auto v = a.values();
  std::vector<T> out(v.begin() + begin * c, v.begin() + end * c);
  return detail::make_result<T>(Shape{end - begin, c}, std::move(out), {a.node()},
                                [begin, c](Node<T>& self) {
                                  auto& g = self.inputs[0]->grad_buffer();
                                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                                    g[begin * c + i] += self.grad[i];
                                });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t end) {
  require_matrix(a, "slice_cols");
  const std::size_t r = a.rows(), c = a.cols(), w = end - begin;
  require(begin < end && end <= c, ErrorCode::ShapeMismatch,
          "slice_cols [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
              shape_string(a.shape()));
  const auto v = a.values();
  std::vector<T> out(r * w);
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(v.begin() + i * c + begin, w, out.begin() + i * w);
  return detail::make_result<T>(Shape{r, w}, std::move(out), {a.node()},
                                [r, c, w, begin](Node<T>& self) {
                                  auto& g = self.inputs[0]->grad_buffer();
                                  for (std::size_t i = 0; i < r; ++i)
                                    for (std::size_t j = 0; j < w; ++j)
                                      g[i * c + begin + j] += self.grad[i * w + j];
                                });
}

template <typename T>
Tensor<T> concat_rows(std::span<const Tensor<T>> parts) {
  require(!parts.empty(), ErrorCode::InvalidArgument, "concat_rows of nothing");
  const std::size_t c = parts.front().cols();
  std::size_t total_rows = 0;
  std::vector<std::shared_ptr<Node<T>>> inputs;
  for (const auto& p : parts) {
    require_matrix(p, "concat_rows");
    require(p.cols() == c, ErrorCode::ShapeMismatch,
            "concat_rows column mismatch: " + shape_string(p.shape()));
    total_rows += p.rows();
    inputs.push_back(p.node());
  }
  std::vector<T> out;
  out.reserve(total_rows * c);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return detail::make_result<T>(Shape{total_rows, c}, std::move(out), std::move(inputs),
                                [](Node<T>& self) {
                                  std::size_t offset = 0;
                                  for (auto& in : self.inputs) {
                                    const std::size_t n = in->value.size();
                                    if (in->requires_grad) {
                                      auto& g = in->grad_buffer();
                                      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
                                    }
                                    offset += n;
                                  }
                                });
}

template <typename T>
Tensor<T> concat_cols(std::span<const Tensor<T>> parts) {
  require(!parts.empty(), ErrorCode::InvalidArgument, "concat_cols of nothing");
  const std::size_t r = parts.front().rows();
  std::size_t total_cols = 0;
  std::vector<std::shared_ptr<Node<T>>> inputs;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    require(p.rows() == r, ErrorCode::ShapeMismatch,
            "concat_cols row mismatch: " + shape_string(p.shape()));
    total_cols += p.cols();
    widths.push_back(p.cols());
    inputs.push_back(p.node());
  }
  std::vector<T> out(r * total_cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    const auto v = p.values();
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(v.begin() + i * w, w, out.begin() + i * total_cols + offset);
    offset += w;
  }
  return detail::make_result<T>(
      Shape{r, total_cols}, std::move(out), std::move(inputs),
      [r, total_cols, widths = std::move(widths)](Node<T>& self) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < self.inputs.size(); ++k) {
          auto& in = *self.inputs[k];
          const std::size_t w = widths[k];
          if (in.requires_grad) {
            auto& g = in.grad_buffer();
            for (std::size_t i = 0; i < r; ++i)
              for (std::size_t j = 0; j < w; ++j) g[i * w + j] += self.grad[i * total_cols + off + j];
          }
          off += w;
        }
      });
}

template <typename T>
Tensor<T> masked_mean_rows(const Tensor<T>& a, const KeyMask& rows_valid) {
  require_matrix(a, "masked_mean_rows");
  const std::size_t r = a.rows(), c = a.cols();
  require(rows_valid.size() == r, ErrorCode::ShapeMismatch,
          "row mask of length " + std::to_string(rows_valid.size()) + " for " + shape_string(a.shape()));
  const auto count = static_cast<std::size_t>(std::count_if(
      rows_valid.begin(), rows_valid.end(), [](std::uint8_t v) { return v != 0; }));
  if (count == 0) throw Error(ErrorCode::AllMasked, "masked_mean_rows with no valid row");
  const auto v = a.values();
  std::vector<T> out(c, T(0));
  for (std::size_t i = 0; i < r; ++i) {
    if (!rows_valid[i]) continue;
    for (std::size_t j = 0; j < c; ++j) out[j] += v[i * c + j];
  }
  const T inv = T(1) / static_cast<T>(count);
  for (auto& x : out) x *= inv;
  return detail::make_result<T>(Shape{1, c}, std::move(out), {a.node()},
                                [r, c, inv, rows_valid](Node<T>& self) {
                                  auto& g = self.inputs[0]->grad_buffer();
                                  for (std::size_t i = 0; i < r; ++i) {
                                    if (!rows_valid[i]) continue;
                                    for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j] * inv;
                                  }
                                });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = T(0);
  for (auto v : a.values()) total += v;
  return detail::make_result<T>(Shape{1}, std::vector<T>{total}, {a.node()}, [](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (auto& x : g) x += self.grad[0];
  });
}

template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& a, std::span<const T> weights) {
  require(weights.size() == a.numel(), ErrorCode::ShapeMismatch,
          "weighted_sum with " + std::to_string(weights.size()) + " weights for " + shape_string(a.shape()));
  T total = T(0);
  const auto v = a.values();
  for (std::size_t i = 0; i < v.size(); ++i) total += v[i] * weights[i];
  std::vector<T> w(weights.begin(), weights.end());
  return detail::make_result<T>(Shape{1}, std::vector<T>{total}, {a.node()},
                                [w = std::move(w)](Node<T>& self) {
                                  auto& g = self.inputs[0]->grad_buffer();
                                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * w[i];
                                });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::size_t> targets,
                        std::span<const T> class_weights) {
  require_matrix(logits, "cross_entropy");
  const std::size_t b = logits.rows(), c = logits.cols();
  if (b == 0) throw Error(ErrorCode::EmptyBatch, "cross_entropy over an empty batch");
  require(targets.size() == b, ErrorCode::ShapeMismatch,
          std::to_string(targets.size()) + " targets for " + shape_string(logits.shape()));
  require(class_weights.empty() || class_weights.size() == c, ErrorCode::ShapeMismatch,
          "class weight count must equal class count");
  const auto lv = logits.values();
  std::vector<T> probs(b * c);
  std::vector<T> sample_weight(b, T(1));
  T weight_total = T(0);
  T loss = T(0);
  for (std::size_t i = 0; i < b; ++i) {
    require(targets[i] < c, ErrorCode::InvalidArgument, "target index out of range");
    const T* row = lv.data() + i * c;
    const T row_max = *std::max_element(row, row + c);
    T total = T(0);
    for (std::size_t j = 0; j < c; ++j) {
      probs[i * c + j] = std::exp(row[j] - row_max);
      total += probs[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= total;
    const T log_sum_exp = row_max + std::log(total);
    if (!class_weights.empty()) sample_weight[i] = class_weights[targets[i]];
    weight_total += sample_weight[i];
    loss += sample_weight[i] * (log_sum_exp - row[targets[i]]);
  }
  require(weight_total > T(0), ErrorCode::InvalidArgument, "class weights sum to zero on this batch");
  loss /= weight_total;
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  return detail::make_result<T>(
      Shape{1}, std::vector<T>{loss}, {logits.node()},
      [b, c, probs = std::move(probs), sample_weight = std::move(sample_weight), weight_total,
       tgt = std::move(tgt)](Node<T>& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < b; ++i) {
          const T factor = self.grad[0] * sample_weight[i] / weight_total;
          for (std::size_t j = 0; j < c; ++j) {
            const T onehot = j == tgt[i] ? T(1) : T(0);
            g[i * c + j] += factor * (probs[i * c + j] - onehot);
          }
        }
      });
}

#define FMHCA_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> transpose(const Tensor<T>&);                                              \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> hadamard(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> scale(const Tensor<T>&, T);                                               \
  template Tensor<T> relu(const Tensor<T>&);                                                   \
  template Tensor<T> masked_softmax(const Tensor<T>&, const std::optional<Mask>&);             \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);      \
  template Tensor<T> dropout(const Tensor<T>&, double, Rng&, bool);                            \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                         \
  template Tensor<T> slice_rows(const Tensor<T>&, std::size_t, std::size_t);                   \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                   \
  template Tensor<T> concat_rows(std::span<const Tensor<T>>);                                  \
  template Tensor<T> concat_cols(std::span<const Tensor<T>>);                                  \
  template Tensor<T> masked_mean_rows(const Tensor<T>&, const KeyMask&);                       \
  template Tensor<T> sum(const Tensor<T>&);                                                    \
  template Tensor<T> weighted_sum(const Tensor<T>&, std::span<const T>);                       \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const std::size_t>, std::span<const T>);

FMHCA_INSTANTIATE_OPS(float)
FMHCA_INSTANTIATE_OPS(double)
FMHCA_INSTANTIATE_OPS(long double)

#undef FMHCA_INSTANTIATE_OPS

}  // namespace ops
}  // namespace fmhca
