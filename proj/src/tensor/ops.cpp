// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "forge/error.hpp"

namespace forge::tensor {

namespace {

template <typename T>
std::vector<T> transpose(std::span<const T> a, std::size_t rows, std::size_t cols) {
  std::vector<T> out(a.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = a[r * cols + c];
  }
  return out;
}

template <typename T>
void require_matrix(const Tape<T>& tape, Var v, const char* what) {
  if (tape.shape(v).size() != 2) {
    throw ShapeError(std::string(what) + " must be a matrix, got " + shape_str(tape.shape(v)));
  }
}

// Number of features along axis 1 and elements per feature per sample.
struct FeatureLayout {
  std::size_t batch = 0;
  std::size_t features = 0;
  std::size_t inner = 1;
};

FeatureLayout feature_layout(const Shape& shape) {
  if (shape.size() < 2) throw ShapeError("expected at least [batch x features], got " + shape_str(shape));
  FeatureLayout l{shape[0], shape[1], 1};
  for (std::size_t i = 2; i < shape.size(); ++i) l.inner *= shape[i];
  return l;
}

template <typename T>
void accumulate_bias_grad(std::span<const T> g, std::span<T> db, const FeatureLayout& l) {
  for (std::size_t b = 0; b < l.batch; ++b) {
    for (std::size_t c = 0; c < l.features; ++c) {
      const T* gp = g.data() + (b * l.features + c) * l.inner;
      T acc = 0;
      for (std::size_t s = 0; s < l.inner; ++s) acc += gp[s];
      db[c] += acc;
    }
  }
}

}  // namespace

template <typename T>
void gemm_accumulate(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    const T* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b) {
  require_matrix(tape, a, "matmul lhs");
  require_matrix(tape, b, "matmul rhs");
  const std::size_t m = tape.shape(a)[0], k = tape.shape(a)[1], n = tape.shape(b)[1];
  if (tape.shape(b)[0] != k) {
    throw ShapeError("matmul inner dimensions differ: " + shape_str(tape.shape(a)) + " * " +
                     shape_str(tape.shape(b)));
  }
  std::vector<T> out(m * n, T{0});
  gemm_accumulate(tape.value(a).data(), tape.value(b).data(), out.data(), m, k, n);
  tape.add_macs(static_cast<std::uint64_t>(m) * k * n);
  const Var self{tape.size()};
  return tape.record({m, n}, std::move(out), {a, b}, [=](Tape<T>& t) {
    auto g = t.grad(self);
    if (t.requires_grad(a)) {
      const auto bt = transpose<T>(t.value(b), k, n);
      gemm_accumulate(g.data(), bt.data(), t.grad(a).data(), m, n, k);
    }
    if (t.requires_grad(b)) {
      const auto at = transpose<T>(t.value(a), m, k);
      gemm_accumulate(at.data(), g.data(), t.grad(b).data(), k, m, n);
    }
  });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  if (tape.shape(a) != tape.shape(b)) {
    throw ShapeError("add: shapes differ " + shape_str(tape.shape(a)) + " vs " +
                     shape_str(tape.shape(b)));
  }
  auto va = tape.value(a);
  auto vb = tape.value(b);
  std::vector<T> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
  const Var self{tape.size()};
  return tape.record(tape.shape(a), std::move(out), {a, b}, [=](Tape<T>& t) {
    auto g = t.grad(self);
    for (Var p : {a, b}) {
      if (!t.requires_grad(p)) continue;
      auto gp = t.grad(p);
      for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
    }
  });
}

template <typename T>
Var add_bias(Tape<T>& tape, Var x, Var bias) {
  const auto layout = feature_layout(tape.shape(x));
  if (tape.value(bias).size() != layout.features) {
    throw ShapeError("bias has " + std::to_string(tape.value(bias).size()) + " entries for " +
                     std::to_string(layout.features) + " features");
  }
  std::vector<T> out(tape.value(x).begin(), tape.value(x).end());
  auto bv = tape.value(bias);
  for (std::size_t b = 0; b < layout.batch; ++b) {
    for (std::size_t c = 0; c < layout.features; ++c) {
      T* op = out.data() + (b * layout.features + c) * layout.inner;
      for (std::size_t s = 0; s < layout.inner; ++s) op[s] += bv[c];
    }
  }
  const Var self{tape.size()};
  return tape.record(tape.shape(x), std::move(out), {x, bias}, [=](Tape<T>& t) {
    auto g = t.grad(self);
    if (t.requires_grad(x)) {
      auto gx = t.grad(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (t.requires_grad(bias)) accumulate_bias_grad<T>(g, t.grad(bias), layout);
  });
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
  auto xv = tape.value(x);
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > T{0} ? xv[i] : T{0};
  const Var self{tape.size()};
  return tape.record(tape.shape(x), std::move(out), {x}, [=](Tape<T>& t) {
    auto g = t.grad(self);
    auto in = t.value(x);
    auto gx = t.grad(x);
    // Subgradient 0 at the kink.
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in[i] > T{0}) gx[i] += g[i];
    }
  });
}

template <typename T>
Var reshape(Tape<T>& tape, Var x, Shape shape) {
  if (numel(shape) != tape.value(x).size()) {
    throw ShapeError("reshape " + shape_str(tape.shape(x)) + " -> " + shape_str(shape));
  }
  std::vector<T> out(tape.value(x).begin(), tape.value(x).end());
  const Var self{tape.size()};
  return tape.record(std::move(shape), std::move(out), {x}, [=](Tape<T>& t) {
    auto g = t.grad(self);
    auto gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

template <typename T>
Var masked_linear(Tape<T>& tape, Var x, Var w, std::span<const std::uint8_t> mask, Var bias,
                  WeightGrad grad_mode) {
  require_matrix(tape, x, "masked_linear input");
  require_matrix(tape, w, "masked_linear weight");
  const std::size_t m = tape.shape(x)[0], k = tape.shape(x)[1], n = tape.shape(w)[1];
  if (tape.shape(w)[0] != k) {
    throw ShapeError("masked_linear: input " + shape_str(tape.shape(x)) + " vs weight " +
                     shape_str(tape.shape(w)));
  }
  if (!mask.empty() && mask.size() != k * n) {
    throw ShapeError("masked_linear: mask size " + std::to_string(mask.size()) +
                     " does not match weight " + shape_str(tape.shape(w)));
  }
  auto wv = tape.value(w);
  auto effective = std::make_shared<std::vector<T>>(wv.begin(), wv.end());
  std::shared_ptr<std::vector<std::uint8_t>> bitmap;
  std::uint64_t active = k * n;
  if (!mask.empty()) {
    bitmap = std::make_shared<std::vector<std::uint8_t>>(mask.begin(), mask.end());
    active = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (!mask[i]) (*effective)[i] = T{0};
      active += mask[i] ? 1 : 0;
    }
  }
  std::vector<T> out(m * n, T{0});
  gemm_accumulate(tape.value(x).data(), effective->data(), out.data(), m, k, n);
  tape.add_macs(static_cast<std::uint64_t>(m) * active);
  const Var self{tape.size()};
  Var y = tape.record({m, n}, std::move(out), {x, w}, [=](Tape<T>& t) {
    auto g = t.grad(self);
    if (t.requires_grad(x)) {
      const auto wt = transpose<T>(*effective, k, n);
      gemm_accumulate(g.data(), wt.data(), t.grad(x).data(), m, n, k);
    }
    if (t.requires_grad(w)) {
      std::vector<T> dw(k * n, T{0});
      const auto xt = transpose<T>(t.value(x), m, k);
      gemm_accumulate(xt.data(), g.data(), dw.data(), k, m, n);
      auto gw = t.grad(w);
      const bool keep_all = grad_mode == WeightGrad::dense || !bitmap;
      for (std::size_t i = 0; i < dw.size(); ++i) {
        if (keep_all || (*bitmap)[i]) gw[i] += dw[i];
      }
    }
  });
  return bias.valid() ? add_bias(tape, y, bias) : y;
}

template <typename T>
Var csr_linear(Tape<T>& tape, Var x, Var w, std::shared_ptr<const CsrPattern> pattern, Var bias,
               WeightGrad grad_mode) {
  require_matrix(tape, x, "csr_linear input");
  require_matrix(tape, w, "csr_linear weight");
  const std::size_t m = tape.shape(x)[0], k = tape.shape(x)[1], n = tape.shape(w)[1];
  if (tape.shape(w)[0] != k || pattern->rows != k || pattern->cols != n) {
    throw ShapeError("csr_linear: input " + shape_str(tape.shape(x)) + ", weight " +
                     shape_str(tape.shape(w)) + ", pattern " + std::to_string(pattern->rows) +
                     "x" + std::to_string(pattern->cols));
  }
  auto rows = std::make_shared<CompressedRows<T>>(CompressedRows<T>::gather(*pattern, tape.value(w)));
  std::vector<T> out(m * n);
  std::uint64_t macs = 0;
  csr_matmul_unchecked<T>(tape.value(x), m, *rows, out, &macs);
  tape.add_macs(macs);
  const Var self{tape.size()};
  Var y = tape.record({m, n}, std::move(out), {x, w}, [=](Tape<T>& t) {
    auto g = t.grad(self);
    const auto& offsets = rows->pattern.offsets;
    const auto& cols = rows->pattern.indices;
    const auto& vals = rows->values;
    if (t.requires_grad(x)) {
      auto gx = t.grad(x);
      for (std::size_t i = 0; i < m; ++i) {
        const T* gi = g.data() + i * n;
        for (std::size_t r = 0; r < k; ++r) {
          T acc = 0;
          for (std::uint32_t p = offsets[r]; p < offsets[r + 1]; ++p) acc += vals[p] * gi[cols[p]];
          gx[i * k + r] += acc;
        }
      }
    }
    if (t.requires_grad(w)) {
      auto gw = t.grad(w);
      if (grad_mode == WeightGrad::dense) {
        std::vector<T> dw(k * n, T{0});
        const auto xt = transpose<T>(t.value(x), m, k);
        gemm_accumulate(xt.data(), g.data(), dw.data(), k, m, n);
        for (std::size_t i = 0; i < dw.size(); ++i) gw[i] += dw[i];
      } else {
        std::vector<T> dv(vals.size(), T{0});
        auto xv = t.value(x);
        for (std::size_t i = 0; i < m; ++i) {
          const T* gi = g.data() + i * n;
          for (std::size_t r = 0; r < k; ++r) {
            const T xr = xv[i * k + r];
            for (std::uint32_t p = offsets[r]; p < offsets[r + 1]; ++p) dv[p] += xr * gi[cols[p]];
          }
        }
        for (std::size_t r = 0; r < k; ++r) {
          for (std::uint32_t p = offsets[r]; p < offsets[r + 1]; ++p) gw[r * n + cols[p]] += dv[p];
        }
      }
    }
  });
  return bias.valid() ? add_bias(tape, y, bias) : y;
}

template <typename T>
Var batchnorm(Tape<T>& tape, Var x, Var gamma, Var beta, BatchNormState<T>& state, Mode mode,
              double eps, double momentum) {
  const auto l = feature_layout(tape.shape(x));
  if (tape.value(gamma).size() != l.features || tape.value(beta).size() != l.features ||
      state.running_mean.size() != l.features) {
    throw ShapeError("batchnorm parameters do not match " + std::to_string(l.features) +
                     " features");
  }
  const std::size_t count = l.batch * l.inner;
  if (mode == Mode::train && l.batch < 2) {
    throw ValidationError("batchnorm in train mode needs a batch of at least 2");
  }
  auto xv = tape.value(x);
  auto gv = tape.value(gamma);
  auto bv = tape.value(beta);
  auto xhat = std::make_shared<std::vector<T>>(xv.size());
  auto inv_std = std::make_shared<std::vector<T>>(l.features);
  std::vector<T> out(xv.size());
  for (std::size_t c = 0; c < l.features; ++c) {
    T mean, var;
    if (mode == Mode::train) {
      double sum = 0;
      for (std::size_t b = 0; b < l.batch; ++b) {
        const T* xp = xv.data() + (b * l.features + c) * l.inner;
        for (std::size_t s = 0; s < l.inner; ++s) sum += xp[s];
      }
      const double mu = sum / static_cast<double>(count);
      double sq = 0;
      for (std::size_t b = 0; b < l.batch; ++b) {
        const T* xp = xv.data() + (b * l.features + c) * l.inner;
        for (std::size_t s = 0; s < l.inner; ++s) sq += (xp[s] - mu) * (xp[s] - mu);
      }
      mean = static_cast<T>(mu);
      var = static_cast<T>(sq / static_cast<double>(count));
      const double unbiased = sq / static_cast<double>(count - 1);
      state.running_mean[c] =
          static_cast<T>((1.0 - momentum) * state.running_mean[c] + momentum * mu);
      state.running_var[c] =
          static_cast<T>((1.0 - momentum) * state.running_var[c] + momentum * unbiased);
    } else {
      mean = state.running_mean[c];
      var = state.running_var[c];
    }
    const T is = static_cast<T>(1.0 / std::sqrt(static_cast<double>(var) + eps));
    (*inv_std)[c] = is;
    for (std::size_t b = 0; b < l.batch; ++b) {
      const std::size_t base = (b * l.features + c) * l.inner;
      for (std::size_t s = 0; s < l.inner; ++s) {
        const T h = (xv[base + s] - mean) * is;
        (*xhat)[base + s] = h;
        out[base + s] = gv[c] * h + bv[c];
      }
    }
  }
  const Var self{tape.size()};
  return tape.record(tape.shape(x), std::move(out), {x, gamma, beta}, [=](Tape<T>& t) {
    auto g = t.grad(self);
    auto gam = t.value(gamma);
    std::vector<T> sum_g(l.features, T{0}), sum_gh(l.features, T{0});
    for (std::size_t b = 0; b < l.batch; ++b) {
      for (std::size_t c = 0; c < l.features; ++c) {
        const std::size_t base = (b * l.features + c) * l.inner;
        for (std::size_t s = 0; s < l.inner; ++s) {
          sum_g[c] += g[base + s];
          sum_gh[c] += g[base + s] * (*xhat)[base + s];
        }
      }
    }
    if (t.requires_grad(gamma)) {
      auto gg = t.grad(gamma);
      for (std::size_t c = 0; c < l.features; ++c) gg[c] += sum_gh[c];
    }
    if (t.requires_grad(beta)) {
      auto gb = t.grad(beta);
      for (std::size_t c = 0; c < l.features; ++c) gb[c] += sum_g[c];
    }
    if (!t.requires_grad(x)) return;
    auto gx = t.grad(x);
    const T n = static_cast<T>(count);
    for (std::size_t b = 0; b < l.batch; ++b) {
      for (std::size_t c = 0; c < l.features; ++c) {
        const std::size_t base = (b * l.features + c) * l.inner;
        const T scale = gam[c] * (*inv_std)[c];
        for (std::size_t s = 0; s < l.inner; ++s) {
          if (mode == Mode::train) {
            gx[base + s] +=
                scale * (g[base + s] - sum_g[c] / n - (*xhat)[base + s] * sum_gh[c] / n);
          } else {
            gx[base + s] += scale * g[base + s];
          }
        }
      }
    }
  });
}

template <typename T>
Var softmax_cross_entropy(Tape<T>& tape, Var logits, std::span<const std::int32_t> labels) {
  require_matrix(tape, logits, "logits");
  const std::size_t batch = tape.shape(logits)[0], classes = tape.shape(logits)[1];
  if (labels.size() != batch) {
    throw ShapeError("got " + std::to_string(labels.size()) + " labels for a batch of " +
                     std::to_string(batch));
  }
  auto z = tape.value(logits);
  auto probs = std::make_shared<std::vector<T>>(z.size());
  double loss = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const std::int32_t y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw ValidationError("label " + std::to_string(y) + " out of range [0, " +
                            std::to_string(classes) + ")");
    }
    const T* zb = z.data() + b * classes;
    const T zmax = *std::max_element(zb, zb + classes);
    double sum = 0;
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(static_cast<double>(zb[c] - zmax));
    const double lse = std::log(sum) + static_cast<double>(zmax);
    loss += lse - static_cast<double>(zb[y]);
    for (std::size_t c = 0; c < classes; ++c) {
      (*probs)[b * classes + c] = static_cast<T>(std::exp(static_cast<double>(zb[c]) - lse));
    }
  }
  std::vector<std::int32_t> targets(labels.begin(), labels.end());
  const Var self{tape.size()};
  return tape.record({1}, {static_cast<T>(loss / static_cast<double>(batch))}, {logits},
                     [=](Tape<T>& t) {
                       const T g = t.grad(self)[0] / static_cast<T>(batch);
                       auto gz = t.grad(logits);
                       for (std::size_t b = 0; b < batch; ++b) {
                         for (std::size_t c = 0; c < classes; ++c) {
                           const T onehot = static_cast<std::size_t>(targets[b]) == c ? T{1} : T{0};
                           gz[b * classes + c] += g * ((*probs)[b * classes + c] - onehot);
                         }
                       }
                     });
}

template <typename T>
Var mse_loss(Tape<T>& tape, Var y, std::span<const T> target) {
  auto yv = tape.value(y);
  if (target.size() != yv.size()) {
    throw ShapeError("mse_loss: " + std::to_string(target.size()) + " targets for " +
                     std::to_string(yv.size()) + " outputs");
  }
  double sum = 0;
  for (std::size_t i = 0; i < yv.size(); ++i) {
    const double d = static_cast<double>(yv[i]) - static_cast<double>(target[i]);
    sum += d * d;
  }
  const std::size_t n = yv.size();
  std::vector<T> tgt(target.begin(), target.end());
  const Var self{tape.size()};
  return tape.record({1}, {static_cast<T>(sum / static_cast<double>(n))}, {y}, [=](Tape<T>& t) {
    const T g = t.grad(self)[0] * T{2} / static_cast<T>(n);
    auto v = t.value(y);
    auto gy = t.grad(y);
    for (std::size_t i = 0; i < n; ++i) gy[i] += g * (v[i] - tgt[i]);
  });
}

template <typename T>
Var sum_squares(Tape<T>& tape, Var x) {
  auto xv = tape.value(x);
  T sum = 0;
  for (auto v : xv) sum += v * v;
  const Var self{tape.size()};
  return tape.record({1}, {sum}, {x}, [=](Tape<T>& t) {
    const T g = t.grad(self)[0];
    auto v = t.value(x);
    auto gx = t.grad(x);
    for (std::size_t i = 0; i < v.size(); ++i) gx[i] += T{2} * g * v[i];
  });
}

#define FORGE_INSTANTIATE_OPS(T)                                                               \
  template void gemm_accumulate<T>(const T*, const T*, T*, std::size_t, std::size_t,           \
                                   std::size_t);                                               \
  template Var matmul<T>(Tape<T>&, Var, Var);                                                  \
  template Var add<T>(Tape<T>&, Var, Var);                                                     \
  template Var add_bias<T>(Tape<T>&, Var, Var);                                                \
  template Var relu<T>(Tape<T>&, Var);                                                         \
  template Var reshape<T>(Tape<T>&, Var, Shape);                                               \
  template Var masked_linear<T>(Tape<T>&, Var, Var, std::span<const std::uint8_t>, Var,        \
                                WeightGrad);                                                   \
  template Var csr_linear<T>(Tape<T>&, Var, Var, std::shared_ptr<const CsrPattern>, Var,       \
                             WeightGrad);                                                      \
  template Var batchnorm<T>(Tape<T>&, Var, Var, Var, BatchNormState<T>&, Mode, double, double); \
  template Var softmax_cross_entropy<T>(Tape<T>&, Var, std::span<const std::int32_t>);         \
  template Var mse_loss<T>(Tape<T>&, Var, std::span<const T>);                                 \
  template Var sum_squares<T>(Tape<T>&, Var);

FORGE_INSTANTIATE_OPS(float)
FORGE_INSTANTIATE_OPS(double)

}  // namespace forge::tensor
