#include "melstorm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "melstorm/error.hpp"

namespace melstorm {

namespace {

using Index = std::ptrdiff_t;

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
  }
}

void require_extent(std::size_t got, std::size_t want, const char* op, const std::string& what) {
  if (got != want) {
    throw ShapeError(std::string(op) + ": " + what + " is " + std::to_string(got) + ", expected " +
                     std::to_string(want));
  }
}

// Output positions o in [lo, hi) whose tap o*stride + offset - pad lands inside [0, in).
struct TapRange {
  Index lo = 0;
  Index hi = 0;
};

TapRange tap_range(Index offset, Index pad, Index stride, Index in, Index out) {
  const Index start = offset - pad;
  Index lo = start < 0 ? (-start + stride - 1) / stride : 0;
  const Index last = in - 1 - start;
  Index hi = last < 0 ? 0 : last / stride + 1;
  hi = std::min(hi, out);
  lo = std::min(lo, hi);
  return {lo, hi};
}

struct ConvDims {
  Index n, cin, h, w, cout, kh, kw, sh, sw, ph, pw, oh, ow;
};

}  // namespace

std::size_t conv_output_extent(std::size_t input, std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (input + 2 * padding < kernel) {
    throw ShapeError("conv2d: kernel extent " + std::to_string(kernel) + " exceeds padded input extent " +
                     std::to_string(input + 2 * padding));
  }
  return (input + 2 * padding - kernel) / stride + 1;
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, Extent2 stride, Extent2 padding) {
  constexpr const char* op = "conv2d";
  require_rank(input, 4, op, "input");
  require_rank(weight, 4, op, "weight");
  require_rank(bias, 1, op, "bias");
  require_extent(input.dim(1), weight.dim(1), op, "input channels (dim 1 of input) vs weight dim 1");
  require_extent(bias.dim(0), weight.dim(0), op, "bias length vs weight out_channels");

  ConvDims d{};
  d.n = static_cast<Index>(input.dim(0));
  d.cin = static_cast<Index>(input.dim(1));
  d.h = static_cast<Index>(input.dim(2));
  d.w = static_cast<Index>(input.dim(3));
  d.cout = static_cast<Index>(weight.dim(0));
  d.kh = static_cast<Index>(weight.dim(2));
  d.kw = static_cast<Index>(weight.dim(3));
  d.sh = static_cast<Index>(stride.h);
  d.sw = static_cast<Index>(stride.w);
  d.ph = static_cast<Index>(padding.h);
  d.pw = static_cast<Index>(padding.w);
  d.oh = static_cast<Index>(conv_output_extent(input.dim(2), weight.dim(2), stride.h, padding.h));
  d.ow = static_cast<Index>(conv_output_extent(input.dim(3), weight.dim(3), stride.w, padding.w));

  const auto x = input.data();
  const auto wt = weight.data();
  const auto b = bias.data();
  std::vector<double> out(static_cast<std::size_t>(d.n * d.cout * d.oh * d.ow), 0.0);

  for (Index n = 0; n < d.n; ++n) {
    for (Index co = 0; co < d.cout; ++co) {
      double* plane = out.data() + (n * d.cout + co) * d.oh * d.ow;
      for (Index ci = 0; ci < d.cin; ++ci) {
        const double* in_plane = x.data() + (n * d.cin + ci) * d.h * d.w;
        for (Index ky = 0; ky < d.kh; ++ky) {
          const auto rows = tap_range(ky, d.ph, d.sh, d.h, d.oh);
          for (Index kx = 0; kx < d.kw; ++kx) {
            const auto cols = tap_range(kx, d.pw, d.sw, d.w, d.ow);
            const double wv = wt[((co * d.cin + ci) * d.kh + ky) * d.kw + kx];
            for (Index oy = rows.lo; oy < rows.hi; ++oy) {
              const double* in_row = in_plane + (oy * d.sh + ky - d.ph) * d.w + kx - d.pw;
              double* out_row = plane + oy * d.ow;
              for (Index ox = cols.lo; ox < cols.hi; ++ox) out_row[ox] += in_row[ox * d.sw] * wv;
            }
          }
        }
      }
      const double bv = b[co];
      for (Index i = 0; i < d.oh * d.ow; ++i) plane[i] += bv;
    }
  }

  auto x_store = input.impl()->storage;
  auto w_store = weight.impl()->storage;
  Shape out_shape{input.dim(0), weight.dim(0), static_cast<std::size_t>(d.oh), static_cast<std::size_t>(d.ow)};
  return Tensor::make_result(
      std::move(out_shape), std::move(out), op, {input, weight, bias},
      [d, x_store, w_store](std::span<const double> go, GradSlots& slots) {
        const auto& x = *x_store;
        const auto& wt = *w_store;
        auto gx = slots[0];
        auto gw = slots[1];
        auto gb = slots[2];
        for (Index n = 0; n < d.n; ++n) {
          for (Index co = 0; co < d.cout; ++co) {
            const double* gplane = go.data() + (n * d.cout + co) * d.oh * d.ow;
            if (!gb.empty()) {
              double acc = 0.0;
              for (Index i = 0; i < d.oh * d.ow; ++i) acc += gplane[i];
              gb[co] += acc;
            }
            for (Index ci = 0; ci < d.cin; ++ci) {
              const Index in_off = (n * d.cin + ci) * d.h * d.w;
              for (Index ky = 0; ky < d.kh; ++ky) {
                const auto rows = tap_range(ky, d.ph, d.sh, d.h, d.oh);
                for (Index kx = 0; kx < d.kw; ++kx) {
                  const auto cols = tap_range(kx, d.pw, d.sw, d.w, d.ow);
                  const Index widx = ((co * d.cin + ci) * d.kh + ky) * d.kw + kx;
                  const double wv = wt[widx];
                  double wacc = 0.0;
                  for (Index oy = rows.lo; oy < rows.hi; ++oy) {
                    const Index row_off = in_off + (oy * d.sh + ky - d.ph) * d.w + kx - d.pw;
                    const double* grow = gplane + oy * d.ow;
                    if (!gx.empty()) {
                      double* gx_row = gx.data() + row_off;
                      for (Index ox = cols.lo; ox < cols.hi; ++ox) gx_row[ox * d.sw] += grow[ox] * wv;
                    }
                    if (!gw.empty()) {
                      const double* x_row = x.data() + row_off;
                      for (Index ox = cols.lo; ox < cols.hi; ++ox) wacc += grow[ox] * x_row[ox * d.sw];
                    }
                  }
                  if (!gw.empty()) gw[widx] += wacc;
                }
              }
            }
          }
        }
      });
}

namespace {

struct BnDims {
  std::size_t n, c, plane;
};

BnDims check_bn(const Tensor& input, const Tensor& gamma, const Tensor& beta, const BatchNormStats& stats,
                const char* op) {
  require_rank(input, 4, op, "input");
  const std::size_t c = input.dim(1);
  require_rank(gamma, 1, op, "gamma");
  require_rank(beta, 1, op, "beta");
  require_extent(gamma.dim(0), c, op, "gamma length vs input channels");
  require_extent(beta.dim(0), c, op, "beta length vs input channels");
  require_extent(stats.mean.size(), c, op, "running_mean length vs input channels");
  require_extent(stats.var.size(), c, op, "running_var length vs input channels");
  return {input.dim(0), c, input.dim(2) * input.dim(3)};
}

}  // namespace

Tensor batchnorm2d_train(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormStats& running,
                         double momentum, double eps) {
  const auto d = check_bn(input, gamma, beta, running, "batchnorm2d");
  const std::size_t count = d.n * d.plane;
  if (count < 2) throw ShapeError("batchnorm2d: train mode needs at least 2 values per channel, got " +
                                  std::to_string(count));
  const auto x = input.data();
  const auto g = gamma.data();
  const auto bt = beta.data();

  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(d.c);
  std::vector<double> out(x.size());
  for (std::size_t c = 0; c < d.c; ++c) {
    double total = 0.0;
    for (std::size_t n = 0; n < d.n; ++n) {
      const double* p = x.data() + (n * d.c + c) * d.plane;
      for (std::size_t i = 0; i < d.plane; ++i) total += p[i];
    }
    const double mean = total / static_cast<double>(count);
    double sq = 0.0;
    for (std::size_t n = 0; n < d.n; ++n) {
      const double* p = x.data() + (n * d.c + c) * d.plane;
      for (std::size_t i = 0; i < d.plane; ++i) sq += (p[i] - mean) * (p[i] - mean);
    }
    const double var = sq / static_cast<double>(count);
    inv_std[c] = 1.0 / std::sqrt(var + eps);
    for (std::size_t n = 0; n < d.n; ++n) {
      const std::size_t off = (n * d.c + c) * d.plane;
      for (std::size_t i = 0; i < d.plane; ++i) {
        xhat[off + i] = (x[off + i] - mean) * inv_std[c];
        out[off + i] = g[c] * xhat[off + i] + bt[c];
      }
    }
    const double unbiased = sq / static_cast<double>(count - 1);
    running.mean[c] = (1.0 - momentum) * running.mean[c] + momentum * mean;
    running.var[c] = (1.0 - momentum) * running.var[c] + momentum * unbiased;
  }

  auto g_store = gamma.impl()->storage;
  return Tensor::make_result(
      input.shape(), std::move(out), "batchnorm2d_train", {input, gamma, beta},
      [d, count, g_store, xhat = std::move(xhat), inv_std = std::move(inv_std)](std::span<const double> go,
                                                                                 GradSlots& slots) {
        const auto& g = *g_store;
        const double m = static_cast<double>(count);
        for (std::size_t c = 0; c < d.c; ++c) {
          double sum_go = 0.0;
          double sum_go_xhat = 0.0;
          for (std::size_t n = 0; n < d.n; ++n) {
            const std::size_t off = (n * d.c + c) * d.plane;
            for (std::size_t i = 0; i < d.plane; ++i) {
              sum_go += go[off + i];
              sum_go_xhat += go[off + i] * xhat[off + i];
            }
          }
          if (!slots[1].empty()) slots[1][c] += sum_go_xhat;
          if (!slots[2].empty()) slots[2][c] += sum_go;
          if (!slots[0].empty()) {
            const double scale = g[c] * inv_std[c] / m;
            for (std::size_t n = 0; n < d.n; ++n) {
              const std::size_t off = (n * d.c + c) * d.plane;
              for (std::size_t i = 0; i < d.plane; ++i) {
                slots[0][off + i] += scale * (m * go[off + i] - sum_go - xhat[off + i] * sum_go_xhat);
              }
            }
          }
        }
      });
}

Tensor batchnorm2d_eval(const Tensor& input, const Tensor& gamma, const Tensor& beta, const BatchNormStats& running,
                        double eps) {
  const auto d = check_bn(input, gamma, beta, running, "batchnorm2d");
  const auto x = input.data();
  const auto g = gamma.data();
  const auto bt = beta.data();
  std::vector<double> inv_std(d.c);
  std::vector<double> out(x.size());
  for (std::size_t c = 0; c < d.c; ++c) inv_std[c] = 1.0 / std::sqrt(running.var[c] + eps);
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.c; ++c) {
      const std::size_t off = (n * d.c + c) * d.plane;
      for (std::size_t i = 0; i < d.plane; ++i) {
        out[off + i] = g[c] * ((x[off + i] - running.mean[c]) * inv_std[c]) + bt[c];
      }
    }
  }

  auto x_store = input.impl()->storage;
  auto g_store = gamma.impl()->storage;
  return Tensor::make_result(
      input.shape(), std::move(out), "batchnorm2d_eval", {input, gamma, beta},
      [d, x_store, g_store, mean = running.mean, inv_std = std::move(inv_std)](std::span<const double> go,
                                                                               GradSlots& slots) {
        const auto& x = *x_store;
        const auto& g = *g_store;
        for (std::size_t n = 0; n < d.n; ++n) {
          for (std::size_t c = 0; c < d.c; ++c) {
            const std::size_t off = (n * d.c + c) * d.plane;
            for (std::size_t i = 0; i < d.plane; ++i) {
              const double xh = (x[off + i] - mean[c]) * inv_std[c];
              if (!slots[0].empty()) slots[0][off + i] += go[off + i] * g[c] * inv_std[c];
              if (!slots[1].empty()) slots[1][c] += go[off + i] * xh;
              if (!slots[2].empty()) slots[2][c] += go[off + i];
            }
          }
        }
      });
}

Tensor relu(const Tensor& input) {
  const auto x = input.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  auto x_store = input.impl()->storage;
  return Tensor::make_result(input.shape(), std::move(out), "relu", {input},
                             [x_store](std::span<const double> go, GradSlots& slots) {
                               const auto& x = *x_store;
                               for (std::size_t i = 0; i < go.size(); ++i) {
                                 if (x[i] > 0.0) slots[0][i] += go[i];
                               }
                             });
}

Tensor global_avg_pool(const Tensor& input) {
  require_rank(input, 4, "global_avg_pool", "input");
  const std::size_t rows = input.dim(0) * input.dim(1);
  const std::size_t plane = input.dim(2) * input.dim(3);
  const auto x = input.data();
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += x[r * plane + i];
    out[r] = acc / static_cast<double>(plane);
  }
  return Tensor::make_result({input.dim(0), input.dim(1)}, std::move(out), "global_avg_pool", {input},
                             [rows, plane](std::span<const double> go, GradSlots& slots) {
                               const double inv = 1.0 / static_cast<double>(plane);
                               for (std::size_t r = 0; r < rows; ++r) {
                                 for (std::size_t i = 0; i < plane; ++i) slots[0][r * plane + i] += go[r] * inv;
                               }
                             });
}

Tensor affine(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  constexpr const char* op = "affine";
  require_rank(input, 2, op, "input");
  require_rank(weight, 2, op, "weight");
  require_rank(bias, 1, op, "bias");
  require_extent(input.dim(1), weight.dim(1), op, "input features vs weight dim 1");
  require_extent(bias.dim(0), weight.dim(0), op, "bias length vs weight dim 0");
  const std::size_t n = input.dim(0), f = input.dim(1), o = weight.dim(0);
  const auto x = input.data();
  const auto w = weight.data();
  const auto b = bias.data();
  std::vector<double> out(n * o);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < o; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < f; ++k) acc += x[r * f + k] * w[j * f + k];
      out[r * o + j] = acc + b[j];
    }
  }
  auto x_store = input.impl()->storage;
  auto w_store = weight.impl()->storage;
  return Tensor::make_result({n, o}, std::move(out), op, {input, weight, bias},
                             [n, f, o, x_store, w_store](std::span<const double> go, GradSlots& slots) {
                               const auto& x = *x_store;
                               const auto& w = *w_store;
                               for (std::size_t r = 0; r < n; ++r) {
                                 for (std::size_t j = 0; j < o; ++j) {
                                   const double g = go[r * o + j];
                                   if (!slots[0].empty()) {
                                     for (std::size_t k = 0; k < f; ++k) slots[0][r * f + k] += g * w[j * f + k];
                                   }
                                   if (!slots[1].empty()) {
                                     for (std::size_t k = 0; k < f; ++k) slots[1][j * f + k] += g * x[r * f + k];
                                   }
                                   if (!slots[2].empty()) slots[2][j] += g;
                                 }
                               }
                             });
}

Tensor cross_entropy_loss(const Tensor& logits, std::span<const std::size_t> labels, Reduction reduction) {
  require_rank(logits, 2, "cross_entropy_loss", "logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  require_extent(labels.size(), n, "cross_entropy_loss", "label count vs logits rows");
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] >= k) {
      throw Error("cross_entropy_loss: label " + std::to_string(labels[r]) + " in row " + std::to_string(r) +
                  " is outside [0, " + std::to_string(k) + ")");
    }
  }
  const auto z = logits.data();
  std::vector<double> softmax(n * k);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = z.data() + r * k;
    const double mx = *std::max_element(row, row + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < k; ++j) softmax[r * k + j] = std::exp(row[j] - mx) / s;
    total += mx + std::log(s) - row[labels[r]];
  }
  const double scale = reduction == Reduction::mean ? 1.0 / static_cast<double>(n) : 1.0;
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  return Tensor::make_result({1}, {total * scale}, "cross_entropy_loss", {logits},
                             [n, k, scale, softmax = std::move(softmax), lab = std::move(lab)](
                                 std::span<const double> go, GradSlots& slots) {
                               const double g = go[0] * scale;
                               for (std::size_t r = 0; r < n; ++r) {
                                 for (std::size_t j = 0; j < k; ++j) {
                                   const double onehot = j == lab[r] ? 1.0 : 0.0;
                                   slots[0][r * k + j] += g * (softmax[r * k + j] - onehot);
                                 }
                               }
                             });
}

Tensor sum(const Tensor& input) {
  double acc = 0.0;
  for (double v : input.data()) acc += v;
  return Tensor::make_result({1}, {acc}, "sum", {input}, [](std::span<const double> go, GradSlots& slots) {
    for (auto& g : slots[0]) g += go[0];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mul: shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) + " differ");
  }
  const auto x = a.data();
  const auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  auto xs = a.impl()->storage;
  auto ys = b.impl()->storage;
  return Tensor::make_result(a.shape(), std::move(out), "mul", {a, b},
                             [xs, ys](std::span<const double> go, GradSlots& slots) {
                               for (std::size_t i = 0; i < go.size(); ++i) {
                                 if (!slots[0].empty()) slots[0][i] += go[i] * (*ys)[i];
                                 if (!slots[1].empty()) slots[1][i] += go[i] * (*xs)[i];
                               }
                             });
}

Tensor weighted_sum(const Tensor& input, std::span<const double> weights) {
  require_extent(weights.size(), input.numel(), "weighted_sum", "weight count vs input size");
  const auto x = input.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * weights[i];
  std::vector<double> w(weights.begin(), weights.end());
  return Tensor::make_result({1}, {acc}, "weighted_sum", {input},
                             [w = std::move(w)](std::span<const double> go, GradSlots& slots) {
                               for (std::size_t i = 0; i < w.size(); ++i) slots[0][i] += go[0] * w[i];
                             });
}

}  // namespace melstorm
