#include "maskface/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "maskface/errors.hpp"

namespace maskface {

namespace {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

void check_finite(const Tensor& t, std::string_view op) {
  if (!finite_checks_enabled()) return;
  for (float v : t.data()) {
    if (!std::isfinite(v)) throw ContractError(std::string(op) + ": non-finite value in output");
  }
}

void require_rank(const Tensor& t, std::size_t rank, std::string_view op, std::string_view what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + std::string(what) + " must have rank " + std::to_string(rank) +
                         ", got shape " + shape_to_string(t.shape()));
  }
}

void accumulate(std::span<float> dst, std::span<const float> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

struct ConvGeometry {
  std::int64_t channels, height, width;
  std::int64_t kh, kw, stride, padding;
  std::int64_t out_h, out_w;

  std::int64_t rows() const { return channels * kh * kw; }
  std::int64_t cols() const { return out_h * out_w; }
  bool is_pointwise() const { return kh == 1 && kw == 1 && stride == 1 && padding == 0; }
};

// cols[(c*kh + i)*kw + j][oy*out_w + ox] = x[c][oy*s - p + i][ox*s - p + j], zero outside.
void im2col(const float* x, const ConvGeometry& g, float* cols) {
  const auto ncols = g.cols();
  for (std::int64_t c = 0; c < g.channels; ++c) {
    const float* xc = x + c * g.height * g.width;
    for (std::int64_t i = 0; i < g.kh; ++i) {
      for (std::int64_t j = 0; j < g.kw; ++j) {
        float* row = cols + ((c * g.kh + i) * g.kw + j) * ncols;
        for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
          const std::int64_t iy = oy * g.stride - g.padding + i;
          float* out = row + oy * g.out_w;
          if (iy < 0 || iy >= g.height) {
            std::fill(out, out + g.out_w, 0.0f);
            continue;
          }
          const float* xrow = xc + iy * g.width;
          for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
            const std::int64_t ix = ox * g.stride - g.padding + j;
            out[ox] = (ix >= 0 && ix < g.width) ? xrow[ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_add(const float* cols, const ConvGeometry& g, float* dx) {
  const auto ncols = g.cols();
  for (std::int64_t c = 0; c < g.channels; ++c) {
    float* dxc = dx + c * g.height * g.width;
    for (std::int64_t i = 0; i < g.kh; ++i) {
      for (std::int64_t j = 0; j < g.kw; ++j) {
        const float* row = cols + ((c * g.kh + i) * g.kw + j) * ncols;
        for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
          const std::int64_t iy = oy * g.stride - g.padding + i;
          if (iy < 0 || iy >= g.height) continue;
          float* dxrow = dxc + iy * g.width;
          const float* in = row + oy * g.out_w;
          for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
            const std::int64_t ix = ox * g.stride - g.padding + j;
            if (ix >= 0 && ix < g.width) dxrow[ix] += in[ox];
          }
        }
      }
    }
  }
}

}  // namespace

std::int64_t window_output_size(std::int64_t size, std::int64_t kernel, std::int64_t stride, std::int64_t padding) {
  if (kernel < 1 || stride < 1 || padding < 0) {
    throw ParameterError("window needs kernel >= 1, stride >= 1, padding >= 0");
  }
  const auto padded = size + 2 * padding;
  if (kernel > padded) {
    throw DimensionError("kernel " + std::to_string(kernel) + " exceeds padded extent " + std::to_string(padded));
  }
  return (padded - kernel) / stride + 1;
}

// ---------------------------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, Conv2dOptions opts, Tape* tape) {
  require_rank(x, 4, "conv2d", "input");
  require_rank(w, 4, "conv2d", "weight");
  if (x.dim(1) != w.dim(1)) {
    throw DimensionError("conv2d: input axis 1 (channels) = " + std::to_string(x.dim(1)) +
                         " but weight axis 1 (in_ch) = " + std::to_string(w.dim(1)));
  }
  if (opts.stride < 1 || opts.padding < 0) throw ParameterError("conv2d: stride must be >= 1 and padding >= 0");
  const std::int64_t out_ch = w.dim(0);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_ch)) {
    throw DimensionError("conv2d: bias shape " + shape_to_string(bias.shape()) + " does not match weight axis 0 (" +
                         std::to_string(out_ch) + ")");
  }

  const std::int64_t n = x.dim(0);
  ConvGeometry g{x.dim(1), x.dim(2), x.dim(3), w.dim(2), w.dim(3), opts.stride, opts.padding, 0, 0};
  if (g.kh > g.height + 2 * g.padding || g.kw > g.width + 2 * g.padding) {
    throw DimensionError("conv2d: kernel " + std::to_string(g.kh) + "x" + std::to_string(g.kw) +
                         " exceeds padded input extent on axes 2/3");
  }
  g.out_h = window_output_size(g.height, g.kh, g.stride, g.padding);
  g.out_w = window_output_size(g.width, g.kw, g.stride, g.padding);

  Tensor y = Tensor::zeros({n, out_ch, g.out_h, g.out_w});
  const auto in_plane = g.channels * g.height * g.width;
  const auto out_plane = out_ch * g.cols();
  std::vector<float> cols;
  if (!g.is_pointwise()) cols.resize(static_cast<std::size_t>(g.rows() * g.cols()));

  CMapRM wmat(w.data().data(), out_ch, g.rows());
  for (std::int64_t s = 0; s < n; ++s) {
    const float* xs = x.data().data() + s * in_plane;
    const float* colp = xs;
    if (!g.is_pointwise()) {
      im2col(xs, g, cols.data());
      colp = cols.data();
    }
    MapRM ymat(y.data().data() + s * out_plane, out_ch, g.cols());
    ymat.noalias() = wmat * CMapRM(colp, g.rows(), g.cols());
    if (bias.defined()) {
      for (std::int64_t o = 0; o < out_ch; ++o) ymat.row(o).array() += bias.data()[o];
    }
  }
  check_finite(y, "conv2d");

  if (should_record(tape, {&x, &w, &bias})) {
    tape->record(OpKind::kConv2d, {x, w, bias}, y, [x, w, bias, y, g, n, out_ch]() mutable {
      const auto in_plane = g.channels * g.height * g.width;
      const auto out_plane = out_ch * g.cols();
      const bool need_w = w.requires_grad();
      const bool need_x = x.requires_grad();
      const bool need_b = bias.defined() && bias.requires_grad();
      CMapRM wmat(w.data().data(), out_ch, g.rows());
      std::vector<float> cols;
      if (!g.is_pointwise()) cols.resize(static_cast<std::size_t>(g.rows() * g.cols()));
      MatRM dw;
      if (need_w) dw = MatRM::Zero(out_ch, g.rows());
      MatRM dcols;
      for (std::int64_t s = 0; s < n; ++s) {
        CMapRM dy(y.grad().data() + s * out_plane, out_ch, g.cols());
        const float* xs = x.data().data() + s * in_plane;
        if (need_w) {
          const float* colp = xs;
          if (!g.is_pointwise()) {
            im2col(xs, g, cols.data());
            colp = cols.data();
          }
          dw.noalias() += dy * CMapRM(colp, g.rows(), g.cols()).transpose();
        }
        if (need_x) {
          float* dxs = x.ensure_grad().data() + s * in_plane;
          if (g.is_pointwise()) {
            MapRM(dxs, g.rows(), g.cols()).noalias() += wmat.transpose() * dy;
          } else {
            dcols.noalias() = wmat.transpose() * dy;
            col2im_add(dcols.data(), g, dxs);
          }
        }
        if (need_b) {
          auto db = bias.ensure_grad();
          for (std::int64_t o = 0; o < out_ch; ++o) db[o] += dy.row(o).sum();
        }
      }
      if (need_w) accumulate(w.ensure_grad(), std::span<const float>(dw.data(), dw.size()));
    });
  }
  return y;
}

// ---------------------------------------------------------------------------

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                   Tensor& running_var, BatchNormOptions opts, Tape* tape) {
  require_rank(x, 4, "batchnorm2d", "input");
  const std::int64_t c = x.dim(1);
  for (const Tensor* p : std::initializer_list<const Tensor*>{&gamma, &beta, &running_mean, &running_var}) {
    if (p->rank() != 1 || p->dim(0) != c) {
      throw DimensionError("batchnorm2d: parameter shape " + shape_to_string(p->shape()) +
                           " does not match input axis 1 (channels = " + std::to_string(c) + ")");
    }
  }
  if (!(opts.eps > 0.0f)) throw ParameterError("batchnorm2d: eps must be > 0");
  if (opts.momentum < 0.0f || opts.momentum > 1.0f) throw ParameterError("batchnorm2d: momentum must be in [0,1]");

  const std::int64_t n = x.dim(0);
  const std::int64_t hw = x.dim(2) * x.dim(3);
  const std::int64_t count = n * hw;
  if (opts.training && count < 2) throw DimensionError("batchnorm2d: training mode needs more than one value per channel");

  std::vector<float> mean(static_cast<std::size_t>(c)), invstd(static_cast<std::size_t>(c));
  const float* xd = x.data().data();
  if (opts.training) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      double s = 0.0, ss = 0.0;
      for (std::int64_t b = 0; b < n; ++b) {
        const float* p = xd + (b * c + ch) * hw;
        for (std::int64_t i = 0; i < hw; ++i) s += p[i];
      }
      const double m = s / static_cast<double>(count);
      for (std::int64_t b = 0; b < n; ++b) {
        const float* p = xd + (b * c + ch) * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
          const double d = p[i] - m;
          ss += d * d;
        }
      }
      const double var = ss / static_cast<double>(count);
      mean[ch] = static_cast<float>(m);
      invstd[ch] = static_cast<float>(1.0 / std::sqrt(var + static_cast<double>(opts.eps)));
      const double unbiased = ss / static_cast<double>(count - 1);
      auto rm = running_mean.data();
      auto rv = running_var.data();
      rm[ch] = (1.0f - opts.momentum) * rm[ch] + opts.momentum * static_cast<float>(m);
      rv[ch] = (1.0f - opts.momentum) * rv[ch] + opts.momentum * static_cast<float>(unbiased);
    }
  } else {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      mean[ch] = running_mean.data()[ch];
      invstd[ch] = 1.0f / std::sqrt(running_var.data()[ch] + opts.eps);
    }
  }

  Tensor y = Tensor::zeros(x.shape());
  float* yd = y.data().data();
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const float scale = gamma.data()[ch] * invstd[ch];
      const float shift = beta.data()[ch] - mean[ch] * scale;
      const float* p = xd + (b * c + ch) * hw;
      float* q = yd + (b * c + ch) * hw;
      for (std::int64_t i = 0; i < hw; ++i) q[i] = p[i] * scale + shift;
    }
  }
  check_finite(y, "batchnorm2d");

  if (should_record(tape, {&x, &gamma, &beta})) {
    const bool training = opts.training;
    tape->record(OpKind::kBatchNorm2d, {x, gamma, beta}, y,
                 [x, gamma, beta, y, mean, invstd, n, c, hw, count, training]() mutable {
                   const float* xd = x.data().data();
                   const float* dy = y.grad().data();
                   float* dx = x.requires_grad() ? x.ensure_grad().data() : nullptr;
                   for (std::int64_t ch = 0; ch < c; ++ch) {
                     double sum_dy = 0.0, sum_dy_xhat = 0.0;
                     for (std::int64_t b = 0; b < n; ++b) {
                       const auto off = (b * c + ch) * hw;
                       for (std::int64_t i = 0; i < hw; ++i) {
                         const float xhat = (xd[off + i] - mean[ch]) * invstd[ch];
                         sum_dy += dy[off + i];
                         sum_dy_xhat += static_cast<double>(dy[off + i]) * xhat;
                       }
                     }
                     if (gamma.requires_grad()) gamma.ensure_grad()[ch] += static_cast<float>(sum_dy_xhat);
                     if (beta.requires_grad()) beta.ensure_grad()[ch] += static_cast<float>(sum_dy);
                     if (dx == nullptr) continue;
                     const float g = gamma.data()[ch];
                     if (training) {
                       const double inv_count = 1.0 / static_cast<double>(count);
                       const double mean_dy = sum_dy * inv_count;
                       const double mean_dy_xhat = sum_dy_xhat * inv_count;
                       for (std::int64_t b = 0; b < n; ++b) {
                         const auto off = (b * c + ch) * hw;
                         for (std::int64_t i = 0; i < hw; ++i) {
                           const double xhat = (xd[off + i] - mean[ch]) * invstd[ch];
                           dx[off + i] += static_cast<float>(g * invstd[ch] * (dy[off + i] - mean_dy - xhat * mean_dy_xhat));
                         }
                       }
                     } else {
                       const float k = g * invstd[ch];
                       for (std::int64_t b = 0; b < n; ++b) {
                         const auto off = (b * c + ch) * hw;
                         for (std::int64_t i = 0; i < hw; ++i) dx[off + i] += k * dy[off + i];
                       }
                     }
                   }
                 });
  }
  return y;
}

// ---------------------------------------------------------------------------

Tensor pool2d(const Tensor& x, PoolMode mode, int kernel, int stride, int padding, Tape* tape) {
  require_rank(x, 4, "pool2d", "input");
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);

  if (mode == PoolMode::kGlobalAvg) {
    Tensor y = Tensor::zeros({n, c, 1, 1});
    const std::int64_t hw = h * w;
    for (std::int64_t p = 0; p < n * c; ++p) {
      double s = 0.0;
      const float* src = x.data().data() + p * hw;
      for (std::int64_t i = 0; i < hw; ++i) s += src[i];
      y.data()[p] = static_cast<float>(s / static_cast<double>(hw));
    }
    check_finite(y, "global_avg_pool");
    if (should_record(tape, {&x})) {
      tape->record(OpKind::kGlobalAvgPool, {x}, y, [x, y, n, c, hw]() mutable {
        auto dx = x.ensure_grad();
        const float inv = 1.0f / static_cast<float>(hw);
        for (std::int64_t p = 0; p < n * c; ++p) {
          const float g = y.grad()[p] * inv;
          for (std::int64_t i = 0; i < hw; ++i) dx[p * hw + i] += g;
        }
      });
    }
    return y;
  }

  if (mode != PoolMode::kMax) throw ParameterError("pool2d: invalid mode");
  if (kernel < 1 || stride < 1 || padding < 0) throw ParameterError("pool2d: degenerate window");
  if (padding * 2 > kernel) throw ParameterError("pool2d: padding larger than half the kernel");
  const auto oh = window_output_size(h, kernel, stride, padding);
  const auto ow = window_output_size(w, kernel, stride, padding);

  Tensor y = Tensor::zeros({n, c, oh, ow});
  std::vector<std::int32_t> argmax(static_cast<std::size_t>(n * c * oh * ow));
  const float* xd = x.data().data();
  float* yd = y.data().data();
  for (std::int64_t p = 0; p < n * c; ++p) {
    const float* src = xd + p * h * w;
    for (std::int64_t oy = 0; oy < oh; ++oy) {
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        float best = -std::numeric_limits<float>::infinity();
        std::int32_t best_idx = -1;
        for (int i = 0; i < kernel; ++i) {
          const std::int64_t iy = oy * stride - padding + i;
          if (iy < 0 || iy >= h) continue;
          for (int j = 0; j < kernel; ++j) {
            const std::int64_t ix = ox * stride - padding + j;
            if (ix < 0 || ix >= w) continue;
            const float v = src[iy * w + ix];
            if (best_idx < 0 || v > best) {
              best = v;
              best_idx = static_cast<std::int32_t>(iy * w + ix);
            }
          }
        }
        const auto o = (p * oh + oy) * ow + ox;
        yd[o] = best;
        argmax[static_cast<std::size_t>(o)] = best_idx;
      }
    }
  }
  check_finite(y, "max_pool2d");
  if (should_record(tape, {&x})) {
    tape->record(OpKind::kMaxPool2d, {x}, y, [x, y, argmax = std::move(argmax), n, c, h, w, oh, ow]() mutable {
      auto dx = x.ensure_grad();
      const auto dy = y.grad();
      for (std::int64_t p = 0; p < n * c; ++p) {
        for (std::int64_t o = 0; o < oh * ow; ++o) {
          const auto idx = p * oh * ow + o;
          dx[p * h * w + argmax[static_cast<std::size_t>(idx)]] += dy[idx];
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b, Tape* tape) {
  require_rank(x, 2, "linear", "input");
  require_rank(w, 2, "linear", "weight");
  if (x.dim(1) != w.dim(1)) {
    throw DimensionError("linear: input axis 1 (" + std::to_string(x.dim(1)) + ") != weight axis 1 (" +
                         std::to_string(w.dim(1)) + ")");
  }
  const std::int64_t n = x.dim(0), in = x.dim(1), out = w.dim(0);
  if (b.defined() && (b.rank() != 1 || b.dim(0) != out)) {
    throw DimensionError("linear: bias shape " + shape_to_string(b.shape()) + " does not match weight axis 0 (" +
                         std::to_string(out) + ")");
  }
  Tensor y = Tensor::zeros({n, out});
  MapRM ym(y.data().data(), n, out);
  ym.noalias() = CMapRM(x.data().data(), n, in) * CMapRM(w.data().data(), out, in).transpose();
  if (b.defined()) {
    for (std::int64_t r = 0; r < n; ++r) {
      for (std::int64_t o = 0; o < out; ++o) ym(r, o) += b.data()[o];
    }
  }
  check_finite(y, "linear");
  if (should_record(tape, {&x, &w, &b})) {
    tape->record(OpKind::kLinear, {x, w, b}, y, [x, w, b, y, n, in, out]() mutable {
      CMapRM dy(y.grad().data(), n, out);
      if (x.requires_grad()) {
        MapRM(x.ensure_grad().data(), n, in).noalias() += dy * CMapRM(w.data().data(), out, in);
      }
      if (w.requires_grad()) {
        MapRM(w.ensure_grad().data(), out, in).noalias() += dy.transpose() * CMapRM(x.data().data(), n, in);
      }
      if (b.defined() && b.requires_grad()) {
        auto db = b.ensure_grad();
        for (std::int64_t o = 0; o < out; ++o) db[o] += dy.col(o).sum();
      }
    });
  }
  return y;
}

Tensor relu(const Tensor& x, Tape* tape) {
  Tensor y = Tensor::zeros(x.shape());
  auto xd = x.data();
  auto yd = y.data();
  for (std::size_t i = 0; i < xd.size(); ++i) yd[i] = xd[i] > 0.0f ? xd[i] : 0.0f;
  check_finite(y, "relu");
  if (should_record(tape, {&x})) {
    tape->record(OpKind::kRelu, {x}, y, [x, y]() mutable {
      auto dx = x.ensure_grad();
      auto xd = x.data();
      auto dy = y.grad();
      for (std::size_t i = 0; i < dx.size(); ++i) {
        if (xd[i] > 0.0f) dx[i] += dy[i];
      }
    });
  }
  return y;
}

Tensor dropout(const Tensor& x, float p, bool training, Prng& rng, Tape* tape) {
  if (!(p >= 0.0f && p < 1.0f)) throw ParameterError("dropout: p must be in [0,1), got " + std::to_string(p));
  if (!training) return x;
  const float keep_scale = 1.0f / (1.0f - p);
  std::vector<float> mask(static_cast<std::size_t>(x.numel()));
  for (auto& m : mask) m = rng.uniform() < p ? 0.0f : keep_scale;
  Tensor y = Tensor::zeros(x.shape());
  auto xd = x.data();
  auto yd = y.data();
  for (std::size_t i = 0; i < mask.size(); ++i) yd[i] = xd[i] * mask[i];
  check_finite(y, "dropout");
  if (should_record(tape, {&x})) {
    tape->record(OpKind::kDropout, {x}, y, [x, y, mask = std::move(mask)]() mutable {
      auto dx = x.ensure_grad();
      auto dy = y.grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * mask[i];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------

Tensor softmax(const Tensor& logits) {
  require_rank(logits, 2, "softmax", "logits");
  const std::int64_t n = logits.dim(0), c = logits.dim(1);
  Tensor out = Tensor::zeros(logits.shape());
  for (std::int64_t r = 0; r < n; ++r) {
    const float* z = logits.data().data() + r * c;
    float* p = out.data().data() + r * c;
    const float m = *std::max_element(z, z + c);
    double total = 0.0;
    for (std::int64_t k = 0; k < c; ++k) total += std::exp(static_cast<double>(z[k]) - m);
    for (std::int64_t k = 0; k < c; ++k) p[k] = static_cast<float>(std::exp(static_cast<double>(z[k]) - m) / total);
  }
  return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> targets, Tape* tape) {
  require_rank(logits, 2, "softmax_cross_entropy", "logits");
  const std::int64_t n = logits.dim(0), c = logits.dim(1);
  if (static_cast<std::int64_t>(targets.size()) != n) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(targets.size()) + " targets for batch of " +
                         std::to_string(n));
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0 || targets[i] >= c) {
      throw IndexError("softmax_cross_entropy: target " + std::to_string(targets[i]) + " at position " +
                       std::to_string(i) + " outside [0," + std::to_string(c) + ")");
    }
  }
  constexpr double kMinProb = 1e-12;
  Tensor probs = softmax(logits);
  double total = 0.0;
  for (std::int64_t r = 0; r < n; ++r) {
    // Recomputed in double so the loss is not limited by f32 probabilities.
    const float* z = logits.data().data() + r * c;
    const double m = *std::max_element(z, z + c);
    double denom = 0.0;
    for (std::int64_t k = 0; k < c; ++k) denom += std::exp(z[k] - m);
    const double log_p = (z[targets[static_cast<std::size_t>(r)]] - m) - std::log(denom);
    total += -std::max(log_p, std::log(kMinProb));
  }
  Tensor loss = Tensor::scalar(static_cast<float>(total / static_cast<double>(n)));
  check_finite(loss, "softmax_cross_entropy");
  if (should_record(tape, {&logits})) {
    std::vector<int> tgt(targets.begin(), targets.end());
    tape->record(OpKind::kSoftmaxCrossEntropy, {logits}, loss,
                 [logits, loss, probs, tgt = std::move(tgt), n, c]() mutable {
                   auto dz = logits.ensure_grad();
                   const float g = loss.grad()[0] / static_cast<float>(n);
                   auto p = probs.data();
                   for (std::int64_t r = 0; r < n; ++r) {
                     for (std::int64_t k = 0; k < c; ++k) {
                       const float onehot = (k == tgt[static_cast<std::size_t>(r)]) ? 1.0f : 0.0f;
                       dz[r * c + k] += g * (p[r * c + k] - onehot);
                     }
                   }
                 });
  }
  return loss;
}

// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shapes " + shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()) + " differ");
  }
  Tensor y = Tensor::zeros(a.shape());
  auto ad = a.data();
  auto bd = b.data();
  auto yd = y.data();
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] = ad[i] + bd[i];
  check_finite(y, "add");
  if (should_record(tape, {&a, &b})) {
    tape->record(OpKind::kAdd, {a, b}, y, [a, b, y]() mutable {
      if (a.requires_grad()) accumulate(a.ensure_grad(), y.grad());
      if (b.requires_grad()) accumulate(b.ensure_grad(), y.grad());
    });
  }
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b, Tape* tape) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mul: shapes " + shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()) + " differ");
  }
  Tensor y = Tensor::zeros(a.shape());
  auto ad = a.data();
  auto bd = b.data();
  auto yd = y.data();
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] = ad[i] * bd[i];
  check_finite(y, "mul");
  if (should_record(tape, {&a, &b})) {
    tape->record(OpKind::kMul, {a, b}, y, [a, b, y]() mutable {
      auto dy = y.grad();
      // Fetch both values first: a and b may be the same tensor.
      if (a.requires_grad()) {
        auto da = a.ensure_grad();
        auto bd = b.data();
        for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy[i] * bd[i];
      }
      if (b.requires_grad()) {
        auto db = b.ensure_grad();
        auto ad = a.data();
        for (std::size_t i = 0; i < db.size(); ++i) db[i] += dy[i] * ad[i];
      }
    });
  }
  return y;
}

Tensor sum(const Tensor& x, Tape* tape) {
  double s = 0.0;
  for (float v : x.data()) s += v;
  Tensor y = Tensor::scalar(static_cast<float>(s));
  check_finite(y, "sum");
  if (should_record(tape, {&x})) {
    tape->record(OpKind::kSum, {x}, y, [x, y]() mutable {
      const float g = y.grad()[0];
      for (auto& d : x.ensure_grad()) d += g;
    });
  }
  return y;
}

Tensor flatten(const Tensor& x) {
  if (x.rank() < 1) throw DimensionError("flatten: needs rank >= 1");
  return x.reshaped({x.dim(0), x.numel() / x.dim(0)});
}

}  // namespace maskface
