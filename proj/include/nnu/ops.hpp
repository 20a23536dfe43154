#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "nnu/tape.hpp"
#include "nnu/tensor.hpp"

namespace nnu {

enum class Padding { Same, Valid };
enum class Activation { Linear, Relu, Sigmoid, Tanh };
enum class BnMode { Train, Infer };

namespace detail {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const MatRM<T>>;

template <typename T>
inline void finish_op(GradTape<T>* tape, const Tensor<T>& out,
                      const char* name) {
  if (tape && tape->check_finite) throw_if_nonfinite(out, name);
}

template <typename T>
inline bool taped(GradTape<T>* tape, bool any_requires_grad) {
  return tape != nullptr && any_requires_grad;
}

template <typename T>
inline T stable_sigmoid(T x) {
  if (x >= T(0)) {
    const T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

struct ConvDims {
  std::size_t n, din, hin, win, cin;
  std::size_t kx, ky, kz, cout;
  std::size_t dout, hout, wout;
  std::ptrdiff_t pad_d, pad_h, pad_w;  // leading pad per spatial axis
  std::size_t stride;
};

inline std::size_t conv_out_dim(std::size_t in, std::size_t k,
                                std::size_t stride, Padding pad) {
  if (pad == Padding::Same) return (in + stride - 1) / stride;
  return (in - k) / stride + 1;
}

inline std::ptrdiff_t conv_lead_pad(std::size_t in, std::size_t out,
                                    std::size_t k, std::size_t stride,
                                    Padding pad) {
  if (pad == Padding::Valid) return 0;
  const std::ptrdiff_t total =
      std::max<std::ptrdiff_t>(0, std::ptrdiff_t((out - 1) * stride + k) -
                                      std::ptrdiff_t(in));
  return total / 2;
}

// One sample's patches, rows = dout*hout*wout, cols = kx*ky*kz*cin.
// Column order matches the row-major reshape of a [X,Y,Z,Cin,Cout] kernel.
template <typename T>
void im2col(const T* in, const ConvDims& d, MatRM<T>& cols) {
  const std::size_t ncols = d.kx * d.ky * d.kz * d.cin;
  cols.resize(
      static_cast<Eigen::Index>(d.dout * d.hout * d.wout),
      static_cast<Eigen::Index>(ncols));
  std::size_t row = 0;
  for (std::size_t od = 0; od < d.dout; ++od) {
    for (std::size_t oh = 0; oh < d.hout; ++oh) {
      for (std::size_t ow = 0; ow < d.wout; ++ow, ++row) {
        T* dst = cols.data() + row * ncols;
        for (std::size_t x = 0; x < d.kx; ++x) {
          const std::ptrdiff_t id = std::ptrdiff_t(od * d.stride) - d.pad_d + std::ptrdiff_t(x);
          for (std::size_t y = 0; y < d.ky; ++y) {
            const std::ptrdiff_t ih = std::ptrdiff_t(oh * d.stride) - d.pad_h + std::ptrdiff_t(y);
            for (std::size_t z = 0; z < d.kz; ++z) {
              const std::ptrdiff_t iw = std::ptrdiff_t(ow * d.stride) - d.pad_w + std::ptrdiff_t(z);
              if (id >= 0 && id < std::ptrdiff_t(d.din) && ih >= 0 &&
                  ih < std::ptrdiff_t(d.hin) && iw >= 0 &&
                  iw < std::ptrdiff_t(d.win)) {
                const T* src =
                    in + ((std::size_t(id) * d.hin + std::size_t(ih)) * d.win +
                          std::size_t(iw)) *
                             d.cin;
                for (std::size_t c = 0; c < d.cin; ++c) *dst++ = src[c];
              } else {
                for (std::size_t c = 0; c < d.cin; ++c) *dst++ = T(0);
              }
            }
          }
        }
      }
    }
  }
}

// Scatter-add of patch gradients back onto one sample's input gradient.
template <typename T>
void col2im_add(const MatRM<T>& cols, const ConvDims& d, T* gin) {
  const std::size_t ncols = d.kx * d.ky * d.kz * d.cin;
  std::size_t row = 0;
  for (std::size_t od = 0; od < d.dout; ++od) {
    for (std::size_t oh = 0; oh < d.hout; ++oh) {
      for (std::size_t ow = 0; ow < d.wout; ++ow, ++row) {
        const T* src = cols.data() + row * ncols;
        for (std::size_t x = 0; x < d.kx; ++x) {
          const std::ptrdiff_t id = std::ptrdiff_t(od * d.stride) - d.pad_d + std::ptrdiff_t(x);
          for (std::size_t y = 0; y < d.ky; ++y) {
            const std::ptrdiff_t ih = std::ptrdiff_t(oh * d.stride) - d.pad_h + std::ptrdiff_t(y);
            for (std::size_t z = 0; z < d.kz; ++z, src += d.cin) {
              const std::ptrdiff_t iw = std::ptrdiff_t(ow * d.stride) - d.pad_w + std::ptrdiff_t(z);
              if (id < 0 || id >= std::ptrdiff_t(d.din) || ih < 0 ||
                  ih >= std::ptrdiff_t(d.hin) || iw < 0 ||
                  iw >= std::ptrdiff_t(d.win))
                continue;
              T* dst =
                  gin + ((std::size_t(id) * d.hin + std::size_t(ih)) * d.win +
                         std::size_t(iw)) *
                            d.cin;
              for (std::size_t c = 0; c < d.cin; ++c) dst[c] += src[c];
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv3d: input [N,D,H,W,Cin], kernel [X,Y,Z,Cin,Cout], bias [Cout].
// Triple-sum convolution with per-feature-map bias added pre-nonlinearity.
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> conv3d(GradTape<T>* tape, const Tensor<T>& input,
                 const Tensor<T>& kernel, const Tensor<T>& bias,
                 Padding padding = Padding::Same, std::size_t stride = 1) {
  if (input.rank() != 5 || kernel.rank() != 5)
    throw DimensionError("conv3d expects rank-5 input and kernel, got " +
                         shape_str(input.shape()) + " and " +
                         shape_str(kernel.shape()));
  if (stride == 0) throw UsageError("conv3d stride must be positive");

  detail::ConvDims d;
  d.n = input.dim(0);
  d.din = input.dim(1);
  d.hin = input.dim(2);
  d.win = input.dim(3);
  d.cin = input.dim(4);
  d.kx = kernel.dim(0);
  d.ky = kernel.dim(1);
  d.kz = kernel.dim(2);
  d.cout = kernel.dim(4);
  d.stride = stride;

  if (kernel.dim(3) != d.cin)
    throw DimensionError("conv3d channel mismatch: input " +
                         shape_str(input.shape()) + " vs kernel " +
                         shape_str(kernel.shape()));
  if (bias.rank() != 1 || bias.dim(0) != d.cout)
    throw DimensionError("conv3d bias shape " + shape_str(bias.shape()) +
                         " does not match kernel " + shape_str(kernel.shape()));
  if (padding == Padding::Valid &&
      (d.kx > d.din || d.ky > d.hin || d.kz > d.win))
    throw DimensionError("conv3d kernel " + shape_str(kernel.shape()) +
                         " exceeds input " + shape_str(input.shape()));

  d.dout = detail::conv_out_dim(d.din, d.kx, stride, padding);
  d.hout = detail::conv_out_dim(d.hin, d.ky, stride, padding);
  d.wout = detail::conv_out_dim(d.win, d.kz, stride, padding);
  d.pad_d = detail::conv_lead_pad(d.din, d.dout, d.kx, stride, padding);
  d.pad_h = detail::conv_lead_pad(d.hin, d.hout, d.ky, stride, padding);
  d.pad_w = detail::conv_lead_pad(d.win, d.wout, d.kz, stride, padding);

  Tensor<T> out({d.n, d.dout, d.hout, d.wout, d.cout});

  const std::size_t rows = d.dout * d.hout * d.wout;
  const std::size_t cols = d.kx * d.ky * d.kz * d.cin;
  const std::size_t in_stride = d.din * d.hin * d.win * d.cin;
  const std::size_t out_stride = rows * d.cout;

  detail::CMapRM<T> kmat(kernel.data(), static_cast<Eigen::Index>(cols),
                         static_cast<Eigen::Index>(d.cout));
  detail::CMapRM<T> bvec(bias.data(), 1, static_cast<Eigen::Index>(d.cout));

  detail::MatRM<T> patch;
  for (std::size_t n = 0; n < d.n; ++n) {
    detail::im2col(input.data() + n * in_stride, d, patch);
    detail::MapRM<T> omat(out.data() + n * out_stride,
                          static_cast<Eigen::Index>(rows),
                          static_cast<Eigen::Index>(d.cout));
    omat.noalias() = patch * kmat;
    omat.rowwise() += bvec.row(0);
  }
  detail::finish_op(tape, out, "conv3d");

  const bool rg =
      input.requires_grad() || kernel.requires_grad() || bias.requires_grad();
  if (detail::taped(tape, rg)) {
    out.set_requires_grad(true);
    Tensor<T> x = input, k = kernel, b = bias, o = out;
    tape->record([x, k, b, o, d, rows, cols, in_stride, out_stride]() mutable {
      detail::CMapRM<T> up(o.grad().data(), static_cast<Eigen::Index>(d.n * rows),
                           static_cast<Eigen::Index>(d.cout));
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t c = 0; c < d.cout; ++c) {
          double acc = 0;
          for (std::size_t r = 0; r < d.n * rows; ++r)
            acc += static_cast<double>(up(static_cast<Eigen::Index>(r),
                                          static_cast<Eigen::Index>(c)));
          gb[c] += static_cast<T>(acc);
        }
      }
      detail::MatRM<T> patch;
      detail::CMapRM<T> kmat(k.data(), static_cast<Eigen::Index>(cols),
                             static_cast<Eigen::Index>(d.cout));
      detail::MapRM<T> gk(k.grad().data(), static_cast<Eigen::Index>(cols),
                          static_cast<Eigen::Index>(d.cout));
      detail::MatRM<T> gpatch;
      for (std::size_t n = 0; n < d.n; ++n) {
        detail::CMapRM<T> un(o.grad().data() + n * out_stride,
                             static_cast<Eigen::Index>(rows),
                             static_cast<Eigen::Index>(d.cout));
        if (k.requires_grad() || x.requires_grad())
          detail::im2col(x.data() + n * in_stride, d, patch);
        if (k.requires_grad()) gk.noalias() += patch.transpose() * un;
        if (x.requires_grad()) {
          gpatch.noalias() = un * kmat.transpose();
          detail::col2im_add(gpatch, d, x.grad().data() + n * in_stride);
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// maxpool3d: disjoint 2x2x2 blocks, stride 2. Backward routes the gradient to
// the argmax, first (lowest linear index) winner on ties.
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> maxpool3d(GradTape<T>* tape, const Tensor<T>& input) {
  if (input.rank() != 5)
    throw DimensionError("maxpool3d expects rank-5 input, got " +
                         shape_str(input.shape()));
  const std::size_t n = input.dim(0), din = input.dim(1), hin = input.dim(2),
                    win = input.dim(3), c = input.dim(4);
  if (din % 2 || hin % 2 || win % 2)
    throw DimensionError("maxpool3d needs even spatial dims, got " +
                         shape_str(input.shape()));
  const std::size_t dout = din / 2, hout = hin / 2, wout = win / 2;
  Tensor<T> out({n, dout, hout, wout, c});
  auto argmax = std::make_shared<std::vector<std::uint64_t>>(out.size());

  const T* in = input.data();
  T* op = out.data();
  std::size_t oi = 0;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t od = 0; od < dout; ++od) {
      for (std::size_t oh = 0; oh < hout; ++oh) {
        for (std::size_t ow = 0; ow < wout; ++ow) {
          for (std::size_t ch = 0; ch < c; ++ch, ++oi) {
            T best{};
            std::uint64_t besti = 0;
            bool first = true;
            for (std::size_t dd = 0; dd < 2; ++dd) {
              for (std::size_t hh = 0; hh < 2; ++hh) {
                for (std::size_t ww = 0; ww < 2; ++ww) {
                  const std::size_t idx =
                      (((b * din + od * 2 + dd) * hin + oh * 2 + hh) * win +
                       ow * 2 + ww) *
                          c +
                      ch;
                  if (first || in[idx] > best) {
                    best = in[idx];
                    besti = idx;
                    first = false;
                  }
                }
              }
            }
            op[oi] = best;
            (*argmax)[oi] = besti;
          }
        }
      }
    }
  }
  detail::finish_op(tape, out, "maxpool3d");

  if (detail::taped(tape, input.requires_grad())) {
    out.set_requires_grad(true);
    Tensor<T> x = input, o = out;
    tape->record([x, o, argmax]() mutable {
      auto& gx = x.grad();
      const auto& go = o.grad();
      for (std::size_t i = 0; i < go.size(); ++i)
        gx[(*argmax)[i]] += go[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// batchnorm over [N,D,H,W,C]: per-channel normalization across batch and
// spatial axes. Train mode uses batch statistics (biased variance,
// eps-stabilized) and updates running stats by EMA; infer mode reads the
// running stats.
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> batchnorm(GradTape<T>* tape, const Tensor<T>& input,
                    const Tensor<T>& gamma, const Tensor<T>& beta,
                    Tensor<T>& run_mean, Tensor<T>& run_var, BnMode mode,
                    double eps = 1e-5, double momentum = 0.9) {
  if (input.rank() != 5)
    throw DimensionError("batchnorm expects rank-5 input, got " +
                         shape_str(input.shape()));
  const std::size_t c = input.dim(4);
  if (gamma.size() != c || beta.size() != c)
    throw DimensionError("batchnorm gamma/beta length != channel count " +
                         std::to_string(c));
  if (mode == BnMode::Train && input.dim(0) < 2)
    throw UsageError("batchnorm train mode needs batch size >= 2");

  const std::size_t total = input.size();
  const std::size_t m = total / c;  // reduce count per channel

  auto mean = std::make_shared<std::vector<double>>(c, 0.0);
  auto invstd = std::make_shared<std::vector<double>>(c, 0.0);

  if (mode == BnMode::Train) {
    std::vector<double> sum(c, 0.0), sq(c, 0.0);
    const T* in = input.data();
    for (std::size_t i = 0; i < total; i += c)
      for (std::size_t ch = 0; ch < c; ++ch) sum[ch] += in[i + ch];
    for (std::size_t ch = 0; ch < c; ++ch) (*mean)[ch] = sum[ch] / double(m);
    for (std::size_t i = 0; i < total; i += c)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double d = in[i + ch] - (*mean)[ch];
        sq[ch] += d * d;
      }
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double var = sq[ch] / double(m);
      (*invstd)[ch] = 1.0 / std::sqrt(var + eps);
      run_mean[ch] = static_cast<T>(momentum * run_mean[ch] +
                                    (1.0 - momentum) * (*mean)[ch]);
      run_var[ch] =
          static_cast<T>(momentum * run_var[ch] + (1.0 - momentum) * var);
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      (*mean)[ch] = run_mean[ch];
      (*invstd)[ch] = 1.0 / std::sqrt(double(run_var[ch]) + eps);
    }
  }

  Tensor<T> out(input.shape());
  {
    const T* in = input.data();
    T* op = out.data();
    for (std::size_t i = 0; i < total; i += c)
      for (std::size_t ch = 0; ch < c; ++ch)
        op[i + ch] = static_cast<T>(
            double(gamma[ch]) * ((in[i + ch] - (*mean)[ch]) * (*invstd)[ch]) +
            double(beta[ch]));
  }
  detail::finish_op(tape, out, "batchnorm");

  const bool rg = input.requires_grad() || gamma.requires_grad() ||
                  beta.requires_grad();
  if (detail::taped(tape, rg)) {
    out.set_requires_grad(true);
    Tensor<T> x = input, g = gamma, bt = beta, o = out;
    tape->record([x, g, bt, o, mean, invstd, m, c, mode]() mutable {
      const auto& go = o.grad();
      const T* in = x.data();
      const std::size_t total = x.size();
      // per-channel reductions
      std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
      for (std::size_t i = 0; i < total; i += c)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double dy = go[i + ch];
          const double xhat = (in[i + ch] - (*mean)[ch]) * (*invstd)[ch];
          sum_dy[ch] += dy;
          sum_dy_xhat[ch] += dy * xhat;
        }
      if (bt.requires_grad()) {
        auto& gb = bt.grad();
        for (std::size_t ch = 0; ch < c; ++ch)
          gb[ch] += static_cast<T>(sum_dy[ch]);
      }
      if (g.requires_grad()) {
        auto& gg = g.grad();
        for (std::size_t ch = 0; ch < c; ++ch)
          gg[ch] += static_cast<T>(sum_dy_xhat[ch]);
      }
      if (x.requires_grad()) {
        auto& gx = x.grad();
        if (mode == BnMode::Train) {
          for (std::size_t i = 0; i < total; i += c)
            for (std::size_t ch = 0; ch < c; ++ch) {
              const double dy = go[i + ch];
              const double xhat = (in[i + ch] - (*mean)[ch]) * (*invstd)[ch];
              const double dx =
                  double(g[ch]) * (*invstd)[ch] *
                  (dy - sum_dy[ch] / double(m) -
                   xhat * sum_dy_xhat[ch] / double(m));
              gx[i + ch] += static_cast<T>(dx);
            }
        } else {
          for (std::size_t i = 0; i < total; i += c)
            for (std::size_t ch = 0; ch < c; ++ch)
              gx[i + ch] += static_cast<T>(double(go[i + ch]) *
                                           double(g[ch]) * (*invstd)[ch]);
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// global_average_pool: [N,D,H,W,C] -> [N,C], mean over spatial positions.
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> global_average_pool(GradTape<T>* tape, const Tensor<T>& input) {
  if (input.rank() != 5)
    throw DimensionError("global_average_pool expects rank-5 input, got " +
                         shape_str(input.shape()));
  const std::size_t n = input.dim(0), c = input.dim(4);
  const std::size_t spatial = input.dim(1) * input.dim(2) * input.dim(3);
  Tensor<T> out({n, c});
  const T* in = input.data();
  for (std::size_t b = 0; b < n; ++b) {
    std::vector<double> acc(c, 0.0);
    const T* base = in + b * spatial * c;
    for (std::size_t s = 0; s < spatial; ++s)
      for (std::size_t ch = 0; ch < c; ++ch) acc[ch] += base[s * c + ch];
    for (std::size_t ch = 0; ch < c; ++ch)
      out[b * c + ch] = static_cast<T>(acc[ch] / double(spatial));
  }
  detail::finish_op(tape, out, "global_average_pool");

  if (detail::taped(tape, input.requires_grad())) {
    out.set_requires_grad(true);
    Tensor<T> x = input, o = out;
    tape->record([x, o, n, c, spatial]() mutable {
      auto& gx = x.grad();
      const auto& go = o.grad();
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t s = 0; s < spatial; ++s)
          for (std::size_t ch = 0; ch < c; ++ch)
            gx[(b * spatial + s) * c + ch] +=
                static_cast<T>(double(go[b * c + ch]) / double(spatial));
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// affine: x [N,F] * w [F,U] + b [U]
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> affine(GradTape<T>* tape, const Tensor<T>& x, const Tensor<T>& w,
                 const Tensor<T>& b) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0))
    throw DimensionError("affine shape mismatch: x " + shape_str(x.shape()) +
                         " vs w " + shape_str(w.shape()));
  const std::size_t n = x.dim(0), f = x.dim(1), u = w.dim(1);
  if (b.size() != u)
    throw DimensionError("affine bias shape " + shape_str(b.shape()) +
                         " does not match w " + shape_str(w.shape()));
  Tensor<T> out({n, u});
  detail::CMapRM<T> xm(x.data(), static_cast<Eigen::Index>(n),
                       static_cast<Eigen::Index>(f));
  detail::CMapRM<T> wm(w.data(), static_cast<Eigen::Index>(f),
                       static_cast<Eigen::Index>(u));
  detail::CMapRM<T> bm(b.data(), 1, static_cast<Eigen::Index>(u));
  detail::MapRM<T> om(out.data(), static_cast<Eigen::Index>(n),
                      static_cast<Eigen::Index>(u));
  om.noalias() = xm * wm;
  om.rowwise() += bm.row(0);
  detail::finish_op(tape, out, "affine");

  const bool rg = x.requires_grad() || w.requires_grad() || b.requires_grad();
  if (detail::taped(tape, rg)) {
    out.set_requires_grad(true);
    Tensor<T> xt = x, wt = w, bt = b, o = out;
    tape->record([xt, wt, bt, o, n, f, u]() mutable {
      detail::CMapRM<T> up(o.grad().data(), static_cast<Eigen::Index>(n),
                           static_cast<Eigen::Index>(u));
      detail::CMapRM<T> xm(xt.data(), static_cast<Eigen::Index>(n),
                           static_cast<Eigen::Index>(f));
      detail::CMapRM<T> wm(wt.data(), static_cast<Eigen::Index>(f),
                           static_cast<Eigen::Index>(u));
      if (xt.requires_grad()) {
        detail::MapRM<T> gx(xt.grad().data(), static_cast<Eigen::Index>(n),
                            static_cast<Eigen::Index>(f));
        gx.noalias() += up * wm.transpose();
      }
      if (wt.requires_grad()) {
        detail::MapRM<T> gw(wt.grad().data(), static_cast<Eigen::Index>(f),
                            static_cast<Eigen::Index>(u));
        gw.noalias() += xm.transpose() * up;
      }
      if (bt.requires_grad()) {
        auto& gb = bt.grad();
        for (std::size_t j = 0; j < u; ++j) {
          double acc = 0;
          for (std::size_t i = 0; i < n; ++i)
            acc += up(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
          gb[j] += static_cast<T>(acc);
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// pointwise activations
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> relu(GradTape<T>* tape, const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = x[i] > T(0) ? x[i] : T(0);
  detail::finish_op(tape, out, "relu");
  if (detail::taped(tape, x.requires_grad())) {
    out.set_requires_grad(true);
    Tensor<T> xt = x, o = out;
    tape->record([xt, o]() mutable {
      auto& gx = xt.grad();
      const auto& go = o.grad();
      for (std::size_t i = 0; i < gx.size(); ++i)
        if (xt[i] > T(0)) gx[i] += go[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> sigmoid(GradTape<T>* tape, const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = detail::stable_sigmoid(x[i]);
  detail::finish_op(tape, out, "sigmoid");
  if (detail::taped(tape, x.requires_grad())) {
    out.set_requires_grad(true);
    Tensor<T> xt = x, o = out;
    tape->record([xt, o]() mutable {
      auto& gx = xt.grad();
      const auto& go = o.grad();
      for (std::size_t i = 0; i < gx.size(); ++i)
        gx[i] += go[i] * o[i] * (T(1) - o[i]);
    });
  }
  return out;
}

template <typename T>
Tensor<T> tanh_act(GradTape<T>* tape, const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
  detail::finish_op(tape, out, "tanh");
  if (detail::taped(tape, x.requires_grad())) {
    out.set_requires_grad(true);
    Tensor<T> xt = x, o = out;
    tape->record([xt, o]() mutable {
      auto& gx = xt.grad();
      const auto& go = o.grad();
      for (std::size_t i = 0; i < gx.size(); ++i)
        gx[i] += go[i] * (T(1) - o[i] * o[i]);
    });
  }
  return out;
}

template <typename T>
Tensor<T> activate(GradTape<T>* tape, const Tensor<T>& x, Activation act) {
  switch (act) {
    case Activation::Linear:
      return x;
    case Activation::Relu:
      return relu(tape, x);
    case Activation::Sigmoid:
      return sigmoid(tape, x);
    case Activation::Tanh:
      return tanh_act(tape, x);
  }
  throw UsageError("unknown activation");
}

// dense: affine map then pointwise nonlinearity.
template <typename T>
Tensor<T> dense(GradTape<T>* tape, const Tensor<T>& x, const Tensor<T>& w,
                const Tensor<T>& b, Activation act = Activation::Linear) {
  return activate(tape, affine(tape, x, w, b), act);
}

// ---------------------------------------------------------------------------
// elementwise arithmetic
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> add(GradTape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw DimensionError("add shape mismatch: " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  detail::finish_op(tape, out, "add");
  if (detail::taped(tape, a.requires_grad() || b.requires_grad())) {
    out.set_requires_grad(true);
    Tensor<T> at = a, bt = b, o = out;
    tape->record([at, bt, o]() mutable {
      const auto& go = o.grad();
      if (at.requires_grad()) {
        auto& ga = at.grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
      }
      if (bt.requires_grad()) {
        auto& gb = bt.grad();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(GradTape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw DimensionError("mul shape mismatch: " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  detail::finish_op(tape, out, "mul");
  if (detail::taped(tape, a.requires_grad() || b.requires_grad())) {
    out.set_requires_grad(true);
    Tensor<T> at = a, bt = b, o = out;
    tape->record([at, bt, o]() mutable {
      const auto& go = o.grad();
      if (at.requires_grad()) {
        auto& ga = at.grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * bt[i];
      }
      if (bt.requires_grad()) {
        auto& gb = bt.grad();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i] * at[i];
      }
    });
  }
  return out;
}

// ca*a + cb*b, same shapes.
template <typename T>
Tensor<T> weighted_sum(GradTape<T>* tape, T ca, const Tensor<T>& a, T cb,
                       const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw DimensionError("weighted_sum shape mismatch: " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ca * a[i] + cb * b[i];
  detail::finish_op(tape, out, "weighted_sum");
  if (detail::taped(tape, a.requires_grad() || b.requires_grad())) {
    out.set_requires_grad(true);
    Tensor<T> at = a, bt = b, o = out;
    tape->record([at, bt, o, ca, cb]() mutable {
      const auto& go = o.grad();
      if (at.requires_grad()) {
        auto& ga = at.grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += ca * go[i];
      }
      if (bt.requires_grad()) {
        auto& gb = bt.grad();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += cb * go[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(GradTape<T>* tape, const Tensor<T>& x, T c) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * x[i];
  detail::finish_op(tape, out, "scale");
  if (detail::taped(tape, x.requires_grad())) {
    out.set_requires_grad(true);
    Tensor<T> xt = x, o = out;
    tape->record([xt, o, c]() mutable {
      auto& gx = xt.grad();
      const auto& go = o.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += c * go[i];
    });
  }
  return out;
}

// Sum of all entries -> scalar [1]. Accumulated in double.
template <typename T>
Tensor<T> reduce_sum(GradTape<T>* tape, const Tensor<T>& x) {
  Tensor<T> out({1});
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i];
  out[0] = static_cast<T>(acc);
  detail::finish_op(tape, out, "reduce_sum");
  if (detail::taped(tape, x.requires_grad())) {
    out.set_requires_grad(true);
    Tensor<T> xt = x, o = out;
    tape->record([xt, o]() mutable {
      auto& gx = xt.grad();
      const T up = o.grad()[0];
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += up;
    });
  }
  return out;
}

// [N,Fa] ++ [N,Fb] -> [N,Fa+Fb]
template <typename T>
Tensor<T> concat_cols(GradTape<T>* tape, const Tensor<T>& a,
                      const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
    throw DimensionError("concat_cols shape mismatch: " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t n = a.dim(0), fa = a.dim(1), fb = b.dim(1);
  Tensor<T> out({n, fa + fb});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < fa; ++j) out[i * (fa + fb) + j] = a[i * fa + j];
    for (std::size_t j = 0; j < fb; ++j)
      out[i * (fa + fb) + fa + j] = b[i * fb + j];
  }
  detail::finish_op(tape, out, "concat_cols");
  if (detail::taped(tape, a.requires_grad() || b.requires_grad())) {
    out.set_requires_grad(true);
    Tensor<T> at = a, bt = b, o = out;
    tape->record([at, bt, o, n, fa, fb]() mutable {
      const auto& go = o.grad();
      if (at.requires_grad()) {
        auto& ga = at.grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < fa; ++j)
            ga[i * fa + j] += go[i * (fa + fb) + j];
      }
      if (bt.requires_grad()) {
        auto& gb = bt.grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < fb; ++j)
            gb[i * fb + j] += go[i * (fa + fb) + fa + j];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// LSTM cell. Gates are computed from the concatenation [A_prev, x_t]:
//   cand = tanh(W_c [A,x] + b_c)
//   Gu, Gf, Go = sigmoid(W_* [A,x] + b_*)
//   C_t = Gu (*) cand + Gf (*) C_prev
//   A_t = Go (*) tanh(C_t)
// ---------------------------------------------------------------------------
template <typename T>
struct LstmCellParams {
  Tensor<T> w_cand, w_update, w_forget, w_output;  // [(H+F), H]
  Tensor<T> b_cand, b_update, b_forget, b_output;  // [H]
};

template <typename T>
std::pair<Tensor<T>, Tensor<T>> lstm_cell(GradTape<T>* tape,
                                          const Tensor<T>& x_t,
                                          const Tensor<T>& a_prev,
                                          const Tensor<T>& c_prev,
                                          const LstmCellParams<T>& p) {
  if (x_t.rank() != 2 || a_prev.rank() != 2 || c_prev.rank() != 2)
    throw DimensionError("lstm_cell expects rank-2 [batch, features] inputs");
  const std::size_t concat_len = a_prev.dim(1) + x_t.dim(1);
  const std::size_t hidden = a_prev.dim(1);
  for (const Tensor<T>* w :
       {&p.w_cand, &p.w_update, &p.w_forget, &p.w_output}) {
    if (w->dim(0) != concat_len || w->dim(1) != hidden)
      throw DimensionError("lstm_cell hidden-size mismatch: weights " +
                           shape_str(w->shape()) + " vs concat width " +
                           std::to_string(concat_len) + " and hidden " +
                           std::to_string(hidden));
  }
  if (c_prev.dim(1) != hidden)
    throw DimensionError("lstm_cell hidden-size mismatch: C_prev " +
                         shape_str(c_prev.shape()));

  Tensor<T> za = concat_cols(tape, a_prev, x_t);
  Tensor<T> cand = tanh_act(tape, affine(tape, za, p.w_cand, p.b_cand));
  Tensor<T> gu = sigmoid(tape, affine(tape, za, p.w_update, p.b_update));
  Tensor<T> gf = sigmoid(tape, affine(tape, za, p.w_forget, p.b_forget));
  Tensor<T> go = sigmoid(tape, affine(tape, za, p.w_output, p.b_output));
  Tensor<T> c_t =
      add(tape, mul(tape, gu, cand), mul(tape, gf, c_prev));
  Tensor<T> a_t = mul(tape, go, tanh_act(tape, c_t));
  return {a_t, c_t};
}

}  // namespace nnu
