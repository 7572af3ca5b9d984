#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "realgait/nn/tensor.hpp"

namespace realgait::nn {

enum class InitKind {
  he_conv,               // normal(0, sqrt(2 / fan_in))
  xavier,                // normal(0, sqrt(2 / (fan_in + fan_out)))
  zero,
  bn_scale,              // ones
  identity_affine_bias,  // (1, 0, 0, 0, 1, 0)
};

template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value = nullptr;
  Tensor<T>* grad = nullptr;
  InitKind init = InitKind::zero;
  int fan_in = 0;
  int fan_out = 0;
};

// Persistent non-learnable state (batch-norm running statistics).
template <typename T>
struct BufferRef {
  std::string name;
  Tensor<T>* value = nullptr;
};

template <typename T>
using MatrixRM =
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatrixRM<T>>;
template <typename T>
using ConstMapRM = Eigen::Map<const MatrixRM<T>>;

inline int conv_out_size(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

// ---------------------------------------------------------------------------
// Conv2d: NCHW, im2col + GEMM. Backward recomputes the column buffer from the
// cached input instead of storing it.
// ---------------------------------------------------------------------------
template <typename T>
class Conv2d {
 public:
  Conv2d(int in_c, int out_c, int kernel, int stride, int pad, bool bias,
         InitKind weight_init = InitKind::he_conv)
      : in_c_(in_c),
        out_c_(out_c),
        kernel_(kernel),
        stride_(stride),
        pad_(pad),
        has_bias_(bias),
        weight_init_(weight_init),
        weight_({out_c, in_c, kernel, kernel}),
        weight_grad_({out_c, in_c, kernel, kernel}) {
    if (has_bias_) {
      bias_ = Tensor<T>({out_c});
      bias_grad_ = Tensor<T>({out_c});
    }
  }

  Tensor<T> forward(const Tensor<T>& x, bool /*train*/ = true) {
    if (x.ndim() != 4 || x.dim(1) != in_c_)
      throw std::invalid_argument("Conv2d: bad input shape " + x.shape_str());
    input_ = x;
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int oh = conv_out_size(h, kernel_, stride_, pad_);
    const int ow = conv_out_size(w, kernel_, stride_, pad_);
    if (oh < 1 || ow < 1)
      throw std::invalid_argument("Conv2d: input too small");

    Tensor<T> y({n, out_c_, oh, ow});
    const int cols = oh * ow;
    const int rows = in_c_ * kernel_ * kernel_;
    std::vector<T> colbuf(static_cast<std::size_t>(rows) * cols);
    ConstMapRM<T> wmat(weight_.data(), out_c_, rows);
    for (int i = 0; i < n; ++i) {
      im2col(x, i, colbuf.data(), oh, ow);
      ConstMapRM<T> cmat(colbuf.data(), rows, cols);
      MapRM<T> ymat(y.data() + static_cast<std::size_t>(i) * out_c_ * cols,
                    out_c_, cols);
      ymat.noalias() = wmat * cmat;
      if (has_bias_)
        for (int c = 0; c < out_c_; ++c)
          ymat.row(c).array() += bias_[static_cast<std::size_t>(c)];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    const int n = input_.dim(0), h = input_.dim(2), w = input_.dim(3);
    const int oh = grad_out.dim(2), ow = grad_out.dim(3);
    const int cols = oh * ow;
    const int rows = in_c_ * kernel_ * kernel_;

    Tensor<T> grad_in({n, in_c_, h, w});
    std::vector<T> colbuf(static_cast<std::size_t>(rows) * cols);
    std::vector<T> dcolbuf(static_cast<std::size_t>(rows) * cols);
    ConstMapRM<T> wmat(weight_.data(), out_c_, rows);
    MapRM<T> dwmat(weight_grad_.data(), out_c_, rows);
    for (int i = 0; i < n; ++i) {
      ConstMapRM<T> dymat(
          grad_out.data() + static_cast<std::size_t>(i) * out_c_ * cols,
          out_c_, cols);
      im2col(input_, i, colbuf.data(), oh, ow);
      ConstMapRM<T> cmat(colbuf.data(), rows, cols);
      dwmat.noalias() += dymat * cmat.transpose();
      MapRM<T> dcmat(dcolbuf.data(), rows, cols);
      dcmat.noalias() = wmat.transpose() * dymat;
      col2im(dcolbuf.data(), grad_in, i, oh, ow);
      if (has_bias_)
        for (int c = 0; c < out_c_; ++c)
          bias_grad_[static_cast<std::size_t>(c)] += dymat.row(c).sum();
    }
    return grad_in;
  }

  void collect_params(std::vector<ParamRef<T>>& out, const std::string& prefix) {
    const int fan_in = in_c_ * kernel_ * kernel_;
    const int fan_out = out_c_ * kernel_ * kernel_;
    out.push_back({prefix + ".weight", &weight_, &weight_grad_, weight_init_,
                   fan_in, fan_out});
    if (has_bias_)
      out.push_back({prefix + ".bias", &bias_, &bias_grad_, InitKind::zero,
                     fan_in, fan_out});
  }

  Tensor<T>& weight() { return weight_; }

 private:
  void im2col(const Tensor<T>& x, int image, T* col, int oh, int ow) const {
    const int h = x.dim(2), w = x.dim(3);
    const T* src = x.data() + static_cast<std::size_t>(image) * in_c_ * h * w;
    std::size_t r = 0;
    for (int c = 0; c < in_c_; ++c) {
      for (int ki = 0; ki < kernel_; ++ki) {
        for (int kj = 0; kj < kernel_; ++kj, ++r) {
          T* dst = col + r * static_cast<std::size_t>(oh) * ow;
          for (int i = 0; i < oh; ++i) {
            const int yy = i * stride_ - pad_ + ki;
            if (yy < 0 || yy >= h) {
              for (int j = 0; j < ow; ++j) dst[i * ow + j] = T(0);
              continue;
            }
            const T* row = src + (static_cast<std::size_t>(c) * h + yy) * w;
            for (int j = 0; j < ow; ++j) {
              const int xx = j * stride_ - pad_ + kj;
              dst[i * ow + j] = (xx < 0 || xx >= w) ? T(0) : row[xx];
            }
          }
        }
      }
    }
  }

  void col2im(const T* col, Tensor<T>& grad_in, int image, int oh,
              int ow) const {
    const int h = grad_in.dim(2), w = grad_in.dim(3);
    T* dst = grad_in.data() + static_cast<std::size_t>(image) * in_c_ * h * w;
    std::size_t r = 0;
    for (int c = 0; c < in_c_; ++c) {
      for (int ki = 0; ki < kernel_; ++ki) {
        for (int kj = 0; kj < kernel_; ++kj, ++r) {
          const T* src = col + r * static_cast<std::size_t>(oh) * ow;
          for (int i = 0; i < oh; ++i) {
            const int yy = i * stride_ - pad_ + ki;
            if (yy < 0 || yy >= h) continue;
            T* row = dst + (static_cast<std::size_t>(c) * h + yy) * w;
            for (int j = 0; j < ow; ++j) {
              const int xx = j * stride_ - pad_ + kj;
              if (xx >= 0 && xx < w) row[xx] += src[i * ow + j];
            }
          }
        }
      }
    }
  }

  int in_c_, out_c_, kernel_, stride_, pad_;
  bool has_bias_;
  InitKind weight_init_;
  Tensor<T> weight_, weight_grad_;
  Tensor<T> bias_, bias_grad_;
  Tensor<T> input_;
};

// ---------------------------------------------------------------------------
// BatchNorm2d: per-channel statistics over (N, H, W). Training mode uses
// batch statistics (biased variance) and updates running estimates with
// momentum; eval mode uses the running estimates.
// ---------------------------------------------------------------------------
template <typename T>
class BatchNorm2d {
 public:
  explicit BatchNorm2d(int channels, T eps = T(1e-5), T momentum = T(0.1))
      : c_(channels),
        eps_(eps),
        momentum_(momentum),
        gamma_({channels}),
        beta_({channels}),
        gamma_grad_({channels}),
        beta_grad_({channels}),
        running_mean_({channels}),
        running_var_({channels}) {
    gamma_.fill(T(1));
    running_var_.fill(T(1));
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    if (x.ndim() != 4 || x.dim(1) != c_)
      throw std::invalid_argument("BatchNorm2d: bad input shape");
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const std::size_t m = static_cast<std::size_t>(n) * plane;
    train_ = train;

    Tensor<T> y(x.shape());
    xhat_ = Tensor<T>(x.shape());
    invstd_.assign(static_cast<std::size_t>(c_), T(0));

    for (int c = 0; c < c_; ++c) {
      T mean, var;
      if (train) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
          const T* p = plane_ptr(x, i, c, plane);
          for (std::size_t k = 0; k < plane; ++k) acc += p[k];
        }
        mean = static_cast<T>(acc / static_cast<double>(m));
        double vacc = 0.0;
        for (int i = 0; i < n; ++i) {
          const T* p = plane_ptr(x, i, c, plane);
          for (std::size_t k = 0; k < plane; ++k) {
            const double d = static_cast<double>(p[k]) - mean;
            vacc += d * d;
          }
        }
        var = static_cast<T>(vacc / static_cast<double>(m));
        running_mean_[c] = (T(1) - momentum_) * running_mean_[c] + momentum_ * mean;
        running_var_[c] = (T(1) - momentum_) * running_var_[c] + momentum_ * var;
      } else {
        mean = running_mean_[c];
        var = running_var_[c];
      }
      const T invstd = T(1) / std::sqrt(var + eps_);
      invstd_[static_cast<std::size_t>(c)] = invstd;
      for (int i = 0; i < n; ++i) {
        const T* p = plane_ptr(x, i, c, plane);
        T* xh = plane_ptr(xhat_, i, c, plane);
        T* yp = plane_ptr(y, i, c, plane);
        for (std::size_t k = 0; k < plane; ++k) {
          xh[k] = (p[k] - mean) * invstd;
          yp[k] = gamma_[c] * xh[k] + beta_[c];
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    const int n = grad_out.dim(0), h = grad_out.dim(2), w = grad_out.dim(3);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const std::size_t m = static_cast<std::size_t>(n) * plane;
    Tensor<T> grad_in(grad_out.shape());

    for (int c = 0; c < c_; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int i = 0; i < n; ++i) {
        const T* dy = plane_ptr(grad_out, i, c, plane);
        const T* xh = plane_ptr(xhat_, i, c, plane);
        for (std::size_t k = 0; k < plane; ++k) {
          sum_dy += dy[k];
          sum_dy_xhat += static_cast<double>(dy[k]) * xh[k];
        }
      }
      gamma_grad_[c] += static_cast<T>(sum_dy_xhat);
      beta_grad_[c] += static_cast<T>(sum_dy);

      const T invstd = invstd_[static_cast<std::size_t>(c)];
      if (train_) {
        const T k1 = gamma_[c] * invstd / static_cast<T>(m);
        for (int i = 0; i < n; ++i) {
          const T* dy = plane_ptr(grad_out, i, c, plane);
          const T* xh = plane_ptr(xhat_, i, c, plane);
          T* dx = plane_ptr(grad_in, i, c, plane);
          for (std::size_t k = 0; k < plane; ++k)
            dx[k] = k1 * (static_cast<T>(m) * dy[k] - static_cast<T>(sum_dy) -
                          xh[k] * static_cast<T>(sum_dy_xhat));
        }
      } else {
        const T k1 = gamma_[c] * invstd;
        for (int i = 0; i < n; ++i) {
          const T* dy = plane_ptr(grad_out, i, c, plane);
          T* dx = plane_ptr(grad_in, i, c, plane);
          for (std::size_t k = 0; k < plane; ++k) dx[k] = k1 * dy[k];
        }
      }
    }
    return grad_in;
  }

  void collect_params(std::vector<ParamRef<T>>& out, const std::string& prefix) {
    out.push_back({prefix + ".gamma", &gamma_, &gamma_grad_, InitKind::bn_scale,
                   c_, c_});
    out.push_back({prefix + ".beta", &beta_, &beta_grad_, InitKind::zero, c_,
                   c_});
  }

  void collect_buffers(std::vector<BufferRef<T>>& out,
                       const std::string& prefix) {
    out.push_back({prefix + ".running_mean", &running_mean_});
    out.push_back({prefix + ".running_var", &running_var_});
  }

 private:
  static T* plane_ptr(Tensor<T>& t, int i, int c, std::size_t plane) {
    return t.data() +
           (static_cast<std::size_t>(i) * t.dim(1) + c) * plane;
  }
  static const T* plane_ptr(const Tensor<T>& t, int i, int c,
                            std::size_t plane) {
    return t.data() +
           (static_cast<std::size_t>(i) * t.dim(1) + c) * plane;
  }

  int c_;
  T eps_, momentum_;
  bool train_ = true;
  Tensor<T> gamma_, beta_, gamma_grad_, beta_grad_;
  Tensor<T> running_mean_, running_var_;
  Tensor<T> xhat_;
  std::vector<T> invstd_;
};

template <typename T>
class ReLU {
 public:
  Tensor<T> forward(const Tensor<T>& x, bool /*train*/ = true) {
    mask_.assign(x.numel(), 0);
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
      if (x[i] > T(0)) {
        y[i] = x[i];
        mask_[i] = 1;
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    Tensor<T> grad_in(grad_out.shape());
    for (std::size_t i = 0; i < grad_out.numel(); ++i)
      grad_in[i] = mask_[i] ? grad_out[i] : T(0);
    return grad_in;
  }

 private:
  std::vector<std::uint8_t> mask_;
};

template <typename T>
class MaxPool2d {
 public:
  MaxPool2d(int kernel, int stride, int pad = 0)
      : kernel_(kernel), stride_(stride), pad_(pad) {}

  Tensor<T> forward(const Tensor<T>& x, bool /*train*/ = true) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oh = conv_out_size(h, kernel_, stride_, pad_);
    const int ow = conv_out_size(w, kernel_, stride_, pad_);
    if (oh < 1 || ow < 1) throw std::invalid_argument("MaxPool2d: input too small");
    in_shape_ = x.shape();
    Tensor<T> y({n, c, oh, ow});
    argmax_.assign(y.numel(), 0);
    std::size_t out_i = 0;
    for (int i = 0; i < n; ++i) {
      for (int ch = 0; ch < c; ++ch) {
        const T* plane =
            x.data() + (static_cast<std::size_t>(i) * c + ch) * h * w;
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox, ++out_i) {
            T best = -std::numeric_limits<T>::infinity();
            std::size_t best_idx = 0;
            for (int ki = 0; ki < kernel_; ++ki) {
              const int yy = oy * stride_ - pad_ + ki;
              if (yy < 0 || yy >= h) continue;
              for (int kj = 0; kj < kernel_; ++kj) {
                const int xx = ox * stride_ - pad_ + kj;
                if (xx < 0 || xx >= w) continue;
                const T v = plane[static_cast<std::size_t>(yy) * w + xx];
                if (v > best) {
                  best = v;
                  best_idx = (static_cast<std::size_t>(i) * c + ch) * h * w +
                             static_cast<std::size_t>(yy) * w + xx;
                }
              }
            }
            y[out_i] = best;
            argmax_[out_i] = best_idx;
          }
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    Tensor<T> grad_in(in_shape_);
    for (std::size_t i = 0; i < grad_out.numel(); ++i)
      grad_in[argmax_[i]] += grad_out[i];
    return grad_in;
  }

 private:
  int kernel_, stride_, pad_;
  std::vector<int> in_shape_;
  std::vector<std::size_t> argmax_;
};

template <typename T>
class Linear {
 public:
  Linear(int in_features, int out_features, bool bias = true,
         InitKind weight_init = InitKind::xavier)
      : in_(in_features),
        out_(out_features),
        has_bias_(bias),
        weight_init_(weight_init),
        weight_({out_features, in_features}),
        weight_grad_({out_features, in_features}) {
    if (has_bias_) {
      bias_ = Tensor<T>({out_features});
      bias_grad_ = Tensor<T>({out_features});
    }
  }

  // x: [N, in] -> [N, out]
  Tensor<T> forward(const Tensor<T>& x, bool /*train*/ = true) {
    if (x.ndim() != 2 || x.dim(1) != in_)
      throw std::invalid_argument("Linear: bad input shape " + x.shape_str());
    input_ = x;
    const int n = x.dim(0);
    Tensor<T> y({n, out_});
    ConstMapRM<T> xm(x.data(), n, in_);
    ConstMapRM<T> wm(weight_.data(), out_, in_);
    MapRM<T> ym(y.data(), n, out_);
    ym.noalias() = xm * wm.transpose();
    if (has_bias_) {
      ConstMapRM<T> bm(bias_.data(), 1, out_);
      ym.rowwise() += bm.row(0);
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    const int n = input_.dim(0);
    ConstMapRM<T> dym(grad_out.data(), n, out_);
    ConstMapRM<T> xm(input_.data(), n, in_);
    ConstMapRM<T> wm(weight_.data(), out_, in_);
    MapRM<T> dwm(weight_grad_.data(), out_, in_);
    dwm.noalias() += dym.transpose() * xm;
    if (has_bias_) {
      MapRM<T> dbm(bias_grad_.data(), 1, out_);
      dbm.row(0) += dym.colwise().sum();
    }
    Tensor<T> grad_in({n, in_});
    MapRM<T> dxm(grad_in.data(), n, in_);
    dxm.noalias() = dym * wm;
    return grad_in;
  }

  void collect_params(std::vector<ParamRef<T>>& out, const std::string& prefix) {
    out.push_back(
        {prefix + ".weight", &weight_, &weight_grad_, weight_init_, in_, out_});
    if (has_bias_)
      out.push_back({prefix + ".bias", &bias_, &bias_grad_,
                     bias_init_, in_, out_});
  }

  void set_bias_init(InitKind kind) { bias_init_ = kind; }
  void set_weight_init(InitKind kind) { weight_init_ = kind; }

 private:
  int in_, out_;
  bool has_bias_;
  InitKind weight_init_;
  InitKind bias_init_ = InitKind::zero;
  Tensor<T> weight_, weight_grad_;
  Tensor<T> bias_, bias_grad_;
  Tensor<T> input_;
};

// ---------------------------------------------------------------------------
// GridSampler: differentiable affine warp (theta per image, 2x3), bilinear
// sampling on the [-1, 1] x [-1, 1] grid with corners pinned to pixel
// centers; samples outside the input read zero. Grid coordinates are always
// computed in double so an identity theta lands on exact pixel centers.
// ---------------------------------------------------------------------------
template <typename T>
class GridSampler {
 public:
  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& theta) {
    if (theta.ndim() != 3 || theta.dim(1) != 2 || theta.dim(2) != 3 ||
        theta.dim(0) != x.dim(0))
      throw std::invalid_argument("GridSampler: theta must be [N, 2, 3]");
    input_ = x;
    theta_ = theta;
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<T> y(x.shape());
    for (int i = 0; i < n; ++i) {
      const T* th = theta.data() + static_cast<std::size_t>(i) * 6;
      for (int oy = 0; oy < h; ++oy) {
        const double yt = norm_coord(oy, h);
        for (int ox = 0; ox < w; ++ox) {
          const double xt = norm_coord(ox, w);
          const double xs = double(th[0]) * xt + double(th[1]) * yt + double(th[2]);
          const double ys = double(th[3]) * xt + double(th[4]) * yt + double(th[5]);
          const double px = (xs + 1.0) * 0.5 * (w - 1);
          const double py = (ys + 1.0) * 0.5 * (h - 1);
          sample(x, i, c, h, w, px, py, y, oy, ox);
        }
      }
    }
    return y;
  }

  // Returns grad wrt the input; grad wrt theta via grad_theta().
  Tensor<T> backward(const Tensor<T>& grad_out) {
    const int n = input_.dim(0), c = input_.dim(1), h = input_.dim(2),
              w = input_.dim(3);
    Tensor<T> grad_in(input_.shape());
    grad_theta_ = Tensor<T>({n, 2, 3});
    for (int i = 0; i < n; ++i) {
      const T* th = theta_.data() + static_cast<std::size_t>(i) * 6;
      T* dth = grad_theta_.data() + static_cast<std::size_t>(i) * 6;
      for (int oy = 0; oy < h; ++oy) {
        const double yt = norm_coord(oy, h);
        for (int ox = 0; ox < w; ++ox) {
          const double xt = norm_coord(ox, w);
          const double xs = double(th[0]) * xt + double(th[1]) * yt + double(th[2]);
          const double ys = double(th[3]) * xt + double(th[4]) * yt + double(th[5]);
          const double px = (xs + 1.0) * 0.5 * (w - 1);
          const double py = (ys + 1.0) * 0.5 * (h - 1);

          const int x0 = static_cast<int>(std::floor(px));
          const int y0 = static_cast<int>(std::floor(py));
          const T fx = static_cast<T>(px - x0);
          const T fy = static_cast<T>(py - y0);

          T dpx = T(0), dpy = T(0);
          for (int ch = 0; ch < c; ++ch) {
            const T g = grad_out.at(i, ch, oy, ox);
            if (g == T(0)) continue;
            const T* plane = input_.data() +
                             (static_cast<std::size_t>(i) * c + ch) * h * w;
            T* dplane = grad_in.data() +
                        (static_cast<std::size_t>(i) * c + ch) * h * w;
            // Four taps; weights and their derivatives wrt (px, py).
            for (int dy = 0; dy < 2; ++dy) {
              for (int dx = 0; dx < 2; ++dx) {
                const int yy = y0 + dy, xx = x0 + dx;
                if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                const T wx = dx ? fx : T(1) - fx;
                const T wy = dy ? fy : T(1) - fy;
                const T v = plane[static_cast<std::size_t>(yy) * w + xx];
                dplane[static_cast<std::size_t>(yy) * w + xx] += g * wx * wy;
                const T dwx = dx ? T(1) : T(-1);
                const T dwy = dy ? T(1) : T(-1);
                dpx += g * v * dwx * wy;
                dpy += g * v * wx * dwy;
              }
            }
          }
          const T dxs = dpx * T(0.5) * static_cast<T>(w - 1);
          const T dys = dpy * T(0.5) * static_cast<T>(h - 1);
          dth[0] += dxs * static_cast<T>(xt);
          dth[1] += dxs * static_cast<T>(yt);
          dth[2] += dxs;
          dth[3] += dys * static_cast<T>(xt);
          dth[4] += dys * static_cast<T>(yt);
          dth[5] += dys;
        }
      }
    }
    return grad_in;
  }

  const Tensor<T>& grad_theta() const { return grad_theta_; }

  static Tensor<T> identity_theta(int n) {
    Tensor<T> theta({n, 2, 3});
    for (int i = 0; i < n; ++i) {
      theta.data()[i * 6 + 0] = T(1);
      theta.data()[i * 6 + 4] = T(1);
    }
    return theta;
  }

 private:
  static double norm_coord(int index, int size) {
    if (size <= 1) return 0.0;
    return -1.0 + 2.0 * index / (size - 1);
  }

  void sample(const Tensor<T>& x, int i, int c, int h, int w, double px,
              double py, Tensor<T>& y, int oy, int ox) const {
    const int x0 = static_cast<int>(std::floor(px));
    const int y0 = static_cast<int>(std::floor(py));
    const T fx = static_cast<T>(px - x0);
    const T fy = static_cast<T>(py - y0);
    for (int ch = 0; ch < c; ++ch) {
      const T* plane =
          x.data() + (static_cast<std::size_t>(i) * c + ch) * h * w;
      T acc = T(0);
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const int yy = y0 + dy, xx = x0 + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          const T wx = dx ? fx : T(1) - fx;
          const T wy = dy ? fy : T(1) - fy;
          acc += wx * wy * plane[static_cast<std::size_t>(yy) * w + xx];
        }
      }
      y.at(i, ch, oy, ox) = acc;
    }
  }

  Tensor<T> input_, theta_, grad_theta_;
};

// ---------------------------------------------------------------------------
// TemporalMaxPool: elementwise maximum over the frames of each clip. Input
// is the concatenated frame batch [N, c, h, w] plus per-clip frame counts.
// ---------------------------------------------------------------------------
template <typename T>
class TemporalMaxPool {
 public:
  Tensor<T> forward(const Tensor<T>& frames, const std::vector<int>& clip_sizes) {
    int total = 0;
    for (int s : clip_sizes) {
      if (s < 1) throw std::invalid_argument("TemporalMaxPool: empty clip");
      total += s;
    }
    if (total != frames.dim(0))
      throw std::invalid_argument("TemporalMaxPool: clip sizes do not sum to batch");
    in_shape_ = frames.shape();
    const int b = static_cast<int>(clip_sizes.size());
    const int c = frames.dim(1), h = frames.dim(2), w = frames.dim(3);
    const std::size_t cell = static_cast<std::size_t>(c) * h * w;

    Tensor<T> y({b, c, h, w});
    argmax_.assign(y.numel(), 0);
    int frame0 = 0;
    for (int clip = 0; clip < b; ++clip) {
      T* out = y.data() + static_cast<std::size_t>(clip) * cell;
      std::size_t* arg = argmax_.data() + static_cast<std::size_t>(clip) * cell;
      for (std::size_t k = 0; k < cell; ++k) {
        const std::size_t first = static_cast<std::size_t>(frame0) * cell + k;
        out[k] = frames[first];
        arg[k] = first;
      }
      for (int f = 1; f < clip_sizes[static_cast<std::size_t>(clip)]; ++f) {
        const T* src =
            frames.data() + static_cast<std::size_t>(frame0 + f) * cell;
        for (std::size_t k = 0; k < cell; ++k) {
          if (src[k] > out[k]) {
            out[k] = src[k];
            arg[k] = static_cast<std::size_t>(frame0 + f) * cell + k;
          }
        }
      }
      frame0 += clip_sizes[static_cast<std::size_t>(clip)];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    Tensor<T> grad_in(in_shape_);
    for (std::size_t i = 0; i < grad_out.numel(); ++i)
      grad_in[argmax_[i]] += grad_out[i];
    return grad_in;
  }

 private:
  std::vector<int> in_shape_;
  std::vector<std::size_t> argmax_;
};

}  // namespace realgait::nn
