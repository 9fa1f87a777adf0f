#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "shimkit/common.hpp"

namespace shimkit::net {

/// Dense NCHW activation tensor.
template <typename T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_), v(static_cast<size_t>(n_) * c_ * h_ * w_, T(0)) {}

  size_t size() const { return v.size(); }
  T* sample(int i) { return v.data() + static_cast<size_t>(i) * c * h * w; }
  const T* sample(int i) const { return v.data() + static_cast<size_t>(i) * c * h * w; }
  T& at(int in, int ic, int iy, int ix) {
    return v[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
  }
  const T& at(int in, int ic, int iy, int ix) const {
    return v[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
  }
};

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const MatRM<T>>;

inline int conv_out_extent(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

/// Unrolls one sample's [C,H,W] into the [C*k*k, OH*OW] patch matrix.
template <typename T>
void im2col(const T* x, int c, int h, int w, int k, int stride, int pad, T* col) {
  const int oh = conv_out_extent(h, k, stride, pad);
  const int ow = conv_out_extent(w, k, stride, pad);
  const size_t l = static_cast<size_t>(oh) * ow;
  size_t row = 0;
  for (int ic = 0; ic < c; ++ic) {
    const T* plane = x + static_cast<size_t>(ic) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx, ++row) {
        T* dst = col + row * l;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) {
            for (int ox = 0; ox < ow; ++ox) dst[static_cast<size_t>(oy) * ow + ox] = T(0);
            continue;
          }
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[static_cast<size_t>(oy) * ow + ox] =
                (ix >= 0 && ix < w) ? plane[static_cast<size_t>(iy) * w + ix] : T(0);
          }
        }
      }
    }
  }
}

/// Scatters the patch-matrix gradient back onto the input gradient
/// (accumulating where patches overlap).
template <typename T>
void col2im(const T* col, int c, int h, int w, int k, int stride, int pad, T* dx) {
  const int oh = conv_out_extent(h, k, stride, pad);
  const int ow = conv_out_extent(w, k, stride, pad);
  const size_t l = static_cast<size_t>(oh) * ow;
  size_t row = 0;
  for (int ic = 0; ic < c; ++ic) {
    T* plane = dx + static_cast<size_t>(ic) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx, ++row) {
        const T* src = col + row * l;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) {
              plane[static_cast<size_t>(iy) * w + ix] += src[static_cast<size_t>(oy) * ow + ox];
            }
          }
        }
      }
    }
  }
}

/// y = weights * im2col(x) per sample; weights is [out_c, in_c*k*k] row-major.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const T* weights, int out_c, int k, int stride,
                         int pad, std::vector<T>* col_scratch = nullptr) {
  const int oh = conv_out_extent(x.h, k, stride, pad);
  const int ow = conv_out_extent(x.w, k, stride, pad);
  const size_t rows = static_cast<size_t>(x.c) * k * k;
  const size_t l = static_cast<size_t>(oh) * ow;
  std::vector<T> local;
  std::vector<T>& col = col_scratch ? *col_scratch : local;
  col.resize(rows * l);

  Tensor<T> y(x.n, out_c, oh, ow);
  CMapRM<T> wmat(weights, out_c, static_cast<Eigen::Index>(rows));
  for (int i = 0; i < x.n; ++i) {
    im2col(x.sample(i), x.c, x.h, x.w, k, stride, pad, col.data());
    MapRM<T> ymat(y.sample(i), out_c, static_cast<Eigen::Index>(l));
    CMapRM<T> cmat(col.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(l));
    ymat.noalias() = wmat * cmat;
  }
  return y;
}

/// Accumulates dweights and (when dx != nullptr) writes the input gradient.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const T* weights, const Tensor<T>& dy, int k, int stride,
                     int pad, T* dweights, Tensor<T>* dx) {
  const size_t rows = static_cast<size_t>(x.c) * k * k;
  const size_t l = static_cast<size_t>(dy.h) * dy.w;
  std::vector<T> col(rows * l);
  std::vector<T> dcol(rows * l);

  CMapRM<T> wmat(weights, dy.c, static_cast<Eigen::Index>(rows));
  MapRM<T> dwmat(dweights, dy.c, static_cast<Eigen::Index>(rows));
  if (dx) {
    *dx = Tensor<T>(x.n, x.c, x.h, x.w);
  }
  for (int i = 0; i < x.n; ++i) {
    im2col(x.sample(i), x.c, x.h, x.w, k, stride, pad, col.data());
    CMapRM<T> cmat(col.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(l));
    CMapRM<T> dymat(dy.sample(i), dy.c, static_cast<Eigen::Index>(l));
    dwmat.noalias() += dymat * cmat.transpose();
    if (dx) {
      MapRM<T> dcmat(dcol.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(l));
      dcmat.noalias() = wmat.transpose() * dymat;
      col2im(dcol.data(), x.c, x.h, x.w, k, stride, pad, dx->sample(i));
    }
  }
}

/// Per-channel batch statistics cached by the training-mode forward pass.
template <typename T>
struct BnCache {
  std::vector<T> mean;
  std::vector<T> invstd;
};

template <typename T>
Tensor<T> batchnorm_forward_train(const Tensor<T>& x, const T* gamma, const T* beta,
                                  T* running_mean, T* running_var, T momentum, T eps,
                                  BnCache<T>& cache) {
  if (x.n < 2) throw DomainError("batchnorm: training mode needs batch size >= 2");
  const size_t plane = static_cast<size_t>(x.h) * x.w;
  const size_t count = static_cast<size_t>(x.n) * plane;
  cache.mean.assign(x.c, T(0));
  cache.invstd.assign(x.c, T(0));
  Tensor<T> y(x.n, x.c, x.h, x.w);

  for (int ic = 0; ic < x.c; ++ic) {
    T sum = T(0), sq = T(0);
    for (int i = 0; i < x.n; ++i) {
      const T* p = x.sample(i) + ic * plane;
      for (size_t j = 0; j < plane; ++j) {
        sum += p[j];
        sq += p[j] * p[j];
      }
    }
    const T mean = sum / T(count);
    const T var = sq / T(count) - mean * mean; // biased, used for normalization
    const T invstd = T(1) / std::sqrt(var + eps);
    cache.mean[ic] = mean;
    cache.invstd[ic] = invstd;
    const T unbiased = count > 1 ? var * T(count) / T(count - 1) : var;
    running_mean[ic] = (T(1) - momentum) * running_mean[ic] + momentum * mean;
    running_var[ic] = (T(1) - momentum) * running_var[ic] + momentum * unbiased;

    const T g = gamma[ic], b = beta[ic];
    for (int i = 0; i < x.n; ++i) {
      const T* p = x.sample(i) + ic * plane;
      T* q = y.sample(i) + ic * plane;
      for (size_t j = 0; j < plane; ++j) q[j] = g * (p[j] - mean) * invstd + b;
    }
  }
  return y;
}

template <typename T>
Tensor<T> batchnorm_forward_eval(const Tensor<T>& x, const T* gamma, const T* beta,
                                 const T* running_mean, const T* running_var, T eps) {
  const size_t plane = static_cast<size_t>(x.h) * x.w;
  Tensor<T> y(x.n, x.c, x.h, x.w);
  for (int ic = 0; ic < x.c; ++ic) {
    const T invstd = T(1) / std::sqrt(running_var[ic] + eps);
    const T g = gamma[ic] * invstd;
    const T b = beta[ic] - gamma[ic] * running_mean[ic] * invstd;
    for (int i = 0; i < x.n; ++i) {
      const T* p = x.sample(i) + ic * plane;
      T* q = y.sample(i) + ic * plane;
      for (size_t j = 0; j < plane; ++j) q[j] = g * p[j] + b;
    }
  }
  return y;
}

/// Training-mode backward, differentiating through the batch statistics.
template <typename T>
Tensor<T> batchnorm_backward(const Tensor<T>& x, const Tensor<T>& dy, const T* gamma,
                             const BnCache<T>& cache, T* dgamma, T* dbeta) {
  const size_t plane = static_cast<size_t>(x.h) * x.w;
  const size_t count = static_cast<size_t>(x.n) * plane;
  Tensor<T> dx(x.n, x.c, x.h, x.w);
  for (int ic = 0; ic < x.c; ++ic) {
    const T mean = cache.mean[ic];
    const T invstd = cache.invstd[ic];
    T sum_dy = T(0), sum_dy_xhat = T(0);
    for (int i = 0; i < x.n; ++i) {
      const T* px = x.sample(i) + ic * plane;
      const T* pdy = dy.sample(i) + ic * plane;
      for (size_t j = 0; j < plane; ++j) {
        sum_dy += pdy[j];
        sum_dy_xhat += pdy[j] * (px[j] - mean) * invstd;
      }
    }
    dgamma[ic] += sum_dy_xhat;
    dbeta[ic] += sum_dy;
    const T scale = gamma[ic] * invstd / T(count);
    for (int i = 0; i < x.n; ++i) {
      const T* px = x.sample(i) + ic * plane;
      const T* pdy = dy.sample(i) + ic * plane;
      T* pdx = dx.sample(i) + ic * plane;
      for (size_t j = 0; j < plane; ++j) {
        const T xhat = (px[j] - mean) * invstd;
        pdx[j] = scale * (T(count) * pdy[j] - sum_dy - xhat * sum_dy_xhat);
      }
    }
  }
  return dx;
}

template <typename T>
void relu_inplace(Tensor<T>& x) {
  for (T& u : x.v) u = u > T(0) ? u : T(0);
}

/// dx = dy where the forward output was positive (dead units get zero).
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& out, const Tensor<T>& dy) {
  Tensor<T> dx(dy.n, dy.c, dy.h, dy.w);
  for (size_t i = 0; i < dy.size(); ++i) dx.v[i] = out.v[i] > T(0) ? dy.v[i] : T(0);
  return dx;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  const size_t plane = static_cast<size_t>(x.h) * x.w;
  Tensor<T> y(x.n, x.c, 1, 1);
  for (int i = 0; i < x.n; ++i) {
    for (int ic = 0; ic < x.c; ++ic) {
      const T* p = x.sample(i) + ic * plane;
      T sum = T(0);
      for (size_t j = 0; j < plane; ++j) sum += p[j];
      y.at(i, ic, 0, 0) = sum / T(plane);
    }
  }
  return y;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  const size_t plane = static_cast<size_t>(x.h) * x.w;
  Tensor<T> dx(x.n, x.c, x.h, x.w);
  for (int i = 0; i < x.n; ++i) {
    for (int ic = 0; ic < x.c; ++ic) {
      const T g = dy.at(i, ic, 0, 0) / T(plane);
      T* p = dx.sample(i) + ic * plane;
      for (size_t j = 0; j < plane; ++j) p[j] = g;
    }
  }
  return dx;
}

/// y[i] = W x[i] + b over flattened [n, in] activations.
template <typename T>
Tensor<T> fully_connected(const Tensor<T>& x, const T* weights, const T* bias, int out_dim) {
  const int in_dim = x.c * x.h * x.w;
  Tensor<T> y(x.n, out_dim, 1, 1);
  CMapRM<T> wmat(weights, out_dim, in_dim);
  for (int i = 0; i < x.n; ++i) {
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> xi(x.sample(i), in_dim);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> yi(y.sample(i), out_dim);
    yi.noalias() = wmat * xi;
    for (int o = 0; o < out_dim; ++o) yi[o] += bias[o];
  }
  return y;
}

template <typename T>
Tensor<T> fully_connected_backward(const Tensor<T>& x, const T* weights, const Tensor<T>& dy,
                                   T* dweights, T* dbias) {
  const int in_dim = x.c * x.h * x.w;
  const int out_dim = dy.c;
  Tensor<T> dx(x.n, x.c, x.h, x.w);
  CMapRM<T> wmat(weights, out_dim, in_dim);
  MapRM<T> dwmat(dweights, out_dim, in_dim);
  for (int i = 0; i < x.n; ++i) {
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> xi(x.sample(i), in_dim);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> dyi(dy.sample(i), out_dim);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> dxi(dx.sample(i), in_dim);
    dwmat.noalias() += dyi * xi.transpose();
    for (int o = 0; o < out_dim; ++o) dbias[o] += dyi[o];
    dxi.noalias() = wmat.transpose() * dyi;
  }
  return dx;
}

} // namespace shimkit::net
