#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "beamguard/common.hpp"
#include "beamguard/tensor.hpp"

namespace beamguard::nn {

template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value;
  Tensor<T>* grad;
};

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatCM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

// fan-in scaled uniform, the usual default for conv/linear weights
template <typename T>
void init_uniform(Tensor<T>& w, Tensor<T>& b, int64_t fan_in, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : w.data) v = static_cast<T>(rng.uniform(-bound, bound));
  for (auto& v : b.data) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
struct Conv2d {
  int in_ch = 0, out_ch = 0, ksize = 3, stride = 1, pad = 1;
  Tensor<T> weight, bias, dweight, dbias;  // weight rows: out_ch x (in_ch*k*k)
  MatRM<T> cols;                           // cached im2col of the last forward
  std::vector<int64_t> in_shape;

  Conv2d() = default;
  Conv2d(int ci, int co, int k, int s, int p) : in_ch(ci), out_ch(co), ksize(k), stride(s), pad(p) {
    weight = Tensor<T>({co, static_cast<int64_t>(ci) * k * k});
    bias = Tensor<T>({co});
    dweight = Tensor<T>(weight.shape);
    dbias = Tensor<T>(bias.shape);
  }

  void init(Rng& rng) { init_uniform(weight, bias, static_cast<int64_t>(in_ch) * ksize * ksize, rng); }

  int64_t out_dim(int64_t in) const { return (in + 2 * pad - ksize) / stride + 1; }

  Tensor<T> forward(const Tensor<T>& x) {
    const int64_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    if (C != in_ch) throw std::invalid_argument("conv: channel mismatch");
    const int64_t Ho = out_dim(H), Wo = out_dim(W), M = Ho * Wo;
    const int64_t K = static_cast<int64_t>(in_ch) * ksize * ksize;
    in_shape = x.shape;
    cols.resize(K, B * M);
    for (int64_t b = 0; b < B; b++) {
      for (int64_t c = 0; c < C; c++) {
        for (int ki = 0; ki < ksize; ki++) {
          for (int kj = 0; kj < ksize; kj++) {
            const int64_t r = (c * ksize + ki) * ksize + kj;
            for (int64_t oh = 0; oh < Ho; oh++) {
              const int64_t ih = oh * stride - pad + ki;
              T* dst = &cols(r, b * M + oh * Wo);
              if (ih < 0 || ih >= H) {
                std::fill(dst, dst + Wo, T(0));
                continue;
              }
              const T* src = &x.data[((b * C + c) * H + ih) * W];
              for (int64_t ow = 0; ow < Wo; ow++) {
                const int64_t iw = ow * stride - pad + kj;
                dst[ow] = (iw >= 0 && iw < W) ? src[iw] : T(0);
              }
            }
          }
        }
      }
    }
    Eigen::Map<const MatRM<T>> Wm(weight.data.data(), out_ch, K);
    MatRM<T> out_mat = Wm * cols;
    Tensor<T> out({B, out_ch, Ho, Wo});
    for (int64_t b = 0; b < B; b++)
      for (int64_t co = 0; co < out_ch; co++) {
        const T* src = out_mat.data() + co * B * M + b * M;
        T* dst = &out.data[((b * out_ch + co) * Ho) * Wo];
        for (int64_t i = 0; i < M; i++) dst[i] = src[i] + bias.data[co];
      }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& dout) {
    const int64_t B = in_shape[0], C = in_shape[1], H = in_shape[2], W = in_shape[3];
    const int64_t Ho = dout.shape[2], Wo = dout.shape[3], M = Ho * Wo;
    const int64_t K = static_cast<int64_t>(in_ch) * ksize * ksize;
    MatRM<T> dout_mat(out_ch, B * M);
    for (int64_t b = 0; b < B; b++)
      for (int64_t co = 0; co < out_ch; co++) {
        const T* src = &dout.data[((b * out_ch + co) * Ho) * Wo];
        T* dst = dout_mat.data() + co * B * M + b * M;
        std::copy(src, src + M, dst);
      }
    Eigen::Map<MatRM<T>> dWm(dweight.data.data(), out_ch, K);
    dWm.noalias() += dout_mat * cols.transpose();
    for (int64_t co = 0; co < out_ch; co++) dbias.data[co] += dout_mat.row(co).sum();
    Eigen::Map<const MatRM<T>> Wm(weight.data.data(), out_ch, K);
    MatRM<T> dcols = Wm.transpose() * dout_mat;
    Tensor<T> dx(in_shape);
    for (int64_t b = 0; b < B; b++) {
      for (int64_t c = 0; c < C; c++) {
        for (int ki = 0; ki < ksize; ki++) {
          for (int kj = 0; kj < ksize; kj++) {
            const int64_t r = (c * ksize + ki) * ksize + kj;
            for (int64_t oh = 0; oh < Ho; oh++) {
              const int64_t ih = oh * stride - pad + ki;
              if (ih < 0 || ih >= H) continue;
              const T* src = &dcols(r, b * M + oh * Wo);
              T* dst = &dx.data[((b * C + c) * H + ih) * W];
              for (int64_t ow = 0; ow < Wo; ow++) {
                const int64_t iw = ow * stride - pad + kj;
                if (iw >= 0 && iw < W) dst[iw] += src[ow];
              }
            }
          }
        }
      }
    }
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".w", &weight, &dweight});
    out.push_back({prefix + ".b", &bias, &dbias});
  }
};

template <typename T>
struct BatchNorm2d {
  int channels = 0;
  double momentum = 0.1, eps = 1e-5;
  Tensor<T> gamma, beta, dgamma, dbeta;
  Tensor<T> running_mean, running_var;
  Tensor<T> x_hat;
  std::vector<double> inv_std;
  bool last_train = false;

  BatchNorm2d() = default;
  explicit BatchNorm2d(int c) : channels(c) {
    gamma = Tensor<T>({c});
    gamma.fill(T(1));
    beta = Tensor<T>({c});
    dgamma = Tensor<T>({c});
    dbeta = Tensor<T>({c});
    running_mean = Tensor<T>({c});
    running_var = Tensor<T>({c});
    running_var.fill(T(1));
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    const int64_t B = x.shape[0], C = x.shape[1], HW = x.shape[2] * x.shape[3];
    if (C != channels) throw std::invalid_argument("bn: channel mismatch");
    last_train = train;
    Tensor<T> out(x.shape);
    x_hat = Tensor<T>(x.shape);
    inv_std.assign(C, 0.0);
    const int64_t n = B * HW;
    for (int64_t c = 0; c < C; c++) {
      double mu, var;
      if (train) {
        double s = 0, s2 = 0;
        for (int64_t b = 0; b < B; b++) {
          const T* p = &x.data[(b * C + c) * HW];
          for (int64_t i = 0; i < HW; i++) {
            s += p[i];
            s2 += static_cast<double>(p[i]) * p[i];
          }
        }
        mu = s / n;
        var = s2 / n - mu * mu;
        if (var < 0) var = 0;
        double unbiased = n > 1 ? var * n / (n - 1) : var;
        running_mean.data[c] = static_cast<T>((1 - momentum) * running_mean.data[c] + momentum * mu);
        running_var.data[c] = static_cast<T>((1 - momentum) * running_var.data[c] + momentum * unbiased);
      } else {
        mu = running_mean.data[c];
        var = running_var.data[c];
      }
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[c] = is;
      const double g = gamma.data[c], bt = beta.data[c];
      for (int64_t b = 0; b < B; b++) {
        const T* p = &x.data[(b * C + c) * HW];
        T* xh = &x_hat.data[(b * C + c) * HW];
        T* o = &out.data[(b * C + c) * HW];
        for (int64_t i = 0; i < HW; i++) {
          xh[i] = static_cast<T>((p[i] - mu) * is);
          o[i] = static_cast<T>(g * xh[i] + bt);
        }
      }
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& dout) {
    const int64_t B = dout.shape[0], C = dout.shape[1], HW = dout.shape[2] * dout.shape[3];
    const int64_t n = B * HW;
    Tensor<T> dx(dout.shape);
    for (int64_t c = 0; c < C; c++) {
      double sum_d = 0, sum_dx = 0;
      for (int64_t b = 0; b < B; b++) {
        const T* d = &dout.data[(b * C + c) * HW];
        const T* xh = &x_hat.data[(b * C + c) * HW];
        for (int64_t i = 0; i < HW; i++) {
          sum_d += d[i];
          sum_dx += static_cast<double>(d[i]) * xh[i];
        }
      }
      dgamma.data[c] += static_cast<T>(sum_dx);
      dbeta.data[c] += static_cast<T>(sum_d);
      const double g = gamma.data[c], is = inv_std[c];
      for (int64_t b = 0; b < B; b++) {
        const T* d = &dout.data[(b * C + c) * HW];
        const T* xh = &x_hat.data[(b * C + c) * HW];
        T* o = &dx.data[(b * C + c) * HW];
        if (last_train) {
          for (int64_t i = 0; i < HW; i++)
            o[i] = static_cast<T>(g * is / n * (n * d[i] - sum_d - xh[i] * sum_dx));
        } else {
          for (int64_t i = 0; i < HW; i++) o[i] = static_cast<T>(g * is * d[i]);
        }
      }
    }
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".g", &gamma, &dgamma});
    out.push_back({prefix + ".b", &beta, &dbeta});
  }
};

template <typename T>
struct ReLU {
  std::vector<uint8_t> mask;
  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> out(x.shape);
    mask.assign(x.data.size(), 0);
    for (size_t i = 0; i < x.data.size(); i++) {
      if (x.data[i] > T(0)) {
        out.data[i] = x.data[i];
        mask[i] = 1;
      }
    }
    return out;
  }
  Tensor<T> backward(const Tensor<T>& dout) {
    Tensor<T> dx(dout.shape);
    for (size_t i = 0; i < dout.data.size(); i++) dx.data[i] = mask[i] ? dout.data[i] : T(0);
    return dx;
  }
};

template <typename T>
struct Linear {
  int in_dim = 0, out_dim = 0;
  Tensor<T> weight, bias, dweight, dbias;  // weight: out x in
  Tensor<T> x_cache;

  Linear() = default;
  Linear(int in, int out) : in_dim(in), out_dim(out) {
    weight = Tensor<T>({out, in});
    bias = Tensor<T>({out});
    dweight = Tensor<T>(weight.shape);
    dbias = Tensor<T>(bias.shape);
  }

  void init(Rng& rng) { init_uniform(weight, bias, in_dim, rng); }

  Tensor<T> forward(const Tensor<T>& x) {
    const int64_t B = x.shape[0];
    x_cache = x;
    Eigen::Map<const MatRM<T>> X(x.data.data(), B, in_dim);
    Eigen::Map<const MatRM<T>> W(weight.data.data(), out_dim, in_dim);
    Tensor<T> out({B, out_dim});
    Eigen::Map<MatRM<T>> O(out.data.data(), B, out_dim);
    O.noalias() = X * W.transpose();
    for (int64_t b = 0; b < B; b++)
      for (int64_t j = 0; j < out_dim; j++) out(b, j) += bias.data[j];
    return out;
  }

  Tensor<T> backward(const Tensor<T>& dout) {
    const int64_t B = dout.shape[0];
    Eigen::Map<const MatRM<T>> D(dout.data.data(), B, out_dim);
    Eigen::Map<const MatRM<T>> X(x_cache.data.data(), B, in_dim);
    Eigen::Map<MatRM<T>> dW(dweight.data.data(), out_dim, in_dim);
    dW.noalias() += D.transpose() * X;
    for (int64_t j = 0; j < out_dim; j++) dbias.data[j] += D.col(j).sum();
    Eigen::Map<const MatRM<T>> W(weight.data.data(), out_dim, in_dim);
    Tensor<T> dx({B, in_dim});
    Eigen::Map<MatRM<T>> dX(dx.data.data(), B, in_dim);
    dX.noalias() = D * W;
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".w", &weight, &dweight});
    out.push_back({prefix + ".b", &bias, &dbias});
  }
};

template <typename T>
struct GlobalAvgPool {
  std::vector<int64_t> in_shape;
  Tensor<T> forward(const Tensor<T>& x) {
    const int64_t B = x.shape[0], C = x.shape[1], HW = x.shape[2] * x.shape[3];
    in_shape = x.shape;
    Tensor<T> out({B, C});
    for (int64_t b = 0; b < B; b++)
      for (int64_t c = 0; c < C; c++) {
        double s = 0;
        const T* p = &x.data[(b * C + c) * HW];
        for (int64_t i = 0; i < HW; i++) s += p[i];
        out(b, c) = static_cast<T>(s / HW);
      }
    return out;
  }
  Tensor<T> backward(const Tensor<T>& dout) {
    const int64_t B = in_shape[0], C = in_shape[1], HW = in_shape[2] * in_shape[3];
    Tensor<T> dx(in_shape);
    for (int64_t b = 0; b < B; b++)
      for (int64_t c = 0; c < C; c++) {
        const T g = dout(b, c) / static_cast<T>(HW);
        T* p = &dx.data[(b * C + c) * HW];
        for (int64_t i = 0; i < HW; i++) p[i] = g;
      }
    return dx;
  }
};

// per-channel (x - mean) / std applied to raw pixel batches
template <typename T>
struct NormalizeInput {
  std::array<double, 3> mean{0, 0, 0}, stdev{1, 1, 1};
  Tensor<T> forward(const Tensor<T>& x) const {
    const int64_t B = x.shape[0], C = x.shape[1], HW = x.shape[2] * x.shape[3];
    Tensor<T> out(x.shape);
    for (int64_t b = 0; b < B; b++)
      for (int64_t c = 0; c < C; c++) {
        const double mu = mean[c], sd = stdev[c];
        const T* p = &x.data[(b * C + c) * HW];
        T* o = &out.data[(b * C + c) * HW];
        for (int64_t i = 0; i < HW; i++) o[i] = static_cast<T>((p[i] - mu) / sd);
      }
    return out;
  }
  Tensor<T> backward(const Tensor<T>& dout) const {
    const int64_t B = dout.shape[0], C = dout.shape[1], HW = dout.shape[2] * dout.shape[3];
    Tensor<T> dx(dout.shape);
    for (int64_t b = 0; b < B; b++)
      for (int64_t c = 0; c < C; c++) {
        const double sd = stdev[c];
        const T* p = &dout.data[(b * C + c) * HW];
        T* o = &dx.data[(b * C + c) * HW];
        for (int64_t i = 0; i < HW; i++) o[i] = static_cast<T>(p[i] / sd);
      }
    return dx;
  }
};

// bilinear, half-pixel centers; identity when sizes already match
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, int64_t out_h, int64_t out_w) {
  const int64_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  if (out_h == H && out_w == W) return x;
  Tensor<T> out({B, C, out_h, out_w});
  const double sh = static_cast<double>(H) / out_h, sw = static_cast<double>(W) / out_w;
  for (int64_t oh = 0; oh < out_h; oh++) {
    double fy = std::max(0.0, (oh + 0.5) * sh - 0.5);
    int64_t y0 = std::min<int64_t>(static_cast<int64_t>(fy), H - 1);
    int64_t y1 = std::min<int64_t>(y0 + 1, H - 1);
    double wy = fy - y0;
    for (int64_t ow = 0; ow < out_w; ow++) {
      double fx = std::max(0.0, (ow + 0.5) * sw - 0.5);
      int64_t x0 = std::min<int64_t>(static_cast<int64_t>(fx), W - 1);
      int64_t x1 = std::min<int64_t>(x0 + 1, W - 1);
      double wx = fx - x0;
      for (int64_t b = 0; b < B; b++)
        for (int64_t c = 0; c < C; c++) {
          double v = (1 - wy) * ((1 - wx) * x(b, c, y0, x0) + wx * x(b, c, y0, x1)) +
                     wy * ((1 - wx) * x(b, c, y1, x0) + wx * x(b, c, y1, x1));
          out(b, c, oh, ow) = static_cast<T>(v);
        }
    }
  }
  return out;
}

template <typename T>
Tensor<T> resize_bilinear_backward(const Tensor<T>& dout, int64_t in_h, int64_t in_w) {
  const int64_t B = dout.shape[0], C = dout.shape[1], Ho = dout.shape[2], Wo = dout.shape[3];
  if (Ho == in_h && Wo == in_w) return dout;
  Tensor<T> dx({B, C, in_h, in_w});
  const double sh = static_cast<double>(in_h) / Ho, sw = static_cast<double>(in_w) / Wo;
  for (int64_t oh = 0; oh < Ho; oh++) {
    double fy = std::max(0.0, (oh + 0.5) * sh - 0.5);
    int64_t y0 = std::min<int64_t>(static_cast<int64_t>(fy), in_h - 1);
    int64_t y1 = std::min<int64_t>(y0 + 1, in_h - 1);
    double wy = fy - y0;
    for (int64_t ow = 0; ow < Wo; ow++) {
      double fx = std::max(0.0, (ow + 0.5) * sw - 0.5);
      int64_t x0 = std::min<int64_t>(static_cast<int64_t>(fx), in_w - 1);
      int64_t x1 = std::min<int64_t>(x0 + 1, in_w - 1);
      double wx = fx - x0;
      for (int64_t b = 0; b < B; b++)
        for (int64_t c = 0; c < C; c++) {
          const T g = dout(b, c, oh, ow);
          dx(b, c, y0, x0) += static_cast<T>((1 - wy) * (1 - wx) * g);
          dx(b, c, y0, x1) += static_cast<T>((1 - wy) * wx * g);
          dx(b, c, y1, x0) += static_cast<T>(wy * (1 - wx) * g);
          dx(b, c, y1, x1) += static_cast<T>(wy * wx * g);
        }
    }
  }
  return dx;
}

}  // namespace beamguard::nn
