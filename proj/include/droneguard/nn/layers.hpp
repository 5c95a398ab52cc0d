// Building blocks for the two detector networks. Activations are NHWC
// row-major; convolutions run as chunked im2col + GEMM so peak scratch
// memory stays bounded at training batch sizes. Every layer implements an
// explicit backward pass; the standing gradient suite checks them against
// central finite differences.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "droneguard/common.hpp"
#include "droneguard/nn/tensor.hpp"

namespace droneguard::nn {

template <typename T>
bool all_finite(const std::vector<T>& v) {
  for (T x : v)
    if (!std::isfinite(static_cast<double>(x))) return false;
  return true;
}

// Fully connected: y = x * W^T + b.
template <typename T>
struct Dense {
  std::string name;
  int in_dim = 0, out_dim = 0;
  TensorT<T> w, b;
  std::vector<T> x_cache;

  Dense() = default;
  Dense(std::string n, int in, int out) : name(std::move(n)), in_dim(in), out_dim(out) {
    w = TensorT<T>({out, in});
    b = TensorT<T>({out});
  }

  void init(std::mt19937_64& rng) {
    init_normal(w, std::sqrt(2.0 / in_dim), rng);
    std::fill(b.data.begin(), b.data.end(), T{0});
  }

  void forward(const T* x, std::size_t batch, T* y, bool training) {
    if (training) x_cache.assign(x, x + batch * in_dim);
    matmul_nt(y, x, w.data.data(), batch, out_dim, in_dim);
    for (std::size_t i = 0; i < batch; ++i)
      for (int j = 0; j < out_dim; ++j) y[i * out_dim + j] += b.data[j];
  }

  void backward(const T* dy, std::size_t batch, T* dx) {
    w.ensure_grad();
    b.ensure_grad();
    matmul_tn(w.grad.data(), dy, x_cache.data(), out_dim, in_dim, batch, true);
    for (std::size_t i = 0; i < batch; ++i)
      for (int j = 0; j < out_dim; ++j) b.grad[j] += dy[i * out_dim + j];
    if (dx != nullptr) matmul(dx, dy, w.data.data(), batch, in_dim, out_dim);
  }
};

// 2-D convolution, stride 1, same padding, square kernel, NHWC.
template <typename T>
struct Conv2d {
  std::string name;
  int in_ch = 0, out_ch = 0, kernel = 3;
  TensorT<T> w;  // [out_ch, kernel*kernel*in_ch]
  TensorT<T> b;  // [out_ch]
  std::vector<T> x_cache;
  int h_cache = 0, w_cache = 0;

  static constexpr std::size_t kChunk = 32;  // windows per im2col slab

  Conv2d() = default;
  Conv2d(std::string n, int cin, int cout, int k = 3)
      : name(std::move(n)), in_ch(cin), out_ch(cout), kernel(k) {
    w = TensorT<T>({cout, k * k * cin});
    b = TensorT<T>({cout});
  }

  void init(std::mt19937_64& rng) {
    init_normal(w, std::sqrt(2.0 / (kernel * kernel * in_ch)), rng);
    std::fill(b.data.begin(), b.data.end(), T{0});
  }

  // col rows are (y, x) positions; columns are [ky][kx][cin].
  void im2col(const T* x, std::size_t batch_offset, std::size_t chunk, int height, int width,
              T* col) const {
    const int pad = kernel / 2;
    const std::size_t row_len = static_cast<std::size_t>(kernel) * kernel * in_ch;
    for (std::size_t bi = 0; bi < chunk; ++bi) {
      const T* img = x + (batch_offset + bi) * static_cast<std::size_t>(height) * width * in_ch;
      for (int y = 0; y < height; ++y) {
        for (int xx = 0; xx < width; ++xx) {
          T* row = col + ((bi * height + y) * width + xx) * row_len;
          std::size_t c = 0;
          for (int ky = 0; ky < kernel; ++ky) {
            const int sy = y + ky - pad;
            for (int kx = 0; kx < kernel; ++kx) {
              const int sx = xx + kx - pad;
              if (sy < 0 || sy >= height || sx < 0 || sx >= width) {
                for (int ci = 0; ci < in_ch; ++ci) row[c++] = T{0};
              } else {
                const T* src = img + (static_cast<std::size_t>(sy) * width + sx) * in_ch;
                for (int ci = 0; ci < in_ch; ++ci) row[c++] = src[ci];
              }
            }
          }
        }
      }
    }
  }

  void forward(const T* x, std::size_t batch, int height, int width, T* y, bool training) {
    if (training) {
      x_cache.assign(x, x + batch * static_cast<std::size_t>(height) * width * in_ch);
      h_cache = height;
      w_cache = width;
    }
    const std::size_t row_len = static_cast<std::size_t>(kernel) * kernel * in_ch;
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    std::vector<T> col(std::min(kChunk, batch) * plane * row_len);
    for (std::size_t b0 = 0; b0 < batch; b0 += kChunk) {
      const std::size_t chunk = std::min(kChunk, batch - b0);
      im2col(x, b0, chunk, height, width, col.data());
      matmul_nt(y + b0 * plane * out_ch, col.data(), w.data.data(), chunk * plane, out_ch,
                row_len);
    }
    for (std::size_t i = 0; i < batch * plane; ++i)
      for (int c = 0; c < out_ch; ++c) y[i * out_ch + c] += b.data[c];
  }

  void backward(const T* dy, std::size_t batch, T* dx) {
    w.ensure_grad();
    b.ensure_grad();
    const int height = h_cache, width = w_cache;
    const int pad = kernel / 2;
    const std::size_t row_len = static_cast<std::size_t>(kernel) * kernel * in_ch;
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    if (dx != nullptr)
      std::fill(dx, dx + batch * plane * in_ch, T{0});
    std::vector<T> col(std::min(kChunk, batch) * plane * row_len);
    std::vector<T> dcol(col.size());
    for (std::size_t b0 = 0; b0 < batch; b0 += kChunk) {
      const std::size_t chunk = std::min(kChunk, batch - b0);
      im2col(x_cache.data(), b0, chunk, height, width, col.data());
      const T* dy_chunk = dy + b0 * plane * out_ch;
      matmul_tn(w.grad.data(), dy_chunk, col.data(), out_ch, row_len, chunk * plane, true);
      if (dx == nullptr) continue;
      matmul(dcol.data(), dy_chunk, w.data.data(), chunk * plane, row_len, out_ch);
      // col2im scatter-add.
      for (std::size_t bi = 0; bi < chunk; ++bi) {
        T* dimg = dx + (b0 + bi) * plane * in_ch;
        for (int y = 0; y < height; ++y) {
          for (int xx = 0; xx < width; ++xx) {
            const T* row = dcol.data() + ((bi * height + y) * width + xx) * row_len;
            std::size_t c = 0;
            for (int ky = 0; ky < kernel; ++ky) {
              const int sy = y + ky - pad;
              for (int kx = 0; kx < kernel; ++kx) {
                const int sx = xx + kx - pad;
                if (sy < 0 || sy >= height || sx < 0 || sx >= width) {
                  c += static_cast<std::size_t>(in_ch);
                } else {
                  T* dst = dimg + (static_cast<std::size_t>(sy) * width + sx) * in_ch;
                  for (int ci = 0; ci < in_ch; ++ci) dst[ci] += row[c++];
                }
              }
            }
          }
        }
      }
    }
    for (std::size_t i = 0; i < batch * plane; ++i)
      for (int c = 0; c < out_ch; ++c) b.grad[c] += dy[i * out_ch + c];
  }
};

// In-place rectifier with a cached activity mask.
template <typename T>
struct Relu {
  std::vector<std::uint8_t> mask;

  void forward(T* x, std::size_t n, bool training) {
    if (training) mask.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const bool active = x[i] > T{0};
      if (training) mask[i] = active;
      if (!active) x[i] = T{0};
    }
  }
  void backward(T* dy, std::size_t n) const {
    for (std::size_t i = 0; i < n; ++i)
      if (!mask[i]) dy[i] = T{0};
  }
};

// 2x2 max pooling, stride 2, NHWC. Gradient flows to the argmax only; ties
// resolve to the first position in scan order.
template <typename T>
struct MaxPool2x2 {
  std::string name;
  std::vector<std::int32_t> argmax;
  std::size_t in_size = 0;

  void forward(const T* x, std::size_t batch, int height, int width, int channels, T* y) {
    if (height % 2 != 0 || width % 2 != 0)
      throw ShapeError(name + ": pooling needs even spatial dims, got " +
                       std::to_string(height) + "x" + std::to_string(width));
    const int oh = height / 2, ow = width / 2;
    in_size = batch * static_cast<std::size_t>(height) * width * channels;
    argmax.resize(batch * static_cast<std::size_t>(oh) * ow * channels);
    for (std::size_t b = 0; b < batch; ++b) {
      const T* img = x + b * static_cast<std::size_t>(height) * width * channels;
      T* out = y + b * static_cast<std::size_t>(oh) * ow * channels;
      for (int yy = 0; yy < oh; ++yy) {
        for (int xx = 0; xx < ow; ++xx) {
          for (int c = 0; c < channels; ++c) {
            T best{};
            std::int32_t best_idx = -1;
            for (int dy = 0; dy < 2; ++dy) {
              for (int dxx = 0; dxx < 2; ++dxx) {
                const std::size_t idx =
                    (static_cast<std::size_t>(2 * yy + dy) * width + (2 * xx + dxx)) * channels +
                    c;
                if (best_idx < 0 || img[idx] > best) {
                  best = img[idx];
                  best_idx = static_cast<std::int32_t>(idx);
                }
              }
            }
            const std::size_t oidx = (static_cast<std::size_t>(yy) * ow + xx) * channels + c;
            out[oidx] = best;
            argmax[b * static_cast<std::size_t>(oh) * ow * channels + oidx] =
                static_cast<std::int32_t>(b * static_cast<std::size_t>(height) * width * channels) +
                best_idx;
          }
        }
      }
    }
  }

  void backward(const T* dy, T* dx) const {
    std::fill(dx, dx + in_size, T{0});
    for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += dy[i];
  }
};

// Inverted dropout: train-mode activations are masked and scaled by
// 1/keep so eval mode is the identity. Masks can be frozen for
// finite-difference checks.
template <typename T>
struct Dropout {
  double p = 0.5;
  bool freeze = false;
  std::vector<T> mask;

  void forward(T* x, std::size_t n, bool training, std::mt19937_64& rng) {
    if (!training || p <= 0.0) return;
    const double keep = 1.0 - p;
    if (!freeze || mask.size() != n) {
      mask.resize(n);
      std::bernoulli_distribution dist(keep);
      for (std::size_t i = 0; i < n; ++i) mask[i] = dist(rng) ? static_cast<T>(1.0 / keep) : T{0};
    }
    for (std::size_t i = 0; i < n; ++i) x[i] *= mask[i];
  }
  void backward(T* dy, std::size_t n) const {
    if (p <= 0.0 || mask.empty()) return;
    for (std::size_t i = 0; i < n; ++i) dy[i] *= mask[i];
  }
};

// Softmax over the class axis plus mean cross-entropy. Returns the loss
// and fills dlogits = (softmax - onehot) / batch when requested.
template <typename T>
double softmax_cross_entropy(const T* logits, const std::vector<int>& labels, int classes,
                             T* probs, T* dlogits) {
  const std::size_t batch = labels.size();
  double loss = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    const T* row = logits + i * classes;
    T* prow = probs + i * classes;
    T mx = row[0];
    for (int c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
    double denom = 0.0;
    for (int c = 0; c < classes; ++c) denom += std::exp(static_cast<double>(row[c] - mx));
    const double log_denom = std::log(denom);
    for (int c = 0; c < classes; ++c)
      prow[c] = static_cast<T>(std::exp(static_cast<double>(row[c] - mx) - log_denom));
    loss -= static_cast<double>(row[labels[i]] - mx) - log_denom;
    if (dlogits != nullptr) {
      T* drow = dlogits + i * classes;
      for (int c = 0; c < classes; ++c)
        drow[c] = (prow[c] - (c == labels[i] ? T{1} : T{0})) / static_cast<T>(batch);
    }
  }
  return loss / static_cast<double>(batch);
}

}  // namespace droneguard::nn
