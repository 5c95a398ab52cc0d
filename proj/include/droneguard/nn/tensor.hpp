// Dense row-major tensors and the GEMM entry points the layers are built
// on. GEMM routes through Eigen; everything else in the training stack is
// written out explicitly so gradients stay checkable against finite
// differences.
#pragma once

#include <cstddef>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "droneguard/common.hpp"

namespace droneguard::nn {

template <typename T>
struct TensorT {
  std::vector<int> shape;
  std::vector<T> data;
  std::vector<T> grad;  // same length as data once allocated

  TensorT() = default;
  explicit TensorT(std::vector<int> s) : shape(std::move(s)) {
    data.assign(element_count(), T{0});
  }

  std::size_t element_count() const {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return shape.empty() ? 0 : n;
  }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T{0});
  }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T{0}); }
};

using Tensor = TensorT<double>;

template <typename T>
using EigenRowMat =
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<EigenRowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const EigenRowMat<T>>;

// C = A(MxK) * B(KxN), optionally accumulating into C.
template <typename T>
void matmul(T* c, const T* a, const T* b, std::size_t m, std::size_t n, std::size_t k,
            bool accumulate = false) {
  MapMat<T> C(c, m, n);
  ConstMapMat<T> A(a, m, k), B(b, k, n);
  if (accumulate)
    C.noalias() += A * B;
  else
    C.noalias() = A * B;
}

// C = A(MxK) * B(NxK)^T
template <typename T>
void matmul_nt(T* c, const T* a, const T* b, std::size_t m, std::size_t n, std::size_t k,
               bool accumulate = false) {
  MapMat<T> C(c, m, n);
  ConstMapMat<T> A(a, m, k), B(b, n, k);
  if (accumulate)
    C.noalias() += A * B.transpose();
  else
    C.noalias() = A * B.transpose();
}

// C = A(KxM)^T * B(KxN)
template <typename T>
void matmul_tn(T* c, const T* a, const T* b, std::size_t m, std::size_t n, std::size_t k,
               bool accumulate = false) {
  MapMat<T> C(c, m, n);
  ConstMapMat<T> A(a, k, m), B(b, k, n);
  if (accumulate)
    C.noalias() += A.transpose() * B;
  else
    C.noalias() = A.transpose() * B;
}

// He-style normal init for rectifier stacks, uniform for recurrent weights.
template <typename T>
void init_normal(TensorT<T>& t, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (T& v : t.data) v = static_cast<T>(dist(rng));
}

template <typename T>
void init_uniform(TensorT<T>& t, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (T& v : t.data) v = static_cast<T>(dist(rng));
}

}  // namespace droneguard::nn
