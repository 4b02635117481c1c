#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "ovp/error.hpp"

namespace ovp::nn {

// Dense row-major double tensor. All learnable math runs at float64 so the
// finite-difference gradient oracles are meaningful at 1e-3 relative error.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<std::size_t>(count(shape)), 0.0);
  }
  Tensor(std::vector<int> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    check_data(static_cast<std::int64_t>(data.size()) == count(shape),
               "tensor: data length does not match shape");
  }

  static std::int64_t count(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, double v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }

  double& operator()(int i) { return data[static_cast<std::size_t>(i)]; }
  double operator()(int i) const { return data[static_cast<std::size_t>(i)]; }
  double& operator()(int i, int j) {
    return data[static_cast<std::size_t>(i) * shape[1] + j];
  }
  double operator()(int i, int j) const {
    return data[static_cast<std::size_t>(i) * shape[1] + j];
  }
  double& operator()(int i, int j, int k) {
    return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
  }
  double operator()(int i, int j, int k) const {
    return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
  }
  double& operator()(int i, int j, int k, int l) {
    return data[((static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k) *
                    shape[3] +
                l];
  }
  double operator()(int i, int j, int k, int l) const {
    return data[((static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k) *
                    shape[3] +
                l];
  }

  Tensor reshaped(std::vector<int> s) const {
    check_data(count(s) == size(), "tensor: reshape element count mismatch");
    return Tensor(std::move(s), data);
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) out += ",";
      out += std::to_string(shape[i]);
    }
    return out + "]";
  }
};

// Row-major GEMM helpers with position-independent row semantics: C[i,j]
// accumulates its k terms in strictly ascending order regardless of the row's
// position or thread partition, so identical rows give bitwise-identical
// results (batched purity, permutation equivariance).
// C[m,n] = A[m,k] * B[k,n] (+C if accumulate)
void matmul_nn(const double* A, const double* B, double* C, int m, int k,
               int n, bool accumulate = false);
// C[m,n] = A[k,m]^T * B[k,n]
void matmul_tn(const double* A, const double* B, double* C, int m, int k,
               int n, bool accumulate = false);
// C[m,n] = A[m,k] * B[n,k]^T
void matmul_nt(const double* A, const double* B, double* C, int m, int k,
               int n, bool accumulate = false);

// Eigen-backed GEMMs for per-image convolution lowering, where rows are
// output channels and no cross-row bit guarantee is needed.
void fast_gemm_nn(const double* A, const double* B, double* C, int m, int k,
                  int n);
void fast_gemm_tn(const double* A, const double* B, double* C, int m, int k,
                  int n);
void fast_gemm_nt(const double* A, const double* B, double* C, int m, int k,
                  int n);

}  // namespace ovp::nn
