#include "ovp/tensor.hpp"

#include <algorithm>
#include <cstring>

#include <Eigen/Dense>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ovp::nn {

// GEMM with position-independent row semantics: every output element C[i,j]
// accumulates its k terms in strictly ascending k order, independent of where
// row i sits in the matrix and of the thread partition. Identical input rows
// therefore produce bitwise-identical output rows, which the batched-purity
// and permutation-equivariance guarantees rely on. (Library GEMMs pick
// different micro-kernels per row block, which breaks that.)

namespace {

constexpr int kKBlock = 64;

template <typename F>
void for_rows_parallel(int rows, F&& body) {
#ifdef _OPENMP
  if (rows >= 32 && omp_get_max_threads() > 1) {
#pragma omp parallel
    {
      int nt = omp_get_num_threads();
      int tid = omp_get_thread_num();
      int chunk = (rows + nt - 1) / nt;
      int r0 = tid * chunk;
      int r1 = std::min(rows, r0 + chunk);
      if (r0 < r1) body(r0, r1);
    }
    return;
  }
#endif
  body(0, rows);
}

}  // namespace

void matmul_nn(const double* A, const double* B, double* C, int m, int k,
               int n, bool accumulate) {
  for_rows_parallel(m, [&](int r0, int r1) {
    if (!accumulate)
      std::memset(C + (std::size_t)r0 * n, 0,
                  (std::size_t)(r1 - r0) * n * sizeof(double));
    for (int k0 = 0; k0 < k; k0 += kKBlock) {
      int k1 = std::min(k, k0 + kKBlock);
      for (int i = r0; i < r1; ++i) {
        double* c = C + (std::size_t)i * n;
        const double* a = A + (std::size_t)i * k;
        for (int kk = k0; kk < k1; ++kk) {
          double av = a[kk];
          const double* b = B + (std::size_t)kk * n;
          for (int j = 0; j < n; ++j) c[j] += av * b[j];
        }
      }
    }
  });
}

void matmul_tn(const double* A, const double* B, double* C, int m, int k,
               int n, bool accumulate) {
  // C[i,j] = sum_k A[k,i] * B[k,j]
  for_rows_parallel(m, [&](int r0, int r1) {
    if (!accumulate)
      std::memset(C + (std::size_t)r0 * n, 0,
                  (std::size_t)(r1 - r0) * n * sizeof(double));
    for (int k0 = 0; k0 < k; k0 += kKBlock) {
      int k1 = std::min(k, k0 + kKBlock);
      for (int i = r0; i < r1; ++i) {
        double* c = C + (std::size_t)i * n;
        for (int kk = k0; kk < k1; ++kk) {
          double av = A[(std::size_t)kk * m + i];
          const double* b = B + (std::size_t)kk * n;
          for (int j = 0; j < n; ++j) c[j] += av * b[j];
        }
      }
    }
  });
}

void matmul_nt(const double* A, const double* B, double* C, int m, int k,
               int n, bool accumulate) {
  // C[i,j] = dot(A row i, B row j). Transpose B once so the inner loops run
  // the same vectorizable axpy kernel as matmul_nn.
  static thread_local std::vector<double> scratch;
  scratch.resize((std::size_t)k * n);
  for (int j = 0; j < n; ++j)
    for (int kk = 0; kk < k; ++kk)
      scratch[(std::size_t)kk * n + j] = B[(std::size_t)j * k + kk];
  matmul_nn(A, scratch.data(), C, m, k, n, accumulate);
}

namespace {
using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<RowMat>;
using CMap = Eigen::Map<const RowMat>;
}  // namespace

void fast_gemm_nn(const double* A, const double* B, double* C, int m, int k,
                  int n) {
  Map(C, m, n).noalias() = CMap(A, m, k) * CMap(B, k, n);
}

void fast_gemm_tn(const double* A, const double* B, double* C, int m, int k,
                  int n) {
  Map(C, m, n).noalias() = CMap(A, k, m).transpose() * CMap(B, k, n);
}

void fast_gemm_nt(const double* A, const double* B, double* C, int m, int k,
                  int n) {
  Map(C, m, n).noalias() = CMap(A, m, k) * CMap(B, n, k).transpose();
}

}  // namespace ovp::nn
