#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cvep {

/// Row-major dense matrix of doubles. Deliberately minimal: the pipeline
/// needs fast GEMM on a handful of fixed shapes and nothing more.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
  std::size_t size() const { return data.size(); }
  void fill(double v) { data.assign(data.size(), v); }

  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

/// Dense rank-3 tensor (e.g. trials x channels x samples), row-major.
struct Tensor3 {
  int n0 = 0, n1 = 0, n2 = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(int a, int b, int c)
      : n0(a), n1(b), n2(c), data(static_cast<std::size_t>(a) * b * c, 0.0) {}

  double& at(int i, int j, int k) {
    return data[(static_cast<std::size_t>(i) * n1 + j) * n2 + k];
  }
  const double& at(int i, int j, int k) const {
    return data[(static_cast<std::size_t>(i) * n1 + j) * n2 + k];
  }
  double* slab(int i) { return data.data() + static_cast<std::size_t>(i) * n1 * n2; }
  const double* slab(int i) const { return data.data() + static_cast<std::size_t>(i) * n1 * n2; }
  std::size_t size() const { return data.size(); }
};

/// Dense rank-4 tensor (e.g. trials x 16 x 4 x 512), row-major.
struct Tensor4 {
  int n0 = 0, n1 = 0, n2 = 0, n3 = 0;
  std::vector<double> data;

  Tensor4() = default;
  Tensor4(int a, int b, int c, int d)
      : n0(a), n1(b), n2(c), n3(d),
        data(static_cast<std::size_t>(a) * b * c * d, 0.0) {}

  double& at(int i, int j, int k, int l) {
    return data[((static_cast<std::size_t>(i) * n1 + j) * n2 + k) * n3 + l];
  }
  const double& at(int i, int j, int k, int l) const {
    return data[((static_cast<std::size_t>(i) * n1 + j) * n2 + k) * n3 + l];
  }
  double* slab(int i) { return data.data() + static_cast<std::size_t>(i) * n1 * n2 * n3; }
  const double* slab(int i) const { return data.data() + static_cast<std::size_t>(i) * n1 * n2 * n3; }
  std::size_t size() const { return data.size(); }
};

/// c[m x n] = a[m x k] * b[k x n], optionally accumulating into c.
void gemm(const double* a, const double* b, double* c, int m, int k, int n,
          bool accumulate = false);

/// c[m x n] = a^T * b with a stored [k x m] (k-major), b [k x n].
void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n,
             bool accumulate = false);

/// c[m x n] = a * b^T with a [m x k], b stored [n x k].
void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n,
             bool accumulate = false);

double dot(std::span<const double> a, std::span<const double> b);
double rms(std::span<const double> x);

}  // namespace cvep
