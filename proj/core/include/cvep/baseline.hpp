#pragma once

#include <vector>

#include "cvep/dsp.hpp"
#include "cvep/tensor.hpp"

namespace cvep {

/// Per-class mean responses (K x C x T').
struct ClassTemplates {
  Tensor3 templates;
  std::vector<int> counts;

  int classes() const { return templates.n0; }
};

/// templates[k] = mean of the class-k trials. Every class in [0, n_classes)
/// must be represented.
ClassTemplates build_templates(const TrialSet& ts, int n_classes);

struct CcaResult {
  std::vector<double> wx;
  std::vector<double> wy;
  double r = 0.0;  // leading canonical correlation
};

/// Sentinel: resolve the ridge as 1e-6 * trace(C)/C per covariance.
inline constexpr double kAutoRidge = -1.0;

/// Leading canonical pair between two C x T signals, via the symmetric
/// eigenproblem S^-1/2 Cxy (Cyy+eI)^-1 Cyx S^-1/2 with S = Cxx+eI, solved by
/// shifted power iteration with deflation. wx, wy come back unit-variance.
CcaResult cca(const Mat& x, const Mat& y, double ridge = kAutoRidge);

/// argmax_k cca(trial, templates[k]).r, ties toward the lowest class index.
int classify_cca(const Mat& trial, const ClassTemplates& tpl, double ridge = kAutoRidge);

/// Classifies every trial of the set; returns predicted labels.
std::vector<int> classify_cca_set(const TrialSet& ts, const ClassTemplates& tpl,
                                  double ridge = kAutoRidge);

/// Full symmetric eigendecomposition by shifted power iteration with
/// Hotelling deflation (descending eigenvalues, orthonormal vectors in
/// columns). Intended for small PSD matrices (C <= 32).
void sym_eigen(const Mat& s, std::vector<double>& evals, Mat& evecs,
               double tol = 1e-12, int max_iter = 10000);

}  // namespace cvep
