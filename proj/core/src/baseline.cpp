#include "cvep/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cvep/error.hpp"

namespace cvep {

ClassTemplates build_templates(const TrialSet& ts, int n_classes) {
  if (n_classes < 1) fail("MissingClass", "need at least one class");
  ClassTemplates tpl;
  tpl.templates = Tensor3(n_classes, ts.channels(), ts.samples());
  tpl.counts.assign(n_classes, 0);
  const std::size_t slab = static_cast<std::size_t>(ts.channels()) * ts.samples();
  for (int b = 0; b < ts.trials(); ++b) {
    const int k = ts.labels[b];
    if (k < 0 || k >= n_classes)
      fail("LabelOutOfRange", "label " + std::to_string(k) + " outside [0, " +
                                  std::to_string(n_classes) + ")");
    ++tpl.counts[k];
    const double* src = ts.data.slab(b);
    double* dst = tpl.templates.slab(k);
    for (std::size_t i = 0; i < slab; ++i) dst[i] += src[i];
  }
  std::string missing;
  for (int k = 0; k < n_classes; ++k) {
    if (tpl.counts[k] == 0) {
      missing += (missing.empty() ? "" : ",") + std::to_string(k);
    } else {
      const double inv = 1.0 / tpl.counts[k];
      double* dst = tpl.templates.slab(k);
      for (std::size_t i = 0; i < slab; ++i) dst[i] *= inv;
    }
  }
  if (!missing.empty()) fail("MissingClass", "no trials for classes {" + missing + "}");
  return tpl;
}

namespace {

// y = S * x for symmetric S
void symv(const Mat& s, const std::vector<double>& x, std::vector<double>& y) {
  const int n = s.rows;
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    const double* row = s.row(i);
    for (int j = 0; j < n; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
}

Mat covariance(const Mat& xc, const Mat& yc) {
  const int c = xc.rows;
  const long t = xc.cols;
  Mat cov(c, yc.rows);
  gemm_nt(xc.data.data(), yc.data.data(), cov.data.data(), c, static_cast<int>(t),
          yc.rows);
  const double inv = 1.0 / static_cast<double>(t - 1);
  for (double& v : cov.data) v *= inv;
  return cov;
}

Mat center_rows(const Mat& x) {
  Mat out = x;
  for (int i = 0; i < x.rows; ++i) {
    double mean = 0.0;
    const double* src = x.row(i);
    for (int j = 0; j < x.cols; ++j) mean += src[j];
    mean /= x.cols;
    double* dst = out.row(i);
    for (int j = 0; j < x.cols; ++j) dst[j] -= mean;
  }
  return out;
}

double mat_trace(const Mat& m) {
  double t = 0.0;
  for (int i = 0; i < m.rows; ++i) t += m(i, i);
  return t;
}

Mat mat_mul(const Mat& a, const Mat& b) {
  Mat c(a.rows, b.cols);
  gemm(a.data.data(), b.data.data(), c.data.data(), a.rows, a.cols, b.cols);
  return c;
}

Mat mat_transpose(const Mat& a) {
  Mat t(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  return t;
}

// V * diag(f(lambda)) * V^T
Mat spectral_apply(const std::vector<double>& evals, const Mat& evecs,
                   double (*f)(double)) {
  const int n = evecs.rows;
  Mat out(n, n);
  for (int e = 0; e < n; ++e) {
    const double fe = f(evals[e]);
    for (int i = 0; i < n; ++i) {
      const double vi = evecs(i, e) * fe;
      if (vi == 0.0) continue;
      for (int j = 0; j < n; ++j) out(i, j) += vi * evecs(j, e);
    }
  }
  return out;
}

}  // namespace

void sym_eigen(const Mat& s, std::vector<double>& evals, Mat& evecs, double tol,
               int max_iter) {
  const int n = s.rows;
  if (n != s.cols) fail("BadShape", "sym_eigen needs a square matrix");
  // positive shift keeps the iteration dominant even when rounding pushes
  // small eigenvalues slightly negative
  const double shift = std::max(1e-30, 1e-3 * std::abs(mat_trace(s)) / n);
  Mat work = s;
  for (int i = 0; i < n; ++i) work(i, i) += shift;

  evals.assign(n, 0.0);
  evecs = Mat(n, n);
  std::vector<double> v(n), av(n);
  for (int e = 0; e < n; ++e) {
    // deterministic start vector, biased away from previously found space
    for (int i = 0; i < n; ++i) v[i] = (i == e % n) ? 1.0 : 1e-3 * (i + 1);
    double lambda = 0.0;
    for (int it = 0; it < max_iter; ++it) {
      // orthogonalize against found eigenvectors (deflation by projection)
      for (int f2 = 0; f2 < e; ++f2) {
        double d = 0.0;
        for (int i = 0; i < n; ++i) d += v[i] * evecs(i, f2);
        for (int i = 0; i < n; ++i) v[i] -= d * evecs(i, f2);
      }
      double norm = std::sqrt(dot(v, v));
      if (norm < 1e-300) {
        // degenerate start; restart from another axis
        for (int i = 0; i < n; ++i) v[i] = (i == (e + it + 1) % n) ? 1.0 : 0.0;
        continue;
      }
      for (double& x : v) x /= norm;
      symv(work, v, av);
      const double next = dot(av, v);
      double resid = 0.0;
      for (int i = 0; i < n; ++i) {
        const double r = av[i] - next * v[i];
        resid += r * r;
      }
      v = av;
      const bool converged = std::sqrt(resid) <= tol * std::max(1.0, std::abs(next));
      lambda = next;
      if (converged) break;
    }
    double norm = std::sqrt(dot(v, v));
    if (norm < 1e-300) norm = 1.0;
    for (int i = 0; i < n; ++i) evecs(i, e) = v[i] / norm;
    evals[e] = lambda - shift;
    // Hotelling deflation
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) work(i, j) -= lambda * evecs(i, e) * evecs(j, e);
  }
}

CcaResult cca(const Mat& x, const Mat& y, double ridge) {
  if (x.rows != y.rows || x.cols != y.cols)
    fail("BadShape", "cca inputs must share dimensions");
  const int c = x.rows;
  const long t = x.cols;
  if (t <= c) fail("BadShape", "cca needs more samples than channels");
  if (ridge != kAutoRidge && ridge < 0.0) fail("BadShape", "ridge must be >= 0");

  const Mat xc = center_rows(x);
  const Mat yc = center_rows(y);
  Mat cxx = covariance(xc, xc);
  Mat cyy = covariance(yc, yc);
  const Mat cxy = covariance(xc, yc);

  const double ex = ridge == kAutoRidge ? 1e-6 * mat_trace(cxx) / c : ridge;
  const double ey = ridge == kAutoRidge ? 1e-6 * mat_trace(cyy) / c : ridge;
  for (int i = 0; i < c; ++i) {
    cxx(i, i) += ex;
    cyy(i, i) += ey;
  }

  std::vector<double> lx, ly;
  Mat vx, vy;
  sym_eigen(cxx, lx, vx);
  sym_eigen(cyy, ly, vy);
  const double floor_x = 1e-12 * std::max(1.0, std::abs(lx[0]));
  const double floor_y = 1e-12 * std::max(1.0, std::abs(ly[0]));
  for (double l : lx)
    if (l <= floor_x) fail("SingularCovariance", "Cxx is rank-deficient; use a ridge");
  for (double l : ly)
    if (l <= floor_y) fail("SingularCovariance", "Cyy is rank-deficient; use a ridge");

  const Mat sxi = spectral_apply(lx, vx, [](double l) { return 1.0 / std::sqrt(l); });
  const Mat syi = spectral_apply(ly, vy, [](double l) { return 1.0 / l; });

  // M = S^-1/2 Cxy Cyy^-1 Cyx S^-1/2 (symmetrized against rounding)
  const Mat cyx = mat_transpose(cxy);
  Mat m = mat_mul(mat_mul(sxi, cxy), mat_mul(syi, mat_mul(cyx, sxi)));
  for (int i = 0; i < c; ++i)
    for (int j = i + 1; j < c; ++j) {
      const double avg = 0.5 * (m(i, j) + m(j, i));
      m(i, j) = avg;
      m(j, i) = avg;
    }

  std::vector<double> lm;
  Mat vm;
  sym_eigen(m, lm, vm);
  const double lambda = std::max(0.0, lm[0]);

  CcaResult res;
  res.r = std::sqrt(lambda);
  res.wx.assign(c, 0.0);
  for (int i = 0; i < c; ++i)
    for (int j = 0; j < c; ++j) res.wx[i] += sxi(i, j) * vm(j, 0);

  // wy proportional to Cyy^-1 Cyx wx
  std::vector<double> cyx_wx(c, 0.0);
  for (int i = 0; i < c; ++i)
    for (int j = 0; j < c; ++j) cyx_wx[i] += cxy(j, i) * res.wx[j];
  res.wy.assign(c, 0.0);
  for (int i = 0; i < c; ++i)
    for (int j = 0; j < c; ++j) res.wy[i] += syi(i, j) * cyx_wx[j];

  auto normalize = [&](std::vector<double>& w, const Mat& cov) {
    std::vector<double> cw(c, 0.0);
    for (int i = 0; i < c; ++i)
      for (int j = 0; j < c; ++j) cw[i] += cov(i, j) * w[j];
    const double den = std::sqrt(std::max(0.0, dot(w, cw)));
    if (den > 1e-300)
      for (double& v : w) v /= den;
  };
  normalize(res.wx, cxx);
  normalize(res.wy, cyy);

  // orient so the correlation between projections is nonnegative
  double corr = 0.0;
  for (int i = 0; i < c; ++i)
    for (int j = 0; j < c; ++j) corr += res.wx[i] * cxy(i, j) * res.wy[j];
  if (corr < 0.0)
    for (double& v : res.wy) v = -v;
  return res;
}

namespace {

Mat trial_view(const TrialSet& ts, int b) {
  Mat m(ts.channels(), ts.samples());
  std::copy(ts.data.slab(b), ts.data.slab(b) + m.size(), m.data.begin());
  return m;
}

Mat template_view(const ClassTemplates& tpl, int k) {
  Mat m(tpl.templates.n1, tpl.templates.n2);
  std::copy(tpl.templates.slab(k), tpl.templates.slab(k) + m.size(), m.data.begin());
  return m;
}

}  // namespace

int classify_cca(const Mat& trial, const ClassTemplates& tpl, double ridge) {
  int best = 0;
  double best_r = -1.0;
  for (int k = 0; k < tpl.classes(); ++k) {
    const double r = cca(trial, template_view(tpl, k), ridge).r;
    if (r > best_r) {
      best_r = r;
      best = k;
    }
  }
  return best;
}

std::vector<int> classify_cca_set(const TrialSet& ts, const ClassTemplates& tpl,
                                  double ridge) {
  std::vector<int> out(ts.trials());
  for (int b = 0; b < ts.trials(); ++b) out[b] = classify_cca(trial_view(ts, b), tpl, ridge);
  return out;
}

}  // namespace cvep
