#pragma once

#include <cmath>
#include <set>
#include <vector>

#include "cvep/rng.hpp"

namespace testutil {

/// Aperiodic autocorrelation A(k) = sum_{i=0}^{L-1-k} x[i] x[i+k].
inline long aperiodic_ac(const std::vector<int>& x, int k) {
  long s = 0;
  for (std::size_t i = 0; i + k < x.size(); ++i) s += static_cast<long>(x[i]) * x[i + k];
  return s;
}

/// Periodic autocorrelation computed straight from the definition.
inline long periodic_ac(const std::vector<int>& x, int k) {
  const int l = static_cast<int>(x.size());
  long s = 0;
  for (int i = 0; i < l; ++i) s += static_cast<long>(x[i]) * x[(i + k) % l];
  return s;
}

/// Exact binomial pmf-based two-sided 99% acceptance interval for the
/// number of successes in n Bernoulli(p) draws: [lo, hi] such that
/// P(X < lo) <= 0.005 and P(X > hi) <= 0.005.
inline std::pair<int, int> binomial99(int n, double p) {
  std::vector<double> pmf(n + 1);
  double logp = std::log(p), logq = std::log1p(-p);
  // log C(n,k) built incrementally
  double logc = 0.0;
  for (int k = 0; k <= n; ++k) {
    pmf[k] = std::exp(logc + k * logp + (n - k) * logq);
    logc += std::log(static_cast<double>(n - k)) - std::log(static_cast<double>(k + 1));
  }
  double acc = 0.0;
  int lo = 0;
  while (lo <= n && acc + pmf[lo] <= 0.005) acc += pmf[lo++];
  acc = 0.0;
  int hi = n;
  while (hi >= 0 && acc + pmf[hi] <= 0.005) acc += pmf[hi--];
  return {lo, hi};
}

/// Brute-force matched filter over every codebook rotation of a reference
/// source: returns the best-correlating shift index.
inline int matched_filter_label(const std::vector<double>& trial,
                                const std::vector<double>& reference,
                                const std::vector<long>& shift_samples) {
  int best = 0;
  double best_corr = -1e300;
  const std::size_t t = trial.size();
  for (std::size_t j = 0; j < shift_samples.size(); ++j) {
    double corr = 0.0;
    const long s = ((shift_samples[j] % static_cast<long>(t)) + t) % t;
    for (std::size_t i = 0; i < t; ++i)
      corr += trial[i] * reference[(i + t - s) % t];
    if (corr > best_corr) {
      best_corr = corr;
      best = static_cast<int>(j);
    }
  }
  return best;
}

}  // namespace testutil
