#include "cvep/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cvep/error.hpp"

namespace cvep {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct SectionState {
  double s1 = 0, s2 = 0;
};

// Transposed direct-form II step.
inline double biquad_step(const Biquad& q, SectionState& st, double x) {
  double y = q.b0 * x + st.s1;
  st.s1 = q.b1 * x - q.a1 * y + st.s2;
  st.s2 = q.b2 * x - q.a2 * y;
  return y;
}

// Steady-state internal state for a unit-step input (lfilter_zi analogue).
SectionState unit_step_state(const Biquad& q) {
  const double den = 1.0 + q.a1 + q.a2;
  SectionState st;
  if (std::abs(den) < 1e-300) return st;
  const double y = (q.b0 + q.b1 + q.b2) / den;  // DC gain
  st.s2 = q.b2 - q.a2 * y;
  st.s1 = q.b1 + st.s2 - q.a1 * y;
  return st;
}

// One causal pass of the whole cascade, with per-section states scaled for
// a steady-state start at x[0] (used by the zero-phase path).
void cascade_pass(const std::vector<Biquad>& sections, std::vector<double>& x,
                  bool steady_start) {
  double dc = steady_start && !x.empty() ? x.front() : 0.0;
  for (const Biquad& q : sections) {
    SectionState zi = unit_step_state(q);
    SectionState st{zi.s1 * dc, zi.s2 * dc};
    for (double& v : x) v = biquad_step(q, st, v);
    dc *= (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
  }
}

std::vector<double> filtfilt_channel(const std::vector<Biquad>& sections,
                                     const double* x, long t) {
  const long ntaps = 2 * static_cast<long>(sections.size()) + 1;
  const long pad = std::min<long>(3 * ntaps, t - 1);

  std::vector<double> ext;
  ext.reserve(t + 2 * pad);
  for (long i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x, x + t);
  for (long i = 1; i <= pad; ++i) ext.push_back(2.0 * x[t - 1] - x[t - 1 - i]);

  cascade_pass(sections, ext, true);
  std::reverse(ext.begin(), ext.end());
  cascade_pass(sections, ext, true);
  std::reverse(ext.begin(), ext.end());

  return {ext.begin() + pad, ext.begin() + pad + t};
}

double interp_linear(const double* x, long t, double pos) {
  if (pos <= 0.0) return x[0];
  if (pos >= static_cast<double>(t - 1)) return x[t - 1];
  long i0 = static_cast<long>(pos);
  double frac = pos - static_cast<double>(i0);
  return x[i0] + frac * (x[i0 + 1] - x[i0]);
}

}  // namespace

BiquadCascade design_bandpass(int order, double f_lo, double f_hi, double fs_hz) {
  if (order != 2 && order != 4 && order != 6 && order != 8)
    fail("InvalidBand", "filter order must be one of {2,4,6,8}");
  if (!(0.0 < f_lo && f_lo < f_hi && f_hi < fs_hz / 2.0))
    fail("InvalidBand", "need 0 < f_lo < f_hi < fs/2");

  const int n = order / 2;  // analog lowpass prototype order
  const double w1 = 2.0 * fs_hz * std::tan(kPi * f_lo / fs_hz);
  const double w2 = 2.0 * fs_hz * std::tan(kPi * f_hi / fs_hz);
  const double bw = w2 - w1;
  const double w0 = std::sqrt(w1 * w2);

  using cd = std::complex<double>;
  std::vector<cd> zpoles;
  for (int k = 0; k < n; ++k) {
    const cd proto = std::polar(1.0, kPi * (2.0 * k + n + 1.0) / (2.0 * n));
    const cd bp = 0.5 * bw * proto;
    const cd disc = std::sqrt(bp * bp - cd(w0 * w0, 0.0));
    for (const cd s : {bp + disc, bp - disc}) {
      zpoles.push_back((2.0 * fs_hz + s) / (2.0 * fs_hz - s));  // bilinear
    }
  }

  // Group the 2n digital poles into conjugate (or real) pairs.
  std::vector<bool> used(zpoles.size(), false);
  std::vector<std::pair<cd, cd>> pairs;
  for (std::size_t i = 0; i < zpoles.size(); ++i) {
    if (used[i]) continue;
    used[i] = true;
    const cd p = zpoles[i];
    std::size_t best = zpoles.size();
    double best_d = 0.0;
    const cd want = std::abs(p.imag()) > 1e-12 ? std::conj(p) : p;
    for (std::size_t j = i + 1; j < zpoles.size(); ++j) {
      if (used[j]) continue;
      double d = std::abs(zpoles[j] - want);
      if (best == zpoles.size() || d < best_d) {
        best = j;
        best_d = d;
      }
    }
    if (best == zpoles.size()) fail("InvalidBand", "internal pole pairing failure");
    used[best] = true;
    pairs.emplace_back(p, zpoles[best]);
  }

  BiquadCascade cascade;
  cascade.fs_hz = fs_hz;
  cascade.f_lo = f_lo;
  cascade.f_hi = f_hi;
  for (const auto& [p, q] : pairs) {
    Biquad s;
    s.a1 = -(p + q).real();
    s.a2 = (p * q).real();
    s.b0 = 1.0;
    s.b1 = 0.0;
    s.b2 = -1.0;  // one zero at z=+1, one at z=-1
    cascade.sections.push_back(s);
  }

  // Unity gain at the (warped) band center, distributed per section.
  const double fc = std::atan2(w0, 2.0 * fs_hz) * fs_hz / kPi;
  const cd zc = std::polar(1.0, 2.0 * kPi * fc / fs_hz);
  for (Biquad& s : cascade.sections) {
    const cd num = s.b0 * zc * zc + s.b1 * zc + cd(s.b2, 0.0);
    const cd den = zc * zc + s.a1 * zc + cd(s.a2, 0.0);
    const double g = std::abs(num / den);
    s.b0 /= g;
    s.b1 /= g;
    s.b2 /= g;
  }

  if (!cascade_is_stable(cascade)) fail("InvalidBand", "designed filter is unstable");
  return cascade;
}

std::complex<double> cascade_response(const BiquadCascade& f, double freq_hz) {
  using cd = std::complex<double>;
  const cd z = std::polar(1.0, 2.0 * kPi * freq_hz / f.fs_hz);
  cd h(1.0, 0.0);
  for (const Biquad& s : f.sections) {
    h *= (s.b0 * z * z + s.b1 * z + cd(s.b2, 0.0)) / (z * z + s.a1 * z + cd(s.a2, 0.0));
  }
  return h;
}

bool cascade_is_stable(const BiquadCascade& f) {
  for (const Biquad& s : f.sections) {
    // roots of z^2 + a1 z + a2
    const std::complex<double> disc = std::sqrt(std::complex<double>(s.a1 * s.a1 - 4.0 * s.a2, 0.0));
    const std::complex<double> r1 = 0.5 * (-s.a1 + disc);
    const std::complex<double> r2 = 0.5 * (-s.a1 - disc);
    if (std::abs(r1) >= 1.0 || std::abs(r2) >= 1.0) return false;
  }
  return true;
}

ContinuousRecording apply_filter(const BiquadCascade& f, const ContinuousRecording& rec,
                                 bool zero_phase) {
  if (rec.fs_hz != f.fs_hz)
    fail("RateMismatch", "filter designed at " + std::to_string(f.fs_hz) +
                             " Hz, recording at " + std::to_string(rec.fs_hz) + " Hz");
  ContinuousRecording out = rec;
  const long t = rec.length();
  if (t == 0) return out;
  for (int c = 0; c < rec.channels(); ++c) {
    if (zero_phase && t > 1) {
      auto y = filtfilt_channel(f.sections, rec.samples.row(c), t);
      std::copy(y.begin(), y.end(), out.samples.row(c));
    } else {
      std::vector<double> y(rec.samples.row(c), rec.samples.row(c) + t);
      cascade_pass(f.sections, y, false);
      std::copy(y.begin(), y.end(), out.samples.row(c));
    }
  }
  return out;
}

TrialSet apply_filter(const BiquadCascade& f, const TrialSet& ts, bool zero_phase) {
  if (ts.fs_hz != f.fs_hz) fail("RateMismatch", "filter/trial sampling rates differ");
  TrialSet out = ts;
  const long t = ts.samples();
  for (int b = 0; b < ts.trials(); ++b) {
    for (int c = 0; c < ts.channels(); ++c) {
      double* row = out.data.slab(b) + static_cast<std::size_t>(c) * t;
      if (zero_phase && t > 1) {
        auto y = filtfilt_channel(f.sections, row, t);
        std::copy(y.begin(), y.end(), row);
      } else {
        std::vector<double> y(row, row + t);
        cascade_pass(f.sections, y, false);
        std::copy(y.begin(), y.end(), row);
      }
    }
  }
  return out;
}

ContinuousRecording resample(const ContinuousRecording& rec, double fs_out) {
  if (fs_out <= 0.0) fail("InvalidBand", "resample rate must be positive");
  if (fs_out == rec.fs_hz) return rec;
  const long t_in = rec.length();
  const double ratio = fs_out / rec.fs_hz;
  const long t_out = t_in == 0 ? 0 : static_cast<long>(std::floor((t_in - 1) * ratio)) + 1;

  ContinuousRecording out;
  out.fs_hz = fs_out;
  out.channel_names = rec.channel_names;
  out.samples = Mat(rec.channels(), static_cast<int>(t_out));
  for (int c = 0; c < rec.channels(); ++c) {
    const double* x = rec.samples.row(c);
    double* y = out.samples.row(c);
    for (long i = 0; i < t_out; ++i) y[i] = interp_linear(x, t_in, i / ratio);
  }
  out.events.reserve(rec.events.size());
  for (const Event& e : rec.events) {
    long onset = std::llround(e.onset * ratio);
    onset = std::clamp<long>(onset, 0, std::max<long>(0, t_out - 1));
    out.events.push_back({onset, e.label});
  }
  return out;
}

TrialSet resample(const TrialSet& ts, double fs_out) {
  if (fs_out <= 0.0) fail("InvalidBand", "resample rate must be positive");
  if (fs_out == ts.fs_hz) return ts;
  const long t_in = ts.samples();
  const double ratio = fs_out / ts.fs_hz;
  const long t_out = t_in == 0 ? 0 : static_cast<long>(std::floor((t_in - 1) * ratio)) + 1;
  TrialSet out;
  out.labels = ts.labels;
  out.subject_id = ts.subject_id;
  out.trial_duration_s = ts.trial_duration_s;
  out.fs_hz = fs_out;
  out.data = Tensor3(ts.trials(), ts.channels(), static_cast<int>(t_out));
  for (int b = 0; b < ts.trials(); ++b) {
    for (int c = 0; c < ts.channels(); ++c) {
      const double* x = ts.data.slab(b) + static_cast<std::size_t>(c) * t_in;
      double* y = out.data.slab(b) + static_cast<std::size_t>(c) * t_out;
      for (long i = 0; i < t_out; ++i) y[i] = interp_linear(x, t_in, i / ratio);
    }
  }
  return out;
}

TrialSet segment_trials(const ContinuousRecording& rec, double duration_s) {
  const long win = std::llround(duration_s * rec.fs_hz);
  if (win < 1) fail("TrialOutOfBounds", "trial window is empty");
  for (std::size_t i = 0; i < rec.events.size(); ++i) {
    const Event& e = rec.events[i];
    if (e.onset < 0 || e.onset + win > rec.length())
      fail("TrialOutOfBounds", "event " + std::to_string(i) + " at sample " +
                                   std::to_string(e.onset) + " overruns the recording");
  }
  TrialSet ts;
  ts.fs_hz = rec.fs_hz;
  ts.trial_duration_s = duration_s;
  ts.data = Tensor3(static_cast<int>(rec.events.size()), rec.channels(), static_cast<int>(win));
  ts.labels.reserve(rec.events.size());
  for (std::size_t i = 0; i < rec.events.size(); ++i) {
    const Event& e = rec.events[i];
    ts.labels.push_back(e.label);
    for (int c = 0; c < rec.channels(); ++c) {
      const double* src = rec.samples.row(c) + e.onset;
      std::copy(src, src + win,
                ts.data.slab(static_cast<int>(i)) + static_cast<std::size_t>(c) * win);
    }
  }
  return ts;
}

TrialSet average_groups(const TrialSet& ts, int group_size) {
  if (group_size < 1) fail("IndivisibleBatch", "group size must be >= 1");
  if (group_size == 1) return ts;
  if (ts.trials() % group_size != 0)
    fail("IndivisibleBatch", std::to_string(ts.trials()) + " trials not divisible by " +
                                 std::to_string(group_size));
  const int n_out = ts.trials() / group_size;
  TrialSet out;
  out.fs_hz = ts.fs_hz;
  out.subject_id = ts.subject_id;
  out.trial_duration_s = ts.trial_duration_s;
  out.data = Tensor3(n_out, ts.channels(), ts.samples());
  out.labels.resize(n_out);
  const std::size_t slab = static_cast<std::size_t>(ts.channels()) * ts.samples();
  const double inv = 1.0 / group_size;
  for (int g = 0; g < n_out; ++g) {
    const int first = g * group_size;
    for (int j = 1; j < group_size; ++j) {
      if (ts.labels[first + j] != ts.labels[first])
        fail("MixedLabelGroup", "group " + std::to_string(g) + " mixes labels " +
                                    std::to_string(ts.labels[first]) + " and " +
                                    std::to_string(ts.labels[first + j]));
    }
    out.labels[g] = ts.labels[first];
    double* dst = out.data.slab(g);
    for (int j = 0; j < group_size; ++j) {
      const double* src = ts.data.slab(first + j);
      for (std::size_t i = 0; i < slab; ++i) dst[i] += src[i];
    }
    for (std::size_t i = 0; i < slab; ++i) dst[i] *= inv;
  }
  return out;
}

TrialSet synthesize_shifted(const TrialSet& reference, const CodeBook& book) {
  for (std::size_t i = 0; i < reference.labels.size(); ++i)
    if (reference.labels[i] != 0)
      fail("NonReferenceLabel",
           "trial " + std::to_string(i) + " has label " + std::to_string(reference.labels[i]) +
               "; circular-shift synthesis needs reference-target (label 0) trials");

  const int tlen = reference.samples();
  const int k = book.n_targets;
  const double samples_per_bit = static_cast<double>(tlen) / book.base.length();

  TrialSet out;
  out.fs_hz = reference.fs_hz;
  out.subject_id = reference.subject_id;
  out.trial_duration_s = reference.trial_duration_s;
  out.data = Tensor3(reference.trials() * k, reference.channels(), tlen);
  out.labels.resize(static_cast<std::size_t>(reference.trials()) * k);

  for (int b = 0; b < reference.trials(); ++b) {
    for (int j = 0; j < k; ++j) {
      // total per-target shift rounded once, so rounding error stays < 0.5 sample
      const long shift = std::llround(book.shifts[j] * samples_per_bit) % tlen;
      const int bo = b * k + j;
      out.labels[bo] = j;
      for (int c = 0; c < reference.channels(); ++c) {
        const double* src = reference.data.slab(b) + static_cast<std::size_t>(c) * tlen;
        double* dst = out.data.slab(bo) + static_cast<std::size_t>(c) * tlen;
        for (int i = 0; i < tlen; ++i) dst[i] = src[((i - shift) % tlen + tlen) % tlen];
      }
    }
  }
  return out;
}

TrialSet fit_length(const TrialSet& ts, int target_len) {
  if (ts.samples() < 2) fail("BadShape", "fit_length needs trials with at least 2 samples");
  if (target_len < 2) fail("BadShape", "target length must be >= 2");
  if (ts.samples() == target_len) return ts;

  TrialSet out;
  out.labels = ts.labels;
  out.subject_id = ts.subject_id;
  out.trial_duration_s = ts.trial_duration_s;
  out.fs_hz = ts.fs_hz * static_cast<double>(target_len) / ts.samples();
  out.data = Tensor3(ts.trials(), ts.channels(), target_len);
  const double scale = static_cast<double>(ts.samples() - 1) / (target_len - 1);
  for (int b = 0; b < ts.trials(); ++b) {
    for (int c = 0; c < ts.channels(); ++c) {
      const double* src = ts.data.slab(b) + static_cast<std::size_t>(c) * ts.samples();
      double* dst = out.data.slab(b) + static_cast<std::size_t>(c) * target_len;
      for (int i = 0; i < target_len; ++i)
        dst[i] = interp_linear(src, ts.samples(), i * scale);
    }
  }
  return out;
}

}  // namespace cvep
