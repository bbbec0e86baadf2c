#include "cvep/dsp.hpp"

#include <doctest.h>

#include <cmath>
#include <complex>

#include "cvep/error.hpp"
#include "cvep/rng.hpp"
#include "test_util.hpp"

using namespace cvep;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Oracle: evaluate the cascade's transfer function on the unit circle
// straight from the published coefficients.
double gain_at(const BiquadCascade& f, double freq_hz) {
  using cd = std::complex<double>;
  const cd z = std::polar(1.0, 2.0 * kPi * freq_hz / f.fs_hz);
  cd h(1.0, 0.0);
  for (const Biquad& s : f.sections)
    h *= (s.b0 * z * z + s.b1 * z + cd(s.b2, 0)) / (z * z + s.a1 * z + cd(s.a2, 0));
  return std::abs(h);
}

ContinuousRecording sine_recording(double freq, double fs, double seconds,
                                   double amplitude = 1.0) {
  const long t = std::llround(fs * seconds);
  ContinuousRecording rec;
  rec.fs_hz = fs;
  rec.samples = Mat(1, static_cast<int>(t));
  for (long i = 0; i < t; ++i)
    rec.samples.row(0)[i] = amplitude * std::sin(2.0 * kPi * freq * i / fs);
  return rec;
}

// Least-squares fit of a*sin + b*cos at a known frequency; returns amplitude
// and phase. Independent of any filtering code.
std::pair<double, double> fit_sine(const double* x, long t, double freq, double fs) {
  double ss = 0, sc = 0, cc = 0, xs = 0, xc = 0;
  for (long i = 0; i < t; ++i) {
    const double s = std::sin(2.0 * kPi * freq * i / fs);
    const double c = std::cos(2.0 * kPi * freq * i / fs);
    ss += s * s;
    sc += s * c;
    cc += c * c;
    xs += x[i] * s;
    xc += x[i] * c;
  }
  const double det = ss * cc - sc * sc;
  const double a = (xs * cc - xc * sc) / det;
  const double b = (xc * ss - xs * sc) / det;
  return {std::hypot(a, b), std::atan2(b, a)};
}

double channel_rms(const ContinuousRecording& rec, int c) {
  double s = 0;
  for (long i = 0; i < rec.length(); ++i) s += rec.samples(c, i) * rec.samples(c, i);
  return std::sqrt(s / rec.length());
}

}  // namespace

TEST_CASE("bandpass design hits the band edges at -3 dB") {
  const BiquadCascade f1 = design_bandpass(4, 4.0, 31.0, 2000.0);
  CHECK(f1.sections.size() == 2);
  CHECK(cascade_is_stable(f1));
  CHECK(gain_at(f1, 0.0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(gain_at(f1, std::sqrt(4.0 * 31.0)) >= 0.95);
  CHECK(gain_at(f1, 4.0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(0.02));
  CHECK(gain_at(f1, 31.0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(0.02));

  const BiquadCascade f2 = design_bandpass(4, 2.0, 30.0, 1000.0);
  CHECK(gain_at(f2, 2.0) >= 0.66);
  CHECK(gain_at(f2, 2.0) <= 0.75);
  CHECK(gain_at(f2, 30.0) >= 0.66);
  CHECK(gain_at(f2, 30.0) <= 0.75);
}

TEST_CASE("bandpass design across all orders stays stable with exact DC null") {
  for (int order : {2, 4, 6, 8}) {
    const BiquadCascade f = design_bandpass(order, 4.0, 31.0, 500.0);
    CHECK(static_cast<int>(f.sections.size()) == order / 2);
    CHECK(cascade_is_stable(f));
    CHECK(gain_at(f, 0.0) == doctest::Approx(0.0).epsilon(1e-12));
    // every section's numerator kills DC exactly: b0 + b1 + b2 == 0
    for (const Biquad& s : f.sections) CHECK(s.b0 + s.b1 + s.b2 == doctest::Approx(0.0));
  }
}

TEST_CASE("bandpass design rejects bad bands") {
  CHECK_THROWS_WITH_AS(design_bandpass(4, 31.0, 4.0, 2000.0),
                       doctest::Contains("InvalidBand"), Error);
  CHECK_THROWS_WITH_AS(design_bandpass(4, 4.0, 1200.0, 2000.0),
                       doctest::Contains("InvalidBand"), Error);
  CHECK_THROWS_WITH_AS(design_bandpass(5, 4.0, 31.0, 2000.0),
                       doctest::Contains("InvalidBand"), Error);
}

TEST_CASE("zero input stays zero and rates must match") {
  const BiquadCascade f = design_bandpass(4, 4.0, 31.0, 2000.0);
  ContinuousRecording rec;
  rec.fs_hz = 2000.0;
  rec.samples = Mat(2, 500);
  const ContinuousRecording out = apply_filter(f, rec, true);
  for (double v : out.samples.data) CHECK(v == 0.0);

  rec.fs_hz = 1000.0;
  CHECK_THROWS_WITH_AS(apply_filter(f, rec, true), doctest::Contains("RateMismatch"),
                       Error);
}

TEST_CASE("zero-phase filtering preserves an in-band sine") {
  const BiquadCascade f = design_bandpass(4, 4.0, 31.0, 2000.0);
  const ContinuousRecording rec = sine_recording(15.0, 2000.0, 4.0);
  const ContinuousRecording out = apply_filter(f, rec, true);
  const auto [amp, phase] = fit_sine(out.samples.row(0), out.length(), 15.0, 2000.0);
  CHECK(amp == doctest::Approx(1.0).epsilon(0.05));
  // phase shift under one sample at 15 Hz / 2 kHz
  CHECK(std::abs(phase) < 2.0 * kPi * 15.0 / 2000.0);
}

TEST_CASE("stopband attenuation on a 0.5 Hz sine") {
  const BiquadCascade f = design_bandpass(4, 4.0, 31.0, 2000.0);
  const ContinuousRecording rec = sine_recording(0.5, 2000.0, 6.0);
  const ContinuousRecording out = apply_filter(f, rec, true);
  CHECK(channel_rms(out, 0) < 0.05 * channel_rms(rec, 0));
}

TEST_CASE("filtering is linear") {
  const BiquadCascade f = design_bandpass(4, 4.0, 31.0, 2000.0);
  Rng rng(5);
  ContinuousRecording x = sine_recording(10.0, 2000.0, 1.0);
  ContinuousRecording y = sine_recording(20.0, 2000.0, 1.0);
  for (long i = 0; i < x.length(); ++i) {
    x.samples.row(0)[i] += 0.3 * rng.gaussian();
    y.samples.row(0)[i] += 0.3 * rng.gaussian();
  }
  const double a = 1.7, b = -0.6;
  ContinuousRecording combo = x;
  for (long i = 0; i < x.length(); ++i)
    combo.samples.row(0)[i] = a * x.samples(0, i) + b * y.samples(0, i);
  const auto fx = apply_filter(f, x, true);
  const auto fy = apply_filter(f, y, true);
  const auto fc = apply_filter(f, combo, true);
  double max_rel = 0.0, scale = 0.0;
  for (long i = 0; i < x.length(); ++i) {
    const double want = a * fx.samples(0, i) + b * fy.samples(0, i);
    max_rel = std::max(max_rel, std::abs(fc.samples(0, i) - want));
    scale = std::max(scale, std::abs(want));
  }
  CHECK(max_rel <= 1e-9 * std::max(1.0, scale));
}

TEST_CASE("zero-phase filtering leaves the cross-correlation peak at lag 0") {
  const BiquadCascade f = design_bandpass(4, 4.0, 31.0, 1000.0);
  const ContinuousRecording rec = sine_recording(11.0, 1000.0, 3.0);
  const ContinuousRecording out = apply_filter(f, rec, true);
  const long t = rec.length();
  long best_lag = 0;
  double best = -1e300;
  for (long lag = -5; lag <= 5; ++lag) {
    double corr = 0.0;
    for (long i = std::max(0L, -lag); i < std::min(t, t - lag); ++i)
      corr += rec.samples(0, i) * out.samples(0, i + lag);
    if (corr > best) {
      best = corr;
      best_lag = lag;
    }
  }
  CHECK(best_lag == 0);
}

TEST_CASE("resampling identities and lengths") {
  const ContinuousRecording rec = sine_recording(5.0, 2000.0, 1.05);
  CHECK(rec.length() == 2100);
  const ContinuousRecording same = resample(rec, 2000.0);
  CHECK(same.samples.data == rec.samples.data);

  const ContinuousRecording down = resample(rec, 100.0);
  CHECK(down.length() == 105);
  for (long i = 0; i < down.length(); ++i) {
    const double want = std::sin(2.0 * kPi * 5.0 * i / 100.0);
    CHECK(std::abs(down.samples(0, i) - want) < 0.01);
  }
}

TEST_CASE("resampling rescales event onsets") {
  ContinuousRecording rec = sine_recording(5.0, 2000.0, 1.0);
  rec.events = {{0, 3}, {1000, 1}, {1999, 2}};
  const ContinuousRecording down = resample(rec, 100.0);
  REQUIRE(down.events.size() == 3);
  CHECK(down.events[0].onset == 0);
  CHECK(down.events[1].onset == 50);
  CHECK(down.events[2].onset == down.length() - 1);
  CHECK(down.events[1].label == 1);
}

TEST_CASE("segmentation windows and bounds") {
  ContinuousRecording rec;
  rec.fs_hz = 100.0;
  rec.samples = Mat(2, 400);
  for (int c = 0; c < 2; ++c)
    for (long i = 0; i < 400; ++i) rec.samples.row(c)[i] = c * 1000.0 + i;

  rec.events.clear();
  const TrialSet empty = segment_trials(rec, 1.05);
  CHECK(empty.trials() == 0);

  for (int e = 0; e < 2; ++e) rec.events.push_back({e * 105L, e});
  const TrialSet ts = segment_trials(rec, 1.05);
  CHECK(ts.trials() == 2);
  CHECK(ts.samples() == 105);
  CHECK(ts.labels == std::vector<int>{0, 1});
  CHECK(ts.data.at(1, 1, 0) == 1000.0 + 105.0);

  rec.events.push_back({399, 0});
  CHECK_THROWS_WITH_AS(segment_trials(rec, 1.0), doctest::Contains("event 2"), Error);
}

TEST_CASE("800 events of 1.05 s at 2 kHz give 800 trials") {
  ContinuousRecording rec;
  rec.fs_hz = 2000.0;
  const long win = std::llround(1.05 * 2000.0);
  rec.samples = Mat(1, static_cast<int>(800 * win + win));
  for (int e = 0; e < 800; ++e) rec.events.push_back({e * win, e % 32});
  const TrialSet ts = segment_trials(rec, 1.05);
  CHECK(ts.trials() == 800);
}

TEST_CASE("group averaging contracts") {
  TrialSet ts;
  ts.fs_hz = 100.0;
  ts.data = Tensor3(6, 1, 4);
  ts.labels = {2, 2, 2, 5, 5, 5};
  for (int b = 0; b < 6; ++b)
    for (int i = 0; i < 4; ++i) ts.data.at(b, 0, i) = b;

  const TrialSet same = average_groups(ts, 1);
  CHECK(same.data.data == ts.data.data);

  const TrialSet avg = average_groups(ts, 3);
  CHECK(avg.trials() == 2);
  CHECK(avg.labels == std::vector<int>{2, 5});
  CHECK(avg.data.at(0, 0, 0) == doctest::Approx(1.0));
  CHECK(avg.data.at(1, 0, 0) == doctest::Approx(4.0));

  CHECK_THROWS_WITH_AS(average_groups(ts, 4), doctest::Contains("IndivisibleBatch"), Error);
  ts.labels = {2, 2, 3, 5, 5, 5};
  CHECK_THROWS_WITH_AS(average_groups(ts, 3), doctest::Contains("MixedLabelGroup"), Error);
}

TEST_CASE("averaging identical trials returns the common trial") {
  TrialSet ts;
  ts.fs_hz = 10.0;
  ts.data = Tensor3(5, 2, 3);
  ts.labels.assign(5, 7 % 5);
  for (int b = 0; b < 5; ++b)
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < 3; ++i) ts.data.at(b, c, i) = 3.25;
  const TrialSet avg = average_groups(ts, 5);
  for (double v : avg.data.data) CHECK(v == doctest::Approx(3.25));
}

TEST_CASE("averaging cuts iid noise variance by the group size") {
  Rng rng(424242);
  const int groups = 40, g = 5, t = 50;
  TrialSet ts;
  ts.fs_hz = 100.0;
  ts.data = Tensor3(groups * g, 1, t);
  ts.labels.assign(groups * g, 0);
  for (double& v : ts.data.data) v = rng.gaussian();
  const TrialSet avg = average_groups(ts, g);
  double var_in = 0.0, var_out = 0.0;
  for (double v : ts.data.data) var_in += v * v;
  for (double v : avg.data.data) var_out += v * v;
  var_in /= ts.data.size();
  var_out /= avg.data.size();
  CHECK(var_in / var_out == doctest::Approx(static_cast<double>(g)).epsilon(0.20));
}

TEST_CASE("circular-shift synthesis layout and exact inverse rotation") {
  const BitSequence golay = generate_golay_pair(4).first;  // 16 bits
  const CodeBook book = build_codebook(golay, 4, 4);
  TrialSet ref;
  ref.fs_hz = 64.0;
  ref.data = Tensor3(3, 2, 64);  // 4 samples per bit
  ref.labels = {0, 0, 0};
  Rng rng(11);
  for (double& v : ref.data.data) v = rng.gaussian();

  const TrialSet out = synthesize_shifted(ref, book);
  CHECK(out.trials() == 12);
  for (int b = 0; b < 3; ++b)
    for (int j = 0; j < 4; ++j) CHECK(out.labels[b * 4 + j] == j);

  // target 0 is the reference itself
  for (int i = 0; i < 64; ++i) CHECK(out.data.at(0, 0, i) == ref.data.at(0, 0, i));

  // rotating trial j back by shifts[j]*samples_per_bit recovers the reference
  const double spb = 64.0 / 16.0;
  for (int b = 0; b < 3; ++b) {
    for (int j = 0; j < 4; ++j) {
      const long shift = std::llround(book.shifts[j] * spb);
      for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 64; ++i)
          CHECK(out.data.at(b * 4 + j, c, (i + shift) % 64) == ref.data.at(b, c, i));
    }
  }

  ref.labels = {0, 1, 0};
  CHECK_THROWS_WITH_AS(synthesize_shifted(ref, book),
                       doctest::Contains("NonReferenceLabel"), Error);
}

TEST_CASE("synthesized trials decode to their own target by matched filter") {
  // noiseless reference source; brute-force circular cross-correlation oracle
  const BitSequence golay = generate_golay_pair(4).first;
  const CodeBook book = build_codebook(golay, 16, 1);
  const int t = 128;  // 8 samples per bit
  TrialSet ref;
  ref.fs_hz = 128.0;
  ref.data = Tensor3(1, 1, t);
  ref.labels = {0};
  Rng rng(3);
  for (double& v : ref.data.data) v = rng.gaussian();

  const TrialSet out = synthesize_shifted(ref, book);
  std::vector<double> reference(ref.data.slab(0), ref.data.slab(0) + t);
  std::vector<long> shift_samples;
  for (int j = 0; j < 16; ++j)
    shift_samples.push_back(std::llround(book.shifts[j] * (static_cast<double>(t) / 16)));
  for (int i = 0; i < out.trials(); ++i) {
    std::vector<double> trial(out.data.slab(i), out.data.slab(i) + t);
    CHECK(testutil::matched_filter_label(trial, reference, shift_samples) == out.labels[i]);
  }
}

TEST_CASE("fit_length re-grids trials") {
  TrialSet ts;
  ts.fs_hz = 100.0;
  ts.data = Tensor3(2, 1, 105);
  ts.labels = {4, 9};
  for (int b = 0; b < 2; ++b)
    for (int i = 0; i < 105; ++i) ts.data.at(b, 0, i) = b + std::sin(0.1 * i);

  const TrialSet out = fit_length(ts, 1024);
  CHECK(out.samples() == 1024);
  CHECK(out.labels == ts.labels);
  CHECK(out.fs_hz == doctest::Approx(100.0 * 1024.0 / 105.0));
  // endpoints preserved
  for (int b = 0; b < 2; ++b) {
    CHECK(out.data.at(b, 0, 0) == doctest::Approx(ts.data.at(b, 0, 0)));
    CHECK(out.data.at(b, 0, 1023) == doctest::Approx(ts.data.at(b, 0, 104)));
  }

  const TrialSet same = fit_length(out, 1024);
  CHECK(same.data.data == out.data.data);
}

TEST_CASE("fit_length of a constant trial stays constant") {
  TrialSet ts;
  ts.fs_hz = 50.0;
  ts.data = Tensor3(1, 3, 7);
  ts.labels = {0};
  for (double& v : ts.data.data) v = -2.5;
  const TrialSet out = fit_length(ts, 1024);
  for (double v : out.data.data) CHECK(v == doctest::Approx(-2.5));
}

TEST_CASE("segment then fit_length preserves counts and labels") {
  ContinuousRecording rec;
  rec.fs_hz = 250.0;
  rec.samples = Mat(3, 2000);
  Rng rng(8);
  for (double& v : rec.samples.data) v = rng.gaussian();
  for (int e = 0; e < 7; ++e) rec.events.push_back({e * 260L, e % 4});
  const TrialSet ts = segment_trials(rec, 1.0);
  const TrialSet fitted = fit_length(ts, 1024);
  CHECK(fitted.trials() == 7);
  CHECK(fitted.labels == ts.labels);
}
