#pragma once

#include <complex>
#include <string>
#include <vector>

#include "cvep/codebook.hpp"
#include "cvep/tensor.hpp"

namespace cvep {

struct Event {
  long onset = 0;  // sample index into the recording
  int label = 0;
};

/// Multichannel continuous EEG with stimulus onset events.
struct ContinuousRecording {
  Mat samples;  // channels x time, microvolts
  double fs_hz = 0.0;
  std::vector<std::string> channel_names;
  std::vector<Event> events;

  int channels() const { return samples.rows; }
  long length() const { return samples.cols; }
};

/// Labeled epoched trials: B x C x T' plus metadata. The unit that flows
/// through the decoding pipeline.
struct TrialSet {
  Tensor3 data;  // trials x channels x samples
  std::vector<int> labels;
  double fs_hz = 0.0;
  std::string subject_id;
  double trial_duration_s = 0.0;

  int trials() const { return data.n0; }
  int channels() const { return data.n1; }
  int samples() const { return data.n2; }
};

struct Biquad {
  double b0 = 0, b1 = 0, b2 = 0;  // numerator
  double a1 = 0, a2 = 0;          // denominator (a0 normalized to 1)
};

/// Butterworth bandpass as cascaded second-order sections.
struct BiquadCascade {
  std::vector<Biquad> sections;
  double fs_hz = 0.0;
  double f_lo = 0.0, f_hi = 0.0;
};

/// Designs a Butterworth bandpass of the given total order (pole count)
/// via the analog prototype and a prewarped bilinear transform. The -3 dB
/// points land on f_lo and f_hi up to numerical error.
BiquadCascade design_bandpass(int order, double f_lo, double f_hi, double fs_hz);

/// Complex frequency response of the cascade at freq_hz.
std::complex<double> cascade_response(const BiquadCascade& f, double freq_hz);

/// True when every section's poles are strictly inside the unit circle.
bool cascade_is_stable(const BiquadCascade& f);

/// Filters each channel independently. zero_phase runs a forward and a
/// time-reversed pass (squared magnitude response, no phase distortion)
/// with odd-reflection edge padding; otherwise a single causal pass.
ContinuousRecording apply_filter(const BiquadCascade& f, const ContinuousRecording& rec,
                                 bool zero_phase = true);
TrialSet apply_filter(const BiquadCascade& f, const TrialSet& ts, bool zero_phase = true);

/// Linear-interpolation resampling onto the fs_out grid. Event onsets are
/// rescaled by fs_out/fs_in and rounded to the nearest sample. The caller
/// is responsible for band-limiting first.
ContinuousRecording resample(const ContinuousRecording& rec, double fs_out);
TrialSet resample(const TrialSet& ts, double fs_out);

/// One trial per event, window [onset, onset + round(duration_s * fs)).
TrialSet segment_trials(const ContinuousRecording& rec, double duration_s);

/// Averages consecutive groups of group_size same-label trials into
/// composite trials.
TrialSet average_groups(const TrialSet& ts, int group_size);

/// Expands reference-target recordings (label 0) into one trial per target
/// by circular time rotation: target j is the reference rotated right by
/// round(shifts[j] * T' / L) samples. Output order is reference-major.
TrialSet synthesize_shifted(const TrialSet& reference, const CodeBook& book);

/// Linearly re-grids every trial's time axis to exactly target_len samples
/// (endpoints preserved); fs metadata is rescaled by target_len / T'.
TrialSet fit_length(const TrialSet& ts, int target_len = 1024);

}  // namespace cvep
