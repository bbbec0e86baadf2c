#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cvep/codebook.hpp"
#include "cvep/dsp.hpp"
#include "cvep/rng.hpp"
#include "cvep/tensor.hpp"

namespace cvep {

/// Damped-sinusoid evoked-response kernel:
/// h(t) = exp(-(t-latency)/decay) * sin(2*pi*freq*(t-latency)) for t >= latency.
struct VepKernel {
  double latency_s = 0.1;
  double decay_s = 0.15;
  double freq_hz = 10.0;
  double fs_hz = 0.0;
  std::vector<double> taps;
};

VepKernel vep_kernel(double latency_s, double decay_s, double freq_hz, double fs_hz,
                     double duration_s);

/// Per-subject forward model: unit-norm spatial projection plus noise scale
/// and a subject-specific response latency offset.
struct SubjectModel {
  std::vector<double> mixing;
  double noise_sigma = 1.0;
  double latency_jitter_s = 0.0;
  std::uint64_t seed = 0;
};

/// Synthetic cohort description. similarity_rho in [0,1] blends a shared
/// prototype subject with per-subject random models (1 = identical heads).
struct CohortSpec {
  int n_subjects = 8;
  double similarity_rho = 0.9;
  int n_trials_per_target = 10;
  double snr = 1.0;
  CodeBook codebook;
  double fs_hz = 240.0;
  double duration_s = 0.0;  // 0 = one code period
  int n_channels = 4;
  std::string paradigm = "ensemble";  // or "circular_shift"
  int n_reference_trials = 0;         // circular_shift calibration recordings
  int n_test_trials_per_target = 0;   // circular_shift test session
  double noise_sigma = 1.0;
  double latency_jitter_s = 0.01;
  double kernel_latency_s = 0.1;
  double kernel_decay_s = 0.15;
  double kernel_freq_hz = 10.0;

  void validate() const;
};

/// One simulated trial (channels x samples). The stimulus source is a
/// circular superposition of kernel responses over one code period, tiled
/// to the trial duration, so target responses are exact rotations of the
/// reference response.
Mat simulate_trial(const BitSequence& code, const SubjectModel& subj,
                   const VepKernel& kernel, double fs_hz, double duration_s,
                   double snr, Rng& rng);

struct SyntheticSubject {
  std::string subject_id;
  TrialSet calibration;
  TrialSet test;  // empty for ensemble cohorts
  SubjectModel model;
};

/// Generates the full cohort. Subject s draws from an independent RNG
/// stream derived from (master_seed, s), so regenerating one subject never
/// perturbs another.
std::vector<SyntheticSubject> generate_cohort(const CohortSpec& spec,
                                              std::uint64_t master_seed);

}  // namespace cvep
