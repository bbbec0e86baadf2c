#include "cvep/synth.hpp"

#include <cmath>

#include "cvep/error.hpp"

namespace cvep {

namespace {

constexpr double kTau = 6.28318530717958647692;

std::vector<double> unit_vector(int n, Rng& rng) {
  std::vector<double> v(n);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : v) {
      x = rng.gaussian();
      norm += x * x;
    }
  } while (norm < 1e-12);
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

// One period of the source: kernel responses placed circularly at each bit
// onset. Periodicity is what makes shifted targets exact rotations.
std::vector<double> periodic_source(const BitSequence& code, const VepKernel& kernel,
                                    double fs_hz) {
  const int l = code.length();
  const long period = std::llround(fs_hz * l / code.bit_rate_hz);
  std::vector<double> s(period, 0.0);
  const long klen = static_cast<long>(kernel.taps.size());
  for (int j = 0; j < l; ++j) {
    const long onset = std::llround(j * fs_hz / code.bit_rate_hz) % period;
    const double w = code.bits[j];
    for (long i = 0; i < klen; ++i) {
      const double h = kernel.taps[i];
      if (h != 0.0) s[(onset + i) % period] += w * h;
    }
  }
  return s;
}

}  // namespace

VepKernel vep_kernel(double latency_s, double decay_s, double freq_hz, double fs_hz,
                     double duration_s) {
  if (!(latency_s >= 0.0 && decay_s > 0.0 && freq_hz > 0.0 && fs_hz > 0.0 &&
        duration_s > 0.0 && latency_s < duration_s))
    fail("InvalidSpec", "kernel parameters must be positive with latency < duration");
  VepKernel k;
  k.latency_s = latency_s;
  k.decay_s = decay_s;
  k.freq_hz = freq_hz;
  k.fs_hz = fs_hz;
  const long n = std::llround(duration_s * fs_hz);
  k.taps.resize(n);
  for (long i = 0; i < n; ++i) {
    const double tau = i / fs_hz - latency_s;
    k.taps[i] = tau < 0.0 ? 0.0 : std::exp(-tau / decay_s) * std::sin(kTau * freq_hz * tau);
  }
  return k;
}

Mat simulate_trial(const BitSequence& code, const SubjectModel& subj,
                   const VepKernel& kernel, double fs_hz, double duration_s,
                   double snr, Rng& rng) {
  if (duration_s * code.bit_rate_hz + 1e-9 < code.length())
    fail("InvalidSpec", "trial shorter than one code period");
  const std::vector<double> src = periodic_source(code, kernel, fs_hz);
  const long period = static_cast<long>(src.size());
  const long t = std::llround(fs_hz * duration_s);
  const double s_rms = rms(src);
  const double gain = s_rms > 0.0 ? snr / s_rms : 0.0;

  const int c = static_cast<int>(subj.mixing.size());
  Mat trial(c, static_cast<int>(t));
  for (int ch = 0; ch < c; ++ch) {
    const double g = gain * subj.mixing[ch];
    double* row = trial.row(ch);
    for (long i = 0; i < t; ++i)
      row[i] = g * src[i % period] + subj.noise_sigma * rng.gaussian();
  }
  return trial;
}

void CohortSpec::validate() const {
  if (n_subjects < 1) fail("InvalidSpec", "n_subjects must be >= 1");
  if (!(similarity_rho >= 0.0 && similarity_rho <= 1.0))
    fail("InvalidSpec", "similarity_rho must lie in [0, 1]");
  if (snr < 0.0) fail("InvalidSpec", "snr must be >= 0");
  if (n_channels < 1) fail("InvalidSpec", "n_channels must be >= 1");
  if (fs_hz <= 0.0) fail("InvalidSpec", "fs_hz must be positive");
  if (codebook.n_targets < 1) fail("InvalidSpec", "cohort needs a codebook");
  if (paradigm != "ensemble" && paradigm != "circular_shift")
    fail("InvalidSpec", "paradigm must be 'ensemble' or 'circular_shift'");
  if (paradigm == "ensemble" && n_trials_per_target < 1)
    fail("InvalidSpec", "ensemble cohorts need n_trials_per_target >= 1");
  if (paradigm == "circular_shift" &&
      (n_reference_trials < 1 || n_test_trials_per_target < 1))
    fail("InvalidSpec",
         "circular_shift cohorts need n_reference_trials and n_test_trials_per_target");
  if (noise_sigma < 0.0) fail("InvalidSpec", "noise_sigma must be >= 0");
}

std::vector<SyntheticSubject> generate_cohort(const CohortSpec& spec,
                                              std::uint64_t master_seed) {
  spec.validate();
  const double duration =
      spec.duration_s > 0.0
          ? spec.duration_s
          : spec.codebook.base.length() / spec.codebook.base.bit_rate_hz;
  const long t = std::llround(spec.fs_hz * duration);

  Rng proto_rng(derive_seed(master_seed, 0x70726F74ull));  // prototype stream
  const std::vector<double> prototype = unit_vector(spec.n_channels, proto_rng);

  std::vector<SyntheticSubject> cohort;
  cohort.reserve(spec.n_subjects);
  for (int s = 0; s < spec.n_subjects; ++s) {
    const std::uint64_t subj_seed = derive_seed(master_seed, 0x73756200ull + s);
    Rng model_rng(derive_seed(subj_seed, 1));
    Rng trial_rng(derive_seed(subj_seed, 2));

    SyntheticSubject subject;
    subject.subject_id = "sub" + std::string(s < 9 ? "0" : "") + std::to_string(s + 1);

    const std::vector<double> rand_mix = unit_vector(spec.n_channels, model_rng);
    SubjectModel model;
    model.seed = subj_seed;
    model.noise_sigma = spec.noise_sigma;
    model.mixing.resize(spec.n_channels);
    double norm = 0.0;
    for (int c = 0; c < spec.n_channels; ++c) {
      model.mixing[c] =
          spec.similarity_rho * prototype[c] + (1.0 - spec.similarity_rho) * rand_mix[c];
      norm += model.mixing[c] * model.mixing[c];
    }
    norm = std::sqrt(norm);
    if (norm < 1e-12) {
      model.mixing = prototype;
    } else {
      for (double& m : model.mixing) m /= norm;
    }
    // jitter shrinks with rho so rho = 1 gives exact cross-subject transfer
    const double u = 2.0 * model_rng.uniform() - 1.0;
    model.latency_jitter_s = (1.0 - spec.similarity_rho) * spec.latency_jitter_s * u;
    subject.model = model;

    const VepKernel kernel =
        vep_kernel(spec.kernel_latency_s + model.latency_jitter_s, spec.kernel_decay_s,
                   spec.kernel_freq_hz, spec.fs_hz, duration);

    auto make_set = [&](int n_trials) {
      TrialSet ts;
      ts.fs_hz = spec.fs_hz;
      ts.subject_id = subject.subject_id;
      ts.trial_duration_s = duration;
      ts.data = Tensor3(n_trials, spec.n_channels, static_cast<int>(t));
      ts.labels.assign(n_trials, 0);
      return ts;
    };
    auto put_trial = [&](TrialSet& ts, int idx, int label) {
      ts.labels[idx] = label;
      const Mat trial = simulate_trial(spec.codebook.code_for(label), model, kernel,
                                       spec.fs_hz, duration, spec.snr, trial_rng);
      std::copy(trial.data.begin(), trial.data.end(), ts.data.slab(idx));
    };

    if (spec.paradigm == "ensemble") {
      subject.calibration = make_set(spec.codebook.n_targets * spec.n_trials_per_target);
      int idx = 0;
      for (int target = 0; target < spec.codebook.n_targets; ++target)
        for (int r = 0; r < spec.n_trials_per_target; ++r) put_trial(subject.calibration, idx++, target);
      subject.test = make_set(0);
    } else {
      subject.calibration = make_set(spec.n_reference_trials);
      for (int r = 0; r < spec.n_reference_trials; ++r) put_trial(subject.calibration, r, 0);
      subject.test = make_set(spec.codebook.n_targets * spec.n_test_trials_per_target);
      int idx = 0;
      for (int target = 0; target < spec.codebook.n_targets; ++target)
        for (int r = 0; r < spec.n_test_trials_per_target; ++r) put_trial(subject.test, idx++, target);
    }
    cohort.push_back(std::move(subject));
  }
  return cohort;
}

}  // namespace cvep
