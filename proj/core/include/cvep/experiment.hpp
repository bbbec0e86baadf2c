#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cvep/dataset.hpp"
#include "cvep/protocols.hpp"
#include "cvep/synth.hpp"

namespace cvep {

struct BandpassConfig {
  int order = 4;
  double f_lo = 2.0;
  double f_hi = 30.0;
  bool zero_phase = true;
};

/// Declarative experiment description (parsed from JSON).
struct ExperimentConfig {
  std::string dataset_path;
  std::vector<Paradigm> paradigms{Paradigm::CalibrationFree};
  std::vector<double> fractions;  // empty = paradigm preset
  std::string trial_mode = "single";
  int average_group = 5;
  std::vector<std::uint64_t> seeds{1};
  int epochs_free = 200;
  int epochs_finetune = 400;
  int batch_size = 64;
  double lr = 1e-3;
  double lr_finetune = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  std::string encoder_mode = "reference";  // or "imported"
  std::uint64_t encoder_seed = 7;
  std::optional<BandpassConfig> bandpass;
  std::string output_path = "out";

  void validate() const;
};

ExperimentConfig experiment_config_from_json_file(const std::filesystem::path& path);
ExperimentConfig experiment_config_from_json_text(const std::string& text);

/// Canonical serialization of the effective config; hashed into the results
/// CSV header.
std::string experiment_config_canonical(const ExperimentConfig& cfg);
std::string fnv1a_hex(const std::string& text);

/// Fraction presets: ensemble datasets get {10,20,40,60,70}%, circular-shift
/// datasets {10,20,40,60,80}%.
std::vector<double> default_fractions(bool has_separate_test);

/// Loads, preprocesses (optional bandpass, optional trial averaging,
/// circular-shift synthesis, length normalization to 1024) and encodes a
/// dataset into protocol-ready form.
ProtocolDataset prepare_dataset(const ExperimentConfig& cfg);

/// Executes the configured paradigms over all seeds, writes
/// <output>/results.csv and calibration-free checkpoints, and returns every
/// result row.
std::vector<ExperimentResult> run_experiment(const ExperimentConfig& cfg);

/// Synthetic-cohort generation config (parsed from JSON).
struct SynthGenConfig {
  CohortSpec spec;
  std::uint64_t master_seed = 42;
  std::string name = "synth";
};

SynthGenConfig synth_config_from_json_file(const std::filesystem::path& path);
SynthGenConfig synth_config_from_json_text(const std::string& text);

/// Generates and writes the cohort; returns the master seed used.
std::uint64_t synth_generate(const SynthGenConfig& cfg, const std::filesystem::path& out_dir);

struct BaselineConfig {
  std::string dataset_path;
  std::uint64_t seed = 1;
  double ridge = -1.0;  // auto
  std::string output_path = "out";
};

/// CCA template-matching baseline over every subject; writes results.csv
/// rows with paradigm "baseline_cca".
std::vector<ExperimentResult> run_baseline_cca(const BaselineConfig& cfg);

}  // namespace cvep
