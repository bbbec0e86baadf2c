// cvep: synthetic-cohort generation, preprocessing and experiment runner
// for the c-VEP decoding pipeline.

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cvep/baseline.hpp"
#include "cvep/dataset.hpp"
#include "cvep/error.hpp"
#include "cvep/experiment.hpp"
#include "cvep/protocols.hpp"

namespace {

int exit_code_for(const std::string& code) {
  static const std::vector<std::string> dataset_codes{
      "E_DATASET_NOT_FOUND", "FormatError", "ShapeError", "TrialOutOfBounds",
      "MissingClass"};
  static const std::vector<std::string> config_codes{
      "ConfigError", "InvalidSpec", "InvalidBand", "InvalidTaps",
      "ShiftCollision", "AllZeroState", "NonMaximalPeriod"};
  for (const auto& c : dataset_codes)
    if (c == code) return 2;
  for (const auto& c : config_codes)
    if (c == code) return 3;
  return 4;
}

struct GlobalOpts {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

cvep::ExperimentConfig load_experiment_config(const GlobalOpts& g,
                                              cvep::Paradigm paradigm) {
  if (g.config.empty()) cvep::fail("ConfigError", "--config <file> is required");
  cvep::ExperimentConfig cfg = cvep::experiment_config_from_json_file(g.config);
  cfg.paradigms = {paradigm};
  if (g.seed) cfg.seeds = {*g.seed};
  if (!g.out.empty()) cfg.output_path = g.out;
  return cfg;
}

void print_summary(const std::vector<cvep::ExperimentResult>& results,
                   const std::string& out_dir) {
  const auto rows = cvep::aggregate(results);
  std::printf("paradigm,fraction,trial_mode,n,mean_accuracy,std_accuracy,mean_calib_seconds\n");
  for (const auto& row : rows) {
    std::printf("%s,%.4f,%s,%d,%.6f,%.6f,%.1f\n", cvep::to_string(row.paradigm).c_str(),
                row.fraction, row.trial_mode.c_str(), row.n, row.mean_accuracy,
                row.std_accuracy, row.mean_calib_seconds);
  }
  std::printf("results written to %s/results.csv\n", out_dir.c_str());
}

std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ','))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"c-VEP decoding pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOpts g;
  app.add_option("--config", g.config, "JSON config file");
  std::uint64_t seed_opt = 0;
  auto* seed_flag = app.add_option("--seed", seed_opt, "seed override");
  app.add_option("--out", g.out, "output directory override");

  auto* synth_cmd = app.add_subcommand("synth-gen", "generate a synthetic c-VEP cohort");

  auto* prep_cmd = app.add_subcommand("preprocess", "filter/average/resample a dataset");
  std::string prep_in, prep_filter;
  double prep_resample = 0.0;
  int prep_average = 1, prep_fit = 0;
  bool prep_causal = false;
  prep_cmd->add_option("--in", prep_in, "input dataset directory")->required();
  prep_cmd->add_option("--filter", prep_filter, "bandpass as lo:hi:order (e.g. 2:30:4)");
  prep_cmd->add_flag("--causal", prep_causal, "causal filtering instead of zero-phase");
  prep_cmd->add_option("--resample", prep_resample, "target sampling rate in Hz");
  prep_cmd->add_option("--average", prep_average, "average consecutive groups of g trials");
  prep_cmd->add_option("--fit-length", prep_fit, "re-grid trials to this many samples");

  auto* free_cmd = app.add_subcommand("train-free", "calibration-free LOSO evaluation");
  auto* lim_cmd = app.add_subcommand("train-limited", "warm-start limited calibration");
  auto* within_cmd = app.add_subcommand("train-within", "within-subject from scratch");

  auto* cca_cmd = app.add_subcommand("baseline-cca", "CCA template-matching baseline");
  std::string cca_in;
  double cca_ridge = cvep::kAutoRidge;
  cca_cmd->add_option("--in", cca_in, "dataset directory")->required();
  cca_cmd->add_option("--ridge", cca_ridge, "covariance ridge (default: auto)");

  auto* report_cmd = app.add_subcommand("report", "aggregate a results CSV");
  std::string report_in, report_exclude;
  report_cmd->add_option("--in", report_in, "results.csv path")->required();
  report_cmd->add_option("--exclude", report_exclude, "comma-separated subject ids to drop");

  CLI11_PARSE(app, argc, argv);
  if (seed_flag->count() > 0) g.seed = seed_opt;

  try {
    if (*synth_cmd) {
      if (g.config.empty()) cvep::fail("ConfigError", "--config <file> is required");
      cvep::SynthGenConfig cfg = cvep::synth_config_from_json_file(g.config);
      if (g.seed) cfg.master_seed = *g.seed;
      const std::string out = g.out.empty() ? cfg.name : g.out;
      const std::uint64_t used = cvep::synth_generate(cfg, out);
      std::printf("master_seed %llu\n", static_cast<unsigned long long>(used));
      std::printf("dataset written to %s\n", out.c_str());
    } else if (*prep_cmd) {
      if (g.out.empty()) cvep::fail("ConfigError", "--out <dir> is required");
      cvep::LoadedDataset ds = cvep::load_dataset(prep_in);
      std::vector<cvep::SyntheticSubject> subjects;
      for (auto& subj : ds.subjects) {
        cvep::TrialSet cal = subj.calibration;
        cvep::TrialSet test = subj.test;
        auto pipe = [&](cvep::TrialSet ts) {
          if (ts.trials() == 0) return ts;
          if (!prep_filter.empty()) {
            double lo, hi;
            int order;
            if (std::sscanf(prep_filter.c_str(), "%lf:%lf:%d", &lo, &hi, &order) != 3)
              cvep::fail("ConfigError", "--filter expects lo:hi:order");
            const auto filt = cvep::design_bandpass(order, lo, hi, ts.fs_hz);
            ts = cvep::apply_filter(filt, ts, !prep_causal);
          }
          if (prep_resample > 0.0) ts = cvep::resample(ts, prep_resample);
          if (prep_average > 1) ts = cvep::average_groups(ts, prep_average);
          if (prep_fit > 0) ts = cvep::fit_length(ts, prep_fit);
          return ts;
        };
        cvep::SyntheticSubject out_subj;
        out_subj.subject_id = subj.record.subject_id;
        out_subj.calibration = pipe(std::move(cal));
        out_subj.test = pipe(std::move(test));
        subjects.push_back(std::move(out_subj));
      }
      cvep::write_dataset(g.out, ds.manifest.name, ds.codebook, subjects);
      std::printf("preprocessed dataset written to %s\n", g.out.c_str());
    } else if (*free_cmd || *lim_cmd || *within_cmd) {
      const cvep::Paradigm paradigm = *free_cmd   ? cvep::Paradigm::CalibrationFree
                                      : *lim_cmd ? cvep::Paradigm::Limited
                                                 : cvep::Paradigm::Within;
      const cvep::ExperimentConfig cfg = load_experiment_config(g, paradigm);
      const auto results = cvep::run_experiment(cfg);
      print_summary(results, cfg.output_path);
    } else if (*cca_cmd) {
      cvep::BaselineConfig cfg;
      cfg.dataset_path = cca_in;
      cfg.ridge = cca_ridge;
      if (g.seed) cfg.seed = *g.seed;
      if (!g.out.empty()) cfg.output_path = g.out;
      const auto results = cvep::run_baseline_cca(cfg);
      print_summary(results, cfg.output_path);
    } else if (*report_cmd) {
      const auto results = cvep::read_results_csv(report_in);
      const auto rows = cvep::aggregate(results, split_csv_list(report_exclude));
      std::printf(
          "paradigm,fraction,trial_mode,n,mean_accuracy,std_accuracy,mean_calib_seconds\n");
      for (const auto& row : rows)
        std::printf("%s,%.4f,%s,%d,%.6f,%.6f,%.1f\n", cvep::to_string(row.paradigm).c_str(),
                    row.fraction, row.trial_mode.c_str(), row.n, row.mean_accuracy,
                    row.std_accuracy, row.mean_calib_seconds);
    }
  } catch (const cvep::Error& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "InternalError: %s\n", e.what());
    return 1;
  }
  return 0;
}
