#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cvep/head.hpp"

namespace cvep {

enum class Paradigm { CalibrationFree, Limited, Within, BaselineCca };

std::string to_string(Paradigm p);
Paradigm paradigm_from_string(const std::string& s);

/// Encoded per-subject data as the protocols see it.
struct ProtocolSubject {
  std::string id;
  TrainStore calib;  // calibration pool (synthesized already, for circular shift)
  TrainStore test;   // separate test partition; may be empty for ensemble subjects
  bool separate_test = false;
  /// Sampling unit of each calibration trial: the trial index itself for
  /// ensemble subjects, the originating reference recording for
  /// circular-shift subjects. Fractions select units, not trials, so
  /// calibration-time accounting counts real recordings.
  std::vector<int> calib_unit;
  int n_units = 0;
  /// Recorded seconds represented by one unit (trial duration, times the
  /// averaging group size when composites are in play).
  double seconds_per_unit = 0.0;
};

struct ProtocolDataset {
  std::string name;
  int n_classes = 0;
  EncoderMode mode = EncoderMode::Raw;
  ReferenceEncoderParams enc;
  std::vector<ProtocolSubject> subjects;
};

struct TrialRef {
  int subject = 0;
  int index = 0;
  bool from_test = false;
};

struct SplitPlan {
  Paradigm paradigm = Paradigm::CalibrationFree;
  double fraction = 0.0;
  std::vector<TrialRef> train, val, test;
  int n_train_units = 0;  // target-subject units consumed (0 for calibration-free)
};

/// Pools every non-target calibration trial, splits 90/10 stratified by
/// (subject, class) with seeded shuffling; all target trials become test.
SplitPlan plan_calibration_free(const ProtocolDataset& ds, int target_subject,
                                std::uint64_t seed);

/// Shared split for the limited and within paradigms: a fixed 20% per-class
/// test hold-out for ensemble subjects (the test partition for circular
/// shift), 10% of units for validation, round(fraction * units) for
/// training. Identical (subject, seed) inputs give identical index sets,
/// and train sets are nested across fractions.
SplitPlan plan_finetune(const ProtocolDataset& ds, int target_subject, double fraction,
                        std::uint64_t seed);

/// Gathers referenced trials into a standalone store.
TrainStore gather(const ProtocolDataset& ds, const std::vector<TrialRef>& refs);

struct ExperimentResult {
  std::string dataset;
  std::string subject_id;
  Paradigm paradigm = Paradigm::CalibrationFree;
  double fraction = 0.0;
  std::string trial_mode = "single";
  double accuracy = 0.0;
  int n_test = 0;
  long calib_seconds = 0;
  std::uint64_t seed = 0;
  int selected_epoch = 0;
};

struct ProtocolConfig {
  TrainConfig free_cfg;                       // 200 epochs, lr 1e-3 defaults
  TrainConfig finetune_cfg{400, 64, 5e-4};    // warm-start schedule
  std::uint64_t seed = 0;
  std::string trial_mode = "single";
};

/// Per-subject trained calibration-free models, the warm-start pool for the
/// limited paradigm.
struct SubjectCheckpoints {
  std::map<int, Checkpoint> by_subject;
};

struct CalibrationFreeOutput {
  std::vector<ExperimentResult> results;
  SubjectCheckpoints checkpoints;
};

CalibrationFreeOutput run_calibration_free(const ProtocolDataset& ds,
                                           const ProtocolConfig& cfg);

std::vector<ExperimentResult> run_limited(const ProtocolDataset& ds,
                                          const std::vector<double>& fractions,
                                          const ProtocolConfig& cfg,
                                          const SubjectCheckpoints& checkpoints);

std::vector<ExperimentResult> run_within(const ProtocolDataset& ds,
                                         const std::vector<double>& fractions,
                                         const ProtocolConfig& cfg);

/// Fraction of test trials whose argmax logit matches the label (ties to
/// the lowest class index). ShapeError when the head's class count differs
/// from the dataset's.
double evaluate_accuracy(const TaskHead& head, const SpatialFilter& sf,
                         const ProtocolDataset& ds, const std::vector<TrialRef>& test);

/// ceil(n_calib_trials * trial_duration_s), in whole seconds.
long calibration_seconds(long n_calib_trials, double trial_duration_s);

struct AggregateRow {
  Paradigm paradigm = Paradigm::CalibrationFree;
  double fraction = 0.0;
  std::string trial_mode;
  int n = 0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // population standard deviation
  double mean_calib_seconds = 0.0;
};

/// Population mean and std per (paradigm, fraction, trial_mode), with an
/// optional subject exclusion list.
std::vector<AggregateRow> aggregate(const std::vector<ExperimentResult>& results,
                                    const std::vector<std::string>& exclude_subjects = {});

/// Deterministic CSV (sorted by subject, fraction, paradigm, seed) with a
/// leading config-hash comment.
void write_results_csv(const std::filesystem::path& path,
                       const std::vector<ExperimentResult>& results,
                       const std::string& config_hash);

std::vector<ExperimentResult> read_results_csv(const std::filesystem::path& path);

}  // namespace cvep
