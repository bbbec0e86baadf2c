#include "cvep/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cvep/error.hpp"
#include "cvep/rng.hpp"

namespace cvep {

std::string to_string(Paradigm p) {
  switch (p) {
    case Paradigm::CalibrationFree: return "calibration_free";
    case Paradigm::Limited: return "limited";
    case Paradigm::Within: return "within";
    case Paradigm::BaselineCca: return "baseline_cca";
  }
  return "calibration_free";
}

Paradigm paradigm_from_string(const std::string& s) {
  if (s == "calibration_free") return Paradigm::CalibrationFree;
  if (s == "limited") return Paradigm::Limited;
  if (s == "within") return Paradigm::Within;
  if (s == "baseline_cca") return Paradigm::BaselineCca;
  fail("ConfigError", "unknown paradigm '" + s + "'");
}

namespace {

constexpr std::uint64_t kFreeSplitTag = 0x66726565ull;
constexpr std::uint64_t kFinetuneSplitTag = 0x66696E65ull;
constexpr std::uint64_t kInitTag = 0x696E6974ull;
constexpr std::uint64_t kTrainTag = 0x7472616Eull;

/// Largest-remainder allocation of round(fraction * total) slots across
/// strata, proportional to stratum sizes. Deterministic; ties keep stratum
/// order.
std::vector<int> allocate_quota(const std::vector<int>& sizes, double fraction) {
  const long total = std::accumulate(sizes.begin(), sizes.end(), 0L);
  long want = std::lround(fraction * static_cast<double>(total));
  std::vector<int> base(sizes.size());
  std::vector<std::pair<double, std::size_t>> rema;
  long assigned = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const double exact = fraction * sizes[i];
    base[i] = static_cast<int>(std::floor(exact + 1e-12));
    base[i] = std::min(base[i], sizes[i]);
    assigned += base[i];
    rema.emplace_back(exact - base[i], i);
  }
  std::stable_sort(rema.begin(), rema.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (const auto& [frac, i] : rema) {
    if (assigned >= want) break;
    if (base[i] < sizes[i]) {
      ++base[i];
      ++assigned;
    }
  }
  return base;
}

}  // namespace

SplitPlan plan_calibration_free(const ProtocolDataset& ds, int target_subject,
                                std::uint64_t seed) {
  if (ds.subjects.size() < 2)
    fail("SingleSubject", "calibration-free evaluation needs at least two subjects");
  if (target_subject < 0 || target_subject >= static_cast<int>(ds.subjects.size()))
    fail("BadShape", "target subject index out of range");

  Rng rng(derive_seed(derive_seed(seed, kFreeSplitTag), static_cast<std::uint64_t>(target_subject)));

  // strata: (subject, class) cells over the pooled non-target calibration trials
  std::vector<std::vector<int>> strata;  // trial indices within the owning subject
  std::vector<int> strata_subject;
  for (int s = 0; s < static_cast<int>(ds.subjects.size()); ++s) {
    if (s == target_subject) continue;
    const ProtocolSubject& subj = ds.subjects[s];
    std::vector<std::vector<int>> per_class(ds.n_classes);
    for (int i = 0; i < subj.calib.trials(); ++i) per_class[subj.calib.labels[i]].push_back(i);
    for (int k = 0; k < ds.n_classes; ++k) {
      if (per_class[k].empty()) continue;
      strata.push_back(std::move(per_class[k]));
      strata_subject.push_back(s);
    }
  }

  std::vector<int> sizes;
  sizes.reserve(strata.size());
  for (const auto& st : strata) sizes.push_back(static_cast<int>(st.size()));
  const std::vector<int> val_quota = allocate_quota(sizes, 0.10);

  SplitPlan plan;
  plan.paradigm = Paradigm::CalibrationFree;
  plan.fraction = 0.0;
  for (std::size_t st = 0; st < strata.size(); ++st) {
    rng.shuffle(strata[st]);
    for (std::size_t i = 0; i < strata[st].size(); ++i) {
      const TrialRef ref{strata_subject[st], strata[st][i], false};
      if (static_cast<int>(i) < val_quota[st])
        plan.val.push_back(ref);
      else
        plan.train.push_back(ref);
    }
  }

  const ProtocolSubject& target = ds.subjects[target_subject];
  if (target.separate_test) {
    for (int i = 0; i < target.test.trials(); ++i)
      plan.test.push_back({target_subject, i, true});
  } else {
    for (int i = 0; i < target.calib.trials(); ++i)
      plan.test.push_back({target_subject, i, false});
  }
  return plan;
}

SplitPlan plan_finetune(const ProtocolDataset& ds, int target_subject, double fraction,
                        std::uint64_t seed) {
  if (target_subject < 0 || target_subject >= static_cast<int>(ds.subjects.size()))
    fail("BadShape", "target subject index out of range");
  if (!(fraction > 0.0 && fraction <= 1.0))
    fail("FractionOverflow", "fraction must lie in (0, 1]");
  const ProtocolSubject& subj = ds.subjects[target_subject];

  const double test_share = subj.separate_test ? 0.0 : 0.20;
  if (fraction + 0.10 + test_share > 1.0 + 1e-9)
    fail("FractionOverflow",
         "fraction " + std::to_string(fraction) + " + 10% validation + " +
             std::to_string(test_share) + " test exceeds the calibration pool");

  // trials grouped by sampling unit, units grouped by the class of their trials
  std::vector<std::vector<int>> unit_trials(subj.n_units);
  for (int i = 0; i < subj.calib.trials(); ++i) unit_trials[subj.calib_unit[i]].push_back(i);
  // a unit's stratum is the class of its first trial; circular-shift units
  // span all classes and land in stratum 0 together
  std::vector<std::vector<int>> class_units(ds.n_classes);
  for (int u = 0; u < subj.n_units; ++u) {
    if (unit_trials[u].empty()) continue;
    const int k = subj.separate_test ? 0 : subj.calib.labels[unit_trials[u].front()];
    class_units[k].push_back(u);
  }

  Rng rng(derive_seed(derive_seed(seed, kFinetuneSplitTag),
                      static_cast<std::uint64_t>(target_subject)));
  for (auto& units : class_units) rng.shuffle(units);

  std::vector<int> sizes;
  for (const auto& units : class_units) sizes.push_back(static_cast<int>(units.size()));
  const std::vector<int> test_quota = allocate_quota(sizes, test_share);
  const std::vector<int> val_quota = allocate_quota(sizes, 0.10);
  const std::vector<int> train_quota = allocate_quota(sizes, fraction);

  SplitPlan plan;
  plan.paradigm = Paradigm::Limited;
  plan.fraction = fraction;
  for (std::size_t k = 0; k < class_units.size(); ++k) {
    if (test_quota[k] + val_quota[k] + train_quota[k] > sizes[k])
      fail("FractionOverflow", "split quotas exceed units in class " + std::to_string(k));
    std::size_t pos = 0;
    auto take = [&](int count, std::vector<TrialRef>& dst) {
      for (int c = 0; c < count; ++c, ++pos)
        for (int trial : unit_trials[class_units[k][pos]])
          dst.push_back({target_subject, trial, false});
    };
    take(test_quota[k], plan.test);
    take(val_quota[k], plan.val);
    take(train_quota[k], plan.train);
    plan.n_train_units += train_quota[k];
  }
  if (subj.separate_test) {
    plan.test.clear();
    for (int i = 0; i < subj.test.trials(); ++i)
      plan.test.push_back({target_subject, i, true});
  }
  return plan;
}

TrainStore gather(const ProtocolDataset& ds, const std::vector<TrialRef>& refs) {
  TrainStore out;
  out.mode = ds.mode;
  out.labels.reserve(refs.size());
  if (ds.mode == EncoderMode::Raw) {
    const int c = ds.subjects.empty() ? 0 : ds.subjects.front().calib.basis.channels();
    out.basis.u = Tensor4(static_cast<int>(refs.size()), kTimeWindows, c, kEmbedDim);
    const std::size_t slab = static_cast<std::size_t>(kTimeWindows) * c * kEmbedDim;
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const ProtocolSubject& subj = ds.subjects[refs[i].subject];
      const TrainStore& src = refs[i].from_test ? subj.test : subj.calib;
      std::memcpy(out.basis.u.slab(static_cast<int>(i)), src.basis.u.slab(refs[i].index),
                  slab * sizeof(double));
      out.labels.push_back(src.labels[refs[i].index]);
    }
  } else {
    out.features.provenance = FeatureProvenance::Imported;
    out.features.z =
        Tensor4(static_cast<int>(refs.size()), kSpatialTokens, kTimeWindows, kEmbedDim);
    const std::size_t slab =
        static_cast<std::size_t>(kSpatialTokens) * kTimeWindows * kEmbedDim;
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const ProtocolSubject& subj = ds.subjects[refs[i].subject];
      const TrainStore& src = refs[i].from_test ? subj.test : subj.calib;
      std::memcpy(out.features.z.slab(static_cast<int>(i)), src.features.z.slab(refs[i].index),
                  slab * sizeof(double));
      out.labels.push_back(src.labels[refs[i].index]);
    }
  }
  return out;
}

double evaluate_accuracy(const TaskHead& head, const SpatialFilter& sf,
                         const ProtocolDataset& ds, const std::vector<TrialRef>& test) {
  if (test.empty()) fail("EmptyTestSet", "no test trials");
  if (head.k != ds.n_classes)
    fail("ShapeError", "model has " + std::to_string(head.k) + " classes, dataset has " +
                           std::to_string(ds.n_classes));
  const TrainStore store = gather(ds, test);
  std::vector<int> idx(store.trials());
  std::iota(idx.begin(), idx.end(), 0);
  return evaluate(store, idx, sf, ds.enc, head).accuracy;
}

long calibration_seconds(long n_calib_trials, double trial_duration_s) {
  if (n_calib_trials < 0) fail("BadShape", "trial count must be >= 0");
  if (n_calib_trials == 0) return 0;
  return static_cast<long>(std::ceil(static_cast<double>(n_calib_trials) * trial_duration_s -
                                     1e-9));
}

namespace {

TrainConfig with_seed(TrainConfig cfg, std::uint64_t seed) {
  cfg.seed = seed;
  return cfg;
}

}  // namespace

CalibrationFreeOutput run_calibration_free(const ProtocolDataset& ds,
                                           const ProtocolConfig& cfg) {
  CalibrationFreeOutput out;
  for (int target = 0; target < static_cast<int>(ds.subjects.size()); ++target) {
    const SplitPlan plan = plan_calibration_free(ds, target, cfg.seed);
    const TrainStore tr = gather(ds, plan.train);
    const TrainStore va = gather(ds, plan.val);

    const std::uint64_t job_seed =
        derive_seed(derive_seed(cfg.seed, kInitTag), static_cast<std::uint64_t>(target));
    TaskHead head0 = TaskHead::init(ds.n_classes, job_seed);
    SpatialFilter sf0 = SpatialFilter::identity(ds.enc.channels());
    const TrainOutcome fit = train(tr, va, std::move(head0), std::move(sf0), ds.enc,
                                   with_seed(cfg.free_cfg, derive_seed(job_seed, kTrainTag)));

    ExperimentResult res;
    res.dataset = ds.name;
    res.subject_id = ds.subjects[target].id;
    res.paradigm = Paradigm::CalibrationFree;
    res.fraction = 0.0;
    res.trial_mode = cfg.trial_mode;
    res.accuracy = evaluate_accuracy(fit.head, fit.sf, ds, plan.test);
    res.n_test = static_cast<int>(plan.test.size());
    res.calib_seconds = 0;
    res.seed = cfg.seed;
    res.selected_epoch = fit.selected_epoch;
    out.results.push_back(res);

    Checkpoint ckpt;
    ckpt.sf = fit.sf;
    ckpt.head = fit.head;
    ckpt.channels = ds.enc.channels();
    ckpt.seed = cfg.seed;
    ckpt.cfg = cfg.free_cfg;
    ckpt.selected_epoch = fit.selected_epoch;
    ckpt.val_loss = fit.best_val_loss;
    out.checkpoints.by_subject.emplace(target, std::move(ckpt));
  }
  return out;
}

std::vector<ExperimentResult> run_limited(const ProtocolDataset& ds,
                                          const std::vector<double>& fractions,
                                          const ProtocolConfig& cfg,
                                          const SubjectCheckpoints& checkpoints) {
  std::vector<ExperimentResult> results;
  for (int target = 0; target < static_cast<int>(ds.subjects.size()); ++target) {
    const auto it = checkpoints.by_subject.find(target);
    if (it == checkpoints.by_subject.end())
      fail("MissingCheckpoint", "no calibration-free checkpoint for subject " +
                                    ds.subjects[target].id);
    for (double fraction : fractions) {
      SplitPlan plan = plan_finetune(ds, target, fraction, cfg.seed);
      plan.paradigm = Paradigm::Limited;
      const TrainStore tr = gather(ds, plan.train);
      const TrainStore va = gather(ds, plan.val);

      const std::uint64_t job_seed = derive_seed(
          derive_seed(derive_seed(cfg.seed, kInitTag), static_cast<std::uint64_t>(target)),
          static_cast<std::uint64_t>(std::llround(fraction * 1e6)));
      const TrainOutcome fit =
          train(tr, va, it->second.head, it->second.sf, ds.enc,
                with_seed(cfg.finetune_cfg, derive_seed(job_seed, kTrainTag)));

      ExperimentResult res;
      res.dataset = ds.name;
      res.subject_id = ds.subjects[target].id;
      res.paradigm = Paradigm::Limited;
      res.fraction = fraction;
      res.trial_mode = cfg.trial_mode;
      res.accuracy = evaluate_accuracy(fit.head, fit.sf, ds, plan.test);
      res.n_test = static_cast<int>(plan.test.size());
      res.calib_seconds = calibration_seconds(
          plan.n_train_units,
          ds.subjects[target].seconds_per_unit);
      res.seed = cfg.seed;
      res.selected_epoch = fit.selected_epoch;
      results.push_back(res);
    }
  }
  return results;
}

std::vector<ExperimentResult> run_within(const ProtocolDataset& ds,
                                         const std::vector<double>& fractions,
                                         const ProtocolConfig& cfg) {
  std::vector<ExperimentResult> results;
  for (int target = 0; target < static_cast<int>(ds.subjects.size()); ++target) {
    for (double fraction : fractions) {
      SplitPlan plan = plan_finetune(ds, target, fraction, cfg.seed);
      plan.paradigm = Paradigm::Within;
      const TrainStore tr = gather(ds, plan.train);
      const TrainStore va = gather(ds, plan.val);

      const std::uint64_t job_seed = derive_seed(
          derive_seed(derive_seed(cfg.seed, kInitTag + 1), static_cast<std::uint64_t>(target)),
          static_cast<std::uint64_t>(std::llround(fraction * 1e6)));
      TaskHead head0 = TaskHead::init(ds.n_classes, job_seed);
      SpatialFilter sf0 = SpatialFilter::identity(ds.enc.channels());
      const TrainOutcome fit =
          train(tr, va, std::move(head0), std::move(sf0), ds.enc,
                with_seed(cfg.finetune_cfg, derive_seed(job_seed, kTrainTag)));

      ExperimentResult res;
      res.dataset = ds.name;
      res.subject_id = ds.subjects[target].id;
      res.paradigm = Paradigm::Within;
      res.fraction = fraction;
      res.trial_mode = cfg.trial_mode;
      res.accuracy = evaluate_accuracy(fit.head, fit.sf, ds, plan.test);
      res.n_test = static_cast<int>(plan.test.size());
      res.calib_seconds = calibration_seconds(
          plan.n_train_units, ds.subjects[target].seconds_per_unit);
      res.seed = cfg.seed;
      res.selected_epoch = fit.selected_epoch;
      results.push_back(res);
    }
  }
  return results;
}

std::vector<AggregateRow> aggregate(const std::vector<ExperimentResult>& results,
                                    const std::vector<std::string>& exclude_subjects) {
  if (results.empty()) fail("EmptyTestSet", "no results to aggregate");
  auto excluded = [&](const std::string& id) {
    return std::find(exclude_subjects.begin(), exclude_subjects.end(), id) !=
           exclude_subjects.end();
  };
  std::map<std::tuple<int, double, std::string>, std::vector<const ExperimentResult*>> groups;
  for (const ExperimentResult& r : results) {
    if (excluded(r.subject_id)) continue;
    groups[{static_cast<int>(r.paradigm), r.fraction, r.trial_mode}].push_back(&r);
  }
  std::vector<AggregateRow> rows;
  for (const auto& [key, members] : groups) {
    AggregateRow row;
    row.paradigm = static_cast<Paradigm>(std::get<0>(key));
    row.fraction = std::get<1>(key);
    row.trial_mode = std::get<2>(key);
    row.n = static_cast<int>(members.size());
    double sum = 0.0, sum_cal = 0.0;
    for (const ExperimentResult* r : members) {
      sum += r->accuracy;
      sum_cal += static_cast<double>(r->calib_seconds);
    }
    row.mean_accuracy = sum / row.n;
    row.mean_calib_seconds = sum_cal / row.n;
    double ss = 0.0;
    for (const ExperimentResult* r : members) {
      const double d = r->accuracy - row.mean_accuracy;
      ss += d * d;
    }
    row.std_accuracy = std::sqrt(ss / row.n);
    rows.push_back(row);
  }
  return rows;
}

void write_results_csv(const std::filesystem::path& path,
                       const std::vector<ExperimentResult>& results,
                       const std::string& config_hash) {
  std::vector<const ExperimentResult*> sorted;
  sorted.reserve(results.size());
  for (const ExperimentResult& r : results) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ExperimentResult* a, const ExperimentResult* b) {
                     return std::tie(a->subject_id, a->fraction, a->paradigm, a->seed,
                                     a->trial_mode) <
                            std::tie(b->subject_id, b->fraction, b->paradigm, b->seed,
                                     b->trial_mode);
                   });
  std::ofstream out(path);
  if (!out) fail("FormatError", "cannot open " + path.string() + " for writing");
  out << "# config " << config_hash << "\n";
  out << "dataset,subject,paradigm,fraction,trial_mode,accuracy,n_test,calib_seconds,"
         "seed,selected_epoch\n";
  char buf[64];
  for (const ExperimentResult* r : sorted) {
    std::snprintf(buf, sizeof(buf), "%.4f", r->fraction);
    out << r->dataset << ',' << r->subject_id << ',' << to_string(r->paradigm) << ','
        << buf << ',' << r->trial_mode << ',';
    std::snprintf(buf, sizeof(buf), "%.6f", r->accuracy);
    out << buf << ',' << r->n_test << ',' << r->calib_seconds << ',' << r->seed << ','
        << r->selected_epoch << "\n";
  }
}

std::vector<ExperimentResult> read_results_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("FormatError", "cannot open results file " + path.string());
  std::vector<ExperimentResult> results;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("dataset,", 0) == 0) continue;
    std::istringstream ls(line);
    std::string tok;
    ExperimentResult r;
    auto next = [&]() {
      if (!std::getline(ls, tok, ',')) fail("FormatError", "short CSV row: " + line);
      return tok;
    };
    r.dataset = next();
    r.subject_id = next();
    r.paradigm = paradigm_from_string(next());
    r.fraction = std::stod(next());
    r.trial_mode = next();
    r.accuracy = std::stod(next());
    r.n_test = std::stoi(next());
    r.calib_seconds = std::stol(next());
    r.seed = std::stoull(next());
    r.selected_epoch = std::stoi(next());
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace cvep
