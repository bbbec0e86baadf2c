#include "cvep/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "cvep/baseline.hpp"
#include "cvep/error.hpp"

namespace cvep {

namespace fs = std::filesystem;
using nlohmann::json;

void ExperimentConfig::validate() const {
  if (dataset_path.empty()) fail("ConfigError", "dataset path is required");
  if (seeds.empty()) fail("ConfigError", "at least one seed is required");
  if (paradigms.empty()) fail("ConfigError", "at least one paradigm is required");
  for (double f : fractions)
    if (!(f > 0.0 && f <= 1.0))
      fail("ConfigError", "fractions must lie in (0, 1], got " + std::to_string(f));
  if (trial_mode != "single" && trial_mode != "averaged")
    fail("ConfigError", "trial_mode must be 'single' or 'averaged'");
  if (average_group < 1) fail("ConfigError", "average_group must be >= 1");
  if (epochs_free < 1 || epochs_finetune < 1)
    fail("ConfigError", "epoch counts must be >= 1");
  if (batch_size < 1) fail("ConfigError", "batch_size must be >= 1");
  if (encoder_mode != "reference" && encoder_mode != "imported")
    fail("ConfigError", "encoder mode must be 'reference' or 'imported'");
}

namespace {

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig cfg;
  try {
    cfg.dataset_path = j.value("dataset", "");
    if (j.contains("paradigms")) {
      cfg.paradigms.clear();
      for (const auto& p : j.at("paradigms"))
        cfg.paradigms.push_back(paradigm_from_string(p.get<std::string>()));
    }
    cfg.fractions = j.value("fractions", std::vector<double>{});
    cfg.trial_mode = j.value("trial_mode", cfg.trial_mode);
    cfg.average_group = j.value("average_group", cfg.average_group);
    if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    cfg.epochs_free = j.value("epochs_free", cfg.epochs_free);
    cfg.epochs_finetune = j.value("epochs_finetune", cfg.epochs_finetune);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.lr = j.value("lr", cfg.lr);
    cfg.lr_finetune = j.value("lr_finetune", cfg.lr_finetune);
    cfg.beta1 = j.value("beta1", cfg.beta1);
    cfg.beta2 = j.value("beta2", cfg.beta2);
    cfg.eps = j.value("eps", cfg.eps);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    if (j.contains("encoder")) {
      const json& e = j.at("encoder");
      cfg.encoder_mode = e.value("mode", cfg.encoder_mode);
      cfg.encoder_seed = e.value("seed", cfg.encoder_seed);
    }
    if (j.contains("bandpass")) {
      const json& b = j.at("bandpass");
      BandpassConfig bp;
      bp.order = b.value("order", bp.order);
      bp.f_lo = b.value("f_lo", bp.f_lo);
      bp.f_hi = b.value("f_hi", bp.f_hi);
      bp.zero_phase = b.value("zero_phase", bp.zero_phase);
      cfg.bandpass = bp;
    }
    cfg.output_path = j.value("output", cfg.output_path);
  } catch (const json::exception& e) {
    fail("ConfigError", std::string("bad experiment config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

json experiment_config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["dataset"] = cfg.dataset_path;
  std::vector<std::string> paradigms;
  for (Paradigm p : cfg.paradigms) paradigms.push_back(to_string(p));
  j["paradigms"] = paradigms;
  j["fractions"] = cfg.fractions;
  j["trial_mode"] = cfg.trial_mode;
  j["average_group"] = cfg.average_group;
  j["seeds"] = cfg.seeds;
  j["epochs_free"] = cfg.epochs_free;
  j["epochs_finetune"] = cfg.epochs_finetune;
  j["batch_size"] = cfg.batch_size;
  j["lr"] = cfg.lr;
  j["lr_finetune"] = cfg.lr_finetune;
  j["beta1"] = cfg.beta1;
  j["beta2"] = cfg.beta2;
  j["eps"] = cfg.eps;
  j["weight_decay"] = cfg.weight_decay;
  j["encoder"] = {{"mode", cfg.encoder_mode}, {"seed", cfg.encoder_seed}};
  if (cfg.bandpass) {
    j["bandpass"] = {{"order", cfg.bandpass->order},
                     {"f_lo", cfg.bandpass->f_lo},
                     {"f_hi", cfg.bandpass->f_hi},
                     {"zero_phase", cfg.bandpass->zero_phase}};
  }
  j["output"] = cfg.output_path;
  return j;
}

json parse_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail("ConfigError", "cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail("ConfigError", path.string() + ": " + e.what());
  }
  return j;
}

}  // namespace

ExperimentConfig experiment_config_from_json_file(const fs::path& path) {
  return experiment_config_from_json(parse_json_file(path));
}

ExperimentConfig experiment_config_from_json_text(const std::string& text) {
  try {
    return experiment_config_from_json(json::parse(text));
  } catch (const json::exception& e) {
    fail("ConfigError", std::string("bad config JSON: ") + e.what());
  }
}

std::string experiment_config_canonical(const ExperimentConfig& cfg) {
  return experiment_config_to_json(cfg).dump();
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<double> default_fractions(bool has_separate_test) {
  if (has_separate_test) return {0.10, 0.20, 0.40, 0.60, 0.80};
  return {0.10, 0.20, 0.40, 0.60, 0.70};
}

ProtocolDataset prepare_dataset(const ExperimentConfig& cfg) {
  const LoadedDataset loaded = load_dataset(cfg.dataset_path);
  const int channels = loaded.manifest.subjects.front().n_channels;
  const int n_classes = loaded.manifest.subjects.front().n_classes;
  for (const SubjectRecord& r : loaded.manifest.subjects) {
    if (r.n_channels != channels)
      fail("ChannelMismatch", "subjects disagree on channel count");
    if (r.n_classes != n_classes)
      fail("FormatError", "subjects disagree on class count");
  }

  ProtocolDataset ds;
  ds.name = loaded.manifest.name;
  ds.n_classes = n_classes;
  ds.mode = cfg.encoder_mode == "imported" ? EncoderMode::Imported : EncoderMode::Raw;
  ds.enc = ReferenceEncoderParams::make(channels, cfg.encoder_seed);

  const bool averaged = cfg.trial_mode == "averaged";
  for (std::size_t s = 0; s < loaded.subjects.size(); ++s) {
    const LoadedSubject& src = loaded.subjects[s];
    const SubjectRecord& rec = src.record;
    ProtocolSubject subj;
    subj.id = rec.subject_id;
    subj.separate_test = rec.n_calibration_trials < rec.n_trials;
    subj.seconds_per_unit = rec.trial_duration_s * (averaged ? cfg.average_group : 1);

    if (ds.mode == EncoderMode::Imported) {
      if (rec.features_file.empty())
        fail("FormatError", "subject " + rec.subject_id + " has no features_file");
      if (averaged || cfg.bandpass)
        fail("ConfigError", "imported features cannot be re-preprocessed");
      const ImportedFeatures feats = load_features(fs::path(cfg.dataset_path) / rec.features_file);
      auto slice = [&](int first, int count) {
        TrainStore store;
        store.mode = EncoderMode::Imported;
        store.features.provenance = FeatureProvenance::Imported;
        store.features.z = Tensor4(count, kSpatialTokens, kTimeWindows, kEmbedDim);
        const std::size_t slab = static_cast<std::size_t>(kSpatialTokens) * kTimeWindows * kEmbedDim;
        for (int i = 0; i < count; ++i)
          std::copy_n(feats.features.z.slab(first + i), slab, store.features.z.slab(i));
        store.labels.assign(feats.labels.begin() + first, feats.labels.begin() + first + count);
        return store;
      };
      subj.calib = slice(0, rec.n_calibration_trials);
      subj.test = slice(rec.n_calibration_trials, rec.n_trials - rec.n_calibration_trials);
      subj.n_units = subj.calib.trials();
      subj.calib_unit.resize(subj.calib.trials());
      std::iota(subj.calib_unit.begin(), subj.calib_unit.end(), 0);
      ds.subjects.push_back(std::move(subj));
      continue;
    }

    TrialSet calib = src.calibration;
    TrialSet test = src.test;
    if (cfg.bandpass) {
      const BiquadCascade filt = design_bandpass(cfg.bandpass->order, cfg.bandpass->f_lo,
                                                 cfg.bandpass->f_hi, calib.fs_hz);
      calib = apply_filter(filt, calib, cfg.bandpass->zero_phase);
      if (test.trials() > 0) test = apply_filter(filt, test, cfg.bandpass->zero_phase);
    }
    if (averaged) {
      calib = average_groups(calib, cfg.average_group);
      if (test.trials() > 0) test = average_groups(test, cfg.average_group);
    }
    if (rec.paradigm == "circular_shift") {
      const int n_refs = calib.trials();
      calib = synthesize_shifted(calib, loaded.codebook);
      subj.n_units = n_refs;
      subj.calib_unit.resize(calib.trials());
      for (int i = 0; i < calib.trials(); ++i)
        subj.calib_unit[i] = i / loaded.codebook.n_targets;
    } else {
      subj.n_units = calib.trials();
      subj.calib_unit.resize(calib.trials());
      std::iota(subj.calib_unit.begin(), subj.calib_unit.end(), 0);
    }
    calib = fit_length(calib, kTrialLen);
    if (test.trials() > 0) test = fit_length(test, kTrialLen);

    subj.calib.mode = EncoderMode::Raw;
    subj.calib.basis = encode_basis(calib.data, ds.enc);
    subj.calib.labels = calib.labels;
    subj.test.mode = EncoderMode::Raw;
    if (test.trials() > 0) {
      subj.test.basis = encode_basis(test.data, ds.enc);
      subj.test.labels = test.labels;
    } else {
      subj.test.basis.u = Tensor4(0, kTimeWindows, channels, kEmbedDim);
    }
    ds.subjects.push_back(std::move(subj));
  }
  return ds;
}

std::vector<ExperimentResult> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const ProtocolDataset ds = prepare_dataset(cfg);

  bool want_free = false, want_limited = false, want_within = false;
  for (Paradigm p : cfg.paradigms) {
    want_free |= p == Paradigm::CalibrationFree;
    want_limited |= p == Paradigm::Limited;
    want_within |= p == Paradigm::Within;
  }
  std::vector<double> fractions = cfg.fractions;
  if (fractions.empty()) {
    const bool separate = std::any_of(ds.subjects.begin(), ds.subjects.end(),
                                      [](const ProtocolSubject& s) { return s.separate_test; });
    fractions = default_fractions(separate);
  }

  const fs::path out_dir = cfg.output_path;
  fs::create_directories(out_dir);
  const fs::path ckpt_dir = out_dir / "checkpoints";
  if (want_free || want_limited) fs::create_directories(ckpt_dir);

  std::vector<ExperimentResult> results;
  for (std::uint64_t seed : cfg.seeds) {
    ProtocolConfig pc;
    pc.seed = seed;
    pc.trial_mode = cfg.trial_mode;
    pc.free_cfg = TrainConfig{cfg.epochs_free, cfg.batch_size, cfg.lr,
                              cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay, seed};
    pc.finetune_cfg = TrainConfig{cfg.epochs_finetune, cfg.batch_size, cfg.lr_finetune,
                                  cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay, seed};

    SubjectCheckpoints checkpoints;
    if (want_free || want_limited) {
      CalibrationFreeOutput free_out = run_calibration_free(ds, pc);
      if (want_free)
        results.insert(results.end(), free_out.results.begin(), free_out.results.end());
      checkpoints = std::move(free_out.checkpoints);
      for (const auto& [target, ckpt] : checkpoints.by_subject) {
        save_checkpoint(ckpt, ckpt_dir / ("free_" + ds.subjects[target].id + "_seed" +
                                          std::to_string(seed) + ".ckpt"));
      }
    }
    if (want_limited) {
      const auto rows = run_limited(ds, fractions, pc, checkpoints);
      results.insert(results.end(), rows.begin(), rows.end());
    }
    if (want_within) {
      const auto rows = run_within(ds, fractions, pc);
      results.insert(results.end(), rows.begin(), rows.end());
    }
  }

  write_results_csv(out_dir / "results.csv", results,
                    fnv1a_hex(experiment_config_canonical(cfg)));
  return results;
}

namespace {

CodeBook codebook_from_json(const json& j) {
  const std::string type = j.value("type", "golay");
  const double bit_rate = j.value("bit_rate_hz", 60.0);
  const int n_targets = j.value("n_targets", 16);
  BitSequence base;
  if (type == "m-sequence") {
    const int n = j.value("register_len", 6);
    std::vector<int> taps = j.value("taps", std::vector<int>{});
    if (taps.empty()) taps = {n, 1};
    std::vector<int> init = j.value("init_state", std::vector<int>{});
    if (init.empty()) init.assign(n, 1);
    base = generate_m_sequence(n, taps, init, bit_rate);
  } else if (type == "golay") {
    base = generate_golay_pair(j.value("order", 6), bit_rate).first;
  } else {
    fail("InvalidSpec", "codebook type must be 'm-sequence' or 'golay'");
  }
  int step = j.value("shift_step", 0);
  if (step == 0) {
    step = base.length() % n_targets == 0 ? base.length() / n_targets : 1;
  }
  return build_codebook(base, n_targets, step);
}

SynthGenConfig synth_config_from_json(const json& j) {
  SynthGenConfig cfg;
  try {
    CohortSpec& s = cfg.spec;
    s.n_subjects = j.value("n_subjects", s.n_subjects);
    s.similarity_rho = j.value("similarity_rho", s.similarity_rho);
    s.n_trials_per_target = j.value("n_trials_per_target", s.n_trials_per_target);
    s.snr = j.value("snr", s.snr);
    s.fs_hz = j.value("fs_hz", s.fs_hz);
    s.duration_s = j.value("duration_s", s.duration_s);
    s.n_channels = j.value("n_channels", s.n_channels);
    s.paradigm = j.value("paradigm", s.paradigm);
    s.n_reference_trials = j.value("n_reference_trials", s.n_reference_trials);
    s.n_test_trials_per_target = j.value("n_test_trials_per_target", s.n_test_trials_per_target);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.latency_jitter_s = j.value("latency_jitter_s", s.latency_jitter_s);
    s.kernel_latency_s = j.value("kernel_latency_s", s.kernel_latency_s);
    s.kernel_decay_s = j.value("kernel_decay_s", s.kernel_decay_s);
    s.kernel_freq_hz = j.value("kernel_freq_hz", s.kernel_freq_hz);
    if (!j.contains("codebook")) fail("InvalidSpec", "synth config needs a codebook block");
    s.codebook = codebook_from_json(j.at("codebook"));
    cfg.master_seed = j.value("master_seed", cfg.master_seed);
    cfg.name = j.value("name", cfg.name);
  } catch (const json::exception& e) {
    fail("InvalidSpec", std::string("bad synth config: ") + e.what());
  }
  cfg.spec.validate();
  return cfg;
}

}  // namespace

SynthGenConfig synth_config_from_json_file(const fs::path& path) {
  return synth_config_from_json(parse_json_file(path));
}

SynthGenConfig synth_config_from_json_text(const std::string& text) {
  try {
    return synth_config_from_json(json::parse(text));
  } catch (const json::exception& e) {
    fail("InvalidSpec", std::string("bad synth config JSON: ") + e.what());
  }
}

std::uint64_t synth_generate(const SynthGenConfig& cfg, const fs::path& out_dir) {
  const std::vector<SyntheticSubject> cohort = generate_cohort(cfg.spec, cfg.master_seed);
  write_dataset(out_dir, cfg.name, cfg.spec.codebook, cohort);
  return cfg.master_seed;
}

std::vector<ExperimentResult> run_baseline_cca(const BaselineConfig& cfg) {
  const LoadedDataset loaded = load_dataset(cfg.dataset_path);
  const int n_classes = loaded.manifest.subjects.front().n_classes;

  std::vector<ExperimentResult> results;
  for (std::size_t s = 0; s < loaded.subjects.size(); ++s) {
    const LoadedSubject& subj = loaded.subjects[s];
    const SubjectRecord& rec = subj.record;
    TrialSet templates_src;
    TrialSet test_set;
    long calib_units = 0;

    if (rec.n_calibration_trials < rec.n_trials) {
      // separate test session; templates come from the (synthesized) pool
      if (rec.paradigm == "circular_shift") {
        templates_src = synthesize_shifted(subj.calibration, loaded.codebook);
        calib_units = subj.calibration.trials();
      } else {
        templates_src = subj.calibration;
        calib_units = subj.calibration.trials();
      }
      test_set = subj.test;
    } else {
      // carve a per-class 20% hold-out, templates from the rest
      const TrialSet& all = subj.calibration;
      std::vector<std::vector<int>> per_class(n_classes);
      for (int i = 0; i < all.trials(); ++i) per_class[all.labels[i]].push_back(i);
      Rng rng(derive_seed(derive_seed(cfg.seed, 0x63636100ull), static_cast<std::uint64_t>(s)));
      std::vector<int> test_idx, train_idx;
      for (auto& idx : per_class) {
        rng.shuffle(idx);
        const int n_test = static_cast<int>(std::lround(0.2 * idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i)
          (static_cast<int>(i) < n_test ? test_idx : train_idx).push_back(idx[i]);
      }
      auto subset = [&](const std::vector<int>& idx) {
        TrialSet ts;
        ts.fs_hz = all.fs_hz;
        ts.subject_id = all.subject_id;
        ts.trial_duration_s = all.trial_duration_s;
        ts.data = Tensor3(static_cast<int>(idx.size()), all.channels(), all.samples());
        const std::size_t slab = static_cast<std::size_t>(all.channels()) * all.samples();
        for (std::size_t i = 0; i < idx.size(); ++i) {
          std::copy_n(all.data.slab(idx[i]), slab, ts.data.slab(static_cast<int>(i)));
          ts.labels.push_back(all.labels[idx[i]]);
        }
        return ts;
      };
      templates_src = subset(train_idx);
      test_set = subset(test_idx);
      calib_units = templates_src.trials();
    }

    const ClassTemplates tpl = build_templates(templates_src, n_classes);
    if (test_set.trials() == 0) fail("EmptyTestSet", "subject " + rec.subject_id);
    const std::vector<int> preds = classify_cca_set(test_set, tpl, cfg.ridge);
    int correct = 0;
    for (int i = 0; i < test_set.trials(); ++i)
      if (preds[i] == test_set.labels[i]) ++correct;

    ExperimentResult res;
    res.dataset = loaded.manifest.name;
    res.subject_id = rec.subject_id;
    res.paradigm = Paradigm::BaselineCca;
    res.fraction = 1.0;
    res.trial_mode = "single";
    res.accuracy = static_cast<double>(correct) / test_set.trials();
    res.n_test = test_set.trials();
    res.calib_seconds = calibration_seconds(calib_units, rec.trial_duration_s);
    res.seed = cfg.seed;
    res.selected_epoch = 0;
    results.push_back(res);
  }

  fs::create_directories(cfg.output_path);
  json cj;
  cj["dataset"] = cfg.dataset_path;
  cj["seed"] = cfg.seed;
  cj["ridge"] = cfg.ridge;
  write_results_csv(fs::path(cfg.output_path) / "results.csv", results, fnv1a_hex(cj.dump()));
  return results;
}

}  // namespace cvep
