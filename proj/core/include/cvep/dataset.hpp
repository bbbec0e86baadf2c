#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cvep/codebook.hpp"
#include "cvep/dsp.hpp"
#include "cvep/encoder.hpp"
#include "cvep/synth.hpp"

namespace cvep {

/// One subject entry of manifest.json. Trials live in data_file as
/// little-endian float32, layout [trial][channel][sample]; the first
/// n_calibration_trials are the calibration partition, the rest the test
/// partition. features_file, when present, holds imported encoder features
/// ([trial][16][4][512] float32).
struct SubjectRecord {
  std::string subject_id;
  double fs_hz = 0.0;
  int n_channels = 0;
  std::vector<std::string> channel_names;
  double trial_duration_s = 0.0;
  int n_trials = 0;
  int n_samples = 0;
  int n_classes = 0;
  std::string paradigm;  // "ensemble" | "circular_shift"
  std::vector<int> labels;
  int n_calibration_trials = 0;
  std::string data_file;
  std::string features_file;  // optional
  std::vector<int> feature_dims;  // optional, defaults {16, 4, 512}
};

struct DatasetManifest {
  std::string name;
  std::string codebook_file;
  std::vector<SubjectRecord> subjects;
};

DatasetManifest read_manifest(const std::filesystem::path& dir);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& dir);

struct LoadedSubject {
  SubjectRecord record;
  TrialSet calibration;
  TrialSet test;  // empty when n_calibration_trials == n_trials
};

struct LoadedDataset {
  DatasetManifest manifest;
  CodeBook codebook;
  std::vector<LoadedSubject> subjects;
};

/// Validates and loads a dataset directory (manifest.json + blobs +
/// codebook). Missing directory or manifest raises E_DATASET_NOT_FOUND;
/// malformed fields raise FormatError with the field path; blob size
/// mismatches raise ShapeError.
LoadedDataset load_dataset(const std::filesystem::path& dir);

/// Writes a synthetic cohort as a loadable dataset directory.
void write_dataset(const std::filesystem::path& dir, const std::string& name,
                   const CodeBook& book, const std::vector<SyntheticSubject>& cohort);

/// Raw feature blob writer (pairs with encoder load_features).
void write_features_file(const std::filesystem::path& bin_path, const FeatureTensor& z);

std::vector<float> read_f32_file(const std::filesystem::path& path);
void write_f32_file(const std::filesystem::path& path, const std::vector<float>& data);

}  // namespace cvep
