#include "cvep/dataset.hpp"

#include <fstream>

#include <json.hpp>

#include "cvep/error.hpp"

namespace cvep {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<float> read_f32_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) fail("FormatError", "cannot open " + path.string());
  const std::streamsize bytes = in.tellg();
  if (bytes % 4 != 0) fail("ShapeError", path.string() + " is not a float32 blob");
  in.seekg(0);
  std::vector<float> data(static_cast<std::size_t>(bytes) / 4);
  in.read(reinterpret_cast<char*>(data.data()), bytes);
  if (in.gcount() != bytes) fail("ShapeError", "short read from " + path.string());
  return data;
}

void write_f32_file(const fs::path& path, const std::vector<float>& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("FormatError", "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * 4));
}

namespace {

template <typename T>
T field(const json& j, const std::string& path, const std::string& key) {
  if (!j.contains(key)) fail("FormatError", path + "." + key + " is missing");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail("FormatError", path + "." + key + " has the wrong type");
  }
}

SubjectRecord parse_subject(const json& j, const std::string& path) {
  SubjectRecord r;
  r.subject_id = field<std::string>(j, path, "subject_id");
  r.fs_hz = field<double>(j, path, "fs_hz");
  r.n_channels = field<int>(j, path, "n_channels");
  r.channel_names = j.value("channel_names", std::vector<std::string>{});
  r.trial_duration_s = field<double>(j, path, "trial_duration_s");
  r.n_trials = field<int>(j, path, "n_trials");
  r.n_samples = field<int>(j, path, "n_samples");
  r.n_classes = field<int>(j, path, "n_classes");
  r.paradigm = field<std::string>(j, path, "paradigm");
  r.labels = field<std::vector<int>>(j, path, "labels");
  r.n_calibration_trials = field<int>(j, path, "n_calibration_trials");
  r.data_file = j.value("data_file", "");
  r.features_file = j.value("features_file", "");
  r.feature_dims = j.value("feature_dims", std::vector<int>{});

  if (r.fs_hz <= 0.0) fail("FormatError", path + ".fs_hz must be positive");
  if (r.n_channels < 1) fail("FormatError", path + ".n_channels must be >= 1");
  if (r.n_trials < 0) fail("FormatError", path + ".n_trials must be >= 0");
  if (r.n_samples < 1) fail("FormatError", path + ".n_samples must be >= 1");
  if (r.n_classes < 1) fail("FormatError", path + ".n_classes must be >= 1");
  if (r.paradigm != "ensemble" && r.paradigm != "circular_shift")
    fail("FormatError", path + ".paradigm must be 'ensemble' or 'circular_shift'");
  if (static_cast<int>(r.labels.size()) != r.n_trials)
    fail("FormatError", path + ".labels length != n_trials");
  for (std::size_t i = 0; i < r.labels.size(); ++i)
    if (r.labels[i] < 0 || r.labels[i] >= r.n_classes)
      fail("FormatError",
           path + ".labels[" + std::to_string(i) + "] outside [0, n_classes)");
  if (r.n_calibration_trials < 0 || r.n_calibration_trials > r.n_trials)
    fail("FormatError", path + ".n_calibration_trials outside [0, n_trials]");
  if (r.paradigm == "circular_shift") {
    for (int i = 0; i < r.n_calibration_trials; ++i)
      if (r.labels[i] != 0)
        fail("FormatError", path + ".labels[" + std::to_string(i) +
                                "]: circular_shift calibration trials must be reference "
                                "(label 0)");
  }
  if (r.data_file.empty() && r.features_file.empty())
    fail("FormatError", path + " needs data_file or features_file");
  return r;
}

json subject_to_json(const SubjectRecord& r) {
  json j;
  j["subject_id"] = r.subject_id;
  j["fs_hz"] = r.fs_hz;
  j["n_channels"] = r.n_channels;
  j["channel_names"] = r.channel_names;
  j["trial_duration_s"] = r.trial_duration_s;
  j["n_trials"] = r.n_trials;
  j["n_samples"] = r.n_samples;
  j["n_classes"] = r.n_classes;
  j["paradigm"] = r.paradigm;
  j["labels"] = r.labels;
  j["n_calibration_trials"] = r.n_calibration_trials;
  if (!r.data_file.empty()) j["data_file"] = r.data_file;
  if (!r.features_file.empty()) j["features_file"] = r.features_file;
  if (!r.feature_dims.empty()) j["feature_dims"] = r.feature_dims;
  return j;
}

}  // namespace

DatasetManifest read_manifest(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  if (!fs::exists(dir) || !fs::exists(mpath))
    fail("E_DATASET_NOT_FOUND", dir.string());
  std::ifstream in(mpath);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail("FormatError", "manifest.json: " + std::string(e.what()));
  }
  DatasetManifest m;
  m.name = field<std::string>(j, "manifest", "name");
  m.codebook_file = field<std::string>(j, "manifest", "codebook_file");
  if (!j.contains("subjects") || !j.at("subjects").is_array())
    fail("FormatError", "manifest.subjects must be an array");
  int idx = 0;
  for (const json& js : j.at("subjects")) {
    m.subjects.push_back(parse_subject(js, "subjects[" + std::to_string(idx) + "]"));
    ++idx;
  }
  if (m.subjects.empty()) fail("FormatError", "manifest.subjects is empty");
  return m;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& dir) {
  json j;
  j["format"] = "cvep-dataset-v1";
  j["name"] = manifest.name;
  j["codebook_file"] = manifest.codebook_file;
  j["subjects"] = json::array();
  for (const SubjectRecord& r : manifest.subjects) j["subjects"].push_back(subject_to_json(r));
  std::ofstream out(dir / "manifest.json");
  if (!out) fail("FormatError", "cannot write manifest.json in " + dir.string());
  out << j.dump(2) << '\n';
}

LoadedDataset load_dataset(const fs::path& dir) {
  LoadedDataset ds;
  ds.manifest = read_manifest(dir);
  ds.codebook = load_codebook(dir / ds.manifest.codebook_file);

  for (std::size_t s = 0; s < ds.manifest.subjects.size(); ++s) {
    const SubjectRecord& r = ds.manifest.subjects[s];
    LoadedSubject subject;
    subject.record = r;
    if (!r.data_file.empty()) {
      const std::vector<float> blob = read_f32_file(dir / r.data_file);
      const std::size_t expect = static_cast<std::size_t>(r.n_trials) * r.n_channels *
                                 r.n_samples;
      if (blob.size() != expect)
        fail("ShapeError", r.data_file + " holds " + std::to_string(blob.size()) +
                               " samples, expected " + std::to_string(expect));
      auto make_set = [&](int first, int count) {
        TrialSet ts;
        ts.fs_hz = r.fs_hz;
        ts.subject_id = r.subject_id;
        ts.trial_duration_s = r.trial_duration_s;
        ts.data = Tensor3(count, r.n_channels, r.n_samples);
        ts.labels.assign(r.labels.begin() + first, r.labels.begin() + first + count);
        const std::size_t off = static_cast<std::size_t>(first) * r.n_channels * r.n_samples;
        for (std::size_t i = 0; i < ts.data.size(); ++i)
          ts.data.data[i] = static_cast<double>(blob[off + i]);
        return ts;
      };
      subject.calibration = make_set(0, r.n_calibration_trials);
      subject.test = make_set(r.n_calibration_trials, r.n_trials - r.n_calibration_trials);
    }
    ds.subjects.push_back(std::move(subject));
  }
  return ds;
}

void write_dataset(const fs::path& dir, const std::string& name, const CodeBook& book,
                   const std::vector<SyntheticSubject>& cohort) {
  fs::create_directories(dir);
  save_codebook(book, dir / "codebook.txt");

  DatasetManifest manifest;
  manifest.name = name;
  manifest.codebook_file = "codebook.txt";
  for (const SyntheticSubject& subj : cohort) {
    const TrialSet& cal = subj.calibration;
    const TrialSet& test = subj.test;
    SubjectRecord r;
    r.subject_id = subj.subject_id;
    r.fs_hz = cal.fs_hz;
    r.n_channels = cal.channels();
    for (int c = 0; c < cal.channels(); ++c) r.channel_names.push_back("ch" + std::to_string(c));
    r.trial_duration_s = cal.trial_duration_s;
    r.n_trials = cal.trials() + test.trials();
    r.n_samples = cal.samples();
    r.n_classes = book.n_targets;
    r.paradigm = test.trials() > 0 ? "circular_shift" : "ensemble";
    r.labels = cal.labels;
    r.labels.insert(r.labels.end(), test.labels.begin(), test.labels.end());
    r.n_calibration_trials = cal.trials();
    r.data_file = "sub_" + subj.subject_id + ".bin";

    std::vector<float> blob;
    blob.reserve(cal.data.size() + test.data.size());
    for (double v : cal.data.data) blob.push_back(static_cast<float>(v));
    for (double v : test.data.data) blob.push_back(static_cast<float>(v));
    write_f32_file(dir / r.data_file, blob);
    manifest.subjects.push_back(std::move(r));
  }
  write_manifest(manifest, dir);
}

void write_features_file(const fs::path& bin_path, const FeatureTensor& z) {
  std::vector<float> blob(z.z.size());
  for (std::size_t i = 0; i < blob.size(); ++i) blob[i] = static_cast<float>(z.z.data[i]);
  write_f32_file(bin_path, blob);
}

}  // namespace cvep

// load_features lives here because it needs the manifest machinery.
namespace cvep {

ImportedFeatures load_features(const std::filesystem::path& bin_path) {
  const fs::path dir = bin_path.parent_path().empty() ? "." : bin_path.parent_path();
  const DatasetManifest manifest = read_manifest(dir);
  const std::string fname = bin_path.filename().string();
  const SubjectRecord* rec = nullptr;
  for (const SubjectRecord& r : manifest.subjects)
    if (r.features_file == fname) rec = &r;
  if (!rec)
    fail("FormatError", "no manifest entry references features file " + fname);

  std::vector<int> dims = rec->feature_dims;
  if (dims.empty()) dims = {kSpatialTokens, kTimeWindows, kEmbedDim};
  if (dims != std::vector<int>{kSpatialTokens, kTimeWindows, kEmbedDim})
    fail("ShapeError", "features for " + rec->subject_id + " have trailing dims " +
                           std::to_string(dims.size() == 3 ? dims[0] : -1) + "x" +
                           std::to_string(dims.size() == 3 ? dims[1] : -1) + "x" +
                           std::to_string(dims.size() == 3 ? dims[2] : -1) +
                           ", expected 16x4x512");

  const std::vector<float> blob = read_f32_file(bin_path);
  const std::size_t expect = static_cast<std::size_t>(rec->n_trials) * kSpatialTokens *
                             kTimeWindows * kEmbedDim;
  if (blob.size() != expect)
    fail("ShapeError", fname + " holds " + std::to_string(blob.size()) +
                           " values, expected " + std::to_string(expect));

  ImportedFeatures out;
  out.subject_id = rec->subject_id;
  out.labels = rec->labels;
  out.features.provenance = FeatureProvenance::Imported;
  out.features.z = Tensor4(rec->n_trials, kSpatialTokens, kTimeWindows, kEmbedDim);
  for (std::size_t i = 0; i < blob.size(); ++i)
    out.features.z.data[i] = static_cast<double>(blob[i]);
  return out;
}

}  // namespace cvep
