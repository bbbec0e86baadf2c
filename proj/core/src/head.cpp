#include "cvep/head.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "cvep/error.hpp"
#include "cvep/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs assume a little-endian host");

namespace cvep {

TaskHead TaskHead::init(int n_classes, std::uint64_t seed) {
  if (n_classes < 2) fail("BadShape", "need at least two classes");
  TaskHead h;
  h.k = n_classes;
  h.w1 = Mat(kFlatWide, kHiddenDim);
  h.b1.assign(kHiddenDim, 0.0);
  h.w2 = Mat(kFlatNarrow, n_classes);
  h.b2.assign(n_classes, 0.0);
  Rng rng(derive_seed(seed, 0x68656164ull));
  const double l1 = std::sqrt(6.0 / (kFlatWide + kHiddenDim));
  for (double& v : h.w1.data) v = (2.0 * rng.uniform() - 1.0) * l1;
  const double l2 = std::sqrt(6.0 / (kFlatNarrow + n_classes));
  for (double& v : h.w2.data) v = (2.0 * rng.uniform() - 1.0) * l2;
  return h;
}

long head_param_count(int n_classes) {
  return static_cast<long>(kFlatWide) * kHiddenDim + kHiddenDim +
         static_cast<long>(kFlatNarrow) * n_classes + n_classes;
}

HeadActivations head_forward(const FeatureTensor& z, const TaskHead& head) {
  if (z.z.n1 != kSpatialTokens || z.z.n2 != kTimeWindows || z.z.n3 != kEmbedDim)
    fail("BadShape", "features must be B x 16 x 4 x 512");
  const int b = z.trials();
  HeadActivations act;
  // Z viewed as (B*16) x 2048 is contiguous, so the first layer is one GEMM.
  act.zpp = Mat(b * kSpatialTokens, kHiddenDim);
  gemm(z.z.data.data(), head.w1.data.data(), act.zpp.data.data(), b * kSpatialTokens,
       kFlatWide, kHiddenDim);
  for (int r = 0; r < act.zpp.rows; ++r) {
    double* row = act.zpp.row(r);
    for (int j = 0; j < kHiddenDim; ++j) row[j] += head.b1[j];
  }
  // zpp viewed as B x 256 is H
  act.logits = Mat(b, head.k);
  gemm(act.zpp.data.data(), head.w2.data.data(), act.logits.data.data(), b, kFlatNarrow,
       head.k);
  for (int r = 0; r < b; ++r) {
    double* row = act.logits.row(r);
    for (int j = 0; j < head.k; ++j) row[j] += head.b2[j];
  }
  return act;
}

CrossEntropy cross_entropy(const Mat& logits, std::span<const int> labels) {
  const int b = logits.rows, k = logits.cols;
  if (static_cast<int>(labels.size()) != b)
    fail("BadShape", "labels/logits batch mismatch");
  for (int i = 0; i < b; ++i)
    if (labels[i] < 0 || labels[i] >= k)
      fail("LabelOutOfRange", "label " + std::to_string(labels[i]) + " outside [0, " +
                                  std::to_string(k) + ")");
  CrossEntropy ce;
  ce.dlogits = Mat(b, k);
  double loss = 0.0;
  const double inv_b = 1.0 / b;
  for (int i = 0; i < b; ++i) {
    const double* row = logits.row(i);
    double mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    double* drow = ce.dlogits.row(i);
    for (int j = 0; j < k; ++j) {
      drow[j] = std::exp(row[j] - mx);
      denom += drow[j];
    }
    loss += std::log(denom) - (row[labels[i]] - mx);
    const double inv_denom = 1.0 / denom;
    for (int j = 0; j < k; ++j) drow[j] *= inv_denom * inv_b;
    drow[labels[i]] -= inv_b;
  }
  ce.loss = loss * inv_b;
  return ce;
}

namespace {

// Backprop through the head given activations; fills dw1/db1/dw2/db2 and
// returns dZ (the cotangent of the feature tensor) when requested.
void head_backward(const FeatureTensor& z, const TaskHead& head, const HeadActivations& act,
                   const Mat& dlogits, Gradients* grads, Tensor4* dz) {
  const int b = z.trials();
  grads->dw2 = Mat(kFlatNarrow, head.k);
  gemm_tn(act.zpp.data.data(), dlogits.data.data(), grads->dw2.data.data(), kFlatNarrow,
          b, head.k);
  grads->db2.assign(head.k, 0.0);
  for (int i = 0; i < b; ++i) {
    const double* row = dlogits.row(i);
    for (int j = 0; j < head.k; ++j) grads->db2[j] += row[j];
  }
  // dH = dlogits * W2^T, viewed as (B*16) x 16
  Mat dzpp(b * kSpatialTokens, kHiddenDim);
  gemm_nt(dlogits.data.data(), head.w2.data.data(), dzpp.data.data(), b, head.k,
          kFlatNarrow);
  grads->dw1 = Mat(kFlatWide, kHiddenDim);
  gemm_tn(z.z.data.data(), dzpp.data.data(), grads->dw1.data.data(), kFlatWide,
          b * kSpatialTokens, kHiddenDim);
  grads->db1.assign(kHiddenDim, 0.0);
  for (int r = 0; r < dzpp.rows; ++r) {
    const double* row = dzpp.row(r);
    for (int j = 0; j < kHiddenDim; ++j) grads->db1[j] += row[j];
  }
  if (dz) {
    *dz = Tensor4(b, kSpatialTokens, kTimeWindows, kEmbedDim);
    gemm_nt(dzpp.data.data(), head.w1.data.data(), dz->data.data(), b * kSpatialTokens,
            kHiddenDim, kFlatWide);
  }
}

}  // namespace

double loss_and_grads_full(const Tensor3& xprime, std::span<const int> labels,
                           const SpatialFilter& sf, const ReferenceEncoderParams& enc,
                           const TaskHead& head, Gradients* grads) {
  const Tensor3 xpp = apply_spatial_filter(xprime, sf);
  const FeatureTensor z = reference_encode(xpp, enc);
  const HeadActivations act = head_forward(z, head);
  const CrossEntropy ce = cross_entropy(act.logits, labels);
  if (grads) {
    Tensor4 dz;
    head_backward(z, head, act, ce.dlogits, grads, &dz);
    const Tensor3 dxpp = encode_vjp(xpp, enc, dz);
    grads->dw_spatial = Mat(sf.channels(), sf.channels());
    grads->has_spatial = true;
    for (int b = 0; b < xprime.n0; ++b)
      gemm_nt(dxpp.slab(b), xprime.slab(b), grads->dw_spatial.data.data(), sf.channels(),
              kTrialLen, sf.channels(), true);
  }
  return ce.loss;
}

double loss_and_grads(const TrainStore& store, const std::vector<int>& idx,
                      const SpatialFilter& sf, const ReferenceEncoderParams& enc,
                      const TaskHead& head, Gradients* grads) {
  const int nb = static_cast<int>(idx.size());
  if (nb == 0) fail("EmptySplit", "empty batch");
  std::vector<int> labels(nb);
  for (int i = 0; i < nb; ++i) labels[i] = store.labels[idx[i]];

  if (store.mode == EncoderMode::Imported) {
    FeatureTensor z;
    z.provenance = FeatureProvenance::Imported;
    z.z = Tensor4(nb, kSpatialTokens, kTimeWindows, kEmbedDim);
    const std::size_t slab = z.z.size() / nb;
    for (int i = 0; i < nb; ++i)
      std::memcpy(z.z.slab(i), store.features.z.slab(idx[i]), slab * sizeof(double));
    const HeadActivations act = head_forward(z, head);
    const CrossEntropy ce = cross_entropy(act.logits, labels);
    if (grads) {
      head_backward(z, head, act, ce.dlogits, grads, nullptr);
      grads->has_spatial = false;
    }
    return ce.loss;
  }

  // Raw mode: features are tanh((A*W) * U_bw); the basis U is fixed, so the
  // whole trainable graph reduces to small GEMMs per window.
  const int c = store.basis.channels();
  const FeatureTensor z = encode_from_basis(store.basis, idx, sf, enc);
  const HeadActivations act = head_forward(z, head);
  const CrossEntropy ce = cross_entropy(act.logits, labels);
  if (grads) {
    Tensor4 dz;
    head_backward(z, head, act, ce.dlogits, grads, &dz);
    Mat dm(kSpatialTokens, c);  // d(A*W)
    Mat g(kSpatialTokens, kEmbedDim);
    for (int i = 0; i < nb; ++i) {
      for (int w = 0; w < kTimeWindows; ++w) {
        for (int t = 0; t < kSpatialTokens; ++t) {
          const double* zrow = &z.z.at(i, t, w, 0);
          const double* up = &dz.at(i, t, w, 0);
          double* grow = g.row(t);
          for (int d = 0; d < kEmbedDim; ++d) grow[d] = up[d] * (1.0 - zrow[d] * zrow[d]);
        }
        gemm_nt(g.data.data(), &store.basis.u.at(idx[i], w, 0, 0), dm.data.data(),
                kSpatialTokens, kEmbedDim, c, true);
      }
    }
    grads->dw_spatial = Mat(c, c);
    grads->has_spatial = true;
    gemm_tn(enc.a.data.data(), dm.data.data(), grads->dw_spatial.data.data(), c,
            kSpatialTokens, c);
  }
  return ce.loss;
}

void adam_step(std::span<double* const> params, std::span<const double* const> grads,
               std::span<const std::size_t> sizes, AdamState& state) {
  if (params.size() != grads.size() || params.size() != sizes.size())
    fail("BadShape", "adam_step span mismatch");
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), {});
    state.v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(sizes[i], 0.0);
      state.v[i].assign(sizes[i], 0.0);
    }
  }
  const AdamHyper& h = state.hyper;
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i];
    const double* g = grads[i];
    double* m = state.m[i].data();
    double* v = state.v[i].data();
    for (std::size_t j = 0; j < sizes[i]; ++j) {
      m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * g[j];
      v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= h.lr * mhat / (std::sqrt(vhat) + h.eps);
      if (h.weight_decay != 0.0) p[j] -= h.lr * h.weight_decay * p[j];
    }
  }
}

EvalResult evaluate(const TrainStore& store, const std::vector<int>& idx,
                    const SpatialFilter& sf, const ReferenceEncoderParams& enc,
                    const TaskHead& head) {
  const int nb = static_cast<int>(idx.size());
  if (nb == 0) fail("EmptyTestSet", "no trials to evaluate");
  FeatureTensor z;
  if (store.mode == EncoderMode::Imported) {
    z.provenance = FeatureProvenance::Imported;
    z.z = Tensor4(nb, kSpatialTokens, kTimeWindows, kEmbedDim);
    const std::size_t slab = z.z.size() / nb;
    for (int i = 0; i < nb; ++i)
      std::memcpy(z.z.slab(i), store.features.z.slab(idx[i]), slab * sizeof(double));
  } else {
    z = encode_from_basis(store.basis, idx, sf, enc);
  }
  std::vector<int> labels(nb);
  for (int i = 0; i < nb; ++i) labels[i] = store.labels[idx[i]];
  const HeadActivations act = head_forward(z, head);
  const CrossEntropy ce = cross_entropy(act.logits, labels);

  EvalResult res;
  res.loss = ce.loss;
  res.predictions.resize(nb);
  int correct = 0;
  for (int i = 0; i < nb; ++i) {
    const double* row = act.logits.row(i);
    int arg = 0;
    for (int j = 1; j < head.k; ++j)
      if (row[j] > row[arg]) arg = j;  // ties resolve to the lowest index
    res.predictions[i] = arg;
    if (arg == labels[i]) ++correct;
  }
  res.accuracy = static_cast<double>(correct) / nb;
  return res;
}

EvalResult evaluate_all(const TrainStore& store, const SpatialFilter& sf,
                        const ReferenceEncoderParams& enc, const TaskHead& head) {
  std::vector<int> idx(store.trials());
  for (int i = 0; i < store.trials(); ++i) idx[i] = i;
  return evaluate(store, idx, sf, enc, head);
}

TrainOutcome train(const TrainStore& train_set, const TrainStore& val_set,
                   TaskHead head_init, SpatialFilter sf_init,
                   const ReferenceEncoderParams& enc, const TrainConfig& cfg) {
  if (train_set.empty() || val_set.empty())
    fail("EmptySplit", "training and validation sets must be nonempty");
  if (cfg.epochs < 1 || cfg.batch_size < 1)
    fail("ConfigError", "epochs and batch_size must be >= 1");
  if (train_set.mode != val_set.mode) fail("BadShape", "train/val encoder modes differ");

  const bool train_spatial = train_set.mode == EncoderMode::Raw;
  TaskHead head = std::move(head_init);
  SpatialFilter sf = std::move(sf_init);

  AdamState opt;
  opt.hyper = {cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay};

  Rng shuffle_rng(derive_seed(cfg.seed, 0x73687566ull));
  std::vector<int> order(train_set.trials());
  for (int i = 0; i < train_set.trials(); ++i) order[i] = i;

  TrainOutcome out;
  out.best_val_loss = std::numeric_limits<double>::infinity();
  out.history.reserve(cfg.epochs);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::vector<int> batch(order.begin() + start, order.begin() + end);
      Gradients grads;
      const double loss = loss_and_grads(train_set, batch, sf, enc, head, &grads);
      epoch_loss += loss * static_cast<double>(batch.size());

      std::vector<double*> params;
      std::vector<const double*> gptrs;
      std::vector<std::size_t> sizes;
      if (train_spatial) {
        params.push_back(sf.w.data.data());
        gptrs.push_back(grads.dw_spatial.data.data());
        sizes.push_back(sf.w.size());
      }
      params.insert(params.end(), {head.w1.data.data(), head.b1.data(),
                                   head.w2.data.data(), head.b2.data()});
      gptrs.insert(gptrs.end(), {grads.dw1.data.data(), grads.db1.data(),
                                 grads.dw2.data.data(), grads.db2.data()});
      sizes.insert(sizes.end(), {head.w1.size(), head.b1.size(), head.w2.size(),
                                 head.b2.size()});
      adam_step(params, gptrs, sizes, opt);
    }
    epoch_loss /= static_cast<double>(order.size());

    const EvalResult val = evaluate_all(val_set, sf, enc, head);
    out.history.push_back({epoch_loss, val.loss, val.accuracy});
    if (val.loss < out.best_val_loss) {
      out.best_val_loss = val.loss;
      out.selected_epoch = epoch;
      out.head = head;
      out.sf = sf;
    }
  }
  return out;
}

namespace {

void write_doubles(std::ofstream& out, const double* p, std::size_t n) {
  out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

void read_doubles(std::ifstream& in, double* p, std::size_t n) {
  in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != n * sizeof(double))
    fail("FormatError", "checkpoint truncated");
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("FormatError", "cannot open " + path.string() + " for writing");
  std::ostringstream meta;
  meta.precision(17);
  meta << "CVEPHEAD1\n";
  meta << "channels " << ckpt.channels << "\n";
  meta << "classes " << ckpt.head.k << "\n";
  meta << "seed " << ckpt.seed << "\n";
  meta << "epochs " << ckpt.cfg.epochs << "\n";
  meta << "batch_size " << ckpt.cfg.batch_size << "\n";
  meta << "lr " << ckpt.cfg.lr << "\n";
  meta << "beta1 " << ckpt.cfg.beta1 << "\n";
  meta << "beta2 " << ckpt.cfg.beta2 << "\n";
  meta << "eps " << ckpt.cfg.eps << "\n";
  meta << "weight_decay " << ckpt.cfg.weight_decay << "\n";
  meta << "selected_epoch " << ckpt.selected_epoch << "\n";
  meta << "val_loss " << ckpt.val_loss << "\n";
  meta << "data\n";
  out << meta.str();
  write_doubles(out, ckpt.sf.w.data.data(), ckpt.sf.w.size());
  write_doubles(out, ckpt.head.w1.data.data(), ckpt.head.w1.size());
  write_doubles(out, ckpt.head.b1.data(), ckpt.head.b1.size());
  write_doubles(out, ckpt.head.w2.data.data(), ckpt.head.w2.size());
  write_doubles(out, ckpt.head.b2.data(), ckpt.head.b2.size());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("FormatError", "cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line)) fail("FormatError", "empty checkpoint file");
  if (line != "CVEPHEAD1") {
    if (line.rfind("CVEPHEAD", 0) == 0)
      fail("VersionMismatch", "unsupported checkpoint version '" + line + "'");
    fail("FormatError", "not a checkpoint file");
  }
  std::map<std::string, std::string> kv;
  while (std::getline(in, line)) {
    if (line == "data") break;
    const auto sp = line.find(' ');
    if (sp == std::string::npos) fail("FormatError", "bad metadata line '" + line + "'");
    kv[line.substr(0, sp)] = line.substr(sp + 1);
  }
  if (line != "data") fail("FormatError", "checkpoint metadata missing 'data' marker");
  auto want = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) fail("FormatError", "checkpoint missing key '" + key + "'");
    return it->second;
  };
  Checkpoint ckpt;
  ckpt.channels = std::stoi(want("channels"));
  const int k = std::stoi(want("classes"));
  if (ckpt.channels < 1 || k < 2) fail("FormatError", "implausible checkpoint dims");
  ckpt.seed = std::stoull(want("seed"));
  ckpt.cfg.epochs = std::stoi(want("epochs"));
  ckpt.cfg.batch_size = std::stoi(want("batch_size"));
  ckpt.cfg.lr = std::stod(want("lr"));
  ckpt.cfg.beta1 = std::stod(want("beta1"));
  ckpt.cfg.beta2 = std::stod(want("beta2"));
  ckpt.cfg.eps = std::stod(want("eps"));
  ckpt.cfg.weight_decay = std::stod(want("weight_decay"));
  ckpt.selected_epoch = std::stoi(want("selected_epoch"));
  ckpt.val_loss = std::stod(want("val_loss"));

  ckpt.sf.w = Mat(ckpt.channels, ckpt.channels);
  ckpt.head.k = k;
  ckpt.head.w1 = Mat(kFlatWide, kHiddenDim);
  ckpt.head.b1.assign(kHiddenDim, 0.0);
  ckpt.head.w2 = Mat(kFlatNarrow, k);
  ckpt.head.b2.assign(k, 0.0);
  read_doubles(in, ckpt.sf.w.data.data(), ckpt.sf.w.size());
  read_doubles(in, ckpt.head.w1.data.data(), ckpt.head.w1.size());
  read_doubles(in, ckpt.head.b1.data(), ckpt.head.b1.size());
  read_doubles(in, ckpt.head.w2.data.data(), ckpt.head.w2.size());
  read_doubles(in, ckpt.head.b2.data(), ckpt.head.b2.size());
  return ckpt;
}

}  // namespace cvep
