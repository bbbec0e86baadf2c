#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cvep/encoder.hpp"
#include "cvep/tensor.hpp"

namespace cvep {

inline constexpr int kFlatWide = kTimeWindows * kEmbedDim;       // 2048
inline constexpr int kHiddenDim = 16;
inline constexpr int kFlatNarrow = kSpatialTokens * kHiddenDim;  // 256

/// Trainable classifier: flatten -> linear(16) -> flatten -> linear(K).
struct TaskHead {
  Mat w1;                  // kFlatWide x kHiddenDim
  std::vector<double> b1;  // kHiddenDim
  Mat w2;                  // kFlatNarrow x K
  std::vector<double> b2;  // K
  int k = 0;

  /// Glorot-uniform weights, zero biases, fully seeded.
  static TaskHead init(int n_classes, std::uint64_t seed);
};

/// 2048*16 + 16 + 256*K + K
long head_param_count(int n_classes);

struct HeadActivations {
  Mat zpp;     // (B * 16) x 16; rows b*16+i; H is the same buffer viewed B x 256
  Mat logits;  // B x K
};

HeadActivations head_forward(const FeatureTensor& z, const TaskHead& head);

struct CrossEntropy {
  double loss = 0.0;
  Mat dlogits;  // (softmax - onehot) / B
};

/// Mean negative log softmax likelihood, max-stabilized.
CrossEntropy cross_entropy(const Mat& logits, std::span<const int> labels);

/// Gradients for every trainable tensor. dw_spatial is populated only on
/// the raw-encoder path; the frozen encoder never receives one.
struct Gradients {
  Mat dw1;
  std::vector<double> db1;
  Mat dw2;
  std::vector<double> db2;
  Mat dw_spatial;
  bool has_spatial = false;
};

/// Canonical full-graph pass: spatial filter -> reference encoder -> head ->
/// cross-entropy, differentiated in reverse through encode_vjp. Slow but
/// direct; the training loop uses the algebraically identical basis path.
double loss_and_grads_full(const Tensor3& xprime, std::span<const int> labels,
                           const SpatialFilter& sf, const ReferenceEncoderParams& enc,
                           const TaskHead& head, Gradients* grads);

/// Encoded training pool: either a spatial-filter-independent basis (raw
/// mode, spatial filter trainable) or fixed imported features.
enum class EncoderMode { Raw, Imported };

struct TrainStore {
  EncoderMode mode = EncoderMode::Raw;
  EncodedBasis basis;      // raw mode
  FeatureTensor features;  // imported mode
  std::vector<int> labels;

  int trials() const {
    return mode == EncoderMode::Raw ? basis.trials() : features.trials();
  }
  bool empty() const { return trials() == 0; }
};

/// Loss and gradients over store rows idx; raw mode chains into dW_spatial.
double loss_and_grads(const TrainStore& store, const std::vector<int>& idx,
                      const SpatialFilter& sf, const ReferenceEncoderParams& enc,
                      const TaskHead& head, Gradients* grads);

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Bias-corrected adaptive-moment state over the fixed tensor order
/// (W_spatial, W1, b1, W2, b2).
struct AdamState {
  AdamHyper hyper;
  long step_count = 0;
  std::vector<std::vector<double>> m, v;
};

/// One update step. params and grads must be aligned spans in the fixed
/// tensor order; moment buffers are sized on first use.
void adam_step(std::span<double* const> params, std::span<const double* const> grads,
               std::span<const std::size_t> sizes, AdamState& state);

struct TrainConfig {
  int epochs = 200;
  int batch_size = 64;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainOutcome {
  TaskHead head;
  SpatialFilter sf;
  std::vector<EpochRecord> history;
  int selected_epoch = 0;  // 1-based epoch with the lowest validation loss
  double best_val_loss = 0.0;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<int> predictions;
};

EvalResult evaluate(const TrainStore& store, const std::vector<int>& idx,
                    const SpatialFilter& sf, const ReferenceEncoderParams& enc,
                    const TaskHead& head);
EvalResult evaluate_all(const TrainStore& store, const SpatialFilter& sf,
                        const ReferenceEncoderParams& enc, const TaskHead& head);

/// Seeded-shuffle minibatch training with per-epoch validation; returns the
/// parameters from the epoch with the lowest validation loss (ties resolve
/// to the earliest epoch). Imported features freeze the spatial filter.
TrainOutcome train(const TrainStore& train_set, const TrainStore& val_set,
                   TaskHead head_init, SpatialFilter sf_init,
                   const ReferenceEncoderParams& enc, const TrainConfig& cfg);

/// Checkpoint: magic "CVEPHEAD1", a key-value metadata text block, then
/// little-endian float64 blobs in the order W_spatial, W1, b1, W2, b2.
struct Checkpoint {
  SpatialFilter sf;
  TaskHead head;
  int channels = 0;
  std::uint64_t seed = 0;
  TrainConfig cfg;
  int selected_epoch = 0;
  double val_loss = 0.0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cvep
