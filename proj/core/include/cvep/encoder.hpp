#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cvep/rng.hpp"
#include "cvep/tensor.hpp"

namespace cvep {

inline constexpr int kSpatialTokens = 16;  // F1
inline constexpr int kTimeWindows = 4;     // F2
inline constexpr int kWindowLen = 256;
inline constexpr int kEmbedDim = 512;      // D
inline constexpr int kTrialLen = kTimeWindows * kWindowLen;  // 1024

/// Trainable channel-mixing matrix applied before the frozen encoder.
struct SpatialFilter {
  Mat w;  // C x C

  int channels() const { return w.rows; }
  static SpatialFilter identity(int channels) { return {Mat::identity(channels)}; }
};

/// Frozen random projections of the reference encoder. Fully determined by
/// (channels, seed); never touched by any optimizer.
struct ReferenceEncoderParams {
  Mat a;       // kSpatialTokens x C, entries N(0, 1/C)
  Mat b_time;  // kEmbedDim x kWindowLen, entries N(0, 1/kWindowLen)
  std::uint64_t seed = 0;

  int channels() const { return a.cols; }
  static ReferenceEncoderParams make(int channels, std::uint64_t seed);
};

enum class FeatureProvenance { ReferenceEncoder, Imported };

/// Encoder output Z, dimensions B x 16 x 4 x 512.
struct FeatureTensor {
  Tensor4 z;
  FeatureProvenance provenance = FeatureProvenance::ReferenceEncoder;

  int trials() const { return z.n0; }
};

/// Per-trial channel mixing: X''[b] = W * X'[b]; shape preserved.
Tensor3 apply_spatial_filter(const Tensor3& x, const SpatialFilter& sf);

/// Z[b, :, w, :] = tanh(A * S_w * B_time^T) where S_w is the w-th 256-sample
/// window of trial b. Deterministic given the params' seed.
FeatureTensor reference_encode(const Tensor3& xpp, const ReferenceEncoderParams& p);

/// Exact reverse-mode derivative of reference_encode with respect to its
/// input; encoder parameters receive no gradient.
Tensor3 encode_vjp(const Tensor3& xpp, const ReferenceEncoderParams& p,
                   const Tensor4& upstream);

/// Precomputed per-trial basis U[b, w] = X_w * B_time^T (C x 512). Because
/// the spatial filter commutes through to A, features for any W are
/// tanh((A*W) * U), which is what the training loop iterates on.
struct EncodedBasis {
  Tensor4 u;  // B x kTimeWindows x C x kEmbedDim

  int trials() const { return u.n0; }
  int channels() const { return u.n2; }
};

EncodedBasis encode_basis(const Tensor3& x, const ReferenceEncoderParams& p);

/// Features for the given spatial filter from a precomputed basis; equal to
/// reference_encode(apply_spatial_filter(x, sf), p) up to rounding.
FeatureTensor encode_from_basis(const EncodedBasis& basis, const SpatialFilter& sf,
                                const ReferenceEncoderParams& p);

/// Same, for a subset of trials (gathered in index order).
FeatureTensor encode_from_basis(const EncodedBasis& basis, const std::vector<int>& idx,
                                const SpatialFilter& sf, const ReferenceEncoderParams& p);

/// Features precomputed by an external encoder, read from a features file
/// (see the dataset format). Spatial-filter training is disabled downstream.
struct ImportedFeatures {
  FeatureTensor features;
  std::vector<int> labels;
  std::string subject_id;
};

ImportedFeatures load_features(const std::filesystem::path& bin_path);

}  // namespace cvep
