#include "cvep/encoder.hpp"

#include <cmath>

#include "cvep/error.hpp"

namespace cvep {

ReferenceEncoderParams ReferenceEncoderParams::make(int channels, std::uint64_t seed) {
  if (channels < 1) fail("BadShape", "encoder needs at least one channel");
  ReferenceEncoderParams p;
  p.seed = seed;
  Rng rng(derive_seed(seed, 0x656E63ull));
  p.a = Mat(kSpatialTokens, channels);
  const double sa = 1.0 / std::sqrt(static_cast<double>(channels));
  for (double& v : p.a.data) v = sa * rng.gaussian();
  p.b_time = Mat(kEmbedDim, kWindowLen);
  const double sb = 1.0 / std::sqrt(static_cast<double>(kWindowLen));
  for (double& v : p.b_time.data) v = sb * rng.gaussian();
  return p;
}

Tensor3 apply_spatial_filter(const Tensor3& x, const SpatialFilter& sf) {
  if (x.n1 != sf.channels())
    fail("ChannelMismatch", "spatial filter is " + std::to_string(sf.channels()) +
                                " channels, trials have " + std::to_string(x.n1));
  Tensor3 out(x.n0, x.n1, x.n2);
  for (int b = 0; b < x.n0; ++b)
    gemm(sf.w.data.data(), x.slab(b), out.slab(b), x.n1, x.n1, x.n2);
  return out;
}

FeatureTensor reference_encode(const Tensor3& xpp, const ReferenceEncoderParams& p) {
  if (xpp.n1 != p.channels() || xpp.n2 != kTrialLen)
    fail("BadShape", "encoder input must be B x " + std::to_string(p.channels()) + " x " +
                         std::to_string(kTrialLen));
  const int b_n = xpp.n0;
  const int c = xpp.n1;
  FeatureTensor out;
  out.provenance = FeatureProvenance::ReferenceEncoder;
  out.z = Tensor4(b_n, kSpatialTokens, kTimeWindows, kEmbedDim);

  Mat window(c, kWindowLen);
  Mat as(kSpatialTokens, kWindowLen);
  Mat pre(kSpatialTokens, kEmbedDim);
  for (int b = 0; b < b_n; ++b) {
    const double* slab = xpp.slab(b);
    for (int w = 0; w < kTimeWindows; ++w) {
      for (int ch = 0; ch < c; ++ch) {
        const double* src = slab + static_cast<std::size_t>(ch) * kTrialLen + w * kWindowLen;
        std::copy(src, src + kWindowLen, window.row(ch));
      }
      gemm(p.a.data.data(), window.data.data(), as.data.data(), kSpatialTokens, c, kWindowLen);
      gemm_nt(as.data.data(), p.b_time.data.data(), pre.data.data(), kSpatialTokens,
              kWindowLen, kEmbedDim);
      for (int t = 0; t < kSpatialTokens; ++t) {
        const double* pr = pre.row(t);
        double* dst = &out.z.at(b, t, w, 0);
        for (int d = 0; d < kEmbedDim; ++d) dst[d] = std::tanh(pr[d]);
      }
    }
  }
  return out;
}

Tensor3 encode_vjp(const Tensor3& xpp, const ReferenceEncoderParams& p,
                   const Tensor4& upstream) {
  if (xpp.n1 != p.channels() || xpp.n2 != kTrialLen)
    fail("BadShape", "encoder input shape mismatch");
  if (upstream.n0 != xpp.n0 || upstream.n1 != kSpatialTokens ||
      upstream.n2 != kTimeWindows || upstream.n3 != kEmbedDim)
    fail("BadShape", "upstream cotangent shape mismatch");

  const int b_n = xpp.n0;
  const int c = xpp.n1;
  const FeatureTensor z = reference_encode(xpp, p);

  Tensor3 dx(b_n, c, kTrialLen);
  Mat g(kSpatialTokens, kEmbedDim);
  Mat gb(kSpatialTokens, kWindowLen);
  Mat dwin(c, kWindowLen);
  for (int b = 0; b < b_n; ++b) {
    for (int w = 0; w < kTimeWindows; ++w) {
      for (int t = 0; t < kSpatialTokens; ++t) {
        const double* zrow = &z.z.at(b, t, w, 0);
        const double* up = &upstream.at(b, t, w, 0);
        double* grow = g.row(t);
        for (int d = 0; d < kEmbedDim; ++d) grow[d] = up[d] * (1.0 - zrow[d] * zrow[d]);
      }
      // dS_w = A^T * (G * B_time)
      gemm(g.data.data(), p.b_time.data.data(), gb.data.data(), kSpatialTokens, kEmbedDim,
           kWindowLen);
      gemm_tn(p.a.data.data(), gb.data.data(), dwin.data.data(), c, kSpatialTokens,
              kWindowLen);
      for (int ch = 0; ch < c; ++ch) {
        double* dst = dx.slab(b) + static_cast<std::size_t>(ch) * kTrialLen + w * kWindowLen;
        const double* src = dwin.row(ch);
        for (int i = 0; i < kWindowLen; ++i) dst[i] = src[i];
      }
    }
  }
  return dx;
}

EncodedBasis encode_basis(const Tensor3& x, const ReferenceEncoderParams& p) {
  if (x.n1 != p.channels() || x.n2 != kTrialLen)
    fail("BadShape", "basis input must be B x C x " + std::to_string(kTrialLen));
  const int b_n = x.n0;
  const int c = x.n1;
  EncodedBasis basis;
  basis.u = Tensor4(b_n, kTimeWindows, c, kEmbedDim);
  Mat window(c, kWindowLen);
  for (int b = 0; b < b_n; ++b) {
    const double* slab = x.slab(b);
    for (int w = 0; w < kTimeWindows; ++w) {
      for (int ch = 0; ch < c; ++ch) {
        const double* src = slab + static_cast<std::size_t>(ch) * kTrialLen + w * kWindowLen;
        std::copy(src, src + kWindowLen, window.row(ch));
      }
      gemm_nt(window.data.data(), p.b_time.data.data(), &basis.u.at(b, w, 0, 0), c,
              kWindowLen, kEmbedDim);
    }
  }
  return basis;
}

namespace {

void encode_one_from_basis(const EncodedBasis& basis, int src_trial, const Mat& aw,
                           FeatureTensor& out, int dst_trial) {
  const int c = basis.channels();
  Mat pre(kSpatialTokens, kEmbedDim);
  for (int w = 0; w < kTimeWindows; ++w) {
    gemm(aw.data.data(), &basis.u.at(src_trial, w, 0, 0), pre.data.data(), kSpatialTokens,
         c, kEmbedDim);
    for (int t = 0; t < kSpatialTokens; ++t) {
      const double* pr = pre.row(t);
      double* dst = &out.z.at(dst_trial, t, w, 0);
      for (int d = 0; d < kEmbedDim; ++d) dst[d] = std::tanh(pr[d]);
    }
  }
}

}  // namespace

FeatureTensor encode_from_basis(const EncodedBasis& basis, const SpatialFilter& sf,
                                const ReferenceEncoderParams& p) {
  std::vector<int> idx(basis.trials());
  for (int i = 0; i < basis.trials(); ++i) idx[i] = i;
  return encode_from_basis(basis, idx, sf, p);
}

FeatureTensor encode_from_basis(const EncodedBasis& basis, const std::vector<int>& idx,
                                const SpatialFilter& sf, const ReferenceEncoderParams& p) {
  if (basis.channels() != sf.channels() || sf.channels() != p.channels())
    fail("ChannelMismatch", "basis/filter/encoder channel counts differ");
  FeatureTensor out;
  out.provenance = FeatureProvenance::ReferenceEncoder;
  out.z = Tensor4(static_cast<int>(idx.size()), kSpatialTokens, kTimeWindows, kEmbedDim);
  Mat aw(kSpatialTokens, sf.channels());
  gemm(p.a.data.data(), sf.w.data.data(), aw.data.data(), kSpatialTokens, sf.channels(),
       sf.channels());
  for (std::size_t i = 0; i < idx.size(); ++i)
    encode_one_from_basis(basis, idx[i], aw, out, static_cast<int>(i));
  return out;
}

}  // namespace cvep
