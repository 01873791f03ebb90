#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "poseforge/common.hpp"

namespace poseforge::nn {

// Desk-scale Siamese network:
//   shared conv: 64x64 -> conv 8@5x5/2 -> ReLU -> pool -> conv 16@3x3 -> ReLU -> pool
//                -> conv 32@3x3 -> leaky -> pool -> 512-d embedding
//   temporal head: [emb_a | emb_b] -> FC128+BN+ReLU -> FC64+BN+ReLU -> FC1 -> sigmoid
//   spatial head:  emb -> FC128+BN+ReLU -> FC1 -> sigmoid

inline constexpr int kInputSize = 64;
inline constexpr int kInputPixels = kInputSize * kInputSize;
inline constexpr int kEmbedDim = 512;
inline constexpr int kTemporalHidden1 = 128;
inline constexpr int kTemporalHidden2 = 64;
inline constexpr int kSpatialHidden = 128;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

enum class Mode { Train, Eval };
enum class LayerGroup { Conv, TemporalHead, SpatialHead };

enum ParamIndex : std::size_t {
  kConv1W, kConv1B, kConv2W, kConv2B, kConv3W, kConv3B,
  kT1W, kT1B, kT1Gamma, kT1Beta, kT1Mean, kT1Var,
  kT2W, kT2B, kT2Gamma, kT2Beta, kT2Mean, kT2Var,
  kT3W, kT3B,
  kS1W, kS1B, kS1Gamma, kS1Beta, kS1Mean, kS1Var,
  kS2W, kS2B,
  kParamCount
};

struct ParamSpec {
  std::string_view name;
  std::vector<std::uint32_t> shape;  // logical shape, e.g. (out, in, k, k) for conv kernels
  Eigen::Index rows = 0;             // storage matrix
  Eigen::Index cols = 0;
  LayerGroup group = LayerGroup::Conv;
  bool trainable = true;  // batch-norm running statistics are not
};

const std::array<ParamSpec, kParamCount>& param_specs();

/// All network tensors. The three conv layers exist once and are used by both temporal
/// streams and the spatial stream.
template <typename Scalar>
struct ConvNetParams {
  std::array<Mat<Scalar>, kParamCount> tensors;

  Mat<Scalar>& operator[](std::size_t i) { return tensors[i]; }
  const Mat<Scalar>& operator[](std::size_t i) const { return tensors[i]; }

  static ConvNetParams zeros();

  template <typename Other>
  ConvNetParams<Other> cast() const {
    ConvNetParams<Other> out;
    for (std::size_t i = 0; i < kParamCount; ++i) out.tensors[i] = tensors[i].template cast<Other>();
    return out;
  }

  bool operator==(const ConvNetParams& other) const {
    for (std::size_t i = 0; i < kParamCount; ++i) {
      if (tensors[i].rows() != other.tensors[i].rows() || tensors[i].cols() != other.tensors[i].cols() ||
          tensors[i] != other.tensors[i]) {
        return false;
      }
    }
    return true;
  }
};

/// He-normal weights, zero biases, unit batch-norm scale and running variance.
template <typename Scalar>
ConvNetParams<Scalar> init_params(std::uint64_t seed);

struct ArchConfig {
  double leaky_slope = 0.1;
  double bn_epsilon = 1e-5;
};

/// Activations retained by a train-mode conv pass.
template <typename Scalar>
struct ConvCache {
  int batch = 0;
  std::array<Mat<Scalar>, 3> cols;  // im2col inputs per layer
  std::array<Mat<Scalar>, 3> pre;   // pre-activation, channels x (batch*h*w)
  std::array<std::vector<int>, 3> argmax;
};

/// Per fully connected + batch-norm + ReLU layer.
template <typename Scalar>
struct HiddenCache {
  Mat<Scalar> input;
  Mat<Scalar> xhat;
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> inv_std;
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> batch_mean;
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> batch_var;
  Mat<Scalar> bn_out;  // before ReLU
};

template <typename Scalar>
struct HeadCache {
  Mode mode = Mode::Train;
  std::vector<HiddenCache<Scalar>> hidden;
  Mat<Scalar> last_input;
  Vec<Scalar> logits;
};

/// Embeds a batch of images (one row of 64*64 values in [0,1] per image). The output is the
/// final pooling layer, one 512-d row per image. `cache` may be null.
template <typename Scalar>
Mat<Scalar> embed_batch(const ConvNetParams<Scalar>& params, const Mat<Scalar>& images, const ArchConfig& arch,
                        ConvCache<Scalar>* cache);

/// Accumulates conv parameter gradients for upstream embedding gradient `d_embed`.
template <typename Scalar>
void conv_backward(const ConvNetParams<Scalar>& params, const ConvCache<Scalar>& cache, const Mat<Scalar>& d_embed,
                   const ArchConfig& arch, ConvNetParams<Scalar>& grads);

template <typename Scalar>
Vec<Scalar> temporal_logits(const ConvNetParams<Scalar>& params, const Mat<Scalar>& emb_a, const Mat<Scalar>& emb_b,
                            Mode mode, const ArchConfig& arch, HeadCache<Scalar>* cache);

template <typename Scalar>
Vec<Scalar> spatial_logits(const ConvNetParams<Scalar>& params, const Mat<Scalar>& emb, Mode mode,
                           const ArchConfig& arch, HeadCache<Scalar>* cache);

/// Accumulates head gradients; writes gradients with respect to the two embeddings.
template <typename Scalar>
void temporal_backward(const ConvNetParams<Scalar>& params, const HeadCache<Scalar>& cache,
                       const Vec<Scalar>& d_logits, ConvNetParams<Scalar>& grads, Mat<Scalar>& d_emb_a,
                       Mat<Scalar>& d_emb_b);

template <typename Scalar>
void spatial_backward(const ConvNetParams<Scalar>& params, const HeadCache<Scalar>& cache,
                      const Vec<Scalar>& d_logits, ConvNetParams<Scalar>& grads, Mat<Scalar>& d_emb);

/// Moves running statistics toward the batch statistics recorded in a train-mode head cache.
template <typename Scalar>
void update_running_stats(ConvNetParams<Scalar>& params, const HeadCache<Scalar>& cache, bool temporal,
                          double momentum);

inline constexpr double kProbabilityClamp = 1e-7;

template <typename Scalar>
Vec<Scalar> sigmoid(const Vec<Scalar>& logits);

/// Mean binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7].
template <typename Scalar>
Scalar bce_loss(const Vec<Scalar>& probabilities, const Vec<Scalar>& labels);

/// Gradient of the mean BCE with respect to the logits: (p - y) / n, zero where p is clamped.
template <typename Scalar>
Vec<Scalar> bce_logit_gradient(const Vec<Scalar>& logits, const Vec<Scalar>& labels);

template <typename Scalar>
Scalar joint_loss(Scalar l_temporal, Scalar l_spatial, Scalar weight) {
  return l_temporal + weight * l_spatial;
}

// Single-image and pair conveniences over the batch functions.

template <typename Scalar>
struct EmbedResult {
  Vec<Scalar> embedding;
  ConvCache<Scalar> cache;  // empty in eval mode
};

template <typename Scalar>
EmbedResult<Scalar> forward_embed(const ConvNetParams<Scalar>& params, const Mat<Scalar>& image, Mode mode,
                                  const ArchConfig& arch = {});

/// Probabilities for a batch of (a, b) image pairs, one image per row.
template <typename Scalar>
Vec<Scalar> forward_temporal(const ConvNetParams<Scalar>& params, const Mat<Scalar>& images_a,
                             const Mat<Scalar>& images_b, Mode mode, const ArchConfig& arch = {});

template <typename Scalar>
Vec<Scalar> forward_spatial(const ConvNetParams<Scalar>& params, const Mat<Scalar>& images, Mode mode,
                            const ArchConfig& arch = {});

/// One joint training batch. Either task may be empty (ablations).
template <typename Scalar>
struct JointBatch {
  Mat<Scalar> anchors;     // temporal anchor images
  Mat<Scalar> candidates;  // temporal candidate images
  Vec<Scalar> temporal_labels;
  Mat<Scalar> spatial;
  Vec<Scalar> spatial_labels;
};

template <typename Scalar>
struct StepOutput {
  Scalar loss_temporal = 0;
  Scalar loss_spatial = 0;
  Scalar total = 0;
  ConvNetParams<Scalar> grads;
  HeadCache<Scalar> temporal_cache;
  HeadCache<Scalar> spatial_cache;
};

/// Train-mode forward pass and exact reverse-mode gradients of
/// joint_loss(l_temporal, l_spatial, spatial_weight).
template <typename Scalar>
StepOutput<Scalar> forward_backward(const ConvNetParams<Scalar>& params, const JointBatch<Scalar>& batch,
                                    Scalar spatial_weight, const ArchConfig& arch);

/// Loss only; same value as forward_backward().total.
template <typename Scalar>
Scalar joint_loss_value(const ConvNetParams<Scalar>& params, const JointBatch<Scalar>& batch, Scalar spatial_weight,
                        const ArchConfig& arch);

}  // namespace poseforge::nn
