#pragma once

#include <array>
#include <cstdint>

#include "poseforge/nnet.hpp"

namespace poseforge::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Per-layer learning rates: conv layers use `conv`, both heads use `base`.
struct LearningRates {
  double base = 1e-4;
  double conv = 1e-5;

  double for_group(LayerGroup g) const { return g == LayerGroup::Conv ? conv : base; }
};

template <typename Scalar>
struct AdamState {
  ConvNetParams<Scalar> m;
  ConvNetParams<Scalar> v;
  std::uint64_t t = 0;

  static AdamState fresh() { return {ConvNetParams<Scalar>::zeros(), ConvNetParams<Scalar>::zeros(), 0}; }
};

/// One bias-corrected Adam update of every trainable tensor. Batch-norm running statistics
/// are left untouched. Throws on any shape mismatch before modifying anything.
template <typename Scalar>
void adam_step(ConvNetParams<Scalar>& params, const ConvNetParams<Scalar>& grads, AdamState<Scalar>& state,
               const LearningRates& lr, const AdamConfig& cfg = {});

}  // namespace poseforge::nn
