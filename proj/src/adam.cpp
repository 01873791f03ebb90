#include "poseforge/adam.hpp"

#include <cmath>

namespace poseforge::nn {

template <typename Scalar>
void adam_step(ConvNetParams<Scalar>& params, const ConvNetParams<Scalar>& grads, AdamState<Scalar>& state,
               const LearningRates& lr, const AdamConfig& cfg) {
  const auto& specs = param_specs();
  for (std::size_t i = 0; i < kParamCount; ++i) {
    const auto r = specs[i].rows, c = specs[i].cols;
    auto same = [&](const Mat<Scalar>& m) { return m.rows() == r && m.cols() == c; };
    if (!same(params[i]) || !same(grads[i]) || !same(state.m[i]) || !same(state.v[i])) {
      throw Error("adam_step: shape mismatch for " + std::string(specs[i].name));
    }
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);
  const auto c1 = static_cast<Scalar>(1.0 - std::pow(cfg.beta1, t));
  const auto c2 = static_cast<Scalar>(1.0 - std::pow(cfg.beta2, t));
  const auto eps = static_cast<Scalar>(cfg.epsilon);
  for (std::size_t i = 0; i < kParamCount; ++i) {
    if (!specs[i].trainable) continue;
    const auto rate = static_cast<Scalar>(lr.for_group(specs[i].group));
    state.m[i] = b1 * state.m[i] + (Scalar(1) - b1) * grads[i];
    state.v[i] = b2 * state.v[i] + (Scalar(1) - b2) * grads[i].cwiseProduct(grads[i]);
    const auto m_hat = state.m[i].array() / c1;
    const auto v_hat = state.v[i].array() / c2;
    params[i].array() -= rate * m_hat / (v_hat.sqrt() + eps);
  }
}

template void adam_step<float>(ConvNetParams<float>&, const ConvNetParams<float>&, AdamState<float>&,
                               const LearningRates&, const AdamConfig&);
template void adam_step<double>(ConvNetParams<double>&, const ConvNetParams<double>&, AdamState<double>&,
                                const LearningRates&, const AdamConfig&);

}  // namespace poseforge::nn
