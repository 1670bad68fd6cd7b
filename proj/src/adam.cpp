#include "gcfsr/adam.hpp"

#include <cmath>

namespace gcfsr {

AdamState AdamState::zeros_like(std::span<const Tensor> params) {
  AdamState s;
  for (const auto& p : params) {
    s.first_moment.push_back(Tensor::zeros(p.shape(), p.dtype()));
    s.second_moment.push_back(Tensor::zeros(p.shape(), p.dtype()));
  }
  return s;
}

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads,
               AdamState& state, const AdamConfig& config) {
  if (!(config.lr > 0.0)) throw InvalidArgument("adam: lr must be positive");
  if (grads.size() != params.size() ||
      state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size())
    throw InvalidArgument("adam: params, grads and state differ in length");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& shape = params[i].shape();
    if (grads[i].shape() != shape || state.first_moment[i].shape() != shape ||
        state.second_moment[i].shape() != shape)
      throw InvalidArgument("adam: shape mismatch for parameter " +
                            std::to_string(i) + " " + to_string(shape));
    if (grads[i].dtype() != params[i].dtype())
      throw InvalidArgument("adam: dtype mismatch for parameter " +
                            std::to_string(i));
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    dispatch(params[i].dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto p = params[i].mutable_data<T>();
      auto g = grads[i].data<T>();
      auto m = state.first_moment[i].mutable_data<T>();
      auto v = state.second_moment[i].mutable_data<T>();
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double gj = g[j];
        const double mj = config.beta1 * m[j] + (1.0 - config.beta1) * gj;
        const double vj = config.beta2 * v[j] + (1.0 - config.beta2) * gj * gj;
        m[j] = static_cast<T>(mj);
        v[j] = static_cast<T>(vj);
        const double mhat = mj / c1;
        const double vhat = vj / c2;
        p[j] = static_cast<T>(p[j] - config.lr * mhat / (std::sqrt(vhat) + config.eps));
      }
    });
  }
}

}  // namespace gcfsr
