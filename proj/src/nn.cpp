#include "gcfsr/nn.hpp"

#include <cmath>

#include "gcfsr/errors.hpp"
#include "gcfsr/ops.hpp"

namespace gcfsr {

Tensor& ParamSet::insert(const std::string& name, Tensor t) {
  for (const auto& n : names_)
    if (n == name) throw InvalidArgument("ParamSet: duplicate parameter '" + name + "'");
  t.set_requires_grad(true);
  names_.push_back(name);
  values_.push_back(std::move(t));
  return values_.back();
}

Tensor ParamSet::add_normal(const std::string& name, Shape shape, Rng& rng, double std) {
  Tensor t = Tensor::zeros(std::move(shape), dtype_);
  dispatch(dtype_, [&](auto tag) {
    using T = decltype(tag);
    for (auto& v : t.mutable_data<T>()) v = static_cast<T>(std * rng.normal());
  });
  return insert(name, t);
}

Tensor ParamSet::add_constant(const std::string& name, Shape shape, double value) {
  return insert(name, Tensor::full(std::move(shape), value, dtype_));
}

const Tensor& ParamSet::get(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return values_[i];
  throw InvalidArgument("ParamSet: no parameter named '" + name + "'");
}

std::int64_t ParamSet::count() const {
  std::int64_t n = 0;
  for (const auto& t : values_) n += t.numel();
  return n;
}

void ParamSet::set_requires_grad(bool on) {
  for (auto& t : values_) t.set_requires_grad(on);
}

void ParamSet::copy_from(const ParamSet& other) {
  if (other.names_ != names_) throw InvalidArgument("ParamSet::copy_from: parameter names differ");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const Tensor& src = other.values_[i];
    Tensor& dst = values_[i];
    if (src.shape() != dst.shape() || src.dtype() != dst.dtype())
      throw InvalidArgument("ParamSet::copy_from: '" + names_[i] + "' shape or dtype differs");
    dispatch(dst.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto s = src.data<T>();
      auto d = dst.mutable_data<T>();
      std::copy(s.begin(), s.end(), d.begin());
    });
  }
}

Tensor activate(const Tensor& x) {
  return ops::scale(ops::leaky_relu(x, kLeakySlope), kActGain);
}

EqualizedConv::EqualizedConv(ParamSet& params, const std::string& name, int in, int out,
                             int k, int stride_, bool act_, Rng& rng)
    : stride(stride_), act(act_) {
  weight = params.add_normal(name + ".weight", {out, in, k, k}, rng);
  bias = params.add_constant(name + ".bias", {out}, 0.0);
}

Tensor EqualizedConv::effective_weight() const {
  const double fan_in = static_cast<double>(weight.dim(1) * weight.dim(2) * weight.dim(3));
  return ops::scale(weight, 1.0 / std::sqrt(fan_in));
}

Tensor EqualizedConv::operator()(const Tensor& x) const {
  const int k = static_cast<int>(weight.dim(2));
  Tensor y = ops::conv2d(x, effective_weight(), bias, stride, (k - 1) / 2);
  return act ? activate(y) : y;
}

EqualizedLinear::EqualizedLinear(ParamSet& params, const std::string& name, int in, int out,
                                 bool act_, Rng& rng, double bias_init)
    : act(act_) {
  weight = params.add_normal(name + ".weight", {out, in}, rng);
  bias = params.add_constant(name + ".bias", {out}, bias_init);
}

Tensor EqualizedLinear::effective_weight() const {
  return ops::scale(weight, 1.0 / std::sqrt(static_cast<double>(weight.dim(1))));
}

Tensor EqualizedLinear::operator()(const Tensor& x) const {
  Tensor y = ops::fully_connected(x, effective_weight(), bias);
  return act ? activate(y) : y;
}

ModulatedConv::ModulatedConv(ParamSet& params, const std::string& name, int in, int out,
                             int k, int d_w, bool demodulate_, bool act_, Rng& rng)
    : demodulate(demodulate_), act(act_) {
  affine = EqualizedLinear(params, name + ".affine", d_w, in, false, rng, 1.0);
  weight = params.add_normal(name + ".weight", {out, in, k, k}, rng);
  bias = params.add_constant(name + ".bias", {out}, 0.0);
  noise_strength = params.add_constant(name + ".noise_strength", {1}, 0.0);
}

Tensor ModulatedConv::effective_weight() const {
  const double fan_in = static_cast<double>(weight.dim(1) * weight.dim(2) * weight.dim(3));
  return ops::scale(weight, 1.0 / std::sqrt(fan_in));
}

Tensor ModulatedConv::demod_coefficients(const Tensor& style) const {
  const Tensor w = effective_weight();
  const std::int64_t O = w.dim(0), C = w.dim(1), kk = w.dim(2) * w.dim(3);
  // Σ_k w[o,c,k]², so Σ_{c,k} (s_c·w[o,c,k])² = (s² · wsq^T)[n,o].
  const Tensor wsq = ops::reshape(ops::sum_last(ops::reshape(ops::square(w), {O * C, kk})), {O, C});
  const Tensor energy = ops::fully_connected(ops::square(style), wsq, Tensor());
  return ops::rsqrt(ops::add_scalar(energy, 1e-8));
}

ModulatedConv::Outputs ModulatedConv::run(const Tensor& x, const Tensor& latent,
                                          const Tensor& noise) const {
  if (x.ndim() != 4 || x.dim(1) != weight.dim(1))
    throw InvalidArgument("modulated_conv: input must be [N," + std::to_string(weight.dim(1)) +
                          ",H,W], got " + to_string(x.shape()));
  if (latent.ndim() != 2 || latent.dim(0) != x.dim(0) || latent.dim(1) != affine.weight.dim(1))
    throw InvalidArgument("modulated_conv: latent must be [" + std::to_string(x.dim(0)) + "," +
                          std::to_string(affine.weight.dim(1)) + "], got " +
                          to_string(latent.shape()));
  const int k = static_cast<int>(weight.dim(2));
  // Scaling input channels per sample equals scaling the kernel's input
  // channels, so the conv itself stays shared across the batch.
  const Tensor style = affine(latent);
  Tensor y = ops::conv2d(ops::scale_channels(x, style), effective_weight(), Tensor(), 1, (k - 1) / 2);
  if (demodulate) y = ops::scale_channels(y, demod_coefficients(style));
  if (noise.defined()) y = ops::add_noise(y, noise, noise_strength);
  y = ops::add_bias(y, bias);
  if (act) y = activate(y);
  return {style, y};
}

}  // namespace gcfsr
