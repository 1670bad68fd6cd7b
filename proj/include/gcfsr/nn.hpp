#pragma once

#include <string>
#include <vector>

#include "gcfsr/rng.hpp"
#include "gcfsr/tensor.hpp"

namespace gcfsr {

// Ordered collection of named trainable tensors. Order is registration order
// and is what checkpoints and optimizers iterate over.
class ParamSet {
 public:
  explicit ParamSet(DType dtype = DType::f32) : dtype_(dtype) {}

  // Unit-normal initialization scaled by std.
  Tensor add_normal(const std::string& name, Shape shape, Rng& rng, double std = 1.0);
  Tensor add_constant(const std::string& name, Shape shape, double value);

  const std::vector<Tensor>& tensors() const { return values_; }
  std::vector<Tensor>& tensors() { return values_; }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return values_.size(); }
  DType dtype() const { return dtype_; }
  // Throws InvalidArgument for unknown names.
  const Tensor& get(const std::string& name) const;
  std::int64_t count() const;

  void set_requires_grad(bool on);
  // Overwrites values in place; names, shapes and dtypes must match.
  void copy_from(const ParamSet& other);

 private:
  Tensor& insert(const std::string& name, Tensor t);

  DType dtype_;
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

inline constexpr double kLeakySlope = 0.2;
// Keeps activation second moments roughly unchanged through leaky ReLU.
inline constexpr double kActGain = 1.4142135623730951;

// scale(leaky_relu(x), gain).
Tensor activate(const Tensor& x);

// Conv with equalized learning rate: weights are unit normal and scaled by
// 1/sqrt(fan_in) at run time.
struct EqualizedConv {
  Tensor weight;  // [O,C,k,k]
  Tensor bias;    // [O]
  int stride = 1;
  bool act = true;

  EqualizedConv() = default;
  EqualizedConv(ParamSet& params, const std::string& name, int in, int out, int k,
                int stride, bool act, Rng& rng);
  Tensor effective_weight() const;
  Tensor operator()(const Tensor& x) const;
};

struct EqualizedLinear {
  Tensor weight;  // [O,I]
  Tensor bias;    // [O]
  bool act = true;

  EqualizedLinear() = default;
  EqualizedLinear(ParamSet& params, const std::string& name, int in, int out, bool act,
                  Rng& rng, double bias_init = 0.0);
  Tensor effective_weight() const;
  Tensor operator()(const Tensor& x) const;
};

// Style-modulated 3x3 (or k x k) convolution with optional demodulation,
// noise injection, bias and activation.
struct ModulatedConv {
  EqualizedLinear affine;  // d_w -> C, bias initialized to 1
  Tensor weight;           // [O,C,k,k]
  Tensor bias;             // [O]
  Tensor noise_strength;   // [1]
  bool demodulate = true;
  bool act = true;

  ModulatedConv() = default;
  ModulatedConv(ParamSet& params, const std::string& name, int in, int out, int k,
                int d_w, bool demodulate, bool act, Rng& rng);

  struct Outputs {
    Tensor style;   // [N,C]
    Tensor result;  // [N,O,H,W]
  };
  // noise may be undefined (no noise); otherwise [N,1,H,W].
  Outputs run(const Tensor& x, const Tensor& latent, const Tensor& noise) const;
  Tensor operator()(const Tensor& x, const Tensor& latent, const Tensor& noise) const {
    return run(x, latent, noise).result;
  }
  Tensor effective_weight() const;
  // Per-sample demodulation coefficients [N,O] for a style [N,C].
  Tensor demod_coefficients(const Tensor& style) const;
};

}  // namespace gcfsr
