#include "gcfsr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gcfsr {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

const char* to_string(DType dtype) {
  return dtype == DType::f64 ? "float64" : "float32";
}

namespace {

std::shared_ptr<detail::Node> make_node(Shape shape, DType dtype) {
  for (auto d : shape)
    if (d <= 0)
      throw InvalidArgument("tensor dimensions must be positive, got " +
                            to_string(shape));
  auto node = std::make_shared<detail::Node>();
  const auto n = static_cast<std::size_t>(numel(shape));
  node->shape = std::move(shape);
  node->dtype = dtype;
  if (dtype == DType::f64)
    node->data = detail::Buffer<double>(n, 0.0);
  else
    node->data = detail::Buffer<float>(n, 0.0f);
  return node;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, DType dtype) {
  return wrap(make_node(std::move(shape), dtype));
}

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  Tensor t = zeros(std::move(shape), dtype);
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    auto d = t.mutable_data<T>();
    std::fill(d.begin(), d.end(), static_cast<T>(value));
  });
  return t;
}

Tensor Tensor::scalar(double value, DType dtype) {
  return full({1}, value, dtype);
}

Tensor Tensor::from(Shape shape, std::vector<float> values) {
  if (gcfsr::numel(shape) != static_cast<std::int64_t>(values.size()))
    throw InvalidArgument("shape " + to_string(shape) + " does not match " +
                          std::to_string(values.size()) + " values");
  auto node = make_node(std::move(shape), DType::f32);
  node->data = detail::Buffer<float>(values.begin(), values.end());
  return wrap(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (gcfsr::numel(shape) != static_cast<std::int64_t>(values.size()))
    throw InvalidArgument("shape " + to_string(shape) + " does not match " +
                          std::to_string(values.size()) + " values");
  auto node = make_node(std::move(shape), DType::f64);
  node->data = detail::Buffer<double>(values.begin(), values.end());
  return wrap(std::move(node));
}

Tensor Tensor::from_values(Shape shape, const std::vector<double>& values,
                           DType dtype) {
  if (dtype == DType::f64) return from(std::move(shape), values);
  return from(std::move(shape), std::vector<float>(values.begin(), values.end()));
}

const Shape& Tensor::shape() const {
  if (!node_) throw InvalidArgument("access to undefined tensor");
  return node_->shape;
}

std::int64_t Tensor::dim(int axis) const {
  const auto& s = shape();
  if (axis < 0) axis += static_cast<int>(s.size());
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw InvalidArgument("axis " + std::to_string(axis) +
                          " out of range for shape " + to_string(s));
  return s[static_cast<std::size_t>(axis)];
}

std::int64_t Tensor::numel() const { return gcfsr::numel(shape()); }

DType Tensor::dtype() const {
  if (!node_) throw InvalidArgument("access to undefined tensor");
  return node_->dtype;
}

double Tensor::item() const {
  if (numel() != 1)
    throw InvalidArgument("item() on tensor of shape " + to_string(shape()));
  return at(0);
}

double Tensor::at(std::int64_t i) const {
  return dispatch(dtype(), [&](auto tag) -> double {
    using T = decltype(tag);
    auto d = data<T>();
    if (i < 0 || i >= static_cast<std::int64_t>(d.size()))
      throw InvalidArgument("flat index out of range");
    return static_cast<double>(d[static_cast<std::size_t>(i)]);
  });
}

std::vector<double> Tensor::to_vector() const {
  return dispatch(dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto d = data<T>();
    return std::vector<double>(d.begin(), d.end());
  });
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (!node_) throw InvalidArgument("set_requires_grad on undefined tensor");
  if (!node_->leaf)
    throw InvalidArgument("set_requires_grad is only valid on leaf tensors");
  node_->requires_grad = on;
  return *this;
}

Tensor Tensor::detach() const {
  auto node = std::make_shared<detail::Node>();
  node->shape = shape();
  node->dtype = dtype();
  node->data = node_->data;
  return wrap(std::move(node));
}

Tensor Tensor::to(DType target) const {
  if (target == dtype()) return detach();
  return from_values(shape(), to_vector(), target);
}

void check_finite(const Tensor& t, const char* op) {
  dispatch(t.dtype(), [&](auto tag) {
    using T = decltype(tag);
    for (T v : t.data<T>())
      if (!std::isfinite(v))
        throw NumericError(op, std::string("non-finite value produced by ") +
                                   op);
  });
}

// ---- BackwardContext -------------------------------------------------------

namespace {
thread_local GradTape* g_active_tape = nullptr;
}

bool BackwardContext::needs_grad(std::size_t i) const {
  const auto* e = static_cast<const GradTape::Entry*>(entry_);
  return i < e->needs_grad.size() && e->needs_grad[i];
}

detail::Storage* BackwardContext::input_grad(std::size_t i) {
  if (!needs_grad(i)) return nullptr;
  const auto* e = static_cast<const GradTape::Entry*>(entry_);
  return &tape_->grad_slot(*e->inputs[i]);
}

// ---- GradTape --------------------------------------------------------------

GradTape::Recording::Recording(GradTape& tape) : previous_(g_active_tape) {
  g_active_tape = &tape;
}

GradTape::Recording::~Recording() { g_active_tape = previous_; }

GradTape* GradTape::active() { return g_active_tape; }

void GradTape::record(const char* op, std::vector<Tensor> inputs,
                      const Tensor& output, BackwardFn fn) {
  Entry e;
  e.op = op;
  bool any = false;
  for (auto& in : inputs) {
    const bool needs = in.defined() && in.requires_grad();
    e.needs_grad.push_back(needs);
    e.inputs.push_back(in.node());
    any = any || needs;
  }
  if (!any) return;
  if (consumed_)
    throw InvalidArgument("recording onto a tape after backward(); reset first");
  output.node()->requires_grad = true;
  output.node()->leaf = false;
  e.output = output.node();
  e.fn = std::move(fn);
  entries_.push_back(std::move(e));
}

detail::Storage& GradTape::grad_slot(const detail::Node& node) {
  auto it = grads_.find(&node);
  if (it != grads_.end()) return it->second;
  detail::Storage s;
  const auto n = static_cast<std::size_t>(numel(node.shape));
  if (node.dtype == DType::f64)
    s = detail::Buffer<double>(n, 0.0);
  else
    s = detail::Buffer<float>(n, 0.0f);
  return grads_.emplace(&node, std::move(s)).first->second;
}

void GradTape::backward(const Tensor& loss) {
  if (consumed_)
    throw InvalidArgument("backward() called twice on the same tape; reset first");
  if (!loss.defined() || loss.numel() != 1)
    throw InvalidArgument("backward() needs a scalar loss, got shape " +
                          (loss.defined() ? to_string(loss.shape())
                                          : std::string("undefined")));
  check_finite(loss, "loss");
  consumed_ = true;
  visited_.clear();

  dispatch(loss.dtype(), [&](auto tag) {
    using T = decltype(tag);
    std::get<detail::Buffer<T>>(grad_slot(*loss.node()))[0] += T(1);
  });

  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    auto found = grads_.find(it->output.get());
    if (found == grads_.end()) continue;
    visited_.push_back(it->op);
    BackwardContext ctx;
    ctx.tape_ = this;
    ctx.entry_ = &*it;
    ctx.grad_out_ = &found->second;
    it->fn(ctx);
    for (std::size_t i = 0; i < it->inputs.size(); ++i) {
      if (!it->needs_grad[i]) continue;
      const auto& node = *it->inputs[i];
      std::visit(
          [&](const auto& v) {
            for (auto x : v)
              if (!std::isfinite(x))
                throw NumericError(it->op, std::string("non-finite gradient in ") +
                                               it->op + " backward");
          },
          grads_.at(&node));
    }
    // Only leaf gradients are kept.
    grads_.erase(it->output.get());
  }
}

Tensor GradTape::grad(const Tensor& t) const {
  auto it = grads_.find(t.id());
  if (it == grads_.end()) return Tensor::zeros(t.shape(), t.dtype());
  auto node = std::make_shared<detail::Node>();
  node->shape = t.shape();
  node->dtype = t.dtype();
  node->data = it->second;
  return Tensor::wrap(std::move(node));
}

bool GradTape::reached(const Tensor& t) const {
  return grads_.count(t.id()) != 0;
}

void GradTape::reset() {
  entries_.clear();
  grads_.clear();
  visited_.clear();
  consumed_ = false;
}

}  // namespace gcfsr
