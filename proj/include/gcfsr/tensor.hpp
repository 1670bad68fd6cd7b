#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "gcfsr/errors.hpp"

namespace gcfsr {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string to_string(const Shape& shape);
const char* to_string(DType dtype);

// Calls f with a value of the scalar type matching dtype, e.g.
//   dispatch(t.dtype(), [&](auto tag) { using T = decltype(tag); ... });
template <class F>
decltype(auto) dispatch(DType dtype, F&& f) {
  if (dtype == DType::f64) return f(double{});
  return f(float{});
}

namespace detail {

// Every buffer starts on a 64-byte boundary. Eigen picks its vectorized
// peeling from the data address, so a fixed alignment keeps summation order,
// and with it every result bit, independent of where the allocator lands.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

template <class T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

using Storage = std::variant<Buffer<float>, Buffer<double>>;

struct Node {
  Shape shape;
  DType dtype = DType::f32;
  Storage data;
  bool requires_grad = false;
  bool leaf = true;
};

}  // namespace detail

// Dense row-major tensor handle. Values are immutable once produced by an
// op; parameters are the exception and are only written by the optimizer
// between training steps.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, DType dtype = DType::f32);
  static Tensor full(Shape shape, double value, DType dtype = DType::f32);
  static Tensor scalar(double value, DType dtype = DType::f32);
  static Tensor from(Shape shape, std::vector<float> values);
  static Tensor from(Shape shape, std::vector<double> values);
  // Converts values to the requested dtype.
  static Tensor from_values(Shape shape, const std::vector<double>& values,
                            DType dtype);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::int64_t dim(int axis) const;
  int ndim() const { return static_cast<int>(shape().size()); }
  std::int64_t numel() const;
  DType dtype() const;

  template <class T>
  std::span<const T> data() const {
    check_dtype<T>();
    const auto& v = std::get<detail::Buffer<T>>(node_->data);
    return {v.data(), v.size()};
  }

  // In-place access for freshly created tensors and optimizer updates.
  template <class T>
  std::span<T> mutable_data() {
    check_dtype<T>();
    auto& v = std::get<detail::Buffer<T>>(node_->data);
    return {v.data(), v.size()};
  }

  double item() const;
  double at(std::int64_t flat_index) const;
  std::vector<double> to_vector() const;

  bool requires_grad() const;
  // Marks a leaf tensor as a trainable parameter (or freezes it).
  Tensor& set_requires_grad(bool on);

  // Copy with no gradient history.
  Tensor detach() const;
  Tensor to(DType dtype) const;

  const detail::Node* id() const noexcept { return node_.get(); }
  const std::shared_ptr<detail::Node>& node() const noexcept { return node_; }

  static Tensor wrap(std::shared_ptr<detail::Node> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  template <class T>
  void check_dtype() const {
    constexpr DType want = std::is_same_v<T, double> ? DType::f64 : DType::f32;
    if (!node_) throw InvalidArgument("access to undefined tensor");
    if (node_->dtype != want)
      throw InvalidArgument(std::string("tensor dtype is ") +
                            to_string(node_->dtype) + ", requested " +
                            to_string(want));
  }

  std::shared_ptr<detail::Node> node_;
};

class GradTape;

// Handed to an op's backward function. grad_input(i) is empty when input i
// does not take part in differentiation.
class BackwardContext {
 public:
  template <class T>
  std::span<const T> grad_output() const {
    const auto& v = std::get<detail::Buffer<T>>(*grad_out_);
    return {v.data(), v.size()};
  }

  template <class T>
  std::span<T> grad_input(std::size_t i) {
    detail::Storage* s = input_grad(i);
    if (!s) return {};
    auto& v = std::get<detail::Buffer<T>>(*s);
    return {v.data(), v.size()};
  }

  bool needs_grad(std::size_t i) const;

 private:
  friend class GradTape;
  detail::Storage* input_grad(std::size_t i);

  GradTape* tape_ = nullptr;
  const void* entry_ = nullptr;
  const detail::Storage* grad_out_ = nullptr;
};

using BackwardFn = std::function<void(BackwardContext&)>;

// Reverse-mode tape. Ops record onto the tape made active by a Recording
// guard on the current thread, and only when at least one input requires
// gradients. backward() replays the record in reverse.
class GradTape {
 public:
  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  class Recording {
   public:
    explicit Recording(GradTape& tape);
    ~Recording();
    Recording(const Recording&) = delete;
    Recording& operator=(const Recording&) = delete;

   private:
    GradTape* previous_;
  };

  void backward(const Tensor& loss);

  // Accumulated gradient; exact zeros for tensors the loss does not reach.
  Tensor grad(const Tensor& t) const;
  bool reached(const Tensor& t) const;

  void reset();
  std::size_t size() const noexcept { return entries_.size(); }
  // Op names in the order backward() visited them.
  const std::vector<const char*>& backward_order() const noexcept {
    return visited_;
  }

  static GradTape* active();

  // Used by op implementations.
  void record(const char* op, std::vector<Tensor> inputs, const Tensor& output,
              BackwardFn fn);

 private:
  friend class BackwardContext;

  struct Entry {
    const char* op;
    std::vector<std::shared_ptr<detail::Node>> inputs;
    std::vector<bool> needs_grad;
    std::shared_ptr<detail::Node> output;
    BackwardFn fn;
  };

  detail::Storage& grad_slot(const detail::Node& node);

  std::vector<Entry> entries_;
  std::unordered_map<const detail::Node*, detail::Storage> grads_;
  std::vector<const char*> visited_;
  bool consumed_ = false;
};

// Throws NumericError naming op when any value is not finite.
void check_finite(const Tensor& t, const char* op);

}  // namespace gcfsr
