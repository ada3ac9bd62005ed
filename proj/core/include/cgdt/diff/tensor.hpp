#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace cgdt::diff {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  // Empty until a gradient is first written.
  std::vector<double> grad;
  bool requires_grad = false;
  // True for tensors created by the user (parameters, constants), false for
  // outputs of recorded ops.
  bool leaf = true;
  std::string name;

  std::vector<double>& ensure_grad();
};

/// Shared handle to a dense, row-major f64 array. Copies alias the same
/// storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t dim() const { return impl_->shape.size(); }
  std::size_t size(std::size_t axis) const;
  std::size_t numel() const { return impl_->data.size(); }

  std::vector<double>& data() { return impl_->data; }
  const std::vector<double>& data() const { return impl_->data; }
  double item() const;
  double operator[](std::size_t i) const { return impl_->data[i]; }

  bool has_grad() const { return !impl_->grad.empty(); }
  const std::vector<double>& grad() const { return impl_->grad; }
  std::vector<double>& mutable_grad() { return impl_->ensure_grad(); }
  void zero_grad();

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool value);
  const std::string& name() const { return impl_->name; }
  Tensor& set_name(std::string name);

  /// Deep copy of the values; the copy is a fresh leaf.
  Tensor clone() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Ordered record of executed differentiable operations. Ops record onto the
/// tape that is active on the calling thread; with no active tape nothing is
/// recorded and results carry no gradient history.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  /// Accumulates d(loss)/d(leaf) into every leaf that requires gradients.
  /// Intermediate gradients are reset first, so calling twice on the same
  /// tape accumulates leaf gradients twice.
  void backward(const Tensor& loss);

  void record(const char* op, std::shared_ptr<TensorImpl> output, BackwardFn fn);
  void clear();
  std::size_t size() const { return entries_.size(); }
  const char* op_name(std::size_t i) const { return entries_[i].op; }

  static Tape* active();

  /// Makes this tape the active one for the current thread until destroyed.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

 private:
  struct Entry {
    const char* op;
    std::shared_ptr<TensorImpl> output;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
};

/// Suspends recording on the current thread.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

/// Named, ordered collection of trainable tensors.
class ParameterSet {
 public:
  Tensor& add(std::string name, Tensor tensor);
  const std::vector<Tensor>& tensors() const { return tensors_; }
  std::vector<Tensor>& tensors() { return tensors_; }
  const Tensor& at(const std::string& name) const;
  std::size_t count() const;  // total scalar parameters
  void zero_grad();
  void set_requires_grad(bool value);
  /// Deep copy of all values, in order.
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& values);

 private:
  std::vector<Tensor> tensors_;
};

}  // namespace cgdt::diff
