#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace somoformer {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor of 64-bit floats with optional gradient buffer.
///
/// Copies share storage (shallow, like a handle), which lets backward
/// closures capture their operands cheaply and write gradients that the
/// caller observes.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  bool defined() const { return st_ != nullptr; }
  const Shape& shape() const { return st_->shape; }
  int rank() const { return static_cast<int>(st_->shape.size()); }
  std::size_t numel() const { return st_->data.size(); }

  std::vector<double>& data() { return st_->data; }
  const std::vector<double>& data() const { return st_->data; }

  /// Value of a single-element tensor.
  double value() const;

  bool requires_grad() const { return st_ && st_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    st_->requires_grad = v;
    return *this;
  }

  bool has_grad() const { return st_ && !st_->grad.empty(); }
  /// Gradient buffer, allocated as zeros on first access.
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  void zero_grad();

  /// True when both handles point at the same storage.
  bool same_storage(const Tensor& other) const { return st_ == other.st_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first use
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> st_;
};

/// Records the backward rule of every differentiable op executed while the
/// tape is active. Entries are appended in execution order, so inputs of an
/// operation always precede it; backward() replays them in reverse.
///
/// One tape per training step; rebuilt every forward pass.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  void record(Tensor output, std::function<void()> backward_fn);

  /// Installs a tape as the active recorder for the current thread.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  static Tape* active();

 private:
  struct Entry {
    Tensor output;
    std::function<void()> backward_fn;
  };
  std::vector<Entry> entries_;

  friend void backward(const Tensor&, Tape&);
};

/// Reverse-mode sweep: seeds d(loss)/d(loss) = 1 and replays the tape
/// backwards, accumulating gradients into every requires_grad tensor.
/// Gradients of op outputs are reset first, so calling backward twice
/// accumulates into leaf (parameter) gradients only.
void backward(const Tensor& loss, Tape& tape);

}  // namespace somoformer
