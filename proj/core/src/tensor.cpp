#include "somoformer/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace somoformer {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("shape dimensions must be positive, got " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : st_(std::make_shared<Storage>()) {
  const std::size_t n = shape_numel(shape);
  st_->shape = std::move(shape);
  st_->data.assign(n, fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : st_(std::make_shared<Storage>()) {
  const std::size_t n = shape_numel(shape);
  if (n != values.size()) {
    throw std::invalid_argument("tensor data size " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape));
  }
  st_->shape = std::move(shape);
  st_->data = std::move(values);
}

double Tensor::value() const {
  if (!st_ || st_->data.size() != 1) {
    throw std::runtime_error("Tensor::value: tensor is not a single element, shape " +
                             (st_ ? shape_str(st_->shape) : std::string("[undefined]")));
  }
  return st_->data[0];
}

std::vector<double>& Tensor::grad() {
  if (st_->grad.empty()) st_->grad.assign(st_->data.size(), 0.0);
  return st_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (st_->grad.empty()) throw std::runtime_error("Tensor::grad: no gradient has been computed");
  return st_->grad;
}

void Tensor::zero_grad() {
  if (st_ && !st_->grad.empty()) st_->grad.assign(st_->data.size(), 0.0);
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}  // namespace

Tape* Tape::active() { return g_active_tape; }

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

Tape::Scope::~Scope() { g_active_tape = previous_; }

void Tape::record(Tensor output, std::function<void()> backward_fn) {
  entries_.push_back(Entry{std::move(output), std::move(backward_fn)});
}

void backward(const Tensor& loss, Tape& tape) {
  if (!loss.defined() || loss.numel() != 1) {
    throw std::runtime_error("backward: loss must be a scalar, got shape " +
                             (loss.defined() ? shape_str(loss.shape()) : std::string("[undefined]")));
  }
  // Op outputs are transient within one forward pass; reset their gradients so
  // a second backward call accumulates into leaves only.
  for (auto& entry : tape.entries_) {
    auto& g = entry.output.grad();
    std::fill(g.begin(), g.end(), 0.0);
  }
  Tensor seed = loss;
  seed.grad()[0] += 1.0;
  for (auto it = tape.entries_.rbegin(); it != tape.entries_.rend(); ++it) {
    it->backward_fn();
  }
}

}  // namespace somoformer
