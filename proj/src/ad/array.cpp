#include "egqn/ad/array.hpp"

#include <atomic>
#include <functional>
#include <numeric>
#include <sstream>

namespace egqn::ad {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

NodeId next_node_id() {
  static std::atomic<NodeId> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

template <typename T>
Array<T>::Array(Shape shape, std::vector<T> data, bool requires_grad)
    : shape_(std::move(shape)),
      data_(std::make_shared<const std::vector<T>>(std::move(data))),
      id_(next_node_id()),
      requires_grad_(requires_grad) {
  if (numel(shape_) != data_->size()) {
    throw ShapeError("shape " + to_string(shape_) + " does not match " +
                     std::to_string(data_->size()) + " elements");
  }
}

template <typename T>
Array<T> Array<T>::zeros(Shape shape) {
  const auto n = numel(shape);
  return Array(std::move(shape), std::vector<T>(n, T{0}));
}

template <typename T>
Array<T> Array<T>::full(Shape shape, T value) {
  const auto n = numel(shape);
  return Array(std::move(shape), std::vector<T>(n, value));
}

template <typename T>
Array<T> Array<T>::scalar(T value, bool requires_grad) {
  return Array(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
const std::vector<T>& Array<T>::vector() const {
  static const std::vector<T> kEmpty;
  return data_ ? *data_ : kEmpty;
}

template <typename T>
T Array<T>::item() const {
  if (size() != 1) {
    throw ContractError("item() on array of shape " + to_string(shape_));
  }
  return (*data_)[0];
}

template <typename T>
Array<T> Array<T>::detach() const {
  Array out = *this;
  out.id_ = next_node_id();
  out.requires_grad_ = false;
  return out;
}

template <typename T>
Array<T> Array<T>::with_shape(Shape shape) const {
  if (numel(shape) != size()) {
    throw ShapeError("cannot view " + to_string(shape_) + " as " + to_string(shape));
  }
  Array out = *this;
  out.shape_ = std::move(shape);
  out.id_ = next_node_id();
  out.requires_grad_ = false;
  return out;
}

template <typename T>
Array<T> Array<T>::replaced(std::vector<T> data) const {
  if (data.size() != size()) {
    throw ShapeError("replacement size mismatch for " + to_string(shape_));
  }
  Array out = *this;
  out.data_ = std::make_shared<const std::vector<T>>(std::move(data));
  return out;
}

template class Array<float>;
template class Array<double>;

}  // namespace egqn::ad
