#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace egqn::ad {

using Shape = std::vector<std::size_t>;
using NodeId = std::uint64_t;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

NodeId next_node_id();

// Dense row-major array with value semantics. The element buffer is shared
// and never written after construction, so copies are cheap and safe to hand
// across threads.
template <typename T>
class Array {
 public:
  using value_type = T;

  Array() = default;
  Array(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Array zeros(Shape shape);
  static Array full(Shape shape, T value);
  static Array scalar(T value, bool requires_grad = false);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_ ? data_->size() : 0; }
  bool empty() const { return size() == 0; }

  std::span<const T> data() const {
    return data_ ? std::span<const T>(*data_) : std::span<const T>();
  }
  const std::vector<T>& vector() const;
  T operator[](std::size_t i) const { return (*data_)[i]; }
  T item() const;

  NodeId id() const { return id_; }
  bool requires_grad() const { return requires_grad_; }

  // Same values under a fresh identity that is not tracked for gradients.
  Array detach() const;
  // Shares the buffer under a new shape and a fresh, untracked identity.
  Array with_shape(Shape shape) const;
  // Same identity and shape carrying new values. Only optimizers use this,
  // so a parameter keeps its node id across updates.
  Array replaced(std::vector<T> data) const;

  // Internal: marks a freshly produced op result as gradient-carrying.
  void set_requires_grad(bool value) { requires_grad_ = value; }

 private:
  Shape shape_;
  std::shared_ptr<const std::vector<T>> data_;
  NodeId id_ = 0;
  bool requires_grad_ = false;
};

extern template class Array<float>;
extern template class Array<double>;

// Converts precision; the result is a new untracked leaf.
template <typename To, typename From>
Array<To> cast(const Array<From>& a) {
  std::vector<To> out(a.data().begin(), a.data().end());
  return Array<To>(a.shape(), std::move(out));
}

}  // namespace egqn::ad
