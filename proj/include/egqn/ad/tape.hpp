#pragma once

#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "egqn/ad/array.hpp"

namespace egqn::ad {

// Accumulates the vector-Jacobian product of one recorded op. `grad_in[i]`
// is null when input i does not need a gradient; otherwise the closure adds
// its contribution in place.
template <typename T>
using BackwardFn =
    std::function<void(std::span<const T> grad_out, std::span<std::vector<T>*> grad_in)>;

template <typename T>
struct TapeEntry {
  std::vector<NodeId> inputs;
  std::vector<Shape> input_shapes;
  std::vector<bool> input_needs_grad;
  NodeId output = 0;
  std::size_t output_size = 0;
  BackwardFn<T> backward;
};

// Ordered record of primitive applications for one forward pass. Ops record
// onto the tape that is active on the calling thread (see TapeScope); with no
// active tape they run untracked.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  void push(TapeEntry<T> entry);
  const std::vector<TapeEntry<T>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool produced(NodeId id) const { return produced_.contains(id); }
  void clear();

  static Tape* active();

 private:
  std::vector<TapeEntry<T>> entries_;
  std::unordered_map<NodeId, std::size_t> produced_;
};

template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

// Runs ops inside with recording suspended (evaluation-only forward passes).
template <typename T>
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape<T>* previous_;
};

template <typename T>
class Gradients {
 public:
  bool contains(const Array<T>& a) const { return grads_.contains(a.id()); }
  bool contains(NodeId id) const { return grads_.contains(id); }
  // Zero array of the leaf's shape when the loss does not depend on it.
  Array<T> at(const Array<T>& leaf) const;
  const std::unordered_map<NodeId, Array<T>>& all() const { return grads_; }
  void set(NodeId id, Array<T> g) { grads_.insert_or_assign(id, std::move(g)); }

 private:
  std::unordered_map<NodeId, Array<T>> grads_;
};

// Reverse sweep over `tape` seeded with dLoss/dLoss = 1. Returns gradients
// for every requires_grad leaf reachable from `loss`. The tape is left
// untouched, so calling this twice yields identical results.
template <typename T>
Gradients<T> backward(const Array<T>& loss, const Tape<T>& tape);

namespace detail {

template <typename T>
Tape<T>*& active_tape_slot();

// Registers `out` as produced from `inputs`. No-op unless a tape is active
// and at least one input carries gradients.
template <typename T>
void record(Array<T>& out, std::initializer_list<const Array<T>*> inputs,
            BackwardFn<T> fn);

template <typename T>
void record(Array<T>& out, const std::vector<const Array<T>*>& inputs, BackwardFn<T> fn);

}  // namespace detail

extern template class Tape<float>;
extern template class Tape<double>;
extern template class TapeScope<float>;
extern template class TapeScope<double>;
extern template class NoGradScope<float>;
extern template class NoGradScope<double>;
extern template class Gradients<float>;
extern template class Gradients<double>;

}  // namespace egqn::ad
