#include "egqn/ad/tape.hpp"

namespace egqn::ad {

namespace detail {

template <typename T>
Tape<T>*& active_tape_slot() {
  thread_local Tape<T>* slot = nullptr;
  return slot;
}

template <typename T>
void record(Array<T>& out, const std::vector<const Array<T>*>& inputs, BackwardFn<T> fn) {
  Tape<T>* tape = active_tape_slot<T>();
  if (tape == nullptr) return;
  bool any = false;
  for (const auto* in : inputs) any = any || in->requires_grad();
  if (!any) return;

  TapeEntry<T> entry;
  entry.inputs.reserve(inputs.size());
  for (const auto* in : inputs) {
    entry.inputs.push_back(in->id());
    entry.input_shapes.push_back(in->shape());
    entry.input_needs_grad.push_back(in->requires_grad());
  }
  entry.output = out.id();
  entry.output_size = out.size();
  entry.backward = std::move(fn);
  out.set_requires_grad(true);
  tape->push(std::move(entry));
}

template <typename T>
void record(Array<T>& out, std::initializer_list<const Array<T>*> inputs, BackwardFn<T> fn) {
  record(out, std::vector<const Array<T>*>(inputs), std::move(fn));
}

template Tape<float>*& active_tape_slot<float>();
template Tape<double>*& active_tape_slot<double>();
template void record<float>(Array<float>&, const std::vector<const Array<float>*>&,
                            BackwardFn<float>);
template void record<double>(Array<double>&, const std::vector<const Array<double>*>&,
                             BackwardFn<double>);
template void record<float>(Array<float>&, std::initializer_list<const Array<float>*>,
                            BackwardFn<float>);
template void record<double>(Array<double>&, std::initializer_list<const Array<double>*>,
                             BackwardFn<double>);

}  // namespace detail

template <typename T>
void Tape<T>::push(TapeEntry<T> entry) {
  produced_.emplace(entry.output, entries_.size());
  entries_.push_back(std::move(entry));
}

template <typename T>
void Tape<T>::clear() {
  entries_.clear();
  produced_.clear();
}

template <typename T>
Tape<T>* Tape<T>::active() {
  return detail::active_tape_slot<T>();
}

template <typename T>
TapeScope<T>::TapeScope(Tape<T>& tape) : previous_(detail::active_tape_slot<T>()) {
  detail::active_tape_slot<T>() = &tape;
}

template <typename T>
TapeScope<T>::~TapeScope() {
  detail::active_tape_slot<T>() = previous_;
}

template <typename T>
NoGradScope<T>::NoGradScope() : previous_(detail::active_tape_slot<T>()) {
  detail::active_tape_slot<T>() = nullptr;
}

template <typename T>
NoGradScope<T>::~NoGradScope() {
  detail::active_tape_slot<T>() = previous_;
}

template <typename T>
Array<T> Gradients<T>::at(const Array<T>& leaf) const {
  auto it = grads_.find(leaf.id());
  if (it == grads_.end()) return Array<T>::zeros(leaf.shape());
  return it->second;
}

template <typename T>
Gradients<T> backward(const Array<T>& loss, const Tape<T>& tape) {
  if (loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got " + to_string(loss.shape()));
  }
  Gradients<T> result;
  if (!loss.requires_grad()) return result;
  if (!tape.produced(loss.id())) {
    throw ContractError("loss was not recorded on this tape");
  }

  std::unordered_map<NodeId, std::vector<T>> grads;
  std::unordered_map<NodeId, Shape> leaf_shapes;
  grads.emplace(loss.id(), std::vector<T>{T{1}});

  const auto& entries = tape.entries();
  std::vector<std::vector<T>*> slots;
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
    const auto& entry = *it;
    auto found = grads.find(entry.output);
    if (found == grads.end()) continue;
    std::vector<T> grad_out = std::move(found->second);
    grads.erase(found);

    slots.assign(entry.inputs.size(), nullptr);
    for (std::size_t i = 0; i < entry.inputs.size(); ++i) {
      if (!entry.input_needs_grad[i]) continue;
      auto& buf = grads[entry.inputs[i]];
      if (buf.empty()) buf.assign(numel(entry.input_shapes[i]), T{0});
      slots[i] = &buf;
      if (!tape.produced(entry.inputs[i])) {
        leaf_shapes.emplace(entry.inputs[i], entry.input_shapes[i]);
      }
    }
    entry.backward(std::span<const T>(grad_out), std::span<std::vector<T>*>(slots));
  }

  // Whatever remains was never produced by an entry: those are the leaves.
  for (auto& [id, g] : grads) {
    if (tape.produced(id)) continue;
    result.set(id, Array<T>(leaf_shapes.at(id), std::move(g)));
  }
  return result;
}

template class Tape<float>;
template class Tape<double>;
template class TapeScope<float>;
template class TapeScope<double>;
template class NoGradScope<float>;
template class NoGradScope<double>;
template class Gradients<float>;
template class Gradients<double>;
template Gradients<float> backward(const Array<float>&, const Tape<float>&);
template Gradients<double> backward(const Array<double>&, const Tape<double>&);

}  // namespace egqn::ad
