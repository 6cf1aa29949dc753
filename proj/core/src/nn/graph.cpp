#include "hwm/nn/graph.hpp"

#include <algorithm>
#include <sstream>

namespace hwm::nn {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
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

template <class T>
std::size_t ParamStore<T>::find(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  throw std::out_of_range("no parameter named " + std::string(name));
}

template <class T>
std::vector<T> ParamStore<T>::flatten() const {
  std::vector<T> flat;
  flat.reserve(numel());
  for (const auto& e : entries_) flat.insert(flat.end(), e.value.data().begin(), e.value.data().end());
  return flat;
}

template <class T>
void ParamStore<T>::assign(std::span<const T> flat) {
  if (flat.size() != numel()) {
    throw ShapeError("flat weight vector has " + std::to_string(flat.size()) + " entries, model expects " +
                     std::to_string(numel()));
  }
  std::size_t off = 0;
  for (auto& e : entries_) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), e.value.size(), e.value.ptr());
    off += e.value.size();
  }
}

template <class T>
Var<T> Graph<T>::input(Tensor<T> value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <class T>
Var<T> Graph<T>::parameter(ParamStore<T>& store, std::size_t index) {
  Node n;
  n.ref = &store.tensor(index);
  n.requires_grad = record_;
  n.store = &store;
  n.param_index = index;
  nodes_.push_back(std::move(n));
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <class T>
Var<T> Graph<T>::record(Tensor<T> value, std::vector<std::uint32_t> inputs, BackwardFn fn, std::string_view op) {
  if (check_finite_ && !value.all_finite()) {
    std::string where = scope_.empty() ? std::string(op) : scope_ + "/" + std::string(op);
    throw NonFiniteError("non-finite activation produced by " + where);
  }
  Node n;
  n.owned = std::move(value);
  if (record_) {
    n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                  [this](std::uint32_t i) { return nodes_[i].requires_grad; });
    if (n.requires_grad) {
      n.inputs = std::move(inputs);
      n.backward = std::move(fn);
    }
  }
  nodes_.push_back(std::move(n));
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <class T>
Tensor<T>& Graph<T>::grad(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor<T>(value(id).shape());
  return n.grad;
}

template <class T>
void Graph<T>::backward(Var<T> loss) {
  if (!record_) throw std::logic_error("backward on a graph built without gradient recording");
  if (loss.graph != this) throw std::logic_error("loss belongs to another graph");
  if (value(loss.id).size() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " + shape_str(value(loss.id).shape()));
  }
  grad(loss.id)[0] = T(1);
  backward_visits_ = 0;
  for (std::uint32_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.backward || n.grad.empty()) continue;
    ++backward_visits_;
    n.backward(*this, id);
  }
}

template <class T>
ParamGrads<T> Graph<T>::gradients(const ParamStore<T>& store) const {
  ParamGrads<T> out;
  out.grads.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) out.grads.emplace_back(store.tensor(i).shape());
  std::vector<bool> touched(store.size(), false);
  for (const Node& n : nodes_) {
    if (n.store != &store || n.grad.empty()) continue;
    auto& g = out.grads[n.param_index];
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad[k];
    touched[n.param_index] = true;
  }
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (!touched[i]) out.disconnected.push_back(store[i].name);
  }
  return out;
}

template class ParamStore<float>;
template class ParamStore<double>;
template class Graph<float>;
template class Graph<double>;

}  // namespace hwm::nn
