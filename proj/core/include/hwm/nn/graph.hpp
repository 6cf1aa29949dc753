#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "hwm/nn/tensor.hpp"

namespace hwm::nn {

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Named, ordered collection of trainable tensors.
template <class T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
  };

  std::size_t add(std::string name, Tensor<T> value) {
    entries_.push_back({std::move(name), std::move(value)});
    return entries_.size() - 1;
  }

  std::size_t size() const noexcept { return entries_.size(); }
  Entry& operator[](std::size_t i) { return entries_[i]; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  Tensor<T>& tensor(std::size_t i) { return entries_[i].value; }
  const Tensor<T>& tensor(std::size_t i) const { return entries_[i].value; }
  std::size_t find(std::string_view name) const;

  std::size_t numel() const noexcept {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  std::vector<T> flatten() const;
  void assign(std::span<const T> flat);

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::vector<Entry> entries_;
};

template <class T>
class Graph;

/// Handle to a node of a Graph.
template <class T>
struct Var {
  Graph<T>* graph = nullptr;
  std::uint32_t id = 0;

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Gradients for every entry of a ParamStore, in store order. Entries the
/// loss never reached hold zeros and are listed in `disconnected`.
template <class T>
struct ParamGrads {
  std::vector<Tensor<T>> grads;
  std::vector<std::string> disconnected;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so the tape is
/// topologically sorted by construction and backward is a single reverse sweep.
template <class T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::uint32_t)>;

  explicit Graph(bool record_grad = true, bool check_finite = true)
      : record_(record_grad), check_finite_(check_finite) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const noexcept { return record_; }

  Var<T> input(Tensor<T> value);
  Var<T> parameter(ParamStore<T>& store, std::size_t index);
  Var<T> record(Tensor<T> value, std::vector<std::uint32_t> inputs, BackwardFn fn, std::string_view op);

  const Tensor<T>& value(std::uint32_t id) const {
    const Node& n = nodes_[id];
    return n.ref != nullptr ? *n.ref : n.owned;
  }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }

  /// Gradient buffer of a node, zero-initialised on first access.
  Tensor<T>& grad(std::uint32_t id);
  bool has_grad(std::uint32_t id) const { return !nodes_[id].grad.empty(); }

  void backward(Var<T> loss);

  ParamGrads<T> gradients(const ParamStore<T>& store) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t backward_visits() const noexcept { return backward_visits_; }

  /// Label attached to subsequently recorded nodes; used in diagnostics.
  void set_scope(std::string scope) { scope_ = std::move(scope); }
  const std::string& scope() const noexcept { return scope_; }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* ref = nullptr;
    Tensor<T> grad;
    std::vector<std::uint32_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    const ParamStore<T>* store = nullptr;
    std::size_t param_index = 0;
  };

  bool record_;
  bool check_finite_;
  std::vector<Node> nodes_;
  std::string scope_;
  std::size_t backward_visits_ = 0;
};

template <class T>
const Tensor<T>& Var<T>::value() const {
  return graph->value(id);
}

extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace hwm::nn
