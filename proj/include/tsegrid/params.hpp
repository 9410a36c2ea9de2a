// Copyright 2026 tsegrid authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef TSEGRID_PARAMS_HPP_
#define TSEGRID_PARAMS_HPP_

#include <cmath>
#include <string>
#include <vector>

#include "tsegrid/graph.hpp"
#include "tsegrid/random.hpp"
#include "tsegrid/tensor.hpp"

namespace tsegrid {

// A learnable tensor with a persistent gradient accumulator. Parameters live
// in the model, outside any graph; each forward pass mounts them as leaves
// and Graph::flush_grads() adds the per-graph gradients back here.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  Param(std::string n, Shape s)
      : name(std::move(n)), value(s), grad(std::move(s)) {}

  void zero_grad() { grad.fill(T(0)); }

  // uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)); seeded per parameter name so
  // initialization is independent of construction order
  void init_uniform(uint64_t seed, size_t fan_in) {
    Rng rng(mix_seed(seed, name));
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (T& v : value.data)
      v = static_cast<T>(rng.uniform(-bound, bound));
  }

  void init_const(double c) {
    for (T& v : value.data) v = static_cast<T>(c);
  }
};

template <typename T>
using ParamList = std::vector<Param<T>*>;

template <typename T>
inline Var<T> use(Graph<T>& g, Param<T>& p) {
  return g.leaf_with_sink(p.value, &p.grad);
}

template <typename T>
inline void zero_grads(const ParamList<T>& ps) {
  for (Param<T>* p : ps) p->zero_grad();
}

template <typename T>
inline size_t param_count(const ParamList<T>& ps) {
  size_t n = 0;
  for (const Param<T>* p : ps) n += p->value.size();
  return n;
}

}  // namespace tsegrid

#endif  // TSEGRID_PARAMS_HPP_
