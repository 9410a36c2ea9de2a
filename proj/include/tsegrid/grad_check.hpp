// Copyright 2026 tsegrid authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef TSEGRID_GRAD_CHECK_HPP_
#define TSEGRID_GRAD_CHECK_HPP_

#include <cmath>
#include <functional>

#include "tsegrid/graph.hpp"
#include "tsegrid/params.hpp"

namespace tsegrid {

// Central finite differences against reverse-mode gradients. Meaningful
// tolerances require T = double; eps defaults to 1e-5.
//
// The returned figure is max_i |ad_i - fd_i| / max(1, |ad_i|, |fd_i|).

namespace gcdet {

template <typename T>
inline double rel_err(T a, T b) {
  double da = static_cast<double>(a), db = static_cast<double>(b);
  double denom = std::max(1.0, std::max(std::abs(da), std::abs(db)));
  return std::abs(da - db) / denom;
}

}  // namespace gcdet

// f: (Graph<T>&, Var<T>) -> Var<T>, scalar-valued at `point`
template <typename T, typename F>
double grad_check(F f, const Tensor<T>& point, double eps = 1e-5) {
  Tensor<T> analytic;
  {
    Graph<T> g;
    Var<T> x = g.leaf(point, /*requires_grad=*/true);
    Var<T> y = f(g, x);
    if (y.size() != 1)
      throw ShapeError("grad_check: f must be scalar-valued, got " +
                       shape_str(y.value().shape));
    if (!y.value().all_finite())
      throw NumericError("grad_check: non-finite function value");
    g.backward(y);
    analytic = g.grad_live(x.id) ? x.grad() : Tensor<T>::zeros(point.shape);
  }
  Tensor<T> p = point;
  double worst = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    T saved = p[i];
    p[i] = saved + static_cast<T>(eps);
    double up, down;
    {
      Graph<T> g;
      Var<T> y = f(g, g.leaf(p, false));
      up = static_cast<double>(y.value()[0]);
    }
    p[i] = saved - static_cast<T>(eps);
    {
      Graph<T> g;
      Var<T> y = f(g, g.leaf(p, false));
      down = static_cast<double>(y.value()[0]);
    }
    p[i] = saved;
    double fd = (up - down) / (2.0 * eps);
    if (!std::isfinite(fd))
      throw NumericError("grad_check: non-finite finite difference");
    worst = std::max(worst, gcdet::rel_err(static_cast<double>(analytic[i]), fd));
  }
  return worst;
}

// Same idea but for model parameters: `build` mounts the parameters itself
// (via use()) and returns a scalar loss.
template <typename T, typename BuildLoss>
double grad_check_params(BuildLoss build, const ParamList<T>& params,
                         double eps = 1e-5) {
  zero_grads(params);
  {
    Graph<T> g;
    Var<T> y = build(g);
    if (y.size() != 1)
      throw ShapeError("grad_check_params: loss must be scalar");
    if (!y.value().all_finite())
      throw NumericError("grad_check_params: non-finite loss");
    g.backward(y);
    g.flush_grads();
  }
  double worst = 0.0;
  for (Param<T>* p : params) {
    for (size_t i = 0; i < p->value.size(); ++i) {
      T saved = p->value[i];
      p->value[i] = saved + static_cast<T>(eps);
      double up, down;
      {
        Graph<T> g;
        up = static_cast<double>(build(g).value()[0]);
      }
      p->value[i] = saved - static_cast<T>(eps);
      {
        Graph<T> g;
        down = static_cast<double>(build(g).value()[0]);
      }
      p->value[i] = saved;
      double fd = (up - down) / (2.0 * eps);
      if (!std::isfinite(fd))
        throw NumericError("grad_check_params: non-finite finite difference at " +
                           p->name);
      worst = std::max(worst,
                       gcdet::rel_err(static_cast<double>(p->grad[i]), fd));
    }
  }
  return worst;
}

}  // namespace tsegrid

#endif  // TSEGRID_GRAD_CHECK_HPP_
