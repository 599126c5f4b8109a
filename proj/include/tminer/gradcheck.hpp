#pragma once

#include <functional>
#include <string>

#include "tminer/graph.hpp"
#include "tminer/params.hpp"

namespace tminer::nc {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  int worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central finite differences in float64. The builder must be deterministic:
// rebuilding with the same parameter values has to yield the same loss (fix
// any dropout/rng seeds inside it).
using LossBuilder = std::function<NodeId(Graph<double>&, ParameterSet<double>&)>;

inline GradCheckReport grad_check(ParameterSet<double>& ps, const LossBuilder& build,
                                  double eps = 1e-5) {
  GradientMap<double> analytic;
  analytic.ensure_all(ps);
  {
    Graph<double> g;
    NodeId loss = build(g, ps);
    if (!(g.shape(loss) == Shape{1, 1})) throw ShapeError("grad_check: loss not scalar");
    g.backward(loss);
    analytic.collect(g);
  }
  auto eval = [&]() {
    Graph<double> g;
    NodeId loss = build(g, ps);
    return g.value(loss).data[0];
  };
  GradCheckReport rep;
  for (const auto& name : ps.names()) {
    Tensor<double>& p = ps.get(name);
    const Tensor<double>& a = *analytic.find(name);
    for (int i = 0; i < p.size(); ++i) {
      double keep = p.data[i];
      p.data[i] = keep + eps;
      double fp = eval();
      p.data[i] = keep - eps;
      double fm = eval();
      p.data[i] = keep;
      double num = (fp - fm) / (2.0 * eps);
      double den = std::max({std::fabs(a.data[i]), std::fabs(num), 1e-12});
      double rel = std::fabs(a.data[i] - num) / den;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = name;
        rep.worst_index = i;
        rep.analytic = a.data[i];
        rep.numeric = num;
      }
    }
  }
  return rep;
}

}  // namespace tminer::nc
