#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "tminer/params.hpp"
#include "tminer/tensor.hpp"

namespace tminer::nc {

template <class Real>
struct AdamHyper {
  Real lr = Real(3e-3);
  Real beta1 = Real(0.9);
  Real beta2 = Real(0.999);
  Real eps = Real(1e-8);
};

template <class Real>
class Adam {
 public:
  explicit Adam(AdamHyper<Real> hyper = {}) : hyper_(hyper) {}

  int64_t step_count() const { return t_; }
  const AdamHyper<Real>& hyper() const { return hyper_; }

  void step(ParameterSet<Real>& ps, const GradientMap<Real>& grads) {
    ++t_;
    Real bc1 = Real(1) - std::pow(hyper_.beta1, Real(t_));
    Real bc2 = Real(1) - std::pow(hyper_.beta2, Real(t_));
    for (const auto& name : ps.names()) {
      Tensor<Real>& p = ps.get(name);
      auto& mv = moments_.try_emplace(name, Moment{Tensor<Real>(p.shape), Tensor<Real>(p.shape)})
                     .first->second;
      if (!(mv.m.shape == p.shape)) throw ShapeError("adam moment shape drift: " + name);
      const Tensor<Real>* gp = grads.find(name);
      for (int i = 0; i < p.size(); ++i) {
        Real g = gp ? gp->data[i] : Real(0);
        mv.m.data[i] = hyper_.beta1 * mv.m.data[i] + (Real(1) - hyper_.beta1) * g;
        mv.v.data[i] = hyper_.beta2 * mv.v.data[i] + (Real(1) - hyper_.beta2) * g * g;
        Real mhat = mv.m.data[i] / bc1;
        Real vhat = mv.v.data[i] / bc2;
        p.data[i] -= hyper_.lr * mhat / (std::sqrt(vhat) + hyper_.eps);
      }
    }
  }

 private:
  struct Moment {
    Tensor<Real> m, v;
  };
  AdamHyper<Real> hyper_;
  int64_t t_ = 0;
  std::map<std::string, Moment> moments_;
};

}  // namespace tminer::nc
