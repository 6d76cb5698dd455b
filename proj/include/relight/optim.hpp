#ifndef RELIGHT_OPTIM_HPP
#define RELIGHT_OPTIM_HPP

#include <vector>

#include "relight/nnops.hpp"
#include "relight/types.hpp"

namespace relight {

template <typename S>
double global_grad_norm(const std::vector<TensorView<S>>& grads) {
  double sq = 0;
  for (const auto& g : grads) {
    Eigen::Map<const Vec<S>> v(g.data, g.size());
    sq += static_cast<double>(v.template cast<double>().squaredNorm());
  }
  return std::sqrt(sq);
}

/// Scales all gradients so the global norm does not exceed max_norm.
template <typename S>
void clip_grad_norm(std::vector<TensorView<S>>& grads, double max_norm) {
  if (max_norm <= 0) return;
  const double norm = global_grad_norm(grads);
  if (norm <= max_norm || norm == 0) return;
  const S scale = static_cast<S>(max_norm / norm);
  for (auto& g : grads) Eigen::Map<Vec<S>>(g.data, g.size()) *= scale;
}

template <typename S>
void zero_all(std::vector<TensorView<S>>& views) {
  for (auto& v : views) Eigen::Map<Vec<S>>(v.data, v.size()).setZero();
}

/// Adam with bias correction. State slots are created from the parameter
/// views on construction and must be stepped with views in the same order.
template <typename S>
class Adam {
 public:
  Adam(double lr, const std::vector<TensorView<S>>& params, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params) {
      m_.push_back(Vec<S>::Zero(p.size()));
      v_.push_back(Vec<S>::Zero(p.size()));
    }
  }

  void set_learning_rate(double lr) { lr_ = lr; }
  long step_count() const { return t_; }

  void step(std::vector<TensorView<S>>& params,
            const std::vector<TensorView<S>>& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size())
      throw ContractError("Adam: view count mismatch");
    ++t_;
    const S bc1 = S(1) - static_cast<S>(std::pow(beta1_, t_));
    const S bc2 = S(1) - static_cast<S>(std::pow(beta2_, t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Eigen::Map<Vec<S>> p(params[i].data, params[i].size());
      Eigen::Map<const Vec<S>> g(grads[i].data, grads[i].size());
      m_[i] = S(beta1_) * m_[i] + (S(1) - S(beta1_)) * g;
      v_[i].array() =
          S(beta2_) * v_[i].array() + (S(1) - S(beta2_)) * g.array().square();
      p.array() -= S(lr_) * (m_[i].array() / bc1) /
                   ((v_[i].array() / bc2).sqrt() + S(eps_));
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Vec<S>> m_, v_;
};

}  // namespace relight

#endif  // RELIGHT_OPTIM_HPP
