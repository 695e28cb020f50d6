#pragma once

#include <Eigen/Dense>
#include <vector>

#include "hotet/errors.hpp"

namespace hotet {

/// Adaptive moment estimation over a fixed list of parameter tensors.
class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Eigen::MatrixXd*>& params,
            const std::vector<Eigen::MatrixXd>& grads) {
    if (params.size() != grads.size()) throw ShapeError("adam: grad count mismatch");
    if (m_.empty()) {
      for (const auto* p : params) {
        m_.emplace_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
        v_.emplace_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
      }
    }
    if (m_.size() != params.size()) throw ShapeError("adam: parameter count changed");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Eigen::MatrixXd& g = grads[i];
      if (!g.allFinite()) throw NumericalError("adam: non-finite gradient");
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
      const Eigen::ArrayXXd mhat = m_[i].array() / bc1;
      const Eigen::ArrayXXd vhat = v_[i].array() / bc2;
      params[i]->array() -= lr_ * mhat / (vhat.sqrt() + eps_);
    }
  }

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<Eigen::MatrixXd> m_, v_;
  long t_ = 0;
};

}  // namespace hotet
