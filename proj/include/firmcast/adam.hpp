#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "firmcast/error.hpp"

namespace firmcast {

/// Adam with decoupled weight decay: the decay term multiplies the weight
/// directly instead of being folded into the gradient.
class AdamW {
public:
    AdamW(std::size_t n, double learning_rate, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
          double epsilon = 1e-8)
        : lr_(learning_rate), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(epsilon), m_(n, 0.0), v_(n, 0.0) {}

    void step(std::span<double> theta, std::span<const double> grad) {
        if (theta.size() != m_.size() || grad.size() != m_.size())
            throw ConfigError("AdamW::step: parameter/gradient size mismatch");
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t k = 0; k < m_.size(); ++k) {
            m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * grad[k];
            v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * grad[k] * grad[k];
            const double m_hat = m_[k] / bc1;
            const double v_hat = v_[k] / bc2;
            theta[k] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_) + lr_ * wd_ * theta[k];
        }
    }

    std::size_t step_count() const { return t_; }

private:
    double lr_, wd_, beta1_, beta2_, eps_;
    std::vector<double> m_, v_;
    std::size_t t_ = 0;
};

} // namespace firmcast
