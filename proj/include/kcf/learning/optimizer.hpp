#pragma once

#include "kcf/core.hpp"

#include <cmath>

namespace kcf::learning {

struct ScheduleConfig {
  int epochs = 100;
  int warmup_epochs = 10;
  double lr_peak = 1e-3;
  double lr_floor = 1e-7;
};

/**
 * Linear warmup from floor to peak over the warmup epochs, then cosine
 * annealing back to the floor at `epochs`. Valid for 0 <= epoch <= epochs;
 * the value at epoch == epochs is the end-of-training rate.
 */
inline double lr_schedule(int epoch, const ScheduleConfig& c) {
  if (epoch < 0 || epoch > c.epochs) throw ValidationError("epoch outside [0, epochs]");
  if (!(c.lr_floor <= c.lr_peak)) throw ValidationError("learning-rate floor exceeds peak");
  const double span = c.lr_peak - c.lr_floor;
  if (epoch < c.warmup_epochs) return c.lr_floor + span * static_cast<double>(epoch) / c.warmup_epochs;
  const int decay = c.epochs - c.warmup_epochs;
  if (decay <= 0) return c.lr_peak;
  const double progress = static_cast<double>(epoch - c.warmup_epochs) / decay;
  return c.lr_floor + 0.5 * span * (1.0 + std::cos(M_PI * progress));
}

class Adam {
 public:
  Adam(Index size, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : m_(Vector::Zero(size)), v_(Vector::Zero(size)), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(Vector& params, const Vector& grad, double lr) {
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
  }

  long steps() const { return t_; }

 private:
  Vector m_, v_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace kcf::learning
