#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <variant>

#include "cadv/netgrad.hpp"
#include "cadv/numerics.hpp"

namespace cadv {

/// Analytic stand-in for a classifier loss: f(x) = |x - center|^2 / (2 variance).
/// With c = 1 the victim distribution is exactly N(center, variance I), which is
/// what the closed-form KL and Langevin oracles need.
struct QuadraticLoss {
    StateVector center;
    double variance = 1.0;
};

/// p_vic(x | y_tar) ∝ exp(-c f(x, y_tar)).
class VictimDistribution {
  public:
    VictimDistribution(std::shared_ptr<const Classifier> model, std::size_t target, double c = 1.0);
    VictimDistribution(QuadraticLoss loss, double c = 1.0);

    /// Flat victim (f ≡ 0): the Gibbs target reduces to p_dis alone.
    static VictimDistribution constant(std::size_t dim);

    std::size_t dim() const;
    double c() const { return c_; }
    std::size_t target() const { return target_; }
    /// Null for analytic losses.
    const Classifier* model() const;

    /// f(x, y_tar) = -log p(y_tar | x).
    double loss(std::span<const double> x) const;
    /// c f(x, y_tar).
    double energy(std::span<const double> x) const;
    /// ∇_x c f(x, y_tar).
    StateVector energy_grad(std::span<const double> x) const;

    VictimDistribution with_c(double c) const;

  private:
    std::variant<std::shared_ptr<const Classifier>, QuadraticLoss> loss_;
    std::size_t target_ = 0;
    double c_ = 1.0;
};

double vic_energy(const VictimDistribution& v, std::span<const double> x);
StateVector vic_score(const VictimDistribution& v, std::span<const double> x);

/// 1 + number of classes whose logit is strictly greater than the target's.
std::size_t target_rank(std::span<const double> logits, std::size_t y_tar);
std::size_t target_rank(const Classifier& model, std::span<const double> x, std::size_t y_tar);

bool topk_success(const Classifier& model, std::span<const double> x, std::size_t y_tar,
                  std::size_t k);

/// softmax_{y_tar}(logits) from the raw classifier, independent of c.
double target_probability(const Classifier& model, std::span<const double> x, std::size_t y_tar);

}  // namespace cadv
