#include "cadv/victim.hpp"

#include <cmath>

namespace cadv {

namespace {
template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
}  // namespace

VictimDistribution::VictimDistribution(std::shared_ptr<const Classifier> model, std::size_t target,
                                       double c)
    : loss_(std::move(model)), target_(target), c_(c) {
    const auto& m = std::get<0>(loss_);
    if (!m) throw InvalidInput("victim: null classifier");
    if (!(c > 0.0) || !std::isfinite(c)) throw InvalidInput("victim: c must be positive");
    if (target >= m->class_count()) throw InvalidInput("victim: target class out of range");
}

VictimDistribution::VictimDistribution(QuadraticLoss loss, double c) : loss_(std::move(loss)), c_(c) {
    const auto& q = std::get<1>(loss_);
    if (!(c > 0.0) || !std::isfinite(c)) throw InvalidInput("victim: c must be positive");
    if (!(q.variance > 0.0)) throw InvalidInput("victim: quadratic variance must be positive");
    if (q.center.empty()) throw InvalidInput("victim: empty quadratic center");
}

VictimDistribution VictimDistribution::constant(std::size_t dim) {
    return VictimDistribution(std::make_shared<const Classifier>(Classifier::zeros({dim, 1})), 0, 1.0);
}

std::size_t VictimDistribution::dim() const {
    return std::visit(overloaded{[](const std::shared_ptr<const Classifier>& m) { return m->input_dim(); },
                                 [](const QuadraticLoss& q) { return q.center.size(); }},
                      loss_);
}

const Classifier* VictimDistribution::model() const {
    if (const auto* m = std::get_if<0>(&loss_)) return m->get();
    return nullptr;
}

double VictimDistribution::loss(std::span<const double> x) const {
    return std::visit(
        overloaded{[&](const std::shared_ptr<const Classifier>& m) { return cross_entropy(*m, x, target_); },
                   [&](const QuadraticLoss& q) {
                       if (x.size() != q.center.size()) throw InvalidInput("victim: dimension mismatch");
                       return squared_distance(x, q.center) / (2.0 * q.variance);
                   }},
        loss_);
}

double VictimDistribution::energy(std::span<const double> x) const { return c_ * loss(x); }

StateVector VictimDistribution::energy_grad(std::span<const double> x) const {
    StateVector g = std::visit(
        overloaded{[&](const std::shared_ptr<const Classifier>& m) {
                       return loss_and_input_grad(*m, x, target_).input_grad;
                   },
                   [&](const QuadraticLoss& q) {
                       if (x.size() != q.center.size()) throw InvalidInput("victim: dimension mismatch");
                       StateVector out(x.size());
                       for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - q.center[i]) / q.variance;
                       return out;
                   }},
        loss_);
    for (double& v : g) v *= c_;
    return g;
}

VictimDistribution VictimDistribution::with_c(double c) const {
    VictimDistribution copy = *this;
    if (!(c > 0.0) || !std::isfinite(c)) throw InvalidInput("victim: c must be positive");
    copy.c_ = c;
    return copy;
}

double vic_energy(const VictimDistribution& v, std::span<const double> x) { return v.energy(x); }

StateVector vic_score(const VictimDistribution& v, std::span<const double> x) { return v.energy_grad(x); }

std::size_t target_rank(std::span<const double> logits, std::size_t y_tar) {
    if (y_tar >= logits.size()) throw InvalidInput("target_rank: class index out of range");
    std::size_t rank = 1;
    for (double l : logits) rank += l > logits[y_tar];
    return rank;
}

std::size_t target_rank(const Classifier& model, std::span<const double> x, std::size_t y_tar) {
    return target_rank(forward_logits(model, x), y_tar);
}

bool topk_success(const Classifier& model, std::span<const double> x, std::size_t y_tar,
                  std::size_t k) {
    if (k < 1 || k > model.class_count()) throw InvalidInput("topk_success: k out of range");
    return target_rank(model, x, y_tar) <= k;
}

double target_probability(const Classifier& model, std::span<const double> x, std::size_t y_tar) {
    if (y_tar >= model.class_count()) throw InvalidInput("target_probability: class index out of range");
    const auto logits = forward_logits(model, x);
    return std::exp(logits[y_tar] - log_sum_exp(logits));
}

}  // namespace cadv
