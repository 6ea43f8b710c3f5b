#include "cadv/sampler.hpp"

#include <cmath>
#include <exception>

#include <fmt/format.h>

namespace cadv {

GibbsTarget::GibbsTarget(DistanceDistribution d, VictimDistribution v) : dist(std::move(d)), vic(std::move(v)) {
    validate(dist);
    if (cadv::dim(dist) != vic.dim()) throw InvalidInput("gibbs target: distance/victim dimension mismatch");
}

double gibbs_energy(const GibbsTarget& target, std::span<const double> x) {
    return -log_density(target.dist, x) + target.vic.energy(x);
}

StateVector gibbs_drift(const GibbsTarget& target, std::span<const double> x) {
    StateVector g = score(target.dist, x);
    const StateVector v = target.vic.energy_grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= v[i];
    return g;
}

StateVector langevin_step(std::span<const double> x, const GibbsTarget& target, double eta,
                          std::span<const double> noise) {
    if (!(eta > 0.0)) throw InvalidInput("langevin_step: step size must be positive");
    if (noise.size() != x.size()) throw InvalidInput("langevin_step: noise dimension mismatch");
    StateVector next = gibbs_drift(target, x);
    const double amp = std::sqrt(2.0 * eta);
    for (std::size_t i = 0; i < next.size(); ++i) next[i] = x[i] + eta * next[i] + amp * noise[i];
    project_box_inplace(next);
    return next;
}

StateVector langevin_step(std::span<const double> x, const GibbsTarget& target, double eta,
                          RngStream& rng) {
    std::vector<double> noise(x.size());
    for (double& v : noise) v = rng.normal();
    return langevin_step(x, target, eta, noise);
}

void LangevinConfig::validate() const {
    if (!(step_size > 0.0)) throw ConfigError("langevin: step size must be positive");
    if (steps < 1) throw ConfigError("langevin: steps must be positive");
    if (burn_in < 0 || burn_in >= steps) throw ConfigError("langevin: need 0 <= burn_in < steps");
    if (thinning < 1 || thinning > steps - burn_in) throw ConfigError("langevin: need 1 <= thinning <= steps - burn_in");
}

namespace {

StateVector initial_state(const GibbsTarget& target, const LangevinConfig& config,
                          const std::optional<StateVector>& x0, RngStream& rng) {
    if (config.init == ChainInit::FixedPoint) {
        if (!x0) throw ConfigError("langevin: fixed-point init requires x0");
        if (x0->size() != target.dim()) throw ConfigError("langevin: x0 dimension mismatch");
        return project_box(*x0);
    }
    if (x0) throw ConfigError("langevin: x0 given but init is not fixed-point");

    ChainInit init = config.init;
    const auto* kde = std::get_if<KdeDist>(&target.dist);
    if (init == ChainInit::Auto) init = kde ? ChainInit::ConceptMember : ChainInit::UniformBox;
    if (init == ChainInit::ConceptMember) {
        if (!kde) throw ConfigError("langevin: concept-member init needs a concept (KDE) distance");
        const auto k = std::min(kde->centers.size() - 1,
                                static_cast<std::size_t>(rng.uniform() * static_cast<double>(kde->centers.size())));
        return project_box(kde->centers[k]);
    }
    StateVector x(target.dim());
    for (double& v : x) v = rng.uniform();
    return x;
}

}  // namespace

std::vector<StateVector> run_chain(const GibbsTarget& target, const LangevinConfig& config,
                                   const std::optional<StateVector>& x0, std::vector<TraceRow>* trace) {
    config.validate();
    RngStream rng(config.seed, config.stream);
    StateVector x = initial_state(target, config, x0, rng);
    std::vector<StateVector> samples;
    samples.reserve(static_cast<std::size_t>((config.steps - config.burn_in) / config.thinning));
    for (int t = 1; t <= config.steps; ++t) {
        x = langevin_step(x, target, config.step_size, rng);
        if (t > config.burn_in && (t - config.burn_in) % config.thinning == 0) {
            if (trace) trace->push_back({t, x, gibbs_energy(target, x)});
            samples.push_back(x);
        }
    }
    return samples;
}

StateVector run_chain_final(const GibbsTarget& target, const LangevinConfig& config,
                            const std::optional<StateVector>& x0) {
    config.validate();
    RngStream rng(config.seed, config.stream);
    StateVector x = initial_state(target, config, x0, rng);
    for (int t = 1; t <= config.steps; ++t) x = langevin_step(x, target, config.step_size, rng);
    return x;
}

std::uint64_t chain_stream(const LangevinConfig& config, std::size_t index) {
    return RngStream(config.seed, config.stream).derive(index).stream_id();
}

std::vector<StateVector> run_chains_serial(const GibbsTarget& target, const LangevinConfig& config,
                                           std::size_t count, const std::optional<StateVector>& x0) {
    std::vector<StateVector> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        LangevinConfig c = config;
        c.stream = chain_stream(config, i);
        out.push_back(run_chain_final(target, c, x0));
    }
    return out;
}

std::vector<StateVector> run_chains_parallel(const GibbsTarget& target, const LangevinConfig& config,
                                             std::size_t count, const std::optional<StateVector>& x0) {
    config.validate();
    std::vector<StateVector> out(count);
    std::exception_ptr error;
    const auto n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            LangevinConfig c = config;
            c.stream = chain_stream(config, static_cast<std::size_t>(i));
            out[static_cast<std::size_t>(i)] = run_chain_final(target, c, x0);
        } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    return out;
}

void write_trace_csv(std::ostream& out, std::span<const TraceRow> trace) {
    const std::size_t d = trace.empty() ? 0 : trace.front().x.size();
    out << "step";
    for (std::size_t i = 0; i < d; ++i) out << ",x" << i;
    out << ",energy\n";
    for (const auto& row : trace) {
        out << row.step;
        for (double v : row.x) out << fmt::format(",{}", v);
        out << fmt::format(",{}\n", row.energy);
    }
}

}  // namespace cadv
