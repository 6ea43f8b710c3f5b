#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "cadv/distributions.hpp"
#include "cadv/victim.hpp"

namespace cadv {

/// p_adv ∝ p_vic · p_dis, as the energy E(x) = -log p_dis(x) + c f(x, y_tar).
struct GibbsTarget {
    DistanceDistribution dist;
    VictimDistribution vic;

    GibbsTarget(DistanceDistribution d, VictimDistribution v);

    std::size_t dim() const { return cadv::dim(dist); }
};

double gibbs_energy(const GibbsTarget& target, std::span<const double> x);
/// -∇E(x) = score of p_dis minus gradient of the victim energy.
StateVector gibbs_drift(const GibbsTarget& target, std::span<const double> x);

/// x' = project_box(x + η(-∇E)(x) + sqrt(2η) ξ) with caller-supplied ξ.
StateVector langevin_step(std::span<const double> x, const GibbsTarget& target, double eta,
                          std::span<const double> noise);
StateVector langevin_step(std::span<const double> x, const GibbsTarget& target, double eta,
                          RngStream& rng);

enum class ChainInit { Auto, UniformBox, ConceptMember, FixedPoint };

struct LangevinConfig {
    double step_size = 1e-3;
    int steps = 200'000;
    int burn_in = 10'000;
    int thinning = 10;
    /// Auto: a uniform KDE center for concept distributions, uniform in the box otherwise.
    ChainInit init = ChainInit::Auto;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;

    void validate() const;
};

struct TraceRow {
    int step;
    StateVector x;
    double energy;
};

/// Post-burn-in, thinned samples of one chain. Deterministic in (seed, stream).
std::vector<StateVector> run_chain(const GibbsTarget& target, const LangevinConfig& config,
                                   const std::optional<StateVector>& x0 = std::nullopt,
                                   std::vector<TraceRow>* trace = nullptr);

/// State after the last step.
StateVector run_chain_final(const GibbsTarget& target, const LangevinConfig& config,
                            const std::optional<StateVector>& x0 = std::nullopt);

/// Stream id of chain `index` in a batch rooted at (seed, stream).
std::uint64_t chain_stream(const LangevinConfig& config, std::size_t index);

/// Final states of `count` independent chains, chain i on chain_stream(config, i).
/// The parallel kernel splits chains across OpenMP threads; the serial one is
/// the reference it must match bit for bit.
std::vector<StateVector> run_chains_serial(const GibbsTarget& target, const LangevinConfig& config,
                                           std::size_t count,
                                           const std::optional<StateVector>& x0 = std::nullopt);
std::vector<StateVector> run_chains_parallel(const GibbsTarget& target, const LangevinConfig& config,
                                             std::size_t count,
                                             const std::optional<StateVector>& x0 = std::nullopt);

/// CSV: step,x0..x{d-1},energy
void write_trace_csv(std::ostream& out, std::span<const TraceRow> trace);

}  // namespace cadv
