#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cadv/distributions.hpp"
#include "cadv/sampler.hpp"
#include "cadv/victim.hpp"

namespace cadv {

enum class Strategy { Conservative, Aggressive };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

struct AttackConfig {
    std::size_t candidates = 10;  // M
    Strategy strategy = Strategy::Conservative;
    LangevinConfig langevin;
    std::vector<std::size_t> k_list{1};

    void validate(std::size_t class_count) const;
};

/// Final states of M independent Langevin chains on p_vic · p_dis.
std::vector<StateVector> sample_adversarial_batch(const DistanceDistribution& dist,
                                                  const VictimDistribution& vic,
                                                  const AttackConfig& config);

/// Smallest target rank first; ties go to the lowest (CONS) or highest (AGGR)
/// target probability, then to the smallest index.
std::size_t select_candidate(std::span<const std::size_t> ranks, std::span<const double> probs,
                             Strategy strategy);

/// Indices of candidates the white-box model already assigns to the target (rank 1).
std::vector<std::size_t> rejection_filter(std::span<const StateVector> candidates,
                                          const VictimDistribution& vic);

struct AttackEvaluation {
    bool white_box_top1 = false;
    /// holdout_topk[m][j]: target within top k_list[j] on holdout model m.
    std::vector<std::vector<bool>> holdout_topk;
};

AttackEvaluation evaluate_attack(std::span<const double> selected, const Classifier& victim_model,
                                 std::span<const std::shared_ptr<const Classifier>> holdouts,
                                 std::size_t y_tar, std::span<const std::size_t> k_list);

struct AttackResult {
    std::vector<StateVector> candidates;
    std::vector<std::size_t> target_ranks;
    std::vector<double> target_probs;
    std::optional<std::size_t> selected;
    bool white_box_top1 = false;
    std::vector<std::vector<bool>> holdout_topk;
};

/// Scores given candidates and applies selection and evaluation.
AttackResult assess_candidates(std::vector<StateVector> candidates, const VictimDistribution& vic,
                               std::span<const std::shared_ptr<const Classifier>> holdouts,
                               Strategy strategy, std::span<const std::size_t> k_list);

AttackResult run_attack(const DistanceDistribution& dist, const VictimDistribution& vic,
                        const AttackConfig& config,
                        std::span<const std::shared_ptr<const Classifier>> holdouts);

/// |C_ori| = 1 baseline versus the full concept.
enum class ConceptSetting { Single, Concept };
std::string to_string(ConceptSetting s);

struct ComparisonSpec {
    std::vector<Concept> concepts;
    /// Target classes per concept (parallel to `concepts`).
    std::vector<std::vector<std::size_t>> targets;
    std::shared_ptr<const Classifier> victim;
    std::vector<std::shared_ptr<const Classifier>> holdouts;
    double c = 1.0;
    BandwidthRule bandwidth = BandwidthRule::scott();
    LangevinConfig langevin;
    std::vector<std::size_t> m_grid{1, 5, 10};
    std::vector<std::size_t> k_list{1};
    std::vector<Strategy> strategies{Strategy::Conservative, Strategy::Aggressive};
    std::vector<ConceptSetting> settings{ConceptSetting::Single, ConceptSetting::Concept};
    /// Member used as the original point x_ori in the single setting.
    std::size_t original_member = 0;

    void validate() const;
};

/// Distance distribution for one setting: the concept KDE, or a one-center KDE
/// at the original member with the same bandwidth as the concept's.
DistanceDistribution setting_distance(const Concept& concept_set, ConceptSetting setting,
                                      BandwidthRule rule, std::size_t original_member);

struct ComparisonRow {
    std::string concept_id;
    std::size_t target = 0;
    ConceptSetting setting = ConceptSetting::Single;
    std::size_t m = 0;
    Strategy strategy = Strategy::Conservative;
    std::size_t selected = 0;
    std::size_t target_rank = 0;
    double target_prob = 0.0;
    bool white_box_top1 = false;
    std::size_t rejection_survivors = 0;
    /// Fraction of holdout models with the target in their top k, per k_list entry.
    std::vector<double> holdout_rate;
};

struct ComparisonAggregate {
    ConceptSetting setting;
    std::size_t m;
    Strategy strategy;
    std::size_t pairs = 0;
    double white_box_rate = 0.0;
    double mean_rank = 0.0;
    std::vector<double> holdout_rate;
};

struct ComparisonTable {
    std::vector<ComparisonRow> rows;
    std::vector<std::size_t> k_list;
    std::vector<ComparisonAggregate> aggregates;

    const ComparisonAggregate* find(ConceptSetting s, std::size_t m, Strategy st) const;
};

/// Runs every (concept, target, setting) attack once with max(m_grid) chains and
/// scores the first M chains for each M, so smaller batches are prefixes of larger
/// ones. Both settings of a pair share chain streams. Rows come out in
/// (concept, target, setting, M, strategy) order regardless of thread count.
ComparisonTable run_comparison(const ComparisonSpec& spec);

}  // namespace cadv
