#include "cadv/attack.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>

namespace cadv {

std::string to_string(Strategy s) { return s == Strategy::Conservative ? "CONS" : "AGGR"; }

Strategy strategy_from_string(const std::string& s) {
    if (s == "CONS") return Strategy::Conservative;
    if (s == "AGGR") return Strategy::Aggressive;
    throw ConfigError("unknown selection strategy '" + s + "' (expected CONS or AGGR)");
}

std::string to_string(ConceptSetting s) { return s == ConceptSetting::Single ? "single" : "concept"; }

void AttackConfig::validate(std::size_t class_count) const {
    if (candidates < 1) throw ConfigError("attack: M must be >= 1");
    langevin.validate();
    for (auto k : k_list) {
        if (k < 1 || k > class_count) throw ConfigError("attack: k out of range");
    }
}

std::vector<StateVector> sample_adversarial_batch(const DistanceDistribution& dist,
                                                  const VictimDistribution& vic,
                                                  const AttackConfig& config) {
    if (config.candidates < 1) throw ConfigError("attack: M must be >= 1");
    return run_chains_parallel(GibbsTarget(dist, vic), config.langevin, config.candidates);
}

std::size_t select_candidate(std::span<const std::size_t> ranks, std::span<const double> probs,
                             Strategy strategy) {
    if (ranks.empty()) throw InvalidInput("select_candidate: no candidates");
    if (ranks.size() != probs.size()) throw InvalidInput("select_candidate: ranks/probs length mismatch");
    std::size_t best = 0;
    for (std::size_t i = 1; i < ranks.size(); ++i) {
        if (ranks[i] != ranks[best]) {
            if (ranks[i] < ranks[best]) best = i;
            continue;
        }
        const bool better = strategy == Strategy::Conservative ? probs[i] < probs[best] : probs[i] > probs[best];
        if (better) best = i;
    }
    return best;
}

std::vector<std::size_t> rejection_filter(std::span<const StateVector> candidates,
                                          const VictimDistribution& vic) {
    const Classifier* model = vic.model();
    if (model == nullptr) throw InvalidInput("rejection_filter: victim has no classifier");
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (target_rank(*model, candidates[i], vic.target()) == 1) keep.push_back(i);
    }
    return keep;
}

AttackEvaluation evaluate_attack(std::span<const double> selected, const Classifier& victim_model,
                                 std::span<const std::shared_ptr<const Classifier>> holdouts,
                                 std::size_t y_tar, std::span<const std::size_t> k_list) {
    for (const auto& h : holdouts) {
        if (h->class_count() != victim_model.class_count() || h->input_dim() != victim_model.input_dim()) {
            throw ConfigError("evaluate_attack: holdout model shape differs from the victim");
        }
    }
    for (auto k : k_list) {
        if (k < 1 || k > victim_model.class_count()) throw ConfigError("evaluate_attack: k out of range");
    }
    AttackEvaluation ev;
    ev.white_box_top1 = target_rank(victim_model, selected, y_tar) == 1;
    for (const auto& h : holdouts) {
        const std::size_t rank = target_rank(*h, selected, y_tar);
        std::vector<bool> flags;
        for (auto k : k_list) flags.push_back(rank <= k);
        ev.holdout_topk.push_back(std::move(flags));
    }
    return ev;
}

AttackResult assess_candidates(std::vector<StateVector> candidates, const VictimDistribution& vic,
                               std::span<const std::shared_ptr<const Classifier>> holdouts,
                               Strategy strategy, std::span<const std::size_t> k_list) {
    const Classifier* model = vic.model();
    if (model == nullptr) throw InvalidInput("attack: victim has no classifier");
    AttackResult r;
    r.candidates = std::move(candidates);
    for (const auto& x : r.candidates) {
        const auto logits = forward_logits(*model, x);
        r.target_ranks.push_back(target_rank(logits, vic.target()));
        r.target_probs.push_back(std::exp(logits[vic.target()] - log_sum_exp(logits)));
    }
    if (r.candidates.empty()) return r;
    r.selected = select_candidate(r.target_ranks, r.target_probs, strategy);
    auto ev = evaluate_attack(r.candidates[*r.selected], *model, holdouts, vic.target(), k_list);
    r.white_box_top1 = ev.white_box_top1;
    r.holdout_topk = std::move(ev.holdout_topk);
    return r;
}

AttackResult run_attack(const DistanceDistribution& dist, const VictimDistribution& vic,
                        const AttackConfig& config,
                        std::span<const std::shared_ptr<const Classifier>> holdouts) {
    if (const Classifier* m = vic.model()) config.validate(m->class_count());
    return assess_candidates(sample_adversarial_batch(dist, vic, config), vic, holdouts, config.strategy,
                             config.k_list);
}

void ComparisonSpec::validate() const {
    if (concepts.empty()) throw ConfigError("comparison: no concepts");
    if (targets.size() != concepts.size()) throw ConfigError("comparison: need one target list per concept");
    if (!victim) throw ConfigError("comparison: no victim model");
    if (m_grid.empty() || std::any_of(m_grid.begin(), m_grid.end(), [](std::size_t m) { return m == 0; })) {
        throw ConfigError("comparison: M grid must be non-empty and positive");
    }
    if (strategies.empty() || settings.empty()) throw ConfigError("comparison: need strategies and settings");
    langevin.validate();
    for (std::size_t i = 0; i < concepts.size(); ++i) {
        concepts[i].validate();
        if (concepts[i].dim() != victim->input_dim()) throw ConfigError("comparison: concept dimension mismatch");
        if (original_member >= concepts[i].size()) throw ConfigError("comparison: original member out of range");
        if (targets[i].empty()) throw ConfigError("comparison: empty target list for concept " + concepts[i].id);
        for (auto t : targets[i]) {
            if (t >= victim->class_count()) throw ConfigError("comparison: target class out of range");
        }
    }
    for (const auto& h : holdouts) {
        if (h->class_count() != victim->class_count() || h->input_dim() != victim->input_dim()) {
            throw ConfigError("comparison: holdout shape differs from victim");
        }
    }
    for (auto k : k_list) {
        if (k < 1 || k > victim->class_count()) throw ConfigError("comparison: k out of range");
    }
}

DistanceDistribution setting_distance(const Concept& concept_set, ConceptSetting setting,
                                      BandwidthRule rule, std::size_t original_member) {
    KdeDist kde = fit_concept_kde(concept_set, rule);
    if (setting == ConceptSetting::Single) {
        kde.centers = {concept_set.members.at(original_member)};
    }
    return kde;
}

const ComparisonAggregate* ComparisonTable::find(ConceptSetting s, std::size_t m, Strategy st) const {
    for (const auto& a : aggregates) {
        if (a.setting == s && a.m == m && a.strategy == st) return &a;
    }
    return nullptr;
}

namespace {

struct PairTask {
    std::size_t concept_index;
    std::size_t target;
    ConceptSetting setting;
    std::uint64_t stream;
};

std::vector<ComparisonRow> run_pair(const ComparisonSpec& spec, const PairTask& task,
                                    std::size_t max_m) {
    const Concept& cpt = spec.concepts[task.concept_index];
    const VictimDistribution vic(spec.victim, task.target, spec.c);
    const auto dist = setting_distance(cpt, task.setting, spec.bandwidth, spec.original_member);
    LangevinConfig lc = spec.langevin;
    lc.stream = task.stream;
    const auto all = run_chains_serial(GibbsTarget(dist, vic), lc, max_m);

    std::vector<ComparisonRow> rows;
    for (auto m : spec.m_grid) {
        std::vector<StateVector> prefix(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(m));
        const auto survivors = rejection_filter(prefix, vic).size();
        for (auto strategy : spec.strategies) {
            const auto r = assess_candidates(prefix, vic, spec.holdouts, strategy, spec.k_list);
            ComparisonRow row;
            row.concept_id = cpt.id;
            row.target = task.target;
            row.setting = task.setting;
            row.m = m;
            row.strategy = strategy;
            row.selected = *r.selected;
            row.target_rank = r.target_ranks[*r.selected];
            row.target_prob = r.target_probs[*r.selected];
            row.white_box_top1 = r.white_box_top1;
            row.rejection_survivors = survivors;
            row.holdout_rate.assign(spec.k_list.size(), 0.0);
            for (const auto& flags : r.holdout_topk) {
                for (std::size_t j = 0; j < flags.size(); ++j) row.holdout_rate[j] += flags[j];
            }
            if (!spec.holdouts.empty()) {
                for (double& v : row.holdout_rate) v /= static_cast<double>(spec.holdouts.size());
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

}  // namespace

ComparisonTable run_comparison(const ComparisonSpec& spec) {
    spec.validate();
    const std::size_t max_m = *std::max_element(spec.m_grid.begin(), spec.m_grid.end());

    std::vector<PairTask> tasks;
    const RngStream root(spec.langevin.seed, spec.langevin.stream);
    for (std::size_t ci = 0; ci < spec.concepts.size(); ++ci) {
        for (auto t : spec.targets[ci]) {
            // Same stream for both settings: the comparison runs on common noise.
            const auto stream = root.derive(ci).derive(t).stream_id();
            for (auto s : spec.settings) tasks.push_back({ci, t, s, stream});
        }
    }

    std::vector<std::vector<ComparisonRow>> per_task(tasks.size());
    std::exception_ptr error;
    const auto n = static_cast<std::ptrdiff_t>(tasks.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            per_task[static_cast<std::size_t>(i)] = run_pair(spec, tasks[static_cast<std::size_t>(i)], max_m);
        } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);

    ComparisonTable table;
    table.k_list = spec.k_list;
    for (auto& rows : per_task) {
        for (auto& r : rows) table.rows.push_back(std::move(r));
    }

    for (auto s : spec.settings) {
        for (auto m : spec.m_grid) {
            for (auto st : spec.strategies) {
                ComparisonAggregate agg{s, m, st, 0, 0.0, 0.0, std::vector<double>(spec.k_list.size(), 0.0)};
                for (const auto& r : table.rows) {
                    if (r.setting != s || r.m != m || r.strategy != st) continue;
                    ++agg.pairs;
                    agg.white_box_rate += r.white_box_top1;
                    agg.mean_rank += static_cast<double>(r.target_rank);
                    for (std::size_t j = 0; j < r.holdout_rate.size(); ++j) agg.holdout_rate[j] += r.holdout_rate[j];
                }
                if (agg.pairs > 0) {
                    const auto p = static_cast<double>(agg.pairs);
                    agg.white_box_rate /= p;
                    agg.mean_rank /= p;
                    for (double& v : agg.holdout_rate) v /= p;
                }
                table.aggregates.push_back(std::move(agg));
            }
        }
    }
    return table;
}

}  // namespace cadv
