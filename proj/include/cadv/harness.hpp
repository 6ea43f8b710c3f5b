#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cadv/attack.hpp"
#include "cadv/distributions.hpp"
#include "cadv/kl_lab.hpp"
#include "cadv/netgrad.hpp"
#include "cadv/sampler.hpp"

#include "json.hpp"

namespace cadv {

struct BlobSpec {
    /// One mean per class; each must lie in the box.
    std::vector<StateVector> means;
    double spread = 0.06;
    std::size_t samples_per_class = 200;
};

struct ConceptSpec {
    std::size_t count = 10;
    std::size_t members = 30;
    double spread = 0.05;
    std::size_t targets_per_concept = 5;
    /// Centers are drawn in [margin, 1 - margin]^d ...
    double margin = 0.1;
    /// ... at least this far from each other and from every blob mean but the nearest.
    double min_separation = 0.1;
};

struct ModelSpec {
    std::vector<std::size_t> hidden{16};
    int epochs = 500;
    double learning_rate = 0.5;
    std::uint64_t seed_tag = 0;
};

struct DeltaSettings {
    std::size_t samples = 10'000;
    bool crn = true;
    bool corrected = false;
    /// p_share = N(0.5·1, share_variance I).
    double share_variance = 25.0;
};

struct ExperimentConfig {
    std::uint64_t seed = 7;
    std::size_t dimension = 2;
    std::size_t classes = 6;
    BlobSpec blobs;
    ConceptSpec concepts;
    ModelSpec victim;
    std::vector<ModelSpec> holdouts;
    double c = 1.0;
    BandwidthRule bandwidth = BandwidthRule::scott();
    LangevinConfig langevin;
    std::vector<std::size_t> m_grid{1, 5, 10};
    std::vector<std::size_t> k_list{1, 2};
    std::vector<Strategy> strategies{Strategy::Conservative, Strategy::Aggressive};
    DeltaSettings delta;
    std::string output_dir = "out";

    /// Defaults of the desk-scale toy benchmark.
    static ExperimentConfig toy_benchmark();

    void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
/// Canonical form; keys sorted, output_dir excluded.
nlohmann::json config_to_json(const ExperimentConfig& c);
/// FNV-1a 64 of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const ExperimentConfig& c);

LabeledDataset synth_dataset(const BlobSpec& spec, RngStream& rng);

struct ToyConcepts {
    std::vector<Concept> concepts;
    /// Nearest blob class for each concept.
    std::vector<std::size_t> home_class;
    std::vector<std::vector<std::size_t>> targets;
};

/// Each concept: member 0 is the cluster center (the original point), the rest
/// come from augment_concept with jitter = spread. Targets are drawn from the
/// classes other than the home class.
ToyConcepts make_toy_concepts(const ConceptSpec& spec, const BlobSpec& blobs, std::size_t dim,
                              RngStream& rng);

/// Trained models and concepts for a config, rebuilt deterministically.
struct Workbench {
    ExperimentConfig config;
    LabeledDataset data;
    std::shared_ptr<const Classifier> victim;
    std::vector<std::shared_ptr<const Classifier>> holdouts;
    ToyConcepts toy;

    static Workbench build(const ExperimentConfig& config, bool with_models = true);
    ComparisonSpec comparison_spec(std::vector<std::size_t> m_grid) const;
};

struct CsvTable {
    std::string name;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

struct NamedFile {
    std::string name;
    std::string content;
};

struct ScatterSeries {
    std::string label;
    std::string color;
    double radius = 2.0;
    std::vector<StateVector> points;
};

struct ScatterPlot {
    std::string name;
    std::string title;
    std::vector<ScatterSeries> series;
};

struct ReportBundle {
    std::vector<CsvTable> tables;
    nlohmann::json summary = nlohmann::json::object();
    std::vector<ScatterPlot> plots;
    std::vector<NamedFile> files;
    /// generator, seed, config_hash, notes.
    nlohmann::json metadata = nlohmann::json::object();
    std::size_t dimension = 2;
};

std::string format_double(double v);
std::string render_csv(const CsvTable& table, const nlohmann::json& metadata);
std::string render_svg(const ScatterPlot& plot, const nlohmann::json& metadata);

/// Writes every table, summary.json, plots (d = 2 only) and extra files.
/// Returns the written paths in write order.
std::vector<std::filesystem::path> emit_report(ReportBundle bundle, const std::filesystem::path& out_dir);

/// Subcommand bodies; each fills a bundle.
ReportBundle cmd_train_victim(const ExperimentConfig& c);
ReportBundle cmd_fit_concept(const ExperimentConfig& c);
ReportBundle cmd_estimate_delta(const ExperimentConfig& c);
ReportBundle cmd_attack(const ExperimentConfig& c);
ReportBundle cmd_compare(const ExperimentConfig& c);
ReportBundle cmd_sweep_m(const ExperimentConfig& c);
ReportBundle cmd_verify_theory(const ExperimentConfig& c);

/// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
int run_cli(int argc, const char* const* argv);

}  // namespace cadv
