#include "cadv/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "CLI11.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cadv {

using nlohmann::json;

namespace {

// Stream tags; one per independent consumer of randomness.
enum : std::uint64_t {
    kTagData = 1,
    kTagVictim = 2,
    kTagConcepts = 3,
    kTagDelta = 4,
    kTagAttack = 5,
    kTagTheory = 6,
    kTagHoldout = 100,
};

RngStream root_stream(const ExperimentConfig& c, std::uint64_t tag) { return RngStream(c.seed, tag); }

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : j.items()) {
        if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

template <class T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

ModelSpec model_from_json(const json& j, ModelSpec m, const std::string& where) {
    check_keys(j, {"hidden", "epochs", "learning_rate", "seed_tag"}, where);
    read(j, "hidden", m.hidden);
    read(j, "epochs", m.epochs);
    read(j, "learning_rate", m.learning_rate);
    read(j, "seed_tag", m.seed_tag);
    return m;
}

json model_to_json(const ModelSpec& m) {
    return {{"hidden", m.hidden}, {"epochs", m.epochs}, {"learning_rate", m.learning_rate}, {"seed_tag", m.seed_tag}};
}

std::string init_name(ChainInit i) {
    switch (i) {
        case ChainInit::Auto: return "auto";
        case ChainInit::UniformBox: return "uniform-box";
        case ChainInit::ConceptMember: return "concept-member";
        case ChainInit::FixedPoint: return "fixed-point";
    }
    return "auto";
}

ChainInit init_from_name(const std::string& s) {
    if (s == "auto") return ChainInit::Auto;
    if (s == "uniform-box") return ChainInit::UniformBox;
    if (s == "concept-member") return ChainInit::ConceptMember;
    if (s == "fixed-point") throw ConfigError("langevin.init: fixed-point is not available from configs");
    throw ConfigError("langevin.init: unknown value '" + s + "'");
}

StateVector mean_of(const std::vector<StateVector>& pts) {
    StateVector m(pts.front().size(), 0.0);
    for (const auto& p : pts) {
        for (std::size_t i = 0; i < m.size(); ++i) m[i] += p[i];
    }
    for (double& v : m) v /= static_cast<double>(pts.size());
    return m;
}

double mean_coordinate_sd(const std::vector<StateVector>& pts) {
    const StateVector mu = mean_of(pts);
    double sd = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        double v = 0.0;
        for (const auto& p : pts) v += (p[i] - mu[i]) * (p[i] - mu[i]);
        sd += std::sqrt(v / static_cast<double>(pts.size()));
    }
    return sd / static_cast<double>(mu.size());
}

std::string bool_str(bool b) { return b ? "1" : "0"; }

json metadata_for(const ExperimentConfig& c) {
    return {{"generator", RngStream::kGeneratorId},
            {"seed", c.seed},
            {"config_hash", config_hash(c)},
            {"tool", "cadv-lab/1"},
            {"notes", json::array()}};
}

ReportBundle new_bundle(const ExperimentConfig& c) {
    ReportBundle b;
    b.metadata = metadata_for(c);
    b.dimension = c.dimension;
    return b;
}

json aggregates_json(const ComparisonTable& t) {
    json arr = json::array();
    for (const auto& a : t.aggregates) {
        json h = json::object();
        for (std::size_t j = 0; j < t.k_list.size(); ++j) h["top" + std::to_string(t.k_list[j])] = a.holdout_rate[j];
        arr.push_back({{"setting", to_string(a.setting)},
                       {"m", a.m},
                       {"strategy", to_string(a.strategy)},
                       {"pairs", a.pairs},
                       {"white_box_top1_rate", a.white_box_rate},
                       {"mean_target_rank", a.mean_rank},
                       {"holdout_rate", h}});
    }
    return arr;
}

CsvTable comparison_csv(const std::string& name, const ComparisonTable& t) {
    CsvTable csv{name,
                 {"concept_id", "target", "setting", "m", "strategy", "selected", "target_rank", "target_prob",
                  "white_box_top1", "rejection_survivors"},
                 {}};
    for (auto k : t.k_list) csv.header.push_back("holdout_top" + std::to_string(k));
    for (const auto& r : t.rows) {
        std::vector<std::string> row{r.concept_id,
                                     std::to_string(r.target),
                                     to_string(r.setting),
                                     std::to_string(r.m),
                                     to_string(r.strategy),
                                     std::to_string(r.selected),
                                     std::to_string(r.target_rank),
                                     format_double(r.target_prob),
                                     bool_str(r.white_box_top1),
                                     std::to_string(r.rejection_survivors)};
        for (double v : r.holdout_rate) row.push_back(format_double(v));
        csv.rows.push_back(std::move(row));
    }
    return csv;
}

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

ScatterSeries blob_means_series(const ExperimentConfig& c) {
    return {"class means", "#000000", 5.0, c.blobs.means};
}

}  // namespace

// ---------------------------------------------------------------- config

ExperimentConfig ExperimentConfig::toy_benchmark() {
    ExperimentConfig c;
    c.blobs.means = {{1.0 / 6, 0.25}, {0.5, 0.25}, {5.0 / 6, 0.25}, {1.0 / 6, 0.75}, {0.5, 0.75}, {5.0 / 6, 0.75}};
    c.blobs.spread = 0.06;
    c.blobs.samples_per_class = 200;
    c.victim = {{16}, 500, 0.5, 0};
    c.holdouts = {{{8}, 500, 0.5, 1}, {{24}, 500, 0.5, 2}, {{16, 8}, 500, 0.5, 3}};
    c.langevin.step_size = 1e-4;
    c.langevin.steps = 2000;
    c.langevin.burn_in = 0;
    c.langevin.thinning = 1;
    return c;
}

void ExperimentConfig::validate() const {
    if (dimension < 1) throw ConfigError("config: dimension must be >= 1");
    if (classes < 1) throw ConfigError("config: classes must be >= 1");
    if (blobs.means.size() != classes) throw ConfigError("config: need one blob mean per class");
    for (const auto& m : blobs.means) {
        if (m.size() != dimension) throw ConfigError("config: blob mean dimension mismatch");
    }
    if (!(blobs.spread >= 0.0)) throw ConfigError("config: blob spread must be non-negative");
    if (blobs.samples_per_class < 1) throw ConfigError("config: samples_per_class must be positive");
    if (concepts.count < 1 || concepts.members < 1) throw ConfigError("config: concept counts must be positive");
    if (!(concepts.spread > 0.0)) throw ConfigError("config: concept spread must be positive");
    if (concepts.targets_per_concept < 1 || concepts.targets_per_concept >= std::max<std::size_t>(classes, 2)) {
        throw ConfigError("config: targets_per_concept must be in [1, classes - 1]");
    }
    if (!(concepts.margin >= 0.0 && concepts.margin < 0.5)) throw ConfigError("config: concept margin must be in [0, 0.5)");
    if (!(c > 0.0)) throw ConfigError("config: c must be positive");
    langevin.validate();
    if (m_grid.empty()) throw ConfigError("config: m_grid must be non-empty");
    for (auto m : m_grid) {
        if (m < 1) throw ConfigError("config: M values must be positive");
    }
    for (auto k : k_list) {
        if (k < 1 || k > classes) throw ConfigError("config: k values must be in [1, classes]");
    }
    if (strategies.empty()) throw ConfigError("config: need at least one strategy");
    if (delta.samples < 2) throw ConfigError("config: delta.samples must be >= 2");
    if (!(delta.share_variance > 0.0)) throw ConfigError("config: delta.share_variance must be positive");
    for (const ModelSpec* m : [&] {
             std::vector<const ModelSpec*> all{&victim};
             for (const auto& h : holdouts) all.push_back(&h);
             return all;
         }()) {
        if (m->epochs < 0 || !(m->learning_rate > 0.0)) throw ConfigError("config: invalid training settings");
    }
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c = ExperimentConfig::toy_benchmark();
    check_keys(j,
               {"seed", "dimension", "classes", "blobs", "concepts", "victim", "holdouts", "c", "bandwidth",
                "langevin", "m_grid", "k_list", "strategies", "delta", "output_dir"},
               "config");
    read(j, "seed", c.seed);
    read(j, "dimension", c.dimension);
    read(j, "classes", c.classes);
    read(j, "c", c.c);
    read(j, "m_grid", c.m_grid);
    read(j, "k_list", c.k_list);
    read(j, "output_dir", c.output_dir);
    if (j.contains("blobs")) {
        const auto& b = j["blobs"];
        check_keys(b, {"means", "spread", "samples_per_class"}, "blobs");
        read(b, "means", c.blobs.means);
        read(b, "spread", c.blobs.spread);
        read(b, "samples_per_class", c.blobs.samples_per_class);
    }
    if (j.contains("concepts")) {
        const auto& b = j["concepts"];
        check_keys(b, {"count", "members", "spread", "targets_per_concept", "margin", "min_separation"}, "concepts");
        read(b, "count", c.concepts.count);
        read(b, "members", c.concepts.members);
        read(b, "spread", c.concepts.spread);
        read(b, "targets_per_concept", c.concepts.targets_per_concept);
        read(b, "margin", c.concepts.margin);
        read(b, "min_separation", c.concepts.min_separation);
    }
    if (j.contains("victim")) c.victim = model_from_json(j["victim"], c.victim, "victim");
    if (j.contains("holdouts")) {
        if (!j["holdouts"].is_array()) throw ConfigError("holdouts: expected an array");
        c.holdouts.clear();
        for (const auto& h : j["holdouts"]) c.holdouts.push_back(model_from_json(h, ModelSpec{}, "holdouts[]"));
    }
    if (j.contains("bandwidth")) {
        const auto& b = j["bandwidth"];
        if (b.is_string() && b.get<std::string>() == "scott") {
            c.bandwidth = BandwidthRule::scott();
        } else if (b.is_number()) {
            c.bandwidth = BandwidthRule::fixed_at(b.get<double>());
            if (!(c.bandwidth.fixed > 0.0)) throw ConfigError("bandwidth: must be positive");
        } else {
            throw ConfigError("bandwidth: expected \"scott\" or a positive number");
        }
    }
    if (j.contains("langevin")) {
        const auto& l = j["langevin"];
        check_keys(l, {"step_size", "steps", "burn_in", "thinning", "init"}, "langevin");
        read(l, "step_size", c.langevin.step_size);
        read(l, "steps", c.langevin.steps);
        read(l, "burn_in", c.langevin.burn_in);
        read(l, "thinning", c.langevin.thinning);
        if (l.contains("init")) c.langevin.init = init_from_name(l["init"].get<std::string>());
    }
    if (j.contains("strategies")) {
        std::vector<std::string> names;
        read(j, "strategies", names);
        c.strategies.clear();
        for (const auto& n : names) c.strategies.push_back(strategy_from_string(n));
    }
    if (j.contains("delta")) {
        const auto& d = j["delta"];
        check_keys(d, {"samples", "crn", "corrected", "share_variance"}, "delta");
        read(d, "samples", c.delta.samples);
        read(d, "crn", c.delta.crn);
        read(d, "corrected", c.delta.corrected);
        read(d, "share_variance", c.delta.share_variance);
    }
    c.langevin.seed = c.seed;
    c.validate();
    return c;
}

json config_to_json(const ExperimentConfig& c) {
    json holdouts = json::array();
    for (const auto& h : c.holdouts) holdouts.push_back(model_to_json(h));
    std::vector<std::string> strategies;
    for (auto s : c.strategies) strategies.push_back(to_string(s));
    json bandwidth = c.bandwidth.kind == BandwidthRule::Kind::Scott ? json("scott") : json(c.bandwidth.fixed);
    return {{"seed", c.seed},
            {"dimension", c.dimension},
            {"classes", c.classes},
            {"blobs", {{"means", c.blobs.means}, {"spread", c.blobs.spread}, {"samples_per_class", c.blobs.samples_per_class}}},
            {"concepts",
             {{"count", c.concepts.count},
              {"members", c.concepts.members},
              {"spread", c.concepts.spread},
              {"targets_per_concept", c.concepts.targets_per_concept},
              {"margin", c.concepts.margin},
              {"min_separation", c.concepts.min_separation}}},
            {"victim", model_to_json(c.victim)},
            {"holdouts", holdouts},
            {"c", c.c},
            {"bandwidth", bandwidth},
            {"langevin",
             {{"step_size", c.langevin.step_size},
              {"steps", c.langevin.steps},
              {"burn_in", c.langevin.burn_in},
              {"thinning", c.langevin.thinning},
              {"init", init_name(c.langevin.init)}}},
            {"m_grid", c.m_grid},
            {"k_list", c.k_list},
            {"strategies", strategies},
            {"delta",
             {{"samples", c.delta.samples},
              {"crn", c.delta.crn},
              {"corrected", c.delta.corrected},
              {"share_variance", c.delta.share_variance}}}};
}

std::string config_hash(const ExperimentConfig& c) {
    const std::string text = config_to_json(c).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return fmt::format("{:016x}", h);
}

// ---------------------------------------------------------------- data

LabeledDataset synth_dataset(const BlobSpec& spec, RngStream& rng) {
    if (spec.means.empty()) throw ConfigError("synth_dataset: no classes");
    for (const auto& m : spec.means) {
        if (!in_box(m)) throw ConfigError("synth_dataset: class mean outside [0,1]^d");
    }
    if (!(spec.spread >= 0.0)) throw ConfigError("synth_dataset: negative spread");
    LabeledDataset data;
    for (std::size_t k = 0; k < spec.means.size(); ++k) {
        for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
            StateVector x = spec.means[k];
            for (double& v : x) v += spec.spread * rng.normal();
            project_box_inplace(x);
            data.points.push_back(std::move(x));
            data.labels.push_back(k);
        }
    }
    return data;
}

ToyConcepts make_toy_concepts(const ConceptSpec& spec, const BlobSpec& blobs, std::size_t dim,
                              RngStream& rng) {
    if (spec.count < 1 || spec.members < 1) throw ConfigError("make_toy_concepts: counts must be positive");
    if (blobs.means.size() < 2) throw ConfigError("make_toy_concepts: need at least two classes");
    if (spec.targets_per_concept < 1 || spec.targets_per_concept >= blobs.means.size()) {
        throw ConfigError("make_toy_concepts: targets_per_concept must be in [1, classes - 1]");
    }
    const double sep2 = spec.min_separation * spec.min_separation;
    ToyConcepts out;
    std::vector<StateVector> centers;
    constexpr int kMaxTries = 100'000;
    for (std::size_t ci = 0; ci < spec.count; ++ci) {
        StateVector center(dim);
        std::size_t home = 0;
        bool placed = false;
        for (int attempt = 0; attempt < kMaxTries && !placed; ++attempt) {
            for (double& v : center) v = spec.margin + (1.0 - 2.0 * spec.margin) * rng.uniform();
            std::vector<double> d2;
            for (const auto& m : blobs.means) d2.push_back(squared_distance(center, m));
            home = static_cast<std::size_t>(std::min_element(d2.begin(), d2.end()) - d2.begin());
            placed = true;
            for (std::size_t k = 0; k < d2.size() && placed; ++k) {
                if (k != home && d2[k] < sep2) placed = false;
            }
            for (const auto& other : centers) {
                if (squared_distance(center, other) < sep2) placed = false;
            }
        }
        if (!placed) throw ConfigError("make_toy_concepts: could not place concept centers; lower min_separation");
        centers.push_back(center);

        RngStream member_rng = rng.derive(ci);
        Concept seed_concept{fmt::format("concept{:02d}", ci), {center}};
        Concept cpt = augment_concept(seed_concept, spec.members - 1, spec.spread, {}, member_rng);

        std::vector<std::size_t> candidates;
        for (std::size_t k = 0; k < blobs.means.size(); ++k) {
            if (k != home) candidates.push_back(k);
        }
        // Fisher-Yates on our own stream keeps the draw order platform-independent.
        for (std::size_t i = candidates.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(member_rng.uniform() * static_cast<double>(i));
            std::swap(candidates[i - 1], candidates[std::min(j, i - 1)]);
        }
        candidates.resize(spec.targets_per_concept);
        std::sort(candidates.begin(), candidates.end());

        out.concepts.push_back(std::move(cpt));
        out.home_class.push_back(home);
        out.targets.push_back(std::move(candidates));
    }
    return out;
}

Workbench Workbench::build(const ExperimentConfig& config, bool with_models) {
    config.validate();
    Workbench wb;
    wb.config = config;
    RngStream data_rng = root_stream(config, kTagData);
    wb.data = synth_dataset(config.blobs, data_rng);
    if (with_models) {
        auto train = [&](const ModelSpec& m, RngStream rng) {
            TrainSettings ts{m.hidden, config.classes, m.epochs, m.learning_rate};
            return std::make_shared<const Classifier>(train_classifier(wb.data, ts, rng));
        };
        wb.victim = train(config.victim, root_stream(config, kTagVictim).derive(config.victim.seed_tag));
        for (const auto& h : config.holdouts) {
            wb.holdouts.push_back(train(h, root_stream(config, kTagHoldout).derive(h.seed_tag)));
        }
    }
    RngStream concept_rng = root_stream(config, kTagConcepts);
    wb.toy = make_toy_concepts(config.concepts, config.blobs, config.dimension, concept_rng);
    return wb;
}

ComparisonSpec Workbench::comparison_spec(std::vector<std::size_t> m_grid) const {
    ComparisonSpec spec;
    spec.concepts = toy.concepts;
    spec.targets = toy.targets;
    spec.victim = victim;
    spec.holdouts = holdouts;
    spec.c = config.c;
    spec.bandwidth = config.bandwidth;
    spec.langevin = config.langevin;
    spec.langevin.seed = config.seed;
    spec.langevin.stream = kTagAttack;
    spec.m_grid = std::move(m_grid);
    spec.k_list = config.k_list;
    spec.strategies = config.strategies;
    return spec;
}

// ---------------------------------------------------------------- reports

std::string format_double(double v) { return fmt::format("{}", v); }

std::string render_csv(const CsvTable& table, const json& metadata) {
    std::string out = fmt::format("# generator={},seed={},config_hash={}\n", metadata.at("generator").get<std::string>(),
                                  metadata.at("seed").get<std::uint64_t>(),
                                  metadata.at("config_hash").get<std::string>());
    auto line = [&out](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out += ',';
            out += cells[i];
        }
        out += '\n';
    };
    line(table.header);
    for (const auto& r : table.rows) line(r);
    return out;
}

std::string render_svg(const ScatterPlot& plot, const json& metadata) {
    constexpr double kSize = 480.0;
    constexpr double kPad = 30.0;
    auto px = [](double v) { return kPad + v * (kSize - 2 * kPad); };
    auto py = [](double v) { return kSize - kPad - v * (kSize - 2 * kPad); };
    std::string s;
    s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    s += fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{0}\" height=\"{0}\" "
                     "viewBox=\"0 0 {0} {0}\">\n",
                     static_cast<int>(kSize));
    s += fmt::format("<metadata>generator={} seed={} config_hash={}</metadata>\n",
                     metadata.at("generator").get<std::string>(), metadata.at("seed").get<std::uint64_t>(),
                     metadata.at("config_hash").get<std::string>());
    s += fmt::format("<title>{}</title>\n", plot.title);
    s += fmt::format("<rect x=\"{0}\" y=\"{0}\" width=\"{1}\" height=\"{1}\" fill=\"none\" stroke=\"#999999\"/>\n",
                     kPad, kSize - 2 * kPad);
    double legend_y = 14.0;
    for (const auto& series : plot.series) {
        s += fmt::format("<g fill=\"{}\" fill-opacity=\"0.75\">\n", series.color);
        for (const auto& p : series.points) {
            s += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"{}\"/>\n", px(p[0]), py(p[1]), series.radius);
        }
        s += "</g>\n";
        s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"10\" fill=\"{}\">{}</text>\n", kSize - 150.0,
                         legend_y, series.color, series.label);
        legend_y += 11.0;
    }
    s += "</svg>\n";
    return s;
}

std::vector<std::filesystem::path> emit_report(ReportBundle bundle, const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());

    if (bundle.dimension != 2 && !bundle.plots.empty()) {
        bundle.metadata["notes"].push_back(fmt::format("svg plots skipped: dimension {} != 2", bundle.dimension));
        bundle.plots.clear();
    }

    std::vector<fs::path> written;
    auto write = [&](const std::string& name, const std::string& content) {
        const fs::path path = out_dir / name;
        fs::create_directories(path.parent_path(), ec);
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open " + path.string() + " for writing");
        f << content;
        if (!f) throw IoError("write failed for " + path.string());
        written.push_back(path);
    };

    for (const auto& t : bundle.tables) write(t.name + ".csv", render_csv(t, bundle.metadata));
    json summary = bundle.summary;
    summary["metadata"] = bundle.metadata;
    write("summary.json", summary.dump(2) + "\n");
    for (const auto& p : bundle.plots) write(p.name + ".svg", render_svg(p, bundle.metadata));
    for (const auto& f : bundle.files) write(f.name, f.content);
    return written;
}

// ---------------------------------------------------------------- subcommands

ReportBundle cmd_train_victim(const ExperimentConfig& c) {
    const Workbench wb = Workbench::build(c);
    ReportBundle b = new_bundle(c);

    CsvTable models{"models", {"model", "hidden", "seed_tag", "train_accuracy", "final_loss"}, {}};
    auto add = [&](const std::string& name, const ModelSpec& spec, const Classifier& m) {
        std::string hidden;
        for (std::size_t i = 0; i < spec.hidden.size(); ++i) hidden += (i ? ";" : "") + std::to_string(spec.hidden[i]);
        const double acc = accuracy(m, wb.data);
        models.rows.push_back({name, hidden, std::to_string(spec.seed_tag), format_double(acc),
                               format_double(mean_loss(m, wb.data))});
        b.summary["train_accuracy"][name] = acc;
        b.files.push_back({"models/" + name + ".json", classifier_to_json(m)});
    };
    add("victim", c.victim, *wb.victim);
    for (std::size_t i = 0; i < wb.holdouts.size(); ++i) {
        add("holdout" + std::to_string(i), c.holdouts[i], *wb.holdouts[i]);
    }
    b.tables.push_back(std::move(models));

    CsvTable data{"dataset", {"label"}, {}};
    for (std::size_t i = 0; i < c.dimension; ++i) data.header.push_back("x" + std::to_string(i));
    for (std::size_t i = 0; i < wb.data.size(); ++i) {
        std::vector<std::string> row{std::to_string(wb.data.labels[i])};
        for (double v : wb.data.points[i]) row.push_back(format_double(v));
        data.rows.push_back(std::move(row));
    }
    b.tables.push_back(std::move(data));

    ScatterPlot plot{"dataset", "synthetic classes", {}};
    for (std::size_t k = 0; k < c.classes; ++k) {
        ScatterSeries s{"class " + std::to_string(k), kPalette[k % 10], 1.5, {}};
        for (std::size_t i = 0; i < wb.data.size(); ++i) {
            if (wb.data.labels[i] == k) s.points.push_back(wb.data.points[i]);
        }
        plot.series.push_back(std::move(s));
    }
    plot.series.push_back(blob_means_series(c));
    b.plots.push_back(std::move(plot));
    b.summary["dataset_size"] = wb.data.size();
    return b;
}

ReportBundle cmd_fit_concept(const ExperimentConfig& c) {
    const Workbench wb = Workbench::build(c, false);
    ReportBundle b = new_bundle(c);
    CsvTable table{"concepts", {"concept_id", "members", "home_class", "targets", "bandwidth", "member_sd"}, {}};
    ScatterPlot plot{"concepts", "toy concepts", {}};
    json summary = json::array();
    for (std::size_t i = 0; i < wb.toy.concepts.size(); ++i) {
        const auto& cpt = wb.toy.concepts[i];
        const KdeDist kde = fit_concept_kde(cpt, c.bandwidth);
        std::string targets;
        for (std::size_t j = 0; j < wb.toy.targets[i].size(); ++j) {
            targets += (j ? ";" : "") + std::to_string(wb.toy.targets[i][j]);
        }
        const double sd = mean_coordinate_sd(cpt.members);
        table.rows.push_back({cpt.id, std::to_string(cpt.size()), std::to_string(wb.toy.home_class[i]), targets,
                              format_double(kde.bandwidth), format_double(sd)});
        summary.push_back({{"id", cpt.id}, {"bandwidth", kde.bandwidth}, {"member_sd", sd}});
        b.files.push_back({"concepts/" + cpt.id + ".json", concept_to_json(cpt)});
        plot.series.push_back({cpt.id, kPalette[i % 10], 2.0, cpt.members});
    }
    plot.series.push_back(blob_means_series(c));
    b.tables.push_back(std::move(table));
    b.plots.push_back(std::move(plot));
    b.summary["concepts"] = summary;
    return b;
}

ReportBundle cmd_estimate_delta(const ExperimentConfig& c) {
    const Workbench wb = Workbench::build(c);
    ReportBundle b = new_bundle(c);
    CsvTable table{"delta", {"concept_id", "target", "n", "crn", "corrected", "delta", "se", "ci_low", "ci_high"}, {}};
    const DistanceDistribution share = IsotropicGaussian{StateVector(c.dimension, 0.5), c.delta.share_variance};
    const RngStream root = root_stream(c, kTagDelta);
    std::size_t pairs = 0, negative = 0, significant = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < wb.toy.concepts.size(); ++i) {
        const auto& cpt = wb.toy.concepts[i];
        const auto full = setting_distance(cpt, ConceptSetting::Concept, c.bandwidth, 0);
        const auto single = setting_distance(cpt, ConceptSetting::Single, c.bandwidth, 0);
        for (auto t : wb.toy.targets[i]) {
            const VictimDistribution vic(wb.victim, t, c.c);
            const auto est = estimate_delta(full, single, vic, c.delta.samples, root.derive(i).derive(t), c.delta.crn,
                                            c.delta.corrected ? &share : nullptr);
            table.rows.push_back({cpt.id, std::to_string(t), std::to_string(est.n), bool_str(est.crn),
                                  bool_str(est.corrected), format_double(est.value), format_double(est.std_err),
                                  format_double(est.ci_low()), format_double(est.ci_high())});
            ++pairs;
            negative += est.value < 0.0;
            significant += est.ci_high() < 0.0;
            sum += est.value;
        }
    }
    b.tables.push_back(std::move(table));
    b.summary["pairs"] = pairs;
    b.summary["negative_fraction"] = static_cast<double>(negative) / static_cast<double>(pairs);
    b.summary["negative_ci_excludes_zero_fraction"] = static_cast<double>(significant) / static_cast<double>(pairs);
    b.summary["mean_delta"] = sum / static_cast<double>(pairs);
    return b;
}

ReportBundle cmd_attack(const ExperimentConfig& c) {
    const Workbench wb = Workbench::build(c);
    ReportBundle b = new_bundle(c);
    const std::size_t m = *std::max_element(c.m_grid.begin(), c.m_grid.end());

    CsvTable results{"attack", {"concept_id", "target", "strategy", "selected", "target_rank", "target_prob",
                                "white_box_top1", "rejection_survivors"},
                     {}};
    for (auto k : c.k_list) results.header.push_back("holdout_top" + std::to_string(k));
    CsvTable cands{"candidates", {"concept_id", "target", "index"}, {}};
    for (std::size_t i = 0; i < c.dimension; ++i) cands.header.push_back("x" + std::to_string(i));
    cands.header.insert(cands.header.end(), {"target_rank", "target_prob", "survivor"});

    std::size_t runs = 0, successes = 0;
    std::optional<ScatterPlot> plot;
    for (std::size_t i = 0; i < wb.toy.concepts.size(); ++i) {
        const auto& cpt = wb.toy.concepts[i];
        const auto dist = setting_distance(cpt, ConceptSetting::Concept, c.bandwidth, 0);
        for (auto t : wb.toy.targets[i]) {
            const VictimDistribution vic(wb.victim, t, c.c);
            AttackConfig ac;
            ac.candidates = m;
            ac.langevin = c.langevin;
            ac.langevin.seed = c.seed;
            ac.langevin.stream = RngStream(c.seed, kTagAttack).derive(i).derive(t).stream_id();
            ac.k_list = c.k_list;
            const auto batch = sample_adversarial_batch(dist, vic, ac);
            const auto survivors = rejection_filter(batch, vic);
            for (auto strategy : c.strategies) {
                const auto r = assess_candidates(batch, vic, wb.holdouts, strategy, c.k_list);
                std::vector<std::string> row{cpt.id,
                                             std::to_string(t),
                                             to_string(strategy),
                                             std::to_string(*r.selected),
                                             std::to_string(r.target_ranks[*r.selected]),
                                             format_double(r.target_probs[*r.selected]),
                                             bool_str(r.white_box_top1),
                                             std::to_string(survivors.size())};
                for (std::size_t j = 0; j < c.k_list.size(); ++j) {
                    double rate = 0.0;
                    for (const auto& flags : r.holdout_topk) rate += flags[j];
                    if (!r.holdout_topk.empty()) rate /= static_cast<double>(r.holdout_topk.size());
                    row.push_back(format_double(rate));
                }
                results.rows.push_back(std::move(row));
                ++runs;
                successes += r.white_box_top1;
                if (!plot) {
                    plot = ScatterPlot{"attack", fmt::format("{} -> class {}", cpt.id, t), {}};
                    plot->series.push_back({"concept members", "#1f77b4", 2.0, cpt.members});
                    plot->series.push_back({"candidates", "#ff7f0e", 3.0, r.candidates});
                    plot->series.push_back({"selected", "#d62728", 5.0, {r.candidates[*r.selected]}});
                    plot->series.push_back(blob_means_series(c));
                }
            }
            const auto scored = assess_candidates(batch, vic, {}, c.strategies.front(), {});
            for (std::size_t k = 0; k < batch.size(); ++k) {
                std::vector<std::string> row{cpt.id, std::to_string(t), std::to_string(k)};
                for (double v : batch[k]) row.push_back(format_double(v));
                row.push_back(std::to_string(scored.target_ranks[k]));
                row.push_back(format_double(scored.target_probs[k]));
                row.push_back(bool_str(std::find(survivors.begin(), survivors.end(), k) != survivors.end()));
                cands.rows.push_back(std::move(row));
            }
        }
    }
    b.tables.push_back(std::move(results));
    b.tables.push_back(std::move(cands));
    if (plot) b.plots.push_back(std::move(*plot));
    b.summary["m"] = m;
    b.summary["runs"] = runs;
    b.summary["white_box_top1_rate"] = runs ? static_cast<double>(successes) / static_cast<double>(runs) : 0.0;
    return b;
}

namespace {

ReportBundle comparison_bundle(const ExperimentConfig& c, std::vector<std::size_t> m_grid, const std::string& name) {
    const Workbench wb = Workbench::build(c);
    ReportBundle b = new_bundle(c);
    const auto table = run_comparison(wb.comparison_spec(std::move(m_grid)));
    b.tables.push_back(comparison_csv(name, table));
    b.summary["aggregates"] = aggregates_json(table);
    b.summary["rows"] = table.rows.size();
    return b;
}

}  // namespace

ReportBundle cmd_compare(const ExperimentConfig& c) {
    const std::size_t m = *std::max_element(c.m_grid.begin(), c.m_grid.end());
    return comparison_bundle(c, {m}, "comparison");
}

ReportBundle cmd_sweep_m(const ExperimentConfig& c) {
    std::vector<std::size_t> grid = c.m_grid;
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    return comparison_bundle(c, grid, "sweep_m");
}

ReportBundle cmd_verify_theory(const ExperimentConfig& c) {
    ReportBundle b = new_bundle(c);
    CsvTable checks{"theory_checks", {"check", "value", "expected", "tolerance", "pass"}, {}};
    std::size_t failures = 0;
    auto record = [&](const std::string& name, double value, double expected, double tol, bool pass) {
        checks.rows.push_back({name, format_double(value), format_double(expected), format_double(tol), bool_str(pass)});
        failures += !pass;
    };

    // Monotone decrease of KL(p || N(0, s²)) below E[(X - 0)²] = 4.
    const DistanceDistribution p = IsotropicGaussian{{0.0}, 4.0};
    const std::vector<double> grid{0.5, 1.0, 2.0, 3.0, 4.0, 8.0};
    const auto sweep = theorem1_sweep(p, 0.0, grid);
    record("threshold", sweep.threshold, 4.0, 1e-12, std::abs(sweep.threshold - 4.0) < 1e-12);
    bool decreasing = true;
    for (std::size_t i = 1; i + 1 < sweep.points.size(); ++i) decreasing &= sweep.points[i].kl < sweep.points[i - 1].kl;
    record("strictly_decreasing_below_threshold", decreasing, 1.0, 0.0, decreasing);
    const std::pair<double, double> expected[] = {{1.0, 0.806853}, {2.0, 0.153426}, {4.0, 0.0}};
    for (auto [s2, kl] : expected) {
        const auto it = std::find_if(sweep.points.begin(), sweep.points.end(), [s2](auto& pt) { return pt.variance == s2; });
        record(fmt::format("kl_at_{}", s2), it->kl, kl, 1e-6, std::abs(it->kl - kl) < 1e-6);
    }
    record("kl_increases_past_threshold", sweep.points.back().kl, sweep.points[4].kl, 0.0,
           sweep.points.back().kl > sweep.points[4].kl);

    // Closed form against the grid oracle.
    const DistanceDistribution std_normal = IsotropicGaussian{{0.0}, 1.0};
    double worst = 0.0;
    for (double mu : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
        for (double s2 : {0.25, 0.5, 1.0, 2.0, 4.0}) {
            const DistanceDistribution q = IsotropicGaussian{{mu}, s2};
            const double closed = kl_gaussians_closed_form(std::get<IsotropicGaussian>(std_normal),
                                                           std::get<IsotropicGaussian>(q));
            const double oracle = grid_kl_oracle(std_normal, q, default_grid(std_normal, q));
            worst = std::max(worst, std::abs(closed - oracle));
        }
    }
    record("closed_form_vs_grid_max_abs_error", worst, 0.0, 1e-4, worst < 1e-4);
    {
        const DistanceDistribution q = IsotropicGaussian{{0.0}, 4.0};
        const double oracle = grid_kl_oracle(std_normal, q, default_grid(std_normal, q));
        record("grid_kl_N01_N04", oracle, 0.318147, 1e-4, std::abs(oracle - 0.318147) < 1e-4);
    }

    // Laplace p: monotone decrease below its threshold via the grid oracle.
    {
        const DistanceDistribution lap = LaplaceDist{{0.0}, 1.0};
        const std::vector<double> lgrid{0.25, 0.5, 1.0, 1.5};
        const auto ls = theorem1_sweep(lap, 0.0, lgrid);
        bool dec = true;
        for (std::size_t i = 1; i < ls.points.size(); ++i) dec &= ls.points[i].kl < ls.points[i - 1].kl;
        record("laplace_decreasing_below_threshold", dec, 1.0, 0.0, dec && ls.threshold == 2.0);
    }

    // KL-difference estimator on an analytic problem.
    {
        const DistanceDistribution d1 = IsotropicGaussian{{0.0}, 1.0};
        const DistanceDistribution d2 = IsotropicGaussian{{0.0}, 0.25};
        const VictimDistribution vic(QuadraticLoss{{2.0}, 1.0});
        const double truth = kl_gaussians_closed_form({{0.0}, 1.0}, {{2.0}, 1.0}) -
                             kl_gaussians_closed_form({{0.0}, 0.25}, {{2.0}, 1.0});
        const auto est = estimate_delta(d1, d2, vic, 10'000, root_stream(c, kTagTheory), true);
        record("delta_estimate_covers_truth", est.value, truth, 1.96 * est.std_err, est.covers(truth));
    }

    b.tables.push_back(std::move(checks));
    b.summary["failures"] = failures;
    b.summary["passed"] = failures == 0;
    return b;
}

// ---------------------------------------------------------------- CLI

namespace {

void error_record(const std::string& kind, const std::string& message) {
    std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Concept-based probabilistic adversarial attack laboratory"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    int jobs = 0;
    app.add_option("--config", config_path, "experiment config (JSON)")->required();
    app.add_option("--out", out_dir, "output directory (overrides the config)");
    app.add_option("--seed", seed, "master seed (overrides the config)");
    app.add_option("--jobs", jobs, "worker threads (0 = runtime default)")->check(CLI::NonNegativeNumber);

    using Command = ReportBundle (*)(const ExperimentConfig&);
    const std::vector<std::pair<std::string, Command>> commands{
        {"train-victim", cmd_train_victim}, {"fit-concept", cmd_fit_concept}, {"estimate-delta", cmd_estimate_delta},
        {"attack", cmd_attack},             {"compare", cmd_compare},         {"sweep-m", cmd_sweep_m},
        {"verify-theory", cmd_verify_theory}};
    for (const auto& [name, _] : commands) app.add_subcommand(name);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        error_record("usage", e.what());
        return 2;
    }

    ExperimentConfig config;
    try {
        std::ifstream f(config_path);
        if (!f) throw ConfigError("cannot read config file " + config_path);
        std::stringstream ss;
        ss << f.rdbuf();
        json j;
        try {
            j = json::parse(ss.str());
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config is not valid JSON: ") + e.what());
        }
        config = config_from_json(j);
        if (seed) {
            config.seed = *seed;
            config.langevin.seed = *seed;
        }
        if (!out_dir.empty()) config.output_dir = out_dir;
    } catch (const ConfigError& e) {
        error_record("usage", e.what());
        return 2;
    }

#ifdef _OPENMP
    if (jobs > 0) omp_set_num_threads(jobs);
#endif

    const std::string sub = app.get_subcommands().front()->get_name();
    try {
        for (const auto& [name, fn] : commands) {
            if (name != sub) continue;
            ReportBundle bundle = fn(config);
            bundle.metadata["command"] = name;
            const auto paths = emit_report(std::move(bundle), config.output_dir);
            for (const auto& p : paths) std::cout << p.string() << "\n";
        }
    } catch (const ConfigError& e) {
        error_record("config", e.what());
        return 2;
    } catch (const std::exception& e) {
        error_record("runtime", e.what());
        return 1;
    }
    return 0;
}

}  // namespace cadv
