#include "cadv/netgrad.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace cadv {

namespace {

constexpr int kFormatVersion = 1;

void check_input(const Classifier& model, std::span<const double> x) {
    if (x.size() != model.input_dim()) {
        throw InvalidInput("classifier: input dimension " + std::to_string(x.size()) +
                           " != " + std::to_string(model.input_dim()));
    }
}

// Activations per layer: acts[0] = x, acts[l] = layer l output (logits last).
std::vector<std::vector<double>> forward_all(const Classifier& model, std::span<const double> x) {
    std::vector<std::vector<double>> acts;
    acts.reserve(model.layer_count() + 1);
    acts.emplace_back(x.begin(), x.end());
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        const std::size_t in = model.layer_sizes[l];
        const std::size_t out = model.layer_sizes[l + 1];
        const auto& w = model.weights[l];
        const auto& prev = acts.back();
        std::vector<double> z(model.biases[l]);
        for (std::size_t r = 0; r < out; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < in; ++c) s += w[r * in + c] * prev[c];
            z[r] += s;
        }
        if (l + 1 < model.layer_count()) {
            for (double& v : z) v = std::tanh(v);
        }
        acts.push_back(std::move(z));
    }
    return acts;
}

// Backpropagates dL/dlogits; optionally accumulates weight gradients.
std::vector<double> backward(const Classifier& model, const std::vector<std::vector<double>>& acts,
                             std::vector<double> delta, std::vector<std::vector<double>>* dw,
                             std::vector<std::vector<double>>* db) {
    for (std::size_t l = model.layer_count(); l-- > 0;) {
        const std::size_t in = model.layer_sizes[l];
        const std::size_t out = model.layer_sizes[l + 1];
        const auto& w = model.weights[l];
        const auto& prev = acts[l];
        if (dw != nullptr) {
            auto& gw = (*dw)[l];
            auto& gb = (*db)[l];
            for (std::size_t r = 0; r < out; ++r) {
                gb[r] += delta[r];
                for (std::size_t c = 0; c < in; ++c) gw[r * in + c] += delta[r] * prev[c];
            }
        }
        std::vector<double> g(in, 0.0);
        for (std::size_t r = 0; r < out; ++r) {
            for (std::size_t c = 0; c < in; ++c) g[c] += w[r * in + c] * delta[r];
        }
        if (l > 0) {
            for (std::size_t c = 0; c < in; ++c) g[c] *= 1.0 - prev[c] * prev[c];
        }
        delta = std::move(g);
    }
    return delta;
}

double ce_from_logits(std::span<const double> logits, std::size_t y) {
    return log_sum_exp(logits) - logits[y];
}

}  // namespace

Classifier Classifier::zeros(std::vector<std::size_t> sizes) {
    Classifier m;
    m.layer_sizes = std::move(sizes);
    if (m.layer_sizes.size() < 2) throw InvalidInput("classifier: need at least two layer sizes");
    for (std::size_t l = 0; l + 1 < m.layer_sizes.size(); ++l) {
        m.weights.emplace_back(m.layer_sizes[l] * m.layer_sizes[l + 1], 0.0);
        m.biases.emplace_back(m.layer_sizes[l + 1], 0.0);
    }
    m.validate();
    return m;
}

void Classifier::validate() const {
    if (layer_sizes.size() < 2) throw InvalidInput("classifier: need at least two layer sizes");
    if (std::any_of(layer_sizes.begin(), layer_sizes.end(), [](std::size_t s) { return s == 0; })) {
        throw InvalidInput("classifier: layer sizes must be positive");
    }
    if (weights.size() != layer_sizes.size() - 1 || biases.size() != weights.size()) {
        throw InvalidInput("classifier: layer count mismatch");
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (weights[l].size() != layer_sizes[l] * layer_sizes[l + 1] ||
            biases[l].size() != layer_sizes[l + 1]) {
            throw InvalidInput("classifier: shape mismatch in layer " + std::to_string(l));
        }
        auto finite = [](double v) { return std::isfinite(v); };
        if (!std::all_of(weights[l].begin(), weights[l].end(), finite) ||
            !std::all_of(biases[l].begin(), biases[l].end(), finite)) {
            throw InvalidInput("classifier: non-finite parameter in layer " + std::to_string(l));
        }
    }
}

void LabeledDataset::validate(std::size_t dim, std::size_t class_count) const {
    if (points.size() != labels.size()) throw InvalidInput("dataset: points/labels length mismatch");
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].size() != dim) throw InvalidInput("dataset: point dimension mismatch");
        if (labels[i] >= class_count) throw InvalidInput("dataset: label out of range");
    }
}

std::vector<double> forward_logits(const Classifier& model, std::span<const double> x) {
    check_input(model, x);
    return forward_all(model, x).back();
}

LossAndGrad loss_and_input_grad(const Classifier& model, std::span<const double> x, std::size_t y) {
    check_input(model, x);
    if (y >= model.class_count()) throw InvalidInput("classifier: class index out of range");
    auto acts = forward_all(model, x);
    const auto& logits = acts.back();
    std::vector<double> delta = softmax(logits);
    delta[y] -= 1.0;
    const double loss = ce_from_logits(logits, y);
    return {loss, backward(model, acts, std::move(delta), nullptr, nullptr)};
}

double cross_entropy(const Classifier& model, std::span<const double> x, std::size_t y) {
    if (y >= model.class_count()) throw InvalidInput("classifier: class index out of range");
    const auto logits = forward_logits(model, x);
    return ce_from_logits(logits, y);
}

std::size_t predict(const Classifier& model, std::span<const double> x) {
    const auto logits = forward_logits(model, x);
    return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

double accuracy(const Classifier& model, const LabeledDataset& data) {
    if (data.size() == 0) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i) hits += predict(model, data.points[i]) == data.labels[i];
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

double mean_loss(const Classifier& model, const LabeledDataset& data) {
    double s = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) s += cross_entropy(model, data.points[i], data.labels[i]);
    return data.size() ? s / static_cast<double>(data.size()) : 0.0;
}

Classifier init_classifier(std::vector<std::size_t> sizes, RngStream& rng) {
    Classifier m = Classifier::zeros(std::move(sizes));
    m.seed = rng.seed();
    for (std::size_t l = 0; l < m.layer_count(); ++l) {
        const double a = 1.0 / std::sqrt(static_cast<double>(m.layer_sizes[l]));
        for (double& w : m.weights[l]) w = a * (2.0 * rng.uniform() - 1.0);
    }
    return m;
}

std::vector<double> gradient_descent(Classifier& model, const LabeledDataset& data, int epochs,
                                     double learning_rate) {
    if (data.size() == 0) throw InvalidInput("gradient_descent: empty dataset");
    if (epochs < 0) throw InvalidInput("gradient_descent: negative epoch count");
    data.validate(model.input_dim(), model.class_count());

    std::vector<double> history;
    history.reserve(static_cast<std::size_t>(epochs) + 1);
    const double scale = 1.0 / static_cast<double>(data.size());
    for (int e = 0; e <= epochs; ++e) {
        std::vector<std::vector<double>> dw, db;
        for (std::size_t l = 0; l < model.layer_count(); ++l) {
            dw.emplace_back(model.weights[l].size(), 0.0);
            db.emplace_back(model.biases[l].size(), 0.0);
        }
        double loss = 0.0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            auto acts = forward_all(model, data.points[i]);
            std::vector<double> delta = softmax(acts.back());
            loss += ce_from_logits(acts.back(), data.labels[i]);
            delta[data.labels[i]] -= 1.0;
            backward(model, acts, std::move(delta), &dw, &db);
        }
        history.push_back(loss * scale);
        if (e == epochs) break;
        for (std::size_t l = 0; l < model.layer_count(); ++l) {
            for (std::size_t k = 0; k < dw[l].size(); ++k) model.weights[l][k] -= learning_rate * scale * dw[l][k];
            for (std::size_t k = 0; k < db[l].size(); ++k) model.biases[l][k] -= learning_rate * scale * db[l][k];
        }
    }
    return history;
}

Classifier train_classifier(const LabeledDataset& data, const TrainSettings& settings,
                            RngStream& rng) {
    if (data.size() == 0) throw InvalidInput("train_classifier: empty dataset");
    std::vector<std::size_t> sizes{data.points.front().size()};
    sizes.insert(sizes.end(), settings.hidden.begin(), settings.hidden.end());
    sizes.push_back(settings.class_count);
    Classifier model = init_classifier(std::move(sizes), rng);
    gradient_descent(model, data, settings.epochs, settings.learning_rate);
    return model;
}

double finite_diff_check(const Classifier& model, std::span<const double> x, std::size_t y,
                         double h) {
    if (!(h > 0.0)) throw InvalidInput("finite_diff_check: h must be positive");
    const auto analytic = loss_and_input_grad(model, x, y).input_grad;
    StateVector probe(x.begin(), x.end());
    double worst = 0.0;
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double up = cross_entropy(model, probe, y);
        probe[i] = orig - h;
        const double down = cross_entropy(model, probe, y);
        probe[i] = orig;
        const double fd = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(analytic[i]), std::abs(fd), 1e-12});
        worst = std::max(worst, std::abs(analytic[i] - fd) / denom);
    }
    return worst;
}

std::string classifier_to_json(const Classifier& model) {
    nlohmann::json j;
    j["format"] = "cadv-classifier";
    j["version"] = kFormatVersion;
    j["layer_sizes"] = model.layer_sizes;
    j["weights"] = model.weights;
    j["biases"] = model.biases;
    j["generator"] = model.generator_id;
    j["seed"] = model.seed;
    return j.dump(2) + "\n";
}

Classifier classifier_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("classifier json: ") + e.what());
    }
    if (j.value("format", "") != "cadv-classifier") throw InvalidInput("classifier json: wrong format tag");
    if (j.value("version", 0) != kFormatVersion) throw InvalidInput("classifier json: unsupported version");
    Classifier m;
    try {
        m.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
        m.weights = j.at("weights").get<std::vector<std::vector<double>>>();
        m.biases = j.at("biases").get<std::vector<std::vector<double>>>();
        m.generator_id = j.at("generator").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("classifier json: ") + e.what());
    }
    m.validate();
    return m;
}

}  // namespace cadv
