#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cadv/numerics.hpp"

namespace cadv {

/// Fully connected classifier: tanh hidden layers, linear output logits.
///
/// Layer l maps sizes[l] -> sizes[l+1]; its weight matrix is stored
/// row-major with shape (sizes[l+1], sizes[l]).
struct Classifier {
    std::vector<std::size_t> layer_sizes;
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;
    // Provenance of the initialization; carried through save/load.
    std::string generator_id = RngStream::kGeneratorId;
    std::uint64_t seed = 0;

    /// Zero network with the given shape.
    static Classifier zeros(std::vector<std::size_t> sizes);

    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t class_count() const { return layer_sizes.back(); }
    std::size_t layer_count() const { return weights.size(); }

    /// Throws InvalidInput on incompatible shapes or non-finite parameters.
    void validate() const;

    bool operator==(const Classifier&) const = default;
};

struct LabeledDataset {
    std::vector<StateVector> points;
    std::vector<std::size_t> labels;

    std::size_t size() const { return points.size(); }
    void validate(std::size_t dim, std::size_t class_count) const;
};

struct LossAndGrad {
    double loss;
    StateVector input_grad;
};

std::vector<double> forward_logits(const Classifier& model, std::span<const double> x);

/// Cross-entropy f(x, y) = -log softmax_y(logits) and its exact input gradient.
LossAndGrad loss_and_input_grad(const Classifier& model, std::span<const double> x, std::size_t y);

/// -log p(y|x) without the gradient.
double cross_entropy(const Classifier& model, std::span<const double> x, std::size_t y);

std::size_t predict(const Classifier& model, std::span<const double> x);
double accuracy(const Classifier& model, const LabeledDataset& data);
double mean_loss(const Classifier& model, const LabeledDataset& data);

/// Zero biases, weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Classifier init_classifier(std::vector<std::size_t> sizes, RngStream& rng);

/// Full-batch gradient descent on mean cross-entropy, in place.
/// Returns the loss before each epoch followed by the final loss.
std::vector<double> gradient_descent(Classifier& model, const LabeledDataset& data, int epochs,
                                     double learning_rate);

struct TrainSettings {
    std::vector<std::size_t> hidden;
    std::size_t class_count = 2;
    int epochs = 500;
    double learning_rate = 0.5;
};

Classifier train_classifier(const LabeledDataset& data, const TrainSettings& settings,
                            RngStream& rng);

/// Max over coordinates of |analytic - central difference| / max(|analytic|, |fd|, 1e-12).
double finite_diff_check(const Classifier& model, std::span<const double> x, std::size_t y,
                         double h);

std::string classifier_to_json(const Classifier& model);
Classifier classifier_from_json(const std::string& text);

}  // namespace cadv
