#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ulre/evidential.hpp"
#include "ulre/maps.hpp"
#include "ulre/tensor.hpp"

namespace ulre {

enum class HeadKind { evidential, sigmoid };

std::string_view to_string(HeadKind head) noexcept;
// Accepts "evidential" or "sigmoid"; throws ConfigError otherwise.
HeadKind head_from_string(std::string_view name);
std::size_t head_width(HeadKind head) noexcept;

inline constexpr double kDefaultLeakySlope = 0.01;

// Affine layer y = W x + b with W stored out x in.
struct DenseLayer {
    Tensor weight;
    std::vector<double> bias;

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Per-feature-vector MLP: affine layers with leaky ReLU between them and a
// linear output (two evidential logits or one sigmoid logit). Acting on
// each pixel independently, it is the 1x1-convolution stack.
struct EstimatorModel {
    std::vector<std::size_t> layer_dims;
    double slope = kDefaultLeakySlope;
    HeadKind head = HeadKind::evidential;
    std::vector<DenseLayer> layers;

    std::size_t input_dim() const noexcept { return layer_dims.front(); }
    std::size_t output_dim() const noexcept { return layer_dims.back(); }
    std::size_t parameter_count() const noexcept;
    // Throws ShapeError / NumericalError if the invariants do not hold.
    void validate() const;

    friend bool operator==(const EstimatorModel&, const EstimatorModel&) = default;
};

// Weights ~ U(-sqrt(6 / fan_in), +sqrt(6 / fan_in)) drawn layer by layer,
// row-major, from Rng(seed); biases zero.
EstimatorModel init_model(std::vector<std::size_t> layer_dims, std::uint64_t seed, HeadKind head,
                          double slope = kDefaultLeakySlope);

// N x D -> N x head_width logits.
Tensor forward(const EstimatorModel& model, const Tensor& features);

// Parameter-shaped gradient buffer.
struct Gradients {
    std::vector<DenseLayer> layers;

    static Gradients zeros_like(const EstimatorModel& model);
};

struct BatchLoss {
    double total = 0.0;
    double log_loss = 0.0;  // evidential log loss, or BCE for the sigmoid head
    double kl_reg = 0.0;    // zero for the sigmoid head
};

// Mean per-row loss over `rows` (all rows when empty) for the given epoch's
// annealing coefficient, with gradients accumulated into `grads` when not
// null. `kl_weight_override` >= 0 replaces the annealing coefficient.
BatchLoss loss_and_gradients(const EstimatorModel& model, const Tensor& features,
                             std::span<const std::uint8_t> labels, std::span<const std::size_t> rows,
                             int epoch, Gradients* grads, double kl_weight_override = -1.0);

struct AdamConfig {
    double learning_rate = 2e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class AdamOptimizer {
public:
    AdamOptimizer(const EstimatorModel& model, AdamConfig cfg);
    void step(EstimatorModel& model, const Gradients& grads);
    long steps() const noexcept { return t_; }

private:
    AdamConfig cfg_;
    Gradients m_;
    Gradients v_;
    long t_ = 0;
};

struct EarlyStopping {
    bool enabled = false;
    int patience = 5;
    double val_fraction = 0.1;
};

struct TrainConfig {
    int epochs = 10;
    double learning_rate = 2e-5;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t batch_size = 1024;
    std::uint64_t seed = 0;
    EarlyStopping early_stopping;
    HeadKind head = HeadKind::evidential;

    void validate() const;
};

struct TrainReport {
    std::vector<double> train_loss;
    std::vector<double> val_loss;  // empty without early stopping
    std::vector<double> lambda;
    int epochs_run = 0;
    int best_epoch = -1;     // epoch whose parameters were returned
    int stopped_epoch = -1;  // last epoch executed (0-based)
    bool stopped_early = false;
};

struct TrainResult {
    EstimatorModel model;
    TrainReport report;
};

// Mini-batch Adam on the mean per-row loss. With early stopping, a seeded
// val_fraction of rows is held out first; validation uses the fully annealed
// objective (lambda = 1) so losses are comparable across epochs, and the
// best-validation parameters are returned. Throws NumericalError on a
// non-finite loss.
TrainResult train(EstimatorModel model, const Tensor& features, std::span<const std::uint8_t> labels,
                  const TrainConfig& cfg);

// Per-pixel Dirichlet parameters, H x W x 2 (alpha_id, alpha_ood).
struct DirichletMap {
    Tensor alpha;

    std::size_t height() const noexcept { return alpha.shape()[0]; }
    std::size_t width() const noexcept { return alpha.shape()[1]; }
    DirichletParams at(std::size_t r, std::size_t c) const {
        return DirichletParams(alpha(r, c, 0), alpha(r, c, 1));
    }
    Tensor vacuity() const;
    Tensor ood_probability() const;
    Tensor lr() const;
};

// Per-pixel p(y = 1 | x) from the sigmoid head, H x W.
struct ProbabilityMap {
    Tensor p1;

    Tensor lr() const;
};

using PredictedMap = std::variant<DirichletMap, ProbabilityMap>;

PredictedMap predict_map(const EstimatorModel& model, const FeatureMap& fmap);

// Likelihood-ratio score map of either head: alpha_1 / alpha_0 or p / (1 - p).
Tensor lr_map(const PredictedMap& prediction);

// Row-wise p(y = 1 | x) for an N x D tensor, either head.
std::vector<double> ood_probabilities(const EstimatorModel& model, const Tensor& features);

}  // namespace ulre
