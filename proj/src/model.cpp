#include "ulre/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "ulre/errors.hpp"
#include "ulre/rng.hpp"

namespace ulre {

std::string_view to_string(HeadKind head) noexcept {
    return head == HeadKind::evidential ? "evidential" : "sigmoid";
}

HeadKind head_from_string(std::string_view name) {
    if (name == "evidential") return HeadKind::evidential;
    if (name == "sigmoid") return HeadKind::sigmoid;
    throw ConfigError("unknown head kind '" + std::string(name) + "' (expected evidential or sigmoid)");
}

std::size_t head_width(HeadKind head) noexcept { return head == HeadKind::evidential ? 2 : 1; }

std::size_t EstimatorModel::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const DenseLayer& l : layers) n += l.weight.size() + l.bias.size();
    return n;
}

void EstimatorModel::validate() const {
    if (layer_dims.size() < 2) throw ShapeError("model needs at least an input and an output width");
    for (std::size_t d : layer_dims) {
        if (d == 0) throw ShapeError("model layer widths must be positive");
    }
    if (layer_dims.back() != head_width(head)) {
        std::ostringstream msg;
        msg << "final width " << layer_dims.back() << " does not match " << to_string(head)
            << " head (expected " << head_width(head) << ")";
        throw ShapeError(msg.str());
    }
    if (layers.size() != layer_dims.size() - 1) throw ShapeError("layer count does not match layer_dims");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const DenseLayer& layer = layers[l];
        const std::vector<std::size_t> expect{layer_dims[l + 1], layer_dims[l]};
        if (layer.weight.shape() != expect || layer.bias.size() != layer_dims[l + 1]) {
            throw ShapeError("layer " + std::to_string(l) + " parameters do not match layer_dims");
        }
        if (!layer.weight.all_finite() ||
            !std::all_of(layer.bias.begin(), layer.bias.end(), [](double b) { return std::isfinite(b); })) {
            throw NumericalError("layer " + std::to_string(l) + " has non-finite parameters");
        }
    }
    if (!std::isfinite(slope)) throw NumericalError("leaky ReLU slope must be finite");
}

EstimatorModel init_model(std::vector<std::size_t> layer_dims, std::uint64_t seed, HeadKind head,
                          double slope) {
    EstimatorModel model;
    model.layer_dims = std::move(layer_dims);
    model.slope = slope;
    model.head = head;
    if (model.layer_dims.size() < 2) throw ShapeError("model needs at least an input and an output width");

    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < model.layer_dims.size(); ++l) {
        const std::size_t fan_in = model.layer_dims[l];
        const std::size_t fan_out = model.layer_dims[l + 1];
        if (fan_in == 0 || fan_out == 0) throw ShapeError("model layer widths must be positive");
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        DenseLayer layer{Tensor::matrix(fan_out, fan_in), std::vector<double>(fan_out, 0.0)};
        for (double& w : layer.weight.values()) w = rng.uniform(-bound, bound);
        model.layers.push_back(std::move(layer));
    }
    model.validate();
    return model;
}

namespace {

// Activations of one batch: acts[0] is the input, acts[l + 1] the output of
// layer l (post-activation for hidden layers, logits for the last).
struct ForwardCache {
    std::vector<Tensor> pre;
    std::vector<Tensor> acts;
};

void require_input(const EstimatorModel& model, const Tensor& features) {
    if (features.rank() != 2 || features.dim(1) != model.input_dim()) {
        std::ostringstream msg;
        msg << "feature tensor shape [";
        for (std::size_t i = 0; i < features.rank(); ++i) msg << (i ? "," : "") << features.shape()[i];
        msg << "] does not match model input width " << model.input_dim();
        throw ShapeError(msg.str());
    }
}

void forward_batch(const EstimatorModel& model, Tensor input, ForwardCache& cache) {
    const std::size_t n = input.dim(0);
    cache.pre.clear();
    cache.acts.clear();
    cache.acts.push_back(std::move(input));
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const DenseLayer& layer = model.layers[l];
        const std::size_t out_w = layer.weight.dim(0);
        const std::size_t in_w = layer.weight.dim(1);
        const Tensor& in = cache.acts.back();
        Tensor pre = Tensor::matrix(n, out_w);
        const double* w = layer.weight.data().data();
        for (std::size_t r = 0; r < n; ++r) {
            const double* x = in.data().data() + r * in_w;
            double* z = pre.data().data() + r * out_w;
            for (std::size_t o = 0; o < out_w; ++o) {
                const double* wr = w + o * in_w;
                double acc = layer.bias[o];
                for (std::size_t i = 0; i < in_w; ++i) acc += wr[i] * x[i];
                z[o] = acc;
            }
        }
        const bool last = l + 1 == model.layers.size();
        Tensor act = pre;
        if (!last) {
            for (double& v : act.values()) {
                if (v < 0.0) v *= model.slope;
            }
        }
        cache.pre.push_back(std::move(pre));
        cache.acts.push_back(std::move(act));
    }
}

Tensor gather_rows(const Tensor& features, std::span<const std::size_t> rows) {
    const std::size_t d = features.dim(1);
    Tensor out = Tensor::matrix(rows.size(), d);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = features.row(rows[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

}  // namespace

Tensor forward(const EstimatorModel& model, const Tensor& features) {
    require_input(model, features);
    ForwardCache cache;
    forward_batch(model, features, cache);
    return std::move(cache.acts.back());
}

Gradients Gradients::zeros_like(const EstimatorModel& model) {
    Gradients g;
    for (const DenseLayer& l : model.layers) {
        g.layers.push_back({Tensor(l.weight.shape()), std::vector<double>(l.bias.size(), 0.0)});
    }
    return g;
}

BatchLoss loss_and_gradients(const EstimatorModel& model, const Tensor& features,
                             std::span<const std::uint8_t> labels, std::span<const std::size_t> rows,
                             int epoch, Gradients* grads, double kl_weight_override) {
    require_input(model, features);
    if (labels.size() != features.dim(0)) {
        throw ShapeError("label count " + std::to_string(labels.size()) + " does not match " +
                         std::to_string(features.dim(0)) + " feature rows");
    }
    std::vector<std::size_t> all;
    if (rows.empty()) {
        all.resize(features.dim(0));
        std::iota(all.begin(), all.end(), std::size_t{0});
        rows = all;
    }
    const std::size_t n = rows.size();
    if (n == 0) throw DomainError("loss_and_gradients: no rows");

    ForwardCache cache;
    forward_batch(model, gather_rows(features, rows), cache);
    const Tensor& logits = cache.acts.back();
    const std::size_t k = logits.dim(1);
    const double inv_n = 1.0 / static_cast<double>(n);
    const double lambda = kl_weight_override >= 0.0 ? kl_weight_override : annealing_coefficient(epoch);

    BatchLoss loss;
    Tensor delta = Tensor::matrix(n, k);
    for (std::size_t i = 0; i < n; ++i) {
        const BinaryLabel y = label_from_byte(labels[rows[i]]);
        if (model.head == HeadKind::evidential) {
            const Logits o{logits(i, 0), logits(i, 1)};
            const DirichletParams a = dirichlet_from_logits(o);
            const double log_loss = edl_log_loss(a, y);
            const double kl = edl_kl_reg(a, y);
            loss.log_loss += log_loss;
            loss.kl_reg += kl;
            if (grads) {
                const Logits g = edl_loss_grad_weighted(o, y, lambda);
                delta(i, 0) = g[0] * inv_n;
                delta(i, 1) = g[1] * inv_n;
            }
        } else {
            const double z = logits(i, 0);
            loss.log_loss += bce_loss_from_logit(z, y);
            if (grads) delta(i, 0) = bce_logit_grad(z, y) * inv_n;
        }
    }
    loss.log_loss *= inv_n;
    loss.kl_reg *= inv_n;
    loss.total = loss.log_loss + lambda * loss.kl_reg;

    if (!grads) return loss;

    for (std::size_t l = model.layers.size(); l-- > 0;) {
        const DenseLayer& layer = model.layers[l];
        DenseLayer& g = grads->layers[l];
        const std::size_t out_w = layer.weight.dim(0);
        const std::size_t in_w = layer.weight.dim(1);
        const Tensor& in = cache.acts[l];
        for (std::size_t r = 0; r < n; ++r) {
            const double* d = delta.data().data() + r * out_w;
            const double* x = in.data().data() + r * in_w;
            for (std::size_t o = 0; o < out_w; ++o) {
                const double dv = d[o];
                if (dv == 0.0) continue;
                double* gw = g.weight.data().data() + o * in_w;
                for (std::size_t i = 0; i < in_w; ++i) gw[i] += dv * x[i];
                g.bias[o] += dv;
            }
        }
        if (l == 0) break;

        Tensor prev = Tensor::matrix(n, in_w);
        const Tensor& pre = cache.pre[l - 1];
        for (std::size_t r = 0; r < n; ++r) {
            const double* d = delta.data().data() + r * out_w;
            double* p = prev.data().data() + r * in_w;
            for (std::size_t o = 0; o < out_w; ++o) {
                const double dv = d[o];
                if (dv == 0.0) continue;
                const double* wr = layer.weight.data().data() + o * in_w;
                for (std::size_t i = 0; i < in_w; ++i) p[i] += dv * wr[i];
            }
            const double* z = pre.data().data() + r * in_w;
            for (std::size_t i = 0; i < in_w; ++i) {
                if (z[i] < 0.0) p[i] *= model.slope;
            }
        }
        delta = std::move(prev);
    }
    return loss;
}

AdamOptimizer::AdamOptimizer(const EstimatorModel& model, AdamConfig cfg)
    : cfg_(cfg), m_(Gradients::zeros_like(model)), v_(Gradients::zeros_like(model)) {}

void AdamOptimizer::step(EstimatorModel& model, const Gradients& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    auto update = [&](std::span<double> param, std::span<const double> g, std::span<double> m,
                      std::span<double> v) {
        for (std::size_t i = 0; i < param.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            param[i] -= cfg_.learning_rate * m_hat / (std::sqrt(v_hat) + cfg_.eps);
        }
    };
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        update(model.layers[l].weight.data(), grads.layers[l].weight.data(), m_.layers[l].weight.data(),
               v_.layers[l].weight.data());
        update(model.layers[l].bias, grads.layers[l].bias, m_.layers[l].bias, v_.layers[l].bias);
    }
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        throw ConfigError("Adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
    if (early_stopping.enabled) {
        if (!(early_stopping.val_fraction > 0.0 && early_stopping.val_fraction < 1.0)) {
            throw ConfigError("val_fraction must lie strictly between 0 and 1");
        }
        if (early_stopping.patience < 1) throw ConfigError("patience must be at least 1");
    }
}

TrainResult train(EstimatorModel model, const Tensor& features, std::span<const std::uint8_t> labels,
                  const TrainConfig& cfg) {
    cfg.validate();
    model.validate();
    require_input(model, features);
    if (cfg.head != model.head) {
        throw ConfigError("training config head " + std::string(to_string(cfg.head)) +
                          " does not match model head " + std::string(to_string(model.head)));
    }
    const std::size_t n = features.dim(0);
    if (labels.size() != n) {
        throw ShapeError("label count " + std::to_string(labels.size()) + " does not match " +
                         std::to_string(n) + " feature rows");
    }
    require_binary_labels(std::vector<std::uint8_t>(labels.begin(), labels.end()));
    if (n < cfg.batch_size) {
        throw DomainError("training set has " + std::to_string(n) + " rows, fewer than batch_size " +
                          std::to_string(cfg.batch_size));
    }

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> val_rows;
    if (cfg.early_stopping.enabled) {
        Rng split_rng = rng.split(0);
        split_rng.shuffle(std::span<std::size_t>(order));
        auto n_val = static_cast<std::size_t>(std::llround(cfg.early_stopping.val_fraction * static_cast<double>(n)));
        n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
        val_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
        train_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
        std::sort(train_rows.begin(), train_rows.end());
        std::sort(val_rows.begin(), val_rows.end());
    } else {
        train_rows = order;
    }

    Rng shuffle_rng = rng.split(1);
    AdamOptimizer adam(model, {cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps});
    TrainReport report;
    EstimatorModel best = model;
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(std::span<std::size_t>(train_rows));
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < train_rows.size(); start += cfg.batch_size, ++batch_index) {
            const std::size_t stop = std::min(start + cfg.batch_size, train_rows.size());
            const std::span<const std::size_t> batch(train_rows.data() + start, stop - start);
            Gradients grads = Gradients::zeros_like(model);
            const BatchLoss loss = loss_and_gradients(model, features, labels, batch, epoch, &grads);
            if (!std::isfinite(loss.total)) {
                std::ostringstream msg;
                msg << "non-finite loss at epoch " << epoch << ", batch " << batch_index << ": ";
                if (!std::isfinite(loss.log_loss)) {
                    msg << (model.head == HeadKind::evidential ? "log loss" : "BCE") << " = " << loss.log_loss;
                } else {
                    msg << "KL regularizer = " << loss.kl_reg;
                }
                throw NumericalError(msg.str());
            }
            adam.step(model, grads);
            epoch_loss += loss.total * static_cast<double>(batch.size());
            seen += batch.size();
        }
        report.train_loss.push_back(epoch_loss / static_cast<double>(seen));
        report.lambda.push_back(model.head == HeadKind::evidential ? annealing_coefficient(epoch) : 0.0);
        report.epochs_run = epoch + 1;
        report.stopped_epoch = epoch;

        if (!cfg.early_stopping.enabled) {
            report.best_epoch = epoch;
            continue;
        }
        const BatchLoss val = loss_and_gradients(model, features, labels, val_rows, epoch, nullptr, 1.0);
        if (!std::isfinite(val.total)) {
            throw NumericalError("non-finite validation loss at epoch " + std::to_string(epoch));
        }
        report.val_loss.push_back(val.total);
        if (val.total < best_val) {
            best_val = val.total;
            best = model;
            report.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.early_stopping.patience) {
            report.stopped_early = true;
            break;
        }
    }
    if (cfg.early_stopping.enabled) model = std::move(best);
    return {std::move(model), std::move(report)};
}

Tensor DirichletMap::vacuity() const {
    Tensor out = Tensor::matrix(height(), width());
    for (std::size_t r = 0; r < height(); ++r)
        for (std::size_t c = 0; c < width(); ++c) out(r, c) = ulre::vacuity(at(r, c));
    return out;
}

Tensor DirichletMap::ood_probability() const {
    Tensor out = Tensor::matrix(height(), width());
    for (std::size_t r = 0; r < height(); ++r)
        for (std::size_t c = 0; c < width(); ++c) out(r, c) = expected_prob(at(r, c))[1];
    return out;
}

Tensor DirichletMap::lr() const {
    Tensor out = Tensor::matrix(height(), width());
    for (std::size_t r = 0; r < height(); ++r)
        for (std::size_t c = 0; c < width(); ++c) out(r, c) = lr_score(at(r, c));
    return out;
}

Tensor ProbabilityMap::lr() const {
    Tensor out(p1.shape());
    for (std::size_t i = 0; i < p1.size(); ++i) out[i] = lr_from_sigmoid(p1[i]);
    return out;
}

PredictedMap predict_map(const EstimatorModel& model, const FeatureMap& fmap) {
    if (fmap.dim() != model.input_dim()) {
        throw ShapeError("feature map depth " + std::to_string(fmap.dim()) + " does not match model input width " +
                         std::to_string(model.input_dim()));
    }
    const Tensor logits = forward(model, fmap.flattened());
    const std::size_t h = fmap.height();
    const std::size_t w = fmap.width();
    if (model.head == HeadKind::evidential) {
        DirichletMap out{Tensor({h, w, 2})};
        for (std::size_t i = 0; i < h * w; ++i) {
            const DirichletParams a = dirichlet_from_logits({logits(i, 0), logits(i, 1)});
            out.alpha[2 * i] = a.alpha_id();
            out.alpha[2 * i + 1] = a.alpha_ood();
        }
        return out;
    }
    ProbabilityMap out{Tensor::matrix(h, w)};
    for (std::size_t i = 0; i < h * w; ++i) out.p1[i] = sigmoid(logits(i, 0));
    return out;
}

Tensor lr_map(const PredictedMap& prediction) {
    return std::visit([](const auto& m) { return m.lr(); }, prediction);
}

std::vector<double> ood_probabilities(const EstimatorModel& model, const Tensor& features) {
    const Tensor logits = forward(model, features);
    std::vector<double> out(logits.dim(0));
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = model.head == HeadKind::evidential
                     ? expected_prob(dirichlet_from_logits({logits(i, 0), logits(i, 1)}))[1]
                     : sigmoid(logits(i, 0));
    }
    return out;
}

}  // namespace ulre
