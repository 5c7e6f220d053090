#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <span>
#include <vector>

#include "datasets.hpp"
#include "errors.hpp"
#include "problems.hpp"

namespace farsign {

// Fully connected network with tanh hidden layers and a softmax
// cross-entropy head, plus mu/2 |theta|^2. Parameters are laid out layer by
// layer as W (out x in, row-major) followed by b (out).
class MlpObjective final : public Objective {
public:
    // `eval_samples` caps how many training rows the exact eval/grad use
    // (0 = all of them); minibatch calls always index the full set.
    MlpObjective(std::vector<std::size_t> layers, std::shared_ptr<const Dataset> train, double mu,
                 std::shared_ptr<const Dataset> test = nullptr, std::size_t eval_samples = 0)
        : layers_(std::move(layers)), train_(std::move(train)), test_(std::move(test)), mu_(mu) {
        if (layers_.size() < 2) throw InvalidArgument("mlp: need at least input and output layer sizes");
        for (auto s : layers_)
            if (s == 0) throw InvalidArgument("mlp: layer sizes must be positive");
        if (!train_ || train_->n_samples == 0) throw InvalidArgument("mlp: empty training set");
        if (train_->n_features != layers_.front())
            throw DimensionError("mlp: input layer " + std::to_string(layers_.front()) + " != dataset features " +
                                 std::to_string(train_->n_features));
        if (train_->n_classes != layers_.back())
            throw DimensionError("mlp: output layer " + std::to_string(layers_.back()) + " != dataset classes " +
                                 std::to_string(train_->n_classes));
        if (test_ && (test_->n_features != layers_.front() || test_->n_classes != layers_.back()))
            throw DimensionError("mlp: test set shape mismatch");
        if (!(mu_ >= 0.0)) throw InvalidArgument("mlp: mu must be >= 0");
        offsets_.push_back(0);
        for (std::size_t l = 0; l + 1 < layers_.size(); ++l)
            offsets_.push_back(offsets_.back() + layers_[l] * layers_[l + 1] + layers_[l + 1]);
        const std::size_t n_eval = eval_samples == 0 ? train_->n_samples : std::min(eval_samples, train_->n_samples);
        eval_idx_.resize(n_eval);
        std::iota(eval_idx_.begin(), eval_idx_.end(), std::size_t{0});
    }

    static std::size_t parameter_count(std::span<const std::size_t> layers) {
        std::size_t n = 0;
        for (std::size_t l = 0; l + 1 < layers.size(); ++l) n += layers[l] * layers[l + 1] + layers[l + 1];
        return n;
    }

    const std::vector<std::size_t>& layers() const { return layers_; }
    std::size_t dim() const override { return offsets_.back(); }
    ObjectiveKind kind() const override { return ObjectiveKind::mlp_ce_l2; }
    std::size_t sample_count() const override { return train_->n_samples; }

    double eval(std::span<const double> x) const override { return loss(x, eval_idx_); }
    Vec grad(std::span<const double> x) const override { return gradient(x, eval_idx_); }
    double eval_batch(std::span<const double> x, IndexSpan batch) const override { return loss(x, batch); }
    Vec grad_batch(std::span<const double> x, IndexSpan batch) const override { return gradient(x, batch); }

    void coordinate_pairs(std::span<const double> x, IndexSpan coords, double lambda, IndexSpan batch,
                          std::span<double> plus, std::span<double> minus) const override {
        if (layers_.size() != 3) {
            Objective::coordinate_pairs(x, coords, lambda, batch, plus, minus);
            return;
        }
        check_dim(x);
        const IndexSpan idx = batch.empty() ? IndexSpan(eval_idx_) : batch;
        const std::size_t n_in = layers_[0], n_hid = layers_[1], n_out = layers_[2];
        const std::size_t bs = idx.size();
        const double* w2 = x.data() + n_hid * n_in + n_hid;

        // Cache the forward pass on the batch.
        std::vector<double> z1(bs * n_hid), h(bs * n_hid), z2(bs * n_out);
        for (std::size_t r = 0; r < bs; ++r) forward_one(x, train_->row(idx[r]), &z1[r * n_hid], &h[r * n_hid], &z2[r * n_out]);
        const double sq = dot(x, x);
        const double inv = 1.0 / static_cast<double>(bs);

        std::vector<double> logits(n_out);

        const std::size_t hid_w_end = n_hid * n_in;
        const std::size_t hid_b_end = hid_w_end + n_hid;
        const std::size_t out_w_end = hid_b_end + n_out * n_hid;
        for (std::size_t k = 0; k < coords.size(); ++k) {
            const std::size_t i = coords[k];
            double loss_p = 0.0, loss_m = 0.0;
            for (int sgn = -1; sgn <= 1; sgn += 2) {
                const double step = sgn * lambda;
                double total = 0.0;
                for (std::size_t r = 0; r < bs; ++r) {
                    std::copy_n(&z2[r * n_out], n_out, logits.begin());
                    if (i < hid_b_end) {
                        // first-layer weight or bias: one hidden unit changes
                        const std::size_t j = i < hid_w_end ? i / n_in : i - hid_w_end;
                        const double input = i < hid_w_end ? double(train_->row(idx[r])[i % n_in]) : 1.0;
                        const double dh = std::tanh(z1[r * n_hid + j] + step * input) - h[r * n_hid + j];
                        for (std::size_t c = 0; c < n_out; ++c) logits[c] += w2[c * n_hid + j] * dh;
                    } else if (i < out_w_end) {
                        const std::size_t c = (i - hid_b_end) / n_hid;
                        const std::size_t j = (i - hid_b_end) % n_hid;
                        logits[c] += step * h[r * n_hid + j];
                    } else {
                        logits[i - out_w_end] += step;
                    }
                    total += cross_entropy(logits, train_->labels[idx[r]]);
                }
                const double reg = 0.5 * mu_ * (sq + 2.0 * step * x[i] + lambda * lambda);
                (sgn > 0 ? loss_p : loss_m) = total * inv + reg;
            }
            plus[k] = loss_p;
            minus[k] = loss_m;
        }
    }

    std::optional<double> test_metric(std::span<const double> x) const override {
        if (!test_) return std::nullopt;
        check_dim(x);
        std::size_t correct = 0;
        std::vector<std::vector<double>> acts;
        for (std::size_t i = 0; i < test_->n_samples; ++i) {
            forward(x, test_->row(i), acts);
            const auto& out = acts.back();
            const auto pred = static_cast<std::size_t>(std::max_element(out.begin(), out.end()) - out.begin());
            correct += pred == test_->labels[i];
        }
        return static_cast<double>(correct) / static_cast<double>(test_->n_samples);
    }

private:
    // acts[0] = input, acts[l] = post-activation of layer l (last = logits).
    void forward(std::span<const double> x, std::span<const float> input, std::vector<std::vector<double>>& acts) const {
        acts.resize(layers_.size());
        acts[0].assign(input.begin(), input.end());
        for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
            const std::size_t n_in = layers_[l], n_out = layers_[l + 1];
            const double* w = x.data() + offsets_[l];
            const double* b = w + n_in * n_out;
            auto& out = acts[l + 1];
            out.assign(n_out, 0.0);
            const auto& in = acts[l];
            for (std::size_t o = 0; o < n_out; ++o) {
                double s = b[o];
                const double* wr = w + o * n_in;
                for (std::size_t j = 0; j < n_in; ++j) s += wr[j] * in[j];
                out[o] = (l + 2 < layers_.size()) ? std::tanh(s) : s;
            }
        }
    }

    // One-hidden-layer forward that keeps pre-activations.
    void forward_one(std::span<const double> x, std::span<const float> input, double* z1, double* h, double* z2) const {
        const std::size_t n_in = layers_[0], n_hid = layers_[1], n_out = layers_[2];
        const double* w1 = x.data();
        const double* b1 = w1 + n_hid * n_in;
        const double* w2 = b1 + n_hid;
        const double* b2 = w2 + n_out * n_hid;
        for (std::size_t j = 0; j < n_hid; ++j) {
            double s = b1[j];
            const double* wr = w1 + j * n_in;
            for (std::size_t k = 0; k < n_in; ++k) s += wr[k] * double(input[k]);
            z1[j] = s;
            h[j] = std::tanh(s);
        }
        for (std::size_t c = 0; c < n_out; ++c) {
            double s = b2[c];
            const double* wr = w2 + c * n_hid;
            for (std::size_t j = 0; j < n_hid; ++j) s += wr[j] * h[j];
            z2[c] = s;
        }
    }

    static double cross_entropy(const std::vector<double>& logits, std::size_t y) {
        const double mx = *std::max_element(logits.begin(), logits.end());
        double s = 0.0;
        for (double v : logits) s += std::exp(v - mx);
        return mx + std::log(s) - logits[y];
    }

    double loss(std::span<const double> x, IndexSpan idx) const {
        check_dim(x);
        if (idx.empty()) throw InvalidArgument("mlp: empty batch");
        std::vector<std::vector<double>> acts;
        double s = 0.0;
        for (std::size_t i : idx) {
            forward(x, train_->row(i), acts);
            s += cross_entropy(acts.back(), train_->labels[i]);
        }
        return s / static_cast<double>(idx.size()) + 0.5 * mu_ * dot(x, x);
    }

    Vec gradient(std::span<const double> x, IndexSpan idx) const {
        check_dim(x);
        if (idx.empty()) throw InvalidArgument("mlp: empty batch");
        Vec g(dim(), 0.0);
        std::vector<std::vector<double>> acts;
        std::vector<double> delta, prev_delta;
        const std::size_t n_layers = layers_.size();
        for (std::size_t i : idx) {
            forward(x, train_->row(i), acts);
            // softmax - onehot
            const auto& logits = acts.back();
            const double mx = *std::max_element(logits.begin(), logits.end());
            delta.resize(logits.size());
            double s = 0.0;
            for (std::size_t c = 0; c < logits.size(); ++c) s += (delta[c] = std::exp(logits[c] - mx));
            for (auto& v : delta) v /= s;
            delta[train_->labels[i]] -= 1.0;
            for (std::size_t l = n_layers - 1; l-- > 0;) {
                const std::size_t n_in = layers_[l], n_out = layers_[l + 1];
                double* gw = g.data() + offsets_[l];
                double* gb = gw + n_in * n_out;
                const auto& in = acts[l];
                for (std::size_t o = 0; o < n_out; ++o) {
                    gb[o] += delta[o];
                    double* gr = gw + o * n_in;
                    for (std::size_t j = 0; j < n_in; ++j) gr[j] += delta[o] * in[j];
                }
                if (l == 0) break;
                const double* w = x.data() + offsets_[l];
                prev_delta.assign(n_in, 0.0);
                for (std::size_t o = 0; o < n_out; ++o) {
                    const double* wr = w + o * n_in;
                    for (std::size_t j = 0; j < n_in; ++j) prev_delta[j] += wr[j] * delta[o];
                }
                for (std::size_t j = 0; j < n_in; ++j) prev_delta[j] *= 1.0 - in[j] * in[j]; // tanh'
                delta.swap(prev_delta);
            }
        }
        const double inv = 1.0 / static_cast<double>(idx.size());
        for (std::size_t k = 0; k < g.size(); ++k) g[k] = g[k] * inv + mu_ * x[k];
        return g;
    }

    std::vector<std::size_t> layers_;
    std::shared_ptr<const Dataset> train_;
    std::shared_ptr<const Dataset> test_;
    double mu_;
    std::vector<std::size_t> offsets_;
    std::vector<std::size_t> eval_idx_;
};

} // namespace farsign
