#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "datasets.hpp"
#include "errors.hpp"
#include "rng.hpp"
#include "vector_ops.hpp"

namespace farsign {

enum class ObjectiveKind { quadratic, separable_nonconvex, logistic_l2, mlp_ce_l2, custom };

inline std::string_view to_string(ObjectiveKind k) {
    switch (k) {
    case ObjectiveKind::quadratic: return "quadratic";
    case ObjectiveKind::separable_nonconvex: return "separable_nonconvex";
    case ObjectiveKind::logistic_l2: return "logistic_l2";
    case ObjectiveKind::mlp_ce_l2: return "mlp_ce_l2";
    case ObjectiveKind::custom: return "custom";
    }
    return "?";
}

using IndexSpan = std::span<const std::size_t>;

// A smooth objective. eval/grad are exact and full-data; the batch variants
// are what stochastic oracles see for data-backed objectives.
class Objective {
public:
    virtual ~Objective() = default;

    virtual std::size_t dim() const = 0;
    virtual ObjectiveKind kind() const = 0;
    virtual std::optional<double> smoothness() const { return std::nullopt; }

    virtual double eval(std::span<const double> x) const = 0;
    virtual Vec grad(std::span<const double> x) const = 0;

    // Number of training samples behind the objective; 0 when not data-backed.
    virtual std::size_t sample_count() const { return 0; }
    virtual double eval_batch(std::span<const double> x, IndexSpan /*batch*/) const { return eval(x); }
    virtual Vec grad_batch(std::span<const double> x, IndexSpan /*batch*/) const { return grad(x); }

    // Loss at x + lambda e_i and x - lambda e_i for every i in `coords`,
    // evaluated on `batch` (full objective when empty).
    virtual void coordinate_pairs(std::span<const double> x, IndexSpan coords, double lambda, IndexSpan batch,
                                  std::span<double> plus, std::span<double> minus) const {
        Vec probe(x.begin(), x.end());
        for (std::size_t k = 0; k < coords.size(); ++k) {
            const std::size_t i = coords[k];
            probe[i] = x[i] + lambda;
            plus[k] = batch.empty() ? eval(probe) : eval_batch(probe, batch);
            probe[i] = x[i] - lambda;
            minus[k] = batch.empty() ? eval(probe) : eval_batch(probe, batch);
            probe[i] = x[i];
        }
    }

    // Held-out metric (accuracy) when the objective has a test set.
    virtual std::optional<double> test_metric(std::span<const double> /*x*/) const { return std::nullopt; }

protected:
    void check_dim(std::span<const double> x) const {
        if (x.size() != dim())
            throw DimensionError("objective expects dimension " + std::to_string(dim()) + ", got " +
                                 std::to_string(x.size()));
    }
};

// ---------------------------------------------------------------------------

// f(x) = 1/2 x^T Q x + c^T x with Q symmetric positive semidefinite.
class Quadratic final : public Objective {
public:
    Quadratic(std::size_t d, Vec q_row_major, Vec c) : d_(d), q_(std::move(q_row_major)), c_(std::move(c)) {
        if (d_ == 0 || q_.size() != d_ * d_ || c_.size() != d_) throw DimensionError("quadratic: Q must be d x d, c length d");
        for (std::size_t i = 0; i < d_; ++i)
            for (std::size_t j = 0; j < i; ++j)
                if (q_[i * d_ + j] != q_[j * d_ + i]) throw InvalidArgument("quadratic: Q must be symmetric");
        lipschitz_ = spectral_radius();
    }

    static Quadratic diagonal(const Vec& diag, Vec c = {}) {
        const std::size_t d = diag.size();
        Vec q(d * d, 0.0);
        for (std::size_t i = 0; i < d; ++i) q[i * d + i] = diag[i];
        if (c.empty()) c.assign(d, 0.0);
        return Quadratic(d, std::move(q), std::move(c));
    }

    std::size_t dim() const override { return d_; }
    ObjectiveKind kind() const override { return ObjectiveKind::quadratic; }
    std::optional<double> smoothness() const override { return lipschitz_; }

    double eval(std::span<const double> x) const override {
        check_dim(x);
        double quad = 0.0;
        for (std::size_t i = 0; i < d_; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < d_; ++j) row += q_[i * d_ + j] * x[j];
            quad += x[i] * row;
        }
        return 0.5 * quad + dot(c_, x);
    }

    Vec grad(std::span<const double> x) const override {
        check_dim(x);
        Vec g(c_);
        for (std::size_t i = 0; i < d_; ++i)
            for (std::size_t j = 0; j < d_; ++j) g[i] += q_[i * d_ + j] * x[j];
        return g;
    }

private:
    double spectral_radius() const {
        Vec v(d_, 1.0 / std::sqrt(static_cast<double>(d_)));
        double lam = 0.0;
        for (int it = 0; it < 500; ++it) {
            Vec w(d_, 0.0);
            for (std::size_t i = 0; i < d_; ++i)
                for (std::size_t j = 0; j < d_; ++j) w[i] += q_[i * d_ + j] * v[j];
            const double n = norm2(w);
            if (n == 0.0) return 0.0;
            for (std::size_t i = 0; i < d_; ++i) v[i] = w[i] / n;
            if (std::fabs(n - lam) <= 1e-13 * n) return n;
            lam = n;
        }
        return lam;
    }

    std::size_t d_;
    Vec q_;
    Vec c_;
    double lipschitz_ = 0.0;
};

// f(x) = sum_i x_i^2 / 2 + rho sin^2(x_i). Nonconvex for rho > 1/2, L = 1 + 2 rho.
class SeparableNonconvex final : public Objective {
public:
    SeparableNonconvex(std::size_t d, double rho) : d_(d), rho_(rho) {
        if (d_ == 0) throw InvalidArgument("separable_nonconvex: d must be >= 1");
        if (!(rho_ >= 0.0)) throw InvalidArgument("separable_nonconvex: rho must be >= 0");
    }
    std::size_t dim() const override { return d_; }
    ObjectiveKind kind() const override { return ObjectiveKind::separable_nonconvex; }
    std::optional<double> smoothness() const override { return 1.0 + 2.0 * rho_; }

    double eval(std::span<const double> x) const override {
        check_dim(x);
        double s = 0.0;
        for (double v : x) {
            const double sn = std::sin(v);
            s += 0.5 * v * v + rho_ * sn * sn;
        }
        return s;
    }
    Vec grad(std::span<const double> x) const override {
        check_dim(x);
        Vec g(d_);
        for (std::size_t i = 0; i < d_; ++i) g[i] = x[i] + rho_ * std::sin(2.0 * x[i]);
        return g;
    }
    void coordinate_pairs(std::span<const double> x, IndexSpan coords, double lambda, IndexSpan,
                          std::span<double> plus, std::span<double> minus) const override {
        // Separable: only the touched term changes.
        const double base = eval(x);
        auto term = [&](double v) {
            const double sn = std::sin(v);
            return 0.5 * v * v + rho_ * sn * sn;
        };
        for (std::size_t k = 0; k < coords.size(); ++k) {
            const double xi = x[coords[k]];
            plus[k] = base - term(xi) + term(xi + lambda);
            minus[k] = base - term(xi) + term(xi - lambda);
        }
    }

private:
    std::size_t d_;
    double rho_;
};

// Wraps arbitrary callables; used for ad-hoc test functions.
class FunctionObjective final : public Objective {
public:
    using EvalFn = std::function<double(std::span<const double>)>;
    using GradFn = std::function<Vec(std::span<const double>)>;
    FunctionObjective(std::size_t d, EvalFn f, GradFn g, std::optional<double> lipschitz = std::nullopt)
        : d_(d), f_(std::move(f)), g_(std::move(g)), l_(lipschitz) {}
    std::size_t dim() const override { return d_; }
    ObjectiveKind kind() const override { return ObjectiveKind::custom; }
    std::optional<double> smoothness() const override { return l_; }
    double eval(std::span<const double> x) const override {
        check_dim(x);
        return f_(x);
    }
    Vec grad(std::span<const double> x) const override {
        check_dim(x);
        return g_(x);
    }

private:
    std::size_t d_;
    EvalFn f_;
    GradFn g_;
    std::optional<double> l_;
};

// ---------------------------------------------------------------------------
// Binary logistic regression with l2 regularization:
// f(w) = mean_i log(1 + exp(-s_i w.z_i)) + mu/2 |w|^2, s_i = +1 for label 1, -1 for label 0.
class LogisticL2 final : public Objective {
public:
    LogisticL2(std::shared_ptr<const Dataset> train, double mu, std::shared_ptr<const Dataset> test = nullptr)
        : train_(std::move(train)), test_(std::move(test)), mu_(mu) {
        if (!train_ || train_->n_samples == 0) throw InvalidArgument("logistic_l2: empty training set");
        if (train_->n_classes != 2) throw InvalidArgument("logistic_l2: requires 2 classes");
        if (!(mu_ > 0.0)) throw InvalidArgument("logistic_l2: mu must be > 0");
        if (test_ && test_->n_features != train_->n_features) throw DimensionError("logistic_l2: test feature count mismatch");
        double max_sq = 0.0;
        for (std::size_t i = 0; i < train_->n_samples; ++i) {
            double s = 0.0;
            for (float v : train_->row(i)) s += double(v) * double(v);
            max_sq = std::max(max_sq, s);
        }
        lipschitz_ = 0.25 * max_sq + mu_;
        all_.resize(train_->n_samples);
        for (std::size_t i = 0; i < all_.size(); ++i) all_[i] = i;
    }

    std::size_t dim() const override { return train_->n_features; }
    ObjectiveKind kind() const override { return ObjectiveKind::logistic_l2; }
    std::optional<double> smoothness() const override { return lipschitz_; }
    std::size_t sample_count() const override { return train_->n_samples; }

    double eval(std::span<const double> x) const override { return loss(x, all_indices()); }
    Vec grad(std::span<const double> x) const override { return gradient(x, all_indices()); }
    double eval_batch(std::span<const double> x, IndexSpan batch) const override { return loss(x, batch); }
    Vec grad_batch(std::span<const double> x, IndexSpan batch) const override { return gradient(x, batch); }

    void coordinate_pairs(std::span<const double> x, IndexSpan coords, double lambda, IndexSpan batch,
                          std::span<double> plus, std::span<double> minus) const override {
        check_dim(x);
        const auto idx = batch.empty() ? all_indices() : IndexSpan(batch);
        std::vector<double> margins(idx.size());
        for (std::size_t r = 0; r < idx.size(); ++r) margins[r] = signed_label(idx[r]) * row_dot(idx[r], x);
        const double sq = dot(x, x);
        const double inv = 1.0 / static_cast<double>(idx.size());
        for (std::size_t k = 0; k < coords.size(); ++k) {
            const std::size_t j = coords[k];
            double lp = 0.0, lm = 0.0;
            for (std::size_t r = 0; r < idx.size(); ++r) {
                const double shift = signed_label(idx[r]) * lambda * double(train_->row(idx[r])[j]);
                lp += softplus(-(margins[r] + shift));
                lm += softplus(-(margins[r] - shift));
            }
            plus[k] = lp * inv + 0.5 * mu_ * (sq + 2.0 * lambda * x[j] + lambda * lambda);
            minus[k] = lm * inv + 0.5 * mu_ * (sq - 2.0 * lambda * x[j] + lambda * lambda);
        }
    }

    std::optional<double> test_metric(std::span<const double> x) const override {
        if (!test_) return std::nullopt;
        std::size_t correct = 0;
        for (std::size_t i = 0; i < test_->n_samples; ++i) {
            double s = 0.0;
            const auto r = test_->row(i);
            for (std::size_t j = 0; j < r.size(); ++j) s += double(r[j]) * x[j];
            correct += (s > 0.0) == (test_->labels[i] == 1);
        }
        return static_cast<double>(correct) / static_cast<double>(test_->n_samples);
    }

private:
    static double softplus(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }
    static double sigmoid(double t) {
        if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
        const double e = std::exp(t);
        return e / (1.0 + e);
    }
    double signed_label(std::size_t i) const { return train_->labels[i] == 1 ? 1.0 : -1.0; }
    double row_dot(std::size_t i, std::span<const double> x) const {
        const auto r = train_->row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < r.size(); ++j) s += double(r[j]) * x[j];
        return s;
    }
    IndexSpan all_indices() const { return all_; }
    double loss(std::span<const double> x, IndexSpan idx) const {
        check_dim(x);
        double s = 0.0;
        for (std::size_t i : idx) s += softplus(-signed_label(i) * row_dot(i, x));
        return s / static_cast<double>(idx.size()) + 0.5 * mu_ * dot(x, x);
    }
    Vec gradient(std::span<const double> x, IndexSpan idx) const {
        check_dim(x);
        Vec g(dim(), 0.0);
        for (std::size_t i : idx) {
            const double y = signed_label(i);
            const double coef = -y * sigmoid(-y * row_dot(i, x));
            const auto r = train_->row(i);
            for (std::size_t j = 0; j < r.size(); ++j) g[j] += coef * double(r[j]);
        }
        const double inv = 1.0 / static_cast<double>(idx.size());
        for (std::size_t j = 0; j < g.size(); ++j) g[j] = g[j] * inv + mu_ * x[j];
        return g;
    }

    std::shared_ptr<const Dataset> train_;
    std::shared_ptr<const Dataset> test_;
    double mu_;
    double lipschitz_ = 0.0;
    std::vector<std::size_t> all_;
};

// ---------------------------------------------------------------------------
// Noisy oracles.

enum class OracleOrder { first, zeroth };

struct OracleSpec {
    OracleOrder order = OracleOrder::first;
    // First order: per-coordinate standard deviation of the additive gradient noise.
    double sigma = 0.0;
    // Zeroth order: standard deviation of each function-evaluation noise.
    double zeta_std = 0.0;
    // Zeroth order: both evaluations share one noise draw.
    bool coupled = false;
    // Minibatch size for data-backed objectives; 0 means exact full-data values.
    std::size_t batch_size = 0;

    void validate() const {
        if (!(sigma >= 0.0)) throw InvalidArgument("oracle: sigma must be >= 0");
        if (!(zeta_std >= 0.0)) throw InvalidArgument("oracle: zeta_std must be >= 0");
        if (coupled && order != OracleOrder::zeroth) throw InvalidArgument("oracle: coupled noise requires zeroth order");
    }
};

// Stochastic gradient at x: minibatch gradient when `batch` is nonempty, plus
// i.i.d. N(0, sigma^2) per coordinate.
inline Vec stochastic_gradient(const Objective& obj, const OracleSpec& spec, std::span<const double> x, Rng& rng,
                               IndexSpan batch = {}) {
    Vec g = batch.empty() ? obj.grad(x) : obj.grad_batch(x, batch);
    if (spec.sigma > 0.0)
        for (auto& v : g) v += rng.normal(0.0, spec.sigma);
    return g;
}

inline double first_order_feedback(const Objective& obj, const OracleSpec& spec, std::span<const double> x_stale,
                                   std::span<const double> direction, Rng& rng, IndexSpan batch = {}) {
    if (spec.order != OracleOrder::first) throw InvalidArgument("first_order_feedback: oracle is not first order");
    if (direction.size() != obj.dim() || x_stale.size() != obj.dim())
        throw DimensionError("first_order_feedback: dimension mismatch");
    return dot(direction, stochastic_gradient(obj, spec, x_stale, rng, batch));
}

namespace detail {
// Combines two evaluations into the two-point estimate. A coupled draw is
// consumed but, being shared, cancels exactly in the difference.
inline double two_point(double f_plus, double f_minus, double lambda, const OracleSpec& spec, Rng& rng) {
    if (spec.coupled) {
        (void)rng.normal(0.0, spec.zeta_std);
        return (f_plus - f_minus) / (2.0 * lambda);
    }
    const double z1 = rng.normal(0.0, spec.zeta_std);
    const double z2 = rng.normal(0.0, spec.zeta_std);
    return ((f_plus + z1) - (f_minus + z2)) / (2.0 * lambda);
}
} // namespace detail

inline double zeroth_order_feedback(const Objective& obj, const OracleSpec& spec, std::span<const double> x_stale,
                                    std::span<const double> direction, double lambda, Rng& rng, IndexSpan batch = {}) {
    if (spec.order != OracleOrder::zeroth) throw InvalidArgument("zeroth_order_feedback: oracle is not zeroth order");
    if (!(lambda > 0.0)) throw InvalidArgument("zeroth_order_feedback: lambda must be > 0");
    if (direction.size() != obj.dim() || x_stale.size() != obj.dim())
        throw DimensionError("zeroth_order_feedback: dimension mismatch");
    Vec probe(x_stale.begin(), x_stale.end());
    axpy(lambda, direction, probe);
    const double fp = batch.empty() ? obj.eval(probe) : obj.eval_batch(probe, batch);
    probe.assign(x_stale.begin(), x_stale.end());
    axpy(-lambda, direction, probe);
    const double fm = batch.empty() ? obj.eval(probe) : obj.eval_batch(probe, batch);
    return detail::two_point(fp, fm, lambda, spec, rng);
}

// Two-point estimates along standard basis directions e_i for i in `coords`;
// agrees with zeroth_order_feedback(e_i) up to rounding but lets objectives
// share work across coordinates.
inline Vec zeroth_order_coordinate_feedback(const Objective& obj, const OracleSpec& spec, std::span<const double> x_stale,
                                            IndexSpan coords, double lambda, Rng& rng, IndexSpan batch = {}) {
    if (spec.order != OracleOrder::zeroth) throw InvalidArgument("zeroth_order_feedback: oracle is not zeroth order");
    if (!(lambda > 0.0)) throw InvalidArgument("zeroth_order_feedback: lambda must be > 0");
    for (std::size_t i : coords)
        if (i >= obj.dim()) throw DimensionError("zeroth_order_coordinate_feedback: coordinate out of range");
    Vec plus(coords.size()), minus(coords.size());
    obj.coordinate_pairs(x_stale, coords, lambda, batch, plus, minus);
    Vec out(coords.size());
    for (std::size_t k = 0; k < coords.size(); ++k) out[k] = detail::two_point(plus[k], minus[k], lambda, spec, rng);
    return out;
}

} // namespace farsign
