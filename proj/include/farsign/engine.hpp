#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dictionaries.hpp"
#include "errors.hpp"
#include "problems.hpp"
#include "schedules.hpp"
#include "vector_ops.hpp"

namespace farsign {

// One worker's feedback: values Y_i for a subset of its directions, computed
// at the iterate the worker snapshotted at counter `snapshot_n`.
struct FeedbackEvent {
    std::size_t worker = 0;
    std::vector<std::size_t> directions;
    Vec values;
    std::uint64_t snapshot_n = 0;
    std::uint64_t staleness = 0;
};

struct StepRecord {
    std::uint64_t n = 0; // counter at which the event was applied
    StepSizes steps{};
    double displacement = 0.0; // |x_{n+1} - x_n|_2
    std::vector<double> signs; // sign(-y) used per reported direction
    bool fault = false;
    std::string fault_reason;
};

struct Snapshot {
    Vec x;
    std::uint64_t n = 0;
};

enum class AverageStorage { dense, sparse };

// Directional averages y^(w)(i). Dense is N*m doubles; sparse keeps only the
// entries that have been touched, which is what large identity dictionaries
// with a few coordinates per event need.
class DirectionalAverages {
public:
    DirectionalAverages(std::size_t n_workers, std::size_t m, AverageStorage storage)
        : n_(n_workers), m_(m), storage_(storage) {
        if (storage_ == AverageStorage::dense)
            dense_.assign(n_ * m_, 0.0);
        else
            sparse_.resize(n_);
    }

    double get(std::size_t w, std::size_t i) const {
        if (storage_ == AverageStorage::dense) return dense_[w * m_ + i];
        const auto& map = sparse_[w];
        const auto it = map.find(i);
        return it == map.end() ? 0.0 : it->second;
    }

    void set(std::size_t w, std::size_t i, double v) {
        if (storage_ == AverageStorage::dense)
            dense_[w * m_ + i] = v;
        else
            sparse_[w][i] = v;
    }

    // Copy of y^(w) as a dense m-vector.
    Vec worker(std::size_t w) const {
        if (storage_ == AverageStorage::dense)
            return Vec(dense_.begin() + static_cast<std::ptrdiff_t>(w * m_),
                       dense_.begin() + static_cast<std::ptrdiff_t>((w + 1) * m_));
        Vec out(m_, 0.0);
        for (const auto& [i, v] : sparse_[w]) out[i] = v;
        return out;
    }

    AverageStorage storage() const { return storage_; }

private:
    std::size_t n_;
    std::size_t m_;
    AverageStorage storage_;
    Vec dense_;
    std::vector<std::unordered_map<std::size_t, double>> sparse_;
};

class ServerState {
public:
    ServerState(std::shared_ptr<const DirectionDictionary> dict, ScheduleSpec spec, Vec x0,
                AverageStorage storage = AverageStorage::dense)
        : dict_(std::move(dict)), spec_(spec), x_(std::move(x0)),
          y_(dict_ ? dict_->workers() : 0, dict_ ? dict_->directions() : 0, storage) {
        if (!dict_) throw InvalidArgument("ServerState: null dictionary");
        spec_.validate();
        if (x_.size() != dict_->dim())
            throw DimensionError("ServerState: x0 has dimension " + std::to_string(x_.size()) + ", dictionary has " +
                                 std::to_string(dict_->dim()));
        if (!all_finite(x_)) throw InvalidArgument("ServerState: x0 must be finite");
    }

    // Per-(worker, direction) arrival probabilities, row-major N x m. Each
    // update along a_i^(l) is then weighted by 1 / (m N pi_{l,i}), so uniform
    // probabilities give weight 1.
    void set_arrival_probs(Vec probs) {
        const std::size_t n = dict_->workers(), m = dict_->directions();
        if (probs.size() != n * m) throw DimensionError("arrival_probs must have N*m entries");
        for (double p : probs)
            if (!(p > 0.0 && p <= 1.0)) throw InvalidArgument("arrival probabilities must lie in (0, 1]");
        weights_.resize(probs.size());
        const double mn = static_cast<double>(n * m);
        for (std::size_t k = 0; k < probs.size(); ++k) weights_[k] = 1.0 / (mn * probs[k]);
    }

    StepRecord apply_event(const FeedbackEvent& ev) {
        const std::size_t m = dict_->directions();
        if (ev.worker >= dict_->workers())
            throw InvalidArgument("apply_event: unknown worker " + std::to_string(ev.worker));
        if (ev.directions.empty()) throw InvalidArgument("apply_event: empty direction set");
        if (ev.values.size() != ev.directions.size())
            throw InvalidArgument("apply_event: values and directions differ in length");
        for (std::size_t k = 0; k < ev.directions.size(); ++k) {
            if (ev.directions[k] >= m)
                throw InvalidArgument("apply_event: unknown direction " + std::to_string(ev.directions[k]));
            for (std::size_t j = 0; j < k; ++j)
                if (ev.directions[j] == ev.directions[k]) throw InvalidArgument("apply_event: repeated direction");
        }

        StepRecord rec;
        rec.n = n_;
        rec.steps = schedule_at(spec_, n_);
        for (double v : ev.values) {
            if (!std::isfinite(v)) {
                rec.fault = true;
                rec.fault_reason = "non-finite feedback value from worker " + std::to_string(ev.worker);
                return rec;
            }
        }

        const auto& a = dict_->matrix(ev.worker);
        rec.signs.resize(ev.directions.size());
        // (1) signed step with the pre-update averages
        if (a.is_identity()) {
            double sq = 0.0;
            for (std::size_t k = 0; k < ev.directions.size(); ++k) {
                const std::size_t i = ev.directions[k];
                const double s = sign(-y_.get(ev.worker, i));
                rec.signs[k] = s;
                const double step = rec.steps.alpha * weight(ev.worker, i) * s;
                x_[i] += step;
                sq += step * step;
                if (!std::isfinite(x_[i])) throw Fault("non-finite iterate at event " + std::to_string(n_));
            }
            rec.displacement = std::sqrt(sq);
        } else {
            Vec delta(x_.size(), 0.0);
            for (std::size_t k = 0; k < ev.directions.size(); ++k) {
                const std::size_t i = ev.directions[k];
                const double s = sign(-y_.get(ev.worker, i));
                rec.signs[k] = s;
                if (s != 0.0) a.add_column(i, rec.steps.alpha * weight(ev.worker, i) * s, delta);
            }
            for (std::size_t j = 0; j < x_.size(); ++j) x_[j] += delta[j];
            rec.displacement = norm2(delta);
            if (!all_finite(x_)) throw Fault("non-finite iterate at event " + std::to_string(n_));
        }
        // (2) fast-timescale averages for the reported directions only
        for (std::size_t k = 0; k < ev.directions.size(); ++k) {
            const std::size_t i = ev.directions[k];
            const double y = y_.get(ev.worker, i);
            const double y_new = y + rec.steps.beta * (ev.values[k] - y);
            if (!std::isfinite(y_new)) throw Fault("non-finite directional average at event " + std::to_string(n_));
            y_.set(ev.worker, i, y_new);
        }
        // (3)
        ++n_;
        return rec;
    }

    Snapshot snapshot() const { return {x_, n_}; }

    // |y^(w) - A^(w)^T grad f(x)|_2 with the exact gradient.
    double tracking_error(const Objective& obj, std::size_t worker) const {
        return std::sqrt(tracking_error_sq(obj.grad(x_), worker));
    }

    double tracking_error_sq(std::span<const double> grad_at_x, std::size_t worker) const {
        if (worker >= dict_->workers()) throw InvalidArgument("tracking_error: unknown worker");
        const auto& a = dict_->matrix(worker);
        const Vec y = y_.worker(worker);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double e = y[i] - a.column_dot(i, grad_at_x);
            s += e * e;
        }
        return s;
    }

    const Vec& x() const { return x_; }
    std::uint64_t n() const { return n_; }
    const ScheduleSpec& spec() const { return spec_; }
    const DirectionDictionary& dictionary() const { return *dict_; }
    double y(std::size_t w, std::size_t i) const { return y_.get(w, i); }
    void set_y(std::size_t w, std::size_t i, double v) { y_.set(w, i, v); }
    Vec y_worker(std::size_t w) const { return y_.worker(w); }

private:
    double weight(std::size_t w, std::size_t i) const {
        return weights_.empty() ? 1.0 : weights_[w * dict_->directions() + i];
    }

    std::shared_ptr<const DirectionDictionary> dict_;
    ScheduleSpec spec_;
    Vec x_;
    DirectionalAverages y_;
    Vec weights_;
    std::uint64_t n_ = 0;
};

} // namespace farsign
