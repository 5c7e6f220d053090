#pragma once

#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"
#include "vector_ops.hpp"

namespace farsign {

enum class AttackKind { none, sign_flip, constant, gaussian, alie };

inline std::string_view to_string(AttackKind k) {
    switch (k) {
    case AttackKind::none: return "none";
    case AttackKind::sign_flip: return "sign_flip";
    case AttackKind::constant: return "constant";
    case AttackKind::gaussian: return "gaussian";
    case AttackKind::alie: return "alie";
    }
    return "?";
}

inline AttackKind attack_kind_from_string(std::string_view s) {
    if (s == "none") return AttackKind::none;
    if (s == "sign_flip") return AttackKind::sign_flip;
    if (s == "constant") return AttackKind::constant;
    if (s == "gaussian") return AttackKind::gaussian;
    if (s == "alie") return AttackKind::alie;
    throw InvalidArgument("unknown attack kind '" + std::string(s) + "'");
}

struct AttackSpec {
    AttackKind kind = AttackKind::none;
    double kappa = 1.0;   // sign_flip multiplier
    double c = 5.0;       // constant value
    double sigma_a = 10.0; // gaussian standard deviation
    double z = 1.5;       // ALIE deviation multiplier

    void validate() const {
        if (!std::isfinite(kappa) || !std::isfinite(c)) throw InvalidArgument("attack: kappa and c must be finite");
        if (!(sigma_a > 0.0) || !std::isfinite(sigma_a)) throw InvalidArgument("attack: sigma_a must be > 0");
        if (!(z > 0.0) || !std::isfinite(z)) throw InvalidArgument("attack: z must be > 0");
    }
};

// Exponentially weighted mean and standard deviation of honest values, one
// slot per coordinate (direction index for scalar feedback, parameter index
// for gradient vectors). Written only from honest feedback.
class HonestStats {
public:
    explicit HonestStats(std::size_t slots = 1, double decay = 0.99)
        : decay_(decay), mean_(slots, 0.0), var_(slots, 0.0), seen_(slots, 0) {}

    std::size_t size() const { return mean_.size(); }
    double mean(std::size_t i = 0) const { return mean_.at(i); }
    double std(std::size_t i = 0) const { return std::sqrt(var_.at(i)); }

    void observe(std::size_t i, double v) {
        if (!std::isfinite(v)) return;
        if (!seen_[i]) {
            mean_[i] = v;
            var_[i] = 0.0;
            seen_[i] = 1;
            return;
        }
        const double w = 1.0 - decay_;
        const double diff = v - mean_[i];
        mean_[i] += w * diff;
        var_[i] = decay_ * (var_[i] + w * diff * diff);
    }

    void observe(std::span<const double> v) {
        if (v.size() != size()) throw DimensionError("HonestStats: vector size mismatch");
        for (std::size_t i = 0; i < v.size(); ++i) observe(i, v[i]);
    }

    // Fixed statistics, for tests and replay.
    static HonestStats fixed(std::vector<double> mean, const std::vector<double>& stddev) {
        if (mean.size() != stddev.size()) throw DimensionError("HonestStats: size mismatch");
        HonestStats s(mean.size());
        s.mean_ = std::move(mean);
        for (std::size_t i = 0; i < stddev.size(); ++i) {
            if (!(stddev[i] >= 0.0)) throw InvalidArgument("HonestStats: std must be >= 0");
            s.var_[i] = stddev[i] * stddev[i];
            s.seen_[i] = 1;
        }
        return s;
    }

private:
    double decay_;
    std::vector<double> mean_;
    std::vector<double> var_;
    std::vector<unsigned char> seen_;
};

// Value an adversary reports instead of `honest`. `slot` selects the
// statistics entry ALIE uses.
inline double corrupt_scalar(const AttackSpec& attack, double honest, const HonestStats& stats, Rng& rng,
                             std::size_t slot = 0) {
    double out = honest;
    switch (attack.kind) {
    case AttackKind::none: out = honest; break;
    case AttackKind::sign_flip: out = -attack.kappa * honest; break;
    case AttackKind::constant: out = attack.c; break;
    case AttackKind::gaussian: out = rng.normal(0.0, attack.sigma_a); break;
    case AttackKind::alie: out = stats.mean(slot) - attack.z * stats.std(slot); break;
    }
    return std::isfinite(out) ? out : 0.0;
}

inline Vec corrupt_vector(const AttackSpec& attack, std::span<const double> honest, const HonestStats& stats, Rng& rng) {
    if (attack.kind == AttackKind::alie && stats.size() != honest.size())
        throw DimensionError("corrupt_vector: ALIE statistics must match the vector length");
    Vec out(honest.size());
    for (std::size_t i = 0; i < honest.size(); ++i) out[i] = corrupt_scalar(attack, honest[i], stats, rng, i);
    return out;
}

} // namespace farsign
