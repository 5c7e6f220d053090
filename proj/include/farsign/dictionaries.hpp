#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"
#include "vector_ops.hpp"

namespace farsign {

// A d x m matrix of probing directions, stored column-major. Identity
// matrices are kept implicit so that large-d identity dictionaries cost
// nothing.
class DirectionMatrix {
public:
    static DirectionMatrix identity(std::size_t d) {
        DirectionMatrix a;
        a.rows_ = d;
        a.cols_ = d;
        a.identity_ = true;
        return a;
    }

    // `columns` holds m columns of length d each.
    static DirectionMatrix from_columns(const std::vector<Vec>& columns) {
        if (columns.empty()) throw InvalidArgument("direction matrix needs at least one column");
        DirectionMatrix a;
        a.rows_ = columns.front().size();
        a.cols_ = columns.size();
        if (a.rows_ == 0) throw InvalidArgument("direction matrix needs at least one row");
        a.data_.reserve(a.rows_ * a.cols_);
        for (const auto& c : columns) {
            if (c.size() != a.rows_) throw DimensionError("direction matrix: ragged columns");
            a.data_.insert(a.data_.end(), c.begin(), c.end());
        }
        return a;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool is_identity() const { return identity_; }

    double at(std::size_t r, std::size_t c) const {
        if (identity_) return r == c ? 1.0 : 0.0;
        return data_[c * rows_ + r];
    }

    Vec column(std::size_t c) const {
        Vec out(rows_, 0.0);
        if (identity_) {
            out[c] = 1.0;
        } else {
            std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(c * rows_), rows_, out.begin());
        }
        return out;
    }

    double column_norm(std::size_t c) const {
        if (identity_) return 1.0;
        return norm2(std::span<const double>(data_).subspan(c * rows_, rows_));
    }

    // a_c^T x
    double column_dot(std::size_t c, std::span<const double> x) const {
        if (identity_) return x[c];
        return dot(std::span<const double>(data_).subspan(c * rows_, rows_), x);
    }

    // x += s * a_c
    void add_column(std::size_t c, double s, std::span<double> x) const {
        if (identity_) {
            x[c] += s;
            return;
        }
        axpy(s, std::span<const double>(data_).subspan(c * rows_, rows_), x);
    }

    // ||A^T x||_1
    double transpose_l1(std::span<const double> x) const {
        if (identity_) return norm1(x);
        double s = 0.0;
        for (std::size_t c = 0; c < cols_; ++c) s += std::fabs(column_dot(c, x));
        return s;
    }

    DirectionMatrix scaled(double s) const {
        DirectionMatrix out;
        out.rows_ = rows_;
        out.cols_ = cols_;
        if (identity_) {
            out.data_.assign(rows_ * cols_, 0.0);
            for (std::size_t i = 0; i < rows_; ++i) out.data_[i * rows_ + i] = s;
        } else {
            out.data_ = data_;
            for (double& v : out.data_) v *= s;
        }
        return out;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    bool identity_ = false;
    Vec data_;
};

class DirectionDictionary {
public:
    explicit DirectionDictionary(std::vector<DirectionMatrix> matrices) : matrices_(std::move(matrices)) {
        if (matrices_.empty()) throw InvalidArgument("dictionary: no workers");
        d_ = matrices_.front().rows();
        m_ = matrices_.front().cols();
        for (const auto& a : matrices_) {
            if (a.rows() != d_ || a.cols() != m_)
                throw DimensionError("dictionary: every worker matrix must be " + std::to_string(d_) + "x" +
                                     std::to_string(m_));
            for (std::size_t c = 0; c < m_; ++c) {
                const double nrm = a.column_norm(c);
                if (!(nrm > 0.0) || !std::isfinite(nrm)) throw InvalidArgument("dictionary: zero or non-finite column");
                a_bar_ = std::max(a_bar_, nrm);
            }
        }
    }

    std::size_t workers() const { return matrices_.size(); }
    std::size_t dim() const { return d_; }
    std::size_t directions() const { return m_; }
    double a_bar() const { return a_bar_; }
    const DirectionMatrix& matrix(std::size_t w) const { return matrices_.at(w); }
    const std::vector<DirectionMatrix>& matrices() const { return matrices_; }

    bool all_identity() const {
        return std::all_of(matrices_.begin(), matrices_.end(), [](const auto& a) { return a.is_identity(); });
    }

    // Rank of the stacked d x (N m) matrix [A^(1) ... A^(N)].
    std::size_t stacked_rank() const {
        if (all_identity()) return d_;
        const std::size_t cols = workers() * m_;
        // Row-major copy of the d x cols matrix.
        std::vector<double> a(d_ * cols);
        for (std::size_t w = 0; w < workers(); ++w)
            for (std::size_t c = 0; c < m_; ++c)
                for (std::size_t r = 0; r < d_; ++r) a[r * cols + w * m_ + c] = matrices_[w].at(r, c);
        double scale = 0.0;
        for (double v : a) scale = std::max(scale, std::fabs(v));
        const double tol = scale * 1e-10 * static_cast<double>(std::max(d_, cols));
        std::size_t rank = 0;
        for (std::size_t col = 0; col < cols && rank < d_; ++col) {
            std::size_t piv = rank;
            for (std::size_t r = rank + 1; r < d_; ++r)
                if (std::fabs(a[r * cols + col]) > std::fabs(a[piv * cols + col])) piv = r;
            if (std::fabs(a[piv * cols + col]) <= tol) continue;
            for (std::size_t k = 0; k < cols; ++k) std::swap(a[piv * cols + k], a[rank * cols + k]);
            for (std::size_t r = rank + 1; r < d_; ++r) {
                const double f = a[r * cols + col] / a[rank * cols + col];
                for (std::size_t k = col; k < cols; ++k) a[r * cols + k] -= f * a[rank * cols + k];
            }
            ++rank;
        }
        return rank;
    }

    bool stacked_full_column_rank() const { return stacked_rank() == workers() * m_; }

    DirectionDictionary scaled(double s) const {
        std::vector<DirectionMatrix> out;
        out.reserve(matrices_.size());
        for (const auto& a : matrices_) out.push_back(a.scaled(s));
        return DirectionDictionary(std::move(out));
    }

private:
    std::vector<DirectionMatrix> matrices_;
    std::size_t d_ = 0;
    std::size_t m_ = 0;
    double a_bar_ = 0.0;
};

inline DirectionDictionary identity_dictionary(std::size_t d, std::size_t n_workers) {
    if (d == 0 || n_workers == 0) throw InvalidArgument("identity_dictionary: d and N must be >= 1");
    return DirectionDictionary(std::vector<DirectionMatrix>(n_workers, DirectionMatrix::identity(d)));
}

// Four scalar-observation workers in the plane; robust to one adversary.
inline DirectionDictionary ganesh_example_dictionary() {
    return DirectionDictionary({
        DirectionMatrix::from_columns({{2.0, 0.0}}),
        DirectionMatrix::from_columns({{0.0, 2.0}}),
        DirectionMatrix::from_columns({{1.0, 2.0}}),
        DirectionMatrix::from_columns({{-2.0, 1.0}}),
    });
}

// ---------------------------------------------------------------------------
// Text format: one block per worker, blocks separated by blank lines. A block
// is d rows of m space-separated decimals, or the single line `identity <d>`.
// Lines starting with '#' are ignored.

inline void write_dictionary(std::ostream& os, const DirectionDictionary& dict) {
    os << "# farsign direction dictionary: N=" << dict.workers() << " d=" << dict.dim() << " m=" << dict.directions()
       << '\n';
    os << std::setprecision(17);
    for (std::size_t w = 0; w < dict.workers(); ++w) {
        if (w > 0) os << '\n';
        const auto& a = dict.matrix(w);
        if (a.is_identity()) {
            os << "identity " << a.rows() << '\n';
            continue;
        }
        for (std::size_t r = 0; r < a.rows(); ++r) {
            for (std::size_t c = 0; c < a.cols(); ++c) os << (c ? " " : "") << a.at(r, c);
            os << '\n';
        }
    }
}

inline DirectionDictionary read_dictionary(std::istream& is) {
    std::vector<DirectionMatrix> matrices;
    std::vector<Vec> rows;
    std::size_t line_no = 0;
    auto flush = [&] {
        if (rows.empty()) return;
        const std::size_t m = rows.front().size();
        std::vector<Vec> cols(m, Vec(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != m)
                throw DataError("dictionary block ending at line " + std::to_string(line_no) + " has ragged rows");
            for (std::size_t c = 0; c < m; ++c) cols[c][r] = rows[r][c];
        }
        matrices.push_back(DirectionMatrix::from_columns(cols));
        rows.clear();
    };
    std::string line;
    while (std::getline(is, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) {
            flush();
            continue;
        }
        if (line[first] == '#') continue;
        std::istringstream ls(line);
        if (line.compare(first, 8, "identity") == 0) {
            if (!rows.empty()) throw DataError("line " + std::to_string(line_no) + ": identity inside a numeric block");
            std::string kw;
            std::size_t d = 0;
            if (!(ls >> kw >> d) || d == 0) throw DataError("line " + std::to_string(line_no) + ": expected 'identity <d>'");
            matrices.push_back(DirectionMatrix::identity(d));
            continue;
        }
        Vec row;
        std::string tok;
        while (ls >> tok) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(tok, &used));
                if (used != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw DataError("line " + std::to_string(line_no) + ": not a number: '" + tok + "'");
            }
        }
        rows.push_back(std::move(row));
    }
    flush();
    if (matrices.empty()) throw DataError("dictionary file contains no blocks");
    return DirectionDictionary(std::move(matrices));
}

inline DirectionDictionary load_dictionary(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dictionary file '" + path + "'");
    return read_dictionary(in);
}

// ---------------------------------------------------------------------------
// Directional robustness margins.

enum class MarginMethod { analytic_identity, exact_2d, monte_carlo };

inline std::string_view to_string(MarginMethod m) {
    switch (m) {
    case MarginMethod::analytic_identity: return "analytic_identity";
    case MarginMethod::exact_2d: return "exact_2d";
    case MarginMethod::monte_carlo: return "monte_carlo";
    }
    return "?";
}

inline MarginMethod margin_method_from_string(std::string_view s) {
    if (s == "analytic_identity") return MarginMethod::analytic_identity;
    if (s == "exact_2d") return MarginMethod::exact_2d;
    if (s == "monte_carlo") return MarginMethod::monte_carlo;
    throw InvalidArgument("unknown margin method '" + std::string(s) + "'");
}

struct MarginOptions {
    std::uint64_t samples = 100000;
    std::uint64_t seed = 0;
    // Exact certification refuses to enumerate more subsets than this.
    std::uint64_t subset_cap = 1000000;
};

using WorkerSet = std::vector<std::size_t>;

namespace detail {

inline void check_subset(const DirectionDictionary& dict, const WorkerSet& s) {
    for (std::size_t w : s)
        if (w >= dict.workers()) throw InvalidArgument("subset index " + std::to_string(w) + " out of range");
}

// Probe points on the unit l1 sphere used by the margin computations,
// together with per-worker norms ||A^(w)^T x||_1 at each point.
struct ProbeTable {
    std::vector<Vec> points;
    std::vector<Vec> worker_norms; // [probe][worker]
    std::vector<double> totals;
};

inline ProbeTable tabulate(const DirectionDictionary& dict, std::vector<Vec> points) {
    ProbeTable t;
    t.points = std::move(points);
    t.worker_norms.reserve(t.points.size());
    t.totals.reserve(t.points.size());
    for (const auto& x : t.points) {
        Vec norms(dict.workers());
        for (std::size_t w = 0; w < dict.workers(); ++w) norms[w] = dict.matrix(w).transpose_l1(x);
        double total = 0.0;
        for (double v : norms) total += v;
        t.totals.push_back(total);
        t.worker_norms.push_back(std::move(norms));
    }
    return t;
}

// In the plane the l1 sphere is a square; along each edge the margin is
// piecewise linear with kinks where some column is orthogonal to x, so its
// minimum sits at an edge endpoint (an axis point) or at such a breakpoint.
// The margin is even in x, so one representative per +/- pair suffices.
inline std::vector<Vec> breakpoints_2d(const DirectionDictionary& dict) {
    if (dict.dim() != 2) throw DimensionError("exact_2d margin requires d = 2, got d = " + std::to_string(dict.dim()));
    std::vector<Vec> pts{{1.0, 0.0}, {0.0, 1.0}};
    for (const auto& a : dict.matrices()) {
        for (std::size_t c = 0; c < a.cols(); ++c) {
            const double a1 = a.at(0, c);
            const double a2 = a.at(1, c);
            const double l1 = std::fabs(a1) + std::fabs(a2);
            pts.push_back({-a2 / l1, a1 / l1});
        }
    }
    return pts;
}

// Uniform on the l1 sphere: normalized i.i.d. exponentials with random signs.
inline std::vector<Vec> l1_sphere_samples(std::size_t d, std::uint64_t count, std::uint64_t seed) {
    Rng rng(seed, Stream::dictionary);
    std::vector<Vec> pts;
    pts.reserve(count);
    for (std::uint64_t k = 0; k < count; ++k) {
        Vec x(d);
        double s = 0.0;
        for (auto& v : x) {
            v = rng.exponential();
            s += v;
        }
        for (auto& v : x) v = (rng.coin() ? -v : v) / s;
        pts.push_back(std::move(x));
    }
    return pts;
}

inline double margin_on_table(const ProbeTable& t, const WorkerSet& s, std::size_t* argmin = nullptr) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < t.points.size(); ++k) {
        double adv = 0.0;
        for (std::size_t w : s) adv += t.worker_norms[k][w];
        const double margin = t.totals[k] - 2.0 * adv;
        if (margin < best) {
            best = margin;
            if (argmin) *argmin = k;
        }
    }
    return best;
}

inline double binomial(std::size_t n, std::size_t k) {
    double r = 1.0;
    for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    return r;
}

} // namespace detail

// min over ||x||_1 = 1 of sum_{w not in S} ||A^(w)^T x||_1 - sum_{w in S} ||A^(w)^T x||_1.
inline double subset_margin(const DirectionDictionary& dict, const WorkerSet& s, MarginMethod method,
                            const MarginOptions& opt = {}) {
    detail::check_subset(dict, s);
    switch (method) {
    case MarginMethod::analytic_identity: {
        if (!dict.all_identity()) throw InvalidArgument("analytic_identity margin requires an identity dictionary");
        WorkerSet uniq = s;
        std::sort(uniq.begin(), uniq.end());
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
        return static_cast<double>(dict.workers()) - 2.0 * static_cast<double>(uniq.size());
    }
    case MarginMethod::exact_2d:
        return detail::margin_on_table(detail::tabulate(dict, detail::breakpoints_2d(dict)), s);
    case MarginMethod::monte_carlo:
        return detail::margin_on_table(
            detail::tabulate(dict, detail::l1_sphere_samples(dict.dim(), opt.samples, opt.seed)), s);
    }
    throw InvalidArgument("unknown margin method");
}

enum class Verdict { certified_pass, certified_fail, sampled_pass, sampled_fail };

inline std::string_view to_string(Verdict v) {
    switch (v) {
    case Verdict::certified_pass: return "certified_pass";
    case Verdict::certified_fail: return "certified_fail";
    case Verdict::sampled_pass: return "sampled_pass";
    case Verdict::sampled_fail: return "sampled_fail";
    }
    return "?";
}

struct RobustnessCertificate {
    std::size_t f_adv = 0;
    MarginMethod method = MarginMethod::monte_carlo;
    WorkerSet worst_subset;
    double margin_eta = 0.0;
    std::uint64_t samples_or_cells = 0;
    Verdict verdict = Verdict::sampled_fail;
    Vec worst_direction; // empty for the analytic method
    std::size_t stacked_rank = 0;

    bool passed() const { return verdict == Verdict::certified_pass || verdict == Verdict::sampled_pass; }
    bool certified() const { return verdict == Verdict::certified_pass || verdict == Verdict::certified_fail; }
};

inline RobustnessCertificate certify(const DirectionDictionary& dict, std::size_t f_adv, MarginMethod method,
                                     const MarginOptions& opt = {}) {
    const std::size_t n = dict.workers();
    if (f_adv > n) throw InvalidArgument("certify: adversary budget exceeds worker count");

    RobustnessCertificate cert;
    cert.f_adv = f_adv;
    cert.method = method;
    cert.stacked_rank = dict.stacked_rank();

    auto finish = [&](bool certified) {
        const bool pass = cert.margin_eta > 0.0;
        cert.verdict = certified ? (pass ? Verdict::certified_pass : Verdict::certified_fail)
                                 : (pass ? Verdict::sampled_pass : Verdict::sampled_fail);
        return cert;
    };

    // Identity dictionaries have a closed form; exact requests use it.
    if (method == MarginMethod::exact_2d && dict.all_identity()) method = cert.method = MarginMethod::analytic_identity;

    if (method == MarginMethod::analytic_identity) {
        if (!dict.all_identity()) throw InvalidArgument("analytic_identity certification requires an identity dictionary");
        // Every subset of size k has margin N - 2k, so the worst is |S| = f_adv.
        cert.worst_subset.resize(f_adv);
        std::iota(cert.worst_subset.begin(), cert.worst_subset.end(), std::size_t{0});
        cert.margin_eta = static_cast<double>(n) - 2.0 * static_cast<double>(f_adv);
        cert.samples_or_cells = 1;
        return finish(true);
    }

    if (method == MarginMethod::monte_carlo) {
        // For a fixed x the worst subset of size <= f_adv is the f_adv workers
        // with the largest ||A^T x||_1, so no enumeration is needed.
        const auto table = detail::tabulate(dict, detail::l1_sphere_samples(dict.dim(), opt.samples, opt.seed));
        cert.margin_eta = std::numeric_limits<double>::infinity();
        std::size_t best_k = 0;
        WorkerSet order(n);
        for (std::size_t k = 0; k < table.points.size(); ++k) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            const auto& norms = table.worker_norms[k];
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });
            double adv = 0.0;
            for (std::size_t i = 0; i < f_adv; ++i) adv += norms[order[i]];
            const double margin = table.totals[k] - 2.0 * adv;
            if (margin < cert.margin_eta) {
                cert.margin_eta = margin;
                best_k = k;
                cert.worst_subset.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(f_adv));
                std::sort(cert.worst_subset.begin(), cert.worst_subset.end());
            }
        }
        cert.samples_or_cells = opt.samples;
        if (!table.points.empty()) cert.worst_direction = table.points[best_k];
        return finish(false);
    }

    // exact_2d: enumerate subsets by size, then lexicographically.
    double n_subsets = 0.0;
    for (std::size_t k = 0; k <= f_adv; ++k) n_subsets += detail::binomial(n, k);
    if (n_subsets > static_cast<double>(opt.subset_cap))
        throw BudgetExceeded("exact certification would enumerate " + std::to_string(static_cast<std::uint64_t>(n_subsets)) +
                             " subsets (cap " + std::to_string(opt.subset_cap) + "); use method monte_carlo");
    const auto table = detail::tabulate(dict, detail::breakpoints_2d(dict));
    cert.margin_eta = std::numeric_limits<double>::infinity();
    cert.samples_or_cells = table.points.size();
    for (std::size_t k = 0; k <= f_adv; ++k) {
        WorkerSet s(k);
        std::iota(s.begin(), s.end(), std::size_t{0});
        while (true) {
            std::size_t arg = 0;
            const double margin = detail::margin_on_table(table, s, &arg);
            if (margin < cert.margin_eta) {
                cert.margin_eta = margin;
                cert.worst_subset = s;
                cert.worst_direction = table.points[arg];
            }
            // next k-combination of [0, n)
            std::size_t i = k;
            while (i > 0 && s[i - 1] == n - k + i - 1) --i;
            if (i == 0) break;
            ++s[i - 1];
            for (std::size_t j = i; j < k; ++j) s[j] = s[j - 1] + 1;
        }
    }
    return finish(true);
}

} // namespace farsign
