#pragma once

#include <algorithm>
#include <optional>
#include <utility>
#include <variant>

#include "noiselab/core.hpp"

namespace noiselab {

inline constexpr double kRowSumTol = 1e-9;
inline constexpr double kEntryTol = 1e-12;

/// Row-stochastic matrix T with T[i][j] = P(given = j | true = i).
struct TransitionMatrix {
    int num_classes = 0;
    Matrix rows;

    TransitionMatrix() = default;
    TransitionMatrix(int c, Matrix m) : num_classes(c), rows(std::move(m)) { validate(); }

    double at(int i, int j) const { return rows.at(i, j); }

    void validate() const {
        if (num_classes < 1 || rows.rows != static_cast<std::size_t>(num_classes) ||
            rows.cols != static_cast<std::size_t>(num_classes))
            throw ValidationError("transition matrix must be c x c");
        for (int i = 0; i < num_classes; ++i) {
            double sum = 0.0;
            for (int j = 0; j < num_classes; ++j) {
                const double x = rows.at(i, j);
                if (!(x >= -kEntryTol && x <= 1.0 + kEntryTol))
                    throw ValidationError("transition entry outside [0,1] at row " + std::to_string(i));
                sum += x;
            }
            if (std::abs(sum - 1.0) > kRowSumTol)
                throw ValidationError("transition row " + std::to_string(i) + " sums to " +
                                      format_double(sum));
        }
    }

    static TransitionMatrix identity(int c) {
        Matrix m(c, c, 0.0);
        for (int i = 0; i < c; ++i) m.at(i, i) = 1.0;
        return TransitionMatrix(c, std::move(m));
    }
};

/// Prior over true classes, pi[i] = P(true = i).
struct ClassPrior {
    std::vector<double> p;

    ClassPrior() = default;
    explicit ClassPrior(std::vector<double> probs) : p(std::move(probs)) { validate(); }

    int num_classes() const { return static_cast<int>(p.size()); }

    void validate() const {
        if (p.empty()) throw ValidationError("empty class prior");
        double sum = 0.0;
        for (double x : p) {
            if (!(x >= 0.0)) throw ValidationError("class prior has negative entry");
            sum += x;
        }
        if (std::abs(sum - 1.0) > kRowSumTol)
            throw ValidationError("class prior sums to " + format_double(sum));
    }

    static ClassPrior uniform(int c) {
        return ClassPrior(std::vector<double>(c, 1.0 / static_cast<double>(c)));
    }
};

// ---------------------------------------------------------------------------
// Noise specifications

struct SymmetricNoise {
    double epsilon = 0.0;
};

struct TruncatedNormalNoise {
    double epsilon = 0.0;
    double mu = 0.0;     // target class
    double sigma = 1.0;  // spread in class-index units; support truncated to [0, c-1]
};

struct BimodalNoise {
    double epsilon = 0.0;
    double mu1 = 0.0;
    double sigma1 = 1.0;
    double mu2 = 0.0;
    double sigma2 = 1.0;
    double mix = 0.5;  // weight of the first peak
};

struct PartialTargetedNoise {
    double epsilon = 0.0;
    std::vector<std::pair<int, int>> mapping;  // (source class, target class)
};

struct CustomNoise {
    TransitionMatrix matrix;
};

using NoiseSpec =
    std::variant<SymmetricNoise, TruncatedNormalNoise, BimodalNoise, PartialTargetedNoise, CustomNoise>;

inline void validate_spec(const NoiseSpec& spec, int c) {
    if (c < 2) throw ValidationError("need at least 2 classes");
    auto check_eps = [](double e) {
        if (!(e >= 0.0 && e <= 1.0)) throw ValidationError("epsilon must be in [0,1]");
    };
    auto check_mu = [c](double mu) {
        if (!(mu >= 0.0 && mu <= c - 1.0))
            throw ValidationError("mu must be a class index in [0, c-1]");
    };
    if (const auto* s = std::get_if<SymmetricNoise>(&spec)) {
        check_eps(s->epsilon);
    } else if (const auto* t = std::get_if<TruncatedNormalNoise>(&spec)) {
        check_eps(t->epsilon);
        check_mu(t->mu);
        if (!(t->sigma > 0.0)) throw ValidationError("sigma must be positive");
    } else if (const auto* b = std::get_if<BimodalNoise>(&spec)) {
        check_eps(b->epsilon);
        check_mu(b->mu1);
        check_mu(b->mu2);
        if (!(b->sigma1 > 0.0 && b->sigma2 > 0.0)) throw ValidationError("sigma must be positive");
        if (!(b->mix >= 0.0 && b->mix <= 1.0)) throw ValidationError("mix must be in [0,1]");
    } else if (const auto* p = std::get_if<PartialTargetedNoise>(&spec)) {
        check_eps(p->epsilon);
        if (p->mapping.empty()) throw ValidationError("partial targeted mapping is empty");
        std::vector<int> sources;
        for (auto [s, t] : p->mapping) {
            if (s < 0 || s >= c || t < 0 || t >= c)
                throw ValidationError("mapping class out of range");
            if (s == t) throw ValidationError("mapping target equals source");
            sources.push_back(s);
        }
        std::sort(sources.begin(), sources.end());
        if (std::adjacent_find(sources.begin(), sources.end()) != sources.end())
            throw ValidationError("mapping sources must be pairwise distinct");
    } else if (const auto* cu = std::get_if<CustomNoise>(&spec)) {
        if (cu->matrix.num_classes != c)
            throw ValidationError("custom matrix class count mismatch");
        cu->matrix.validate();
    }
}

inline double epsilon_of(const NoiseSpec& spec) {
    return std::visit(
        [](const auto& s) -> double {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, CustomNoise>)
                return -1.0;  // carried by the matrix itself
            else
                return s.epsilon;
        },
        spec);
}

/// Returns a copy of the noise spec with its free ratio replaced.
inline NoiseSpec with_epsilon(NoiseSpec spec, double epsilon) {
    std::visit(
        [epsilon](auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (!std::is_same_v<T, CustomNoise>) s.epsilon = epsilon;
        },
        spec);
    return spec;
}

// ---------------------------------------------------------------------------
// Label distributions

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

namespace detail {

// Discretizes a normal truncated to [0, c-1] by assigning each class the mass
// that rounds to its index (edge bins are clipped at the truncation limits).
// This mirrors how sampled noisy labels land on classes, which is what the
// closed-form accuracy curves are evaluated against.
inline std::vector<double> truncnormal_class_masses(double mu, double sigma, int c) {
    const double lo = 0.0, hi = static_cast<double>(c - 1);
    const double z = normal_cdf((hi - mu) / sigma) - normal_cdf((lo - mu) / sigma);
    std::vector<double> p(c, 0.0);
    if (z <= 0.0) {
        // all mass collapsed numerically; put it on the nearest class
        p[static_cast<int>(std::lround(std::clamp(mu, lo, hi)))] = 1.0;
        return p;
    }
    double total = 0.0;
    for (int j = 0; j < c; ++j) {
        const double a = std::max(lo, j - 0.5);
        const double b = std::min(hi, j + 0.5);
        p[j] = normal_cdf((b - mu) / sigma) - normal_cdf((a - mu) / sigma);
        total += p[j];
    }
    for (double& x : p) x /= total;
    return p;
}

}  // namespace detail

/// Global noisy-label distribution P(given = j) for the truncated-normal and
/// bimodal patterns.
inline std::vector<double> noise_label_distribution(const NoiseSpec& spec, int c) {
    validate_spec(spec, c);
    if (const auto* t = std::get_if<TruncatedNormalNoise>(&spec))
        return detail::truncnormal_class_masses(t->mu, t->sigma, c);
    if (const auto* b = std::get_if<BimodalNoise>(&spec)) {
        auto p1 = detail::truncnormal_class_masses(b->mu1, b->sigma1, c);
        auto p2 = detail::truncnormal_class_masses(b->mu2, b->sigma2, c);
        std::vector<double> p(c);
        for (int j = 0; j < c; ++j) p[j] = b->mix * p1[j] + (1.0 - b->mix) * p2[j];
        return p;
    }
    throw ValidationError("noise_label_distribution: pattern has no label distribution");
}

// ---------------------------------------------------------------------------
// Construction

inline TransitionMatrix build_transition(const NoiseSpec& spec, int c) {
    validate_spec(spec, c);
    if (const auto* s = std::get_if<SymmetricNoise>(&spec)) {
        Matrix m(c, c, s->epsilon / static_cast<double>(c - 1));
        for (int i = 0; i < c; ++i) m.at(i, i) = 1.0 - s->epsilon;
        return TransitionMatrix(c, std::move(m));
    }
    if (const auto* p = std::get_if<PartialTargetedNoise>(&spec)) {
        Matrix m(c, c, 0.0);
        for (int i = 0; i < c; ++i) m.at(i, i) = 1.0;
        for (auto [src, tgt] : p->mapping) {
            m.at(src, src) = 1.0 - p->epsilon;
            m.at(src, tgt) += p->epsilon;
        }
        return TransitionMatrix(c, std::move(m));
    }
    if (const auto* cu = std::get_if<CustomNoise>(&spec)) return cu->matrix;

    // truncated normal / bimodal: row i spreads epsilon over the label
    // distribution restricted to j != i, renormalized so rows are stochastic
    const std::vector<double> dist = noise_label_distribution(spec, c);
    const double eps = epsilon_of(spec);
    Matrix m(c, c, 0.0);
    for (int i = 0; i < c; ++i) {
        const double rest = 1.0 - dist[i];
        if (rest <= 0.0) {
            // the whole distribution sits on this row's own class: nothing to
            // corrupt into, keep the row clean
            m.at(i, i) = 1.0;
            continue;
        }
        m.at(i, i) = 1.0 - eps;
        for (int j = 0; j < c; ++j)
            if (j != i) m.at(i, j) = eps * dist[j] / rest;
    }
    return TransitionMatrix(c, std::move(m));
}

/// Prior-weighted probability that a given label differs from the true label.
inline double noise_ratio(const TransitionMatrix& t, const ClassPrior& prior) {
    if (prior.num_classes() != t.num_classes)
        throw ValidationError("noise_ratio: prior/matrix dimension mismatch");
    double keep = 0.0;
    for (int i = 0; i < t.num_classes; ++i) keep += prior.p[i] * t.at(i, i);
    return 1.0 - keep;
}

/// Scales all off-diagonal mass by a single factor so the overall noise ratio
/// becomes epsilon_target, resetting diagonals to keep rows stochastic.
inline TransitionMatrix rescale_transition(const TransitionMatrix& t, const ClassPrior& prior,
                                           double epsilon_target) {
    if (!(epsilon_target >= 0.0 && epsilon_target <= 1.0))
        throw ValidationError("epsilon_target must be in [0,1]");
    const double eps0 = noise_ratio(t, prior);
    if (eps0 <= 0.0) {
        if (epsilon_target == 0.0) return t;
        throw ValidationError("cannot rescale a zero-noise matrix to a positive ratio");
    }
    const double s = epsilon_target / eps0;
    const int c = t.num_classes;
    Matrix m(c, c, 0.0);
    for (int i = 0; i < c; ++i) {
        double off = 0.0;
        for (int j = 0; j < c; ++j) {
            if (j == i) continue;
            double x = s * t.at(i, j);
            if (x > 1.0 + kEntryTol)
                throw InfeasibleError("rescale to " + format_double(epsilon_target) +
                                      " pushes entry (" + std::to_string(i) + "," +
                                      std::to_string(j) + ") to " + format_double(x));
            x = std::min(x, 1.0);
            m.at(i, j) = x;
            off += x;
        }
        const double diag = 1.0 - off;
        if (diag < -kEntryTol)
            throw InfeasibleError("rescale to " + format_double(epsilon_target) +
                                  " makes row " + std::to_string(i) + " exceed unit mass");
        m.at(i, i) = std::max(diag, 0.0);
    }
    return TransitionMatrix(c, std::move(m));
}

// ---------------------------------------------------------------------------
// Plain-text serialization: c lines of c comma-separated reals, no header.

inline void save_transition(const TransitionMatrix& t, const std::string& path) {
    std::string body;
    for (int i = 0; i < t.num_classes; ++i) {
        for (int j = 0; j < t.num_classes; ++j) {
            if (j) body += ',';
            body += format_double(t.at(i, j));
        }
        body += '\n';
    }
    write_text_file(path, body);
}

inline TransitionMatrix load_transition(const std::string& path) {
    std::vector<std::string> lines = read_lines(path);
    while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
    if (lines.empty()) throw ParseError("empty transition file: " + path);
    const std::size_t c = split(lines[0], ',').size();
    if (lines.size() != c) throw ParseError("transition file is not square: " + path);
    Matrix m(c, c);
    for (std::size_t i = 0; i < c; ++i) {
        auto cells = split(lines[i], ',');
        if (cells.size() != c)
            throw ParseError("ragged row " + std::to_string(i) + " in " + path);
        for (std::size_t j = 0; j < c; ++j) m.at(i, j) = parse_double(cells[j]);
    }
    return TransitionMatrix(static_cast<int>(c), std::move(m));  // validates invariants
}

}  // namespace noiselab
