#pragma once

#include <algorithm>

#include "noiselab/network.hpp"

namespace noiselab {

// ---------------------------------------------------------------------------
// Scalar losses on probability vectors. Each *_grad variant accumulates the
// derivative of the returned value into `grad` (same floor inside logs), so
// they stay consistent with finite differences of the values.

inline double cross_entropy(std::span<const double> probs, int label) {
    if (label < 0 || label >= static_cast<int>(probs.size()))
        throw ValidationError("cross_entropy: label out of range");
    return -safe_log(probs[label]);
}

inline double cross_entropy_grad(std::span<const double> probs, int label,
                                 std::span<double> grad, double weight = 1.0) {
    if (label < 0 || label >= static_cast<int>(probs.size()))
        throw ValidationError("cross_entropy: label out of range");
    const double p = std::max(probs[label], kProbFloor);
    grad[label] -= weight / p;
    return -weight * std::log(p);
}

/// Shannon entropy in nats; normalized divides by ln c so the result is in [0,1].
inline double entropy(std::span<const double> probs, bool normalized = false) {
    double h = 0.0;
    for (double p : probs)
        if (p > 0.0) h -= p * std::log(p);
    h = std::max(h, 0.0);
    if (normalized && probs.size() > 1) h /= std::log(static_cast<double>(probs.size()));
    return h;
}

// ---------------------------------------------------------------------------
// Dynamic per-sample weights between given and inferred labels.

/// Initial weight: normalized entropy of the inferred class distribution.
/// A confident inference gives alpha 0 (trust the inferred label fully).
inline double alpha_init(std::span<const double> inferred_probs) {
    return entropy(inferred_probs, /*normalized=*/true);
}

/// Scales the previous weight by the relative entropy change and clamps to
/// [0,1]. Held unchanged when the previous entropy is numerically zero.
inline double alpha_update(double alpha_prev, double s_prev, double s_curr) {
    if (s_prev < 1e-8) return alpha_prev;
    const double raw = alpha_prev * (1.0 + (s_curr - s_prev) / s_prev);
    return std::clamp(raw, 0.0, 1.0);
}

/// Weighted cross-entropy against the given and inferred labels.
inline double robust_loss(std::span<const double> probs, int given_label, int inferred_label,
                          double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must be in [0,1]");
    return alpha * cross_entropy(probs, given_label) +
           (1.0 - alpha) * cross_entropy(probs, inferred_label);
}

inline double robust_loss_grad(std::span<const double> probs, int given_label, int inferred_label,
                               double alpha, std::span<double> grad) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must be in [0,1]");
    double l = cross_entropy_grad(probs, given_label, grad, alpha);
    l += cross_entropy_grad(probs, inferred_label, grad, 1.0 - alpha);
    return l;
}

/// Per-sample dynamic weights plus the entropies of the previous epoch.
struct AlphaState {
    std::vector<double> alphas;
    std::vector<double> prev_entropy;
    int epoch = 0;

    static AlphaState init(const Matrix& inferred_probs) {
        AlphaState st;
        st.alphas.resize(inferred_probs.rows);
        st.prev_entropy.resize(inferred_probs.rows);
        for (std::size_t k = 0; k < inferred_probs.rows; ++k) {
            std::span<const double> row(inferred_probs.row(k), inferred_probs.cols);
            st.alphas[k] = alpha_init(row);
            st.prev_entropy[k] = st.alphas[k];  // normalized entropy doubles as the seed value
        }
        return st;
    }

    void advance(const std::vector<double>& current_entropy) {
        for (std::size_t k = 0; k < alphas.size(); ++k)
            alphas[k] = alpha_update(alphas[k], prev_entropy[k], current_entropy[k]);
        prev_entropy = current_entropy;
        ++epoch;
    }

    double mean_alpha() const {
        double s = 0.0;
        for (double a : alphas) s += a;
        return alphas.empty() ? 0.0 : s / static_cast<double>(alphas.size());
    }
};

// ---------------------------------------------------------------------------
// Symmetric cross entropy (reverse term clamps log 0 to A = -4).

inline constexpr double kSclClamp = -4.0;

inline double scl_loss(std::span<const double> probs, int label, double weight_a,
                       double weight_b) {
    if (!(weight_a >= 0.0 && weight_b >= 0.0)) throw ValidationError("scl weights must be >= 0");
    // RCE = -sum_i p_i log(onehot_i) with log 0 := A, so only the off-label mass counts
    const double rce = -kSclClamp * (1.0 - probs[label]);
    return weight_a * cross_entropy(probs, label) + weight_b * rce;
}

inline double scl_loss_grad(std::span<const double> probs, int label, double weight_a,
                            double weight_b, std::span<double> grad) {
    const double l = scl_loss(probs, label, weight_a, weight_b);
    if (weight_a > 0.0) cross_entropy_grad(probs, label, grad, weight_a);
    grad[label] += weight_b * kSclClamp;
    return l;
}

// ---------------------------------------------------------------------------
// Local intrinsic dimensionality (D2L).

/// MLE estimate from the k nearest neighbors of `query` within `batch` rows.
/// Zero distances (the query itself, duplicates) are ignored. When all k
/// nearest neighbors are equidistant the estimate diverges; `cap` is returned.
inline double lid_estimate(std::span<const double> query, const Matrix& batch, int k,
                           double cap = 1e9) {
    if (k < 2) throw ValidationError("lid_estimate: k must be >= 2");
    std::vector<double> dists;
    dists.reserve(batch.rows);
    for (std::size_t r = 0; r < batch.rows; ++r) {
        const double* row = batch.row(r);
        double d2 = 0.0;
        for (std::size_t j = 0; j < batch.cols; ++j) {
            const double diff = row[j] - query[j];
            d2 += diff * diff;
        }
        if (d2 > 0.0) dists.push_back(std::sqrt(d2));
    }
    if (static_cast<int>(dists.size()) < k)
        throw ValidationError("lid_estimate: batch too small for k=" + std::to_string(k));
    std::partial_sort(dists.begin(), dists.begin() + k, dists.end());
    const double r_max = dists[k - 1];
    double mean_log = 0.0;
    for (int i = 0; i < k; ++i) mean_log += std::log(std::max(dists[i], 1e-300) / r_max);
    mean_log /= k;
    if (std::abs(mean_log) < 1e-12) return cap;
    return -1.0 / mean_log;
}

/// Label-interpolation factor exp(-(i/T) * lid_i / lid_min).
inline double d2l_alpha(int epoch, int total_epochs, double lid_epoch, double lid_min_so_far) {
    if (!(lid_min_so_far > 0.0)) throw ValidationError("d2l_alpha: minimum LID must be positive");
    if (total_epochs < 1) throw ValidationError("d2l_alpha: total epochs must be positive");
    const double lambda = static_cast<double>(epoch) / static_cast<double>(total_epochs);
    return std::exp(-lambda * lid_epoch / lid_min_so_far);
}

/// Cross entropy against alpha * onehot(given) + (1-alpha) * onehot(argmax p).
inline double d2l_loss(std::span<const double> probs, int given_label, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must be in [0,1]");
    const int pred = argmax_row(probs.data(), static_cast<int>(probs.size()));
    return alpha * cross_entropy(probs, given_label) + (1.0 - alpha) * cross_entropy(probs, pred);
}

inline double d2l_loss_grad(std::span<const double> probs, int given_label, double alpha,
                            std::span<double> grad) {
    const int pred = argmax_row(probs.data(), static_cast<int>(probs.size()));
    double l = cross_entropy_grad(probs, given_label, grad, alpha);
    l += cross_entropy_grad(probs, pred, grad, 1.0 - alpha);
    return l;
}

/// Tracks per-epoch LID estimates and the interpolation factor they imply.
struct D2LState {
    std::vector<double> lid_history;
    double lid_min = 0.0;
    int total_epochs = 0;
    int k = 20;
    double alpha = 1.0;  // factor to use for the upcoming epoch

    D2LState(int total, int neighbors) : total_epochs(total), k(neighbors) {}

    /// Records epoch `e`'s LID estimate and derives alpha for epoch e+1.
    void push_epoch_lid(double lid) {
        lid_min = lid_history.empty() ? lid : std::min(lid_min, lid);
        lid_history.push_back(lid);
        const int next = static_cast<int>(lid_history.size());
        if (next < total_epochs && lid_min > 0.0)
            alpha = d2l_alpha(next, total_epochs, lid, lid_min);
    }
};

// ---------------------------------------------------------------------------
// Forward correction: -log((T^t p)[given]).

inline double forward_loss(std::span<const double> probs, int given_label,
                           const TransitionMatrix& t) {
    const int c = t.num_classes;
    if (static_cast<int>(probs.size()) != c || given_label < 0 || given_label >= c)
        throw ValidationError("forward_loss: dimension mismatch");
    double q = 0.0;
    for (int i = 0; i < c; ++i) q += t.at(i, given_label) * probs[i];
    return -safe_log(q);
}

inline double forward_loss_grad(std::span<const double> probs, int given_label,
                                const TransitionMatrix& t, std::span<double> grad) {
    const int c = t.num_classes;
    if (static_cast<int>(probs.size()) != c || given_label < 0 || given_label >= c)
        throw ValidationError("forward_loss: dimension mismatch");
    double q = 0.0;
    for (int i = 0; i < c; ++i) q += t.at(i, given_label) * probs[i];
    const double qf = std::max(q, kProbFloor);
    for (int i = 0; i < c; ++i) grad[i] -= t.at(i, given_label) / qf;
    return -std::log(qf);
}

// ---------------------------------------------------------------------------
// Bootstrap: cross entropy against alpha * onehot + (1-alpha) * p. The target
// itself depends on the prediction, and the gradient includes that term.

inline double bootstrap_loss(std::span<const double> probs, int given_label, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must be in [0,1]");
    double l = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double target = (static_cast<int>(i) == given_label ? alpha : 0.0) +
                              (1.0 - alpha) * probs[i];
        if (target > 0.0) l -= target * safe_log(probs[i]);
    }
    return l;
}

inline double bootstrap_loss_grad(std::span<const double> probs, int given_label, double alpha,
                                  std::span<double> grad) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must be in [0,1]");
    double l = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double target = (static_cast<int>(i) == given_label ? alpha : 0.0) +
                              (1.0 - alpha) * probs[i];
        const double pf = std::max(probs[i], kProbFloor);
        const double logp = std::log(pf);
        if (target > 0.0) l -= target * logp;
        grad[i] -= (1.0 - alpha) * logp + target / pf;
    }
    return l;
}

// ---------------------------------------------------------------------------
// SampleLoss adapters used by the training loop.

struct CeSampleLoss final : SampleLoss {
    const std::vector<int>& labels;
    explicit CeSampleLoss(const std::vector<int>& l) : labels(l) {}
    double eval(std::size_t k, std::span<const double> p, std::span<double> g) override {
        return cross_entropy_grad(p, labels[k], g);
    }
};

/// Cross entropy against a soft target row (used for the amateur network).
struct SoftTargetSampleLoss final : SampleLoss {
    const Matrix& targets;
    explicit SoftTargetSampleLoss(const Matrix& t) : targets(t) {}
    double eval(std::size_t k, std::span<const double> p, std::span<double> g) override {
        const double* t = targets.row(k);
        double l = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double pf = std::max(p[i], kProbFloor);
            l -= t[i] * std::log(pf);
            g[i] -= t[i] / pf;
        }
        return l;
    }
};

struct RobustSampleLoss final : SampleLoss {
    const std::vector<int>& given;
    const std::vector<int>& inferred;
    const std::vector<double>& alphas;
    RobustSampleLoss(const std::vector<int>& g, const std::vector<int>& i,
                     const std::vector<double>& a)
        : given(g), inferred(i), alphas(a) {}
    double eval(std::size_t k, std::span<const double> p, std::span<double> g) override {
        return robust_loss_grad(p, given[k], inferred[k], alphas[k], g);
    }
};

struct SclSampleLoss final : SampleLoss {
    const std::vector<int>& labels;
    double weight_a, weight_b;
    SclSampleLoss(const std::vector<int>& l, double a, double b)
        : labels(l), weight_a(a), weight_b(b) {}
    double eval(std::size_t k, std::span<const double> p, std::span<double> g) override {
        return scl_loss_grad(p, labels[k], weight_a, weight_b, g);
    }
};

struct D2lSampleLoss final : SampleLoss {
    const std::vector<int>& labels;
    const D2LState& state;
    D2lSampleLoss(const std::vector<int>& l, const D2LState& s) : labels(l), state(s) {}
    double eval(std::size_t k, std::span<const double> p, std::span<double> g) override {
        return d2l_loss_grad(p, labels[k], state.alpha, g);
    }
};

struct ForwardSampleLoss final : SampleLoss {
    const std::vector<int>& labels;
    TransitionMatrix t;
    ForwardSampleLoss(const std::vector<int>& l, TransitionMatrix m)
        : labels(l), t(std::move(m)) {}
    double eval(std::size_t k, std::span<const double> p, std::span<double> g) override {
        return forward_loss_grad(p, labels[k], t, g);
    }
};

struct BootstrapSampleLoss final : SampleLoss {
    const std::vector<int>& labels;
    double alpha;
    BootstrapSampleLoss(const std::vector<int>& l, double a) : labels(l), alpha(a) {}
    double eval(std::size_t k, std::span<const double> p, std::span<double> g) override {
        return bootstrap_loss_grad(p, labels[k], alpha, g);
    }
};

}  // namespace noiselab
