#pragma once

#include <string>
#include <vector>

#include "noiselab/transition.hpp"

namespace noiselab {

/// Test accuracy of a label-memorizing network under the corruption process T:
/// sum_i pi_i * sum_j T_ij^2. Prediction and given label are independent draws
/// from the same row, so this is exact for any transition matrix.
inline double general_bound(const TransitionMatrix& t, const ClassPrior& prior) {
    if (prior.num_classes() != t.num_classes)
        throw ValidationError("general_bound: prior/matrix dimension mismatch");
    double acc = 0.0;
    for (int i = 0; i < t.num_classes; ++i) {
        double row = 0.0;
        for (int j = 0; j < t.num_classes; ++j) row += t.at(i, j) * t.at(i, j);
        acc += prior.p[i] * row;
    }
    return acc;
}

namespace detail {
inline void check_distribution(const std::vector<double>& dist) {
    double sum = 0.0;
    for (double x : dist) {
        if (!(x >= 0.0)) throw ValidationError("noise distribution has negative entry");
        sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw ValidationError("noise distribution sums to " + format_double(sum));
}
}  // namespace detail

/// Closed-form accuracy for all-class noise with ratio epsilon and noisy-label
/// distribution `noise_dist`: (1-eps)^2 + eps^2 * sum_j P^2(y=j).
///
/// The sum runs over the full support of the distribution as handed in. For
/// symmetric noise pass the per-row corruption distribution (mass 1/(c-1) on
/// the c-1 alternatives); the result then coincides with general_bound on the
/// constructed matrix. For the parametric asymmetric patterns this is the
/// curve the accuracy figures are drawn from; it ignores the per-row
/// renormalization the exact matrix construction applies.
inline double lemma1_bound(double epsilon, const std::vector<double>& noise_dist, int c) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ValidationError("epsilon must be in [0,1]");
    if (static_cast<int>(noise_dist.size()) != c)
        throw ValidationError("noise distribution must have length c");
    detail::check_distribution(noise_dist);
    double s2 = 0.0;
    for (double x : noise_dist) s2 += x * x;
    return (1.0 - epsilon) * (1.0 - epsilon) + epsilon * epsilon * s2;
}

/// Closed-form accuracy for partial class noise: classes outside `affected`
/// are clean, classes in `affected` follow the all-class form restricted to S.
inline double lemma2_bound(double epsilon, const std::vector<int>& affected,
                           const std::vector<double>& noise_dist_on_s, int c) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ValidationError("epsilon must be in [0,1]");
    if (c < 1) throw ValidationError("need at least one class");
    if (affected.empty()) return 1.0;
    std::vector<bool> in_s(c, false);
    for (int s : affected) {
        if (s < 0 || s >= c) throw ValidationError("affected class out of range");
        if (in_s[s]) throw ValidationError("affected classes must be distinct");
        in_s[s] = true;
    }
    if (static_cast<int>(noise_dist_on_s.size()) != c)
        throw ValidationError("noise distribution must have length c");
    detail::check_distribution(noise_dist_on_s);
    for (int j = 0; j < c; ++j)
        if (!in_s[j] && noise_dist_on_s[j] > 1e-12)
            throw ValidationError("noise distribution must be supported on the affected set");
    double s2 = 0.0;
    for (double x : noise_dist_on_s) s2 += x * x;
    const double ns = static_cast<double>(affected.size());
    const double nu = static_cast<double>(c) - ns;
    const double inner = (1.0 - epsilon) * (1.0 - epsilon) + epsilon * epsilon * s2;
    return nu / c + ns / c * inner;
}

/// Accuracy-vs-epsilon curve for one noise family.
struct BoundCurve {
    std::vector<double> epsilons;
    std::vector<double> accuracies;
    std::string family;
    std::vector<double> skipped;  // requested ratios that were infeasible
};

/// Default grid 0.0, 0.1, ..., 1.0.
inline std::vector<double> default_epsilon_grid() {
    std::vector<double> g;
    for (int i = 0; i <= 10; ++i) g.push_back(i / 10.0);
    return g;
}

inline std::string family_name(const NoiseSpec& spec) {
    if (std::holds_alternative<SymmetricNoise>(spec)) return "symmetric";
    if (std::holds_alternative<TruncatedNormalNoise>(spec)) return "truncnormal";
    if (std::holds_alternative<BimodalNoise>(spec)) return "bimodal";
    if (std::holds_alternative<PartialTargetedNoise>(spec)) return "partial";
    return "custom";
}

/// Sweeps the noise ratio across `epsilons` and returns the theoretical curve.
///
/// Symmetric and partial-targeted matrices have row-independent corruption
/// distributions, so the exact matrix bound is used (it equals the closed
/// forms). The truncated-normal and bimodal curves are evaluated with the
/// closed form on the pattern's global label distribution; the exact matrix
/// route applies a per-row renormalization that shifts these two families'
/// curves slightly, so the closed form is the one to plot. Custom matrices
/// are rescaled to each ratio; infeasible ratios are skipped and reported.
inline BoundCurve bound_sweep(const NoiseSpec& spec, const std::vector<double>& epsilons, int c,
                              const ClassPrior& prior) {
    validate_spec(spec, c);
    BoundCurve curve;
    curve.family = family_name(spec);
    const bool closed_form = std::holds_alternative<TruncatedNormalNoise>(spec) ||
                             std::holds_alternative<BimodalNoise>(spec);
    std::vector<double> dist;
    if (closed_form) dist = noise_label_distribution(spec, c);
    for (double eps : epsilons) {
        try {
            double acc;
            if (closed_form) {
                acc = lemma1_bound(eps, dist, c);
            } else if (const auto* cu = std::get_if<CustomNoise>(&spec)) {
                acc = general_bound(rescale_transition(cu->matrix, prior, eps), prior);
            } else {
                acc = general_bound(build_transition(with_epsilon(spec, eps), c), prior);
            }
            curve.epsilons.push_back(eps);
            curve.accuracies.push_back(acc);
        } catch (const InfeasibleError&) {
            curve.skipped.push_back(eps);
        } catch (const ValidationError&) {
            curve.skipped.push_back(eps);
        }
    }
    if (curve.epsilons.empty())
        throw InfeasibleError("bound_sweep: no feasible noise ratio in the requested grid");
    return curve;
}

inline std::string bound_curve_csv(const BoundCurve& curve) {
    std::string body = "epsilon,accuracy\n";
    for (std::size_t i = 0; i < curve.epsilons.size(); ++i)
        body += format_double(curve.epsilons[i]) + "," + format_double(curve.accuracies[i]) + "\n";
    return body;
}

inline void save_bound_curve(const BoundCurve& curve, const std::string& path) {
    write_text_file(path, bound_curve_csv(curve));
}

}  // namespace noiselab
