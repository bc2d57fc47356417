#pragma once

#include <atomic>
#include <memory>
#include <optional>

#include "noiselab/rng.hpp"
#include "noiselab/transition.hpp"

namespace noiselab {

/// Samples with given (possibly corrupted) labels and optional true labels.
///
/// Reads of the true labels are counted per instance so tests can prove that a
/// training path never touches them. Copies share the counter of the instance
/// they were copied from; freshly constructed datasets start at zero.
class Dataset {
public:
    Dataset() : reads_(std::make_shared<std::atomic<std::uint64_t>>(0)) {}

    Dataset(Matrix features, std::vector<int> given_labels,
            std::optional<std::vector<int>> true_labels, int num_classes)
        : features_(std::move(features)),
          given_(std::move(given_labels)),
          true_(std::move(true_labels)),
          num_classes_(num_classes),
          reads_(std::make_shared<std::atomic<std::uint64_t>>(0)) {
        validate();
    }

    std::size_t size() const { return given_.size(); }
    std::size_t dim() const { return features_.cols; }
    int num_classes() const { return num_classes_; }

    const Matrix& features() const { return features_; }
    const std::vector<int>& given_labels() const { return given_; }

    bool has_true_labels() const { return true_.has_value(); }

    const std::vector<int>& true_labels() const {
        if (!true_) throw ValidationError("dataset has no true labels");
        reads_->fetch_add(1, std::memory_order_relaxed);
        return *true_;
    }

    /// Number of times true_labels() was called on this instance (and copies).
    std::uint64_t true_label_reads() const { return reads_->load(std::memory_order_relaxed); }

private:
    void validate() const {
        if (num_classes_ < 2) throw ValidationError("dataset needs at least 2 classes");
        if (features_.rows != given_.size())
            throw ValidationError("feature/label row count mismatch");
        if (true_ && true_->size() != given_.size())
            throw ValidationError("true label count mismatch");
        if (!features_.all_finite()) throw ValidationError("dataset features must be finite");
        auto check = [this](const std::vector<int>& labels) {
            for (int y : labels)
                if (y < 0 || y >= num_classes_)
                    throw ValidationError("label out of range: " + std::to_string(y));
        };
        check(given_);
        if (true_) check(*true_);
    }

    Matrix features_;
    std::vector<int> given_;
    std::optional<std::vector<int>> true_;
    int num_classes_ = 0;
    std::shared_ptr<std::atomic<std::uint64_t>> reads_;
};

/// Expert-validated subset: every sample carries both given and true labels.
struct TrustedSet {
    Dataset data;

    explicit TrustedSet(Dataset d) : data(std::move(d)) {
        if (!data.has_true_labels())
            throw ValidationError("trusted set requires true labels for every sample");
    }
};

/// Untrusted samples extended with inferred labels and their probabilities.
struct EnrichedDataset {
    Matrix features;
    std::vector<int> given_labels;
    std::vector<int> inferred_labels;
    Matrix inferred_probs;  // N x c, rows sum to 1
    int num_classes = 0;

    std::size_t size() const { return given_labels.size(); }

    void validate() const {
        const std::size_t n = given_labels.size();
        if (features.rows != n || inferred_labels.size() != n || inferred_probs.rows != n ||
            inferred_probs.cols != static_cast<std::size_t>(num_classes))
            throw ValidationError("enriched dataset shape mismatch");
        for (std::size_t k = 0; k < n; ++k) {
            const double* p = inferred_probs.row(k);
            double sum = 0.0;
            int arg = 0;
            for (int j = 0; j < num_classes; ++j) {
                sum += p[j];
                if (p[j] > p[arg]) arg = j;
            }
            if (std::abs(sum - 1.0) > 1e-6)
                throw ValidationError("inferred probability row does not sum to 1");
            if (arg != inferred_labels[k])
                throw ValidationError("inferred label disagrees with argmax of its row");
        }
    }
};

// ---------------------------------------------------------------------------
// Synthetic data

namespace detail {

// Class means depend only on (c, d, separation) so that train and test draws
// with different seeds describe the same classification task.
inline Matrix class_means(int c, int d, double separation) {
    Matrix means(c, d, 0.0);
    if (c <= d) {
        const double a = separation / std::sqrt(2.0);
        for (int i = 0; i < c; ++i) means.at(i, i) = a;
        return means;
    }
    Rng rng(mix_seed(hash_str("noiselab.class_means"),
                     mix_seed(static_cast<std::uint64_t>(c) << 32 | static_cast<std::uint64_t>(d),
                              double_bits(separation))));
    double radius = separation * std::pow(static_cast<double>(c), 1.0 / d) * 2.0;
    int placed = 0;
    int attempts = 0;
    while (placed < c) {
        std::vector<double> cand(d);
        for (double& x : cand) x = rng.uniform(-radius, radius);
        bool ok = true;
        for (int i = 0; i < placed && ok; ++i) {
            double dist2 = 0.0;
            for (int k = 0; k < d; ++k) {
                const double diff = cand[k] - means.at(i, k);
                dist2 += diff * diff;
            }
            ok = dist2 >= separation * separation;
        }
        if (ok) {
            for (int k = 0; k < d; ++k) means.at(placed, k) = cand[k];
            ++placed;
            attempts = 0;
        } else if (++attempts > 1000) {
            radius *= 1.5;
            attempts = 0;
        }
    }
    return means;
}

}  // namespace detail

/// Isotropic unit-variance Gaussian clusters, one per class, means at mutual
/// distance >= separation. Labels are clean (given == true).
inline Dataset gen_blobs(int c, int d, int n_per_class, double separation, std::uint64_t seed) {
    if (c < 2 || d < 2 || n_per_class < 1 || !(separation > 0.0))
        throw ValidationError("gen_blobs: need c>=2, d>=2, n_per_class>=1, separation>0");
    const Matrix means = detail::class_means(c, d, separation);
    const std::size_t n = static_cast<std::size_t>(c) * n_per_class;
    Matrix x(n, d);
    std::vector<int> labels(n);
    std::size_t row = 0;
    for (int cls = 0; cls < c; ++cls) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(cls)));
        for (int k = 0; k < n_per_class; ++k, ++row) {
            labels[row] = cls;
            double* out = x.row(row);
            for (int j = 0; j < d; ++j) out[j] = means.at(cls, j) + rng.normal();
        }
    }
    std::vector<int> given = labels;
    return Dataset(std::move(x), std::move(given), std::move(labels), c);
}

/// Redraws each given label from the transition row of its true label. The
/// draw for sample k depends only on (seed, k, true_k), so other samples never
/// influence it.
inline Dataset corrupt(const Dataset& ds, const TransitionMatrix& t, std::uint64_t seed) {
    if (!ds.has_true_labels()) throw ValidationError("corrupt: dataset has no true labels");
    if (t.num_classes != ds.num_classes())
        throw ValidationError("corrupt: matrix/dataset class mismatch");
    const std::vector<int>& truth = ds.true_labels();
    std::vector<int> given(ds.size());
    for (std::size_t k = 0; k < ds.size(); ++k) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(k)));
        const double* row = t.rows.row(truth[k]);
        given[k] = static_cast<int>(
            rng.categorical(std::span<const double>(row, static_cast<std::size_t>(t.num_classes))));
    }
    return Dataset(ds.features(), std::move(given), truth, ds.num_classes());
}

/// Stratified-by-true-class random split. The trusted part keeps true labels;
/// the remainder also retains them (for evaluation only).
inline std::pair<TrustedSet, Dataset> split_trusted(const Dataset& ds, double fraction,
                                                    std::uint64_t seed) {
    if (!ds.has_true_labels()) throw ValidationError("split_trusted: dataset has no true labels");
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ValidationError("split_trusted: fraction must be in (0,1)");
    const std::vector<int>& truth = ds.true_labels();
    const int c = ds.num_classes();
    std::vector<std::vector<std::size_t>> by_class(c);
    for (std::size_t k = 0; k < truth.size(); ++k) by_class[truth[k]].push_back(k);

    std::vector<bool> take(ds.size(), false);
    for (int cls = 0; cls < c; ++cls) {
        auto& idx = by_class[cls];
        const long want = std::lround(fraction * static_cast<double>(idx.size()));
        if (want < 1)
            throw ValidationError("split_trusted: fraction leaves class " + std::to_string(cls) +
                                  " without trusted samples");
        if (want >= static_cast<long>(idx.size()))
            throw ValidationError("split_trusted: fraction leaves class " + std::to_string(cls) +
                                  " without untrusted samples");
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(cls)));
        rng.shuffle(idx);
        for (long k = 0; k < want; ++k) take[idx[k]] = true;
    }

    auto extract = [&](bool selected) {
        std::vector<std::size_t> rows;
        for (std::size_t k = 0; k < ds.size(); ++k)
            if (take[k] == selected) rows.push_back(k);
        Matrix x(rows.size(), ds.dim());
        std::vector<int> given(rows.size()), tru(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const double* src = ds.features().row(rows[r]);
            std::copy(src, src + ds.dim(), x.row(r));
            given[r] = ds.given_labels()[rows[r]];
            tru[r] = truth[rows[r]];
        }
        return Dataset(std::move(x), std::move(given), std::move(tru), c);
    };
    return {TrustedSet(extract(true)), extract(false)};
}

/// Row i = frequency of given labels among samples whose true label is i.
inline TransitionMatrix empirical_transition(const std::vector<int>& true_labels,
                                             const std::vector<int>& given_labels, int c) {
    if (true_labels.size() != given_labels.size())
        throw ValidationError("empirical_transition: label vectors differ in length");
    Matrix counts(c, c, 0.0);
    std::vector<double> totals(c, 0.0);
    for (std::size_t k = 0; k < true_labels.size(); ++k) {
        const int i = true_labels[k], j = given_labels[k];
        if (i < 0 || i >= c || j < 0 || j >= c)
            throw ValidationError("empirical_transition: label out of range");
        counts.at(i, j) += 1.0;
        totals[i] += 1.0;
    }
    for (int i = 0; i < c; ++i) {
        if (totals[i] == 0.0)
            throw ValidationError("empirical_transition: class " + std::to_string(i) +
                                  " missing among true labels");
        for (int j = 0; j < c; ++j) counts.at(i, j) /= totals[i];
    }
    return TransitionMatrix(c, std::move(counts));
}

// ---------------------------------------------------------------------------
// CSV: header f0,...,f{d-1},given,true(optional; empty cells when withheld)

inline void save_dataset(const Dataset& ds, const std::string& path) {
    std::string body;
    for (std::size_t j = 0; j < ds.dim(); ++j) body += "f" + std::to_string(j) + ",";
    body += "given,true\n";
    const bool has_true = ds.has_true_labels();
    const std::vector<int>* truth = has_true ? &ds.true_labels() : nullptr;
    for (std::size_t k = 0; k < ds.size(); ++k) {
        const double* row = ds.features().row(k);
        for (std::size_t j = 0; j < ds.dim(); ++j) body += format_double(row[j]) + ",";
        body += std::to_string(ds.given_labels()[k]) + ",";
        if (has_true) body += std::to_string((*truth)[k]);
        body += '\n';
    }
    write_text_file(path, body);
}

/// Loads a dataset CSV. If num_classes is 0 the class count is inferred from
/// the largest label.
inline Dataset load_dataset(const std::string& path, int num_classes = 0) {
    std::vector<std::string> lines = read_lines(path);
    while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
    if (lines.empty()) throw ParseError("empty dataset file: " + path);
    auto header = split(lines[0], ',');
    std::size_t d = 0;
    while (d < header.size() && header[d] == "f" + std::to_string(d)) ++d;
    if (d == 0 || d >= header.size() || trim(header[d]) != "given")
        throw ParseError("dataset header must be f0,...,given[,true]: " + path);
    const bool true_col = d + 1 < header.size() && trim(header[d + 1]) == "true";

    const std::size_t n = lines.size() - 1;
    Matrix x(n, d);
    std::vector<int> given(n);
    std::vector<int> truth;
    bool any_true = false, all_true = true;
    if (true_col) truth.resize(n, 0);
    for (std::size_t k = 0; k < n; ++k) {
        auto cells = split(lines[k + 1], ',');
        if (cells.size() != header.size())
            throw ParseError("row " + std::to_string(k + 1) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(header.size()));
        for (std::size_t j = 0; j < d; ++j) x.at(k, j) = parse_double(cells[j]);
        given[k] = static_cast<int>(parse_long(cells[d]));
        if (true_col) {
            const std::string cell = trim(cells[d + 1]);
            if (cell.empty()) {
                all_true = false;
            } else {
                truth[k] = static_cast<int>(parse_long(cell));
                any_true = true;
            }
        }
    }
    if (any_true && !all_true)
        throw ParseError("true column must be fully present or fully empty: " + path);
    int c = num_classes;
    if (c == 0) {
        for (int y : given) c = std::max(c, y + 1);
        if (any_true)
            for (int y : truth) c = std::max(c, y + 1);
        c = std::max(c, 2);
    }
    std::optional<std::vector<int>> tl;
    if (any_true) tl = std::move(truth);
    return Dataset(std::move(x), std::move(given), std::move(tl), c);
}

}  // namespace noiselab
