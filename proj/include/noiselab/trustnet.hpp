#pragma once

#include <chrono>

#include "noiselab/bounds.hpp"
#include "noiselab/losses.hpp"

namespace noiselab {

// ---------------------------------------------------------------------------
// ExpertNet: an amateur classifier and an expert that maps (amateur
// probabilities, given label) to an estimate of the true label. Trained only
// on the trusted set; the expert effectively learns the inverse noise pattern.

struct ExpertNetConfig {
    std::vector<int> amateur_hidden{64, 64};
    std::vector<int> expert_hidden{64, 64, 64};  // three hidden layers + sigmoid output
    TrainConfig optim{.epochs = 40, .batch_size = 32, .learning_rate = 0.05};
};

struct ExpertNetPair {
    Network amateur;  // d -> c softmax
    Network expert;   // 2c -> c, leaky-relu hidden, normalized sigmoid output
    int num_classes = 0;
};

namespace detail {

inline Network make_classifier(int in_dim, const std::vector<int>& hidden, int c,
                               std::uint64_t seed) {
    std::vector<int> sizes{in_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(c);
    std::vector<Activation> acts(hidden.size(), Activation::Relu);
    acts.push_back(Activation::Linear);
    return init_network(sizes, acts, seed, OutputHead::Softmax);
}

inline Network make_expert(int c, const std::vector<int>& hidden, std::uint64_t seed) {
    std::vector<int> sizes{2 * c};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(c);
    std::vector<Activation> acts(hidden.size(), Activation::LeakyRelu);
    acts.push_back(Activation::Sigmoid);
    return init_network(sizes, acts, seed, OutputHead::NormalizedSigmoid);
}

// rows: [amateur probabilities | one-hot given label]
inline Matrix expert_input(const Matrix& amateur_probs, const std::vector<int>& given,
                           std::span<const std::size_t> ids) {
    const std::size_t b = amateur_probs.rows, c = amateur_probs.cols;
    Matrix e(b, 2 * c, 0.0);
    for (std::size_t r = 0; r < b; ++r) {
        const double* p = amateur_probs.row(r);
        double* out = e.row(r);
        std::copy(p, p + c, out);
        out[c + given[ids.empty() ? r : ids[r]]] = 1.0;
    }
    return e;
}

}  // namespace detail

/// Trains the amateur/expert pair on trusted data. Per batch the expert takes
/// one step against the true labels, then the amateur takes one step against
/// the expert's (soft) output distribution.
inline ExpertNetPair train_expertnet(const TrustedSet& trusted, const ExpertNetConfig& cfg,
                                     std::uint64_t seed) {
    const Dataset& ds = trusted.data;
    const int c = ds.num_classes();
    const std::vector<int>& truth = ds.true_labels();
    {
        std::vector<bool> seen(c, false);
        for (int y : truth) seen[y] = true;
        for (int i = 0; i < c; ++i)
            if (!seen[i])
                throw ValidationError("trusted set is missing class " + std::to_string(i));
    }
    cfg.optim.validate();

    ExpertNetPair pair;
    pair.num_classes = c;
    pair.amateur = detail::make_classifier(static_cast<int>(ds.dim()), cfg.amateur_hidden, c,
                                           mix_seed(seed, hash_str("expertnet.amateur")));
    pair.expert =
        detail::make_expert(c, cfg.expert_hidden, mix_seed(seed, hash_str("expertnet.expert")));

    SgdState amateur_state(pair.amateur), expert_state(pair.expert);
    TrainScratch scratch;
    const std::size_t n = ds.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    const std::uint64_t shuffle_root = mix_seed(seed, hash_str("expertnet.shuffle"));

    for (int epoch = 0; epoch < cfg.optim.epochs; ++epoch) {
        Rng rng(mix_seed(shuffle_root, static_cast<std::uint64_t>(epoch)));
        rng.shuffle(order);
        const double lr = cfg.optim.lr_at(epoch);
        for (std::size_t start = 0; start < n; start += cfg.optim.batch_size) {
            const std::size_t bsz = std::min<std::size_t>(cfg.optim.batch_size, n - start);
            Matrix xb(bsz, ds.dim());
            std::vector<int> batch_truth(bsz), batch_given(bsz);
            for (std::size_t r = 0; r < bsz; ++r) {
                const std::size_t k = order[start + r];
                const double* src = ds.features().row(k);
                std::copy(src, src + ds.dim(), xb.row(r));
                batch_truth[r] = truth[k];
                batch_given[r] = ds.given_labels()[k];
            }
            // expert step: (amateur probs, given) -> true label
            Matrix pa = forward(pair.amateur, xb);
            Matrix eb = detail::expert_input(pa, batch_given, {});
            CeSampleLoss expert_loss(batch_truth);
            train_step(pair.expert, eb, {}, expert_loss, cfg.optim, lr, expert_state, scratch);
            // amateur step: follow the updated expert's output distribution
            Matrix ye = forward(pair.expert, eb);
            SoftTargetSampleLoss amateur_loss(ye);
            train_step(pair.amateur, xb, {}, amateur_loss, cfg.optim, lr, amateur_state, scratch);
        }
    }
    return pair;
}

/// Runs the trained pair over a dataset and attaches inferred labels.
inline EnrichedDataset infer_labels(const ExpertNetPair& pair, const Dataset& ds) {
    if (ds.num_classes() != pair.num_classes)
        throw ValidationError("infer_labels: class count mismatch");
    const int c = pair.num_classes;
    EnrichedDataset out;
    out.features = ds.features();
    out.given_labels = ds.given_labels();
    out.num_classes = c;
    out.inferred_probs = Matrix(ds.size(), c);
    out.inferred_labels.resize(ds.size());
    ForwardWorkspace ws;
    const std::size_t chunk = 512;
    for (std::size_t start = 0; start < ds.size(); start += chunk) {
        const std::size_t bsz = std::min(chunk, ds.size() - start);
        Matrix xb(bsz, ds.dim());
        std::copy(ds.features().row(start), ds.features().row(start) + bsz * ds.dim(), xb.row(0));
        Matrix pa = forward(pair.amateur, xb);
        std::vector<std::size_t> ids(bsz);
        for (std::size_t r = 0; r < bsz; ++r) ids[r] = start + r;
        Matrix eb = detail::expert_input(pa, ds.given_labels(), ids);
        Matrix probs = forward(pair.expert, eb);
        std::copy(probs.v.begin(), probs.v.end(), out.inferred_probs.row(start));
        for (std::size_t r = 0; r < bsz; ++r)
            out.inferred_labels[start + r] = argmax_row(probs.row(r), c);
    }
    out.validate();
    return out;
}

// ---------------------------------------------------------------------------
// TrustNet training loop

struct EpochMetrics {
    int epoch = 0;
    double mean_alpha = 0.0;
    double train_loss = 0.0;
    double clean_acc = -1.0;  // -1 when no test set is attached
    double noisy_acc = -1.0;
};

struct TrustNetOptions {
    const Dataset* clean_test = nullptr;
    const Dataset* noisy_test = nullptr;
    std::string alpha_dump_path;  // optional CSV: epoch,sample,alpha,entropy
};

struct TrustNetResult {
    Network net;
    std::vector<EpochMetrics> metrics;
};

/// Trains on the enriched dataset with the per-sample weighted loss. Weights
/// start from the inferred-distribution entropies and follow the network's
/// own prediction entropies thereafter.
inline TrustNetResult train_trustnet(const EnrichedDataset& enriched,
                                     const std::vector<int>& hidden, const TrainConfig& cfg,
                                     std::uint64_t seed, const TrustNetOptions& opts = {}) {
    enriched.validate();
    cfg.validate();
    TrainConfig run_cfg = cfg;
    run_cfg.seed = seed;
    TrustNetResult result;
    result.net = detail::make_classifier(static_cast<int>(enriched.features.cols), hidden,
                                         enriched.num_classes, mix_seed(seed, hash_str("model")));
    AlphaState alpha = AlphaState::init(enriched.inferred_probs);
    RobustSampleLoss loss(enriched.given_labels, enriched.inferred_labels, alpha.alphas);

    std::string alpha_dump;
    if (!opts.alpha_dump_path.empty()) alpha_dump = "epoch,sample,alpha,entropy\n";

    TrainHooks hooks;
    hooks.on_epoch_end = [&](int epoch, double mean_loss) {
        EpochMetrics m;
        m.epoch = epoch;
        m.mean_alpha = alpha.mean_alpha();
        m.train_loss = mean_loss;
        if (opts.clean_test) m.clean_acc = evaluate(result.net, *opts.clean_test, LabelKind::True);
        if (opts.noisy_test) m.noisy_acc = evaluate(result.net, *opts.noisy_test, LabelKind::Given);
        // entropies of the model's current predictions drive the next epoch's weights
        const Matrix probs = predict_probs(result.net, enriched.features);
        std::vector<double> current(probs.rows);
        for (std::size_t k = 0; k < probs.rows; ++k)
            current[k] = entropy(std::span<const double>(probs.row(k), probs.cols), true);
        if (!opts.alpha_dump_path.empty()) {
            for (std::size_t k = 0; k < current.size(); ++k)
                alpha_dump += std::to_string(epoch) + "," + std::to_string(k) + "," +
                              format_double(alpha.alphas[k]) + "," + format_double(current[k]) +
                              "\n";
        }
        result.metrics.push_back(m);
        if (epoch + 1 < run_cfg.epochs) alpha.advance(current);
    };
    run_training(result.net, enriched.features, loss, run_cfg, hooks);
    if (!opts.alpha_dump_path.empty()) write_text_file(opts.alpha_dump_path, alpha_dump);
    return result;
}

// ---------------------------------------------------------------------------
// Method comparison harness

struct MethodParams {
    double scl_alpha = 0.1;
    double scl_beta = 1.0;
    double bootstrap_alpha = 0.95;
    int d2l_k = 20;
};

inline const std::vector<std::string>& known_methods() {
    static const std::vector<std::string> m{"trustnet", "ce", "scl", "d2l", "forward", "bootstrap"};
    return m;
}

/// Trains one baseline method on the untrusted split. `forward` uses the
/// transition matrix measured on the trusted split; `trustnet` is handled by
/// the caller because it needs the expert pair.
inline Network train_baseline(const std::string& method, const Dataset& untrusted,
                              const TrustedSet& trusted, const std::vector<int>& hidden,
                              const TrainConfig& cfg, const MethodParams& params,
                              std::uint64_t seed) {
    TrainConfig run_cfg = cfg;
    run_cfg.seed = seed;
    Network net = detail::make_classifier(static_cast<int>(untrusted.dim()), hidden,
                                          untrusted.num_classes(), mix_seed(seed, hash_str("model")));
    const std::vector<int>& labels = untrusted.given_labels();
    TrainHooks hooks;
    if (method == "ce") {
        CeSampleLoss loss(labels);
        run_training(net, untrusted.features(), loss, run_cfg, hooks);
    } else if (method == "scl") {
        SclSampleLoss loss(labels, params.scl_alpha, params.scl_beta);
        run_training(net, untrusted.features(), loss, run_cfg, hooks);
    } else if (method == "bootstrap") {
        BootstrapSampleLoss loss(labels, params.bootstrap_alpha);
        run_training(net, untrusted.features(), loss, run_cfg, hooks);
    } else if (method == "forward") {
        const TransitionMatrix t = empirical_transition(
            trusted.data.true_labels(), trusted.data.given_labels(), untrusted.num_classes());
        ForwardSampleLoss loss(labels, t);
        run_training(net, untrusted.features(), loss, run_cfg, hooks);
    } else if (method == "d2l") {
        D2LState state(run_cfg.epochs, params.d2l_k);
        D2lSampleLoss loss(labels, state);
        double lid_sum = 0.0;
        std::size_t lid_batches = 0;
        hooks.on_batch = [&](const ForwardWorkspace& ws, std::span<const std::size_t> ids) {
            const Matrix& reps = ws.representations();
            if (static_cast<int>(ids.size()) <= params.d2l_k) return;
            double batch_sum = 0.0;
            for (std::size_t r = 0; r < reps.rows; ++r)
                batch_sum += lid_estimate(std::span<const double>(reps.row(r), reps.cols), reps,
                                          params.d2l_k);
            lid_sum += batch_sum / static_cast<double>(reps.rows);
            ++lid_batches;
        };
        hooks.on_epoch_end = [&](int, double) {
            if (lid_batches > 0) state.push_epoch_lid(lid_sum / static_cast<double>(lid_batches));
            lid_sum = 0.0;
            lid_batches = 0;
        };
        run_training(net, untrusted.features(), loss, run_cfg, hooks);
    } else {
        throw ValidationError("unknown method: " + method);
    }
    return net;
}

struct DataSpec {
    int classes = 10;
    int dim = 16;
    int n_per_class = 1000;
    int test_n_per_class = 200;
    double separation = 8.0;
};

struct ComparisonConfig {
    DataSpec data;
    NoiseSpec noise = SymmetricNoise{0.4};
    double trusted_fraction = 0.1;
    std::vector<std::string> methods{"trustnet", "ce"};
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::vector<int> hidden{128, 128};
    TrainConfig train;
    ExpertNetConfig expert;
    MethodParams params;
};

struct ReportRow {
    double epsilon = 0.0;
    std::string method;
    std::uint64_t seed = 0;
    double clean_acc = 0.0;
    double noisy_acc = 0.0;
    double seconds = 0.0;
};

/// Everything a comparison cell needs, derived deterministically from the
/// master seed, the noise ratio and the repetition index (not the method, so
/// all methods within a repetition see identical data).
struct CellData {
    TransitionMatrix t;
    TrustedSet trusted;
    Dataset untrusted;
    Dataset test_clean;
    Dataset test_noisy;
};

inline CellData make_cell_data(const DataSpec& data, const NoiseSpec& noise,
                               double trusted_fraction, std::uint64_t master_seed, double epsilon,
                               std::size_t rep) {
    const std::uint64_t data_seed =
        mix_seed(mix_seed(mix_seed(master_seed, hash_str("data")), double_bits(epsilon)),
                 static_cast<std::uint64_t>(rep));
    TransitionMatrix t = build_transition(noise, data.classes);
    Dataset clean = gen_blobs(data.classes, data.dim, data.n_per_class, data.separation,
                              mix_seed(data_seed, hash_str("train")));
    Dataset corrupted = corrupt(clean, t, mix_seed(data_seed, hash_str("corrupt")));
    auto [trusted, untrusted] =
        split_trusted(corrupted, trusted_fraction, mix_seed(data_seed, hash_str("split")));
    Dataset test_clean = gen_blobs(data.classes, data.dim, data.test_n_per_class, data.separation,
                                   mix_seed(data_seed, hash_str("test")));
    Dataset test_noisy = corrupt(test_clean, t, mix_seed(data_seed, hash_str("test-corrupt")));
    return CellData{std::move(t), std::move(trusted), std::move(untrusted), std::move(test_clean),
                    std::move(test_noisy)};
}

/// Runs one method on prepared cell data and reports both accuracies.
inline ReportRow run_cell(const ComparisonConfig& cfg, const CellData& cell,
                          const std::string& method, std::uint64_t master_seed, double epsilon,
                          std::size_t rep) {
    const std::uint64_t cell_seed =
        mix_seed(mix_seed(mix_seed(master_seed, hash_str(method)), double_bits(epsilon)),
                 static_cast<std::uint64_t>(rep));
    const auto t0 = std::chrono::steady_clock::now();
    Network net;
    if (method == "trustnet") {
        ExpertNetPair pair =
            train_expertnet(cell.trusted, cfg.expert, mix_seed(cell_seed, hash_str("expertnet")));
        EnrichedDataset enriched = infer_labels(pair, cell.untrusted);
        net = train_trustnet(enriched, cfg.hidden, cfg.train, cell_seed).net;
    } else {
        net = train_baseline(method, cell.untrusted, cell.trusted, cfg.hidden, cfg.train,
                             cfg.params, cell_seed);
    }
    ReportRow row;
    row.epsilon = epsilon;
    row.method = method;
    row.seed = master_seed;
    row.clean_acc = evaluate(net, cell.test_clean, LabelKind::True);
    row.noisy_acc = evaluate(net, cell.test_noisy, LabelKind::Given);
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return row;
}

/// Per-method x per-seed comparison on a single noise setting. Rows come back
/// in (method, seed) order regardless of any parallel execution by callers.
inline std::vector<ReportRow> run_comparison(const ComparisonConfig& cfg) {
    for (const std::string& m : cfg.methods)
        if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end())
            throw ValidationError("unknown method: " + m);
    if (cfg.seeds.empty()) throw ValidationError("need at least one seed");
    const double eps = epsilon_of(cfg.noise);
    std::vector<ReportRow> rows;
    for (std::size_t rep = 0; rep < cfg.seeds.size(); ++rep) {
        const CellData cell = make_cell_data(cfg.data, cfg.noise, cfg.trusted_fraction,
                                             cfg.seeds[rep], eps, rep);
        for (const std::string& method : cfg.methods)
            rows.push_back(run_cell(cfg, cell, method, cfg.seeds[rep], eps, rep));
    }
    std::stable_sort(rows.begin(), rows.end(), [&](const ReportRow& a, const ReportRow& b) {
        auto idx = [&](const std::string& m) {
            return std::find(cfg.methods.begin(), cfg.methods.end(), m) - cfg.methods.begin();
        };
        return idx(a.method) < idx(b.method);
    });
    return rows;
}

}  // namespace noiselab
