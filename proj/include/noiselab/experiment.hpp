#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "noiselab/trustnet.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace noiselab {

/// Experiment description: dataset, noise family, sweep grid, methods, seeds
/// and optimizer settings. Loaded from a key=value file; flags override keys.
struct ExperimentConfig {
    ComparisonConfig cmp;
    std::string noise_name = "symmetric";
    std::vector<double> epsilon_grid;  // sweep only; empty = single epsilon
    int workers = 1;
    std::string out_dir = ".";
    std::string matrix_file;  // custom noise input

    double epsilon = 0.4, mu = 1.0, sigma = 0.5;
    double mu1 = 2.0, sigma1 = 1.0, mu2 = 7.0, sigma2 = 3.0, mix = 0.5;
    std::string mapping = "2:0,3:1,4:2,5:3,9:4";

    void finalize() {
        cmp.noise = make_noise_spec();
        if (cmp.expert.amateur_hidden.empty()) cmp.expert.amateur_hidden = cmp.hidden;
    }

    NoiseSpec make_noise_spec() const {
        if (noise_name == "symmetric") return SymmetricNoise{epsilon};
        if (noise_name == "truncnormal") return TruncatedNormalNoise{epsilon, mu, sigma};
        if (noise_name == "bimodal") return BimodalNoise{epsilon, mu1, sigma1, mu2, sigma2, mix};
        if (noise_name == "partial") {
            PartialTargetedNoise p;
            p.epsilon = epsilon;
            for (const std::string& pair : split(mapping, ',')) {
                auto st = split(pair, ':');
                if (st.size() != 2) throw ParseError("mapping entries must be source:target");
                p.mapping.emplace_back(static_cast<int>(parse_long(st[0])),
                                       static_cast<int>(parse_long(st[1])));
            }
            return p;
        }
        if (noise_name == "custom") {
            if (matrix_file.empty()) throw ValidationError("custom noise needs matrix_file");
            return CustomNoise{load_transition(matrix_file)};
        }
        throw ValidationError("unknown noise pattern: " + noise_name);
    }
};

namespace detail {

inline std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    for (const std::string& tok : split(s, ','))
        if (!trim(tok).empty()) out.push_back(static_cast<int>(parse_long(tok)));
    return out;
}

inline std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    for (const std::string& tok : split(s, ','))
        if (!trim(tok).empty()) out.push_back(parse_double(tok));
    return out;
}

}  // namespace detail

/// Applies one key=value setting; unknown keys raise a validation error.
inline void apply_config_entry(ExperimentConfig& cfg, const std::string& key,
                               const std::string& value) {
    auto as_int = [&] { return static_cast<int>(parse_long(value)); };
    auto as_double = [&] { return parse_double(value); };
    if (key == "classes") cfg.cmp.data.classes = as_int();
    else if (key == "dim") cfg.cmp.data.dim = as_int();
    else if (key == "n_per_class") cfg.cmp.data.n_per_class = as_int();
    else if (key == "test_n_per_class") cfg.cmp.data.test_n_per_class = as_int();
    else if (key == "separation") cfg.cmp.data.separation = as_double();
    else if (key == "noise") cfg.noise_name = trim(value);
    else if (key == "epsilon") cfg.epsilon = as_double();
    else if (key == "mu") cfg.mu = as_double();
    else if (key == "sigma") cfg.sigma = as_double();
    else if (key == "mu1") cfg.mu1 = as_double();
    else if (key == "sigma1") cfg.sigma1 = as_double();
    else if (key == "mu2") cfg.mu2 = as_double();
    else if (key == "sigma2") cfg.sigma2 = as_double();
    else if (key == "mix") cfg.mix = as_double();
    else if (key == "mapping") cfg.mapping = trim(value);
    else if (key == "matrix_file") cfg.matrix_file = trim(value);
    else if (key == "trusted_fraction") cfg.cmp.trusted_fraction = as_double();
    else if (key == "methods") {
        cfg.cmp.methods.clear();
        for (const std::string& m : split(value, ','))
            if (!trim(m).empty()) cfg.cmp.methods.push_back(trim(m));
    } else if (key == "seeds") {
        cfg.cmp.seeds.clear();
        for (const std::string& s : split(value, ','))
            if (!trim(s).empty()) cfg.cmp.seeds.push_back(static_cast<std::uint64_t>(parse_long(s)));
    }
    else if (key == "hidden") cfg.cmp.hidden = detail::parse_int_list(value);
    else if (key == "epochs") cfg.cmp.train.epochs = as_int();
    else if (key == "batch_size") cfg.cmp.train.batch_size = as_int();
    else if (key == "learning_rate") cfg.cmp.train.learning_rate = as_double();
    else if (key == "momentum") cfg.cmp.train.momentum = as_double();
    else if (key == "weight_decay") cfg.cmp.train.weight_decay = as_double();
    else if (key == "lr_decay_every") cfg.cmp.train.lr_decay_every = as_int();
    else if (key == "lr_decay_factor") cfg.cmp.train.lr_decay_factor = as_double();
    else if (key == "expert_epochs") cfg.cmp.expert.optim.epochs = as_int();
    else if (key == "expert_batch_size") cfg.cmp.expert.optim.batch_size = as_int();
    else if (key == "expert_learning_rate") cfg.cmp.expert.optim.learning_rate = as_double();
    else if (key == "expert_hidden") cfg.cmp.expert.expert_hidden = detail::parse_int_list(value);
    else if (key == "amateur_hidden") cfg.cmp.expert.amateur_hidden = detail::parse_int_list(value);
    else if (key == "scl_alpha") cfg.cmp.params.scl_alpha = as_double();
    else if (key == "scl_beta") cfg.cmp.params.scl_beta = as_double();
    else if (key == "bootstrap_alpha") cfg.cmp.params.bootstrap_alpha = as_double();
    else if (key == "d2l_k") cfg.cmp.params.d2l_k = as_int();
    else if (key == "epsilon_grid") cfg.epsilon_grid = detail::parse_double_list(value);
    else if (key == "workers") cfg.workers = as_int();
    else if (key == "out_dir") cfg.out_dir = trim(value);
    else throw ValidationError("unknown config key: " + key);
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    ExperimentConfig cfg;
    for (const std::string& raw : read_lines(path)) {
        std::string line = raw;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("config line is not key = value: " + raw);
        apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

/// Output root for relative paths: $NOISELAB_OUT when set, else the cwd.
inline std::filesystem::path resolve_out_dir(const std::string& out_dir) {
    std::filesystem::path p(out_dir);
    if (p.is_absolute()) return p;
    const char* root = std::getenv("NOISELAB_OUT");
    return root ? std::filesystem::path(root) / p : p;
}

// ---------------------------------------------------------------------------
// Sweep execution

inline void run_parallel(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    workers = std::max(1, std::min<int>(workers, static_cast<int>(n)));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mutex;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
#ifdef _OPENMP
            omp_set_num_threads(1);  // cells are the unit of parallelism here
#endif
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::scoped_lock lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

struct SweepResult {
    std::vector<ReportRow> rows;
    std::vector<double> skipped_epsilons;  // infeasible for custom matrices
};

/// Noise spec at a given ratio; custom matrices are rescaled, the parametric
/// families just substitute epsilon.
inline NoiseSpec spec_at_epsilon(const NoiseSpec& base, double eps, int classes) {
    if (const auto* cu = std::get_if<CustomNoise>(&base))
        return CustomNoise{rescale_transition(cu->matrix, ClassPrior::uniform(classes), eps)};
    return with_epsilon(base, eps);
}

/// Runs method x seed cells for every ratio in the grid (or the single
/// configured ratio) on a bounded worker pool.
inline SweepResult run_sweep(const ExperimentConfig& cfg) {
    for (const std::string& m : cfg.cmp.methods)
        if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end())
            throw ValidationError("unknown method: " + m);
    if (cfg.cmp.seeds.empty()) throw ValidationError("need at least one seed");

    std::vector<double> grid = cfg.epsilon_grid;
    if (grid.empty()) grid.push_back(cfg.epsilon);

    SweepResult result;
    struct Cell {
        double epsilon;
        NoiseSpec noise;
        std::size_t rep;
        std::string method;
    };
    std::vector<Cell> cells;
    for (double eps : grid) {
        NoiseSpec at;
        try {
            at = spec_at_epsilon(cfg.cmp.noise, eps, cfg.cmp.data.classes);
        } catch (const InfeasibleError&) {
            result.skipped_epsilons.push_back(eps);
            continue;
        }
        for (std::size_t rep = 0; rep < cfg.cmp.seeds.size(); ++rep)
            for (const std::string& m : cfg.cmp.methods) cells.push_back({eps, at, rep, m});
    }
    if (cells.empty()) throw InfeasibleError("sweep: no feasible noise ratio");

    result.rows.resize(cells.size());
    run_parallel(cells.size(), cfg.workers, [&](std::size_t i) {
        const Cell& cell = cells[i];
        const CellData data = make_cell_data(cfg.cmp.data, cell.noise, cfg.cmp.trusted_fraction,
                                             cfg.cmp.seeds[cell.rep], cell.epsilon, cell.rep);
        result.rows[i] = run_cell(cfg.cmp, data, cell.method, cfg.cmp.seeds[cell.rep],
                                  cell.epsilon, cell.rep);
    });
    return result;
}

// ---------------------------------------------------------------------------
// Artifacts

inline std::string report_csv(const std::vector<ReportRow>& rows, bool with_epsilon) {
    std::string body = with_epsilon ? "epsilon,method,seed,clean_acc,noisy_acc,seconds\n"
                                    : "method,seed,clean_acc,noisy_acc,seconds\n";
    for (const ReportRow& r : rows) {
        if (with_epsilon) body += format_double(r.epsilon) + ",";
        body += r.method + "," + std::to_string(r.seed) + "," + format_double(r.clean_acc) + "," +
                format_double(r.noisy_acc) + "," + format_double(r.seconds) + "\n";
    }
    return body;
}

/// Mean/stddev per (epsilon, method); timing is deliberately left out so the
/// summary is reproducible byte for byte.
inline nlohmann::json summarize_report(const std::vector<ReportRow>& rows) {
    std::map<std::pair<double, std::string>, std::vector<const ReportRow*>> groups;
    for (const ReportRow& r : rows) groups[{r.epsilon, r.method}].push_back(&r);
    nlohmann::json out;
    out["results"] = nlohmann::json::array();
    for (const auto& [key, members] : groups) {
        auto stats = [&](auto getter) {
            double mean = 0.0;
            for (const ReportRow* r : members) mean += getter(*r);
            mean /= static_cast<double>(members.size());
            double var = 0.0;
            for (const ReportRow* r : members) {
                const double d = getter(*r) - mean;
                var += d * d;
            }
            var = members.size() > 1 ? var / static_cast<double>(members.size() - 1) : 0.0;
            return std::pair<double, double>(mean, std::sqrt(var));
        };
        const auto [cm, cs] = stats([](const ReportRow& r) { return r.clean_acc; });
        const auto [nm, ns] = stats([](const ReportRow& r) { return r.noisy_acc; });
        nlohmann::json entry;
        entry["epsilon"] = key.first;
        entry["method"] = key.second;
        entry["clean_mean"] = cm;
        entry["clean_std"] = cs;
        entry["noisy_mean"] = nm;
        entry["noisy_std"] = ns;
        entry["runs"] = members.size();
        out["results"].push_back(entry);
    }
    return out;
}

/// Writes through a temp file so readers never observe a partial aggregate.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& body) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    write_text_file(tmp.string(), body);
    std::filesystem::rename(tmp, path);
}

inline void write_report_artifacts(const std::filesystem::path& dir,
                                   const std::vector<ReportRow>& rows, bool with_epsilon) {
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / (with_epsilon ? "sweep.csv" : "report.csv"),
                      report_csv(rows, with_epsilon));
    write_file_atomic(dir / "summary.json", summarize_report(rows).dump(2) + "\n");
}

}  // namespace noiselab
