// noiselab command-line front end.
//
// Subcommands: gen-noise, bound, corrupt, split, train, sweep, rescale.
// Exit codes: 0 ok, 2 invalid input/config, 3 infeasible request, 4 training
// divergence. Relative output paths resolve under $NOISELAB_OUT when set.

#include <iostream>

#include <CLI11.hpp>

#include "noiselab/experiment.hpp"

using namespace noiselab;

namespace {

struct PatternFlags {
    std::string pattern = "symmetric";
    int classes = 10;
    double epsilon = 0.4;
    double mu = 1.0, sigma = 0.5;
    double mu1 = 2.0, sigma1 = 1.0, mu2 = 7.0, sigma2 = 3.0, mix = 0.5;
    std::string mapping = "2:0,3:1,4:2,5:3,9:4";
    std::string matrix_file;

    void add_to(CLI::App* cmd, bool with_matrix) {
        cmd->add_option("--pattern", pattern, "symmetric|truncnormal|bimodal|partial|custom");
        cmd->add_option("--classes", classes, "number of classes");
        cmd->add_option("--epsilon", epsilon, "noise ratio in [0,1]");
        cmd->add_option("--mu", mu, "truncated-normal target class");
        cmd->add_option("--sigma", sigma, "truncated-normal spread");
        cmd->add_option("--mu1", mu1, "first bimodal peak");
        cmd->add_option("--sigma1", sigma1, "first bimodal spread");
        cmd->add_option("--mu2", mu2, "second bimodal peak");
        cmd->add_option("--sigma2", sigma2, "second bimodal spread");
        cmd->add_option("--mix", mix, "bimodal mixture weight of the first peak");
        cmd->add_option("--map", mapping, "partial-targeted pairs, e.g. 2:0,3:1");
        if (with_matrix) cmd->add_option("--matrix", matrix_file, "transition matrix CSV input");
    }

    NoiseSpec spec() const {
        ExperimentConfig cfg;
        cfg.noise_name = matrix_file.empty() ? pattern : "custom";
        cfg.epsilon = epsilon;
        cfg.mu = mu;
        cfg.sigma = sigma;
        cfg.mu1 = mu1;
        cfg.sigma1 = sigma1;
        cfg.mu2 = mu2;
        cfg.sigma2 = sigma2;
        cfg.mix = mix;
        cfg.mapping = mapping;
        cfg.matrix_file = matrix_file;
        return cfg.make_noise_spec();
    }
};

std::filesystem::path out_path(const std::string& p) {
    std::filesystem::path path = resolve_out_dir(p);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    return path;
}

std::vector<double> parse_grid(const std::string& s) {
    if (s.empty()) return default_epsilon_grid();
    return detail::parse_double_list(s);
}

int cmd_gen_noise(const PatternFlags& flags, const std::string& out) {
    const TransitionMatrix t = build_transition(flags.spec(), flags.classes);
    save_transition(t, out_path(out).string());
    std::cout << "noise_ratio " << format_short(noise_ratio(t, ClassPrior::uniform(t.num_classes)))
              << "\n"
              << "matrix " << out << "\n";
    return 0;
}

int cmd_bound(const PatternFlags& flags, const std::string& grid_str, const std::string& out) {
    const NoiseSpec spec = flags.spec();
    const int c = flags.matrix_file.empty()
                      ? flags.classes
                      : std::get<CustomNoise>(spec).matrix.num_classes;
    const BoundCurve curve = bound_sweep(spec, parse_grid(grid_str), c, ClassPrior::uniform(c));
    for (double eps : curve.skipped)
        std::cerr << "infeasible epsilon " << format_double(eps) << " skipped\n";
    save_bound_curve(curve, out_path(out).string());
    std::cout << "curve " << out << "\n";
    return 0;
}

int cmd_rescale(const std::string& matrix_file, double target, const std::string& prior_file,
                const std::string& out) {
    const TransitionMatrix t = load_transition(matrix_file);
    ClassPrior prior = ClassPrior::uniform(t.num_classes);
    if (!prior_file.empty()) {
        auto lines = read_lines(prior_file);
        std::vector<double> p;
        for (const std::string& line : lines)
            for (const std::string& cell : split(line, ','))
                if (!trim(cell).empty()) p.push_back(parse_double(cell));
        prior = ClassPrior(p);
    }
    const TransitionMatrix scaled = rescale_transition(t, prior, target);
    save_transition(scaled, out_path(out).string());
    std::cout << "noise_ratio " << format_short(noise_ratio(scaled, prior)) << "\n"
              << "matrix " << out << "\n";
    return 0;
}

struct GenDataFlags {
    int classes = 10, dim = 16, n_per_class = 1000;
    double separation = 8.0;
    std::uint64_t seed = 1;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--classes", classes);
        cmd->add_option("--dim", dim);
        cmd->add_option("--n-per-class", n_per_class);
        cmd->add_option("--separation", separation);
        cmd->add_option("--gen-seed", seed, "seed for generating blobs when --data is absent");
    }
};

Dataset obtain_dataset(const std::string& data_file, const GenDataFlags& gen, int classes) {
    if (!data_file.empty()) return load_dataset(data_file, classes);
    return gen_blobs(gen.classes, gen.dim, gen.n_per_class, gen.separation, gen.seed);
}

int cmd_corrupt(const std::string& data_file, const GenDataFlags& gen,
                const std::string& matrix_file, std::uint64_t seed, const std::string& out) {
    const TransitionMatrix t = load_transition(matrix_file);
    const Dataset ds = obtain_dataset(data_file, gen, t.num_classes);
    const Dataset corrupted = corrupt(ds, t, seed);
    save_dataset(corrupted, out_path(out).string());
    const auto& truth = corrupted.true_labels();
    std::size_t changed = 0;
    for (std::size_t k = 0; k < corrupted.size(); ++k)
        if (corrupted.given_labels()[k] != truth[k]) ++changed;
    std::cout << "changed_fraction "
              << format_short(static_cast<double>(changed) / corrupted.size()) << "\n"
              << "dataset " << out << "\n";
    return 0;
}

int cmd_split(const std::string& data_file, int classes, double fraction, std::uint64_t seed,
              const std::string& trusted_out, const std::string& rest_out) {
    const Dataset ds = load_dataset(data_file, classes);
    auto [trusted, rest] = split_trusted(ds, fraction, seed);
    save_dataset(trusted.data, out_path(trusted_out).string());
    save_dataset(rest, out_path(rest_out).string());
    std::cout << "trusted " << trusted_out << " (" << trusted.data.size() << " samples)\n"
              << "untrusted " << rest_out << " (" << rest.size() << " samples)\n";
    return 0;
}

ExperimentConfig load_config_with_overrides(const std::string& config_file,
                                            const std::vector<std::string>& overrides) {
    ExperimentConfig cfg = load_experiment_config(config_file);
    for (const std::string& kv : overrides) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos) throw ParseError("--set expects key=value, got: " + kv);
        apply_config_entry(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    cfg.finalize();
    return cfg;
}

int cmd_train(const std::string& config_file, const std::vector<std::string>& overrides) {
    ExperimentConfig cfg = load_config_with_overrides(config_file, overrides);
    cfg.epsilon_grid.clear();  // single setting
    const SweepResult result = run_sweep(cfg);
    const std::filesystem::path dir = resolve_out_dir(cfg.out_dir);
    write_report_artifacts(dir, result.rows, /*with_epsilon=*/false);
    std::cout << "report " << (dir / "report.csv").string() << "\n"
              << "summary " << (dir / "summary.json").string() << "\n";
    return 0;
}

int cmd_sweep(const std::string& config_file, const std::vector<std::string>& overrides) {
    ExperimentConfig cfg = load_config_with_overrides(config_file, overrides);
    if (cfg.epsilon_grid.empty()) cfg.epsilon_grid = default_epsilon_grid();
    const SweepResult result = run_sweep(cfg);
    for (double eps : result.skipped_epsilons)
        std::cerr << "infeasible epsilon " << format_double(eps) << " skipped\n";
    const std::filesystem::path dir = resolve_out_dir(cfg.out_dir);
    write_report_artifacts(dir, result.rows, /*with_epsilon=*/true);
    std::cout << "report " << (dir / "sweep.csv").string() << "\n"
              << "summary " << (dir / "summary.json").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"label-noise laboratory: transition matrices, accuracy bounds, robust training"};
    app.require_subcommand(1);

    PatternFlags gen_flags;
    std::string gen_out = "transition.csv";
    CLI::App* gen = app.add_subcommand("gen-noise", "build a transition matrix and save it as CSV");
    gen_flags.add_to(gen, /*with_matrix=*/false);
    gen->add_option("--out", gen_out, "output matrix path");

    PatternFlags bound_flags;
    std::string bound_grid, bound_out = "bound.csv";
    CLI::App* bound = app.add_subcommand("bound", "theoretical accuracy curve over noise ratios");
    bound_flags.add_to(bound, /*with_matrix=*/true);
    bound->add_option("--grid", bound_grid, "comma-separated ratios (default 0,0.1,...,1)");
    bound->add_option("--out", bound_out, "output curve path");

    std::string cor_data, cor_matrix, cor_out = "corrupted.csv";
    std::uint64_t cor_seed = 1;
    GenDataFlags cor_gen;
    CLI::App* cor = app.add_subcommand("corrupt", "redraw labels through a transition matrix");
    cor->add_option("--data", cor_data, "input dataset CSV (generated when omitted)");
    cor_gen.add_to(cor);
    cor->add_option("--matrix", cor_matrix, "transition matrix CSV")->required();
    cor->add_option("--seed", cor_seed);
    cor->add_option("--out", cor_out);

    std::string split_data, split_trusted_out = "trusted.csv", split_rest_out = "untrusted.csv";
    int split_classes = 0;
    double split_fraction = 0.1;
    std::uint64_t split_seed = 1;
    CLI::App* split_cmd = app.add_subcommand("split", "stratified trusted/untrusted split");
    split_cmd->add_option("--data", split_data)->required();
    split_cmd->add_option("--classes", split_classes, "class count (inferred when 0)");
    split_cmd->add_option("--fraction", split_fraction);
    split_cmd->add_option("--seed", split_seed);
    split_cmd->add_option("--trusted-out", split_trusted_out);
    split_cmd->add_option("--rest-out", split_rest_out);

    std::string train_config, sweep_config;
    std::vector<std::string> train_sets, sweep_sets;
    CLI::App* train = app.add_subcommand("train", "run the configured methods once and report");
    train->add_option("--config", train_config, "experiment config file")->required();
    train->add_option("--set", train_sets, "override config keys, e.g. --set epochs=10");
    CLI::App* sweep = app.add_subcommand("sweep", "run the comparison across the epsilon grid");
    sweep->add_option("--config", sweep_config, "experiment config file")->required();
    sweep->add_option("--set", sweep_sets, "override config keys");

    std::string res_matrix, res_prior, res_out = "rescaled.csv";
    double res_target = 0.4;
    CLI::App* res = app.add_subcommand("rescale", "scale a matrix to a target noise ratio");
    res->add_option("--matrix", res_matrix)->required();
    res->add_option("--target", res_target)->required();
    res->add_option("--prior", res_prior, "prior CSV (uniform when omitted)");
    res->add_option("--out", res_out);

    try {
        app.parse(argc, argv);
        if (gen->parsed()) return cmd_gen_noise(gen_flags, gen_out);
        if (bound->parsed()) return cmd_bound(bound_flags, bound_grid, bound_out);
        if (cor->parsed()) return cmd_corrupt(cor_data, cor_gen, cor_matrix, cor_seed, cor_out);
        if (split_cmd->parsed())
            return cmd_split(split_data, split_classes, split_fraction, split_seed,
                             split_trusted_out, split_rest_out);
        if (train->parsed()) return cmd_train(train_config, train_sets);
        if (sweep->parsed()) return cmd_sweep(sweep_config, sweep_sets);
        if (res->parsed()) return cmd_rescale(res_matrix, res_target, res_prior, res_out);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const InfeasibleError& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return 3;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return 4;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
