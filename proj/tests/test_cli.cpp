#include <cstdlib>
#include <filesystem>

#include <catch2/catch_amalgamated.hpp>

#include "noiselab/dataset.hpp"
#include "noiselab/transition.hpp"

using namespace noiselab;
using Catch::Approx;

namespace {

namespace fs = std::filesystem;

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

const fs::path work_dir = fs::temp_directory_path() / "noiselab_cli_tests";

CliResult run_cli(const std::string& args) {
    fs::create_directories(work_dir);
    const fs::path out = work_dir / "stdout.txt";
    const fs::path err = work_dir / "stderr.txt";
    const std::string cmd = std::string(NOISELAB_CLI_PATH) + " " + args + " > " + out.string() +
                            " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    auto slurp = [](const fs::path& p) {
        std::string body;
        for (const std::string& line : read_lines(p.string())) body += line + "\n";
        return body;
    };
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_CASE("gen-noise writes a matrix and prints its ratio", "[cli]") {
    const fs::path matrix = work_dir / "sym.csv";
    const CliResult r = run_cli("gen-noise --pattern symmetric --epsilon 0.4 --classes 10 --out " +
                                q(matrix));
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.out.find("noise_ratio 0.4") != std::string::npos);
    const TransitionMatrix t = load_transition(matrix.string());
    REQUIRE(t.num_classes == 10);
    REQUIRE(t.at(0, 0) == Approx(0.6).margin(1e-12));

    SECTION("an invalid ratio exits with code 2") {
        REQUIRE(run_cli("gen-noise --pattern symmetric --epsilon 1.5 --classes 10 --out " +
                        q(work_dir / "bad.csv"))
                    .exit_code == 2);
    }
    SECTION("bimodal matrices put their ridges on the target columns") {
        const fs::path bim = work_dir / "bim.csv";
        REQUIRE(run_cli("gen-noise --pattern bimodal --epsilon 0.5 --classes 10 "
                        "--mu1 2 --sigma1 1 --mu2 7 --sigma2 3 --out " +
                        q(bim))
                    .exit_code == 0);
        const TransitionMatrix t2 = load_transition(bim.string());
        // off-diagonal mass of a far row peaks at the two target classes
        int best = 1;
        for (int j = 1; j < 10; ++j)
            if (j != 9 && t2.at(9, j) > t2.at(9, best)) best = j;
        REQUIRE(best == 2);
        REQUIRE(t2.at(9, 7) > t2.at(9, 6));
        REQUIRE(t2.at(9, 7) > t2.at(9, 8));
    }
}

TEST_CASE("bound curves from patterns and matrix files", "[cli]") {
    const fs::path curve = work_dir / "curve.csv";
    const CliResult r = run_cli(
        "bound --pattern symmetric --classes 10 --grid 0,0.5,1 --out " + q(curve));
    REQUIRE(r.exit_code == 0);
    const auto lines = read_lines(curve.string());
    REQUIRE(lines[0] == "epsilon,accuracy");
    REQUIRE(lines.size() == 4);
    REQUIRE(parse_double(split(lines[1], ',')[1]) == Approx(1.0).margin(1e-12));
    REQUIRE(parse_double(split(lines[2], ',')[1]) == Approx(0.25 + 0.25 / 9.0).margin(1e-9));
    REQUIRE(parse_double(split(lines[3], ',')[1]) == Approx(1.0 / 9.0).margin(1e-9));

    SECTION("a symmetric matrix file reproduces the pattern curve byte for byte") {
        const fs::path matrix = work_dir / "sym_for_bound.csv";
        REQUIRE(run_cli("gen-noise --pattern symmetric --epsilon 0.4 --classes 10 --out " +
                        q(matrix))
                    .exit_code == 0);
        const fs::path curve2 = work_dir / "curve_from_matrix.csv";
        REQUIRE(run_cli("bound --matrix " + q(matrix) + " --grid 0,0.5,1 --out " + q(curve2))
                    .exit_code == 0);
        const auto a = read_lines(curve.string());
        const auto b = read_lines(curve2.string());
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 1; i < a.size(); ++i) {
            const auto ca = split(a[i], ','), cb = split(b[i], ',');
            REQUIRE(parse_double(ca[0]) == Approx(parse_double(cb[0])).margin(1e-12));
            REQUIRE(parse_double(ca[1]) == Approx(parse_double(cb[1])).margin(1e-12));
        }
    }
    SECTION("a one-point grid yields one row") {
        const fs::path one = work_dir / "one.csv";
        REQUIRE(run_cli("bound --pattern symmetric --classes 10 --grid 0.5 --out " + q(one))
                    .exit_code == 0);
        REQUIRE(read_lines(one.string()).size() == 2);
    }
    SECTION("a grid that is infeasible everywhere exits with code 3") {
        const fs::path m = work_dir / "tight.csv";
        write_text_file(m.string(), "0.5,0.5\n0.95,0.05\n");
        REQUIRE(run_cli("bound --matrix " + q(m) + " --grid 1.0 --out " + q(work_dir / "x.csv"))
                    .exit_code == 3);
    }
}

TEST_CASE("corrupt and split drive the data pipeline", "[cli]") {
    const fs::path matrix = work_dir / "pipeline_t.csv";
    REQUIRE(run_cli("gen-noise --pattern symmetric --epsilon 0.3 --classes 5 --out " + q(matrix))
                .exit_code == 0);
    const fs::path data = work_dir / "corrupted.csv";
    const CliResult r = run_cli("corrupt --classes 5 --dim 6 --n-per-class 40 --gen-seed 3 "
                                "--matrix " +
                                q(matrix) + " --seed 9 --out " + q(data));
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.out.find("changed_fraction") != std::string::npos);
    const Dataset ds = load_dataset(data.string(), 5);
    REQUIRE(ds.size() == 200);
    REQUIRE(ds.has_true_labels());

    const fs::path trusted = work_dir / "trusted.csv";
    const fs::path rest = work_dir / "rest.csv";
    REQUIRE(run_cli("split --data " + q(data) + " --classes 5 --fraction 0.1 --seed 4 "
                    "--trusted-out " +
                    q(trusted) + " --rest-out " + q(rest))
                .exit_code == 0);
    REQUIRE(load_dataset(trusted.string(), 5).size() == 20);
    REQUIRE(load_dataset(rest.string(), 5).size() == 180);
}

TEST_CASE("rescale adjusts the ratio or reports infeasibility", "[cli]") {
    const fs::path matrix = work_dir / "rescale_in.csv";
    REQUIRE(run_cli("gen-noise --pattern symmetric --epsilon 0.4 --classes 10 --out " + q(matrix))
                .exit_code == 0);
    const fs::path out = work_dir / "rescale_out.csv";
    const CliResult r = run_cli("rescale --matrix " + q(matrix) + " --target 0.2 --out " + q(out));
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.out.find("noise_ratio 0.2") != std::string::npos);
    REQUIRE(noise_ratio(load_transition(out.string()), ClassPrior::uniform(10)) ==
            Approx(0.2).margin(1e-9));

    SECTION("an impossible target exits with code 3") {
        const fs::path tight = work_dir / "tight2.csv";
        write_text_file(tight.string(), "0.5,0.5\n0.95,0.05\n");
        REQUIRE(run_cli("rescale --matrix " + q(tight) + " --target 1.0 --out " +
                        q(work_dir / "never.csv"))
                    .exit_code == 3);
    }
}

TEST_CASE("train and sweep run experiments from config files", "[cli]") {
    const fs::path conf = work_dir / "exp.conf";
    const fs::path out_dir = work_dir / "run1";
    write_text_file(conf.string(),
                    "classes = 5\n"
                    "dim = 8\n"
                    "n_per_class = 80\n"
                    "test_n_per_class = 40\n"
                    "separation = 8\n"
                    "noise = symmetric\n"
                    "epsilon = 0.0\n"
                    "trusted_fraction = 0.1\n"
                    "methods = ce\n"
                    "seeds = 1\n"
                    "hidden = 32,32\n"
                    "epochs = 25\n"
                    "batch_size = 64\n"
                    "learning_rate = 0.05\n"
                    "out_dir = " +
                        out_dir.string() + "\n");
    const CliResult r = run_cli("train --config " + q(conf));
    REQUIRE(r.exit_code == 0);
    const auto lines = read_lines((out_dir / "report.csv").string());
    REQUIRE(lines[0] == "method,seed,clean_acc,noisy_acc,seconds");
    REQUIRE(lines.size() == 2);
    const auto cells = split(lines[1], ',');
    REQUIRE(cells[0] == "ce");
    REQUIRE(parse_double(cells[2]) >= 0.98);  // clean data, separable blobs
    REQUIRE(fs::exists(out_dir / "summary.json"));

    SECTION("a missing config file exits with code 2") {
        REQUIRE(run_cli("train --config " + q(work_dir / "absent.conf")).exit_code == 2);
    }
    SECTION("sweeps repeat byte-identically apart from timings") {
        const fs::path d1 = work_dir / "sweep1";
        const fs::path d2 = work_dir / "sweep2";
        auto sweep_args = [&](const fs::path& d) {
            return "sweep --config " + q(conf) + " --set epsilon_grid=0.0,0.3 --set seeds=1,2 "
                   "--set epochs=6 --set out_dir=" +
                   d.string();
        };
        REQUIRE(run_cli(sweep_args(d1)).exit_code == 0);
        REQUIRE(run_cli(sweep_args(d2)).exit_code == 0);
        auto strip_seconds = [](const fs::path& p) {
            std::string body;
            for (const std::string& line : read_lines(p.string())) {
                if (line.empty()) continue;
                body += line.substr(0, line.rfind(',')) + "\n";
            }
            return body;
        };
        const auto a = strip_seconds(d1 / "sweep.csv");
        REQUIRE(a == strip_seconds(d2 / "sweep.csv"));
        REQUIRE(std::count(a.begin(), a.end(), '\n') == 1 + 2 * 2);  // header + cells
        const auto s1 = read_lines((d1 / "summary.json").string());
        const auto s2 = read_lines((d2 / "summary.json").string());
        REQUIRE(s1 == s2);
    }
}

TEST_CASE("help is available for every subcommand", "[cli]") {
    REQUIRE(run_cli("--help").exit_code == 0);
    for (const std::string sub :
         {"gen-noise", "bound", "corrupt", "split", "train", "sweep", "rescale"}) {
        const CliResult r = run_cli(sub + " --help");
        REQUIRE(r.exit_code == 0);
        REQUIRE(!r.out.empty());
    }
    SECTION("no subcommand is a usage error") {
        REQUIRE(run_cli("").exit_code == 2);
    }
}
