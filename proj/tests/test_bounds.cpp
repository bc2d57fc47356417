#include <catch2/catch_amalgamated.hpp>

#include "noiselab/bounds.hpp"
#include "test_util.hpp"

using namespace noiselab;
using Catch::Approx;

namespace {

TransitionMatrix random_transition(Rng& rng, int c) {
    Matrix m(c, c);
    for (int i = 0; i < c; ++i) {
        double sum = 0.0;
        for (int j = 0; j < c; ++j) {
            m.at(i, j) = -std::log(1.0 - rng.uniform01());  // exponential -> Dirichlet row
            sum += m.at(i, j);
        }
        for (int j = 0; j < c; ++j) m.at(i, j) /= sum;
    }
    return TransitionMatrix(c, std::move(m));
}

std::vector<double> symmetric_offdiag_distribution(int c) {
    std::vector<double> p(c, 1.0 / static_cast<double>(c - 1));
    p[0] = 0.0;  // the sum of squares is position-independent
    return p;
}

}  // namespace

TEST_CASE("general bound basics", "[bounds]") {
    REQUIRE(general_bound(TransitionMatrix::identity(7), ClassPrior::uniform(7)) ==
            Approx(1.0).margin(1e-12));
    REQUIRE(general_bound(build_transition(SymmetricNoise{0.4}, 10), ClassPrior::uniform(10)) ==
            Approx(0.36 + 0.16 / 9.0).margin(1e-15));
    Matrix m(2, 2, 0.5);
    REQUIRE(general_bound(TransitionMatrix(2, m), ClassPrior::uniform(2)) ==
            Approx(0.5).margin(1e-15));
    REQUIRE_THROWS_AS(general_bound(TransitionMatrix::identity(3), ClassPrior::uniform(4)),
                      ValidationError);
}

TEST_CASE("general bound agrees with a Monte-Carlo simulation", "[bounds]") {
    Rng rng(991);
    for (int trial = 0; trial < 8; ++trial) {
        const int c = 2 + static_cast<int>(rng.uniform_int(5));
        const TransitionMatrix t = random_transition(rng, c);
        const ClassPrior prior = ClassPrior::uniform(c);
        const auto [est, se] = testutil::mc_bound_oracle(t, prior, 200000, rng.bits());
        REQUIRE(std::abs(general_bound(t, prior) - est) <= 3.0 * se + 1e-9);
    }
}

TEST_CASE("lemma 1 closed form", "[bounds]") {
    SECTION("no noise is perfectly learnable") {
        REQUIRE(lemma1_bound(0.0, symmetric_offdiag_distribution(10), 10) == 1.0);
    }
    SECTION("uniform corruption matches the symmetric matrix bound exactly") {
        const double closed = lemma1_bound(0.4, symmetric_offdiag_distribution(10), 10);
        REQUIRE(closed == Approx(0.377778).margin(5e-7));
        const double exact =
            general_bound(build_transition(SymmetricNoise{0.4}, 10), ClassPrior::uniform(10));
        REQUIRE(closed == Approx(exact).margin(1e-12));
    }
    SECTION("a full swap is perfectly learnable as given labels") {
        std::vector<double> point(10, 0.0);
        point[3] = 1.0;
        REQUIRE(lemma1_bound(1.0, point, 10) == Approx(1.0).margin(1e-15));
    }
    SECTION("invalid distributions are rejected") {
        REQUIRE_THROWS_AS(lemma1_bound(0.4, std::vector<double>(10, 0.2), 10), ValidationError);
        REQUIRE_THROWS_AS(lemma1_bound(1.2, symmetric_offdiag_distribution(10), 10),
                          ValidationError);
    }
}

TEST_CASE("lemma 2 closed form", "[bounds]") {
    SECTION("empty affected set means no noise at all") {
        REQUIRE(lemma2_bound(0.7, {}, std::vector<double>(10, 0.0), 10) == 1.0);
    }
    SECTION("five swapped classes at half noise") {
        std::vector<double> point(10, 0.0);
        point[2] = 1.0;
        const double v = lemma2_bound(0.5, {2, 3, 4, 5, 9}, point, 10);
        REQUIRE(v == Approx(0.75).margin(1e-15));
        // cross-check against the exact bound on the constructed matrix
        PartialTargetedNoise spec;
        spec.epsilon = 0.5;
        spec.mapping = {{2, 0}, {3, 1}, {4, 2}, {5, 3}, {9, 4}};
        REQUIRE(general_bound(build_transition(spec, 10), ClassPrior::uniform(10)) ==
                Approx(v).margin(1e-12));
    }
    SECTION("affecting every class reduces to lemma 1 with a point mass") {
        std::vector<double> point(10, 0.0);
        point[4] = 1.0;
        std::vector<int> all(10);
        for (int i = 0; i < 10; ++i) all[i] = i;
        const double v = lemma2_bound(0.4, all, point, 10);
        REQUIRE(v == Approx(0.52).margin(1e-15));
        REQUIRE(v == Approx(lemma1_bound(0.4, point, 10)).margin(1e-15));
    }
    SECTION("distribution must live on the affected set") {
        std::vector<double> off(10, 0.0);
        off[0] = 1.0;
        REQUIRE_THROWS_AS(lemma2_bound(0.5, {2, 3}, off, 10), ValidationError);
    }
}

TEST_CASE("bound sweep over the symmetric family", "[bounds]") {
    const BoundCurve curve =
        bound_sweep(SymmetricNoise{0.0}, {0.0, 0.5, 1.0}, 10, ClassPrior::uniform(10));
    REQUIRE(curve.epsilons == std::vector<double>{0.0, 0.5, 1.0});
    REQUIRE(curve.accuracies[0] == Approx(1.0).margin(1e-15));
    REQUIRE(curve.accuracies[1] == Approx(0.25 + 0.25 / 9.0).margin(1e-12));
    REQUIRE(curve.accuracies[2] == Approx(1.0 / 9.0).margin(1e-12));
}

TEST_CASE("truncated-normal curve dips at 0.7 and recovers", "[bounds]") {
    const BoundCurve curve = bound_sweep(TruncatedNormalNoise{0.0, 1.0, 0.5},
                                         default_epsilon_grid(), 10, ClassPrior::uniform(10));
    REQUIRE(curve.epsilons.size() == 11);
    std::size_t argmin = 0;
    for (std::size_t i = 1; i < curve.accuracies.size(); ++i)
        if (curve.accuracies[i] < curve.accuracies[argmin]) argmin = i;
    REQUIRE(curve.epsilons[argmin] == Approx(0.7));
    REQUIRE(curve.accuracies.back() > curve.accuracies[argmin]);
    REQUIRE(curve.accuracies.front() == Approx(1.0).margin(1e-15));
}

TEST_CASE("asymmetric curves are non-monotonic", "[bounds]") {
    for (const NoiseSpec spec :
         {NoiseSpec{TruncatedNormalNoise{0.0, 1.0, 0.5}},
          NoiseSpec{BimodalNoise{0.0, 2.0, 1.0, 7.0, 3.0, 0.5}}}) {
        const BoundCurve curve =
            bound_sweep(spec, default_epsilon_grid(), 10, ClassPrior::uniform(10));
        const double min_acc =
            *std::min_element(curve.accuracies.begin(), curve.accuracies.end());
        REQUIRE(curve.accuracies.back() > min_acc);
    }
}

TEST_CASE("custom family sweeps through rescaling and reports infeasible points", "[bounds]") {
    Matrix m(2, 2);
    m.at(0, 0) = 0.5;
    m.at(0, 1) = 0.5;
    m.at(1, 0) = 0.95;
    m.at(1, 1) = 0.05;
    const CustomNoise spec{TransitionMatrix(2, m)};
    const BoundCurve curve =
        bound_sweep(NoiseSpec{spec}, default_epsilon_grid(), 2, ClassPrior::uniform(2));
    REQUIRE(!curve.skipped.empty());          // high ratios push an entry past 1
    REQUIRE(curve.accuracies[0] == Approx(1.0).margin(1e-15));  // rescaled to zero noise
    for (double acc : curve.accuracies) {
        REQUIRE(acc >= 0.0);
        REQUIRE(acc <= 1.0);
    }

    SECTION("a grid with no feasible point is an error") {
        REQUIRE_THROWS_AS(bound_sweep(NoiseSpec{spec}, {1.0}, 2, ClassPrior::uniform(2)),
                          InfeasibleError);
    }
}

TEST_CASE("every family is perfectly learnable at zero noise", "[bounds]") {
    PartialTargetedNoise partial;
    partial.epsilon = 0.0;
    partial.mapping = {{1, 0}};
    for (const NoiseSpec spec :
         {NoiseSpec{SymmetricNoise{0.0}}, NoiseSpec{TruncatedNormalNoise{0.0, 1.0, 0.5}},
          NoiseSpec{BimodalNoise{0.0, 2.0, 1.0, 7.0, 3.0, 0.5}}, NoiseSpec{partial}}) {
        const BoundCurve curve = bound_sweep(spec, {0.0}, 10, ClassPrior::uniform(10));
        REQUIRE(curve.accuracies[0] == Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("bound curve CSV shape", "[bounds]") {
    const BoundCurve curve =
        bound_sweep(SymmetricNoise{0.0}, {0.0, 0.5}, 10, ClassPrior::uniform(10));
    const std::string csv = bound_curve_csv(curve);
    REQUIRE(csv.rfind("epsilon,accuracy\n", 0) == 0);
    REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("bounds stay in the unit interval for random patterns", "[bounds]") {
    Rng rng(777);
    for (int trial = 0; trial < 40; ++trial) {
        const int c = 2 + static_cast<int>(rng.uniform_int(20));
        NoiseSpec spec;
        if (trial % 2 == 0)
            spec = TruncatedNormalNoise{0.0, rng.uniform(0.0, c - 1.0), rng.uniform(0.3, 4.0)};
        else
            spec = BimodalNoise{0.0,
                                rng.uniform(0.0, c - 1.0),
                                rng.uniform(0.3, 4.0),
                                rng.uniform(0.0, c - 1.0),
                                rng.uniform(0.3, 4.0),
                                rng.uniform01()};
        const BoundCurve curve =
            bound_sweep(spec, default_epsilon_grid(), c, ClassPrior::uniform(c));
        for (double acc : curve.accuracies) {
            REQUIRE(acc >= 0.0);
            REQUIRE(acc <= 1.0);
        }
        REQUIRE(curve.accuracies.front() == Approx(1.0).margin(1e-12));
    }
}
