#include <filesystem>

#include <catch2/catch_amalgamated.hpp>

#include "noiselab/transition.hpp"
#include "test_util.hpp"

using namespace noiselab;
using Catch::Approx;

TEST_CASE("symmetric transition matrix", "[transition]") {
    const TransitionMatrix t = build_transition(SymmetricNoise{0.4}, 10);
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j)
            REQUIRE(t.at(i, j) == Approx(i == j ? 0.6 : 0.4 / 9.0).margin(1e-15));
}

TEST_CASE("partial targeted transition matrix", "[transition]") {
    PartialTargetedNoise spec;
    spec.epsilon = 0.5;
    spec.mapping = {{2, 0}, {3, 1}, {4, 2}, {5, 3}, {9, 4}};
    const TransitionMatrix t = build_transition(spec, 10);
    for (auto [s, tgt] : spec.mapping) {
        REQUIRE(t.at(s, s) == Approx(0.5).margin(1e-15));
        REQUIRE(t.at(s, tgt) == Approx(0.5).margin(1e-15));
    }
    for (int i : {0, 1, 6, 7, 8}) {
        REQUIRE(t.at(i, i) == 1.0);
        for (int j = 0; j < 10; ++j)
            if (j != i) REQUIRE(t.at(i, j) == 0.0);
    }
}

TEST_CASE("custom matrix passes through verbatim", "[transition]") {
    const TransitionMatrix id = TransitionMatrix::identity(4);
    const TransitionMatrix t = build_transition(CustomNoise{id}, 4);
    REQUIRE(t.rows.v == id.rows.v);
    REQUIRE(noise_ratio(t, ClassPrior::uniform(4)) == 0.0);
}

TEST_CASE("truncated normal label distribution", "[transition]") {
    SECTION("degenerate sigma concentrates on the target class") {
        const auto p = noise_label_distribution(TruncatedNormalNoise{0.4, 1.0, 1e-3}, 10);
        REQUIRE(p[1] == Approx(1.0).margin(1e-12));
        for (int j : {0, 2, 3, 9}) REQUIRE(p[j] == Approx(0.0).margin(1e-12));
    }
    SECTION("sigma 0.5 is unimodal at the target and normalized") {
        const auto p = noise_label_distribution(TruncatedNormalNoise{0.4, 1.0, 0.5}, 10);
        double sum = 0.0;
        for (double x : p) sum += x;
        REQUIRE(sum == Approx(1.0).margin(1e-12));
        REQUIRE(testutil::list_argmax(p) == 1);
        REQUIRE(testutil::local_maxima(p) == std::vector<int>{1});
    }
    SECTION("matches the definition written out independently") {
        const auto p = noise_label_distribution(TruncatedNormalNoise{0.4, 1.0, 0.5}, 10);
        const auto oracle = testutil::truncnormal_bins_oracle(1.0, 0.5, 10);
        for (int j = 0; j < 10; ++j) REQUIRE(p[j] == Approx(oracle[j]).margin(1e-12));
    }
}

TEST_CASE("bimodal label distribution has peaks at both targets", "[transition]") {
    const BimodalNoise spec{0.4, 2.0, 1.0, 7.0, 3.0, 0.5};
    const auto p = noise_label_distribution(spec, 10);
    // oracle: mix the two component distributions computed independently
    const auto c1 = testutil::truncnormal_bins_oracle(2.0, 1.0, 10);
    const auto c2 = testutil::truncnormal_bins_oracle(7.0, 3.0, 10);
    std::vector<double> expected(10);
    for (int j = 0; j < 10; ++j) expected[j] = 0.5 * c1[j] + 0.5 * c2[j];
    for (int j = 0; j < 10; ++j) REQUIRE(p[j] == Approx(expected[j]).margin(1e-12));
    REQUIRE(testutil::local_maxima(p) == std::vector<int>{2, 7});
}

TEST_CASE("label distribution rejects unsupported patterns", "[transition]") {
    REQUIRE_THROWS_AS(noise_label_distribution(SymmetricNoise{0.3}, 10), ValidationError);
    PartialTargetedNoise p;
    p.epsilon = 0.3;
    p.mapping = {{0, 1}};
    REQUIRE_THROWS_AS(noise_label_distribution(NoiseSpec{p}, 10), ValidationError);
}

TEST_CASE("spec validation", "[transition]") {
    REQUIRE_THROWS_AS(build_transition(SymmetricNoise{1.5}, 10), ValidationError);
    REQUIRE_THROWS_AS(build_transition(TruncatedNormalNoise{0.4, 1.0, -1.0}, 10), ValidationError);
    PartialTargetedNoise dup;
    dup.epsilon = 0.2;
    dup.mapping = {{2, 0}, {2, 1}};
    REQUIRE_THROWS_AS(build_transition(NoiseSpec{dup}, 10), ValidationError);
    PartialTargetedNoise self;
    self.epsilon = 0.2;
    self.mapping = {{2, 2}};
    REQUIRE_THROWS_AS(build_transition(NoiseSpec{self}, 10), ValidationError);
}

TEST_CASE("noise ratio", "[transition]") {
    REQUIRE(noise_ratio(TransitionMatrix::identity(5), ClassPrior::uniform(5)) == 0.0);
    REQUIRE(noise_ratio(build_transition(SymmetricNoise{0.4}, 10), ClassPrior::uniform(10)) ==
            Approx(0.4).margin(1e-15));
    Matrix m(2, 2);
    m.at(0, 0) = 0.9;
    m.at(0, 1) = 0.1;
    m.at(1, 0) = 0.7;
    m.at(1, 1) = 0.3;
    REQUIRE(noise_ratio(TransitionMatrix(2, m), ClassPrior::uniform(2)) ==
            Approx(0.4).margin(1e-12));
    REQUIRE_THROWS_AS(noise_ratio(TransitionMatrix::identity(3), ClassPrior::uniform(2)),
                      ValidationError);
}

TEST_CASE("rescale transition", "[transition]") {
    const ClassPrior uniform10 = ClassPrior::uniform(10);
    const TransitionMatrix sym = build_transition(SymmetricNoise{0.4}, 10);

    SECTION("rescaling to the current ratio is the identity") {
        const TransitionMatrix same = rescale_transition(sym, uniform10, 0.4);
        for (std::size_t i = 0; i < sym.rows.v.size(); ++i)
            REQUIRE(same.rows.v[i] == Approx(sym.rows.v[i]).margin(1e-12));
    }
    SECTION("halving the ratio halves the off-diagonals") {
        const TransitionMatrix half = rescale_transition(sym, uniform10, 0.2);
        for (int i = 0; i < 10; ++i)
            for (int j = 0; j < 10; ++j)
                REQUIRE(half.at(i, j) == Approx(i == j ? 0.8 : 0.2 / 9.0).margin(1e-12));
        REQUIRE(noise_ratio(half, uniform10) == Approx(0.2).margin(1e-9));
    }
    SECTION("rescaling composes") {
        const TransitionMatrix via =
            rescale_transition(rescale_transition(sym, uniform10, 0.7), uniform10, 0.25);
        const TransitionMatrix direct = rescale_transition(sym, uniform10, 0.25);
        for (std::size_t i = 0; i < via.rows.v.size(); ++i)
            REQUIRE(via.rows.v[i] == Approx(direct.rows.v[i]).margin(1e-9));
    }
    SECTION("entries may land exactly on the [0,1] boundary") {
        Matrix m(2, 2);
        m.at(0, 0) = 0.2;
        m.at(0, 1) = 0.8;
        m.at(1, 0) = 0.8;
        m.at(1, 1) = 0.2;
        const TransitionMatrix scaled =
            rescale_transition(TransitionMatrix(2, m), ClassPrior::uniform(2), 0.9);
        REQUIRE(scaled.at(0, 1) == Approx(0.9).margin(1e-12));
        REQUIRE(scaled.at(0, 0) == Approx(0.1).margin(1e-12));
    }
    SECTION("an entry pushed past 1 is infeasible") {
        Matrix m(2, 2);
        m.at(0, 0) = 0.5;
        m.at(0, 1) = 0.5;
        m.at(1, 0) = 0.95;
        m.at(1, 1) = 0.05;
        REQUIRE_THROWS_AS(rescale_transition(TransitionMatrix(2, m), ClassPrior::uniform(2), 1.0),
                          InfeasibleError);
    }
    SECTION("zero-noise input cannot reach a positive ratio") {
        REQUIRE_THROWS_AS(rescale_transition(TransitionMatrix::identity(4), ClassPrior::uniform(4), 0.3),
                          ValidationError);
    }
}

TEST_CASE("transition matrix file round trip", "[transition]") {
    const auto path = std::filesystem::temp_directory_path() / "noiselab_t.csv";
    const TransitionMatrix t = build_transition(SymmetricNoise{0.4}, 10);
    save_transition(t, path.string());
    const TransitionMatrix back = load_transition(path.string());
    REQUIRE(back.num_classes == 10);
    for (std::size_t i = 0; i < t.rows.v.size(); ++i)
        REQUIRE(back.rows.v[i] == Approx(t.rows.v[i]).margin(1e-12));

    SECTION("row summing to 0.9 violates the invariant") {
        write_text_file(path.string(), "0.5,0.4\n0.5,0.5\n");
        REQUIRE_THROWS_AS(load_transition(path.string()), ValidationError);
    }
    SECTION("ragged file is a parse error") {
        write_text_file(path.string(), "0.5,0.5,0.0\n0.5,0.5\n0.2,0.3,0.5\n");
        REQUIRE_THROWS_AS(load_transition(path.string()), ParseError);
    }
    std::filesystem::remove(path);
}

TEST_CASE("random specs build valid matrices with the requested ratio", "[transition]") {
    Rng rng(20240811);
    for (int trial = 0; trial < 60; ++trial) {
        const int c = 2 + static_cast<int>(rng.uniform_int(99));  // [2, 100]
        const double eps = rng.uniform01();
        NoiseSpec spec;
        switch (trial % 4) {
            case 0: spec = SymmetricNoise{eps}; break;
            case 1:
                spec = TruncatedNormalNoise{eps, rng.uniform(0.0, c - 1.0), rng.uniform(0.3, 5.0)};
                break;
            case 2:
                spec = BimodalNoise{eps,
                                    rng.uniform(0.0, c - 1.0),
                                    rng.uniform(0.3, 5.0),
                                    rng.uniform(0.0, c - 1.0),
                                    rng.uniform(0.3, 5.0),
                                    rng.uniform01()};
                break;
            default: {
                PartialTargetedNoise p;
                p.epsilon = eps;
                std::vector<int> classes(c);
                for (int i = 0; i < c; ++i) classes[i] = i;
                rng.shuffle(classes);
                const int ns = 1 + static_cast<int>(rng.uniform_int(c / 2 > 0 ? c / 2 : 1));
                for (int i = 0; i < ns; ++i) {
                    int tgt = classes[i];
                    while (tgt == classes[i])
                        tgt = static_cast<int>(rng.uniform_int(c));
                    p.mapping.emplace_back(classes[i], tgt);
                }
                spec = p;
            }
        }
        const TransitionMatrix t = build_transition(spec, c);
        REQUIRE_NOTHROW(t.validate());
        const ClassPrior uniform = ClassPrior::uniform(c);
        const double ratio = noise_ratio(t, uniform);
        if (const auto* p = std::get_if<PartialTargetedNoise>(&spec)) {
            const double expected = eps * static_cast<double>(p->mapping.size()) / c;
            REQUIRE(ratio == Approx(expected).margin(1e-9));
        } else {
            REQUIRE(ratio == Approx(eps).margin(1e-9));
        }
    }
}

TEST_CASE("shifting the target class shifts the distribution argmax", "[transition]") {
    const int c = 12;
    for (int mu = 3; mu <= 6; ++mu) {
        const auto p = noise_label_distribution(
            TruncatedNormalNoise{0.4, static_cast<double>(mu), 1.0}, c);
        REQUIRE(testutil::list_argmax(p) == mu);
    }
}
