#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include "tsk/svm.hpp"
#include "test_util.hpp"

using namespace tsk;

namespace {

using testutil::make_gram;
using testutil::random_normalized_psd;

// Dual objective: sum alpha - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij.
double dual_objective(const std::vector<double>& alpha, const std::vector<int>& y,
                      const GramMatrix& K) {
    const std::size_t n = alpha.size();
    double lin = 0, quad = 0;
    for (std::size_t i = 0; i < n; ++i) {
        lin += alpha[i];
        for (std::size_t j = 0; j < n; ++j) {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * K.values[i * n + j];
        }
    }
    return lin - 0.5 * quad;
}

std::vector<double> gradient_of(const std::vector<double>& alpha, const std::vector<int>& y,
                                const GramMatrix& K) {
    const std::size_t n = alpha.size();
    std::vector<double> g(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            g[i] += alpha[j] * y[j] * K.values[i * n + j];
        }
    }
    return g;
}

// Bias by the same rule the solver uses: average over interior support
// vectors, else the midpoint of the feasible interval.
double reference_bias(const std::vector<double>& alpha, const std::vector<int>& y,
                      const std::vector<double>& cap, const std::vector<double>& grad) {
    const std::size_t n = alpha.size();
    double sum = 0;
    int count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double slack = 1e-8 * std::max(1.0, cap[i]);
        if (alpha[i] > slack && alpha[i] < cap[i] - slack) {
            sum += y[i] - grad[i];
            ++count;
        }
    }
    if (count > 0) return sum / count;
    double up = -std::numeric_limits<double>::infinity();
    double low = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        const double val = y[i] - grad[i];
        const bool in_up = (y[i] == 1 && alpha[i] < cap[i]) || (y[i] == -1 && alpha[i] > 0);
        const bool in_low = (y[i] == -1 && alpha[i] < cap[i]) || (y[i] == 1 && alpha[i] > 0);
        if (in_up) up = std::max(up, val);
        if (in_low) low = std::min(low, val);
    }
    if (std::isfinite(up) && std::isfinite(low)) return 0.5 * (up + low);
    if (std::isfinite(up)) return up;
    if (std::isfinite(low)) return low;
    return 0.0;
}

struct LatticeSolution {
    double objective = -std::numeric_limits<double>::infinity();
    std::vector<double> alpha;
};

// Exhaustive feasible maximization of the dual on a step lattice: the last
// coordinate is solved from the equality constraint, so every evaluated point
// satisfies sum alpha_i y_i = 0 exactly.
LatticeSolution dual_lattice_best(const GramMatrix& K, const std::vector<int>& y,
                                  const std::vector<double>& cap, double step) {
    const std::size_t n = y.size();
    LatticeSolution best;
    std::vector<double> alpha(n, 0.0);
    auto rec = [&](auto&& self, std::size_t i, double ay) -> void {
        if (i == n - 1) {
            const double last = -static_cast<double>(y[i]) * ay;
            if (last < -1e-12 || last > cap[i] + 1e-12) return;
            alpha[i] = std::min(cap[i], std::max(0.0, last));
            const double obj = dual_objective(alpha, y, K);
            if (obj > best.objective) {
                best.objective = obj;
                best.alpha = alpha;
            }
            return;
        }
        const int steps = static_cast<int>(std::floor(cap[i] / step + 1e-9));
        for (int s = 0; s <= steps; ++s) {
            alpha[i] = s * step;
            self(self, i + 1, ay + alpha[i] * y[i]);
        }
        if (steps * step < cap[i] - 1e-12) {
            alpha[i] = cap[i];
            self(self, i + 1, ay + alpha[i] * y[i]);
        }
        alpha[i] = 0.0;
    };
    rec(rec, 0, 0.0);
    return best;
}

// Margin-style KKT violation, computed from scratch.
double worst_kkt_violation(const std::vector<double>& alpha, const std::vector<int>& y,
                           const std::vector<double>& cap, const GramMatrix& K, double bias) {
    const auto grad = gradient_of(alpha, y, K);
    double worst = 0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        const double margin = y[i] * (grad[i] + bias);
        const double slack = 1e-8 * std::max(1.0, cap[i]);
        double viol;
        if (alpha[i] <= slack) viol = std::max(0.0, 1.0 - margin);
        else if (alpha[i] >= cap[i] - slack) viol = std::max(0.0, margin - 1.0);
        else viol = std::abs(margin - 1.0);
        worst = std::max(worst, viol);
    }
    return worst;
}

std::vector<int> random_balanced_labels(std::mt19937_64& rng, int n) {
    std::vector<int> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = i % 2 == 0 ? 1 : -1;
    std::shuffle(y.begin(), y.end(), rng);
    return y;
}

} // namespace

TEST_CASE("two orthogonal points give the hard-margin closed form") {
    auto K = make_gram({{1.0, 0.0}, {0.0, 1.0}});
    const std::vector<int> y = {1, -1};
    SvmTrainConfig cfg;
    cfg.C = 10.0;
    const auto model = train_weighted_svm(K, y, std::vector<double>{1.0, 1.0}, cfg);

    CHECK(model.converged);
    CHECK(model.alpha[0] == Catch::Approx(1.0).margin(1e-9));
    CHECK(model.alpha[1] == Catch::Approx(1.0).margin(1e-9));
    CHECK(model.bias == Catch::Approx(0.0).margin(1e-9));
    REQUIRE(model.support_indices.size() == 2);

    // f on the training points from the dual coefficients.
    const auto grad = gradient_of(model.alpha, y, K);
    CHECK(grad[0] + model.bias == Catch::Approx(1.0).margin(1e-9));
    CHECK(grad[1] + model.bias == Catch::Approx(-1.0).margin(1e-9));
}

TEST_CASE("solver matches a brute-force dual lattice on tiny problems") {
    std::mt19937_64 rng(103);
    for (int trial = 0; trial < 8; ++trial) {
        const int n = 3 + static_cast<int>(rng() % 4); // 3..6
        auto K = random_normalized_psd(rng, n);
        auto y = random_balanced_labels(rng, n);
        SvmTrainConfig cfg;
        cfg.C = 1.0;
        cfg.tolerance = 1e-6;
        const std::vector<double> beta(static_cast<std::size_t>(n), 1.0);
        const auto model = train_weighted_svm(K, y, beta, cfg);
        REQUIRE(model.converged);

        const std::vector<double> cap(static_cast<std::size_t>(n), cfg.C);
        const auto lattice = dual_lattice_best(K, y, cap, n >= 6 ? 0.1 : 0.05);
        const double smo_obj = dual_objective(model.alpha, y, K);
        INFO("n=" << n << " smo=" << smo_obj << " lattice=" << lattice.objective);
        CHECK(smo_obj >= lattice.objective - 1e-3);

        // Sign agreement on the training points between the two solutions.
        const auto g_smo = gradient_of(model.alpha, y, K);
        const auto g_lat = gradient_of(lattice.alpha, y, K);
        const double b_lat = reference_bias(lattice.alpha, y, cap, g_lat);
        for (int i = 0; i < n; ++i) {
            const double f_smo = g_smo[static_cast<std::size_t>(i)] + model.bias;
            const double f_lat = g_lat[static_cast<std::size_t>(i)] + b_lat;
            if (std::abs(f_smo) > 1e-6 && std::abs(f_lat) > 1e-6) {
                CHECK(std::signbit(f_smo) == std::signbit(f_lat));
            }
        }
    }
}

TEST_CASE("trained models satisfy the KKT conditions and the equality constraint") {
    std::mt19937_64 rng(107);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 6 + static_cast<int>(rng() % 15);
        auto K = random_normalized_psd(rng, n);
        auto y = random_balanced_labels(rng, n);
        std::uniform_real_distribution<double> ub(0.2, 2.0);
        std::vector<double> beta(static_cast<std::size_t>(n));
        for (double& b : beta) b = ub(rng);

        SvmTrainConfig cfg;
        cfg.C = 2.0;
        const auto model = train_weighted_svm(K, y, beta, cfg);
        REQUIRE(model.converged);

        std::vector<double> cap(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) cap[static_cast<std::size_t>(i)] = beta[static_cast<std::size_t>(i)] * cfg.C;

        double ay = 0, mass = 0;
        for (int i = 0; i < n; ++i) {
            const double a = model.alpha[static_cast<std::size_t>(i)];
            CHECK(a >= 0.0);
            CHECK(a <= cap[static_cast<std::size_t>(i)] + 1e-12);
            ay += a * y[static_cast<std::size_t>(i)];
            mass += a;
        }
        CHECK(std::abs(ay) <= 1e-8 * (1.0 + mass));

        const double viol = worst_kkt_violation(model.alpha, y, cap, K, model.bias);
        CHECK(viol <= cfg.tolerance * 1.5);
        CHECK(model.worst_kkt <= cfg.tolerance * 1.5);
    }
}

TEST_CASE("zero beta excludes a sample exactly") {
    std::mt19937_64 rng(109);
    const int n = 10;
    auto K = random_normalized_psd(rng, n);
    auto y = random_balanced_labels(rng, n);
    std::vector<double> beta(static_cast<std::size_t>(n), 1.0);
    beta[3] = 0.0;
    beta[7] = 0.0;
    const auto model = train_weighted_svm(K, y, beta, SvmTrainConfig{});
    CHECK(model.alpha[3] == 0.0);
    CHECK(model.alpha[7] == 0.0);
    for (int idx : model.support_indices) {
        CHECK(idx != 3);
        CHECK(idx != 7);
    }
}

TEST_CASE("excluding a sample by zero weight equals training without it") {
    std::mt19937_64 rng(113);
    std::vector<Sequence> seqs;
    std::vector<int> y;
    for (int i = 0; i < 12; ++i) {
        seqs.push_back(testutil::random_sequence(rng, Alphabet::dna(), 18, "t" + std::to_string(i)));
        y.push_back(i % 2 == 0 ? 1 : -1);
    }
    const KernelParams p{3, 1, true};
    const auto K = gram_matrix(seqs, p, Alphabet::dna());

    SvmTrainConfig cfg;
    cfg.C = 1.0;
    cfg.tolerance = 1e-8;

    const int drop = 5;
    std::vector<double> beta(seqs.size(), 1.0);
    beta[drop] = 0.0;
    const auto with_zero = train_weighted_svm(K, y, beta, cfg, seqs, &Alphabet::dna());

    std::vector<Sequence> reduced_seqs;
    std::vector<int> reduced_y;
    for (int i = 0; i < 12; ++i) {
        if (i == drop) continue;
        reduced_seqs.push_back(seqs[static_cast<std::size_t>(i)]);
        reduced_y.push_back(y[static_cast<std::size_t>(i)]);
    }
    const auto K2 = gram_matrix(reduced_seqs, p, Alphabet::dna());
    const auto without = train_weighted_svm(K2, reduced_y, std::vector<double>(reduced_seqs.size(), 1.0),
                                            cfg, reduced_seqs, &Alphabet::dna());

    for (int probe = 0; probe < 10; ++probe) {
        const auto x = testutil::random_sequence(rng, Alphabet::dna(), 18, "p");
        CHECK(decision_score(with_zero, x) ==
              Catch::Approx(decision_score(without, x)).margin(1e-6));
    }
}

TEST_CASE("caps depend only on the product beta times C") {
    std::mt19937_64 rng(127);
    const int n = 12;
    auto K = random_normalized_psd(rng, n);
    auto y = random_balanced_labels(rng, n);

    SvmTrainConfig a;
    a.C = 2.0;
    a.tolerance = 1e-8;
    SvmTrainConfig b = a;
    b.C = 0.5;
    const auto m1 = train_weighted_svm(K, y, std::vector<double>(n, 1.0), a);
    const auto m2 = train_weighted_svm(K, y, std::vector<double>(n, 4.0), b);
    REQUIRE(m1.converged);
    REQUIRE(m2.converged);
    for (int i = 0; i < n; ++i) {
        CHECK(m1.alpha[static_cast<std::size_t>(i)] ==
              Catch::Approx(m2.alpha[static_cast<std::size_t>(i)]).margin(1e-9));
    }
    CHECK(m1.bias == Catch::Approx(m2.bias).margin(1e-9));
}

TEST_CASE("decision scores ignore support-vector order and batch equals per-item") {
    std::mt19937_64 rng(131);
    std::vector<Sequence> seqs;
    std::vector<int> y;
    for (int i = 0; i < 10; ++i) {
        seqs.push_back(testutil::random_sequence(rng, Alphabet::dna(), 16, "s" + std::to_string(i)));
        y.push_back(i < 5 ? 1 : -1);
    }
    const KernelParams p{3, 0, true};
    const auto K = gram_matrix(seqs, p, Alphabet::dna());
    auto model = train_weighted_svm(K, y, std::vector<double>(seqs.size(), 1.0), SvmTrainConfig{},
                                    seqs, &Alphabet::dna());
    REQUIRE(model.can_score());

    std::vector<Sequence> probes;
    for (int i = 0; i < 6; ++i) {
        probes.push_back(testutil::random_sequence(rng, Alphabet::dna(), 16, "p" + std::to_string(i)));
    }
    probes.push_back(probes[0]); // duplicate input

    const auto batch = predict_batch(model, probes);
    REQUIRE(batch.size() == probes.size());
    for (std::size_t i = 0; i < probes.size(); ++i) {
        CHECK(batch[i].first == probes[i].id);
        CHECK(batch[i].second == decision_score(model, probes[i]));
    }
    CHECK(batch.back().second == batch.front().second);

    SvmModel reversed = model;
    std::reverse(reversed.scoring.begin(), reversed.scoring.end());
    for (const auto& x : probes) {
        CHECK(decision_score(reversed, x) ==
              Catch::Approx(decision_score(model, x)).margin(1e-12));
    }

    CHECK(predict_batch(model, {}).empty());

    // Error propagation names the offending sequence.
    const auto tiny = encode_sequence("too_short", "AC", Alphabet::dna());
    CHECK_THROWS_WITH(predict_batch(model, {tiny}),
                      Catch::Matchers::ContainsSubstring("too_short"));
}

TEST_CASE("support-free model scores to its bias") {
    SvmModel empty;
    empty.bias = 0.7;
    const auto x = encode_sequence("x", "ACGT", Alphabet::dna());
    CHECK(decision_score(empty, x) == 0.7);
}

TEST_CASE("training rejections") {
    auto K = make_gram({{1.0, 0.0}, {0.0, 1.0}});
    CHECK_THROWS_AS(train_weighted_svm(K, {1, 1}, std::vector<double>{1, 1}, SvmTrainConfig{}),
                    DataError);
    CHECK_THROWS_AS(train_weighted_svm(K, {1, 0}, std::vector<double>{1, 1}, SvmTrainConfig{}),
                    DataError);
    CHECK_THROWS_AS(train_weighted_svm(K, {1}, std::vector<double>{1, 1}, SvmTrainConfig{}),
                    DataError);
    CHECK_THROWS_AS(train_weighted_svm(K, {1, -1}, std::vector<double>{1, -0.5}, SvmTrainConfig{}),
                    DataError);
    SvmTrainConfig bad;
    bad.C = 0;
    CHECK_THROWS_AS(train_weighted_svm(K, {1, -1}, std::vector<double>{1, 1}, bad), UsageError);
}

TEST_CASE("iteration starvation leaves a diagnosable model") {
    std::mt19937_64 rng(137);
    const int n = 14;
    auto K = random_normalized_psd(rng, n);
    auto y = random_balanced_labels(rng, n);
    SvmTrainConfig cfg;
    cfg.max_passes = 1;
    cfg.tolerance = 1e-9;
    const auto model = train_weighted_svm(K, y, std::vector<double>(n, 1.0), cfg);
    CHECK_FALSE(model.converged);
    CHECK(model.stop_reason == "max_passes");
    CHECK(model.worst_kkt > 0.0);
}

TEST_CASE("model persistence round-trips with exact scores") {
    std::mt19937_64 rng(139);
    std::vector<Sequence> seqs;
    std::vector<int> y;
    for (int i = 0; i < 14; ++i) {
        seqs.push_back(testutil::random_sequence(rng, Alphabet::dna(), 20, "m" + std::to_string(i)));
        y.push_back(i % 2 ? 1 : -1);
    }
    const KernelParams p{4, 1, true};
    const auto K = gram_matrix(seqs, p, Alphabet::dna());
    SvmTrainConfig cfg;
    cfg.C = 1.5;
    const auto model = train_weighted_svm(K, y, std::vector<double>(seqs.size(), 1.0), cfg, seqs,
                                          &Alphabet::dna());

    std::ostringstream out;
    save_model(out, model);
    std::istringstream in(out.str());
    const auto loaded = load_model(in, Alphabet::dna());

    CHECK(loaded.params.k == 4);
    CHECK(loaded.params.m == 1);
    CHECK(loaded.params.normalize);
    CHECK(loaded.C == model.C);
    CHECK(loaded.bias == model.bias);
    REQUIRE(loaded.support_indices.size() == model.support_indices.size());
    REQUIRE(loaded.orig_indices.size() == model.support_indices.size());
    for (std::size_t r = 0; r < loaded.orig_indices.size(); ++r) {
        CHECK(loaded.orig_indices[r] == model.support_indices[r]);
    }

    for (int probe = 0; probe < 8; ++probe) {
        const auto x = testutil::random_sequence(rng, Alphabet::dna(), 20, "q");
        CHECK(decision_score(loaded, x) == decision_score(model, x));
    }

    // Loaded models can be persisted again without changing a byte.
    std::ostringstream out2;
    save_model(out2, loaded);
    CHECK(out2.str() == out.str());
}

TEST_CASE("model loader revalidates invariants") {
    SECTION("bad header") {
        std::istringstream in("not a model\n");
        CHECK_THROWS_WITH(load_model(in, Alphabet::dna()),
                          Catch::Matchers::ContainsSubstring("header"));
    }
    SECTION("truncated rows") {
        std::istringstream in("2 0 1 1 0.5 2\n0 0.5 1 ACGT\n");
        CHECK_THROWS_WITH(load_model(in, Alphabet::dna()),
                          Catch::Matchers::ContainsSubstring("truncated"));
    }
    SECTION("bad label") {
        std::istringstream in("2 0 1 1 0.5 1\n0 0.5 2 ACGT\n");
        CHECK_THROWS_WITH(load_model(in, Alphabet::dna()),
                          Catch::Matchers::ContainsSubstring("label"));
    }
    SECTION("non-positive alpha") {
        std::istringstream in("2 0 1 1 0.5 1\n0 0 1 ACGT\n");
        CHECK_THROWS_WITH(load_model(in, Alphabet::dna()),
                          Catch::Matchers::ContainsSubstring("alpha"));
    }
    SECTION("equality constraint violated") {
        std::istringstream in("2 0 1 1 0.5 2\n0 0.5 1 ACGT\n1 0.9 1 TTAA\n");
        CHECK_THROWS_WITH(load_model(in, Alphabet::dna()),
                          Catch::Matchers::ContainsSubstring("equality"));
    }
    SECTION("sequence outside the alphabet") {
        std::istringstream in("2 0 1 1 0.5 2\n0 0.5 1 ACGN\n1 0.5 -1 TTAA\n");
        CHECK_THROWS_AS(load_model(in, Alphabet::dna()), DataError);
    }
}

TEST_CASE("models without sequences refuse to persist or score") {
    std::mt19937_64 rng(149);
    auto K = random_normalized_psd(rng, 6);
    auto y = random_balanced_labels(rng, 6);
    const auto model = train_weighted_svm(K, y, std::vector<double>(6, 1.0), SvmTrainConfig{});
    std::ostringstream out;
    CHECK_THROWS_AS(save_model(out, model), DataError);
    const auto x = encode_sequence("x", "ACGTACGT", Alphabet::dna());
    if (!model.support_indices.empty()) {
        CHECK_THROWS_AS(decision_score(model, x), DataError);
    }
}
