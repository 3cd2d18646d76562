#include <catch2/catch_amalgamated.hpp>

#include <numeric>
#include <random>
#include <sstream>

#include "tsk/kmm.hpp"
#include "test_util.hpp"

using namespace tsk;

namespace {

using testutil::make_gram;
using testutil::random_normalized_psd;

KappaVector make_kappa(std::vector<double> values, int n_target = 1) {
    KappaVector k;
    k.n_source = static_cast<int>(values.size());
    k.n_target = n_target;
    k.values = std::move(values);
    return k;
}

std::vector<Sequence> skewed_set(std::mt19937_64& rng, int n, int len, bool at_rich,
                                 const std::string& prefix) {
    std::vector<Sequence> out;
    for (int i = 0; i < n; ++i) {
        Sequence s;
        s.id = prefix + std::to_string(i);
        for (int p = 0; p < len; ++p) {
            const bool major = rng() % 10 < 8;
            std::uint8_t code;
            if (at_rich) {
                code = major ? (rng() % 2 ? 0 : 3) : (rng() % 2 ? 1 : 2); // A/T else C/G
            } else {
                code = major ? (rng() % 2 ? 1 : 2) : (rng() % 2 ? 0 : 3);
            }
            s.codes.push_back(code);
        }
        out.push_back(std::move(s));
    }
    return out;
}

double feasible_sum_lo(int n, double eps) { return n * (1.0 - eps); }
double feasible_sum_hi(int n, double eps) { return n * (1.0 + eps); }

bool is_feasible(const std::vector<double>& beta, double B, double lo, double hi, double tol) {
    double sum = 0;
    for (double b : beta) {
        if (b < -tol || b > B + tol) return false;
        sum += b;
    }
    return sum >= lo - tol && sum <= hi + tol;
}

// Best objective over the epsilon-feasible points of the 0.1 lattice.
double lattice_best(const GramMatrix& K, const KappaVector& kappa, double B, double lo, double hi) {
    const int n = K.n;
    const int steps = static_cast<int>(std::lround(B * 10.0));
    std::vector<double> beta(static_cast<std::size_t>(n), 0.0);
    double best = std::numeric_limits<double>::infinity();
    auto rec = [&](auto&& self, int i, double partial) -> void {
        if (i == n) {
            if (partial < lo - 1e-12 || partial > hi + 1e-12) return;
            best = std::min(best, kmm_objective(beta, K, kappa));
            return;
        }
        // Remaining coordinates can add at most (n - i) * B.
        for (int s = 0; s <= steps; ++s) {
            const double v = s / 10.0;
            if (partial + v > hi + 1e-12) break;
            if (partial + v + (n - i - 1) * B < lo - 1e-12) continue;
            beta[static_cast<std::size_t>(i)] = v;
            self(self, i + 1, partial + v);
        }
        beta[static_cast<std::size_t>(i)] = 0.0;
    };
    rec(rec, 0, 0.0);
    return best;
}

} // namespace

TEST_CASE("kmm objective closed-form checks") {
    const auto K1 = make_gram({{2.0}});
    CHECK(kmm_objective({1.0}, K1, make_kappa({3.0})) == Catch::Approx(-4.0).margin(1e-15));
    CHECK(kmm_objective({0.0}, K1, make_kappa({3.0})) == 0.0);

    const auto K2 = make_gram({{1.0, 0.5}, {0.5, 1.0}});
    CHECK(kmm_objective({0.0, 0.0}, K2, make_kappa({1.0, 2.0})) == 0.0);
    // (1/4)(b'Kb) - (2/4)(k'b) with b = [1,1]: quad = 3, lin = 3 -> 0.75 - 1.5.
    CHECK(kmm_objective({1.0, 1.0}, K2, make_kappa({1.0, 2.0})) ==
          Catch::Approx(-0.75).margin(1e-15));

    CHECK_THROWS_AS(kmm_objective({1.0, 1.0}, K1, make_kappa({3.0})), DataError);
}

TEST_CASE("default epsilon follows the sample-size rule") {
    CHECK(default_kmm_epsilon(4) == Catch::Approx(0.5).margin(1e-15));
    CHECK(default_kmm_epsilon(100) == Catch::Approx(0.9).margin(1e-15));
    for (int n : {2, 10, 50}) {
        const double e = default_kmm_epsilon(n);
        CHECK(e > 0);
        CHECK(e < 1);
    }
}

TEST_CASE("kmm config validation") {
    KmmConfig c;
    CHECK_NOTHROW(validate_kmm_config(c));
    c.B = 0;
    CHECK_THROWS_AS(validate_kmm_config(c), UsageError);
    c = {};
    c.epsilon = 1.0;
    CHECK_THROWS_AS(validate_kmm_config(c), UsageError);
    c = {};
    c.epsilon = -0.1;
    CHECK_THROWS_AS(validate_kmm_config(c), UsageError);
    c = {};
    c.max_iterations = 0;
    CHECK_THROWS_AS(validate_kmm_config(c), UsageError);
    c = {};
    c.step_size = 0.0;
    CHECK_THROWS_AS(validate_kmm_config(c), UsageError);
    c = {};
    c.tolerance = 0.0;
    CHECK_THROWS_AS(validate_kmm_config(c), UsageError);
}

TEST_CASE("box-slab projection lands on the feasible set at the nearest point") {
    std::mt19937_64 rng(67);
    std::uniform_real_distribution<double> u(-3.0, 6.0);
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 8);
        const double B = 2.0;
        const double eps = 0.3;
        const double lo = feasible_sum_lo(n, eps), hi = feasible_sum_hi(n, eps);

        std::vector<double> x(static_cast<std::size_t>(n));
        for (double& v : x) v = u(rng);
        std::vector<double> proj = x;
        detail::project_box_slab(proj, B, lo, hi);

        CHECK(is_feasible(proj, B, lo, hi, 1e-9));

        // No random feasible point may be closer to x than the projection.
        double proj_dist = 0;
        for (int i = 0; i < n; ++i) {
            proj_dist += (proj[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(i)]) *
                         (proj[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(i)]);
        }
        for (int probe = 0; probe < 60; ++probe) {
            std::vector<double> z(static_cast<std::size_t>(n));
            std::uniform_real_distribution<double> ub(0.0, B);
            for (double& v : z) v = ub(rng);
            detail::project_box_slab(z, B, lo, hi); // any feasible point works as a probe
            double d = 0;
            for (int i = 0; i < n; ++i) {
                d += (z[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(i)]) *
                     (z[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(i)]);
            }
            CHECK(proj_dist <= d + 1e-7);
        }
    }
}

TEST_CASE("identity recovery: matching source and target keeps weights near one") {
    std::mt19937_64 rng(71);
    std::vector<Sequence> seqs;
    for (int i = 0; i < 25; ++i) {
        seqs.push_back(testutil::random_sequence(rng, Alphabet::dna(), 20, "s" + std::to_string(i)));
    }
    const KernelParams p{3, 1, true};
    const auto K = gram_matrix(seqs, p, Alphabet::dna());
    const auto kappa = kappa_vector(seqs, seqs, p, Alphabet::dna());

    const auto beta = solve_beta(K, kappa, KmmConfig{});
    REQUIRE(beta.values.size() == seqs.size());
    for (double b : beta.values) {
        CHECK(b >= 0.9);
        CHECK(b <= 1.1);
    }

    // The solver's point should be at least as good as random feasible probes.
    const double at_solution = kmm_objective(beta.values, K, kappa);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (int probe = 0; probe < 30; ++probe) {
        std::vector<double> z(seqs.size());
        for (double& v : z) v = u(rng);
        detail::project_box_slab(z, beta.B, feasible_sum_lo(K.n, beta.epsilon),
                                 feasible_sum_hi(K.n, beta.epsilon));
        CHECK(at_solution <= kmm_objective(z, K, kappa) + 1e-6);
    }
}

TEST_CASE("solved weights are feasible and the objective trace never rises") {
    std::mt19937_64 rng(73);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 3 + static_cast<int>(rng() % 18);
        const auto K = random_normalized_psd(rng, n);
        std::uniform_real_distribution<double> u(0.0, 2.0);
        std::vector<double> kv(static_cast<std::size_t>(n));
        for (double& v : kv) v = u(rng);
        const auto kappa = make_kappa(kv, n);

        KmmConfig cfg;
        cfg.B = 5.0;
        cfg.epsilon = 0.4;
        const auto beta = solve_beta(K, kappa, cfg);

        CHECK(is_feasible(beta.values, cfg.B, feasible_sum_lo(n, 0.4), feasible_sum_hi(n, 0.4),
                          1e-6 * n));
        REQUIRE(beta.objective_trace.size() >= 2);
        for (std::size_t i = 1; i < beta.objective_trace.size(); ++i) {
            CHECK(beta.objective_trace[i] <= beta.objective_trace[i - 1] + 1e-12);
        }
        CHECK(beta.final_objective ==
              Catch::Approx(beta.objective_trace.back()).margin(1e-15));
    }
}

TEST_CASE("solver matches brute-force lattice search on tiny instances") {
    std::mt19937_64 rng(79);
    int instances = 0;
    while (instances < 10) {
        const int n = 2 + static_cast<int>(rng() % 4); // 2..5
        const double B = n == 5 ? 1.0 : 2.0;
        const double eps = 0.3;
        const auto K = random_normalized_psd(rng, n);
        std::uniform_real_distribution<double> u(0.0, 1.8);
        std::vector<double> kv(static_cast<std::size_t>(n));
        for (double& v : kv) v = u(rng);
        const auto kappa = make_kappa(kv, n);

        KmmConfig cfg;
        cfg.B = B;
        cfg.epsilon = eps;
        cfg.tolerance = 1e-12;
        cfg.max_iterations = 50000;
        const auto beta = solve_beta(K, kappa, cfg);

        const double lo = feasible_sum_lo(n, eps), hi = feasible_sum_hi(n, eps);
        const double best = lattice_best(K, kappa, B, lo, hi);
        const double got = kmm_objective(beta.values, K, kappa);
        INFO("n=" << n << " best=" << best << " got=" << got);
        CHECK(got <= best + 1e-3);
        ++instances;
    }
}

TEST_CASE("doubling kappa never shrinks the total weight") {
    std::mt19937_64 rng(83);
    for (int trial = 0; trial < 8; ++trial) {
        const int n = 4 + static_cast<int>(rng() % 10);
        const auto K = random_normalized_psd(rng, n);
        std::uniform_real_distribution<double> u(0.0, 1.5);
        std::vector<double> kv(static_cast<std::size_t>(n));
        for (double& v : kv) v = u(rng);

        KmmConfig cfg;
        cfg.B = 8.0;
        cfg.epsilon = 0.6;
        cfg.tolerance = 1e-12;
        const auto b1 = solve_beta(K, make_kappa(kv, n), cfg);
        std::vector<double> kv2 = kv;
        for (double& v : kv2) v *= 2.0;
        const auto b2 = solve_beta(K, make_kappa(kv2, n), cfg);

        const double s1 = std::accumulate(b1.values.begin(), b1.values.end(), 0.0);
        const double s2 = std::accumulate(b2.values.begin(), b2.values.end(), 0.0);
        CHECK(s2 >= s1 - 1e-6);
    }
}

TEST_CASE("zero kappa drives the total weight to the lower slab boundary") {
    std::mt19937_64 rng(89);
    const int n = 6;
    const auto K = random_normalized_psd(rng, n);
    KmmConfig cfg;
    cfg.B = 3.0;
    cfg.epsilon = 0.25;
    cfg.tolerance = 1e-13;
    cfg.max_iterations = 50000;
    const auto beta = solve_beta(K, make_kappa(std::vector<double>(n, 0.0), n), cfg);
    const double sum = std::accumulate(beta.values.begin(), beta.values.end(), 0.0);
    CHECK(sum == Catch::Approx(feasible_sum_lo(n, 0.25)).margin(1e-3));
}

TEST_CASE("target concentrated on one cluster upweights that cluster") {
    std::mt19937_64 rng(97);
    auto source = skewed_set(rng, 12, 24, true, "at");
    const auto gc = skewed_set(rng, 12, 24, false, "gc");
    source.insert(source.end(), gc.begin(), gc.end());
    const auto target = skewed_set(rng, 16, 24, false, "t");

    const KernelParams p{2, 0, true};
    const auto K = gram_matrix(source, p, Alphabet::dna());
    const auto kappa = kappa_vector(source, target, p, Alphabet::dna());

    KmmConfig cfg;
    cfg.B = 10.0;
    cfg.epsilon = 0.4;
    const auto beta = solve_beta(K, kappa, cfg);

    double at_mean = 0, gc_mean = 0;
    for (int i = 0; i < 12; ++i) at_mean += beta.values[static_cast<std::size_t>(i)];
    for (int i = 12; i < 24; ++i) gc_mean += beta.values[static_cast<std::size_t>(i)];
    at_mean /= 12;
    gc_mean /= 12;
    INFO("at=" << at_mean << " gc=" << gc_mean);
    CHECK(gc_mean > at_mean);
}

TEST_CASE("iteration starvation is reported, not hidden") {
    std::mt19937_64 rng(101);
    const int n = 8;
    const auto K = random_normalized_psd(rng, n);
    KmmConfig cfg;
    cfg.B = 3.0;
    cfg.epsilon = 0.25;
    cfg.max_iterations = 1;
    cfg.tolerance = 1e-14;
    const auto beta = solve_beta(K, make_kappa(std::vector<double>(n, 0.0), n), cfg);
    CHECK_FALSE(beta.converged);
    CHECK(beta.stop_reason == "max_iterations");
    CHECK(beta.iterations == 1);
}

TEST_CASE("solve_beta input validation") {
    const auto K = make_gram({{1.0, 0.2}, {0.2, 1.0}});
    CHECK_THROWS_AS(solve_beta(K, make_kappa({1.0, 1.0, 1.0}), KmmConfig{}), DataError);
    GramMatrix broken;
    broken.n = 2;
    broken.values = {1.0, 0.0, 1.0};
    CHECK_THROWS_AS(solve_beta(broken, make_kappa({1.0, 1.0}), KmmConfig{}), DataError);
}

TEST_CASE("beta persistence round-trips bit-exactly") {
    BetaWeights b;
    b.values = {0.5, 1.25, 0.0, 2.75};
    b.B = 10.0;
    b.epsilon = 0.25;
    b.iterations = 42;
    b.final_objective = -1.2345678901234567;

    std::ostringstream out;
    save_beta(out, b);
    std::istringstream in(out.str());
    const auto back = load_beta(in);
    CHECK(back.values == b.values);
    CHECK(back.B == b.B);
    CHECK(back.epsilon == b.epsilon);
    CHECK(back.iterations == 42);
    CHECK(back.final_objective == b.final_objective);

    std::istringstream bad_header("gamma 1 0.5 3 0.0\n0 1.0\n");
    CHECK_THROWS_WITH(load_beta(bad_header), Catch::Matchers::ContainsSubstring("header"));
    std::istringstream bad_index("beta 1 0.5 3 0.0\n0 1.0\n2 1.0\n");
    CHECK_THROWS_WITH(load_beta(bad_index), Catch::Matchers::ContainsSubstring("non-sequential"));
    std::istringstream empty("beta 1 0.5 3 0.0\n");
    CHECK_THROWS_WITH(load_beta(empty), Catch::Matchers::ContainsSubstring("no weights"));
}
