#pragma once

#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tsk/gram.hpp"

namespace tsk {

// Kernel mean matching settings. B and epsilon bound the feasible set
// beta_i in [0, B], |sum beta - n| <= n * epsilon. Unset epsilon resolves to
// (sqrt(n) - 1) / sqrt(n) at solve time; unset step size resolves to
// 1 / (2 lambda_max(K) / n^2).
struct KmmConfig {
    double B = 1000.0;
    std::optional<double> epsilon;
    int max_iterations = 10000;
    std::optional<double> step_size;
    double tolerance = 1e-10;
};

inline void validate_kmm_config(const KmmConfig& c) {
    if (c.B <= 0) throw UsageError("kmm: B must be > 0");
    if (c.epsilon && (*c.epsilon < 0 || *c.epsilon >= 1)) {
        throw UsageError("kmm: epsilon must be in [0, 1)");
    }
    if (c.max_iterations < 1) throw UsageError("kmm: max iterations must be >= 1");
    if (c.step_size && *c.step_size <= 0) throw UsageError("kmm: step size must be > 0");
    if (c.tolerance <= 0) throw UsageError("kmm: tolerance must be > 0");
}

inline double default_kmm_epsilon(int n) {
    const double r = std::sqrt(static_cast<double>(n));
    return (r - 1.0) / r;
}

// Importance weights for the source samples.
struct BetaWeights {
    std::vector<double> values;
    double final_objective = 0.0;
    int iterations = 0;
    bool converged = false;
    std::string stop_reason;
    double B = 0.0;
    double epsilon = 0.0;
    std::vector<double> objective_trace;
};

// (1/n^2) beta' K beta - (2/n^2) kappa' beta; the constant target-mean term
// is dropped.
inline double kmm_objective(const std::vector<double>& beta, const GramMatrix& K,
                            const KappaVector& kappa) {
    const std::size_t n = beta.size();
    if (K.n != static_cast<int>(n) || kappa.values.size() != n) {
        throw DataError("kmm_objective: dimension mismatch (beta " + std::to_string(n) + ", K " +
                        std::to_string(K.n) + ", kappa " + std::to_string(kappa.values.size()) + ")");
    }
    double quad = 0.0, lin = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) row += K.values[i * n + j] * beta[j];
        quad += beta[i] * row;
        lin += kappa.values[i] * beta[i];
    }
    const double n2 = static_cast<double>(n) * static_cast<double>(n);
    return quad / n2 - 2.0 * lin / n2;
}

namespace detail {

// Euclidean projection onto box [0,B] intersected with the sum slab
// n(1-eps) <= sum <= n(1+eps). Because the slab normal is the all-ones
// vector, the projection has the closed form clamp(x + t) for a scalar
// shift t: t = 0 when the box clamp already lands inside the slab,
// otherwise t solves sum_i clamp(x_i + t) = lo (or hi). That sum is
// nondecreasing and piecewise linear in t, so bisection nails it.
inline void project_box_slab(std::vector<double>& x, double B, double lo, double hi) {
    const std::size_t n = x.size();
    if (n == 0) return;
    const auto shifted_sum = [&](double t) {
        double s = 0.0;
        for (double v : x) s += std::min(B, std::max(0.0, v + t));
        return s;
    };
    const double s0 = shifted_sum(0.0);
    double target, t_lo, t_hi;
    if (s0 < lo) {
        target = lo;
        t_lo = 0.0;
        double min_x = x[0];
        for (double v : x) min_x = std::min(min_x, v);
        t_hi = B - std::min(min_x, 0.0) + 1.0; // everything saturates at B
    } else if (s0 > hi) {
        target = hi;
        double max_x = x[0];
        for (double v : x) max_x = std::max(max_x, v);
        t_lo = -std::max(max_x, 0.0) - 1.0; // everything saturates at 0
        t_hi = 0.0;
    } else {
        for (double& v : x) v = std::min(B, std::max(0.0, v));
        return;
    }
    for (int iter = 0; iter < 200 && t_hi - t_lo > 1e-16 * (1.0 + std::abs(t_lo) + std::abs(t_hi));
         ++iter) {
        const double mid = 0.5 * (t_lo + t_hi);
        if (shifted_sum(mid) < target) t_lo = mid;
        else t_hi = mid;
    }
    const double t = 0.5 * (t_lo + t_hi);
    for (double& v : x) v = std::min(B, std::max(0.0, v + t));
}

inline double quad_objective(const std::vector<double>& beta, const std::vector<double>& K_flat,
                             const std::vector<double>& kappa, std::size_t n) {
    double quad = 0.0, lin = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) row += K_flat[i * n + j] * beta[j];
        quad += beta[i] * row;
        lin += kappa[i] * beta[i];
    }
    const double n2 = static_cast<double>(n) * static_cast<double>(n);
    return quad / n2 - 2.0 * lin / n2;
}

inline double power_iteration_lambda_max(const std::vector<double>& K_flat, std::size_t n) {
    // Deterministic start with uneven components: an all-ones start can lie
    // exactly in a non-dominant eigenspace (any 2x2 matrix with a negative
    // off-diagonal and equal diagonal), which would report lambda_min instead.
    std::vector<double> v(n), w(n);
    double norm0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = 1.0 + 0.5 * std::sin(static_cast<double>(i) + 1.0);
        norm0 += v[i] * v[i];
    }
    norm0 = std::sqrt(norm0);
    for (double& x : v) x /= norm0;
    double lambda = 0.0;
    for (int iter = 0; iter < 200; ++iter) {
        for (std::size_t i = 0; i < n; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < n; ++j) row += K_flat[i * n + j] * v[j];
            w[i] = row;
        }
        // v is unit-length, so ||Kv|| estimates lambda_max for PSD K.
        double norm = 0.0;
        for (double x : w) norm += x * x;
        norm = std::sqrt(norm);
        if (norm == 0.0) return 0.0;
        for (double& x : w) x /= norm;
        v.swap(w);
        if (iter > 0 && std::abs(norm - lambda) <= 1e-12 * (1.0 + std::abs(norm))) {
            return norm;
        }
        lambda = norm;
    }
    return lambda;
}

} // namespace detail

// Projected gradient descent on the KMM objective, starting from the
// all-ones (no shift) point. K is symmetrized and ridge-stabilized with
// +1e-8 on the diagonal before solving.
inline BetaWeights solve_beta(const GramMatrix& K, const KappaVector& kappa, const KmmConfig& config) {
    const int n = K.n;
    if (n < 1 || static_cast<std::size_t>(n) * n != K.values.size()) {
        throw DataError("solve_beta: K is not a square matrix");
    }
    if (kappa.values.size() != static_cast<std::size_t>(n)) {
        throw DataError("solve_beta: kappa length " + std::to_string(kappa.values.size()) +
                        " does not match K dimension " + std::to_string(n));
    }
    validate_kmm_config(config);
    const double eps = config.epsilon ? *config.epsilon : default_kmm_epsilon(n);
    const double lo = static_cast<double>(n) * (1.0 - eps);
    const double hi = static_cast<double>(n) * (1.0 + eps);
    const std::size_t un = static_cast<std::size_t>(n);

    std::vector<double> Ks(un * un);
    for (std::size_t i = 0; i < un; ++i) {
        for (std::size_t j = 0; j < un; ++j) {
            Ks[i * un + j] = 0.5 * (K.values[i * un + j] + K.values[j * un + i]);
        }
        Ks[i * un + i] += 1e-8;
    }

    double step;
    if (config.step_size) {
        step = *config.step_size;
    } else {
        const double lambda = detail::power_iteration_lambda_max(Ks, un);
        const double lipschitz = 2.0 * std::max(lambda, 1e-12) * (1.0 + 1e-6) /
                                 (static_cast<double>(n) * static_cast<double>(n));
        step = 1.0 / lipschitz;
    }

    BetaWeights result;
    result.B = config.B;
    result.epsilon = eps;
    std::vector<double> beta(un, 1.0);
    detail::project_box_slab(beta, config.B, lo, hi);

    const double n2 = static_cast<double>(n) * static_cast<double>(n);
    std::vector<double> grad(un);
    double prev_obj = detail::quad_objective(beta, Ks, kappa.values, un);
    result.objective_trace.push_back(prev_obj);
    int used = 0;
    for (int iter = 1; iter <= config.max_iterations; ++iter) {
        for (std::size_t i = 0; i < un; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < un; ++j) row += Ks[i * un + j] * beta[j];
            grad[i] = 2.0 * (row - kappa.values[i]) / n2;
        }
        for (std::size_t i = 0; i < un; ++i) beta[i] -= step * grad[i];
        detail::project_box_slab(beta, config.B, lo, hi);
        const double obj = detail::quad_objective(beta, Ks, kappa.values, un);
        result.objective_trace.push_back(obj);
        used = iter;
        if (std::abs(obj - prev_obj) <= config.tolerance * (1.0 + std::abs(obj))) {
            result.converged = true;
            result.stop_reason = "tolerance";
            prev_obj = obj;
            break;
        }
        prev_obj = obj;
    }
    if (!result.converged) result.stop_reason = "max_iterations";
    result.iterations = used;
    result.final_objective = prev_obj;

    for (double& b : beta) b = std::min(config.B, std::max(0.0, b));
    const double sum = std::accumulate(beta.begin(), beta.end(), 0.0);
    const double slack = 1e-6 * static_cast<double>(n);
    if (sum < lo - slack || sum > hi + slack) {
        std::ostringstream msg;
        msg << "solve_beta: projection failed to reach the sum constraint (sum=" << sum
            << ", feasible [" << lo << ", " << hi << "]); objective trace tail:";
        const std::size_t tail = result.objective_trace.size() > 5 ? result.objective_trace.size() - 5 : 0;
        for (std::size_t i = tail; i < result.objective_trace.size(); ++i) {
            msg << ' ' << result.objective_trace[i];
        }
        throw SolverError(msg.str());
    }
    result.values = std::move(beta);
    return result;
}

// --- persistence ------------------------------------------------------------
// Header line "beta B epsilon iterations objective", then rows "index weight"
// at 17 significant digits.

inline void save_beta(std::ostream& out, const BetaWeights& beta) {
    out << "beta " << detail::format_g17(beta.B) << ' ' << detail::format_g17(beta.epsilon) << ' '
        << beta.iterations << ' ' << detail::format_g17(beta.final_objective) << '\n';
    for (std::size_t i = 0; i < beta.values.size(); ++i) {
        out << i << ' ' << detail::format_g17(beta.values[i]) << '\n';
    }
}

inline void save_beta_file(const std::string& path, const BetaWeights& beta) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write beta file '" + path + "'");
    save_beta(out, beta);
}

inline BetaWeights load_beta(std::istream& in) {
    BetaWeights beta;
    std::string tag;
    if (!(in >> tag >> beta.B >> beta.epsilon >> beta.iterations >> beta.final_objective) ||
        tag != "beta") {
        throw DataError("beta file: malformed header (expected 'beta B epsilon iterations objective')");
    }
    std::size_t index;
    double value;
    while (in >> index >> value) {
        if (index != beta.values.size()) {
            throw DataError("beta file: non-sequential index " + std::to_string(index));
        }
        beta.values.push_back(value);
    }
    if (beta.values.empty()) throw DataError("beta file: no weights");
    return beta;
}

inline BetaWeights load_beta_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open beta file '" + path + "'");
    try {
        return load_beta(in);
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

} // namespace tsk
