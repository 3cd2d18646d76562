#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tsk/gram.hpp"
#include "tsk/kmm.hpp"

namespace tsk {

struct SvmTrainConfig {
    double C = 1.0;
    double tolerance = 1e-3;
    int max_passes = 10000;
};

inline void validate_svm_config(const SvmTrainConfig& c) {
    if (c.C <= 0) throw UsageError("svm: C must be > 0");
    if (c.tolerance <= 0) throw UsageError("svm: tolerance must be > 0");
    if (c.max_passes < 1) throw UsageError("svm: max passes must be >= 1");
}

namespace detail {

struct ScoringEntry {
    SeqSpectrum spectrum;
    double inv_self_norm = 1.0; // 1/sqrt(K_ii) when normalizing, else 1
    double weight = 0.0;        // alpha_i * y_i
};

} // namespace detail

// Dual solution of the instance-weighted SVM. Decision function:
// f(x) = sum_i alpha_i y_i K(x_i, x) + b over support vectors.
struct SvmModel {
    KernelParams params;
    double C = 1.0;
    double bias = 0.0;
    std::vector<double> alpha;
    std::vector<int> labels;
    std::vector<int> support_indices; // positions with alpha > 0, into alpha/labels
    std::vector<int> orig_indices;    // loaded models: original training positions per row
    std::vector<Sequence> train_seqs; // parallel to alpha; may be empty (kernel-only model)
    std::optional<Alphabet> alphabet;
    bool converged = true;
    double worst_kkt = 0.0;
    int iterations = 0;
    std::string stop_reason;

    std::vector<detail::ScoringEntry> scoring; // prebuilt support-vector cache

    bool can_score() const { return !scoring.empty() || support_indices.empty(); }
};

namespace detail {

inline void build_scoring_cache(SvmModel& model) {
    model.scoring.clear();
    if (model.train_seqs.empty() || !model.alphabet) return;
    const auto& coeff = intersection_coefficients(model.params.k, model.params.m, model.alphabet->size());
    for (int idx : model.support_indices) {
        ScoringEntry e;
        e.spectrum = build_spectrum(model.train_seqs[static_cast<std::size_t>(idx)], model.params.k,
                                    *model.alphabet);
        if (model.params.normalize) {
            const long long self = mismatch_value(e.spectrum, e.spectrum, coeff, model.params.m);
            if (self <= 0) {
                throw DataError("svm model: zero self-kernel for support sequence '" +
                                model.train_seqs[static_cast<std::size_t>(idx)].id + "'");
            }
            e.inv_self_norm = 1.0 / std::sqrt(static_cast<double>(self));
        }
        e.weight = model.alpha[static_cast<std::size_t>(idx)] *
                   static_cast<double>(model.labels[static_cast<std::size_t>(idx)]);
        model.scoring.push_back(std::move(e));
    }
}

} // namespace detail

// SMO on the weighted dual: maximize sum alpha_i - 1/2 sum alpha_i alpha_j
// y_i y_j K_ij subject to sum alpha_i y_i = 0 and 0 <= alpha_i <= beta_i C.
// Working pair: maximal KKT-violating pair, ties broken by lowest index.
inline SvmModel train_weighted_svm(const GramMatrix& K, const std::vector<int>& labels,
                                   const std::vector<double>& beta, const SvmTrainConfig& config,
                                   const std::vector<Sequence>& train_seqs = {},
                                   const Alphabet* alphabet = nullptr) {
    validate_svm_config(config);
    const int n = K.n;
    if (n < 1 || static_cast<std::size_t>(n) * n != K.values.size()) {
        throw DataError("svm: K is not a square matrix");
    }
    if (labels.size() != static_cast<std::size_t>(n) || beta.size() != static_cast<std::size_t>(n)) {
        throw DataError("svm: dimension mismatch (K " + std::to_string(n) + ", labels " +
                        std::to_string(labels.size()) + ", beta " + std::to_string(beta.size()) + ")");
    }
    bool has_pos = false, has_neg = false;
    for (int y : labels) {
        if (y == 1) has_pos = true;
        else if (y == -1) has_neg = true;
        else throw DataError("svm: label must be +1 or -1");
    }
    if (!has_pos || !has_neg) throw DataError("svm: training data must contain both classes");
    if (!train_seqs.empty() && train_seqs.size() != static_cast<std::size_t>(n)) {
        throw DataError("svm: training sequence list does not match K dimension");
    }

    std::vector<double> cap(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        if (beta[static_cast<std::size_t>(i)] < 0) throw DataError("svm: negative beta weight");
        cap[static_cast<std::size_t>(i)] = beta[static_cast<std::size_t>(i)] * config.C;
    }

    const std::size_t un = static_cast<std::size_t>(n);
    // A cap that is negligible next to the largest cap pins its alpha near 0
    // and can move any score by at most that cap; holding such a point to
    // margin conditions is meaningless (and a sub-epsilon cap stalls the very
    // first pair step). Treat these points exactly like beta = 0: outside
    // pair selection, the bias fallback, and the violation scan.
    double max_cap = 0.0;
    for (double c : cap) max_cap = std::max(max_cap, c);
    const double cap_floor = 1e-6 * max_cap;
    std::vector<char> active(un);
    for (std::size_t t = 0; t < un; ++t) active[t] = cap[t] > cap_floor ? 1 : 0;
    std::vector<double> alpha(un, 0.0);
    std::vector<double> grad(un, 0.0); // G_i = sum_j alpha_j y_j K_ij
    auto kv = [&](int i, int j) { return K.values[static_cast<std::size_t>(i) * un + static_cast<std::size_t>(j)]; };

    const double tol = config.tolerance;
    int iterations = 0;
    bool converged = false;
    std::string stop_reason = "max_passes";

    for (int pass = 0; pass < config.max_passes; ++pass) {
        // val_i = y_i - G_i; b must satisfy val_i <= b on I_up and
        // val_i >= b on I_low at optimality.
        int up = -1, low = -1;
        double up_val = -std::numeric_limits<double>::infinity();
        double low_val = std::numeric_limits<double>::infinity();
        for (int t = 0; t < n; ++t) {
            const std::size_t ut = static_cast<std::size_t>(t);
            if (!active[ut]) continue;
            const double val = static_cast<double>(labels[ut]) - grad[ut];
            const bool in_up = (labels[ut] == 1 && alpha[ut] < cap[ut]) ||
                               (labels[ut] == -1 && alpha[ut] > 0.0);
            const bool in_low = (labels[ut] == -1 && alpha[ut] < cap[ut]) ||
                                (labels[ut] == 1 && alpha[ut] > 0.0);
            if (in_up && val > up_val) { up_val = val; up = t; }
            if (in_low && val < low_val) { low_val = val; low = t; }
        }
        if (up < 0 || low < 0 || up_val - low_val <= tol) {
            converged = true;
            stop_reason = "kkt";
            break;
        }
        ++iterations;

        const int i = up, j = low;
        const std::size_t ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
        const double yi = labels[ui], yj = labels[uj];
        const double Ei = grad[ui] - yi;
        const double Ej = grad[uj] - yj;
        const double ai_old = alpha[ui], aj_old = alpha[uj];

        double L, H;
        if (yi != yj) {
            L = std::max(0.0, aj_old - ai_old);
            H = std::min(cap[uj], cap[ui] + aj_old - ai_old);
        } else {
            L = std::max(0.0, ai_old + aj_old - cap[ui]);
            H = std::min(cap[uj], ai_old + aj_old);
        }
        if (H <= L) {
            stop_reason = "empty_range";
            break;
        }

        const double eta = kv(i, i) + kv(j, j) - 2.0 * kv(i, j);
        double aj_new;
        if (eta > 1e-12) {
            aj_new = aj_old + yj * (Ei - Ej) / eta;
            aj_new = std::min(H, std::max(L, aj_new));
        } else {
            // Flat direction: objective is linear along the pair line.
            const double slope = yj * (Ei - Ej);
            const double gain_L = slope * (L - aj_old) - 0.5 * eta * (L - aj_old) * (L - aj_old);
            const double gain_H = slope * (H - aj_old) - 0.5 * eta * (H - aj_old) * (H - aj_old);
            aj_new = (gain_L >= gain_H) ? L : H;
        }
        // Snap to the segment ends so bound membership stays an exact
        // comparison; rounding dust here otherwise yields unselectable
        // near-bound points that stall the pair selection.
        const double snap_j = 1e-12 * std::max(1.0, std::max(std::abs(L), std::abs(H)));
        if (aj_new - L < snap_j) aj_new = L;
        else if (H - aj_new < snap_j) aj_new = H;
        if (std::abs(aj_new - aj_old) <= 1e-14 * (std::abs(aj_new) + std::abs(aj_old) + 1.0)) {
            // The chosen pair cannot move: an endpoint sits a dust-width from
            // the bound it is pushing toward (the unconstrained step is at
            // least tol/eta, never vanishing). Snap that endpoint onto its
            // bound so selection stops picking the blocked direction; a point
            // whose whole cap is microscopic is dropped outright. A stall
            // between two roomy endpoints is a genuine failure.
            const double pin_tol = 1e-10 * std::max(1.0, config.C);
            const double room_i = yi > 0.0 ? cap[ui] - ai_old : ai_old;
            const double room_j = yj > 0.0 ? aj_old : cap[uj] - aj_old;
            bool healed = false;
            if (room_i <= pin_tol) {
                double target = yi > 0.0 ? cap[ui] : 0.0;
                if (cap[ui] <= 2.0 * pin_tol) { active[ui] = 0; target = 0.0; }
                const double d = (target - ai_old) * yi;
                alpha[ui] = target;
                for (int t = 0; t < n; ++t) grad[static_cast<std::size_t>(t)] += d * kv(i, t);
                healed = true;
            }
            if (room_j <= pin_tol) {
                double target = yj > 0.0 ? 0.0 : cap[uj];
                if (cap[uj] <= 2.0 * pin_tol) { active[uj] = 0; target = 0.0; }
                const double d = (target - aj_old) * yj;
                alpha[uj] = target;
                for (int t = 0; t < n; ++t) grad[static_cast<std::size_t>(t)] += d * kv(j, t);
                healed = true;
            }
            if (healed) continue;
            stop_reason = "stalled";
            break; // reported via worst_kkt below
        }
        double ai_new = ai_old + yi * yj * (aj_old - aj_new);
        const double snap_i = 1e-12 * std::max(1.0, cap[ui]);
        if (ai_new < snap_i) ai_new = 0.0;
        else if (ai_new > cap[ui] - snap_i) ai_new = cap[ui];
        ai_new = std::min(cap[ui], std::max(0.0, ai_new));
        alpha[ui] = ai_new;
        alpha[uj] = aj_new;
        const double di = (ai_new - ai_old) * yi;
        const double dj = (aj_new - aj_old) * yj;
        for (int t = 0; t < n; ++t) {
            grad[static_cast<std::size_t>(t)] += di * kv(i, t) + dj * kv(j, t);
        }
    }

    SvmModel model;
    model.params = K.params;
    model.C = config.C;
    model.alpha = alpha;
    model.labels = labels;
    model.converged = converged;
    model.iterations = iterations;
    model.stop_reason = stop_reason;
    for (int t = 0; t < n; ++t) {
        if (alpha[static_cast<std::size_t>(t)] > 0.0) model.support_indices.push_back(t);
    }

    // b from unbounded support vectors; midpoint of the feasible interval
    // when there are none.
    double b_sum = 0.0;
    int b_count = 0;
    for (int t = 0; t < n; ++t) {
        const std::size_t ut = static_cast<std::size_t>(t);
        const double slack = 1e-8 * std::max(1.0, cap[ut]);
        if (alpha[ut] > slack && alpha[ut] < cap[ut] - slack) {
            b_sum += static_cast<double>(labels[ut]) - grad[ut];
            ++b_count;
        }
    }
    if (b_count > 0) {
        model.bias = b_sum / static_cast<double>(b_count);
    } else {
        double up_val = -std::numeric_limits<double>::infinity();
        double low_val = std::numeric_limits<double>::infinity();
        for (int t = 0; t < n; ++t) {
            const std::size_t ut = static_cast<std::size_t>(t);
            if (!active[ut]) continue;
            const double val = static_cast<double>(labels[ut]) - grad[ut];
            const bool in_up = (labels[ut] == 1 && alpha[ut] < cap[ut]) ||
                               (labels[ut] == -1 && alpha[ut] > 0.0);
            const bool in_low = (labels[ut] == -1 && alpha[ut] < cap[ut]) ||
                                (labels[ut] == 1 && alpha[ut] > 0.0);
            if (in_up) up_val = std::max(up_val, val);
            if (in_low) low_val = std::min(low_val, val);
        }
        if (std::isfinite(up_val) && std::isfinite(low_val)) model.bias = 0.5 * (up_val + low_val);
        else if (std::isfinite(up_val)) model.bias = up_val;
        else if (std::isfinite(low_val)) model.bias = low_val;
        else model.bias = 0.0;
    }

    // Worst margin violation under the final bias.
    double worst = 0.0;
    for (int t = 0; t < n; ++t) {
        const std::size_t ut = static_cast<std::size_t>(t);
        if (!active[ut]) continue;
        const double margin = static_cast<double>(labels[ut]) * (grad[ut] + model.bias);
        const double slack = 1e-8 * std::max(1.0, cap[ut]);
        double viol = 0.0;
        if (alpha[ut] <= slack) viol = std::max(0.0, 1.0 - margin);
        else if (alpha[ut] >= cap[ut] - slack) viol = std::max(0.0, margin - 1.0);
        else viol = std::abs(margin - 1.0);
        worst = std::max(worst, viol);
    }
    model.worst_kkt = worst;

    if (!train_seqs.empty() && alphabet != nullptr) {
        model.train_seqs = train_seqs;
        model.alphabet = *alphabet;
        detail::build_scoring_cache(model);
    }
    return model;
}

inline SvmModel train_weighted_svm(const GramMatrix& K, const std::vector<int>& labels,
                                   const BetaWeights& beta, const SvmTrainConfig& config,
                                   const std::vector<Sequence>& train_seqs = {},
                                   const Alphabet* alphabet = nullptr) {
    return train_weighted_svm(K, labels, beta.values, config, train_seqs, alphabet);
}

// f(x) = sum_i alpha_i y_i K(x_i, x) + b.
inline double decision_score(const SvmModel& model, const Sequence& x) {
    if (model.support_indices.empty()) return model.bias;
    if (model.scoring.empty()) {
        throw DataError("svm model: no training sequences attached, cannot score");
    }
    const Alphabet& alphabet = *model.alphabet;
    const auto& coeff = intersection_coefficients(model.params.k, model.params.m, alphabet.size());
    if (x.length() < static_cast<std::size_t>(model.params.k)) {
        throw DataError("svm: sequence '" + x.id + "' has length " + std::to_string(x.length()) +
                        " < k=" + std::to_string(model.params.k));
    }
    const auto sx = detail::build_spectrum(x, model.params.k, alphabet);
    double inv_self = 1.0;
    if (model.params.normalize) {
        const long long self = detail::mismatch_value(sx, sx, coeff, model.params.m);
        if (self <= 0) throw DataError("svm: zero self-kernel for sequence '" + x.id + "'");
        inv_self = 1.0 / std::sqrt(static_cast<double>(self));
    }
    double f = model.bias;
    for (const auto& e : model.scoring) {
        const long long raw = detail::mismatch_value(e.spectrum, sx, coeff, model.params.m);
        double kval = static_cast<double>(raw);
        if (model.params.normalize) kval *= e.inv_self_norm * inv_self;
        f += e.weight * kval;
    }
    return f;
}

inline std::vector<std::pair<std::string, double>> predict_batch(const SvmModel& model,
                                                                 const std::vector<Sequence>& data) {
    std::vector<std::pair<std::string, double>> out;
    out.reserve(data.size());
    for (const auto& x : data) {
        try {
            out.emplace_back(x.id, decision_score(model, x));
        } catch (const DataError& e) {
            throw DataError("predict: sequence '" + x.id + "': " + e.what());
        }
    }
    return out;
}

// --- persistence ------------------------------------------------------------
// Header "k m normalize C b n_support", then one row per support vector:
// original index, alpha, label, sequence characters.

inline void save_model(std::ostream& out, const SvmModel& model) {
    if (model.train_seqs.empty() || !model.alphabet) {
        throw DataError("svm model: cannot persist a model without attached sequences");
    }
    out << model.params.k << ' ' << model.params.m << ' ' << (model.params.normalize ? 1 : 0) << ' '
        << detail::format_g17(model.C) << ' ' << detail::format_g17(model.bias) << ' '
        << model.support_indices.size() << '\n';
    for (std::size_t r = 0; r < model.support_indices.size(); ++r) {
        const std::size_t u = static_cast<std::size_t>(model.support_indices[r]);
        const int file_index =
            model.orig_indices.empty() ? model.support_indices[r] : model.orig_indices[r];
        out << file_index << ' ' << detail::format_g17(model.alpha[u]) << ' ' << model.labels[u]
            << ' ' << decode_sequence(model.train_seqs[u], *model.alphabet) << '\n';
    }
}

inline void save_model_file(const std::string& path, const SvmModel& model) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write model file '" + path + "'");
    save_model(out, model);
}

inline SvmModel load_model(std::istream& in, const Alphabet& alphabet) {
    SvmModel model;
    int normalize = 0;
    std::size_t n_support = 0;
    if (!(in >> model.params.k >> model.params.m >> normalize >> model.C >> model.bias >> n_support)) {
        throw DataError("model file: malformed header (expected 'k m normalize C b n_support')");
    }
    model.params.normalize = normalize != 0;
    validate_params(model.params);
    double alpha_dot_y = 0.0;
    for (std::size_t r = 0; r < n_support; ++r) {
        int orig_index = 0, y = 0;
        double a = 0.0;
        std::string chars;
        if (!(in >> orig_index >> a >> y >> chars)) {
            throw DataError("model file: truncated at support row " + std::to_string(r));
        }
        if (y != 1 && y != -1) throw DataError("model file: label must be +1 or -1");
        if (a <= 0.0) throw DataError("model file: support vector with alpha <= 0");
        model.alpha.push_back(a);
        model.labels.push_back(y);
        model.orig_indices.push_back(orig_index);
        model.support_indices.push_back(static_cast<int>(r));
        model.train_seqs.push_back(encode_sequence("sv" + std::to_string(orig_index), chars, alphabet));
        alpha_dot_y += a * y;
    }
    double alpha_mass = 0.0;
    for (double a : model.alpha) alpha_mass += a;
    if (std::abs(alpha_dot_y) > 1e-6 * (1.0 + alpha_mass)) {
        throw DataError("model file: equality constraint violated (sum alpha_i y_i = " +
                        std::to_string(alpha_dot_y) + ")");
    }
    model.alphabet = alphabet;
    detail::build_scoring_cache(model);
    return model;
}

inline SvmModel load_model_file(const std::string& path, const Alphabet& alphabet) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model file '" + path + "'");
    try {
        return load_model(in, alphabet);
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

} // namespace tsk
