#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "tsk/kernel.hpp"

namespace tsk {

namespace detail {

// Deterministic worker fan-out: the work done for index i never depends on
// which worker runs it.
inline void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& body) {
    if (jobs <= 1 || count < 2) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            body(i);
        }
    };
    std::vector<std::thread> pool;
    const int n_threads = std::min<int>(jobs, static_cast<int>(count));
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
}

inline std::string format_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace detail

// Dense symmetric kernel matrix over one dataset.
struct GramMatrix {
    KernelParams params;
    std::vector<std::string> ids;
    int n = 0;
    std::vector<double> values; // row-major n*n

    double at(int i, int j) const { return values[static_cast<std::size_t>(i) * n + j]; }
    double& at(int i, int j) { return values[static_cast<std::size_t>(i) * n + j]; }
};

// Weighted sums of kernel values between each source sequence and the whole
// target set: kappa_i = (n_source / n_target) * sum_j K(s_i, t_j).
struct KappaVector {
    std::vector<double> values;
    int n_source = 0;
    int n_target = 0;
    KernelParams params;
};

namespace detail {

struct PreparedSet {
    std::vector<SeqSpectrum> spectra;
    std::vector<long long> self_raw;
};

inline PreparedSet prepare_set(const std::vector<Sequence>& seqs, const KernelParams& params,
                               const Alphabet& alphabet, bool need_self) {
    PreparedSet out;
    out.spectra.reserve(seqs.size());
    const auto& coeff = intersection_coefficients(params.k, params.m, alphabet.size());
    for (const auto& s : seqs) {
        out.spectra.push_back(build_spectrum(s, params.k, alphabet));
    }
    if (need_self) {
        out.self_raw.resize(seqs.size());
        for (std::size_t i = 0; i < seqs.size(); ++i) {
            out.self_raw[i] = mismatch_value(out.spectra[i], out.spectra[i], coeff, params.m);
        }
    }
    return out;
}

} // namespace detail

// Pairwise kernel values; upper triangle computed once and mirrored. With
// params.normalize, entries become K_ij / sqrt(K_ii * K_jj) on the raw
// diagonals and the diagonal is exactly 1.
inline GramMatrix gram_matrix(const std::vector<Sequence>& seqs, const KernelParams& params,
                              const Alphabet& alphabet, int jobs = 1) {
    validate_params(params);
    if (seqs.empty()) throw DataError("gram_matrix: empty sequence list");
    const int n = static_cast<int>(seqs.size());
    const auto& coeff = intersection_coefficients(params.k, params.m, alphabet.size());
    const auto prep = detail::prepare_set(seqs, params, alphabet, true);

    std::vector<long long> raw(static_cast<std::size_t>(n) * n, 0);
    detail::parallel_for(static_cast<std::size_t>(n), jobs, [&](std::size_t i) {
        for (std::size_t j = i; j < static_cast<std::size_t>(n); ++j) {
            raw[i * n + j] = (i == j)
                ? prep.self_raw[i]
                : detail::mismatch_value(prep.spectra[i], prep.spectra[j], coeff, params.m);
        }
    });

    GramMatrix g;
    g.params = params;
    g.n = n;
    g.values.assign(static_cast<std::size_t>(n) * n, 0.0);
    g.ids.reserve(seqs.size());
    for (const auto& s : seqs) g.ids.push_back(s.id);

    if (params.normalize) {
        for (int i = 0; i < n; ++i) {
            // Cannot be zero when |x| >= k; guard kept for degenerate params.
            if (prep.self_raw[static_cast<std::size_t>(i)] <= 0) {
                throw DataError("gram_matrix: zero self-kernel for sequence '" + seqs[static_cast<std::size_t>(i)].id +
                                "', cannot normalize");
            }
        }
    }
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            double v;
            if (!params.normalize) {
                v = static_cast<double>(raw[static_cast<std::size_t>(i) * n + j]);
            } else if (i == j) {
                v = 1.0;
            } else {
                v = static_cast<double>(raw[static_cast<std::size_t>(i) * n + j]) /
                    (std::sqrt(static_cast<double>(prep.self_raw[static_cast<std::size_t>(i)])) *
                     std::sqrt(static_cast<double>(prep.self_raw[static_cast<std::size_t>(j)])));
            }
            g.at(i, j) = v;
            g.at(j, i) = v;
        }
    }
    return g;
}

inline KappaVector kappa_vector(const std::vector<Sequence>& source, const std::vector<Sequence>& target,
                                const KernelParams& params, const Alphabet& alphabet, int jobs = 1) {
    validate_params(params);
    if (source.empty()) throw DataError("kappa_vector: empty source set");
    if (target.empty()) throw DataError("kappa_vector: empty target set");
    const auto& coeff = intersection_coefficients(params.k, params.m, alphabet.size());
    const auto src = detail::prepare_set(source, params, alphabet, params.normalize);
    const auto tgt = detail::prepare_set(target, params, alphabet, params.normalize);

    KappaVector kappa;
    kappa.params = params;
    kappa.n_source = static_cast<int>(source.size());
    kappa.n_target = static_cast<int>(target.size());
    kappa.values.assign(source.size(), 0.0);
    const double ratio = static_cast<double>(kappa.n_source) / static_cast<double>(kappa.n_target);

    detail::parallel_for(source.size(), jobs, [&](std::size_t i) {
        if (!params.normalize) {
            long long sum = 0;
            for (std::size_t j = 0; j < target.size(); ++j) {
                sum += detail::mismatch_value(src.spectra[i], tgt.spectra[j], coeff, params.m);
            }
            kappa.values[i] = ratio * static_cast<double>(sum);
        } else {
            double sum = 0;
            const double si = std::sqrt(static_cast<double>(src.self_raw[i]));
            for (std::size_t j = 0; j < target.size(); ++j) {
                const long long raw = detail::mismatch_value(src.spectra[i], tgt.spectra[j], coeff, params.m);
                sum += static_cast<double>(raw) /
                       (si * std::sqrt(static_cast<double>(tgt.self_raw[j])));
            }
            kappa.values[i] = ratio * sum;
        }
    });
    return kappa;
}

// Rectangular kernel block K(rows_i, cols_j); used when one set is scored
// against another (validation or test against training).
struct KernelTable {
    int n_rows = 0;
    int n_cols = 0;
    std::vector<double> values; // row-major

    double at(int i, int j) const { return values[static_cast<std::size_t>(i) * n_cols + j]; }
};

inline KernelTable cross_kernel(const std::vector<Sequence>& rows, const std::vector<Sequence>& cols,
                                const KernelParams& params, const Alphabet& alphabet, int jobs = 1) {
    validate_params(params);
    if (rows.empty() || cols.empty()) throw DataError("cross_kernel: empty sequence list");
    const auto& coeff = intersection_coefficients(params.k, params.m, alphabet.size());
    const auto r = detail::prepare_set(rows, params, alphabet, params.normalize);
    const auto c = detail::prepare_set(cols, params, alphabet, params.normalize);

    KernelTable t;
    t.n_rows = static_cast<int>(rows.size());
    t.n_cols = static_cast<int>(cols.size());
    t.values.assign(rows.size() * cols.size(), 0.0);
    if (params.normalize) {
        auto check_zero = [&](const detail::PreparedSet& p, const std::vector<Sequence>& seqs) {
            for (std::size_t i = 0; i < seqs.size(); ++i) {
                if (p.self_raw[i] <= 0) {
                    throw DataError("cross_kernel: zero self-kernel for sequence '" + seqs[i].id +
                                    "', cannot normalize");
                }
            }
        };
        check_zero(r, rows);
        check_zero(c, cols);
    }
    detail::parallel_for(rows.size(), jobs, [&](std::size_t i) {
        const double si = params.normalize ? std::sqrt(static_cast<double>(r.self_raw[i])) : 1.0;
        for (std::size_t j = 0; j < cols.size(); ++j) {
            const long long raw = detail::mismatch_value(r.spectra[i], c.spectra[j], coeff, params.m);
            double v = static_cast<double>(raw);
            if (params.normalize) v /= si * std::sqrt(static_cast<double>(c.self_raw[j]));
            t.values[i * cols.size() + j] = v;
        }
    });
    return t;
}

// --- persistence ------------------------------------------------------------
// Gram: header "n k m normalized", then n rows of n values at 17 significant
// digits. Kappa: same header plus a fifth field n_target, then one value per
// line.

inline void save_gram(std::ostream& out, const GramMatrix& g) {
    out << g.n << ' ' << g.params.k << ' ' << g.params.m << ' ' << (g.params.normalize ? 1 : 0) << '\n';
    for (int i = 0; i < g.n; ++i) {
        for (int j = 0; j < g.n; ++j) {
            if (j) out << ' ';
            out << detail::format_g17(g.at(i, j));
        }
        out << '\n';
    }
}

inline void save_gram_file(const std::string& path, const GramMatrix& g) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write gram file '" + path + "'");
    save_gram(out, g);
}

inline GramMatrix load_gram(std::istream& in) {
    GramMatrix g;
    int normalized = 0;
    if (!(in >> g.n >> g.params.k >> g.params.m >> normalized)) {
        throw DataError("gram file: malformed header (expected 'n k m normalized')");
    }
    if (g.n < 1) throw DataError("gram file: invalid dimension " + std::to_string(g.n));
    g.params.normalize = normalized != 0;
    g.values.assign(static_cast<std::size_t>(g.n) * g.n, 0.0);
    for (std::size_t i = 0; i < g.values.size(); ++i) {
        if (!(in >> g.values[i])) {
            throw DataError("gram file: truncated at value " + std::to_string(i));
        }
    }
    for (int i = 0; i < g.n; ++i) {
        for (int j = i + 1; j < g.n; ++j) {
            if (g.at(i, j) != g.at(j, i)) {
                throw DataError("gram file: asymmetric at (" + std::to_string(i) + "," +
                                std::to_string(j) + ")");
            }
        }
    }
    return g;
}

inline GramMatrix load_gram_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open gram file '" + path + "'");
    try {
        return load_gram(in);
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

inline void save_kappa(std::ostream& out, const KappaVector& kappa) {
    out << kappa.n_source << ' ' << kappa.params.k << ' ' << kappa.params.m << ' '
        << (kappa.params.normalize ? 1 : 0) << ' ' << kappa.n_target << '\n';
    for (double v : kappa.values) out << detail::format_g17(v) << '\n';
}

inline void save_kappa_file(const std::string& path, const KappaVector& kappa) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write kappa file '" + path + "'");
    save_kappa(out, kappa);
}

inline KappaVector load_kappa(std::istream& in) {
    KappaVector kappa;
    int normalized = 0;
    if (!(in >> kappa.n_source >> kappa.params.k >> kappa.params.m >> normalized >> kappa.n_target)) {
        throw DataError("kappa file: malformed header (expected 'n k m normalized n_target')");
    }
    kappa.params.normalize = normalized != 0;
    kappa.values.assign(static_cast<std::size_t>(kappa.n_source), 0.0);
    for (std::size_t i = 0; i < kappa.values.size(); ++i) {
        if (!(in >> kappa.values[i])) {
            throw DataError("kappa file: truncated at value " + std::to_string(i));
        }
    }
    return kappa;
}

inline KappaVector load_kappa_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open kappa file '" + path + "'");
    try {
        return load_kappa(in);
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

} // namespace tsk
