#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <span>
#include <tuple>
#include <vector>

#include "tsk/kmer.hpp"

namespace tsk {

namespace detail {

inline long long narrow_i128(__int128 v, const char* what) {
    if (v < 0 || v > static_cast<__int128>(INT64_MAX)) {
        throw DataError(std::string(what) + ": integer overflow (k, m too large)");
    }
    return static_cast<long long>(v);
}

// Number of gamma with dist(gamma, a) <= m and dist(gamma, b) <= m, where
// dist(a, b) = q. Depends only on (q, k, m, d). Combinatorial sum over the
// choices gamma makes at agreeing and disagreeing positions of (a, b).
inline long long intersection_coefficient_closed_form(int q, int k, int m, int d) {
    std::vector<std::vector<__int128>> binom(static_cast<std::size_t>(k) + 1,
                                             std::vector<__int128>(static_cast<std::size_t>(k) + 1, 0));
    for (int n = 0; n <= k; ++n) {
        binom[n][0] = 1;
        for (int r = 1; r <= n; ++r) {
            binom[n][r] = binom[n - 1][r - 1] + (r <= n - 1 ? binom[n - 1][r] : 0);
        }
    }
    auto ipow = [](int base, int exp) {
        __int128 v = 1;
        for (int i = 0; i < exp; ++i) v *= base;
        return v;
    };
    __int128 total = 0;
    // xa: positions (of the q differing ones) where gamma copies a,
    // xb: where gamma copies b, rest take one of d-2 third symbols.
    // t: agreeing positions where gamma deviates, one of d-1 symbols.
    for (int xa = 0; xa <= q; ++xa) {
        for (int xb = 0; xb + xa <= q; ++xb) {
            const int other = q - xa - xb;
            if (other > 0 && d < 3) continue;
            for (int t = 0; t <= k - q; ++t) {
                if (q - xa + t > m) continue;
                if (q - xb + t > m) continue;
                __int128 term = binom[q][xa] * binom[q - xa][xb];
                term *= ipow(d - 2 >= 0 ? d - 2 : 0, other);
                term *= binom[k - q][t];
                term *= ipow(d - 1, t);
                total += term;
            }
        }
    }
    return narrow_i128(total, "intersection coefficient");
}

// Same quantity by walking all d^k candidate gammas against the canonical
// pair a = 0^k, b = 1^q 0^(k-q). Only usable when d^k is small.
inline long long intersection_coefficient_exhaustive(int q, int k, int m, int d) {
    if (q > 0 && d < 2) return 0;
    std::vector<std::uint8_t> gamma(static_cast<std::size_t>(k), 0);
    long long count = 0;
    while (true) {
        int da = 0, db = 0;
        bool ok = true;
        for (int i = 0; i < k; ++i) {
            const std::uint8_t g = gamma[static_cast<std::size_t>(i)];
            const std::uint8_t ai = 0;
            const std::uint8_t bi = (i < q) ? 1 : 0;
            if (g != ai && ++da > m) { ok = false; break; }
            if (g != bi && ++db > m) { ok = false; break; }
        }
        if (ok) ++count;
        int pos = k - 1;
        while (pos >= 0) {
            if (++gamma[static_cast<std::size_t>(pos)] < d) break;
            gamma[static_cast<std::size_t>(pos)] = 0;
            --pos;
        }
        if (pos < 0) break;
    }
    return count;
}

inline double pow_int(int base, int exp) {
    double v = 1;
    for (int i = 0; i < exp; ++i) v *= base;
    return v;
}

} // namespace detail

// I(q) for q = 0..k: the number of k-mers within Hamming distance m of both
// members of a k-mer pair at distance q. Exhaustively enumerated when the
// k-mer space is small, closed-form sum otherwise; the two routes are
// equivalent (tested). Cached per (k, m, d).
inline const std::vector<long long>& intersection_coefficients(int k, int m, int d) {
    static std::map<std::tuple<int, int, int>, std::vector<long long>> cache;
    static std::mutex mutex;
    std::lock_guard<std::mutex> lock(mutex);
    const auto key = std::make_tuple(k, m, d);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;

    const bool exhaustive = detail::pow_int(d, k) <= 1e6;
    std::vector<long long> table(static_cast<std::size_t>(k) + 1, 0);
    for (int q = 0; q <= k; ++q) {
        table[static_cast<std::size_t>(q)] =
            exhaustive ? detail::intersection_coefficient_exhaustive(q, k, m, d)
                       : detail::intersection_coefficient_closed_form(q, k, m, d);
    }
    return cache.emplace(key, std::move(table)).first->second;
}

namespace detail {

// Distinct k-mers of one sequence with their counts, digits kept for
// Hamming-distance scans.
struct SeqSpectrum {
    std::vector<std::vector<std::uint8_t>> digits;
    std::vector<long long> counts;
};

inline SeqSpectrum build_spectrum(const Sequence& x, int k, const Alphabet& alphabet) {
    const KmerCounts counts = kmer_counts(x, k, alphabet);
    SeqSpectrum s;
    s.digits.reserve(counts.items.size());
    s.counts.reserve(counts.items.size());
    for (const auto& [code, c] : counts.items) {
        s.digits.push_back(decode_kmer(code, k, alphabet.size()));
        s.counts.push_back(c);
    }
    return s;
}

inline int hamming_capped(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b, int cap) {
    int dist = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] != b[i] && ++dist > cap) return dist;
    }
    return dist;
}

// Pairwise Hamming-distance statistics route: K = sum over k-mer pairs of
// count_a * count_b * I(dist(a, b)).
inline long long mismatch_value(const SeqSpectrum& a, const SeqSpectrum& b,
                                const std::vector<long long>& coeff, int m) {
    const int cap = 2 * m; // I(q) = 0 beyond 2m by the triangle inequality
    long long total = 0;
    for (std::size_t i = 0; i < a.digits.size(); ++i) {
        const auto& da = a.digits[i];
        const long long ca = a.counts[i];
        for (std::size_t j = 0; j < b.digits.size(); ++j) {
            const int q = hamming_capped(da, b.digits[j], cap);
            if (q > cap) continue;
            total += ca * b.counts[j] * coeff[static_cast<std::size_t>(q)];
        }
    }
    return total;
}

inline void check_pair_preconditions(const Sequence& x, const Sequence& y, int k) {
    for (const Sequence* s : {&x, &y}) {
        if (s->length() < static_cast<std::size_t>(k)) {
            throw DataError("kernel: sequence '" + s->id + "' has length " +
                            std::to_string(s->length()) + " < k=" + std::to_string(k));
        }
    }
}

} // namespace detail

// Exact inner product of k-mer count vectors (integer-valued).
inline long long spectrum_kernel(const Sequence& x, const Sequence& y, int k, const Alphabet& alphabet) {
    detail::check_pair_preconditions(x, y, k);
    const KmerCounts cx = kmer_counts(x, k, alphabet);
    const KmerCounts cy = kmer_counts(y, k, alphabet);
    long long total = 0;
    std::size_t i = 0, j = 0;
    while (i < cx.items.size() && j < cy.items.size()) {
        if (cx.items[i].first < cy.items[j].first) {
            ++i;
        } else if (cy.items[j].first < cx.items[i].first) {
            ++j;
        } else {
            total += cx.items[i].second * cy.items[j].second;
            ++i;
            ++j;
        }
    }
    return total;
}

// (k,m)-mismatch kernel, optimized path. Exact integer value.
inline long long mismatch_kernel(const Sequence& x, const Sequence& y, const KernelParams& params,
                                 const Alphabet& alphabet) {
    validate_params(params);
    detail::check_pair_preconditions(x, y, params.k);
    const auto& coeff = intersection_coefficients(params.k, params.m, alphabet.size());
    const auto sx = detail::build_spectrum(x, params.k, alphabet);
    const auto sy = detail::build_spectrum(y, params.k, alphabet);
    return detail::mismatch_value(sx, sy, coeff, params.m);
}

// (k,m)-mismatch kernel by explicit neighborhood expansion. Reference
// implementation; the optimized path must agree with it exactly.
inline long long mismatch_kernel_bruteforce(const Sequence& x, const Sequence& y,
                                            const KernelParams& params, const Alphabet& alphabet) {
    validate_params(params);
    detail::check_pair_preconditions(x, y, params.k);
    const int d = alphabet.size();

    auto expanded = [&](const Sequence& s) {
        const KmerCounts counts = kmer_counts(s, params.k, alphabet);
        std::vector<std::pair<std::uint64_t, long long>> acc;
        for (const auto& [code, c] : counts.items) {
            const auto digits = decode_kmer(code, params.k, d);
            for (const auto& neighbor : mismatch_neighborhood(digits, params.m, alphabet)) {
                acc.emplace_back(encode_kmer(neighbor, d), c);
            }
        }
        std::sort(acc.begin(), acc.end());
        std::vector<std::pair<std::uint64_t, long long>> merged;
        for (std::size_t i = 0; i < acc.size();) {
            std::size_t j = i;
            long long sum = 0;
            while (j < acc.size() && acc[j].first == acc[i].first) sum += acc[j++].second;
            merged.emplace_back(acc[i].first, sum);
            i = j;
        }
        return merged;
    };

    const auto mx = expanded(x);
    const auto my = expanded(y);
    long long total = 0;
    std::size_t i = 0, j = 0;
    while (i < mx.size() && j < my.size()) {
        if (mx[i].first < my[j].first) {
            ++i;
        } else if (my[j].first < mx[i].first) {
            ++j;
        } else {
            total += mx[i].second * my[j].second;
            ++i;
            ++j;
        }
    }
    return total;
}

} // namespace tsk
