#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tsk/alphabet.hpp"
#include "tsk/errors.hpp"

namespace tsk {

// (k, m, normalize) kernel configuration. 0 <= m <= k.
struct KernelParams {
    int k = 1;
    int m = 0;
    bool normalize = false;
};

inline void validate_params(const KernelParams& p) {
    if (p.k < 1) throw DataError("kernel params: k must be >= 1, got " + std::to_string(p.k));
    if (p.m < 0 || p.m > p.k) {
        throw DataError("kernel params: m must be in [0, k], got m=" + std::to_string(p.m) +
                        " k=" + std::to_string(p.k));
    }
}

namespace detail {

// Largest k such that d^k fits into uint64 with headroom for counting.
inline void check_kmer_width(int k, int d) {
    // d >= 2 in practice; d == 1 encodes everything to 0.
    unsigned long long cap = 1;
    for (int i = 0; i < k; ++i) {
        if (cap > (1ull << 62) / static_cast<unsigned long long>(d > 1 ? d : 1)) {
            throw DataError("k=" + std::to_string(k) + " too large for alphabet size " +
                            std::to_string(d));
        }
        cap *= static_cast<unsigned long long>(d > 1 ? d : 1);
    }
}

} // namespace detail

inline std::uint64_t encode_kmer(std::span<const std::uint8_t> codes, int d) {
    std::uint64_t v = 0;
    for (std::uint8_t c : codes) v = v * static_cast<std::uint64_t>(d) + c;
    return v;
}

inline std::vector<std::uint8_t> decode_kmer(std::uint64_t value, int k, int d) {
    std::vector<std::uint8_t> codes(static_cast<std::size_t>(k));
    for (int i = k - 1; i >= 0; --i) {
        codes[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(value % static_cast<std::uint64_t>(d));
        value /= static_cast<std::uint64_t>(d);
    }
    return codes;
}

inline std::string kmer_string(std::uint64_t value, int k, const Alphabet& alphabet) {
    const auto codes = decode_kmer(value, k, alphabet.size());
    std::string out;
    out.reserve(codes.size());
    for (std::uint8_t c : codes) out.push_back(alphabet.symbol(c));
    return out;
}

// Exact k-mer counts of one sequence, keyed by encoded k-mer, sorted by key.
// The counts sum to |x| - k + 1.
struct KmerCounts {
    int k = 0;
    std::vector<std::pair<std::uint64_t, long long>> items;

    long long total() const {
        long long t = 0;
        for (const auto& [code, c] : items) t += c;
        return t;
    }

    long long count_of(std::uint64_t code) const {
        const auto it = std::lower_bound(items.begin(), items.end(), code,
                                         [](const auto& a, std::uint64_t b) { return a.first < b; });
        if (it == items.end() || it->first != code) return 0;
        return it->second;
    }
};

inline KmerCounts kmer_counts(const Sequence& x, int k, const Alphabet& alphabet) {
    if (k < 1) throw DataError("kmer_counts: k must be >= 1");
    if (x.length() < static_cast<std::size_t>(k)) {
        throw DataError("kmer_counts: sequence '" + x.id + "' has length " +
                        std::to_string(x.length()) + " < k=" + std::to_string(k));
    }
    detail::check_kmer_width(k, alphabet.size());
    const int d = alphabet.size();
    std::vector<std::uint64_t> windows;
    windows.reserve(x.length() - static_cast<std::size_t>(k) + 1);
    for (std::size_t i = 0; i + static_cast<std::size_t>(k) <= x.length(); ++i) {
        windows.push_back(encode_kmer(std::span(x.codes).subspan(i, static_cast<std::size_t>(k)), d));
    }
    std::sort(windows.begin(), windows.end());
    KmerCounts out;
    out.k = k;
    for (std::size_t i = 0; i < windows.size();) {
        std::size_t j = i;
        while (j < windows.size() && windows[j] == windows[i]) ++j;
        out.items.emplace_back(windows[i], static_cast<long long>(j - i));
        i = j;
    }
    return out;
}

// All k-mers within Hamming distance m of gamma, sorted lexicographically.
// Size: sum_{i=0..m} C(k,i) * (d-1)^i.
inline std::vector<std::vector<std::uint8_t>> mismatch_neighborhood(std::span<const std::uint8_t> gamma,
                                                                    int m, const Alphabet& alphabet) {
    const int k = static_cast<int>(gamma.size());
    if (m < 0 || m > k) {
        throw DataError("mismatch_neighborhood: m=" + std::to_string(m) + " outside [0, k=" +
                        std::to_string(k) + "]");
    }
    const int d = alphabet.size();
    std::vector<std::vector<std::uint8_t>> out;
    std::vector<std::uint8_t> cur(gamma.begin(), gamma.end());
    // Depth-first over positions; each neighbor is produced exactly once
    // because a substituted position never keeps its original symbol.
    auto rec = [&](auto&& self, int pos, int budget) -> void {
        if (pos == k) {
            out.push_back(cur);
            return;
        }
        self(self, pos + 1, budget);
        if (budget > 0) {
            const std::uint8_t orig = cur[static_cast<std::size_t>(pos)];
            for (int c = 0; c < d; ++c) {
                if (static_cast<std::uint8_t>(c) == orig) continue;
                cur[static_cast<std::size_t>(pos)] = static_cast<std::uint8_t>(c);
                self(self, pos + 1, budget - 1);
            }
            cur[static_cast<std::size_t>(pos)] = orig;
        }
    };
    rec(rec, 0, m);
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace tsk
