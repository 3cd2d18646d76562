#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tsk/fasta.hpp"

namespace tsk {

// Background model: a sequence first draws one component, then emits symbols
// i.i.d. from that component. Domains shift by using different mixtures.
struct BackgroundComponent {
    double weight = 1.0;
    std::vector<double> probs; // one entry per alphabet symbol
};

struct BackgroundMixture {
    std::vector<BackgroundComponent> components;
};

inline void validate_mixture(const BackgroundMixture& mix, const Alphabet& alphabet,
                             const std::string& what) {
    if (mix.components.empty()) throw DataError(what + ": background mixture has no components");
    double wsum = 0.0;
    for (const auto& c : mix.components) {
        if (c.weight <= 0) throw DataError(what + ": component weight must be > 0");
        wsum += c.weight;
        if (c.probs.size() != alphabet.size()) {
            throw DataError(what + ": component has " + std::to_string(c.probs.size()) +
                            " symbol probabilities, alphabet has " + std::to_string(alphabet.size()));
        }
        double psum = 0.0;
        for (double p : c.probs) {
            if (p < 0) throw DataError(what + ": negative symbol probability");
            psum += p;
        }
        if (std::abs(psum - 1.0) > 1e-6) {
            throw DataError(what + ": symbol probabilities sum to " + std::to_string(psum) +
                            ", expected 1");
        }
    }
    if (std::abs(wsum - 1.0) > 1e-6) {
        throw DataError(what + ": component weights sum to " + std::to_string(wsum) + ", expected 1");
    }
}

struct SynthProfile {
    int length = 40;
    int n_train = 200;      // source training total, split evenly between classes
    int n_validation = 100; // target validation total (before ratio rounding)
    int n_test = 200;       // target test total (before ratio rounding)
    std::string motif = "TGACGTCATG";
    double motif_mutation_rate = 0.2; // per-position substitution chance when planting
    int neg_ratio = 1;                // target negatives = ratio * positives
    BackgroundMixture source_background;
    BackgroundMixture target_background;
};

inline void validate_profile(const SynthProfile& p, const Alphabet& alphabet) {
    if (p.length < 1) throw DataError("synthetic: sequence length must be >= 1");
    if (p.motif.empty()) throw DataError("synthetic: motif is empty");
    if (static_cast<int>(p.motif.size()) > p.length) {
        throw DataError("synthetic: motif length " + std::to_string(p.motif.size()) +
                        " exceeds sequence length " + std::to_string(p.length));
    }
    encode_sequence("motif", p.motif, alphabet); // rejects foreign characters
    if (p.motif_mutation_rate < 0 || p.motif_mutation_rate >= 1) {
        throw DataError("synthetic: motif mutation rate must be in [0, 1)");
    }
    if (p.neg_ratio < 1) throw DataError("synthetic: negative ratio must be >= 1");
    if (p.n_train < 2) throw DataError("synthetic: need at least 2 training sequences");
    if (p.n_validation < 1 + p.neg_ratio || p.n_test < 1 + p.neg_ratio) {
        throw DataError("synthetic: target split too small for ratio 1:" +
                        std::to_string(p.neg_ratio));
    }
    validate_mixture(p.source_background, alphabet, "source background");
    validate_mixture(p.target_background, alphabet, "target background");
}

namespace detail {

// 53-bit uniform in [0, 1); fixed construction so corpora do not depend on the
// standard library's distribution internals.
inline double unit_real(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

inline std::size_t pick_cumulative(const std::vector<double>& cum, std::mt19937_64& rng) {
    const double u = unit_real(rng) * cum.back();
    const auto it = std::upper_bound(cum.begin(), cum.end(), u);
    std::size_t idx = static_cast<std::size_t>(it - cum.begin());
    if (idx >= cum.size()) idx = cum.size() - 1;
    return idx;
}

struct MixtureSampler {
    std::vector<double> comp_cum;
    std::vector<std::vector<double>> symbol_cum;

    explicit MixtureSampler(const BackgroundMixture& mix) {
        double acc = 0.0;
        for (const auto& c : mix.components) {
            acc += c.weight;
            comp_cum.push_back(acc);
            std::vector<double> sc;
            double p = 0.0;
            for (double v : c.probs) {
                p += v;
                sc.push_back(p);
            }
            symbol_cum.push_back(std::move(sc));
        }
    }

    std::vector<std::uint8_t> draw(int length, std::mt19937_64& rng) const {
        const std::size_t comp = pick_cumulative(comp_cum, rng);
        std::vector<std::uint8_t> out(static_cast<std::size_t>(length));
        for (auto& sym : out) {
            sym = static_cast<std::uint8_t>(pick_cumulative(symbol_cum[comp], rng));
        }
        return out;
    }
};

inline bool contains_codes(const std::vector<std::uint8_t>& haystack,
                           const std::vector<std::uint8_t>& needle) {
    return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) !=
           haystack.end();
}

} // namespace detail

struct SynthSplit {
    std::vector<Sequence> sequences;
    std::vector<int> labels;
};

struct SynthCorpus {
    SynthSplit source_train;
    SynthSplit target_validation;
    SynthSplit target_test;
};

namespace detail {

inline SynthSplit generate_split(const SynthProfile& profile, const MixtureSampler& background,
                                 const std::vector<std::uint8_t>& motif_codes,
                                 const std::string& id_prefix, int n_pos, int n_neg,
                                 std::size_t alphabet_size, std::mt19937_64& rng) {
    SynthSplit split;
    const int L = profile.length;
    const int span = L - static_cast<int>(motif_codes.size()) + 1;
    for (int i = 0; i < n_pos; ++i) {
        Sequence s;
        s.id = id_prefix + "_pos_" + std::to_string(i);
        s.codes = background.draw(L, rng);
        const int at = static_cast<int>(unit_real(rng) * span) % span;
        for (std::size_t j = 0; j < motif_codes.size(); ++j) {
            std::uint8_t sym = motif_codes[j];
            if (profile.motif_mutation_rate > 0 && unit_real(rng) < profile.motif_mutation_rate) {
                // substitute with a different symbol, never the original
                const std::size_t off =
                    1 + static_cast<std::size_t>(unit_real(rng) * static_cast<double>(alphabet_size - 1)) %
                            (alphabet_size - 1);
                sym = static_cast<std::uint8_t>((sym + off) % alphabet_size);
            }
            s.codes[static_cast<std::size_t>(at) + j] = sym;
        }
        split.sequences.push_back(std::move(s));
        split.labels.push_back(1);
    }
    for (int i = 0; i < n_neg; ++i) {
        Sequence s;
        s.id = id_prefix + "_neg_" + std::to_string(i);
        bool accepted = false;
        for (int attempt = 0; attempt < 10000; ++attempt) {
            s.codes = background.draw(L, rng);
            if (!contains_codes(s.codes, motif_codes)) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            throw DataError("synthetic: background emits the motif too often; negatives infeasible");
        }
        split.sequences.push_back(std::move(s));
        split.labels.push_back(-1);
    }
    return split;
}

} // namespace detail

// Positives carry a planted (possibly mutated) motif; negatives are rejected
// until free of the exact motif, so the labeling rule is shared across
// domains while the background marginal shifts.
inline SynthCorpus generate_corpus(const SynthProfile& profile, const Alphabet& alphabet,
                                   std::uint64_t seed) {
    validate_profile(profile, alphabet);
    const Sequence motif = encode_sequence("motif", profile.motif, alphabet);
    const detail::MixtureSampler source_bg(profile.source_background);
    const detail::MixtureSampler target_bg(profile.target_background);
    std::mt19937_64 rng(seed);

    const int train_pos = profile.n_train / 2;
    const int train_neg = profile.n_train - train_pos;
    const int val_pos = profile.n_validation / (1 + profile.neg_ratio);
    const int test_pos = profile.n_test / (1 + profile.neg_ratio);

    SynthCorpus corpus;
    corpus.source_train = detail::generate_split(profile, source_bg, motif.codes, "train", train_pos,
                                                 train_neg, alphabet.size(), rng);
    corpus.target_validation =
        detail::generate_split(profile, target_bg, motif.codes, "val", val_pos,
                               val_pos * profile.neg_ratio, alphabet.size(), rng);
    corpus.target_test = detail::generate_split(profile, target_bg, motif.codes, "test", test_pos,
                                                test_pos * profile.neg_ratio, alphabet.size(), rng);
    return corpus;
}

struct CorpusPaths {
    std::string source_fasta, source_labels;
    std::string validation_fasta, validation_labels;
    std::string test_fasta, test_labels;
};

inline CorpusPaths corpus_paths(const std::string& dir) {
    CorpusPaths p;
    p.source_fasta = dir + "/source_train.fasta";
    p.source_labels = dir + "/source_train.labels";
    p.validation_fasta = dir + "/target_validation.fasta";
    p.validation_labels = dir + "/target_validation.labels";
    p.test_fasta = dir + "/target_test.fasta";
    p.test_labels = dir + "/target_test.labels";
    return p;
}

inline void write_corpus(const std::string& dir, const SynthCorpus& corpus, const Alphabet& alphabet) {
    const CorpusPaths p = corpus_paths(dir);
    auto write_split = [&](const SynthSplit& split, const std::string& fasta_path,
                           const std::string& label_path) {
        write_fasta_file(fasta_path, split.sequences, alphabet);
        std::vector<std::pair<std::string, int>> labels;
        for (std::size_t i = 0; i < split.sequences.size(); ++i) {
            labels.emplace_back(split.sequences[i].id, split.labels[i]);
        }
        write_labels_file(label_path, labels);
    };
    write_split(corpus.source_train, p.source_fasta, p.source_labels);
    write_split(corpus.target_validation, p.validation_fasta, p.validation_labels);
    write_split(corpus.target_test, p.test_fasta, p.test_labels);
}

inline std::string describe_mixture(const BackgroundMixture& mix) {
    std::ostringstream out;
    for (std::size_t c = 0; c < mix.components.size(); ++c) {
        if (c) out << " | ";
        out << mix.components[c].weight << " @ ";
        for (std::size_t i = 0; i < mix.components[c].probs.size(); ++i) {
            if (i) out << ',';
            out << mix.components[c].probs[i];
        }
    }
    return out.str();
}

inline std::string synth_manifest(const SynthProfile& profile, const Alphabet& alphabet,
                                  std::uint64_t seed, const SynthCorpus& corpus) {
    std::ostringstream out;
    out << "tsk synthetic corpus\n"
        << "alphabet " << alphabet.name() << '\n'
        << "seed " << seed << '\n'
        << "length " << profile.length << '\n'
        << "motif " << profile.motif << '\n'
        << "motif_mutation_rate " << profile.motif_mutation_rate << '\n'
        << "neg_ratio " << profile.neg_ratio << '\n'
        << "source_background " << describe_mixture(profile.source_background) << '\n'
        << "target_background " << describe_mixture(profile.target_background) << '\n'
        << "source_train " << corpus.source_train.sequences.size() << '\n'
        << "target_validation " << corpus.target_validation.sequences.size() << '\n'
        << "target_test " << corpus.target_test.sequences.size() << '\n';
    return out.str();
}

} // namespace tsk
