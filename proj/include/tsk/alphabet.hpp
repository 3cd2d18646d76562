#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tsk/errors.hpp"

namespace tsk {

// Fixed symbol dictionary. Index lookup is a bijection onto 0..size()-1.
// Lookups are case-insensitive; symbols are stored uppercased.
class Alphabet {
public:
    Alphabet(std::string_view symbols, std::string name)
        : name_(std::move(name)) {
        index_.fill(-1);
        for (char raw : symbols) {
            const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(raw)));
            if (index_[static_cast<unsigned char>(c)] >= 0) {
                throw DataError("alphabet '" + name_ + "': duplicate symbol '" + std::string(1, c) + "'");
            }
            index_[static_cast<unsigned char>(c)] = static_cast<std::int16_t>(symbols_.size());
            symbols_.push_back(c);
        }
        if (symbols_.empty()) {
            throw DataError("alphabet '" + name_ + "': no symbols");
        }
        const char lower_start = 'a';
        for (std::size_t i = 0; i < symbols_.size(); ++i) {
            const char c = symbols_[i];
            if (c >= 'A' && c <= 'Z') {
                index_[static_cast<unsigned char>(lower_start + (c - 'A'))] = static_cast<std::int16_t>(i);
            }
        }
    }

    static const Alphabet& dna() {
        static const Alphabet a("ACGT", "dna");
        return a;
    }

    static const Alphabet& protein() {
        static const Alphabet a("ACDEFGHIKLMNPQRSTVWY", "protein");
        return a;
    }

    static const Alphabet& by_name(std::string_view name) {
        if (name == "dna") return dna();
        if (name == "protein") return protein();
        throw UsageError("unknown alphabet '" + std::string(name) + "' (expected dna or protein)");
    }

    int size() const { return static_cast<int>(symbols_.size()); }
    const std::string& name() const { return name_; }
    const std::string& symbols() const { return symbols_; }

    char symbol(std::uint8_t code) const { return symbols_[code]; }

    // -1 when the character is not in the dictionary.
    int code_of(char c) const { return index_[static_cast<unsigned char>(c)]; }

private:
    std::string name_;
    std::string symbols_;
    std::array<std::int16_t, 256> index_{};
};

// Index-encoded sequence. Every code is < alphabet size.
struct Sequence {
    std::string id;
    std::vector<std::uint8_t> codes;

    std::size_t length() const { return codes.size(); }
};

inline Sequence encode_sequence(std::string id, std::string_view chars, const Alphabet& alphabet) {
    Sequence s;
    s.id = std::move(id);
    s.codes.reserve(chars.size());
    for (std::size_t i = 0; i < chars.size(); ++i) {
        const int code = alphabet.code_of(chars[i]);
        if (code < 0) {
            throw DataError("sequence '" + s.id + "': character '" + std::string(1, chars[i]) +
                            "' at position " + std::to_string(i + 1) + " is not in alphabet '" +
                            alphabet.name() + "'");
        }
        s.codes.push_back(static_cast<std::uint8_t>(code));
    }
    if (s.codes.empty()) {
        throw DataError("sequence '" + s.id + "': empty sequence");
    }
    return s;
}

inline std::string decode_sequence(const Sequence& s, const Alphabet& alphabet) {
    std::string out;
    out.reserve(s.codes.size());
    for (std::uint8_t c : s.codes) out.push_back(alphabet.symbol(c));
    return out;
}

enum class Domain { source, target };

inline const char* domain_name(Domain d) {
    return d == Domain::source ? "source" : "target";
}

// Sequences paired with labels in {+1, -1}.
struct LabeledDataset {
    std::vector<Sequence> sequences;
    std::vector<int> labels;
    Domain domain = Domain::source;

    std::size_t size() const { return sequences.size(); }
};

inline void validate_dataset(const LabeledDataset& data) {
    if (data.sequences.size() != data.labels.size()) {
        throw DataError("dataset: " + std::to_string(data.sequences.size()) + " sequences but " +
                        std::to_string(data.labels.size()) + " labels");
    }
    for (std::size_t i = 0; i < data.labels.size(); ++i) {
        if (data.labels[i] != 1 && data.labels[i] != -1) {
            throw DataError("dataset: label " + std::to_string(data.labels[i]) + " for sequence '" +
                            data.sequences[i].id + "' is not +1 or -1");
        }
    }
}

} // namespace tsk
