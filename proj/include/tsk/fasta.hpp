#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "tsk/alphabet.hpp"
#include "tsk/errors.hpp"

namespace tsk {

namespace detail {

inline void strip_eol(std::string& line) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
}

inline bool is_blank(const std::string& line) {
    for (char c : line) {
        if (!std::isspace(static_cast<unsigned char>(c))) return false;
    }
    return true;
}

inline std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

inline std::string join_ids(const std::vector<std::string>& ids, std::size_t cap = 10) {
    std::string out;
    for (std::size_t i = 0; i < ids.size() && i < cap; ++i) {
        if (i) out += ", ";
        out += ids[i];
    }
    if (ids.size() > cap) out += ", ... (" + std::to_string(ids.size()) + " total)";
    return out;
}

} // namespace detail

// FASTA: lines beginning '>' start a record, the id is the header token up to
// the first whitespace. Sequence characters are case-insensitive. Record order
// is preserved. Rejects characters outside the alphabet, empty records and
// duplicate ids.
inline std::vector<Sequence> parse_fasta(std::istream& in, const Alphabet& alphabet) {
    std::vector<Sequence> out;
    std::unordered_set<std::string> seen;
    std::string line;
    std::string cur_id;
    std::string cur_chars;
    long line_no = 0;
    long record_line = 0;
    bool in_record = false;

    auto flush = [&]() {
        if (!in_record) return;
        if (cur_chars.empty()) {
            throw DataError("fasta: record '" + cur_id + "' (line " + std::to_string(record_line) +
                            ") has no sequence characters");
        }
        out.push_back(encode_sequence(cur_id, cur_chars, alphabet));
        cur_chars.clear();
    };

    while (std::getline(in, line)) {
        ++line_no;
        detail::strip_eol(line);
        if (detail::is_blank(line)) continue;
        if (line[0] == '>') {
            flush();
            std::string header = line.substr(1);
            const auto toks = detail::split_ws(header);
            if (toks.empty()) {
                throw DataError("fasta: empty record id at line " + std::to_string(line_no));
            }
            cur_id = toks[0];
            if (!seen.insert(cur_id).second) {
                throw DataError("fasta: duplicate record id '" + cur_id + "' at line " +
                                std::to_string(line_no));
            }
            record_line = line_no;
            in_record = true;
            continue;
        }
        if (!in_record) {
            throw DataError("fasta: sequence data before first '>' header at line " +
                            std::to_string(line_no));
        }
        for (char c : line) {
            if (alphabet.code_of(c) < 0) {
                throw DataError("fasta: record '" + cur_id + "', line " + std::to_string(line_no) +
                                ": character '" + std::string(1, c) + "' is not in alphabet '" +
                                alphabet.name() + "'");
            }
        }
        cur_chars += line;
    }
    flush();
    return out;
}

inline std::vector<Sequence> parse_fasta_file(const std::string& path, const Alphabet& alphabet) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open fasta file '" + path + "'");
    try {
        return parse_fasta(in, alphabet);
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

inline void write_fasta(std::ostream& out, const std::vector<Sequence>& seqs,
                        const Alphabet& alphabet, std::size_t width = 70) {
    for (const auto& s : seqs) {
        out << '>' << s.id << '\n';
        const std::string chars = decode_sequence(s, alphabet);
        for (std::size_t i = 0; i < chars.size(); i += width) {
            out << chars.substr(i, width) << '\n';
        }
    }
}

inline void write_fasta_file(const std::string& path, const std::vector<Sequence>& seqs,
                             const Alphabet& alphabet) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write fasta file '" + path + "'");
    write_fasta(out, seqs, alphabet);
}

// Two-column whitespace-separated text: id, label in {+1,-1}. '#' comment
// lines and blank lines are ignored.
inline std::vector<std::pair<std::string, int>> parse_labels(std::istream& in) {
    std::vector<std::pair<std::string, int>> out;
    std::unordered_set<std::string> seen;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        detail::strip_eol(line);
        if (detail::is_blank(line) || line[0] == '#') continue;
        const auto toks = detail::split_ws(line);
        if (toks.size() != 2) {
            throw DataError("labels: line " + std::to_string(line_no) +
                            ": expected 'id label', got " + std::to_string(toks.size()) + " fields");
        }
        int label = 0;
        try {
            std::size_t pos = 0;
            label = std::stoi(toks[1], &pos);
            if (pos != toks[1].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw DataError("labels: line " + std::to_string(line_no) + ": invalid label '" +
                            toks[1] + "' for id '" + toks[0] + "'");
        }
        if (label != 1 && label != -1) {
            throw DataError("labels: line " + std::to_string(line_no) + ": label " + toks[1] +
                            " for id '" + toks[0] + "' is not +1 or -1");
        }
        if (!seen.insert(toks[0]).second) {
            throw DataError("labels: duplicate id '" + toks[0] + "' at line " +
                            std::to_string(line_no));
        }
        out.emplace_back(toks[0], label);
    }
    return out;
}

inline void write_labels_file(const std::string& path,
                              const std::vector<std::pair<std::string, int>>& labels) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write label file '" + path + "'");
    for (const auto& [id, y] : labels) {
        out << id << (y > 0 ? " +1" : " -1") << '\n';
    }
}

// Joins a FASTA file with a label file by id. Order follows FASTA record
// order; ids unmatched in either direction are rejected.
inline LabeledDataset load_labeled_dataset(const std::string& seq_path, const std::string& label_path,
                                           const Alphabet& alphabet, Domain domain = Domain::source) {
    LabeledDataset data;
    data.domain = domain;
    data.sequences = parse_fasta_file(seq_path, alphabet);

    std::ifstream in(label_path);
    if (!in) throw DataError("cannot open label file '" + label_path + "'");
    std::vector<std::pair<std::string, int>> rows;
    try {
        rows = parse_labels(in);
    } catch (const DataError& e) {
        throw DataError(label_path + ": " + e.what());
    }

    std::unordered_map<std::string, int> by_id;
    for (const auto& [id, y] : rows) by_id.emplace(id, y);

    std::vector<std::string> missing;
    for (const auto& s : data.sequences) {
        const auto it = by_id.find(s.id);
        if (it == by_id.end()) {
            missing.push_back(s.id);
            continue;
        }
        data.labels.push_back(it->second);
        by_id.erase(it);
    }
    if (!missing.empty()) {
        throw DataError("labels '" + label_path + "': no label for sequence id(s): " +
                        detail::join_ids(missing));
    }
    if (!by_id.empty()) {
        std::vector<std::string> extra;
        extra.reserve(by_id.size());
        for (const auto& [id, y] : by_id) extra.push_back(id);
        std::sort(extra.begin(), extra.end());
        throw DataError("labels '" + label_path + "': label id(s) not present in fasta: " +
                        detail::join_ids(extra));
    }
    validate_dataset(data);
    return data;
}

} // namespace tsk
