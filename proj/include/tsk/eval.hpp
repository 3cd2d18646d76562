#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "tsk/svm.hpp"

namespace tsk {

// AUC by midranks. Ranks are accumulated in half-units so tied groups stay in
// integer arithmetic and the result matches pair counting bit-for-bit.
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) {
        throw DataError("roc_auc: scores and labels differ in length");
    }
    long long n_pos = 0, n_neg = 0;
    for (int y : labels) {
        if (y == 1) ++n_pos;
        else if (y == -1) ++n_neg;
        else throw DataError("roc_auc: label must be +1 or -1");
    }
    if (n_pos == 0 || n_neg == 0) {
        throw DataError("roc_auc: both classes required (n_pos=" + std::to_string(n_pos) +
                        ", n_neg=" + std::to_string(n_neg) + ")");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] < scores[b];
        return a < b;
    });
    // Twice the positive rank sum: each element of a tie group spanning sorted
    // positions [lo, hi] has midrank (lo + hi + 2) / 2 in 1-based ranks.
    long long rank2_pos = 0;
    std::size_t lo = 0;
    while (lo < order.size()) {
        std::size_t hi = lo;
        while (hi + 1 < order.size() && scores[order[hi + 1]] == scores[order[lo]]) ++hi;
        const long long mid2 = static_cast<long long>(lo) + static_cast<long long>(hi) + 2;
        for (std::size_t p = lo; p <= hi; ++p) {
            if (labels[order[p]] == 1) rank2_pos += mid2;
        }
        lo = hi + 1;
    }
    const long long numer = rank2_pos - n_pos * (n_pos + 1);
    const long long denom = 2 * n_pos * n_neg;
    return static_cast<double>(numer) / static_cast<double>(denom);
}

struct EvalRow {
    std::string id;
    double score = 0.0;
    int label = 0;
};

struct EvalReport {
    double auc = 0.0;
    long long n_pos = 0;
    long long n_neg = 0;
    std::vector<EvalRow> rows;
};

inline EvalReport make_eval_report(const std::vector<std::string>& ids,
                                   const std::vector<double>& scores,
                                   const std::vector<int>& labels) {
    if (ids.size() != scores.size() || scores.size() != labels.size()) {
        throw DataError("eval report: ids/scores/labels differ in length");
    }
    EvalReport r;
    r.auc = roc_auc(scores, labels);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        r.rows.push_back({ids[i], scores[i], labels[i]});
        if (labels[i] == 1) ++r.n_pos;
        else ++r.n_neg;
    }
    return r;
}

namespace detail {

inline std::string format_f6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

} // namespace detail

inline void write_eval_report_tsv(std::ostream& out, const EvalReport& r) {
    out << "id\tscore\tlabel\n";
    for (const auto& row : r.rows) {
        out << row.id << '\t' << detail::format_f6(row.score) << '\t' << row.label << '\n';
    }
}

inline void write_eval_summary(std::ostream& out, const EvalReport& r) {
    out << "auc " << detail::format_g17(r.auc) << '\n'
        << "n_pos " << r.n_pos << '\n'
        << "n_neg " << r.n_neg << '\n'
        << "n_rows " << r.rows.size() << '\n';
}

// --- grid search ------------------------------------------------------------

struct GridParams {
    std::vector<int> ks;
    std::vector<int> ms;
    std::vector<double> Cs;
    bool normalize = true;
};

inline void validate_grid(const GridParams& g) {
    if (g.ks.empty() || g.ms.empty() || g.Cs.empty()) {
        throw UsageError("grid: k, m and C lists must all be non-empty");
    }
}

struct GridCell {
    int k = 0;
    int m = 0;
    double C = 0.0;
    double auc = 0.0;
    bool ok = false;
    std::string failure;
};

struct GridSearchRecord {
    std::vector<GridCell> cells;
    int selected = -1; // index into cells

    const GridCell& selected_cell() const {
        if (selected < 0) throw DataError("grid record: no selected cell");
        return cells[static_cast<std::size_t>(selected)];
    }
};

namespace detail {

// Higher AUC wins; ties go to smaller k, then m, then C.
inline bool grid_cell_better(const GridCell& a, const GridCell& b) {
    if (a.auc != b.auc) return a.auc > b.auc;
    if (a.k != b.k) return a.k < b.k;
    if (a.m != b.m) return a.m < b.m;
    return a.C < b.C;
}

} // namespace detail

// For each (k, m): one Gram matrix, one beta solve (when enabled), one
// train-vs-validation kernel block; each C reuses them.
inline GridSearchRecord grid_search(const LabeledDataset& train, const LabeledDataset& validation,
                                    const std::vector<Sequence>& target_unlabeled,
                                    const GridParams& grid, bool use_kmm, const Alphabet& alphabet,
                                    const KmmConfig& kmm_config = {},
                                    const SvmTrainConfig& svm_base = {}, int jobs = 1) {
    validate_grid(grid);
    validate_dataset(train);
    validate_dataset(validation);
    if (use_kmm && target_unlabeled.empty()) {
        throw DataError("grid: kernel mean matching requested but target set is empty");
    }
    const int n_train = static_cast<int>(train.sequences.size());

    GridSearchRecord record;
    for (int k : grid.ks) {
        for (int m : grid.ms) {
            KernelParams params{k, m, grid.normalize};
            GramMatrix gram;
            KernelTable val_block;
            std::vector<double> beta(static_cast<std::size_t>(n_train), 1.0);
            std::string stage_failure;
            try {
                validate_params(params);
                gram = gram_matrix(train.sequences, params, alphabet, jobs);
                val_block = cross_kernel(validation.sequences, train.sequences, params, alphabet, jobs);
                if (use_kmm) {
                    const KappaVector kappa =
                        kappa_vector(train.sequences, target_unlabeled, params, alphabet, jobs);
                    beta = solve_beta(gram, kappa, kmm_config).values;
                }
            } catch (const Error& e) {
                stage_failure = e.what();
            }
            for (double C : grid.Cs) {
                GridCell cell;
                cell.k = k;
                cell.m = m;
                cell.C = C;
                if (!stage_failure.empty()) {
                    cell.failure = stage_failure;
                    record.cells.push_back(cell);
                    continue;
                }
                try {
                    SvmTrainConfig cfg = svm_base;
                    cfg.C = C;
                    const SvmModel model = train_weighted_svm(gram, train.labels, beta, cfg);
                    std::vector<double> scores(validation.sequences.size(), model.bias);
                    for (int v = 0; v < val_block.n_rows; ++v) {
                        double f = model.bias;
                        for (int idx : model.support_indices) {
                            f += model.alpha[static_cast<std::size_t>(idx)] *
                                 static_cast<double>(train.labels[static_cast<std::size_t>(idx)]) *
                                 val_block.at(v, idx);
                        }
                        scores[static_cast<std::size_t>(v)] = f;
                    }
                    cell.auc = roc_auc(scores, validation.labels);
                    cell.ok = true;
                } catch (const Error& e) {
                    cell.failure = e.what();
                }
                record.cells.push_back(cell);
            }
        }
    }

    for (std::size_t i = 0; i < record.cells.size(); ++i) {
        if (!record.cells[i].ok) continue;
        if (record.selected < 0 ||
            detail::grid_cell_better(record.cells[i], record.cells[static_cast<std::size_t>(record.selected)])) {
            record.selected = static_cast<int>(i);
        }
    }
    if (record.selected < 0) {
        std::string first = record.cells.empty() ? "empty grid" : record.cells.front().failure;
        throw DataError("grid: every cell failed; first failure: " + first);
    }
    return record;
}

inline void write_grid_record_tsv(std::ostream& out, const GridSearchRecord& r) {
    out << "k\tm\tC\tauc\tstatus\n";
    for (const auto& c : r.cells) {
        std::string status = c.ok ? "ok" : c.failure;
        for (char& ch : status) {
            if (ch == '\t' || ch == '\n') ch = ' ';
        }
        out << c.k << '\t' << c.m << '\t' << detail::format_f6(c.C) << '\t'
            << (c.ok ? detail::format_f6(c.auc) : std::string("-")) << '\t' << status << '\n';
    }
}

inline void write_grid_summary(std::ostream& out, const GridSearchRecord& r) {
    const GridCell& s = r.selected_cell();
    std::size_t failed = 0;
    for (const auto& c : r.cells) {
        if (!c.ok) ++failed;
    }
    out << "selected_k " << s.k << '\n'
        << "selected_m " << s.m << '\n'
        << "selected_C " << detail::format_g17(s.C) << '\n'
        << "selected_auc " << detail::format_g17(s.auc) << '\n'
        << "n_cells " << r.cells.size() << '\n'
        << "n_failed " << failed << '\n';
}

// --- conservation score -----------------------------------------------------
// CS = ln(PosScore) - ln(|NegScore|) - p with p = ln(C_n / C_t) / 100, where
// PosScore / NegScore are the means of the positive / negative per-position
// scores and C_n of C_t positions carry no score at all.

struct ConservationSummary {
    double pos_score = 0.0; // > 0
    double neg_score = 0.0; // < 0
    long long c_n = 0;
    long long c_t = 0;
};

struct ConservationInput {
    std::vector<double> scores; // scored positions only
    long long c_n = 0;          // unscored (non-conserved) position count
    long long c_t = 0;          // total positions = scores.size() + c_n
};

inline void validate_conservation_input(const ConservationInput& in) {
    if (in.c_n < 0 || in.c_t < 0) throw DataError("conservation: negative position count");
    if (static_cast<long long>(in.scores.size()) + in.c_n != in.c_t) {
        throw DataError("conservation: scored positions (" + std::to_string(in.scores.size()) +
                        ") + unscored (" + std::to_string(in.c_n) + ") != total (" +
                        std::to_string(in.c_t) + ")");
    }
}

inline double conservation_score(const ConservationSummary& s) {
    if (!(s.pos_score > 0)) throw DataError("conservation: positive-score mass is zero, log undefined");
    if (!(s.neg_score < 0)) throw DataError("conservation: negative-score mass is zero, log undefined");
    if (s.c_n < 1) throw DataError("conservation: no unscored positions (C_n = 0), log undefined");
    if (s.c_t < s.c_n) throw DataError("conservation: C_n exceeds total positions");
    const double p = std::log(static_cast<double>(s.c_n) / static_cast<double>(s.c_t)) / 100.0;
    return std::log(s.pos_score) - std::log(-s.neg_score) - p;
}

inline ConservationSummary summarize_conservation(const ConservationInput& in) {
    validate_conservation_input(in);
    double pos_sum = 0.0, neg_sum = 0.0;
    long long pos_count = 0, neg_count = 0;
    for (double s : in.scores) {
        if (s > 0) {
            pos_sum += s;
            ++pos_count;
        } else if (s < 0) {
            neg_sum += s;
            ++neg_count;
        }
    }
    ConservationSummary out;
    out.pos_score = pos_count ? pos_sum / static_cast<double>(pos_count) : 0.0;
    out.neg_score = neg_count ? neg_sum / static_cast<double>(neg_count) : 0.0;
    out.c_n = in.c_n;
    out.c_t = in.c_t;
    return out;
}

inline double conservation_score(const ConservationInput& in) {
    return conservation_score(summarize_conservation(in));
}

// Score files: whitespace-separated tokens, one per position; "NA" or "."
// marks an unscored position; '#' starts a comment line.
inline ConservationInput parse_conservation_scores(std::istream& in) {
    ConservationInput out;
    std::string line;
    long long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string tok;
        while (ls >> tok) {
            if (tok[0] == '#') break;
            if (tok == "NA" || tok == "na" || tok == ".") {
                ++out.c_n;
                ++out.c_t;
                continue;
            }
            try {
                std::size_t used = 0;
                const double v = std::stod(tok, &used);
                if (used != tok.size()) throw std::invalid_argument(tok);
                out.scores.push_back(v);
                ++out.c_t;
            } catch (const std::exception&) {
                throw DataError("conservation scores, line " + std::to_string(line_no) +
                                ": token '" + tok + "' is neither a number nor NA");
            }
        }
    }
    if (out.c_t == 0) throw DataError("conservation scores: file contains no positions");
    return out;
}

inline ConservationInput parse_conservation_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open scores file '" + path + "'");
    try {
        return parse_conservation_scores(in);
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

} // namespace tsk
