#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tsk/config.hpp"

namespace tsk {

inline constexpr const char* kVersion = "0.1.0";

namespace detail {

// Stage failures carry the stage name so the CLI can report where a run died.
template <class Fn>
auto run_stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const UsageError& e) {
        throw UsageError("stage " + name + ": " + e.what());
    } catch (const DataError& e) {
        throw DataError("stage " + name + ": " + e.what());
    } catch (const SolverError& e) {
        throw SolverError("stage " + name + ": " + e.what());
    }
}

} // namespace detail

struct RunPaths {
    std::string root;
    std::string gram, kappa, beta, model;
    std::string target_scores, eval_report, eval_summary;
    std::string grid_record, grid_summary;
    std::string manifest;
};

inline RunPaths run_paths(const std::string& out_dir) {
    RunPaths p;
    p.root = out_dir;
    p.gram = out_dir + "/kernels/gram_source.txt";
    p.kappa = out_dir + "/kernels/kappa.txt";
    p.beta = out_dir + "/weights/beta.txt";
    p.model = out_dir + "/models/svm_model.txt";
    p.target_scores = out_dir + "/reports/target_scores.tsv";
    p.eval_report = out_dir + "/reports/eval_report.tsv";
    p.eval_summary = out_dir + "/reports/eval_summary.txt";
    p.grid_record = out_dir + "/reports/grid_record.tsv";
    p.grid_summary = out_dir + "/reports/grid_summary.txt";
    p.manifest = out_dir + "/run_manifest.txt";
    return p;
}

inline void prepare_out_dir(const std::string& out_dir, bool force, bool with_subdirs) {
    namespace fs = std::filesystem;
    if (out_dir.empty()) {
        throw UsageError("output directory not set (use --out or [run] out)");
    }
    std::error_code ec;
    const fs::path root(out_dir);
    if (fs::exists(root, ec)) {
        if (!fs::is_directory(root, ec)) {
            throw UsageError("output path '" + out_dir + "' exists and is not a directory");
        }
        if (!force && fs::directory_iterator(root, ec) != fs::directory_iterator()) {
            throw UsageError("output directory '" + out_dir +
                             "' is not empty; pass --force to overwrite");
        }
    }
    fs::create_directories(root, ec);
    if (ec) throw DataError("cannot create output directory '" + out_dir + "': " + ec.message());
    if (with_subdirs) {
        for (const char* sub : {"kernels", "weights", "models", "reports"}) {
            fs::create_directories(root / sub, ec);
            if (ec) {
                throw DataError("cannot create output directory '" + out_dir + "/" + sub +
                                "': " + ec.message());
            }
        }
    }
}

struct RunResult {
    RunPaths paths;
    std::optional<double> test_auc;
    int k = 0, m = 0;
    double C = 0.0;
    bool kmm_enabled = false;
};

namespace detail {

struct RunData {
    LabeledDataset source;
    std::vector<Sequence> test_seqs;
    std::optional<std::vector<int>> test_labels;
    std::vector<Sequence> target_unlabeled;
    std::string target_source_desc; // recorded in the manifest
};

inline RunData ingest_run_data(const ExperimentConfig& cfg, const Alphabet& alphabet,
                               bool need_target) {
    RunData d;
    d.source = load_labeled_dataset(cfg.source_fasta, cfg.source_labels, alphabet, Domain::source);
    if (!cfg.test_fasta.empty()) {
        if (!cfg.test_labels.empty()) {
            LabeledDataset test =
                load_labeled_dataset(cfg.test_fasta, cfg.test_labels, alphabet, Domain::target);
            d.test_seqs = std::move(test.sequences);
            d.test_labels = std::move(test.labels);
        } else {
            d.test_seqs = parse_fasta_file(cfg.test_fasta, alphabet);
        }
    }
    if (need_target) {
        if (cfg.target_mode == "separate-file") {
            d.target_unlabeled = parse_fasta_file(cfg.target_fasta, alphabet);
            d.target_source_desc = "separate-file " + cfg.target_fasta;
        } else {
            if (d.test_seqs.empty()) {
                throw DataError(
                    "target_mode = test-sequences requires test_fasta (no unlabeled target to "
                    "match against)");
            }
            d.target_unlabeled = d.test_seqs;
            d.target_source_desc = "test-sequences " + cfg.test_fasta;
        }
    } else {
        d.target_source_desc = "-";
    }
    return d;
}

inline std::string manifest_path_or_dash(const std::string& p) { return p.empty() ? "-" : p; }

} // namespace detail

// Single-cell pipeline: kernel -> weights -> model -> scores -> report.
// Artifacts are written as soon as each stage finishes, so a failing stage
// leaves everything before it on disk.
inline RunResult run_experiment(const ExperimentConfig& cfg, bool force) {
    if (cfg.grid.ks.size() != 1 || cfg.grid.ms.size() != 1 || cfg.grid.Cs.size() != 1) {
        throw UsageError("run: k, m and C must each be a single value (got " +
                         std::to_string(cfg.grid.ks.size()) + "/" +
                         std::to_string(cfg.grid.ms.size()) + "/" +
                         std::to_string(cfg.grid.Cs.size()) +
                         " entries); use the grid command for sweeps");
    }
    const Alphabet& alphabet = Alphabet::by_name(cfg.alphabet);
    const KernelParams params{cfg.grid.ks.front(), cfg.grid.ms.front(), cfg.grid.normalize};
    validate_params(params);

    prepare_out_dir(cfg.out_dir, force, true);
    RunResult result;
    result.paths = run_paths(cfg.out_dir);
    result.k = params.k;
    result.m = params.m;
    result.C = cfg.grid.Cs.front();
    result.kmm_enabled = cfg.kmm_enabled;

    const detail::RunData data = detail::run_stage("ingest", [&] {
        return detail::ingest_run_data(cfg, alphabet, cfg.kmm_enabled);
    });
    const int n_train = static_cast<int>(data.source.sequences.size());

    const GramMatrix gram = detail::run_stage("kernel", [&] {
        GramMatrix g = gram_matrix(data.source.sequences, params, alphabet, cfg.jobs);
        save_gram_file(result.paths.gram, g);
        return g;
    });

    const BetaWeights beta = detail::run_stage("kmm", [&] {
        BetaWeights b;
        if (cfg.kmm_enabled) {
            const KappaVector kappa =
                kappa_vector(data.source.sequences, data.target_unlabeled, params, alphabet, cfg.jobs);
            save_kappa_file(result.paths.kappa, kappa);
            b = solve_beta(gram, kappa, cfg.kmm);
            save_beta_file(result.paths.beta, b);
            if (!b.converged) {
                throw SolverError("beta solve stopped at " + std::to_string(b.iterations) +
                                  " iterations without meeting tolerance (last objective " +
                                  detail::format_g17(b.final_objective) + ")");
            }
        } else {
            b.values.assign(static_cast<std::size_t>(n_train), 1.0);
            b.B = cfg.kmm.B;
            b.epsilon = cfg.kmm.epsilon ? *cfg.kmm.epsilon : default_kmm_epsilon(n_train);
            b.converged = true;
            b.stop_reason = "disabled";
            save_beta_file(result.paths.beta, b);
        }
        return b;
    });

    SvmTrainConfig svm_cfg = cfg.svm;
    svm_cfg.C = cfg.grid.Cs.front();
    const SvmModel model = detail::run_stage("train", [&] {
        SvmModel m = train_weighted_svm(gram, data.source.labels, beta.values, svm_cfg,
                                        data.source.sequences, &alphabet);
        save_model_file(result.paths.model, m);
        if (!m.converged) {
            throw SolverError("svm stopped (" + m.stop_reason + ") after " +
                              std::to_string(m.iterations) + " working-set steps with KKT violation " +
                              detail::format_g17(m.worst_kkt));
        }
        return m;
    });

    std::vector<std::pair<std::string, double>> scores;
    if (!data.test_seqs.empty()) {
        scores = detail::run_stage("predict", [&] {
            auto s = predict_batch(model, data.test_seqs);
            std::ofstream out(result.paths.target_scores);
            if (!out) {
                throw DataError("cannot write score file '" + result.paths.target_scores + "'");
            }
            out << "id\tscore\n";
            for (const auto& [id, score] : s) {
                out << id << '\t' << detail::format_g17(score) << '\n';
            }
            return s;
        });
    }

    if (data.test_labels) {
        detail::run_stage("evaluate", [&] {
            std::vector<std::string> ids;
            std::vector<double> vals;
            for (const auto& [id, score] : scores) {
                ids.push_back(id);
                vals.push_back(score);
            }
            const EvalReport report = make_eval_report(ids, vals, *data.test_labels);
            std::ofstream rep(result.paths.eval_report);
            if (!rep) throw DataError("cannot write '" + result.paths.eval_report + "'");
            write_eval_report_tsv(rep, report);
            std::ofstream sum(result.paths.eval_summary);
            if (!sum) throw DataError("cannot write '" + result.paths.eval_summary + "'");
            write_eval_summary(sum, report);
            result.test_auc = report.auc;
            return 0;
        });
    }

    detail::run_stage("manifest", [&] {
        std::ofstream out(result.paths.manifest);
        if (!out) throw DataError("cannot write '" + result.paths.manifest + "'");
        out << "tsk run manifest\n"
            << "version " << kVersion << '\n'
            << "alphabet " << cfg.alphabet << '\n'
            << "seed " << cfg.seed << '\n'
            << "jobs " << cfg.jobs << '\n'
            << "source_fasta " << cfg.source_fasta << '\n'
            << "source_labels " << cfg.source_labels << '\n'
            << "test_fasta " << detail::manifest_path_or_dash(cfg.test_fasta) << '\n'
            << "test_labels " << detail::manifest_path_or_dash(cfg.test_labels) << '\n'
            << "target_mode " << cfg.target_mode << '\n'
            << "target_source " << data.target_source_desc << '\n'
            << "k " << params.k << '\n'
            << "m " << params.m << '\n'
            << "normalize " << (params.normalize ? 1 : 0) << '\n'
            << "C " << detail::format_g17(svm_cfg.C) << '\n'
            << "kmm_enabled " << (cfg.kmm_enabled ? 1 : 0) << '\n'
            << "kmm_B " << detail::format_g17(beta.B) << '\n'
            << "kmm_epsilon " << detail::format_g17(beta.epsilon) << '\n'
            << "kmm_iterations " << beta.iterations << '\n'
            << "kmm_stop " << (beta.stop_reason.empty() ? "-" : beta.stop_reason) << '\n'
            << "kmm_objective " << detail::format_g17(beta.final_objective) << '\n'
            << "svm_tolerance " << detail::format_g17(svm_cfg.tolerance) << '\n'
            << "svm_max_passes " << svm_cfg.max_passes << '\n'
            << "svm_steps " << model.iterations << '\n'
            << "svm_worst_kkt " << detail::format_g17(model.worst_kkt) << '\n'
            << "svm_bias " << detail::format_g17(model.bias) << '\n'
            << "n_support " << model.support_indices.size() << '\n'
            << "n_train " << n_train << '\n'
            << "n_test " << data.test_seqs.size() << '\n'
            << "test_auc " << (result.test_auc ? detail::format_g17(*result.test_auc) : "-") << '\n';
        return 0;
    });
    return result;
}

struct GridRunResult {
    RunPaths paths;
    GridSearchRecord record;
    std::optional<RunResult> final_run; // test evaluation at the selected cell
};

// Hyperparameter sweep over (k, m, C) scored on the validation set; when test
// data is configured, the selected cell is re-run end to end into the same
// output directory.
inline GridRunResult run_grid(const ExperimentConfig& cfg, bool force) {
    if (cfg.validation_fasta.empty()) {
        throw UsageError("grid: validation_fasta/validation_labels are required");
    }
    const Alphabet& alphabet = Alphabet::by_name(cfg.alphabet);
    prepare_out_dir(cfg.out_dir, force, true);

    GridRunResult result;
    result.paths = run_paths(cfg.out_dir);

    const LabeledDataset validation = detail::run_stage("ingest", [&] {
        return load_labeled_dataset(cfg.validation_fasta, cfg.validation_labels, alphabet,
                                    Domain::target);
    });
    detail::RunData data = detail::run_stage("ingest", [&] {
        ExperimentConfig probe = cfg;
        // In test-sequences mode the sweep matches against the sequences it
        // scores, i.e. the validation set.
        if (cfg.kmm_enabled && cfg.target_mode == "test-sequences") {
            probe.target_mode = "separate-file";
            probe.target_fasta = cfg.validation_fasta;
        }
        detail::RunData d = detail::ingest_run_data(probe, alphabet, cfg.kmm_enabled);
        if (cfg.kmm_enabled && cfg.target_mode == "test-sequences") {
            d.target_source_desc = "validation-sequences " + cfg.validation_fasta;
        }
        return d;
    });

    result.record = detail::run_stage("grid", [&] {
        GridSearchRecord rec = grid_search(data.source, validation, data.target_unlabeled, cfg.grid,
                                           cfg.kmm_enabled, alphabet, cfg.kmm, cfg.svm, cfg.jobs);
        std::ofstream tsv(result.paths.grid_record);
        if (!tsv) throw DataError("cannot write '" + result.paths.grid_record + "'");
        write_grid_record_tsv(tsv, rec);
        std::ofstream sum(result.paths.grid_summary);
        if (!sum) throw DataError("cannot write '" + result.paths.grid_summary + "'");
        write_grid_summary(sum, rec);
        return rec;
    });

    if (!cfg.test_fasta.empty()) {
        const GridCell& sel = result.record.selected_cell();
        ExperimentConfig final_cfg = cfg;
        final_cfg.grid.ks = {sel.k};
        final_cfg.grid.ms = {sel.m};
        final_cfg.grid.Cs = {sel.C};
        result.final_run = run_experiment(final_cfg, true);
    }
    return result;
}

struct SynthRunResult {
    std::string out_dir;
    CorpusPaths paths;
    SynthCorpus corpus;
};

inline SynthRunResult run_synth(const SynthProfile& profile, const std::string& alphabet_name,
                                std::uint64_t seed, const std::string& out_dir, bool force) {
    const Alphabet& alphabet = Alphabet::by_name(alphabet_name);
    prepare_out_dir(out_dir, force, false);
    SynthRunResult result;
    result.out_dir = out_dir;
    result.paths = corpus_paths(out_dir);
    result.corpus = detail::run_stage("synthesize", [&] {
        SynthCorpus corpus = generate_corpus(profile, alphabet, seed);
        write_corpus(out_dir, corpus, alphabet);
        std::ofstream man(out_dir + "/synth_manifest.txt");
        if (!man) throw DataError("cannot write '" + out_dir + "/synth_manifest.txt'");
        man << synth_manifest(profile, alphabet, seed, corpus);
        return corpus;
    });
    return result;
}

// --- artifact inspection ----------------------------------------------------

namespace detail {

inline bool all_numeric(const std::vector<std::string>& toks) {
    if (toks.empty()) return false;
    for (const auto& t : toks) {
        try {
            std::size_t pos = 0;
            (void)std::stod(t, &pos);
            if (pos != t.size()) return false;
        } catch (const std::exception&) {
            return false;
        }
    }
    return true;
}

inline std::vector<std::string> first_line_tokens(const std::string& line) {
    std::istringstream in(line);
    std::vector<std::string> toks;
    std::string t;
    while (in >> t) toks.push_back(t);
    return toks;
}

} // namespace detail

// Pretty-prints any artifact this toolkit writes; the kind is recognized from
// the first line.
inline void inspect_artifact(const std::string& path, std::ostream& out) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::string first;
    if (!std::getline(in, first)) throw DataError("'" + path + "': empty file");
    if (!first.empty() && first.back() == '\r') first.pop_back();
    const auto toks = detail::first_line_tokens(first);

    auto echo_all = [&](const char* kind) {
        out << path << ": " << kind << '\n' << first << '\n';
        std::string line;
        while (std::getline(in, line)) out << line << '\n';
    };

    if (first == "tsk run manifest" || first == "tsk synthetic corpus") {
        echo_all(first == "tsk run manifest" ? "run manifest" : "synthetic corpus manifest");
        return;
    }
    if (!toks.empty() && toks[0] == "beta") {
        in.seekg(0);
        const BetaWeights beta = load_beta(in);
        double lo = beta.values.front(), hi = beta.values.front(), sum = 0.0;
        for (double v : beta.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            sum += v;
        }
        out << path << ": importance weights\n"
            << "n " << beta.values.size() << '\n'
            << "B " << beta.B << '\n'
            << "epsilon " << beta.epsilon << '\n'
            << "iterations " << beta.iterations << '\n'
            << "objective " << beta.final_objective << '\n'
            << "min " << lo << "  max " << hi << "  mean " << sum / static_cast<double>(beta.values.size())
            << '\n';
        return;
    }
    if (detail::all_numeric(toks) && toks.size() == 4) {
        in.seekg(0);
        const GramMatrix g = load_gram(in);
        out << path << ": gram matrix\n"
            << "n " << g.n << "  k " << g.params.k << "  m " << g.params.m << "  normalized "
            << (g.params.normalize ? 1 : 0) << '\n';
        const int show = std::min(5, g.n);
        for (int i = 0; i < show; ++i) {
            for (int j = 0; j < show; ++j) out << (j ? " " : "") << g.at(i, j);
            out << (g.n > show ? " ...\n" : "\n");
        }
        if (g.n > show) out << "...\n";
        return;
    }
    if (detail::all_numeric(toks) && toks.size() == 5) {
        in.seekg(0);
        const KappaVector kappa = load_kappa(in);
        double lo = kappa.values.front(), hi = kappa.values.front(), sum = 0.0;
        for (double v : kappa.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            sum += v;
        }
        out << path << ": kappa vector\n"
            << "n_source " << kappa.n_source << "  n_target " << kappa.n_target << "  k "
            << kappa.params.k << "  m " << kappa.params.m << '\n'
            << "min " << lo << "  max " << hi << "  mean "
            << sum / static_cast<double>(kappa.values.size()) << '\n';
        return;
    }
    if (detail::all_numeric(toks) && toks.size() == 6) {
        out << path << ": svm model\n"
            << "k " << toks[0] << "  m " << toks[1] << "  normalized " << toks[2] << "  C "
            << toks[3] << '\n'
            << "bias " << toks[4] << "  n_support " << toks[5] << '\n';
        return;
    }
    if (first.find('\t') != std::string::npos) {
        out << path << ": table\n" << first << '\n';
        std::string line;
        int shown = 0;
        long total = 0;
        while (std::getline(in, line)) {
            ++total;
            if (shown < 10) {
                out << line << '\n';
                ++shown;
            }
        }
        if (total > shown) out << "... (" << total << " rows)\n";
        return;
    }
    if (!first.empty() && first[0] == '>') {
        long records = 1;
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line[0] == '>') ++records;
        }
        out << path << ": fasta (" << records << " records)\n";
        return;
    }
    echo_all("text");
}

} // namespace tsk
