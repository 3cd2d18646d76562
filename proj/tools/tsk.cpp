#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tsk/pipeline.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    int jobs = 1;
    bool force = false;
    CLI::Option* out_opt = nullptr;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* jobs_opt = nullptr;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "experiment config file")
        ->required()
        ->check(CLI::ExistingFile);
    o.out_opt = cmd->add_option("--out", o.out_dir, "output directory (overrides [run] out)");
    o.seed_opt = cmd->add_option("--seed", o.seed, "random seed (overrides [run] seed)");
    o.jobs_opt = cmd->add_option("--jobs", o.jobs, "worker threads (overrides [run] jobs)");
    cmd->add_flag("--force", o.force, "allow writing into a non-empty output directory");
}

tsk::ExperimentConfig load_run_config(const CommonOpts& o) {
    tsk::ConfigReader reader(tsk::parse_config_file(o.config_path));
    tsk::ExperimentConfig cfg = tsk::load_experiment_config(reader);
    if (o.out_opt->count()) cfg.out_dir = o.out_dir;
    if (o.seed_opt->count()) cfg.seed = o.seed;
    if (o.jobs_opt->count()) cfg.jobs = o.jobs;
    if (cfg.jobs < 1) throw tsk::UsageError("jobs must be >= 1");
    return cfg;
}

int do_run(const CommonOpts& o, bool force_kmm_off) {
    tsk::ExperimentConfig cfg = load_run_config(o);
    if (force_kmm_off) cfg.kmm_enabled = false;
    const tsk::RunResult result = tsk::run_experiment(cfg, o.force);
    std::cout << "k " << result.k << "  m " << result.m << "  C "
              << tsk::detail::format_g17(result.C) << "  kmm "
              << (result.kmm_enabled ? "on" : "off") << '\n';
    if (result.test_auc) {
        std::cout << "test_auc " << tsk::detail::format_g17(*result.test_auc) << '\n';
    }
    std::cout << "artifacts " << result.paths.root << '\n';
    return 0;
}

int do_grid(const CommonOpts& o) {
    const tsk::ExperimentConfig cfg = load_run_config(o);
    const tsk::GridRunResult result = tsk::run_grid(cfg, o.force);
    const tsk::GridCell& sel = result.record.selected_cell();
    std::cout << "selected k " << sel.k << "  m " << sel.m << "  C "
              << tsk::detail::format_g17(sel.C) << "  validation_auc "
              << tsk::detail::format_g17(sel.auc) << '\n';
    if (result.final_run && result.final_run->test_auc) {
        std::cout << "test_auc " << tsk::detail::format_g17(*result.final_run->test_auc) << '\n';
    }
    std::cout << "artifacts " << result.paths.root << '\n';
    return 0;
}

int do_synth(const CommonOpts& o) {
    tsk::ConfigReader reader(tsk::parse_config_file(o.config_path));
    reader.check_sections_known(tsk::known_config_sections());
    const std::string alphabet_name = reader.get_string("data", "alphabet", "dna");
    const tsk::Alphabet& alphabet = tsk::Alphabet::by_name(alphabet_name);
    const tsk::SynthProfile profile = tsk::load_synth_profile(reader, alphabet);
    std::uint64_t seed = 1;
    std::string out_dir;
    int jobs = 1;
    tsk::read_run_section(reader, seed, out_dir, jobs);
    if (o.out_opt->count()) out_dir = o.out_dir;
    if (o.seed_opt->count()) seed = o.seed;
    const tsk::SynthRunResult result = tsk::run_synth(profile, alphabet_name, seed, out_dir, o.force);
    std::cout << "source_train " << result.corpus.source_train.sequences.size() << '\n'
              << "target_validation " << result.corpus.target_validation.sequences.size() << '\n'
              << "target_test " << result.corpus.target_test.sequences.size() << '\n'
              << "artifacts " << result.out_dir << '\n';
    return 0;
}

int do_conserve(const std::string& scores_path, const std::string& out_dir, bool force) {
    const tsk::ConservationInput input = tsk::parse_conservation_file(scores_path);
    const tsk::ConservationSummary summary = tsk::summarize_conservation(input);
    const double cs = tsk::conservation_score(summary);
    std::cout << "cs " << tsk::detail::format_g17(cs) << '\n';
    if (!out_dir.empty()) {
        tsk::prepare_out_dir(out_dir, force, false);
        const std::string path = out_dir + "/conservation.txt";
        std::ofstream rec(path);
        if (!rec) throw tsk::DataError("cannot write '" + path + "'");
        rec << "scores_file " << scores_path << '\n'
            << "pos_score " << tsk::detail::format_g17(summary.pos_score) << '\n'
            << "neg_score " << tsk::detail::format_g17(summary.neg_score) << '\n'
            << "c_n " << summary.c_n << '\n'
            << "c_t " << summary.c_t << '\n'
            << "cs " << tsk::detail::format_g17(cs) << '\n';
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"string-kernel sequence classification with covariate-shift reweighting"};
    app.require_subcommand(1);

    CommonOpts run_tsk_opts, run_sk_opts, grid_opts, synth_opts;
    CLI::App* cmd_run_tsk = app.add_subcommand(
        "run-tsk", "kernel, importance weights, weighted svm, target scoring");
    add_common(cmd_run_tsk, run_tsk_opts);
    CLI::App* cmd_run_sk =
        app.add_subcommand("run-sk", "plain string-kernel baseline (weights fixed at 1)");
    add_common(cmd_run_sk, run_sk_opts);
    CLI::App* cmd_grid = app.add_subcommand("grid", "sweep (k, m, C) against the validation set");
    add_common(cmd_grid, grid_opts);
    CLI::App* cmd_synth = app.add_subcommand("synth", "generate a synthetic covariate-shift corpus");
    add_common(cmd_synth, synth_opts);

    std::string scores_path, conserve_out;
    bool conserve_force = false;
    CLI::App* cmd_conserve =
        app.add_subcommand("conserve", "conservation score from per-position values");
    cmd_conserve->add_option("scores", scores_path, "per-position score file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_conserve->add_option("--out", conserve_out, "directory to record the result");
    cmd_conserve->add_flag("--force", conserve_force, "allow a non-empty output directory");

    std::vector<std::string> inspect_paths;
    CLI::App* cmd_inspect = app.add_subcommand("inspect", "pretty-print toolkit artifacts");
    cmd_inspect->add_option("paths", inspect_paths, "artifact files")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (app.got_subcommand(cmd_run_tsk)) return do_run(run_tsk_opts, false);
        if (app.got_subcommand(cmd_run_sk)) return do_run(run_sk_opts, true);
        if (app.got_subcommand(cmd_grid)) return do_grid(grid_opts);
        if (app.got_subcommand(cmd_synth)) return do_synth(synth_opts);
        if (app.got_subcommand(cmd_conserve)) {
            return do_conserve(scores_path, conserve_out, conserve_force);
        }
        if (app.got_subcommand(cmd_inspect)) {
            for (const auto& p : inspect_paths) tsk::inspect_artifact(p, std::cout);
            return 0;
        }
    } catch (const tsk::UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const tsk::DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const tsk::SolverError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
