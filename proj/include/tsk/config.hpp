#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tsk/eval.hpp"
#include "tsk/synthetic.hpp"

namespace tsk {

namespace detail {

inline std::string trim_copy(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(trim_copy(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim_copy(cur));
    return out;
}

} // namespace detail

// Sectioned key = value text. '#' and ';' start comments; keys are unique
// within their section.
struct RawConfig {
    std::map<std::string, std::map<std::string, std::string>> sections;
};

inline RawConfig parse_config(std::istream& in) {
    RawConfig cfg;
    std::string line, section;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto comment = line.find_first_of("#;");
        if (comment != std::string::npos) line.erase(comment);
        const std::string t = detail::trim_copy(line);
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']' || t.size() < 3) {
                throw UsageError("config line " + std::to_string(line_no) + ": malformed section '" +
                                 t + "'");
            }
            section = detail::trim_copy(t.substr(1, t.size() - 2));
            if (section.empty()) {
                throw UsageError("config line " + std::to_string(line_no) + ": empty section name");
            }
            cfg.sections[section];
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw UsageError("config line " + std::to_string(line_no) +
                             ": expected 'key = value', got '" + t + "'");
        }
        if (section.empty()) {
            throw UsageError("config line " + std::to_string(line_no) +
                             ": key outside any [section]");
        }
        const std::string key = detail::trim_copy(t.substr(0, eq));
        const std::string value = detail::trim_copy(t.substr(eq + 1));
        if (key.empty()) {
            throw UsageError("config line " + std::to_string(line_no) + ": empty key");
        }
        if (!cfg.sections[section].emplace(key, value).second) {
            throw UsageError("config line " + std::to_string(line_no) + ": duplicate key '" + key +
                             "' in section [" + section + "]");
        }
    }
    return cfg;
}

inline RawConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file '" + path + "'");
    try {
        return parse_config(in);
    } catch (const UsageError& e) {
        throw UsageError(path + ": " + e.what());
    }
}

// Typed access that records which keys were read, so a command can reject
// typos in the sections it owns while ignoring sections meant for others.
class ConfigReader {
public:
    explicit ConfigReader(RawConfig cfg) : cfg_(std::move(cfg)) {}

    bool has(const std::string& section, const std::string& key) const {
        const auto s = cfg_.sections.find(section);
        return s != cfg_.sections.end() && s->second.count(key) > 0;
    }

    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) {
        if (!has(section, key)) return fallback;
        consumed_.insert(section + "." + key);
        return cfg_.sections.at(section).at(key);
    }

    std::string require_string(const std::string& section, const std::string& key) {
        if (!has(section, key)) {
            throw UsageError("config: missing required key '" + key + "' in section [" + section +
                             "]");
        }
        return get_string(section, key, "");
    }

    long long get_int(const std::string& section, const std::string& key, long long fallback) {
        if (!has(section, key)) return fallback;
        return parse_int(section, key, get_string(section, key, ""));
    }

    double get_double(const std::string& section, const std::string& key, double fallback) {
        if (!has(section, key)) return fallback;
        return parse_double(section, key, get_string(section, key, ""));
    }

    bool get_bool(const std::string& section, const std::string& key, bool fallback) {
        if (!has(section, key)) return fallback;
        const std::string v = get_string(section, key, "");
        if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
        if (v == "false" || v == "no" || v == "off" || v == "0") return false;
        throw UsageError("config: [" + section + "] " + key + " = '" + v + "' is not a boolean");
    }

    std::vector<int> get_int_list(const std::string& section, const std::string& key,
                                  std::vector<int> fallback) {
        if (!has(section, key)) return fallback;
        std::vector<int> out;
        for (const auto& tok : detail::split_on(get_string(section, key, ""), ',')) {
            if (tok.empty()) {
                throw UsageError("config: [" + section + "] " + key + ": empty list entry");
            }
            out.push_back(static_cast<int>(parse_int(section, key, tok)));
        }
        return out;
    }

    std::vector<double> get_double_list(const std::string& section, const std::string& key,
                                        std::vector<double> fallback) {
        if (!has(section, key)) return fallback;
        std::vector<double> out;
        for (const auto& tok : detail::split_on(get_string(section, key, ""), ',')) {
            if (tok.empty()) {
                throw UsageError("config: [" + section + "] " + key + ": empty list entry");
            }
            out.push_back(parse_double(section, key, tok));
        }
        return out;
    }

    // Every key in the given section must have been read by now.
    void check_section_consumed(const std::string& section) const {
        const auto s = cfg_.sections.find(section);
        if (s == cfg_.sections.end()) return;
        for (const auto& [key, value] : s->second) {
            if (!consumed_.count(section + "." + key)) {
                throw UsageError("config: unknown key '" + key + "' in section [" + section + "]");
            }
        }
    }

    void check_sections_known(const std::set<std::string>& known) const {
        for (const auto& [name, keys] : cfg_.sections) {
            if (!known.count(name)) {
                throw UsageError("config: unknown section [" + name + "]");
            }
        }
    }

private:
    long long parse_int(const std::string& section, const std::string& key, const std::string& v) {
        try {
            std::size_t pos = 0;
            const long long r = std::stoll(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return r;
        } catch (const std::exception&) {
            throw UsageError("config: [" + section + "] " + key + " = '" + v +
                             "' is not an integer");
        }
    }

    double parse_double(const std::string& section, const std::string& key, const std::string& v) {
        try {
            std::size_t pos = 0;
            const double r = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return r;
        } catch (const std::exception&) {
            throw UsageError("config: [" + section + "] " + key + " = '" + v + "' is not a number");
        }
    }

    RawConfig cfg_;
    std::set<std::string> consumed_;
};

// --- experiment configuration ----------------------------------------------

struct ExperimentConfig {
    std::string alphabet = "dna";
    std::string source_fasta, source_labels;
    std::string validation_fasta, validation_labels;
    std::string test_fasta, test_labels;
    std::string target_fasta;
    std::string target_mode = "test-sequences"; // or "separate-file"
    GridParams grid;
    SvmTrainConfig svm; // C is taken from grid.Cs per cell
    KmmConfig kmm;
    bool kmm_enabled = true;
    std::uint64_t seed = 1;
    std::string out_dir;
    int jobs = 1;
};

inline const std::set<std::string>& known_config_sections() {
    static const std::set<std::string> s{"data", "kernel", "svm", "kmm", "run", "synthetic"};
    return s;
}

inline void read_run_section(ConfigReader& r, std::uint64_t& seed, std::string& out_dir, int& jobs) {
    seed = static_cast<std::uint64_t>(r.get_int("run", "seed", static_cast<long long>(seed)));
    out_dir = r.get_string("run", "out", out_dir);
    jobs = static_cast<int>(r.get_int("run", "jobs", jobs));
    if (jobs < 1) throw UsageError("config: [run] jobs must be >= 1");
    r.check_section_consumed("run");
}

inline ExperimentConfig load_experiment_config(ConfigReader& r) {
    r.check_sections_known(known_config_sections());
    ExperimentConfig c;

    c.alphabet = r.get_string("data", "alphabet", c.alphabet);
    Alphabet::by_name(c.alphabet); // validates the name early
    c.source_fasta = r.require_string("data", "source_fasta");
    c.source_labels = r.require_string("data", "source_labels");
    c.validation_fasta = r.get_string("data", "validation_fasta", "");
    c.validation_labels = r.get_string("data", "validation_labels", "");
    c.test_fasta = r.get_string("data", "test_fasta", "");
    c.test_labels = r.get_string("data", "test_labels", "");
    c.target_fasta = r.get_string("data", "target_fasta", "");
    c.target_mode = r.get_string("data", "target_mode", c.target_mode);
    if (c.target_mode != "test-sequences" && c.target_mode != "separate-file") {
        throw UsageError("config: [data] target_mode must be 'test-sequences' or 'separate-file'");
    }
    if (c.target_mode == "separate-file" && c.target_fasta.empty()) {
        throw UsageError("config: [data] target_mode = separate-file requires target_fasta");
    }
    if ((c.validation_fasta.empty()) != (c.validation_labels.empty())) {
        throw UsageError("config: validation_fasta and validation_labels must be given together");
    }
    r.check_section_consumed("data");

    c.grid.ks = r.get_int_list("kernel", "k", {8, 10, 12});
    c.grid.ms = r.get_int_list("kernel", "m", {1, 2, 3});
    c.grid.normalize = r.get_bool("kernel", "normalize", true);
    r.check_section_consumed("kernel");

    c.grid.Cs = r.get_double_list("svm", "C", {0.1, 1.0, 10.0, 100.0, 1000.0});
    c.svm.tolerance = r.get_double("svm", "tolerance", c.svm.tolerance);
    c.svm.max_passes = static_cast<int>(r.get_int("svm", "max_passes", c.svm.max_passes));
    r.check_section_consumed("svm");

    c.kmm_enabled = r.get_bool("kmm", "enabled", true);
    c.kmm.B = r.get_double("kmm", "B", c.kmm.B);
    const std::string eps = r.get_string("kmm", "epsilon", "auto");
    if (eps != "auto") {
        std::size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(eps, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != eps.size()) {
            throw UsageError("config: [kmm] epsilon must be 'auto' or a number, got '" + eps + "'");
        }
        c.kmm.epsilon = v;
    }
    c.kmm.max_iterations = static_cast<int>(r.get_int("kmm", "max_iterations", c.kmm.max_iterations));
    c.kmm.tolerance = r.get_double("kmm", "tolerance", c.kmm.tolerance);
    r.check_section_consumed("kmm");

    read_run_section(r, c.seed, c.out_dir, c.jobs);
    validate_grid(c.grid);
    validate_kmm_config(c.kmm);
    validate_svm_config({c.grid.Cs.front(), c.svm.tolerance, c.svm.max_passes});
    return c;
}

// "w @ p,p,... | w @ p,p,..." — components separated by '|', weight and
// symbol probabilities separated by '@'.
inline BackgroundMixture parse_mixture(const std::string& text, const std::string& what) {
    BackgroundMixture mix;
    for (const auto& comp_text : detail::split_on(text, '|')) {
        if (comp_text.empty()) throw UsageError(what + ": empty mixture component");
        const auto at = comp_text.find('@');
        if (at == std::string::npos) {
            throw UsageError(what + ": component '" + comp_text + "' lacks 'weight @ probs'");
        }
        BackgroundComponent comp;
        const std::string wtext = detail::trim_copy(comp_text.substr(0, at));
        try {
            std::size_t pos = 0;
            comp.weight = std::stod(wtext, &pos);
            if (pos != wtext.size()) throw std::invalid_argument(wtext);
        } catch (const std::exception&) {
            throw UsageError(what + ": component weight '" + wtext + "' is not a number");
        }
        for (const auto& ptext : detail::split_on(comp_text.substr(at + 1), ',')) {
            try {
                std::size_t pos = 0;
                comp.probs.push_back(std::stod(ptext, &pos));
                if (pos != ptext.size()) throw std::invalid_argument(ptext);
            } catch (const std::exception&) {
                throw UsageError(what + ": symbol probability '" + ptext + "' is not a number");
            }
        }
        mix.components.push_back(std::move(comp));
    }
    return mix;
}

// Default corpora: the source mixes an AT-rich and a GC-rich background
// half-and-half while the target draws only the GC-rich one.
inline SynthProfile load_synth_profile(ConfigReader& r, const Alphabet& alphabet) {
    SynthProfile p;
    p.length = static_cast<int>(r.get_int("synthetic", "length", p.length));
    p.n_train = static_cast<int>(r.get_int("synthetic", "n_train", p.n_train));
    p.n_validation = static_cast<int>(r.get_int("synthetic", "n_validation", p.n_validation));
    p.n_test = static_cast<int>(r.get_int("synthetic", "n_test", p.n_test));
    p.motif = r.get_string("synthetic", "motif", p.motif);
    p.motif_mutation_rate =
        r.get_double("synthetic", "motif_mutation_rate", p.motif_mutation_rate);
    p.neg_ratio = static_cast<int>(r.get_int("synthetic", "neg_ratio", p.neg_ratio));

    const std::string default_source = "0.5 @ 0.35,0.15,0.15,0.35 | 0.5 @ 0.15,0.35,0.35,0.15";
    const std::string default_target = "1.0 @ 0.15,0.35,0.35,0.15";
    p.source_background =
        parse_mixture(r.get_string("synthetic", "source_background", default_source),
                      "[synthetic] source_background");
    p.target_background =
        parse_mixture(r.get_string("synthetic", "target_background", default_target),
                      "[synthetic] target_background");
    r.check_section_consumed("synthetic");
    validate_profile(p, alphabet);
    return p;
}

} // namespace tsk
