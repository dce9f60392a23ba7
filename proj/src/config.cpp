#include "abcsmc/config.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "abcsmc/error.hpp"
#include "abcsmc/rng.hpp"

namespace abcsmc {

ProposalType proposal_type_from_string(const std::string& s) {
    if (s == "classic_rw") return ProposalType::classic_rw;
    if (s == "classic_independence") return ProposalType::classic_independence;
    if (s == "mixture") return ProposalType::mixture;
    if (s == "flow") return ProposalType::flow;
    throw Error("config-invalid", "unknown proposal '" + s + "'");
}

std::string to_string(ProposalType t) {
    switch (t) {
        case ProposalType::classic_rw: return "classic_rw";
        case ProposalType::classic_independence: return "classic_independence";
        case ProposalType::mixture: return "mixture";
        case ProposalType::flow: return "flow";
    }
    return "?";
}

std::uint64_t derive_run_seed(std::uint64_t master, long replication) {
    return splitmix64(master ^ splitmix64(static_cast<std::uint64_t>(replication)));
}

std::uint64_t ExperimentConfig::run_seed() const {
    return derive_run_seed(seed, replication);
}

std::string ExperimentConfig::run_name() const {
    std::ostringstream name;
    name << model << '_' << to_string(kernel) << '_' << to_string(proposal);
    if (proposal == ProposalType::mixture)
        name << (auto_components ? std::string("-auto")
                                 : "-" + std::to_string(components));
    if (kernel == KernelFamily::r_hit_single || kernel == KernelFamily::r_hit_multi)
        name << "_r" << r;
    if (defensive_eta) name << "_def";
    if (fallback) name << "_fb";
    if (training_set == TrainingMode::a_t) name << "_At";
    name << "_rep" << replication;
    return name.str();
}

std::string ExperimentConfig::compatibility_error(bool allow_inefficient) const {
    if (kernel == KernelFamily::ind_one_hit &&
        proposal == ProposalType::classic_rw)
        return "ind_one_hit requires an independence proposal";
    if (defensive_eta && proposal == ProposalType::classic_rw)
        return "defensive wrapping requires an independence proposal";
    if (defensive_eta && (*defensive_eta <= 0.0 || *defensive_eta >= 1.0))
        return "defensive_eta must lie in (0, 1)";
    if (fallback && proposal != ProposalType::flow)
        return "fallback applies to the flow proposal only";
    if (kernel == KernelFamily::r_hit_single && !allow_inefficient)
        return "r_hit_single is gated behind --allow-inefficient";
    if ((kernel == KernelFamily::r_hit_single ||
         kernel == KernelFamily::r_hit_multi) &&
        r < 2)
        return "r-hit kernels need r >= 2";
    return "";
}

// ---- TOML subset ----

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

TomlValue parse_scalar(const std::string& raw, int line) {
    TomlValue v;
    v.line = line;
    const std::string s = trim(raw);
    if (s.empty()) throw Error("config-invalid",
                               "empty value at line " + std::to_string(line));
    if (s.front() == '"') {
        if (s.size() < 2 || s.back() != '"')
            throw Error("config-invalid",
                        "unterminated string at line " + std::to_string(line));
        v.kind = TomlValue::Kind::string;
        v.str = s.substr(1, s.size() - 2);
        return v;
    }
    if (s == "true" || s == "false") {
        v.kind = TomlValue::Kind::boolean;
        v.boolean = s == "true";
        return v;
    }
    try {
        std::size_t used = 0;
        v.num = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        v.kind = TomlValue::Kind::number;
        return v;
    } catch (const std::exception&) {
        throw Error("config-invalid", "cannot parse value '" + s +
                                          "' at line " + std::to_string(line));
    }
}

TomlValue parse_value(const std::string& raw, int line) {
    const std::string s = trim(raw);
    if (!s.empty() && s.front() == '[') {
        if (s.back() != ']')
            throw Error("config-invalid",
                        "unterminated array at line " + std::to_string(line));
        TomlValue v;
        v.kind = TomlValue::Kind::array;
        v.line = line;
        std::string inner = s.substr(1, s.size() - 2);
        std::string item;
        bool in_string = false;
        for (char c : inner) {
            if (c == '"') in_string = !in_string;
            if (c == ',' && !in_string) {
                if (!trim(item).empty()) v.array.push_back(parse_scalar(item, line));
                item.clear();
            } else {
                item.push_back(c);
            }
        }
        if (!trim(item).empty()) v.array.push_back(parse_scalar(item, line));
        return v;
    }
    return parse_scalar(s, line);
}

}  // namespace

TomlFile parse_toml(const std::string& text) {
    TomlFile file;
    std::string section = "run";
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = [&] {
            bool in_string = false;
            for (std::size_t i = 0; i < line.size(); ++i) {
                if (line[i] == '"') in_string = !in_string;
                if (line[i] == '#' && !in_string) return i;
            }
            return line.size();
        }();
        const std::string body = trim(line.substr(0, hash));
        if (body.empty()) continue;
        if (body.front() == '[') {
            if (body.back() != ']')
                throw Error("config-invalid", "bad section header at line " +
                                                  std::to_string(lineno));
            section = trim(body.substr(1, body.size() - 2));
            file[section];
            continue;
        }
        const std::size_t eq = body.find('=');
        if (eq == std::string::npos)
            throw Error("config-invalid",
                        "expected key = value at line " + std::to_string(lineno));
        const std::string key = trim(body.substr(0, eq));
        file[section][key] = parse_value(body.substr(eq + 1), lineno);
    }
    return file;
}

// ---- config expansion ----

namespace {

class FieldReader {
public:
    FieldReader(const TomlSection& section, std::string section_name)
        : section_(section), name_(std::move(section_name)) {}

    const TomlValue* find(const std::string& key) const {
        auto it = section_.find(key);
        return it == section_.end() ? nullptr : &it->second;
    }

    std::string str(const std::string& key, const std::string& fallback) const {
        const TomlValue* v = find(key);
        if (!v) return fallback;
        require(v, TomlValue::Kind::string, key);
        return v->str;
    }

    double num(const std::string& key, double fallback) const {
        const TomlValue* v = find(key);
        if (!v) return fallback;
        require(v, TomlValue::Kind::number, key);
        return v->num;
    }

    bool boolean(const std::string& key, bool fallback) const {
        const TomlValue* v = find(key);
        if (!v) return fallback;
        require(v, TomlValue::Kind::boolean, key);
        return v->boolean;
    }

    void require(const TomlValue* v, TomlValue::Kind kind,
                 const std::string& key) const {
        if (v->kind != kind)
            throw Error("config-invalid",
                        "field '" + key + "' in [" + name_ + "] has the wrong type (line " +
                            std::to_string(v->line) + ")");
    }

private:
    const TomlSection& section_;
    std::string name_;
};

void apply_scalar(ExperimentConfig& cfg, const std::string& key,
                  const TomlValue& v) {
    auto as_string = [&]() -> const std::string& {
        if (v.kind != TomlValue::Kind::string)
            throw Error("config-invalid", "field '" + key + "' must be a string (line " +
                                              std::to_string(v.line) + ")");
        return v.str;
    };
    auto as_number = [&]() {
        if (v.kind != TomlValue::Kind::number)
            throw Error("config-invalid", "field '" + key + "' must be a number (line " +
                                              std::to_string(v.line) + ")");
        return v.num;
    };
    auto as_bool = [&]() {
        if (v.kind != TomlValue::Kind::boolean)
            throw Error("config-invalid", "field '" + key + "' must be a boolean (line " +
                                              std::to_string(v.line) + ")");
        return v.boolean;
    };

    if (key == "model") {
        cfg.model = as_string();
    } else if (key == "kernel") {
        cfg.kernel = kernel_family_from_string(as_string());
    } else if (key == "r") {
        cfg.r = static_cast<int>(as_number());
    } else if (key == "proposal") {
        cfg.proposal = proposal_type_from_string(as_string());
    } else if (key == "components") {
        if (v.kind == TomlValue::Kind::string && v.str == "auto") {
            cfg.auto_components = true;
        } else {
            cfg.components = static_cast<int>(as_number());
            cfg.auto_components = false;
        }
    } else if (key == "defensive_eta") {
        cfg.defensive_eta = as_number();
    } else if (key == "fallback") {
        cfg.fallback = as_bool();
    } else if (key == "training_set") {
        const std::string& s = as_string();
        if (s == "A")
            cfg.training_set = TrainingMode::a_t;
        else if (s == "B")
            cfg.training_set = TrainingMode::b_t;
        else
            throw Error("config-invalid", "training_set must be \"A\" or \"B\" (line " +
                                              std::to_string(v.line) + ")");
    } else if (key == "n_particles") {
        cfg.n_particles = static_cast<long>(as_number());
    } else if (key == "n_train") {
        cfg.n_train = static_cast<long>(as_number());
    } else if (key == "n_test") {
        cfg.n_test = static_cast<long>(as_number());
    } else if (key == "omega") {
        cfg.omega = as_number();
    } else if (key == "time_budget_s") {
        cfg.time_budget_s = as_number();
    } else if (key == "max_iterations") {
        cfg.max_iterations = static_cast<long>(as_number());
    } else if (key == "epsilon_target") {
        cfg.epsilon_target = as_number();
    } else if (key == "seed") {
        cfg.seed = static_cast<std::uint64_t>(as_number());
    } else if (key == "replication") {
        cfg.replication = static_cast<long>(as_number());
    } else if (key == "observed") {
        cfg.observed = as_string();
    } else if (key == "reference") {
        cfg.reference = as_string();
    } else if (key == "wasserstein_order") {
        cfg.wasserstein_order = static_cast<int>(as_number());
    } else if (key == "wasserstein_max_points") {
        cfg.wasserstein_max_points = static_cast<long>(as_number());
    } else {
        throw Error("config-invalid", "unknown field '" + key + "' (line " +
                                          std::to_string(v.line) + ")");
    }
}

void validate(const ExperimentConfig& cfg) {
    if (cfg.model.empty())
        throw Error("config-invalid", "missing required field 'model'");
    if (cfg.n_particles < 2 || cfg.n_train < 2 || cfg.n_test < 1)
        throw Error("config-invalid", "population sizes too small");
    if (cfg.omega <= 0.0 || cfg.omega >= 1.0)
        throw Error("config-invalid", "omega must lie in (0, 1)");
    if (!(cfg.time_budget_s >= 0.0))
        throw Error("config-invalid", "time_budget_s must be non-negative");
    if (!std::isfinite(cfg.time_budget_s) && !cfg.max_iterations &&
        !cfg.epsilon_target)
        throw Error("config-invalid",
                    "set time_budget_s, max_iterations or epsilon_target");
}

}  // namespace

std::vector<ExperimentConfig> expand_config(const std::string& text) {
    const TomlFile file = parse_toml(text);
    for (const auto& [name, _] : file)
        if (name != "run" && name != "grid")
            throw Error("config-invalid", "unknown section [" + name + "]");

    ExperimentConfig base;
    if (auto it = file.find("run"); it != file.end())
        for (const auto& [key, value] : it->second) apply_scalar(base, key, value);

    long replications = 1;
    std::vector<std::pair<std::string, std::vector<TomlValue>>> axes;
    if (auto it = file.find("grid"); it != file.end()) {
        for (const auto& [key, value] : it->second) {
            if (key == "replications") {
                FieldReader r(it->second, "grid");
                replications = static_cast<long>(r.num("replications", 1));
                if (replications < 1)
                    throw Error("config-invalid", "replications must be >= 1");
                continue;
            }
            if (value.kind == TomlValue::Kind::array) {
                if (value.array.empty())
                    throw Error("config-invalid", "empty grid axis '" + key + "'");
                axes.emplace_back(key, value.array);
            } else {
                axes.emplace_back(key, std::vector<TomlValue>{value});
            }
        }
    }

    std::vector<ExperimentConfig> cells{base};
    for (const auto& [key, values] : axes) {
        std::vector<ExperimentConfig> next;
        for (const auto& cell : cells)
            for (const auto& value : values) {
                ExperimentConfig c = cell;
                apply_scalar(c, key, value);
                next.push_back(std::move(c));
            }
        cells = std::move(next);
    }

    std::vector<ExperimentConfig> out;
    for (long rep = 0; rep < replications; ++rep)
        for (const auto& cell : cells) {
            ExperimentConfig c = cell;
            c.replication = rep;
            validate(c);
            out.push_back(std::move(c));
        }
    return out;
}

}  // namespace abcsmc
