#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "a2po/grpo.hpp"

namespace a2po {

// Full experiment description: policy shape, training hyperparameters,
// task-suite composition, warm-start and evaluation settings. Defaults
// mirror the reference coefficient tables (weights 0.70/0.00/0.15/0.15,
// tau 0.15, delta 0.01, N=8, beta=0.01) except for the learning rate,
// which is set for the toy policy scale.
struct ExperimentConfig {
    std::uint64_t seed = 0;
    int window = 4;
    int embed_dim = 16;
    TrainConfig train;

    int tasks_beneficial = 60;
    int tasks_neutral = 60;
    int tasks_harmful = 60;
    std::uint64_t key_table_seed = 1;

    int warm_demo_tasks = 60;
    int warm_epochs = 600;
    double warm_lr = 1.0;

    bool filter_enabled = false;
    int filter_rollouts = 10;

    int eval_tasks_per_class = 50;
    int eval_rollouts_per_task = 1;
    bool eval_greedy = true;

    int verbosity = 1;

    void validate() const {
        train.validate();
        if (window < 2)
            throw std::invalid_argument("window must be >= 2");
        if (embed_dim < 4)
            throw std::invalid_argument("embed_dim must be >= 4");
        if (tasks_beneficial < 0 || tasks_neutral < 0 || tasks_harmful < 0)
            throw std::invalid_argument("per-class task counts must be nonnegative");
        if (tasks_beneficial + tasks_neutral + tasks_harmful < 1)
            throw std::invalid_argument("task suite must contain at least one task");
        if (warm_demo_tasks < 1)
            throw std::invalid_argument("warm_demo_tasks must be >= 1");
        if (warm_epochs < 0)
            throw std::invalid_argument("warm_epochs must be >= 0");
        if (warm_lr <= 0.0)
            throw std::invalid_argument("warm_lr must be positive");
        if (filter_rollouts < 2)
            throw std::invalid_argument("filter_rollouts must be >= 2");
        if (eval_tasks_per_class < 1)
            throw std::invalid_argument("eval_tasks_per_class must be >= 1");
        if (eval_rollouts_per_task < 1)
            throw std::invalid_argument("eval_rollouts_per_task must be >= 1");
    }
};

namespace detail {

inline std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1")
        return true;
    if (v == "false" || v == "0")
        return false;
    throw std::invalid_argument("config key '" + key + "': expected boolean, got '" + v + "'");
}

inline double parse_double(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size())
            throw std::invalid_argument("");
        return x;
    } catch (...) {
        throw std::invalid_argument("config key '" + key + "': expected number, got '" + v + "'");
    }
}

inline long long parse_int(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const long long x = std::stoll(v, &pos);
        if (pos != v.size())
            throw std::invalid_argument("");
        return x;
    } catch (...) {
        throw std::invalid_argument("config key '" + key + "': expected integer, got '" + v + "'");
    }
}

inline std::uint64_t parse_u64(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const unsigned long long x = std::stoull(v, &pos);
        if (pos != v.size())
            throw std::invalid_argument("");
        return x;
    } catch (...) {
        throw std::invalid_argument("config key '" + key + "': expected unsigned integer, got '" + v + "'");
    }
}

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos)
        return "";
    return s.substr(a, b - a + 1);
}

}  // namespace detail

// Parses the key-value config format: one `key = value` (or `key: value`)
// per line, '#' starts a comment. Unknown keys are hard errors; an empty
// file yields all defaults.
inline ExperimentConfig parse_config_text(std::istream& in, const std::string& origin = "<config>") {
    ExperimentConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos)
            line.erase(hash);
        line = detail::trim(line);
        if (line.empty())
            continue;
        std::size_t sep = line.find_first_of("=:");
        if (sep == std::string::npos)
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, sep));
        const std::string value = detail::trim(line.substr(sep + 1));
        if (key.empty() || value.empty())
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");

        using namespace detail;
        try {
            if (key == "seed") {
                cfg.seed = parse_u64(value, key);
            } else if (key == "window") {
                cfg.window = static_cast<int>(parse_int(value, key));
            } else if (key == "embed_dim") {
                cfg.embed_dim = static_cast<int>(parse_int(value, key));
            } else if (key == "steps") {
                cfg.train.steps = static_cast<int>(parse_int(value, key));
            } else if (key == "lr") {
                cfg.train.lr = parse_double(value, key);
            } else if (key == "n_per_subset") {
                cfg.train.n_per_subset = static_cast<int>(parse_int(value, key));
            } else if (key == "max_len") {
                cfg.train.max_len = static_cast<int>(parse_int(value, key));
            } else if (key == "temperature") {
                cfg.train.temperature = parse_double(value, key);
            } else if (key == "kl_beta") {
                cfg.train.kl_beta = parse_double(value, key);
            } else if (key == "clip_eps") {
                cfg.train.clip_eps = parse_double(value, key);
            } else if (key == "eps_norm") {
                cfg.train.eps_norm = parse_double(value, key);
            } else if (key == "adam_beta1") {
                cfg.train.adam_beta1 = parse_double(value, key);
            } else if (key == "adam_beta2") {
                cfg.train.adam_beta2 = parse_double(value, key);
            } else if (key == "tasks_per_step") {
                cfg.train.tasks_per_step = static_cast<int>(parse_int(value, key));
            } else if (key == "w_acc") {
                cfg.train.weights.w_acc = parse_double(value, key);
            } else if (key == "w_fmt") {
                cfg.train.weights.w_fmt = parse_double(value, key);
            } else if (key == "w_time") {
                cfg.train.weights.w_time = parse_double(value, key);
            } else if (key == "w_qual") {
                cfg.train.weights.w_qual = parse_double(value, key);
            } else if (key == "tau") {
                cfg.train.weights.tau = parse_double(value, key);
            } else if (key == "delta_tol") {
                cfg.train.weights.delta_tol = parse_double(value, key);
            } else if (key == "length_weight") {
                cfg.train.length_weight = parse_double(value, key);
            } else if (key == "length_reward") {
                cfg.train.toggles.length_reward = parse_bool(value, key);
            } else if (key == "timing_reward") {
                cfg.train.toggles.timing_reward = parse_bool(value, key);
            } else if (key == "quality_reward") {
                cfg.train.toggles.quality_reward = parse_bool(value, key);
            } else if (key == "visual_reprompt") {
                cfg.train.toggles.visual_reprompt = parse_bool(value, key);
            } else if (key == "tasks_beneficial") {
                cfg.tasks_beneficial = static_cast<int>(parse_int(value, key));
            } else if (key == "tasks_neutral") {
                cfg.tasks_neutral = static_cast<int>(parse_int(value, key));
            } else if (key == "tasks_harmful") {
                cfg.tasks_harmful = static_cast<int>(parse_int(value, key));
            } else if (key == "key_table_seed") {
                cfg.key_table_seed = parse_u64(value, key);
            } else if (key == "warm_demo_tasks") {
                cfg.warm_demo_tasks = static_cast<int>(parse_int(value, key));
            } else if (key == "warm_epochs") {
                cfg.warm_epochs = static_cast<int>(parse_int(value, key));
            } else if (key == "warm_lr") {
                cfg.warm_lr = parse_double(value, key);
            } else if (key == "filter_enabled") {
                cfg.filter_enabled = parse_bool(value, key);
            } else if (key == "filter_rollouts") {
                cfg.filter_rollouts = static_cast<int>(parse_int(value, key));
            } else if (key == "eval_tasks_per_class") {
                cfg.eval_tasks_per_class = static_cast<int>(parse_int(value, key));
            } else if (key == "eval_rollouts_per_task") {
                cfg.eval_rollouts_per_task = static_cast<int>(parse_int(value, key));
            } else if (key == "eval_greedy") {
                cfg.eval_greedy = parse_bool(value, key);
            } else if (key == "verbosity") {
                cfg.verbosity = static_cast<int>(parse_int(value, key));
            } else {
                throw std::invalid_argument("unknown config key '" + key + "'");
            }
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    cfg.train.seed = cfg.seed;
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(origin + ": " + e.what());
    }
    return cfg;
}

inline ExperimentConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::invalid_argument("cannot open config file: " + path);
    return parse_config_text(in, path);
}

inline std::string serialize_config(const ExperimentConfig& cfg) {
    using detail::fmt_double;
    std::ostringstream out;
    auto kv = [&](const std::string& key, const std::string& value) { out << key << " = " << value << "\n"; };
    kv("seed", std::to_string(cfg.seed));
    kv("window", std::to_string(cfg.window));
    kv("embed_dim", std::to_string(cfg.embed_dim));
    kv("steps", std::to_string(cfg.train.steps));
    kv("lr", fmt_double(cfg.train.lr));
    kv("n_per_subset", std::to_string(cfg.train.n_per_subset));
    kv("max_len", std::to_string(cfg.train.max_len));
    kv("temperature", fmt_double(cfg.train.temperature));
    kv("kl_beta", fmt_double(cfg.train.kl_beta));
    kv("clip_eps", fmt_double(cfg.train.clip_eps));
    kv("eps_norm", fmt_double(cfg.train.eps_norm));
    kv("adam_beta1", fmt_double(cfg.train.adam_beta1));
    kv("adam_beta2", fmt_double(cfg.train.adam_beta2));
    kv("tasks_per_step", std::to_string(cfg.train.tasks_per_step));
    kv("w_acc", fmt_double(cfg.train.weights.w_acc));
    kv("w_fmt", fmt_double(cfg.train.weights.w_fmt));
    kv("w_time", fmt_double(cfg.train.weights.w_time));
    kv("w_qual", fmt_double(cfg.train.weights.w_qual));
    kv("tau", fmt_double(cfg.train.weights.tau));
    kv("delta_tol", fmt_double(cfg.train.weights.delta_tol));
    kv("length_weight", fmt_double(cfg.train.length_weight));
    kv("length_reward", cfg.train.toggles.length_reward ? "true" : "false");
    kv("timing_reward", cfg.train.toggles.timing_reward ? "true" : "false");
    kv("quality_reward", cfg.train.toggles.quality_reward ? "true" : "false");
    kv("visual_reprompt", cfg.train.toggles.visual_reprompt ? "true" : "false");
    kv("tasks_beneficial", std::to_string(cfg.tasks_beneficial));
    kv("tasks_neutral", std::to_string(cfg.tasks_neutral));
    kv("tasks_harmful", std::to_string(cfg.tasks_harmful));
    kv("key_table_seed", std::to_string(cfg.key_table_seed));
    kv("warm_demo_tasks", std::to_string(cfg.warm_demo_tasks));
    kv("warm_epochs", std::to_string(cfg.warm_epochs));
    kv("warm_lr", fmt_double(cfg.warm_lr));
    kv("filter_enabled", cfg.filter_enabled ? "true" : "false");
    kv("filter_rollouts", std::to_string(cfg.filter_rollouts));
    kv("eval_tasks_per_class", std::to_string(cfg.eval_tasks_per_class));
    kv("eval_rollouts_per_task", std::to_string(cfg.eval_rollouts_per_task));
    kv("eval_greedy", cfg.eval_greedy ? "true" : "false");
    kv("verbosity", std::to_string(cfg.verbosity));
    return out.str();
}

}  // namespace a2po
