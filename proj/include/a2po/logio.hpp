#pragma once

#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "a2po/grpo.hpp"
#include "a2po/rewards.hpp"
#include "a2po/tasks.hpp"
#include "a2po/trajectory.hpp"

namespace a2po {

using nlohmann::json;

// ---- trajectory log (JSON Lines) -------------------------------------------

inline json trajectory_record(std::uint64_t task_id, const Trajectory& traj,
                              const RewardBreakdown* rewards = nullptr, const Baselines* baselines = nullptr) {
    json rec;
    rec["task_id"] = task_id;
    rec["protocol"] = protocol_name(traj.protocol);
    rec["tokens"] = traj.tokens;
    rec["logprobs"] = traj.logprobs;
    std::string origin;
    origin.reserve(traj.origin.size());
    for (Origin o : traj.origin)
        origin.push_back(o == Origin::Generated ? 'G' : 'I');
    rec["origin"] = origin;
    if (traj.aux_span)
        rec["aux_span"] = json::array({traj.aux_span->open, traj.aux_span->close});
    else
        rec["aux_span"] = nullptr;
    rec["reprompted"] = traj.reprompted;
    rec["truncated"] = traj.truncated;
    if (rewards) {
        json r;
        r["r_acc"] = rewards->r_acc;
        r["r_fmt"] = rewards->r_fmt;
        r["r_time"] = rewards->r_time;
        r["r_qual"] = rewards->r_qual;
        r["composite"] = rewards->composite;
        r["ppl"] = rewards->ppl;
        if (baselines) {
            r["delta"] = baselines->delta;
            r["ppl_bar"] = baselines->ppl_bar;
        }
        rec["rewards"] = r;
    }
    return rec;
}

inline Protocol protocol_from_name(const std::string& name) {
    if (name == "mandatory")
        return Protocol::Mandatory;
    if (name == "prohibited")
        return Protocol::Prohibited;
    if (name == "natural")
        return Protocol::Natural;
    throw std::invalid_argument("unknown protocol name: " + name);
}

inline std::pair<std::uint64_t, Trajectory> trajectory_from_record(const json& rec) {
    Trajectory traj;
    traj.protocol = protocol_from_name(rec.at("protocol").get<std::string>());
    traj.tokens = rec.at("tokens").get<std::vector<TokenId>>();
    traj.logprobs = rec.at("logprobs").get<std::vector<double>>();
    const std::string origin = rec.at("origin").get<std::string>();
    if (origin.size() != traj.tokens.size())
        throw std::invalid_argument("trajectory record: origin length mismatch");
    for (char c : origin)
        traj.origin.push_back(c == 'G' ? Origin::Generated : Origin::Injected);
    if (!rec.at("aux_span").is_null()) {
        const auto span = rec.at("aux_span");
        traj.aux_span = AuxSpan{span.at(0).get<int>(), span.at(1).get<int>()};
    }
    traj.reprompted = rec.at("reprompted").get<bool>();
    traj.truncated = rec.at("truncated").get<bool>();
    return {rec.at("task_id").get<std::uint64_t>(), traj};
}

// ---- task suite log ---------------------------------------------------------

inline json task_record(const TaskInstance& task) {
    json rec;
    rec["task_id"] = task.task_id;
    rec["class"] = task_class_name(task.cls);
    rec["prompt_tokens"] = task.prompt_tokens;
    rec["aux_truth_tokens"] = task.aux_truth_tokens;
    rec["hint_tokens"] = task.hint_tokens;
    rec["answer_token"] = task.answer_token;
    rec["key_positions"] = task.key_positions;
    return rec;
}

inline TaskClass task_class_from_name(const std::string& name) {
    if (name == "beneficial")
        return TaskClass::Beneficial;
    if (name == "neutral")
        return TaskClass::Neutral;
    if (name == "harmful")
        return TaskClass::Harmful;
    throw std::invalid_argument("unknown task class: " + name);
}

inline TaskInstance task_from_record(const json& rec) {
    TaskInstance task;
    task.task_id = rec.at("task_id").get<std::uint64_t>();
    task.cls = task_class_from_name(rec.at("class").get<std::string>());
    task.prompt_tokens = rec.at("prompt_tokens").get<std::vector<TokenId>>();
    task.aux_truth_tokens = rec.at("aux_truth_tokens").get<std::vector<TokenId>>();
    task.hint_tokens = rec.at("hint_tokens").get<std::vector<TokenId>>();
    task.answer_token = rec.at("answer_token").get<TokenId>();
    task.key_positions = rec.at("key_positions").get<std::vector<int>>();
    return task;
}

inline void write_jsonl(const std::string& path, const std::vector<json>& records) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot open for writing: " + path);
    for (const json& rec : records)
        out << rec.dump() << "\n";
    if (!out)
        throw std::runtime_error("write failed: " + path);
}

inline std::vector<json> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open: " + path);
    std::vector<json> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        records.push_back(json::parse(line));
    }
    return records;
}

// ---- metrics CSV -------------------------------------------------------------

inline std::string metrics_csv_header() {
    return "step,mean_reward,mean_abs_advantage,loss,kl_term,grad_norm,"
           "aux_rate_beneficial,aux_rate_neutral,aux_rate_harmful,"
           "acc_beneficial,acc_neutral,acc_harmful";
}

inline std::string metrics_csv_row(const UpdateReport& r) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", r.step, r.mean_reward,
                  r.mean_abs_advantage, r.loss, r.kl_term, r.grad_norm, r.aux_rate_by_class[0], r.aux_rate_by_class[1],
                  r.aux_rate_by_class[2], r.acc_by_class[0], r.acc_by_class[1], r.acc_by_class[2]);
    return buf;
}

inline void write_metrics_csv(const std::string& path, const std::vector<UpdateReport>& history) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot open for writing: " + path);
    out << metrics_csv_header() << "\n";
    for (const UpdateReport& r : history)
        out << metrics_csv_row(r) << "\n";
    if (!out)
        throw std::runtime_error("write failed: " + path);
}

}  // namespace a2po
