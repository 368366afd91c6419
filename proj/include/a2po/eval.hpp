#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "a2po/policy.hpp"
#include "a2po/rewards.hpp"
#include "a2po/sampler.hpp"
#include "a2po/tasks.hpp"

namespace a2po {

struct EvalSpec {
    int rollouts_per_task = 1;
    bool greedy = true;      // training uses temperature 1.0, evaluation is greedy
    double temperature = 1.0;
    int max_len = 64;
    bool reprompt_enabled = true;
    std::uint64_t seed = 0;
};

struct TaskEvalRecord {
    std::uint64_t task_id = 0;
    TaskClass cls = TaskClass::Neutral;
    double accuracy = 0.0;
    double aux_rate = 0.0;
    double mean_ppl = 0.0;
    bool timing_match = false;  // aux decision matches the class-optimal choice
};

struct EvalReport {
    int total_tasks = 0;
    double accuracy = 0.0;
    double mean_ppl = 0.0;
    double timing_correctness = 0.0;
    std::array<int, 3> count_by_class{};     // indexed by TaskClass
    std::array<double, 3> acc_by_class{};
    std::array<double, 3> aux_rate_by_class{};
    std::vector<TaskEvalRecord> records;
};

// Natural-protocol evaluation rollouts. For neutral tasks either aux choice
// counts as timing-correct; beneficial tasks want aux, harmful tasks don't.
inline EvalReport evaluate(const PolicyParams& params, const std::vector<TaskInstance>& tasks,
                           const TaskFamily& family, const EvalSpec& spec,
                           std::vector<std::pair<std::uint64_t, Trajectory>>* out_trajectories = nullptr) {
    SamplerOptions opts;
    opts.max_len = spec.max_len;
    opts.temperature = spec.temperature;
    opts.greedy = spec.greedy;
    opts.reprompt_enabled = spec.reprompt_enabled;

    EvalReport report;
    std::array<double, 3> acc_sum{}, aux_sum{};
    double ppl_sum = 0.0, acc_total = 0.0, timing_sum = 0.0;
    for (const TaskInstance& task : tasks) {
        TaskEvalRecord rec;
        rec.task_id = task.task_id;
        rec.cls = task.cls;
        double acc = 0.0, aux = 0.0, p = 0.0;
        for (int i = 0; i < spec.rollouts_per_task; ++i) {
            RngStream rng(stream_key({spec.seed, 0x6576616cull, task.task_id, static_cast<std::uint64_t>(i)}));
            const Trajectory traj = sample_trajectory(params, task, family, Protocol::Natural, rng, opts);
            acc += family.judge_answer(traj, task);
            aux += traj.aux_used() ? 1.0 : 0.0;
            p += ppl(traj);
            if (out_trajectories)
                out_trajectories->emplace_back(task.task_id, traj);
        }
        rec.accuracy = acc / spec.rollouts_per_task;
        rec.aux_rate = aux / spec.rollouts_per_task;
        rec.mean_ppl = p / spec.rollouts_per_task;
        const bool uses_aux = rec.aux_rate > 0.5;
        rec.timing_match = (task.cls == TaskClass::Neutral) || (task.cls == TaskClass::Beneficial && uses_aux) ||
                           (task.cls == TaskClass::Harmful && !uses_aux);

        const int c = static_cast<int>(task.cls);
        report.count_by_class[c] += 1;
        acc_sum[c] += rec.accuracy;
        aux_sum[c] += rec.aux_rate;
        acc_total += rec.accuracy;
        ppl_sum += rec.mean_ppl;
        timing_sum += rec.timing_match ? 1.0 : 0.0;
        report.records.push_back(rec);
    }
    report.total_tasks = static_cast<int>(tasks.size());
    if (report.total_tasks > 0) {
        report.accuracy = acc_total / report.total_tasks;
        report.mean_ppl = ppl_sum / report.total_tasks;
        report.timing_correctness = timing_sum / report.total_tasks;
    }
    for (int c = 0; c < 3; ++c) {
        if (report.count_by_class[c] > 0) {
            report.acc_by_class[c] = acc_sum[c] / report.count_by_class[c];
            report.aux_rate_by_class[c] = aux_sum[c] / report.count_by_class[c];
        }
    }
    return report;
}

}  // namespace a2po
