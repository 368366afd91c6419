#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "a2po/config.hpp"
#include "a2po/eval.hpp"
#include "a2po/gradcheck.hpp"
#include "a2po/grpo.hpp"
#include "a2po/logio.hpp"
#include "a2po/policy.hpp"
#include "a2po/sampler.hpp"
#include "a2po/tasks.hpp"

namespace a2po {

// Deterministic task suite: counts per class, streams keyed by
// (seed, class, index).
inline std::vector<TaskInstance> build_suite(const TaskFamily& family, int beneficial, int neutral, int harmful,
                                             std::uint64_t seed) {
    std::vector<TaskInstance> suite;
    suite.reserve(beneficial + neutral + harmful);
    const std::array<std::pair<TaskClass, int>, 3> plan{
        std::pair{TaskClass::Beneficial, beneficial},
        std::pair{TaskClass::Neutral, neutral},
        std::pair{TaskClass::Harmful, harmful},
    };
    for (const auto& [cls, count] : plan) {
        for (int i = 0; i < count; ++i) {
            RngStream rng(stream_key({seed, 0x7461736bull, static_cast<std::uint64_t>(cls),
                                      static_cast<std::uint64_t>(i)}));  // "task"
            suite.push_back(family.generate_task(cls, rng));
        }
    }
    return suite;
}

inline std::uint64_t config_hash(const ExperimentConfig& cfg) {
    const std::string text = serialize_config(cfg);
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline EvalSpec eval_spec_from(const ExperimentConfig& cfg) {
    EvalSpec spec;
    spec.rollouts_per_task = cfg.eval_rollouts_per_task;
    spec.greedy = cfg.eval_greedy;
    spec.temperature = cfg.train.temperature;
    spec.max_len = cfg.train.max_len;
    spec.reprompt_enabled = cfg.train.toggles.visual_reprompt;
    spec.seed = cfg.seed;
    return spec;
}

inline json eval_report_json(const EvalReport& report) {
    json j;
    j["total_tasks"] = report.total_tasks;
    j["accuracy"] = report.accuracy;
    j["mean_ppl"] = report.mean_ppl;
    j["timing_correctness"] = report.timing_correctness;
    for (int c = 0; c < 3; ++c) {
        const std::string name = task_class_name(static_cast<TaskClass>(c));
        j["count_" + name] = report.count_by_class[c];
        j["acc_" + name] = report.acc_by_class[c];
        j["aux_rate_" + name] = report.aux_rate_by_class[c];
    }
    return j;
}

// Warm start shared by train/ablate: a dedicated demo suite (warm_demo_tasks
// per class), mixed standard/prohibited demos, MLE warm-up.
inline PolicyParams run_warmstart(const ExperimentConfig& cfg, const TaskFamily& family) {
    const std::vector<TaskInstance> warm_suite =
        build_suite(family, cfg.warm_demo_tasks, cfg.warm_demo_tasks, cfg.warm_demo_tasks,
                    stream_key({cfg.seed, 0x7761726dull}));  // "warm"
    RngStream demo_rng(stream_key({cfg.seed, 0x64656d6full}));  // "demo"
    const std::vector<Demonstration> demos = family.make_demos(warm_suite, demo_rng);
    const PolicyParams fresh = init_params(family.vocab(), cfg.window, cfg.embed_dim, cfg.seed);
    return warmstart_mle(fresh, demos, cfg.warm_epochs, cfg.warm_lr);
}

// train subcommand: suite -> (filter) -> warm start -> RL -> eval, writing
// config snapshot, checkpoints, trajectory log, metrics CSV and eval report
// into out_dir.
inline int cmd_train(const ExperimentConfig& cfg, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const TaskFamily family(Vocabulary::standard(), cfg.key_table_seed);

    std::ofstream(out_dir + "/config.txt") << serialize_config(cfg);

    std::vector<TaskInstance> suite =
        build_suite(family, cfg.tasks_beneficial, cfg.tasks_neutral, cfg.tasks_harmful, cfg.seed);
    {
        std::vector<json> records;
        for (const TaskInstance& t : suite)
            records.push_back(task_record(t));
        write_jsonl(out_dir + "/tasks.jsonl", records);
    }

    const PolicyParams warm = run_warmstart(cfg, family);
    save_checkpoint(warm, out_dir + "/warmstart.a2po");

    if (cfg.filter_enabled) {
        SamplerOptions opts;
        opts.max_len = cfg.train.max_len;
        opts.temperature = cfg.train.temperature;
        opts.reprompt_enabled = cfg.train.toggles.visual_reprompt;
        suite = filter_marginal(suite, warm, family, cfg.filter_rollouts, cfg.seed, opts);
        if (cfg.verbosity > 0)
            std::cout << "filter_marginal kept " << suite.size() << " tasks\n";
        if (suite.empty())
            throw std::runtime_error("marginal-solvability filter removed every task");
    }

    const TrainResult trained = train(cfg.train, suite, warm, family);
    save_checkpoint(trained.params, out_dir + "/final.a2po");
    write_metrics_csv(out_dir + "/metrics.csv", trained.history);

    // checkpoint sidecar metadata
    {
        json meta;
        meta["step"] = cfg.train.steps;
        meta["config_hash"] = config_hash(cfg);
        meta["mean_reward"] = trained.history.empty() ? 0.0 : trained.history.back().mean_reward;
        std::ofstream(out_dir + "/final.a2po.meta.json") << meta.dump(2) << "\n";
    }

    const std::vector<TaskInstance> eval_suite =
        build_suite(family, cfg.eval_tasks_per_class, cfg.eval_tasks_per_class, cfg.eval_tasks_per_class,
                    stream_key({cfg.seed, 0x6576616cull}));  // "eval"
    std::vector<std::pair<std::uint64_t, Trajectory>> eval_trajs;
    const EvalReport report = evaluate(trained.params, eval_suite, family, eval_spec_from(cfg), &eval_trajs);
    {
        std::vector<json> eval_task_records;
        for (const TaskInstance& t : eval_suite)
            eval_task_records.push_back(task_record(t));
        write_jsonl(out_dir + "/eval_tasks.jsonl", eval_task_records);
        std::vector<json> records;
        for (const auto& [task_id, traj] : eval_trajs)
            records.push_back(trajectory_record(task_id, traj));
        write_jsonl(out_dir + "/trajectories.jsonl", records);
        std::ofstream(out_dir + "/eval_report.json") << eval_report_json(report).dump(2) << "\n";
    }
    if (cfg.verbosity > 0) {
        std::cout << "final accuracy " << report.accuracy << ", timing correctness " << report.timing_correctness
                  << "\n";
    }
    return 0;
}

inline int cmd_eval(const std::string& checkpoint_path, const ExperimentConfig& cfg, const std::string& tasks_path,
                    const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const TaskFamily family(Vocabulary::standard(), cfg.key_table_seed);
    const PolicyParams params = load_checkpoint(checkpoint_path, family.vocab());

    std::vector<TaskInstance> suite;
    if (!tasks_path.empty()) {
        for (const json& rec : read_jsonl(tasks_path))
            suite.push_back(task_from_record(rec));
    } else {
        suite = build_suite(family, cfg.eval_tasks_per_class, cfg.eval_tasks_per_class, cfg.eval_tasks_per_class,
                            stream_key({cfg.seed, 0x6576616cull}));
    }
    std::vector<std::pair<std::uint64_t, Trajectory>> trajs;
    const EvalReport report = evaluate(params, suite, family, eval_spec_from(cfg), &trajs);
    std::vector<json> records;
    for (const auto& [task_id, traj] : trajs)
        records.push_back(trajectory_record(task_id, traj));
    write_jsonl(out_dir + "/trajectories.jsonl", records);
    std::ofstream(out_dir + "/eval_report.json") << eval_report_json(report).dump(2) << "\n";
    std::cout << eval_report_json(report).dump(2) << "\n";
    return 0;
}

struct GradcheckSummary {
    GradCheckReport logprob;
    GradCheckReport surrogate;
    bool pass() const { return logprob.pass && surrogate.pass; }
};

// Finite-difference verification of both the log-likelihood gradient and the
// full clipped-surrogate-with-KL gradient at non-unit ratios.
inline GradcheckSummary run_gradcheck(const ExperimentConfig& cfg, int coords_per_check = 100) {
    const TaskFamily family(Vocabulary::standard(), cfg.key_table_seed);
    PolicyParams params = init_params(family.vocab(), cfg.window, cfg.embed_dim, cfg.seed + 1);
    RngStream task_rng(stream_key({cfg.seed, 0x67636b74ull}));
    const TaskInstance task = family.generate_task(TaskClass::Beneficial, task_rng);

    GradcheckSummary summary;
    RngStream coord_rng(stream_key({cfg.seed, 0x636f6f72ull}));

    // log-likelihood gradient on a sampled trajectory
    {
        RngStream rng(stream_key({cfg.seed, 0x67636b31ull}));
        SamplerOptions opts;
        const Trajectory traj = sample_trajectory(params, task, family, Protocol::Natural, rng, opts);
        const std::vector<double> analytic = grad_logprob(params, task.prompt_tokens, traj);
        auto f = [&]() {
            double s = 0.0;
            for (double lp : logprob_of(params, task.prompt_tokens, traj))
                s += lp;
            return s;
        };
        const std::vector<std::size_t> coords = random_coords(params.w.size(), coords_per_check, coord_rng);
        summary.logprob = finite_difference_check(params.w, f, analytic, coords);
    }

    // full surrogate with synthetic non-unit ratios: old and ref are
    // perturbed copies so clipping and the KL penalty are both exercised
    {
        PolicyParams old_snapshot = params;
        PolicyParams ref_snapshot = params;
        RngStream perturb(stream_key({cfg.seed, 0x67636b32ull}));
        for (double& w : old_snapshot.w)
            w += perturb.uniform(-0.02, 0.02);
        for (double& w : ref_snapshot.w)
            w += perturb.uniform(-0.02, 0.02);

        const std::uint64_t group_seed = stream_key({cfg.seed, 0x67636b33ull});
        const RolloutGroup group = build_rollout_group(old_snapshot, task, family, 4, group_seed);
        std::vector<double> rewards;
        const Baselines baselines{group.delta, group.ppl_bar};
        for (const Trajectory& traj : group.natural)
            rewards.push_back(score_trajectory(traj, task, family, baselines, cfg.train.weights).composite);
        GroupBatch gb;
        gb.group = &group;
        gb.task = &task;
        gb.advantages = advantages(rewards, cfg.train.eps_norm);
        // force a non-degenerate advantage vector even if all rewards tie
        bool all_zero = true;
        for (double a : gb.advantages)
            if (a != 0.0)
                all_zero = false;
        if (all_zero)
            for (std::size_t i = 0; i < gb.advantages.size(); ++i)
                gb.advantages[i] = (i % 2 == 0) ? 1.0 : -1.0;
        const std::vector<GroupBatch> batch{gb};

        const SurrogateResult sur =
            surrogate_loss(params, old_snapshot, ref_snapshot, batch, cfg.train.clip_eps, cfg.train.kl_beta);
        auto f = [&]() {
            return surrogate_loss(params, old_snapshot, ref_snapshot, batch, cfg.train.clip_eps, cfg.train.kl_beta)
                .loss;
        };
        const std::vector<std::size_t> coords = random_coords(params.w.size(), coords_per_check, coord_rng);
        summary.surrogate = finite_difference_check(params.w, f, sur.grad, coords);
    }
    return summary;
}

inline int cmd_gradcheck(const ExperimentConfig& cfg) {
    const GradcheckSummary summary = run_gradcheck(cfg);
    std::cout << "logprob gradient:   max rel error " << summary.logprob.max_rel_error << " at coordinate "
              << summary.logprob.worst_coord << " (" << summary.logprob.coords_checked << " coords) "
              << (summary.logprob.pass ? "PASS" : "FAIL") << "\n";
    std::cout << "surrogate gradient: max rel error " << summary.surrogate.max_rel_error << " at coordinate "
              << summary.surrogate.worst_coord << " (" << summary.surrogate.coords_checked << " coords) "
              << (summary.surrogate.pass ? "PASS" : "FAIL") << "\n";
    return summary.pass() ? 0 : 2;
}

inline int cmd_ablate(const ExperimentConfig& cfg, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const TaskFamily family(Vocabulary::standard(), cfg.key_table_seed);
    std::ofstream(out_dir + "/config.txt") << serialize_config(cfg);

    const std::vector<TaskInstance> suite =
        build_suite(family, cfg.tasks_beneficial, cfg.tasks_neutral, cfg.tasks_harmful, cfg.seed);
    const std::vector<TaskInstance> eval_suite =
        build_suite(family, cfg.eval_tasks_per_class, cfg.eval_tasks_per_class, cfg.eval_tasks_per_class,
                    stream_key({cfg.seed, 0x6576616cull}));
    const PolicyParams warm = run_warmstart(cfg, family);

    const std::vector<AblationRow> rows =
        run_ablation(cfg.train, suite, eval_suite, warm, family, eval_spec_from(cfg));

    std::ofstream out(out_dir + "/ablation.csv");
    out << "variant,LR,TR,QR,Vis,acc,ppl,timing_correctness\n";
    for (const AblationRow& row : rows) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%s,%d,%d,%d,%d,%.17g,%.17g,%.17g", row.variant.c_str(), row.lr ? 1 : 0,
                      row.tr ? 1 : 0, row.qr ? 1 : 0, row.vis ? 1 : 0, row.accuracy, row.mean_ppl,
                      row.timing_correctness);
        out << buf << "\n";
        std::cout << buf << "\n";
    }
    return 0;
}

}  // namespace a2po
