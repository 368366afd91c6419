#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "a2po/demo.hpp"
#include "a2po/rng.hpp"
#include "a2po/trajectory.hpp"
#include "a2po/vocab.hpp"

namespace a2po {

enum class TaskClass : int { Beneficial = 0, Neutral = 1, Harmful = 2 };

inline const char* task_class_name(TaskClass c) {
    switch (c) {
        case TaskClass::Beneficial: return "beneficial";
        case TaskClass::Neutral: return "neutral";
        default: return "harmful";
    }
}

// One synthetic problem. The prompt is [filler, filler, selector, mark]
// where mark is the true key token (neutral/harmful) or GO (beneficial).
// The hint is [filler, filler, filler, key-slot] where the key slot holds
// the true key (beneficial/neutral) or a decoy key (harmful).
struct TaskInstance {
    std::uint64_t task_id = 0;
    std::vector<TokenId> prompt_tokens;
    std::vector<TokenId> aux_truth_tokens;
    std::vector<TokenId> hint_tokens;
    TokenId answer_token = 0;
    TaskClass cls = TaskClass::Neutral;
    std::vector<int> key_positions;  // positions of key tokens in the prompt
};

// Keyed-lookup task family over the standard vocabulary. A fixed key table
// (seeded permutation) maps each of the K=4 key tokens to an answer token;
// the correct answer is the lookup of the task's true key, and the reading
// rule is "last key visible wins", which is what makes a decoy hint
// deterministically detrimental.
class TaskFamily {
  public:
    static constexpr int kNumKeys = 4;
    static constexpr int kAuxLen = 3;
    static constexpr int kHintLen = 4;

    TaskFamily(Vocabulary vocab, std::uint64_t key_table_seed) : vocab_(std::move(vocab)) {
        if (vocab_.size() < 32)
            throw std::invalid_argument("TaskFamily requires the 32-token standard layout");
        for (int i = 0; i < kNumKeys; ++i) {
            key_ids_[i] = 11 + i;
            aux_ids_[i] = 16 + i;
            selector_ids_[i] = 20 + i;
        }
        // seeded permutation key -> answer
        RngStream rng(stream_key({key_table_seed, 0x6b657974ull}));  // "keyt"
        const auto& answers = vocab_.answer_alphabet();
        std::array<int, kNumKeys> order{0, 1, 2, 3};
        for (int i = kNumKeys - 1; i > 0; --i)
            std::swap(order[i], order[rng.uniform_int(i + 1)]);
        for (int i = 0; i < kNumKeys; ++i)
            answer_by_key_[i] = answers[order[i]];
    }

    const Vocabulary& vocab() const { return vocab_; }
    TokenId noop_id() const { return kNoop; }
    TokenId go_id() const { return kGo; }

    bool is_key(TokenId id) const { return id >= key_ids_[0] && id <= key_ids_[kNumKeys - 1]; }
    int key_index(TokenId id) const { return id - key_ids_[0]; }
    TokenId key_id(int index) const { return key_ids_[index]; }

    // Answer the key table assigns to a key token.
    TokenId lookup(TokenId key_token) const {
        if (!is_key(key_token))
            throw std::invalid_argument("lookup requires a key token");
        return answer_by_key_[key_index(key_token)];
    }

    TaskInstance generate_task(TaskClass cls, RngStream& rng) const {
        TaskInstance task;
        task.task_id = rng.next_u64();
        task.cls = cls;
        const int selector = static_cast<int>(rng.uniform_int(kNumKeys));
        const int key = static_cast<int>(rng.uniform_int(kNumKeys));
        task.answer_token = answer_by_key_[key];

        task.aux_truth_tokens = {aux_ids_[selector], aux_ids_[(selector + 1) % kNumKeys],
                                 aux_ids_[(selector + 2) % kNumKeys]};

        const TokenId mark = (cls == TaskClass::Beneficial) ? kGo : key_ids_[key];
        task.prompt_tokens = {filler(rng), filler(rng), selector_ids_[selector], mark};
        if (cls != TaskClass::Beneficial)
            task.key_positions.push_back(3);

        int hint_key = key;
        if (cls == TaskClass::Harmful)
            hint_key = (key + 1 + static_cast<int>(rng.uniform_int(kNumKeys - 1))) % kNumKeys;
        task.hint_tokens = {filler(rng), filler(rng), filler(rng), key_ids_[hint_key]};
        return task;
    }

    // Exact-match verification of an aux span body against the ground truth,
    // after canonicalization (PAD and no-op tokens are dropped).
    bool verify_aux(const std::vector<TokenId>& candidate, const TaskInstance& task) const {
        return canonicalize(candidate) == canonicalize(task.aux_truth_tokens);
    }

    // 1 iff the token following the FIRST ANSWER_MARK equals the task's
    // answer token; 0 if the marker is absent or the slot is empty.
    int judge_answer(const Trajectory& traj, const TaskInstance& task) const {
        const TokenId mark = vocab_.role(Role::AnswerMark);
        for (std::size_t i = 0; i < traj.tokens.size(); ++i) {
            if (traj.tokens[i] == mark) {
                if (i + 1 >= traj.tokens.size())
                    return 0;
                return traj.tokens[i + 1] == task.answer_token ? 1 : 0;
            }
        }
        return 0;
    }

    // HINT_BEGIN || hint_tokens || HINT_END.
    std::vector<TokenId> hint_block(const TaskInstance& task) const {
        std::vector<TokenId> block;
        block.reserve(task.hint_tokens.size() + 2);
        block.push_back(vocab_.role(Role::HintBegin));
        block.insert(block.end(), task.hint_tokens.begin(), task.hint_tokens.end());
        block.push_back(vocab_.role(Role::HintEnd));
        return block;
    }

    std::vector<TokenId> inject_hint(const std::vector<TokenId>& ctx, const TaskInstance& task) const {
        std::vector<TokenId> out = ctx;
        const std::vector<TokenId> block = hint_block(task);
        out.insert(out.end(), block.begin(), block.end());
        return out;
    }

    // One standard demo (aux span, hint block, answer) and one prohibited
    // demo (direct answer, no aux tokens) per task. The standard demo
    // answers the lookup of the hint key, which is the answer an optimal
    // last-key reader produces after re-prompting.
    std::vector<Demonstration> make_demos(const std::vector<TaskInstance>& tasks, RngStream& rng) const {
        if (tasks.empty())
            throw std::invalid_argument("make_demos requires at least one task");
        std::vector<Demonstration> demos;
        demos.reserve(tasks.size() * 2);
        const TokenId mark = vocab_.role(Role::AnswerMark);
        const TokenId eos = vocab_.role(Role::Eos);
        for (const TaskInstance& task : tasks) {
            Demonstration std_demo;
            std_demo.tag = Demonstration::Tag::Standard;
            std_demo.prompt = task.prompt_tokens;
            std_demo.target.push_back(vocab_.role(Role::AuxOpen));
            std_demo.target.insert(std_demo.target.end(), task.aux_truth_tokens.begin(), task.aux_truth_tokens.end());
            std_demo.target.push_back(vocab_.role(Role::AuxClose));
            const std::vector<TokenId> block = hint_block(task);
            std_demo.target.insert(std_demo.target.end(), block.begin(), block.end());
            std_demo.target.push_back(mark);
            std_demo.target.push_back(lookup(task.hint_tokens.back()));
            std_demo.target.push_back(eos);
            demos.push_back(std::move(std_demo));

            Demonstration pro_demo;
            pro_demo.tag = Demonstration::Tag::Prohibited;
            pro_demo.prompt = task.prompt_tokens;
            pro_demo.target.push_back(mark);
            // best-available answer without aux: read the prompt key if
            // present, otherwise guess
            TokenId best = 0;
            bool have_key = false;
            for (TokenId t : task.prompt_tokens)
                if (is_key(t)) {
                    best = lookup(t);
                    have_key = true;
                }
            if (!have_key) {
                const auto& answers = vocab_.answer_alphabet();
                best = answers[rng.uniform_int(answers.size())];
            }
            pro_demo.target.push_back(best);
            pro_demo.target.push_back(eos);
            demos.push_back(std::move(pro_demo));
        }
        return demos;
    }

    std::vector<TokenId> canonicalize(const std::vector<TokenId>& seq) const {
        std::vector<TokenId> out;
        out.reserve(seq.size());
        const TokenId pad = vocab_.role(Role::Pad);
        for (TokenId t : seq)
            if (t != pad && t != kNoop)
                out.push_back(t);
        return out;
    }

  private:
    TokenId filler(RngStream& rng) const { return kFillerBase + static_cast<TokenId>(rng.uniform_int(kNumFillers)); }

    static constexpr TokenId kNoop = 15;
    static constexpr TokenId kGo = 24;
    static constexpr TokenId kFillerBase = 25;
    static constexpr int kNumFillers = 7;

    Vocabulary vocab_;
    std::array<TokenId, kNumKeys> key_ids_{};
    std::array<TokenId, kNumKeys> answer_by_key_{};
    std::array<TokenId, kNumKeys> aux_ids_{};
    std::array<TokenId, kNumKeys> selector_ids_{};
};

}  // namespace a2po
