#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "a2po/vocab.hpp"

namespace a2po {

// Conditioning protocol a trajectory was sampled under.
enum class Protocol : int { Mandatory = 0, Prohibited = 1, Natural = 2 };

inline const char* protocol_name(Protocol p) {
    switch (p) {
        case Protocol::Mandatory: return "mandatory";
        case Protocol::Prohibited: return "prohibited";
        default: return "natural";
    }
}

// Whether a response token was produced by the policy or injected by the
// re-prompt hook. Injected tokens condition later predictions but carry no
// logprob and never enter any loss.
enum class Origin : std::uint8_t { Generated = 0, Injected = 1 };

// Indices into Trajectory::tokens of the first well-formed aux span.
// open/close point at the AUX_OPEN / AUX_CLOSE tokens; the body is
// everything strictly between them.
struct AuxSpan {
    int open = -1;
    int close = -1;
};

struct Trajectory {
    Protocol protocol = Protocol::Natural;
    std::vector<TokenId> tokens;     // response tokens only (prompt excluded)
    std::vector<double> logprobs;    // one entry per Generated token, in order
    std::vector<Origin> origin;      // aligned with tokens
    std::optional<AuxSpan> aux_span;
    bool reprompted = false;
    bool truncated = false;

    int generated_count() const {
        int n = 0;
        for (Origin o : origin)
            if (o == Origin::Generated) ++n;
        return n;
    }

    bool aux_used() const { return aux_span.has_value(); }
};

// First well-formed, non-nested <aux>...</aux> pair: an AUX_OPEN followed by
// an AUX_CLOSE with no aux-role token between them. A stray AUX_CLOSE or a
// re-opened AUX_OPEN abandons the pending span.
inline std::optional<AuxSpan> find_aux_span(const std::vector<TokenId>& tokens, const Vocabulary& vocab) {
    const TokenId open_id = vocab.role(Role::AuxOpen);
    const TokenId close_id = vocab.role(Role::AuxClose);
    int pending = -1;
    for (int i = 0; i < static_cast<int>(tokens.size()); ++i) {
        if (tokens[i] == open_id) {
            pending = i;
        } else if (tokens[i] == close_id) {
            if (pending >= 0)
                return AuxSpan{pending, i};
            // close with no matching open: malformed, keep scanning
        }
    }
    return std::nullopt;
}

// Body tokens of a span, exclusive of the delimiters.
inline std::vector<TokenId> span_body(const Trajectory& traj, const AuxSpan& span) {
    return std::vector<TokenId>(traj.tokens.begin() + span.open + 1, traj.tokens.begin() + span.close);
}

// Per-task rollout set G = {O+, O-, O} plus the counterfactual baselines
// derived from the forced subsets.
struct RolloutGroup {
    std::uint64_t task_id = 0;
    std::vector<Trajectory> mandatory;
    std::vector<Trajectory> prohibited;
    std::vector<Trajectory> natural;
    double delta = 0.0;    // utility gap: mean acc(O+) - mean acc(O-)
    double ppl_bar = 1.0;  // perplexity baseline: mean PPL(O+)
};

}  // namespace a2po
