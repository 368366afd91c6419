#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "a2po/demo.hpp"
#include "a2po/rng.hpp"
#include "a2po/trajectory.hpp"
#include "a2po/vocab.hpp"

namespace a2po {

using Context = std::vector<TokenId>;

// Windowed embedding-sum policy:
//
//   logits(ctx) = U * tanh( sum_{j=1..W} P_j * E[ctx[-j]] + b )
//
// with embedding table E (|V| x d), per-position projections P_j (d x d),
// bias b (d) and output map U (|V| x d). Contexts shorter than W are
// left-padded with PAD. Weight layout (checkpoint enumeration order):
// E row-major, then P_1..P_W row-major, then b, then U row-major.
struct PolicyParams {
    Vocabulary vocab;
    int window;
    int embed_dim;
    std::vector<double> w;

    PolicyParams(Vocabulary v, int win, int dim)
        : vocab(std::move(v)), window(win), embed_dim(dim), w(param_count(vocab.size(), win, dim), 0.0) {
        if (window < 2)
            throw std::invalid_argument("window must be >= 2");
        if (embed_dim < 4)
            throw std::invalid_argument("embed_dim must be >= 4");
    }

    static std::size_t param_count(int vocab_size, int window, int embed_dim) {
        const std::size_t v = static_cast<std::size_t>(vocab_size);
        const std::size_t d = static_cast<std::size_t>(embed_dim);
        return v * d + static_cast<std::size_t>(window) * d * d + d + v * d;
    }

    std::size_t embed_off(TokenId tok) const { return static_cast<std::size_t>(tok) * embed_dim; }
    // Projection for context offset j (j = 0 is the most recent token).
    std::size_t proj_off(int j) const {
        const std::size_t d = embed_dim;
        return static_cast<std::size_t>(vocab.size()) * d + static_cast<std::size_t>(j) * d * d;
    }
    std::size_t bias_off() const { return proj_off(window); }
    std::size_t out_off(TokenId tok) const { return bias_off() + embed_dim + static_cast<std::size_t>(tok) * embed_dim; }
};

inline PolicyParams init_params(const Vocabulary& vocab, int window, int embed_dim, std::uint64_t seed) {
    PolicyParams p(vocab, window, embed_dim);
    RngStream rng(stream_key({seed, 0x696e6974ull}));  // "init"
    for (double& x : p.w)
        x = rng.uniform(-0.05, 0.05);
    return p;
}

namespace detail {

// Last W tokens of ctx, most recent first, left-padded with PAD.
inline void window_tokens(const PolicyParams& p, const Context& ctx, std::vector<TokenId>& out) {
    out.resize(p.window);
    const TokenId pad = p.vocab.role(Role::Pad);
    const int n = static_cast<int>(ctx.size());
    for (int j = 0; j < p.window; ++j)
        out[j] = (j < n) ? ctx[n - 1 - j] : pad;
}

struct Activation {
    std::vector<TokenId> win;
    std::vector<double> hidden;  // tanh output
    std::vector<double> logits;
};

inline void forward(const PolicyParams& p, const Context& ctx, Activation& act) {
    const int d = p.embed_dim;
    const int v = p.vocab.size();
    window_tokens(p, ctx, act.win);
    act.hidden.assign(d, 0.0);
    const double* b = p.w.data() + p.bias_off();
    for (int k = 0; k < d; ++k)
        act.hidden[k] = b[k];
    for (int j = 0; j < p.window; ++j) {
        const double* e = p.w.data() + p.embed_off(act.win[j]);
        const double* pj = p.w.data() + p.proj_off(j);
        for (int k = 0; k < d; ++k) {
            double s = 0.0;
            const double* row = pj + static_cast<std::size_t>(k) * d;
            for (int m = 0; m < d; ++m)
                s += row[m] * e[m];
            act.hidden[k] += s;
        }
    }
    for (int k = 0; k < d; ++k)
        act.hidden[k] = std::tanh(act.hidden[k]);
    act.logits.assign(v, 0.0);
    for (int t = 0; t < v; ++t) {
        const double* u = p.w.data() + p.out_off(t);
        double s = 0.0;
        for (int k = 0; k < d; ++k)
            s += u[k] * act.hidden[k];
        act.logits[t] = s;
    }
}

}  // namespace detail

inline std::vector<double> logits(const PolicyParams& params, const Context& ctx) {
    detail::Activation act;
    detail::forward(params, ctx, act);
    return act.logits;
}

inline std::vector<double> log_softmax(const std::vector<double>& z) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : z)
        mx = std::max(mx, x);
    double sum = 0.0;
    for (double x : z)
        sum += std::exp(x - mx);
    const double lse = mx + std::log(sum);
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        out[i] = z[i] - lse;
    return out;
}

// log pi(.|ctx) over the full vocabulary at temperature 1.
inline std::vector<double> next_token_logprobs(const PolicyParams& params, const Context& ctx) {
    return log_softmax(logits(params, ctx));
}

// Per-token logprobs of the generated tokens of a trajectory, conditioning on
// prompt + all earlier response tokens (generated and injected alike).
// Injected tokens receive no entry.
inline std::vector<double> logprob_of(const PolicyParams& params, const Context& prompt, const Trajectory& traj) {
    if (traj.origin.size() != traj.tokens.size())
        throw std::invalid_argument("trajectory origin flags do not match recorded tokens");
    Context ctx = prompt;
    std::vector<double> out;
    out.reserve(traj.tokens.size());
    for (std::size_t i = 0; i < traj.tokens.size(); ++i) {
        const TokenId tok = traj.tokens[i];
        if (!params.vocab.valid(tok))
            throw std::invalid_argument("trajectory token out of vocabulary range");
        if (traj.origin[i] == Origin::Generated)
            out.push_back(next_token_logprobs(params, ctx)[tok]);
        ctx.push_back(tok);
    }
    return out;
}

struct SampleResult {
    TokenId token = 0;
    double logprob = 0.0;
};

// Draws the next token. Banned ids are removed by logit masking (set to -inf
// before normalization); a forced token bypasses sampling but its logprob is
// recorded under the unmasked distribution so importance ratios stay
// well-defined. With banned ids and no forcing, the recorded logprob is under
// the masked, renormalized distribution. Greedy takes the argmax of the
// (masked) logits. Recorded logprobs are always at temperature 1.
inline SampleResult sample_next(const PolicyParams& params, const Context& ctx, const std::vector<TokenId>& banned,
                                std::optional<TokenId> forced, double temperature, RngStream& rng,
                                bool greedy = false) {
    if (!greedy && temperature <= 0.0)
        throw std::invalid_argument("temperature must be > 0");
    const int v = params.vocab.size();
    std::vector<bool> is_banned(v, false);
    int banned_count = 0;
    for (TokenId b : banned) {
        if (!params.vocab.valid(b))
            throw std::invalid_argument("banned token out of range");
        if (!is_banned[b]) {
            is_banned[b] = true;
            ++banned_count;
        }
    }
    if (banned_count == v)
        throw std::invalid_argument("banned set covers the entire vocabulary");
    if (forced && is_banned[*forced])
        throw std::invalid_argument("forced token is in the banned set");

    const std::vector<double> z = logits(params, ctx);
    if (forced) {
        return SampleResult{*forced, log_softmax(z)[*forced]};
    }

    std::vector<double> masked = z;
    for (int t = 0; t < v; ++t)
        if (is_banned[t])
            masked[t] = -std::numeric_limits<double>::infinity();

    TokenId pick;
    if (greedy) {
        pick = 0;
        double best = -std::numeric_limits<double>::infinity();
        for (int t = 0; t < v; ++t)
            if (masked[t] > best) {
                best = masked[t];
                pick = t;
            }
    } else {
        double mx = -std::numeric_limits<double>::infinity();
        for (double x : masked)
            mx = std::max(mx, x);
        std::vector<double> cdf(v, 0.0);
        double acc = 0.0;
        for (int t = 0; t < v; ++t) {
            if (!is_banned[t])
                acc += std::exp((masked[t] - mx) / temperature);
            cdf[t] = acc;
        }
        const double u = rng.uniform() * acc;
        pick = v - 1;
        for (int t = 0; t < v; ++t)
            if (u < cdf[t]) {
                pick = t;
                break;
            }
        while (is_banned[pick])  // guard against landing on a zero-width bin
            --pick;
    }

    const std::vector<double>& score_from = (banned_count > 0) ? masked : z;
    return SampleResult{pick, log_softmax(score_from)[pick]};
}

// Per-token KL estimate k(r) = r - 1 - log r with r = pi_ref(tok|ctx) /
// pi_theta(tok|ctx), evaluated at the realized token. Nonnegative for all r.
inline double kl_token(const PolicyParams& params, const PolicyParams& ref, const Context& ctx, TokenId token) {
    if (ref.vocab.size() != params.vocab.size())
        throw std::invalid_argument("kl_token requires matching vocabularies");
    const double lp_theta = next_token_logprobs(params, ctx)[token];
    const double lp_ref = next_token_logprobs(ref, ctx)[token];
    const double log_r = lp_ref - lp_theta;
    return std::exp(log_r) - 1.0 - log_r;
}

// Accumulates grad of sum_t coeff[t] * log pi(tok_t | .) over the generated
// tokens of (tokens, origin), into grad (same layout as params.w). coeffs is
// aligned with generated tokens; scale multiplies every coefficient.
inline void accumulate_weighted_logprob_grad(const PolicyParams& p, const Context& prompt,
                                             const std::vector<TokenId>& tokens, const std::vector<Origin>& origin,
                                             const std::vector<double>& coeffs, double scale,
                                             std::vector<double>& grad) {
    if (grad.size() != p.w.size())
        throw std::invalid_argument("gradient layout does not match params");
    if (origin.size() != tokens.size())
        throw std::invalid_argument("origin flags do not match tokens");
    const int d = p.embed_dim;
    const int v = p.vocab.size();
    Context ctx = prompt;
    detail::Activation act;
    std::vector<double> dz(v), g_h(d);
    std::size_t gen_idx = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const TokenId tok = tokens[i];
        if (!p.vocab.valid(tok))
            throw std::invalid_argument("token out of vocabulary range");
        if (origin[i] == Origin::Generated) {
            if (gen_idx >= coeffs.size())
                throw std::invalid_argument("coefficient list shorter than generated-token count");
            const double c = coeffs[gen_idx++] * scale;
            if (c != 0.0) {
                detail::forward(p, ctx, act);
                const std::vector<double> lp = log_softmax(act.logits);
                for (int t = 0; t < v; ++t)
                    dz[t] = c * (((t == tok) ? 1.0 : 0.0) - std::exp(lp[t]));
                // U and hidden gradient
                for (int k = 0; k < d; ++k)
                    g_h[k] = 0.0;
                for (int t = 0; t < v; ++t) {
                    const double* u = p.w.data() + p.out_off(t);
                    double* gu = grad.data() + p.out_off(t);
                    const double dzt = dz[t];
                    for (int k = 0; k < d; ++k) {
                        gu[k] += dzt * act.hidden[k];
                        g_h[k] += u[k] * dzt;
                    }
                }
                for (int k = 0; k < d; ++k)
                    g_h[k] *= 1.0 - act.hidden[k] * act.hidden[k];
                double* gb = grad.data() + p.bias_off();
                for (int k = 0; k < d; ++k)
                    gb[k] += g_h[k];
                for (int j = 0; j < p.window; ++j) {
                    const TokenId wt = act.win[j];
                    const double* e = p.w.data() + p.embed_off(wt);
                    const double* pj = p.w.data() + p.proj_off(j);
                    double* gp = grad.data() + p.proj_off(j);
                    double* ge = grad.data() + p.embed_off(wt);
                    for (int k = 0; k < d; ++k) {
                        const double ghk = g_h[k];
                        const double* row = pj + static_cast<std::size_t>(k) * d;
                        double* grow = gp + static_cast<std::size_t>(k) * d;
                        for (int m = 0; m < d; ++m) {
                            grow[m] += ghk * e[m];
                            ge[m] += row[m] * ghk;
                        }
                    }
                }
            }
        }
        ctx.push_back(tok);
    }
    if (gen_idx != coeffs.size())
        throw std::invalid_argument("coefficient list longer than generated-token count");
}

// Gradient of sum_t log pi(o_t | .) over generated tokens; zero vector for a
// trajectory with no generated tokens.
inline std::vector<double> grad_logprob(const PolicyParams& params, const Context& prompt, const Trajectory& traj) {
    std::vector<double> grad(params.w.size(), 0.0);
    std::vector<double> ones(traj.generated_count(), 1.0);
    accumulate_weighted_logprob_grad(params, prompt, traj.tokens, traj.origin, ones, 1.0, grad);
    return grad;
}

// Mean per-token logprob of demo targets under the current params.
inline double mean_demo_logprob(const PolicyParams& params, const std::vector<Demonstration>& demos) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const Demonstration& demo : demos) {
        Context ctx = demo.prompt;
        for (TokenId tok : demo.target) {
            sum += next_token_logprobs(params, ctx)[tok];
            ctx.push_back(tok);
            ++count;
        }
    }
    return count ? sum / static_cast<double>(count) : 0.0;
}

// Supervised warm start: full-batch gradient ascent on the mean token
// logprob of demonstration targets.
inline PolicyParams warmstart_mle(const PolicyParams& params, const std::vector<Demonstration>& demos, int epochs,
                                  double lr) {
    if (demos.empty())
        throw std::invalid_argument("warmstart_mle requires at least one demonstration");
    PolicyParams p = params;
    std::size_t total_tokens = 0;
    for (const Demonstration& demo : demos)
        total_tokens += demo.target.size();
    if (total_tokens == 0)
        throw std::invalid_argument("warmstart_mle requires non-empty targets");
    std::vector<double> grad(p.w.size());
    const std::vector<Origin> no_origin;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (const Demonstration& demo : demos) {
            std::vector<Origin> gen(demo.target.size(), Origin::Generated);
            std::vector<double> ones(demo.target.size(), 1.0);
            accumulate_weighted_logprob_grad(p, demo.prompt, demo.target, gen, ones,
                                             1.0 / static_cast<double>(total_tokens), grad);
        }
        for (std::size_t i = 0; i < p.w.size(); ++i)
            p.w[i] += lr * grad[i];
        const double loss = -mean_demo_logprob(p, demos);
        if (!std::isfinite(loss))
            throw std::runtime_error("warm-up loss became non-finite at epoch " + std::to_string(epoch));
    }
    return p;
}

// ---- checkpoint serialization ------------------------------------------
//
// Little-endian binary layout: magic "A2PO", u32 version, u32 vocab size,
// u32 window, u32 embed_dim, u64 weight count, then weights as f64 in the
// layout order documented on PolicyParams. Round-trips are bitwise exact.

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const PolicyParams& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open checkpoint for writing: " + path);
    const char magic[4] = {'A', '2', 'P', 'O'};
    out.write(magic, 4);
    auto put_u32 = [&](std::uint32_t x) { out.write(reinterpret_cast<const char*>(&x), 4); };
    put_u32(kCheckpointVersion);
    put_u32(static_cast<std::uint32_t>(params.vocab.size()));
    put_u32(static_cast<std::uint32_t>(params.window));
    put_u32(static_cast<std::uint32_t>(params.embed_dim));
    const std::uint64_t count = params.w.size();
    out.write(reinterpret_cast<const char*>(&count), 8);
    out.write(reinterpret_cast<const char*>(params.w.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (!out)
        throw std::runtime_error("checkpoint write failed: " + path);
}

inline PolicyParams load_checkpoint(const std::string& path, const Vocabulary& vocab) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "A2PO", 4) != 0)
        throw std::runtime_error("bad checkpoint magic: " + path);
    auto get_u32 = [&]() {
        std::uint32_t x = 0;
        in.read(reinterpret_cast<char*>(&x), 4);
        return x;
    };
    const std::uint32_t version = get_u32();
    if (version != kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint version");
    const std::uint32_t vocab_size = get_u32();
    const std::uint32_t window = get_u32();
    const std::uint32_t embed_dim = get_u32();
    if (static_cast<int>(vocab_size) != vocab.size())
        throw std::runtime_error("checkpoint vocabulary size mismatch");
    std::uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&count), 8);
    PolicyParams p(vocab, static_cast<int>(window), static_cast<int>(embed_dim));
    if (count != p.w.size())
        throw std::runtime_error("checkpoint weight count mismatch");
    in.read(reinterpret_cast<char*>(p.w.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (!in)
        throw std::runtime_error("truncated checkpoint: " + path);
    return p;
}

}  // namespace a2po
