#pragma once

#include <cstdint>

namespace a2po {

// SplitMix64 finalizer. Used both as the per-draw output function and for
// deriving stream keys from structured inputs.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Counter-based random stream. Output i depends only on (key, i), so draws
// are independent of scheduling and streams with distinct keys are
// independent of each other.
class RngStream {
  public:
    explicit RngStream(std::uint64_t key) : key_(key) {}

    std::uint64_t next_u64() { return mix64(key_ ^ (0xd1342543de82ef95ull * ++counter_)); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

    std::uint64_t key() const { return key_; }

  private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

// Derives a stream key from a sequence of fields (global seed, task id,
// protocol, rollout index, ...) by iterated mixing.
inline std::uint64_t stream_key(std::initializer_list<std::uint64_t> fields) {
    std::uint64_t k = 0x6a09e667f3bcc909ull;
    for (std::uint64_t f : fields)
        k = mix64(k ^ mix64(f));
    return k;
}

}  // namespace a2po
