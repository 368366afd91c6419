#pragma once

#include <vector>

#include "a2po/vocab.hpp"

namespace a2po {

// A supervised warm-up example. Prohibited-tagged targets contain no aux
// tokens by construction.
struct Demonstration {
    enum class Tag { Standard, Prohibited };
    std::vector<TokenId> prompt;
    std::vector<TokenId> target;
    Tag tag = Tag::Standard;
};

}  // namespace a2po
