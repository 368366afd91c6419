#pragma once

#include <algorithm>
#include <array>
#include <stdexcept>
#include <vector>

namespace a2po {

using TokenId = int;

// Structural roles every vocabulary must assign to distinct token ids.
enum class Role : int {
    AuxOpen = 0,   // <aux>
    AuxClose,      // </aux>
    HintBegin,     // opens an injected hint block
    HintEnd,       // closes an injected hint block
    AnswerMark,    // the token that precedes the answer slot
    Eos,
    Pad,
};

inline constexpr int kNumRoles = 7;

class Vocabulary {
  public:
    Vocabulary(int size, std::array<TokenId, kNumRoles> role_ids, std::vector<TokenId> answer_alphabet)
        : size_(size), role_ids_(role_ids), answer_alphabet_(std::move(answer_alphabet)) {
        if (size_ < 16)
            throw std::invalid_argument("vocabulary size must be >= 16");
        for (int i = 0; i < kNumRoles; ++i) {
            if (role_ids_[i] < 0 || role_ids_[i] >= size_)
                throw std::invalid_argument("special-role id out of range");
            for (int j = i + 1; j < kNumRoles; ++j)
                if (role_ids_[i] == role_ids_[j])
                    throw std::invalid_argument("special-role ids must be distinct");
        }
        if (answer_alphabet_.empty())
            throw std::invalid_argument("answer alphabet must be non-empty");
        for (TokenId a : answer_alphabet_) {
            if (a < 0 || a >= size_)
                throw std::invalid_argument("answer token out of range");
            for (TokenId r : role_ids_)
                if (a == r)
                    throw std::invalid_argument("answer alphabet must be disjoint from special roles");
        }
    }

    int size() const { return size_; }
    TokenId role(Role r) const { return role_ids_[static_cast<int>(r)]; }
    const std::vector<TokenId>& answer_alphabet() const { return answer_alphabet_; }

    bool is_aux_role(TokenId id) const { return id == role(Role::AuxOpen) || id == role(Role::AuxClose); }

    bool is_answer(TokenId id) const {
        return std::find(answer_alphabet_.begin(), answer_alphabet_.end(), id) != answer_alphabet_.end();
    }

    bool valid(TokenId id) const { return id >= 0 && id < size_; }

    // The fixed 32-token layout used throughout the toy task family:
    //   0..6   special roles (PAD, EOS, <aux>, </aux>, hint markers, answer mark)
    //   7..10  answer alphabet
    //   11..14 key tokens          15 no-op
    //   16..19 aux alphabet        20..23 aux selectors
    //   24     "go" class mark     25..31 fillers
    static Vocabulary standard() {
        std::array<TokenId, kNumRoles> roles{};
        roles[static_cast<int>(Role::Pad)] = 0;
        roles[static_cast<int>(Role::Eos)] = 1;
        roles[static_cast<int>(Role::AuxOpen)] = 2;
        roles[static_cast<int>(Role::AuxClose)] = 3;
        roles[static_cast<int>(Role::HintBegin)] = 4;
        roles[static_cast<int>(Role::HintEnd)] = 5;
        roles[static_cast<int>(Role::AnswerMark)] = 6;
        return Vocabulary(32, roles, {7, 8, 9, 10});
    }

  private:
    int size_;
    std::array<TokenId, kNumRoles> role_ids_;
    std::vector<TokenId> answer_alphabet_;
};

}  // namespace a2po
