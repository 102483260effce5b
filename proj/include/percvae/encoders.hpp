#pragma once

#include <span>
#include <vector>

#include "percvae/model.hpp"

namespace percvae {

struct EncodedContext {
    std::vector<ad::Var> sentence_states;  // one [2H] vector per utterance
    ad::Var h_context;                     // [H]
    ad::Var u0;                            // [d], memory query
};

/// Stacked bidirectional GRU; returns [forward final; backward final] of the top layer.
ad::Var encode_sentence(const BoundParams& p, std::span<const TokenId> tokens);

/// Sentence encoder per utterance, then a single-layer forward GRU over the
/// sentence vectors. u0 is the learned projection of h_context into memory space.
EncodedContext encode_context(const BoundParams& p, const std::vector<TokenIds>& context);

}  // namespace percvae
