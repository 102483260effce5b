#pragma once

#include <vector>

#include "percvae/model.hpp"

namespace percvae {

/// Per-hop memory matrices: input[h] holds m_i rows (from A^(h+1)), output[h]
/// holds c_i rows (from C^(h+1)). Both are empty when there are no personas.
struct MemoryBank {
    std::vector<ad::Var> input;
    std::vector<ad::Var> output;
    std::size_t personas = 0;
};

struct MemoryReadout {
    std::vector<ad::Var> prob;  // per hop, [k]
    std::vector<ad::Var> o;     // per hop, [d]
    std::vector<ad::Var> u;     // u^0 .. u^hops
    ad::Var persona_memory() const { return u.back(); }
};

/// Bag-of-words sum of each persona's token embeddings, per hop.
MemoryBank build_memories(const BoundParams& p, const std::vector<TokenIds>& personas, std::int64_t hops);

/// Stacked attention hops: prob = softmax(u . m_i), o = sum prob_i c_i, u' = u + o.
/// With no personas the trace is empty and the persona memory is u0.
MemoryReadout read_memory(ad::Var u0, const MemoryBank& memories, std::int64_t hops);

struct PersonaSelection {
    ad::Var alpha;      // [k + 1]; the last entry is the None class
    int selected = 0;   // argmax, lowest index on ties
    int none_index = 0;
    TokenIds persona_word_ids;  // sorted unique non-special ids, empty for None

    bool is_none() const noexcept { return selected == none_index; }
};

/// W_p maps [u; z] to a d-dim query plus a None logit; persona i scores
/// query . c_i with c_i taken from the last hop's output table.
PersonaSelection select_persona(const BoundParams& p, ad::Var persona_memory, ad::Var z, const MemoryBank& memories,
                                const std::vector<TokenIds>& personas);

/// Non-special, de-duplicated word ids of a persona sentence.
TokenIds persona_words(const TokenIds& persona);

}  // namespace percvae
