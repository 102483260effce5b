#include "percvae/persona_memory.hpp"

#include <algorithm>
#include <set>

#include "percvae/error.hpp"

namespace percvae {

MemoryBank build_memories(const BoundParams& p, const std::vector<TokenIds>& personas, std::int64_t hops) {
    MemoryBank bank;
    bank.personas = personas.size();
    if (personas.empty()) return bank;
    auto embed_all = [&](ad::Var table) {
        std::vector<ad::Var> rows;
        for (const auto& persona : personas) {
            if (persona.empty()) fail(ErrorKind::contract, "build_memories: empty persona sentence");
            rows.push_back(ad::sum_rows(ad::gather(table, persona)));
        }
        return ad::stack(rows);
    };
    // With adjacent tying the output bank of hop h is the input bank of hop h+1,
    // so each table is embedded once.
    std::vector<ad::Var> banks;
    for (std::int64_t t = 0; t <= hops; ++t) banks.push_back(embed_all(p.memory_tables[static_cast<std::size_t>(t)]));
    for (std::int64_t h = 0; h < hops; ++h) {
        bank.input.push_back(banks[static_cast<std::size_t>(h)]);
        bank.output.push_back(banks[static_cast<std::size_t>(h + 1)]);
    }
    return bank;
}

MemoryReadout read_memory(ad::Var u0, const MemoryBank& memories, std::int64_t hops) {
    if (hops < 1) fail(ErrorKind::contract, "read_memory: hops must be >= 1");
    MemoryReadout r;
    r.u.push_back(u0);
    if (memories.personas == 0) return r;
    if (static_cast<std::int64_t>(memories.input.size()) < hops)
        fail(ErrorKind::contract, "read_memory: memory bank has fewer hops than requested");
    ad::Var u = u0;
    for (std::int64_t h = 0; h < hops; ++h) {
        const auto hi = static_cast<std::size_t>(h);
        ad::Var prob = ad::softmax(ad::matmul(memories.input[hi], u));
        ad::Var o = ad::matmul(ad::transpose(memories.output[hi]), prob);
        u = ad::add(u, o);
        r.prob.push_back(prob);
        r.o.push_back(o);
        r.u.push_back(u);
    }
    return r;
}

TokenIds persona_words(const TokenIds& persona) {
    std::set<TokenId> ids;
    for (auto id : persona)
        if (!is_special(id)) ids.insert(id);
    return {ids.begin(), ids.end()};
}

PersonaSelection select_persona(const BoundParams& p, ad::Var persona_memory, ad::Var z, const MemoryBank& memories,
                                const std::vector<TokenIds>& personas) {
    ad::Graph& g = *persona_memory.graph;
    PersonaSelection sel;
    const auto k = personas.size();
    sel.none_index = static_cast<int>(k);
    if (k == 0) {
        sel.alpha = g.constant({1.0});
        sel.selected = 0;
        return sel;
    }
    const auto d = persona_memory.size();
    ad::Var q = ad::matmul(p.persona_select, ad::concat({persona_memory, z}));
    ad::Var persona_logits = ad::matmul(memories.output.back(), ad::slice(q, 0, d));
    ad::Var logits = ad::concat({persona_logits, ad::slice(q, d, 1)});
    sel.alpha = ad::softmax(logits);
    auto a = sel.alpha.value();
    sel.selected = static_cast<int>(std::max_element(a.begin(), a.end()) - a.begin());
    if (!sel.is_none()) sel.persona_word_ids = persona_words(personas[static_cast<std::size_t>(sel.selected)]);
    return sel;
}

}  // namespace percvae
