#include "percvae/encoders.hpp"

#include "percvae/error.hpp"

namespace percvae {

namespace {

ad::Var zeros(ad::Graph& g, std::int64_t n) { return g.constant(std::vector<double>(static_cast<std::size_t>(n), 0.0)); }

std::int64_t hidden_of(const GruWeights& w) { return w.u.shape()[1]; }

std::vector<ad::Var> run_gru(const GruWeights& w, const std::vector<ad::Var>& inputs, bool reverse) {
    ad::Graph& g = *w.w.graph;
    std::vector<ad::Var> states(inputs.size());
    ad::Var h = zeros(g, hidden_of(w));
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const std::size_t t = reverse ? inputs.size() - 1 - i : i;
        h = ad::gru_cell(inputs[t], h, w.w, w.u, w.b);
        states[t] = h;
    }
    return states;
}

}  // namespace

ad::Var encode_sentence(const BoundParams& p, std::span<const TokenId> tokens) {
    if (tokens.empty()) fail(ErrorKind::contract, "encode_sentence: empty sentence");
    std::vector<ad::Var> layer_input;
    layer_input.reserve(tokens.size());
    for (auto id : tokens) layer_input.push_back(ad::embedding(p.word_embedding, id));
    ad::Var fwd_final, bwd_final;
    for (std::size_t l = 0; l < p.encoder_fwd.size(); ++l) {
        auto fwd = run_gru(p.encoder_fwd[l], layer_input, false);
        auto bwd = run_gru(p.encoder_bwd[l], layer_input, true);
        fwd_final = fwd.back();
        bwd_final = bwd.front();
        if (l + 1 < p.encoder_fwd.size()) {
            for (std::size_t t = 0; t < layer_input.size(); ++t) layer_input[t] = ad::concat({fwd[t], bwd[t]});
        }
    }
    return ad::concat({fwd_final, bwd_final});
}

EncodedContext encode_context(const BoundParams& p, const std::vector<TokenIds>& context) {
    if (context.empty()) fail(ErrorKind::contract, "encode_context: empty context");
    EncodedContext out;
    for (const auto& utt : context) out.sentence_states.push_back(encode_sentence(p, utt));
    auto states = run_gru(p.context, out.sentence_states, false);
    out.h_context = states.back();
    out.u0 = ad::matmul(p.context_proj, out.h_context);
    return out;
}

}  // namespace percvae
