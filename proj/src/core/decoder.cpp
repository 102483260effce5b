#include "percvae/decoder.hpp"

#include <algorithm>
#include <cmath>

#include "percvae/encoders.hpp"
#include "percvae/error.hpp"

namespace percvae {

VocabPartition partition_vocab(std::int64_t vocab_size, std::span<const TokenId> persona_word_ids) {
    const auto V = static_cast<std::size_t>(vocab_size);
    VocabPartition part;
    part.persona.assign(V, 0);
    part.other = generatable_mask(vocab_size);
    for (auto id : persona_word_ids) {
        if (is_special(id) || id < 0 || static_cast<std::size_t>(id) >= V) continue;
        part.persona[static_cast<std::size_t>(id)] = 1;
        part.other[static_cast<std::size_t>(id)] = 0;
        part.has_persona = true;
    }
    return part;
}

ad::Mask generatable_mask(std::int64_t vocab_size) {
    ad::Mask m(static_cast<std::size_t>(vocab_size), 1);
    m[special::pad] = 0;
    m[special::unk] = 0;
    m[special::sos] = 0;
    return m;
}

ad::Var init_state(const BoundParams& p, ad::Var x, ad::Var persona_memory, ad::Var z) {
    return ad::affine(p.init_w, ad::concat({x, persona_memory, z}), p.init_b);
}

DecoderStep sds_step(const BoundParams& p, ad::Var prev_state, TokenId prev_token, ad::Var persona_memory,
                     const VocabPartition& partition, bool sds_on) {
    DecoderStep step;
    step.sds = sds_on;
    ad::Var input = ad::embedding(p.word_embedding, prev_token);
    step.state = ad::gru_cell(input, prev_state, p.decoder.w, p.decoder.u, p.decoder.b);
    step.logits = ad::affine(p.out_w, step.state, p.out_b);
    if (!sds_on) {
        step.p_other = ad::masked_softmax(step.logits, generatable_mask(step.logits.size()));
        auto v = step.p_other.value();
        step.final_dist.assign(v.begin(), v.end());
        return step;
    }
    step.p_other = ad::masked_softmax(step.logits, partition.other);
    if (!partition.has_persona) {
        auto v = step.p_other.value();
        step.final_dist.assign(v.begin(), v.end());
        return step;
    }
    step.p_per = ad::masked_softmax(step.logits, partition.persona);
    step.alpha = ad::softmax(ad::affine(p.sds_w, ad::concat({step.state, persona_memory}), p.sds_b));
    auto a = step.alpha.value();
    step.alpha_per = a[0];
    step.alpha_other = a[1];
    auto per = step.p_per.value();
    auto oth = step.p_other.value();
    step.final_dist.resize(per.size());
    for (std::size_t i = 0; i < per.size(); ++i)
        step.final_dist[i] = partition.persona[i] ? a[0] * per[i] : a[1] * oth[i];
    return step;
}

ad::Var step_nll(const DecoderStep& step, TokenId target, const VocabPartition& partition) {
    const auto t = static_cast<std::size_t>(target);
    if (step.sds && partition.has_persona) {
        if (partition.persona[t]) return ad::add(ad::cross_entropy(step.alpha, 0), ad::cross_entropy(step.p_per, target));
        return ad::add(ad::cross_entropy(step.alpha, 1), ad::cross_entropy(step.p_other, target));
    }
    return ad::cross_entropy(step.p_other, target);
}

std::optional<TokenId> fds_check_and_apply(std::span<const TokenId> decoded_prefix, std::span<const TokenId> persona,
                                           FdsState& state, std::size_t remaining) {
    if (!state.enabled || persona.empty()) return std::nullopt;
    if (!state.active) {
        const std::size_t m = std::max<std::size_t>(1, state.prefix_len);
        if (state.used || persona.size() <= m || decoded_prefix.size() < m) return std::nullopt;
        if (!std::equal(persona.begin(), persona.begin() + static_cast<std::ptrdiff_t>(m),
                        decoded_prefix.end() - static_cast<std::ptrdiff_t>(m)))
            return std::nullopt;
        if (persona.size() - m > remaining) return std::nullopt;
        state.active = true;
        state.cursor = m;
        ++state.activations;
    }
    const TokenId next = persona[state.cursor++];
    if (state.cursor >= persona.size()) {
        state.active = false;
        state.used = true;
    }
    return next;
}

namespace {

struct Encoded {
    EncodedContext context;
    MemoryBank memories;
    MemoryReadout readout;
};

Encoded encode_inputs(const BoundParams& bp, const Model& model, const std::vector<TokenIds>& context,
                      const std::vector<TokenIds>& personas) {
    if (static_cast<std::int64_t>(personas.size()) > model.config.max_personas)
        fail(ErrorKind::invalid_request, "more personas than max_personas=" + std::to_string(model.config.max_personas));
    Encoded e;
    e.context = encode_context(bp, context);
    e.memories = build_memories(bp, personas, model.config.hops);
    e.readout = read_memory(e.context.u0, e.memories, model.config.hops);
    return e;
}

TokenId pick_token(const std::vector<double>& dist, double temperature, SeededSampler& sampler) {
    if (temperature <= 0.0) return static_cast<TokenId>(std::max_element(dist.begin(), dist.end()) - dist.begin());
    std::vector<double> w(dist.size());
    double total = 0.0;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        w[i] = dist[i] > 0.0 ? std::pow(dist[i], 1.0 / temperature) : 0.0;
        total += w[i];
    }
    double r = sampler.uniform(0.0, total);
    for (std::size_t i = 0; i < w.size(); ++i) {
        r -= w[i];
        if (r <= 0.0 && w[i] > 0.0) return static_cast<TokenId>(i);
    }
    return special::eos;
}

GeneratedResponse decode(const BoundParams& bp, const Model& model, const Encoded& enc, ad::Var z,
                         const std::vector<TokenIds>& personas, std::optional<int> persona,
                         const GenerateOptions& options, SeededSampler& sampler) {
    GeneratedResponse out;
    auto zv = z.value();
    out.z.assign(zv.begin(), zv.end());
    if (persona && (*persona < 0 || *persona >= static_cast<int>(personas.size()))) persona.reset();
    out.selected_persona = persona;
    const TokenIds words = persona ? persona_words(personas[static_cast<std::size_t>(*persona)]) : TokenIds{};
    const auto partition = partition_vocab(model.config.vocab_size, words);
    ad::Var u3 = enc.readout.persona_memory();
    ad::Var state = init_state(bp, enc.context.h_context, u3, z);
    FdsState fds;
    fds.enabled = options.fds && persona.has_value();
    fds.prefix_len = options.fds_prefix;
    std::span<const TokenId> persona_tokens;
    if (persona) persona_tokens = personas[static_cast<std::size_t>(*persona)];
    TokenId prev = special::sos;
    while (out.tokens.size() < options.max_len) {
        auto step = sds_step(bp, state, prev, u3, partition, options.sds);
        state = step.state;
        const std::size_t remaining = options.max_len - out.tokens.size();
        TokenId next;
        if (auto forced = fds_check_and_apply(out.tokens, persona_tokens, fds, remaining)) {
            next = *forced;
        } else {
            next = pick_token(step.final_dist, options.temperature, sampler);
        }
        if (next == special::eos) {
            out.ended_with_eos = true;
            break;
        }
        out.tokens.push_back(next);
        out.type_trace.push_back(step.alpha_per);
        prev = next;
    }
    out.fds_activations = fds.activations;
    out.fds_used = fds.activations > 0;
    return out;
}

}  // namespace

GenerationResult generate_n(const Model& model, const std::vector<TokenIds>& context,
                            const std::vector<TokenIds>& personas, const GenerateOptions& options) {
    if (options.n < 1) fail(ErrorKind::invalid_request, "n must be >= 1");
    if (model.params.tensors().empty()) fail(ErrorKind::load, "model parameters are not loaded");
    ad::Graph g(false);
    BoundParams bp = bind_params(g, model.params, model.config);
    Encoded enc = encode_inputs(bp, model, context, personas);
    GaussianVars pri = prior(bp, enc.context.h_context, enc.readout.persona_memory());
    GenerationResult result;
    result.seed = options.seed;
    for (const auto& prob : enc.readout.prob) {
        auto v = prob.value();
        result.attention.emplace_back(v.begin(), v.end());
    }
    const SeededSampler root(options.seed);
    for (int i = 0; i < options.n; ++i) {
        SeededSampler stream = root.split(static_cast<std::uint64_t>(i));
        ad::Var z = options.latent == LatentMode::prior_mean
                        ? pri.mu
                        : reparameterize(pri, stream, LatentSource::prior).z;
        std::optional<int> persona;
        std::vector<double> alpha;
        if (options.forced_persona) {
            if (*options.forced_persona >= 0) persona = *options.forced_persona;
        } else {
            auto sel = select_persona(bp, enc.readout.persona_memory(), z, enc.memories, personas);
            if (!sel.is_none()) persona = sel.selected;
            auto a = sel.alpha.value();
            alpha.assign(a.begin(), a.end());
        }
        auto response = decode(bp, model, enc, z, personas, persona, options, stream);
        response.persona_alpha = std::move(alpha);
        result.responses.push_back(std::move(response));
    }
    return result;
}

GeneratedResponse decode_from_latent(const Model& model, const std::vector<TokenIds>& context,
                                     const std::vector<TokenIds>& personas, std::span<const double> z,
                                     std::optional<int> persona, const GenerateOptions& options) {
    ad::Graph g(false);
    BoundParams bp = bind_params(g, model.params, model.config);
    Encoded enc = encode_inputs(bp, model, context, personas);
    if (static_cast<std::int64_t>(z.size()) != model.config.latent_dim)
        fail(ErrorKind::shape, "decode_from_latent: z has wrong dimension");
    ad::Var zv = g.constant(std::vector<double>(z.begin(), z.end()));
    SeededSampler sampler(options.seed);
    return decode(bp, model, enc, zv, personas, persona, options, sampler);
}

std::vector<double> posterior_mean(const Model& model, const std::vector<TokenIds>& context,
                                   const std::vector<TokenIds>& personas, std::span<const TokenId> response) {
    ad::Graph g(false);
    BoundParams bp = bind_params(g, model.params, model.config);
    Encoded enc = encode_inputs(bp, model, context, personas);
    ad::Var y = encode_sentence(bp, response);
    auto q = recognition(bp, enc.context.h_context, y, enc.readout.persona_memory());
    auto mu = q.mu.value();
    return {mu.begin(), mu.end()};
}

}  // namespace percvae
