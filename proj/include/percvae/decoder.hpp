#pragma once

#include <optional>
#include <span>
#include <vector>

#include "percvae/latent.hpp"
#include "percvae/model.hpp"
#include "percvae/persona_memory.hpp"

namespace percvae {

/// Split of the generatable vocabulary into selected-persona words and the
/// rest. PAD, UNK and SOS belong to neither side; EOS is always "other".
struct VocabPartition {
    ad::Mask persona;
    ad::Mask other;
    bool has_persona = false;
};

VocabPartition partition_vocab(std::int64_t vocab_size, std::span<const TokenId> persona_word_ids);
/// Every id a decoder may emit: non-special words plus EOS.
ad::Mask generatable_mask(std::int64_t vocab_size);

/// s_0 = W_init [x; p; z] + b_init.
ad::Var init_state(const BoundParams& p, ad::Var x, ad::Var persona_memory, ad::Var z);

struct DecoderStep {
    ad::Var state;    // s_t
    ad::Var logits;   // w_dec s_t + b_dec
    ad::Var p_per;    // invalid when the persona side is empty or SDS is off
    ad::Var p_other;  // full generatable softmax when SDS is off
    ad::Var alpha;    // [alpha_per, alpha_other]; invalid when not computed
    double alpha_per = 0.0;
    double alpha_other = 1.0;
    std::vector<double> final_dist;
    bool sds = true;
};

/// Advances the decoder by one input token and forms the output distribution.
/// With SDS the output is alpha_per * P_per on persona ids and alpha_other *
/// P_other elsewhere; without SDS it is a plain softmax over generatable ids.
DecoderStep sds_step(const BoundParams& p, ad::Var prev_state, TokenId prev_token, ad::Var persona_memory,
                     const VocabPartition& partition, bool sds_on);

/// -log final_dist[target], built from the partition pieces so it stays differentiable.
ad::Var step_nll(const DecoderStep& step, TokenId target, const VocabPartition& partition);

struct FdsState {
    bool enabled = false;
    std::size_t prefix_len = 1;
    bool active = false;
    bool used = false;
    std::size_t cursor = 0;
    std::size_t activations = 0;
};

/// Returns the forced next token, if any. Triggers when the decoded prefix ends
/// with the first `prefix_len` persona tokens and the rest of the persona fits
/// in `remaining` steps; afterwards the remaining persona tokens are emitted in
/// order. Fires at most once per decode.
std::optional<TokenId> fds_check_and_apply(std::span<const TokenId> decoded_prefix, std::span<const TokenId> persona,
                                           FdsState& state, std::size_t remaining);

enum class LatentMode { prior_sample, prior_mean };

struct GenerateOptions {
    int n = 1;
    std::uint64_t seed = 0;
    std::size_t max_len = 20;
    bool sds = true;
    bool fds = true;
    std::size_t fds_prefix = 1;
    double temperature = 0.0;  // 0 = greedy
    LatentMode latent = LatentMode::prior_sample;
    /// Overrides persona selection (-1 = None); used for diagnostics.
    std::optional<int> forced_persona;
};

struct GeneratedResponse {
    TokenIds tokens;  // without EOS
    bool ended_with_eos = false;
    std::optional<int> selected_persona;
    std::vector<double> persona_alpha;  // k + 1
    std::vector<double> z;
    std::vector<double> type_trace;  // alpha_per per emitted token
    bool fds_used = false;
    std::size_t fds_activations = 0;
};

struct GenerationResult {
    std::vector<GeneratedResponse> responses;
    std::vector<std::vector<double>> attention;  // hops x k
    std::uint64_t seed = 0;
};

GenerationResult generate_n(const Model& model, const std::vector<TokenIds>& context,
                            const std::vector<TokenIds>& personas, const GenerateOptions& options);

/// Greedy decode from a given z and persona choice (-1 or nullopt = None).
GeneratedResponse decode_from_latent(const Model& model, const std::vector<TokenIds>& context,
                                     const std::vector<TokenIds>& personas, std::span<const double> z,
                                     std::optional<int> persona, const GenerateOptions& options);

/// Mean of the recognition network for a known response.
std::vector<double> posterior_mean(const Model& model, const std::vector<TokenIds>& context,
                                   const std::vector<TokenIds>& personas, std::span<const TokenId> response);

}  // namespace percvae
