#pragma once

#include <span>
#include <vector>

#include "percvae/model.hpp"

namespace percvae {

/// Diagonal Gaussian as plain values; variance = exp(log_var).
struct GaussianParams {
    std::vector<double> mu;
    std::vector<double> log_var;
};

/// Diagonal Gaussian inside a graph.
struct GaussianVars {
    ad::Var mu;
    ad::Var log_var;

    GaussianParams values() const;
};

enum class LatentSource { recognition, prior };

struct LatentSample {
    ad::Var z;
    std::vector<double> epsilon;
    LatentSource source = LatentSource::prior;
};

/// q(z | x, y, p): one affine map of [x; y; p] split into (mu, log_var).
GaussianVars recognition(const BoundParams& p, ad::Var x, ad::Var y, ad::Var persona_memory);
/// p(z | x, p): affine map of [x; p].
GaussianVars prior(const BoundParams& p, ad::Var x, ad::Var persona_memory);

/// z = mu + exp(log_var / 2) * epsilon with epsilon drawn from `sampler`.
LatentSample reparameterize(const GaussianVars& g, SeededSampler& sampler, LatentSource source);
LatentSample reparameterize(const GaussianVars& g, std::vector<double> epsilon, LatentSource source);

/// KL(q || p) for diagonal Gaussians, closed form.
ad::Var kl_divergence(const GaussianVars& q, const GaussianVars& p);
double kl_divergence(const GaussianParams& q, const GaussianParams& p);

/// Bag-of-words auxiliary loss: -sum_t log softmax(W_bow [x; p; z] + b)[y_t]
/// over the non-special response tokens.
ad::Var bow_loss(const BoundParams& p, ad::Var x, ad::Var persona_memory, ad::Var z,
                 std::span<const TokenId> response);

}  // namespace percvae
