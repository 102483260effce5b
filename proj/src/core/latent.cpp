#include "percvae/latent.hpp"

#include <cmath>

#include "percvae/error.hpp"

namespace percvae {

namespace {

GaussianVars split(ad::Var stats) {
    const auto n = stats.size() / 2;
    return {ad::slice(stats, 0, n), ad::slice(stats, n, n)};
}

}  // namespace

GaussianParams GaussianVars::values() const {
    auto m = mu.value();
    auto lv = log_var.value();
    return {{m.begin(), m.end()}, {lv.begin(), lv.end()}};
}

GaussianVars recognition(const BoundParams& p, ad::Var x, ad::Var y, ad::Var persona_memory) {
    return split(ad::affine(p.recog_w, ad::concat({x, y, persona_memory}), p.recog_b));
}

GaussianVars prior(const BoundParams& p, ad::Var x, ad::Var persona_memory) {
    return split(ad::affine(p.prior_w, ad::concat({x, persona_memory}), p.prior_b));
}

LatentSample reparameterize(const GaussianVars& g, std::vector<double> epsilon, LatentSource source) {
    if (static_cast<std::int64_t>(epsilon.size()) != g.mu.size())
        fail(ErrorKind::shape, "reparameterize: epsilon length does not match latent size");
    ad::Graph& graph = *g.mu.graph;
    ad::Var eps = graph.constant(epsilon);
    ad::Var sigma = ad::exp(ad::scale(g.log_var, 0.5));
    LatentSample s;
    s.z = ad::add(g.mu, ad::mul(sigma, eps));
    s.epsilon = std::move(epsilon);
    s.source = source;
    return s;
}

LatentSample reparameterize(const GaussianVars& g, SeededSampler& sampler, LatentSource source) {
    return reparameterize(g, sampler.standard_normal(static_cast<std::size_t>(g.mu.size())), source);
}

ad::Var kl_divergence(const GaussianVars& q, const GaussianVars& p) {
    if (q.mu.size() != p.mu.size()) fail(ErrorKind::shape, "kl_divergence: dimension mismatch");
    // 0.5 * sum(lv_p - lv_q + (exp(lv_q) + (mu_q - mu_p)^2) * exp(-lv_p) - 1)
    ad::Var diff = ad::sub(q.mu, p.mu);
    ad::Var spread = ad::add(ad::exp(q.log_var), ad::mul(diff, diff));
    ad::Var ratio = ad::mul(spread, ad::exp(ad::scale(p.log_var, -1.0)));
    ad::Var terms = ad::add_scalar(ad::add(ad::sub(p.log_var, q.log_var), ratio), -1.0);
    return ad::scale(ad::sum(terms), 0.5);
}

double kl_divergence(const GaussianParams& q, const GaussianParams& p) {
    if (q.mu.size() != p.mu.size() || q.log_var.size() != q.mu.size() || p.log_var.size() != p.mu.size())
        fail(ErrorKind::shape, "kl_divergence: dimension mismatch");
    double kl = 0.0;
    for (std::size_t i = 0; i < q.mu.size(); ++i) {
        const double diff = q.mu[i] - p.mu[i];
        kl += 0.5 * (p.log_var[i] - q.log_var[i] + (std::exp(q.log_var[i]) + diff * diff) * std::exp(-p.log_var[i]) -
                     1.0);
    }
    return kl;
}

ad::Var bow_loss(const BoundParams& p, ad::Var x, ad::Var persona_memory, ad::Var z,
                 std::span<const TokenId> response) {
    if (response.empty()) fail(ErrorKind::contract, "bow_loss: empty response");
    ad::Graph& g = *x.graph;
    ad::Var probs = ad::softmax(ad::affine(p.bow_w, ad::concat({x, persona_memory, z}), p.bow_b));
    std::vector<ad::Var> terms;
    for (auto id : response)
        if (!is_special(id)) terms.push_back(ad::cross_entropy(probs, id));
    if (terms.empty()) return g.scalar(0.0);
    return ad::sum(ad::concat(terms));
}

}  // namespace percvae
