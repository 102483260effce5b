#include "percvae/model.hpp"

#include "percvae/error.hpp"

namespace percvae {

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"vocab_size", c.vocab_size},   {"embed_dim", c.embed_dim},     {"hidden_dim", c.hidden_dim},
         {"encoder_layers", c.encoder_layers}, {"latent_dim", c.latent_dim}, {"hops", c.hops},
         {"max_personas", c.max_personas}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    const ModelConfig defaults;
    c.vocab_size = j.value("vocab_size", defaults.vocab_size);
    c.embed_dim = j.value("embed_dim", defaults.embed_dim);
    c.hidden_dim = j.value("hidden_dim", defaults.hidden_dim);
    c.encoder_layers = j.value("encoder_layers", defaults.encoder_layers);
    c.latent_dim = j.value("latent_dim", defaults.latent_dim);
    c.hops = j.value("hops", defaults.hops);
    c.max_personas = j.value("max_personas", defaults.max_personas);
}

namespace {

void check_config(const ModelConfig& c) {
    if (c.vocab_size <= special::count) fail(ErrorKind::config, "vocab_size must exceed the 4 special tokens");
    if (c.embed_dim <= 0 || c.hidden_dim <= 0 || c.latent_dim <= 0 || c.encoder_layers <= 0 || c.hops <= 0 ||
        c.max_personas < 0)
        fail(ErrorKind::config, "model dimensions must be positive");
}

std::string gru_name(const std::string& prefix, const char* part) { return prefix + "." + part; }

}  // namespace

ModelParams::ModelParams(const ModelConfig& c) {
    check_config(c);
    const auto V = c.vocab_size, d = c.embed_dim, H = c.hidden_dim, L = c.latent_dim;
    add("embedding.word", {V, d});
    for (std::int64_t l = 0; l < c.encoder_layers; ++l) {
        const auto in = l == 0 ? d : 2 * H;
        for (const char* dir : {"fwd", "bwd"}) {
            const std::string p = "encoder." + std::string(dir) + ".l" + std::to_string(l);
            add(gru_name(p, "w"), {3 * H, in});
            add(gru_name(p, "u"), {3 * H, H});
            add(gru_name(p, "b"), {3 * H});
        }
    }
    add("context.w", {3 * H, 2 * H});
    add("context.u", {3 * H, H});
    add("context.b", {3 * H});
    add("context.proj", {d, H});
    for (std::int64_t t = 0; t <= c.hops; ++t) add("memory.table." + std::to_string(t), {V, d});
    add("persona.select", {d + 1, d + L});
    add("recog.w", {2 * L, H + 2 * H + d});
    add("recog.b", {2 * L});
    add("prior.w", {2 * L, H + d});
    add("prior.b", {2 * L});
    add("decoder.init.w", {H, H + d + L});
    add("decoder.init.b", {H});
    add("decoder.w", {3 * H, d});
    add("decoder.u", {3 * H, H});
    add("decoder.b", {3 * H});
    add("decoder.out.w", {V, H});
    add("decoder.out.b", {V});
    add("decoder.sds.w", {2, H + d});
    add("decoder.sds.b", {2});
    add("bow.w", {V, H + d + L});
    add("bow.b", {V});
}

void ModelParams::add(const std::string& name, Shape shape) {
    if (!tensors_.emplace(name, Tensor(std::move(shape))).second)
        fail(ErrorKind::contract, "duplicate parameter name " + name);
}

void ModelParams::init_uniform(SeededSampler& sampler, double range) {
    // std::map iteration order is by name, so initialization is seed-deterministic.
    for (auto& [name, t] : tensors_)
        for (auto& v : t.data) v = sampler.uniform(-range, range);
}

Tensor& ModelParams::at(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) fail(ErrorKind::contract, "unknown parameter " + name);
    return it->second;
}

const Tensor& ModelParams::at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) fail(ErrorKind::contract, "unknown parameter " + name);
    return it->second;
}

Tensor& ModelParams::memory_input_table(std::int64_t hop) { return at("memory.table." + std::to_string(hop)); }
Tensor& ModelParams::memory_output_table(std::int64_t hop) { return at("memory.table." + std::to_string(hop + 1)); }

void ModelParams::set_requires_grad(bool on) {
    for (auto& [name, t] : tensors_) t.requires_grad = on;
}

void ModelParams::zero_grad() {
    for (auto& [name, t] : tensors_) t.zero_grad();
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : tensors_) n += t.data.size();
    return n;
}

bool ModelParams::is_variational(const std::string& name) { return name.rfind("recog.", 0) == 0; }

namespace {

template <class Lookup>
BoundParams bind_impl(Lookup bind, const ModelConfig& c) {
    BoundParams b;
    auto gru = [&](const std::string& prefix) {
        return GruWeights{bind(prefix + ".w"), bind(prefix + ".u"), bind(prefix + ".b")};
    };
    b.word_embedding = bind("embedding.word");
    for (std::int64_t l = 0; l < c.encoder_layers; ++l) {
        b.encoder_fwd.push_back(gru("encoder.fwd.l" + std::to_string(l)));
        b.encoder_bwd.push_back(gru("encoder.bwd.l" + std::to_string(l)));
    }
    b.context = gru("context");
    b.context_proj = bind("context.proj");
    for (std::int64_t t = 0; t <= c.hops; ++t) b.memory_tables.push_back(bind("memory.table." + std::to_string(t)));
    b.persona_select = bind("persona.select");
    b.recog_w = bind("recog.w");
    b.recog_b = bind("recog.b");
    b.prior_w = bind("prior.w");
    b.prior_b = bind("prior.b");
    b.init_w = bind("decoder.init.w");
    b.init_b = bind("decoder.init.b");
    b.decoder = gru("decoder");
    b.out_w = bind("decoder.out.w");
    b.out_b = bind("decoder.out.b");
    b.sds_w = bind("decoder.sds.w");
    b.sds_b = bind("decoder.sds.b");
    b.bow_w = bind("bow.w");
    b.bow_b = bind("bow.b");
    return b;
}

}  // namespace

BoundParams bind_params(ad::Graph& g, ModelParams& params, const ModelConfig& config) {
    return bind_impl([&](const std::string& name) { return g.param(params.at(name)); }, config);
}

BoundParams bind_params(ad::Graph& g, const ModelParams& params, const ModelConfig& config) {
    return bind_impl([&](const std::string& name) { return g.param(params.at(name)); }, config);
}

BoundParams bind_params_from(std::span<const ad::Var> vars, const ModelParams& layout, const ModelConfig& config) {
    if (vars.size() != layout.tensors().size())
        fail(ErrorKind::contract, "bind_params_from: expected one Var per parameter tensor");
    std::map<std::string, ad::Var> by_name;
    std::size_t i = 0;
    for (const auto& [name, t] : layout.tensors()) by_name.emplace(name, vars[i++]);
    return bind_impl([&](const std::string& name) { return by_name.at(name); }, config);
}

}  // namespace percvae
