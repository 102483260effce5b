#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "percvae/autodiff.hpp"
#include "percvae/tensor.hpp"
#include "percvae/vocab.hpp"

namespace percvae {

/// Architecture hyperparameters. Defaults follow the full-size setting; the
/// tests and the toy corpus run much smaller dimensions.
struct ModelConfig {
    std::int64_t vocab_size = 0;
    std::int64_t embed_dim = 300;   // word embeddings and persona memory (d)
    std::int64_t hidden_dim = 500;  // recurrent state size (H)
    std::int64_t encoder_layers = 2;
    std::int64_t latent_dim = 100;
    std::int64_t hops = 3;
    std::int64_t max_personas = 8;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Named parameter table. Memory embedding tables are stored once per hop
/// boundary so that the output table of a hop is the input table of the next.
class ModelParams {
public:
    ModelParams() = default;
    explicit ModelParams(const ModelConfig& config);

    void init_uniform(SeededSampler& sampler, double range);

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const { return tensors_.count(name) != 0; }

    std::map<std::string, Tensor>& tensors() noexcept { return tensors_; }
    const std::map<std::string, Tensor>& tensors() const noexcept { return tensors_; }

    /// A^(hop+1) and C^(hop+1) for zero-based `hop`; input(h + 1) is output(h).
    Tensor& memory_input_table(std::int64_t hop);
    Tensor& memory_output_table(std::int64_t hop);

    void set_requires_grad(bool on);
    void zero_grad();
    std::size_t parameter_count() const;

    /// Recognition-network parameters (the variational set); everything else is generative.
    static bool is_variational(const std::string& name);

private:
    void add(const std::string& name, Shape shape);

    std::map<std::string, Tensor> tensors_;
};

struct GruWeights {
    ad::Var w, u, b;
};

/// Every parameter bound into one graph.
struct BoundParams {
    ad::Var word_embedding;
    std::vector<GruWeights> encoder_fwd;
    std::vector<GruWeights> encoder_bwd;
    GruWeights context;
    ad::Var context_proj;
    std::vector<ad::Var> memory_tables;
    ad::Var persona_select;
    ad::Var recog_w, recog_b;
    ad::Var prior_w, prior_b;
    ad::Var init_w, init_b;
    GruWeights decoder;
    ad::Var out_w, out_b;
    ad::Var sds_w, sds_b;
    ad::Var bow_w, bow_b;

    ad::Var memory_input(std::int64_t hop) const { return memory_tables[static_cast<std::size_t>(hop)]; }
    ad::Var memory_output(std::int64_t hop) const { return memory_tables[static_cast<std::size_t>(hop + 1)]; }
};

BoundParams bind_params(ad::Graph& g, ModelParams& params, const ModelConfig& config);
BoundParams bind_params(ad::Graph& g, const ModelParams& params, const ModelConfig& config);
/// Uses already-bound Vars given in ModelParams name order; lets ad::grad_check
/// perturb a whole parameter table.
BoundParams bind_params_from(std::span<const ad::Var> vars, const ModelParams& layout, const ModelConfig& config);

struct Model {
    ModelConfig config;
    Vocabulary vocab;
    ModelParams params;
};

}  // namespace percvae
