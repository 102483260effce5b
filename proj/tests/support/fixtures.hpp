#pragma once

#include <string>
#include <vector>

#include "percvae/corpus.hpp"
#include "percvae/model.hpp"
#include "percvae/trainer.hpp"

#ifndef PERCVAE_TEST_DATA
#define PERCVAE_TEST_DATA "tests/data"
#endif

namespace fixtures {

using namespace percvae;

inline std::string data_path(const std::string& name) { return std::string(PERCVAE_TEST_DATA) + "/" + name; }

/// H=3, d=2, latent=2, V=8 (four words after the specials).
inline ModelConfig micro_config() {
    ModelConfig c;
    c.vocab_size = 8;
    c.embed_dim = 2;
    c.hidden_dim = 3;
    c.encoder_layers = 2;
    c.latent_dim = 2;
    c.hops = 3;
    c.max_personas = 2;
    return c;
}

inline ModelParams micro_params(std::uint64_t seed, double range = 0.5) {
    ModelParams p(micro_config());
    SeededSampler s(seed);
    p.init_uniform(s, range);
    return p;
}

/// The micro parameters with a four-word vocabulary "a b c d" (ids 4..7).
inline Model micro_model(std::uint64_t seed, double range = 0.5) {
    return Model{micro_config(), Vocabulary::from_counts({{"a", 4}, {"b", 3}, {"c", 2}, {"d", 1}}, 4),
                 micro_params(seed, range)};
}

inline DialogueExample micro_example(bool labeled = true) {
    DialogueExample ex;
    ex.context = {{4, 5}, {6}};
    ex.response = {5, 7, 6};
    ex.personas = {{5, 6}, {7}};
    if (labeled) {
        ex.persona_label = 0;
        ex.copy_positions = {1, 0, 1};
    } else {
        ex.copy_positions = {0, 0, 0};
    }
    return ex;
}

/// Worst relative error of total_loss against central differences over every
/// parameter of the micro model, with epsilon frozen by re-seeding each call.
inline double total_loss_grad_error(const DialogueExample& ex, const LossOptions& options, std::uint64_t seed) {
    const auto cfg = micro_config();
    ModelParams layout = micro_params(seed);
    std::vector<Tensor> inputs;
    for (const auto& [name, t] : layout.tensors()) inputs.push_back(t);
    const std::vector<DialogueExample> examples{ex};
    const std::vector<std::size_t> idx{0};
    const Batch batch = make_batch(examples, idx);
    ad::ScalarFn fn = [&](ad::Graph&, std::span<const ad::Var> vars) {
        BoundParams bp = bind_params_from(vars, layout, cfg);
        SeededSampler eps(seed + 1000);
        return total_loss(bp, cfg, batch, eps, options).total;
    };
    return ad::grad_check(fn, inputs, 1e-5);
}

/// Parses the toy corpus and returns the toy training configuration.
inline TrainConfig toy_config() { return load_train_config(data_path("toy_config.json")); }
inline std::vector<RawDialogue> toy_dialogues() { return load_dialogues(data_path("toy_corpus.jsonl"), CorpusFormat::jsonl); }

}  // namespace fixtures
