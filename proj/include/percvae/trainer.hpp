#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "percvae/corpus.hpp"
#include "percvae/model.hpp"

namespace percvae {

struct LossWeights {
    double kl = 1.0;
    double persona = 1.0;
    double type = 1.0;
    double bow = 1.0;
};

struct TrainConfig {
    ModelConfig model;
    std::size_t vocab_cap = 20000;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    std::int64_t anneal_steps = 10000;
    bool kl_annealing = true;
    bool use_bow = true;
    bool sds = true;
    std::size_t max_epochs = 50;
    std::size_t max_steps = 0;  // 0 = bounded by epochs only
    std::uint64_t seed = 1;
    double init_range = 0.08;
    LossWeights weights;
    double label_threshold = 0.2;
    double clip_norm = 5.0;
    std::string data_format = "jsonl";
    std::string tf_source = "corpus";  // or a path to "<token> <frequency>" lines
    std::size_t checkpoint_every = 0;  // steps; 0 = final checkpoint only
    double validation_fraction = 0.0;  // held-out dialogues for early stopping
    std::size_t patience = 3;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
TrainConfig load_train_config(const std::string& path);

/// Linear KL ramp min(step / anneal_steps, 1).
double anneal_weight(std::int64_t step, std::int64_t anneal_steps = 10000);

struct LossOptions {
    double kl_weight = 1.0;  // already annealed
    LossWeights weights;
    bool use_bow = true;
    bool sds = true;
};

struct LossComponents {
    double total = 0.0;
    double recon = 0.0;
    double kl = 0.0;
    double persona_ce = 0.0;
    double type_ce = 0.0;
    double bow = 0.0;
    double anneal_weight = 0.0;
    double recon_sum = 0.0;  // summed over rows, for per-token reporting
    std::size_t recon_tokens = 0;

    double recon_per_token() const { return recon_tokens ? recon_sum / static_cast<double>(recon_tokens) : 0.0; }
};

struct LossGraph {
    ad::Var total;
    LossComponents components;
};

/// Mean over the batch rows of
///   recon NLL + w * KL(q || p) + CE(persona selection) + CE(type) + BoW,
/// with z drawn from the recognition network via `sampler` (one epsilon per row).
LossGraph total_loss(const BoundParams& p, const ModelConfig& config, const Batch& batch, SeededSampler& sampler,
                     const LossOptions& options);

class AdamOptimizer {
public:
    explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ModelParams& params);

private:
    double lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

/// Rescales all gradients so their global L2 norm is at most `max_norm`; returns the pre-clip norm.
double clip_gradients(ModelParams& params, double max_norm);

struct LossRecord {
    std::size_t step = 0;
    LossComponents loss;
};

struct TrainResult {
    Model model;
    TrainConfig config;
    std::vector<LossRecord> log;
    std::vector<std::string> checkpoints;
    std::vector<DialogueExample> examples;
    std::size_t epochs = 0;
};

using ProgressFn = std::function<void(const LossRecord&)>;

/// Builds vocabulary and labels from `dialogues`, initializes parameters
/// uniformly in [-init_range, init_range] and runs Adam. When `out_dir` is
/// non-empty, periodic checkpoints, the final model and the CSV log are written there.
TrainResult train(const TrainConfig& config, const std::vector<RawDialogue>& dialogues,
                  const std::string& out_dir = {}, const ProgressFn& progress = {});

void write_loss_csv(const std::string& path, const std::vector<LossRecord>& log);

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Model& model, const std::string& path, const nlohmann::json& extra = {});
/// Rejects files whose vocabulary hash differs from `expected_vocab` when given.
Model load_checkpoint(const std::string& path, const Vocabulary* expected_vocab = nullptr);

}  // namespace percvae
