#include "percvae/trainer.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "percvae/decoder.hpp"
#include "percvae/encoders.hpp"
#include "percvae/error.hpp"
#include "percvae/latent.hpp"
#include "percvae/persona_memory.hpp"

namespace percvae {

// ---------------------------------------------------------------- configuration

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"model", c.model},
         {"vocab_cap", c.vocab_cap},
         {"batch_size", c.batch_size},
         {"learning_rate", c.learning_rate},
         {"anneal_steps", c.anneal_steps},
         {"kl_annealing", c.kl_annealing},
         {"use_bow", c.use_bow},
         {"sds", c.sds},
         {"max_epochs", c.max_epochs},
         {"max_steps", c.max_steps},
         {"seed", c.seed},
         {"init_range", c.init_range},
         {"weights", {{"kl", c.weights.kl}, {"persona", c.weights.persona}, {"type", c.weights.type}, {"bow", c.weights.bow}}},
         {"label_threshold", c.label_threshold},
         {"clip_norm", c.clip_norm},
         {"data_format", c.data_format},
         {"tf_source", c.tf_source},
         {"checkpoint_every", c.checkpoint_every},
         {"validation_fraction", c.validation_fraction},
         {"patience", c.patience}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    const TrainConfig d;
    if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
    c.vocab_cap = j.value("vocab_cap", d.vocab_cap);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.anneal_steps = j.value("anneal_steps", d.anneal_steps);
    c.kl_annealing = j.value("kl_annealing", d.kl_annealing);
    c.use_bow = j.value("use_bow", d.use_bow);
    c.sds = j.value("sds", d.sds);
    c.max_epochs = j.value("max_epochs", d.max_epochs);
    c.max_steps = j.value("max_steps", d.max_steps);
    c.seed = j.value("seed", d.seed);
    c.init_range = j.value("init_range", d.init_range);
    if (j.contains("weights")) {
        const auto& w = j.at("weights");
        c.weights.kl = w.value("kl", d.weights.kl);
        c.weights.persona = w.value("persona", d.weights.persona);
        c.weights.type = w.value("type", d.weights.type);
        c.weights.bow = w.value("bow", d.weights.bow);
    }
    c.label_threshold = j.value("label_threshold", d.label_threshold);
    c.clip_norm = j.value("clip_norm", d.clip_norm);
    c.data_format = j.value("data_format", d.data_format);
    c.tf_source = j.value("tf_source", d.tf_source);
    c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
    c.validation_fraction = j.value("validation_fraction", d.validation_fraction);
    c.patience = j.value("patience", d.patience);
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot read config " + path);
    try {
        nlohmann::json j;
        in >> j;
        auto c = j.get<TrainConfig>();
        if (c.batch_size < 1 || c.learning_rate <= 0.0 || c.anneal_steps <= 0 || c.init_range <= 0.0)
            fail(ErrorKind::config, "config " + path + ": batch_size, learning_rate, anneal_steps and init_range must be positive");
        return c;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::config, "config " + path + ": " + e.what());
    }
}

double anneal_weight(std::int64_t step, std::int64_t anneal_steps) {
    if (anneal_steps <= 0) fail(ErrorKind::config, "anneal_steps must be positive");
    if (step < 0) fail(ErrorKind::contract, "anneal_weight: negative step");
    if (step >= anneal_steps) return 1.0;
    return static_cast<double>(step) / static_cast<double>(anneal_steps);
}

// ---------------------------------------------------------------- objective

namespace {

struct RowLoss {
    ad::Var recon, kl, persona, type, bow;
    std::size_t tokens = 0;
};

RowLoss row_loss(const BoundParams& p, const ModelConfig& config, const DialogueExample& ex,
                 std::vector<double> epsilon, const LossOptions& options) {
    ad::Graph& g = *p.word_embedding.graph;
    RowLoss r;
    auto enc = encode_context(p, ex.context);
    auto memories = build_memories(p, ex.personas, config.hops);
    auto readout = read_memory(enc.u0, memories, config.hops);
    ad::Var u3 = readout.persona_memory();
    ad::Var y = encode_sentence(p, ex.response);
    auto q = recognition(p, enc.h_context, y, u3);
    auto pri = prior(p, enc.h_context, u3);
    ad::Var z = reparameterize(q, std::move(epsilon), LatentSource::recognition).z;
    r.kl = kl_divergence(q, pri);

    auto sel = select_persona(p, u3, z, memories, ex.personas);
    if (ex.personas.empty()) {
        r.persona = g.scalar(0.0);
    } else {
        r.persona = ad::cross_entropy(sel.alpha, ex.persona_label.value_or(sel.none_index));
    }

    // Teacher-forced persona: the labeled persona defines the vocabulary split.
    TokenIds words;
    if (ex.persona_label) words = persona_words(ex.personas.at(static_cast<std::size_t>(*ex.persona_label)));
    const auto partition = partition_vocab(config.vocab_size, words);
    ad::Var state = init_state(p, enc.h_context, u3, z);
    std::vector<ad::Var> recon_terms, type_terms;
    TokenId prev = special::sos;
    for (std::size_t t = 0; t <= ex.response.size(); ++t) {
        const TokenId target = t < ex.response.size() ? ex.response[t] : special::eos;
        auto step = sds_step(p, state, prev, u3, partition, options.sds);
        if (target != special::unk) {
            recon_terms.push_back(step_nll(step, target, partition));
            ++r.tokens;
        }
        if (options.sds && partition.has_persona) {
            const bool copy = t < ex.response.size() && ex.copy_positions[t];
            type_terms.push_back(ad::cross_entropy(step.alpha, copy ? 0 : 1));
        }
        state = step.state;
        prev = target;
    }
    r.recon = recon_terms.empty() ? g.scalar(0.0) : ad::sum(ad::concat(recon_terms));
    r.type = type_terms.empty() ? g.scalar(0.0) : ad::sum(ad::concat(type_terms));
    r.bow = options.use_bow ? bow_loss(p, enc.h_context, u3, z, ex.response) : g.scalar(0.0);
    return r;
}

}  // namespace

LossGraph total_loss(const BoundParams& p, const ModelConfig& config, const Batch& batch, SeededSampler& sampler,
                     const LossOptions& options) {
    if (batch.size == 0) fail(ErrorKind::contract, "total_loss: empty batch");
    ad::Graph& g = *p.word_embedding.graph;
    std::vector<ad::Var> rows;
    LossGraph out;
    auto& c = out.components;
    c.anneal_weight = options.kl_weight;
    const double inv = 1.0 / static_cast<double>(batch.size);
    for (std::size_t b = 0; b < batch.size; ++b) {
        auto ex = batch.example(b);
        auto eps = sampler.standard_normal(static_cast<std::size_t>(config.latent_dim));
        auto r = row_loss(p, config, ex, std::move(eps), options);
        ad::Var row = ad::add(r.recon, ad::scale(r.kl, options.kl_weight * options.weights.kl));
        row = ad::add(row, ad::scale(r.persona, options.weights.persona));
        row = ad::add(row, ad::scale(r.type, options.weights.type));
        row = ad::add(row, ad::scale(r.bow, options.weights.bow));
        rows.push_back(row);
        c.recon += r.recon.item() * inv;
        c.kl += r.kl.item() * inv;
        c.persona_ce += r.persona.item() * inv;
        c.type_ce += r.type.item() * inv;
        c.bow += r.bow.item() * inv;
        c.recon_sum += r.recon.item();
        c.recon_tokens += r.tokens;
    }
    out.total = ad::scale(ad::sum(ad::concat(rows)), inv);
    c.total = out.total.item();
    (void)g;
    return out;
}

// ---------------------------------------------------------------- optimization

double clip_gradients(ModelParams& params, double max_norm) {
    double sq = 0.0;
    for (auto& [name, t] : params.tensors())
        for (double v : t.grad) sq += v * v;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (auto& [name, t] : params.tensors())
            for (double& v : t.grad) v *= s;
    }
    return norm;
}

void AdamOptimizer::step(ModelParams& params) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& [name, t] : params.tensors()) {
        if (t.grad.size() != t.data.size()) continue;
        auto& [m, v] = moments_[name];
        if (m.empty()) {
            m.assign(t.data.size(), 0.0);
            v.assign(t.data.size(), 0.0);
        }
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            const double gval = t.grad[i];
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * gval;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * gval * gval;
            t.data[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
    }
}

// ---------------------------------------------------------------- training loop

namespace {

std::map<std::string, double> load_frequencies(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot read term-frequency file " + path);
    std::map<std::string, double> tf;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string word;
        double f = 0.0;
        if (!(ls >> word >> f)) fail(ErrorKind::parse, path + ": line " + std::to_string(lineno) + ": expected '<token> <frequency>'");
        tf[word] = f;
    }
    return tf;
}

const char* first_non_finite(const LossComponents& c) {
    const std::pair<const char*, double> parts[] = {{"recon", c.recon},     {"kl", c.kl},   {"persona_ce", c.persona_ce},
                                                    {"type_ce", c.type_ce}, {"bow", c.bow}, {"total", c.total}};
    for (const auto& [name, v] : parts)
        if (!std::isfinite(v)) return name;
    return nullptr;
}

double evaluate_loss(const Model& model, const std::vector<DialogueExample>& examples, const TrainConfig& config,
                     const LossOptions& options) {
    SeededSampler sampler(config.seed ^ 0x5eed);
    double total = 0.0;
    for (std::size_t start = 0; start < examples.size(); start += config.batch_size) {
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < std::min(examples.size(), start + config.batch_size); ++i) idx.push_back(i);
        auto batch = make_batch(examples, idx);
        ad::Graph g(false);
        auto bp = bind_params(g, model.params, model.config);
        total += total_loss(bp, model.config, batch, sampler, options).components.total * static_cast<double>(idx.size());
    }
    return total / static_cast<double>(examples.size());
}

}  // namespace

void write_loss_csv(const std::string& path, const std::vector<LossRecord>& log) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::io, "cannot write training log " + path);
    out << "step,total,recon,kl,persona_ce,type_ce,bow,anneal_weight,recon_per_token\n";
    out.precision(17);
    for (const auto& r : log)
        out << r.step << ',' << r.loss.total << ',' << r.loss.recon << ',' << r.loss.kl << ',' << r.loss.persona_ce << ','
            << r.loss.type_ce << ',' << r.loss.bow << ',' << r.loss.anneal_weight << ',' << r.loss.recon_per_token()
            << '\n';
}

TrainResult train(const TrainConfig& config, const std::vector<RawDialogue>& dialogues, const std::string& out_dir,
                  const ProgressFn& progress) {
    if (dialogues.empty()) fail(ErrorKind::config, "training corpus is empty");
    if (config.batch_size < 1) fail(ErrorKind::config, "batch_size must be at least 1");
    std::vector<RawDialogue> train_dialogues = dialogues, valid_dialogues;
    if (config.validation_fraction > 0.0) {
        const auto held = static_cast<std::size_t>(std::floor(config.validation_fraction * static_cast<double>(dialogues.size())));
        if (held > 0 && held < dialogues.size()) {
            valid_dialogues.assign(dialogues.end() - static_cast<std::ptrdiff_t>(held), dialogues.end());
            train_dialogues.resize(dialogues.size() - held);
        }
    }

    TrainResult result;
    result.config = config;
    Model& model = result.model;
    model.vocab = build_vocab(train_dialogues, config.vocab_cap);
    if (config.tf_source != "corpus") model.vocab.set_idf_from_frequencies(load_frequencies(config.tf_source));
    model.config = config.model;
    model.config.vocab_size = static_cast<std::int64_t>(model.vocab.size());
    result.config.model = model.config;

    result.examples = index_examples(expand_dialogues(train_dialogues), model.vocab, config.label_threshold,
                                     static_cast<std::size_t>(model.config.max_personas));
    if (result.examples.empty()) fail(ErrorKind::config, "training corpus has no bot turns");
    std::vector<DialogueExample> valid;
    if (!valid_dialogues.empty())
        valid = index_examples(expand_dialogues(valid_dialogues), model.vocab, config.label_threshold,
                               static_cast<std::size_t>(model.config.max_personas));

    const SeededSampler root(config.seed);
    SeededSampler init_sampler = root.split(0);
    SeededSampler batch_sampler = root.split(1);
    SeededSampler latent_sampler = root.split(2);
    model.params = ModelParams(model.config);
    model.params.init_uniform(init_sampler, config.init_range);
    model.params.set_requires_grad(true);

    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
    AdamOptimizer adam(config.learning_rate);
    LossOptions options;
    options.weights = config.weights;
    options.use_bow = config.use_bow;
    options.sds = config.sds;

    std::size_t step = 0;
    double best_valid = std::numeric_limits<double>::infinity();
    std::size_t bad_epochs = 0;
    bool done = false;
    for (std::size_t epoch = 0; epoch < config.max_epochs && !done; ++epoch) {
        auto batches = make_batches(result.examples, config.batch_size, batch_sampler);
        for (const auto& batch : batches) {
            if (config.max_steps && step >= config.max_steps) {
                done = true;
                break;
            }
            options.kl_weight = config.kl_annealing ? anneal_weight(static_cast<std::int64_t>(step), config.anneal_steps) : 1.0;
            model.params.zero_grad();
            ad::Graph g(true);
            auto bp = bind_params(g, model.params, model.config);
            auto loss = total_loss(bp, model.config, batch, latent_sampler, options);
            if (const char* bad = first_non_finite(loss.components))
                fail(ErrorKind::divergence, "non-finite loss at step " + std::to_string(step) + ": component '" + bad + "'");
            g.backward(loss.total);
            clip_gradients(model.params, config.clip_norm);
            adam.step(model.params);
            LossRecord rec{step, loss.components};
            result.log.push_back(rec);
            if (progress) progress(rec);
            ++step;
            if (!out_dir.empty() && config.checkpoint_every && step % config.checkpoint_every == 0) {
                const auto path = (std::filesystem::path(out_dir) / ("ckpt_step" + std::to_string(step) + ".bin")).string();
                save_checkpoint(model, path, {{"train", result.config}, {"step", step}});
                result.checkpoints.push_back(path);
            }
        }
        result.epochs = epoch + 1;
        if (!valid.empty() && !done) {
            LossOptions vopt = options;
            vopt.kl_weight = 1.0;
            const double v = evaluate_loss(model, valid, config, vopt);
            if (v < best_valid) {
                best_valid = v;
                bad_epochs = 0;
            } else if (++bad_epochs >= config.patience) {
                done = true;
            }
        }
    }
    model.params.set_requires_grad(false);
    for (auto& [name, t] : model.params.tensors()) t.grad.clear();

    if (!out_dir.empty()) {
        const auto dir = std::filesystem::path(out_dir);
        const auto final_path = (dir / "model.bin").string();
        save_checkpoint(model, final_path, {{"train", result.config}, {"step", step}});
        result.checkpoints.push_back(final_path);
        model.vocab.save((dir / "vocab.json").string());
        write_loss_csv((dir / "train_log.csv").string(), result.log);
        std::ofstream cfg(dir / "config.json");
        cfg << nlohmann::json(result.config).dump(2) << '\n';
    }
    return result;
}

// ---------------------------------------------------------------- checkpoints

namespace {

constexpr char kMagic[8] = {'P', 'C', 'V', 'A', 'E', 'C', 'K', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                       static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b, 4);
}

class Reader {
public:
    Reader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

    void need(std::size_t n, const char* what) const {
        if (pos_ + n > data_.size()) fail(ErrorKind::load, "checkpoint " + path_ + " is truncated (reading " + what + ")");
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::string bytes(std::size_t n, const char* what) {
        need(n, what);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
    bool at_end() const { return pos_ == data_.size(); }

private:
    std::string data_;
    std::string path_;
    std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const Model& model, const std::string& path, const nlohmann::json& extra) {
    nlohmann::json header{{"format_version", kCheckpointVersion},
                          {"config", model.config},
                          {"vocab_hash", model.vocab.hash_hex()},
                          {"vocab", model.vocab.to_json()},
                          {"tensor_count", model.params.tensors().size()}};
    if (!extra.is_null()) header["extra"] = extra;
    const std::string text = header.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write checkpoint " + path);
    out.write(kMagic, sizeof kMagic);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : model.params.tensors()) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
        for (auto d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
        for (double v : t.data) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    if (!out) fail(ErrorKind::io, "failed writing checkpoint " + path);
}

Model load_checkpoint(const std::string& path, const Vocabulary* expected_vocab) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::load, "cannot open checkpoint " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    Reader r(ss.str(), path);
    if (r.bytes(sizeof kMagic, "magic") != std::string(kMagic, sizeof kMagic))
        fail(ErrorKind::load, path + " is not a checkpoint file");
    const auto version = r.u32("version");
    if (version != kCheckpointVersion)
        fail(ErrorKind::load, "checkpoint " + path + " has format version " + std::to_string(version) + ", expected " +
                                  std::to_string(kCheckpointVersion));
    const auto header_len = r.u32("header length");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(r.bytes(header_len, "header"));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::load, "checkpoint " + path + " header: " + e.what());
    }
    Model model;
    try {
        model.config = header.at("config").get<ModelConfig>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::load, "checkpoint " + path + " config: " + e.what());
    }
    model.vocab = Vocabulary::from_json(header.at("vocab"));
    const std::string stored_hash = header.value("vocab_hash", "");
    if (stored_hash != model.vocab.hash_hex())
        fail(ErrorKind::load, "checkpoint " + path + " vocabulary does not match its recorded hash");
    if (expected_vocab && expected_vocab->hash_hex() != stored_hash)
        fail(ErrorKind::load, "checkpoint " + path + " was trained with a different vocabulary (hash " + stored_hash +
                                  ", expected " + expected_vocab->hash_hex() + ")");
    if (model.config.vocab_size != static_cast<std::int64_t>(model.vocab.size()))
        fail(ErrorKind::load, "checkpoint " + path + " config vocab_size disagrees with stored vocabulary");
    model.params = ModelParams(model.config);
    const std::size_t expected = model.params.tensors().size();
    if (header.value("tensor_count", std::size_t{0}) != expected)
        fail(ErrorKind::load, "checkpoint " + path + " tensor count does not match the model layout");
    for (std::size_t k = 0; k < expected; ++k) {
        const std::string name = r.bytes(r.u32("tensor name length"), "tensor name");
        if (!model.params.contains(name)) fail(ErrorKind::load, "checkpoint " + path + " has unexpected tensor " + name);
        Tensor& t = model.params.at(name);
        const auto rank = r.u32("tensor rank");
        Shape shape;
        for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(r.u32("tensor shape"));
        if (shape != t.shape)
            fail(ErrorKind::load, "checkpoint " + path + " tensor " + name + " has shape " + shape_to_string(shape) +
                                      ", expected " + shape_to_string(t.shape));
        for (auto& v : t.data) v = static_cast<double>(r.f32(name.c_str()));
    }
    if (!r.at_end()) fail(ErrorKind::load, "checkpoint " + path + " has trailing bytes");
    return model;
}

}  // namespace percvae
