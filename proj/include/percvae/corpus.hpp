#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "percvae/tensor.hpp"
#include "percvae/vocab.hpp"

namespace percvae {

struct RawTurn {
    std::string user;
    std::string bot;
};

/// One dialogue as read from disk; personas belong to the bot side.
struct RawDialogue {
    std::vector<std::string> personas;
    std::vector<RawTurn> turns;
};

/// A (context-so-far, bot response) pair in tokenized text form.
struct RawExample {
    std::vector<std::vector<std::string>> context;
    std::vector<std::string> response;
    std::vector<std::vector<std::string>> personas;
    std::size_t dialogue = 0;
    std::size_t turn = 0;
};

enum class CorpusFormat { convai2_text, jsonl };

CorpusFormat parse_corpus_format(const std::string& name);

std::vector<RawDialogue> load_dialogues(const std::string& path, CorpusFormat format);
std::vector<RawDialogue> parse_dialogues(const std::string& content, CorpusFormat format);

/// One example per bot turn; the context accumulates every earlier utterance
/// plus the current user utterance (1, 3, 5, ... utterances).
std::vector<RawExample> expand_dialogues(const std::vector<RawDialogue>& dialogues);
std::vector<RawExample> load_corpus(const std::string& path, CorpusFormat format);

/// Token counts over every utterance and persona sentence of each dialogue.
std::map<std::string, double> count_tokens(const std::vector<RawDialogue>& dialogues);
Vocabulary build_vocab(const std::vector<RawDialogue>& dialogues, std::size_t cap);

struct DialogueExample {
    std::vector<TokenIds> context;
    TokenIds response;
    std::vector<TokenIds> personas;
    std::optional<int> persona_label;
    std::vector<std::uint8_t> copy_positions;
};

struct PersonaLabel {
    std::optional<int> label;
    std::vector<std::uint8_t> copy_positions;
};

/// Labels the response with the persona of highest shared-word similarity when
/// that similarity reaches `threshold`; ties go to the lowest index.
PersonaLabel label_persona(std::span<const TokenId> response, const std::vector<TokenIds>& personas,
                           std::span<const double> idf, double threshold);

std::vector<DialogueExample> index_examples(const std::vector<RawExample>& raw, const Vocabulary& vocab,
                                            double threshold, std::size_t max_personas);

/// Padded minibatch. Three-level arrays are flattened row-major:
/// context[b][u][t], personas[b][k][t]. Unused persona label slots hold -1.
struct Batch {
    std::size_t size = 0;
    std::size_t max_utterances = 0;
    std::size_t max_utterance_len = 0;
    std::size_t max_response_len = 0;
    std::size_t max_personas = 0;
    std::size_t max_persona_len = 0;

    std::vector<TokenId> context;
    std::vector<std::uint8_t> context_mask;
    std::vector<std::uint8_t> utterance_mask;   // [b][u]
    std::vector<TokenId> response;
    std::vector<std::uint8_t> response_mask;
    std::vector<TokenId> personas;
    std::vector<std::uint8_t> persona_mask;
    std::vector<std::uint8_t> persona_slot_mask;  // [b][k]
    std::vector<int> persona_labels;
    std::vector<std::uint8_t> copy_mask;        // [b][t], aligned with response
    std::vector<std::size_t> source_index;

    /// Reconstructs row `b` by stripping padding according to the masks.
    DialogueExample example(std::size_t b) const;
};

Batch make_batch(const std::vector<DialogueExample>& examples, std::span<const std::size_t> indices);

/// Shuffles with `sampler` and cuts consecutive batches; the final short batch is kept.
std::vector<Batch> make_batches(const std::vector<DialogueExample>& examples, std::size_t batch_size,
                                SeededSampler& sampler);

}  // namespace percvae
