#include "percvae/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "percvae/error.hpp"
#include "percvae/metrics.hpp"

namespace percvae {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

[[noreturn]] void parse_error(std::size_t line, const std::string& what) {
    fail(ErrorKind::parse, "line " + std::to_string(line) + ": " + what);
}

std::vector<RawDialogue> parse_convai2(const std::string& content) {
    std::vector<RawDialogue> out;
    RawDialogue current;
    auto flush = [&] {
        if (!current.turns.empty() || !current.personas.empty()) out.push_back(std::move(current));
        current = RawDialogue{};
    };
    std::istringstream in(content);
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        if (trim(raw).empty()) continue;
        std::string_view rest = raw;
        long number = -1;
        std::size_t digits = 0;
        while (digits < rest.size() && std::isdigit(static_cast<unsigned char>(rest[digits]))) ++digits;
        if (digits > 0 && digits < rest.size() && rest[digits] == ' ') {
            number = std::stol(std::string(rest.substr(0, digits)));
            rest.remove_prefix(digits + 1);
        }
        if (starts_with(rest, "your persona:")) {
            if (!current.turns.empty()) flush();
            auto text = trim(rest.substr(13));
            if (text.empty()) parse_error(lineno, "empty persona text");
            current.personas.push_back(std::move(text));
            continue;
        }
        if (starts_with(rest, "partner's persona:")) continue;
        const auto tab = rest.find('\t');
        if (tab == std::string_view::npos || number < 0)
            parse_error(lineno, "expected a \"your persona:\" line or a numbered \"<n> <user>\\t<bot>\" dialogue line");
        if (number == 1 && !current.turns.empty()) flush();
        auto user = trim(rest.substr(0, tab));
        auto after = rest.substr(tab + 1);
        auto bot = trim(after.substr(0, after.find('\t')));
        if (user.empty() || bot.empty()) parse_error(lineno, "dialogue line with an empty utterance");
        current.turns.push_back({std::move(user), std::move(bot)});
    }
    flush();
    return out;
}

std::vector<RawDialogue> parse_jsonl(const std::string& content) {
    std::vector<RawDialogue> out;
    std::istringstream in(content);
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        if (trim(raw).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(raw);
        } catch (const nlohmann::json::exception& e) {
            parse_error(lineno, std::string("invalid JSON: ") + e.what());
        }
        RawDialogue d;
        try {
            for (const auto& p : j.at("personas")) d.personas.push_back(trim(p.get<std::string>()));
            for (const auto& t : j.at("turns"))
                d.turns.push_back({trim(t.at("user").get<std::string>()), trim(t.at("bot").get<std::string>())});
        } catch (const nlohmann::json::exception& e) {
            parse_error(lineno, std::string("schema violation: ") + e.what());
        }
        for (const auto& t : d.turns)
            if (t.user.empty() || t.bot.empty()) parse_error(lineno, "turn with an empty utterance");
        out.push_back(std::move(d));
    }
    return out;
}

}  // namespace

CorpusFormat parse_corpus_format(const std::string& name) {
    if (name == "convai2-text" || name == "convai2" || name == "txt") return CorpusFormat::convai2_text;
    if (name == "jsonl") return CorpusFormat::jsonl;
    fail(ErrorKind::config, "unknown corpus format '" + name + "' (expected convai2-text or jsonl)");
}

std::vector<RawDialogue> parse_dialogues(const std::string& content, CorpusFormat format) {
    return format == CorpusFormat::jsonl ? parse_jsonl(content) : parse_convai2(content);
}

std::vector<RawDialogue> load_dialogues(const std::string& path, CorpusFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot read corpus " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_dialogues(ss.str(), format);
}

std::vector<RawExample> expand_dialogues(const std::vector<RawDialogue>& dialogues) {
    std::vector<RawExample> out;
    for (std::size_t d = 0; d < dialogues.size(); ++d) {
        const auto& dialogue = dialogues[d];
        std::vector<std::vector<std::string>> personas;
        for (const auto& p : dialogue.personas) personas.push_back(tokenize(p));
        std::vector<std::vector<std::string>> history;
        for (std::size_t t = 0; t < dialogue.turns.size(); ++t) {
            history.push_back(tokenize(dialogue.turns[t].user));
            RawExample ex;
            ex.context = history;
            ex.response = tokenize(dialogue.turns[t].bot);
            ex.personas = personas;
            ex.dialogue = d;
            ex.turn = t;
            out.push_back(std::move(ex));
            history.push_back(tokenize(dialogue.turns[t].bot));
        }
    }
    return out;
}

std::vector<RawExample> load_corpus(const std::string& path, CorpusFormat format) {
    return expand_dialogues(load_dialogues(path, format));
}

std::map<std::string, double> count_tokens(const std::vector<RawDialogue>& dialogues) {
    std::map<std::string, double> counts;
    auto add = [&](const std::string& text) {
        for (const auto& tok : tokenize(text)) counts[tok] += 1.0;
    };
    for (const auto& d : dialogues) {
        for (const auto& p : d.personas) add(p);
        for (const auto& t : d.turns) {
            add(t.user);
            add(t.bot);
        }
    }
    return counts;
}

Vocabulary build_vocab(const std::vector<RawDialogue>& dialogues, std::size_t cap) {
    return Vocabulary::from_counts(count_tokens(dialogues), cap);
}

PersonaLabel label_persona(std::span<const TokenId> response, const std::vector<TokenIds>& personas,
                           std::span<const double> idf, double threshold) {
    if (threshold < 0.0) fail(ErrorKind::config, "labeling threshold must be non-negative");
    PersonaLabel out;
    out.copy_positions.assign(response.size(), 0);
    if (personas.empty()) return out;
    int best = 0;
    double best_score = similarity_s(response, personas[0], idf);
    for (std::size_t j = 1; j < personas.size(); ++j) {
        const double s = similarity_s(response, personas[j], idf);
        if (s > best_score) {
            best_score = s;
            best = static_cast<int>(j);
        }
    }
    if (best_score < threshold) return out;
    out.label = best;
    const auto& persona = personas[static_cast<std::size_t>(best)];
    const std::set<TokenId> words(persona.begin(), persona.end());
    for (std::size_t t = 0; t < response.size(); ++t)
        out.copy_positions[t] = (!is_special(response[t]) && words.count(response[t])) ? 1 : 0;
    return out;
}

std::vector<DialogueExample> index_examples(const std::vector<RawExample>& raw, const Vocabulary& vocab,
                                            double threshold, std::size_t max_personas) {
    std::vector<DialogueExample> out;
    out.reserve(raw.size());
    for (const auto& r : raw) {
        if (r.context.empty() || r.response.empty())
            fail(ErrorKind::contract, "example with empty context or response");
        if (r.personas.size() > max_personas)
            fail(ErrorKind::config, "dialogue " + std::to_string(r.dialogue) + " has " +
                                        std::to_string(r.personas.size()) + " personas, more than max_personas=" +
                                        std::to_string(max_personas));
        DialogueExample ex;
        for (const auto& u : r.context) {
            if (u.empty()) fail(ErrorKind::contract, "empty context utterance");
            ex.context.push_back(vocab.encode(u));
        }
        ex.response = vocab.encode(r.response);
        for (const auto& p : r.personas) {
            if (p.empty()) fail(ErrorKind::contract, "empty persona sentence");
            ex.personas.push_back(vocab.encode(p));
        }
        auto label = label_persona(ex.response, ex.personas, vocab.idf(), threshold);
        ex.persona_label = label.label;
        ex.copy_positions = std::move(label.copy_positions);
        out.push_back(std::move(ex));
    }
    return out;
}

Batch make_batch(const std::vector<DialogueExample>& examples, std::span<const std::size_t> indices) {
    Batch b;
    b.size = indices.size();
    for (auto i : indices) {
        const auto& ex = examples.at(i);
        b.max_utterances = std::max(b.max_utterances, ex.context.size());
        for (const auto& u : ex.context) b.max_utterance_len = std::max(b.max_utterance_len, u.size());
        b.max_response_len = std::max(b.max_response_len, ex.response.size());
        b.max_personas = std::max(b.max_personas, ex.personas.size());
        for (const auto& p : ex.personas) b.max_persona_len = std::max(b.max_persona_len, p.size());
    }
    const std::size_t U = b.max_utterances, T = b.max_utterance_len, R = b.max_response_len, K = b.max_personas,
                      P = b.max_persona_len;
    b.context.assign(b.size * U * T, special::pad);
    b.context_mask.assign(b.size * U * T, 0);
    b.utterance_mask.assign(b.size * U, 0);
    b.response.assign(b.size * R, special::pad);
    b.response_mask.assign(b.size * R, 0);
    b.copy_mask.assign(b.size * R, 0);
    b.personas.assign(b.size * K * P, special::pad);
    b.persona_mask.assign(b.size * K * P, 0);
    b.persona_slot_mask.assign(b.size * K, 0);
    b.persona_labels.assign(b.size, -1);
    for (std::size_t row = 0; row < b.size; ++row) {
        const auto& ex = examples[indices[row]];
        b.source_index.push_back(indices[row]);
        for (std::size_t u = 0; u < ex.context.size(); ++u) {
            b.utterance_mask[row * U + u] = 1;
            for (std::size_t t = 0; t < ex.context[u].size(); ++t) {
                b.context[(row * U + u) * T + t] = ex.context[u][t];
                b.context_mask[(row * U + u) * T + t] = 1;
            }
        }
        for (std::size_t t = 0; t < ex.response.size(); ++t) {
            b.response[row * R + t] = ex.response[t];
            b.response_mask[row * R + t] = 1;
            b.copy_mask[row * R + t] = ex.copy_positions[t];
        }
        for (std::size_t k = 0; k < ex.personas.size(); ++k) {
            b.persona_slot_mask[row * K + k] = 1;
            for (std::size_t t = 0; t < ex.personas[k].size(); ++t) {
                b.personas[(row * K + k) * P + t] = ex.personas[k][t];
                b.persona_mask[(row * K + k) * P + t] = 1;
            }
        }
        b.persona_labels[row] = ex.persona_label.value_or(-1);
    }
    return b;
}

DialogueExample Batch::example(std::size_t row) const {
    const std::size_t U = max_utterances, T = max_utterance_len, R = max_response_len, K = max_personas,
                      P = max_persona_len;
    DialogueExample ex;
    for (std::size_t u = 0; u < U; ++u) {
        if (!utterance_mask[row * U + u]) continue;
        TokenIds utt;
        for (std::size_t t = 0; t < T; ++t)
            if (context_mask[(row * U + u) * T + t]) utt.push_back(context[(row * U + u) * T + t]);
        ex.context.push_back(std::move(utt));
    }
    for (std::size_t t = 0; t < R; ++t)
        if (response_mask[row * R + t]) {
            ex.response.push_back(response[row * R + t]);
            ex.copy_positions.push_back(copy_mask[row * R + t]);
        }
    for (std::size_t k = 0; k < K; ++k) {
        if (!persona_slot_mask[row * K + k]) continue;
        TokenIds p;
        for (std::size_t t = 0; t < P; ++t)
            if (persona_mask[(row * K + k) * P + t]) p.push_back(personas[(row * K + k) * P + t]);
        ex.personas.push_back(std::move(p));
    }
    if (persona_labels[row] >= 0) ex.persona_label = persona_labels[row];
    return ex;
}

std::vector<Batch> make_batches(const std::vector<DialogueExample>& examples, std::size_t batch_size,
                                SeededSampler& sampler) {
    if (batch_size < 1) fail(ErrorKind::config, "batch size must be at least 1");
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[sampler.index_below(i)]);
    std::vector<Batch> out;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(order.size(), start + batch_size);
        out.push_back(make_batch(examples, std::span<const std::size_t>(order.data() + start, end - start)));
    }
    return out;
}

}  // namespace percvae
