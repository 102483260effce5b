#include "percvae/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "percvae/error.hpp"

namespace percvae {

const std::vector<std::string>& special_tokens() {
    static const std::vector<std::string> tokens{"<pad>", "<unk>", "<sos>", "<eos>"};
    return tokens;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) out.push_back(std::move(current));
        current.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (std::isspace(c)) {
            flush();
        } else if (c == '\'' && !current.empty() && i + 1 < text.size() &&
                   std::isalnum(static_cast<unsigned char>(text[i + 1]))) {
            current.push_back('\'');
        } else if (c < 128 && std::ispunct(c)) {
            flush();
            out.emplace_back(1, static_cast<char>(c));
        } else {
            current.push_back(static_cast<char>(c < 128 ? std::tolower(c) : c));
        }
    }
    flush();
    return out;
}

double idf_value(double term_frequency) {
    if (!(term_frequency >= 0.0)) fail(ErrorKind::domain, "term frequency must be non-negative");
    return 1.0 / (1.0 + std::log(1.0 + term_frequency));
}

std::map<std::string, double> compute_idf(const std::map<std::string, double>& term_frequencies) {
    std::map<std::string, double> out;
    for (const auto& [token, tf] : term_frequencies) out.emplace(token, idf_value(tf));
    return out;
}

Vocabulary::Vocabulary() : id_to_word_(special_tokens()), idf_(special_tokens().size(), 0.0) { rebuild_index(); }

void Vocabulary::rebuild_index() {
    word_to_id_.clear();
    for (std::size_t i = 0; i < id_to_word_.size(); ++i) word_to_id_.emplace(id_to_word_[i], static_cast<TokenId>(i));
}

Vocabulary Vocabulary::from_counts(const std::map<std::string, double>& counts, std::size_t cap) {
    if (cap < 1) fail(ErrorKind::config, "vocabulary cap must be at least 1");
    std::vector<std::pair<std::string, double>> ranked;
    const auto& specials = special_tokens();
    for (const auto& [word, count] : counts) {
        if (std::find(specials.begin(), specials.end(), word) != specials.end()) continue;
        ranked.emplace_back(word, count);
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (ranked.size() > cap) ranked.resize(cap);
    Vocabulary v;
    for (const auto& [word, count] : ranked) {
        v.id_to_word_.push_back(word);
        v.idf_.push_back(idf_value(count));
    }
    v.rebuild_index();
    return v;
}

void Vocabulary::set_idf_from_frequencies(const std::map<std::string, double>& tf) {
    for (std::size_t i = special::count; i < id_to_word_.size(); ++i) {
        auto it = tf.find(id_to_word_[i]);
        idf_[i] = idf_value(it == tf.end() ? 0.0 : it->second);
    }
}

TokenId Vocabulary::id(std::string_view word) const {
    auto it = word_to_id_.find(std::string(word));
    if (it == word_to_id_.end() || is_special(it->second)) return special::unk;
    return it->second;
}

const std::string& Vocabulary::word(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_word_.size())
        fail(ErrorKind::contract, "token id " + std::to_string(id) + " outside vocabulary");
    return id_to_word_[static_cast<std::size_t>(id)];
}

double Vocabulary::idf(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= idf_.size()) return 0.0;
    return idf_[static_cast<std::size_t>(id)];
}

TokenIds Vocabulary::encode(std::span<const std::string> tokens) const {
    TokenIds out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(id(t));
    return out;
}

TokenIds Vocabulary::encode(std::string_view text) const {
    const auto toks = tokenize(text);
    return encode(toks);
}

std::vector<std::string> Vocabulary::words(std::span<const TokenId> ids) const {
    std::vector<std::string> out;
    for (auto id : ids)
        if (!is_special(id)) out.push_back(word(id));
    return out;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
    std::string out;
    for (const auto& w : words(ids)) {
        if (!out.empty()) out.push_back(' ');
        out += w;
    }
    return out;
}

nlohmann::json Vocabulary::to_json() const {
    std::vector<std::string> tokens(id_to_word_.begin() + special::count, id_to_word_.end());
    std::vector<double> idf(idf_.begin() + special::count, idf_.end());
    return {{"tokens", tokens}, {"idf", idf}, {"specials", special_tokens()}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
    try {
        if (j.at("specials").get<std::vector<std::string>>() != special_tokens())
            fail(ErrorKind::load, "vocabulary specials do not match <pad>,<unk>,<sos>,<eos>");
        auto tokens = j.at("tokens").get<std::vector<std::string>>();
        auto idf = j.at("idf").get<std::vector<double>>();
        if (tokens.size() != idf.size()) fail(ErrorKind::load, "vocabulary tokens/idf length mismatch");
        Vocabulary v;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            v.id_to_word_.push_back(tokens[i]);
            v.idf_.push_back(idf[i]);
        }
        v.rebuild_index();
        if (v.word_to_id_.size() != v.id_to_word_.size()) fail(ErrorKind::load, "vocabulary contains duplicate tokens");
        return v;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::load, std::string("malformed vocabulary: ") + e.what());
    }
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::io, "cannot write vocabulary file " + path);
    out << to_json().dump(1) << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot read vocabulary file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::load, "vocabulary file " + path + ": " + e.what());
    }
    return from_json(j);
}

std::uint64_t Vocabulary::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::string_view s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& w : id_to_word_) {
        mix(w);
        mix("\x1f");
    }
    char buf[32];
    for (double f : idf_) {
        // Hash the stored (32-bit) precision so a reloaded checkpoint matches.
        std::snprintf(buf, sizeof buf, "%.6e;", static_cast<double>(static_cast<float>(f)));
        mix(buf);
    }
    return h;
}

std::string Vocabulary::hash_hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
    return buf;
}

}  // namespace percvae
