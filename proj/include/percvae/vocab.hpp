#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace percvae {

using TokenId = std::int32_t;
using TokenIds = std::vector<TokenId>;

namespace special {
inline constexpr TokenId pad = 0;
inline constexpr TokenId unk = 1;
inline constexpr TokenId sos = 2;
inline constexpr TokenId eos = 3;
inline constexpr TokenId count = 4;
}  // namespace special

constexpr bool is_special(TokenId id) noexcept { return id >= 0 && id < special::count; }

/// Lowercases and splits on whitespace after separating punctuation. Apostrophes
/// between letters stay inside the word ("i'm" is one token).
std::vector<std::string> tokenize(std::string_view text);

/// idf = 1 / (1 + ln(1 + tf)). Throws a domain error for tf < 0.
double idf_value(double term_frequency);
std::map<std::string, double> compute_idf(const std::map<std::string, double>& term_frequencies);

class Vocabulary {
public:
    Vocabulary();

    /// Keeps the `cap` most frequent tokens (ties broken lexicographically) after
    /// the four specials; idf is computed from the same counts.
    static Vocabulary from_counts(const std::map<std::string, double>& counts, std::size_t cap);

    static Vocabulary from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

    /// Replaces idf values with ones computed from external term frequencies;
    /// kept tokens missing from `tf` are treated as tf = 0.
    void set_idf_from_frequencies(const std::map<std::string, double>& tf);

    TokenId id(std::string_view word) const;
    const std::string& word(TokenId id) const;
    TokenIds encode(std::span<const std::string> tokens) const;
    TokenIds encode(std::string_view text) const;
    /// Space-joined words, specials dropped.
    std::string decode(std::span<const TokenId> ids) const;
    std::vector<std::string> words(std::span<const TokenId> ids) const;

    std::size_t size() const noexcept { return id_to_word_.size(); }
    std::span<const double> idf() const noexcept { return idf_; }
    double idf(TokenId id) const;
    const std::vector<std::string>& tokens() const noexcept { return id_to_word_; }

    /// FNV-1a over the serialized token list and idf table.
    std::uint64_t hash() const;
    std::string hash_hex() const;

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
        return a.id_to_word_ == b.id_to_word_ && a.idf_ == b.idf_;
    }

private:
    void rebuild_index();

    std::vector<std::string> id_to_word_;
    std::unordered_map<std::string, TokenId> word_to_id_;
    std::vector<double> idf_;
};

const std::vector<std::string>& special_tokens();

}  // namespace percvae
