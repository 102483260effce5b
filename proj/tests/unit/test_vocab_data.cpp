#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "check.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "percvae/corpus.hpp"
#include "percvae/metrics.hpp"
#include "percvae/vocab.hpp"

using namespace percvae;
using check::error_kind;

TEST_CASE("tokenize lowercases and separates punctuation") {
    CHECK(tokenize("I'm a Goalie.") == std::vector<std::string>{"i'm", "a", "goalie", "."});
    CHECK(tokenize("Hi, how are you?") == std::vector<std::string>{"hi", ",", "how", "are", "you", "?"});
    CHECK(tokenize("   ").empty());
    CHECK(tokenize("emm...") == std::vector<std::string>{"emm", ".", ".", "."});
}

TEST_CASE("compute_idf examples") {
    CHECK(idf_value(0.0) == 1.0);
    CHECK(std::abs(idf_value(std::exp(1.0) - 1.0) - 0.5) < 1e-12);
    CHECK(std::abs(idf_value(1.0) - 0.59061) < 1e-4);
    CHECK(std::abs(idf_value(1.0) - 1.0 / (1.0 + std::log(2.0))) < 1e-15);
    CHECK(error_kind([] { idf_value(-1.0); }) == ErrorKind::domain);
    const auto table = compute_idf({{"a", 0.0}, {"b", 1.0}});
    CHECK(table.at("a") == 1.0);
    CHECK(error_kind([] { compute_idf({{"a", -0.5}}); }) == ErrorKind::domain);
}

TEST_CASE("build_vocab: specials, cap and tie-break") {
    auto v = Vocabulary::from_counts({{"x", 1}, {"y", 2}, {"z", 3}}, 20000);
    CHECK(v.size() == 7);
    CHECK(v.word(special::pad) == "<pad>");
    CHECK(v.word(special::unk) == "<unk>");
    CHECK(v.word(special::sos) == "<sos>");
    CHECK(v.word(special::eos) == "<eos>");

    auto capped = Vocabulary::from_counts({{"a", 5}, {"b", 3}, {"c", 1}}, 2);
    CHECK(capped.size() == 6);
    CHECK(capped.id("a") != special::unk);
    CHECK(capped.id("b") != special::unk);
    CHECK(capped.id("c") == special::unk);

    auto tie = Vocabulary::from_counts({{"b", 2}, {"a", 2}}, 1);
    CHECK(tie.size() == 5);
    CHECK(tie.id("a") == 4);
    CHECK(tie.id("b") == special::unk);

    CHECK(error_kind([] { Vocabulary::from_counts({{"a", 1}}, 0); }) == ErrorKind::config);
}

TEST_CASE("build_vocab from dialogues counts personas and utterances") {
    std::vector<RawDialogue> ds{{{"a b"}, {{"a", "c"}}}};
    auto v = build_vocab(ds, 20000);
    CHECK(v.size() == 7);
    CHECK(v.id("a") == 4);  // most frequent first
    CHECK(std::abs(v.idf(v.id("a")) - idf_value(2.0)) < 1e-15);
    CHECK(std::abs(v.idf(v.id("b")) - idf_value(1.0)) < 1e-15);
}

TEST_CASE("vocabulary invariants and round trip") {
    auto ds = fixtures::toy_dialogues();
    auto v = build_vocab(ds, 20000);
    for (std::size_t i = 0; i < v.size(); ++i) {
        const auto id = static_cast<TokenId>(i);
        if (is_special(id)) {
            CHECK(v.idf(id) == 0.0);
            continue;
        }
        CHECK(v.idf(id) > 0.0);
        CHECK(v.idf(id) <= 1.0);
        CHECK(v.id(v.word(id)) == id);
    }
    const auto path = (std::filesystem::temp_directory_path() / "percvae_vocab_roundtrip.json").string();
    v.save(path);
    auto back = Vocabulary::load(path);
    CHECK(back == v);
    CHECK(back.hash() == v.hash());
    CHECK(back.tokens() == v.tokens());
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(back.idf(static_cast<TokenId>(i)) == v.idf(static_cast<TokenId>(i)));
    std::filesystem::remove(path);
}

TEST_CASE("encode/decode") {
    auto v = Vocabulary::from_counts({{"hello", 2}, {"world", 1}}, 10);
    auto ids = v.encode("Hello unknown world");
    CHECK(ids == TokenIds{v.id("hello"), special::unk, v.id("world")});
    CHECK(v.decode(TokenIds{special::sos, v.id("hello"), v.id("world"), special::eos}) == "hello world");
}

namespace {

const char* const kSoccerPersonas[] = {"i am a soccer player", "my number is 42", "i'm a goalie",
                                       "nike cleats are my favorite", "i joined a new team last week"};

/// Vocabulary over the soccer-player fixture with idf taken from general
/// English frequencies: function words are common, "goalie" is rare.
Vocabulary soccer_vocab() {
    std::vector<RawDialogue> ds{{{std::begin(kSoccerPersonas), std::end(kSoccerPersonas)},
                                 {{"what do you do for a living ?", "i am a goalie in the soccer team"}}}};
    auto v = build_vocab(ds, 20000);
    v.set_idf_from_frequencies({{"i", 1e6},      {"am", 5e5},    {"a", 1e6},     {"the", 1e6},    {"in", 8e5},
                                {"my", 6e5},     {"is", 9e5},    {"are", 7e5},   {"new", 2e5},    {"last", 1e5},
                                {"week", 5e4},   {"team", 2e4},  {"soccer", 3e3}, {"player", 4e3}, {"number", 6e4},
                                {"42", 5e2},     {"nike", 8e2},  {"cleats", 30}, {"favorite", 2e4}, {"joined", 1e4},
                                {"goalie", 2},   {"i'm", 3e5},   {"what", 6e5},  {"do", 7e5},     {"you", 9e5},
                                {"for", 8e5},    {"living", 1e4}, {"?", 9e5}});
    return v;
}

}  // namespace

TEST_CASE("label_persona: goalie response grounds on the goalie persona") {
    auto v = soccer_vocab();
    std::vector<TokenIds> personas;
    for (const char* p : kSoccerPersonas) personas.push_back(v.encode(p));
    const auto response = v.encode("i am a goalie in the soccer team");
    std::vector<int> r(response.begin(), response.end());
    std::vector<double> idf(v.idf().begin(), v.idf().end());
    std::vector<double> scores;
    for (const auto& p : personas) scores.push_back(oracle::shared_similarity(r, std::vector<int>(p.begin(), p.end()), idf));
    const auto best = static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
    REQUIRE(best == 2);
    REQUIRE(scores[2] >= 0.2);
    auto label = label_persona(response, personas, v.idf(), 0.2);
    REQUIRE(label.label.has_value());
    CHECK(*label.label == 2);
    // "a" and "goalie" are the shared positions.
    CHECK(label.copy_positions == std::vector<std::uint8_t>{0, 0, 1, 1, 0, 0, 0, 0});
}

TEST_CASE("label_persona: no shared tokens gives None") {
    auto v = Vocabulary::from_counts({{"a", 1}, {"b", 1}, {"c", 1}, {"d", 1}}, 10);
    auto label = label_persona(v.encode("a b"), {v.encode("c"), v.encode("d")}, v.idf(), 0.2);
    CHECK_FALSE(label.label.has_value());
    CHECK(label.copy_positions == std::vector<std::uint8_t>{0, 0});
}

TEST_CASE("label_persona: response identical to a persona") {
    // Three-token persona "x y z" with hand-set idf 0.9, 0.6, 0.3: S = 0.6.
    std::vector<double> idf{0, 0, 0, 0, 0.9, 0.6, 0.3, 0.8, 0.7};
    const std::vector<TokenIds> personas{{7}, {8}, {4, 5, 6}};
    const TokenIds response{4, 5, 6};
    CHECK(std::abs(similarity_s(response, personas[2], idf) - 0.6) < 1e-15);
    auto label = label_persona(response, personas, idf, 0.1);
    REQUIRE(label.label.has_value());
    CHECK(*label.label == 2);
    CHECK(label.copy_positions == std::vector<std::uint8_t>{1, 1, 1});
}

TEST_CASE("label_persona: empty persona list and threshold edge") {
    std::vector<double> idf{0, 0, 0, 0, 0.5};
    auto none = label_persona(TokenIds{4, 4}, {}, idf, 0.2);
    CHECK_FALSE(none.label.has_value());
    CHECK(none.copy_positions == std::vector<std::uint8_t>{0, 0});
    // Exactly at the threshold labels.
    auto at = label_persona(TokenIds{4}, {TokenIds{4}}, idf, 0.5);
    CHECK(at.label == 0);
    auto above = label_persona(TokenIds{4}, {TokenIds{4}}, idf, 0.5000001);
    CHECK_FALSE(above.label.has_value());
    CHECK(error_kind([&] { label_persona(TokenIds{4}, {TokenIds{4}}, idf, -0.1); }) == ErrorKind::config);
}

TEST_CASE("label_persona: permutation equivariance and copy positions") {
    SeededSampler s(3);
    std::vector<double> idf(20, 0.0);
    for (std::size_t i = 4; i < idf.size(); ++i) idf[i] = s.uniform(0.05, 1.0);
    auto rand_ids = [&](std::size_t n) {
        TokenIds t;
        for (std::size_t i = 0; i < n; ++i) t.push_back(static_cast<TokenId>(4 + s.index_below(16)));
        return t;
    };
    for (int trial = 0; trial < 200; ++trial) {
        const auto response = rand_ids(1 + s.index_below(6));
        std::vector<TokenIds> personas;
        const auto k = 1 + s.index_below(4);
        for (std::size_t j = 0; j < k; ++j) personas.push_back(rand_ids(1 + s.index_below(5)));
        auto base = label_persona(response, personas, idf, 0.2);
        std::vector<std::size_t> perm(k);
        std::iota(perm.begin(), perm.end(), 0);
        std::reverse(perm.begin(), perm.end());
        std::vector<TokenIds> permuted;
        for (auto p : perm) permuted.push_back(personas[p]);
        auto moved = label_persona(response, permuted, idf, 0.2);
        REQUIRE(base.label.has_value() == moved.label.has_value());
        if (base.label) {
            const auto& a = personas[static_cast<std::size_t>(*base.label)];
            const auto& b = permuted[static_cast<std::size_t>(*moved.label)];
            CHECK(similarity_s(response, a, idf) == similarity_s(response, b, idf));
            for (std::size_t t = 0; t < response.size(); ++t)
                if (base.copy_positions[t]) CHECK(std::find(a.begin(), a.end(), response[t]) != a.end());
        } else {
            CHECK(std::all_of(base.copy_positions.begin(), base.copy_positions.end(), [](auto c) { return c == 0; }));
        }
    }
}

TEST_CASE("load_corpus: contexts accumulate turn by turn") {
    const std::string text =
        "1 your persona: i like tacos\n"
        "2 hi\thello\n"
        "3 how are you ?\tfine\n"
        "4 bye\tsee you\n";
    auto ds = parse_dialogues(text, CorpusFormat::convai2_text);
    REQUIRE(ds.size() == 1);
    auto ex = expand_dialogues(ds);
    REQUIRE(ex.size() == 3);
    CHECK(ex[0].context.size() == 1);
    CHECK(ex[1].context.size() == 3);
    CHECK(ex[2].context.size() == 5);
    CHECK(ex[2].context[3] == std::vector<std::string>{"fine"});
    CHECK(ex[2].context[4] == std::vector<std::string>{"bye"});
    CHECK(ex[2].response == std::vector<std::string>{"see", "you"});
    CHECK(ex[0].personas.size() == 1);
}

TEST_CASE("load_corpus: empty file, format errors and both formats agree") {
    CHECK(parse_dialogues("", CorpusFormat::convai2_text).empty());
    CHECK(parse_dialogues("", CorpusFormat::jsonl).empty());
    auto kind = error_kind([] { parse_dialogues("1 i like tacos\n", CorpusFormat::convai2_text); });
    CHECK(kind == ErrorKind::parse);
    try {
        parse_dialogues("1 your persona: x\n2 a\tb\nbroken line\n", CorpusFormat::convai2_text);
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    CHECK(error_kind([] { parse_dialogues("{\"personas\": []}\n{oops\n", CorpusFormat::jsonl); }) == ErrorKind::parse);
    auto a = fixtures::toy_dialogues();
    auto b = load_dialogues(fixtures::data_path("toy_corpus.txt"), CorpusFormat::convai2_text);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].personas == b[i].personas);
        REQUIRE(a[i].turns.size() == b[i].turns.size());
        for (std::size_t t = 0; t < a[i].turns.size(); ++t) {
            CHECK(a[i].turns[t].user == b[i].turns[t].user);
            CHECK(a[i].turns[t].bot == b[i].turns[t].bot);
        }
    }
    CHECK(error_kind([] { load_dialogues("/nonexistent/corpus.jsonl", CorpusFormat::jsonl); }) == ErrorKind::io);
}

TEST_CASE("convai2 parser: consecutive dialogues and partner personas") {
    const std::string text =
        "1 your persona: a\n"
        "2 partner's persona: b\n"
        "3 u1\tb1\n"
        "1 your persona: c\n"
        "2 u2\tb2\textra\tfields\n"
        "1 u3\tb3\n";
    auto ds = parse_dialogues(text, CorpusFormat::convai2_text);
    REQUIRE(ds.size() == 3);
    CHECK(ds[0].personas == std::vector<std::string>{"a"});
    CHECK(ds[1].turns[0].bot == "b2");
    CHECK(ds[2].personas.empty());
}

namespace {

std::vector<DialogueExample> numbered_examples(std::size_t n) {
    std::vector<DialogueExample> out;
    for (std::size_t i = 0; i < n; ++i) {
        DialogueExample ex;
        ex.context = {TokenIds(1 + i % 3, 4)};
        ex.response = TokenIds(1 + i % 4, 5);
        ex.copy_positions.assign(ex.response.size(), 0);
        out.push_back(ex);
    }
    return out;
}

}  // namespace

TEST_CASE("make_batches: sizes, determinism and masks") {
    auto ex = numbered_examples(70);
    SeededSampler a(1), b(1);
    auto ba = make_batches(ex, 32, a);
    auto bb = make_batches(ex, 32, b);
    REQUIRE(ba.size() == 3);
    CHECK(ba[0].size == 32);
    CHECK(ba[1].size == 32);
    CHECK(ba[2].size == 6);
    for (std::size_t i = 0; i < ba.size(); ++i) CHECK(ba[i].source_index == bb[i].source_index);
    std::vector<std::size_t> all;
    for (const auto& batch : ba) all.insert(all.end(), batch.source_index.begin(), batch.source_index.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);
    CHECK(error_kind([&] { make_batches(ex, 0, a); }) == ErrorKind::config);
}

TEST_CASE("make_batch: mask sums equal true lengths on a two-example fixture") {
    std::vector<DialogueExample> ex(2);
    ex[0].context = {{4, 5, 6}, {7}};
    ex[0].response = {4, 5};
    ex[0].personas = {{4}, {5, 6, 7, 8}};
    ex[0].persona_label = 1;
    ex[0].copy_positions = {0, 1};
    ex[1].context = {{4}};
    ex[1].response = {6, 7, 8, 9};
    ex[1].copy_positions = {0, 0, 0, 0};
    const std::vector<std::size_t> idx{0, 1};
    auto b = make_batch(ex, idx);
    auto row_sum = [](const std::vector<std::uint8_t>& m, std::size_t row, std::size_t width) {
        return std::accumulate(m.begin() + static_cast<long>(row * width), m.begin() + static_cast<long>((row + 1) * width), 0);
    };
    CHECK(row_sum(b.response_mask, 0, b.max_response_len) == 2);
    CHECK(row_sum(b.response_mask, 1, b.max_response_len) == 4);
    const auto ctx_width = b.max_utterances * b.max_utterance_len;
    CHECK(row_sum(b.context_mask, 0, ctx_width) == 4);
    CHECK(row_sum(b.context_mask, 1, ctx_width) == 1);
    const auto per_width = b.max_personas * b.max_persona_len;
    CHECK(row_sum(b.persona_mask, 0, per_width) == 5);
    CHECK(row_sum(b.persona_mask, 1, per_width) == 0);
    CHECK(b.persona_labels == std::vector<int>{1, -1});
    for (std::size_t i = 0; i < b.response.size(); ++i)
        if (!b.response_mask[i]) CHECK(b.response[i] == special::pad);
    for (std::size_t i = 0; i < b.context.size(); ++i)
        if (!b.context_mask[i]) CHECK(b.context[i] == special::pad);
    for (std::size_t r = 0; r < 2; ++r) {
        auto back = b.example(r);
        CHECK(back.context == ex[r].context);
        CHECK(back.response == ex[r].response);
        CHECK(back.personas == ex[r].personas);
        CHECK(back.persona_label == ex[r].persona_label);
        CHECK(back.copy_positions == ex[r].copy_positions);
    }
}

TEST_CASE("index_examples: toy corpus invariants") {
    auto ds = fixtures::toy_dialogues();
    auto v = build_vocab(ds, 20000);
    auto ex = index_examples(expand_dialogues(ds), v, 0.2, 8);
    CHECK(ex.size() == 96);
    for (const auto& e : ex) {
        CHECK_FALSE(e.context.empty());
        CHECK_FALSE(e.response.empty());
        CHECK(e.copy_positions.size() == e.response.size());
        if (!e.persona_label) continue;
        const auto& p = e.personas[static_cast<std::size_t>(*e.persona_label)];
        for (std::size_t t = 0; t < e.response.size(); ++t)
            if (e.copy_positions[t]) CHECK(std::find(p.begin(), p.end(), e.response[t]) != p.end());
    }
    CHECK(error_kind([&] { index_examples(expand_dialogues(ds), v, 0.2, 3); }) == ErrorKind::config);
}
