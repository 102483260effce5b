#include <doctest.h>

#include <cmath>

#include "check.hpp"
#include "fixtures.hpp"
#include "percvae/persona_memory.hpp"

using namespace percvae;

namespace {

std::vector<double> vals(ad::Var v) { return {v.value().begin(), v.value().end()}; }

}  // namespace

TEST_CASE("build_memories: bag-of-words sums") {
    const auto cfg = fixtures::micro_config();
    const auto params = fixtures::micro_params(1);
    ad::Graph g(false);
    auto bp = bind_params(g, params, cfg);
    auto bank = build_memories(bp, {{5}, {6, 6}}, cfg.hops);
    const auto& A = params.at("memory.table.0");
    auto m = bank.input[0].value();
    const auto d = static_cast<std::size_t>(cfg.embed_dim);
    for (std::size_t j = 0; j < d; ++j) {
        CHECK(m[j] == A(5, static_cast<std::int64_t>(j)));
        CHECK(m[d + j] == 2.0 * A(6, static_cast<std::int64_t>(j)));
    }
    auto empty = build_memories(bp, {}, cfg.hops);
    CHECK(empty.personas == 0);
    CHECK(empty.input.empty());
}

TEST_CASE("build_memories: adjacent tying shares tables between hops") {
    const auto cfg = fixtures::micro_config();
    auto params = fixtures::micro_params(2);
    for (std::int64_t h = 0; h + 1 < cfg.hops; ++h)
        CHECK(&params.memory_output_table(h) == &params.memory_input_table(h + 1));
    ad::Graph g(false);
    auto bp = bind_params(g, params, cfg);
    auto bank = build_memories(bp, {{4, 5}, {7}}, cfg.hops);
    for (std::int64_t h = 0; h + 1 < cfg.hops; ++h) {
        CHECK(bank.output[static_cast<std::size_t>(h)].id == bank.input[static_cast<std::size_t>(h + 1)].id);
        CHECK(bp.memory_output(h).id == bp.memory_input(h + 1).id);
    }
}

TEST_CASE("read_memory: hand example with one hop") {
    ad::Graph g(false);
    MemoryBank bank;
    bank.personas = 2;
    bank.input = {g.constant({2, 2}, {1, 0, 0, 1})};
    bank.output = {g.constant({2, 2}, {1, 0, 0, 1})};
    auto r = read_memory(g.constant({1.0, 0.0}), bank, 1);
    const double e = std::exp(1.0);
    auto prob = vals(r.prob[0]);
    CHECK(std::abs(prob[0] - e / (e + 1)) < 1e-12);
    CHECK(std::abs(prob[0] - 0.7311) < 1e-4);
    CHECK(std::abs(prob[1] - 0.2689) < 1e-4);
    auto u1 = vals(r.u[1]);
    CHECK(std::abs(u1[0] - (1.0 + prob[0])) < 1e-15);
    CHECK(std::abs(u1[1] - prob[1]) < 1e-15);
}

TEST_CASE("read_memory: identical memories attend uniformly; zero outputs keep u0") {
    SeededSampler s(8);
    for (int k = 1; k <= 5; ++k) {
        ad::Graph g(false);
        std::vector<double> row{s.uniform(-1, 1), s.uniform(-1, 1)};
        std::vector<double> m;
        for (int i = 0; i < k; ++i) m.insert(m.end(), row.begin(), row.end());
        MemoryBank bank;
        bank.personas = static_cast<std::size_t>(k);
        for (int h = 0; h < 3; ++h) {
            bank.input.push_back(g.constant({k, 2}, m));
            bank.output.push_back(g.constant({k, 2}, std::vector<double>(m.size(), 0.0)));
        }
        auto r = read_memory(g.constant({0.3, -0.8}), bank, 3);
        for (const auto& p : r.prob)
            for (double x : p.value()) CHECK(std::abs(x - 1.0 / k) < 1e-12);
        CHECK(vals(r.persona_memory()) == std::vector<double>{0.3, -0.8});
    }
}

TEST_CASE("read_memory: k=0 returns u0 with an empty trace; hops=0 is rejected") {
    ad::Graph g(false);
    auto r = read_memory(g.constant({0.5, 0.25}), MemoryBank{}, 3);
    CHECK(r.prob.empty());
    CHECK(r.u.size() == 1);
    CHECK(vals(r.persona_memory()) == std::vector<double>{0.5, 0.25});
    CHECK(check::error_kind([&] { read_memory(g.constant({0.5, 0.25}), MemoryBank{}, 0); }) == ErrorKind::contract);
}

TEST_CASE("read_memory: recurrence identity, normalization and composition") {
    const auto cfg = fixtures::micro_config();
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto params = fixtures::micro_params(seed, 1.0);
        ad::Graph g(false);
        auto bp = bind_params(g, params, cfg);
        auto bank = build_memories(bp, {{4, 5}, {6}, {7, 4, 6}}, 3);
        SeededSampler s(seed);
        auto u0 = g.constant(s.standard_normal(2));
        auto r = read_memory(u0, bank, 3);
        REQUIRE(r.u.size() == 4);
        for (std::size_t j = 0; j < 3; ++j) {
            double sum = 0.0;
            for (double x : r.prob[j].value()) sum += x;
            CHECK(std::abs(sum - 1.0) < 1e-12);
            for (std::size_t i = 0; i < 2; ++i) CHECK(r.u[j + 1].value()[i] == r.u[j].value()[i] + r.o[j].value()[i]);
        }
        // Three single-hop reads chained by hand.
        ad::Var u = u0;
        for (std::size_t h = 0; h < 3; ++h) {
            MemoryBank one;
            one.personas = bank.personas;
            one.input = {bank.input[h]};
            one.output = {bank.output[h]};
            u = read_memory(u, one, 1).persona_memory();
        }
        CHECK(vals(u) == vals(r.persona_memory()));
        // Softmax shift invariance of the hop logits.
        auto logits = ad::matmul(bank.input[0], u0);
        auto shifted = ad::softmax(ad::add_scalar(logits, 3.7));
        for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(shifted.value()[i] - r.prob[0].value()[i]) < 1e-12);
    }
}

TEST_CASE("select_persona: zero weights are uniform and pick persona 0") {
    const auto cfg = fixtures::micro_config();
    auto params = fixtures::micro_params(1);
    for (auto& v : params.at("persona.select").data) v = 0.0;
    ad::Graph g(false);
    auto bp = bind_params(g, params, cfg);
    const std::vector<TokenIds> personas{{4, 5, 5}, {6}};
    auto bank = build_memories(bp, personas, cfg.hops);
    auto sel = select_persona(bp, g.constant({0.2, 0.1}), g.constant({1.0, -1.0}), bank, personas);
    for (double a : sel.alpha.value()) CHECK(std::abs(a - 1.0 / 3.0) < 1e-15);
    CHECK(sel.selected == 0);
    CHECK_FALSE(sel.is_none());
    CHECK(sel.persona_word_ids == TokenIds{4, 5});
    CHECK(sel.none_index == 2);
}

TEST_CASE("select_persona: k=0 selects None") {
    const auto cfg = fixtures::micro_config();
    const auto params = fixtures::micro_params(1);
    ad::Graph g(false);
    auto bp = bind_params(g, params, cfg);
    auto sel = select_persona(bp, g.constant({0.2, 0.1}), g.constant({1.0, -1.0}), MemoryBank{}, {});
    CHECK(sel.is_none());
    CHECK(sel.persona_word_ids.empty());
    CHECK(sel.alpha.size() == 1);
    CHECK(sel.alpha.value()[0] == 1.0);
}

TEST_CASE("select_persona: alpha normalization and None/word-set consistency") {
    const auto cfg = fixtures::micro_config();
    SeededSampler s(17);
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto params = fixtures::micro_params(seed, 2.0);
        ad::Graph g(false);
        auto bp = bind_params(g, params, cfg);
        const std::vector<TokenIds> personas{{4, 5}, {6, 7}};
        auto bank = build_memories(bp, personas, cfg.hops);
        auto r = read_memory(g.constant(s.standard_normal(2)), bank, cfg.hops);
        auto sel = select_persona(bp, r.persona_memory(), g.constant(s.standard_normal(2)), bank, personas);
        double sum = 0.0;
        for (double a : sel.alpha.value()) sum += a;
        CHECK(std::abs(sum - 1.0) < 1e-12);
        CHECK(sel.selected >= 0);
        CHECK(sel.selected <= 2);
        CHECK(sel.persona_word_ids.empty() == sel.is_none());
    }
}

TEST_CASE("persona memory and selection gradients pass grad_check") {
    const auto cfg = fixtures::micro_config();
    ModelParams layout = fixtures::micro_params(9);
    std::vector<Tensor> inputs;
    for (const auto& [name, t] : layout.tensors()) inputs.push_back(t);
    const std::vector<TokenIds> personas{{4, 5}, {6}, {7, 7}};
    ad::ScalarFn fn = [&](ad::Graph& g, std::span<const ad::Var> vars) {
        auto bp = bind_params_from(vars, layout, cfg);
        auto bank = build_memories(bp, personas, cfg.hops);
        auto r = read_memory(ad::tanh(ad::embedding(bp.word_embedding, 5)), bank, cfg.hops);
        auto sel = select_persona(bp, r.persona_memory(), g.constant({0.3, -0.4}), bank, personas);
        return ad::cross_entropy(sel.alpha, 1);
    };
    CHECK(ad::grad_check(fn, inputs) <= 1e-4);
}
