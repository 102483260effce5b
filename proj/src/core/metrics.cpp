#include "percvae/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "percvae/error.hpp"

namespace percvae {

namespace {

TokenIds strip_specials(std::span<const TokenId> ids) {
    TokenIds out;
    for (auto id : ids)
        if (!is_special(id)) out.push_back(id);
    return out;
}

double idf_of(std::span<const double> idf, TokenId id) {
    if (id < 0 || static_cast<std::size_t>(id) >= idf.size()) return 0.0;
    return idf[static_cast<std::size_t>(id)];
}

std::vector<TokenId> shared_types(std::span<const TokenId> response, std::span<const TokenId> persona) {
    std::set<TokenId> a, b;
    for (auto id : response)
        if (!is_special(id)) a.insert(id);
    for (auto id : persona)
        if (!is_special(id)) b.insert(id);
    std::vector<TokenId> out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

}  // namespace

double distinct_k(const std::vector<TokenIds>& responses, int k) {
    if (k < 1) fail(ErrorKind::contract, "distinct_k: k must be >= 1");
    std::set<std::vector<TokenId>> grams;
    std::size_t tokens = 0;
    for (const auto& r : responses) {
        const auto clean = strip_specials(r);
        tokens += clean.size();
        for (std::size_t i = 0; i + static_cast<std::size_t>(k) <= clean.size(); ++i)
            grams.emplace(clean.begin() + static_cast<std::ptrdiff_t>(i),
                          clean.begin() + static_cast<std::ptrdiff_t>(i) + k);
    }
    if (tokens == 0) fail(ErrorKind::undefined_metric, "distinct_k: no generated tokens");
    return static_cast<double>(grams.size()) / static_cast<double>(tokens);
}

double similarity_s(std::span<const TokenId> response, std::span<const TokenId> persona, std::span<const double> idf) {
    const auto w = shared_types(response, persona);
    if (w.empty()) return 0.0;
    double total = 0.0;
    for (auto id : w) total += idf_of(idf, id);
    return total / static_cast<double>(w.size());
}

TurnDetail persona_coverage_detail(const std::vector<TokenIds>& responses, const std::vector<TokenIds>& personas,
                                   std::span<const double> idf) {
    if (personas.empty()) fail(ErrorKind::undefined_metric, "persona_coverage: no personas");
    if (responses.empty()) fail(ErrorKind::undefined_metric, "persona_coverage: no responses");
    TurnDetail d;
    double total = 0.0;
    for (const auto& r : responses) {
        std::vector<double> row;
        int best = 0;
        for (std::size_t j = 0; j < personas.size(); ++j) {
            row.push_back(similarity_s(r, personas[j], idf));
            if (row.back() > row[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
        }
        total += row[static_cast<std::size_t>(best)];
        d.shared_words.push_back(shared_types(r, personas[static_cast<std::size_t>(best)]));
        d.best_persona.push_back(best);
        d.similarity.push_back(std::move(row));
    }
    d.coverage = total / static_cast<double>(responses.size());
    return d;
}

double persona_coverage(const std::vector<TokenIds>& responses, const std::vector<TokenIds>& personas,
                        std::span<const double> idf) {
    return persona_coverage_detail(responses, personas, idf).coverage;
}

MetricReport evaluate_turns(const std::vector<std::vector<TokenIds>>& responses_per_turn,
                            const std::vector<std::vector<TokenIds>>& personas_per_turn, std::span<const double> idf,
                            int n, bool per_turn_distinct, bool keep_details) {
    if (responses_per_turn.size() != personas_per_turn.size())
        fail(ErrorKind::shape, "evaluate_turns: responses and personas disagree on turn count");
    if (responses_per_turn.empty()) fail(ErrorKind::undefined_metric, "evaluate_turns: no turns");
    MetricReport report;
    report.n = n;
    report.turns = responses_per_turn.size();
    std::vector<TokenIds> pooled;
    double d1 = 0.0, d2 = 0.0, coverage = 0.0;
    std::size_t coverage_turns = 0;
    for (std::size_t t = 0; t < responses_per_turn.size(); ++t) {
        const auto& rs = responses_per_turn[t];
        pooled.insert(pooled.end(), rs.begin(), rs.end());
        if (per_turn_distinct) {
            d1 += distinct_k(rs, 1);
            d2 += distinct_k(rs, 2);
        }
        if (personas_per_turn[t].empty()) continue;
        auto detail = persona_coverage_detail(rs, personas_per_turn[t], idf);
        coverage += detail.coverage;
        ++coverage_turns;
        if (keep_details) report.details.push_back(std::move(detail));
    }
    const auto turns = static_cast<double>(responses_per_turn.size());
    report.distinct_1 = per_turn_distinct ? d1 / turns : distinct_k(pooled, 1);
    report.distinct_2 = per_turn_distinct ? d2 / turns : distinct_k(pooled, 2);
    report.persona_coverage = coverage_turns ? coverage / static_cast<double>(coverage_turns) : 0.0;
    return report;
}

nlohmann::json report_to_json(const std::vector<MetricReport>& reports) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : reports) {
        nlohmann::json row{{"n", r.n},
                           {"turns", r.turns},
                           {"distinct_1", r.distinct_1},
                           {"distinct_2", r.distinct_2},
                           {"persona_coverage", r.persona_coverage}};
        if (!r.details.empty()) {
            nlohmann::json details = nlohmann::json::array();
            for (const auto& d : r.details)
                details.push_back({{"similarity", d.similarity},
                                   {"best_persona", d.best_persona},
                                   {"shared_words", d.shared_words},
                                   {"coverage", d.coverage}});
            row["details"] = std::move(details);
        }
        rows.push_back(std::move(row));
    }
    return {{"reports", rows}};
}

std::string report_to_table(const std::vector<MetricReport>& reports) {
    std::ostringstream os;
    os << "N    Dtinct-1  Dtinct-2  P. Cover\n";
    char line[96];
    for (const auto& r : reports) {
        std::snprintf(line, sizeof line, "%-4d %.4f    %.4f    %.4f\n", r.n, r.distinct_1, r.distinct_2,
                      r.persona_coverage);
        os << line;
    }
    return os.str();
}

}  // namespace percvae
