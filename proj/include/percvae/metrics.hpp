#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "percvae/vocab.hpp"

namespace percvae {

/// Distinct k-grams pooled over all responses divided by the total token count.
/// Special tokens are removed before counting.
double distinct_k(const std::vector<TokenIds>& responses, int k);

/// Mean idf over the set of word types shared by response and persona; 0 when
/// nothing is shared.
double similarity_s(std::span<const TokenId> response, std::span<const TokenId> persona, std::span<const double> idf);

/// Mean over responses of the best similarity against any persona.
double persona_coverage(const std::vector<TokenIds>& responses, const std::vector<TokenIds>& personas,
                        std::span<const double> idf);

struct TurnDetail {
    std::vector<std::vector<double>> similarity;  // [response][persona]
    std::vector<int> best_persona;
    std::vector<std::vector<TokenId>> shared_words;  // W for the best persona of each response
    double coverage = 0.0;
};

TurnDetail persona_coverage_detail(const std::vector<TokenIds>& responses, const std::vector<TokenIds>& personas,
                                   std::span<const double> idf);

struct MetricReport {
    int n = 0;
    double distinct_1 = 0.0;
    double distinct_2 = 0.0;
    double persona_coverage = 0.0;
    std::size_t turns = 0;
    std::vector<TurnDetail> details;
};

/// Corpus-level report: distinct-k pooled over every turn (or averaged per turn
/// when `per_turn_distinct`), coverage averaged over turns.
MetricReport evaluate_turns(const std::vector<std::vector<TokenIds>>& responses_per_turn,
                            const std::vector<std::vector<TokenIds>>& personas_per_turn, std::span<const double> idf,
                            int n, bool per_turn_distinct = false, bool keep_details = false);

nlohmann::json report_to_json(const std::vector<MetricReport>& reports);
/// Plain-text table with one row per N: N | Dtinct-1 | Dtinct-2 | P. Cover.
std::string report_to_table(const std::vector<MetricReport>& reports);

}  // namespace percvae
