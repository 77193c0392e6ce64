#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "stare/model.hpp"

namespace stare {

// Known-true completions per query key (subject, relation, sorted qualifiers;
// the direction is carried by the relation id, inverse relations encode
// subject prediction). Built over train ∪ valid ∪ test, the standard filtered
// protocol.
class FilterIndex {
public:
    // Sets stay sorted and deduplicated on insertion; filtered_rank searches
    // them binarily.
    void add_statement(const Statement& base, const Vocabulary& vocab);
    void add_split(const std::vector<Statement>& base_statements, const Vocabulary& vocab);
    const std::vector<EntityId>* find(const Statement& query) const;
    std::size_t size() const { return map_.size(); }

private:
    std::unordered_map<std::string, std::vector<EntityId>> map_;
    void insert(const std::string& key, EntityId id);
};

FilterIndex build_filter_index(const std::vector<const std::vector<Statement>*>& splits,
                               const Vocabulary& vocab);

// Filtered rank with optimistic/pessimistic tie averaging:
//   competitors = candidates not in (filter_set \ {gold})
//   optimistic  = 1 + #{competitors scored strictly above gold}
//   pessimistic = optimistic + #{competitors tied with gold}
//   rank        = (optimistic + pessimistic) / 2
// candidate_mask marks rankable columns; a masked gold id is an error.
double filtered_rank(const std::vector<double>& scores, EntityId gold,
                     const std::vector<EntityId>& filter_set,
                     const std::vector<std::uint8_t>& candidate_mask);

struct Metrics {
    double mrr = 0.0;
    double h1 = 0.0;
    double h5 = 0.0;
    double h10 = 0.0;
    std::size_t count = 0;
};

Metrics compute_metrics(const std::vector<double>& ranks);

struct RankReport {
    Metrics object_dir;
    Metrics subject_dir;
    Metrics average;  // unweighted mean of the two directions
    std::vector<double> object_ranks;
    std::vector<double> subject_ranks;
};

using BatchScorer = std::function<Tensor(const std::vector<Query>&)>;

// Core evaluation loop over base-id test statements: subject prediction runs
// as object prediction on the inverse-relation query with qualifiers kept.
RankReport evaluate_queries(const BatchScorer& scorer, const LinkPredictionModel& model,
                            const std::vector<Statement>& test_base, const FilterIndex& filter,
                            std::size_t batch_size = 128);

RankReport evaluate_model(LinkPredictionModel& model, const std::vector<Statement>& test_base,
                          const FilterIndex& filter, std::size_t batch_size = 128);

std::string metrics_table(const RankReport& report);
std::string metrics_records(const RankReport& report);

}  // namespace stare
