#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "stare/types.hpp"

namespace stare {

// Statement file format: UTF-8, one statement per line, comma-separated
// `s,r,o[,qr1,qv1,...]`; field count 3 + 2*(#qualifiers); labels contain no
// commas; no header.
std::vector<RawStatement> parse_statements(const std::string& path);
std::vector<RawStatement> parse_statement_stream(std::istream& in);
std::string statement_line(const RawStatement& s);
void write_statements(const std::string& path, std::vector<RawStatement> statements,
                      bool sort_canonical = true);

// Label-pattern literal detector; inputs are label files, not typed RDF, so
// what counts as a literal is configurable. The default pattern matches
// numbers, ISO-ish dates/datetimes and quoted strings.
class LiteralDetector {
public:
    LiteralDetector();
    explicit LiteralDetector(const std::string& pattern);
    bool operator()(const std::string& label) const;
    const std::string& pattern() const { return pattern_; }

private:
    std::string pattern_;
};

enum class LiteralMode {
    DropStatement,  // statements with a literal object or qualifier are removed
    DropQualifier   // literal qualifiers are dropped, statements with literal
                    // objects are removed
};

std::vector<RawStatement> strip_literal_statements(const std::vector<RawStatement>& statements,
                                                   const LiteralDetector& is_literal,
                                                   LiteralMode mode);

struct Split {
    std::vector<RawStatement> train;
    std::vector<RawStatement> valid;
    std::vector<RawStatement> test;
};

Split load_split(const std::string& train_path, const std::string& valid_path,
                 const std::string& test_path);

struct LeakageReport {
    std::size_t removed_from_train = 0;
    std::size_t removed_from_valid = 0;
};

// Deletes train/valid statements whose main triple occurs as a test main
// triple. Test is untouched.
LeakageReport remove_leakage(Split& split);

struct UnseenReport {
    std::size_t removed_from_test = 0;
};

// Removes test statements containing entities or relations (qualifiers
// included) absent from train ∪ valid. Run after leakage removal.
UnseenReport filter_unseen(Split& split);

// Audits.
std::size_t count_leakage(const Split& split);
// Test statements whose main triple's direct inverse (o, r, s) is in train.
std::size_t count_inverse_leakage(const Split& split);

// Drops statements mentioning entities that occur fewer than min_count times
// (subject, object and qualifier-value positions). Dropping statements can
// create new rare entities; fixed_point iterates until stable.
std::vector<RawStatement> rarity_filter(std::vector<RawStatement> statements,
                                        std::size_t min_count, bool fixed_point,
                                        std::size_t* dropped = nullptr);

// Same filter with mention counts taken over all three parts jointly.
std::size_t rarity_filter_split(Split& split, std::size_t min_count, bool fixed_point);

// Keeps every qualifier-bearing statement plus a seeded random subset of
// triple-only statements sized so qualified/total ≈ ratio (±1 statement).
std::vector<RawStatement> sample_by_qualifier_ratio(const std::vector<RawStatement>& statements,
                                                    double ratio, std::uint64_t seed);

// Statements with more than n qualifiers keep a seeded deterministic choice
// of n (re-sorted canonically); statement count is unchanged.
std::vector<RawStatement> truncate_qualifiers(const std::vector<RawStatement>& statements,
                                              std::size_t n, std::uint64_t seed);

// Strips qualifiers and deduplicates main triples (first occurrence kept).
std::vector<RawStatement> reduce_to_triples(const std::vector<RawStatement>& statements);

struct DatasetStats {
    std::size_t statements = 0;
    std::size_t with_qualifiers = 0;
    double with_qualifiers_pct = 0.0;
    std::size_t entities = 0;
    std::size_t relations = 0;
    std::size_t entities_only_in_qualifiers = 0;
    std::size_t relations_only_in_qualifiers = 0;
    std::size_t train_size = 0;
    std::size_t valid_size = 0;
    std::size_t test_size = 0;
    std::vector<std::size_t> qualifier_histogram;        // index = #qualifier pairs
    std::map<std::size_t, std::size_t> indegree_histogram;  // in-degree -> #entities
    std::size_t inverse_leakage = 0;
    std::size_t leakage = 0;
};

DatasetStats compute_stats(const Split& split);
std::string stats_table(const DatasetStats& stats);
std::string stats_records(const DatasetStats& stats);

}  // namespace stare
