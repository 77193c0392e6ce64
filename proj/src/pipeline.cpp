#include "stare/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace stare {

namespace {

constexpr char kSep = '\x1f';

std::string triple_key(const RawStatement& s) {
    return s.subject + kSep + s.relation + kSep + s.object;
}

std::string inverse_triple_key(const RawStatement& s) {
    return s.object + kSep + s.relation + kSep + s.subject;
}

}  // namespace

std::vector<RawStatement> parse_statement_stream(std::istream& in) {
    std::vector<RawStatement> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            std::size_t comma = line.find(',', start);
            if (comma == std::string::npos) {
                fields.push_back(line.substr(start));
                break;
            }
            fields.push_back(line.substr(start, comma - start));
            start = comma + 1;
        }
        if (fields.size() < 3)
            throw ParseError(line_no, "expected at least 3 fields, got " +
                                          std::to_string(fields.size()));
        if ((fields.size() - 3) % 2 != 0)
            throw ParseError(line_no, "odd qualifier field count (" +
                                          std::to_string(fields.size()) + " fields total)");
        for (const auto& f : fields)
            if (f.empty()) throw ParseError(line_no, "empty field");
        RawStatement s;
        s.subject = fields[0];
        s.relation = fields[1];
        s.object = fields[2];
        for (std::size_t i = 3; i + 1 < fields.size(); i += 2)
            s.qualifiers.emplace_back(fields[i], fields[i + 1]);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<RawStatement> parse_statements(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open statement file: " + path);
    return parse_statement_stream(in);
}

std::string statement_line(const RawStatement& s) {
    std::string line = s.subject + "," + s.relation + "," + s.object;
    for (const auto& [qr, qv] : s.qualifiers) line += "," + qr + "," + qv;
    return line;
}

void write_statements(const std::string& path, std::vector<RawStatement> statements,
                      bool sort_canonical) {
    std::vector<std::string> lines;
    lines.reserve(statements.size());
    for (const auto& s : statements) lines.push_back(statement_line(s));
    if (sort_canonical) std::sort(lines.begin(), lines.end());
    std::ofstream out(path);
    if (!out) throw Error("cannot open output file: " + path);
    for (const auto& l : lines) out << l << "\n";
    if (!out) throw Error("failed writing: " + path);
}

// Numbers (optionally signed, decimal or scientific), ISO dates and
// datetimes, and quoted strings.
static const char* kDefaultLiteralPattern =
    R"(^([+-]?\d+([.,]\d+)?([eE][+-]?\d+)?|[+-]?\d{4}-\d{2}-\d{2}(T[0-9:.Z+-]*)?|".*"|'.*')$)";

LiteralDetector::LiteralDetector() : pattern_(kDefaultLiteralPattern) {}
LiteralDetector::LiteralDetector(const std::string& pattern) : pattern_(pattern) {}

bool LiteralDetector::operator()(const std::string& label) const {
    static thread_local std::string cached_pattern;
    static thread_local std::regex cached_regex;
    if (cached_pattern != pattern_) {
        cached_regex = std::regex(pattern_, std::regex::ECMAScript);
        cached_pattern = pattern_;
    }
    return std::regex_match(label, cached_regex);
}

std::vector<RawStatement> strip_literal_statements(const std::vector<RawStatement>& statements,
                                                   const LiteralDetector& is_literal,
                                                   LiteralMode mode) {
    std::vector<RawStatement> out;
    out.reserve(statements.size());
    for (const auto& s : statements) {
        if (is_literal(s.object)) continue;  // literal in object position
        bool qual_literal = false;
        for (const auto& [qr, qv] : s.qualifiers)
            if (is_literal(qv)) {
                qual_literal = true;
                break;
            }
        if (!qual_literal) {
            out.push_back(s);
            continue;
        }
        if (mode == LiteralMode::DropStatement) continue;
        RawStatement kept = s;
        kept.qualifiers.clear();
        for (const auto& q : s.qualifiers)
            if (!is_literal(q.second)) kept.qualifiers.push_back(q);
        out.push_back(std::move(kept));
    }
    return out;
}

Split load_split(const std::string& train_path, const std::string& valid_path,
                 const std::string& test_path) {
    Split split;
    split.train = parse_statements(train_path);
    split.valid = parse_statements(valid_path);
    split.test = parse_statements(test_path);
    return split;
}

LeakageReport remove_leakage(Split& split) {
    std::unordered_set<std::string> test_triples;
    test_triples.reserve(split.test.size());
    for (const auto& s : split.test) test_triples.insert(triple_key(s));
    LeakageReport report;
    auto scrub = [&test_triples](std::vector<RawStatement>& part) {
        std::size_t before = part.size();
        std::erase_if(part,
                      [&test_triples](const RawStatement& s) {
                          return test_triples.count(triple_key(s)) > 0;
                      });
        return before - part.size();
    };
    report.removed_from_train = scrub(split.train);
    report.removed_from_valid = scrub(split.valid);
    return report;
}

UnseenReport filter_unseen(Split& split) {
    std::unordered_set<std::string> entities, relations;
    auto absorb = [&](const std::vector<RawStatement>& part) {
        for (const auto& s : part) {
            entities.insert(s.subject);
            entities.insert(s.object);
            relations.insert(s.relation);
            for (const auto& [qr, qv] : s.qualifiers) {
                relations.insert(qr);
                entities.insert(qv);
            }
        }
    };
    absorb(split.train);
    absorb(split.valid);
    UnseenReport report;
    std::size_t before = split.test.size();
    std::erase_if(split.test, [&](const RawStatement& s) {
        if (!entities.count(s.subject) || !entities.count(s.object) ||
            !relations.count(s.relation))
            return true;
        for (const auto& [qr, qv] : s.qualifiers)
            if (!relations.count(qr) || !entities.count(qv)) return true;
        return false;
    });
    report.removed_from_test = before - split.test.size();
    return report;
}

std::size_t count_leakage(const Split& split) {
    std::unordered_set<std::string> test_triples;
    for (const auto& s : split.test) test_triples.insert(triple_key(s));
    std::size_t n = 0;
    for (const auto& s : split.train)
        if (test_triples.count(triple_key(s))) ++n;
    for (const auto& s : split.valid)
        if (test_triples.count(triple_key(s))) ++n;
    return n;
}

std::size_t count_inverse_leakage(const Split& split) {
    std::unordered_set<std::string> train_triples;
    for (const auto& s : split.train) train_triples.insert(triple_key(s));
    std::size_t n = 0;
    for (const auto& s : split.test)
        if (train_triples.count(inverse_triple_key(s))) ++n;
    return n;
}

std::vector<RawStatement> rarity_filter(std::vector<RawStatement> statements,
                                        std::size_t min_count, bool fixed_point,
                                        std::size_t* dropped) {
    if (dropped) *dropped = 0;
    if (min_count <= 1) return statements;
    while (true) {
        std::unordered_map<std::string, std::size_t> mentions;
        for (const auto& s : statements) {
            mentions[s.subject]++;
            mentions[s.object]++;
            for (const auto& [qr, qv] : s.qualifiers) mentions[qv]++;
        }
        std::size_t before = statements.size();
        std::erase_if(statements, [&](const RawStatement& s) {
            if (mentions[s.subject] < min_count || mentions[s.object] < min_count) return true;
            for (const auto& [qr, qv] : s.qualifiers)
                if (mentions[qv] < min_count) return true;
            return false;
        });
        std::size_t removed = before - statements.size();
        if (dropped) *dropped += removed;
        if (removed == 0 || !fixed_point) break;
    }
    return statements;
}

std::size_t rarity_filter_split(Split& split, std::size_t min_count, bool fixed_point) {
    if (min_count <= 1) return 0;
    std::size_t dropped = 0;
    while (true) {
        std::unordered_map<std::string, std::size_t> mentions;
        for (const auto* part : {&split.train, &split.valid, &split.test})
            for (const auto& s : *part) {
                mentions[s.subject]++;
                mentions[s.object]++;
                for (const auto& [qr, qv] : s.qualifiers) mentions[qv]++;
            }
        auto rare = [&](const RawStatement& s) {
            if (mentions[s.subject] < min_count || mentions[s.object] < min_count) return true;
            for (const auto& [qr, qv] : s.qualifiers)
                if (mentions[qv] < min_count) return true;
            return false;
        };
        std::size_t removed = 0;
        for (auto* part : {&split.train, &split.valid, &split.test}) {
            std::size_t before = part->size();
            std::erase_if(*part, rare);
            removed += before - part->size();
        }
        dropped += removed;
        if (removed == 0 || !fixed_point) break;
    }
    return dropped;
}

std::vector<RawStatement> sample_by_qualifier_ratio(const std::vector<RawStatement>& statements,
                                                    double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0) || ratio > 1.0)
        throw Error("sample_by_qualifier_ratio: ratio must be in (0, 1]");
    std::vector<std::size_t> qualified, plain;
    for (std::size_t i = 0; i < statements.size(); ++i)
        (statements[i].qualifiers.empty() ? plain : qualified).push_back(i);
    if (qualified.empty())
        throw Error("sample_by_qualifier_ratio: no qualifier-bearing statements, ratio " +
                    std::to_string(ratio) + " unreachable");
    auto nq = static_cast<double>(qualified.size());
    auto want_plain =
        static_cast<std::size_t>(std::llround(nq / ratio - nq));
    if (want_plain > plain.size())
        throw Error("sample_by_qualifier_ratio: ratio " + std::to_string(ratio) +
                    " unreachable, would need " + std::to_string(want_plain) +
                    " triple-only statements but only " + std::to_string(plain.size()) +
                    " exist");
    std::mt19937_64 rng(seed);
    std::shuffle(plain.begin(), plain.end(), rng);
    plain.resize(want_plain);
    std::vector<std::uint8_t> keep(statements.size(), 0);
    for (auto i : qualified) keep[i] = 1;
    for (auto i : plain) keep[i] = 1;
    std::vector<RawStatement> out;
    out.reserve(qualified.size() + want_plain);
    for (std::size_t i = 0; i < statements.size(); ++i)
        if (keep[i]) out.push_back(statements[i]);
    return out;
}

std::vector<RawStatement> truncate_qualifiers(const std::vector<RawStatement>& statements,
                                              std::size_t n, std::uint64_t seed) {
    std::vector<RawStatement> out;
    out.reserve(statements.size());
    for (std::size_t i = 0; i < statements.size(); ++i) {
        RawStatement s = statements[i];
        if (s.qualifiers.size() > n) {
            // Per-statement stream so the choice replays under the same seed
            // regardless of surrounding statements.
            std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * (i + 1)));
            std::vector<std::size_t> pick(s.qualifiers.size());
            for (std::size_t j = 0; j < pick.size(); ++j) pick[j] = j;
            std::shuffle(pick.begin(), pick.end(), rng);
            pick.resize(n);
            std::vector<std::pair<std::string, std::string>> kept;
            kept.reserve(n);
            for (auto j : pick) kept.push_back(s.qualifiers[j]);
            std::sort(kept.begin(), kept.end());
            s.qualifiers = std::move(kept);
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<RawStatement> reduce_to_triples(const std::vector<RawStatement>& statements) {
    std::vector<RawStatement> out;
    std::unordered_set<std::string> seen;
    out.reserve(statements.size());
    for (const auto& s : statements) {
        if (!seen.insert(triple_key(s)).second) continue;
        RawStatement t;
        t.subject = s.subject;
        t.relation = s.relation;
        t.object = s.object;
        out.push_back(std::move(t));
    }
    return out;
}

DatasetStats compute_stats(const Split& split) {
    DatasetStats stats;
    stats.train_size = split.train.size();
    stats.valid_size = split.valid.size();
    stats.test_size = split.test.size();
    stats.statements = stats.train_size + stats.valid_size + stats.test_size;

    std::unordered_set<std::string> entities, relations;
    std::unordered_set<std::string> main_entities, main_relations;
    std::unordered_map<std::string, std::size_t> indegree;
    for (const auto* part : {&split.train, &split.valid, &split.test}) {
        for (const auto& s : *part) {
            std::size_t nq = s.qualifiers.size();
            if (nq > 0) ++stats.with_qualifiers;
            if (stats.qualifier_histogram.size() <= nq)
                stats.qualifier_histogram.resize(nq + 1, 0);
            stats.qualifier_histogram[nq]++;
            entities.insert(s.subject);
            entities.insert(s.object);
            relations.insert(s.relation);
            main_entities.insert(s.subject);
            main_entities.insert(s.object);
            main_relations.insert(s.relation);
            indegree[s.object]++;
            for (const auto& [qr, qv] : s.qualifiers) {
                relations.insert(qr);
                entities.insert(qv);
            }
        }
    }
    stats.entities = entities.size();
    stats.relations = relations.size();
    for (const auto& e : entities)
        if (!main_entities.count(e)) ++stats.entities_only_in_qualifiers;
    for (const auto& r : relations)
        if (!main_relations.count(r)) ++stats.relations_only_in_qualifiers;
    if (stats.statements > 0)
        stats.with_qualifiers_pct = 100.0 * static_cast<double>(stats.with_qualifiers) /
                                    static_cast<double>(stats.statements);
    std::map<std::size_t, std::size_t> degree_counts;
    for (const auto& [entity, deg] : indegree) degree_counts[deg]++;
    stats.indegree_histogram = std::move(degree_counts);
    stats.inverse_leakage = count_inverse_leakage(split);
    stats.leakage = count_leakage(split);
    return stats;
}

std::string stats_table(const DatasetStats& s) {
    std::ostringstream out;
    out << "Statements\t" << s.statements << "\n";
    char pct[32];
    std::snprintf(pct, sizeof pct, "%.1f", s.with_qualifiers_pct);
    out << "w/ Quals (%)\t" << s.with_qualifiers << " (" << pct << "%)\n";
    out << "Entities\t" << s.entities << "\n";
    out << "Relations\t" << s.relations << "\n";
    out << "E in quals\t" << s.entities_only_in_qualifiers << "\n";
    out << "R in quals\t" << s.relations_only_in_qualifiers << "\n";
    out << "Train\t" << s.train_size << "\n";
    out << "Valid\t" << s.valid_size << "\n";
    out << "Test\t" << s.test_size << "\n";
    out << "Leakage (shared main triples)\t" << s.leakage << "\n";
    out << "Inverse leakage (test vs train)\t" << s.inverse_leakage << "\n";
    return out.str();
}

std::string stats_records(const DatasetStats& s) {
    std::ostringstream out;
    out << "statements " << s.statements << "\n";
    out << "with_qualifiers " << s.with_qualifiers << "\n";
    out << "with_qualifiers_pct " << s.with_qualifiers_pct << "\n";
    out << "entities " << s.entities << "\n";
    out << "relations " << s.relations << "\n";
    out << "entities_only_in_qualifiers " << s.entities_only_in_qualifiers << "\n";
    out << "relations_only_in_qualifiers " << s.relations_only_in_qualifiers << "\n";
    out << "train " << s.train_size << "\n";
    out << "valid " << s.valid_size << "\n";
    out << "test " << s.test_size << "\n";
    out << "leakage " << s.leakage << "\n";
    out << "inverse_leakage " << s.inverse_leakage << "\n";
    for (std::size_t i = 0; i < s.qualifier_histogram.size(); ++i)
        out << "qualifier_histogram " << i << " " << s.qualifier_histogram[i] << "\n";
    for (const auto& [deg, count] : s.indegree_histogram)
        out << "indegree_histogram " << deg << " " << count << "\n";
    return out.str();
}

}  // namespace stare
