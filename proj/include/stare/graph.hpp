#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "stare/types.hpp"

namespace stare {

// Bidirectional label<->id maps for entities and relations. Relation ids are
// laid out in blocks: base relations [0, n_base), inverses [n_base, 2*n_base),
// self-loop relation = 2*n_base. That makes direction classification a range
// test.
class Vocabulary {
public:
    Vocabulary() = default;

    std::size_t num_entities() const { return entity_labels_.size(); }
    std::size_t num_relations() const { return relation_labels_.size(); }
    std::size_t num_base_relations() const { return base_relations_; }
    bool augmented() const { return augmented_; }

    EntityId entity_id(const std::string& label) const;
    RelationId relation_id(const std::string& label) const;
    bool has_entity(const std::string& label) const { return entity_ids_.count(label) > 0; }
    bool has_relation(const std::string& label) const { return relation_ids_.count(label) > 0; }

    const std::string& entity_label(EntityId id) const;
    const std::string& relation_label(RelationId id) const;

    RelationId inverse_relation(RelationId r) const;
    RelationId self_loop_relation() const;
    EdgeDirection direction_of(RelationId r) const;

    // Internal to construction/augmentation.
    EntityId intern_entity(const std::string& label);
    RelationId intern_relation(const std::string& label);
    void mark_augmented(std::size_t base_relations);

private:
    std::vector<std::string> entity_labels_;
    std::vector<std::string> relation_labels_;
    std::unordered_map<std::string, EntityId> entity_ids_;
    std::unordered_map<std::string, RelationId> relation_ids_;
    std::size_t base_relations_ = 0;
    bool augmented_ = false;
};

// Twin coordinate-format sparse matrices for a hyper-relational KG. The triple
// matrix has one row per fact with columns (s, o, r, k); the qualifier matrix
// has one row per qualifier pair with columns (qr, qv, k). Qualifier rows of
// the same fact share its index k. Memory is O(#facts + #qualifier pairs).
struct HyperGraph {
    std::vector<EntityId> sub;
    std::vector<EntityId> obj;
    std::vector<RelationId> rel;
    std::vector<std::int64_t> fact;   // k column of the triple matrix

    std::vector<RelationId> qual_rel;
    std::vector<EntityId> qual_val;
    std::vector<std::int64_t> qual_fact;  // k column of the qualifier matrix

    std::size_t num_facts = 0;
    std::size_t num_entities = 0;
    std::size_t num_relations = 0;      // augmented count
    std::size_t num_base_relations = 0;
    std::vector<std::int32_t> qual_count;  // per fact

    EdgeDirection direction_of(std::size_t edge_row) const {
        RelationId r = rel[edge_row];
        if (r < static_cast<RelationId>(num_base_relations)) return EdgeDirection::Outgoing;
        if (r < static_cast<RelationId>(2 * num_base_relations)) return EdgeDirection::Incoming;
        return EdgeDirection::SelfLoop;
    }
};

// Deterministic id assignment in first-occurrence order (per statement:
// subject, relation, object, then qualifier pairs in listed order). A label
// used in both namespaces is a collision error.
Vocabulary build_vocabulary(const std::vector<RawStatement>& statements);

std::vector<Statement> encode_statements(const std::vector<RawStatement>& raw,
                                         const Vocabulary& vocab);
RawStatement decode_statement(const Statement& s, const Vocabulary& vocab);

// For every base fact (s,r,o,Q) appends (o, r^-1, s, Q) with the identical
// qualifier set, then one self-loop fact (v, r^self, v) per entity. Extends
// the vocabulary with |R| inverse relations and one self-loop relation.
// Calling on an already-augmented vocabulary is an error.
std::pair<std::vector<Statement>, Vocabulary> augment_edges(
    const std::vector<Statement>& statements, const Vocabulary& vocab);

HyperGraph to_sparse(const std::vector<Statement>& statements, const Vocabulary& vocab);
std::vector<Statement> from_sparse(const HyperGraph& graph);

// Integrity check: every qualifier row's k resolves to a triple row and k
// values are unique per fact. Throws GraphError on violation.
void validate_graph(const HyperGraph& graph);

}  // namespace stare
