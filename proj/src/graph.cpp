#include "stare/graph.hpp"

#include <algorithm>
#include <unordered_set>

namespace stare {

EntityId Vocabulary::entity_id(const std::string& label) const {
    auto it = entity_ids_.find(label);
    if (it == entity_ids_.end()) throw VocabError("unknown entity label: " + label);
    return it->second;
}

RelationId Vocabulary::relation_id(const std::string& label) const {
    auto it = relation_ids_.find(label);
    if (it == relation_ids_.end()) throw VocabError("unknown relation label: " + label);
    return it->second;
}

const std::string& Vocabulary::entity_label(EntityId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= entity_labels_.size())
        throw VocabError("entity id out of range: " + std::to_string(id));
    return entity_labels_[static_cast<std::size_t>(id)];
}

const std::string& Vocabulary::relation_label(RelationId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= relation_labels_.size())
        throw VocabError("relation id out of range: " + std::to_string(id));
    return relation_labels_[static_cast<std::size_t>(id)];
}

RelationId Vocabulary::inverse_relation(RelationId r) const {
    if (!augmented_) throw GraphError("inverse_relation requires an augmented vocabulary");
    auto base = static_cast<RelationId>(base_relations_);
    if (r < base) return r + base;
    if (r < 2 * base) return r - base;
    throw GraphError("self-loop relation has no inverse");
}

RelationId Vocabulary::self_loop_relation() const {
    if (!augmented_) throw GraphError("self_loop_relation requires an augmented vocabulary");
    return static_cast<RelationId>(2 * base_relations_);
}

EdgeDirection Vocabulary::direction_of(RelationId r) const {
    if (!augmented_) throw GraphError("direction_of requires an augmented vocabulary");
    auto base = static_cast<RelationId>(base_relations_);
    if (r < base) return EdgeDirection::Outgoing;
    if (r < 2 * base) return EdgeDirection::Incoming;
    return EdgeDirection::SelfLoop;
}

EntityId Vocabulary::intern_entity(const std::string& label) {
    auto it = entity_ids_.find(label);
    if (it != entity_ids_.end()) return it->second;
    if (relation_ids_.count(label))
        throw VocabError("namespace collision: '" + label + "' used as both entity and relation");
    auto id = static_cast<EntityId>(entity_labels_.size());
    entity_labels_.push_back(label);
    entity_ids_.emplace(label, id);
    return id;
}

RelationId Vocabulary::intern_relation(const std::string& label) {
    auto it = relation_ids_.find(label);
    if (it != relation_ids_.end()) return it->second;
    if (entity_ids_.count(label))
        throw VocabError("namespace collision: '" + label + "' used as both entity and relation");
    auto id = static_cast<RelationId>(relation_labels_.size());
    relation_labels_.push_back(label);
    relation_ids_.emplace(label, id);
    return id;
}

void Vocabulary::mark_augmented(std::size_t base_relations) {
    base_relations_ = base_relations;
    augmented_ = true;
}

Vocabulary build_vocabulary(const std::vector<RawStatement>& statements) {
    Vocabulary vocab;
    for (const auto& s : statements) {
        vocab.intern_entity(s.subject);
        vocab.intern_relation(s.relation);
        vocab.intern_entity(s.object);
        for (const auto& [qr, qv] : s.qualifiers) {
            vocab.intern_relation(qr);
            vocab.intern_entity(qv);
        }
    }
    return vocab;
}

std::vector<Statement> encode_statements(const std::vector<RawStatement>& raw,
                                         const Vocabulary& vocab) {
    std::vector<Statement> out;
    out.reserve(raw.size());
    for (const auto& s : raw) {
        Statement st;
        st.subject = vocab.entity_id(s.subject);
        st.relation = vocab.relation_id(s.relation);
        st.object = vocab.entity_id(s.object);
        st.qualifiers.reserve(s.qualifiers.size());
        for (const auto& [qr, qv] : s.qualifiers)
            st.qualifiers.emplace_back(vocab.relation_id(qr), vocab.entity_id(qv));
        out.push_back(std::move(st));
    }
    return out;
}

RawStatement decode_statement(const Statement& s, const Vocabulary& vocab) {
    RawStatement out;
    out.subject = vocab.entity_label(s.subject);
    out.relation = vocab.relation_label(s.relation);
    out.object = vocab.entity_label(s.object);
    for (const auto& [qr, qv] : s.qualifiers)
        out.qualifiers.emplace_back(vocab.relation_label(qr), vocab.entity_label(qv));
    return out;
}

std::pair<std::vector<Statement>, Vocabulary> augment_edges(
    const std::vector<Statement>& statements, const Vocabulary& vocab) {
    if (vocab.augmented())
        throw GraphError("augment_edges called on an already-augmented graph");

    Vocabulary out_vocab = vocab;
    const std::size_t n_base = vocab.num_relations();
    for (std::size_t r = 0; r < n_base; ++r)
        out_vocab.intern_relation(vocab.relation_label(static_cast<RelationId>(r)) + "__inv");
    out_vocab.intern_relation("__self");
    out_vocab.mark_augmented(n_base);

    std::vector<Statement> out;
    out.reserve(2 * statements.size() + vocab.num_entities());
    for (const auto& s : statements) out.push_back(s);
    // Inverse facts retain the same qualifier set as the original fact.
    for (const auto& s : statements) {
        Statement inv;
        inv.subject = s.object;
        inv.relation = s.relation + static_cast<RelationId>(n_base);
        inv.object = s.subject;
        inv.qualifiers = s.qualifiers;
        out.push_back(std::move(inv));
    }
    const auto self_rel = out_vocab.self_loop_relation();
    for (std::size_t v = 0; v < vocab.num_entities(); ++v) {
        Statement loop;
        loop.subject = static_cast<EntityId>(v);
        loop.relation = self_rel;
        loop.object = static_cast<EntityId>(v);
        out.push_back(std::move(loop));
    }
    return {std::move(out), std::move(out_vocab)};
}

HyperGraph to_sparse(const std::vector<Statement>& statements, const Vocabulary& vocab) {
    HyperGraph g;
    g.num_facts = statements.size();
    g.num_entities = vocab.num_entities();
    g.num_relations = vocab.num_relations();
    g.num_base_relations = vocab.augmented() ? vocab.num_base_relations() : vocab.num_relations();
    g.sub.reserve(statements.size());
    g.obj.reserve(statements.size());
    g.rel.reserve(statements.size());
    g.fact.reserve(statements.size());
    g.qual_count.assign(statements.size(), 0);
    for (std::size_t k = 0; k < statements.size(); ++k) {
        const auto& s = statements[k];
        g.sub.push_back(s.subject);
        g.obj.push_back(s.object);
        g.rel.push_back(s.relation);
        g.fact.push_back(static_cast<std::int64_t>(k));
        for (const auto& [qr, qv] : s.qualifiers) {
            g.qual_rel.push_back(qr);
            g.qual_val.push_back(qv);
            g.qual_fact.push_back(static_cast<std::int64_t>(k));
        }
        g.qual_count[k] = static_cast<std::int32_t>(s.qualifiers.size());
    }
    validate_graph(g);
    return g;
}

std::vector<Statement> from_sparse(const HyperGraph& graph) {
    validate_graph(graph);
    std::vector<Statement> out(graph.num_facts);
    for (std::size_t i = 0; i < graph.num_facts; ++i) {
        auto k = static_cast<std::size_t>(graph.fact[i]);
        out[k].subject = graph.sub[i];
        out[k].object = graph.obj[i];
        out[k].relation = graph.rel[i];
    }
    for (std::size_t q = 0; q < graph.qual_rel.size(); ++q) {
        auto k = static_cast<std::size_t>(graph.qual_fact[q]);
        out[k].qualifiers.emplace_back(graph.qual_rel[q], graph.qual_val[q]);
    }
    return out;
}

void validate_graph(const HyperGraph& graph) {
    if (graph.sub.size() != graph.num_facts || graph.obj.size() != graph.num_facts ||
        graph.rel.size() != graph.num_facts || graph.fact.size() != graph.num_facts)
        throw GraphError("triple matrix column lengths disagree with fact count");
    std::unordered_set<std::int64_t> seen;
    seen.reserve(graph.num_facts);
    for (auto k : graph.fact) {
        if (k < 0 || static_cast<std::size_t>(k) >= graph.num_facts)
            throw GraphError("fact index out of range in triple matrix");
        if (!seen.insert(k).second)
            throw GraphError("duplicate fact index in triple matrix");
    }
    if (graph.qual_rel.size() != graph.qual_val.size() ||
        graph.qual_rel.size() != graph.qual_fact.size())
        throw GraphError("qualifier matrix column lengths disagree");
    for (auto k : graph.qual_fact)
        if (k < 0 || !seen.count(k))
            throw GraphError("dangling fact index in qualifier matrix");
}

}  // namespace stare
