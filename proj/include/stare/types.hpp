#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace stare {

// Dense 0-based indices into a Vocabulary. Entity and relation ids live in
// disjoint namespaces.
using EntityId = std::int32_t;
using RelationId = std::int32_t;

// One hyper-relational fact: a main triple plus any number of qualifier
// (relation, value) pairs. Qualifier order is preserved as parsed; canonical
// ordering is applied only where an operation demands it.
struct Statement {
    EntityId subject = 0;
    RelationId relation = 0;
    EntityId object = 0;
    std::vector<std::pair<RelationId, EntityId>> qualifiers;

    bool operator==(const Statement& other) const = default;
};

// Label form of a statement, the unit of the dataset pipeline (files carry
// labels, not ids).
struct RawStatement {
    std::string subject;
    std::string relation;
    std::string object;
    std::vector<std::pair<std::string, std::string>> qualifiers;

    bool operator==(const RawStatement& other) const = default;
};

enum class EdgeDirection { Outgoing, Incoming, SelfLoop };

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Line-level statement file error.
struct ParseError : Error {
    std::size_t line;
    ParseError(std::size_t line_no, const std::string& msg)
        : Error("line " + std::to_string(line_no) + ": " + msg), line(line_no) {}
};

// Namespace collisions, unknown labels.
struct VocabError : Error {
    using Error::Error;
};

// Structural violations: double augmentation, dangling fact index.
struct GraphError : Error {
    using Error::Error;
};

// Dimension mismatches in numeric kernels.
struct ShapeError : Error {
    using Error::Error;
};

// Bad run configuration; carries the offending key.
struct ConfigError : Error {
    std::string key;
    ConfigError(std::string bad_key, const std::string& msg)
        : Error(msg), key(std::move(bad_key)) {}
};

}  // namespace stare
