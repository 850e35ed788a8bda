#pragma once
// EFO-1 query representation. A query is a disjunction of conjunctive query
// graphs; graph nodes are constants / existential variables / the single
// free variable, and each edge is a (relation, negated, direction) atom.
//
// The textual DSL accepted by parse_query:
//   atom     := [!] relation '(' term ',' term ')'
//   term     := entity-name | x<digits> | y
//   formula  := atom | '(' formula ')' | '!' formula
//             | formula '&' formula | formula '|' formula   (& binds tighter)
// Negation is only supported directly on atoms; dnf_decompose rejects it on
// compound subformulas.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "clmpt/kg.hpp"

namespace clmpt {

enum class NodeKind { Constant, Existential, Free };

struct TermNode {
    int32_t node_id = 0;
    NodeKind kind = NodeKind::Free;
    EntityId entity = -1;  // only meaningful for constants
};

struct AtomEdge {
    RelationId relation = -1;
    bool negated = false;
    int32_t head_node = -1;
    int32_t tail_node = -1;

    bool operator==(const AtomEdge&) const = default;
};

struct ConjunctiveQueryGraph {
    std::vector<TermNode> nodes;
    std::vector<AtomEdge> edges;

    int32_t free_node() const;
    // Enforces: node ids dense, connected, exactly one free node, at least
    // one constant, no self-loops, edge endpoints in range.
    void validate(int64_t entity_count = -1, int64_t relation_count = -1) const;
};

struct EFO1Query {
    std::vector<ConjunctiveQueryGraph> disjuncts;

    void validate(int64_t entity_count = -1, int64_t relation_count = -1) const;
};

// ---- formula AST (parser / DNF intermediate form) ----

struct FormulaTerm {
    bool is_constant = false;
    EntityId entity = -1;      // when constant
    std::string variable;      // "y" or "x<k>" otherwise

    bool operator==(const FormulaTerm&) const = default;
};

struct FormulaAtom {
    RelationId relation = -1;
    bool negated = false;
    FormulaTerm lhs;  // head position
    FormulaTerm rhs;  // tail position
};

struct Formula {
    enum class Op { Atom, And, Or, Not };
    Op op = Op::Atom;
    FormulaAtom atom;                  // when op == Atom
    std::shared_ptr<Formula> left;     // And/Or children, Not child in `left`
    std::shared_ptr<Formula> right;

    static std::shared_ptr<Formula> make_atom(FormulaAtom a);
    static std::shared_ptr<Formula> make_and(std::shared_ptr<Formula> l, std::shared_ptr<Formula> r);
    static std::shared_ptr<Formula> make_or(std::shared_ptr<Formula> l, std::shared_ptr<Formula> r);
    static std::shared_ptr<Formula> make_not(std::shared_ptr<Formula> c);
};

// Parses DSL text against the vocabularies, decomposes into DNF, and builds
// one validated query graph per disjunct.
EFO1Query parse_query(const std::string& text, const Vocabulary& entity_vocab,
                      const Vocabulary& relation_vocab);

std::shared_ptr<Formula> parse_formula(const std::string& text, const Vocabulary& entity_vocab,
                                       const Vocabulary& relation_vocab);

// Exhaustive distribution of conjunction over disjunction; negation must be
// atomic. Each output conjunction becomes one query graph.
std::vector<std::vector<FormulaAtom>> dnf_decompose(const Formula& formula);

EFO1Query query_from_formula(const Formula& formula, int64_t entity_count,
                             int64_t relation_count);

// Max over constant nodes of the undirected shortest-path distance to the
// free node; the message-passing depth L.
int free_variable_depth(const ConjunctiveQueryGraph& cq);

// The canonical benchmark query shapes.
inline const std::vector<std::string>& canonical_shapes() {
    static const std::vector<std::string> shapes = {
        "1p", "2p", "3p", "2i", "3i", "pi", "ip", "2u", "up",
        "2in", "3in", "inp", "pin", "pni"};
    return shapes;
}
inline const std::vector<std::string>& train_shapes() {
    static const std::vector<std::string> shapes = {
        "1p", "2p", "3p", "2i", "3i", "2in", "3in", "inp", "pin", "pni"};
    return shapes;
}

struct ShapeBindings {
    std::vector<EntityId> constants;
    std::vector<RelationId> relations;
};

// Number of constants / relations each shape consumes.
std::pair<int, int> shape_arity(const std::string& shape);

EFO1Query instantiate_shape(const std::string& shape, const ShapeBindings& bindings);

// Pretty-prints a query back into the DSL (inverse of parse_query up to
// node renumbering and variable naming).
std::string render_query(const EFO1Query& query, const Vocabulary& entity_vocab,
                         const Vocabulary& relation_vocab);

// ---- JSONL (de)serialization; answer fields live in oracle.hpp's QueryInstance ----

std::string query_to_json(const EFO1Query& query, const std::optional<std::string>& shape,
                          const std::vector<EntityId>& easy_answers,
                          const std::vector<EntityId>& hard_answers);

struct ParsedInstanceJson {
    EFO1Query query;
    std::optional<std::string> shape;
    std::vector<EntityId> easy_answers;
    std::vector<EntityId> hard_answers;
};

ParsedInstanceJson query_from_json(const std::string& json_line);

} // namespace clmpt
