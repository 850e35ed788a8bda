#include "clmpt/query.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "clmpt/error.hpp"

namespace clmpt {

using json = nlohmann::json;

// ---------------------------------------------------------------- graphs

int32_t ConjunctiveQueryGraph::free_node() const {
    for (const TermNode& n : nodes)
        if (n.kind == NodeKind::Free) return n.node_id;
    throw Error::validation("conjunctive graph has no free node");
}

void ConjunctiveQueryGraph::validate(int64_t entity_count, int64_t relation_count) const {
    if (nodes.empty()) throw Error::validation("empty conjunctive graph");
    int frees = 0, constants = 0;
    for (size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].node_id != static_cast<int32_t>(i))
            throw Error::validation("node ids must be dense 0..n-1");
        if (nodes[i].kind == NodeKind::Free) ++frees;
        if (nodes[i].kind == NodeKind::Constant) {
            ++constants;
            if (nodes[i].entity < 0 ||
                (entity_count >= 0 && nodes[i].entity >= entity_count))
                throw Error::validation("constant node carries an invalid entity id");
        }
    }
    if (frees != 1)
        throw Error::validation("conjunctive graph must have exactly one free node, found " +
                                std::to_string(frees));
    if (constants == 0)
        throw Error::validation("conjunctive graph must have at least one constant node");
    if (edges.empty()) throw Error::validation("conjunctive graph has no edges");

    const int32_t n = static_cast<int32_t>(nodes.size());
    for (const AtomEdge& e : edges) {
        if (e.head_node < 0 || e.head_node >= n || e.tail_node < 0 || e.tail_node >= n)
            throw Error::validation("edge references a missing node");
        if (e.head_node == e.tail_node)
            throw Error::validation("self-loop atoms are not allowed");
        if (e.relation < 0 || (relation_count >= 0 && e.relation >= relation_count))
            throw Error::validation("edge carries an invalid relation id");
        const NodeKind hk = nodes[e.head_node].kind;
        const NodeKind tk = nodes[e.tail_node].kind;
        if (hk == NodeKind::Constant && tk == NodeKind::Constant)
            throw Error::validation("atom must reference at least one variable");
    }

    // Connectivity over the undirected view.
    std::vector<char> seen(nodes.size(), 0);
    std::deque<int32_t> frontier{0};
    seen[0] = 1;
    size_t reached = 1;
    while (!frontier.empty()) {
        const int32_t u = frontier.front();
        frontier.pop_front();
        for (const AtomEdge& e : edges) {
            const int32_t other = e.head_node == u ? e.tail_node : e.tail_node == u ? e.head_node : -1;
            if (other >= 0 && !seen[other]) {
                seen[other] = 1;
                ++reached;
                frontier.push_back(other);
            }
        }
    }
    if (reached != nodes.size())
        throw Error::validation("disconnected disjunct: every node must connect to the query graph");
}

void EFO1Query::validate(int64_t entity_count, int64_t relation_count) const {
    if (disjuncts.empty()) throw Error::validation("query has no disjuncts");
    for (const auto& cq : disjuncts) cq.validate(entity_count, relation_count);
}

// ---------------------------------------------------------------- formula

std::shared_ptr<Formula> Formula::make_atom(FormulaAtom a) {
    auto f = std::make_shared<Formula>();
    f->op = Op::Atom;
    f->atom = std::move(a);
    return f;
}
std::shared_ptr<Formula> Formula::make_and(std::shared_ptr<Formula> l, std::shared_ptr<Formula> r) {
    auto f = std::make_shared<Formula>();
    f->op = Op::And;
    f->left = std::move(l);
    f->right = std::move(r);
    return f;
}
std::shared_ptr<Formula> Formula::make_or(std::shared_ptr<Formula> l, std::shared_ptr<Formula> r) {
    auto f = std::make_shared<Formula>();
    f->op = Op::Or;
    f->left = std::move(l);
    f->right = std::move(r);
    return f;
}
std::shared_ptr<Formula> Formula::make_not(std::shared_ptr<Formula> c) {
    auto f = std::make_shared<Formula>();
    f->op = Op::Not;
    f->left = std::move(c);
    return f;
}

// ---------------------------------------------------------------- parser

namespace {

struct Lexer {
    const std::string& text;
    size_t pos = 0;

    explicit Lexer(const std::string& t) : text(t) {}

    void skip_ws() {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    }

    bool eat(char c) {
        skip_ws();
        if (pos < text.size() && text[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }

    char peek() {
        skip_ws();
        return pos < text.size() ? text[pos] : '\0';
    }

    // Identifiers: anything up to a delimiter; entity/relation names may
    // contain dots, dashes, slashes etc. (FB-style names).
    std::string identifier() {
        skip_ws();
        const size_t start = pos;
        while (pos < text.size()) {
            const char c = text[pos];
            if (c == '(' || c == ')' || c == ',' || c == '&' || c == '|' || c == '!' ||
                std::isspace(static_cast<unsigned char>(c)))
                break;
            ++pos;
        }
        if (pos == start)
            throw Error::parse("expected identifier at position " + std::to_string(start));
        return text.substr(start, pos - start);
    }
};

bool is_variable_name(const std::string& s) {
    if (s == "y") return true;
    if (s.size() < 2 || s[0] != 'x') return false;
    return std::all_of(s.begin() + 1, s.end(),
                       [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

struct Parser {
    Lexer lex;
    const Vocabulary& entities;
    const Vocabulary& relations;

    Parser(const std::string& text, const Vocabulary& e, const Vocabulary& r)
        : lex(text), entities(e), relations(r) {}

    FormulaTerm term() {
        const std::string name = lex.identifier();
        FormulaTerm t;
        if (is_variable_name(name)) {
            t.variable = name;
        } else {
            const int64_t id = entities.find(name);
            if (id < 0) throw Error::parse("unknown entity name: " + name);
            t.is_constant = true;
            t.entity = static_cast<EntityId>(id);
        }
        return t;
    }

    std::shared_ptr<Formula> atom_body(bool negated) {
        const std::string rel_name = lex.identifier();
        const int64_t rel = relations.find(rel_name);
        if (rel < 0) throw Error::parse("unknown relation name: " + rel_name);
        if (!lex.eat('(')) throw Error::parse("expected '(' after relation " + rel_name);
        FormulaAtom a;
        a.relation = static_cast<RelationId>(rel);
        a.negated = negated;
        a.lhs = term();
        if (!lex.eat(',')) throw Error::parse("expected ',' in atom " + rel_name + "(...)");
        a.rhs = term();
        if (!lex.eat(')')) throw Error::parse("expected ')' closing atom " + rel_name + "(...)");
        if (a.lhs == a.rhs)
            throw Error::parse("atom " + rel_name + " uses the same term as head and tail");
        return Formula::make_atom(std::move(a));
    }

    std::shared_ptr<Formula> primary() {
        if (lex.eat('!')) {
            if (lex.eat('(')) {
                auto inner = disjunction();
                if (!lex.eat(')')) throw Error::parse("expected ')' after negated group");
                return Formula::make_not(std::move(inner));
            }
            return atom_body(true);
        }
        if (lex.eat('(')) {
            auto inner = disjunction();
            if (!lex.eat(')')) throw Error::parse("expected ')'");
            return inner;
        }
        return atom_body(false);
    }

    std::shared_ptr<Formula> conjunction() {
        auto left = primary();
        while (lex.peek() == '&') {
            lex.eat('&');
            left = Formula::make_and(std::move(left), primary());
        }
        return left;
    }

    std::shared_ptr<Formula> disjunction() {
        auto left = conjunction();
        while (lex.peek() == '|') {
            lex.eat('|');
            left = Formula::make_or(std::move(left), conjunction());
        }
        return left;
    }

    std::shared_ptr<Formula> parse() {
        auto f = disjunction();
        lex.skip_ws();
        if (lex.pos != lex.text.size())
            throw Error::parse("trailing input at position " + std::to_string(lex.pos));
        return f;
    }
};

} // namespace

std::shared_ptr<Formula> parse_formula(const std::string& text, const Vocabulary& entity_vocab,
                                       const Vocabulary& relation_vocab) {
    Parser p(text, entity_vocab, relation_vocab);
    return p.parse();
}

// ---------------------------------------------------------------- DNF

std::vector<std::vector<FormulaAtom>> dnf_decompose(const Formula& formula) {
    switch (formula.op) {
        case Formula::Op::Atom:
            return {{formula.atom}};
        case Formula::Op::Not: {
            if (!formula.left || formula.left->op != Formula::Op::Atom)
                throw Error::validation(
                    "unsupported formula: negation must apply directly to an atom");
            FormulaAtom a = formula.left->atom;
            a.negated = !a.negated;
            return {{std::move(a)}};
        }
        case Formula::Op::Or: {
            auto out = dnf_decompose(*formula.left);
            auto rhs = dnf_decompose(*formula.right);
            out.insert(out.end(), std::make_move_iterator(rhs.begin()),
                       std::make_move_iterator(rhs.end()));
            return out;
        }
        case Formula::Op::And: {
            const auto lhs = dnf_decompose(*formula.left);
            const auto rhs = dnf_decompose(*formula.right);
            std::vector<std::vector<FormulaAtom>> out;
            out.reserve(lhs.size() * rhs.size());
            for (const auto& l : lhs)
                for (const auto& r : rhs) {
                    std::vector<FormulaAtom> both = l;
                    both.insert(both.end(), r.begin(), r.end());
                    out.push_back(std::move(both));
                }
            return out;
        }
    }
    throw Error::contract("unreachable formula op");
}

namespace {

// One graph per conjunction; nodes numbered in first-appearance order.
// Variable names are scoped to the disjunct, constants dedup by entity id.
ConjunctiveQueryGraph graph_from_conjunction(const std::vector<FormulaAtom>& atoms) {
    ConjunctiveQueryGraph cq;
    std::map<std::string, int32_t> var_node;
    std::map<EntityId, int32_t> const_node;

    auto node_for = [&](const FormulaTerm& t) -> int32_t {
        if (t.is_constant) {
            auto it = const_node.find(t.entity);
            if (it != const_node.end()) return it->second;
            const int32_t id = static_cast<int32_t>(cq.nodes.size());
            cq.nodes.push_back({id, NodeKind::Constant, t.entity});
            const_node.emplace(t.entity, id);
            return id;
        }
        auto it = var_node.find(t.variable);
        if (it != var_node.end()) return it->second;
        const int32_t id = static_cast<int32_t>(cq.nodes.size());
        cq.nodes.push_back({id, t.variable == "y" ? NodeKind::Free : NodeKind::Existential, -1});
        var_node.emplace(t.variable, id);
        return id;
    };

    for (const FormulaAtom& a : atoms) {
        AtomEdge e;
        e.relation = a.relation;
        e.negated = a.negated;
        e.head_node = node_for(a.lhs);
        e.tail_node = node_for(a.rhs);
        cq.edges.push_back(e);
    }
    return cq;
}

} // namespace

EFO1Query query_from_formula(const Formula& formula, int64_t entity_count,
                             int64_t relation_count) {
    EFO1Query q;
    for (const auto& conjunction : dnf_decompose(formula))
        q.disjuncts.push_back(graph_from_conjunction(conjunction));
    q.validate(entity_count, relation_count);
    return q;
}

EFO1Query parse_query(const std::string& text, const Vocabulary& entity_vocab,
                      const Vocabulary& relation_vocab) {
    const auto formula = parse_formula(text, entity_vocab, relation_vocab);
    return query_from_formula(*formula, entity_vocab.size(), relation_vocab.size());
}

// ---------------------------------------------------------------- depth

int free_variable_depth(const ConjunctiveQueryGraph& cq) {
    cq.validate();
    const int32_t start = cq.free_node();
    std::vector<int> dist(cq.nodes.size(), -1);
    std::deque<int32_t> frontier{start};
    dist[start] = 0;
    while (!frontier.empty()) {
        const int32_t u = frontier.front();
        frontier.pop_front();
        for (const AtomEdge& e : cq.edges) {
            const int32_t other = e.head_node == u ? e.tail_node : e.tail_node == u ? e.head_node : -1;
            if (other >= 0 && dist[other] < 0) {
                dist[other] = dist[u] + 1;
                frontier.push_back(other);
            }
        }
    }
    int depth = 0;
    for (const TermNode& n : cq.nodes) {
        if (n.kind != NodeKind::Constant) continue;
        if (dist[n.node_id] < 0)
            throw Error::validation("constant node cannot reach the free variable");
        depth = std::max(depth, dist[n.node_id]);
    }
    return depth;
}

// ---------------------------------------------------------------- shapes

std::pair<int, int> shape_arity(const std::string& shape) {
    if (shape == "1p") return {1, 1};
    if (shape == "2p") return {1, 2};
    if (shape == "3p") return {1, 3};
    if (shape == "2i") return {2, 2};
    if (shape == "3i") return {3, 3};
    if (shape == "pi") return {2, 3};
    if (shape == "ip") return {2, 3};
    if (shape == "2u") return {2, 2};
    if (shape == "up") return {2, 3};
    if (shape == "2in") return {2, 2};
    if (shape == "3in") return {3, 3};
    if (shape == "inp") return {2, 3};
    if (shape == "pin") return {2, 3};
    if (shape == "pni") return {2, 3};
    throw Error::config("unknown query shape: " + shape);
}

EFO1Query instantiate_shape(const std::string& shape, const ShapeBindings& bindings) {
    const auto [n_const, n_rel] = shape_arity(shape);
    if (static_cast<int>(bindings.constants.size()) != n_const ||
        static_cast<int>(bindings.relations.size()) != n_rel)
        throw Error::config("shape " + shape + " needs " + std::to_string(n_const) +
                            " constants and " + std::to_string(n_rel) + " relations");

    const auto& c = bindings.constants;
    const auto& r = bindings.relations;

    auto cterm = [&](int i) {
        FormulaTerm t;
        t.is_constant = true;
        t.entity = c[static_cast<size_t>(i)];
        return t;
    };
    auto vterm = [](const std::string& name) {
        FormulaTerm t;
        t.variable = name;
        return t;
    };
    auto atom = [&](int rel, const FormulaTerm& a, const FormulaTerm& b, bool neg = false) {
        FormulaAtom fa;
        fa.relation = r[static_cast<size_t>(rel)];
        fa.negated = neg;
        fa.lhs = a;
        fa.rhs = b;
        return Formula::make_atom(std::move(fa));
    };
    const auto y = vterm("y");
    const auto x1 = vterm("x1");
    const auto x2 = vterm("x2");
    auto conj = Formula::make_and;
    auto disj = Formula::make_or;

    std::shared_ptr<Formula> f;
    if (shape == "1p") {
        f = atom(0, cterm(0), y);
    } else if (shape == "2p") {
        f = conj(atom(0, cterm(0), x1), atom(1, x1, y));
    } else if (shape == "3p") {
        f = conj(conj(atom(0, cterm(0), x1), atom(1, x1, x2)), atom(2, x2, y));
    } else if (shape == "2i") {
        f = conj(atom(0, cterm(0), y), atom(1, cterm(1), y));
    } else if (shape == "3i") {
        f = conj(conj(atom(0, cterm(0), y), atom(1, cterm(1), y)), atom(2, cterm(2), y));
    } else if (shape == "pi") {
        f = conj(conj(atom(0, cterm(0), x1), atom(1, x1, y)), atom(2, cterm(1), y));
    } else if (shape == "ip") {
        f = conj(conj(atom(0, cterm(0), x1), atom(1, cterm(1), x1)), atom(2, x1, y));
    } else if (shape == "2u") {
        f = disj(atom(0, cterm(0), y), atom(1, cterm(1), y));
    } else if (shape == "up") {
        f = conj(disj(atom(0, cterm(0), x1), atom(1, cterm(1), x1)), atom(2, x1, y));
    } else if (shape == "2in") {
        f = conj(atom(0, cterm(0), y), atom(1, cterm(1), y, true));
    } else if (shape == "3in") {
        f = conj(conj(atom(0, cterm(0), y), atom(1, cterm(1), y)), atom(2, cterm(2), y, true));
    } else if (shape == "inp") {
        f = conj(conj(atom(0, cterm(0), x1), atom(1, cterm(1), x1, true)), atom(2, x1, y));
    } else if (shape == "pin") {
        f = conj(conj(atom(0, cterm(0), x1), atom(1, x1, y)), atom(2, cterm(1), y, true));
    } else if (shape == "pni") {
        f = conj(conj(atom(0, cterm(0), x1), atom(1, x1, y, true)), atom(2, cterm(1), y));
    } else {
        throw Error::config("unknown query shape: " + shape);
    }
    return query_from_formula(*f, -1, -1);
}

// ---------------------------------------------------------------- render

std::string render_query(const EFO1Query& query, const Vocabulary& entity_vocab,
                         const Vocabulary& relation_vocab) {
    std::ostringstream out;
    for (size_t d = 0; d < query.disjuncts.size(); ++d) {
        if (d) out << " | ";
        const auto& cq = query.disjuncts[d];
        // Existential variables numbered per disjunct in node-id order.
        std::map<int32_t, std::string> var_names;
        int next_var = 1;
        for (const TermNode& n : cq.nodes) {
            if (n.kind == NodeKind::Existential)
                var_names[n.node_id] = "x" + std::to_string(next_var++);
            else if (n.kind == NodeKind::Free)
                var_names[n.node_id] = "y";
        }
        auto term_text = [&](int32_t node) -> std::string {
            const TermNode& n = cq.nodes[static_cast<size_t>(node)];
            if (n.kind == NodeKind::Constant) return entity_vocab.name(n.entity);
            return var_names.at(node);
        };
        const bool parens = query.disjuncts.size() > 1 && cq.edges.size() > 1;
        if (parens) out << '(';
        for (size_t e = 0; e < cq.edges.size(); ++e) {
            if (e) out << " & ";
            const AtomEdge& edge = cq.edges[e];
            if (edge.negated) out << '!';
            out << relation_vocab.name(edge.relation) << '(' << term_text(edge.head_node)
                << ", " << term_text(edge.tail_node) << ')';
        }
        if (parens) out << ')';
    }
    return out.str();
}

// ---------------------------------------------------------------- JSON

namespace {

const char* kind_name(NodeKind k) {
    switch (k) {
        case NodeKind::Constant: return "constant";
        case NodeKind::Existential: return "existential";
        case NodeKind::Free: return "free";
    }
    return "?";
}

NodeKind kind_from_name(const std::string& s) {
    if (s == "constant") return NodeKind::Constant;
    if (s == "existential") return NodeKind::Existential;
    if (s == "free") return NodeKind::Free;
    throw Error::parse("unknown node kind: " + s);
}

} // namespace

std::string query_to_json(const EFO1Query& query, const std::optional<std::string>& shape,
                          const std::vector<EntityId>& easy_answers,
                          const std::vector<EntityId>& hard_answers) {
    json j;
    if (shape) j["shape"] = *shape;
    j["disjuncts"] = json::array();
    for (const auto& cq : query.disjuncts) {
        json nodes = json::array();
        for (const TermNode& n : cq.nodes) {
            json jn{{"id", n.node_id}, {"kind", kind_name(n.kind)}};
            if (n.kind == NodeKind::Constant) jn["entity"] = n.entity;
            nodes.push_back(std::move(jn));
        }
        json edges = json::array();
        for (const AtomEdge& e : cq.edges)
            edges.push_back({{"relation", e.relation},
                             {"negated", e.negated},
                             {"head", e.head_node},
                             {"tail", e.tail_node}});
        j["disjuncts"].push_back({{"nodes", std::move(nodes)}, {"edges", std::move(edges)}});
    }
    j["easy_answers"] = easy_answers;
    j["hard_answers"] = hard_answers;
    return j.dump();
}

ParsedInstanceJson query_from_json(const std::string& json_line) {
    json j;
    try {
        j = json::parse(json_line);
    } catch (const json::exception& e) {
        throw Error::parse(std::string("bad query JSON: ") + e.what());
    }
    ParsedInstanceJson out;
    if (j.contains("shape")) out.shape = j["shape"].get<std::string>();
    for (const auto& jd : j.at("disjuncts")) {
        ConjunctiveQueryGraph cq;
        for (const auto& jn : jd.at("nodes")) {
            TermNode n;
            n.node_id = jn.at("id").get<int32_t>();
            n.kind = kind_from_name(jn.at("kind").get<std::string>());
            if (n.kind == NodeKind::Constant) n.entity = jn.at("entity").get<EntityId>();
            cq.nodes.push_back(n);
        }
        for (const auto& je : jd.at("edges")) {
            AtomEdge e;
            e.relation = je.at("relation").get<RelationId>();
            e.negated = je.at("negated").get<bool>();
            e.head_node = je.at("head").get<int32_t>();
            e.tail_node = je.at("tail").get<int32_t>();
            cq.edges.push_back(e);
        }
        out.query.disjuncts.push_back(std::move(cq));
    }
    if (j.contains("easy_answers"))
        out.easy_answers = j["easy_answers"].get<std::vector<EntityId>>();
    if (j.contains("hard_answers"))
        out.hard_answers = j["hard_answers"].get<std::vector<EntityId>>();
    out.query.validate();
    return out;
}

} // namespace clmpt
