#pragma once

#include "ilysa/ast.hpp"

#include <functional>

namespace ilysa {

enum class SymbolKind { sensor, value, function, encryption, key };

// Terminal symbol of the ranked alphabet. Nonterminals are in bijection with symbols,
// so the same type names both.
struct Symbol {
    SymbolKind kind = SymbolKind::value;
    Label label;       // node that produced the datum (empty for keys)
    std::string name;  // literal text, function name or key name
    int index = 0;     // sensor id, function arity or encryption arity

    auto operator<=>(const Symbol&) const = default;

    int arity() const;
};

Symbol sensor_symbol(const Label& l, int i);
Symbol value_symbol(const Label& l, const Literal& v);
Symbol function_symbol(const Label& l, const Ident& f, int arity);
Symbol encryption_symbol(const Label& l, int arity);
Symbol key_symbol(const Ident& k);

// Compact textual forms: 1^cp, =car^p1, noiseRed/1^cp, enc/1^cp, key:k.
std::string terminal_text(const Symbol& s);
// Nonterminal form used in serialized grammars: the terminal text in brackets.
std::string nonterminal_text(const Symbol& s);
// Capitalised form for reports: I1^cp, V[car]^p1, NoiseRed^cp, Enc1^cp, K[k].
std::string display_name(const Symbol& s);
Symbol parse_terminal(const std::string& text);
Symbol parse_nonterminal(const std::string& text);

std::size_t hash_value(const Symbol& s);

// A -> t where t has depth one. The head is the nonterminal paired with `root`.
struct Production {
    Symbol root;
    std::vector<Symbol> children;

    auto operator<=>(const Production&) const = default;
};

std::string to_string(const Production& p);

// (Z, R): start nonterminal plus the productions reachable from it.
struct AbstractValue {
    Symbol start;
    std::vector<Production> rules;  // sorted, unique, all reachable from start

    auto operator<=>(const AbstractValue&) const = default;
};

std::size_t hash_value(const AbstractValue& v);
std::string to_string(const AbstractValue& v);

struct AbstractValueHash {
    std::size_t operator()(const AbstractValue& v) const { return hash_value(v); }
};

// ---- provenance trees ----

struct ProvNode;
using ProvTree = std::shared_ptr<const ProvNode>;

struct ProvNode {
    Symbol sym;
    std::vector<ProvTree> children;
    std::size_t hash = 0;
};

ProvTree make_tree(Symbol sym, std::vector<ProvTree> children = {});
bool tree_equal(const ProvTree& a, const ProvTree& b);
std::string to_string(const ProvTree& t);
std::size_t tree_depth(const ProvTree& t);

// ---- construction (the term rules of the analysis) ----

AbstractValue sensor_value(const Label& l, int i);
AbstractValue literal_value(const Label& l, const Literal& v);
AbstractValue function_value(const Label& l, const Ident& f, const std::vector<const AbstractValue*>& args);
AbstractValue encryption_value(const Label& l, const std::vector<const AbstractValue*>& args, const Ident& key);

// Builds a value from an arbitrary production set, keeping only what is reachable from start.
AbstractValue make_value(const Symbol& start, std::vector<Production> rules);

// ---- grammar operations ----

std::vector<Production> reachable_productions(const Symbol& start, const std::vector<Production>& table);
bool lang_member(const ProvTree& t, const AbstractValue& g);
std::vector<std::vector<AbstractValue>> extract_decryption(const AbstractValue& g, const Ident& key);

// Trees of depth <= max_depth derivable from g, at most `limit` of them, in a stable order.
std::vector<ProvTree> sample_language(const AbstractValue& g, std::size_t max_depth, std::size_t limit);
// A minimum-depth tree of Lang(g), or nullptr when the language is empty.
ProvTree shortest_tree(const AbstractValue& g);

// ---- tagging ----

enum class Tag { public_, secret, open, confined };
std::string to_string(Tag t);

enum class SchemeKind { secrecy, confinement, constant };

struct TaggingScheme {
    SchemeKind kind = SchemeKind::constant;
    std::set<SensorRef> classified;   // secret sensors for secrecy, confined sensors for confinement
    std::set<Ident> anonymisers;      // confinement only; "enc" also cuts encryptions

    static TaggingScheme secrecy(std::set<SensorRef> secret);
    static TaggingScheme confinement(std::set<SensorRef> confined, std::set<Ident> anonymisers);
    static TaggingScheme constant();
};

// Tree-level tagging (the dynamic side).
Tag tree_tag(const ProvTree& t, const TaggingScheme& scheme);
// Grammar-level tagging (the static side), decided by reachability.
Tag apply_tagging(const AbstractValue& g, const TaggingScheme& scheme);

using TreeTagger = std::function<Tag(const ProvTree&)>;

// True iff every sample lies in Lang(g) and carries the grammar's tag.
bool tagging_agreement_check(const TaggingScheme& scheme, const AbstractValue& g, const std::vector<ProvTree>& samples);
bool tagging_agreement_check(const TreeTagger& tree_tagger, Tag grammar_tag, const AbstractValue& g,
                             const std::vector<ProvTree>& samples);

// Does some tree of Lang(g) have the leaf `leaf`? Decided on the grammar.
bool derives_leaf(const AbstractValue& g, const Symbol& leaf);

}  // namespace ilysa

template <>
struct std::hash<ilysa::Symbol> {
    std::size_t operator()(const ilysa::Symbol& s) const { return ilysa::hash_value(s); }
};
