#include "ilysa/treegram.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <map>
#include <unordered_map>

namespace ilysa {

namespace {

std::size_t mix(std::size_t seed, std::size_t v)
{
    return seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
}

}  // namespace

int Symbol::arity() const
{
    switch (kind) {
    case SymbolKind::function: return index;
    case SymbolKind::encryption: return index + 1;
    default: return 0;
    }
}

Symbol sensor_symbol(const Label& l, int i) { return {SymbolKind::sensor, l, "", i}; }
Symbol value_symbol(const Label& l, const Literal& v) { return {SymbolKind::value, l, literal_text(v), 0}; }
Symbol function_symbol(const Label& l, const Ident& f, int arity) { return {SymbolKind::function, l, f, arity}; }
Symbol encryption_symbol(const Label& l, int arity) { return {SymbolKind::encryption, l, "", arity}; }
Symbol key_symbol(const Ident& k) { return {SymbolKind::key, "", k, 0}; }

std::string terminal_text(const Symbol& s)
{
    switch (s.kind) {
    case SymbolKind::sensor: return std::to_string(s.index) + "^" + s.label;
    case SymbolKind::value: return "=" + s.name + "^" + s.label;
    case SymbolKind::function: return s.name + "/" + std::to_string(s.index) + "^" + s.label;
    case SymbolKind::encryption: return "enc#" + std::to_string(s.index) + "^" + s.label;
    case SymbolKind::key: return "key:" + s.name;
    }
    return "";
}

std::string nonterminal_text(const Symbol& s) { return "[" + terminal_text(s) + "]"; }

std::string display_name(const Symbol& s)
{
    auto cap = [](std::string x) {
        if (!x.empty()) x[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(x[0])));
        return x;
    };
    switch (s.kind) {
    case SymbolKind::sensor: return "I" + std::to_string(s.index) + "^" + s.label;
    case SymbolKind::value:
        if (!s.name.empty() && std::isalpha(static_cast<unsigned char>(s.name[0]))) return cap(s.name) + "^" + s.label;
        return "V[" + s.name + "]^" + s.label;
    case SymbolKind::function: return cap(s.name) + "^" + s.label;
    case SymbolKind::encryption: return "Enc" + std::to_string(s.index) + "^" + s.label;
    case SymbolKind::key: return "K[" + s.name + "]";
    }
    return "";
}

Symbol parse_terminal(const std::string& text)
{
    if (text.rfind("key:", 0) == 0 && text.size() > 4) return key_symbol(text.substr(4));
    auto caret = text.rfind('^');
    if (caret == std::string::npos || caret == 0 || caret + 1 == text.size())
        throw Error("malformed symbol '" + text + "'");
    std::string body = text.substr(0, caret);
    Label label = text.substr(caret + 1);
    auto number = [&](const std::string& digits) {
        if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
            throw Error("malformed symbol '" + text + "'");
        return std::stoi(digits);
    };
    // `=/2^l` is the equality function; no literal prints as `/digits`
    bool eq_fun = body.size() > 2 && body[0] == '=' && body[1] == '/' &&
                  std::all_of(body.begin() + 2, body.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
    if (body[0] == '=' && !eq_fun) return {SymbolKind::value, label, body.substr(1), 0};
    if (body.rfind("enc#", 0) == 0) return encryption_symbol(label, number(body.substr(4)));
    auto slash = body.rfind('/');
    if (slash != std::string::npos) return function_symbol(label, body.substr(0, slash), number(body.substr(slash + 1)));
    return sensor_symbol(label, number(body));
}

Symbol parse_nonterminal(const std::string& text)
{
    if (text.size() < 3 || text.front() != '[' || text.back() != ']')
        throw Error("malformed nonterminal '" + text + "'");
    return parse_terminal(text.substr(1, text.size() - 2));
}

std::size_t hash_value(const Symbol& s)
{
    std::size_t h = static_cast<std::size_t>(s.kind);
    h = mix(h, std::hash<std::string>{}(s.label));
    h = mix(h, std::hash<std::string>{}(s.name));
    return mix(h, static_cast<std::size_t>(s.index));
}

std::string to_string(const Production& p)
{
    std::string out = display_name(p.root) + " -> " + terminal_text(p.root);
    if (!p.children.empty()) {
        out += "(";
        for (std::size_t i = 0; i < p.children.size(); ++i) {
            if (i) out += ", ";
            out += display_name(p.children[i]);
        }
        out += ")";
    }
    return out;
}

std::size_t hash_value(const AbstractValue& v)
{
    std::size_t h = hash_value(v.start);
    for (const auto& p : v.rules) {
        h = mix(h, hash_value(p.root));
        for (const auto& c : p.children) h = mix(h, hash_value(c));
    }
    return h;
}

std::string to_string(const AbstractValue& v)
{
    std::string out = "(" + display_name(v.start) + ", {";
    for (std::size_t i = 0; i < v.rules.size(); ++i) {
        if (i) out += ", ";
        out += to_string(v.rules[i]);
    }
    return out + "})";
}

// ---- trees ----

ProvTree make_tree(Symbol sym, std::vector<ProvTree> children)
{
    auto n = std::make_shared<ProvNode>();
    std::size_t h = hash_value(sym);
    for (const auto& c : children) h = mix(h, c->hash);
    n->sym = std::move(sym);
    n->children = std::move(children);
    n->hash = h;
    return n;
}

bool tree_equal(const ProvTree& a, const ProvTree& b)
{
    if (a == b) return true;
    if (!a || !b || a->hash != b->hash || !(a->sym == b->sym) || a->children.size() != b->children.size())
        return false;
    for (std::size_t i = 0; i < a->children.size(); ++i)
        if (!tree_equal(a->children[i], b->children[i])) return false;
    return true;
}

std::string to_string(const ProvTree& t)
{
    if (!t) return "<none>";
    std::string out = terminal_text(t->sym);
    if (!t->children.empty()) {
        out += "(";
        for (std::size_t i = 0; i < t->children.size(); ++i) {
            if (i) out += ", ";
            out += to_string(t->children[i]);
        }
        out += ")";
    }
    return out;
}

std::size_t tree_depth(const ProvTree& t)
{
    std::size_t d = 0;
    for (const auto& c : t->children) d = std::max(d, tree_depth(c));
    return d + 1;
}

// ---- construction ----

std::vector<Production> reachable_productions(const Symbol& start, const std::vector<Production>& table)
{
    std::map<Symbol, std::vector<const Production*>> by_head;
    for (const auto& p : table) by_head[p.root].push_back(&p);
    std::set<Symbol> seen{start};
    std::vector<Symbol> todo{start};
    std::set<Production> kept;
    while (!todo.empty()) {
        Symbol n = todo.back();
        todo.pop_back();
        auto it = by_head.find(n);
        if (it == by_head.end()) continue;
        for (const Production* p : it->second) {
            kept.insert(*p);
            for (const auto& c : p->children)
                if (seen.insert(c).second) todo.push_back(c);
        }
    }
    return {kept.begin(), kept.end()};
}

AbstractValue make_value(const Symbol& start, std::vector<Production> rules)
{
    return {start, reachable_productions(start, rules)};
}

AbstractValue sensor_value(const Label& l, int i)
{
    Symbol s = sensor_symbol(l, i);
    return {s, {Production{s, {}}}};
}

AbstractValue literal_value(const Label& l, const Literal& v)
{
    Symbol s = value_symbol(l, v);
    return {s, {Production{s, {}}}};
}

namespace {

AbstractValue combine(Production top, const std::vector<const AbstractValue*>& args, std::vector<Production> extra)
{
    std::vector<Production> rules = std::move(extra);
    rules.push_back(top);
    for (const auto* a : args) rules.insert(rules.end(), a->rules.begin(), a->rules.end());
    std::sort(rules.begin(), rules.end());
    rules.erase(std::unique(rules.begin(), rules.end()), rules.end());
    // Everything is reachable from the new root by construction.
    return {top.root, std::move(rules)};
}

}  // namespace

AbstractValue function_value(const Label& l, const Ident& f, const std::vector<const AbstractValue*>& args)
{
    Production top{function_symbol(l, f, static_cast<int>(args.size())), {}};
    for (const auto* a : args) top.children.push_back(a->start);
    return combine(std::move(top), args, {});
}

AbstractValue encryption_value(const Label& l, const std::vector<const AbstractValue*>& args, const Ident& key)
{
    Production top{encryption_symbol(l, static_cast<int>(args.size())), {}};
    for (const auto* a : args) top.children.push_back(a->start);
    Symbol k = key_symbol(key);
    top.children.push_back(k);
    return combine(std::move(top), args, {Production{k, {}}});
}

// ---- membership ----

namespace {

using HeadIndex = std::map<Symbol, std::vector<const Production*>>;

HeadIndex index_heads(const std::vector<Production>& rules)
{
    HeadIndex idx;
    for (const auto& p : rules) idx[p.root].push_back(&p);
    return idx;
}

struct Member {
    const HeadIndex& idx;
    std::map<std::pair<const ProvNode*, Symbol>, bool> memo;

    bool operator()(const ProvTree& t, const Symbol& n)
    {
        if (!(t->sym == n)) return false;
        auto key = std::make_pair(t.get(), n);
        if (auto it = memo.find(key); it != memo.end()) return it->second;
        bool ok = false;
        if (auto it = idx.find(n); it != idx.end()) {
            for (const Production* p : it->second) {
                if (p->children.size() != t->children.size()) continue;
                bool all = true;
                for (std::size_t i = 0; i < p->children.size() && all; ++i)
                    all = (*this)(t->children[i], p->children[i]);
                if (all) {
                    ok = true;
                    break;
                }
            }
        }
        memo[key] = ok;
        return ok;
    }
};

}  // namespace

bool lang_member(const ProvTree& t, const AbstractValue& g)
{
    if (!t) return false;
    auto idx = index_heads(g.rules);
    Member m{idx, {}};
    return m(t, g.start);
}

std::vector<std::vector<AbstractValue>> extract_decryption(const AbstractValue& g, const Ident& key)
{
    std::vector<std::vector<AbstractValue>> out;
    if (g.start.kind != SymbolKind::encryption) return out;
    Symbol k = key_symbol(key);
    bool key_derivable = std::any_of(g.rules.begin(), g.rules.end(),
                                     [&](const Production& p) { return p.root == k && p.children.empty(); });
    if (!key_derivable) return out;
    for (const auto& p : g.rules) {
        if (!(p.root == g.start) || p.children.empty() || !(p.children.back() == k)) continue;
        std::vector<AbstractValue> list;
        for (std::size_t i = 0; i + 1 < p.children.size(); ++i) list.push_back(make_value(p.children[i], g.rules));
        out.push_back(std::move(list));
    }
    return out;
}

// ---- languages ----

namespace {

// Nonterminals that derive at least one finite tree.
std::set<Symbol> productive(const std::vector<Production>& rules)
{
    std::set<Symbol> prod;
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& p : rules) {
            if (prod.count(p.root)) continue;
            if (std::all_of(p.children.begin(), p.children.end(), [&](const Symbol& c) { return prod.count(c) > 0; })) {
                prod.insert(p.root);
                changed = true;
            }
        }
    }
    return prod;
}

}  // namespace

std::vector<ProvTree> sample_language(const AbstractValue& g, std::size_t max_depth, std::size_t limit)
{
    auto idx = index_heads(g.rules);
    std::map<std::pair<Symbol, std::size_t>, std::vector<ProvTree>> memo;
    std::function<const std::vector<ProvTree>&(const Symbol&, std::size_t)> trees =
        [&](const Symbol& n, std::size_t d) -> const std::vector<ProvTree>& {
        auto key = std::make_pair(n, d);
        if (auto it = memo.find(key); it != memo.end()) return it->second;
        std::vector<ProvTree> out;
        if (d > 0) {
            if (auto it = idx.find(n); it != idx.end()) {
                for (const Production* p : it->second) {
                    std::vector<const std::vector<ProvTree>*> choices;
                    bool empty = false;
                    for (const auto& c : p->children) {
                        choices.push_back(&trees(c, d - 1));
                        if (choices.back()->empty()) empty = true;
                    }
                    if (empty) continue;
                    std::vector<std::size_t> pick(choices.size(), 0);
                    while (out.size() < limit) {
                        std::vector<ProvTree> kids;
                        for (std::size_t i = 0; i < choices.size(); ++i) kids.push_back((*choices[i])[pick[i]]);
                        out.push_back(make_tree(p->root, std::move(kids)));
                        std::size_t i = 0;
                        for (; i < pick.size(); ++i) {
                            if (++pick[i] < choices[i]->size()) break;
                            pick[i] = 0;
                        }
                        if (i == pick.size()) break;
                    }
                }
            }
        }
        return memo[key] = std::move(out);
    };
    return trees(g.start, max_depth);
}

ProvTree shortest_tree(const AbstractValue& g)
{
    constexpr std::size_t inf = std::numeric_limits<std::size_t>::max();
    std::map<Symbol, std::size_t> depth;
    std::map<Symbol, const Production*> best;
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& p : g.rules) {
            std::size_t d = 1;
            for (const auto& c : p.children) {
                auto it = depth.find(c);
                if (it == depth.end()) {
                    d = inf;
                    break;
                }
                d = std::max(d, it->second + 1);
            }
            if (d == inf) continue;
            auto it = depth.find(p.root);
            if (it == depth.end() || d < it->second) {
                depth[p.root] = d;
                best[p.root] = &p;
                changed = true;
            }
        }
    }
    std::function<ProvTree(const Symbol&)> build = [&](const Symbol& n) -> ProvTree {
        const Production* p = best.at(n);
        std::vector<ProvTree> kids;
        for (const auto& c : p->children) kids.push_back(build(c));
        return make_tree(p->root, std::move(kids));
    };
    if (!best.count(g.start)) return nullptr;
    return build(g.start);
}

// ---- tagging ----

std::string to_string(Tag t)
{
    switch (t) {
    case Tag::public_: return "public";
    case Tag::secret: return "secret";
    case Tag::open: return "open";
    case Tag::confined: return "confined";
    }
    return "";
}

TaggingScheme TaggingScheme::secrecy(std::set<SensorRef> secret)
{
    return {SchemeKind::secrecy, std::move(secret), {}};
}

TaggingScheme TaggingScheme::confinement(std::set<SensorRef> confined, std::set<Ident> anonymisers)
{
    return {SchemeKind::confinement, std::move(confined), std::move(anonymisers)};
}

TaggingScheme TaggingScheme::constant() { return {}; }

namespace {

Tag low_tag(const TaggingScheme& s) { return s.kind == SchemeKind::confinement ? Tag::open : Tag::public_; }
Tag high_tag(const TaggingScheme& s) { return s.kind == SchemeKind::confinement ? Tag::confined : Tag::secret; }

bool classified_leaf(const Symbol& sym, const TaggingScheme& s)
{
    return sym.kind == SymbolKind::sensor && s.classified.count(SensorRef{sym.label, sym.index}) > 0;
}

// Symbols through which a high tag does not propagate.
bool cuts(const Symbol& sym, const TaggingScheme& s)
{
    if (s.kind == SchemeKind::secrecy) return sym.kind == SymbolKind::encryption;
    if (s.kind == SchemeKind::confinement) {
        if (sym.kind == SymbolKind::function) return s.anonymisers.count(sym.name) > 0;
        if (sym.kind == SymbolKind::encryption) return s.anonymisers.count("enc") > 0;
    }
    return false;
}

}  // namespace

Tag tree_tag(const ProvTree& t, const TaggingScheme& scheme)
{
    if (scheme.kind == SchemeKind::constant) return Tag::public_;
    if (classified_leaf(t->sym, scheme)) return high_tag(scheme);
    if (cuts(t->sym, scheme)) return low_tag(scheme);
    for (const auto& c : t->children)
        if (tree_tag(c, scheme) == high_tag(scheme)) return high_tag(scheme);
    return low_tag(scheme);
}

Tag apply_tagging(const AbstractValue& g, const TaggingScheme& scheme)
{
    if (scheme.kind == SchemeKind::constant) return Tag::public_;
    auto prod = productive(g.rules);
    if (!prod.count(g.start)) return low_tag(scheme);
    auto idx = index_heads(g.rules);
    std::set<Symbol> seen{g.start};
    std::vector<Symbol> todo{g.start};
    while (!todo.empty()) {
        Symbol n = todo.back();
        todo.pop_back();
        if (classified_leaf(n, scheme)) return high_tag(scheme);
        if (cuts(n, scheme)) continue;
        auto it = idx.find(n);
        if (it == idx.end()) continue;
        for (const Production* p : it->second) {
            bool usable = std::all_of(p->children.begin(), p->children.end(),
                                      [&](const Symbol& c) { return prod.count(c) > 0; });
            if (!usable) continue;
            for (const auto& c : p->children)
                if (seen.insert(c).second) todo.push_back(c);
        }
    }
    return low_tag(scheme);
}

bool tagging_agreement_check(const TreeTagger& tree_tagger, Tag grammar_tag, const AbstractValue& g,
                             const std::vector<ProvTree>& samples)
{
    for (const auto& t : samples) {
        if (!lang_member(t, g)) return false;
        if (tree_tagger(t) != grammar_tag) return false;
    }
    return true;
}

bool tagging_agreement_check(const TaggingScheme& scheme, const AbstractValue& g, const std::vector<ProvTree>& samples)
{
    return tagging_agreement_check([&](const ProvTree& t) { return tree_tag(t, scheme); }, apply_tagging(g, scheme),
                                   g, samples);
}

bool derives_leaf(const AbstractValue& g, const Symbol& leaf)
{
    auto prod = productive(g.rules);
    if (!prod.count(g.start)) return false;
    auto idx = index_heads(g.rules);
    std::set<Symbol> seen{g.start};
    std::vector<Symbol> todo{g.start};
    while (!todo.empty()) {
        Symbol n = todo.back();
        todo.pop_back();
        if (n == leaf) return true;
        auto it = idx.find(n);
        if (it == idx.end()) continue;
        for (const Production* p : it->second) {
            if (!std::all_of(p->children.begin(), p->children.end(), [&](const Symbol& c) { return prod.count(c) > 0; }))
                continue;
            for (const auto& c : p->children)
                if (seen.insert(c).second) todo.push_back(c);
        }
    }
    return false;
}

}  // namespace ilysa
