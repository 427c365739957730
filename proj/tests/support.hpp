#pragma once

#include "ilysa/cfa.hpp"
#include "ilysa/io.hpp"
#include "ilysa/parser.hpp"
#include "ilysa/policy.hpp"

#include <algorithm>
#include <functional>
#include <random>
#include <sstream>
#include <unordered_set>

namespace ilysa::support {

inline std::string corpus_path(const std::string& name) { return std::string(ILYSA_CORPUS_DIR) + "/" + name; }

inline System corpus(const std::string& name) { return load_system(corpus_path(name)); }

inline const std::vector<std::string>& corpus_systems()
{
    static const std::vector<std::string> names{"ping.ilysa", "nil.ilysa", "relay.ilysa", "streetlight.ilysa",
                                                "streetlight_amended.ilysa", "streetlight_noturnoff.ilysa"};
    return names;
}

// ---- random systems ----

// Small random systems (<= 3 nodes, <= 12 process constructs) emitted as source text, so that the
// parser and well_formed see them exactly like user input.
class SystemGen {
public:
    explicit SystemGen(std::uint64_t seed) : rng_(seed) {}

    std::string text(const std::string& name = "r")
    {
        int n_nodes = pick(1, 3);
        budget_ = 12;
        labels_.clear();
        for (int i = 0; i < n_nodes; ++i) labels_.push_back("n" + std::to_string(i));
        std::ostringstream o;
        o << "system " << name << " {\n  fun f/1;\n  fun g/2;\n  key k;\n";
        if (n_nodes > 1 && coin(0.3)) o << "  comp all except { n0 -> n1 };\n";
        std::vector<bool> sensor(n_nodes), actuator(n_nodes);
        for (int i = 0; i < n_nodes; ++i) {
            sensor[i] = coin(0.7);
            actuator[i] = coin(0.4);
            if (sensor[i]) o << "  script " << labels_[i] << "#1 = [" << pick(0, 2) << ", " << pick(0, 2) << "];\n";
        }
        for (int i = 0; i < n_nodes; ++i) {
            has_sensor_ = sensor[i];
            has_actuator_ = actuator[i];
            self_ = i;
            o << "  node " << labels_[i] << " {\n    store { x, y, z }\n";
            if (has_sensor_) o << "    sensor 1 = mu h. probe(#1). " << (coin(0.5) ? "tau. " : "") << "h\n";
            if (has_actuator_) o << "    actuator 2 = mu h. await(2, {on, off}). h\n";
            int procs = (budget_ > 2 && coin(0.3)) ? 2 : 1;
            for (int p = 0; p < procs && budget_ > 0; ++p) {
                int share = std::max(1, budget_ / std::max(1, n_nodes - i));
                int local = std::min(budget_, pick(1, share));
                budget_ -= local;
                // first construct defines a variable so that the body is not blocked from the start
                --local;
                std::string var = var_name();
                std::string init = has_sensor_ && coin(0.6) ? "#1" : std::to_string(pick(0, 2));
                o << "    proc mu h. " << var << " := " << init << ". " << proc(local) << "\n";
            }
            o << "  }\n";
        }
        o << "}\n";
        return o.str();
    }

    System system(const std::string& name = "r") { return parse_system({text(name), "<random>"}); }

private:
    std::mt19937_64 rng_;
    int budget_ = 0;
    std::vector<std::string> labels_;
    bool has_sensor_ = false;
    bool has_actuator_ = false;
    int self_ = 0;

    int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    bool coin(double p) { return std::bernoulli_distribution(p)(rng_); }
    std::string var_name() { return std::string(1, "xyz"[pick(0, 2)]); }
    std::string other_var(const std::string& v)
    {
        std::string w = var_name();
        return w == v ? (v == "x" ? "y" : "x") : w;
    }

    std::string term(int depth)
    {
        int r = pick(0, depth > 0 ? 7 : 3);
        switch (r) {
        case 0: return has_sensor_ ? "#1" : var_name();
        case 1:
        case 2: return var_name();
        case 3: return coin(0.5) ? std::to_string(pick(0, 2)) : "on";
        case 4:
        case 5: return "f(" + term(depth - 1) + ")";
        case 6: return "g(" + term(depth - 1) + ", " + term(depth - 1) + ")";
        default: return "{" + term(depth - 1) + "}_k";
        }
    }

    std::string targets()
    {
        std::string out;
        for (std::size_t i = 0; i < labels_.size(); ++i)
            if (static_cast<int>(i) != self_ && coin(0.7)) out += (out.empty() ? "" : ", ") + labels_[i];
        if (out.empty()) out = labels_[(self_ + 1) % labels_.size()];
        return out;
    }

    std::string proc(int& local)
    {
        if (local <= 0) return coin(0.9) ? "h" : "0";
        --local;
        switch (pick(0, 9)) {
        case 0:
        case 1:
        case 2: return var_name() + " := " + term(2) + ". " + proc(local);
        case 3:
        case 4: {
            std::string ts = term(1);
            if (coin(0.4)) ts += ", " + term(1);
            return "out(" + ts + ") to {" + targets() + "}. " + proc(local);
        }
        case 5:
        case 6: {
            std::string in = coin(0.3) ? term(0) + "; " + var_name() : "; " + var_name();
            if (coin(0.3)) in += ", " + other_var(in.substr(in.size() - 1));
            return "in(" + in + "). " + proc(local);
        }
        case 7:
            if (has_actuator_) return std::string("act(2, ") + (coin(0.5) ? "on" : "off") + "). " + proc(local);
            return var_name() + " := " + term(1) + ". " + proc(local);
        case 8: {
            int then_budget = local / 2;
            int else_budget = local - then_budget;
            local = 0;
            std::string guard = term(1) + " = " + term(1);
            return "if " + guard + " then " + proc(then_budget) + " else " + proc(else_budget);
        }
        default: {
            std::string pattern = coin(0.3) ? term(0) + "; " + var_name() : "; " + var_name();
            return "decrypt " + var_name() + " as {" + pattern + "}_k in " + proc(local);
        }
        }
    }
};

// Seeded random systems whose least estimate stays under `cap` abstract values. Cyclic data flow through
// function applications makes the number of per-value grammars exponential; such systems are skipped and
// their seeds reported.
struct RandomSystem {
    std::uint64_t seed = 0;
    System system;
    Estimate least;
};

inline std::vector<RandomSystem> random_systems(std::size_t count, std::uint64_t first = 1,
                                                std::vector<std::uint64_t>* skipped = nullptr, std::size_t cap = 2000)
{
    std::vector<RandomSystem> out;
    CfaOptions o;
    o.max_values = cap;
    for (std::uint64_t seed = first; out.size() < count; ++seed) {
        auto s = SystemGen(seed).system();
        try {
            auto e = analyze(s, o);
            out.push_back({seed, std::move(s), std::move(e)});
        } catch (const CapExceeded&) {
            if (skipped) skipped->push_back(seed);
        }
    }
    return out;
}

// ---- brute-force language enumeration ----

inline std::string tree_key(const ProvTree& t) { return to_string(t); }

// All trees of depth <= depth derivable from g (leaves have depth 1), by expanding every production
// exhaustively. Stops at cap trees per (nonterminal, depth) and then sets *overflow.
inline std::vector<ProvTree> enumerate_trees(const AbstractValue& g, int depth, std::size_t cap,
                                             bool* overflow = nullptr)
{
    std::map<std::pair<Symbol, int>, std::vector<ProvTree>> memo;
    std::function<const std::vector<ProvTree>&(const Symbol&, int)> go =
        [&](const Symbol& a, int d) -> const std::vector<ProvTree>& {
        auto key = std::make_pair(a, d);
        if (auto it = memo.find(key); it != memo.end()) return it->second;
        std::vector<ProvTree> res;
        if (d > 0)
            for (const auto& p : g.rules) {
                if (!(p.root == a)) continue;
                std::vector<std::vector<ProvTree>> kids;
                for (const auto& c : p.children) kids.push_back(go(c, d - 1));
                std::vector<ProvTree> partial;
                std::function<void(std::size_t)> fill = [&](std::size_t i) {
                    if (res.size() >= cap) {
                        if (overflow) *overflow = true;
                        return;
                    }
                    if (i == kids.size()) {
                        res.push_back(make_tree(p.root, partial));
                        return;
                    }
                    for (const auto& t : kids[i]) {
                        partial.push_back(t);
                        fill(i + 1);
                        partial.pop_back();
                    }
                };
                fill(0);
            }
        return memo[key] = std::move(res);
    };
    return go(g.start, depth);
}

inline std::set<std::string> enumerate_language(const AbstractValue& g, int depth, std::size_t cap, bool* overflow)
{
    std::set<std::string> keys;
    for (const auto& t : enumerate_trees(g, depth, cap, overflow)) keys.insert(tree_key(t));
    return keys;
}

// Random grammars over a small ranked alphabet and random trees that are either derived from the
// grammar, derived then mutated, or built freely over the alphabet.
class GrammarGen {
public:
    explicit GrammarGen(std::uint64_t seed) : rng_(seed)
    {
        leaves_ = {sensor_symbol("a", 1), sensor_symbol("b", 2), value_symbol("a", std::int64_t{1}),
                   value_symbol("b", Atom{"car"}), key_symbol("k")};
        inner_ = {function_symbol("a", "f", 1), function_symbol("a", "g", 2), function_symbol("b", "h", 1),
                  encryption_symbol("a", 1)};
        all_ = leaves_;
        all_.insert(all_.end(), inner_.begin(), inner_.end());
    }

    AbstractValue grammar()
    {
        std::vector<Production> rules;
        for (const auto& sym : leaves_)
            if (coin(0.8)) rules.push_back({sym, {}});
        for (const auto& sym : inner_) {
            int n = pick(0, 2);
            for (int k = 0; k < n; ++k) {
                Production p{sym, {}};
                for (int c = 0; c < sym.arity(); ++c) {
                    bool key_slot = sym.kind == SymbolKind::encryption && c == sym.arity() - 1;
                    p.children.push_back(key_slot && coin(0.8) ? key_symbol("k") : any());
                }
                rules.push_back(std::move(p));
            }
        }
        Symbol start = coin(0.8) ? inner_[pick(0, static_cast<int>(inner_.size()) - 1)] : any();
        return make_value(start, std::move(rules));
    }

    ProvTree tree(const AbstractValue& g, int depth)
    {
        int mode = pick(0, 2);
        if (mode < 2)
            if (auto t = derive(g, g.start, depth)) return mode == 0 ? t : mutate(t);
        return free_tree(depth);
    }

private:
    std::mt19937_64 rng_;
    std::vector<Symbol> leaves_, inner_, all_;

    int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    bool coin(double p) { return std::bernoulli_distribution(p)(rng_); }
    Symbol any() { return all_[pick(0, static_cast<int>(all_.size()) - 1)]; }

    ProvTree derive(const AbstractValue& g, const Symbol& a, int depth)
    {
        if (depth <= 0) return nullptr;
        std::vector<const Production*> options;
        for (const auto& p : g.rules)
            if (p.root == a) options.push_back(&p);
        std::shuffle(options.begin(), options.end(), rng_);
        for (const Production* p : options) {
            std::vector<ProvTree> kids;
            for (const auto& c : p->children) {
                auto t = derive(g, c, depth - 1);
                if (!t) break;
                kids.push_back(t);
            }
            if (kids.size() == p->children.size()) return make_tree(p->root, std::move(kids));
        }
        return nullptr;
    }

    ProvTree free_tree(int depth)
    {
        Symbol s = depth <= 1 ? leaves_[pick(0, static_cast<int>(leaves_.size()) - 1)] : any();
        std::vector<ProvTree> kids;
        for (int c = 0; c < s.arity(); ++c) kids.push_back(free_tree(depth - 1));
        return make_tree(s, std::move(kids));
    }

    // Replaces one leaf by a random leaf symbol.
    ProvTree mutate(const ProvTree& t)
    {
        if (t->children.empty()) return make_tree(leaves_[pick(0, static_cast<int>(leaves_.size()) - 1)]);
        std::vector<ProvTree> kids = t->children;
        auto& k = kids[pick(0, static_cast<int>(kids.size()) - 1)];
        k = mutate(k);
        return make_tree(t->sym, std::move(kids));
    }
};

// ---- soundness audits ----

struct AuditReport {
    std::size_t configs = 0;
    std::size_t transitions = 0;
    bool truncated = false;
    std::vector<std::string> counterexamples;
};

namespace detail {

inline std::size_t mix(std::size_t h, std::size_t v) { return h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)); }

inline std::size_t hash_instr(const InstrValue& v) { return mix(hash_value(v.value), v.prov->hash); }

struct EventHash {
    std::size_t operator()(const TraceEvent& e) const
    {
        std::size_t h = static_cast<std::size_t>(e.kind);
        h = mix(h, std::hash<std::string>{}(e.node));
        h = mix(h, std::hash<std::string>{}(e.peer));
        h = mix(h, static_cast<std::size_t>(e.index));
        h = mix(h, std::hash<std::string>{}(e.name));
        for (const auto& [k, v] : e.values) h = mix(mix(h, std::hash<std::string>{}(k)), hash_instr(v));
        for (const auto& [k, v] : e.bindings) h = mix(mix(h, std::hash<std::string>{}(k)), hash_instr(v));
        return h;
    }
};

struct EventEq {
    bool operator()(const TraceEvent& a, const TraceEvent& b) const
    {
        return a.kind == b.kind && a.node == b.node && a.peer == b.peer && a.index == b.index && a.name == b.name &&
               a.values == b.values && a.bindings == b.bindings;
    }
};

struct StoreHash {
    std::size_t operator()(const std::vector<std::optional<InstrValue>>& s) const
    {
        std::size_t h = s.size();
        for (const auto& v : s) h = mix(h, v ? hash_instr(*v) : 17);
        return h;
    }
};

}  // namespace detail

// Every configuration reachable within `depth` steps has stores agreeing with the estimate and every
// transition's events are covered by it. Events and per-node stores are checked once each (exact memo).
inline AuditReport audit_exhaustive(const System& s, const Estimate& e, std::size_t depth,
                                    std::size_t cap = 20'000'000)
{
    Program prog(s);
    AuditReport rep;
    std::unordered_set<TraceEvent, detail::EventHash, detail::EventEq> seen_events;
    std::vector<std::unordered_set<std::vector<std::optional<InstrValue>>, detail::StoreHash>> seen_stores(
        prog.nodes().size());
    static const std::map<std::string, ValueSet> none;
    auto on_config = [&](const Configuration& c) {
        for (std::size_t n = 0; n < c.nodes.size(); ++n) {
            if (!seen_stores[n].insert(c.nodes[n].store).second) continue;
            const Label& l = prog.nodes()[n].label;
            auto it = e.sigma.find(l);
            if (!store_agrees(prog.store_of(c, static_cast<int>(n)), it == e.sigma.end() ? none : it->second))
                rep.counterexamples.push_back("store of " + l + " does not agree");
        }
    };
    auto on_step = [&](const Configuration&, const StepRecord& rec) {
        std::vector<TraceEvent> fresh;
        for (const auto& ev : rec.events)
            if (seen_events.insert(ev).second) fresh.push_back(ev);
        if (fresh.empty()) return;
        for (const auto& c : audit_events(e, fresh, rec.step)) rep.counterexamples.push_back(to_string(c));
    };
    ExploreOptions opts;
    opts.depth = depth;
    opts.cap = cap;
    auto st = explore_each(prog, prog.initial(), opts, on_config, on_step);
    rep.configs = st.configs;
    rep.transitions = st.transitions;
    rep.truncated = st.truncated;
    return rep;
}

// `schedules` seeded random runs of at most `steps` steps, each replayed through soundness_audit.
inline AuditReport audit_runs(const System& s, const Estimate& e, std::size_t schedules, std::size_t steps,
                              std::uint64_t seed)
{
    Program prog(s);
    AuditReport rep;
    for (std::size_t k = 0; k < schedules; ++k) {
        auto r = run(prog, prog.initial(), seed + k, steps);
        rep.transitions += r.steps.size();
        for (const auto& c : soundness_audit(s, e, r.steps)) rep.counterexamples.push_back(to_string(c));
    }
    return rep;
}

// ---- estimate noise and mutation ----

// Every abstract value mentioned anywhere in e.
inline std::vector<AbstractValue> values_of(const Estimate& e)
{
    std::set<AbstractValue> out;
    for (const auto& [l, locs] : e.sigma)
        for (const auto& [x, vs] : locs) out.insert(vs.begin(), vs.end());
    for (const auto& [l, vs] : e.theta) out.insert(vs.begin(), vs.end());
    for (const auto& [l, ms] : e.kappa)
        for (const auto& m : ms) out.insert(m.values.begin(), m.values.end());
    return {out.begin(), out.end()};
}

// A checker-valid estimate above the least one: the least estimate of the system grown by an extra
// sender node and a few extra assignments, restricted to the original labels, plus some actuator actions
// (alpha feeds no other clause). `facts` bounds the number of additions.
inline Estimate add_noise(const Estimate& least, const System& s, std::mt19937_64& rng, int facts)
{
    auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
    std::vector<Label> labels;
    for (const auto& n : s.nodes) labels.push_back(n.label);
    if (labels.empty()) return least;
    auto literal = [&]() -> std::string {
        switch (pick(3)) {
        case 0: return std::to_string(pick(50));
        case 1: return "car";
        default: return "true";
        }
    };
    System big = s;
    std::ostringstream zz;
    zz << "system noise { node zz { store { q } sensor 1 = mu h. probe(#1). h proc mu h. q := #1. ";
    bool any_out = false;
    Estimate out;
    for (int i = 0; i < facts; ++i) {
        const Label& l = labels[pick(labels.size())];
        auto info = node_info(*s.find(l));
        switch (pick(3)) {
        case 0: {
            std::string args = pick(2) ? "q" : literal();
            if (pick(2)) args += ", " + literal();
            zz << "out(" << args << ") to {" << l << "}. ";
            any_out = true;
            break;
        }
        case 1: {
            if (info.vars.empty()) break;
            std::ostringstream src;
            src << "system t { node " << l << " { store { ";
            for (std::size_t k = 0; k < info.vars.size(); ++k) src << (k ? ", " : "") << info.vars[k];
            std::string rhs = (!info.sensors.empty() && pick(2)) ? "#" + std::to_string(info.sensors[pick(info.sensors.size())])
                                                                 : literal();
            src << " } proc mu h. " << info.vars[pick(info.vars.size())] << " := " << rhs << ". h } }";
            auto extra = parse_system_unchecked({src.str(), "noise"});
            for (auto& n : big.nodes)
                if (n.label == l) n.components.push_back(std::get<ProcessPtr>(extra.nodes[0].components[1]));
            break;
        }
        default:
            if (!info.actuators.empty())
                out.alpha[l][info.actuators[pick(info.actuators.size())]].insert(pick(2) ? "on" : "noise");
            break;
        }
    }
    zz << "h } }";
    if (any_out) {
        auto extra = parse_system_unchecked({zz.str(), "noise"});
        big.preamble.scripts[SensorRef{"zz", 1}] = {Literal{std::int64_t{99}}};
        big.nodes.push_back(extra.nodes[0]);
    }
    Estimate grown = analyze(big);
    grown.sigma.erase("zz");
    grown.theta.erase("zz");
    grown.kappa.erase("zz");
    grown.alpha.erase("zz");
    out = join(join(least, grown), out);
    out.prune();
    return out;
}

// Every estimate obtained from e by deleting exactly one fact.
inline std::vector<std::pair<std::string, Estimate>> single_removals(const Estimate& e)
{
    std::vector<std::pair<std::string, Estimate>> out;
    for (const auto& [l, locs] : e.sigma)
        for (const auto& [x, vs] : locs)
            for (const auto& v : vs) {
                Estimate m = e;
                m.sigma[l][x].erase(v);
                m.prune();
                out.push_back({"sigma " + l + "." + x + " " + to_string(v), std::move(m)});
            }
    for (const auto& [l, vs] : e.theta)
        for (const auto& v : vs) {
            Estimate m = e;
            m.theta[l].erase(v);
            m.prune();
            out.push_back({"theta " + l + " " + to_string(v), std::move(m)});
        }
    for (const auto& [l, ms] : e.kappa)
        for (const auto& msg : ms) {
            Estimate m = e;
            m.kappa[l].erase(msg);
            m.prune();
            out.push_back({"kappa " + l + " " + to_string(msg), std::move(m)});
        }
    for (const auto& [l, js] : e.alpha)
        for (const auto& [j, gs] : js)
            for (const auto& g : gs) {
                Estimate m = e;
                m.alpha[l][j].erase(g);
                m.prune();
                out.push_back({"alpha " + l + "." + std::to_string(j) + " " + g, std::move(m)});
            }
    return out;
}

// ---- grammars from the paper's running example ----

inline AbstractValue iota() { return sensor_value("cp", 1); }

inline AbstractValue nu()
{
    auto i = iota();
    return function_value("cp", "noiseRed", {&i});
}

inline AbstractValue epsilon()
{
    auto n = nu();
    return encryption_value("cp", {&n}, "k");
}

// Grammar-language equality on canonical trees: every depth-<=depth tree of each side is in the other.
inline bool same_language(const AbstractValue& a, const AbstractValue& b, int depth = 5)
{
    for (const auto& t : enumerate_trees(a, depth, 2000))
        if (!lang_member(t, b)) return false;
    for (const auto& t : enumerate_trees(b, depth, 2000))
        if (!lang_member(t, a)) return false;
    return true;
}

inline bool contains_language(const ValueSet& vs, const AbstractValue& want)
{
    for (const auto& v : vs)
        if (same_language(v, want)) return true;
    return false;
}

}  // namespace ilysa::support
