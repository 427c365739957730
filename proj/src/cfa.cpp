#include "ilysa/cfa.hpp"

#include <algorithm>
#include <deque>
#include <unordered_map>
#include <unordered_set>

namespace ilysa {

std::string to_string(const Message& m)
{
    std::string out = "(" + m.sender + ", <";
    for (std::size_t i = 0; i < m.values.size(); ++i) {
        if (i) out += ", ";
        out += display_name(m.values[i].start);
    }
    return out + ">)";
}

namespace {

const ValueSet kNoValues;
const std::set<Message> kNoMessages;
const std::set<Ident> kNoActions;

template <class K, class V>
const V& lookup(const std::map<K, V>& m, const K& k, const V& fallback)
{
    auto it = m.find(k);
    return it == m.end() ? fallback : it->second;
}

template <class T>
std::set<T> intersect(const std::set<T>& a, const std::set<T>& b)
{
    std::set<T> out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::inserter(out, out.end()));
    return out;
}

template <class T>
bool subset(const std::set<T>& a, const std::set<T>& b)
{
    return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

// Applies `f` to every tuple of the cartesian product; stops early when f returns false.
template <class T, class F>
bool for_each_combination(const std::vector<std::vector<T>>& sets, F&& f)
{
    for (const auto& s : sets)
        if (s.empty()) return true;
    std::vector<std::size_t> idx(sets.size(), 0);
    std::vector<T> cur(sets.size());
    while (true) {
        for (std::size_t i = 0; i < sets.size(); ++i) cur[i] = sets[i][idx[i]];
        if (!f(cur)) return false;
        std::size_t k = 0;
        while (k < sets.size() && ++idx[k] == sets[k].size()) idx[k++] = 0;
        if (k == sets.size()) return true;
    }
}

}  // namespace

const ValueSet& Estimate::sigma_at(const Label& l, const std::string& loc) const
{
    auto it = sigma.find(l);
    return it == sigma.end() ? kNoValues : lookup(it->second, loc, kNoValues);
}

const std::set<Message>& Estimate::kappa_at(const Label& l) const { return lookup(kappa, l, kNoMessages); }

const ValueSet& Estimate::theta_at(const Label& l) const { return lookup(theta, l, kNoValues); }

const std::set<Ident>& Estimate::alpha_at(const Label& l, int j) const
{
    auto it = alpha.find(l);
    return it == alpha.end() ? kNoActions : lookup(it->second, j, kNoActions);
}

void Estimate::prune()
{
    auto drop_empty = [](auto& m) {
        for (auto it = m.begin(); it != m.end();) it = it->second.empty() ? m.erase(it) : std::next(it);
    };
    for (auto& [l, slots] : sigma) drop_empty(slots);
    for (auto& [l, slots] : alpha) drop_empty(slots);
    drop_empty(sigma);
    drop_empty(alpha);
    drop_empty(kappa);
    drop_empty(theta);
}

bool leq(const Estimate& a, const Estimate& b)
{
    for (const auto& [l, slots] : a.sigma)
        for (const auto& [loc, vs] : slots)
            if (!subset(vs, b.sigma_at(l, loc))) return false;
    for (const auto& [l, ms] : a.kappa)
        if (!subset(ms, b.kappa_at(l))) return false;
    for (const auto& [l, vs] : a.theta)
        if (!subset(vs, b.theta_at(l))) return false;
    for (const auto& [l, slots] : a.alpha)
        for (const auto& [j, gs] : slots)
            if (!subset(gs, b.alpha_at(l, j))) return false;
    return true;
}

Estimate meet(const Estimate& a, const Estimate& b)
{
    Estimate out;
    for (const auto& [l, slots] : a.sigma)
        for (const auto& [loc, vs] : slots) out.sigma[l][loc] = intersect(vs, b.sigma_at(l, loc));
    for (const auto& [l, ms] : a.kappa) out.kappa[l] = intersect(ms, b.kappa_at(l));
    for (const auto& [l, vs] : a.theta) out.theta[l] = intersect(vs, b.theta_at(l));
    for (const auto& [l, slots] : a.alpha)
        for (const auto& [j, gs] : slots) out.alpha[l][j] = intersect(gs, b.alpha_at(l, j));
    out.prune();
    return out;
}

Estimate join(const Estimate& a, const Estimate& b)
{
    Estimate out = a;
    for (const auto& [l, slots] : b.sigma)
        for (const auto& [loc, vs] : slots) out.sigma[l][loc].insert(vs.begin(), vs.end());
    for (const auto& [l, ms] : b.kappa) out.kappa[l].insert(ms.begin(), ms.end());
    for (const auto& [l, vs] : b.theta) out.theta[l].insert(vs.begin(), vs.end());
    for (const auto& [l, slots] : b.alpha)
        for (const auto& [j, gs] : slots) out.alpha[l][j].insert(gs.begin(), gs.end());
    out.prune();
    return out;
}

// ---- constraint generation ----

namespace {

class Generator {
public:
    Generator(const System& s, const CfaOptions& opts) : sys_(s), comp_(opts.comp ? *opts.comp : s.preamble.comp)
    {
        cs_.strict_paper = opts.strict_paper;
        cs_.max_values = opts.max_values;
        for (const auto& n : s.nodes) {
            index_[n.label] = static_cast<int>(cs_.labels.size());
            cs_.labels.push_back(n.label);
        }
    }

    ConstraintSystem run()
    {
        for (std::size_t n = 0; n < sys_.nodes.size(); ++n) {
            const Node& node = sys_.nodes[n];
            int ni = static_cast<int>(n);
            auto info = node_info(node);
            theta_[ni] = slot({SlotKind::theta, ni, ""});
            kappa_[ni] = slot({SlotKind::kappa, ni, ""});
            for (const auto& v : info.vars) sigma_[{ni, v}] = slot({SlotKind::sigma, ni, v});
            for (int i : info.sensors) {
                std::string loc = "#" + std::to_string(i);
                int sl = slot({SlotKind::sigma, ni, loc});
                sigma_[{ni, loc}] = sl;
                // (B-store)
                include(seed(sensor_value(node.label, i)), sl, -1);
            }
        }
        for (std::size_t n = 0; n < sys_.nodes.size(); ++n)
            for (const auto& c : sys_.nodes[n].components)
                if (auto* p = std::get_if<ProcessPtr>(&c)) {
                    std::map<Ident, const Process*> scope;
                    include(0, live(p->get(), static_cast<int>(n)), -1);
                    process(**p, static_cast<int>(n), scope);
                }
        return std::move(cs_);
    }

private:
    const System& sys_;
    CompRelation comp_;
    ConstraintSystem cs_;
    std::map<Label, int> index_;
    std::map<int, int> theta_, kappa_;
    std::map<std::pair<int, std::string>, int> sigma_;
    std::map<std::pair<int, int>, int> alpha_;
    std::map<const Process*, int> live_;
    std::set<const Process*> done_;
    std::map<AbstractValue, int> seeds_;
    std::map<Ident, int> actions_;

    int slot(Slot s)
    {
        cs_.slots.push_back(std::move(s));
        return static_cast<int>(cs_.slots.size()) - 1;
    }

    int seed(AbstractValue v)
    {
        auto [it, fresh] = seeds_.try_emplace(v, static_cast<int>(cs_.seed_values.size()));
        if (fresh) cs_.seed_values.push_back(std::move(v));
        return it->second;
    }

    int action(const Ident& g)
    {
        auto [it, fresh] = actions_.try_emplace(g, static_cast<int>(cs_.actions.size()));
        if (fresh) cs_.actions.push_back(g);
        return ConstraintSystem::kActionBase + it->second;
    }

    int live(const Process* p, int node)
    {
        auto it = live_.find(p);
        if (it != live_.end()) return it->second;
        int s = slot({SlotKind::live, node, prefix_text(*p)});
        live_[p] = s;
        return s;
    }

    void add(Constraint c) { cs_.constraints.push_back(std::move(c)); }

    void include(int element, int to, int guard)
    {
        Constraint c;
        c.kind = Constraint::Kind::include;
        c.element = element;
        c.to = to;
        c.guard = guard;
        add(std::move(c));
    }

    void subset(int from, int to, int guard)
    {
        Constraint c;
        c.kind = Constraint::Kind::subset;
        c.from = from;
        c.to = to;
        c.guard = guard;
        add(std::move(c));
    }

    int sigma(int node, const std::string& loc) const { return sigma_.at({node, loc}); }

    // Term rules: returns the temp slot holding the term's theta.
    int term(const Term& e, int node, int guard)
    {
        const Label& l = cs_.labels[node];
        int t = slot({SlotKind::temp, node, to_string(e)});
        std::visit(
            [&](const auto& x) {
                using T = std::decay_t<decltype(x)>;
                if constexpr (std::is_same_v<T, Term::Value>)
                    include(seed(literal_value(l, x.v)), t, guard);
                else if constexpr (std::is_same_v<T, Term::SensorLoc>)
                    include(seed(sensor_value(l, x.id)), t, guard);
                else if constexpr (std::is_same_v<T, Term::Var>)
                    subset(sigma(node, x.name), t, guard);
                else {
                    Constraint c;
                    c.kind = Constraint::Kind::build;
                    c.guard = guard;
                    c.node = node;
                    c.to = t;
                    for (const auto& a : x.args) c.args.push_back(term(*a, node, guard));
                    if constexpr (std::is_same_v<T, Term::App>) {
                        c.name = x.fn;
                    } else {
                        c.name = x.key;
                        c.encrypt = true;
                    }
                    add(std::move(c));
                }
            },
            e.node);
        subset(t, theta_.at(node), guard);
        return t;
    }

    std::vector<int> binders(const std::vector<Ident>& xs, int node) const
    {
        std::vector<int> out;
        for (const auto& x : xs) out.push_back(sigma(node, x));
        return out;
    }

    void follow(const Process& from, const ProcessPtr& to, int node, std::map<Ident, const Process*>& scope)
    {
        include(0, live(to.get(), node), live(&from, node));
        process(*to, node, scope);
    }

    void process(const Process& p, int node, std::map<Ident, const Process*>& scope)
    {
        if (!done_.insert(&p).second) return;
        int g = live(&p, node);
        std::visit(
            [&](const auto& x) {
                using T = std::decay_t<decltype(x)>;
                if constexpr (std::is_same_v<T, Process::Out>) {
                    Constraint c;
                    c.kind = Constraint::Kind::send;
                    c.guard = g;
                    c.node = node;
                    for (const auto& e : x.terms) c.args.push_back(term(*e, node, g));
                    std::set<int> seen;
                    for (const auto& target : x.targets) {
                        auto it = index_.find(target);
                        if (it == index_.end() || !seen.insert(it->second).second) continue;
                        if (comp_(cs_.labels[node], target)) c.targets.push_back(kappa_.at(it->second));
                    }
                    add(std::move(c));
                    follow(p, x.cont, node, scope);
                } else if constexpr (std::is_same_v<T, Process::In>) {
                    Constraint c;
                    c.kind = Constraint::Kind::receive;
                    c.guard = g;
                    c.node = node;
                    c.from = kappa_.at(node);
                    for (const auto& e : x.match) term(*e, node, g);
                    c.targets = binders(x.binders, node);
                    c.matched = static_cast<int>(x.match.size());
                    c.arity = static_cast<int>(x.match.size() + x.binders.size());
                    for (std::size_t m = 0; m < cs_.labels.size(); ++m)
                        if (comp_(cs_.labels[m], cs_.labels[node])) c.senders.push_back(static_cast<int>(m));
                    c.cont = live(x.cont.get(), node);
                    add(std::move(c));
                    process(*x.cont, node, scope);
                } else if constexpr (std::is_same_v<T, Process::Decrypt>) {
                    Constraint c;
                    c.kind = Constraint::Kind::unwrap;
                    c.guard = g;
                    c.node = node;
                    c.from = term(*x.subject, node, g);
                    for (const auto& e : x.match) term(*e, node, g);
                    c.targets = binders(x.binders, node);
                    c.matched = static_cast<int>(x.match.size());
                    c.arity = static_cast<int>(x.match.size() + x.binders.size());
                    c.name = x.key;
                    c.cont = live(x.cont.get(), node);
                    add(std::move(c));
                    process(*x.cont, node, scope);
                } else if constexpr (std::is_same_v<T, Process::Assign>) {
                    subset(term(*x.rhs, node, g), sigma(node, x.var), g);
                    follow(p, x.cont, node, scope);
                } else if constexpr (std::is_same_v<T, Process::Cond>) {
                    term(*x.guard, node, g);
                    follow(p, x.then_branch, node, scope);
                    follow(p, x.else_branch, node, scope);
                } else if constexpr (std::is_same_v<T, Process::Act>) {
                    if (!cs_.strict_paper) {
                        auto key = std::make_pair(node, x.actuator);
                        auto it = alpha_.find(key);
                        if (it == alpha_.end())
                            it = alpha_.emplace(key, slot({SlotKind::alpha, node, "", x.actuator})).first;
                        include(action(x.action), it->second, g);
                    }
                    follow(p, x.cont, node, scope);
                } else if constexpr (std::is_same_v<T, Process::Loop>) {
                    auto saved = scope;
                    scope[x.var] = &p;
                    follow(p, x.body, node, scope);
                    scope = saved;
                } else if constexpr (std::is_same_v<T, Process::Jump>) {
                    auto it = scope.find(x.var);
                    if (it != scope.end()) include(0, live(it->second, node), g);
                }
            },
            p.node);
    }
};

}  // namespace

ConstraintSystem generate_constraints(const System& s, const CfaOptions& opts)
{
    return Generator(s, opts).run();
}

// ---- solver ----

namespace {

struct MessageKey {
    int sender;
    std::vector<int> values;
    bool operator==(const MessageKey&) const = default;
};

struct MessageKeyHash {
    std::size_t operator()(const MessageKey& m) const
    {
        std::size_t h = std::hash<int>{}(m.sender);
        for (int v : m.values) h = h * 1000003u ^ std::hash<int>{}(v);
        return h;
    }
};

class Solver {
public:
    explicit Solver(const ConstraintSystem& cs) : cs_(cs), elems_(cs.slots.size()), member_(cs.slots.size()), deps_(cs.slots.size())
    {
        for (std::size_t i = 0; i < cs.constraints.size(); ++i) {
            const auto& c = cs.constraints[i];
            auto dep = [&](int s) {
                if (s >= 0) deps_[s].push_back(static_cast<int>(i));
            };
            dep(c.guard);
            if (c.kind != Constraint::Kind::include) dep(c.from);
            for (int a : c.args) dep(a);
        }
        for (const auto& v : cs.seed_values) seed_ids_.push_back(intern(v));
    }

    Estimate solve(SolveStats* stats)
    {
        std::deque<int> work;
        std::vector<char> queued(cs_.constraints.size(), 1);
        for (std::size_t i = 0; i < cs_.constraints.size(); ++i) work.push_back(static_cast<int>(i));
        while (!work.empty()) {
            int ci = work.front();
            work.pop_front();
            queued[ci] = 0;
            changed_.clear();
            fire(cs_.constraints[ci]);
            ++firings_;
            for (int s : changed_)
                for (int d : deps_[s])
                    if (!queued[d]) {
                        queued[d] = 1;
                        work.push_back(d);
                    }
        }
        if (stats) {
            stats->values = values_.size();
            stats->messages = messages_.size();
            std::set<Production> prods;
            for (const auto& v : values_) prods.insert(v.rules.begin(), v.rules.end());
            stats->productions = prods.size();
            stats->firings = firings_;
        }
        return extract();
    }

private:
    const ConstraintSystem& cs_;
    std::vector<std::vector<int>> elems_;
    std::vector<std::unordered_set<int>> member_;
    std::vector<std::vector<int>> deps_;
    std::vector<int> changed_;
    std::vector<AbstractValue> values_;
    std::unordered_map<AbstractValue, int, AbstractValueHash> value_ids_;
    std::vector<MessageKey> messages_;
    std::unordered_map<MessageKey, int, MessageKeyHash> message_ids_;
    std::vector<int> seed_ids_;
    std::size_t firings_ = 0;

    int intern(const AbstractValue& v)
    {
        auto [it, fresh] = value_ids_.try_emplace(v, static_cast<int>(values_.size()));
        if (fresh) {
            values_.push_back(v);
            if (values_.size() > cs_.max_values)
                throw CapExceeded("analysis exceeded " + std::to_string(cs_.max_values) + " abstract values");
        }
        return it->second;
    }

    int intern(MessageKey m)
    {
        auto [it, fresh] = message_ids_.try_emplace(m, static_cast<int>(messages_.size()));
        if (fresh) messages_.push_back(std::move(m));
        return it->second;
    }

    void insert(int slot, int e)
    {
        if (member_[slot].insert(e).second) {
            elems_[slot].push_back(e);
            if (changed_.empty() || changed_.back() != slot) changed_.push_back(slot);
        }
    }

    bool live(int guard) const { return guard < 0 || !elems_[guard].empty(); }

    std::vector<std::vector<int>> arg_sets(const std::vector<int>& args) const
    {
        std::vector<std::vector<int>> out;
        for (int a : args) out.push_back(elems_[a]);
        return out;
    }

    void fire(const Constraint& c)
    {
        using K = Constraint::Kind;
        if (!live(c.guard)) return;
        switch (c.kind) {
        case K::include: {
            SlotKind k = cs_.slots[c.to].kind;
            if (k == SlotKind::live) insert(c.to, 0);
            else if (k == SlotKind::alpha) insert(c.to, c.element - ConstraintSystem::kActionBase);
            else insert(c.to, seed_ids_[c.element]);
            break;
        }
        case K::subset: {
            // elems_ may grow while iterating when from == to
            for (std::size_t i = 0; i < elems_[c.from].size(); ++i) insert(c.to, elems_[c.from][i]);
            break;
        }
        case K::build: {
            const Label& l = cs_.labels[c.node];
            std::vector<int> out;
            for_each_combination(arg_sets(c.args), [&](const std::vector<int>& combo) {
                std::vector<const AbstractValue*> args;
                for (int v : combo) args.push_back(&values_[v]);
                AbstractValue r = c.encrypt ? encryption_value(l, args, c.name) : function_value(l, c.name, args);
                out.push_back(intern(r));
                return true;
            });
            for (int v : out) insert(c.to, v);
            break;
        }
        case K::send: {
            std::vector<int> out;
            for_each_combination(arg_sets(c.args), [&](const std::vector<int>& combo) {
                out.push_back(intern(MessageKey{c.node, combo}));
                return true;
            });
            for (int m : out)
                for (int t : c.targets) insert(t, m);
            break;
        }
        case K::receive: {
            bool any = false;
            for (std::size_t i = 0; i < elems_[c.from].size(); ++i) {
                const MessageKey& m = messages_[elems_[c.from][i]];
                if (static_cast<int>(m.values.size()) != c.arity) continue;
                if (!std::binary_search(c.senders.begin(), c.senders.end(), m.sender)) continue;
                any = true;
                for (std::size_t b = 0; b < c.targets.size(); ++b) insert(c.targets[b], m.values[c.matched + b]);
            }
            if (any) insert(c.cont, 0);
            break;
        }
        case K::unwrap: {
            bool any = false;
            for (std::size_t i = 0; i < elems_[c.from].size(); ++i) {
                for (const auto& list : extract_decryption(values_[elems_[c.from][i]], c.name)) {
                    if (static_cast<int>(list.size()) != c.arity) continue;
                    any = true;
                    for (std::size_t b = 0; b < c.targets.size(); ++b)
                        insert(c.targets[b], intern(list[c.matched + b]));
                }
            }
            if (any) insert(c.cont, 0);
            break;
        }
        }
    }

    Estimate extract() const
    {
        Estimate e;
        for (std::size_t s = 0; s < cs_.slots.size(); ++s) {
            const Slot& sl = cs_.slots[s];
            if (elems_[s].empty()) continue;
            const Label& l = cs_.labels[sl.node];
            switch (sl.kind) {
            case SlotKind::sigma:
                for (int v : elems_[s]) e.sigma[l][sl.loc].insert(values_[v]);
                break;
            case SlotKind::theta:
                for (int v : elems_[s]) e.theta[l].insert(values_[v]);
                break;
            case SlotKind::kappa:
                for (int m : elems_[s]) {
                    Message msg{cs_.labels[messages_[m].sender], {}};
                    for (int v : messages_[m].values) msg.values.push_back(values_[v]);
                    e.kappa[l].insert(std::move(msg));
                }
                break;
            case SlotKind::alpha:
                for (int g : elems_[s]) e.alpha[l][sl.index].insert(cs_.actions[g]);
                break;
            default: break;
            }
        }
        e.prune();
        return e;
    }
};

}  // namespace

Estimate solve_least(const ConstraintSystem& cs, SolveStats* stats) { return Solver(cs).solve(stats); }

Estimate analyze(const System& s, const CfaOptions& opts, SolveStats* stats)
{
    return solve_least(generate_constraints(s, opts), stats);
}

// ---- checker ----

std::string to_string(const Violation& v)
{
    return v.clause + " at " + v.node + ": " + v.site + ": " + v.detail;
}

ValueSet term_values(const Term& t, const Label& l, const Estimate& e)
{
    return std::visit(
        [&](const auto& x) -> ValueSet {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Term::Value>) return {literal_value(l, x.v)};
            else if constexpr (std::is_same_v<T, Term::SensorLoc>) return {sensor_value(l, x.id)};
            else if constexpr (std::is_same_v<T, Term::Var>) return e.sigma_at(l, x.name);
            else {
                std::vector<std::vector<const AbstractValue*>> sets;
                std::vector<ValueSet> held;
                held.reserve(x.args.size());
                for (const auto& a : x.args) {
                    held.push_back(term_values(*a, l, e));
                    std::vector<const AbstractValue*> ptrs;
                    for (const auto& v : held.back()) ptrs.push_back(&v);
                    sets.push_back(std::move(ptrs));
                }
                ValueSet out;
                for_each_combination(sets, [&](const std::vector<const AbstractValue*>& combo) {
                    if constexpr (std::is_same_v<T, Term::App>) out.insert(function_value(l, x.fn, combo));
                    else out.insert(encryption_value(l, combo, x.key));
                    return true;
                });
                return out;
            }
        },
        t.node);
}

namespace {

class Checker {
public:
    Checker(const System& s, const Estimate& e, const CfaOptions& opts)
        : sys_(s), est_(e), comp_(opts.comp ? *opts.comp : s.preamble.comp), strict_(opts.strict_paper)
    {
    }

    std::vector<Violation> run()
    {
        for (const auto& node : sys_.nodes) {
            for (int i : node_info(node).sensors) {
                std::string loc = "#" + std::to_string(i);
                if (!est_.sigma_at(node.label, loc).count(sensor_value(node.label, i)))
                    report("B-store", node.label, "store", "sensor value missing from " + loc);
            }
            std::map<Ident, const Process*> scope;
            for (const auto& c : node.components)
                if (auto* p = std::get_if<ProcessPtr>(&c)) process(**p, node.label, scope);
        }
        return std::move(out_);
    }

private:
    const System& sys_;
    const Estimate& est_;
    CompRelation comp_;
    bool strict_;
    std::vector<Violation> out_;
    std::set<const Process*> visited_;
    std::string site_;

    void report(std::string clause, const Label& l, std::string site, std::string detail)
    {
        out_.push_back({std::move(clause), l, std::move(site), std::move(detail)});
    }

    static const char* term_rule(const Term& t)
    {
        switch (t.node.index()) {
        case 0: return "E-val";
        case 1: return "E-sen";
        case 2: return "E-var";
        case 3: return "E-fun";
        default: return "E-enc";
        }
    }

    // Validates the term rules for t and its subterms; returns the minimal theta.
    ValueSet term(const Term& t, const Label& l)
    {
        if (auto* app = std::get_if<Term::App>(&t.node))
            for (const auto& a : app->args) term(*a, l);
        if (auto* enc = std::get_if<Term::Enc>(&t.node))
            for (const auto& a : enc->args) term(*a, l);
        ValueSet theta = term_values(t, l, est_);
        const ValueSet& have = est_.theta_at(l);
        for (const auto& v : theta)
            if (!have.count(v)) {
                report(term_rule(t), l, site_, "theta lacks " + to_string(v) + " for " + to_string(t));
                break;
            }
        return theta;
    }

    void bind(const std::vector<Ident>& xs, const std::vector<AbstractValue>& vs, std::size_t j, const Label& l,
              const char* clause)
    {
        for (std::size_t i = 0; i < xs.size(); ++i)
            if (!est_.sigma_at(l, xs[i]).count(vs[j + i]))
                report(clause, l, site_, xs[i] + " lacks " + to_string(vs[j + i]));
    }

    void process(const Process& p, const Label& l, std::map<Ident, const Process*>& scope)
    {
        if (!visited_.insert(&p).second) return;
        site_ = prefix_text(p);
        std::visit(
            [&](const auto& x) {
                using T = std::decay_t<decltype(x)>;
                if constexpr (std::is_same_v<T, Process::Out>) {
                    std::vector<ValueSet> thetas;
                    for (const auto& e : x.terms) thetas.push_back(term(*e, l));
                    std::vector<std::vector<const AbstractValue*>> sets;
                    for (const auto& th : thetas) {
                        sets.emplace_back();
                        for (const auto& v : th) sets.back().push_back(&v);
                    }
                    for (const auto& target : x.targets) {
                        if (!comp_(l, target)) continue;
                        const auto& kappa = est_.kappa_at(target);
                        for_each_combination(sets, [&](const std::vector<const AbstractValue*>& combo) {
                            Message m{l, {}};
                            for (const auto* v : combo) m.values.push_back(*v);
                            if (kappa.count(m)) return true;
                            report("P-out", l, site_, "kappa(" + target + ") lacks " + to_string(m));
                            return false;
                        });
                    }
                    process(*x.cont, l, scope);
                } else if constexpr (std::is_same_v<T, Process::In>) {
                    for (const auto& e : x.match) term(*e, l);
                    std::size_t r = x.match.size() + x.binders.size();
                    bool any = false;
                    std::string site = site_;
                    for (const auto& m : est_.kappa_at(l)) {
                        if (m.values.size() != r || !comp_(m.sender, l)) continue;
                        any = true;
                        bind(x.binders, m.values, x.match.size(), l, "P-in");
                    }
                    if (any) process(*x.cont, l, scope);
                } else if constexpr (std::is_same_v<T, Process::Decrypt>) {
                    ValueSet subject = term(*x.subject, l);
                    for (const auto& e : x.match) term(*e, l);
                    std::size_t r = x.match.size() + x.binders.size();
                    bool any = false;
                    for (const auto& v : subject)
                        for (const auto& list : extract_decryption(v, x.key)) {
                            if (list.size() != r) continue;
                            any = true;
                            bind(x.binders, list, x.match.size(), l, "P-dec");
                        }
                    if (any) process(*x.cont, l, scope);
                } else if constexpr (std::is_same_v<T, Process::Assign>) {
                    for (const auto& v : term(*x.rhs, l))
                        if (!est_.sigma_at(l, x.var).count(v)) {
                            report("P-ass", l, site_, x.var + " lacks " + to_string(v));
                            break;
                        }
                    process(*x.cont, l, scope);
                } else if constexpr (std::is_same_v<T, Process::Cond>) {
                    term(*x.guard, l);
                    process(*x.then_branch, l, scope);
                    process(*x.else_branch, l, scope);
                } else if constexpr (std::is_same_v<T, Process::Act>) {
                    if (!strict_ && !est_.alpha_at(l, x.actuator).count(x.action))
                        report("P-act", l, site_, "alpha(" + std::to_string(x.actuator) + ") lacks " + x.action);
                    process(*x.cont, l, scope);
                } else if constexpr (std::is_same_v<T, Process::Loop>) {
                    auto saved = scope;
                    scope[x.var] = &p;
                    process(*x.body, l, scope);
                    scope = saved;
                } else if constexpr (std::is_same_v<T, Process::Jump>) {
                    auto it = scope.find(x.var);
                    if (it != scope.end()) process(*it->second, l, scope);
                }
            },
            p.node);
    }
};

}  // namespace

std::vector<Violation> check_estimate(const System& s, const Estimate& e, const CfaOptions& opts)
{
    return Checker(s, e, opts).run();
}

// ---- audit ----

std::string to_string(const Counterexample& c)
{
    return "step " + std::to_string(c.step) + ": " + c.event + ": missing " + c.missing;
}

namespace {

bool covered(const ProvTree& t, const ValueSet& vs)
{
    return std::any_of(vs.begin(), vs.end(), [&](const AbstractValue& g) { return lang_member(t, g); });
}

std::string describe(const TraceEvent& ev)
{
    std::string out = to_string(ev.kind) + " at " + ev.node;
    if (!ev.peer.empty()) out += " -> " + ev.peer;
    if (!ev.name.empty()) out += " [" + ev.name + "]";
    return out;
}

}  // namespace

std::vector<Counterexample> audit_events(const Estimate& e, const std::vector<TraceEvent>& events, std::size_t step,
                                         bool check_alpha)
{
    std::vector<Counterexample> out;
    for (const auto& ev : events) {
        switch (ev.kind) {
        case EventKind::evaluated:
            for (const auto& [text, v] : ev.values)
                if (!covered(v.prov, e.theta_at(ev.node)))
                    out.push_back({step, describe(ev), "theta(" + ev.node + ") entry for " + text + " = " + to_string(v.prov)});
            break;
        case EventKind::msg_delivered: {
            bool ok = false;
            for (const auto& m : e.kappa_at(ev.peer)) {
                if (m.sender != ev.node || m.values.size() != ev.values.size()) continue;
                bool all = true;
                for (std::size_t i = 0; i < m.values.size() && all; ++i)
                    all = lang_member(ev.values[i].second.prov, m.values[i]);
                if (all) {
                    ok = true;
                    break;
                }
            }
            if (!ok) {
                std::string msg = "kappa(" + ev.peer + ") entry from " + ev.node + " covering <";
                for (std::size_t i = 0; i < ev.values.size(); ++i)
                    msg += (i ? ", " : "") + to_string(ev.values[i].second.prov);
                out.push_back({step, describe(ev), msg + ">"});
            }
            break;
        }
        case EventKind::act_triggered:
            if (check_alpha && !e.alpha_at(ev.node, ev.index).count(ev.name))
                out.push_back({step, describe(ev), "alpha(" + ev.node + ", " + std::to_string(ev.index) + ") entry " + ev.name});
            break;
        default: break;
        }
    }
    return out;
}

std::vector<Counterexample> audit_store(const Program& prog, const Configuration& c, const Estimate& e, std::size_t step)
{
    std::vector<Counterexample> out;
    for (std::size_t n = 0; n < c.nodes.size(); ++n) {
        const auto& nd = prog.nodes()[n];
        for (std::size_t k = 0; k < nd.locations.size(); ++k) {
            const auto& v = c.nodes[n].store[k];
            if (v && !covered(v->prov, e.sigma_at(nd.label, nd.locations[k])))
                out.push_back({step, "store of " + nd.label,
                               "sigma(" + nd.label + ", " + nd.locations[k] + ") entry for " + to_string(v->prov)});
        }
    }
    return out;
}

std::vector<Counterexample> soundness_audit(const System& s, const Estimate& e, const std::vector<StepRecord>& trace,
                                            bool check_alpha)
{
    std::vector<Counterexample> out;
    std::set<Label> labels;
    for (const auto& n : s.nodes) labels.insert(n.label);
    for (const auto& rec : trace) {
        auto found = audit_events(e, rec.events, rec.step, check_alpha);
        out.insert(out.end(), found.begin(), found.end());
        for (const auto& ev : rec.events) {
            if (!labels.count(ev.node) || (!ev.peer.empty() && !labels.count(ev.peer))) {
                out.push_back({rec.step, describe(ev), "node of the system"});
                continue;
            }
            auto check = [&](const Label& l, const std::string& loc, const InstrValue& v) {
                if (!covered(v.prov, e.sigma_at(l, loc)))
                    out.push_back({rec.step, describe(ev), "sigma(" + l + ", " + loc + ") entry for " + to_string(v.prov)});
            };
            switch (ev.kind) {
            case EventKind::sensed:
            case EventKind::assigned:
                for (const auto& [loc, v] : ev.values) check(ev.node, loc, v);
                break;
            case EventKind::msg_delivered:
                for (const auto& [x, v] : ev.bindings) check(ev.peer, x, v);
                break;
            case EventKind::decrypted:
                for (const auto& [x, v] : ev.bindings) check(ev.node, x, v);
                break;
            default: break;
            }
        }
    }
    return out;
}

}  // namespace ilysa
