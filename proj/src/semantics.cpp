#include "ilysa/semantics.hpp"

#include <algorithm>
#include <deque>
#include <unordered_set>
#include <random>

namespace ilysa {

namespace {

std::size_t mix(std::size_t seed, std::size_t v)
{
    return seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
}

}  // namespace

// ---- values ----

std::strong_ordering ConcreteValue::operator<=>(const ConcreteValue& o) const
{
    if (auto c = kind <=> o.kind; c != 0) return c;
    if (auto c = i <=> o.i; c != 0) return c;
    if (auto c = b <=> o.b; c != 0) return c;
    if (auto c = s <=> o.s; c != 0) return c;
    for (std::size_t k = 0; k < items.size() && k < o.items.size(); ++k)
        if (auto c = items[k] <=> o.items[k]; c != 0) return c;
    return items.size() <=> o.items.size();
}

ConcreteValue ConcreteValue::integer(std::int64_t v)
{
    ConcreteValue c;
    c.kind = Kind::integer;
    c.i = v;
    return c;
}

ConcreteValue ConcreteValue::boolean(bool v)
{
    ConcreteValue c;
    c.kind = Kind::boolean;
    c.b = v;
    return c;
}

ConcreteValue ConcreteValue::atom(std::string name)
{
    ConcreteValue c;
    c.kind = Kind::atom;
    c.s = std::move(name);
    return c;
}

ConcreteValue ConcreteValue::string(std::string v)
{
    ConcreteValue c;
    c.kind = Kind::string;
    c.s = std::move(v);
    return c;
}

ConcreteValue ConcreteValue::tuple(std::vector<ConcreteValue> items)
{
    ConcreteValue c;
    c.kind = Kind::tuple;
    c.items = std::move(items);
    return c;
}

ConcreteValue ConcreteValue::cipher(std::vector<ConcreteValue> payload, std::string key)
{
    ConcreteValue c;
    c.kind = Kind::cipher;
    c.items = std::move(payload);
    c.s = std::move(key);
    return c;
}

ConcreteValue from_literal(const Literal& v)
{
    struct V {
        ConcreteValue operator()(std::int64_t i) const { return ConcreteValue::integer(i); }
        ConcreteValue operator()(bool b) const { return ConcreteValue::boolean(b); }
        ConcreteValue operator()(const std::string& s) const { return ConcreteValue::string(s); }
        ConcreteValue operator()(const Atom& a) const { return ConcreteValue::atom(a.name); }
    };
    return std::visit(V{}, v);
}

std::string to_string(const ConcreteValue& v)
{
    using K = ConcreteValue::Kind;
    auto list = [](const std::vector<ConcreteValue>& xs) {
        std::string out;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (i) out += ", ";
            out += to_string(xs[i]);
        }
        return out;
    };
    switch (v.kind) {
    case K::integer: return std::to_string(v.i);
    case K::boolean: return v.b ? "true" : "false";
    case K::atom: return v.s;
    case K::string: return literal_text(v.s);
    case K::tuple: return "<" + list(v.items) + ">";
    case K::cipher: return "{" + list(v.items) + "}_" + v.s;
    }
    return "";
}

std::size_t hash_value(const ConcreteValue& v)
{
    std::size_t h = static_cast<std::size_t>(v.kind);
    h = mix(h, static_cast<std::size_t>(v.i));
    h = mix(h, v.b);
    h = mix(h, std::hash<std::string>{}(v.s));
    for (const auto& x : v.items) h = mix(h, hash_value(x));
    return h;
}

bool operator==(const InstrValue& a, const InstrValue& b) { return a.value == b.value && tree_equal(a.prov, b.prov); }

const std::optional<InstrValue>* InstrumentedStore::find(const std::string& loc) const
{
    for (std::size_t i = 0; i < locations.size(); ++i)
        if (locations[i] == loc) return &values[i];
    return nullptr;
}

bool store_agrees(const InstrumentedStore& store, const AbstractStoreSlice& abstract)
{
    for (std::size_t i = 0; i < store.locations.size(); ++i) {
        const auto& entry = store.values[i];
        if (!entry) continue;
        auto it = abstract.find(store.locations[i]);
        if (it == abstract.end()) return false;
        bool covered = std::any_of(it->second.begin(), it->second.end(),
                                   [&](const AbstractValue& g) { return lang_member(entry->prov, g); });
        if (!covered) return false;
    }
    return true;
}

// ---- functions ----

FunctionTable::FunctionTable(const std::vector<FunctionDecl>& decls)
{
    for (const auto& d : decls) decls_[d.name] = d;
}

std::optional<int> FunctionTable::arity(const std::string& f) const
{
    if (auto b = builtin_arity(f)) return b;
    if (auto it = decls_.find(f); it != decls_.end()) return it->second.arity;
    return std::nullopt;
}

std::optional<ConcreteValue> FunctionTable::apply(const std::string& f, const std::vector<ConcreteValue>& args) const
{
    using K = ConcreteValue::Kind;
    if (auto it = decls_.find(f); it != decls_.end()) {
        const auto& d = it->second;
        if (static_cast<int>(args.size()) != d.arity) return std::nullopt;
        if (d.kind == EvaluatorKind::uninterpreted) {
            std::vector<ConcreteValue> items{ConcreteValue::atom(f)};
            items.insert(items.end(), args.begin(), args.end());
            return ConcreteValue::tuple(std::move(items));
        }
        // tagtest looks at the atom or at the tag of a record, never inside a cipher
        const auto& x = args[0];
        std::string tag;
        if (x.kind == K::atom) tag = x.s;
        else if (x.kind == K::tuple && !x.items.empty() && x.items[0].kind == K::atom) tag = x.items[0].s;
        bool hit = !tag.empty() && std::find(d.tags.begin(), d.tags.end(), tag) != d.tags.end();
        return ConcreteValue::boolean(hit);
    }
    auto want = builtin_arity(f);
    if (!want || static_cast<int>(args.size()) != *want) return std::nullopt;
    for (const auto& a : args)
        if (a.kind == K::cipher) return std::nullopt;
    auto ints = [&] { return std::all_of(args.begin(), args.end(), [](const auto& a) { return a.kind == K::integer; }); };
    auto bools = [&] { return std::all_of(args.begin(), args.end(), [](const auto& a) { return a.kind == K::boolean; }); };
    auto wrap = [](std::uint64_t v) { return ConcreteValue::integer(static_cast<std::int64_t>(v)); };
    if (f == "+" && ints()) return wrap(static_cast<std::uint64_t>(args[0].i) + static_cast<std::uint64_t>(args[1].i));
    if (f == "-" && ints()) return wrap(static_cast<std::uint64_t>(args[0].i) - static_cast<std::uint64_t>(args[1].i));
    if (f == "*" && ints()) return wrap(static_cast<std::uint64_t>(args[0].i) * static_cast<std::uint64_t>(args[1].i));
    if (f == "=") return ConcreteValue::boolean(args[0] == args[1]);
    if (f == "!=") return ConcreteValue::boolean(!(args[0] == args[1]));
    if (f == ">=" && ints()) return ConcreteValue::boolean(args[0].i >= args[1].i);
    if (f == "<=" && ints()) return ConcreteValue::boolean(args[0].i <= args[1].i);
    if (f == ">" && ints()) return ConcreteValue::boolean(args[0].i > args[1].i);
    if (f == "<" && ints()) return ConcreteValue::boolean(args[0].i < args[1].i);
    if (f == "and" && bools()) return ConcreteValue::boolean(args[0].b && args[1].b);
    if (f == "or" && bools()) return ConcreteValue::boolean(args[0].b || args[1].b);
    if (f == "not" && bools()) return ConcreteValue::boolean(!args[0].b);
    if (f == "pair") return ConcreteValue::tuple({args[0], args[1]});
    if (f == "id") return args[0];
    return std::nullopt;
}

// ---- evaluation ----

std::optional<InstrValue> try_eval(const Term& e, const InstrumentedStore& store, const Label& l,
                                   const FunctionTable& funs, std::string* reason)
{
    auto fail = [&](std::string why) -> std::optional<InstrValue> {
        if (reason) *reason = std::move(why);
        return std::nullopt;
    };
    auto read = [&](const std::string& loc) -> std::optional<InstrValue> {
        const auto* entry = store.find(loc);
        if (!entry) return fail("unknown location " + loc);
        if (!*entry) return fail("read of undefined " + loc);
        return **entry;
    };
    auto eval_args = [&](const std::vector<TermPtr>& args) -> std::optional<std::vector<InstrValue>> {
        std::vector<InstrValue> out;
        for (const auto& a : args) {
            auto v = try_eval(*a, store, l, funs, reason);
            if (!v) return std::nullopt;
            out.push_back(std::move(*v));
        }
        return out;
    };
    return std::visit(
        [&](const auto& x) -> std::optional<InstrValue> {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Term::Value>)
                return InstrValue{from_literal(x.v), make_tree(value_symbol(l, x.v))};
            else if constexpr (std::is_same_v<T, Term::SensorLoc>)
                return read("#" + std::to_string(x.id));
            else if constexpr (std::is_same_v<T, Term::Var>)
                return read(x.name);
            else if constexpr (std::is_same_v<T, Term::App>) {
                auto args = eval_args(x.args);
                if (!args) return std::nullopt;
                std::vector<ConcreteValue> vs;
                std::vector<ProvTree> ts;
                for (auto& a : *args) {
                    vs.push_back(a.value);
                    ts.push_back(a.prov);
                }
                if (!funs.arity(x.fn)) return fail("unknown function " + x.fn);
                auto v = funs.apply(x.fn, vs);
                if (!v) return fail("evaluator for " + x.fn + " undefined on its arguments");
                return InstrValue{std::move(*v),
                                  make_tree(function_symbol(l, x.fn, static_cast<int>(x.args.size())), std::move(ts))};
            } else {
                auto args = eval_args(x.args);
                if (!args) return std::nullopt;
                std::vector<ConcreteValue> vs;
                std::vector<ProvTree> ts;
                for (auto& a : *args) {
                    vs.push_back(a.value);
                    ts.push_back(a.prov);
                }
                ts.push_back(make_tree(key_symbol(x.key)));
                return InstrValue{ConcreteValue::cipher(std::move(vs), x.key),
                                  make_tree(encryption_symbol(l, static_cast<int>(x.args.size())), std::move(ts))};
            }
        },
        e.node);
}

InstrValue eval_term(const Term& e, const InstrumentedStore& store, const Label& l, const FunctionTable& funs)
{
    std::string why;
    auto v = try_eval(e, store, l, funs, &why);
    if (!v) throw EvalError(why);
    return std::move(*v);
}

std::optional<ConcreteValue> eval_plain(const Term& e, const std::map<std::string, ConcreteValue>& store,
                                        const FunctionTable& funs)
{
    return std::visit(
        [&](const auto& x) -> std::optional<ConcreteValue> {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Term::Value>) return from_literal(x.v);
            else if constexpr (std::is_same_v<T, Term::SensorLoc> || std::is_same_v<T, Term::Var>) {
                std::string loc;
                if constexpr (std::is_same_v<T, Term::Var>) loc = x.name;
                else loc = "#" + std::to_string(x.id);
                auto it = store.find(loc);
                if (it == store.end()) return std::nullopt;
                return it->second;
            } else {
                std::vector<ConcreteValue> vs;
                for (const auto& a : x.args) {
                    auto v = eval_plain(*a, store, funs);
                    if (!v) return std::nullopt;
                    vs.push_back(std::move(*v));
                }
                if constexpr (std::is_same_v<T, Term::App>) return funs.apply(x.fn, vs);
                else return ConcreteValue::cipher(std::move(vs), x.key);
            }
        },
        e.node);
}

// ---- program ----

template <class P>
int Program::number(const P* p, int node, std::map<Ident, const P*>& scope)
{
    if (auto it = pos_of_.find(p); it != pos_of_.end()) return it->second;
    int id = static_cast<int>(positions_.size());
    positions_.push_back(p);
    position_node_.push_back(node);
    binder_.push_back(nullptr);
    pos_of_[p] = id;
    std::visit(
        [&](const auto& x) {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, typename P::Loop>) {
                auto saved = scope;
                scope[x.var] = p;
                number(x.body.get(), node, scope);
                scope = saved;
            } else if constexpr (std::is_same_v<T, typename P::Jump>) {
                auto it = scope.find(x.var);
                binder_[id] = it == scope.end() ? nullptr : it->second;
            } else {
                if constexpr (requires { x.cont; }) number(x.cont.get(), node, scope);
                if constexpr (requires { x.then_branch; }) {
                    number(x.then_branch.get(), node, scope);
                    number(x.else_branch.get(), node, scope);
                }
            }
        },
        p->node);
    return id;
}

int Program::compute_normal(int pos, int fuel)
{
    if (fuel <= 0) throw Error("unguarded recursion");
    if (normal_[pos] != -2) return normal_[pos];
    int result = std::visit(
        [&](const auto* p) -> int {
            using P = std::remove_cv_t<std::remove_pointer_t<decltype(p)>>;
            if (auto* l = std::get_if<typename P::Loop>(&p->node)) return compute_normal(pos_of_.at(l->body.get()), fuel - 1);
            if (std::holds_alternative<typename P::Jump>(p->node)) {
                const void* b = binder_[pos];
                if (!b) throw Error("unbound iteration variable");
                return compute_normal(pos_of_.at(b), fuel - 1);
            }
            if (std::holds_alternative<typename P::Nil>(p->node)) return -1;
            return pos;
        },
        positions_[pos]);
    normal_[pos] = result;
    return result;
}

Program::Program(System sys) : sys_(std::move(sys)), funs_(sys_.preamble.functions)
{
    for (std::size_t n = 0; n < sys_.nodes.size(); ++n) {
        const Node& node = sys_.nodes[n];
        index_[node.label] = static_cast<int>(n);
        NodeData d;
        d.label = node.label;
        auto info = node_info(node);
        for (const auto& v : info.vars) d.locations.push_back(v);
        for (int i : info.sensors) d.locations.push_back("#" + std::to_string(i));
        for (std::size_t k = 0; k < d.locations.size(); ++k) d.slot[d.locations[k]] = static_cast<int>(k);
        d.sensors = info.sensors;
        d.actuators = info.actuators;
        for (int i : info.sensors) {
            std::vector<ConcreteValue> script;
            auto it = sys_.preamble.scripts.find(SensorRef{node.label, i});
            if (it != sys_.preamble.scripts.end())
                for (const auto& v : it->second) script.push_back(from_literal(v));
            if (script.empty()) script.push_back(ConcreteValue::integer(0));
            d.scripts.push_back(std::move(script));
        }
        nodes_.push_back(std::move(d));

        std::vector<Thread> roots;
        for (const auto& c : node.components) {
            if (auto* p = std::get_if<ProcessPtr>(&c)) {
                std::map<Ident, const Process*> scope;
                roots.push_back({ThreadKind::process, -1, number(p->get(), static_cast<int>(n), scope), ""});
            } else if (auto* s = std::get_if<SensorDecl>(&c)) {
                std::map<Ident, const Sensor*> scope;
                roots.push_back({ThreadKind::sensor, s->id, number(s->body.get(), static_cast<int>(n), scope), ""});
            } else if (auto* a = std::get_if<ActuatorDecl>(&c)) {
                std::map<Ident, const Actuator*> scope;
                roots.push_back({ThreadKind::actuator, a->id, number(a->body.get(), static_cast<int>(n), scope), ""});
            }
        }
        roots_.push_back(std::move(roots));
    }
    normal_.assign(positions_.size(), -2);
    for (std::size_t p = 0; p < positions_.size(); ++p)
        compute_normal(static_cast<int>(p), static_cast<int>(positions_.size()) + 2);
}

int Program::node_index(const Label& l) const
{
    auto it = index_.find(l);
    return it == index_.end() ? -1 : it->second;
}

Configuration Program::initial_raw() const
{
    Configuration c;
    for (std::size_t n = 0; n < nodes_.size(); ++n) {
        NodeState s;
        s.threads = roots_[n];
        s.store.assign(nodes_[n].locations.size(), std::nullopt);
        s.cursors.assign(nodes_[n].sensors.size(), 0);
        c.nodes.push_back(std::move(s));
    }
    return c;
}

Configuration Program::initial() const { return normalize(*this, initial_raw()); }

InstrumentedStore Program::store_of(const Configuration& c, int node) const
{
    return {nodes_[node].locations, c.nodes[node].store};
}

// ---- configurations ----

namespace {

int tree_compare(const ProvTree& a, const ProvTree& b)
{
    if (a == b) return 0;
    if (a->hash != b->hash) return a->hash < b->hash ? -1 : 1;
    if (auto c = a->sym <=> b->sym; c != 0) return c < 0 ? -1 : 1;
    if (a->children.size() != b->children.size()) return a->children.size() < b->children.size() ? -1 : 1;
    for (std::size_t i = 0; i < a->children.size(); ++i)
        if (int c = tree_compare(a->children[i], b->children[i])) return c;
    return 0;
}

int instr_compare(const InstrValue& a, const InstrValue& b)
{
    if (auto c = a.value <=> b.value; c != 0) return c < 0 ? -1 : 1;
    return tree_compare(a.prov, b.prov);
}

bool pending_less(const Pending& a, const Pending& b)
{
    if (a.targets != b.targets) return a.targets < b.targets;
    if (a.values.size() != b.values.size()) return a.values.size() < b.values.size();
    for (std::size_t i = 0; i < a.values.size(); ++i)
        if (int c = instr_compare(a.values[i], b.values[i])) return c < 0;
    return false;
}

bool pending_equal(const Pending& a, const Pending& b)
{
    return a.targets == b.targets && a.values == b.values;
}

std::size_t hash_instr(const InstrValue& v) { return mix(hash_value(v.value), v.prov->hash); }

}  // namespace

bool operator==(const Configuration& a, const Configuration& b)
{
    if (a.nodes.size() != b.nodes.size()) return false;
    for (std::size_t n = 0; n < a.nodes.size(); ++n) {
        const auto& x = a.nodes[n];
        const auto& y = b.nodes[n];
        if (x.threads != y.threads || x.cursors != y.cursors || x.store.size() != y.store.size() ||
            x.pending.size() != y.pending.size())
            return false;
        for (std::size_t i = 0; i < x.store.size(); ++i) {
            if (x.store[i].has_value() != y.store[i].has_value()) return false;
            if (x.store[i] && !(*x.store[i] == *y.store[i])) return false;
        }
        for (std::size_t i = 0; i < x.pending.size(); ++i)
            if (!pending_equal(x.pending[i], y.pending[i])) return false;
    }
    return true;
}

std::size_t hash_value(const Configuration& c)
{
    std::size_t h = 0;
    for (const auto& n : c.nodes) {
        for (const auto& t : n.threads) {
            h = mix(h, static_cast<std::size_t>(t.kind));
            h = mix(h, static_cast<std::size_t>(t.id));
            h = mix(h, static_cast<std::size_t>(t.pos));
            h = mix(h, std::hash<std::string>{}(t.fired));
        }
        for (const auto& p : n.pending) {
            for (int t : p.targets) h = mix(h, static_cast<std::size_t>(t));
            for (const auto& v : p.values) h = mix(h, hash_instr(v));
            h = mix(h, 0xabcdef);
        }
        for (const auto& s : n.store) h = mix(h, s ? hash_instr(*s) : 0x1234567);
        for (auto k : n.cursors) h = mix(h, k);
    }
    return h;
}

namespace {

void normalize_node(const Program& prog, NodeState& n)
{
    std::size_t keep = 0;
    for (auto& t : n.threads) {
        t.pos = prog.normalize_pos(t.pos);
        if (t.pos < 0 && t.fired.empty()) continue;
        n.threads[keep++] = std::move(t);
    }
    n.threads.resize(keep);
    std::sort(n.threads.begin(), n.threads.end());
    n.pending.erase(std::remove_if(n.pending.begin(), n.pending.end(),
                                   [](const Pending& p) { return p.targets.empty(); }),
                    n.pending.end());
    std::stable_sort(n.pending.begin(), n.pending.end(), pending_less);
}

void normalize_in_place(const Program& prog, Configuration& out)
{
    for (auto& n : out.nodes) normalize_node(prog, n);
}

}  // namespace

Configuration normalize(const Program& prog, const Configuration& c)
{
    Configuration out = c;
    normalize_in_place(prog, out);
    return out;
}

// ---- rules ----

std::string to_string(Rule r)
{
    switch (r) {
    case Rule::sense: return "Sense";
    case Rule::asgm: return "Asgm";
    case Rule::ev_out: return "Ev-out";
    case Rule::multi_com: return "Multi-com";
    case Rule::cond: return "Cond";
    case Rule::int_: return "Int";
    case Rule::a_com: return "A-com";
    case Rule::act: return "Act";
    case Rule::phys: return "Phys";
    case Rule::decrypt: return "Decrypt";
    }
    return "";
}

std::string to_string(EventKind k)
{
    switch (k) {
    case EventKind::sensed: return "Sensed";
    case EventKind::assigned: return "Assigned";
    case EventKind::evaluated: return "Evaluated";
    case EventKind::msg_sent: return "MsgSent";
    case EventKind::msg_delivered: return "MsgDelivered";
    case EventKind::act_triggered: return "ActTriggered";
    case EventKind::cond_taken: return "CondTaken";
    case EventKind::decrypted: return "Decrypted";
    case EventKind::actuated: return "Actuated";
    }
    return "";
}

namespace {

TraceEvent event(EventKind k, const Label& node, const Label& peer = "", int index = 0, std::string name = "")
{
    TraceEvent e;
    e.kind = k;
    e.node = node;
    e.peer = peer;
    e.index = index;
    e.name = std::move(name);
    return e;
}

struct Engine {
    const Program& prog;
    const Configuration& c;
    SchedulerOptions opts;

    mutable std::vector<std::optional<InstrumentedStore>> stores{};

    const InstrumentedStore& store(int n) const
    {
        if (stores.empty()) stores.resize(c.nodes.size());
        if (!stores[n]) stores[n] = prog.store_of(c, n);
        return *stores[n];
    }

    static const Process* as_process(const Program& prog, int pos)
    {
        return pos < 0 ? nullptr : std::get<const Process*>(prog.position(pos));
    }

    std::optional<std::vector<InstrValue>> eval_all(const std::vector<TermPtr>& ts, const InstrumentedStore& st,
                                                    const Label& l) const
    {
        std::vector<InstrValue> out;
        for (const auto& t : ts) {
            auto v = try_eval(*t, st, l, prog.functions());
            if (!v) return std::nullopt;
            out.push_back(std::move(*v));
        }
        return out;
    }

    static bool prefix_matches(const std::vector<InstrValue>& want, const std::vector<InstrValue>& got)
    {
        for (std::size_t i = 0; i < want.size(); ++i)
            if (!(want[i].value == got[i].value)) return false;
        return true;
    }

    std::size_t script_len(int n, std::size_t k) const { return prog.nodes()[n].scripts[k].size(); }

    std::size_t sensor_slot(int n, int id) const
    {
        const auto& ss = prog.nodes()[n].sensors;
        return static_cast<std::size_t>(std::find(ss.begin(), ss.end(), id) - ss.begin());
    }

    bool can_sense(int n, int id) const
    {
        std::size_t k = sensor_slot(n, id);
        return prog.system().preamble.script_mode != ScriptMode::stuck || c.nodes[n].cursors[k] < script_len(n, k);
    }

    std::size_t advance(int n, std::size_t k, std::size_t cur) const
    {
        std::size_t len = script_len(n, k);
        switch (prog.system().preamble.script_mode) {
        case ScriptMode::cycle: return (cur + 1) % len;
        case ScriptMode::hold: return std::min(cur + 1, len - 1);
        case ScriptMode::stuck: return std::min(cur + 1, len);
        }
        return cur;
    }

    std::vector<std::size_t> phys_cursors(int n) const
    {
        const auto& node = c.nodes[n];
        std::vector<std::size_t> cur = node.cursors;
        const auto& ss = prog.nodes()[n].sensors;
        for (std::size_t k = 0; k < ss.size(); ++k) {
            bool probing = false;
            for (const auto& t : node.threads) {
                if (t.kind != ThreadKind::sensor || t.id != ss[k]) continue;
                int pos = prog.normalize_pos(t.pos);
                if (pos >= 0 && std::holds_alternative<Sensor::Probe>(std::get<const Sensor*>(prog.position(pos))->node))
                    probing = true;
            }
            if (!probing) cur[k] = advance(n, k, cur[k]);
        }
        return cur;
    }

    // Finds an input binding for thread `t` at node n from pending output `p` of node m.
    std::optional<std::vector<InstrValue>> match_input(int n, const Process::In& in, int m, const Pending& p) const
    {
        if (m == n) return std::nullopt;
        if (!std::binary_search(p.targets.begin(), p.targets.end(), n)) return std::nullopt;
        if (!prog.system().preamble.comp(prog.nodes()[m].label, prog.nodes()[n].label)) return std::nullopt;
        if (p.values.size() != in.match.size() + in.binders.size()) return std::nullopt;
        auto want = eval_all(in.match, store(n), prog.nodes()[n].label);
        if (!want || !prefix_matches(*want, p.values)) return std::nullopt;
        return want;
    }

    struct DecryptPlan {
        InstrValue subject;
        std::vector<InstrValue> match;
    };

    std::optional<DecryptPlan> match_decrypt(int n, const Process::Decrypt& d) const
    {
        const auto& st = store(n);
        const Label& l = prog.nodes()[n].label;
        auto subj = try_eval(*d.subject, st, l, prog.functions());
        if (!subj) return std::nullopt;
        const auto& v = subj->value;
        std::size_t r = d.match.size() + d.binders.size();
        if (v.kind != ConcreteValue::Kind::cipher || v.s != d.key || v.items.size() != r) return std::nullopt;
        if (subj->prov->sym.kind != SymbolKind::encryption || subj->prov->children.size() != r + 1) return std::nullopt;
        auto want = eval_all(d.match, st, l);
        if (!want) return std::nullopt;
        for (std::size_t i = 0; i < want->size(); ++i)
            if (!((*want)[i].value == v.items[i])) return std::nullopt;
        return DecryptPlan{*subj, *want};
    }

    int find_actuator(int n, int id, const Ident& action) const
    {
        const auto& threads = c.nodes[n].threads;
        for (std::size_t k = 0; k < threads.size(); ++k) {
            const auto& t = threads[k];
            if (t.kind != ThreadKind::actuator || t.id != id || !t.fired.empty()) continue;
            int pos = prog.normalize_pos(t.pos);
            if (pos < 0) continue;
            auto* a = std::get<const Actuator*>(prog.position(pos));
            if (auto* w = std::get_if<Actuator::Await>(&a->node))
                if (std::find(w->actions.begin(), w->actions.end(), action) != w->actions.end())
                    return static_cast<int>(k);
        }
        return -1;
    }

    std::vector<Redex> enabled() const
    {
        std::vector<Redex> out;
        for (std::size_t ni = 0; ni < c.nodes.size(); ++ni) {
            int n = static_cast<int>(ni);
            const auto& node = c.nodes[ni];
            const Label& l = prog.nodes()[ni].label;
            for (std::size_t ti = 0; ti < node.threads.size(); ++ti) {
                int t = static_cast<int>(ti);
                const Thread& th = node.threads[ti];
                int pos = prog.normalize_pos(th.pos);
                if (th.kind == ThreadKind::actuator) {
                    if (!th.fired.empty()) {
                        out.push_back({Rule::act, n, t});
                        continue;
                    }
                    if (pos < 0) continue;
                    auto* a = std::get<const Actuator*>(prog.position(pos));
                    if (std::holds_alternative<Actuator::Tau>(a->node)) out.push_back({Rule::int_, n, t});
                    if (std::holds_alternative<Actuator::Fire>(a->node)) out.push_back({Rule::act, n, t});
                    continue;
                }
                if (pos < 0) continue;
                if (th.kind == ThreadKind::sensor) {
                    auto* s = std::get<const Sensor*>(prog.position(pos));
                    if (std::holds_alternative<Sensor::Tau>(s->node)) out.push_back({Rule::int_, n, t});
                    if (auto* p = std::get_if<Sensor::Probe>(&s->node))
                        if (can_sense(n, p->id)) out.push_back({Rule::sense, n, t});
                    continue;
                }
                const Process* p = as_process(prog, pos);
                const auto& st = store(n);
                std::visit(
                    [&](const auto& x) {
                        using T = std::decay_t<decltype(x)>;
                        if constexpr (std::is_same_v<T, Process::Assign>) {
                            if (try_eval(*x.rhs, st, l, prog.functions())) out.push_back({Rule::asgm, n, t});
                        } else if constexpr (std::is_same_v<T, Process::Out>) {
                            if (eval_all(x.terms, st, l)) out.push_back({Rule::ev_out, n, t});
                        } else if constexpr (std::is_same_v<T, Process::Cond>) {
                            auto g = try_eval(*x.guard, st, l, prog.functions());
                            if (g && g->value.kind == ConcreteValue::Kind::boolean) out.push_back({Rule::cond, n, t});
                        } else if constexpr (std::is_same_v<T, Process::In>) {
                            for (std::size_t mi = 0; mi < c.nodes.size(); ++mi) {
                                const auto& pend = c.nodes[mi].pending;
                                for (std::size_t pi = 0; pi < pend.size(); ++pi)
                                    if (match_input(n, x, static_cast<int>(mi), pend[pi]))
                                        out.push_back({Rule::multi_com, n, t, static_cast<int>(mi), static_cast<int>(pi)});
                            }
                        } else if constexpr (std::is_same_v<T, Process::Act>) {
                            int k = find_actuator(n, x.actuator, x.action);
                            if (k >= 0) out.push_back({Rule::a_com, n, t, n, k});
                        } else if constexpr (std::is_same_v<T, Process::Decrypt>) {
                            if (match_decrypt(n, x)) out.push_back({Rule::decrypt, n, t});
                        }
                    },
                    p->node);
            }
        }
        if (opts.phys) {
            bool changes = false;
            for (std::size_t n = 0; n < c.nodes.size() && !changes; ++n)
                changes = phys_cursors(static_cast<int>(n)) != c.nodes[n].cursors;
            if (changes) out.push_back({Rule::phys, -1, -1});
        }
        return out;
    }

    [[noreturn]] static void not_enabled() { throw Error("redex is not enabled"); }

    // When c is normal only the nodes a step touched need normalizing again.
    bool local = false;  // c is known to be normal

    Configuration done(Configuration& next, int n = -1, int m = -1) const
    {
        if (n < 0 || !local) {
            normalize_in_place(prog, next);
        } else {
            normalize_node(prog, next.nodes[n]);
            if (m >= 0 && m != n) normalize_node(prog, next.nodes[m]);
        }
        return std::move(next);
    }

    Configuration apply(const Redex& r, std::vector<TraceEvent>* events) const
    {
        Configuration next = c;
        auto emit = [&](TraceEvent e) {
            if (events) events->push_back(std::move(e));
        };
        if (r.rule == Rule::phys) {
            if (!opts.phys) not_enabled();
            for (std::size_t n = 0; n < c.nodes.size(); ++n) next.nodes[n].cursors = phys_cursors(static_cast<int>(n));
            return done(next);
        }
        if (r.node < 0 || r.node >= static_cast<int>(c.nodes.size())) not_enabled();
        const int n = r.node;
        const auto& node = c.nodes[n];
        if (r.thread < 0 || r.thread >= static_cast<int>(node.threads.size())) not_enabled();
        const Thread& th = node.threads[r.thread];
        Thread& nth = next.nodes[n].threads[r.thread];
        const Label& l = prog.nodes()[n].label;
        const auto& slots = prog.nodes()[n].slot;
        const auto& st = store(n);
        int pos = prog.normalize_pos(th.pos);
        auto evaluated = [&](const std::vector<TermPtr>& ts, const std::vector<InstrValue>& vs) {
            if (ts.empty()) return;
            TraceEvent e = event(EventKind::evaluated, l);
            for (std::size_t i = 0; i < ts.size(); ++i) e.values.push_back({to_string(*ts[i]), vs[i]});
            emit(std::move(e));
        };

        if (th.kind == ThreadKind::actuator) {
            if (r.rule == Rule::act) {
                if (!th.fired.empty()) {
                    emit(event(EventKind::actuated, l, "", th.id, th.fired));
                    nth.fired.clear();
                    return done(next, n, r.other_node);
                }
                if (pos < 0) not_enabled();
                auto* a = std::get<const Actuator*>(prog.position(pos));
                auto* f = std::get_if<Actuator::Fire>(&a->node);
                if (!f) not_enabled();
                emit(event(EventKind::actuated, l, "", th.id, f->action));
                nth.pos = prog.normalize_pos(pos_after(f->cont.get()));
                return done(next, n, r.other_node);
            }
            if (r.rule != Rule::int_ || pos < 0 || !th.fired.empty()) not_enabled();
            auto* a = std::get<const Actuator*>(prog.position(pos));
            auto* tau = std::get_if<Actuator::Tau>(&a->node);
            if (!tau) not_enabled();
            nth.pos = pos_after(tau->cont.get());
            return done(next, n, r.other_node);
        }
        if (pos < 0) not_enabled();

        if (th.kind == ThreadKind::sensor) {
            auto* s = std::get<const Sensor*>(prog.position(pos));
            if (r.rule == Rule::int_) {
                auto* tau = std::get_if<Sensor::Tau>(&s->node);
                if (!tau) not_enabled();
                nth.pos = pos_after(tau->cont.get());
                return done(next, n, r.other_node);
            }
            auto* probe = std::get_if<Sensor::Probe>(&s->node);
            if (r.rule != Rule::sense || !probe || !can_sense(n, probe->id)) not_enabled();
            std::size_t k = sensor_slot(n, probe->id);
            std::size_t cur = node.cursors[k];
            InstrValue v{prog.nodes()[n].scripts[k][cur], make_tree(sensor_symbol(l, probe->id))};
            std::string loc = "#" + std::to_string(probe->id);
            next.nodes[n].store[slots.at(loc)] = v;
            next.nodes[n].cursors[k] = advance(n, k, cur);
            nth.pos = pos_after(probe->cont.get());
            TraceEvent e = event(EventKind::sensed, l, "", probe->id, loc);
            e.values.push_back({loc, v});
            emit(std::move(e));
            return done(next, n, r.other_node);
        }

        const Process* p = as_process(prog, pos);
        switch (r.rule) {
        case Rule::asgm: {
            auto* x = std::get_if<Process::Assign>(&p->node);
            if (!x) not_enabled();
            auto v = try_eval(*x->rhs, st, l, prog.functions());
            if (!v) not_enabled();
            evaluated({x->rhs}, {*v});
            next.nodes[n].store[slots.at(x->var)] = *v;
            TraceEvent e = event(EventKind::assigned, l, "", 0, x->var);
            e.values.push_back({x->var, *v});
            emit(std::move(e));
            nth.pos = pos_after(x->cont.get());
            break;
        }
        case Rule::ev_out: {
            auto* x = std::get_if<Process::Out>(&p->node);
            if (!x) not_enabled();
            auto vs = eval_all(x->terms, st, l);
            if (!vs) not_enabled();
            evaluated(x->terms, *vs);
            Pending pend;
            pend.values = *vs;
            std::string names;
            for (const auto& target : x->targets) {
                int m = prog.node_index(target);
                if (m >= 0) pend.targets.push_back(m);
            }
            std::sort(pend.targets.begin(), pend.targets.end());
            pend.targets.erase(std::unique(pend.targets.begin(), pend.targets.end()), pend.targets.end());
            for (int m : pend.targets) names += (names.empty() ? "" : ",") + prog.nodes()[m].label;
            TraceEvent e = event(EventKind::msg_sent, l, "", 0, names);
            for (const auto& v : *vs) e.values.push_back({"", v});
            emit(std::move(e));
            next.nodes[n].pending.push_back(std::move(pend));
            nth.pos = pos_after(x->cont.get());
            break;
        }
        case Rule::cond: {
            auto* x = std::get_if<Process::Cond>(&p->node);
            if (!x) not_enabled();
            auto g = try_eval(*x->guard, st, l, prog.functions());
            if (!g || g->value.kind != ConcreteValue::Kind::boolean) not_enabled();
            evaluated({x->guard}, {*g});
            emit(event(EventKind::cond_taken, l, "", 0, g->value.b ? "then" : "else"));
            nth.pos = pos_after(g->value.b ? x->then_branch.get() : x->else_branch.get());
            break;
        }
        case Rule::multi_com: {
            auto* x = std::get_if<Process::In>(&p->node);
            if (!x || r.other_node < 0 || r.other_node >= static_cast<int>(c.nodes.size())) not_enabled();
            const auto& pend = c.nodes[r.other_node].pending;
            if (r.other < 0 || r.other >= static_cast<int>(pend.size())) not_enabled();
            auto want = match_input(n, *x, r.other_node, pend[r.other]);
            if (!want) not_enabled();
            evaluated(x->match, *want);
            const auto& msg = pend[r.other];
            TraceEvent e = event(EventKind::msg_delivered, prog.nodes()[r.other_node].label, l);
            for (const auto& v : msg.values) e.values.push_back({"", v});
            for (std::size_t i = 0; i < x->binders.size(); ++i) {
                const auto& v = msg.values[x->match.size() + i];
                next.nodes[n].store[slots.at(x->binders[i])] = v;
                e.bindings.push_back({x->binders[i], v});
            }
            emit(std::move(e));
            auto& targets = next.nodes[r.other_node].pending[r.other].targets;
            targets.erase(std::find(targets.begin(), targets.end(), n));
            nth.pos = pos_after(x->cont.get());
            break;
        }
        case Rule::a_com: {
            auto* x = std::get_if<Process::Act>(&p->node);
            if (!x) not_enabled();
            int k = find_actuator(n, x->actuator, x->action);
            if (k < 0 || k != r.other) not_enabled();
            auto& act = next.nodes[n].threads[k];
            auto* a = std::get<const Actuator*>(prog.position(prog.normalize_pos(act.pos)));
            const auto& w = std::get<Actuator::Await>(a->node);
            act.fired = x->action;
            act.pos = pos_after(w.cont.get());
            emit(event(EventKind::act_triggered, l, "", x->actuator, x->action));
            nth.pos = pos_after(x->cont.get());
            break;
        }
        case Rule::decrypt: {
            auto* x = std::get_if<Process::Decrypt>(&p->node);
            if (!x) not_enabled();
            auto plan = match_decrypt(n, *x);
            if (!plan) not_enabled();
            std::vector<TermPtr> ts{x->subject};
            std::vector<InstrValue> vs{plan->subject};
            ts.insert(ts.end(), x->match.begin(), x->match.end());
            vs.insert(vs.end(), plan->match.begin(), plan->match.end());
            evaluated(ts, vs);
            TraceEvent e = event(EventKind::decrypted, l);
            for (std::size_t i = 0; i < x->binders.size(); ++i) {
                std::size_t at = x->match.size() + i;
                InstrValue v{plan->subject.value.items[at], plan->subject.prov->children[at]};
                next.nodes[n].store[slots.at(x->binders[i])] = v;
                e.bindings.push_back({x->binders[i], v});
            }
            emit(std::move(e));
            nth.pos = pos_after(x->cont.get());
            break;
        }
        default: not_enabled();
        }
        return done(next, n, r.other_node);
    }

    int pos_after(const void* p) const { return prog.position_of(p); }
};

}  // namespace

std::vector<Redex> enabled(const Program& prog, const Configuration& c, const SchedulerOptions& opts)
{
    return Engine{prog, c, opts}.enabled();
}

namespace {

Configuration step_normal(const Program& prog, const Configuration& c, const Redex& r, std::vector<TraceEvent>* events)
{
    SchedulerOptions opts;
    opts.phys = r.rule == Rule::phys;
    Engine e{prog, c, opts};
    e.local = true;
    return e.apply(r, events);
}

}  // namespace

Configuration step(const Program& prog, const Configuration& c, const Redex& r, std::vector<TraceEvent>* events)
{
    SchedulerOptions opts;
    opts.phys = r.rule == Rule::phys;
    return Engine{prog, c, opts}.apply(r, events);
}

RunResult run(const Program& prog, const Configuration& c0, std::uint64_t seed, std::size_t max_steps,
              const SchedulerOptions& opts)
{
    RunResult res;
    res.final_config = normalize(prog, c0);
    std::mt19937_64 rng(seed);
    for (std::size_t k = 0; k < max_steps; ++k) {
        auto en = enabled(prog, res.final_config, opts);
        if (en.empty()) {
            res.stop_reason = "stuck";
            return res;
        }
        const Redex& r = en[rng() % en.size()];
        StepRecord rec;
        rec.step = k + 1;
        rec.rule = r.rule;
        res.final_config = step_normal(prog, res.final_config, r, &rec.events);
        res.steps.push_back(std::move(rec));
    }
    res.stop_reason = enabled(prog, res.final_config, opts).empty() ? "stuck" : "budget";
    return res;
}

ExploreResult explore(const Program& prog, const Configuration& c0, const ExploreOptions& opts)
{
    ExploreResult res;
    auto hash = [&](std::size_t k) { return hash_value(res.configs[k]); };
    auto eq = [&](std::size_t a, std::size_t b) { return res.configs[a] == res.configs[b]; };
    std::unordered_set<std::size_t, decltype(hash), decltype(eq)> seen(64, hash, eq);
    res.configs.push_back(normalize(prog, c0));
    res.depth.push_back(0);
    res.parent.push_back(0);
    res.parent_step.push_back({});
    seen.insert(0);
    std::deque<std::size_t> queue{0};
    while (!queue.empty()) {
        std::size_t i = queue.front();
        queue.pop_front();
        if (res.depth[i] >= opts.depth) continue;
        for (const auto& r : enabled(prog, res.configs[i], opts.sched)) {
            StepRecord rec;
            rec.step = res.depth[i] + 1;
            rec.rule = r.rule;
            // probe with a tentative slot at the end of configs
            res.configs.push_back(step_normal(prog, res.configs[i], r, &rec.events));
            std::size_t cand = res.configs.size() - 1;
            std::size_t to;
            if (auto it = seen.find(cand); it != seen.end()) {
                to = *it;
                res.configs.pop_back();
            } else if (cand >= opts.cap) {
                res.configs.pop_back();
                res.truncated = true;
                continue;
            } else {
                to = cand;
                seen.insert(to);
                res.depth.push_back(res.depth[i] + 1);
                res.parent.push_back(i);
                res.parent_step.push_back(rec);
                queue.push_back(to);
            }
            if (opts.keep_transitions) res.transitions.push_back({i, to, std::move(rec)});
        }
    }
    return res;
}

namespace {

// Second, independent hash so that visited sets can keep 128-bit fingerprints only.
std::size_t fingerprint2(const Configuration& c)
{
    std::size_t h = 0xcbf29ce484222325ULL;
    auto feed = [&](std::size_t v) {
        h ^= v;
        h *= 0x100000001b3ULL;
    };
    for (const auto& n : c.nodes) {
        feed(n.threads.size());
        for (const auto& t : n.threads) {
            feed(static_cast<std::size_t>(t.pos) * 31 + static_cast<std::size_t>(t.id));
            feed(std::hash<std::string>{}(t.fired));
        }
        for (const auto& p : n.pending) {
            feed(p.targets.size() * 1000003 + p.values.size());
            for (int t : p.targets) feed(static_cast<std::size_t>(t));
            for (const auto& v : p.values) feed(hash_instr(v) * 3 + 1);
        }
        for (const auto& v : n.store) feed(v ? hash_instr(*v) : 7);
        for (auto k : n.cursors) feed(k + 11);
    }
    return h;
}

struct Fingerprint {
    std::size_t a = 0;
    std::size_t b = 0;
    bool operator==(const Fingerprint&) const = default;
};

struct FingerprintHash {
    std::size_t operator()(const Fingerprint& f) const { return f.a; }
};

}  // namespace

WalkStats explore_each(const Program& prog, const Configuration& c0, const ExploreOptions& opts,
                       const std::function<void(const Configuration&)>& on_config,
                       const std::function<void(const Configuration&, const StepRecord&)>& on_step)
{
    WalkStats stats;
    // best remaining budget with which each configuration has been expanded
    std::unordered_map<Fingerprint, std::size_t, FingerprintHash> seen;
    struct Frame {
        Configuration config;
        std::vector<Redex> redexes;
        std::size_t next = 0;
    };
    std::vector<Frame> stack;
    auto enter = [&](Configuration c) {
        Fingerprint f{hash_value(c), fingerprint2(c)};
        std::size_t budget = opts.depth - stack.size();
        auto [it, fresh] = seen.try_emplace(f, budget);
        if (fresh) {
            ++stats.configs;
            if (on_config) on_config(c);
        } else if (it->second >= budget) {
            return;
        } else {
            it->second = budget;
        }
        if (seen.size() > opts.cap) {
            stats.truncated = true;
            return;
        }
        Frame fr{std::move(c), {}, 0};
        if (budget > 0) fr.redexes = enabled(prog, fr.config, opts.sched);
        stack.push_back(std::move(fr));
    };
    enter(normalize(prog, c0));
    while (!stack.empty()) {
        Frame& top = stack.back();
        if (top.next == top.redexes.size()) {
            stack.pop_back();
            continue;
        }
        const Redex r = top.redexes[top.next++];
        StepRecord rec;
        rec.step = stack.size();
        rec.rule = r.rule;
        Configuration next = step_normal(prog, top.config, r, &rec.events);
        ++stats.transitions;
        if (on_step) on_step(top.config, rec);
        enter(std::move(next));
    }
    stats.max_fingerprints = seen.size();
    return stats;
}

}  // namespace ilysa
