#include "ilysa/ast.hpp"

#include <algorithm>
#include <functional>

namespace ilysa {

std::string literal_text(const Literal& v)
{
    struct V {
        std::string operator()(std::int64_t i) const { return std::to_string(i); }
        std::string operator()(bool b) const { return b ? "true" : "false"; }
        std::string operator()(const std::string& s) const
        {
            std::string out = "\"";
            for (char c : s) {
                if (c == '"' || c == '\\') out += '\\';
                if (c == '\n') {
                    out += "\\n";
                    continue;
                }
                out += c;
            }
            return out + "\"";
        }
        std::string operator()(const Atom& a) const { return a.name; }
    };
    return std::visit(V{}, v);
}

TermPtr make_value(Literal v) { return std::make_shared<Term>(Term{Term::Value{std::move(v)}}); }
TermPtr make_sensor_loc(int id) { return std::make_shared<Term>(Term{Term::SensorLoc{id}}); }
TermPtr make_var(Ident x) { return std::make_shared<Term>(Term{Term::Var{std::move(x)}}); }
TermPtr make_app(Ident f, std::vector<TermPtr> args)
{
    return std::make_shared<Term>(Term{Term::App{std::move(f), std::move(args)}});
}
TermPtr make_enc(std::vector<TermPtr> args, Ident key)
{
    return std::make_shared<Term>(Term{Term::Enc{std::move(args), std::move(key)}});
}

ProcessPtr make_process(decltype(Process::node) n) { return std::make_shared<Process>(Process{std::move(n)}); }
SensorPtr make_sensor(decltype(Sensor::node) n) { return std::make_shared<Sensor>(Sensor{std::move(n)}); }
ActuatorPtr make_actuator(decltype(Actuator::node) n)
{
    return std::make_shared<Actuator>(Actuator{std::move(n)});
}

const Node* System::find(const Label& l) const
{
    for (const auto& n : nodes)
        if (n.label == l) return &n;
    return nullptr;
}

std::optional<int> builtin_arity(const std::string& f)
{
    static const std::map<std::string, int> table = {
        {"+", 2}, {"-", 2}, {"*", 2}, {"=", 2}, {"!=", 2}, {">=", 2}, {"<=", 2},
        {">", 2}, {"<", 2}, {"and", 2}, {"or", 2}, {"not", 1}, {"pair", 2}, {"id", 1},
    };
    auto it = table.find(f);
    if (it == table.end()) return std::nullopt;
    return it->second;
}

// ---- equality ----

namespace {

bool equal_terms(const std::vector<TermPtr>& a, const std::vector<TermPtr>& b)
{
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!equal(*a[i], *b[i])) return false;
    return true;
}

template <class P>
bool equal_ptr(const std::shared_ptr<const P>& a, const std::shared_ptr<const P>& b)
{
    if (!a || !b) return a == b;
    return equal(*a, *b);
}

}  // namespace

bool equal(const Term& a, const Term& b)
{
    if (a.node.index() != b.node.index()) return false;
    return std::visit(
        [&](const auto& x) -> bool {
            using T = std::decay_t<decltype(x)>;
            const auto& y = std::get<T>(b.node);
            if constexpr (std::is_same_v<T, Term::Value>) return x.v == y.v;
            else if constexpr (std::is_same_v<T, Term::SensorLoc>) return x.id == y.id;
            else if constexpr (std::is_same_v<T, Term::Var>) return x.name == y.name;
            else if constexpr (std::is_same_v<T, Term::App>) return x.fn == y.fn && equal_terms(x.args, y.args);
            else return x.key == y.key && equal_terms(x.args, y.args);
        },
        a.node);
}

bool equal(const Process& a, const Process& b)
{
    if (a.node.index() != b.node.index()) return false;
    return std::visit(
        [&](const auto& x) -> bool {
            using T = std::decay_t<decltype(x)>;
            const auto& y = std::get<T>(b.node);
            if constexpr (std::is_same_v<T, Process::Nil>) return true;
            else if constexpr (std::is_same_v<T, Process::Out>)
                return equal_terms(x.terms, y.terms) && x.targets == y.targets && equal_ptr(x.cont, y.cont);
            else if constexpr (std::is_same_v<T, Process::In>)
                return equal_terms(x.match, y.match) && x.binders == y.binders && equal_ptr(x.cont, y.cont);
            else if constexpr (std::is_same_v<T, Process::Cond>)
                return equal(*x.guard, *y.guard) && equal_ptr(x.then_branch, y.then_branch) &&
                       equal_ptr(x.else_branch, y.else_branch);
            else if constexpr (std::is_same_v<T, Process::Loop>) return x.var == y.var && equal_ptr(x.body, y.body);
            else if constexpr (std::is_same_v<T, Process::Jump>) return x.var == y.var;
            else if constexpr (std::is_same_v<T, Process::Assign>)
                return x.var == y.var && equal(*x.rhs, *y.rhs) && equal_ptr(x.cont, y.cont);
            else if constexpr (std::is_same_v<T, Process::Act>)
                return x.actuator == y.actuator && x.action == y.action && equal_ptr(x.cont, y.cont);
            else
                return equal(*x.subject, *y.subject) && equal_terms(x.match, y.match) && x.binders == y.binders &&
                       x.key == y.key && equal_ptr(x.cont, y.cont);
        },
        a.node);
}

bool equal(const Sensor& a, const Sensor& b)
{
    if (a.node.index() != b.node.index()) return false;
    return std::visit(
        [&](const auto& x) -> bool {
            using T = std::decay_t<decltype(x)>;
            const auto& y = std::get<T>(b.node);
            if constexpr (std::is_same_v<T, Sensor::Nil>) return true;
            else if constexpr (std::is_same_v<T, Sensor::Tau>) return equal_ptr(x.cont, y.cont);
            else if constexpr (std::is_same_v<T, Sensor::Probe>) return x.id == y.id && equal_ptr(x.cont, y.cont);
            else if constexpr (std::is_same_v<T, Sensor::Loop>) return x.var == y.var && equal_ptr(x.body, y.body);
            else return x.var == y.var;
        },
        a.node);
}

bool equal(const Actuator& a, const Actuator& b)
{
    if (a.node.index() != b.node.index()) return false;
    return std::visit(
        [&](const auto& x) -> bool {
            using T = std::decay_t<decltype(x)>;
            const auto& y = std::get<T>(b.node);
            if constexpr (std::is_same_v<T, Actuator::Nil>) return true;
            else if constexpr (std::is_same_v<T, Actuator::Tau>) return equal_ptr(x.cont, y.cont);
            else if constexpr (std::is_same_v<T, Actuator::Await>)
                return x.id == y.id && x.actions == y.actions && equal_ptr(x.cont, y.cont);
            else if constexpr (std::is_same_v<T, Actuator::Fire>)
                return x.action == y.action && equal_ptr(x.cont, y.cont);
            else if constexpr (std::is_same_v<T, Actuator::Loop>) return x.var == y.var && equal_ptr(x.body, y.body);
            else return x.var == y.var;
        },
        a.node);
}

namespace {

bool equal_component(const Component& a, const Component& b)
{
    if (a.index() != b.index()) return false;
    if (auto* s = std::get_if<StoreDecl>(&a)) return s->vars == std::get<StoreDecl>(b).vars;
    if (auto* p = std::get_if<ProcessPtr>(&a)) return equal(**p, *std::get<ProcessPtr>(b));
    if (auto* s = std::get_if<SensorDecl>(&a)) {
        const auto& t = std::get<SensorDecl>(b);
        return s->id == t.id && equal(*s->body, *t.body);
    }
    const auto& x = std::get<ActuatorDecl>(a);
    const auto& y = std::get<ActuatorDecl>(b);
    return x.id == y.id && equal(*x.body, *y.body);
}

bool equal_functions(const std::vector<FunctionDecl>& a, const std::vector<FunctionDecl>& b)
{
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].name != b[i].name || a[i].arity != b[i].arity || a[i].kind != b[i].kind || a[i].tags != b[i].tags)
            return false;
    return true;
}

}  // namespace

bool equal(const System& a, const System& b)
{
    if (a.name != b.name || a.nodes.size() != b.nodes.size()) return false;
    const auto& pa = a.preamble;
    const auto& pb = b.preamble;
    if (!equal_functions(pa.functions, pb.functions) || pa.keys != pb.keys || !(pa.comp == pb.comp) ||
        pa.scripts != pb.scripts || pa.script_mode != pb.script_mode || !(pa.policy == pb.policy))
        return false;
    for (std::size_t i = 0; i < a.nodes.size(); ++i) {
        const auto& x = a.nodes[i];
        const auto& y = b.nodes[i];
        if (x.label != y.label || x.components.size() != y.components.size()) return false;
        for (std::size_t j = 0; j < x.components.size(); ++j)
            if (!equal_component(x.components[j], y.components[j])) return false;
    }
    return true;
}

NodeInfo node_info(const Node& n)
{
    NodeInfo info;
    for (const auto& c : n.components) {
        if (auto* s = std::get_if<StoreDecl>(&c))
            info.vars.insert(info.vars.end(), s->vars.begin(), s->vars.end());
        else if (auto* s = std::get_if<SensorDecl>(&c))
            info.sensors.push_back(s->id);
        else if (auto* a = std::get_if<ActuatorDecl>(&c))
            info.actuators.push_back(a->id);
    }
    return info;
}

// ---- free variables ----

namespace {

void term_reads(const Term& t, const std::set<Ident>& bound, std::set<Ident>& out)
{
    std::visit(
        [&](const auto& x) {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Term::Var>) {
                if (!bound.count(x.name)) out.insert(x.name);
            } else if constexpr (std::is_same_v<T, Term::App> || std::is_same_v<T, Term::Enc>) {
                for (const auto& a : x.args) term_reads(*a, bound, out);
            }
        },
        t.node);
}

void process_reads(const Process& p, std::set<Ident> bound, std::set<Ident>& out)
{
    std::visit(
        [&](const auto& x) {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Process::Out>) {
                for (const auto& t : x.terms) term_reads(*t, bound, out);
                process_reads(*x.cont, bound, out);
            } else if constexpr (std::is_same_v<T, Process::In>) {
                for (const auto& t : x.match) term_reads(*t, bound, out);
                bound.insert(x.binders.begin(), x.binders.end());
                process_reads(*x.cont, bound, out);
            } else if constexpr (std::is_same_v<T, Process::Cond>) {
                term_reads(*x.guard, bound, out);
                process_reads(*x.then_branch, bound, out);
                process_reads(*x.else_branch, bound, out);
            } else if constexpr (std::is_same_v<T, Process::Loop>) {
                process_reads(*x.body, bound, out);
            } else if constexpr (std::is_same_v<T, Process::Assign>) {
                term_reads(*x.rhs, bound, out);
                bound.insert(x.var);
                process_reads(*x.cont, bound, out);
            } else if constexpr (std::is_same_v<T, Process::Act>) {
                process_reads(*x.cont, bound, out);
            } else if constexpr (std::is_same_v<T, Process::Decrypt>) {
                term_reads(*x.subject, bound, out);
                for (const auto& t : x.match) term_reads(*t, bound, out);
                bound.insert(x.binders.begin(), x.binders.end());
                process_reads(*x.cont, bound, out);
            }
        },
        p.node);
}

}  // namespace

std::set<Ident> free_variables(const Process& p)
{
    std::set<Ident> out;
    process_reads(p, {}, out);
    return out;
}

// ---- well-formedness ----

namespace {

struct Checker {
    const System& sys;
    std::vector<Diagnostic>& diags;
    std::map<Ident, int> arities;
    std::set<Ident> keys;
    std::set<Label> labels;

    // per node
    std::string where;
    std::set<Ident> vars;
    std::set<int> sensors;
    std::set<int> actuators;

    void report(std::string msg) { diags.push_back({where, std::move(msg)}); }

    void term(const Term& t)
    {
        std::visit(
            [&](const auto& x) {
                using T = std::decay_t<decltype(x)>;
                if constexpr (std::is_same_v<T, Term::SensorLoc>) {
                    if (!sensors.count(x.id)) report("undeclared sensor location #" + std::to_string(x.id));
                } else if constexpr (std::is_same_v<T, Term::Var>) {
                    if (!vars.count(x.name)) report("undeclared variable " + x.name);
                } else if constexpr (std::is_same_v<T, Term::App>) {
                    auto it = arities.find(x.fn);
                    if (it == arities.end())
                        report("undeclared function " + x.fn);
                    else if (it->second != static_cast<int>(x.args.size()))
                        report("arity mismatch for " + x.fn + ": expected " + std::to_string(it->second) + ", got " +
                               std::to_string(x.args.size()));
                    for (const auto& a : x.args) term(*a);
                } else if constexpr (std::is_same_v<T, Term::Enc>) {
                    if (!keys.count(x.key)) report("undeclared key " + x.key);
                    if (x.args.empty()) report("encryption of an empty tuple");
                    for (const auto& a : x.args) term(*a);
                }
            },
            t.node);
    }

    void binders(const std::vector<Ident>& xs)
    {
        std::set<Ident> seen;
        for (const auto& x : xs) {
            if (!vars.count(x)) report("binder " + x + " is not a store variable");
            if (!seen.insert(x).second) report("binder " + x + " repeated");
        }
    }

    // Loop variables reachable without crossing a prefix.
    template <class P>
    static void head_jumps(const P& p, std::set<Ident>& out)
    {
        if (auto* l = std::get_if<typename P::Loop>(&p.node))
            head_jumps(*l->body, out);
        else if (auto* j = std::get_if<typename P::Jump>(&p.node))
            out.insert(j->var);
    }

    template <class P>
    bool loop_common(const P& p, std::vector<Ident>& scope)
    {
        if (auto* l = std::get_if<typename P::Loop>(&p.node)) {
            if (std::find(scope.begin(), scope.end(), l->var) != scope.end())
                report("iteration variable " + l->var + " shadows an enclosing binding");
            std::set<Ident> heads;
            head_jumps(*l->body, heads);
            if (heads.count(l->var)) report("unguarded recursion on " + l->var);
            return true;
        }
        if (auto* j = std::get_if<typename P::Jump>(&p.node)) {
            if (std::find(scope.begin(), scope.end(), j->var) == scope.end())
                report("unbound iteration variable " + j->var);
            return true;
        }
        return false;
    }

    void process(const Process& p, std::vector<Ident>& scope)
    {
        if (loop_common(p, scope)) {
            if (auto* l = std::get_if<Process::Loop>(&p.node)) {
                scope.push_back(l->var);
                process(*l->body, scope);
                scope.pop_back();
            }
            return;
        }
        std::visit(
            [&](const auto& x) {
                using T = std::decay_t<decltype(x)>;
                if constexpr (std::is_same_v<T, Process::Out>) {
                    if (x.terms.empty()) report("output of an empty tuple");
                    for (const auto& t : x.terms) term(*t);
                    for (const auto& l : x.targets)
                        if (!labels.count(l)) report("output to unknown node " + l);
                    process(*x.cont, scope);
                } else if constexpr (std::is_same_v<T, Process::In>) {
                    if (x.match.size() + x.binders.size() == 0) report("input of an empty tuple");
                    for (const auto& t : x.match) term(*t);
                    binders(x.binders);
                    process(*x.cont, scope);
                } else if constexpr (std::is_same_v<T, Process::Cond>) {
                    term(*x.guard);
                    process(*x.then_branch, scope);
                    process(*x.else_branch, scope);
                } else if constexpr (std::is_same_v<T, Process::Assign>) {
                    if (!vars.count(x.var)) report("assignment to undeclared variable " + x.var);
                    term(*x.rhs);
                    process(*x.cont, scope);
                } else if constexpr (std::is_same_v<T, Process::Act>) {
                    if (!actuators.count(x.actuator))
                        report("command for undeclared actuator " + std::to_string(x.actuator));
                    process(*x.cont, scope);
                } else if constexpr (std::is_same_v<T, Process::Decrypt>) {
                    term(*x.subject);
                    for (const auto& t : x.match) term(*t);
                    binders(x.binders);
                    if (!keys.count(x.key)) report("undeclared key " + x.key);
                    if (x.match.size() + x.binders.size() == 0) report("decryption of an empty tuple");
                    process(*x.cont, scope);
                }
            },
            p.node);
    }

    void sensor(const Sensor& s, int id, std::vector<Ident>& scope)
    {
        if (loop_common(s, scope)) {
            if (auto* l = std::get_if<Sensor::Loop>(&s.node)) {
                scope.push_back(l->var);
                sensor(*l->body, id, scope);
                scope.pop_back();
            }
            return;
        }
        if (auto* t = std::get_if<Sensor::Tau>(&s.node)) sensor(*t->cont, id, scope);
        if (auto* p = std::get_if<Sensor::Probe>(&s.node)) {
            if (p->id != id)
                report("sensor " + std::to_string(id) + " probes location " + std::to_string(p->id));
            sensor(*p->cont, id, scope);
        }
    }

    void actuator(const Actuator& a, int id, std::vector<Ident>& scope)
    {
        if (loop_common(a, scope)) {
            if (auto* l = std::get_if<Actuator::Loop>(&a.node)) {
                scope.push_back(l->var);
                actuator(*l->body, id, scope);
                scope.pop_back();
            }
            return;
        }
        if (auto* t = std::get_if<Actuator::Tau>(&a.node)) actuator(*t->cont, id, scope);
        if (auto* w = std::get_if<Actuator::Await>(&a.node)) {
            if (w->id != id)
                report("actuator " + std::to_string(id) + " awaits commands for " + std::to_string(w->id));
            actuator(*w->cont, id, scope);
        }
        if (auto* f = std::get_if<Actuator::Fire>(&a.node)) actuator(*f->cont, id, scope);
    }

    void run()
    {
        for (const auto& f : sys.preamble.functions) {
            where = "fun " + f.name;
            if (builtin_arity(f.name)) report("redeclares builtin " + f.name);
            if (!arities.emplace(f.name, f.arity).second) report("duplicate function " + f.name);
            if (f.kind == EvaluatorKind::tagtest && f.arity != 1) report("tagtest functions take one argument");
        }
        for (const char* b : {"+", "-", "*", "=", "!=", ">=", "<=", ">", "<", "and", "or", "not", "pair", "id"})
            arities.emplace(b, *builtin_arity(b));
        keys.insert(sys.preamble.keys.begin(), sys.preamble.keys.end());

        for (const auto& n : sys.nodes) {
            where = "node " + n.label;
            if (n.label.empty()) report("empty label");
            if (!labels.insert(n.label).second) report("duplicate node label " + n.label);
        }

        where = "comp";
        for (const auto& set : {sys.preamble.comp.allowed, sys.preamble.comp.removed})
            for (const auto& [a, b] : set)
                if (!labels.count(a) || !labels.count(b)) report("edge " + a + " -> " + b + " names an unknown node");

        for (const auto& n : sys.nodes) {
            where = "node " + n.label;
            vars.clear();
            sensors.clear();
            actuators.clear();
            int stores = 0;
            for (const auto& c : n.components) {
                if (auto* s = std::get_if<StoreDecl>(&c)) {
                    ++stores;
                    for (const auto& v : s->vars)
                        if (!vars.insert(v).second) report("duplicate variable " + v);
                } else if (auto* s = std::get_if<SensorDecl>(&c)) {
                    if (!sensors.insert(s->id).second) report("duplicate sensor " + std::to_string(s->id));
                } else if (auto* a = std::get_if<ActuatorDecl>(&c)) {
                    if (!actuators.insert(a->id).second) report("duplicate actuator " + std::to_string(a->id));
                }
            }
            if (stores == 0) report("missing store");
            if (stores > 1) report("duplicate store");
            for (const auto& c : n.components) {
                std::vector<Ident> scope;
                if (auto* p = std::get_if<ProcessPtr>(&c))
                    process(**p, scope);
                else if (auto* s = std::get_if<SensorDecl>(&c))
                    sensor(*s->body, s->id, scope);
                else if (auto* a = std::get_if<ActuatorDecl>(&c))
                    actuator(*a->body, a->id, scope);
            }
        }

        for (const auto& [ref, values] : sys.preamble.scripts) {
            where = "script " + ref.node + "#" + std::to_string(ref.id);
            const Node* n = sys.find(ref.node);
            if (!n) {
                report("script for unknown node");
                continue;
            }
            auto info = node_info(*n);
            if (std::find(info.sensors.begin(), info.sensors.end(), ref.id) == info.sensors.end())
                report("script for undeclared sensor");
            if (values.empty()) report("empty script");
        }

        const auto& pol = sys.preamble.policy;
        where = "policy";
        for (const auto& set : {pol.secret, pol.confined})
            for (const auto& ref : set) {
                const Node* n = sys.find(ref.node);
                if (!n) {
                    report("unknown node " + ref.node);
                    continue;
                }
                auto info = node_info(*n);
                if (std::find(info.sensors.begin(), info.sensors.end(), ref.id) == info.sensors.end())
                    report("unknown sensor " + ref.node + "#" + std::to_string(ref.id));
            }
        for (const auto& f : pol.anonymisers)
            if (!arities.count(f)) report("unknown anonymiser " + f);
        if (pol.subsystem)
            for (const auto& l : *pol.subsystem)
                if (!labels.count(l)) report("unknown node " + l);
        for (const auto& [l, lvl] : pol.levels)
            if (!labels.count(l)) report("unknown node " + l);
        if (pol.flows)
            for (const auto& [l, targets] : *pol.flows) {
                if (!labels.count(l)) report("unknown node " + l);
                for (const auto& t : targets)
                    if (!labels.count(t)) report("unknown node " + t);
            }
    }
};

}  // namespace

std::vector<Diagnostic> well_formed(const System& s)
{
    std::vector<Diagnostic> diags;
    Checker c{s, diags, {}, {}, {}, {}, {}, {}, {}};
    c.run();
    return diags;
}

// ---- size ----

namespace {

std::size_t count_term(const Term& t)
{
    std::size_t n = 1;
    if (auto* a = std::get_if<Term::App>(&t.node))
        for (const auto& x : a->args) n += count_term(*x);
    if (auto* e = std::get_if<Term::Enc>(&t.node))
        for (const auto& x : e->args) n += count_term(*x);
    return n;
}

std::size_t count_terms(const std::vector<TermPtr>& ts)
{
    std::size_t n = 0;
    for (const auto& t : ts) n += count_term(*t);
    return n;
}

std::size_t count_process(const Process& p)
{
    return 1 + std::visit(
                   [](const auto& x) -> std::size_t {
                       using T = std::decay_t<decltype(x)>;
                       if constexpr (std::is_same_v<T, Process::Out>) return count_terms(x.terms) + count_process(*x.cont);
                       else if constexpr (std::is_same_v<T, Process::In>)
                           return count_terms(x.match) + count_process(*x.cont);
                       else if constexpr (std::is_same_v<T, Process::Cond>)
                           return count_term(*x.guard) + count_process(*x.then_branch) + count_process(*x.else_branch);
                       else if constexpr (std::is_same_v<T, Process::Loop>) return count_process(*x.body);
                       else if constexpr (std::is_same_v<T, Process::Assign>)
                           return count_term(*x.rhs) + count_process(*x.cont);
                       else if constexpr (std::is_same_v<T, Process::Act>) return count_process(*x.cont);
                       else if constexpr (std::is_same_v<T, Process::Decrypt>)
                           return count_term(*x.subject) + count_terms(x.match) + count_process(*x.cont);
                       else return 0;
                   },
                   p.node);
}

template <class P>
std::size_t count_simple(const P& p)
{
    return 1 + std::visit(
                   [](const auto& x) -> std::size_t {
                       if constexpr (requires { x.cont; }) return count_simple(*x.cont);
                       else if constexpr (requires { x.body; }) return count_simple(*x.body);
                       else return 0;
                   },
                   p.node);
}

}  // namespace

std::size_t node_count(const System& s)
{
    std::size_t n = 1;
    for (const auto& node : s.nodes) {
        ++n;
        for (const auto& c : node.components) {
            ++n;
            if (auto* p = std::get_if<ProcessPtr>(&c)) n += count_process(**p);
            if (auto* x = std::get_if<SensorDecl>(&c)) n += count_simple(*x->body);
            if (auto* x = std::get_if<ActuatorDecl>(&c)) n += count_simple(*x->body);
        }
    }
    return n;
}

}  // namespace ilysa
