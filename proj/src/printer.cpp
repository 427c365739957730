#include "ilysa/ast.hpp"

#include <sstream>

namespace ilysa {

namespace {

bool is_infix(const std::string& f)
{
    static const std::set<std::string> ops = {"+", "-", "*", "=", "!=", ">=", "<=", ">", "<", "and", "or"};
    return ops.count(f) > 0;
}

template <class T, class F>
std::string join(const std::vector<T>& xs, F&& f, const char* sep = ", ")
{
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += sep;
        out += f(xs[i]);
    }
    return out;
}

std::string terms(const std::vector<TermPtr>& ts)
{
    return join(ts, [](const TermPtr& t) { return to_string(*t); });
}

std::string idents(const std::vector<Ident>& xs)
{
    return join(xs, [](const Ident& x) { return x; });
}

std::string tuple_pattern(const std::vector<TermPtr>& match, const std::vector<Ident>& binders)
{
    std::string out = terms(match) + ";";
    if (!binders.empty()) out += " " + idents(binders);
    return out;
}

std::string edge_set(const std::set<Edge>& edges)
{
    std::string out = "{";
    bool first = true;
    for (const auto& [a, b] : edges) {
        out += first ? " " : ", ";
        first = false;
        out += a + " -> " + b;
    }
    return out + (edges.empty() ? "}" : " }");
}

std::string sensor_refs(const std::set<SensorRef>& refs)
{
    std::string out;
    for (const auto& r : refs) {
        if (!out.empty()) out += ", ";
        out += r.node + "#" + std::to_string(r.id);
    }
    return out;
}

}  // namespace

std::string to_string(const Term& t)
{
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Term::Value>) return literal_text(x.v);
            else if constexpr (std::is_same_v<T, Term::SensorLoc>) return "#" + std::to_string(x.id);
            else if constexpr (std::is_same_v<T, Term::Var>) return x.name;
            else if constexpr (std::is_same_v<T, Term::App>) {
                if (is_infix(x.fn) && x.args.size() == 2)
                    return "(" + to_string(*x.args[0]) + " " + x.fn + " " + to_string(*x.args[1]) + ")";
                return x.fn + "(" + terms(x.args) + ")";
            } else
                return "{" + terms(x.args) + "}_" + x.key;
        },
        t.node);
}

std::string prefix_text(const Process& p)
{
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Process::Nil>) return "0";
            else if constexpr (std::is_same_v<T, Process::Out>)
                return "out(" + terms(x.terms) + ") to {" + idents(x.targets) + "}";
            else if constexpr (std::is_same_v<T, Process::In>) return "in(" + tuple_pattern(x.match, x.binders) + ")";
            else if constexpr (std::is_same_v<T, Process::Cond>) return "if " + to_string(*x.guard);
            else if constexpr (std::is_same_v<T, Process::Loop>) return "mu " + x.var;
            else if constexpr (std::is_same_v<T, Process::Jump>) return x.var;
            else if constexpr (std::is_same_v<T, Process::Assign>) return x.var + " := " + to_string(*x.rhs);
            else if constexpr (std::is_same_v<T, Process::Act>)
                return "act(" + std::to_string(x.actuator) + ", " + x.action + ")";
            else
                return "decrypt " + to_string(*x.subject) + " as {" + tuple_pattern(x.match, x.binders) + "}_" + x.key;
        },
        p.node);
}

std::string to_string(const Process& p)
{
    return std::visit(
        [&](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Process::Nil> || std::is_same_v<T, Process::Jump>) return prefix_text(p);
            else if constexpr (std::is_same_v<T, Process::Cond>)
                return "if " + to_string(*x.guard) + " then " + to_string(*x.then_branch) + " else " +
                       to_string(*x.else_branch);
            else if constexpr (std::is_same_v<T, Process::Loop>) return "mu " + x.var + ". " + to_string(*x.body);
            else if constexpr (std::is_same_v<T, Process::Decrypt>) return prefix_text(p) + " in " + to_string(*x.cont);
            else return prefix_text(p) + ". " + to_string(*x.cont);
        },
        p.node);
}

std::string to_string(const Sensor& s)
{
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Sensor::Nil>) return "0";
            else if constexpr (std::is_same_v<T, Sensor::Tau>) return "tau. " + to_string(*x.cont);
            else if constexpr (std::is_same_v<T, Sensor::Probe>)
                return "probe(#" + std::to_string(x.id) + "). " + to_string(*x.cont);
            else if constexpr (std::is_same_v<T, Sensor::Loop>) return "mu " + x.var + ". " + to_string(*x.body);
            else return x.var;
        },
        s.node);
}

std::string to_string(const Actuator& a)
{
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Actuator::Nil>) return "0";
            else if constexpr (std::is_same_v<T, Actuator::Tau>) return "tau. " + to_string(*x.cont);
            else if constexpr (std::is_same_v<T, Actuator::Await>)
                return "await(" + std::to_string(x.id) + ", {" + idents(x.actions) + "}). " + to_string(*x.cont);
            else if constexpr (std::is_same_v<T, Actuator::Fire>) return "do " + x.action + ". " + to_string(*x.cont);
            else if constexpr (std::is_same_v<T, Actuator::Loop>) return "mu " + x.var + ". " + to_string(*x.body);
            else return x.var;
        },
        a.node);
}

std::string to_string(const System& s)
{
    std::ostringstream out;
    out << "system";
    if (!s.name.empty()) out << " " << s.name;
    out << " {\n";
    const auto& pre = s.preamble;
    for (const auto& f : pre.functions) {
        out << "  fun " << f.name << "/" << f.arity;
        if (f.kind == EvaluatorKind::tagtest) out << " = tagtest(" << idents(f.tags) << ")";
        out << ";\n";
    }
    if (!pre.keys.empty()) out << "  key " << idents(pre.keys) << ";\n";
    if (!pre.comp.all || !pre.comp.removed.empty()) {
        out << "  comp " << (pre.comp.all ? std::string("all") : edge_set(pre.comp.allowed));
        if (!pre.comp.removed.empty()) out << " except " << edge_set(pre.comp.removed);
        out << ";\n";
    }
    if (pre.script_mode != ScriptMode::cycle)
        out << "  scriptmode " << (pre.script_mode == ScriptMode::hold ? "hold" : "stuck") << ";\n";
    for (const auto& [ref, values] : pre.scripts)
        out << "  script " << ref.node << "#" << ref.id << " = ["
            << join(values, [](const Literal& v) { return literal_text(v); }) << "];\n";

    const auto& pol = pre.policy;
    if (!pol.empty() || !pol.anonymisers.empty()) {
        out << "  policy {\n";
        if (!pol.secret.empty()) out << "    secret " << sensor_refs(pol.secret) << ";\n";
        if (!pol.confined.empty()) out << "    confined " << sensor_refs(pol.confined) << ";\n";
        if (!pol.anonymisers.empty())
            out << "    anonymisers " << idents({pol.anonymisers.begin(), pol.anonymisers.end()}) << ";\n";
        if (pol.subsystem) out << "    subsystem {" << idents({pol.subsystem->begin(), pol.subsystem->end()}) << "};\n";
        for (const auto& [l, v] : pol.levels) out << "    level " << l << " = " << v << ";\n";
        if (pol.flows) {
            if (pol.flows->empty()) out << "    flows;\n";
            for (const auto& [l, ts] : *pol.flows)
                out << "    flow " << l << " -> {" << idents({ts.begin(), ts.end()}) << "};\n";
        }
        out << "  }\n";
    }

    for (const auto& n : s.nodes) {
        out << "  node " << n.label << " {\n";
        for (const auto& c : n.components) {
            out << "    ";
            if (auto* st = std::get_if<StoreDecl>(&c))
                out << "store { " << idents(st->vars) << (st->vars.empty() ? "}" : " }");
            else if (auto* p = std::get_if<ProcessPtr>(&c))
                out << "proc " << to_string(**p);
            else if (auto* se = std::get_if<SensorDecl>(&c))
                out << "sensor " << se->id << " = " << to_string(*se->body);
            else if (auto* a = std::get_if<ActuatorDecl>(&c))
                out << "actuator " << a->id << " = " << to_string(*a->body);
            out << "\n";
        }
        out << "  }\n";
    }
    out << "}\n";
    return out.str();
}

}  // namespace ilysa
