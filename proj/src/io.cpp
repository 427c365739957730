#include "ilysa/io.hpp"

#include <fstream>
#include <sstream>

namespace ilysa {

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error("malformed JSON: " + what); }

const Json& field(const Json& j, const char* key)
{
    if (!j.is_object() || !j.contains(key)) bad(std::string("missing field '") + key + "'");
    return j.at(key);
}

SensorRef sensor_ref(const std::string& text)
{
    auto hash = text.find('#');
    if (hash == std::string::npos || hash == 0 || hash + 1 == text.size()) bad("sensor reference '" + text + "'");
    try {
        return {text.substr(0, hash), std::stoi(text.substr(hash + 1))};
    } catch (const std::exception&) {
        bad("sensor reference '" + text + "'");
    }
}

std::string sensor_text(const SensorRef& r) { return r.node + "#" + std::to_string(r.id); }

}  // namespace

Json to_json(const ConcreteValue& v)
{
    using K = ConcreteValue::Kind;
    auto list = [](const std::vector<ConcreteValue>& xs) {
        Json a = Json::array();
        for (const auto& x : xs) a.push_back(to_json(x));
        return a;
    };
    switch (v.kind) {
    case K::integer: return {{"int", v.i}};
    case K::boolean: return {{"bool", v.b}};
    case K::atom: return {{"atom", v.s}};
    case K::string: return {{"str", v.s}};
    case K::tuple: return {{"tuple", list(v.items)}};
    case K::cipher: return {{"cipher", list(v.items)}, {"key", v.s}};
    }
    return {};
}

ConcreteValue concrete_from_json(const Json& j)
{
    if (!j.is_object()) bad("value");
    auto list = [](const Json& a) {
        if (!a.is_array()) bad("value list");
        std::vector<ConcreteValue> out;
        for (const auto& x : a) out.push_back(concrete_from_json(x));
        return out;
    };
    if (j.contains("int")) return ConcreteValue::integer(j.at("int").get<std::int64_t>());
    if (j.contains("bool")) return ConcreteValue::boolean(j.at("bool").get<bool>());
    if (j.contains("atom")) return ConcreteValue::atom(j.at("atom").get<std::string>());
    if (j.contains("str")) return ConcreteValue::string(j.at("str").get<std::string>());
    if (j.contains("tuple")) return ConcreteValue::tuple(list(j.at("tuple")));
    if (j.contains("cipher")) return ConcreteValue::cipher(list(j.at("cipher")), field(j, "key").get<std::string>());
    bad("value kind");
}

Json to_json(const ProvTree& t)
{
    Json j{{"sym", terminal_text(t->sym)}};
    if (!t->children.empty()) {
        Json cs = Json::array();
        for (const auto& c : t->children) cs.push_back(to_json(c));
        j["children"] = std::move(cs);
    }
    return j;
}

ProvTree tree_from_json(const Json& j)
{
    Symbol sym = parse_terminal(field(j, "sym").get<std::string>());
    std::vector<ProvTree> children;
    if (j.contains("children"))
        for (const auto& c : j.at("children")) children.push_back(tree_from_json(c));
    if (static_cast<int>(children.size()) != sym.arity()) bad("tree arity at " + terminal_text(sym));
    return make_tree(std::move(sym), std::move(children));
}

namespace {

Json production_json(const Production& p)
{
    Json children = Json::array();
    for (const auto& c : p.children) children.push_back(nonterminal_text(c));
    return {{"head", nonterminal_text(p.root)}, {"root", terminal_text(p.root)}, {"children", children}};
}

Production production_from_json(const Json& j)
{
    Production p;
    p.root = parse_terminal(field(j, "root").get<std::string>());
    if (parse_nonterminal(field(j, "head").get<std::string>()) != p.root) bad("production head does not match its root");
    for (const auto& c : field(j, "children")) p.children.push_back(parse_nonterminal(c.get<std::string>()));
    if (static_cast<int>(p.children.size()) != p.root.arity()) bad("production arity");
    return p;
}

}  // namespace

Json grammar_to_json(const AbstractValue& g)
{
    Json prods = Json::array();
    for (const auto& p : g.rules) prods.push_back(production_json(p));
    return {{"start", nonterminal_text(g.start)}, {"productions", prods}};
}

AbstractValue grammar_from_json(const Json& j)
{
    std::vector<Production> rules;
    for (const auto& p : field(j, "productions")) rules.push_back(production_from_json(p));
    return make_value(parse_nonterminal(field(j, "start").get<std::string>()), std::move(rules));
}

Json estimate_to_json(const Estimate& e)
{
    std::set<AbstractValue> values;
    auto collect = [&](const ValueSet& vs) { values.insert(vs.begin(), vs.end()); };
    for (const auto& [l, slots] : e.sigma)
        for (const auto& [loc, vs] : slots) collect(vs);
    for (const auto& [l, vs] : e.theta) collect(vs);
    for (const auto& [l, msgs] : e.kappa)
        for (const auto& m : msgs) values.insert(m.values.begin(), m.values.end());

    std::set<Production> prods;
    for (const auto& v : values) prods.insert(v.rules.begin(), v.rules.end());
    std::map<Production, int> prod_id;
    Json prod_table = Json::array();
    for (const auto& p : prods) {
        prod_id[p] = static_cast<int>(prod_table.size());
        prod_table.push_back(production_json(p));
    }
    std::map<AbstractValue, int> value_id;
    Json value_table = Json::array();
    for (const auto& v : values) {
        value_id[v] = static_cast<int>(value_table.size());
        Json rules = Json::array();
        for (const auto& p : v.rules) rules.push_back(prod_id.at(p));
        value_table.push_back({{"start", nonterminal_text(v.start)}, {"rules", rules}});
    }
    auto ids = [&](const ValueSet& vs) {
        Json a = Json::array();
        for (const auto& v : vs) a.push_back(value_id.at(v));
        return a;
    };

    Json sigma = Json::object();
    for (const auto& [l, slots] : e.sigma)
        for (const auto& [loc, vs] : slots) sigma[l][loc] = ids(vs);
    Json kappa = Json::object();
    for (const auto& [l, msgs] : e.kappa) {
        Json a = Json::array();
        for (const auto& m : msgs) {
            Json vs = Json::array();
            for (const auto& v : m.values) vs.push_back(value_id.at(v));
            a.push_back({{"sender", m.sender}, {"values", vs}});
        }
        kappa[l] = std::move(a);
    }
    Json theta = Json::object();
    for (const auto& [l, vs] : e.theta) theta[l] = ids(vs);
    Json alpha = Json::object();
    for (const auto& [l, slots] : e.alpha)
        for (const auto& [j, gs] : slots) alpha[l][std::to_string(j)] = gs;

    return {{"productions", prod_table}, {"values", value_table}, {"sigma", sigma},
            {"kappa", kappa},            {"theta", theta},        {"alpha", alpha}};
}

Estimate estimate_from_json(const Json& j)
{
    std::vector<Production> prods;
    for (const auto& p : field(j, "productions")) prods.push_back(production_from_json(p));
    std::vector<AbstractValue> values;
    for (const auto& v : field(j, "values")) {
        std::vector<Production> rules;
        for (const auto& id : field(v, "rules")) {
            auto k = id.get<std::size_t>();
            if (k >= prods.size()) bad("production id out of range");
            rules.push_back(prods[k]);
        }
        values.push_back(make_value(parse_nonterminal(field(v, "start").get<std::string>()), std::move(rules)));
    }
    auto value = [&](const Json& id) -> const AbstractValue& {
        auto k = id.get<std::size_t>();
        if (k >= values.size()) bad("value id out of range");
        return values[k];
    };
    Estimate e;
    for (const auto& [l, slots] : field(j, "sigma").items())
        for (const auto& [loc, ids] : slots.items())
            for (const auto& id : ids) e.sigma[l][loc].insert(value(id));
    for (const auto& [l, msgs] : field(j, "kappa").items())
        for (const auto& m : msgs) {
            Message msg{field(m, "sender").get<std::string>(), {}};
            for (const auto& id : field(m, "values")) msg.values.push_back(value(id));
            e.kappa[l].insert(std::move(msg));
        }
    for (const auto& [l, ids] : field(j, "theta").items())
        for (const auto& id : ids) e.theta[l].insert(value(id));
    if (j.contains("alpha"))
        for (const auto& [l, slots] : j.at("alpha").items())
            for (const auto& [k, gs] : slots.items())
                for (const auto& g : gs) e.alpha[l][std::stoi(k)].insert(g.get<std::string>());
    e.prune();
    return e;
}

namespace {

Json named_values(const std::vector<std::pair<std::string, InstrValue>>& xs)
{
    Json a = Json::array();
    for (const auto& [name, v] : xs) {
        Json entry{{"value", to_json(v.value)}, {"tree", to_json(v.prov)}};
        if (!name.empty()) entry["name"] = name;
        a.push_back(std::move(entry));
    }
    return a;
}

std::vector<std::pair<std::string, InstrValue>> named_values_from(const Json& a)
{
    std::vector<std::pair<std::string, InstrValue>> out;
    for (const auto& x : a)
        out.push_back({x.value("name", ""), InstrValue{concrete_from_json(field(x, "value")), tree_from_json(field(x, "tree"))}});
    return out;
}

const std::vector<EventKind> kEventKinds = {EventKind::sensed,        EventKind::assigned,      EventKind::evaluated,
                                            EventKind::msg_sent,      EventKind::msg_delivered, EventKind::act_triggered,
                                            EventKind::cond_taken,    EventKind::decrypted,     EventKind::actuated};

const std::vector<Rule> kRules = {Rule::sense, Rule::asgm,  Rule::ev_out, Rule::multi_com, Rule::cond,
                                  Rule::int_,  Rule::a_com, Rule::act,    Rule::phys,      Rule::decrypt};

}  // namespace

Json to_json(const TraceEvent& ev)
{
    Json j{{"kind", to_string(ev.kind)}, {"node", ev.node}};
    if (!ev.peer.empty()) j["peer"] = ev.peer;
    if (ev.kind == EventKind::sensed || ev.kind == EventKind::act_triggered || ev.kind == EventKind::actuated)
        j["index"] = ev.index;
    if (!ev.name.empty()) j["name"] = ev.name;
    if (!ev.values.empty()) j["values"] = named_values(ev.values);
    if (!ev.bindings.empty()) j["bindings"] = named_values(ev.bindings);
    return j;
}

TraceEvent event_from_json(const Json& j)
{
    TraceEvent ev;
    auto kind = field(j, "kind").get<std::string>();
    auto it = std::find_if(kEventKinds.begin(), kEventKinds.end(), [&](EventKind k) { return to_string(k) == kind; });
    if (it == kEventKinds.end()) bad("event kind '" + kind + "'");
    ev.kind = *it;
    ev.node = field(j, "node").get<std::string>();
    ev.peer = j.value("peer", "");
    ev.index = j.value("index", 0);
    ev.name = j.value("name", "");
    if (j.contains("values")) ev.values = named_values_from(j.at("values"));
    if (j.contains("bindings")) ev.bindings = named_values_from(j.at("bindings"));
    return ev;
}

Json to_json(const StepRecord& r)
{
    Json events = Json::array();
    for (const auto& e : r.events) events.push_back(to_json(e));
    return {{"step", r.step}, {"rule", to_string(r.rule)}, {"events", events}};
}

StepRecord step_from_json(const Json& j)
{
    StepRecord r;
    r.step = field(j, "step").get<std::size_t>();
    auto rule = field(j, "rule").get<std::string>();
    auto it = std::find_if(kRules.begin(), kRules.end(), [&](Rule k) { return to_string(k) == rule; });
    if (it == kRules.end()) bad("rule '" + rule + "'");
    r.rule = *it;
    for (const auto& e : field(j, "events")) r.events.push_back(event_from_json(e));
    return r;
}

std::string trace_to_jsonl(const std::vector<StepRecord>& steps)
{
    std::string out;
    for (const auto& s : steps) out += to_json(s).dump() + "\n";
    return out;
}

std::vector<StepRecord> trace_from_jsonl(const std::string& text)
{
    std::vector<StepRecord> out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(step_from_json(Json::parse(line)));
        } catch (const Json::exception& e) {
            throw Error("trace line " + std::to_string(lineno) + ": " + e.what());
        } catch (const Error& e) {
            throw Error("trace line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

PolicyConfig policy_from_json(const Json& j)
{
    if (!j.is_object()) bad("policy must be an object");
    PolicyConfig p;
    try {
        for (const auto& s : j.value("secret", Json::array())) p.secret.insert(sensor_ref(s.get<std::string>()));
        for (const auto& s : j.value("confined", Json::array())) p.confined.insert(sensor_ref(s.get<std::string>()));
        for (const auto& f : j.value("anonymisers", Json::array())) p.anonymisers.insert(f.get<std::string>());
        if (j.contains("subsystem")) p.subsystem = j.at("subsystem").get<std::set<Label>>();
        if (j.contains("levels")) p.levels = j.at("levels").get<std::map<Label, int>>();
        if (j.contains("flows")) p.flows = j.at("flows").get<std::map<Label, std::set<Label>>>();
    } catch (const Json::exception& e) {
        bad(e.what());
    }
    return p;
}

Json to_json(const PolicyConfig& p)
{
    Json j = Json::object();
    auto refs = [](const std::set<SensorRef>& rs) {
        Json a = Json::array();
        for (const auto& r : rs) a.push_back(sensor_text(r));
        return a;
    };
    if (!p.secret.empty()) j["secret"] = refs(p.secret);
    if (!p.confined.empty()) j["confined"] = refs(p.confined);
    if (!p.anonymisers.empty()) j["anonymisers"] = p.anonymisers;
    if (p.subsystem) j["subsystem"] = *p.subsystem;
    if (!p.levels.empty()) j["levels"] = p.levels;
    if (p.flows) j["flows"] = *p.flows;
    return j;
}

Json to_json(const Verdict& v)
{
    Json ws = Json::array();
    for (const auto& w : v.witnesses) {
        Json entry{{"sender", w.sender},
                   {"receiver", w.receiver},
                   {"position", w.position},
                   {"tag", to_string(w.tag)},
                   {"value", display_name(w.value.start)},
                   {"grammar", grammar_to_json(w.value)}};
        if (w.example) entry["example"] = to_string(w.example);
        ws.push_back(std::move(entry));
    }
    Json j{{"policy", v.policy}, {"pass", v.pass}, {"witnesses", ws}};
    if (!v.note.empty()) j["note"] = v.note;
    return j;
}

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << text;
    if (!out) throw Error("cannot write " + path);
}

}  // namespace ilysa
