#include "ilysa/policy.hpp"

#include <algorithm>

namespace ilysa {

Verdict Verdict::on_edge(const Label& sender, const Label& receiver) const
{
    Verdict out;
    out.policy = policy + " [" + sender + " -> " + receiver + "]";
    out.note = note;
    for (const auto& w : witnesses)
        if (w.sender == sender && w.receiver == receiver) out.witnesses.push_back(w);
    out.pass = out.witnesses.empty();
    return out;
}

namespace {

Witness witness(const Label& sender, const Label& receiver, int pos, const AbstractValue& v, Tag tag)
{
    return {sender, receiver, pos, v, tag, shortest_tree(v)};
}

}  // namespace

Verdict check_well_propagation(const Estimate& e, const TaggingScheme& scheme, const FlowPredicate& pred,
                               std::string name)
{
    Verdict out;
    out.policy = std::move(name);
    std::map<AbstractValue, Tag> tags;
    for (const auto& [receiver, msgs] : e.kappa)
        for (const auto& m : msgs)
            for (std::size_t i = 0; i < m.values.size(); ++i) {
                const auto& v = m.values[i];
                auto it = tags.find(v);
                if (it == tags.end()) it = tags.emplace(v, apply_tagging(v, scheme)).first;
                if (!pred(it->second, m.sender, receiver))
                    out.witnesses.push_back(witness(m.sender, receiver, static_cast<int>(i), v, it->second));
            }
    out.pass = out.witnesses.empty();
    return out;
}

Verdict check_confidentiality(const Estimate& e, const PolicyConfig& cfg)
{
    return check_well_propagation(
        e, TaggingScheme::secrecy(cfg.secret), [](Tag t, const Label&, const Label&) { return t == Tag::public_; },
        "confidentiality");
}

Verdict check_levels(const Estimate& e, const PolicyConfig& cfg)
{
    auto level = [&](const Label& l) {
        auto it = cfg.levels.find(l);
        if (it == cfg.levels.end()) throw Error("no level assigned to " + l);
        return it->second;
    };
    Verdict out;
    out.policy = "levels";
    out.note = "allowed iff level(sender) <= level(receiver)";
    for (const auto& [receiver, msgs] : e.kappa)
        for (const auto& m : msgs)
            if (level(m.sender) > level(receiver))
                out.witnesses.push_back(witness(m.sender, receiver, 0, m.values.front(), Tag::public_));
    out.pass = out.witnesses.empty();
    return out;
}

Verdict check_selective_propagation(const Estimate& e, const PolicyConfig& cfg, const std::set<Label>& all_labels)
{
    const std::set<Label>& inside = cfg.subsystem ? *cfg.subsystem : all_labels;
    return check_well_propagation(
        e, TaggingScheme::confinement(cfg.confined, cfg.anonymisers),
        [&](Tag t, const Label& from, const Label& to) {
            return t != Tag::confined || (inside.count(from) && inside.count(to));
        },
        "selective-propagation");
}

Verdict check_flows(const Estimate& e, const PolicyConfig& cfg)
{
    Verdict out;
    out.policy = "flows";
    static const std::map<Label, std::set<Label>> none;
    const auto& flows = cfg.flows ? *cfg.flows : none;
    for (const auto& [receiver, msgs] : e.kappa)
        for (const auto& m : msgs) {
            auto it = flows.find(m.sender);
            if (it == flows.end() || !it->second.count(receiver))
                out.witnesses.push_back(witness(m.sender, receiver, 0, m.values.front(), Tag::public_));
        }
    out.pass = out.witnesses.empty();
    return out;
}

std::vector<Verdict> check_policies(const System& s, const Estimate& e, const PolicyConfig& cfg)
{
    std::vector<Verdict> out;
    if (cfg.confidentiality_enabled()) out.push_back(check_confidentiality(e, cfg));
    if (cfg.levels_enabled()) out.push_back(check_levels(e, cfg));
    if (cfg.selective_enabled()) {
        std::set<Label> labels;
        for (const auto& n : s.nodes) labels.insert(n.label);
        out.push_back(check_selective_propagation(e, cfg, labels));
    }
    if (cfg.flows_enabled()) out.push_back(check_flows(e, cfg));
    return out;
}

std::vector<std::string> validate_policy(const System& s, const PolicyConfig& cfg)
{
    std::vector<std::string> out;
    auto node = [&](const Label& l) { return s.find(l); };
    auto check_label = [&](const Label& l, const char* what) {
        if (!node(l)) out.push_back(std::string(what) + " names unknown node " + l);
    };
    auto check_sensor = [&](const SensorRef& r, const char* what) {
        const Node* n = node(r.node);
        if (!n) {
            out.push_back(std::string(what) + " names unknown node " + r.node);
            return;
        }
        auto sensors = node_info(*n).sensors;
        if (std::find(sensors.begin(), sensors.end(), r.id) == sensors.end())
            out.push_back(std::string(what) + " names unknown sensor " + r.node + "#" + std::to_string(r.id));
    };
    for (const auto& r : cfg.secret) check_sensor(r, "secret");
    for (const auto& r : cfg.confined) check_sensor(r, "confined");
    if (cfg.subsystem)
        for (const auto& l : *cfg.subsystem) check_label(l, "subsystem");
    for (const auto& [l, lvl] : cfg.levels) check_label(l, "level");
    if (cfg.flows)
        for (const auto& [from, tos] : *cfg.flows) {
            check_label(from, "flow");
            for (const auto& to : tos) check_label(to, "flow");
        }
    return out;
}

IngredientResult check_ingredient(const Estimate& e, const SensorRef& sensor, const Label& target)
{
    Symbol leaf = sensor_symbol(sensor.node, sensor.id);
    for (const auto& g : e.theta_at(target))
        if (derives_leaf(g, leaf)) return {true, g};
    return {};
}

ActuatorUsage check_actuator_usage(const Estimate& e, const Label& l, int j)
{
    ActuatorUsage out;
    out.fires = e.alpha_at(l, j);
    out.never_used = out.fires.empty();
    return out;
}

bool check_sensor_usage(const Estimate& e, const SensorRef& sensor)
{
    Symbol leaf = sensor_symbol(sensor.node, sensor.id);
    auto any = [&](const ValueSet& vs) {
        return std::any_of(vs.begin(), vs.end(), [&](const AbstractValue& g) { return derives_leaf(g, leaf); });
    };
    for (const auto& [l, vs] : e.theta)
        if (any(vs)) return true;
    std::string own = "#" + std::to_string(sensor.id);
    for (const auto& [l, slots] : e.sigma)
        for (const auto& [loc, vs] : slots)
            if (!(l == sensor.node && loc == own) && any(vs)) return true;
    for (const auto& [l, msgs] : e.kappa)
        for (const auto& m : msgs)
            for (const auto& v : m.values)
                if (derives_leaf(v, leaf)) return true;
    return false;
}

WhatIfReport what_if_comp(const System& s, const std::set<Edge>& removed_edges, const CfaOptions& opts)
{
    WhatIfReport out;
    CfaOptions base = opts;
    CompRelation comp = opts.comp ? *opts.comp : s.preamble.comp;
    base.comp = comp;
    out.before = analyze(s, base);
    CfaOptions cut = base;
    cut.comp->removed.insert(removed_edges.begin(), removed_edges.end());
    out.after = analyze(s, cut);
    auto diff = [](const Estimate& a, const Estimate& b, std::vector<KappaChange>& into) {
        for (const auto& [l, msgs] : a.kappa)
            for (const auto& m : msgs)
                if (!b.kappa_at(l).count(m)) into.push_back({l, m});
    };
    diff(out.before, out.after, out.removed);
    diff(out.after, out.before, out.added);
    return out;
}

}  // namespace ilysa
