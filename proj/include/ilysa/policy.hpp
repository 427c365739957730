#pragma once

#include "ilysa/cfa.hpp"

namespace ilysa {

// A kappa entry position that breaks the policy. Static witnesses are may-flows.
struct Witness {
    Label sender;
    Label receiver;
    int position = 0;
    AbstractValue value;
    Tag tag = Tag::public_;
    ProvTree example;  // a shortest tree of the value's language
};

struct Verdict {
    std::string policy;
    bool pass = true;
    std::vector<Witness> witnesses;
    std::string note;

    // The verdict restricted to one edge.
    Verdict on_edge(const Label& sender, const Label& receiver) const;
};

using FlowPredicate = std::function<bool(Tag, const Label& sender, const Label& receiver)>;

Verdict check_well_propagation(const Estimate& e, const TaggingScheme& scheme, const FlowPredicate& pred,
                               std::string name = "well-propagation");
Verdict check_confidentiality(const Estimate& e, const PolicyConfig& cfg);
// Throws Error when a label on a kappa edge has no level.
Verdict check_levels(const Estimate& e, const PolicyConfig& cfg);
Verdict check_selective_propagation(const Estimate& e, const PolicyConfig& cfg, const std::set<Label>& all_labels);
Verdict check_flows(const Estimate& e, const PolicyConfig& cfg);

// Every enabled policy of cfg, in a fixed order. An empty config yields no verdicts.
std::vector<Verdict> check_policies(const System& s, const Estimate& e, const PolicyConfig& cfg);

// Unknown labels or sensors named by the config. Anonymisers may name functions the system does not use.
std::vector<std::string> validate_policy(const System& s, const PolicyConfig& cfg);

struct IngredientResult {
    bool ingredient = false;
    std::optional<AbstractValue> witness;
};

IngredientResult check_ingredient(const Estimate& e, const SensorRef& sensor, const Label& target);

struct ActuatorUsage {
    bool never_used = true;
    std::set<Ident> fires;
};

ActuatorUsage check_actuator_usage(const Estimate& e, const Label& l, int j);

// True when the sensor's value may be used anywhere beyond its own store location.
bool check_sensor_usage(const Estimate& e, const SensorRef& sensor);

struct KappaChange {
    Label receiver;
    Message message;
};

struct WhatIfReport {
    std::vector<KappaChange> removed;  // present before, absent after
    std::vector<KappaChange> added;    // absent before, present after
    Estimate before;
    Estimate after;
};

WhatIfReport what_if_comp(const System& s, const std::set<Edge>& removed_edges, const CfaOptions& opts = {});

}  // namespace ilysa
