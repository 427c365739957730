#pragma once

#include "ilysa/cfa.hpp"
#include "ilysa/policy.hpp"

#include <json.hpp>

namespace ilysa {

using Json = nlohmann::json;

Json to_json(const ConcreteValue& v);
ConcreteValue concrete_from_json(const Json& j);
Json to_json(const ProvTree& t);
ProvTree tree_from_json(const Json& j);

Json grammar_to_json(const AbstractValue& g);
AbstractValue grammar_from_json(const Json& j);

// Global production table, then values by id, then the four components.
Json estimate_to_json(const Estimate& e);
Estimate estimate_from_json(const Json& j);

Json to_json(const TraceEvent& ev);
TraceEvent event_from_json(const Json& j);
Json to_json(const StepRecord& r);
StepRecord step_from_json(const Json& j);

std::string trace_to_jsonl(const std::vector<StepRecord>& steps);
std::vector<StepRecord> trace_from_jsonl(const std::string& text);

PolicyConfig policy_from_json(const Json& j);
Json to_json(const PolicyConfig& p);
Json to_json(const Verdict& v);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& text);

}  // namespace ilysa
