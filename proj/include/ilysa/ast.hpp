#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace ilysa {

using Label = std::string;
using Ident = std::string;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Atom {
    std::string name;
    auto operator<=>(const Atom&) const = default;
};

// Literal constants of the calculus. Atoms stand for opaque constants such as car, err, turnon.
using Literal = std::variant<std::int64_t, bool, std::string, Atom>;

std::string literal_text(const Literal& v);

// ---- terms ----

struct Term;
using TermPtr = std::shared_ptr<const Term>;

struct Term {
    struct Value { Literal v; };
    struct SensorLoc { int id; };
    struct Var { Ident name; };
    struct App { Ident fn; std::vector<TermPtr> args; };
    struct Enc { std::vector<TermPtr> args; Ident key; };

    std::variant<Value, SensorLoc, Var, App, Enc> node;
};

TermPtr make_value(Literal v);
TermPtr make_sensor_loc(int id);
TermPtr make_var(Ident x);
TermPtr make_app(Ident f, std::vector<TermPtr> args);
TermPtr make_enc(std::vector<TermPtr> args, Ident key);

// ---- control processes ----

struct Process;
using ProcessPtr = std::shared_ptr<const Process>;

struct Process {
    struct Nil {};
    struct Out { std::vector<TermPtr> terms; std::vector<Label> targets; ProcessPtr cont; };
    struct In { std::vector<TermPtr> match; std::vector<Ident> binders; ProcessPtr cont; };
    struct Cond { TermPtr guard; ProcessPtr then_branch; ProcessPtr else_branch; };
    struct Loop { Ident var; ProcessPtr body; };
    struct Jump { Ident var; };
    struct Assign { Ident var; TermPtr rhs; ProcessPtr cont; };
    struct Act { int actuator; Ident action; ProcessPtr cont; };
    struct Decrypt {
        TermPtr subject;
        std::vector<TermPtr> match;
        std::vector<Ident> binders;
        Ident key;
        ProcessPtr cont;
    };

    std::variant<Nil, Out, In, Cond, Loop, Jump, Assign, Act, Decrypt> node;
};

ProcessPtr make_process(decltype(Process::node) n);

// ---- sensors and actuators ----

struct Sensor;
using SensorPtr = std::shared_ptr<const Sensor>;

struct Sensor {
    struct Nil {};
    struct Tau { SensorPtr cont; };
    struct Probe { int id; SensorPtr cont; };
    struct Loop { Ident var; SensorPtr body; };
    struct Jump { Ident var; };

    std::variant<Nil, Tau, Probe, Loop, Jump> node;
};

struct Actuator;
using ActuatorPtr = std::shared_ptr<const Actuator>;

struct Actuator {
    struct Nil {};
    struct Tau { ActuatorPtr cont; };
    struct Await { int id; std::vector<Ident> actions; ActuatorPtr cont; };
    struct Fire { Ident action; ActuatorPtr cont; };
    struct Loop { Ident var; ActuatorPtr body; };
    struct Jump { Ident var; };

    std::variant<Nil, Tau, Await, Fire, Loop, Jump> node;
};

SensorPtr make_sensor(decltype(Sensor::node) n);
ActuatorPtr make_actuator(decltype(Actuator::node) n);

// ---- nodes and systems ----

struct StoreDecl { std::vector<Ident> vars; };
struct SensorDecl { int id; SensorPtr body; };
struct ActuatorDecl { int id; ActuatorPtr body; };

using Component = std::variant<StoreDecl, ProcessPtr, SensorDecl, ActuatorDecl>;

struct Node {
    Label label;
    std::vector<Component> components;
};

enum class EvaluatorKind { uninterpreted, tagtest };

struct FunctionDecl {
    Ident name;
    int arity = 0;
    EvaluatorKind kind = EvaluatorKind::uninterpreted;
    std::vector<Ident> tags;  // tagtest atoms
};

using Edge = std::pair<Label, Label>;

struct CompRelation {
    bool all = true;
    std::set<Edge> allowed;
    std::set<Edge> removed;

    bool operator()(const Label& from, const Label& to) const
    {
        if (removed.count({from, to})) return false;
        return all || allowed.count({from, to}) > 0;
    }
    bool operator==(const CompRelation&) const = default;
};

enum class ScriptMode { cycle, hold, stuck };

struct SensorRef {
    Label node;
    int id = 0;
    auto operator<=>(const SensorRef&) const = default;
};

struct PolicyConfig {
    std::set<SensorRef> secret;
    std::set<SensorRef> confined;
    std::set<Ident> anonymisers;
    std::optional<std::set<Label>> subsystem;
    std::map<Label, int> levels;
    std::optional<std::map<Label, std::set<Label>>> flows;

    bool confidentiality_enabled() const { return !secret.empty(); }
    bool selective_enabled() const { return !confined.empty() || subsystem.has_value(); }
    bool levels_enabled() const { return !levels.empty(); }
    bool flows_enabled() const { return flows.has_value(); }
    bool empty() const
    {
        return !confidentiality_enabled() && !selective_enabled() && !levels_enabled() && !flows_enabled();
    }
    bool operator==(const PolicyConfig&) const = default;
};

struct Preamble {
    std::vector<FunctionDecl> functions;
    std::vector<Ident> keys;
    CompRelation comp;
    std::map<SensorRef, std::vector<Literal>> scripts;
    ScriptMode script_mode = ScriptMode::cycle;
    PolicyConfig policy;
};

struct System {
    std::string name;
    Preamble preamble;
    std::vector<Node> nodes;

    const Node* find(const Label& l) const;
};

// ---- structural equality ----

bool equal(const Term& a, const Term& b);
bool equal(const Process& a, const Process& b);
bool equal(const Sensor& a, const Sensor& b);
bool equal(const Actuator& a, const Actuator& b);
bool equal(const System& a, const System& b);

// ---- queries ----

struct NodeInfo {
    std::vector<Ident> vars;
    std::vector<int> sensors;
    std::vector<int> actuators;
};
NodeInfo node_info(const Node& n);

std::set<Ident> free_variables(const Process& p);

struct Diagnostic {
    std::string where;
    std::string message;
};

std::vector<Diagnostic> well_formed(const System& s);

// Builtin operators and their arities; shared by parser, semantics and analysis.
std::optional<int> builtin_arity(const std::string& f);

// Number of AST constructs: terms, prefixes and components.
std::size_t node_count(const System& s);

// ---- pretty printing ----

std::string to_string(const Term& t);
std::string to_string(const Process& p);
std::string to_string(const Sensor& s);
std::string to_string(const Actuator& a);
std::string to_string(const System& s);

// Short rendering of the first prefix of a process, used to name analysis sites.
std::string prefix_text(const Process& p);

}  // namespace ilysa
