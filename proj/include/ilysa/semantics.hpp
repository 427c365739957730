#pragma once

#include "ilysa/ast.hpp"
#include "ilysa/treegram.hpp"

#include <compare>
#include <cstdint>
#include <functional>
#include <unordered_map>

namespace ilysa {

struct ConcreteValue {
    enum class Kind { integer, boolean, atom, string, tuple, cipher };

    Kind kind = Kind::integer;
    std::int64_t i = 0;
    bool b = false;
    std::string s;  // atom name, string contents or cipher key
    std::vector<ConcreteValue> items;

    bool operator==(const ConcreteValue&) const = default;
    std::strong_ordering operator<=>(const ConcreteValue& o) const;

    static ConcreteValue integer(std::int64_t v);
    static ConcreteValue boolean(bool v);
    static ConcreteValue atom(std::string name);
    static ConcreteValue string(std::string v);
    static ConcreteValue tuple(std::vector<ConcreteValue> items);
    static ConcreteValue cipher(std::vector<ConcreteValue> payload, std::string key);
};

ConcreteValue from_literal(const Literal& v);
std::string to_string(const ConcreteValue& v);
std::size_t hash_value(const ConcreteValue& v);

// A store entry: concrete value and its provenance tree.
struct InstrValue {
    ConcreteValue value;
    ProvTree prov;
};

bool operator==(const InstrValue& a, const InstrValue& b);

struct InstrumentedStore {
    std::vector<std::string> locations;  // variables by name, sensor locations as #i
    std::vector<std::optional<InstrValue>> values;

    const std::optional<InstrValue>* find(const std::string& loc) const;
};

using AbstractStoreSlice = std::map<std::string, std::set<AbstractValue>>;

bool store_agrees(const InstrumentedStore& store, const AbstractStoreSlice& abstract);

// ---- functions ----

class FunctionTable {
public:
    FunctionTable() = default;
    explicit FunctionTable(const std::vector<FunctionDecl>& decls);

    std::optional<int> arity(const std::string& f) const;
    // Empty result when the evaluator is undefined on the arguments.
    std::optional<ConcreteValue> apply(const std::string& f, const std::vector<ConcreteValue>& args) const;

private:
    std::map<std::string, FunctionDecl> decls_;
};

class EvalError : public Error {
public:
    using Error::Error;
};

// Instrumented evaluation; empty on a read of ⊥ or an evaluator failure (reason filled in).
std::optional<InstrValue> try_eval(const Term& e, const InstrumentedStore& store, const Label& l,
                                   const FunctionTable& funs, std::string* reason = nullptr);
InstrValue eval_term(const Term& e, const InstrumentedStore& store, const Label& l, const FunctionTable& funs);
// The uninstrumented evaluator (first projection only).
std::optional<ConcreteValue> eval_plain(const Term& e, const std::map<std::string, ConcreteValue>& store,
                                        const FunctionTable& funs);

// ---- program and configurations ----

enum class ThreadKind { process, sensor, actuator };

struct Thread {
    ThreadKind kind = ThreadKind::process;
    int id = -1;      // sensor or actuator id; -1 for control processes
    int pos = -1;     // position id in the program; -1 is the inactive component 0
    std::string fired;  // actuator only: action accepted and not yet performed

    auto operator<=>(const Thread&) const = default;
};

struct Pending {
    std::vector<InstrValue> values;
    std::vector<int> targets;  // node indices still to receive, sorted
};

struct NodeState {
    std::vector<Thread> threads;
    std::vector<Pending> pending;
    std::vector<std::optional<InstrValue>> store;
    std::vector<std::size_t> cursors;  // one per declared sensor, in declaration order
};

struct Configuration {
    std::vector<NodeState> nodes;
};

bool operator==(const Configuration& a, const Configuration& b);
std::size_t hash_value(const Configuration& c);

struct ConfigurationHash {
    std::size_t operator()(const Configuration& c) const { return hash_value(c); }
};

class Program {
public:
    explicit Program(System sys);

    struct NodeData {
        Label label;
        std::vector<std::string> locations;
        std::map<std::string, int> slot;
        std::vector<int> sensors;
        std::vector<int> actuators;
        std::vector<std::vector<ConcreteValue>> scripts;  // per sensor, same order as `sensors`
    };

    using Position = std::variant<const Process*, const Sensor*, const Actuator*>;

    const System& system() const { return sys_; }
    const FunctionTable& functions() const { return funs_; }
    const std::vector<NodeData>& nodes() const { return nodes_; }
    int node_index(const Label& l) const;
    const Position& position(int pos) const { return positions_[pos]; }
    // Follows mu-unfoldings; -1 for the inactive component.
    int normalize_pos(int pos) const { return pos < 0 ? -1 : normal_[pos]; }
    int position_node(int pos) const { return position_node_[pos]; }
    int position_count() const { return static_cast<int>(positions_.size()); }
    // Position id of an AST node of this program.
    int position_of(const void* p) const { return pos_of_.at(p); }

    Configuration initial() const;
    // Same as initial() but without congruence normalization.
    Configuration initial_raw() const;
    InstrumentedStore store_of(const Configuration& c, int node) const;

private:
    System sys_;
    FunctionTable funs_;
    std::vector<NodeData> nodes_;
    std::map<Label, int> index_;
    std::vector<Position> positions_;
    std::vector<int> position_node_;
    std::vector<int> normal_;
    std::unordered_map<const void*, int> pos_of_;
    std::vector<const void*> binder_;  // loop bound by each jump position
    std::vector<std::vector<Thread>> roots_;

    template <class P>
    int number(const P* p, int node, std::map<Ident, const P*>& scope);
    int compute_normal(int pos, int fuel);
};

Configuration normalize(const Program& prog, const Configuration& c);

// ---- steps and events ----

enum class Rule { sense, asgm, ev_out, multi_com, cond, int_, a_com, act, phys, decrypt };
std::string to_string(Rule r);

struct Redex {
    Rule rule = Rule::int_;
    int node = -1;
    int thread = -1;
    int other_node = -1;  // sender node for multi_com
    int other = -1;       // pending index for multi_com, actuator thread for a_com

    auto operator<=>(const Redex&) const = default;
};

enum class EventKind { sensed, assigned, evaluated, msg_sent, msg_delivered, act_triggered, cond_taken, decrypted, actuated };
std::string to_string(EventKind k);

struct TraceEvent {
    EventKind kind = EventKind::evaluated;
    Label node;
    Label peer;      // receiver of a delivery
    int index = 0;   // sensor or actuator id
    std::string name;  // variable, action or branch
    // Evaluated: (term text, value); sent and delivered messages: positional values;
    // Sensed and Assigned: one entry named after the location.
    std::vector<std::pair<std::string, InstrValue>> values;
    std::vector<std::pair<std::string, InstrValue>> bindings;  // delivered and decrypted bindings
};

struct StepRecord {
    std::size_t step = 0;
    Rule rule = Rule::int_;
    std::vector<TraceEvent> events;
};

struct SchedulerOptions {
    bool phys = false;
};

std::vector<Redex> enabled(const Program& prog, const Configuration& c, const SchedulerOptions& opts = {});
// Applies one enabled redex; throws Error when the redex is not enabled.
Configuration step(const Program& prog, const Configuration& c, const Redex& r, std::vector<TraceEvent>* events);

struct RunResult {
    std::vector<StepRecord> steps;
    Configuration final_config;
    std::string stop_reason;  // "stuck" or "budget"
};

RunResult run(const Program& prog, const Configuration& c0, std::uint64_t seed, std::size_t max_steps,
              const SchedulerOptions& opts = {});

struct Transition {
    std::size_t from = 0;
    std::size_t to = 0;
    StepRecord record;
};

struct ExploreResult {
    std::vector<Configuration> configs;
    std::vector<std::size_t> depth;
    std::vector<std::size_t> parent;       // BFS tree; root is its own parent
    std::vector<StepRecord> parent_step;   // step that discovered each configuration
    std::vector<Transition> transitions;   // every explored edge (when requested)
    bool truncated = false;
};

struct ExploreOptions {
    std::size_t depth = 8;
    std::size_t cap = 100000;
    bool keep_transitions = true;
    SchedulerOptions sched;
};

ExploreResult explore(const Program& prog, const Configuration& c0, const ExploreOptions& opts);

struct WalkStats {
    std::size_t configs = 0;      // distinct configurations met
    std::size_t transitions = 0;  // steps taken, revisits included
    std::size_t max_fingerprints = 0;
    bool truncated = false;
};

// Same reachable set and edges as explore(), but depth-first and keeping only 128-bit fingerprints of
// visited configurations, so depth-8 spaces with millions of configurations fit in memory. A configuration
// met again with a larger remaining budget is expanded again. on_config sees each configuration once;
// on_step sees every transition taken (an edge may be reported more than once).
WalkStats explore_each(const Program& prog, const Configuration& c0, const ExploreOptions& opts,
                       const std::function<void(const Configuration&)>& on_config,
                       const std::function<void(const Configuration&, const StepRecord&)>& on_step);

}  // namespace ilysa
