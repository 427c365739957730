#pragma once

#include "ilysa/semantics.hpp"
#include "ilysa/treegram.hpp"

namespace ilysa {

// (sender, <v1, ..., vr>) as stored in kappa(receiver).
struct Message {
    Label sender;
    std::vector<AbstractValue> values;

    auto operator<=>(const Message&) const = default;
};

std::string to_string(const Message& m);

using ValueSet = std::set<AbstractValue>;

struct Estimate {
    std::map<Label, std::map<std::string, ValueSet>> sigma;  // locations: variable names and #i
    std::map<Label, std::set<Message>> kappa;
    std::map<Label, ValueSet> theta;
    std::map<Label, std::map<int, std::set<Ident>>> alpha;

    bool operator==(const Estimate&) const = default;

    const ValueSet& sigma_at(const Label& l, const std::string& loc) const;
    const std::set<Message>& kappa_at(const Label& l) const;
    const ValueSet& theta_at(const Label& l) const;
    const std::set<Ident>& alpha_at(const Label& l, int j) const;

    // Drops empty entries so that equal estimates compare equal.
    void prune();
};

bool leq(const Estimate& a, const Estimate& b);
Estimate meet(const Estimate& a, const Estimate& b);
Estimate join(const Estimate& a, const Estimate& b);

struct CfaOptions {
    bool strict_paper = false;          // no alpha component
    std::optional<CompRelation> comp;   // overrides the system's relation
    std::size_t max_values = 200000;    // distinct abstract values before giving up
};

class CapExceeded : public Error {
public:
    using Error::Error;
};

// ---- constraints ----

enum class SlotKind { sigma, theta, temp, kappa, alpha, live };

struct Slot {
    SlotKind kind = SlotKind::temp;
    int node = -1;
    std::string loc;  // sigma location, or the site text for temp and live
    int index = 0;    // actuator id for alpha
};

struct Constraint {
    enum class Kind { include, subset, build, send, receive, unwrap };

    Kind kind = Kind::include;
    int guard = -1;  // live slot that must be set, -1 for none
    int element = 0; // include: interned element (value, action or 0 for live)
    int from = -1;   // subset source, receive kappa, unwrap subject
    int to = -1;     // subset/include/build target
    std::vector<int> args;      // build/send argument slots
    std::vector<int> targets;   // send: kappa slots; receive/unwrap: binder sigma slots
    int cont = -1;              // receive/unwrap: live slot of the continuation
    int node = -1;              // build: node of the symbol; send: sender; receive: receiver
    std::string name;           // function name or key
    bool encrypt = false;       // build: enc instead of fun
    int matched = 0;            // receive/unwrap: j
    int arity = 0;              // receive/unwrap: r
    std::vector<int> senders;   // receive: node indices allowed by Comp
};

struct ConstraintSystem {
    std::vector<Label> labels;
    std::vector<Slot> slots;
    std::vector<Constraint> constraints;
    std::vector<AbstractValue> seed_values;  // referenced by include elements below kActionBase
    std::vector<Ident> actions;              // include elements from kActionBase on
    bool strict_paper = false;
    std::size_t max_values = 200000;

    static constexpr int kActionBase = 1 << 28;
};

ConstraintSystem generate_constraints(const System& s, const CfaOptions& opts = {});

struct SolveStats {
    std::size_t values = 0;
    std::size_t messages = 0;
    std::size_t productions = 0;
    std::size_t firings = 0;
};

Estimate solve_least(const ConstraintSystem& cs, SolveStats* stats = nullptr);
Estimate analyze(const System& s, const CfaOptions& opts = {}, SolveStats* stats = nullptr);

// ---- checking ----

struct Violation {
    std::string clause;  // rule name, e.g. P-out
    Label node;
    std::string site;    // printed syntactic site
    std::string detail;
};

std::string to_string(const Violation& v);

std::vector<Violation> check_estimate(const System& s, const Estimate& e, const CfaOptions& opts = {});

// The minimal theta of a term (what the term analysis forces), computed directly.
ValueSet term_values(const Term& t, const Label& l, const Estimate& e);

// ---- soundness audit ----

struct Counterexample {
    std::size_t step = 0;
    std::string event;
    std::string missing;
};

std::string to_string(const Counterexample& c);

// Events of one step, stores not inspected.
std::vector<Counterexample> audit_events(const Estimate& e, const std::vector<TraceEvent>& events, std::size_t step,
                                         bool check_alpha = true);
// Store agreement of every node of a configuration.
std::vector<Counterexample> audit_store(const Program& prog, const Configuration& c, const Estimate& e,
                                        std::size_t step = 0);
// Replays a trace, rebuilding stores from the events, and checks every step.
std::vector<Counterexample> soundness_audit(const System& s, const Estimate& e, const std::vector<StepRecord>& trace,
                                            bool check_alpha = true);

}  // namespace ilysa
