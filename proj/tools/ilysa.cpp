#include "ilysa/cfa.hpp"
#include "ilysa/io.hpp"
#include "ilysa/parser.hpp"
#include "ilysa/policy.hpp"
#include "ilysa/semantics.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <sstream>

using namespace ilysa;

namespace {

enum Exit { ok = 0, violations = 1, usage = 2 };

struct Common {
    std::string file;
    std::string format = "text";
    bool strict_paper = false;
    std::size_t cap = 200000;
};

std::uint64_t default_seed()
{
    if (const char* s = std::getenv("ILYSA_SEED")) {
        try {
            return std::stoull(s);
        } catch (const std::exception&) {
            std::cerr << "ilysa: ignoring malformed ILYSA_SEED '" << s << "'\n";
        }
    }
    return 1;
}

System load(const std::string& path) { return load_system(path); }

CfaOptions cfa_options(const Common& c)
{
    CfaOptions o;
    o.strict_paper = c.strict_paper;
    o.max_values = c.cap;
    return o;
}

void emit(const std::string& out, const std::string& text)
{
    if (out.empty() || out == "-") std::cout << text;
    else write_file(out, text);
}

std::string summary_text(const System& s, const Estimate& e, const SolveStats& st, bool strict)
{
    std::string out;
    for (const auto& n : s.nodes) {
        std::size_t sigma = 0, locs = 0, alpha = 0;
        if (auto it = e.sigma.find(n.label); it != e.sigma.end())
            for (const auto& [loc, vs] : it->second) {
                ++locs;
                sigma += vs.size();
            }
        if (auto it = e.alpha.find(n.label); it != e.alpha.end())
            for (const auto& [j, gs] : it->second) alpha += gs.size();
        out += n.label + ": sigma " + std::to_string(sigma) + " in " + std::to_string(locs) + " locations, kappa " +
               std::to_string(e.kappa_at(n.label).size()) + ", theta " + std::to_string(e.theta_at(n.label).size());
        if (!strict) out += ", alpha " + std::to_string(alpha);
        out += "\n";
    }
    out += "values " + std::to_string(st.values) + ", productions " + std::to_string(st.productions) + ", messages " +
           std::to_string(st.messages) + "\n";
    return out;
}

Json summary_json(const System& s, const Estimate& e, const SolveStats& st, bool strict)
{
    Json nodes = Json::object();
    for (const auto& n : s.nodes) {
        Json sig = Json::object();
        if (auto it = e.sigma.find(n.label); it != e.sigma.end())
            for (const auto& [loc, vs] : it->second) sig[loc] = vs.size();
        Json entry{{"sigma", sig}, {"kappa", e.kappa_at(n.label).size()}, {"theta", e.theta_at(n.label).size()}};
        if (!strict) {
            Json al = Json::object();
            if (auto it = e.alpha.find(n.label); it != e.alpha.end())
                for (const auto& [j, gs] : it->second) al[std::to_string(j)] = gs;
            entry["alpha"] = al;
        }
        nodes[n.label] = entry;
    }
    return {{"nodes", nodes}, {"values", st.values}, {"productions", st.productions}, {"messages", st.messages}};
}

int cmd_parse(const Common& c)
{
    System s = load(c.file);
    if (c.format == "json") {
        Json j{{"system", s.name}, {"nodes", Json::array()}, {"node_count", node_count(s)}};
        for (const auto& n : s.nodes) j["nodes"].push_back(n.label);
        j["text"] = to_string(s);
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << to_string(s);
    }
    return ok;
}

int cmd_analyze(const Common& c, const std::string& out)
{
    System s = load(c.file);
    auto opts = cfa_options(c);
    SolveStats st;
    Estimate e = analyze(s, opts, &st);
    auto bad = check_estimate(s, e, opts);
    if (!bad.empty()) {
        for (const auto& v : bad) std::cerr << "ilysa: self-check: " << to_string(v) << "\n";
        return usage;
    }
    write_file(out, estimate_to_json(e).dump(2) + "\n");
    if (c.format == "json") std::cout << summary_json(s, e, st, c.strict_paper).dump(2) << "\n";
    else std::cout << summary_text(s, e, st, c.strict_paper);
    return ok;
}

int cmd_simulate(const Common& c, std::uint64_t seed, std::size_t steps, const std::string& out, bool exhaustive,
                 std::size_t depth, bool phys)
{
    System s = load(c.file);
    Program prog(s);
    SchedulerOptions sched;
    sched.phys = phys;
    if (!exhaustive) {
        RunResult r = run(prog, prog.initial(), seed, steps, sched);
        emit(out, trace_to_jsonl(r.steps));
        std::cerr << "ilysa: " << r.steps.size() << " steps, stopped: " << r.stop_reason << "\n";
        return ok;
    }
    ExploreOptions eo;
    eo.depth = depth;
    eo.cap = c.cap;
    eo.keep_transitions = false;
    eo.sched = sched;
    ExploreResult ex = explore(prog, prog.initial(), eo);
    // One line per reachable configuration: the path that first reached it.
    std::string text;
    for (std::size_t i = 0; i < ex.configs.size(); ++i) {
        std::vector<StepRecord> path;
        for (std::size_t k = i; k != 0; k = ex.parent[k]) path.push_back(ex.parent_step[k]);
        std::reverse(path.begin(), path.end());
        Json steps = Json::array();
        for (const auto& r : path) steps.push_back(to_json(r));
        text += Json{{"trace", i}, {"depth", ex.depth[i]}, {"steps", steps}}.dump() + "\n";
    }
    emit(out, text);
    std::cerr << "ilysa: " << ex.configs.size() << " configurations" << (ex.truncated ? " (truncated)" : "") << "\n";
    return ok;
}

// Accepts a plain trace (one step per line) or the exhaustive form (one trace per line).
std::vector<std::vector<StepRecord>> load_traces(const std::string& path)
{
    std::string text = read_file(path);
    std::vector<std::vector<StepRecord>> out;
    std::vector<StepRecord> plain;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            Json j = Json::parse(line);
            if (j.contains("steps")) {
                std::vector<StepRecord> t;
                for (const auto& r : j.at("steps")) t.push_back(step_from_json(r));
                out.push_back(std::move(t));
            } else {
                plain.push_back(step_from_json(j));
            }
        } catch (const std::exception& e) {
            throw Error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!plain.empty() || out.empty()) out.push_back(std::move(plain));
    return out;
}

void check_schema(const System& s, const std::vector<StepRecord>& trace)
{
    for (const auto& r : trace)
        for (const auto& ev : r.events) {
            const Node* n = s.find(ev.node);
            if (!n) throw Error("trace step " + std::to_string(r.step) + " names unknown node " + ev.node);
            if (!ev.peer.empty() && !s.find(ev.peer))
                throw Error("trace step " + std::to_string(r.step) + " names unknown node " + ev.peer);
            auto known_loc = [&](const Node& node, const std::string& loc) {
                auto info = node_info(node);
                if (std::find(info.vars.begin(), info.vars.end(), loc) != info.vars.end()) return true;
                for (int i : info.sensors)
                    if (loc == "#" + std::to_string(i)) return true;
                return false;
            };
            auto check = [&](const Node& node, const std::string& loc) {
                if (!known_loc(node, loc))
                    throw Error("trace step " + std::to_string(r.step) + " names unknown location " + loc + " of " + node.label);
            };
            if (ev.kind == EventKind::sensed || ev.kind == EventKind::assigned)
                for (const auto& [loc, v] : ev.values) check(*n, loc);
            if (ev.kind == EventKind::decrypted)
                for (const auto& [x, v] : ev.bindings) check(*n, x);
            if (ev.kind == EventKind::msg_delivered)
                for (const auto& [x, v] : ev.bindings) check(*s.find(ev.peer), x);
        }
}

int cmd_audit(const Common& c, const std::string& est_path, const std::string& trace_path)
{
    System s = load(c.file);
    Estimate e = estimate_from_json(Json::parse(read_file(est_path)));
    auto traces = load_traces(trace_path);
    std::size_t bad = 0;
    for (std::size_t t = 0; t < traces.size(); ++t) {
        check_schema(s, traces[t]);
        for (const auto& ce : soundness_audit(s, e, traces[t], !c.strict_paper)) {
            ++bad;
            std::cout << (traces.size() > 1 ? "trace " + std::to_string(t) + " " : "") << to_string(ce) << "\n";
        }
    }
    if (bad == 0) std::cout << "ok: " << traces.size() << (traces.size() == 1 ? " trace" : " traces") << " covered\n";
    return bad ? violations : ok;
}

std::string verdict_text(const Verdict& v)
{
    std::string out = v.policy + ": " + (v.pass ? "PASS" : "FAIL") + "\n";
    if (!v.note.empty()) out += "  note: " + v.note + "\n";
    for (const auto& w : v.witnesses) {
        out += "  may-flow " + w.sender + " -> " + w.receiver + " position " + std::to_string(w.position) + ": " +
               display_name(w.value.start) + " [" + to_string(w.tag) + "]";
        if (w.example) out += " e.g. " + to_string(w.example);
        out += "\n";
    }
    return out;
}

int cmd_check(const Common& c, const std::string& policy_path)
{
    System s = load(c.file);
    PolicyConfig cfg = policy_path.empty() ? s.preamble.policy : policy_from_json(Json::parse(read_file(policy_path)));
    auto problems = validate_policy(s, cfg);
    if (!problems.empty()) {
        for (const auto& p : problems) std::cerr << "ilysa: policy: " << p << "\n";
        return usage;
    }
    Estimate e = analyze(s, cfa_options(c));
    auto verdicts = check_policies(s, e, cfg);
    bool pass = std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass; });
    if (c.format == "json") {
        Json a = Json::array();
        for (const auto& v : verdicts) a.push_back(to_json(v));
        std::cout << Json{{"pass", pass}, {"verdicts", a}}.dump(2) << "\n";
    } else {
        if (verdicts.empty()) std::cout << "no policy enabled: PASS\n";
        for (const auto& v : verdicts) std::cout << verdict_text(v);
    }
    return pass ? ok : violations;
}

int cmd_whatif(const Common& c, const std::vector<std::string>& drops)
{
    System s = load(c.file);
    std::set<Edge> edges;
    for (const auto& d : drops) {
        auto colon = d.find(':');
        if (colon == std::string::npos || colon == 0 || colon + 1 == d.size())
            throw CLI::ValidationError("--drop-edge", "expected FROM:TO, got '" + d + "'");
        Edge e{d.substr(0, colon), d.substr(colon + 1)};
        if (!s.find(e.first) || !s.find(e.second)) throw Error("--drop-edge names an unknown node in '" + d + "'");
        edges.insert(e);
    }
    WhatIfReport r = what_if_comp(s, edges, cfa_options(c));
    if (c.format == "json") {
        Json removed = Json::array();
        for (const auto& k : r.removed) {
            Json vs = Json::array();
            for (const auto& v : k.message.values) vs.push_back(grammar_to_json(v));
            removed.push_back({{"receiver", k.receiver}, {"sender", k.message.sender}, {"values", vs}});
        }
        Json added = Json::array();
        for (const auto& k : r.added) added.push_back({{"receiver", k.receiver}, {"message", to_string(k.message)}});
        std::cout << Json{{"removed", removed}, {"added", added}}.dump(2) << "\n";
    } else {
        if (r.removed.empty() && r.added.empty()) std::cout << "no change in kappa\n";
        for (const auto& k : r.removed) std::cout << "- kappa(" << k.receiver << ") " << to_string(k.message) << "\n";
        for (const auto& k : r.added) std::cout << "+ kappa(" << k.receiver << ") " << to_string(k.message) << "\n";
    }
    return ok;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"IoT-LySa toolchain: parse, analyse, simulate and check systems"};
    app.require_subcommand(1);
    Common c;
    auto common = [&](CLI::App* sub) {
        sub->add_option("file", c.file, "system file (.ilysa)")->required();
        sub->add_option("--format", c.format, "output format")->check(CLI::IsMember({"text", "json"}));
        sub->add_flag("--strict-paper", c.strict_paper, "drop the actuator component alpha");
        sub->add_option("--cap", c.cap, "abstract value cap (analysis) or configuration cap (exploration)")
            ->check(CLI::PositiveNumber);
    };

    auto* parse = app.add_subcommand("parse", "parse and print a system");
    common(parse);

    std::string est_out = "estimate.json";
    auto* analyze_cmd = app.add_subcommand("analyze", "compute the least estimate");
    common(analyze_cmd);
    analyze_cmd->add_option("-o,--out", est_out, "estimate file");

    std::uint64_t seed = default_seed();
    std::size_t steps = 50, depth = 8;
    std::string trace_out;
    bool exhaustive = false, phys = false;
    auto* sim = app.add_subcommand("simulate", "run the instrumented semantics");
    common(sim);
    sim->add_option("--seed", seed, "scheduler seed (default $ILYSA_SEED or 1)");
    sim->add_option("--steps", steps, "step budget");
    sim->add_option("-o,--out", trace_out, "trace file (default stdout)");
    sim->add_flag("--exhaustive", exhaustive, "explore every interleaving up to --depth");
    sim->add_option("--depth", depth, "exploration depth");
    sim->add_flag("--phys", phys, "enable spontaneous sensor changes");

    std::string est_in, trace_in;
    auto* audit = app.add_subcommand("audit", "check a trace against an estimate");
    common(audit);
    audit->add_option("--estimate", est_in, "estimate file")->required();
    audit->add_option("--trace", trace_in, "trace file")->required();

    std::string policy;
    auto* check = app.add_subcommand("check", "check data propagation policies");
    common(check);
    check->add_option("--policy", policy, "policy JSON (default: the system's policy block)");

    std::vector<std::string> drops;
    auto* whatif = app.add_subcommand("whatif", "re-analyse with Comp edges removed");
    common(whatif);
    whatif->add_option("--drop-edge", drops, "edge FROM:TO to remove");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return usage;
    }

    try {
        if (parse->parsed()) return cmd_parse(c);
        if (analyze_cmd->parsed()) return cmd_analyze(c, est_out);
        if (sim->parsed()) return cmd_simulate(c, seed, steps, trace_out, exhaustive, depth, phys);
        if (audit->parsed()) return cmd_audit(c, est_in, trace_in);
        if (check->parsed()) return cmd_check(c, policy);
        if (whatif->parsed()) return cmd_whatif(c, drops);
    } catch (const ParseFailure& e) {
        for (const auto& err : e.errors())
            std::cerr << e.path() << ":" << err.line << ":" << err.column << ": " << err.message << "\n";
        return violations;
    } catch (const CLI::ValidationError& e) {
        std::cerr << "ilysa: " << e.what() << "\n";
        return usage;
    } catch (const CapExceeded& e) {
        std::cerr << "ilysa: " << e.what() << "\n";
        return usage;
    } catch (const std::exception& e) {
        std::cerr << "ilysa: " << e.what() << "\n";
        return usage;
    }
    return usage;
}
