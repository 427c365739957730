#include "support.hpp"

#include <chrono>
#include <cstdio>
#include <iomanip>
#include <iostream>

using namespace ilysa;
using namespace ilysa::support;

namespace {

// runtime limits in seconds, one per criterion
constexpr double kLimit[10] = {0, 5, 5, 10, 5, 10, 300, 120, 60, 60};

constexpr std::size_t kRandomSystems6 = 100;
constexpr std::size_t kSchedules = 50;
constexpr std::size_t kScheduleSteps = 200;
constexpr std::size_t kExhaustiveDepth = 8;
constexpr std::size_t kRandomSystems7 = 50;
constexpr std::size_t kGrammarPairs = 1000;
constexpr int kTreeDepth = 4;
constexpr int kLanguageDepth = 5;  // depth used for grammar-language equality

struct Outcome {
    bool pass = true;
    std::vector<std::string> notes;

    void require(bool ok, const std::string& what)
    {
        pass = pass && ok;
        notes.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
    }
    void note(const std::string& what) { notes.push_back("     " + what); }
};

bool has_language(const ValueSet& vs, const AbstractValue& want) { return contains_language(vs, want); }

bool has_message(const std::set<Message>& ms, const Label& sender, const AbstractValue& want)
{
    return std::any_of(ms.begin(), ms.end(), [&](const Message& m) {
        return m.sender == sender && m.values.size() == 1 && same_language(m.values[0], want, kLanguageDepth);
    });
}

std::set<Label> labels_of(const System& s)
{
    std::set<Label> out;
    for (const auto& n : s.nodes) out.insert(n.label);
    return out;
}

PolicyConfig policy_file(const std::string& name) { return policy_from_json(Json::parse(read_file(corpus_path(name)))); }

Outcome criterion1()
{
    Outcome o;
    auto e = analyze(corpus("streetlight.ilysa"));
    auto i = iota(), n = nu();
    o.require(has_language(e.sigma_at("cp", "z"), i), "(a) iota in sigma_cp(z)");
    bool b_iota = has_language(e.sigma_at("cp", "z'"), i);
    bool b_nu = has_language(e.sigma_at("cp", "z'"), n);
    o.require(b_iota && b_nu, std::string("(b) {iota, nu} in sigma_cp(z'): iota ") + (b_iota ? "present" : "absent") +
                                  ", nu " + (b_nu ? "present" : "absent"));
    if (!b_iota)
        o.note("z' is only ever assigned noiseRed(z); a sound least estimate cannot contain iota there");
    o.require(has_language(e.theta_at("cp"), i) && has_language(e.theta_at("cp"), n), "(c) {iota, nu} in theta(cp)");
    o.require(has_message(e.kappa_at("a"), "cp", n), "(d) (cp, <nu>) in kappa(a)");
    return o;
}

Outcome criterion2()
{
    Outcome o;
    auto e = analyze(corpus("streetlight_amended.ilysa"));
    auto eps = epsilon();
    o.require(has_message(e.kappa_at("a"), "cp", eps), "kappa(a) holds (cp, <epsilon>)");
    auto parts = extract_decryption(eps, "k");
    bool exact = parts.size() == 1 && parts[0].size() == 1 && parts[0][0] == nu() && same_language(parts[0][0], nu());
    o.require(exact, "extract_decryption(epsilon, k) = [[nu]]");
    auto wrong = extract_decryption(eps, "k'");
    o.require(wrong.empty(), "no payload under the wrong key");
    return o;
}

Outcome criterion3()
{
    Outcome o;
    auto pol = policy_file("streetlight.policy.json");
    auto orig = corpus("streetlight.ilysa");
    auto eo = analyze(orig);
    auto conf = check_confidentiality(eo, pol);
    bool nu_on_edge = std::any_of(conf.witnesses.begin(), conf.witnesses.end(), [](const Witness& w) {
        return w.sender == "cp" && w.receiver == "a" && same_language(w.value, nu(), kLanguageDepth);
    });
    o.require(!conf.pass && nu_on_edge, "original: secrecy fails with nu on cp -> a");
    auto sel = check_selective_propagation(eo, pol, labels_of(orig));
    bool confined_to_s = std::any_of(sel.witnesses.begin(), sel.witnesses.end(), [](const Witness& w) {
        return w.sender == "a" && w.receiver == "s" && w.tag == Tag::confined;
    });
    o.require(!sel.pass && confined_to_s, "original: selective propagation fails, confined value on a -> s");

    auto amended = corpus("streetlight_amended.ilysa");
    auto ea = analyze(amended);
    auto conf2 = check_confidentiality(ea, pol);
    o.require(conf2.on_edge("cp", "a").pass, "amended: secrecy passes on cp -> a");
    o.note(std::string("amended: secrecy over all edges ") + (conf2.pass ? "passes" : "fails") + " (" +
           std::to_string(conf2.witnesses.size()) + " witnesses, on a -> s where an() is not a cipher)");
    o.require(check_selective_propagation(ea, pol, labels_of(amended)).pass, "amended: selective propagation passes");
    return o;
}

Outcome criterion4()
{
    Outcome o;
    auto e = analyze(corpus("streetlight.ilysa"));
    auto n = analyze(corpus("streetlight_noturnoff.ilysa"));
    for (const auto& p : {"p1", "p2", "p3", "p4"}) {
        const auto& a = e.alpha_at(p, 5);
        o.require(a.count("turnon") && a.count("turnoff"), std::string("alpha_") + p + "(5) has turnon, turnoff");
        o.require(!n.alpha_at(p, 5).count("turnoff"), std::string("without turnoff: turnoff not in alpha_") + p + "(5)");
    }
    return o;
}

Outcome criterion5()
{
    Outcome o;
    auto s = corpus("streetlight.ilysa");
    std::set<Edge> drop;
    for (const auto& n : s.nodes) drop.insert({"p2", n.label});
    auto r = what_if_comp(s, drop);
    std::set<Message> lost;
    for (const auto& k : r.removed)
        if (k.receiver == "p3") lost.insert(k.message);
    std::set<Message> want{Message{"p2", {literal_value("p2", Atom{"car"})}}, Message{"p2", {literal_value("p2", true)}}};
    o.require(lost == want, "kappa(p3) loses exactly (p2, <car^p2>) and (p2, <true^p2>)");
    bool gone = true;
    for (const auto& m : want) gone = gone && r.before.kappa_at("p3").count(m) && !r.after.kappa_at("p3").count(m);
    o.require(gone, "present before, absent after");
    o.note(std::to_string(r.removed.size()) + " kappa entries removed system-wide, " + std::to_string(r.added.size()) +
           " added");
    return o;
}

Outcome criterion6()
{
    Outcome o;
    std::vector<std::uint64_t> skipped;
    auto randoms = random_systems(kRandomSystems6, 1, &skipped);
    std::vector<std::pair<std::string, System>> all;
    for (const auto& name : corpus_systems()) all.emplace_back(name, corpus(name));
    for (auto& r : randoms) all.emplace_back("random seed " + std::to_string(r.seed), std::move(r.system));
    std::size_t configs = 0, transitions = 0, cex = 0;
    bool truncated = false;
    for (const auto& [name, s] : all) {
        auto e = analyze(s);
        auto runs = audit_runs(s, e, kSchedules, kScheduleSteps, 1);
        auto walk = audit_exhaustive(s, e, kExhaustiveDepth);
        configs += walk.configs;
        transitions += runs.transitions + walk.transitions;
        truncated = truncated || walk.truncated;
        std::size_t here = runs.counterexamples.size() + walk.counterexamples.size();
        if (here) {
            o.note(name + ": " + (runs.counterexamples.empty() ? walk.counterexamples : runs.counterexamples).front());
            cex += here;
        }
    }
    o.require(cex == 0, std::to_string(all.size()) + " systems, " + std::to_string(cex) + " counterexamples");
    o.require(!truncated, "no exploration truncated");
    o.note(std::to_string(configs) + " configurations, " + std::to_string(transitions) + " transitions audited");
    if (!skipped.empty()) {
        std::string seeds;
        for (auto k : skipped) seeds += " " + std::to_string(k);
        o.note("seeds skipped, least estimate above the value cap:" + seeds);
    }
    return o;
}

Outcome criterion7()
{
    Outcome o;
    std::mt19937_64 rng(7);
    std::size_t candidates = 0, accepted = 0, meets = 0, failures = 0;
    for (const auto& [seed, s, least] : random_systems(kRandomSystems7)) {
        if (!check_estimate(s, least).empty()) ++failures;
        std::vector<Estimate> pool;
        for (int k = 0; k < 4; ++k) {
            auto noisy = add_noise(least, s, rng, 1 + static_cast<int>(rng() % 4));
            pool.push_back(noisy);
            auto cut = single_removals(noisy);
            for (int c = 0; c < 3 && !cut.empty(); ++c) pool.push_back(cut[rng() % cut.size()].second);
        }
        std::vector<Estimate> ok;
        for (auto& c : pool) {
            ++candidates;
            if (check_estimate(s, c).empty()) ok.push_back(std::move(c));
        }
        accepted += ok.size();
        for (const auto& c : ok)
            if (!leq(least, c)) ++failures;
        for (std::size_t a = 0; a < ok.size(); ++a)
            for (std::size_t b = a + 1; b < ok.size(); ++b) {
                ++meets;
                if (!check_estimate(s, meet(ok[a], ok[b])).empty()) ++failures;
            }
    }
    o.require(failures == 0, std::to_string(failures) + " failures");
    o.note(std::to_string(candidates) + " candidates, " + std::to_string(accepted) + " accepted, " +
           std::to_string(meets) + " meets checked");
    o.require(accepted > kRandomSystems7, "enough accepted candidates");
    return o;
}

Outcome criterion8()
{
    Outcome o;
    std::size_t pairs = 0, members = 0, disagreements = 0;
    for (std::uint64_t seed = 1; pairs < kGrammarPairs; ++seed) {
        GrammarGen gen(seed);
        auto g = gen.grammar();
        bool overflow = false;
        auto lang = enumerate_language(g, kTreeDepth, 20000, &overflow);
        if (overflow) continue;
        for (int k = 0; k < 4 && pairs < kGrammarPairs; ++k) {
            auto t = gen.tree(g, kTreeDepth);
            if (static_cast<int>(tree_depth(t)) > kTreeDepth) continue;
            bool in = lang.count(tree_key(t)) > 0;
            members += in;
            disagreements += lang_member(t, g) != in;
            ++pairs;
        }
    }
    o.require(disagreements == 0,
              std::to_string(pairs) + " pairs (" + std::to_string(members) + " members), " +
                  std::to_string(disagreements) + " disagreements");

    // the shipped policy classification, every sensor, and every single sensor of each corpus system
    auto pol = policy_file("streetlight.policy.json");
    std::size_t grammars = 0, samples = 0, failed = 0, failed_shipped = 0, failed_leq = 0;
    std::set<std::string> failing;
    for (const auto& name : corpus_systems()) {
        auto s = corpus(name);
        std::set<SensorRef> sensors;
        for (const auto& n : s.nodes)
            for (int id : node_info(n).sensors) sensors.insert({n.label, id});
        std::vector<std::pair<std::string, TaggingScheme>> schemes{
            {"S(policy)", TaggingScheme::secrecy(pol.secret)},
            {"O(policy)", TaggingScheme::confinement(pol.confined, pol.anonymisers)},
            {"S(all)", TaggingScheme::secrecy(sensors)},
            {"O(all)", TaggingScheme::confinement(sensors, pol.anonymisers)}};
        for (const auto& r : sensors) {
            std::string ref = r.node + "#" + std::to_string(r.id);
            schemes.push_back({"S(" + ref + ")", TaggingScheme::secrecy({r})});
            schemes.push_back({"O(" + ref + ")", TaggingScheme::confinement({r}, pol.anonymisers)});
        }
        for (const auto& v : values_of(analyze(s))) {
            ++grammars;
            auto trees = sample_language(v, kTreeDepth, 200);
            samples += trees.size();
            for (std::size_t k = 0; k < schemes.size(); ++k) {
                const auto& [label, sc] = schemes[k];
                Tag g = apply_tagging(v, sc);
                for (const auto& t : trees) {
                    Tag d = tree_tag(t, sc);
                    if (d != g && d != Tag::public_ && d != Tag::open) {
                        ++failed_leq;
                        break;
                    }
                }
                if (tagging_agreement_check(sc, v, trees)) continue;
                ++failed;
                failed_shipped += k < 2;
                if (failing.insert(name + " " + label).second && failing.size() <= 4) {
                    auto odd = std::find_if(trees.begin(), trees.end(), [&](const ProvTree& t) { return tree_tag(t, sc) != g; });
                    o.note(name + " " + label + ": grammar " + to_string(g) + " " + to_string(v));
                    if (odd != trees.end()) o.note("  but " + to_string(*odd) + " is " + to_string(tree_tag(*odd, sc)));
                }
            }
        }
    }
    o.require(failed == 0, "tagging agreement (equality) on " + std::to_string(grammars) + " corpus grammars, " +
                               std::to_string(samples) + " sampled trees: " + std::to_string(failed) + " failures in " +
                               std::to_string(failing.size()) + " (system, scheme) pairs");
    if (failed)
        o.note("a nonterminal shared by sibling subterms collects the productions of both, so one grammar can derive "
               "trees with different tags; equality is unattainable there");
    o.note("shipped policy classification: " + std::to_string(failed_shipped) + " equality failures");
    o.note("lattice form (tree tag below grammar tag): " + std::to_string(failed_leq) + " failures");
    return o;
}

std::string capture(const std::string& cmd)
{
    std::string out;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) throw Error("cannot run " + cmd);
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, p)) > 0) out.append(buf, n);
    int rc = pclose(p);
    if (rc != 0) throw Error(cmd + " exited with " + std::to_string(rc));
    return out;
}

Outcome criterion9()
{
    Outcome o;
    const std::string cli = ILYSA_CLI;
    for (const auto& name : {"streetlight.ilysa", "streetlight_amended.ilysa", "relay.ilysa"}) {
        const std::string file = corpus_path(name);
        for (const auto& args : {"analyze --format json", "analyze", "simulate --seed 7 --steps 300"}) {
            std::string cmd = "env -u ILYSA_SEED " + cli + " " + args + " " + file + " 2>&1";
            auto a = capture(cmd);
            auto b = capture(cmd);
            o.require(a == b && !a.empty(), std::string(name) + ": " + args + " (" + std::to_string(a.size()) + " bytes)");
        }
    }
    return o;
}

}  // namespace

int main()
{
    using Clock = std::chrono::steady_clock;
    std::vector<Outcome (*)()> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                        criterion6, criterion7, criterion8, criterion9};
    bool all = true;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        int id = static_cast<int>(k) + 1;
        auto t0 = Clock::now();
        Outcome o;
        try {
            o = criteria[k]();
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        double secs = std::chrono::duration<double>(Clock::now() - t0).count();
        bool in_time = secs < kLimit[id];
        bool pass = o.pass && in_time;
        all = all && pass;
        for (const auto& n : o.notes) std::cout << "  [" << id << "] " << n << "\n";
        std::cout << "criterion " << id << ": " << (pass ? "PASS" : "FAIL") << " (" << std::fixed << std::setprecision(2)
                  << secs << " s, limit " << std::setprecision(0) << kLimit[id] << " s"
                  << (in_time ? "" : ", too slow") << ")" << std::endl;
    }
    return all ? 0 : 1;
}
