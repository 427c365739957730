#include "support.hpp"

#include <gtest/gtest.h>

using namespace ilysa;
using namespace ilysa::support;

namespace {

bool tag_leq(Tag a, Tag b) { return a == b || a == Tag::public_ || a == Tag::open; }

}  // namespace

TEST(Random, ExponentialSystemsAreRare)
{
    std::vector<std::uint64_t> skipped;
    random_systems(200, 1, &skipped);
    EXPECT_LE(skipped.size(), 4u);
}

TEST(Random, LeastEstimateIsAccepted)
{
    for (const auto& [seed, s, least] : random_systems(60)) {
        auto vs = check_estimate(s, least);
        EXPECT_TRUE(vs.empty()) << to_string(s) << (vs.empty() ? "" : to_string(vs.front()));
    }
}

TEST(Random, SubjectReduction)
{
    for (const auto& [seed, s, e] : random_systems(25)) {
        auto runs = audit_runs(s, e, 10, 100, seed);
        EXPECT_TRUE(runs.counterexamples.empty()) << to_string(s) << runs.counterexamples.front();
        auto all = audit_exhaustive(s, e, 5);
        EXPECT_TRUE(all.counterexamples.empty()) << to_string(s) << all.counterexamples.front();
    }
}

TEST(Random, Minimality)
{
    for (const auto& [seed, s, least] : random_systems(20)) {
        for (const auto& [what, smaller] : single_removals(least))
            EXPECT_FALSE(check_estimate(s, smaller).empty()) << to_string(s) << " without " << what;
    }
}

TEST(Random, MooreFamily)
{
    std::mt19937_64 rng(77);
    for (const auto& [seed, s, least] : random_systems(15)) {
        auto a = add_noise(least, s, rng, 3);
        auto b = add_noise(least, s, rng, 3);
        ASSERT_TRUE(check_estimate(s, a).empty());
        ASSERT_TRUE(check_estimate(s, b).empty());
        EXPECT_TRUE(check_estimate(s, meet(a, b)).empty()) << to_string(s);
        EXPECT_TRUE(leq(least, a));
        EXPECT_TRUE(leq(least, meet(a, b)));
    }
}

TEST(Random, AnalysisIsDeterministic)
{
    for (const auto& [seed, s, least] : random_systems(20)) {
        EXPECT_EQ(estimate_to_json(analyze(s)).dump(), estimate_to_json(analyze(s)).dump());
    }
}

TEST(Random, DepthFirstWalkMatchesBreadthFirst)
{
    for (const auto& [seed, s, least] : random_systems(30)) {
        Program prog(s);
        ExploreOptions o;
        o.depth = 6;
        auto bfs = explore(prog, prog.initial(), o);
        std::set<std::size_t> a, b;
        for (const auto& c : bfs.configs) a.insert(hash_value(c));
        std::size_t steps = 0;
        explore_each(
            prog, prog.initial(), o, [&](const Configuration& c) { b.insert(hash_value(c)); },
            [&](const Configuration&, const StepRecord&) { ++steps; });
        EXPECT_EQ(a, b);
        EXPECT_GE(steps, bfs.transitions.size());
    }
}

TEST(Random, TreeTagsBelowGrammarTags)
{
    // sampled trees of every estimate value never carry a tag above the grammar's
    for (const auto& [seed, s, least] : random_systems(40)) {
        std::set<SensorRef> sensors;
        for (const auto& n : s.nodes)
            if (!node_info(n).sensors.empty()) sensors.insert({n.label, 1});
        auto secrecy = TaggingScheme::secrecy(sensors);
        auto confinement = TaggingScheme::confinement(sensors, {"f"});
        for (const auto& v : values_of(least)) {
            Tag gs = apply_tagging(v, secrecy);
            Tag gc = apply_tagging(v, confinement);
            auto samples = sample_language(v, 4, 40);
            for (const auto& t : samples) {
                EXPECT_TRUE(tag_leq(tree_tag(t, secrecy), gs)) << to_string(v) << " " << to_string(t);
                EXPECT_TRUE(tag_leq(tree_tag(t, confinement), gc)) << to_string(v) << " " << to_string(t);
            }
            // the grammar tag is attained by some tree when the language is non-empty
            if (gs == Tag::secret && !samples.empty()) {
                bool some = std::any_of(samples.begin(), samples.end(),
                                        [&](const ProvTree& t) { return tree_tag(t, secrecy) == Tag::secret; });
                auto deep = sample_language(v, 6, 400);
                some = some || std::any_of(deep.begin(), deep.end(),
                                           [&](const ProvTree& t) { return tree_tag(t, secrecy) == Tag::secret; });
                EXPECT_TRUE(some) << to_string(v);
            }
        }
    }
}

TEST(Random, LangMemberAgreesWithEnumeration)
{
    int checked = 0;
    for (std::uint64_t seed = 1; seed <= 300; ++seed) {
        GrammarGen gen(seed);
        auto g = gen.grammar();
        bool overflow = false;
        auto lang = enumerate_language(g, 4, 5000, &overflow);
        if (overflow) continue;
        auto t = gen.tree(g, 4);
        if (tree_depth(t) > 4) continue;
        EXPECT_EQ(lang_member(t, g), lang.count(tree_key(t)) > 0) << to_string(g) << " " << to_string(t);
        ++checked;
    }
    EXPECT_GT(checked, 200);
}

TEST(Random, SampledTreesAreMembers)
{
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        auto g = GrammarGen(seed).grammar();
        for (const auto& t : sample_language(g, 4, 30)) EXPECT_TRUE(lang_member(t, g)) << to_string(t);
        auto shortest = shortest_tree(g);
        auto samples = sample_language(g, 8, 1);
        EXPECT_EQ(shortest == nullptr, samples.empty()) << to_string(g);
    }
}

TEST(Random, PrinterRoundTripPreservesEstimate)
{
    for (const auto& [seed, s, least] : random_systems(30)) {
        EXPECT_EQ(analyze(parse_system({to_string(s), "rt"})), analyze(s));
    }
}
