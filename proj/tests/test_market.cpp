#include "doctest.h"

#include <algorithm>
#include <random>

#include "imkt/market.hpp"
#include "test_helpers.hpp"

using namespace imkt;
using namespace testutil;

TEST_CASE("validate_market accepts the swap market") {
    CHECK(validate_market(swap_market()).ok());
}

TEST_CASE("validate_market flags an out-of-range weight") {
    Market m = swap_market();
    std::get<LinearUtility>(m.traders[0].utility).influence[0].terms.push_back(
        FormTerm{"T2", 0, rat(3, 2)});
    Diagnostics diag = validate_market(m);
    REQUIRE(!diag.ok());
    CHECK(diag.issues[0].find("out of [0,1]") != std::string::npos);
}

TEST_CASE("validate_market flags supply outside the band") {
    Market m = swap_market();
    m.traders[0].endowment[0] = rat(3);
    Diagnostics diag = validate_market(m);
    REQUIRE(!diag.ok());
    CHECK(diag.issues[0].find("outside [1/2, 2]") != std::string::npos);
}

TEST_CASE("validate_market strict mode requires supply exactly 1") {
    Market m = swap_market();
    CHECK(validate_market(m, SupplyRule::ExactlyOne).ok());
    m.traders[0].endowment[0] = rat(3, 4);
    CHECK(validate_market(m, SupplyRule::Band).ok());
    CHECK(!validate_market(m, SupplyRule::ExactlyOne).ok());
}

TEST_CASE("validate_market flags drop above peak and dangling references") {
    Market m;
    m.goods = 1;
    m.traders.push_back(threshold_trader("K", {rat(1)}, {rat(1, 4)}, {rat(1, 2)}));
    Diagnostics diag = validate_market(m);
    REQUIRE(!diag.ok());
    CHECK(diag.issues[0].find("drop out of [0, peak]") != std::string::npos);

    Market m2 = swap_market();
    std::get<LinearUtility>(m2.traders[0].utility).influence[1].terms.push_back(
        FormTerm{"nobody", 0, rat(1, 2)});
    Diagnostics diag2 = validate_market(m2);
    REQUIRE(!diag2.ok());
    CHECK(diag2.issues[0].find("unknown trader") != std::string::npos);
}

TEST_CASE("eval_utility: plain linear sum") {
    Market m;
    m.goods = 2;
    m.traders.push_back(linear_trader("K", {rat(1), rat(1)}, {rat(1), rat(1)}));
    AllocationProfile profile;
    profile.set("K", {rat(1, 2), rat(1, 4)});
    CHECK(eval_utility(m, "K", profile) == rat(3, 4));
}

TEST_CASE("eval_utility: linear with a neighbour term") {
    Market m;
    m.goods = 2;
    m.traders.push_back(linear_trader(
        "K", {rat(1), rat(0)}, {rat(1), rat(1)},
        {LinearForm{}, LinearForm{{FormTerm{"J", 0, rat(1)}}}}));
    m.traders.push_back(linear_trader("J", {rat(0), rat(1)}, {rat(0), rat(0)}));
    AllocationProfile profile;
    profile.set("K", {rat(1, 2), rat(1, 2)});
    profile.set("J", {rat(1, 5), rat(0)});
    CHECK(eval_utility(m, "K", profile) == rat(11, 10));
}

TEST_CASE("eval_utility: threshold kink") {
    Market m;
    m.goods = 1;
    m.traders.push_back(threshold_trader(
        "K", {rat(1)}, {rat(4, 5)}, {rat(1, 2)},
        {LinearForm{{FormTerm{"J", 0, rat(2, 5)}}}}));
    m.traders.push_back(linear_trader("J", {rat(0)}, {rat(0)}));
    AllocationProfile profile;
    profile.set("K", {rat(1)});
    profile.set("J", {rat(1)});  // form value 2/5
    CHECK(eval_utility(m, "K", profile) == rat(7, 10));
}

TEST_CASE("eval_utility throws when a referenced trader is missing") {
    Market m = influence_pair();
    AllocationProfile profile;
    profile.set("P1", {rat(1), rat(0)});
    CHECK_THROWS(eval_utility(m, "P1", profile));
}

TEST_CASE("effective_segments: threshold with zero drop is one linear piece") {
    Market m;
    m.goods = 1;
    m.traders.push_back(threshold_trader(
        "K", {rat(1)}, {rat(3, 5)}, {rat(0)},
        {LinearForm{{FormTerm{"J", 0, rat(1, 2)}}}}));
    m.traders.push_back(linear_trader("J", {rat(0)}, {rat(0)}));
    AllocationProfile others;
    others.set("J", {rat(1)});
    auto segs = effective_segments(m, "K", others);
    REQUIRE(segs[0].size() == 1);
    CHECK(segs[0][0].slope == rat(3, 5));
    CHECK(!segs[0][0].cap.has_value());
}

TEST_CASE("effective_segments: threshold kink at f/d") {
    Market m;
    m.goods = 1;
    m.traders.push_back(threshold_trader(
        "K", {rat(1)}, {rat(4, 5)}, {rat(1, 2)},
        {LinearForm{{FormTerm{"J", 0, rat(2, 5)}}}}));
    m.traders.push_back(linear_trader("J", {rat(0)}, {rat(0)}));
    AllocationProfile others;
    others.set("J", {rat(1)});
    auto segs = effective_segments(m, "K", others);
    REQUIRE(segs[0].size() == 2);
    CHECK(segs[0][0].slope == rat(4, 5));
    CHECK(*segs[0][0].cap == rat(4, 5));
    CHECK(segs[0][1].slope == rat(3, 10));
    CHECK(!segs[0][1].cap.has_value());
}

TEST_CASE("effective_segments: linear slope plus constant-valued form") {
    Market m;
    m.goods = 1;
    m.traders.push_back(linear_trader(
        "K", {rat(1)}, {rat(1)}, {LinearForm{{FormTerm{"J", 0, rat(1)}}}}));
    m.traders.push_back(linear_trader("J", {rat(0)}, {rat(0)}));
    AllocationProfile others;
    others.set("J", {rat(1, 81)});
    auto segs = effective_segments(m, "K", others);
    REQUIRE(segs[0].size() == 1);
    CHECK(segs[0][0].slope == rat(82, 81));
}

TEST_CASE("segment slopes are nonincreasing and integrate back to the utility") {
    std::mt19937_64 rng(2024);
    for (int iter = 0; iter < 100; ++iter) {
        int traders = 2 + (int)(rng() % 2), goods = 1 + (int)(rng() % 3);
        std::vector<std::pair<int, int>> edges;
        if (traders == 3) edges = {{0, 1}, {1, 2}};
        else edges = {{0, 1}};
        Market m = random_market(rng, traders, goods, edges);
        REQUIRE(validate_market(m).ok());
        AllocationProfile profile = random_profile(rng, m, 8, 16);
        for (const auto& t : m.traders) {
            auto segs = effective_segments(m, t.id, profile);
            Rat total(0);
            for (int g = 0; g < goods; ++g) {
                for (size_t s = 1; s < segs[g].size(); ++s)
                    CHECK(segs[g][s].slope <= segs[g][s - 1].slope);
                total += segments_value_at(segs[g], (*profile.get(t.id))[g]);
            }
            CHECK(total == eval_utility(m, t.id, profile));
            CHECK(total == oracle_utility(m, t.id, profile));
        }
    }
}

TEST_CASE("eval_utility is nondecreasing in each own coordinate") {
    std::mt19937_64 rng(77);
    for (int iter = 0; iter < 60; ++iter) {
        Market m = random_market(rng, 2, 2, {{0, 1}});
        AllocationProfile profile = random_profile(rng, m, 4, 8);
        const std::string id = m.traders[rng() % 2].id;
        int g = (int)(rng() % 2);
        Rat before = eval_utility(m, id, profile);
        std::vector<Rat> bumped = *profile.get(id);
        bumped[g] += rat(1 + (long)(rng() % 4), 4);
        profile.set(id, bumped);
        CHECK(eval_utility(m, id, profile) >= before);
    }
}

TEST_CASE("per-good utility curves are concave") {
    std::mt19937_64 rng(78);
    for (int iter = 0; iter < 60; ++iter) {
        Market m = random_market(rng, 2, 2, {{0, 1}});
        AllocationProfile others = random_profile(rng, m, 4, 8);
        auto segs = effective_segments(m, m.traders[0].id, others);
        int g = (int)(rng() % 2);
        Rat a = rat((long)(rng() % 9), 4), b = rat((long)(rng() % 9), 4);
        Rat mid = (a + b) / 2;
        CHECK(segments_value_at(segs[g], mid) * 2 >=
              segments_value_at(segs[g], a) + segments_value_at(segs[g], b));
    }
}

TEST_CASE("influence graph matches the positive-weight term structure") {
    Market m = influence_pair();
    DirectedGraph g = build_influence_graph(m);
    CHECK(g.has_edge("P1", "P2"));
    CHECK(g.has_edge("P2", "P1"));
    CHECK(g.edges.size() == 2);

    CHECK(build_influence_graph(swap_market()).edges.empty());

    // zero-weight terms do not create edges
    Market z = swap_market();
    std::get<LinearUtility>(z.traders[0].utility).influence[0].terms.push_back(
        FormTerm{"T2", 0, rat(0)});
    CHECK(build_influence_graph(z).edges.empty());
}

TEST_CASE("influence edges are exactly the pairs with a numeric dependence witness") {
    std::mt19937_64 rng(79);
    for (int iter = 0; iter < 40; ++iter) {
        int traders = 3;
        Market m = random_market(rng, traders, 2, {{0, 1}, {1, 2}});
        DirectedGraph g = build_influence_graph(m);

        // independent symbolic recomputation from the raw terms
        std::set<std::pair<std::string, std::string>> expect;
        for (const auto& t : m.traders) {
            const std::vector<LinearForm>* forms;
            if (const auto* lin = std::get_if<LinearUtility>(&t.utility)) forms = &lin->influence;
            else forms = &std::get<ThresholdUtility>(t.utility).influence;
            for (const auto& f : *forms)
                for (const auto& term : f.terms)
                    if (term.weight > 0) expect.insert({term.trader, t.id});
        }
        std::set<std::pair<std::string, std::string>> got;
        for (auto [a, b] : g.edges) got.insert({g.vertices[a], g.vertices[b]});
        CHECK(got == expect);

        // one numeric witness per edge: with every other neighbour silenced,
        // moving the source's bundle from zeros to twos changes the target
        for (const auto& [src, dst] : expect) {
            AllocationProfile profile;
            for (const auto& t : m.traders) profile.set(t.id, {rat(0), rat(0)});
            profile.set(dst, {rat(2), rat(2)});
            profile.set(src, {rat(2), rat(2)});
            AllocationProfile zeroed = profile;
            zeroed.set(src, {rat(0), rat(0)});
            CHECK(eval_utility(m, dst, profile) != eval_utility(m, dst, zeroed));
        }
    }
}

TEST_CASE("economy graph of the swap market is a 2-cycle") {
    DirectedGraph g = build_economy_graph(swap_market());
    CHECK(g.has_edge("T1", "T2"));
    CHECK(g.has_edge("T2", "T1"));
    CHECK(g.edges.size() == 2);
    CHECK(g.strongly_connected());
}

TEST_CASE("zero endowment means no outgoing economy edges") {
    Market m = swap_market();
    m.traders[0].endowment = {rat(0), rat(0)};
    DirectedGraph g = build_economy_graph(m);
    CHECK(g.out_degree()[g.index_of("T1")] == 0);
}

TEST_CASE("saturated threshold tails block incoming economy edges") {
    Market m;
    m.goods = 2;
    m.traders.push_back(linear_trader("L", {rat(1), rat(0)}, {rat(1), rat(1)}));
    m.traders.push_back(
        threshold_trader("S", {rat(0), rat(1)}, {rat(1, 2), rat(1, 2)}, {rat(1, 2), rat(1, 2)}));
    DirectedGraph g = build_economy_graph(m);
    CHECK(g.in_degree()[g.index_of("S")] == 0);
    CHECK(g.has_edge("S", "L"));
}

TEST_CASE("is_nonsatiated follows the tail slope") {
    LinearUtility lin;
    lin.base = {rat(1)};
    lin.influence.resize(1);
    CHECK(is_nonsatiated(Utility{lin}, 0));

    ThresholdUtility flat;
    flat.peak = {rat(1, 2)};
    flat.drop = {rat(1, 2)};
    flat.influence.resize(1);
    CHECK(!is_nonsatiated(Utility{flat}, 0));

    ThresholdUtility kinked;
    kinked.peak = {rat(4, 5)};
    kinked.drop = {rat(1, 2)};
    kinked.influence.resize(1);
    CHECK(is_nonsatiated(Utility{kinked}, 0));
}

TEST_CASE("existence conditions on the swap market") {
    ExistenceReport rep = check_existence_conditions(swap_market());
    CHECK(rep.economy_strongly_connected);
    CHECK(rep.every_good_wanted);
    CHECK(rep.satisfied());
}

TEST_CASE("a good nobody wants fails the nonsatiation condition") {
    Market m = swap_market();
    std::get<LinearUtility>(m.traders[0].utility).base[1] = rat(0);
    ExistenceReport rep = check_existence_conditions(m);
    CHECK(!rep.every_good_wanted);
}

TEST_CASE("disconnected trader islands fail strong connectivity") {
    Market m;
    m.goods = 2;
    m.traders.push_back(linear_trader("I1", {rat(1), rat(0)}, {rat(1), rat(0)}));
    m.traders.push_back(linear_trader("I2", {rat(0), rat(1)}, {rat(0), rat(1)}));
    ExistenceReport rep = check_existence_conditions(m);
    CHECK(!rep.economy_strongly_connected);
    CHECK(rep.every_good_wanted);
}
