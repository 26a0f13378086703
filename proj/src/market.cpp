#include "imkt/market.hpp"

#include <algorithm>
#include <functional>

namespace imkt {

const Trader* Market::find(const std::string& id) const {
    for (const auto& t : traders)
        if (t.id == id) return &t;
    return nullptr;
}

const Trader& Market::at(const std::string& id) const {
    const Trader* t = find(id);
    if (!t) throw std::invalid_argument("market: unknown trader '" + id + "'");
    return *t;
}

std::vector<Rat> Market::supply() const {
    std::vector<Rat> s(goods, Rat(0));
    for (const auto& t : traders)
        for (int i = 0; i < goods && i < (int)t.endowment.size(); ++i) s[i] += t.endowment[i];
    return s;
}

const std::vector<Rat>* AllocationProfile::get(const std::string& id) const {
    auto it = bundles.find(id);
    return it == bundles.end() ? nullptr : &it->second;
}

void AllocationProfile::set(const std::string& id, std::vector<Rat> bundle) {
    bundles[id] = std::move(bundle);
}

int DirectedGraph::index_of(const std::string& id) const {
    auto it = std::lower_bound(vertices.begin(), vertices.end(), id);
    if (it == vertices.end() || *it != id) return -1;
    return (int)(it - vertices.begin());
}

bool DirectedGraph::has_edge(const std::string& from, const std::string& to) const {
    int a = index_of(from), b = index_of(to);
    if (a < 0 || b < 0) return false;
    return std::binary_search(edges.begin(), edges.end(), std::make_pair(a, b));
}

std::vector<int> DirectedGraph::out_degree() const {
    std::vector<int> d(vertices.size(), 0);
    for (const auto& e : edges) d[e.first]++;
    return d;
}

std::vector<int> DirectedGraph::in_degree() const {
    std::vector<int> d(vertices.size(), 0);
    for (const auto& e : edges) d[e.second]++;
    return d;
}

bool DirectedGraph::strongly_connected() const {
    size_t n = vertices.size();
    if (n <= 1) return true;
    std::vector<std::vector<int>> fwd(n), rev(n);
    for (const auto& e : edges) {
        fwd[e.first].push_back(e.second);
        rev[e.second].push_back(e.first);
    }
    auto reaches_all = [n](const std::vector<std::vector<int>>& adj) {
        std::vector<char> seen(n, 0);
        std::vector<int> stack{0};
        seen[0] = 1;
        size_t count = 1;
        while (!stack.empty()) {
            int v = stack.back();
            stack.pop_back();
            for (int w : adj[v])
                if (!seen[w]) {
                    seen[w] = 1;
                    ++count;
                    stack.push_back(w);
                }
        }
        return count == n;
    };
    return reaches_all(fwd) && reaches_all(rev);
}

namespace {

const std::vector<LinearForm>& forms_of(const Utility& u) {
    if (std::holds_alternative<LinearUtility>(u)) return std::get<LinearUtility>(u).influence;
    return std::get<ThresholdUtility>(u).influence;
}

void check_form(const Market& market, const Trader& owner, const LinearForm& form, int good,
                Diagnostics& diag) {
    for (const auto& term : form.terms) {
        std::string where = owner.id + " good " + std::to_string(good);
        if (term.weight < 0 || term.weight > 1)
            diag.issues.push_back("form weight out of [0,1] at " + where);
        if (term.weight == 0)
            diag.issues.push_back("zero-weight form term at " + where +
                                  " (drop the term instead)");
        if (term.good < 0 || term.good >= market.goods)
            diag.issues.push_back("form term references bad good index at " + where);
        if (term.trader == owner.id)
            diag.issues.push_back("form term references the owning trader at " + where);
        else if (!market.find(term.trader))
            diag.issues.push_back("form term references unknown trader '" + term.trader +
                                  "' at " + where);
    }
}

}  // namespace

Diagnostics validate_market(const Market& market, SupplyRule supply_rule) {
    Diagnostics diag;
    if (market.goods < 1) {
        diag.issues.push_back("good count must be >= 1");
        return diag;
    }
    std::set<std::string> ids;
    for (const auto& t : market.traders) {
        if (t.id.empty()) diag.issues.push_back("empty trader id");
        if (!ids.insert(t.id).second) diag.issues.push_back("duplicate trader id '" + t.id + "'");
        if ((int)t.endowment.size() != market.goods)
            diag.issues.push_back("endowment dimension mismatch for " + t.id);
        for (const auto& w : t.endowment)
            if (w < 0) diag.issues.push_back("negative endowment for " + t.id);
        if (std::holds_alternative<LinearUtility>(t.utility)) {
            const auto& u = std::get<LinearUtility>(t.utility);
            if ((int)u.base.size() != market.goods || (int)u.influence.size() != market.goods) {
                diag.issues.push_back("utility dimension mismatch for " + t.id);
                continue;
            }
            for (int i = 0; i < market.goods; ++i) {
                if (u.base[i] < 0 || u.base[i] > 1)
                    diag.issues.push_back("slope out of [0,1] for " + t.id + " good " +
                                          std::to_string(i));
                check_form(market, t, u.influence[i], i, diag);
            }
        } else {
            const auto& u = std::get<ThresholdUtility>(t.utility);
            if ((int)u.peak.size() != market.goods || (int)u.drop.size() != market.goods ||
                (int)u.influence.size() != market.goods) {
                diag.issues.push_back("utility dimension mismatch for " + t.id);
                continue;
            }
            for (int i = 0; i < market.goods; ++i) {
                if (u.peak[i] < 0 || u.peak[i] > 1)
                    diag.issues.push_back("peak slope out of [0,1] for " + t.id + " good " +
                                          std::to_string(i));
                if (u.drop[i] < 0 || u.drop[i] > u.peak[i])
                    diag.issues.push_back("drop out of [0, peak] for " + t.id + " good " +
                                          std::to_string(i));
                check_form(market, t, u.influence[i], i, diag);
            }
        }
    }
    std::vector<Rat> s = market.supply();
    for (int i = 0; i < market.goods; ++i) {
        if (supply_rule == SupplyRule::ExactlyOne) {
            if (s[i] != 1)
                diag.issues.push_back("supply of good " + std::to_string(i) + " must be exactly 1");
        } else if (s[i] < rat(1, 2) || s[i] > 2) {
            diag.issues.push_back("supply of good " + std::to_string(i) + " outside [1/2, 2]");
        }
    }
    return diag;
}

Rat eval_form(const LinearForm& form, const AllocationProfile& profile) {
    Rat total(0);
    for (const auto& term : form.terms) {
        const std::vector<Rat>* bundle = profile.get(term.trader);
        if (!bundle)
            throw std::invalid_argument("eval_form: missing allocation for trader '" +
                                        term.trader + "'");
        if (term.good < 0 || term.good >= (int)bundle->size())
            throw std::invalid_argument("eval_form: good index out of range");
        total += term.weight * (*bundle)[term.good];
    }
    return total;
}

std::vector<std::vector<Segment>> segments_from_form_values(const Utility& utility,
                                                            const std::vector<Rat>& form_values) {
    std::vector<std::vector<Segment>> out;
    if (std::holds_alternative<LinearUtility>(utility)) {
        const auto& u = std::get<LinearUtility>(utility);
        out.reserve(u.base.size());
        for (size_t i = 0; i < u.base.size(); ++i)
            out.push_back({Segment{u.base[i] + form_values[i], std::nullopt}});
    } else {
        const auto& u = std::get<ThresholdUtility>(utility);
        out.reserve(u.peak.size());
        for (size_t i = 0; i < u.peak.size(); ++i) {
            if (u.drop[i] == 0) {
                out.push_back({Segment{u.peak[i], std::nullopt}});
            } else {
                Rat cap = form_values[i] / u.drop[i];
                out.push_back({Segment{u.peak[i], cap},
                               Segment{u.peak[i] - u.drop[i], std::nullopt}});
            }
        }
    }
    return out;
}

namespace {

std::vector<Rat> form_values_for(const Market& market, const Trader& trader,
                                 const AllocationProfile& profile) {
    const auto& forms = forms_of(trader.utility);
    std::vector<Rat> values;
    values.reserve(forms.size());
    for (const auto& f : forms) values.push_back(eval_form(f, profile));
    if ((int)values.size() != market.goods)
        throw std::invalid_argument("utility dimension mismatch for '" + trader.id + "'");
    return values;
}

}  // namespace

std::vector<std::vector<Segment>> effective_segments(const Market& market,
                                                     const std::string& trader_id,
                                                     const AllocationProfile& profile_others) {
    const Trader& t = market.at(trader_id);
    return segments_from_form_values(t.utility, form_values_for(market, t, profile_others));
}

Rat segments_value_at(const std::vector<Segment>& segments, const Rat& x) {
    Rat value(0);
    Rat pos(0);
    for (const auto& seg : segments) {
        Rat upper = x;
        if (seg.cap && *seg.cap < upper) upper = *seg.cap;
        if (upper > pos) {
            value += seg.slope * (upper - pos);
            pos = upper;
        }
        if (pos >= x) break;
    }
    return value;
}

Rat eval_utility(const Market& market, const std::string& trader_id,
                 const AllocationProfile& profile) {
    const Trader& t = market.at(trader_id);
    const std::vector<Rat>* own = profile.get(trader_id);
    if (!own) throw std::invalid_argument("eval_utility: profile misses '" + trader_id + "'");
    if ((int)own->size() != market.goods)
        throw std::invalid_argument("eval_utility: bundle dimension mismatch");
    auto segs = segments_from_form_values(t.utility, form_values_for(market, t, profile));
    Rat total(0);
    for (int i = 0; i < market.goods; ++i) {
        if ((*own)[i] < 0) throw std::invalid_argument("eval_utility: negative allocation");
        total += segments_value_at(segs[i], (*own)[i]);
    }
    return total;
}

namespace {

DirectedGraph graph_from_edge_set(std::vector<std::string> vertices,
                                  std::set<std::pair<int, int>> edge_set) {
    DirectedGraph g;
    g.vertices = std::move(vertices);
    g.edges.assign(edge_set.begin(), edge_set.end());
    return g;
}

std::vector<std::string> sorted_ids(const Market& market) {
    std::vector<std::string> ids;
    ids.reserve(market.traders.size());
    for (const auto& t : market.traders) ids.push_back(t.id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

}  // namespace

DirectedGraph build_influence_graph(const Market& market) {
    std::vector<std::string> ids = sorted_ids(market);
    auto index = [&](const std::string& id) {
        return (int)(std::lower_bound(ids.begin(), ids.end(), id) - ids.begin());
    };
    std::set<std::pair<int, int>> edges;
    for (const auto& t : market.traders) {
        for (const auto& form : forms_of(t.utility))
            for (const auto& term : form.terms)
                if (term.weight > 0 && market.find(term.trader))
                    edges.insert({index(term.trader), index(t.id)});
    }
    return graph_from_edge_set(std::move(ids), std::move(edges));
}

bool is_nonsatiated(const Utility& utility, int good) {
    if (std::holds_alternative<LinearUtility>(utility)) {
        const auto& u = std::get<LinearUtility>(utility);
        if (good < 0 || good >= (int)u.base.size()) return false;
        return u.base[good] > 0;
    }
    const auto& u = std::get<ThresholdUtility>(utility);
    if (good < 0 || good >= (int)u.peak.size()) return false;
    return u.peak[good] - u.drop[good] > 0;
}

DirectedGraph build_economy_graph(const Market& market) {
    std::vector<std::string> ids = sorted_ids(market);
    auto index = [&](const std::string& id) {
        return (int)(std::lower_bound(ids.begin(), ids.end(), id) - ids.begin());
    };
    std::set<std::pair<int, int>> edges;
    for (const auto& owner : market.traders) {
        for (const auto& buyer : market.traders) {
            if (owner.id == buyer.id) continue;
            bool linked = false;
            for (int i = 0; i < market.goods && !linked; ++i) {
                if (i < (int)owner.endowment.size() && owner.endowment[i] > 0 &&
                    is_nonsatiated(buyer.utility, i))
                    linked = true;
            }
            if (linked) edges.insert({index(owner.id), index(buyer.id)});
        }
    }
    return graph_from_edge_set(std::move(ids), std::move(edges));
}

ExistenceReport check_existence_conditions(const Market& market) {
    ExistenceReport report;
    report.economy_strongly_connected = build_economy_graph(market).strongly_connected();
    report.every_good_wanted = true;
    for (int i = 0; i < market.goods; ++i) {
        bool wanted = false;
        for (const auto& t : market.traders)
            if (is_nonsatiated(t.utility, i)) {
                wanted = true;
                break;
            }
        if (!wanted) report.every_good_wanted = false;
    }
    return report;
}

}  // namespace imkt
