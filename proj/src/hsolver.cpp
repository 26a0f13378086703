#include "imkt/hsolver.hpp"

#include <algorithm>
#include <functional>
#include <memory>
#include <unordered_map>

namespace imkt {

GridSpec GridSpec::from_exponents(long traders, long a, long b) {
    if (traders < 1 || a < 0 || b < 0)
        throw std::invalid_argument("GridSpec::from_exponents: bad parameters");
    mpz_class n;
    mpz_ui_pow_ui(n.get_mpz_t(), (unsigned long)traders, (unsigned long)(2 * a + b + 3));
    if (!n.fits_slong_p()) throw std::overflow_error("GridSpec::from_exponents: denom too large");
    return GridSpec(n.get_si());
}

EquilibriumCandidate round_to_grid(const EquilibriumCandidate& cand, const GridSpec& grid) {
    EquilibriumCandidate out;
    out.prices.normalized = false;
    out.prices.values.reserve(cand.prices.values.size());
    for (const auto& p : cand.prices.values) {
        if (p < 0) throw std::invalid_argument("round_to_grid: negative price");
        out.prices.values.push_back(ceil_to_grid(p, grid.denom));
    }
    for (const auto& [id, bundle] : cand.profile.bundles) {
        std::vector<Rat> rounded;
        rounded.reserve(bundle.size());
        for (const auto& v : bundle) {
            if (v < 0) throw std::invalid_argument("round_to_grid: negative allocation");
            rounded.push_back(ceil_to_grid(v, grid.denom));
        }
        out.profile.set(id, std::move(rounded));
    }
    return out;
}

std::vector<std::vector<Rat>> enumerate_price_grid(int goods, const GridSpec& grid) {
    if (goods < 1) throw std::invalid_argument("enumerate_price_grid: goods must be >= 1");
    long N = grid.denom;
    long cap = 2 * N;
    std::vector<std::vector<Rat>> out;
    std::vector<long> units(goods, 0);
    std::function<void(int, long)> rec = [&](int pos, long sum) {
        if (pos == goods) {
            if (sum >= N && sum <= cap) {
                std::vector<Rat> v;
                v.reserve(goods);
                for (long u : units) {
                    Rat r(u, N);
                    r.canonicalize();
                    v.push_back(r);
                }
                out.push_back(std::move(v));
            }
            return;
        }
        for (long u = 0; u <= cap; ++u) {
            if (sum + u > cap) break;
            units[pos] = u;
            rec(pos + 1, sum + u);
        }
    };
    rec(0, 0);
    return out;
}

int HierarchicalLabeling::node_index(const std::string& id) const {
    for (int i = 0; i < (int)nodes.size(); ++i)
        if (nodes[i].id == id) return i;
    return -1;
}

namespace {

// Throws when the label tree is not a rooted tree with unique node ids.
std::vector<int> tree_parents(const HierarchicalLabeling& lab) {
    int n = (int)lab.nodes.size();
    if (n == 0) throw std::invalid_argument("labeling: empty tree");
    if (lab.root < 0 || lab.root >= n) throw std::invalid_argument("labeling: bad root index");
    std::set<std::string> ids;
    for (const auto& node : lab.nodes)
        if (!ids.insert(node.id).second)
            throw std::invalid_argument("labeling: duplicate node id '" + node.id + "'");
    std::vector<int> parent(n, -1);
    std::vector<char> seen(n, 0);
    std::vector<int> stack{lab.root};
    seen[lab.root] = 1;
    int visited = 0;
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        ++visited;
        for (int c : lab.nodes[v].children) {
            if (c < 0 || c >= n || seen[c])
                throw std::invalid_argument("labeling: children do not form a tree");
            parent[c] = v;
            seen[c] = 1;
            stack.push_back(c);
        }
    }
    if (visited != n) throw std::invalid_argument("labeling: unreachable tree nodes");
    return parent;
}

}  // namespace

HierValidation validate_hierarchical(const DirectedGraph& graph,
                                     const HierarchicalLabeling& labeling) {
    std::vector<int> parent = tree_parents(labeling);
    int nn = (int)labeling.nodes.size();
    std::vector<int> label_node(graph.vertices.size(), -1);
    std::vector<std::vector<int>> members(nn);
    for (int vi = 0; vi < (int)graph.vertices.size(); ++vi) {
        const std::string& id = graph.vertices[vi];
        auto it = labeling.label_of.find(id);
        if (it == labeling.label_of.end())
            throw std::invalid_argument("labeling: unlabeled vertex '" + id + "'");
        int node = labeling.node_index(it->second);
        if (node < 0)
            throw std::invalid_argument("labeling: vertex '" + id + "' labeled with unknown node '" +
                                        it->second + "'");
        label_node[vi] = node;
        members[node].push_back(vi);
    }

    auto is_leaf = [&](int node) { return labeling.nodes[node].children.empty(); };
    for (int node = 0; node < nn; ++node) {
        if (is_leaf(node)) continue;
        int count = (int)members[node].size();
        if (count < 1 || count > labeling.width_k)
            return {false, "non-leaf node '" + labeling.nodes[node].id + "' carries " +
                               std::to_string(count) + " traders (want 1.." +
                               std::to_string(labeling.width_k) + ")"};
    }

    auto adjacent = [&](int a, int b) { return parent[a] == b || parent[b] == a; };
    auto edge = [&](int a, int b) {
        return std::binary_search(graph.edges.begin(), graph.edges.end(), std::make_pair(a, b));
    };
    int nv = (int)graph.vertices.size();
    for (int a = 0; a < nv; ++a) {
        for (int b = a + 1; b < nv; ++b) {
            int na = label_node[a], nb = label_node[b];
            bool want;
            std::string why;
            if (na == nb) {
                want = !is_leaf(na);
                why = want ? "same non-leaf label requires edges both ways"
                           : "same leaf label forbids edges";
            } else if (adjacent(na, nb)) {
                want = true;
                why = "tree-adjacent labels require edges both ways";
            } else {
                want = false;
                why = "non-adjacent labels forbid edges";
            }
            bool ab = edge(a, b), ba = edge(b, a);
            if (want != ab || want != ba)
                return {false, why + ": '" + graph.vertices[a] + "' / '" + graph.vertices[b] + "'"};
        }
    }
    return {true, ""};
}

// ---------------------------------------------------------------------------
// Shared discrete-search machinery.

namespace {

struct TForm {
    int trader;
    int good;
    Rat weight;
};

struct TraderView {
    const Utility* utility = nullptr;
    std::vector<std::vector<TForm>> forms;  // per good, positive weights only
};

struct Ctx {
    const Market* market = nullptr;
    int h = 0;
    long N = 1;
    std::vector<std::string> ids;  // market order
    std::map<std::string, int> index;
    std::vector<TraderView> view;
    std::vector<Rat> unit;  // unit[u] = u/N

    std::vector<Rat> price;   // normalized, set per price iteration
    std::vector<Rat> budget;  // per trader

    Rat unit_rat(int u) const { return unit[u]; }
    Rat bundle_cost(const std::vector<int>& b) const {
        Rat c(0);
        for (int g = 0; g < h; ++g)
            if (b[g]) c += unit[b[g]] * price[g];
        return c;
    }
};

Ctx build_ctx(const Market& market, const GridSpec& grid) {
    Ctx ctx;
    ctx.market = &market;
    ctx.h = market.goods;
    ctx.N = grid.denom;
    for (const auto& t : market.traders) ctx.ids.push_back(t.id);
    for (int i = 0; i < (int)ctx.ids.size(); ++i) ctx.index[ctx.ids[i]] = i;
    ctx.view.resize(market.traders.size());
    for (size_t k = 0; k < market.traders.size(); ++k) {
        const Trader& t = market.traders[k];
        TraderView& tv = ctx.view[k];
        tv.utility = &t.utility;
        const std::vector<LinearForm>* forms;
        if (std::holds_alternative<LinearUtility>(t.utility))
            forms = &std::get<LinearUtility>(t.utility).influence;
        else
            forms = &std::get<ThresholdUtility>(t.utility).influence;
        tv.forms.resize(ctx.h);
        for (int i = 0; i < ctx.h && i < (int)forms->size(); ++i) {
            for (const auto& term : (*forms)[i].terms) {
                if (term.weight <= 0) continue;
                auto it = ctx.index.find(term.trader);
                if (it == ctx.index.end())
                    throw std::invalid_argument("market references unknown trader '" +
                                                term.trader + "'");
                tv.forms[i].push_back(TForm{it->second, term.good, term.weight});
            }
        }
    }
    ctx.unit.reserve(2 * grid.denom + 1);
    for (long u = 0; u <= 2 * grid.denom; ++u) {
        Rat r(u, grid.denom);
        r.canonicalize();
        ctx.unit.push_back(r);
    }
    return ctx;
}

void set_prices(Ctx& ctx, const std::vector<Rat>& raw) {
    Rat sum(0);
    for (const auto& p : raw) sum += p;
    if (sum <= 0) throw std::invalid_argument("price vector must have positive mass");
    ctx.price.resize(ctx.h);
    for (int i = 0; i < ctx.h; ++i) ctx.price[i] = raw[i] / sum;
    ctx.budget.assign(ctx.market->traders.size(), Rat(0));
    for (size_t k = 0; k < ctx.market->traders.size(); ++k) {
        const auto& w = ctx.market->traders[k].endowment;
        for (int i = 0; i < ctx.h; ++i) ctx.budget[k] += w[i] * ctx.price[i];
    }
}

// eps-optimality of trader k holding `bundle` (units) under form values.
bool locally_optimal(const Ctx& ctx, int k, const std::vector<int>& bundle,
                     const std::vector<Rat>& fvals, const Rat& eps) {
    auto segs = segments_from_form_values(*ctx.view[k].utility, fvals);
    BundleResult best = optimal_bundle_core(segs, ctx.price, ctx.budget[k], std::nullopt);
    if (best.unbounded) return false;
    Rat u(0);
    for (int g = 0; g < ctx.h; ++g)
        if (bundle[g]) u += segments_value_at(segs[g], ctx.unit[bundle[g]]);
    return best.value - u <= eps;
}

using Units = std::vector<int>;
using JointX = std::vector<Units>;
using Assignment = std::map<int, Units>;

struct VecLHash {
    size_t operator()(const std::vector<long>& v) const {
        size_t h = 1469598103934665603ull;
        for (long x : v) h ^= (size_t)x + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        return h;
    }
};

// Lexicographic enumeration of joint grid bundles for a trader list with
// shared per-good caps and an eps-budget prune per completed trader.
// visit returns true to stop the whole enumeration.
template <class F>
bool enumerate_joint(const Ctx& ctx, const std::vector<int>& traders, const Units& caps,
                     const Rat& eps, F&& visit) {
    int n = (int)traders.size();
    JointX joint(n, Units(ctx.h, 0));
    std::vector<int> used(ctx.h, 0);
    std::function<bool(int)> walk = [&](int pos) -> bool {
        if (pos == n * ctx.h) return visit(joint);
        int ti = pos / ctx.h;
        int g = pos % ctx.h;
        long cap = std::min<long>((long)caps[g] - used[g], 2 * ctx.N);
        for (long u = 0; u <= cap; ++u) {
            joint[ti][g] = (int)u;
            used[g] += (int)u;
            bool ok = true;
            if (g == ctx.h - 1 &&
                ctx.bundle_cost(joint[ti]) > ctx.budget[traders[ti]] + eps)
                ok = false;
            if (ok && walk(pos + 1)) return true;
            used[g] -= (int)u;
        }
        return false;
    };
    return walk(0);
}

// One reachable joint behaviour of a leaf group: total consumption plus the
// group's quantized contribution to each observer's per-good form.
struct DpState {
    Units total;
    std::vector<long> contrib;  // observer-major, good-minor, in 1/N units
    Assignment witness;
};

struct DpIncoming {
    int group_pos;
    int good;  // good of the group trader's variable
    Rat weight;
};

long floor_units(const Rat& v, long N) {
    Rat scaled = v * N;
    mpz_class q;
    mpz_fdiv_q(q.get_mpz_t(), scaled.get_num_mpz_t(), scaled.get_den_mpz_t());
    if (!q.fits_slong_p()) throw std::overflow_error("contribution out of range");
    return q.get_si();
}

// group: sorted trader indices; observers: trader indices whose forms the
// summary tracks; alloc_of supplies the frozen context for group optimality.
std::vector<DpState> leaf_group_dp(const Ctx& ctx, const std::vector<int>& group,
                                   const std::vector<int>& observers,
                                   const std::function<Rat(int, int)>& alloc_of, const Rat& eps) {
    int h = ctx.h;
    int slots = (int)observers.size() * h;
    // incoming[observer_pos * h + good] = terms of that observer form
    // referencing a group trader
    std::vector<std::vector<DpIncoming>> incoming(slots);
    std::map<int, int> group_pos;
    for (int i = 0; i < (int)group.size(); ++i) group_pos[group[i]] = i;
    for (int op = 0; op < (int)observers.size(); ++op) {
        const TraderView& tv = ctx.view[observers[op]];
        for (int i = 0; i < h; ++i)
            for (const auto& term : tv.forms[i]) {
                auto it = group_pos.find(term.trader);
                if (it != group_pos.end())
                    incoming[op * h + i].push_back(DpIncoming{it->second, term.good, term.weight});
            }
    }

    // Feasible bundle sets per group trader under the frozen context.
    std::vector<std::vector<Units>> choices(group.size());
    for (int gp = 0; gp < (int)group.size(); ++gp) {
        int t = group[gp];
        std::vector<Rat> fvals(h, Rat(0));
        for (int i = 0; i < h; ++i)
            for (const auto& term : ctx.view[t].forms[i])
                fvals[i] += term.weight * alloc_of(term.trader, term.good);
        auto segs = segments_from_form_values(*ctx.view[t].utility, fvals);
        BundleResult best = optimal_bundle_core(segs, ctx.price, ctx.budget[t], std::nullopt);
        Units b(h, 0);
        bool done = false;
        while (!done) {
            if (ctx.bundle_cost(b) <= ctx.budget[t] + eps) {
                if (!best.unbounded) {
                    Rat u(0);
                    for (int g = 0; g < h; ++g)
                        if (b[g]) u += segments_value_at(segs[g], ctx.unit[b[g]]);
                    if (best.value - u <= eps) choices[gp].push_back(b);
                }
            }
            int g = h - 1;
            while (g >= 0 && b[g] == 2 * ctx.N) b[g--] = 0;
            if (g < 0)
                done = true;
            else
                ++b[g];
        }
        if (choices[gp].empty()) return {};
    }

    using Key = std::pair<Units, std::vector<long>>;
    std::map<Key, Assignment> states;
    states[{Units(h, 0), std::vector<long>(slots, 0)}] = {};
    for (int gp = 0; gp < (int)group.size(); ++gp) {
        std::map<Key, Assignment> next;
        for (const auto& [key, witness] : states) {
            for (const auto& b : choices[gp]) {
                Units total = key.first;
                bool fits = true;
                for (int g = 0; g < h; ++g) {
                    total[g] += b[g];
                    if (total[g] > 2 * ctx.N) {
                        fits = false;
                        break;
                    }
                }
                if (!fits) continue;
                std::vector<long> contrib = key.second;
                for (int slot = 0; slot < slots; ++slot) {
                    if (incoming[slot].empty()) continue;
                    Rat delta(0);
                    for (const auto& inc : incoming[slot])
                        if (inc.group_pos == gp && b[inc.good])
                            delta += inc.weight * ctx.unit[b[inc.good]];
                    if (delta != 0) contrib[slot] += floor_units(delta, ctx.N);
                }
                Assignment w = witness;
                w[group[gp]] = b;
                next.emplace(Key{std::move(total), std::move(contrib)}, std::move(w));
            }
        }
        states = std::move(next);
        if (states.empty()) return {};
    }

    std::vector<DpState> out;
    out.reserve(states.size());
    for (auto& [key, witness] : states)
        out.push_back(DpState{key.first, key.second, std::move(witness)});
    return out;
}

// ---------------------------------------------------------------------------
// Tree-decomposition engine over super-nodes.

struct ENode {
    std::vector<int> traders;  // market indices sorted by trader id
    std::vector<int> children;
    bool dp_leaf = false;
    int depth = 0;
};

struct DirectTerm {
    enum Kind { Own, Parent, Static, Child } kind;
    int a = 0;  // Own: pos in node; Parent/Static: trader index; Child: child pos
    int b = 0;  // Child: pos within child node
    int good = 0;
    Rat weight;
};

struct Engine {
    Ctx* ctx = nullptr;
    Rat eps;
    std::vector<ENode> nodes;
    int root = 0;
    std::vector<int> parent_node;
    std::vector<int> node_of;  // trader index -> node index or -1
    std::map<int, Units> static_frozen;
    bool use_memo = true;
    SolveStats* stats = nullptr;

    // per node, per own-trader pos, per good
    std::vector<std::vector<std::vector<std::vector<DirectTerm>>>> terms;
    std::vector<std::vector<std::vector<std::vector<int>>>> leaf_sources;  // child positions
    std::vector<std::vector<int>> boundary;  // parent traders referenced by own traders

    std::unordered_map<std::vector<long>, std::optional<Assignment>, VecLHash> memo;
    std::unordered_map<std::vector<long>, std::shared_ptr<const std::vector<DpState>>, VecLHash>
        dp_cache;

    void build(bool check_dp_refs);
    void clear_caches() {
        memo.clear();
        dp_cache.clear();
    }
    std::optional<Assignment> check_node(int n, const JointX& X, const Units& y,
                                         const Assignment& dyn_frozen);
    std::shared_ptr<const std::vector<DpState>> dp_states_for(int child, const JointX& parentX);
};

void Engine::build(bool check_dp_refs) {
    int nn = (int)nodes.size();
    node_of.assign(ctx->market->traders.size(), -1);
    for (int n = 0; n < nn; ++n)
        for (int t : nodes[n].traders) {
            if (node_of[t] != -1) throw std::invalid_argument("tree: trader appears twice");
            node_of[t] = n;
        }
    parent_node.assign(nn, -1);
    for (int n = 0; n < nn; ++n)
        for (int c : nodes[n].children) parent_node[c] = n;
    // depths
    nodes[root].depth = 0;
    std::vector<int> stack{root};
    while (!stack.empty()) {
        int n = stack.back();
        stack.pop_back();
        for (int c : nodes[n].children) {
            nodes[c].depth = nodes[n].depth + 1;
            stack.push_back(c);
        }
    }

    terms.assign(nn, {});
    leaf_sources.assign(nn, {});
    boundary.assign(nn, {});
    for (int n = 0; n < nn; ++n) {
        if (nodes[n].dp_leaf) {
            if (check_dp_refs) {
                for (int t : nodes[n].traders)
                    for (int i = 0; i < ctx->h; ++i)
                        for (const auto& f : ctx->view[t].forms[i])
                            if (node_of[f.trader] != parent_node[n])
                                throw std::invalid_argument(
                                    "leaf group trader '" + ctx->ids[t] +
                                    "' references outside the parent node");
            }
            continue;
        }
        int own = (int)nodes[n].traders.size();
        terms[n].assign(own, std::vector<std::vector<DirectTerm>>(ctx->h));
        leaf_sources[n].assign(own, std::vector<std::vector<int>>(ctx->h));
        std::set<int> bset;
        auto pos_in = [&](int node, int trader) {
            const auto& list = nodes[node].traders;
            return (int)(std::find(list.begin(), list.end(), trader) - list.begin());
        };
        for (int pv = 0; pv < own; ++pv) {
            int v = nodes[n].traders[pv];
            for (int i = 0; i < ctx->h; ++i) {
                for (const auto& f : ctx->view[v].forms[i]) {
                    int rn = node_of[f.trader];
                    DirectTerm dt;
                    dt.good = f.good;
                    dt.weight = f.weight;
                    if (rn == n) {
                        dt.kind = DirectTerm::Own;
                        dt.a = pos_in(n, f.trader);
                    } else if (rn != -1 && parent_node[rn] == n) {
                        int cp = (int)(std::find(nodes[n].children.begin(),
                                                 nodes[n].children.end(), rn) -
                                       nodes[n].children.begin());
                        if (nodes[rn].dp_leaf) {
                            auto& ls = leaf_sources[n][pv][i];
                            if (std::find(ls.begin(), ls.end(), cp) == ls.end()) ls.push_back(cp);
                            continue;
                        }
                        dt.kind = DirectTerm::Child;
                        dt.a = cp;
                        dt.b = pos_in(rn, f.trader);
                    } else if (rn != -1 && rn == parent_node[n]) {
                        dt.kind = DirectTerm::Parent;
                        dt.a = f.trader;
                        bset.insert(f.trader);
                    } else if (rn == -1) {
                        if (!static_frozen.count(f.trader))
                            throw std::invalid_argument(
                                "trader '" + ctx->ids[v] + "' references '" + ctx->ids[f.trader] +
                                "', which is neither in the subtree, a child, the parent, nor "
                                "frozen");
                        dt.kind = DirectTerm::Static;
                        dt.a = f.trader;
                    } else {
                        throw std::invalid_argument(
                            "trader '" + ctx->ids[v] + "' references '" + ctx->ids[f.trader] +
                            "' across non-adjacent tree nodes; the tree does not decompose this "
                            "market");
                    }
                    terms[n][pv][i].push_back(std::move(dt));
                }
            }
        }
        boundary[n].assign(bset.begin(), bset.end());
    }
}

std::shared_ptr<const std::vector<DpState>> Engine::dp_states_for(int child,
                                                                  const JointX& parentX) {
    std::vector<long> key;
    key.push_back(child);
    for (const auto& b : parentX)
        for (int u : b) key.push_back(u);
    auto it = dp_cache.find(key);
    if (it != dp_cache.end()) return it->second;
    int pn = parent_node[child];
    const auto& plist = nodes[pn].traders;
    auto alloc_of = [&](int trader, int good) -> Rat {
        auto pos = std::find(plist.begin(), plist.end(), trader);
        if (pos == plist.end())
            throw std::invalid_argument("leaf group reference outside parent node");
        return ctx->unit[parentX[pos - plist.begin()][good]];
    };
    auto states = std::make_shared<std::vector<DpState>>(
        leaf_group_dp(*ctx, nodes[child].traders, plist, alloc_of, eps));
    dp_cache.emplace(std::move(key), states);
    return states;
}

std::optional<Assignment> Engine::check_node(int n, const JointX& X, const Units& y,
                                             const Assignment& dyn_frozen) {
    const ENode& node = nodes[n];
    auto frozen_units = [&](int trader) -> const Units& {
        auto it = dyn_frozen.find(trader);
        if (it != dyn_frozen.end()) return it->second;
        auto st = static_frozen.find(trader);
        if (st == static_frozen.end())
            throw std::invalid_argument("missing frozen allocation for '" + ctx->ids[trader] +
                                        "'");
        return st->second;
    };

    std::vector<long> key;
    if (use_memo) {
        key.push_back(n);
        for (const auto& b : X)
            for (int u : b) key.push_back(u);
        for (int u : y) key.push_back(u);
        for (int t : boundary[n])
            for (int u : frozen_units(t)) key.push_back(u);
        auto it = memo.find(key);
        if (it != memo.end()) {
            if (stats) stats->memo_hits++;
            return it->second;
        }
    }
    if (stats) stats->expansions_by_depth[node.depth]++;

    auto finish = [&](std::optional<Assignment> res) {
        if (use_memo) memo.emplace(std::move(key), res);
        return res;
    };

    Units rem(ctx->h, 0);
    for (int g = 0; g < ctx->h; ++g) {
        long own = 0;
        for (const auto& b : X) own += b[g];
        long r = (long)y[g] - own;
        if (r < 0) return finish(std::nullopt);
        rem[g] = (int)r;
    }
    for (int pv = 0; pv < (int)node.traders.size(); ++pv)
        if (ctx->bundle_cost(X[pv]) > ctx->budget[node.traders[pv]] + eps)
            return finish(std::nullopt);

    Assignment own_assign;
    for (int pv = 0; pv < (int)node.traders.size(); ++pv)
        own_assign[node.traders[pv]] = X[pv];

    int nc = (int)node.children.size();
    if (nc == 0) {
        for (int g = 0; g < ctx->h; ++g)
            if (rem[g] != 0) return finish(std::nullopt);
        for (int pv = 0; pv < (int)node.traders.size(); ++pv) {
            std::vector<Rat> fvals(ctx->h, Rat(0));
            for (int i = 0; i < ctx->h; ++i)
                for (const auto& dt : terms[n][pv][i]) {
                    int u;
                    if (dt.kind == DirectTerm::Own)
                        u = X[dt.a][dt.good];
                    else
                        u = frozen_units(dt.a)[dt.good];
                    if (u) fvals[i] += dt.weight * ctx->unit[u];
                }
            if (!locally_optimal(*ctx, node.traders[pv], X[pv], fvals, eps))
                return finish(std::nullopt);
        }
        return finish(own_assign);
    }

    // chosen[ci]: normal child -> (X_c, y_c); dp child -> state pointer
    struct Choice {
        JointX X;
        Units y;
        const DpState* state = nullptr;
    };
    std::vector<Choice> chosen(nc);
    std::vector<std::shared_ptr<const std::vector<DpState>>> dp_lists(nc);

    std::optional<Assignment> found;

    // Local feasibility of the node's own traders given all child interfaces.
    auto own_ok = [&]() {
        for (int pv = 0; pv < (int)node.traders.size(); ++pv) {
            std::vector<Rat> fvals(ctx->h, Rat(0));
            for (int i = 0; i < ctx->h; ++i) {
                for (const auto& dt : terms[n][pv][i]) {
                    int u = 0;
                    switch (dt.kind) {
                        case DirectTerm::Own:
                            u = X[dt.a][dt.good];
                            break;
                        case DirectTerm::Child:
                            u = chosen[dt.a].X[dt.b][dt.good];
                            break;
                        default:
                            u = frozen_units(dt.a)[dt.good];
                            break;
                    }
                    if (u) fvals[i] += dt.weight * ctx->unit[u];
                }
                for (int cp : leaf_sources[n][pv][i]) {
                    long cu = chosen[cp].state->contrib[pv * ctx->h + i];
                    if (cu) {
                        Rat c(cu, ctx->N);
                        c.canonicalize();
                        fvals[i] += c;
                    }
                }
            }
            if (!locally_optimal(*ctx, node.traders[pv], X[pv], fvals, eps)) return false;
        }
        return true;
    };

    auto descend = [&]() {
        Assignment merged = own_assign;
        for (int ci = 0; ci < nc; ++ci) {
            int c = node.children[ci];
            if (nodes[c].dp_leaf) {
                for (const auto& [t, b] : chosen[ci].state->witness) merged[t] = b;
            } else {
                auto sub = check_node(c, chosen[ci].X, chosen[ci].y, own_assign);
                if (!sub) return false;
                for (const auto& [t, b] : *sub) merged[t] = b;
            }
        }
        found = std::move(merged);
        return true;
    };

    std::function<bool(int, Units)> pick = [&](int ci, Units left) -> bool {
        if (ci == nc) {
            if (!own_ok()) return false;
            return descend();
        }
        int c = node.children[ci];
        bool last = ci == nc - 1;
        if (nodes[c].dp_leaf) {
            if (!dp_lists[ci]) dp_lists[ci] = dp_states_for(c, X);
            for (const auto& state : *dp_lists[ci]) {
                bool fits = true;
                for (int g = 0; g < ctx->h; ++g) {
                    if (state.total[g] > left[g] || (last && state.total[g] != left[g])) {
                        fits = false;
                        break;
                    }
                }
                if (!fits) continue;
                chosen[ci].state = &state;
                Units next = left;
                for (int g = 0; g < ctx->h; ++g) next[g] -= state.total[g];
                if (pick(ci + 1, next)) return true;
            }
            return false;
        }
        // normal child: choose its subtree total, then its joint bundle
        Units yc(ctx->h, 0);
        std::function<bool(int)> pick_total = [&](int g) -> bool {
            if (g == ctx->h) {
                chosen[ci].y = yc;
                Units next = left;
                for (int gg = 0; gg < ctx->h; ++gg) next[gg] -= yc[gg];
                return enumerate_joint(*ctx, nodes[c].traders, yc, eps, [&](const JointX& Xc) {
                    chosen[ci].X = Xc;
                    return pick(ci + 1, next);
                });
            }
            if (last) {
                yc[g] = left[g];
                return pick_total(g + 1);
            }
            for (int u = 0; u <= left[g]; ++u) {
                yc[g] = u;
                if (pick_total(g + 1)) return true;
            }
            return false;
        };
        return pick_total(0);
    };

    pick(0, rem);
    return finish(found);
}

// Joint enumeration size of a childless label node, saturating at limit+1.
long joint_space(int traders, int goods, long N, long limit) {
    long base = 2 * N + 1;
    long total = 1;
    for (int i = 0; i < traders * goods; ++i) {
        if (total > limit / base + 1) return limit + 1;
        total *= base;
        if (total > limit) return limit + 1;
    }
    return total;
}

constexpr long kExactLeafLimit = 100000;

Assignment profile_to_units(const Ctx& ctx, const AllocationProfile& profile, long N) {
    Assignment out;
    for (const auto& [id, bundle] : profile.bundles) {
        auto it = ctx.index.find(id);
        if (it == ctx.index.end())
            throw std::invalid_argument("allocation for unknown trader '" + id + "'");
        if ((int)bundle.size() != ctx.h)
            throw std::invalid_argument("allocation dimension mismatch for '" + id + "'");
        Units u(ctx.h);
        for (int g = 0; g < ctx.h; ++g) {
            if (bundle[g] < 0 || bundle[g] > GridSpec::alloc_cap())
                throw std::invalid_argument("allocation outside [0,2] for '" + id + "'");
            u[g] = (int)grid_units(bundle[g], N);
        }
        out[it->second] = std::move(u);
    }
    return out;
}

AllocationProfile units_to_profile(const Ctx& ctx, const Assignment& assign) {
    AllocationProfile out;
    for (const auto& [t, b] : assign) {
        std::vector<Rat> bundle(ctx.h);
        for (int g = 0; g < ctx.h; ++g) bundle[g] = ctx.unit[b[g]];
        out.set(ctx.ids[t], std::move(bundle));
    }
    return out;
}

Units rat_vector_to_units(const Ctx& ctx, const std::vector<Rat>& v, const char* what) {
    if ((int)v.size() != ctx.h)
        throw std::invalid_argument(std::string(what) + ": dimension mismatch");
    Units u(ctx.h);
    for (int g = 0; g < ctx.h; ++g) {
        if (v[g] < 0 || v[g] > GridSpec::alloc_cap())
            throw std::invalid_argument(std::string(what) + ": entry outside [0,2]");
        u[g] = (int)grid_units(v[g], ctx.N);
    }
    return u;
}

void require_normalized(const PriceVector& prices, int goods) {
    if (!prices.normalized) throw std::invalid_argument("prices must carry the normalized flag");
    if ((int)prices.values.size() != goods)
        throw std::invalid_argument("price dimension mismatch");
    Rat sum(0);
    for (const auto& p : prices.values) {
        if (p < 0) throw std::invalid_argument("negative price");
        sum += p;
    }
    if (sum != 1) throw std::invalid_argument("normalized prices must sum to 1");
}

}  // namespace

std::optional<AllocationProfile> check_tree(const Market& market, const TraderTree& tree,
                                            const PriceVector& prices, const std::vector<Rat>& x,
                                            const std::vector<Rat>& y,
                                            const AllocationProfile& frozen, const Rat& eps,
                                            const GridSpec& grid, SolveStats* stats,
                                            bool use_memo) {
    if (eps < 0) throw std::invalid_argument("check_tree: negative epsilon");
    require_normalized(prices, market.goods);
    int nn = (int)tree.trader.size();
    if (nn == 0 || (int)tree.children.size() != nn || tree.root < 0 || tree.root >= nn)
        throw std::invalid_argument("check_tree: malformed trader tree");

    Ctx ctx = build_ctx(market, grid);
    set_prices(ctx, prices.values);

    Engine eng;
    eng.ctx = &ctx;
    eng.eps = eps;
    eng.root = tree.root;
    eng.use_memo = use_memo;
    eng.stats = stats;
    eng.nodes.resize(nn);
    std::vector<char> seen(nn, 0);
    std::vector<int> stack{tree.root};
    seen[tree.root] = 1;
    int visited = 0;
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        ++visited;
        for (int c : tree.children[v]) {
            if (c < 0 || c >= nn || seen[c])
                throw std::invalid_argument("check_tree: children do not form a tree");
            seen[c] = 1;
            stack.push_back(c);
        }
    }
    if (visited != nn) throw std::invalid_argument("check_tree: unreachable tree nodes");
    for (int i = 0; i < nn; ++i) {
        auto it = ctx.index.find(tree.trader[i]);
        if (it == ctx.index.end())
            throw std::invalid_argument("check_tree: unknown trader '" + tree.trader[i] + "'");
        eng.nodes[i].traders = {it->second};
        eng.nodes[i].children = tree.children[i];
    }
    eng.static_frozen = profile_to_units(ctx, frozen, grid.denom);
    for (const auto& [t, b] : eng.static_frozen)
        for (int i = 0; i < nn; ++i)
            if (eng.nodes[i].traders[0] == t)
                throw std::invalid_argument("check_tree: frozen trader '" + ctx.ids[t] +
                                            "' is inside the subtree");
    eng.build(false);

    JointX X{rat_vector_to_units(ctx, x, "check_tree root allocation")};
    Units yu = rat_vector_to_units(ctx, y, "check_tree subtree total");
    auto res = eng.check_node(tree.root, X, yu, {});
    if (!res) return std::nullopt;
    return units_to_profile(ctx, *res);
}

std::optional<EquilibriumCandidate> solve_hierarchical(const Market& market,
                                                       const HierarchicalLabeling& labeling,
                                                       const GridSpec& grid, const Rat& eps,
                                                       SolveStats* stats, bool use_memo) {
    if (eps < 0) throw std::invalid_argument("solve_hierarchical: negative epsilon");
    if (market.traders.empty()) {
        if (stats) stats->diagnostic = "empty market";
        return std::nullopt;
    }
    DirectedGraph graph = build_influence_graph(market);
    HierValidation val = validate_hierarchical(graph, labeling);
    if (!val.ok)
        throw std::invalid_argument("solve_hierarchical: labeling invalid: " + val.violation);

    Ctx ctx = build_ctx(market, grid);
    int nn = (int)labeling.nodes.size();
    Engine eng;
    eng.ctx = &ctx;
    eng.eps = eps;
    eng.root = labeling.root;
    eng.use_memo = use_memo;
    eng.stats = stats;
    eng.nodes.resize(nn);
    for (int i = 0; i < nn; ++i) eng.nodes[i].children = labeling.nodes[i].children;
    {
        // traders per node, sorted by id for deterministic joint enumeration
        std::map<std::string, std::vector<std::string>> members;
        for (const auto& [tid, nid] : labeling.label_of) members[nid].push_back(tid);
        for (int i = 0; i < nn; ++i) {
            auto it = members.find(labeling.nodes[i].id);
            if (it == members.end()) continue;
            std::sort(it->second.begin(), it->second.end());
            for (const auto& tid : it->second) eng.nodes[i].traders.push_back(ctx.index.at(tid));
        }
    }
    for (int i = 0; i < nn; ++i) {
        bool leaf = labeling.nodes[i].children.empty();
        eng.nodes[i].dp_leaf =
            leaf && joint_space((int)eng.nodes[i].traders.size(), ctx.h, grid.denom,
                                kExactLeafLimit) > kExactLeafLimit;
    }
    eng.build(true);

    std::vector<Rat> supply = market.supply();
    long N = grid.denom;
    std::vector<std::pair<long, long>> y_range(ctx.h);
    for (int g = 0; g < ctx.h; ++g) {
        Rat lo = (supply[g] - eps) * N;
        Rat hi = (supply[g] + eps) * N;
        mpz_class lo_z, hi_z;
        mpz_cdiv_q(lo_z.get_mpz_t(), lo.get_num_mpz_t(), lo.get_den_mpz_t());
        mpz_fdiv_q(hi_z.get_mpz_t(), hi.get_num_mpz_t(), hi.get_den_mpz_t());
        long l = std::max(0L, lo_z.fits_slong_p() ? lo_z.get_si() : 0L);
        long h2 = std::min(2 * N, hi_z.fits_slong_p() ? hi_z.get_si() : 2 * N);
        if (l > h2) {
            if (stats)
                stats->diagnostic = "no grid total matches supply of good " + std::to_string(g);
            return std::nullopt;
        }
        y_range[g] = {l, h2};
    }

    auto price_vectors = enumerate_price_grid(ctx.h, grid);
    for (const auto& raw : price_vectors) {
        set_prices(ctx, raw);
        eng.clear_caches();

        Units y(ctx.h, 0);
        std::optional<EquilibriumCandidate> result;
        std::function<bool(int)> yloop = [&](int g) -> bool {
            if (g == ctx.h) {
                std::optional<Assignment> assign;
                if (eng.nodes[eng.root].dp_leaf) {
                    auto alloc_of = [](int, int) -> Rat {
                        throw std::invalid_argument("root leaf group has no parent context");
                    };
                    auto states =
                        leaf_group_dp(ctx, eng.nodes[eng.root].traders, {}, alloc_of, eps);
                    for (const auto& st : states) {
                        bool match = true;
                        for (int gg = 0; gg < ctx.h; ++gg)
                            if (st.total[gg] != y[gg]) {
                                match = false;
                                break;
                            }
                        if (match) {
                            assign = st.witness;
                            break;
                        }
                    }
                } else {
                    enumerate_joint(ctx, eng.nodes[eng.root].traders, y, eps,
                                    [&](const JointX& X) {
                                        auto r = eng.check_node(eng.root, X, y, {});
                                        if (r) {
                                            assign = std::move(r);
                                            return true;
                                        }
                                        return false;
                                    });
                }
                if (!assign) return false;
                EquilibriumCandidate cand;
                cand.prices.values = ctx.price;
                cand.prices.normalized = true;
                cand.profile = units_to_profile(ctx, *assign);
                if (stats) stats->candidates_verified++;
                if (verify_candidate(market, cand, eps).verdict) {
                    result = std::move(cand);
                    return true;
                }
                return false;
            }
            for (long u = y_range[g].first; u <= y_range[g].second; ++u) {
                y[g] = (int)u;
                if (yloop(g + 1)) return true;
            }
            return false;
        };
        if (yloop(0)) return result;
    }
    return std::nullopt;
}

std::vector<LeafGroupState> leaf_group_feasible_totals(const Market& market,
                                                       const std::vector<std::string>& group,
                                                       const AllocationProfile& parent_allocs,
                                                       const PriceVector& prices, const Rat& eps,
                                                       const GridSpec& grid) {
    if (eps < 0) throw std::invalid_argument("leaf_group_feasible_totals: negative epsilon");
    require_normalized(prices, market.goods);
    Ctx ctx = build_ctx(market, grid);
    set_prices(ctx, prices.values);

    std::vector<int> gidx;
    for (const auto& id : group) {
        auto it = ctx.index.find(id);
        if (it == ctx.index.end())
            throw std::invalid_argument("leaf_group_feasible_totals: unknown trader '" + id + "'");
        gidx.push_back(it->second);
    }
    std::sort(gidx.begin(), gidx.end(), [&](int a, int b) { return ctx.ids[a] < ctx.ids[b]; });
    if (std::adjacent_find(gidx.begin(), gidx.end()) != gidx.end())
        throw std::invalid_argument("leaf_group_feasible_totals: duplicate group trader");
    std::set<int> gset(gidx.begin(), gidx.end());
    for (int t : gidx)
        for (int i = 0; i < ctx.h; ++i)
            for (const auto& f : ctx.view[t].forms[i])
                if (gset.count(f.trader))
                    throw std::invalid_argument(
                        "leaf_group_feasible_totals: intra-group edge detected ('" + ctx.ids[t] +
                        "' depends on '" + ctx.ids[f.trader] + "')");

    // observers: every non-group trader whose forms reference the group
    std::vector<int> observers;
    for (size_t t = 0; t < market.traders.size(); ++t) {
        if (gset.count((int)t)) continue;
        bool refs = false;
        for (int i = 0; i < ctx.h && !refs; ++i)
            for (const auto& f : ctx.view[t].forms[i])
                if (gset.count(f.trader)) {
                    refs = true;
                    break;
                }
        if (refs) observers.push_back((int)t);
    }
    std::sort(observers.begin(), observers.end(),
              [&](int a, int b) { return ctx.ids[a] < ctx.ids[b]; });

    auto alloc_of = [&](int trader, int good) -> Rat {
        const std::vector<Rat>* b = parent_allocs.get(ctx.ids[trader]);
        if (!b)
            throw std::invalid_argument("leaf_group_feasible_totals: group references '" +
                                        ctx.ids[trader] + "' missing from parent context");
        return (*b)[good];
    };
    auto states = leaf_group_dp(ctx, gidx, observers, alloc_of, eps);

    std::vector<LeafGroupState> out;
    out.reserve(states.size());
    for (const auto& st : states) {
        LeafGroupState s;
        s.total.reserve(ctx.h);
        for (int g = 0; g < ctx.h; ++g) s.total.push_back(ctx.unit[st.total[g]]);
        for (int op = 0; op < (int)observers.size(); ++op)
            for (int g = 0; g < ctx.h; ++g) {
                long cu = st.contrib[op * ctx.h + g];
                Rat c(cu, ctx.N);
                c.canonicalize();
                s.contribution[{ctx.ids[observers[op]], g}] = c;
            }
        s.witness = units_to_profile(ctx, st.witness);
        out.push_back(std::move(s));
    }
    return out;
}

std::optional<EquilibriumCandidate> solve_bruteforce(const Market& market, const GridSpec& grid,
                                                     const Rat& eps, long state_limit,
                                                     SolveStats* stats) {
    if (eps < 0) throw std::invalid_argument("solve_bruteforce: negative epsilon");
    if (market.traders.empty()) {
        if (stats) stats->diagnostic = "empty market";
        return std::nullopt;
    }
    Ctx ctx = build_ctx(market, grid);
    auto price_vectors = enumerate_price_grid(ctx.h, grid);

    {
        mpz_class states(1);
        mpz_class base(2 * grid.denom + 1);
        for (long i = 0; i < (long)market.traders.size() * ctx.h; ++i) states *= base;
        states *= (long)price_vectors.size();
        if (states > state_limit)
            throw std::invalid_argument("solve_bruteforce: nominal state count " +
                                        states.get_str() + " exceeds limit " +
                                        std::to_string(state_limit));
    }

    // traders in lexicographic id order
    std::vector<int> order;
    for (size_t t = 0; t < market.traders.size(); ++t) order.push_back((int)t);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return ctx.ids[a] < ctx.ids[b]; });

    std::vector<Rat> supply = market.supply();
    long N = grid.denom;
    std::vector<long> lo(ctx.h), hi(ctx.h);
    for (int g = 0; g < ctx.h; ++g) {
        Rat l = (supply[g] - eps) * N;
        Rat h2 = (supply[g] + eps) * N;
        mpz_class lz, hz;
        mpz_cdiv_q(lz.get_mpz_t(), l.get_num_mpz_t(), l.get_den_mpz_t());
        mpz_fdiv_q(hz.get_mpz_t(), h2.get_num_mpz_t(), h2.get_den_mpz_t());
        lo[g] = std::max(0L, lz.fits_slong_p() ? lz.get_si() : 0L);
        hi[g] = std::min(2 * N, hz.fits_slong_p() ? hz.get_si() : 2 * N);
        if (lo[g] > hi[g]) {
            if (stats)
                stats->diagnostic = "no grid total matches supply of good " + std::to_string(g);
            return std::nullopt;
        }
    }

    int m = (int)order.size();
    for (const auto& raw : price_vectors) {
        set_prices(ctx, raw);

        std::vector<std::vector<Units>> feasible(m);
        bool dead = false;
        for (int oi = 0; oi < m && !dead; ++oi) {
            int t = order[oi];
            Units b(ctx.h, 0);
            bool done = false;
            while (!done) {
                bool capped = true;
                for (int g = 0; g < ctx.h; ++g)
                    if (b[g] > hi[g]) capped = false;
                if (capped && ctx.bundle_cost(b) <= ctx.budget[t] + eps)
                    feasible[oi].push_back(b);
                int g = ctx.h - 1;
                while (g >= 0 && b[g] == 2 * N) b[g--] = 0;
                if (g < 0)
                    done = true;
                else
                    ++b[g];
            }
            if (feasible[oi].empty()) dead = true;
        }
        if (dead) continue;

        std::map<std::pair<int, std::vector<Rat>>, std::pair<char, Rat>> opt_memo;
        std::vector<const Units*> pick(m, nullptr);
        std::vector<long> totals(ctx.h, 0);
        std::optional<EquilibriumCandidate> result;

        std::function<bool(int)> dfs = [&](int oi) -> bool {
            if (oi == m) {
                // per-trader eps-optimality against the full assignment
                for (int oj = 0; oj < m; ++oj) {
                    int t = order[oj];
                    std::vector<Rat> fvals(ctx.h, Rat(0));
                    for (int i = 0; i < ctx.h; ++i)
                        for (const auto& term : ctx.view[t].forms[i]) {
                            int opos = 0;
                            while (order[opos] != term.trader) ++opos;
                            int u = (*pick[opos])[term.good];
                            if (u) fvals[i] += term.weight * ctx.unit[u];
                        }
                    auto key = std::make_pair(t, fvals);
                    auto it = opt_memo.find(key);
                    if (it == opt_memo.end()) {
                        auto segs = segments_from_form_values(*ctx.view[t].utility, fvals);
                        BundleResult best =
                            optimal_bundle_core(segs, ctx.price, ctx.budget[t], std::nullopt);
                        it = opt_memo
                                 .emplace(key, std::make_pair(best.unbounded ? (char)1 : (char)0,
                                                              best.value))
                                 .first;
                    }
                    if (it->second.first) return false;
                    auto segs = segments_from_form_values(*ctx.view[t].utility, fvals);
                    Rat u(0);
                    for (int g = 0; g < ctx.h; ++g)
                        if ((*pick[oj])[g]) u += segments_value_at(segs[g], ctx.unit[(*pick[oj])[g]]);
                    if (it->second.second - u > eps) return false;
                }
                EquilibriumCandidate cand;
                cand.prices.values = ctx.price;
                cand.prices.normalized = true;
                for (int oj = 0; oj < m; ++oj) {
                    std::vector<Rat> bundle(ctx.h);
                    for (int g = 0; g < ctx.h; ++g) bundle[g] = ctx.unit[(*pick[oj])[g]];
                    cand.profile.set(ctx.ids[order[oj]], std::move(bundle));
                }
                if (stats) stats->candidates_verified++;
                if (verify_candidate(market, cand, eps).verdict) {
                    result = std::move(cand);
                    return true;
                }
                return false;
            }
            for (const auto& b : feasible[oi]) {
                bool ok = true;
                for (int g = 0; g < ctx.h && ok; ++g) {
                    long t2 = totals[g] + b[g];
                    if (t2 > hi[g]) ok = false;
                    if (t2 + (long)(m - oi - 1) * 2 * N < lo[g]) ok = false;
                }
                if (!ok) continue;
                for (int g = 0; g < ctx.h; ++g) totals[g] += b[g];
                pick[oi] = &b;
                if (oi == m - 1) {
                    bool cleared = true;
                    for (int g = 0; g < ctx.h; ++g)
                        if (totals[g] < lo[g] || totals[g] > hi[g]) cleared = false;
                    if (cleared && dfs(oi + 1)) return true;
                } else if (dfs(oi + 1)) {
                    return true;
                }
                pick[oi] = nullptr;
                for (int g = 0; g < ctx.h; ++g) totals[g] -= b[g];
            }
            return false;
        };
        if (dfs(0)) return result;
    }
    return std::nullopt;
}

}  // namespace imkt
