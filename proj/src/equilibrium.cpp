#include "imkt/equilibrium.hpp"

#include <algorithm>

namespace imkt {

namespace {

struct Item {
    int good;
    int seg;
    Rat slope;
    std::optional<Rat> length;  // absent = unbounded
};

Rat budget_of(const Market& market, const Trader& t, const std::vector<Rat>& prices) {
    Rat b(0);
    for (int i = 0; i < market.goods; ++i) b += t.endowment[i] * prices[i];
    return b;
}

}  // namespace

BundleResult optimal_bundle_core(const std::vector<std::vector<Segment>>& segments,
                                 const std::vector<Rat>& prices, Rat budget,
                                 const std::optional<Rat>& box_cap) {
    int h = (int)segments.size();
    if ((int)prices.size() != h)
        throw std::invalid_argument("optimal_bundle: price dimension mismatch");
    for (const auto& p : prices)
        if (p < 0) throw std::invalid_argument("optimal_bundle: negative price");
    if (budget < 0) throw std::invalid_argument("optimal_bundle: negative budget");
    if (box_cap && *box_cap < 0) throw std::invalid_argument("optimal_bundle: negative box cap");

    BundleResult res;
    res.value = 0;
    res.bundle.assign(h, Rat(0));

    std::vector<Item> free_items, paid_items;
    for (int i = 0; i < h; ++i) {
        Rat pos(0);
        for (int s = 0; s < (int)segments[i].size(); ++s) {
            const Segment& seg = segments[i][s];
            std::optional<Rat> len;
            if (seg.cap) {
                if (*seg.cap <= pos) continue;
                len = *seg.cap - pos;
                pos = *seg.cap;
            }
            if (seg.slope <= 0) continue;
            Item item{i, s, seg.slope, len};
            (prices[i] == 0 ? free_items : paid_items).push_back(item);
        }
    }

    auto box_room = [&](int good) -> std::optional<Rat> {
        if (!box_cap) return std::nullopt;
        return *box_cap - res.bundle[good];
    };

    for (const auto& item : free_items) {
        if (!item.length && !box_cap) {
            res.unbounded = true;
            return res;
        }
        Rat take;
        std::optional<Rat> room = box_room(item.good);
        if (item.length)
            take = room && *room < *item.length ? *room : *item.length;
        else
            take = *room;
        if (take <= 0) continue;
        res.bundle[item.good] += take;
        res.value += item.slope * take;
    }

    // slope/price descending; ties by lower good index, then earlier segment
    std::sort(paid_items.begin(), paid_items.end(), [&](const Item& a, const Item& b) {
        Rat lhs = a.slope * prices[b.good];
        Rat rhs = b.slope * prices[a.good];
        if (lhs != rhs) return lhs > rhs;
        if (a.good != b.good) return a.good < b.good;
        return a.seg < b.seg;
    });

    for (const auto& item : paid_items) {
        if (budget == 0) break;
        Rat take = budget / prices[item.good];
        if (item.length && *item.length < take) take = *item.length;
        std::optional<Rat> room = box_room(item.good);
        if (room && *room < take) take = *room;
        if (take <= 0) continue;
        res.bundle[item.good] += take;
        res.value += item.slope * take;
        budget -= take * prices[item.good];
    }
    return res;
}

BundleResult optimal_bundle(const Market& market, const std::string& trader_id,
                            const PriceVector& prices, const AllocationProfile& profile_others,
                            const std::optional<Rat>& box_cap) {
    const Trader& t = market.at(trader_id);
    if ((int)prices.values.size() != market.goods)
        throw std::invalid_argument("optimal_bundle: price dimension mismatch");
    auto segs = effective_segments(market, trader_id, profile_others);
    return optimal_bundle_core(segs, prices.values, budget_of(market, t, prices.values), box_cap);
}

VerificationReport verify_candidate(const Market& market, const EquilibriumCandidate& cand,
                                    const Rat& eps) {
    if (eps < 0) throw std::invalid_argument("verify_candidate: negative epsilon");
    if (!cand.prices.normalized)
        throw std::invalid_argument("verify_candidate: prices must be normalized");
    if ((int)cand.prices.values.size() != market.goods)
        throw std::invalid_argument("verify_candidate: price dimension mismatch");
    for (const auto& p : cand.prices.values)
        if (p < 0) throw std::invalid_argument("verify_candidate: negative price");

    VerificationReport report;
    report.epsilon = eps;

    Rat sum(0);
    for (const auto& p : cand.prices.values) sum += p;
    report.prices_normalized.pass = sum == 1;
    report.prices_normalized.violation = rat_abs(sum - 1);
    if (!report.prices_normalized.pass) report.prices_normalized.note = "price mass != 1";

    report.budgets.pass = true;
    report.budgets.violation = 0;
    report.optimality.pass = true;
    report.optimality.violation = 0;
    for (const auto& t : market.traders) {
        const std::vector<Rat>* x = cand.profile.get(t.id);
        if (!x || (int)x->size() != market.goods)
            throw std::invalid_argument("verify_candidate: profile misses trader '" + t.id + "'");
        for (const auto& v : *x)
            if (v < 0) throw std::invalid_argument("verify_candidate: negative allocation");

        Rat cost(0);
        for (int i = 0; i < market.goods; ++i) cost += (*x)[i] * cand.prices.values[i];
        Rat wealth = budget_of(market, t, cand.prices.values);
        Rat excess = cost - wealth;
        if (excess > report.budgets.violation) {
            report.budgets.violation = excess;
            report.budgets.where = t.id;
        }
        if (excess > eps) report.budgets.pass = false;

        BundleResult best = optimal_bundle(market, t.id, cand.prices, cand.profile, std::nullopt);
        if (best.unbounded) {
            report.optimality.pass = false;
            report.optimality.where = t.id;
            report.optimality.note = "unbounded optimum (price 0 on a nonsatiated good)";
            continue;
        }
        Rat gap = best.value - eval_utility(market, t.id, cand.profile);
        if (gap > report.optimality.violation) {
            report.optimality.violation = gap;
            report.optimality.where = t.id;
        }
        if (gap > eps) report.optimality.pass = false;
    }

    report.clearing.pass = true;
    report.clearing.violation = 0;
    std::vector<Rat> supply = market.supply();
    for (int i = 0; i < market.goods; ++i) {
        Rat total(0);
        for (const auto& t : market.traders) total += (*cand.profile.get(t.id))[i];
        Rat gap = rat_abs(supply[i] - total);
        if (gap > report.clearing.violation) {
            report.clearing.violation = gap;
            report.clearing.where = "good " + std::to_string(i);
        }
        if (gap > eps) report.clearing.pass = false;
    }

    report.verdict = report.prices_normalized.pass && report.budgets.pass &&
                     report.optimality.pass && report.clearing.pass;
    return report;
}

PhiConstants phi_constants(const Market& market) {
    long m = (long)market.traders.size();
    long h = market.goods;
    if (m < 1 || h < 1) throw std::invalid_argument("phi_constants: empty market");
    mpz_class need = 4 * mpz_class(m) * mpz_class(h) * mpz_class(h);
    unsigned long level = pow2_exponent_at_least(need);

    // Raise L until 2^-L clears every positive tail-slope gap and endowment.
    auto bump_for = [&level](const Rat& v) {
        if (v <= 0) return;
        mpz_class t;
        mpz_cdiv_q(t.get_mpz_t(), v.get_den_mpz_t(), v.get_num_mpz_t());
        unsigned long need_l = pow2_exponent_at_least(t);
        if (need_l > level) level = need_l;
    };
    for (const auto& t : market.traders) {
        for (const auto& w : t.endowment) bump_for(w);
        for (int i = 0; i < h; ++i) {
            if (std::holds_alternative<LinearUtility>(t.utility))
                bump_for(std::get<LinearUtility>(t.utility).base[i]);
            else {
                const auto& u = std::get<ThresholdUtility>(t.utility);
                bump_for(u.peak[i] - u.drop[i]);
            }
        }
    }

    PhiConstants consts;
    consts.level = level;
    mpz_class den(m);
    den <<= 3 * (unsigned long)m * level;
    consts.floor_c = Rat(1, den);
    consts.floor_c.canonicalize();
    return consts;
}

namespace {

void check_phi_domain(const Market& market, const PhiPoint& point, const PhiConstants& consts) {
    if ((int)point.prices.values.size() != market.goods)
        throw std::invalid_argument("phi: price dimension mismatch");
    Rat sum(0);
    for (const auto& p : point.prices.values) {
        if (p < consts.floor_c) throw std::invalid_argument("phi: price below floor");
        sum += p;
    }
    if (sum != 1) throw std::invalid_argument("phi: prices must sum to 1");
    Rat box = rat(11, 10);
    for (const auto& t : market.traders) {
        const std::vector<Rat>* x = point.profile.get(t.id);
        if (!x || (int)x->size() != market.goods)
            throw std::invalid_argument("phi: profile misses trader '" + t.id + "'");
        for (const auto& v : *x)
            if (v < 0 || v > box) throw std::invalid_argument("phi: allocation outside box");
    }
}

}  // namespace

PhiPoint phi_step(const Market& market, const PhiPoint& point, const PhiConstants& consts) {
    check_phi_domain(market, point, consts);
    int h = market.goods;

    std::vector<Rat> aggregate(h, Rat(0));
    for (const auto& t : market.traders) {
        const std::vector<Rat>& x = *point.profile.get(t.id);
        for (int i = 0; i < h; ++i) aggregate[i] += x[i];
    }

    PhiPoint next;
    next.prices.normalized = true;
    bool all_equal = true;
    int argmax = 0;
    for (int i = 1; i < h; ++i) {
        if (aggregate[i] != aggregate[0]) all_equal = false;
        if (aggregate[i] > aggregate[argmax]) argmax = i;
    }
    if (all_equal) {
        next.prices.values.assign(h, Rat(1, (unsigned long)h));
        for (auto& p : next.prices.values) p.canonicalize();
    } else {
        next.prices.values.assign(h, consts.floor_c);
        next.prices.values[argmax] += 1 - Rat((unsigned long)h) * consts.floor_c;
    }

    Rat box = rat(11, 10);
    for (const auto& t : market.traders) {
        BundleResult best = optimal_bundle(market, t.id, point.prices, point.profile, box);
        next.profile.set(t.id, best.bundle);
    }
    return next;
}

namespace {

Rat point_distance(const Market& market, const PhiPoint& a, const PhiPoint& b) {
    Rat d(0);
    for (int i = 0; i < market.goods; ++i) {
        Rat g = rat_abs(a.prices.values[i] - b.prices.values[i]);
        if (g > d) d = g;
    }
    for (const auto& t : market.traders) {
        const std::vector<Rat>& xa = *a.profile.get(t.id);
        const std::vector<Rat>& xb = *b.profile.get(t.id);
        for (int i = 0; i < market.goods; ++i) {
            Rat g = rat_abs(xa[i] - xb[i]);
            if (g > d) d = g;
        }
    }
    return d;
}

}  // namespace

Rat fixed_point_residual(const Market& market, const PhiPoint& point, const PhiConstants& consts) {
    return point_distance(market, point, phi_step(market, point, consts));
}

PhiTrace phi_iterate(const Market& market, const PhiPoint& start, const PhiConstants& consts,
                     int max_steps, const Rat& damping) {
    if (damping <= 0 || damping > 1) throw std::invalid_argument("phi_iterate: damping in (0,1]");
    PhiTrace trace;
    PhiPoint cur = start;
    Rat box = rat(11, 10);
    for (int step = 0; step <= max_steps; ++step) {
        PhiPoint image = phi_step(market, cur, consts);
        Rat residual = point_distance(market, cur, image);
        trace.points.push_back(cur);
        trace.residuals.push_back(residual);
        if (trace.points.size() == 1 || residual < trace.best_residual) {
            trace.best = cur;
            trace.best_residual = residual;
        }
        if (step == max_steps) break;
        PhiPoint next;
        next.prices.normalized = true;
        next.prices.values.resize(market.goods);
        for (int i = 0; i < market.goods; ++i)
            next.prices.values[i] =
                cur.prices.values[i] + damping * (image.prices.values[i] - cur.prices.values[i]);
        for (const auto& t : market.traders) {
            const std::vector<Rat>& xc = *cur.profile.get(t.id);
            const std::vector<Rat>& xi = *image.profile.get(t.id);
            std::vector<Rat> mixed(market.goods);
            for (int i = 0; i < market.goods; ++i) {
                mixed[i] = xc[i] + damping * (xi[i] - xc[i]);
                if (mixed[i] < 0) mixed[i] = 0;
                if (mixed[i] > box) mixed[i] = box;
            }
            next.profile.set(t.id, std::move(mixed));
        }
        cur = std::move(next);
    }
    return trace;
}

}  // namespace imkt
