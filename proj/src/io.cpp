#include "imkt/io.hpp"

#include <json.hpp>
#include <sstream>

namespace imkt {

namespace {

using ojson = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& msg) { throw ParseError(msg); }

std::string at(const std::string& path) { return path.empty() ? "" : " at " + path; }

void reject_floats(const ojson& j, const std::string& path) {
    if (j.is_number_float()) fail("float literal; write 1/2" + at(path));
    if (j.is_object())
        for (auto it = j.begin(); it != j.end(); ++it)
            reject_floats(it.value(), path.empty() ? it.key() : path + "." + it.key());
    if (j.is_array())
        for (size_t i = 0; i < j.size(); ++i)
            reject_floats(j[i], path + "[" + std::to_string(i) + "]");
}

Rat to_rat(const ojson& j, const std::string& path) {
    if (j.is_number_integer()) return Rat((long)j.get<int64_t>());
    if (j.is_number_unsigned()) return Rat((unsigned long)j.get<uint64_t>());
    if (j.is_string()) {
        std::string s = j.get<std::string>();
        if (s.find('.') != std::string::npos || s.find('e') != std::string::npos ||
            s.find('E') != std::string::npos)
            fail("float literal; write 1/2" + at(path));
        try {
            return parse_rat(s);
        } catch (const std::exception& e) {
            fail(std::string(e.what()) + at(path));
        }
    }
    fail("expected a rational (integer or \"p/q\" string)" + at(path));
}

const ojson& field(const ojson& j, const char* key, const std::string& path) {
    if (!j.is_object()) fail("expected an object" + at(path));
    auto it = j.find(key);
    if (it == j.end()) fail("missing field '" + std::string(key) + "'" + at(path));
    return *it;
}

int to_int(const ojson& j, const std::string& path) {
    if (!j.is_number_integer() && !j.is_number_unsigned())
        fail("expected an integer" + at(path));
    return (int)j.get<int64_t>();
}

std::string to_str(const ojson& j, const std::string& path) {
    if (!j.is_string()) fail("expected a string" + at(path));
    return j.get<std::string>();
}

bool to_bool(const ojson& j, const std::string& path) {
    if (!j.is_boolean()) fail("expected a boolean" + at(path));
    return j.get<bool>();
}

const ojson& arr(const ojson& j, const std::string& path) {
    if (!j.is_array()) fail("expected an array" + at(path));
    return j;
}

std::vector<Rat> rat_vector(const ojson& j, const std::string& path) {
    std::vector<Rat> out;
    for (size_t i = 0; i < arr(j, path).size(); ++i)
        out.push_back(to_rat(j[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

ojson from_rat_vector(const std::vector<Rat>& v) {
    ojson j = ojson::array();
    for (const auto& r : v) j.push_back(rat_str(r));
    return j;
}

// --- market ---------------------------------------------------------------

std::vector<LinearForm> parse_influence(const ojson& j, const std::string& path) {
    std::vector<LinearForm> out;
    for (size_t i = 0; i < arr(j, path).size(); ++i) {
        std::string fp = path + "[" + std::to_string(i) + "]";
        LinearForm form;
        for (size_t k = 0; k < arr(j[i], fp).size(); ++k) {
            std::string tp = fp + "[" + std::to_string(k) + "]";
            const ojson& t = j[i][k];
            FormTerm term;
            term.trader = to_str(field(t, "trader", tp), tp + ".trader");
            term.good = to_int(field(t, "good", tp), tp + ".good");
            term.weight = to_rat(field(t, "weight", tp), tp + ".weight");
            form.terms.push_back(std::move(term));
        }
        out.push_back(std::move(form));
    }
    return out;
}

ojson emit_influence(const std::vector<LinearForm>& influence) {
    ojson j = ojson::array();
    for (const auto& form : influence) {
        ojson f = ojson::array();
        for (const auto& t : form.terms)
            f.push_back(ojson{{"trader", t.trader}, {"good", t.good}, {"weight", rat_str(t.weight)}});
        j.push_back(std::move(f));
    }
    return j;
}

Market parse_market(const ojson& j) {
    Market m;
    m.goods = to_int(field(j, "goods", "payload"), "payload.goods");
    const ojson& traders = arr(field(j, "traders", "payload"), "payload.traders");
    for (size_t i = 0; i < traders.size(); ++i) {
        std::string tp = "payload.traders[" + std::to_string(i) + "]";
        const ojson& t = traders[i];
        Trader trader;
        trader.id = to_str(field(t, "id", tp), tp + ".id");
        trader.endowment = rat_vector(field(t, "endowment", tp), tp + ".endowment");
        const ojson& u = field(t, "utility", tp);
        std::string up = tp + ".utility";
        std::string type = to_str(field(u, "type", up), up + ".type");
        if (type == "linear") {
            LinearUtility lu;
            lu.base = rat_vector(field(u, "base", up), up + ".base");
            lu.influence = parse_influence(field(u, "influence", up), up + ".influence");
            trader.utility = std::move(lu);
        } else if (type == "threshold") {
            ThresholdUtility tu;
            tu.peak = rat_vector(field(u, "peak", up), up + ".peak");
            tu.drop = rat_vector(field(u, "drop", up), up + ".drop");
            tu.influence = parse_influence(field(u, "influence", up), up + ".influence");
            trader.utility = std::move(tu);
        } else {
            fail("unknown utility type '" + type + "'" + at(up));
        }
        m.traders.push_back(std::move(trader));
    }
    return m;
}

ojson emit_market(const Market& m) {
    ojson j;
    j["goods"] = m.goods;
    ojson traders = ojson::array();
    for (const auto& t : m.traders) {
        ojson tj;
        tj["id"] = t.id;
        tj["endowment"] = from_rat_vector(t.endowment);
        ojson u;
        if (std::holds_alternative<LinearUtility>(t.utility)) {
            const auto& lu = std::get<LinearUtility>(t.utility);
            u["type"] = "linear";
            u["base"] = from_rat_vector(lu.base);
            u["influence"] = emit_influence(lu.influence);
        } else {
            const auto& tu = std::get<ThresholdUtility>(t.utility);
            u["type"] = "threshold";
            u["peak"] = from_rat_vector(tu.peak);
            u["drop"] = from_rat_vector(tu.drop);
            u["influence"] = emit_influence(tu.influence);
        }
        tj["utility"] = std::move(u);
        traders.push_back(std::move(tj));
    }
    j["traders"] = std::move(traders);
    return j;
}

// --- game -------------------------------------------------------------------

BimatrixGame parse_game(const ojson& j) {
    BimatrixGame g;
    g.n = to_int(field(j, "n", "payload"), "payload.n");
    auto matrix = [&](const char* key) {
        std::vector<std::vector<Rat>> M;
        const ojson& rows = arr(field(j, key, "payload"), std::string("payload.") + key);
        for (size_t i = 0; i < rows.size(); ++i)
            M.push_back(rat_vector(rows[i],
                                   std::string("payload.") + key + "[" + std::to_string(i) + "]"));
        return M;
    };
    g.A = matrix("A");
    g.B = matrix("B");
    return g;
}

ojson emit_game(const BimatrixGame& g) {
    ojson j;
    j["n"] = g.n;
    auto matrix = [&](const std::vector<std::vector<Rat>>& M) {
        ojson rows = ojson::array();
        for (const auto& row : M) rows.push_back(from_rat_vector(row));
        return rows;
    };
    j["A"] = matrix(g.A);
    j["B"] = matrix(g.B);
    return j;
}

// --- candidate ---------------------------------------------------------------

EquilibriumCandidate parse_candidate(const ojson& j) {
    EquilibriumCandidate c;
    const ojson& p = field(j, "prices", "payload");
    c.prices.values = rat_vector(field(p, "values", "payload.prices"), "payload.prices.values");
    c.prices.normalized =
        to_bool(field(p, "normalized", "payload.prices"), "payload.prices.normalized");
    const ojson& allocs = field(j, "allocations", "payload");
    if (!allocs.is_object()) fail("expected an object at payload.allocations");
    for (auto it = allocs.begin(); it != allocs.end(); ++it)
        c.profile.set(it.key(), rat_vector(it.value(), "payload.allocations." + it.key()));
    return c;
}

ojson emit_candidate(const EquilibriumCandidate& c) {
    ojson j;
    j["prices"] = ojson{{"values", from_rat_vector(c.prices.values)},
                        {"normalized", c.prices.normalized}};
    ojson allocs = ojson::object();
    for (const auto& [id, bundle] : c.profile.bundles) allocs[id] = from_rat_vector(bundle);
    j["allocations"] = std::move(allocs);
    return j;
}

// --- labeling ------------------------------------------------------------------

HierarchicalLabeling parse_labeling(const ojson& j) {
    HierarchicalLabeling lab;
    lab.width_k = to_int(field(j, "width_k", "payload"), "payload.width_k");
    lab.root = to_int(field(j, "root", "payload"), "payload.root");
    const ojson& nodes = arr(field(j, "nodes", "payload"), "payload.nodes");
    for (size_t i = 0; i < nodes.size(); ++i) {
        std::string np = "payload.nodes[" + std::to_string(i) + "]";
        HierarchicalLabeling::Node node;
        node.id = to_str(field(nodes[i], "id", np), np + ".id");
        const ojson& ch = arr(field(nodes[i], "children", np), np + ".children");
        for (size_t k = 0; k < ch.size(); ++k)
            node.children.push_back(to_int(ch[k], np + ".children[" + std::to_string(k) + "]"));
        lab.nodes.push_back(std::move(node));
    }
    const ojson& labels = field(j, "labels", "payload");
    if (!labels.is_object()) fail("expected an object at payload.labels");
    for (auto it = labels.begin(); it != labels.end(); ++it)
        lab.label_of[it.key()] = to_str(it.value(), "payload.labels." + it.key());
    return lab;
}

ojson emit_labeling(const HierarchicalLabeling& lab) {
    ojson j;
    j["width_k"] = lab.width_k;
    j["root"] = lab.root;
    ojson nodes = ojson::array();
    for (const auto& node : lab.nodes) {
        ojson n;
        n["id"] = node.id;
        n["children"] = node.children;
        nodes.push_back(std::move(n));
    }
    j["nodes"] = std::move(nodes);
    ojson labels = ojson::object();
    for (const auto& [tid, nid] : lab.label_of) labels[tid] = nid;
    j["labels"] = std::move(labels);
    return j;
}

// --- plm-spec ---------------------------------------------------------------

SeparablePLMSpec parse_plm(const ojson& j) {
    SeparablePLMSpec spec;
    spec.goods = to_int(field(j, "goods", "payload"), "payload.goods");
    const ojson& traders = arr(field(j, "traders", "payload"), "payload.traders");
    for (size_t i = 0; i < traders.size(); ++i) {
        std::string tp = "payload.traders[" + std::to_string(i) + "]";
        PLMTrader t;
        t.id = to_str(field(traders[i], "id", tp), tp + ".id");
        t.endowment = rat_vector(field(traders[i], "endowment", tp), tp + ".endowment");
        const ojson& pieces = arr(field(traders[i], "pieces", tp), tp + ".pieces");
        for (size_t k = 0; k < pieces.size(); ++k) {
            std::string pp = tp + ".pieces[" + std::to_string(k) + "]";
            int good = to_int(field(pieces[k], "good", pp), pp + ".good");
            PLMPiece piece;
            piece.a = to_rat(field(pieces[k], "a", pp), pp + ".a");
            piece.b = to_rat(field(pieces[k], "b", pp), pp + ".b");
            piece.theta = to_rat(field(pieces[k], "theta", pp), pp + ".theta");
            if (!t.pieces.emplace(good, piece).second)
                fail("duplicate piece for good " + std::to_string(good) + at(pp));
        }
        spec.traders.push_back(std::move(t));
    }
    return spec;
}

ojson emit_plm(const SeparablePLMSpec& spec) {
    ojson j;
    j["goods"] = spec.goods;
    ojson traders = ojson::array();
    for (const auto& t : spec.traders) {
        ojson tj;
        tj["id"] = t.id;
        tj["endowment"] = from_rat_vector(t.endowment);
        ojson pieces = ojson::array();
        for (const auto& [good, piece] : t.pieces)
            pieces.push_back(ojson{{"good", good},
                                   {"a", rat_str(piece.a)},
                                   {"b", rat_str(piece.b)},
                                   {"theta", rat_str(piece.theta)}});
        tj["pieces"] = std::move(pieces);
        traders.push_back(std::move(tj));
    }
    j["traders"] = std::move(traders);
    return j;
}

// --- strategies ---------------------------------------------------------------

MixedStrategyPair parse_strategies(const ojson& j) {
    MixedStrategyPair p;
    p.x = rat_vector(field(j, "x", "payload"), "payload.x");
    p.y = rat_vector(field(j, "y", "payload"), "payload.y");
    return p;
}

ojson emit_strategies(const MixedStrategyPair& p) {
    ojson j;
    j["x"] = from_rat_vector(p.x);
    j["y"] = from_rat_vector(p.y);
    return j;
}

// --- report ----------------------------------------------------------------------

ojson emit_condition(const ConditionResult& c) {
    return ojson{{"pass", c.pass},
                 {"violation", rat_str(c.violation)},
                 {"where", c.where},
                 {"note", c.note}};
}

ConditionResult parse_condition(const ojson& j, const std::string& path) {
    ConditionResult c;
    c.pass = to_bool(field(j, "pass", path), path + ".pass");
    c.violation = to_rat(field(j, "violation", path), path + ".violation");
    c.where = to_str(field(j, "where", path), path + ".where");
    c.note = to_str(field(j, "note", path), path + ".note");
    return c;
}

VerificationReport parse_report(const ojson& j) {
    VerificationReport r;
    r.epsilon = to_rat(field(j, "epsilon", "payload"), "payload.epsilon");
    r.prices_normalized =
        parse_condition(field(j, "prices_normalized", "payload"), "payload.prices_normalized");
    r.budgets = parse_condition(field(j, "budgets", "payload"), "payload.budgets");
    r.optimality = parse_condition(field(j, "optimality", "payload"), "payload.optimality");
    r.clearing = parse_condition(field(j, "clearing", "payload"), "payload.clearing");
    r.verdict = to_bool(field(j, "verdict", "payload"), "payload.verdict");
    return r;
}

ojson emit_report_json(const VerificationReport& r) {
    ojson j;
    j["epsilon"] = rat_str(r.epsilon);
    j["prices_normalized"] = emit_condition(r.prices_normalized);
    j["budgets"] = emit_condition(r.budgets);
    j["optimality"] = emit_condition(r.optimality);
    j["clearing"] = emit_condition(r.clearing);
    j["verdict"] = r.verdict;
    return j;
}

RoleMap parse_roles(const ojson& j) {
    RoleMap roles;
    if (!j.is_object()) fail("expected an object at roles");
    for (auto it = j.begin(); it != j.end(); ++it) {
        std::string rp = "roles." + it.key();
        Role role;
        role.kind = to_str(field(it.value(), "kind", rp), rp + ".kind");
        role.i = to_int(field(it.value(), "i", rp), rp + ".i");
        role.j = to_int(field(it.value(), "j", rp), rp + ".j");
        role.origin = to_str(field(it.value(), "origin", rp), rp + ".origin");
        roles[it.key()] = std::move(role);
    }
    return roles;
}

ojson emit_roles(const RoleMap& roles) {
    ojson j = ojson::object();
    for (const auto& [id, role] : roles)
        j[id] = ojson{{"kind", role.kind}, {"i", role.i}, {"j", role.j}, {"origin", role.origin}};
    return j;
}

}  // namespace

const Market& InstanceDocument::market() const {
    if (!std::holds_alternative<Market>(payload)) fail("document is not a market");
    return std::get<Market>(payload);
}
const BimatrixGame& InstanceDocument::game() const {
    if (!std::holds_alternative<BimatrixGame>(payload)) fail("document is not a game");
    return std::get<BimatrixGame>(payload);
}
const EquilibriumCandidate& InstanceDocument::candidate() const {
    if (!std::holds_alternative<EquilibriumCandidate>(payload))
        fail("document is not a candidate");
    return std::get<EquilibriumCandidate>(payload);
}
const HierarchicalLabeling& InstanceDocument::labeling() const {
    if (!std::holds_alternative<HierarchicalLabeling>(payload))
        fail("document is not a labeling");
    return std::get<HierarchicalLabeling>(payload);
}
const SeparablePLMSpec& InstanceDocument::plm_spec() const {
    if (!std::holds_alternative<SeparablePLMSpec>(payload)) fail("document is not a plm-spec");
    return std::get<SeparablePLMSpec>(payload);
}
const MixedStrategyPair& InstanceDocument::strategies() const {
    if (!std::holds_alternative<MixedStrategyPair>(payload))
        fail("document is not a strategies document");
    return std::get<MixedStrategyPair>(payload);
}
const VerificationReport& InstanceDocument::report() const {
    if (!std::holds_alternative<VerificationReport>(payload)) fail("document is not a report");
    return std::get<VerificationReport>(payload);
}

InstanceDocument parse_instance(const std::string& text) {
    ojson j;
    try {
        j = ojson::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        size_t byte = e.byte > 0 ? e.byte - 1 : 0;
        if (byte > text.size()) byte = text.size();
        size_t line = 1, col = 1;
        for (size_t i = 0; i < byte; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        fail("syntax error at line " + std::to_string(line) + ", column " + std::to_string(col));
    }
    reject_floats(j, "");

    InstanceDocument doc;
    doc.version = to_int(field(j, "version", ""), "version");
    if (doc.version != 1) fail("version mismatch: expected 1, got " + std::to_string(doc.version));
    doc.kind = to_str(field(j, "kind", ""), "kind");
    const ojson& payload = field(j, "payload", "");
    if (doc.kind == "market")
        doc.payload = parse_market(payload);
    else if (doc.kind == "game")
        doc.payload = parse_game(payload);
    else if (doc.kind == "candidate")
        doc.payload = parse_candidate(payload);
    else if (doc.kind == "labeling")
        doc.payload = parse_labeling(payload);
    else if (doc.kind == "plm-spec")
        doc.payload = parse_plm(payload);
    else if (doc.kind == "strategies")
        doc.payload = parse_strategies(payload);
    else if (doc.kind == "report")
        doc.payload = parse_report(payload);
    else
        fail("unknown kind '" + doc.kind + "'");
    if (j.contains("roles")) {
        if (doc.kind != "market") fail("roles are only allowed on market documents");
        doc.roles = parse_roles(j["roles"]);
    }
    return doc;
}

std::string emit_instance(const InstanceDocument& doc) {
    ojson j;
    j["version"] = doc.version;
    j["kind"] = doc.kind;
    if (doc.kind == "market")
        j["payload"] = emit_market(doc.market());
    else if (doc.kind == "game")
        j["payload"] = emit_game(doc.game());
    else if (doc.kind == "candidate")
        j["payload"] = emit_candidate(doc.candidate());
    else if (doc.kind == "labeling")
        j["payload"] = emit_labeling(doc.labeling());
    else if (doc.kind == "plm-spec")
        j["payload"] = emit_plm(doc.plm_spec());
    else if (doc.kind == "strategies")
        j["payload"] = emit_strategies(doc.strategies());
    else if (doc.kind == "report")
        j["payload"] = emit_report_json(doc.report());
    else
        fail("unknown kind '" + doc.kind + "'");
    if (!doc.roles.empty()) {
        if (doc.kind != "market") fail("roles are only allowed on market documents");
        j["roles"] = emit_roles(doc.roles);
    }
    return j.dump(2) + "\n";
}

InstanceDocument make_market_doc(const Market& market, const RoleMap& roles) {
    InstanceDocument doc;
    doc.kind = "market";
    doc.payload = market;
    doc.roles = roles;
    return doc;
}
InstanceDocument make_game_doc(const BimatrixGame& game) {
    InstanceDocument doc;
    doc.kind = "game";
    doc.payload = game;
    return doc;
}
InstanceDocument make_candidate_doc(const EquilibriumCandidate& cand) {
    InstanceDocument doc;
    doc.kind = "candidate";
    doc.payload = cand;
    return doc;
}
InstanceDocument make_labeling_doc(const HierarchicalLabeling& labeling) {
    InstanceDocument doc;
    doc.kind = "labeling";
    doc.payload = labeling;
    return doc;
}
InstanceDocument make_plm_doc(const SeparablePLMSpec& spec) {
    InstanceDocument doc;
    doc.kind = "plm-spec";
    doc.payload = spec;
    return doc;
}
InstanceDocument make_strategies_doc(const MixedStrategyPair& pair) {
    InstanceDocument doc;
    doc.kind = "strategies";
    doc.payload = pair;
    return doc;
}
InstanceDocument make_report_doc(const VerificationReport& report) {
    InstanceDocument doc;
    doc.kind = "report";
    doc.payload = report;
    return doc;
}

namespace {

const char* kConditionNames[4] = {"prices_normalized", "budgets", "optimality", "clearing"};

const ConditionResult& condition_by_index(const VerificationReport& r, int i) {
    switch (i) {
        case 0: return r.prices_normalized;
        case 1: return r.budgets;
        case 2: return r.optimality;
        default: return r.clearing;
    }
}

ConditionResult& condition_by_index(VerificationReport& r, int i) {
    switch (i) {
        case 0: return r.prices_normalized;
        case 1: return r.budgets;
        case 2: return r.optimality;
        default: return r.clearing;
    }
}

}  // namespace

std::string emit_report(const VerificationReport& report, ReportFormat format) {
    std::ostringstream out;
    if (format == ReportFormat::Text) {
        out << "epsilon: " << rat_str(report.epsilon) << "\n";
        const char* labels[4] = {"prices normalized", "budgets", "optimality", "clearing"};
        for (int i = 0; i < 4; ++i) {
            const ConditionResult& c = condition_by_index(report, i);
            out << labels[i] << ": " << (c.pass ? "PASS" : "FAIL");
            if (!c.pass) {
                out << " (excess " << rat_str(c.violation);
                if (!c.where.empty()) out << " at " << c.where;
                out << ")";
            }
            if (!c.note.empty()) out << " [" << c.note << "]";
            out << "\n";
        }
        out << "verdict: " << (report.verdict ? "PASS" : "FAIL") << "\n";
    } else {
        out << "report\tepsilon=" << rat_str(report.epsilon)
            << "\tverdict=" << (report.verdict ? "pass" : "fail") << "\n";
        for (int i = 0; i < 4; ++i) {
            const ConditionResult& c = condition_by_index(report, i);
            out << "condition\tname=" << kConditionNames[i]
                << "\tpass=" << (c.pass ? "true" : "false")
                << "\tviolation=" << rat_str(c.violation) << "\twhere=" << c.where
                << "\tnote=" << c.note << "\n";
        }
    }
    return out.str();
}

VerificationReport parse_report_machine(const std::string& text) {
    VerificationReport r;
    bool saw_header = false;
    bool saw_condition[4] = {false, false, false, false};
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> parts;
        size_t start = 0;
        while (true) {
            size_t tab = line.find('\t', start);
            parts.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        auto value = [&](const std::string& key) -> std::string {
            for (size_t i = 1; i < parts.size(); ++i)
                if (parts[i].rfind(key + "=", 0) == 0) return parts[i].substr(key.size() + 1);
            fail("machine report: missing '" + key + "' in line: " + line);
        };
        if (parts[0] == "report") {
            r.epsilon = parse_rat(value("epsilon"));
            r.verdict = value("verdict") == "pass";
            saw_header = true;
        } else if (parts[0] == "condition") {
            std::string name = value("name");
            int idx = -1;
            for (int i = 0; i < 4; ++i)
                if (name == kConditionNames[i]) idx = i;
            if (idx < 0) fail("machine report: unknown condition '" + name + "'");
            ConditionResult& c = condition_by_index(r, idx);
            c.pass = value("pass") == "true";
            c.violation = parse_rat(value("violation"));
            c.where = value("where");
            c.note = value("note");
            saw_condition[idx] = true;
        } else {
            fail("machine report: unknown record '" + parts[0] + "'");
        }
    }
    if (!saw_header || !saw_condition[0] || !saw_condition[1] || !saw_condition[2] ||
        !saw_condition[3])
        fail("machine report: incomplete");
    return r;
}

bool operator==(const InstanceDocument& a, const InstanceDocument& b) {
    return emit_instance(a) == emit_instance(b);
}

}  // namespace imkt
