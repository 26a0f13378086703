#pragma once

#include <stdexcept>
#include <string>
#include <variant>

#include "imkt/equilibrium.hpp"
#include "imkt/hsolver.hpp"
#include "imkt/market.hpp"
#include "imkt/reduction.hpp"

namespace imkt {

// Parse/validation failure; message carries line/column for syntax errors.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Typed document envelope. kind determines the payload alternative:
//   market | game | candidate | labeling | plm-spec | strategies | report
// Markets may carry an optional role map (emitted by the reduction tools).
struct InstanceDocument {
    int version = 1;
    std::string kind;
    std::variant<Market, BimatrixGame, EquilibriumCandidate, HierarchicalLabeling,
                 SeparablePLMSpec, MixedStrategyPair, VerificationReport>
        payload;
    RoleMap roles;

    const Market& market() const;
    const BimatrixGame& game() const;
    const EquilibriumCandidate& candidate() const;
    const HierarchicalLabeling& labeling() const;
    const SeparablePLMSpec& plm_spec() const;
    const MixedStrategyPair& strategies() const;
    const VerificationReport& report() const;
};

// Exact rational parsing ("p/q" strings or integer literals; floats are
// rejected). Syntax errors report line and column.
InstanceDocument parse_instance(const std::string& text);

// Canonical serialization: fixed field order, two-space indent, trailing
// newline. parse_instance(emit_instance(d)) reproduces d exactly.
std::string emit_instance(const InstanceDocument& doc);

InstanceDocument make_market_doc(const Market& market, const RoleMap& roles = {});
InstanceDocument make_game_doc(const BimatrixGame& game);
InstanceDocument make_candidate_doc(const EquilibriumCandidate& cand);
InstanceDocument make_labeling_doc(const HierarchicalLabeling& labeling);
InstanceDocument make_plm_doc(const SeparablePLMSpec& spec);
InstanceDocument make_strategies_doc(const MixedStrategyPair& pair);
InstanceDocument make_report_doc(const VerificationReport& report);

enum class ReportFormat { Text, Machine };

// Text: one human-readable line per condition plus the verdict. Machine:
// line-delimited tab-separated records, parseable by parse_report_machine.
std::string emit_report(const VerificationReport& report, ReportFormat format);
VerificationReport parse_report_machine(const std::string& text);

bool operator==(const InstanceDocument& a, const InstanceDocument& b);

}  // namespace imkt
