#pragma once

#include <array>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vital/data.hpp"

namespace vital {

struct GateConfig {
    // Annotation-leakage terms. The default list is a stand-in seeded from
    // the published examples; it is not a canonical enumeration.
    std::vector<std::string> leak_terms;
    // Applied to organ samples only.
    std::vector<std::string> pathology_terms;
    // Patient-space spatial wording; only image-space wording is allowed.
    std::vector<std::string> location_terms;

    static GateConfig defaults();
};

void to_json(nlohmann::json& j, const GateConfig& c);
void from_json(const nlohmann::json& j, GateConfig& c);

// Case-insensitive whole-word (or whole-phrase) search. Words are maximal
// alphanumeric runs, so "patient's right" and "patient-right" split the same
// way; the last word of a term also matches its plural in "s"/"es".
// Returns the first matching term or an empty string.
std::string find_term(const std::string& text, const std::vector<std::string>& terms);

inline constexpr int kGateRounds = 6;

struct QualityReport {
    std::array<bool, kGateRounds> rounds{};  // evaluated and passed
    int failed_round = 0;                     // 1..6, 0 when accepted
    std::string detail;
    int retries = 0;
    std::vector<std::string> transformations;  // round 6
    std::string answer;                        // normalized when accepted
    std::vector<std::string> chain;

    bool passed() const noexcept { return failed_round == 0; }
};

void to_json(nlohmann::json& j, const QualityReport& r);

struct GateContext {
    QuestionType type = QuestionType::yesno;
    TargetType target_type = TargetType::organ;
    std::string target_name;
};

// Rounds in order, stopping at the first failure:
// (1) schema, (2) leakage terms, (3) pathology terms on organ samples,
// (4) patient-space wording, (5) chain length within the type's range,
// (6) answer normalization (always passes, records what it changed).
QualityReport quality_gate(const std::string& raw, const GateContext& ctx, const GateConfig& cfg);

// Identify answers under four words become "The main organ shown is the X."
// (or "...finding..." for lesions); short location answers gain image-space
// phrasing; every answer ends with a period.
std::string normalize_answer(const std::string& answer, QuestionType type, TargetType target_type = TargetType::organ,
                             std::vector<std::string>* applied = nullptr);

}  // namespace vital
