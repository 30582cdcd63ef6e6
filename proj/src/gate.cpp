#include "vital/gate.hpp"

#include <algorithm>
#include <cctype>

#include "vital/error.hpp"

namespace vital {

GateConfig GateConfig::defaults() {
    GateConfig c;
    c.leak_terms = {"mask",       "masked",   "overlay",    "overlaid", "annotation",  "annotated",
                    "roi",        "region of interest",     "ground truth",            "segmentation",
                    "segmented",  "highlighted",            "highlight", "label",      "labeled",
                    "labelled",   "marker",   "marked",     "marking",  "contour",     "outlined",
                    "bounding box", "red",    "yellow",     "colored",  "shaded",      "tinted",
                    "hint",       "hidden",   "teacher"};
    c.pathology_terms = {"lesion",     "mass",       "tumor",     "calcification", "inflammation",
                         "nodule",     "cyst",       "abnormal",  "abnormality",   "malignant",
                         "benign",     "metastasis", "hemorrhage", "fracture",     "edema"};
    c.location_terms = {"patient's left",     "patient's right",     "patient left",      "patient right",
                        "anatomical left",    "anatomical right",    "radiological left", "radiological right"};
    return c;
}

void to_json(nlohmann::json& j, const GateConfig& c) {
    j = {{"leak_terms", c.leak_terms}, {"pathology_terms", c.pathology_terms}, {"location_terms", c.location_terms}};
}

void from_json(const nlohmann::json& j, GateConfig& c) {
    c = GateConfig::defaults();
    if (j.contains("leak_terms")) c.leak_terms = j.at("leak_terms").get<std::vector<std::string>>();
    if (j.contains("pathology_terms")) c.pathology_terms = j.at("pathology_terms").get<std::vector<std::string>>();
    if (j.contains("location_terms")) c.location_terms = j.at("location_terms").get<std::vector<std::string>>();
}

namespace {

std::vector<std::string> words_of(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const auto u = static_cast<unsigned char>(ch);
        if (std::isalnum(u)) {
            cur.push_back(static_cast<char>(std::tolower(u)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

bool word_matches(const std::string& word, const std::string& term_word, bool allow_plural) {
    if (word == term_word) return true;
    if (!allow_plural) return false;
    return word == term_word + "s" || word == term_word + "es";
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::size_t word_count(const std::string& s) { return words_of(s).size(); }

bool contains_word(const std::string& s, const std::string& w) {
    for (const auto& x : words_of(s))
        if (x == w) return true;
    return false;
}

}  // namespace

std::string find_term(const std::string& text, const std::vector<std::string>& terms) {
    const auto words = words_of(text);
    for (const auto& term : terms) {
        const auto tw = words_of(term);
        if (tw.empty() || tw.size() > words.size()) continue;
        for (std::size_t i = 0; i + tw.size() <= words.size(); ++i) {
            bool ok = true;
            for (std::size_t k = 0; k < tw.size() && ok; ++k)
                ok = word_matches(words[i + k], tw[k], k + 1 == tw.size());
            if (ok) return term;
        }
    }
    return "";
}

void to_json(nlohmann::json& j, const QualityReport& r) {
    j = {{"rounds", r.rounds},   {"failed_round", r.failed_round}, {"detail", r.detail},
         {"retries", r.retries}, {"transformations", r.transformations}};
}

std::string normalize_answer(const std::string& answer, QuestionType type, TargetType target_type,
                             std::vector<std::string>* applied) {
    std::string a = trim(answer);
    if (a.empty() || word_count(a) == 0) throw DataError("empty answer cannot be normalized");
    auto note = [&](const std::string& what) {
        if (applied) applied->push_back(what);
    };
    if (a != answer) note("trimmed whitespace");

    if (type == QuestionType::identify && word_count(a) < 4) {
        std::string bare = a;
        while (!bare.empty() && (bare.back() == '.' || bare.back() == '!' || bare.back() == '?')) bare.pop_back();
        for (const std::string art : {"the ", "a ", "an "}) {
            std::string head = bare.substr(0, std::min(art.size(), bare.size()));
            for (char& ch : head) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
            if (bare.size() > art.size() && head == art) {
                bare = bare.substr(art.size());
                break;
            }
        }
        bare = trim(bare);
        const std::string noun = target_type == TargetType::organ ? "organ" : "finding";
        a = "The main " + noun + " shown is the " + bare + ".";
        note("expanded identify answer");
    } else if ((type == QuestionType::location || type == QuestionType::location_choice) &&
               !contains_word(a, "image")) {
        while (!a.empty() && (a.back() == '.' || a.back() == '!')) a.pop_back();
        a = trim(a) + " of the image";
        note("added image-space phrasing");
    }

    if (a.back() != '.') {
        if (a.back() == '!' || a.back() == ';' || a.back() == ',') a.pop_back();
        a.push_back('.');
        note("terminal period");
    }
    return a;
}

QualityReport quality_gate(const std::string& raw, const GateContext& ctx, const GateConfig& cfg) {
    QualityReport rep;
    auto fail = [&](int round, std::string detail) {
        rep.failed_round = round;
        rep.detail = std::move(detail);
        return rep;
    };

    // Round 1: strict JSON, exactly two fields of the right types.
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::parse_error& e) {
        return fail(1, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) return fail(1, "output is not a JSON object");
    if (j.size() != 2 || !j.contains("final_answer") || !j.contains("reasoning_chain"))
        return fail(1, "expected exactly the fields final_answer and reasoning_chain");
    if (!j["final_answer"].is_string()) return fail(1, "final_answer is not a string");
    if (!j["reasoning_chain"].is_array()) return fail(1, "reasoning_chain is not a list");
    for (const auto& s : j["reasoning_chain"])
        if (!s.is_string()) return fail(1, "reasoning_chain holds a non-string entry");
    rep.answer = j["final_answer"].get<std::string>();
    rep.chain = j["reasoning_chain"].get<std::vector<std::string>>();
    rep.rounds[0] = true;

    std::vector<const std::string*> texts{&rep.answer};
    for (const auto& s : rep.chain) texts.push_back(&s);
    auto scan = [&](const std::vector<std::string>& terms) -> std::string {
        for (const auto* t : texts) {
            auto hit = find_term(*t, terms);
            if (!hit.empty()) return hit;
        }
        return "";
    };

    if (auto hit = scan(cfg.leak_terms); !hit.empty()) return fail(2, "annotation-leakage term: " + hit);
    rep.rounds[1] = true;

    if (ctx.target_type == TargetType::organ) {
        if (auto hit = scan(cfg.pathology_terms); !hit.empty())
            return fail(3, "pathology term on an organ sample: " + hit);
    }
    rep.rounds[2] = true;

    if (auto hit = scan(cfg.location_terms); !hit.empty()) return fail(4, "patient-space wording: " + hit);
    rep.rounds[3] = true;

    const auto [kmin, kmax] = k_range(ctx.type);
    const int n = static_cast<int>(rep.chain.size());
    if (n < kmin || n > kmax)
        return fail(5, "chain has " + std::to_string(n) + " steps, expected " + std::to_string(kmin) + ".." +
                           std::to_string(kmax));
    rep.rounds[4] = true;

    try {
        rep.answer = normalize_answer(rep.answer, ctx.type, ctx.target_type, &rep.transformations);
    } catch (const DataError& e) {
        return fail(6, e.what());
    }
    rep.rounds[5] = true;
    return rep;
}

}  // namespace vital
