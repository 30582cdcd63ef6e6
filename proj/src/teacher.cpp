#include "vital/teacher.hpp"

#include <cmath>
#include <sstream>

#include <httplib.h>

#include "vital/gate.hpp"
#include "vital/rng.hpp"

namespace vital {

std::string to_string(FaultKind k) {
    switch (k) {
        case FaultKind::malformed: return "malformed";
        case FaultKind::leak: return "leak";
        case FaultKind::pathology: return "pathology";
        case FaultKind::location_mix: return "location_mix";
        case FaultKind::step_count: return "step_count";
        case FaultKind::transport: return "transport";
    }
    return "?";
}

FaultKind fault_kind_from_string(const std::string& s) {
    for (FaultKind k : {FaultKind::malformed, FaultKind::leak, FaultKind::pathology, FaultKind::location_mix,
                        FaultKind::step_count, FaultKind::transport})
        if (to_string(k) == s) return k;
    throw ConfigError("unknown fault kind: " + s);
}

int designated_round(FaultKind k) {
    switch (k) {
        case FaultKind::malformed: return 1;
        case FaultKind::leak: return 2;
        case FaultKind::pathology: return 3;
        case FaultKind::location_mix: return 4;
        case FaultKind::step_count: return 5;
        case FaultKind::transport: return 0;
    }
    return 0;
}

std::vector<FaultSpec> parse_fault_specs(const std::string& spec) {
    std::vector<FaultSpec> out;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw ConfigError("fault spec needs kind:N[@p], got " + item);
        FaultSpec f;
        f.kind = fault_kind_from_string(item.substr(0, colon));
        const std::string rest = item.substr(colon + 1);
        const auto at = rest.find('@');
        try {
            std::size_t used = 0;
            const std::string shots = rest.substr(0, at);
            f.shots = std::stoi(shots, &used);
            if (used != shots.size()) throw std::invalid_argument(shots);
            if (at != std::string::npos) {
                const std::string p = rest.substr(at + 1);
                f.probability = std::stod(p, &used);
                if (used != p.size()) throw std::invalid_argument(p);
            }
        } catch (const std::logic_error&) {
            throw ConfigError("malformed fault spec: " + item);
        }
        if (f.shots < 0 || !(f.probability >= 0.0 && f.probability <= 1.0))
            throw ConfigError("fault spec out of range: " + item);
        out.push_back(f);
    }
    return out;
}

namespace {

std::string location_text(int vert, int horiz) {
    if (vert == 1 && horiz == 1) return "center of the image";
    return region_phrase(vert, horiz) + " part of the image";
}

std::string boundary_word(bool sharp) { return sharp ? "sharp" : "smooth"; }

}  // namespace

TeacherOutput reference_output(const TargetMeta& m, const GeneratedQuestion& q) {
    const std::string loc = location_text(m.vert, m.horiz);
    const std::string size = to_string(m.size);
    const std::string edge = boundary_word(m.sharp);
    const std::string shape = "it is " + size + " in size with a " + edge + " boundary.";
    TeacherOutput out;
    switch (q.type) {
        case QuestionType::yesno:
            if (q.asked_target == m.name) {
                out.chain = {"a " + m.tone + " region consistent with the " + m.name + " is seen in the " + loc + "."};
                out.final_answer = "Yes, the " + m.name + " is visible.";
            } else {
                out.chain = {"the only region is " + m.tone + ", consistent with the " + m.name + ", not the " +
                             q.asked_target + "."};
                out.final_answer = "No, the " + q.asked_target + " is not visible.";
            }
            break;
        case QuestionType::identify:
            out.chain = {"a " + m.tone + " " + size + " region in the " + loc + " is consistent with the " + m.name +
                         "."};
            out.final_answer = m.name;
            break;
        case QuestionType::location_choice:
            if (m.horiz == 1) {
                out.chain = {"the " + m.tone + " region consistent with the " + m.name +
                             " lies in the center of the image."};
                out.final_answer = "The " + m.name + " is in the center of the image.";
            } else {
                const std::string side = horizontal_word(m.horiz);
                out.chain = {"the " + m.tone + " region consistent with the " + m.name + " lies on the " + side +
                             " side of the image."};
                out.final_answer = "The " + m.name + " is on the " + side + " side of the image.";
            }
            break;
        case QuestionType::location:
            out.chain = {"a " + m.tone + " region consistent with the " + m.name + " is seen.",
                         "it lies in the " + loc + "."};
            out.final_answer = "The " + m.name + " is located in the " + loc + ".";
            break;
        case QuestionType::describe:
            out.chain = {"the " + m.name + " appears as a " + m.tone + " region.", shape};
            if (q.K >= 3) out.chain.push_back("it lies in the " + loc + ".");
            out.final_answer = "The " + m.name + " appears as a " + size + " " + m.tone + " region with a " + edge +
                               " boundary.";
            break;
        case QuestionType::reasoning:
            out.chain = {"a " + m.tone + " region lies in the " + loc + "."};
            if (q.K >= 4)
                out.chain.push_back("the region has a " + m.tone + " intensity compared with the surrounding tissue.");
            out.chain.push_back(shape);
            out.chain.push_back("these findings together are consistent with the " + m.name + ".");
            out.final_answer = "The " + m.name + " is a " + size + " " + m.tone + " region in the " + loc + ".";
            break;
    }
    return out;
}

nlohmann::json request_to_json(const TeacherRequest& req) {
    const auto [kmin, kmax] = k_range(req.question.type);
    return {{"sample_id", req.sample_id},
            {"target_name", req.meta.name},
            {"target_type", to_string(req.meta.type)},
            {"target", req.meta},
            {"question", req.question.text},
            {"question_type", to_string(req.question.type)},
            {"asked_target", req.question.asked_target},
            {"latent_steps", req.question.K},
            {"min_steps", kmin},
            {"max_steps", kmax},
            {"attempt", req.attempt},
            {"strict_rules", req.strict_rules},
            {"violations", req.violations},
            {"overlay_ppm_base64", base64_encode(encode_ppm(req.overlay))}};
}

MockTeacher::MockTeacher(std::vector<FaultSpec> faults, std::uint64_t seed) : faults_(std::move(faults)), seed_(seed) {}

std::vector<FaultKind> MockTeacher::active_faults(std::uint64_t sample_id, int attempt, TargetType target_type) const {
    std::vector<FaultKind> out;
    for (std::size_t i = 0; i < faults_.size(); ++i) {
        const auto& f = faults_[i];
        if (attempt >= f.shots) continue;
        if (f.kind == FaultKind::pathology && target_type != TargetType::organ) continue;
        Rng pick(derive_seed(seed_, 0xFA17 + i, sample_id));
        if (pick.uniform() < f.probability) out.push_back(f.kind);
    }
    return out;
}

std::string MockTeacher::generate(const TeacherRequest& req) {
    TeacherOutput out = reference_output(req.meta, req.question);
    const auto active = active_faults(req.sample_id, req.attempt, req.meta.type);
    Rng rng(derive_seed(seed_, 0x7EAC, req.sample_id * 16 + static_cast<std::uint64_t>(req.attempt)));
    const GateConfig terms = GateConfig::defaults();
    auto append_to_step = [&](const std::string& phrase) {
        std::string& s = out.chain[rng.below(out.chain.size())];
        if (!s.empty() && s.back() == '.') s.pop_back();
        s += " " + phrase + ".";
    };

    bool malformed = false;
    for (FaultKind k : active) {
        switch (k) {
            case FaultKind::transport: throw TransportError("injected transport failure");
            case FaultKind::malformed: malformed = true; break;
            case FaultKind::leak:
                append_to_step("near the " + terms.leak_terms[rng.below(terms.leak_terms.size())]);
                break;
            case FaultKind::pathology:
                append_to_step("with a small " + terms.pathology_terms[rng.below(terms.pathology_terms.size())]);
                break;
            case FaultKind::location_mix:
                append_to_step("on the " + terms.location_terms[rng.below(terms.location_terms.size())]);
                break;
            case FaultKind::step_count: {
                const auto [kmin, kmax] = k_range(req.question.type);
                if (kmin > 1 && rng.bernoulli(0.5)) {
                    out.chain.resize(static_cast<std::size_t>(kmin - 1));
                } else {
                    while (static_cast<int>(out.chain.size()) <= kmax) out.chain.push_back(out.chain.back());
                }
                break;
            }
        }
    }

    nlohmann::json j = {{"final_answer", out.final_answer}, {"reasoning_chain", out.chain}};
    std::string text = j.dump();
    if (malformed) {
        switch (rng.below(4)) {
            case 0: text = "```json\n" + text + "\n```"; break;
            case 1: text = text.substr(0, text.size() - 3); break;
            case 2:
                j["confidence"] = "high";
                text = j.dump();
                break;
            default:
                j["reasoning_chain"] = "step one";
                text = j.dump();
                break;
        }
    }
    return text;
}

HttpTeacher::HttpTeacher(std::string host, int port, std::string path, double timeout_s)
    : host_(std::move(host)), port_(port), path_(std::move(path)), timeout_s_(timeout_s) {}

std::string HttpTeacher::generate(const TeacherRequest& req) {
    httplib::Client cli(host_, port_);
    const auto secs = static_cast<time_t>(timeout_s_);
    const auto usecs = static_cast<time_t>((timeout_s_ - std::floor(timeout_s_)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    auto res = cli.Post(path_, request_to_json(req).dump(), "application/json");
    if (!res) throw TransportError("no response from " + host_ + ":" + std::to_string(port_) + " (" +
                                   httplib::to_string(res.error()) + ")");
    if (res->status != 200) throw TransportError("HTTP status " + std::to_string(res->status));
    return res->body;
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    static const char* table = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    for (std::size_t i = 0; i < bytes.size(); i += 3) {
        std::uint32_t v = static_cast<std::uint32_t>(bytes[i]) << 16;
        if (i + 1 < bytes.size()) v |= static_cast<std::uint32_t>(bytes[i + 1]) << 8;
        if (i + 2 < bytes.size()) v |= bytes[i + 2];
        out.push_back(table[(v >> 18) & 63]);
        out.push_back(table[(v >> 12) & 63]);
        out.push_back(i + 1 < bytes.size() ? table[(v >> 6) & 63] : '=');
        out.push_back(i + 2 < bytes.size() ? table[v & 63] : '=');
    }
    return out;
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& img) {
    const std::string header = "P6\n" + std::to_string(img.size) + " " + std::to_string(img.size) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    for (double v : img.rgb) out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    return out;
}

}  // namespace vital
