#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vital/data.hpp"
#include "vital/error.hpp"

namespace vital {

// Teacher unreachable or answered with a transport-level failure; the caller
// may retry.
struct TransportError : Error {
    explicit TransportError(const std::string& w) : Error(ErrorClass::data, "teacher transport: " + w) {}
};

struct TeacherRequest {
    std::uint64_t sample_id = 0;
    TargetMeta meta;
    GeneratedQuestion question;
    RgbImage overlay;  // teacher-only view
    int attempt = 0;   // 0 = first submission
    bool strict_rules = false;
    std::vector<std::string> violations;  // reports from earlier attempts
};

nlohmann::json request_to_json(const TeacherRequest& req);

class Teacher {
public:
    virtual ~Teacher() = default;
    // Raw text expected to hold {"final_answer": ..., "reasoning_chain": [...]}.
    virtual std::string generate(const TeacherRequest& req) = 0;
    virtual std::string name() const = 0;
};

enum class FaultKind { malformed, leak, pathology, location_mix, step_count, transport };
std::string to_string(FaultKind k);
FaultKind fault_kind_from_string(const std::string& s);
// Gate round designed to catch each kind (0 for transport).
int designated_round(FaultKind k);

// "kind:N[@p]": the first N attempts of an affected sample carry the fault;
// each sample is affected with probability p (default 1).
struct FaultSpec {
    FaultKind kind = FaultKind::leak;
    int shots = 1;
    double probability = 1.0;
};

// Comma-separated list of specs; empty string gives no faults.
std::vector<FaultSpec> parse_fault_specs(const std::string& spec);

// Reference chain and answer for a sample, as a compliant teacher would write
// them from the student's point of view.
struct TeacherOutput {
    std::string final_answer;
    std::vector<std::string> chain;
};
TeacherOutput reference_output(const TargetMeta& meta, const GeneratedQuestion& q);

// Rule-based teacher: reads the target metadata and writes K templated steps.
// Pathology faults are only injected on organ samples, where the gate checks
// for them.
class MockTeacher : public Teacher {
public:
    explicit MockTeacher(std::vector<FaultSpec> faults = {}, std::uint64_t seed = 0);

    std::string generate(const TeacherRequest& req) override;
    std::string name() const override { return "mock"; }

    // Faults that will fire for this sample on this attempt.
    std::vector<FaultKind> active_faults(std::uint64_t sample_id, int attempt, TargetType target_type) const;

private:
    std::vector<FaultSpec> faults_;
    std::uint64_t seed_;
};

// POSTs request_to_json(req) to http://host:port/path; the response body is the
// raw teacher output.
class HttpTeacher : public Teacher {
public:
    HttpTeacher(std::string host, int port, std::string path = "/generate", double timeout_s = 30.0);

    std::string generate(const TeacherRequest& req) override;
    std::string name() const override { return "http"; }

private:
    std::string host_;
    int port_;
    std::string path_;
    double timeout_s_;
};

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_ppm(const RgbImage& img);

}  // namespace vital
