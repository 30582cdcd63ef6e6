#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vital/data.hpp"
#include "vital/gate.hpp"
#include "vital/roi.hpp"
#include "vital/scaffolding.hpp"
#include "vital/teacher.hpp"

namespace vital {

// (image, question, answer, K-step chain, ROI feature) plus metadata.
struct FiveTuple {
    std::string id;
    ToyImage image;  // student view, never the overlay
    Mask mask;
    std::string question;
    std::string answer;
    std::vector<std::string> chain_text;
    std::vector<int> question_tokens;
    std::vector<int> answer_tokens;  // without the end token
    ReasoningChain chain;
    ROIFeatureRecord roi;
    QuestionType type = QuestionType::yesno;
    TargetMeta meta;
    std::string asked_target;
    int K = 0;
    int retries = 0;
    std::string split = "train";

    bool closed_ended() const {
        return type == QuestionType::yesno || type == QuestionType::identify || type == QuestionType::location_choice;
    }
};

// Tokenizes the text fields of `t` with the standard vocabulary.
void tokenize(FiveTuple& t);

struct DatasetConfig {
    std::size_t n = 100;
    std::uint64_t seed = 7;
    SyntheticConfig synthetic;
    std::vector<double> type_weights = default_type_weights();
    GateConfig gate = GateConfig::defaults();
    RoiOptions roi;
    std::size_t encoder_grid = 8;
    std::size_t encoder_dim = 16;
    std::uint64_t encoder_seed = 0xE5C0DE;
    int max_retries = 4;  // attempts = 1 + max_retries
    double test_fraction = 0.2;
};

void to_json(nlohmann::json& j, const DatasetConfig& c);
void from_json(const nlohmann::json& j, DatasetConfig& c);

struct DatasetStats {
    std::size_t requested = 0;
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t total_retries = 0;
    std::size_t max_retries_used = 0;
    std::size_t transport_failures = 0;
    std::array<std::size_t, kGateRounds + 1> round_failures{};  // index = failing round
    std::map<int, std::size_t> per_K;
    std::map<std::string, std::size_t> per_type;
    std::map<std::string, std::size_t> per_target;
    std::map<std::string, std::size_t> per_split;
};

void to_json(nlohmann::json& j, const DatasetStats& s);

struct RejectedSample {
    std::string id;
    int attempts = 0;
    std::string reason;
};

struct BuildResult {
    std::vector<FiveTuple> accepted;  // ordered by sample id
    std::vector<RejectedSample> rejected;
    std::vector<nlohmann::json> transcripts;  // one line per teacher attempt
    DatasetStats stats;
};

std::string sample_id(std::size_t index);

// generate → question → overlay → teacher → gate (with retries) → normalize → ROI.
BuildResult build_samples(const DatasetConfig& cfg, Teacher& teacher);

// Layout under `dir`: manifest.jsonl, images/*.pgm, masks/*.pgm, roi/*.roi,
// transcripts.jsonl, rejected.jsonl, stats.json, dataset_config.json.
void write_dataset(const std::filesystem::path& dir, const BuildResult& result, const DatasetConfig& cfg);
DatasetStats build_dataset(const std::filesystem::path& dir, const DatasetConfig& cfg, Teacher& teacher);

std::vector<FiveTuple> load_dataset(const std::filesystem::path& dir);

std::vector<FiveTuple> select_split(const std::vector<FiveTuple>& data, const std::string& split);

}  // namespace vital
