#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vital/image.hpp"
#include "vital/rng.hpp"

namespace vital {

enum class TargetType { organ, lesion };
std::string to_string(TargetType t);
TargetType target_type_from_string(const std::string& s);

enum class QuestionType { yesno, identify, location_choice, location, describe, reasoning };
inline constexpr std::array<QuestionType, 6> kQuestionTypes = {
    QuestionType::yesno,    QuestionType::identify, QuestionType::location_choice,
    QuestionType::location, QuestionType::describe, QuestionType::reasoning};
std::string to_string(QuestionType t);
QuestionType question_type_from_string(const std::string& s);

struct QuestionTemplate {
    QuestionType type;
    int k_min;
    int k_max;
    std::string pattern;  // "{target}" is the only slot
};

const QuestionTemplate& question_template(QuestionType t);
// Chain length range bound to each question type.
std::pair<int, int> k_range(QuestionType t);

// Catalogue entry for a synthetic target: a rectangle of fixed mean intensity.
struct TargetKind {
    std::string name;
    TargetType type;
    double intensity;
    std::string tone;  // how the teacher describes the intensity
};
const std::vector<TargetKind>& target_catalogue();
const TargetKind& target_kind(const std::string& name);

enum class SizeClass { small, medium, large };
std::string to_string(SizeClass s);

struct TargetMeta {
    std::string name;
    TargetType type = TargetType::organ;
    std::string tone;
    SizeClass size = SizeClass::medium;
    bool sharp = true;
    Box box;
    int vert = 1;   // 0 upper, 1 middle, 2 lower: row third holding the box centre
    int horiz = 1;  // 0 left, 1 center, 2 right
};

std::string vertical_word(int v);
std::string horizontal_word(int h);
// "upper left", "center", "lower center", ...
std::string region_phrase(int vert, int horiz);

void to_json(nlohmann::json& j, const TargetMeta& m);
void from_json(const nlohmann::json& j, TargetMeta& m);

struct SyntheticConfig {
    std::size_t image_size = 32;
    double background = 0.42;
    double background_noise = 0.04;
    double target_noise = 0.03;
    std::pair<int, int> small_side{4, 6};
    std::pair<int, int> medium_side{8, 12};
    std::pair<int, int> large_side{15, 20};
};

struct SyntheticSample {
    ToyImage image;
    Mask mask;
    TargetMeta meta;
};

// One rectangular target on a noisy background, values quantized to k/255.
SyntheticSample generate_sample(const SyntheticConfig& cfg, Rng& rng);

struct GeneratedQuestion {
    std::string text;
    QuestionType type = QuestionType::yesno;
    int K = 1;
    std::string asked_target;  // named in the question; negatives come from the same target type
};

// Weights over kQuestionTypes. The default reproduces the reported depth mix
// (≈37.5% K=1, ≈38% K=2, rest K≥3).
std::vector<double> default_type_weights();

GeneratedQuestion generate_question(const TargetMeta& meta, Rng& rng,
                                    const std::vector<double>& type_weights = default_type_weights());

// Teacher-only view: interior 0.6·base + 0.4·red, boundary cells yellow.
RgbImage render_overlay(const ToyImage& image, const Mask& mask);

}  // namespace vital
