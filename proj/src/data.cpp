#include "vital/data.hpp"

#include <algorithm>
#include <cmath>

#include "vital/error.hpp"

namespace vital {

std::string to_string(TargetType t) { return t == TargetType::organ ? "organ" : "lesion"; }

TargetType target_type_from_string(const std::string& s) {
    if (s == "organ") return TargetType::organ;
    if (s == "lesion") return TargetType::lesion;
    throw DataError("unknown target type: " + s);
}

std::string to_string(QuestionType t) {
    switch (t) {
        case QuestionType::yesno: return "yesno";
        case QuestionType::identify: return "identify";
        case QuestionType::location_choice: return "location_choice";
        case QuestionType::location: return "location";
        case QuestionType::describe: return "describe";
        case QuestionType::reasoning: return "reasoning";
    }
    return "?";
}

QuestionType question_type_from_string(const std::string& s) {
    for (QuestionType t : kQuestionTypes)
        if (to_string(t) == s) return t;
    throw DataError("unknown question type: " + s);
}

const QuestionTemplate& question_template(QuestionType t) {
    static const std::vector<QuestionTemplate> table = {
        {QuestionType::yesno, 1, 1, "Is the {target} visible in this image?"},
        {QuestionType::identify, 1, 1, "What {kind} is shown in this image?"},
        {QuestionType::location_choice, 1, 1, "Is the {target} in the left, right, or center of the image?"},
        {QuestionType::location, 2, 2, "Where is the {target} located in this image?"},
        {QuestionType::describe, 2, 3, "Describe the appearance of the {target} in this image."},
        {QuestionType::reasoning, 3, 4, "Analyze the visual findings of the {target} in this image."},
    };
    return table[static_cast<std::size_t>(t)];
}

std::pair<int, int> k_range(QuestionType t) {
    const auto& q = question_template(t);
    return {q.k_min, q.k_max};
}

const std::vector<TargetKind>& target_catalogue() {
    static const std::vector<TargetKind> cat = {
        {"liver", TargetType::organ, 0.96, "very bright"},
        {"spleen", TargetType::organ, 0.72, "moderately bright"},
        {"kidney", TargetType::organ, 0.15, "dark"},
        {"heart", TargetType::organ, 0.60, "medium gray"},
        {"tumor", TargetType::lesion, 0.84, "bright"},
        {"cyst", TargetType::lesion, 0.05, "very dark"},
        {"nodule", TargetType::lesion, 0.27, "moderately dark"},
    };
    return cat;
}

const TargetKind& target_kind(const std::string& name) {
    for (const auto& k : target_catalogue())
        if (k.name == name) return k;
    throw DataError("unknown target: " + name);
}

std::string to_string(SizeClass s) {
    switch (s) {
        case SizeClass::small: return "small";
        case SizeClass::medium: return "medium";
        case SizeClass::large: return "large";
    }
    return "?";
}

namespace {

SizeClass size_from_string(const std::string& s) {
    if (s == "small") return SizeClass::small;
    if (s == "medium") return SizeClass::medium;
    if (s == "large") return SizeClass::large;
    throw DataError("unknown size class: " + s);
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
        s.replace(pos, from.size(), to);
    return s;
}

int third_of(double centre, std::size_t g) {
    const int t = static_cast<int>(std::floor(centre * 3.0 / static_cast<double>(g)));
    return std::clamp(t, 0, 2);
}

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

}  // namespace

std::string vertical_word(int v) {
    static const char* w[] = {"upper", "middle", "lower"};
    if (v < 0 || v > 2) throw DataError("vertical index out of range");
    return w[v];
}

std::string horizontal_word(int h) {
    static const char* w[] = {"left", "center", "right"};
    if (h < 0 || h > 2) throw DataError("horizontal index out of range");
    return w[h];
}

std::string region_phrase(int vert, int horiz) {
    if (vert == 1 && horiz == 1) return "center";
    return vertical_word(vert) + " " + horizontal_word(horiz);
}

void to_json(nlohmann::json& j, const TargetMeta& m) {
    j = {{"name", m.name},
         {"type", to_string(m.type)},
         {"tone", m.tone},
         {"size", to_string(m.size)},
         {"sharp", m.sharp},
         {"box", {m.box.row0, m.box.col0, m.box.height, m.box.width}},
         {"vert", m.vert},
         {"horiz", m.horiz}};
}

void from_json(const nlohmann::json& j, TargetMeta& m) {
    m.name = j.at("name").get<std::string>();
    m.type = target_type_from_string(j.at("type").get<std::string>());
    m.tone = j.at("tone").get<std::string>();
    m.size = size_from_string(j.at("size").get<std::string>());
    m.sharp = j.at("sharp").get<bool>();
    const auto& b = j.at("box");
    m.box = Box{b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()};
    m.vert = j.at("vert").get<int>();
    m.horiz = j.at("horiz").get<int>();
}

SyntheticSample generate_sample(const SyntheticConfig& cfg, Rng& rng) {
    const std::size_t g = cfg.image_size;
    if (g < 12) throw ConfigError("synthetic images need at least 12 pixels per side");
    const auto& cat = target_catalogue();
    const TargetKind& kind = cat[rng.below(cat.size())];

    SyntheticSample s;
    s.meta.name = kind.name;
    s.meta.type = kind.type;
    s.meta.tone = kind.tone;
    s.meta.size = static_cast<SizeClass>(rng.below(3));
    s.meta.sharp = rng.bernoulli(0.5);

    const auto side_range = s.meta.size == SizeClass::small    ? cfg.small_side
                            : s.meta.size == SizeClass::medium ? cfg.medium_side
                                                               : cfg.large_side;
    const int max_side = static_cast<int>(g);
    const int h = std::min(rng.range(side_range.first, side_range.second), max_side);
    const int w = std::min(rng.range(side_range.first, side_range.second), max_side);
    const int cell_r = static_cast<int>(rng.below(3));
    const int cell_c = static_cast<int>(rng.below(3));
    const double third = static_cast<double>(g) / 3.0;
    const double cr = (cell_r + 0.5) * third + rng.uniform(-third / 4.0, third / 4.0);
    const double cc = (cell_c + 0.5) * third + rng.uniform(-third / 4.0, third / 4.0);
    const int row0 = std::clamp(static_cast<int>(std::lround(cr - h / 2.0)), 0, max_side - h);
    const int col0 = std::clamp(static_cast<int>(std::lround(cc - w / 2.0)), 0, max_side - w);
    s.meta.box = Box{row0, col0, h, w};
    s.meta.vert = third_of(row0 + h / 2.0, g);
    s.meta.horiz = third_of(col0 + w / 2.0, g);

    s.image = ToyImage(g);
    s.mask = Mask(g);
    for (std::size_t r = 0; r < g; ++r) {
        for (std::size_t c = 0; c < g; ++c) {
            double v = rng.normal(cfg.background, cfg.background_noise);
            const int ri = static_cast<int>(r), ci = static_cast<int>(c);
            if (ri >= row0 && ri < row0 + h && ci >= col0 && ci < col0 + w) {
                s.mask.set(r, c, true);
                double weight = 1.0;
                if (!s.meta.sharp) {
                    const int depth = std::min({ri - row0, row0 + h - 1 - ri, ci - col0, col0 + w - 1 - ci});
                    weight = std::min(1.0, (depth + 1) / 3.0);
                }
                v += weight * (kind.intensity - cfg.background) + rng.normal(0.0, cfg.target_noise);
            }
            s.image.at(r, c) = quantize(v);
        }
    }
    s.image.target = s.meta.box;
    return s;
}

std::vector<double> default_type_weights() {
    // K=1: 0.375 over three types; K=2: location 0.30 + half of describe;
    // K=3/4: the other half of describe and all of reasoning.
    return {0.125, 0.125, 0.125, 0.30, 0.15, 0.175};
}

GeneratedQuestion generate_question(const TargetMeta& meta, Rng& rng, const std::vector<double>& type_weights) {
    if (meta.name.empty()) throw DataError("target metadata is incomplete");
    const TargetKind& kind = target_kind(meta.name);
    if (kind.type != meta.type) throw DataError("target type disagrees with the catalogue for " + meta.name);
    if (type_weights.size() != kQuestionTypes.size()) throw ConfigError("need one weight per question type");
    double total = 0.0;
    for (double w : type_weights) {
        if (!(w >= 0.0)) throw ConfigError("question-type weights must be nonnegative");
        total += w;
    }
    if (total <= 0.0) throw ConfigError("question-type weights sum to zero");

    double u = rng.uniform() * total;
    std::size_t pick = kQuestionTypes.size() - 1;
    for (std::size_t i = 0; i < type_weights.size(); ++i) {
        if (u < type_weights[i]) {
            pick = i;
            break;
        }
        u -= type_weights[i];
    }

    GeneratedQuestion q;
    q.type = kQuestionTypes[pick];
    const auto& tpl = question_template(q.type);
    q.K = rng.range(tpl.k_min, tpl.k_max);
    q.asked_target = meta.name;
    if (q.type == QuestionType::yesno && rng.bernoulli(0.5)) {
        std::vector<std::string> others;
        for (const auto& k : target_catalogue())
            if (k.name != meta.name && k.type == meta.type) others.push_back(k.name);
        q.asked_target = others[rng.below(others.size())];
    }
    q.text = replace_all(tpl.pattern, "{target}", q.asked_target);
    q.text = replace_all(q.text, "{kind}", meta.type == TargetType::organ ? "organ" : "finding");
    return q;
}

RgbImage render_overlay(const ToyImage& image, const Mask& mask) {
    if (mask.size != image.size) throw ShapeError("mask does not match the image");
    const std::size_t g = image.size;
    RgbImage out;
    out.size = g;
    out.rgb.resize(g * g * 3);
    for (std::size_t r = 0; r < g; ++r) {
        for (std::size_t c = 0; c < g; ++c) {
            const double base = image.at(r, c);
            double rgb[3] = {base, base, base};
            if (mask.at(r, c)) {
                const bool boundary = r == 0 || c == 0 || r + 1 == g || c + 1 == g || !mask.at(r - 1, c) ||
                                      !mask.at(r + 1, c) || !mask.at(r, c - 1) || !mask.at(r, c + 1);
                if (boundary) {
                    rgb[0] = 1.0;
                    rgb[1] = 1.0;
                    rgb[2] = 0.0;
                } else {
                    rgb[0] = 0.6 * base + 0.4;
                    rgb[1] = 0.6 * base;
                    rgb[2] = 0.6 * base;
                }
            }
            for (std::size_t ch = 0; ch < 3; ++ch) out.at(r, c, ch) = rgb[ch];
        }
    }
    return out;
}

}  // namespace vital
