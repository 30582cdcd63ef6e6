#include "vital/vocab.hpp"

#include <cctype>

#include "vital/error.hpp"

namespace vital {

namespace {

bool is_punct(char c) { return c == '.' || c == ',' || c == '?' || c == ';' || c == ':' || c == '!'; }

}  // namespace

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
    };
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            flush();
        } else if (is_punct(ch)) {
            flush();
            out.emplace_back(1, ch);
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    flush();
    return out;
}

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
    if (words_.size() < 4 || words_[kPad] != "<pad>" || words_[kUnk] != "<unk>" || words_[kBos] != "<bos>" ||
        words_[kEos] != "<eos>")
        throw ConfigError("vocabulary must start with <pad> <unk> <bos> <eos>");
    if (words_.size() > 256) throw ConfigError("vocabulary limited to 256 symbols");
    for (std::size_t i = 0; i < words_.size(); ++i) {
        if (!index_.emplace(words_[i], static_cast<int>(i)).second)
            throw ConfigError("duplicate vocabulary word: " + words_[i]);
    }
}

const Vocabulary& Vocabulary::standard() {
    static const Vocabulary v({
        "<pad>", "<unk>", "<bos>", "<eos>", ".", ",", "?",
        // function words
        "a", "an", "the", "is", "in", "of", "this", "image", "it", "its", "with", "on", "as", "and", "or",
        "to", "not", "be", "are", "these", "together", "against", "compared",
        // question words
        "what", "where", "which", "describe", "analyze", "visible", "shown", "located", "appearance",
        "visual", "findings", "organ", "finding", "main", "seen", "appears", "lies", "identify",
        // answers
        "yes", "no",
        // spatial
        "left", "right", "center", "upper", "lower", "middle", "part", "side", "area",
        // appearance
        "bright", "dark", "small", "medium", "large", "region", "structure", "intensity", "pattern",
        "consistent", "surrounding", "tissue", "boundary", "sharp", "smooth", "background", "size",
        // reasoning steps
        "very", "moderately", "has", "than", "there", "only", "single", "from",
        "edge", "edges", "well", "defined", "blurred", "so", "therefore", "answer", "question", "asked",
        "present", "position", "horizontal", "vertical", "that", "matches", "gray", "level",
        // targets
        "liver", "spleen", "kidney", "heart", "tumor", "cyst", "nodule",
    });
    return v;
}

int Vocabulary::id(std::string_view word) const {
    auto it = index_.find(std::string(word));
    return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::word(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) throw ShapeError("token id outside vocabulary");
    return words_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
    std::vector<int> ids;
    for (const auto& w : split_words(text)) ids.push_back(id(w));
    return ids;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        const std::string& w = word(id);
        if (id == kPad || id == kBos || id == kEos) continue;
        if (!out.empty() && !(w.size() == 1 && is_punct(w[0]))) out.push_back(' ');
        out += w;
    }
    return out;
}

}  // namespace vital
