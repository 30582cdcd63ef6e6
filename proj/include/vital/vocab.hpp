#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace vital {

// Fixed synthetic word vocabulary shared by the backbone and the auxiliary
// text decoder. Punctuation marks are their own tokens.
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kBos = 2;
    static constexpr int kEos = 3;

    explicit Vocabulary(std::vector<std::string> words);
    static const Vocabulary& standard();

    std::size_t size() const noexcept { return words_.size(); }
    int id(std::string_view word) const;
    const std::string& word(int id) const;
    bool contains(std::string_view word) const { return index_.count(std::string(word)) > 0; }

    // Lowercases, splits on whitespace and punctuation; unknown words map to <unk>.
    std::vector<int> encode(std::string_view text) const;
    // Joins words with single spaces and attaches punctuation to the left.
    std::string decode(const std::vector<int>& ids) const;

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
};

// Lowercased word/punctuation pieces of `text`.
std::vector<std::string> split_words(std::string_view text);

}  // namespace vital
