#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace cgrag {

/// A normalized token and the byte range it came from in the raw text.
struct Token {
    std::string text;
    std::size_t begin = 0;
    std::size_t end = 0;
};

/// NFC-normalize and lowercase a UTF-8 string. Invalid UTF-8 is replaced
/// with U+FFFD rather than rejected.
std::string normalize(std::string_view raw);

/// Split on Unicode whitespace, then normalize each token. Offsets refer to
/// the raw input so the original text can be recovered for prompting.
std::vector<Token> tokenize(std::string_view raw);

/// Normalized token strings only.
std::vector<std::string> tokenize_words(std::string_view raw);

}  // namespace cgrag
