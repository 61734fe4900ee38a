#include "cgrag/text.hpp"

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include "cgrag/error.hpp"

namespace cgrag {

std::string normalize(std::string_view raw) {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) throw Error("ICU NFC normalizer unavailable");

    auto u = icu::UnicodeString::fromUTF8(icu::StringPiece(raw.data(), static_cast<int32_t>(raw.size())));
    u.toLower(icu::Locale::getRoot());
    icu::UnicodeString out = nfc->normalize(u, status);
    if (U_FAILURE(status)) throw Error("ICU normalization failed");
    std::string result;
    out.toUTF8String(result);
    return result;
}

std::vector<Token> tokenize(std::string_view raw) {
    std::vector<Token> tokens;
    const auto* s = reinterpret_cast<const uint8_t*>(raw.data());
    const auto n = static_cast<int32_t>(raw.size());
    int32_t i = 0;
    int32_t start = -1;
    while (i < n) {
        const int32_t before = i;
        UChar32 c = 0;
        U8_NEXT(s, i, n, c);
        const bool space = c >= 0 && u_isUWhiteSpace(c);
        if (space) {
            if (start >= 0) {
                tokens.push_back({normalize(raw.substr(start, before - start)),
                                  static_cast<std::size_t>(start), static_cast<std::size_t>(before)});
                start = -1;
            }
        } else if (start < 0) {
            start = before;
        }
    }
    if (start >= 0) {
        tokens.push_back({normalize(raw.substr(start)), static_cast<std::size_t>(start),
                          static_cast<std::size_t>(n)});
    }
    return tokens;
}

std::vector<std::string> tokenize_words(std::string_view raw) {
    std::vector<std::string> out;
    for (auto& t : tokenize(raw)) out.push_back(std::move(t.text));
    return out;
}

}  // namespace cgrag
