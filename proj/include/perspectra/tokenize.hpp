#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace perspectra {

/// Reserved token joining the two sides of a text pair into one sequence.
inline constexpr std::string_view kSepToken = "⟨sep⟩"; // ⟨sep⟩

namespace detail {

// Minimal UTF-8 decoding; malformed bytes are treated as single-byte codepoints
// so tokenization never throws on dirty input.
inline std::size_t decode_utf8(std::string_view s, std::size_t pos, char32_t& cp) {
    unsigned char c = static_cast<unsigned char>(s[pos]);
    std::size_t len = 1;
    if (c < 0x80) {
        cp = c;
    } else if ((c >> 5) == 0x6 && pos + 1 < s.size()) {
        cp = (c & 0x1f) << 6 | (static_cast<unsigned char>(s[pos + 1]) & 0x3f);
        len = 2;
    } else if ((c >> 4) == 0xe && pos + 2 < s.size()) {
        cp = (c & 0x0f) << 12 | (static_cast<unsigned char>(s[pos + 1]) & 0x3f) << 6 |
             (static_cast<unsigned char>(s[pos + 2]) & 0x3f);
        len = 3;
    } else if ((c >> 3) == 0x1e && pos + 3 < s.size()) {
        cp = (c & 0x07) << 18 | (static_cast<unsigned char>(s[pos + 1]) & 0x3f) << 12 |
             (static_cast<unsigned char>(s[pos + 2]) & 0x3f) << 6 |
             (static_cast<unsigned char>(s[pos + 3]) & 0x3f);
        len = 4;
    } else {
        cp = c;
    }
    return len;
}

inline void encode_utf8(char32_t cp, std::string& out) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xc0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xe0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
    } else {
        out.push_back(static_cast<char>(0xf0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3f)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
    }
}

inline bool is_space_cp(char32_t cp) {
    switch (cp) {
        case U' ': case U'\t': case U'\n': case U'\r': case U'\f': case U'\v':
        case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
        case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

// ASCII punctuation plus the common Latin-1/General Punctuation ranges. Not a
// full Unicode property table; covers the corpora this library targets.
inline bool is_punct_cp(char32_t cp) {
    if (cp < 0x80)
        return (cp >= U'!' && cp <= U'/') || (cp >= U':' && cp <= U'@') ||
               (cp >= U'[' && cp <= U'`') || (cp >= U'{' && cp <= U'~');
    switch (cp) {
        case 0xA1: case 0xA7: case 0xAB: case 0xB6: case 0xB7: case 0xBB: case 0xBF:
        case 0x27E8: case 0x27E9: case 0x3001: case 0x3002:
            return true;
        default:
            return cp >= 0x2010 && cp <= 0x205E;
    }
}

inline char32_t fold_case(char32_t cp) {
    if (cp >= U'A' && cp <= U'Z') return cp + 0x20;
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20; // Latin-1 letters
    return cp;
}

} // namespace detail

/// Lowercases and splits on whitespace and punctuation; punctuation is dropped.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    std::size_t pos = 0;
    while (pos < text.size()) {
        char32_t cp;
        pos += detail::decode_utf8(text, pos, cp);
        if (detail::is_space_cp(cp) || detail::is_punct_cp(cp)) {
            if (!current.empty()) {
                tokens.push_back(std::move(current));
                current.clear();
            }
        } else {
            detail::encode_utf8(detail::fold_case(cp), current);
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

/// Token sequence for an instance: pair texts are joined with the reserved
/// separator token, then the whole sequence is truncated to max_tokens.
inline std::vector<std::string> tokenize_instance(std::string_view text,
                                                  const std::optional<std::string>& text_pair,
                                                  std::size_t max_tokens) {
    std::vector<std::string> tokens = tokenize(text);
    if (text_pair) {
        tokens.emplace_back(kSepToken);
        for (auto& t : tokenize(*text_pair)) tokens.push_back(std::move(t));
    }
    if (tokens.size() > max_tokens) tokens.resize(max_tokens);
    return tokens;
}

} // namespace perspectra
