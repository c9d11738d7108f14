#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "shelltopics/errors.hpp"

namespace shelltopics {

struct TokenizerConfig {
    // Character-class body: escaped literals and ranges, e.g. "a-zA-Z0-9_\\.\\-\\*".
    std::string token_pattern = "a-zA-Z0-9_\\.\\-\\*";
    std::string hex_token = "HEX";
    std::string ghilimea_marker = "GHILIMEA";
    std::string ghilimea_token = "GHILIMEA_word";
    std::string separators = ";|><";
    int min_command_count = 10;
    double max_command_fraction = 0.10;
};

// 256-entry membership table compiled from a character-class body.
class CharClass {
public:
    explicit CharClass(const std::string& pattern) {
        table_.fill(false);
        std::size_t i = 0;
        auto take = [&](std::size_t pos) -> unsigned char {
            if (pattern[pos] == '\\') {
                if (pos + 1 >= pattern.size())
                    throw ConfigError("token pattern ends with a dangling escape");
                return static_cast<unsigned char>(pattern[pos + 1]);
            }
            return static_cast<unsigned char>(pattern[pos]);
        };
        auto width = [&](std::size_t pos) -> std::size_t {
            return pattern[pos] == '\\' ? 2 : 1;
        };
        while (i < pattern.size()) {
            unsigned char lo = take(i);
            std::size_t wi = width(i);
            // Unescaped '-' between two members forms a range.
            if (i + wi < pattern.size() && pattern[i + wi] == '-' &&
                i + wi + 1 < pattern.size()) {
                unsigned char hi = take(i + wi + 1);
                if (lo > hi) throw ConfigError("token pattern range out of order");
                for (int c = lo; c <= hi; ++c) table_[static_cast<std::size_t>(c)] = true;
                i += wi + 1 + width(i + wi + 1);
            } else {
                table_[lo] = true;
                i += wi;
            }
        }
    }

    bool contains(char c) const { return table_[static_cast<unsigned char>(c)]; }

private:
    std::array<bool, 256> table_{};
};

namespace detail {

inline bool is_hex_digit(char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F');
}

// "x" followed by exactly two hex digits, case-insensitive.
inline bool is_hex_escape(std::string_view tok) {
    return tok.size() == 3 && (tok[0] == 'x' || tok[0] == 'X') &&
           is_hex_digit(tok[1]) && is_hex_digit(tok[2]);
}

inline std::string normalize_token(std::string_view raw, const TokenizerConfig& cfg) {
    if (!cfg.ghilimea_marker.empty() &&
        raw.find(cfg.ghilimea_marker) != std::string_view::npos)
        return cfg.ghilimea_token;
    if (is_hex_escape(raw)) return cfg.hex_token;
    return std::string(raw);
}

} // namespace detail

inline void validate_tokenizer_config(const TokenizerConfig& cfg) {
    if (cfg.min_command_count < 0)
        throw ConfigError("min_command_count must be nonnegative");
    if (cfg.max_command_fraction <= 0.0 || cfg.max_command_fraction > 1.0)
        throw ConfigError("max_command_fraction must lie in (0, 1]");
    CharClass cls(cfg.token_pattern);
    for (char sep : cfg.separators)
        if (cls.contains(sep))
            throw ConfigError(std::string("separator '") + sep +
                              "' overlaps the token character class");
}

// Maximal runs of in-class characters, with hex / marker normalization applied.
inline std::vector<std::string> tokenize_command(std::string_view raw,
                                                 const TokenizerConfig& cfg) {
    CharClass cls(cfg.token_pattern);
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < raw.size()) {
        if (!cls.contains(raw[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < raw.size() && cls.contains(raw[j])) ++j;
        out.push_back(detail::normalize_token(raw.substr(i, j - i), cfg));
        i = j;
    }
    return out;
}

struct TokenizedCommand {
    std::vector<std::string> tokens;
    // Per-token id of the separator-delimited segment it came from; the first
    // token of each segment heads a sub-command (it is the segment's parent).
    std::vector<std::int32_t> segment;

    // 0-based positions of tokens that open a segment.
    std::vector<std::int32_t> parent_positions() const {
        std::vector<std::int32_t> pos;
        for (std::size_t i = 0; i < tokens.size(); ++i)
            if (i == 0 || segment[i] != segment[i - 1])
                pos.push_back(static_cast<std::int32_t>(i));
        return pos;
    }
};

// Splits on separator characters first, then tokenizes each piece, so a
// token can never straddle a separator.  Empty result means "drop command".
inline TokenizedCommand segment_parents(std::string_view raw, const TokenizerConfig& cfg) {
    CharClass cls(cfg.token_pattern);
    auto is_sep = [&](char c) {
        return cfg.separators.find(c) != std::string::npos;
    };
    TokenizedCommand out;
    std::int32_t seg = 0;
    std::size_t start = 0;
    auto flush = [&](std::size_t end) {
        std::string_view piece(raw.data() + start, end - start);
        bool any = false;
        std::size_t i = 0;
        while (i < piece.size()) {
            if (!cls.contains(piece[i])) {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j < piece.size() && cls.contains(piece[j])) ++j;
            out.tokens.push_back(detail::normalize_token(piece.substr(i, j - i), cfg));
            out.segment.push_back(seg);
            any = true;
            i = j;
        }
        if (any) ++seg;
    };
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (is_sep(raw[i])) {
            flush(i);
            start = i + 1;
        }
    }
    flush(raw.size());
    return out;
}

} // namespace shelltopics
