#pragma once

#include <cstdint>
#include <regex>
#include <string>
#include <unordered_set>
#include <vector>

namespace attnsink {

// Four-way classification of source-vocabulary tokens. Content is the
// fallback: a token is Content iff no other rule matches.
enum class TokenClass : uint8_t {
    LanguageTag = 0,
    Punctuation = 1,
    Special = 2,
    Content = 3,
};

const char* token_class_name(TokenClass c);

// UTF-8 subword marker U+2581 used by sentencepiece-style tokenizers.
inline constexpr const char* kSubwordMarker = "\xe2\x96\x81";

struct ClassifierConfig {
    std::string language_tag_pattern;
    std::unordered_set<std::string> punctuation_set;   // exactly 32 single-char entries
    std::unordered_set<std::string> special_tokens;    // must cover <s> </s> <pad> <unk>
    bool strip_subword_marker = true;

    // Compiled form of language_tag_pattern; regex_match gives full anchoring.
    std::regex language_tag_regex;
};

// Built-in defaults: anchored NLLB tag pattern, the 32-mark punctuation set
// and the four structural tokens.
ClassifierConfig default_classifier_config();

// Parses and validates a config from its JSON form. Throws ConfigError on
// violations (bad pattern, punctuation set not 32 distinct single-character
// entries, missing structural tokens).
ClassifierConfig parse_classifier_config(const std::string& json_text);
ClassifierConfig load_classifier_config(const std::string& path);

std::string classifier_config_to_json(const ClassifierConfig& config);

struct TokenRecord {
    std::string text;
    size_t position = 0;  // 0-based source index, unique within a sentence
    TokenClass cls = TokenClass::Content;
};

// Rule precedence: Special > LanguageTag > Punctuation > Content. A single
// leading subword marker is stripped before punctuation matching only.
// Total function: every token maps to exactly one class.
TokenClass classify_token(const std::string& token, const ClassifierConfig& config);

// mask[i] = 1 iff tokens[i] classifies as Content.
std::vector<uint8_t> build_content_mask(const std::vector<std::string>& tokens,
                                        const ClassifierConfig& config);

std::vector<TokenRecord> classify_tokens(const std::vector<std::string>& tokens,
                                         const ClassifierConfig& config);

}  // namespace attnsink
