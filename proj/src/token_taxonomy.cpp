#include "attnsink/token_taxonomy.hpp"

#include <array>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "attnsink/errors.hpp"

namespace attnsink {

namespace {

// Fully anchored NLLB tag: 3-letter language code + 4-letter script code.
constexpr const char* kDefaultLanguageTagPattern = "^[a-z]{3}_[A-Z][a-z]{3}$";

constexpr std::array<const char*, 32> kDefaultPunctuation = {
    ".", ",", ";", ":", "!", "?", "'", "\"", "(", ")", "[",      "]",
    "{", "}", "-", "–", "—", "…", "/", "\\", "|", "@",
    "#", "%", "&", "*", "+", "=", "<", ">", "~", "_"};

// Byte length of the UTF-8 sequence starting at `lead`, or 0 when invalid.
size_t utf8_seq_len(unsigned char lead) {
    if (lead < 0x80) return 1;
    if ((lead & 0xe0) == 0xc0) return 2;
    if ((lead & 0xf0) == 0xe0) return 3;
    if ((lead & 0xf8) == 0xf0) return 4;
    return 0;
}

bool is_single_codepoint(const std::string& s) {
    if (s.empty()) return false;
    return utf8_seq_len(static_cast<unsigned char>(s[0])) == s.size();
}

std::regex compile_pattern(const std::string& pattern) {
    try {
        return std::regex(pattern);
    } catch (const std::regex_error& e) {
        throw ConfigError("invalid language_tag_pattern '" + pattern + "': " + e.what());
    }
}

void validate(const ClassifierConfig& config) {
    if (config.punctuation_set.size() != 32) {
        throw ConfigError("punctuation_set must have exactly 32 distinct entries, got " +
                          std::to_string(config.punctuation_set.size()));
    }
    for (const auto& mark : config.punctuation_set) {
        if (!is_single_codepoint(mark)) {
            throw ConfigError("punctuation_set entry '" + mark +
                              "' is not a single character");
        }
    }
    for (const char* required : {"<s>", "</s>", "<pad>", "<unk>"}) {
        if (!config.special_tokens.count(required)) {
            throw ConfigError(std::string("special_tokens must contain ") + required);
        }
    }
}

}  // namespace

const char* token_class_name(TokenClass c) {
    switch (c) {
        case TokenClass::LanguageTag: return "LanguageTag";
        case TokenClass::Punctuation: return "Punctuation";
        case TokenClass::Special: return "Special";
        case TokenClass::Content: return "Content";
    }
    return "Content";
}

ClassifierConfig default_classifier_config() {
    ClassifierConfig config;
    config.language_tag_pattern = kDefaultLanguageTagPattern;
    for (const char* mark : kDefaultPunctuation) config.punctuation_set.insert(mark);
    config.special_tokens = {"<s>", "</s>", "<pad>", "<unk>"};
    config.strip_subword_marker = true;
    config.language_tag_regex = compile_pattern(config.language_tag_pattern);
    validate(config);
    return config;
}

ClassifierConfig parse_classifier_config(const std::string& json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("classifier config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("classifier config must be a JSON object");

    ClassifierConfig config = default_classifier_config();
    try {
        if (doc.contains("language_tag_pattern")) {
            config.language_tag_pattern = doc["language_tag_pattern"].get<std::string>();
        }
        if (doc.contains("punctuation_set")) {
            config.punctuation_set.clear();
            for (const auto& mark : doc["punctuation_set"]) {
                config.punctuation_set.insert(mark.get<std::string>());
            }
        }
        if (doc.contains("special_tokens")) {
            config.special_tokens.clear();
            for (const auto& tok : doc["special_tokens"]) {
                config.special_tokens.insert(tok.get<std::string>());
            }
        }
        if (doc.contains("strip_subword_marker")) {
            config.strip_subword_marker = doc["strip_subword_marker"].get<bool>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("classifier config field has wrong type: ") + e.what());
    }
    config.language_tag_regex = compile_pattern(config.language_tag_pattern);
    validate(config);
    return config;
}

ClassifierConfig load_classifier_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open classifier config: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_classifier_config(buf.str());
}

std::string classifier_config_to_json(const ClassifierConfig& config) {
    nlohmann::ordered_json doc;
    doc["language_tag_pattern"] = config.language_tag_pattern;
    std::vector<std::string> punct(config.punctuation_set.begin(), config.punctuation_set.end());
    std::sort(punct.begin(), punct.end());
    doc["punctuation_set"] = punct;
    std::vector<std::string> special(config.special_tokens.begin(), config.special_tokens.end());
    std::sort(special.begin(), special.end());
    doc["special_tokens"] = special;
    doc["strip_subword_marker"] = config.strip_subword_marker;
    return doc.dump(2);
}

TokenClass classify_token(const std::string& token, const ClassifierConfig& config) {
    if (config.special_tokens.count(token)) return TokenClass::Special;
    if (std::regex_match(token, config.language_tag_regex)) return TokenClass::LanguageTag;

    // A bare subword marker carries no lexical content.
    if (token == kSubwordMarker) return TokenClass::Punctuation;

    std::string bare = token;
    if (config.strip_subword_marker && bare.rfind(kSubwordMarker, 0) == 0) {
        bare.erase(0, 3);
    }
    // Only single-character tokens can be punctuation; subword fragments
    // that merely contain marks stay Content.
    if (is_single_codepoint(bare) && config.punctuation_set.count(bare)) {
        return TokenClass::Punctuation;
    }
    return TokenClass::Content;
}

std::vector<uint8_t> build_content_mask(const std::vector<std::string>& tokens,
                                        const ClassifierConfig& config) {
    std::vector<uint8_t> mask(tokens.size());
    for (size_t i = 0; i < tokens.size(); ++i) {
        mask[i] = classify_token(tokens[i], config) == TokenClass::Content ? 1 : 0;
    }
    return mask;
}

std::vector<TokenRecord> classify_tokens(const std::vector<std::string>& tokens,
                                         const ClassifierConfig& config) {
    std::vector<TokenRecord> records;
    records.reserve(tokens.size());
    for (size_t i = 0; i < tokens.size(); ++i) {
        records.push_back({tokens[i], i, classify_token(tokens[i], config)});
    }
    return records;
}

}  // namespace attnsink
