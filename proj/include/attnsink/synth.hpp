#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "attnsink/attention_store.hpp"
#include "attnsink/token_taxonomy.hpp"

namespace attnsink {

// Generator parameters: how attention mass splits among token classes plus
// the shape of the planted content alignment. The four masses sum to 1.
struct SinkProfile {
    double special_mass = 0.832;
    double langtag_mass = 0.018;
    double punct_mass = 0.029;
    double content_mass = 0.121;
    double kernel_spread_sigma = 2.0;  // source-position units
    double noise_alpha = 0.0;          // symmetric Dirichlet concentration; 0 = noise off
    uint64_t seed = 0;

    void validate() const;  // throws ConfigError
};

SinkProfile parse_sink_profile(const std::string& json_text);
SinkProfile load_sink_profile(const std::string& path);
std::string sink_profile_to_json(const SinkProfile& profile);

// Shape envelope for generated corpora; ranges are inclusive.
struct CorpusShape {
    uint32_t min_tgt_len = 15;
    uint32_t max_tgt_len = 23;
    uint32_t min_src_len = 18;
    uint32_t max_src_len = 26;
    uint32_t layers = 12;
    uint32_t heads = 16;
};

// One generated sentence plus the planted per-step content distributions
// (ground truth broadcast to [T, 1, 1, n]; zero on non-content positions).
struct SynthSentence {
    SentenceRecord record;
    SentenceRecord ground_truth;
};

// Deterministic synthetic-corpus generator. Sink mass is split uniformly
// within each class; the content share follows a discretized Gaussian kernel
// centered on the diagonal, optionally perturbed per (sentence, step) by a
// symmetric Dirichlet factor shared across layers and heads.
class CorpusGenerator {
public:
    CorpusGenerator(SinkProfile profile, CorpusShape shape);

    // Pure function of (profile.seed, sentence_id): safe to call from any
    // number of threads, in any order.
    SynthSentence make_sentence(int64_t sentence_id) const;

    // Headers for the corpus and its ground-truth sidecar.
    CorpusHeader corpus_header(uint64_t n_sentences, CorpusMode mode,
                               const std::string& src_lang,
                               const std::string& tgt_lang) const;
    CorpusHeader ground_truth_header(uint64_t n_sentences, CorpusMode mode,
                                     const std::string& src_lang,
                                     const std::string& tgt_lang) const;

    const SinkProfile& profile() const { return profile_; }
    const CorpusShape& shape() const { return shape_; }

private:
    SinkProfile profile_;
    CorpusShape shape_;
};

// Generates and writes a corpus (and optional ground-truth sidecar) to disk,
// streaming one sentence at a time. Returns the sentence count.
uint64_t generate_corpus_files(const CorpusGenerator& gen, uint64_t n_sentences,
                               CorpusMode mode, const std::string& src_lang,
                               const std::string& tgt_lang, const std::string& corpus_path,
                               const std::string& truth_path = {});

// In-memory convenience for tests and benchmarks.
std::vector<SynthSentence> generate_sentences(const CorpusGenerator& gen,
                                              uint64_t n_sentences);

// Max over t, l, h, i of |filtered - planted|; the planted tensor has
// L = H = 1 and broadcasts across layers and heads. Throws on shape mismatch.
double ground_truth_check(const SentenceRecord& filtered, const SentenceRecord& planted);

}  // namespace attnsink
