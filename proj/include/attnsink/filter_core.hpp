#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "attnsink/attention_store.hpp"
#include "attnsink/token_taxonomy.hpp"

namespace attnsink {

// Per-sentence binary mask over source positions; identical across all
// steps/layers/heads of the sentence.
struct ContentMask {
    std::vector<uint8_t> bits;
    size_t n_content = 0;

    size_t size() const { return bits.size(); }
};

ContentMask make_content_mask(const std::vector<std::string>& src_tokens,
                              const ClassifierConfig& config);

// Attention mass split by token class; the four fractions sum to 1.
struct MassBreakdown {
    double special = 0.0;
    double language_tag = 0.0;
    double punctuation = 0.0;
    double content = 0.0;
};

// Residual content mass below which renormalization is refused.
inline constexpr double kEpsilonMass = 1e-8;

enum class FilterPolicy : uint8_t { Error = 0, Skip = 1 };

// Content-only filter for one probability slice:
//   out[i] = a[i] * m[i] / sum_j a[j] * m[j]
// Masked positions are exactly 0; the denominator accumulates in f64.
// Throws ZeroContentMass when the surviving mass is below kEpsilonMass and
// FormatError when the slice holds non-finite values.
std::vector<double> filter_slice(std::span<const float> a, const ContentMask& m);

// In-place variant used by the tensor kernel; writes f64-exact quotients
// quantized back to f32.
void filter_slice_inplace(std::span<float> a, const ContentMask& m);

// Applies filter_slice to every [t, l, h] slice of the record. Returns
// nullopt when the sentence has to be skipped under FilterPolicy::Skip
// (zero content mass somewhere); token metadata is never touched.
std::optional<SentenceRecord> filter_sentence(const SentenceRecord& rec,
                                              const ClassifierConfig& config,
                                              FilterPolicy policy = FilterPolicy::Skip);

// In-place core; also reports the mean pre-filter content coverage
// (the renormalization denominator averaged over slices) when requested.
bool filter_sentence_inplace(SentenceRecord& rec, const ContentMask& mask,
                             FilterPolicy policy,
                             double* mean_content_coverage = nullptr);

// Fraction of total attention mass received by each token class,
// accumulated in f64 and normalized by the total so the partition is exact.
MassBreakdown mass_by_class(const SentenceRecord& rec, const ClassifierConfig& config);
MassBreakdown mass_by_class(const SentenceRecord& rec, const std::vector<TokenClass>& classes);

}  // namespace attnsink
