#include "attnsink/filter_core.hpp"

#include <cmath>

#include "attnsink/errors.hpp"

namespace attnsink {

ContentMask make_content_mask(const std::vector<std::string>& src_tokens,
                              const ClassifierConfig& config) {
    ContentMask mask;
    mask.bits = build_content_mask(src_tokens, config);
    mask.n_content = 0;
    for (uint8_t b : mask.bits) mask.n_content += b;
    return mask;
}

namespace {

// Shared core: f64 content-mass denominator with NaN screen.
double content_denominator(std::span<const float> a, const ContentMask& m) {
    if (a.size() != m.bits.size()) {
        throw FormatError("mask length " + std::to_string(m.bits.size()) +
                          " does not match slice length " + std::to_string(a.size()));
    }
    double denom = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        if (!std::isfinite(a[i])) {
            throw FormatError("non-finite attention weight at position " + std::to_string(i));
        }
        if (m.bits[i]) denom += a[i];
    }
    if (denom < kEpsilonMass) {
        throw ZeroContentMass("content mass " + std::to_string(denom) +
                              " below epsilon, cannot renormalize", denom);
    }
    return denom;
}

}  // namespace

std::vector<double> filter_slice(std::span<const float> a, const ContentMask& m) {
    const double denom = content_denominator(a, m);
    std::vector<double> out(a.size(), 0.0);
    for (size_t i = 0; i < a.size(); ++i) {
        if (m.bits[i]) out[i] = static_cast<double>(a[i]) / denom;
    }
    return out;
}

void filter_slice_inplace(std::span<float> a, const ContentMask& m) {
    const double denom = content_denominator(a, m);
    for (size_t i = 0; i < a.size(); ++i) {
        a[i] = m.bits[i] ? static_cast<float>(static_cast<double>(a[i]) / denom) : 0.0f;
    }
}

bool filter_sentence_inplace(SentenceRecord& rec, const ContentMask& mask, FilterPolicy policy,
                             double* mean_content_coverage) {
    AttentionTensor& t = rec.tensor;
    double coverage_sum = 0.0;
    size_t slices = 0;
    try {
        for (uint32_t step = 0; step < t.steps; ++step) {
            for (uint32_t l = 0; l < t.layers; ++l) {
                for (uint32_t h = 0; h < t.heads; ++h) {
                    auto slice = t.slice(step, l, h);
                    coverage_sum += content_denominator(slice, mask);
                    ++slices;
                    filter_slice_inplace(slice, mask);
                }
            }
        }
    } catch (const ZeroContentMass&) {
        if (policy == FilterPolicy::Error) throw;
        return false;
    }
    if (mean_content_coverage) {
        *mean_content_coverage = slices ? coverage_sum / static_cast<double>(slices) : 0.0;
    }
    return true;
}

std::optional<SentenceRecord> filter_sentence(const SentenceRecord& rec,
                                              const ClassifierConfig& config,
                                              FilterPolicy policy) {
    const ContentMask mask = make_content_mask(rec.src_tokens, config);
    SentenceRecord out = rec;
    if (!filter_sentence_inplace(out, mask, policy, nullptr)) return std::nullopt;
    return out;
}

MassBreakdown mass_by_class(const SentenceRecord& rec, const std::vector<TokenClass>& classes) {
    if (classes.size() != rec.tensor.src_len) {
        throw FormatError("class vector length does not match source length");
    }
    // Per-position column sums first, then one partition by class; the four
    // fractions divide by the actual total so they sum to 1 in f64.
    std::vector<double> column(rec.tensor.src_len, 0.0);
    const AttentionTensor& t = rec.tensor;
    const size_t n = t.src_len;
    const size_t slices = static_cast<size_t>(t.steps) * t.layers * t.heads;
    for (size_t s = 0; s < slices; ++s) {
        const float* base = t.data.data() + s * n;
        for (size_t i = 0; i < n; ++i) column[i] += base[i];
    }
    double per_class[4] = {0.0, 0.0, 0.0, 0.0};
    for (size_t i = 0; i < n; ++i) {
        per_class[static_cast<size_t>(classes[i])] += column[i];
    }
    const double total = per_class[0] + per_class[1] + per_class[2] + per_class[3];
    MassBreakdown out;
    if (total > 0.0) {
        out.language_tag = per_class[static_cast<size_t>(TokenClass::LanguageTag)] / total;
        out.punctuation = per_class[static_cast<size_t>(TokenClass::Punctuation)] / total;
        out.special = per_class[static_cast<size_t>(TokenClass::Special)] / total;
        out.content = per_class[static_cast<size_t>(TokenClass::Content)] / total;
    }
    return out;
}

MassBreakdown mass_by_class(const SentenceRecord& rec, const ClassifierConfig& config) {
    std::vector<TokenClass> classes;
    classes.reserve(rec.src_tokens.size());
    for (const auto& tok : rec.src_tokens) classes.push_back(classify_token(tok, config));
    return mass_by_class(rec, classes);
}

}  // namespace attnsink
