#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "attnsink/attention_store.hpp"
#include "attnsink/filter_core.hpp"

namespace attnsink {

// Streaming mean/variance accumulator (Welford) with a commutative,
// associative merge so corpus reductions can fold in any order.
struct RunningStat {
    uint64_t count = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        ++count;
        const double delta = x - mean;
        mean += delta / static_cast<double>(count);
        m2 += delta * (x - mean);
    }

    void merge(const RunningStat& other) {
        if (other.count == 0) return;
        if (count == 0) {
            *this = other;
            return;
        }
        const double delta = other.mean - mean;
        const uint64_t total = count + other.count;
        mean += delta * static_cast<double>(other.count) / static_cast<double>(total);
        m2 += other.m2 + delta * delta *
                             (static_cast<double>(count) * static_cast<double>(other.count) /
                              static_cast<double>(total));
        count = total;
    }

    // Sample variance (n - 1 denominator); 0 for fewer than two values.
    double sample_variance() const {
        return count < 2 ? 0.0 : m2 / static_cast<double>(count - 1);
    }
    double sample_stddev() const { return std::sqrt(sample_variance()); }
};

struct SentenceMetrics {
    double uniformity = 0.0;      // cos(mean attention, uniform), in (0, 1]
    double entropy_bits = 0.0;    // mean per-step Shannon entropy
    double peak_attention = 0.0;  // head-averaged max content weight
    double local_bias = 0.0;      // ratio >= 0; 1 means no local preference
};

struct CorpusStats {
    CorpusHeader header;
    RunningStat mass_special;
    RunningStat mass_language_tag;
    RunningStat mass_punctuation;
    RunningStat mass_content;
    RunningStat uniformity;
    RunningStat entropy_bits;
    RunningStat peak_attention;
    RunningStat local_bias;
    uint64_t processed = 0;
    uint64_t skipped = 0;  // zero-content sentences carry no metrics

    void merge(const CorpusStats& other);
};

// Proportional diagonal map: the source position "nearest" to decoder step t
// when T steps are stretched over n positions. Round half away from zero.
inline size_t diagonal_map(size_t t, size_t steps, size_t positions) {
    if (steps <= 1 || positions == 0) return 0;
    const double pos = static_cast<double>(t) * static_cast<double>(positions - 1) /
                       static_cast<double>(steps - 1);
    return static_cast<size_t>(std::llround(pos));
}

// Mean attention vector over all steps, layers and heads; f64 accumulation,
// sums to 1 within 1e-6 for normalized input.
std::vector<double> mean_attention_vector(const SentenceRecord& rec);

// Cosine similarity between the mean attention vector and the uniform
// distribution. With a mask, both vectors range over content positions only
// (the filtered-tensor convention); without one, over all source positions.
double uniformity(const SentenceRecord& rec, const ContentMask* mask = nullptr);

// Mean over steps of the Shannon entropy (bits) of the layer/head-averaged
// per-step distribution; 0*log0 = 0.
double entropy_bits(const SentenceRecord& rec);

// Per head: average attention over steps and layers, take the max over
// content positions; return the mean over heads.
double peak_attention(const SentenceRecord& rec, const ContentMask& mask);

// Per step: attention at the diagonally nearest surviving position divided
// by the mean attention over surviving positions; mean over steps.
// Surviving positions are content positions re-indexed 0..n_content-1.
double local_bias(const SentenceRecord& rec, const ContentMask& mask);

// All four sentence metrics in one tensor pass. `filtered` selects the
// uniformity convention (content-only vs all positions).
SentenceMetrics compute_sentence_metrics(const SentenceRecord& rec,
                                         const ContentMask& mask,
                                         bool filtered);

struct VarianceCheck {
    double var_before = 0.0;
    double var_after = 0.0;
    bool reduced = false;
};

// Sample variance of two uniformity series matched by sentence_id.
// Throws MismatchError when the id sets differ.
VarianceCheck variance_check(const std::vector<std::pair<int64_t, double>>& before,
                             const std::vector<std::pair<int64_t, double>>& after);

// Derived comparison quantities for teacher-forcing vs generation
// uniformity percentages. All values are percentages in [0, 100];
// *_pp values are percentage points.
struct ComparisonReport {
    std::optional<double> tf_before_pct;
    double tf_after_pct = 0.0;
    std::optional<double> gen_before_pct;
    double gen_after_pct = 0.0;

    std::optional<double> tf_change_pct;   // (after - before) / before * 100
    std::optional<double> gen_change_pct;
    std::optional<double> gap_before_pp;   // tf_before - gen_before
    double gap_after_pp = 0.0;             // tf_after - gen_after, exact
    std::optional<double> gap_change_pct;
    double generation_divergence_pct = 0.0;  // (tf_after - gen_after) / tf_after * 100

    std::optional<VarianceCheck> tf_variance;
    std::optional<VarianceCheck> gen_variance;
};

// Exact arithmetic on uniformity percentages. Relative changes are absent
// when the corresponding before value is 0 or not supplied.
ComparisonReport compare(std::optional<double> tf_before, double tf_after,
                         std::optional<double> gen_before, double gen_after);

}  // namespace attnsink
