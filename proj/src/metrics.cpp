#include "attnsink/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "attnsink/errors.hpp"

namespace attnsink {

namespace {

constexpr double kLog2e = 1.4426950408889634;  // 1/ln(2)

// cos(v, u) over the positions selected by mask (all positions when null).
double cosine_to_uniform(const std::vector<double>& v, const ContentMask* mask) {
    size_t k = 0;
    double sum = 0.0;
    double norm_sq = 0.0;
    for (size_t i = 0; i < v.size(); ++i) {
        if (mask && !mask->bits[i]) continue;
        ++k;
        sum += v[i];
        norm_sq += v[i] * v[i];
    }
    if (k == 0) throw ZeroContentMass("uniformity undefined: no surviving positions", 0.0);
    if (norm_sq <= 0.0) throw ZeroContentMass("uniformity undefined: zero vector", 0.0);
    // dot(v, u) / (|v| |u|) with u = [1/k, ...] collapses to sum / (|v| sqrt(k)).
    const double cos = sum / (std::sqrt(norm_sq) * std::sqrt(static_cast<double>(k)));
    return std::min(cos, 1.0);
}

double entropy_of_row(const double* p, size_t n) {
    double h = 0.0;
    for (size_t i = 0; i < n; ++i) {
        if (p[i] > 0.0) h -= p[i] * std::log(p[i]) * kLog2e;
    }
    return h;
}

double local_bias_of_row(const double* p, size_t n, const ContentMask& mask, size_t t,
                         size_t steps) {
    double sum = 0.0;
    size_t j = 0;
    double at_diag = 0.0;
    const size_t diag = diagonal_map(t, steps, mask.n_content);
    for (size_t i = 0; i < n; ++i) {
        if (!mask.bits[i]) continue;
        if (j == diag) at_diag = p[i];
        sum += p[i];
        ++j;
    }
    if (sum <= 0.0) return 0.0;
    const double mean = sum / static_cast<double>(mask.n_content);
    return at_diag / mean;
}

}  // namespace

void CorpusStats::merge(const CorpusStats& other) {
    mass_special.merge(other.mass_special);
    mass_language_tag.merge(other.mass_language_tag);
    mass_punctuation.merge(other.mass_punctuation);
    mass_content.merge(other.mass_content);
    uniformity.merge(other.uniformity);
    entropy_bits.merge(other.entropy_bits);
    peak_attention.merge(other.peak_attention);
    local_bias.merge(other.local_bias);
    processed += other.processed;
    skipped += other.skipped;
}

std::vector<double> mean_attention_vector(const SentenceRecord& rec) {
    const AttentionTensor& t = rec.tensor;
    const size_t n = t.src_len;
    std::vector<double> mean(n, 0.0);
    const size_t slices = static_cast<size_t>(t.steps) * t.layers * t.heads;
    for (size_t s = 0; s < slices; ++s) {
        const float* base = t.data.data() + s * n;
        for (size_t i = 0; i < n; ++i) mean[i] += base[i];
    }
    const double inv = 1.0 / static_cast<double>(slices);
    for (double& x : mean) x *= inv;
    return mean;
}

double uniformity(const SentenceRecord& rec, const ContentMask* mask) {
    return cosine_to_uniform(mean_attention_vector(rec), mask);
}

double entropy_bits(const SentenceRecord& rec) {
    const AttentionTensor& t = rec.tensor;
    const size_t n = t.src_len;
    const double inv_lh = 1.0 / (static_cast<double>(t.layers) * t.heads);
    std::vector<double> p(n);
    double total = 0.0;
    for (uint32_t step = 0; step < t.steps; ++step) {
        std::fill(p.begin(), p.end(), 0.0);
        for (uint32_t l = 0; l < t.layers; ++l) {
            for (uint32_t h = 0; h < t.heads; ++h) {
                auto slice = t.slice(step, l, h);
                for (size_t i = 0; i < n; ++i) p[i] += slice[i];
            }
        }
        for (double& x : p) x *= inv_lh;
        total += entropy_of_row(p.data(), n);
    }
    return total / static_cast<double>(t.steps);
}

double peak_attention(const SentenceRecord& rec, const ContentMask& mask) {
    if (mask.n_content == 0) {
        throw ZeroContentMass("peak_attention undefined with zero content positions", 0.0);
    }
    const AttentionTensor& t = rec.tensor;
    const size_t n = t.src_len;
    const double inv_tl = 1.0 / (static_cast<double>(t.steps) * t.layers);
    double head_sum = 0.0;
    std::vector<double> v(n);
    for (uint32_t h = 0; h < t.heads; ++h) {
        std::fill(v.begin(), v.end(), 0.0);
        for (uint32_t step = 0; step < t.steps; ++step) {
            for (uint32_t l = 0; l < t.layers; ++l) {
                auto slice = t.slice(step, l, h);
                for (size_t i = 0; i < n; ++i) v[i] += slice[i];
            }
        }
        double peak = 0.0;
        for (size_t i = 0; i < n; ++i) {
            if (mask.bits[i]) peak = std::max(peak, v[i] * inv_tl);
        }
        head_sum += peak;
    }
    return head_sum / static_cast<double>(t.heads);
}

double local_bias(const SentenceRecord& rec, const ContentMask& mask) {
    if (mask.n_content == 0) {
        throw ZeroContentMass("local_bias undefined with zero content positions", 0.0);
    }
    const AttentionTensor& t = rec.tensor;
    const size_t n = t.src_len;
    const double inv_lh = 1.0 / (static_cast<double>(t.layers) * t.heads);
    std::vector<double> p(n);
    double total = 0.0;
    for (uint32_t step = 0; step < t.steps; ++step) {
        std::fill(p.begin(), p.end(), 0.0);
        for (uint32_t l = 0; l < t.layers; ++l) {
            for (uint32_t h = 0; h < t.heads; ++h) {
                auto slice = t.slice(step, l, h);
                for (size_t i = 0; i < n; ++i) p[i] += slice[i];
            }
        }
        for (double& x : p) x *= inv_lh;
        total += local_bias_of_row(p.data(), n, mask, step, t.steps);
    }
    return total / static_cast<double>(t.steps);
}

SentenceMetrics compute_sentence_metrics(const SentenceRecord& rec, const ContentMask& mask,
                                         bool filtered) {
    if (mask.n_content == 0) {
        throw ZeroContentMass("sentence metrics undefined with zero content positions", 0.0);
    }
    const AttentionTensor& t = rec.tensor;
    const size_t n = t.src_len;
    const size_t steps = t.steps;

    // Single tensor pass: per-step layer/head sums and per-head step/layer sums.
    std::vector<double> p(steps * n, 0.0);
    std::vector<double> vh(static_cast<size_t>(t.heads) * n, 0.0);
    for (uint32_t step = 0; step < t.steps; ++step) {
        for (uint32_t l = 0; l < t.layers; ++l) {
            for (uint32_t h = 0; h < t.heads; ++h) {
                auto slice = t.slice(step, l, h);
                double* prow = p.data() + static_cast<size_t>(step) * n;
                double* vrow = vh.data() + static_cast<size_t>(h) * n;
                for (size_t i = 0; i < n; ++i) {
                    prow[i] += slice[i];
                    vrow[i] += slice[i];
                }
            }
        }
    }
    const double inv_lh = 1.0 / (static_cast<double>(t.layers) * t.heads);
    for (double& x : p) x *= inv_lh;
    const double inv_tl = 1.0 / (static_cast<double>(t.steps) * t.layers);

    SentenceMetrics out;

    std::vector<double> mean(n, 0.0);
    for (size_t step = 0; step < steps; ++step) {
        const double* prow = p.data() + step * n;
        for (size_t i = 0; i < n; ++i) mean[i] += prow[i];
    }
    const double inv_t = 1.0 / static_cast<double>(steps);
    for (double& x : mean) x *= inv_t;
    out.uniformity = cosine_to_uniform(mean, filtered ? &mask : nullptr);

    double entropy_sum = 0.0;
    double bias_sum = 0.0;
    for (size_t step = 0; step < steps; ++step) {
        const double* prow = p.data() + step * n;
        entropy_sum += entropy_of_row(prow, n);
        bias_sum += local_bias_of_row(prow, n, mask, step, steps);
    }
    out.entropy_bits = entropy_sum * inv_t;
    out.local_bias = bias_sum * inv_t;

    double head_sum = 0.0;
    for (uint32_t h = 0; h < t.heads; ++h) {
        const double* vrow = vh.data() + static_cast<size_t>(h) * n;
        double peak = 0.0;
        for (size_t i = 0; i < n; ++i) {
            if (mask.bits[i]) peak = std::max(peak, vrow[i] * inv_tl);
        }
        head_sum += peak;
    }
    out.peak_attention = head_sum / static_cast<double>(t.heads);
    return out;
}

VarianceCheck variance_check(const std::vector<std::pair<int64_t, double>>& before,
                             const std::vector<std::pair<int64_t, double>>& after) {
    if (before.size() != after.size()) {
        throw MismatchError("variance_check: series lengths differ (" +
                            std::to_string(before.size()) + " vs " +
                            std::to_string(after.size()) + ")");
    }
    auto sorted_before = before;
    auto sorted_after = after;
    const auto by_id = [](const auto& a, const auto& b) { return a.first < b.first; };
    std::sort(sorted_before.begin(), sorted_before.end(), by_id);
    std::sort(sorted_after.begin(), sorted_after.end(), by_id);
    for (size_t i = 0; i < sorted_before.size(); ++i) {
        if (sorted_before[i].first != sorted_after[i].first) {
            throw MismatchError("variance_check: sentence_id sets differ at id " +
                                std::to_string(sorted_before[i].first));
        }
    }
    const auto sample_variance = [](const std::vector<std::pair<int64_t, double>>& xs) {
        RunningStat stat;
        for (const auto& [id, v] : xs) stat.add(v);
        return stat.sample_variance();
    };
    VarianceCheck out;
    out.var_before = sample_variance(sorted_before);
    out.var_after = sample_variance(sorted_after);
    out.reduced = out.var_after < out.var_before;
    return out;
}

ComparisonReport compare(std::optional<double> tf_before, double tf_after,
                         std::optional<double> gen_before, double gen_after) {
    const auto check_range = [](double v, const char* name) {
        if (!(v >= 0.0 && v <= 100.0)) {
            throw ConfigError(std::string(name) + " must be a percentage in [0, 100], got " +
                              std::to_string(v));
        }
    };
    if (tf_before) check_range(*tf_before, "tf_before");
    if (gen_before) check_range(*gen_before, "gen_before");
    check_range(tf_after, "tf_after");
    check_range(gen_after, "gen_after");

    ComparisonReport r;
    r.tf_before_pct = tf_before;
    r.tf_after_pct = tf_after;
    r.gen_before_pct = gen_before;
    r.gen_after_pct = gen_after;
    r.gap_after_pp = tf_after - gen_after;

    const auto rel_change = [](double before, double after) -> std::optional<double> {
        if (before == 0.0) return std::nullopt;  // undefined, reported as absent
        return (after - before) / before * 100.0;
    };
    if (tf_before) r.tf_change_pct = rel_change(*tf_before, tf_after);
    if (gen_before) r.gen_change_pct = rel_change(*gen_before, gen_after);
    if (tf_before && gen_before) {
        r.gap_before_pp = *tf_before - *gen_before;
        r.gap_change_pct = rel_change(*r.gap_before_pp, r.gap_after_pp);
    }
    r.generation_divergence_pct =
        tf_after > 0.0 ? (tf_after - gen_after) / tf_after * 100.0 : 0.0;
    return r;
}

}  // namespace attnsink
