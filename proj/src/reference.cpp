#include "attnsink/reference.hpp"

#include <cmath>

#include "attnsink/errors.hpp"

namespace attnsink::reference {

namespace {

// Everything below is written as straight-line loops on purpose; no code is
// shared with the streaming kernels beyond the token classifier.

std::vector<size_t> content_positions(const SentenceRecord& rec,
                                      const ClassifierConfig& config) {
    std::vector<size_t> pos;
    for (size_t i = 0; i < rec.src_tokens.size(); ++i) {
        if (classify_token(rec.src_tokens[i], config) == TokenClass::Content) {
            pos.push_back(i);
        }
    }
    return pos;
}

double naive_uniformity(const SentenceRecord& rec, const std::vector<size_t>& content,
                        bool filtered) {
    const AttentionTensor& t = rec.tensor;
    const size_t n = t.src_len;
    std::vector<double> mean(n, 0.0);
    for (uint32_t step = 0; step < t.steps; ++step)
        for (uint32_t l = 0; l < t.layers; ++l)
            for (uint32_t h = 0; h < t.heads; ++h)
                for (size_t i = 0; i < n; ++i) mean[i] += t.slice(step, l, h)[i];
    for (size_t i = 0; i < n; ++i) {
        mean[i] /= static_cast<double>(t.steps) * t.layers * t.heads;
    }

    std::vector<double> v;
    if (filtered) {
        for (size_t i : content) v.push_back(mean[i]);
    } else {
        v = mean;
    }
    const double u = 1.0 / static_cast<double>(v.size());
    double dot = 0.0, norm_v = 0.0, norm_u = 0.0;
    for (double x : v) {
        dot += x * u;
        norm_v += x * x;
        norm_u += u * u;
    }
    double cos = dot / (std::sqrt(norm_v) * std::sqrt(norm_u));
    if (cos > 1.0) cos = 1.0;
    return cos;
}

double naive_entropy(const SentenceRecord& rec) {
    const AttentionTensor& t = rec.tensor;
    const size_t n = t.src_len;
    double sum = 0.0;
    for (uint32_t step = 0; step < t.steps; ++step) {
        std::vector<double> p(n, 0.0);
        for (uint32_t l = 0; l < t.layers; ++l)
            for (uint32_t h = 0; h < t.heads; ++h)
                for (size_t i = 0; i < n; ++i) p[i] += t.slice(step, l, h)[i];
        double h_t = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double pi = p[i] / (static_cast<double>(t.layers) * t.heads);
            if (pi > 0.0) h_t -= pi * std::log2(pi);
        }
        sum += h_t;
    }
    return sum / static_cast<double>(t.steps);
}

double naive_peak(const SentenceRecord& rec, const std::vector<size_t>& content) {
    const AttentionTensor& t = rec.tensor;
    double head_sum = 0.0;
    for (uint32_t h = 0; h < t.heads; ++h) {
        double peak = 0.0;
        for (size_t i : content) {
            double v = 0.0;
            for (uint32_t step = 0; step < t.steps; ++step)
                for (uint32_t l = 0; l < t.layers; ++l) v += t.slice(step, l, h)[i];
            v /= static_cast<double>(t.steps) * t.layers;
            if (v > peak) peak = v;
        }
        head_sum += peak;
    }
    return head_sum / static_cast<double>(t.heads);
}

double naive_local_bias(const SentenceRecord& rec, const std::vector<size_t>& content) {
    const AttentionTensor& t = rec.tensor;
    const size_t k = content.size();
    double sum = 0.0;
    for (uint32_t step = 0; step < t.steps; ++step) {
        std::vector<double> q(k, 0.0);
        for (size_t j = 0; j < k; ++j) {
            for (uint32_t l = 0; l < t.layers; ++l)
                for (uint32_t h = 0; h < t.heads; ++h) {
                    q[j] += t.slice(step, l, h)[content[j]];
                }
            q[j] /= static_cast<double>(t.layers) * t.heads;
        }
        size_t d = 0;
        if (t.steps > 1) {
            d = static_cast<size_t>(std::llround(static_cast<double>(step) *
                                                 static_cast<double>(k - 1) /
                                                 (static_cast<double>(t.steps) - 1.0)));
        }
        double total = 0.0;
        for (double x : q) total += x;
        if (total > 0.0) sum += q[d] / (total / static_cast<double>(k));
    }
    return sum / static_cast<double>(t.steps);
}

MassBreakdown naive_mass(const SentenceRecord& rec, const ClassifierConfig& config) {
    const AttentionTensor& t = rec.tensor;
    double by_class[4] = {0.0, 0.0, 0.0, 0.0};
    for (size_t i = 0; i < rec.src_tokens.size(); ++i) {
        const TokenClass cls = classify_token(rec.src_tokens[i], config);
        double col = 0.0;
        for (uint32_t step = 0; step < t.steps; ++step)
            for (uint32_t l = 0; l < t.layers; ++l)
                for (uint32_t h = 0; h < t.heads; ++h) col += t.slice(step, l, h)[i];
        by_class[static_cast<size_t>(cls)] += col;
    }
    const double total = by_class[0] + by_class[1] + by_class[2] + by_class[3];
    MassBreakdown mass;
    if (total > 0.0) {
        mass.language_tag = by_class[0] / total;
        mass.punctuation = by_class[1] / total;
        mass.special = by_class[2] / total;
        mass.content = by_class[3] / total;
    }
    return mass;
}

MetricSummary two_pass_summary(const std::vector<double>& xs) {
    MetricSummary s;
    s.count = xs.size();
    if (xs.empty()) return s;
    double sum = 0.0;
    for (double x : xs) sum += x;
    s.mean = sum / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double sq = 0.0;
        for (double x : xs) sq += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(sq / static_cast<double>(xs.size() - 1));
    }
    return s;
}

}  // namespace

std::vector<SentenceRecord> filter_corpus(const std::vector<SentenceRecord>& corpus,
                                          const ClassifierConfig& config) {
    std::vector<SentenceRecord> out;
    for (const SentenceRecord& rec : corpus) {
        const std::vector<size_t> content = content_positions(rec, config);
        SentenceRecord copy = rec;
        AttentionTensor& t = copy.tensor;
        bool skip = false;
        for (uint32_t step = 0; step < t.steps && !skip; ++step) {
            for (uint32_t l = 0; l < t.layers && !skip; ++l) {
                for (uint32_t h = 0; h < t.heads && !skip; ++h) {
                    auto slice = t.slice(step, l, h);
                    double denom = 0.0;
                    for (size_t i : content) denom += slice[i];
                    if (denom < kEpsilonMass) {
                        skip = true;
                        break;
                    }
                    std::vector<float> fresh(t.src_len, 0.0f);
                    for (size_t i : content) {
                        fresh[i] = static_cast<float>(static_cast<double>(slice[i]) / denom);
                    }
                    for (size_t i = 0; i < t.src_len; ++i) slice[i] = fresh[i];
                }
            }
        }
        if (!skip) out.push_back(std::move(copy));
    }
    return out;
}

SentenceMetrics sentence_metrics(const SentenceRecord& rec, const ContentMask& mask,
                                 bool filtered) {
    std::vector<size_t> content;
    for (size_t i = 0; i < mask.bits.size(); ++i) {
        if (mask.bits[i]) content.push_back(i);
    }
    if (content.empty()) throw ZeroContentMass("no content positions", 0.0);
    SentenceMetrics m;
    m.uniformity = naive_uniformity(rec, content, filtered);
    m.entropy_bits = naive_entropy(rec);
    m.peak_attention = naive_peak(rec, content);
    m.local_bias = naive_local_bias(rec, content);
    return m;
}

CorpusSummary corpus_stats(const std::vector<SentenceRecord>& corpus,
                           const ClassifierConfig& config, bool filtered) {
    std::vector<double> mass_special, mass_lang, mass_punct, mass_content;
    std::vector<double> unif, entr, peak, bias;
    CorpusSummary summary;
    for (const SentenceRecord& rec : corpus) {
        const std::vector<size_t> content = content_positions(rec, config);
        if (content.empty()) {
            ++summary.skipped;
            continue;
        }
        const MassBreakdown mass = naive_mass(rec, config);
        mass_special.push_back(mass.special);
        mass_lang.push_back(mass.language_tag);
        mass_punct.push_back(mass.punctuation);
        mass_content.push_back(mass.content);
        unif.push_back(naive_uniformity(rec, content, filtered));
        entr.push_back(naive_entropy(rec));
        peak.push_back(naive_peak(rec, content));
        bias.push_back(naive_local_bias(rec, content));
    }
    summary.mass_special = two_pass_summary(mass_special);
    summary.mass_language_tag = two_pass_summary(mass_lang);
    summary.mass_punctuation = two_pass_summary(mass_punct);
    summary.mass_content = two_pass_summary(mass_content);
    summary.uniformity = two_pass_summary(unif);
    summary.entropy_bits = two_pass_summary(entr);
    summary.peak_attention = two_pass_summary(peak);
    summary.local_bias = two_pass_summary(bias);
    return summary;
}

}  // namespace attnsink::reference
