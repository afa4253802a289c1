#pragma once

#include <vector>

#include "attnsink/attention_store.hpp"
#include "attnsink/filter_core.hpp"
#include "attnsink/metrics.hpp"
#include "attnsink/pipeline.hpp"

// Serial all-in-memory reference implementations. These deliberately use the
// plainest possible loops and two-pass statistics; the streaming OpenMP
// pipeline is checked against them in the tests and raced against them in
// the benchmark.
namespace attnsink::reference {

// Filters a whole corpus serially; skipped sentences are dropped.
std::vector<SentenceRecord> filter_corpus(const std::vector<SentenceRecord>& corpus,
                                          const ClassifierConfig& config);

struct MetricSummary {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation
    uint64_t count = 0;
};

struct CorpusSummary {
    MetricSummary mass_special;
    MetricSummary mass_language_tag;
    MetricSummary mass_punctuation;
    MetricSummary mass_content;
    MetricSummary uniformity;
    MetricSummary entropy_bits;
    MetricSummary peak_attention;
    MetricSummary local_bias;
    uint64_t skipped = 0;
};

// Naive per-sentence metrics (independent loop nests per metric, no shared
// tensor pass) aggregated with two-pass mean/stddev.
SentenceMetrics sentence_metrics(const SentenceRecord& rec, const ContentMask& mask,
                                 bool filtered);
CorpusSummary corpus_stats(const std::vector<SentenceRecord>& corpus,
                           const ClassifierConfig& config, bool filtered);

}  // namespace attnsink::reference
