#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "attnsink/attention_store.hpp"
#include "attnsink/filter_core.hpp"
#include "attnsink/metrics.hpp"

namespace attnsink {

// Number of sentences held in flight by the streaming drivers; bounds the
// pipeline's memory at batch_size tensors regardless of corpus size.
inline constexpr size_t kPipelineBatch = 32;

int resolve_threads(int requested);  // 0 = all available

struct FilterSummary {
    uint64_t processed = 0;
    uint64_t skipped = 0;
    std::vector<int64_t> skipped_ids;
    // Mean over slices of the pre-filter content mass (the renormalization
    // denominator); the coverage figure reported next to the mass breakdown.
    double content_coverage_mean = 0.0;
    double wall_time_s = 0.0;
};

struct FilterBatchResult {
    std::vector<uint8_t> keep;  // per input sentence, 0 = skipped
    std::vector<int64_t> skipped_ids;
    double coverage_sum = 0.0;  // pre-filter content mass summed over slices
    uint64_t slice_count = 0;
};

struct SentenceStatsRow {
    int64_t sentence_id = 0;
    MassBreakdown mass;
    SentenceMetrics metrics;
};

struct StatsResult {
    CorpusStats stats;
    std::vector<SentenceStatsRow> rows;  // in corpus order
    std::vector<int64_t> skipped_ids;
};

// OpenMP kernels over an in-memory batch. Per-sentence results land in
// order-indexed slots and are merged in sentence order, so output is
// independent of thread count and scheduling.
FilterBatchResult filter_batch(std::span<SentenceRecord> batch, const ClassifierConfig& config,
                               FilterPolicy policy, int threads);
StatsResult stats_batch(std::span<const SentenceRecord> batch, const ClassifierConfig& config,
                        bool filtered, int threads, bool keep_rows = true);

// Streaming drivers: read in batches of kPipelineBatch, process in parallel,
// emit single-threaded in corpus order.
FilterSummary filter_corpus_file(const std::string& input_path, const std::string& output_path,
                                 const ClassifierConfig& config, FilterPolicy policy,
                                 int threads, bool strict);
StatsResult stats_corpus_file(const std::string& input_path, const ClassifierConfig& config,
                              int threads, bool strict, bool keep_rows = true,
                              CorpusHeader* header_out = nullptr);

// Corpus-mean uniformity as a percentage, plus the per-sentence series
// (sentence_id, uniformity fraction) for variance checks. Filtered corpora
// use the content-only convention, raw corpora all source positions.
struct UniformitySeries {
    double mean_pct = 0.0;
    std::vector<std::pair<int64_t, double>> values;
};
UniformitySeries uniformity_series_file(const std::string& path, const ClassifierConfig& config,
                                        int threads, bool strict);

}  // namespace attnsink
