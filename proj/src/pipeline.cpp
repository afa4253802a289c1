#include "attnsink/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "attnsink/errors.hpp"

namespace attnsink {

namespace {

// First captured exception in sentence order wins.
void rethrow_first(const std::vector<std::exception_ptr>& errors) {
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

template <typename Fn>
void for_each_batch(CorpusReader& reader, Fn&& handle_batch) {
    std::vector<SentenceRecord> batch;
    batch.reserve(kPipelineBatch);
    SentenceRecord rec;
    while (reader.next(rec)) {
        batch.push_back(std::move(rec));
        if (batch.size() == kPipelineBatch) {
            handle_batch(batch);
            batch.clear();
        }
    }
    if (!batch.empty()) handle_batch(batch);
}

}  // namespace

int resolve_threads(int requested) {
    if (requested > 0) return requested;
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

FilterBatchResult filter_batch(std::span<SentenceRecord> batch, const ClassifierConfig& config,
                               FilterPolicy policy, int threads) {
    const int nthreads = resolve_threads(threads);
    const int64_t count = static_cast<int64_t>(batch.size());
    FilterBatchResult result;
    result.keep.assign(batch.size(), 0);
    std::vector<double> coverage(batch.size(), 0.0);
    std::vector<uint64_t> slices(batch.size(), 0);
    std::vector<std::exception_ptr> errors(batch.size());

#pragma omp parallel for schedule(dynamic) num_threads(nthreads)
    for (int64_t i = 0; i < count; ++i) {
        try {
            SentenceRecord& rec = batch[static_cast<size_t>(i)];
            const ContentMask mask = make_content_mask(rec.src_tokens, config);
            const AttentionTensor& t = rec.tensor;
            slices[i] = static_cast<uint64_t>(t.steps) * t.layers * t.heads;
            double cov = 0.0;
            result.keep[i] = filter_sentence_inplace(rec, mask, policy, &cov) ? 1 : 0;
            coverage[i] = cov;
        } catch (...) {
            errors[i] = std::current_exception();
        }
    }
    rethrow_first(errors);

    for (size_t i = 0; i < batch.size(); ++i) {
        if (result.keep[i]) {
            result.coverage_sum += coverage[i] * static_cast<double>(slices[i]);
            result.slice_count += slices[i];
        } else {
            result.skipped_ids.push_back(batch[i].sentence_id);
        }
    }
    return result;
}

StatsResult stats_batch(std::span<const SentenceRecord> batch, const ClassifierConfig& config,
                        bool filtered, int threads, bool keep_rows) {
    const int nthreads = resolve_threads(threads);
    const int64_t count = static_cast<int64_t>(batch.size());
    std::vector<std::optional<SentenceStatsRow>> rows(batch.size());
    std::vector<std::exception_ptr> errors(batch.size());

#pragma omp parallel for schedule(dynamic) num_threads(nthreads)
    for (int64_t i = 0; i < count; ++i) {
        try {
            const SentenceRecord& rec = batch[static_cast<size_t>(i)];
            std::vector<TokenClass> classes;
            classes.reserve(rec.src_tokens.size());
            for (const auto& tok : rec.src_tokens) {
                classes.push_back(classify_token(tok, config));
            }
            ContentMask mask;
            mask.bits.resize(classes.size());
            for (size_t j = 0; j < classes.size(); ++j) {
                mask.bits[j] = classes[j] == TokenClass::Content ? 1 : 0;
                mask.n_content += mask.bits[j];
            }
            if (mask.n_content == 0) continue;  // skipped, no metrics possible
            SentenceStatsRow row;
            row.sentence_id = rec.sentence_id;
            row.mass = mass_by_class(rec, classes);
            row.metrics = compute_sentence_metrics(rec, mask, filtered);
            rows[i] = std::move(row);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    }
    rethrow_first(errors);

    StatsResult result;
    for (size_t i = 0; i < batch.size(); ++i) {
        if (!rows[i]) {
            ++result.stats.skipped;
            result.skipped_ids.push_back(batch[i].sentence_id);
            continue;
        }
        const SentenceStatsRow& row = *rows[i];
        result.stats.mass_special.add(row.mass.special);
        result.stats.mass_language_tag.add(row.mass.language_tag);
        result.stats.mass_punctuation.add(row.mass.punctuation);
        result.stats.mass_content.add(row.mass.content);
        result.stats.uniformity.add(row.metrics.uniformity);
        result.stats.entropy_bits.add(row.metrics.entropy_bits);
        result.stats.peak_attention.add(row.metrics.peak_attention);
        result.stats.local_bias.add(row.metrics.local_bias);
        ++result.stats.processed;
        if (keep_rows) result.rows.push_back(row);
    }
    return result;
}

FilterSummary filter_corpus_file(const std::string& input_path, const std::string& output_path,
                                 const ClassifierConfig& config, FilterPolicy policy,
                                 int threads, bool strict) {
    const auto start = std::chrono::steady_clock::now();
    CorpusReader reader(input_path, strict);

    CorpusHeader out_header = reader.header();
    out_header.filtered = true;
    out_header.n_sentences = reader.header().n_sentences;

    // Written against the input sentence count first; when skips shrink the
    // corpus the sentence blocks are salvaged verbatim under a fresh header.
    const std::string tmp_path = output_path + ".tmp";
    FilterSummary summary;
    double coverage_sum = 0.0;
    uint64_t slice_count = 0;
    size_t tmp_preamble = 0;
    try {
        CorpusWriter writer(tmp_path, out_header);
        tmp_preamble = writer.preamble_size();
        for_each_batch(reader, [&](std::vector<SentenceRecord>& batch) {
            FilterBatchResult r = filter_batch(batch, config, policy, threads);
            for (size_t i = 0; i < batch.size(); ++i) {
                if (r.keep[i]) writer.write(batch[i]);
            }
            summary.skipped_ids.insert(summary.skipped_ids.end(), r.skipped_ids.begin(),
                                       r.skipped_ids.end());
            coverage_sum += r.coverage_sum;
            slice_count += r.slice_count;
        });
        writer.finish_partial();
        summary.processed = writer.written();
    } catch (...) {
        std::remove(tmp_path.c_str());
        throw;
    }
    summary.skipped = summary.skipped_ids.size();
    summary.content_coverage_mean =
        slice_count ? coverage_sum / static_cast<double>(slice_count) : 0.0;

    std::error_code ec;
    if (summary.skipped == 0) {
        std::filesystem::rename(tmp_path, output_path, ec);
        if (ec) {
            std::remove(tmp_path.c_str());
            throw FormatError("cannot move output into place: " + ec.message());
        }
    } else {
        // Rewrite the preamble with the surviving count, then copy the
        // sentence blocks byte-for-byte.
        out_header.n_sentences = summary.processed;
        try {
            CorpusWriter(output_path, out_header).finish_partial();
            std::FILE* in = std::fopen(tmp_path.c_str(), "rb");
            if (!in) throw FormatError("cannot reopen " + tmp_path);
            std::FILE* out = std::fopen(output_path.c_str(), "ab");
            if (!out) {
                std::fclose(in);
                throw FormatError("cannot reopen " + output_path);
            }
            if (std::fseek(in, static_cast<long>(tmp_preamble), SEEK_SET) != 0) {
                std::fclose(in);
                std::fclose(out);
                throw FormatError("seek failed in " + tmp_path);
            }
            std::vector<char> buf(1 << 20);
            size_t got = 0;
            bool ok = true;
            while ((got = std::fread(buf.data(), 1, buf.size(), in)) > 0) {
                if (std::fwrite(buf.data(), 1, got, out) != got) {
                    ok = false;
                    break;
                }
            }
            ok = ok && std::ferror(in) == 0;
            std::fclose(in);
            ok = std::fclose(out) == 0 && ok;
            if (!ok) throw FormatError("salvage copy failed for " + output_path);
        } catch (...) {
            std::remove(tmp_path.c_str());
            std::remove(output_path.c_str());
            throw;
        }
        std::remove(tmp_path.c_str());
    }

    summary.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return summary;
}

StatsResult stats_corpus_file(const std::string& input_path, const ClassifierConfig& config,
                              int threads, bool strict, bool keep_rows,
                              CorpusHeader* header_out) {
    CorpusReader reader(input_path, strict);
    if (header_out) *header_out = reader.header();
    const bool filtered = reader.header().filtered;

    StatsResult total;
    total.stats.header = reader.header();
    for_each_batch(reader, [&](std::vector<SentenceRecord>& batch) {
        StatsResult r = stats_batch(batch, config, filtered, threads, keep_rows);
        total.stats.merge(r.stats);
        total.rows.insert(total.rows.end(), std::make_move_iterator(r.rows.begin()),
                          std::make_move_iterator(r.rows.end()));
        total.skipped_ids.insert(total.skipped_ids.end(), r.skipped_ids.begin(),
                                 r.skipped_ids.end());
    });
    return total;
}

UniformitySeries uniformity_series_file(const std::string& path, const ClassifierConfig& config,
                                        int threads, bool strict) {
    StatsResult r = stats_corpus_file(path, config, threads, strict, /*keep_rows=*/true);
    UniformitySeries series;
    series.mean_pct = r.stats.uniformity.mean * 100.0;
    series.values.reserve(r.rows.size());
    for (const auto& row : r.rows) {
        series.values.emplace_back(row.sentence_id, row.metrics.uniformity);
    }
    return series;
}

}  // namespace attnsink
