// Acceptance suite: one pass/fail line per criterion, exit 0 only when all
// pass. Criterion 7 re-executes this binary in a child process so the
// resident-memory high-water mark covers exactly the streaming round trip.

#include <sys/resource.h>
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "attnsink/attention_store.hpp"
#include "attnsink/errors.hpp"
#include "attnsink/filter_core.hpp"
#include "attnsink/heatmap.hpp"
#include "attnsink/metrics.hpp"
#include "attnsink/pipeline.hpp"
#include "attnsink/reference.hpp"
#include "attnsink/rng.hpp"
#include "attnsink/synth.hpp"
#include "test_support.hpp"

using namespace attnsink;
using nlohmann::json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
    if (!ok) throw Failure(what);
}

int run_command(const std::string& cmd) {
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string cli() { return ATTNSINK_CLI_PATH; }

json read_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Failure("missing file: " + path);
    return json::parse(in);
}

// ---------------------------------------------------------------------- 1

void criterion_1_comparison(const testsupport::TempDir& dir) {
    const auto start = std::chrono::steady_clock::now();
    const std::string out = dir.file("comparison.json");
    require(run_command(cli() + " compare --values 36.7,70.7,28.7,53.8 --json " + out +
                        " --table " + dir.file("comparison.txt")) == 0,
            "cmd_compare failed");
    const json doc = read_json(out);

    require(std::llround(doc.at("tf_change_pct").get<double>()) == 93,
            "TF relative change must round to +93%");
    require(std::llround(doc.at("gen_change_pct").get<double>()) == 87,
            "Gen relative change must round to +87%");
    require(std::fabs(doc.at("gap_before_pp").get<double>() - 8.0) < 1e-9,
            "before gap must be 8.0 pp exactly");
    require(std::fabs(doc.at("gap_after_pp").get<double>() - 16.9) < 1e-9,
            "after gap must be 16.9 pp exactly");
    require(std::fabs(doc.at("generation_divergence_pct").get<double>() - 23.9) <= 0.05,
            "divergence must be 23.9% within 0.05 pp");
    const double elapsed = seconds_since(start);
    require(elapsed < 1.0, "runtime must stay under 1 s");
}

// ---------------------------------------------------------------------- 2

SinkProfile sweep_profile(double sink_total, uint64_t seed) {
    SinkProfile p;
    const double scale = sink_total / (0.832 + 0.018 + 0.029);
    p.special_mass = 0.832 * scale;
    p.langtag_mass = 0.018 * scale;
    p.punct_mass = 0.029 * scale;
    p.content_mass = 1.0 - sink_total;
    p.kernel_spread_sigma = 2.0;
    p.noise_alpha = 3.0;
    p.seed = seed;
    return p;
}

void criterion_2_sink_invariance(const testsupport::TempDir&) {
    const auto start = std::chrono::steady_clock::now();
    const ClassifierConfig config = default_classifier_config();
    CorpusShape shape;
    shape.min_tgt_len = 15;
    shape.max_tgt_len = 23;
    shape.min_src_len = 18;
    shape.max_src_len = 26;
    shape.layers = 4;
    shape.heads = 4;

    const double sweep[] = {0.50, 0.832, 0.91};
    std::vector<std::vector<SentenceRecord>> filtered;
    std::vector<CorpusStats> stats;
    for (double sink_total : sweep) {
        const CorpusGenerator gen(sweep_profile(sink_total, 777), shape);
        std::vector<SentenceRecord> records;
        for (auto& s : generate_sentences(gen, 100)) records.push_back(std::move(s.record));
        const FilterBatchResult r = filter_batch(records, config, FilterPolicy::Error, 0);
        require(r.skipped_ids.empty(), "synthetic corpora must not skip");
        const StatsResult sr = stats_batch(records, config, /*filtered=*/true, 0, false);
        stats.push_back(sr.stats);
        filtered.push_back(std::move(records));
    }

    for (size_t p = 1; p < filtered.size(); ++p) {
        require(filtered[p].size() == filtered[0].size(), "corpus sizes diverged");
        for (size_t s = 0; s < filtered[0].size(); ++s) {
            const auto& a = filtered[0][s].tensor.data;
            const auto& b = filtered[p][s].tensor.data;
            require(a.size() == b.size(), "tensor shapes diverged");
            for (size_t i = 0; i < a.size(); ++i) {
                require(std::fabs(a[i] - b[i]) < 1e-5,
                        "filtered tensors differ beyond 1e-5 at sink sweep");
            }
        }
        const auto close = [](double x, double y, const char* name) {
            require(std::fabs(x - y) < 1e-5, std::string(name) + " differs beyond 1e-5");
        };
        close(stats[p].uniformity.mean, stats[0].uniformity.mean, "uniformity");
        close(stats[p].entropy_bits.mean, stats[0].entropy_bits.mean, "entropy");
        close(stats[p].peak_attention.mean, stats[0].peak_attention.mean, "peak");
        close(stats[p].local_bias.mean, stats[0].local_bias.mean, "local bias");
        close(stats[p].mass_content.mean, stats[0].mass_content.mean, "content mass");
    }
    require(seconds_since(start) < 30.0, "runtime must stay under 30 s");
}

// ---------------------------------------------------------------------- 3

void criterion_3_mass_recovery(const testsupport::TempDir& dir) {
    const std::string corpus = dir.file("mass.atsf");
    require(run_command(cli() + " synth --out " + corpus +
                        " --sentences 100 --layers 2 --heads 2 --src-len 18:26 "
                        "--tgt-len 15:23 --seed 4242 > /dev/null") == 0,
            "cmd_synth failed");
    const std::string out = dir.file("mass.json");
    require(run_command(cli() + " stats " + corpus + " --json " + out) == 0, "cmd_stats failed");
    const json doc = read_json(out);

    const auto mean_of = [&](const char* key) {
        return doc.at("corpus").at(key).at("mean").get<double>();
    };
    require(std::fabs(mean_of("mass_special") - 0.832) <= 0.005, "special mass off by >0.5 pp");
    require(std::fabs(mean_of("mass_language_tag") - 0.018) <= 0.005,
            "language-tag mass off by >0.5 pp");
    require(std::fabs(mean_of("mass_punctuation") - 0.029) <= 0.005,
            "punctuation mass off by >0.5 pp");
    require(std::fabs(mean_of("mass_content") - 0.121) <= 0.005, "content mass off by >0.5 pp");

    // The partition check runs at full f64 precision through the library
    // (the emitted JSON rounds to 6 significant digits by design).
    const ClassifierConfig config = default_classifier_config();
    const StatsResult exact = stats_corpus_file(corpus, config, 0, true);
    const double sum = exact.stats.mass_special.mean + exact.stats.mass_language_tag.mean +
                       exact.stats.mass_punctuation.mean + exact.stats.mass_content.mean;
    require(std::fabs(sum - 1.0) <= 1e-9, "four class means must sum to 1 within 1e-9");
    require(exact.stats.processed == 100, "all 100 sentences must be processed");
}

// ---------------------------------------------------------------------- 4

void criterion_4_oracle_equivalence(const testsupport::TempDir& dir) {
    SinkProfile profile;
    profile.noise_alpha = 2.0;
    profile.seed = 31337;
    CorpusShape shape;
    shape.min_tgt_len = 3;
    shape.max_tgt_len = 8;
    shape.min_src_len = 6;
    shape.max_src_len = 12;
    shape.layers = 2;
    shape.heads = 2;
    const CorpusGenerator gen(profile, shape);
    const std::string path = dir.file("oracle.atsf");
    generate_corpus_files(gen, 10, CorpusMode::TeacherForcing, "eng_Latn", "swh_Latn", path);

    const ClassifierConfig config = default_classifier_config();
    const StatsResult streamed = stats_corpus_file(path, config, 0, true);
    const reference::CorpusSummary naive =
        reference::corpus_stats(read_corpus(path), config, false);

    const auto close = [](const RunningStat& a, const reference::MetricSummary& b,
                          const char* name) {
        require(a.count == b.count, std::string(name) + ": counts differ");
        require(std::fabs(a.mean - b.mean) < 1e-9, std::string(name) + ": means differ");
        require(std::fabs(a.sample_stddev() - b.stddev) < 1e-9,
                std::string(name) + ": stddevs differ");
    };
    close(streamed.stats.mass_special, naive.mass_special, "mass_special");
    close(streamed.stats.mass_language_tag, naive.mass_language_tag, "mass_language_tag");
    close(streamed.stats.mass_punctuation, naive.mass_punctuation, "mass_punctuation");
    close(streamed.stats.mass_content, naive.mass_content, "mass_content");
    close(streamed.stats.uniformity, naive.uniformity, "uniformity");
    close(streamed.stats.entropy_bits, naive.entropy_bits, "entropy_bits");
    close(streamed.stats.peak_attention, naive.peak_attention, "peak_attention");
    close(streamed.stats.local_bias, naive.local_bias, "local_bias");
}

// ---------------------------------------------------------------------- 5

void criterion_5_metric_bounds(const testsupport::TempDir&) {
    const ClassifierConfig config = default_classifier_config();
    Rng rng(20260810);
    int checked = 0;
    for (int iter = 0; iter < 1400 && checked < 1200; ++iter) {
        const SentenceRecord raw = testsupport::random_record(rng, iter);
        const ContentMask mask = make_content_mask(raw.src_tokens, config);

        // Slice-level filter contract on the raw tensor.
        const AttentionTensor& t = raw.tensor;
        bool zero_mass = false;
        for (uint32_t step = 0; step < t.steps && !zero_mass; ++step) {
            for (uint32_t l = 0; l < t.layers && !zero_mass; ++l) {
                for (uint32_t h = 0; h < t.heads && !zero_mass; ++h) {
                    std::vector<double> out;
                    try {
                        out = filter_slice(t.slice(step, l, h), mask);
                    } catch (const ZeroContentMass&) {
                        zero_mass = true;
                        break;
                    }
                    double sum = 0.0;
                    for (size_t i = 0; i < out.size(); ++i) {
                        if (!mask.bits[i]) {
                            require(out[i] == 0.0, "masked entry must be exactly zero");
                        }
                        sum += out[i];
                    }
                    require(std::fabs(sum - 1.0) <= 1e-6, "filtered slice must sum to 1 +- 1e-6");
                }
            }
        }
        if (zero_mass) continue;

        const auto filtered = filter_sentence(raw, config, FilterPolicy::Error);
        const SentenceMetrics m = compute_sentence_metrics(*filtered, mask, true);
        const double k = static_cast<double>(mask.n_content);
        require(m.entropy_bits >= -1e-9, "entropy must be non-negative");
        require(m.entropy_bits <= std::log2(k) + 1e-4,
                "entropy must not exceed log2(n_content)");
        require(m.peak_attention >= 1.0 / k - 1e-6, "peak must be >= 1/n_content");
        require(m.peak_attention <= 1.0 + 1e-9, "peak must be <= 1");
        require(m.uniformity > 0.0, "uniformity must be positive");
        require(m.uniformity <= 1.0, "uniformity must be <= 1");
        ++checked;
    }
    require(checked >= 1000, "need at least 1000 random tensors, got " + std::to_string(checked));

    // local_bias(uniform) = 1 exactly, across assorted shapes.
    for (uint32_t steps : {1u, 2u, 5u, 9u}) {
        for (uint32_t n : {2u, 3u, 8u, 21u}) {
            const auto rec = testsupport::make_record(
                0, testsupport::synthetic_tokens(std::max(n, 4u)),
                std::vector<std::string>(steps, "▁y"), 2, 2,
                [&](uint32_t, uint32_t, uint32_t) {
                    return std::vector<float>(std::max(n, 4u),
                                              1.0f / static_cast<float>(std::max(n, 4u)));
                });
            ContentMask all;
            all.bits.assign(std::max(n, 4u), 1);
            all.n_content = std::max(n, 4u);
            require(local_bias(rec, all) == 1.0, "local bias of uniform must be exactly 1");
        }
    }
}

// ---------------------------------------------------------------------- 6

void criterion_6_variance_reduction(const testsupport::TempDir&) {
    const ClassifierConfig config = default_classifier_config();
    CorpusShape shape;
    shape.min_tgt_len = 15;
    shape.max_tgt_len = 23;
    shape.min_src_len = 18;
    shape.max_src_len = 26;
    shape.layers = 2;
    shape.heads = 2;

    Rng sink_rng(909);
    std::vector<std::pair<int64_t, double>> before;
    std::vector<std::pair<int64_t, double>> after;
    for (int64_t id = 0; id < 100; ++id) {
        // Per-sentence sink fraction drawn from [0.7, 0.95]; the content
        // kernel stays tied to (seed, id) so only the sink share varies.
        const double sink_total = sink_rng.uniform(0.7, 0.95);
        const CorpusGenerator gen(sweep_profile(sink_total, 2024), shape);
        SynthSentence s = gen.make_sentence(id);

        before.emplace_back(id, uniformity(s.record, nullptr));
        const auto filtered = filter_sentence(s.record, config, FilterPolicy::Error);
        const ContentMask mask = make_content_mask(filtered->src_tokens, config);
        after.emplace_back(id, uniformity(*filtered, &mask));
    }
    const VarianceCheck v = variance_check(before, after);
    require(v.reduced, "filtered uniformity variance must be strictly lower (got " +
                           std::to_string(v.var_before) + " -> " + std::to_string(v.var_after) +
                           ")");
}

// ---------------------------------------------------------------------- 7

struct RoundTripReport {
    bool identical = false;
    double file_mb = 0.0;
    double rss_mb = 0.0;
};

// Child-process body: generate, round-trip, compare, report RSS.
int criterion_7_child(const std::string& scratch, const std::string& report_path) {
    SinkProfile profile;
    profile.noise_alpha = 1.5;
    profile.seed = 515151;
    CorpusShape shape;
    shape.min_tgt_len = 19;
    shape.max_tgt_len = 19;
    shape.min_src_len = 22;
    shape.max_src_len = 22;
    shape.layers = 12;
    shape.heads = 16;
    const CorpusGenerator gen(profile, shape);

    const std::string original = scratch + "/roundtrip-a.atsf";
    const std::string copy = scratch + "/roundtrip-b.atsf";
    generate_corpus_files(gen, 1000, CorpusMode::TeacherForcing, "eng_Latn", "swh_Latn",
                          original);

    {
        CorpusReader reader(original);
        CorpusWriter writer(copy, reader.header());
        SentenceRecord rec;
        while (reader.next(rec)) writer.write(rec);
        writer.finish();
    }

    RoundTripReport report;
    report.file_mb = static_cast<double>(std::filesystem::file_size(original)) / (1024.0 * 1024.0);

    // Streamed byte comparison.
    std::ifstream a(original, std::ios::binary);
    std::ifstream b(copy, std::ios::binary);
    report.identical = true;
    std::vector<char> buf_a(1 << 20), buf_b(1 << 20);
    while (report.identical) {
        a.read(buf_a.data(), static_cast<std::streamsize>(buf_a.size()));
        b.read(buf_b.data(), static_cast<std::streamsize>(buf_b.size()));
        if (a.gcount() != b.gcount() ||
            std::memcmp(buf_a.data(), buf_b.data(), static_cast<size_t>(a.gcount())) != 0) {
            report.identical = false;
        }
        if (a.gcount() == 0) break;
    }

    rusage usage{};
    getrusage(RUSAGE_SELF, &usage);
    report.rss_mb = static_cast<double>(usage.ru_maxrss) / 1024.0;  // KiB on Linux

    std::remove(original.c_str());
    std::remove(copy.c_str());

    json doc;
    doc["identical"] = report.identical;
    doc["file_mb"] = report.file_mb;
    doc["rss_mb"] = report.rss_mb;
    std::ofstream out(report_path, std::ios::binary);
    out << doc.dump() << "\n";
    return out ? 0 : 1;
}

void criterion_7_roundtrip(const testsupport::TempDir& dir) {
    const std::string report_path = dir.file("roundtrip.json");
    const std::string self = std::filesystem::read_symlink("/proc/self/exe").string();
    require(run_command(self + " --criterion7-child " + dir.path().string() + " " +
                        report_path) == 0,
            "round-trip child process failed");
    const json doc = read_json(report_path);
    require(doc.at("file_mb").get<double>() > 300.0, "corpus should be ~321 MB on disk");
    require(doc.at("identical").get<bool>(), "write->read->write must be byte-identical");
    const double rss = doc.at("rss_mb").get<double>();
    require(rss < 100.0,
            "peak RSS must stay under 100 MB, measured " + std::to_string(rss) + " MB");
}

// ---------------------------------------------------------------------- 8

void criterion_8_throughput(const testsupport::TempDir& dir) {
    const auto start = std::chrono::steady_clock::now();
    const std::string tf_raw = dir.file("tf.atsf");
    const std::string gen_raw = dir.file("gen.atsf");
    const std::string tf_filt = dir.file("tf-filtered.atsf");
    const std::string gen_filt = dir.file("gen-filtered.atsf");

    const std::string shape_flags =
        " --sentences 1000 --layers 12 --heads 16 --src-len 18:26 --tgt-len 15:23";
    require(run_command(cli() + " synth --out " + tf_raw + shape_flags +
                        " --seed 808 --mode tf > /dev/null") == 0,
            "synth tf failed");
    require(run_command(cli() + " synth --out " + gen_raw + shape_flags +
                        " --seed 809 --mode gen > /dev/null") == 0,
            "synth gen failed");
    require(run_command(cli() + " filter " + tf_raw + " " + tf_filt + " > /dev/null") == 0,
            "filter tf failed");
    require(run_command(cli() + " filter " + gen_raw + " " + gen_filt + " > /dev/null") == 0,
            "filter gen failed");
    require(run_command(cli() + " stats " + tf_filt + " --json " + dir.file("tf.json") +
                        " --csv " + dir.file("tf.csv") + " > /dev/null") == 0,
            "stats tf failed");
    require(run_command(cli() + " stats " + gen_filt + " --json " + dir.file("gen.json") +
                        " --csv " + dir.file("gen.csv") + " > /dev/null") == 0,
            "stats gen failed");
    require(run_command(cli() + " compare " + tf_filt + " " + gen_filt + " --tf-raw " + tf_raw +
                        " --gen-raw " + gen_raw + " --json " + dir.file("cmp.json") +
                        " --table " + dir.file("cmp.txt")) == 0,
            "compare failed");

    const double elapsed = seconds_since(start);
    for (const auto& f : {tf_raw, gen_raw, tf_filt, gen_filt}) std::remove(f.c_str());
    require(elapsed < 60.0,
            "pipeline took " + std::to_string(elapsed) + " s, budget is 60 s");

    const json cmp = read_json(dir.file("cmp.json"));
    require(cmp.at("tf_variance").at("reduced").get<bool>(),
            "filtering must reduce TF uniformity variance at corpus scale");
}

}  // namespace

int main(int argc, char** argv) {
    if (argc == 4 && std::strcmp(argv[1], "--criterion7-child") == 0) {
        return criterion_7_child(argv[2], argv[3]);
    }

    const testsupport::TempDir dir;
    struct Criterion {
        int id;
        const char* title;
        std::function<void(const testsupport::TempDir&)> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "comparison arithmetic via cmd_compare", criterion_1_comparison},
        {2, "sink invariance across 0.50/0.832/0.91 profiles", criterion_2_sink_invariance},
        {3, "planted mass recovery via cmd_stats", criterion_3_mass_recovery},
        {4, "streamed stats equal the in-memory reference", criterion_4_oracle_equivalence},
        {5, "metric bounds on 1000+ random tensors", criterion_5_metric_bounds},
        {6, "filtering reduces cross-sentence uniformity variance",
         criterion_6_variance_reduction},
        {7, "ATSF round-trip is bit-identical under 100 MB RSS", criterion_7_roundtrip},
        {8, "1000-sentence full pipeline finishes under 60 s", criterion_8_throughput},
    };

    int failures = 0;
    for (const auto& criterion : criteria) {
        const auto start = std::chrono::steady_clock::now();
        std::string error;
        try {
            criterion.run(dir);
        } catch (const std::exception& e) {
            error = e.what();
        }
        const double elapsed = seconds_since(start);
        if (error.empty()) {
            std::printf("[PASS] criterion %d: %s (%.2f s)\n", criterion.id, criterion.title,
                        elapsed);
        } else {
            std::printf("[FAIL] criterion %d: %s (%.2f s): %s\n", criterion.id, criterion.title,
                        elapsed, error.c_str());
            ++failures;
        }
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
