// Races the OpenMP batch kernels against the serial reference implementation
// on an in-memory synthetic corpus and reports throughput per path.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "attnsink/filter_core.hpp"
#include "attnsink/pipeline.hpp"
#include "attnsink/reference.hpp"
#include "attnsink/synth.hpp"

using namespace attnsink;

namespace {

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

struct Timing {
    double filter_s = 0.0;
    double stats_s = 0.0;
};

Timing run_reference(const std::vector<SentenceRecord>& corpus, const ClassifierConfig& config,
                     reference::CorpusSummary& out) {
    Timing t;
    double start = now_s();
    const std::vector<SentenceRecord> filtered = reference::filter_corpus(corpus, config);
    t.filter_s = now_s() - start;
    start = now_s();
    out = reference::corpus_stats(filtered, config, /*filtered=*/true);
    t.stats_s = now_s() - start;
    return t;
}

Timing run_parallel(std::vector<SentenceRecord> corpus, const ClassifierConfig& config,
                    int threads, CorpusStats& out) {
    Timing t;
    double start = now_s();
    filter_batch(corpus, config, FilterPolicy::Skip, threads);
    t.filter_s = now_s() - start;
    start = now_s();
    out = stats_batch(corpus, config, /*filtered=*/true, threads, /*keep_rows=*/false).stats;
    t.stats_s = now_s() - start;
    return t;
}

}  // namespace

int main(int argc, char** argv) {
    uint64_t sentences = 300;
    if (argc > 1) sentences = std::strtoull(argv[1], nullptr, 10);

    SinkProfile profile;
    profile.noise_alpha = 2.0;
    profile.seed = 1;
    CorpusShape shape;  // production-like geometry: 12 layers, 16 heads
    const CorpusGenerator gen(profile, shape);

    std::printf("generating %llu sentences (L=%u, H=%u)...\n",
                static_cast<unsigned long long>(sentences), shape.layers, shape.heads);
    std::vector<SentenceRecord> corpus;
    corpus.reserve(sentences);
    for (auto& s : generate_sentences(gen, sentences)) corpus.push_back(std::move(s.record));

    const ClassifierConfig config = default_classifier_config();

    reference::CorpusSummary ref_summary;
    const Timing ref = run_reference(corpus, config, ref_summary);

    CorpusStats par1;
    const Timing serial = run_parallel(corpus, config, 1, par1);

    int max_threads = 1;
#ifdef _OPENMP
    max_threads = omp_get_max_threads();
#endif
    CorpusStats parN;
    const Timing parallel = run_parallel(corpus, config, max_threads, parN);

    std::printf("\n%-28s %10s %10s\n", "path", "filter[s]", "stats[s]");
    std::printf("%-28s %10.3f %10.3f\n", "serial reference", ref.filter_s, ref.stats_s);
    std::printf("%-28s %10.3f %10.3f\n", "batch kernels, 1 thread", serial.filter_s,
                serial.stats_s);
    std::printf("%-28s %10.3f %10.3f  (%d threads)\n", "batch kernels, OpenMP",
                parallel.filter_s, parallel.stats_s, max_threads);
    const double ref_total = ref.filter_s + ref.stats_s;
    const double par_total = parallel.filter_s + parallel.stats_s;
    if (par_total > 0.0) {
        std::printf("\nspeedup vs reference: %.2fx\n", ref_total / par_total);
    }

    // The two paths must agree, otherwise the race is meaningless.
    const double drift = std::fabs(parN.uniformity.mean - ref_summary.uniformity.mean) +
                         std::fabs(parN.entropy_bits.mean - ref_summary.entropy_bits.mean);
    if (drift > 1e-9) {
        std::printf("MISMATCH: parallel and reference stats drifted by %g\n", drift);
        return 1;
    }
    std::printf("paths agree (drift %.2e)\n", drift);
    return 0;
}
