#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "attnsink/common.hpp"
#include "attnsink/errors.hpp"
#include "attnsink/heatmap.hpp"
#include "attnsink/metrics.hpp"
#include "attnsink/pipeline.hpp"
#include "attnsink/synth.hpp"
#include "attnsink/token_taxonomy.hpp"

namespace {

using attnsink::round_g6;
using ordered_json = nlohmann::ordered_json;

struct GlobalOpts {
    std::string config_path;
    bool strict = true;
    int threads = 0;  // 0 = auto
};

attnsink::ClassifierConfig resolve_config(const GlobalOpts& opts) {
    if (!opts.config_path.empty()) {
        return attnsink::load_classifier_config(opts.config_path);
    }
    if (const char* env = std::getenv("ATTNSINK_CONFIG"); env && *env) {
        return attnsink::load_classifier_config(env);
    }
    return attnsink::default_classifier_config();
}

void emit_json(const ordered_json& doc, const std::string& path) {
    const std::string text = doc.dump(2) + "\n";
    if (path.empty()) {
        std::fputs(text.c_str(), stdout);
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw attnsink::FormatError("cannot open for writing: " + path);
    out << text;
    if (!out) throw attnsink::FormatError("write failed for " + path);
}

ordered_json header_json(const attnsink::CorpusHeader& h) {
    ordered_json doc;
    doc["model_id"] = h.model_id;
    doc["src_lang"] = h.src_lang;
    doc["tgt_lang"] = h.tgt_lang;
    doc["mode"] = attnsink::corpus_mode_name(h.mode);
    doc["n_sentences"] = h.n_sentences;
    doc["n_layers"] = h.n_layers;
    doc["n_heads"] = h.n_heads;
    doc["format_version"] = h.format_version;
    if (h.filtered) doc["filtered"] = true;
    if (h.ground_truth) doc["ground_truth"] = true;
    return doc;
}

ordered_json stat_json(const attnsink::RunningStat& s) {
    ordered_json doc;
    doc["mean"] = round_g6(s.mean);
    doc["std"] = round_g6(s.sample_stddev());
    doc["count"] = s.count;
    return doc;
}

std::pair<uint32_t, uint32_t> parse_range(const std::string& text, const char* flag) {
    const auto colon = text.find(':');
    try {
        if (colon == std::string::npos) {
            const auto v = static_cast<uint32_t>(std::stoul(text));
            return {v, v};
        }
        return {static_cast<uint32_t>(std::stoul(text.substr(0, colon))),
                static_cast<uint32_t>(std::stoul(text.substr(colon + 1)))};
    } catch (const std::exception&) {
        throw attnsink::ConfigError(std::string(flag) + " expects MIN:MAX, got '" + text + "'");
    }
}

// ---------------------------------------------------------------- classify

int run_classify(const GlobalOpts& global, const std::vector<std::string>& tokens,
                 const std::string& in_path) {
    const attnsink::ClassifierConfig config = resolve_config(global);

    const auto emit_line = [&](const std::vector<std::string>& toks) {
        ordered_json doc;
        doc["tokens"] = toks;
        std::vector<std::string> classes;
        std::vector<int> mask;
        for (const auto& tok : toks) {
            const attnsink::TokenClass cls = attnsink::classify_token(tok, config);
            classes.push_back(attnsink::token_class_name(cls));
            mask.push_back(cls == attnsink::TokenClass::Content ? 1 : 0);
        }
        doc["classes"] = classes;
        doc["mask"] = mask;
        std::fputs((doc.dump() + "\n").c_str(), stdout);
    };

    if (!tokens.empty()) {
        emit_line(tokens);
        return 0;
    }
    std::ifstream file;
    std::istream* in = &std::cin;
    if (!in_path.empty()) {
        file.open(in_path, std::ios::binary);
        if (!file) throw attnsink::FormatError("cannot open input: " + in_path);
        in = &file;
    }
    std::string line;
    while (std::getline(*in, line)) {
        std::vector<std::string> toks;
        std::string tok;
        std::istringstream split(line);
        while (split >> tok) toks.push_back(tok);
        if (!toks.empty()) emit_line(toks);
    }
    return 0;
}

// ------------------------------------------------------------------ filter

int run_filter(const GlobalOpts& global, const std::string& input, const std::string& output,
               const std::string& policy_name) {
    const attnsink::ClassifierConfig config = resolve_config(global);
    attnsink::FilterPolicy policy;
    if (policy_name == "skip") {
        policy = attnsink::FilterPolicy::Skip;
    } else if (policy_name == "error") {
        policy = attnsink::FilterPolicy::Error;
    } else {
        throw attnsink::ConfigError("--policy must be 'skip' or 'error'");
    }

    const attnsink::FilterSummary summary = attnsink::filter_corpus_file(
        input, output, config, policy, global.threads, global.strict);

    ordered_json doc;
    doc["processed"] = summary.processed;
    doc["skipped"] = summary.skipped;
    if (policy == attnsink::FilterPolicy::Skip) doc["skipped_ids"] = summary.skipped_ids;
    doc["content_coverage"] = round_g6(summary.content_coverage_mean);
    doc["wall_time_s"] = round_g6(summary.wall_time_s);
    emit_json(doc, "");
    return 0;
}

// ------------------------------------------------------------------- stats

ordered_json row_json(const attnsink::SentenceStatsRow& row) {
    ordered_json doc;
    doc["sentence_id"] = row.sentence_id;
    doc["mass_special"] = round_g6(row.mass.special);
    doc["mass_language_tag"] = round_g6(row.mass.language_tag);
    doc["mass_punctuation"] = round_g6(row.mass.punctuation);
    doc["mass_content"] = round_g6(row.mass.content);
    doc["uniformity"] = round_g6(row.metrics.uniformity);
    doc["entropy_bits"] = round_g6(row.metrics.entropy_bits);
    doc["peak_attention"] = round_g6(row.metrics.peak_attention);
    doc["local_bias"] = round_g6(row.metrics.local_bias);
    return doc;
}

int run_stats(const GlobalOpts& global, const std::string& input, const std::string& json_path,
              const std::string& csv_path, bool per_sentence) {
    const attnsink::ClassifierConfig config = resolve_config(global);
    attnsink::CorpusHeader header;
    const attnsink::StatsResult result = attnsink::stats_corpus_file(
        input, config, global.threads, global.strict, /*keep_rows=*/true, &header);

    ordered_json doc;
    doc["header"] = header_json(header);
    ordered_json corpus;
    corpus["mass_special"] = stat_json(result.stats.mass_special);
    corpus["mass_language_tag"] = stat_json(result.stats.mass_language_tag);
    corpus["mass_punctuation"] = stat_json(result.stats.mass_punctuation);
    corpus["mass_content"] = stat_json(result.stats.mass_content);
    corpus["uniformity"] = stat_json(result.stats.uniformity);
    corpus["entropy_bits"] = stat_json(result.stats.entropy_bits);
    corpus["peak_attention"] = stat_json(result.stats.peak_attention);
    corpus["local_bias"] = stat_json(result.stats.local_bias);
    doc["corpus"] = corpus;
    doc["skipped"] = result.stats.skipped;
    if (per_sentence) {
        ordered_json rows = ordered_json::array();
        for (const auto& row : result.rows) rows.push_back(row_json(row));
        doc["per_sentence"] = rows;
    }
    emit_json(doc, json_path);

    if (!csv_path.empty()) {
        std::FILE* f = std::fopen(csv_path.c_str(), "wb");
        if (!f) throw attnsink::FormatError("cannot open for writing: " + csv_path);
        std::fprintf(f,
                     "sentence_id,mass_special,mass_language_tag,mass_punctuation,"
                     "mass_content,uniformity,entropy_bits,peak_attention,local_bias\n");
        for (const auto& row : result.rows) {
            std::fprintf(f, "%lld,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g\n",
                         static_cast<long long>(row.sentence_id), row.mass.special,
                         row.mass.language_tag, row.mass.punctuation, row.mass.content,
                         row.metrics.uniformity, row.metrics.entropy_bits,
                         row.metrics.peak_attention, row.metrics.local_bias);
        }
        if (std::fclose(f) != 0) throw attnsink::FormatError("write failed for " + csv_path);
    }
    return 0;
}

// ----------------------------------------------------------------- compare

std::string pct_cell(const std::optional<double>& v) {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f%%", *v);
    return buf;
}

std::string pp_cell(const std::optional<double>& v) {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f pp", *v);
    return buf;
}

std::string change_cell(const std::optional<double>& v) {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%+d%%", static_cast<int>(std::llround(*v)));
    return buf;
}

std::string render_table(const attnsink::ComparisonReport& r) {
    char line[160];
    std::string out;
    std::snprintf(line, sizeof(line), "%-16s%-12s%-12s%s\n", "Metric", "Before", "After",
                  "Change");
    out += line;
    std::snprintf(line, sizeof(line), "%-16s%-12s%-12s%s\n", "TF similarity",
                  pct_cell(r.tf_before_pct).c_str(), pct_cell(r.tf_after_pct).c_str(),
                  change_cell(r.tf_change_pct).c_str());
    out += line;
    std::snprintf(line, sizeof(line), "%-16s%-12s%-12s%s\n", "Gen similarity",
                  pct_cell(r.gen_before_pct).c_str(), pct_cell(r.gen_after_pct).c_str(),
                  change_cell(r.gen_change_pct).c_str());
    out += line;
    std::snprintf(line, sizeof(line), "%-16s%-12s%-12s%s\n", "TF vs. Gen gap",
                  pp_cell(r.gap_before_pp).c_str(), pp_cell(r.gap_after_pp).c_str(),
                  change_cell(r.gap_change_pct).c_str());
    out += line;
    std::snprintf(line, sizeof(line), "Generation divergence: %.1f%%\n",
                  r.generation_divergence_pct);
    out += line;
    return out;
}

ordered_json comparison_json(const attnsink::ComparisonReport& r) {
    ordered_json doc;
    if (r.tf_before_pct) doc["tf_before_pct"] = round_g6(*r.tf_before_pct);
    doc["tf_after_pct"] = round_g6(r.tf_after_pct);
    if (r.gen_before_pct) doc["gen_before_pct"] = round_g6(*r.gen_before_pct);
    doc["gen_after_pct"] = round_g6(r.gen_after_pct);
    if (r.tf_change_pct) doc["tf_change_pct"] = round_g6(*r.tf_change_pct);
    if (r.gen_change_pct) doc["gen_change_pct"] = round_g6(*r.gen_change_pct);
    if (r.gap_before_pp) doc["gap_before_pp"] = round_g6(*r.gap_before_pp);
    doc["gap_after_pp"] = round_g6(r.gap_after_pp);
    if (r.gap_change_pct) doc["gap_change_pct"] = round_g6(*r.gap_change_pct);
    doc["generation_divergence_pct"] = round_g6(r.generation_divergence_pct);
    const auto variance_json = [](const attnsink::VarianceCheck& v) {
        ordered_json d;
        d["var_before"] = round_g6(v.var_before);
        d["var_after"] = round_g6(v.var_after);
        d["reduced"] = v.reduced;
        return d;
    };
    if (r.tf_variance) doc["tf_variance"] = variance_json(*r.tf_variance);
    if (r.gen_variance) doc["gen_variance"] = variance_json(*r.gen_variance);
    return doc;
}

int run_compare(const GlobalOpts& global, const std::string& tf_path,
                const std::string& gen_path, const std::string& tf_raw_path,
                const std::string& gen_raw_path, const std::string& values,
                const std::string& json_path, const std::string& table_path) {
    attnsink::ComparisonReport report;

    if (!values.empty()) {
        std::vector<double> v;
        std::string item;
        std::istringstream split(values);
        while (std::getline(split, item, ',')) {
            try {
                v.push_back(std::stod(item));
            } catch (const std::exception&) {
                throw attnsink::ConfigError("--values expects four numbers, got '" + item + "'");
            }
        }
        if (v.size() != 4) {
            throw attnsink::ConfigError(
                "--values expects tf_before,tf_after,gen_before,gen_after");
        }
        report = attnsink::compare(v[0], v[1], v[2], v[3]);
    } else {
        if (tf_path.empty() || gen_path.empty()) {
            throw attnsink::ConfigError("compare needs TF and GEN corpora (or --values)");
        }
        const attnsink::ClassifierConfig config = resolve_config(global);
        const attnsink::UniformitySeries tf =
            attnsink::uniformity_series_file(tf_path, config, global.threads, global.strict);
        const attnsink::UniformitySeries gen =
            attnsink::uniformity_series_file(gen_path, config, global.threads, global.strict);

        const auto id_set = [](const attnsink::UniformitySeries& s) {
            std::set<int64_t> ids;
            for (const auto& [id, v] : s.values) ids.insert(id);
            return ids;
        };
        if (id_set(tf) != id_set(gen)) {
            throw attnsink::MismatchError("TF and GEN corpora cover different sentence_ids");
        }

        std::optional<double> tf_before;
        std::optional<double> gen_before;
        std::optional<attnsink::VarianceCheck> tf_var;
        std::optional<attnsink::VarianceCheck> gen_var;
        if (!tf_raw_path.empty() != !gen_raw_path.empty()) {
            throw attnsink::ConfigError("--tf-raw and --gen-raw must be given together");
        }
        if (!tf_raw_path.empty()) {
            const attnsink::UniformitySeries tf_raw = attnsink::uniformity_series_file(
                tf_raw_path, config, global.threads, global.strict);
            const attnsink::UniformitySeries gen_raw = attnsink::uniformity_series_file(
                gen_raw_path, config, global.threads, global.strict);
            tf_before = tf_raw.mean_pct;
            gen_before = gen_raw.mean_pct;
            tf_var = attnsink::variance_check(tf_raw.values, tf.values);
            gen_var = attnsink::variance_check(gen_raw.values, gen.values);
        }
        report = attnsink::compare(tf_before, tf.mean_pct, gen_before, gen.mean_pct);
        report.tf_variance = tf_var;
        report.gen_variance = gen_var;
    }

    const std::string table = render_table(report);
    if (table_path.empty()) {
        std::fputs(table.c_str(), stdout);
    } else {
        std::ofstream out(table_path, std::ios::binary);
        if (!out) throw attnsink::FormatError("cannot open for writing: " + table_path);
        out << table;
    }
    if (!json_path.empty()) emit_json(comparison_json(report), json_path);
    return 0;
}

// ------------------------------------------------------------------- synth

int run_synth(const GlobalOpts& global, const std::string& out_path,
              const std::string& truth_path, const std::string& profile_path,
              uint64_t sentences, uint32_t layers, uint32_t heads, const std::string& src_len,
              const std::string& tgt_len, std::optional<uint64_t> seed,
              const std::string& mode_name, const std::string& src_lang,
              const std::string& tgt_lang) {
    (void)global;
    const auto start = std::chrono::steady_clock::now();
    attnsink::SinkProfile profile;
    if (!profile_path.empty()) profile = attnsink::load_sink_profile(profile_path);
    if (seed) profile.seed = *seed;

    attnsink::CorpusShape shape;
    shape.layers = layers;
    shape.heads = heads;
    std::tie(shape.min_src_len, shape.max_src_len) = parse_range(src_len, "--src-len");
    std::tie(shape.min_tgt_len, shape.max_tgt_len) = parse_range(tgt_len, "--tgt-len");

    attnsink::CorpusMode mode;
    if (mode_name == "tf") {
        mode = attnsink::CorpusMode::TeacherForcing;
    } else if (mode_name == "gen") {
        mode = attnsink::CorpusMode::Generation;
    } else {
        throw attnsink::ConfigError("--mode must be 'tf' or 'gen'");
    }

    const attnsink::CorpusGenerator gen(profile, shape);
    const uint64_t written =
        attnsink::generate_corpus_files(gen, sentences, mode, src_lang, tgt_lang, out_path,
                                        truth_path);

    ordered_json doc;
    doc["written"] = written;
    doc["corpus"] = out_path;
    if (!truth_path.empty()) doc["ground_truth"] = truth_path;
    doc["wall_time_s"] = round_g6(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    emit_json(doc, "");
    return 0;
}

// ----------------------------------------------------------------- heatmap

int run_heatmap(const GlobalOpts& global, const std::string& input, uint32_t grid_size,
                const std::string& ppm_path, const std::string& csv_path) {
    if (ppm_path.empty() && csv_path.empty()) {
        throw attnsink::ConfigError("heatmap needs --ppm and/or --csv output paths");
    }
    attnsink::CorpusReader reader(input, global.strict);
    attnsink::HeatmapGrid grid(grid_size);
    attnsink::SentenceRecord rec;
    while (reader.next(rec)) grid.add_sentence(rec);

    if (!ppm_path.empty()) attnsink::write_heatmap_ppm(grid, ppm_path);
    if (!csv_path.empty()) attnsink::write_heatmap_csv(grid, csv_path);

    ordered_json doc;
    doc["sentences"] = grid.sentences();
    doc["grid"] = grid.size();
    emit_json(doc, "");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Attention-sink filtering and corrected cross-attention statistics"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOpts global;
    app.add_option("--config", global.config_path,
                   "Classifier config JSON (fallback: ATTNSINK_CONFIG env var)");
    app.add_flag("--strict,!--no-strict", global.strict,
                 "Validate slice normalization while reading (default on)");
    app.add_option("--threads", global.threads, "Worker threads, 0 = auto");

    // classify
    auto* classify = app.add_subcommand("classify", "Classify tokens and emit content masks");
    std::vector<std::string> classify_tokens;
    std::string classify_in;
    classify->add_option("tokens", classify_tokens, "Tokens of one sentence");
    classify->add_option("--in", classify_in, "File with one whitespace-split sentence per line");

    // filter
    auto* filter = app.add_subcommand("filter", "Content-only filter an ATSF corpus");
    std::string filter_in, filter_out, filter_policy = "skip";
    filter->add_option("input", filter_in, "Input ATSF corpus")->required();
    filter->add_option("output", filter_out, "Output ATSF corpus")->required();
    filter->add_option("--policy", filter_policy, "skip|error on zero-content sentences");

    // stats
    auto* stats = app.add_subcommand("stats", "Corpus statistics (mass breakdown + metrics)");
    std::string stats_in, stats_json, stats_csv;
    bool stats_rows = false;
    stats->add_option("input", stats_in, "Input ATSF corpus")->required();
    stats->add_option("--json", stats_json, "Write the JSON report here (default: stdout)");
    stats->add_option("--csv", stats_csv, "Write the per-sentence CSV here");
    stats->add_flag("--per-sentence", stats_rows, "Embed per-sentence rows in the JSON");

    // compare
    auto* compare = app.add_subcommand("compare", "Teacher-forcing vs generation comparison");
    std::string cmp_tf, cmp_gen, cmp_tf_raw, cmp_gen_raw, cmp_values, cmp_json, cmp_table;
    compare->add_option("tf", cmp_tf, "Filtered teacher-forcing corpus");
    compare->add_option("gen", cmp_gen, "Filtered generation corpus");
    compare->add_option("--tf-raw", cmp_tf_raw, "Unfiltered teacher-forcing counterpart");
    compare->add_option("--gen-raw", cmp_gen_raw, "Unfiltered generation counterpart");
    compare->add_option("--values", cmp_values,
                        "Direct uniformity percentages tf_before,tf_after,gen_before,gen_after");
    compare->add_option("--json", cmp_json, "Write the comparison JSON here");
    compare->add_option("--table", cmp_table, "Write the rendered table here (default: stdout)");

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic sink corpus");
    std::string synth_out, synth_truth, synth_profile, synth_src_len = "18:26",
                synth_tgt_len = "15:23", synth_mode = "tf", synth_src_lang = "eng_Latn",
                synth_tgt_lang = "swh_Latn";
    uint64_t synth_sentences = 100;
    uint32_t synth_layers = 12, synth_heads = 16;
    std::optional<uint64_t> synth_seed;
    synth->add_option("--out", synth_out, "Output ATSF corpus")->required();
    synth->add_option("--ground-truth", synth_truth, "Also write the planted-content sidecar");
    synth->add_option("--profile", synth_profile, "Sink profile JSON (default: 83.2/1.8/2.9/12.1 sink split)");
    synth->add_option("--sentences", synth_sentences, "Sentence count");
    synth->add_option("--layers", synth_layers, "Decoder layers");
    synth->add_option("--heads", synth_heads, "Attention heads");
    synth->add_option("--src-len", synth_src_len, "Source length range MIN:MAX");
    synth->add_option("--tgt-len", synth_tgt_len, "Target length range MIN:MAX");
    synth->add_option("--seed", synth_seed, "Override the profile seed");
    synth->add_option("--mode", synth_mode, "tf|gen");
    synth->add_option("--src-lang", synth_src_lang, "Header source language");
    synth->add_option("--tgt-lang", synth_tgt_lang, "Header target language");

    // heatmap
    auto* heatmap = app.add_subcommand("heatmap", "Mean step-by-position attention grid");
    std::string hm_in, hm_ppm, hm_csv;
    uint32_t hm_grid = 32;
    heatmap->add_option("input", hm_in, "Input ATSF corpus")->required();
    heatmap->add_option("--grid", hm_grid, "Grid size G (default 32)");
    heatmap->add_option("--ppm", hm_ppm, "Write grayscale P5 image here");
    heatmap->add_option("--csv", hm_csv, "Write exact cell values here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // flag misuse is a config error
    }

    try {
        if (app.got_subcommand(classify)) {
            return run_classify(global, classify_tokens, classify_in);
        }
        if (app.got_subcommand(filter)) {
            return run_filter(global, filter_in, filter_out, filter_policy);
        }
        if (app.got_subcommand(stats)) {
            return run_stats(global, stats_in, stats_json, stats_csv, stats_rows);
        }
        if (app.got_subcommand(compare)) {
            return run_compare(global, cmp_tf, cmp_gen, cmp_tf_raw, cmp_gen_raw, cmp_values,
                               cmp_json, cmp_table);
        }
        if (app.got_subcommand(synth)) {
            return run_synth(global, synth_out, synth_truth, synth_profile, synth_sentences,
                             synth_layers, synth_heads, synth_src_len, synth_tgt_len, synth_seed,
                             synth_mode, synth_src_lang, synth_tgt_lang);
        }
        if (app.got_subcommand(heatmap)) {
            return run_heatmap(global, hm_in, hm_grid, hm_ppm, hm_csv);
        }
    } catch (const attnsink::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const attnsink::MismatchError& e) {
        std::fprintf(stderr, "mismatch: %s\n", e.what());
        return 3;
    } catch (const attnsink::FormatError& e) {
        std::fprintf(stderr, "format error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
