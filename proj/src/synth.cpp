#include "attnsink/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "attnsink/errors.hpp"
#include "attnsink/metrics.hpp"
#include "attnsink/rng.hpp"

namespace attnsink {

namespace {

constexpr const char* kSourceTag = "eng_Latn";

struct Template {
    std::vector<std::string> src_tokens;
    std::vector<std::string> tgt_tokens;
    std::vector<size_t> special_pos;
    std::vector<size_t> langtag_pos;
    std::vector<size_t> punct_pos;
    std::vector<size_t> content_pos;
};

// Token layout: [lang tag, content..., optional ',', content..., '.', '</s>'].
Template make_template(Rng& rng, const CorpusShape& shape) {
    Template tpl;
    const size_t n = rng.uniform_int(shape.min_src_len, shape.max_src_len);
    const size_t steps = rng.uniform_int(shape.min_tgt_len, shape.max_tgt_len);

    tpl.src_tokens.assign(n, {});
    tpl.src_tokens[0] = kSourceTag;
    tpl.src_tokens[n - 1] = "</s>";
    tpl.src_tokens[n - 2] = ".";
    tpl.langtag_pos.push_back(0);
    tpl.special_pos.push_back(n - 1);
    tpl.punct_pos.push_back(n - 2);

    size_t comma = 0;  // position 0 means none
    if (n >= 8 && rng.uniform01() < 0.5) {
        comma = rng.uniform_int(1, n - 3);
        tpl.src_tokens[comma] = ",";
    }
    for (size_t i = 1; i + 2 < n; ++i) {
        if (i == comma) {
            tpl.punct_pos.push_back(i);
            continue;
        }
        tpl.src_tokens[i] = "▁w" + std::to_string(rng.uniform_int(0, 4999));
        tpl.content_pos.push_back(i);
    }
    std::sort(tpl.punct_pos.begin(), tpl.punct_pos.end());

    tpl.tgt_tokens.assign(steps, {});
    for (size_t t = 0; t + 1 < steps; ++t) {
        tpl.tgt_tokens[t] = "▁y" + std::to_string(rng.uniform_int(0, 4999));
    }
    tpl.tgt_tokens[steps - 1] = "</s>";
    return tpl;
}

// Discretized Gaussian over k content slots centered at the diagonal slot.
std::vector<double> gaussian_kernel(size_t k, size_t center, double sigma) {
    std::vector<double> g(k, 0.0);
    double sum = 0.0;
    const double inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
    for (size_t j = 0; j < k; ++j) {
        const double d = static_cast<double>(j) - static_cast<double>(center);
        g[j] = std::exp(-d * d * inv_two_sigma_sq);
        sum += g[j];
    }
    if (sum <= 0.0) {
        // Vanishing spread: all mass on the diagonal slot.
        g.assign(k, 0.0);
        g[center] = 1.0;
        return g;
    }
    for (double& x : g) x /= sum;
    return g;
}

}  // namespace

void SinkProfile::validate() const {
    const auto check_mass = [](double m, const char* name) {
        if (!std::isfinite(m) || m < 0.0) {
            throw ConfigError(std::string(name) + " must be a non-negative fraction");
        }
    };
    check_mass(special_mass, "special_mass");
    check_mass(langtag_mass, "langtag_mass");
    check_mass(punct_mass, "punct_mass");
    check_mass(content_mass, "content_mass");
    const double sum = special_mass + langtag_mass + punct_mass + content_mass;
    if (std::fabs(sum - 1.0) > 1e-12) {
        throw ConfigError("profile masses must sum to 1, got " + std::to_string(sum));
    }
    if (!(kernel_spread_sigma > 0.0) || !std::isfinite(kernel_spread_sigma)) {
        throw ConfigError("kernel_spread_sigma must be > 0");
    }
    if (!(noise_alpha >= 0.0) || !std::isfinite(noise_alpha)) {
        throw ConfigError("noise_alpha must be >= 0 (0 disables noise)");
    }
}

SinkProfile parse_sink_profile(const std::string& json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("sink profile is not valid JSON: ") + e.what());
    }
    SinkProfile p;
    try {
        p.special_mass = doc.at("special_mass").get<double>();
        p.langtag_mass = doc.at("langtag_mass").get<double>();
        p.punct_mass = doc.at("punct_mass").get<double>();
        p.content_mass = doc.at("content_mass").get<double>();
        if (doc.contains("kernel_spread_sigma")) {
            p.kernel_spread_sigma = doc["kernel_spread_sigma"].get<double>();
        }
        if (doc.contains("noise_alpha")) p.noise_alpha = doc["noise_alpha"].get<double>();
        if (doc.contains("seed")) p.seed = doc["seed"].get<uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("sink profile field has wrong type: ") + e.what());
    }
    p.validate();
    return p;
}

SinkProfile load_sink_profile(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open sink profile: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_sink_profile(buf.str());
}

std::string sink_profile_to_json(const SinkProfile& p) {
    nlohmann::ordered_json doc;
    doc["special_mass"] = p.special_mass;
    doc["langtag_mass"] = p.langtag_mass;
    doc["punct_mass"] = p.punct_mass;
    doc["content_mass"] = p.content_mass;
    doc["kernel_spread_sigma"] = p.kernel_spread_sigma;
    doc["noise_alpha"] = p.noise_alpha;
    doc["seed"] = p.seed;
    return doc.dump(2);
}

CorpusGenerator::CorpusGenerator(SinkProfile profile, CorpusShape shape)
    : profile_(profile), shape_(shape) {
    profile_.validate();
    if (shape_.min_src_len < 4) {
        throw ConfigError("min_src_len must be >= 4 (tag + content + '.' + </s>)");
    }
    if (shape_.max_src_len < shape_.min_src_len || shape_.max_tgt_len < shape_.min_tgt_len) {
        throw ConfigError("length ranges must be non-empty");
    }
    if (shape_.min_tgt_len < 1) throw ConfigError("min_tgt_len must be >= 1");
    if (shape_.layers < 1 || shape_.heads < 1) throw ConfigError("layers and heads must be >= 1");
}

SynthSentence CorpusGenerator::make_sentence(int64_t sentence_id) const {
    Rng rng = Rng::for_sentence(profile_.seed, sentence_id);
    const Template tpl = make_template(rng, shape_);
    const size_t n = tpl.src_tokens.size();
    const size_t steps = tpl.tgt_tokens.size();
    const size_t k = tpl.content_pos.size();
    if (k == 0) throw ConfigError("template has zero content positions");

    // Sink mass splits uniformly within each class.
    std::vector<double> sink(n, 0.0);
    for (size_t i : tpl.special_pos) {
        sink[i] = profile_.special_mass / static_cast<double>(tpl.special_pos.size());
    }
    for (size_t i : tpl.langtag_pos) {
        sink[i] = profile_.langtag_mass / static_cast<double>(tpl.langtag_pos.size());
    }
    for (size_t i : tpl.punct_pos) {
        sink[i] = profile_.punct_mass / static_cast<double>(tpl.punct_pos.size());
    }

    SynthSentence out;
    out.record.sentence_id = sentence_id;
    out.record.src_tokens = tpl.src_tokens;
    out.record.tgt_tokens = tpl.tgt_tokens;
    out.record.tensor.resize(static_cast<uint32_t>(steps), shape_.layers, shape_.heads,
                             static_cast<uint32_t>(n));
    out.ground_truth.sentence_id = sentence_id;
    out.ground_truth.src_tokens = tpl.src_tokens;
    out.ground_truth.tgt_tokens = tpl.tgt_tokens;
    out.ground_truth.tensor.resize(static_cast<uint32_t>(steps), 1, 1,
                                   static_cast<uint32_t>(n));

    std::vector<float> row(n);
    std::vector<float> truth_row(n);
    for (size_t t = 0; t < steps; ++t) {
        std::vector<double> c = gaussian_kernel(k, diagonal_map(t, steps, k),
                                                profile_.kernel_spread_sigma);
        if (profile_.noise_alpha > 0.0) {
            // One Dirichlet factor per (sentence, step), shared by all layers
            // and heads so their average stays exactly the planted c_t.
            const std::vector<double> w = rng.dirichlet(profile_.noise_alpha, k);
            std::vector<double> noisy(k);
            double sum = 0.0;
            for (size_t j = 0; j < k; ++j) {
                noisy[j] = c[j] * w[j];
                sum += noisy[j];
            }
            // Tiny concentrations can underflow the whole product; keep the
            // clean kernel for such steps rather than emit NaNs.
            if (sum > 0.0) {
                for (size_t j = 0; j < k; ++j) c[j] = noisy[j] / sum;
            }
        }

        std::fill(truth_row.begin(), truth_row.end(), 0.0f);
        for (size_t i = 0; i < n; ++i) row[i] = static_cast<float>(sink[i]);
        for (size_t j = 0; j < k; ++j) {
            const size_t i = tpl.content_pos[j];
            row[i] = static_cast<float>(sink[i] + profile_.content_mass * c[j]);
            truth_row[i] = static_cast<float>(c[j]);
        }

        float* truth_dst = out.ground_truth.tensor.data.data() +
                           out.ground_truth.tensor.slice_offset(static_cast<uint32_t>(t), 0, 0);
        std::copy(truth_row.begin(), truth_row.end(), truth_dst);
        for (uint32_t l = 0; l < shape_.layers; ++l) {
            for (uint32_t h = 0; h < shape_.heads; ++h) {
                float* dst = out.record.tensor.data.data() +
                             out.record.tensor.slice_offset(static_cast<uint32_t>(t), l, h);
                std::copy(row.begin(), row.end(), dst);
            }
        }
    }
    return out;
}

CorpusHeader CorpusGenerator::corpus_header(uint64_t n_sentences, CorpusMode mode,
                                            const std::string& src_lang,
                                            const std::string& tgt_lang) const {
    CorpusHeader h;
    h.model_id = "synthetic";
    h.src_lang = src_lang;
    h.tgt_lang = tgt_lang;
    h.mode = mode;
    h.n_sentences = n_sentences;
    h.n_layers = shape_.layers;
    h.n_heads = shape_.heads;
    return h;
}

CorpusHeader CorpusGenerator::ground_truth_header(uint64_t n_sentences, CorpusMode mode,
                                                  const std::string& src_lang,
                                                  const std::string& tgt_lang) const {
    CorpusHeader h = corpus_header(n_sentences, mode, src_lang, tgt_lang);
    h.n_layers = 1;
    h.n_heads = 1;
    h.ground_truth = true;
    return h;
}

uint64_t generate_corpus_files(const CorpusGenerator& gen, uint64_t n_sentences, CorpusMode mode,
                               const std::string& src_lang, const std::string& tgt_lang,
                               const std::string& corpus_path, const std::string& truth_path) {
    if (n_sentences == 0) throw ConfigError("cannot generate zero sentences");
    CorpusWriter writer(corpus_path, gen.corpus_header(n_sentences, mode, src_lang, tgt_lang));
    std::unique_ptr<CorpusWriter> truth_writer;
    if (!truth_path.empty()) {
        truth_writer = std::make_unique<CorpusWriter>(
            truth_path, gen.ground_truth_header(n_sentences, mode, src_lang, tgt_lang));
    }
    for (uint64_t id = 0; id < n_sentences; ++id) {
        SynthSentence s = gen.make_sentence(static_cast<int64_t>(id));
        writer.write(s.record);
        if (truth_writer) truth_writer->write(s.ground_truth);
    }
    if (truth_writer) truth_writer->finish();
    return writer.finish();
}

std::vector<SynthSentence> generate_sentences(const CorpusGenerator& gen, uint64_t n_sentences) {
    std::vector<SynthSentence> out(n_sentences);
#pragma omp parallel for schedule(dynamic)
    for (int64_t id = 0; id < static_cast<int64_t>(n_sentences); ++id) {
        out[static_cast<size_t>(id)] = gen.make_sentence(id);
    }
    return out;
}

double ground_truth_check(const SentenceRecord& filtered, const SentenceRecord& planted) {
    const AttentionTensor& f = filtered.tensor;
    const AttentionTensor& p = planted.tensor;
    if (f.steps != p.steps || f.src_len != p.src_len) {
        throw FormatError("ground_truth_check: step/source shape mismatch");
    }
    const bool broadcast = p.layers == 1 && p.heads == 1;
    if (!broadcast && (p.layers != f.layers || p.heads != f.heads)) {
        throw FormatError("ground_truth_check: layer/head shape mismatch");
    }
    double max_dev = 0.0;
    for (uint32_t t = 0; t < f.steps; ++t) {
        for (uint32_t l = 0; l < f.layers; ++l) {
            for (uint32_t h = 0; h < f.heads; ++h) {
                auto fs = f.slice(t, l, h);
                auto ps = broadcast ? p.slice(t, 0, 0) : p.slice(t, l, h);
                for (uint32_t i = 0; i < f.src_len; ++i) {
                    max_dev = std::max(max_dev,
                                       std::fabs(static_cast<double>(fs[i]) - ps[i]));
                }
            }
        }
    }
    return max_dev;
}

}  // namespace attnsink
