#include "attnsink/attention_store.hpp"

#include <cmath>
#include <cstring>

#include <json.hpp>

#include "attnsink/errors.hpp"

namespace attnsink {

namespace {

constexpr char kMagic[4] = {'A', 'T', 'S', 'F'};
constexpr uint32_t kMaxJsonBlock = 64u << 20;  // sanity cap for corrupt lengths

void put_u32le(std::FILE* f, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    if (std::fwrite(b, 1, 4, f) != 4) throw FormatError("write failed");
}

bool get_u32le(std::FILE* f, uint32_t& v) {
    unsigned char b[4];
    const size_t got = std::fread(b, 1, 4, f);
    if (got == 0) return false;
    if (got != 4) throw FormatError("truncated u32 at byte offset " +
                                    std::to_string(std::ftell(f) - static_cast<long>(got)));
    v = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
        (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
    return true;
}

nlohmann::ordered_json header_to_json(const CorpusHeader& h) {
    nlohmann::ordered_json doc;
    doc["model_id"] = h.model_id;
    doc["src_lang"] = h.src_lang;
    doc["tgt_lang"] = h.tgt_lang;
    doc["mode"] = corpus_mode_name(h.mode);
    doc["n_sentences"] = h.n_sentences;
    doc["n_layers"] = h.n_layers;
    doc["n_heads"] = h.n_heads;
    doc["format_version"] = h.format_version;
    if (h.filtered) doc["filtered"] = true;
    if (h.ground_truth) doc["ground_truth"] = true;
    return doc;
}

CorpusHeader header_from_json(const nlohmann::json& doc) {
    CorpusHeader h;
    try {
        h.model_id = doc.at("model_id").get<std::string>();
        h.src_lang = doc.at("src_lang").get<std::string>();
        h.tgt_lang = doc.at("tgt_lang").get<std::string>();
        h.mode = corpus_mode_from_name(doc.at("mode").get<std::string>());
        h.n_sentences = doc.at("n_sentences").get<uint64_t>();
        h.n_layers = doc.at("n_layers").get<uint32_t>();
        h.n_heads = doc.at("n_heads").get<uint32_t>();
        h.format_version = doc.at("format_version").get<uint32_t>();
        h.filtered = doc.value("filtered", false);
        h.ground_truth = doc.value("ground_truth", false);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed corpus header: ") + e.what());
    }
    return h;
}

void validate_header(const CorpusHeader& h) {
    if (h.n_sentences == 0) throw FormatError("corpus header declares zero sentences");
    if (h.n_layers == 0) throw FormatError("corpus header declares zero layers");
    if (h.n_heads == 0) throw FormatError("corpus header declares zero heads");
}

}  // namespace

const char* corpus_mode_name(CorpusMode m) {
    return m == CorpusMode::Generation ? "generation" : "teacher_forcing";
}

CorpusMode corpus_mode_from_name(const std::string& name) {
    if (name == "teacher_forcing") return CorpusMode::TeacherForcing;
    if (name == "generation") return CorpusMode::Generation;
    throw FormatError("unknown corpus mode '" + name + "'");
}

CorpusWriter::CorpusWriter(const std::string& path, const CorpusHeader& header)
    : path_(path), header_(header) {
    validate_header(header_);
    file_ = std::fopen(path.c_str(), "wb");
    if (!file_) throw FormatError("cannot open for writing: " + path);
    try {
        if (std::fwrite(kMagic, 1, 4, file_) != 4) throw FormatError("write failed");
        put_u32le(file_, header_.format_version);
        const std::string json = header_to_json(header_).dump();
        put_u32le(file_, static_cast<uint32_t>(json.size()));
        if (std::fwrite(json.data(), 1, json.size(), file_) != json.size()) {
            throw FormatError("write failed");
        }
        preamble_size_ = 12 + json.size();
    } catch (...) {
        std::fclose(file_);
        file_ = nullptr;
        throw;
    }
}

CorpusWriter::~CorpusWriter() {
    if (file_) std::fclose(file_);
}

void CorpusWriter::write(const SentenceRecord& rec) {
    if (!file_ || finished_) throw FormatError("writer already finished");
    const AttentionTensor& t = rec.tensor;
    const auto reject = [&](const std::string& why) {
        throw FormatError("sentence " + std::to_string(rec.sentence_id) +
                          ": shape mismatch, " + why);
    };
    if (rec.src_tokens.empty()) reject("no source tokens");
    if (rec.tgt_tokens.empty()) reject("no target tokens");
    if (t.steps != rec.tgt_tokens.size()) reject("steps != |tgt_tokens|");
    if (t.src_len != rec.src_tokens.size()) reject("src_len != |src_tokens|");
    if (t.layers != header_.n_layers) reject("layers != header n_layers");
    if (t.heads != header_.n_heads) reject("heads != header n_heads");
    const size_t expect = static_cast<size_t>(t.steps) * t.layers * t.heads * t.src_len;
    if (t.data.size() != expect) reject("payload size inconsistent");
    if (written_ == header_.n_sentences) {
        throw FormatError("more sentences than the header's n_sentences=" +
                          std::to_string(header_.n_sentences));
    }

    nlohmann::ordered_json meta;
    meta["sentence_id"] = rec.sentence_id;
    meta["src_tokens"] = rec.src_tokens;
    meta["tgt_tokens"] = rec.tgt_tokens;
    const std::string json = meta.dump();
    put_u32le(file_, static_cast<uint32_t>(json.size()));
    if (std::fwrite(json.data(), 1, json.size(), file_) != json.size()) {
        throw FormatError("write failed");
    }
    if (std::fwrite(t.data.data(), sizeof(float), t.data.size(), file_) != t.data.size()) {
        throw FormatError("write failed");
    }
    ++written_;
}

uint64_t CorpusWriter::finish() {
    if (finished_) return written_;
    if (written_ != header_.n_sentences) {
        throw FormatError("wrote " + std::to_string(written_) + " sentences, header promised " +
                          std::to_string(header_.n_sentences) +
                          (written_ == 0 ? " (zero sentences)" : ""));
    }
    return finish_partial();
}

uint64_t CorpusWriter::finish_partial() {
    if (finished_) return written_;
    if (std::fflush(file_) != 0 || std::fclose(file_) != 0) {
        file_ = nullptr;
        throw FormatError("flush failed for " + path_);
    }
    file_ = nullptr;
    finished_ = true;
    return written_;
}

CorpusReader::CorpusReader(const std::string& path, bool strict)
    : path_(path), strict_(strict) {
    file_ = std::fopen(path.c_str(), "rb");
    if (!file_) throw FormatError("cannot open corpus: " + path);
    try {
        char magic[4];
        if (std::fread(magic, 1, 4, file_) != 4 || std::memcmp(magic, kMagic, 4) != 0) {
            throw FormatError("bad magic, not an ATSF file: " + path);
        }
        uint32_t version = 0;
        if (!get_u32le(file_, version)) throw FormatError("truncated version field");
        if (version != kAtsfVersion) {
            throw FormatError("unsupported ATSF version " + std::to_string(version));
        }
        uint32_t header_len = 0;
        if (!get_u32le(file_, header_len)) throw FormatError("truncated header length");
        if (header_len == 0 || header_len > kMaxJsonBlock) {
            throw FormatError("implausible header length " + std::to_string(header_len));
        }
        std::string json(header_len, '\0');
        if (std::fread(json.data(), 1, header_len, file_) != header_len) {
            throw FormatError("truncated header JSON");
        }
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(json);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("corpus header is not valid JSON: ") + e.what());
        }
        header_ = header_from_json(doc);
        if (header_.format_version != version) {
            throw FormatError("header format_version disagrees with file version");
        }
        validate_header(header_);

        const long body_start = std::ftell(file_);
        if (std::fseek(file_, 0, SEEK_END) != 0) throw FormatError("seek failed: " + path);
        file_size_ = static_cast<uint64_t>(std::ftell(file_));
        if (std::fseek(file_, body_start, SEEK_SET) != 0) {
            throw FormatError("seek failed: " + path);
        }
    } catch (...) {
        std::fclose(file_);
        file_ = nullptr;
        throw;
    }
}

CorpusReader::~CorpusReader() {
    if (file_) std::fclose(file_);
}

bool CorpusReader::next(SentenceRecord& rec) {
    if (!file_) throw FormatError("reader is closed");
    if (read_ == header_.n_sentences) {
        // Exactly n_sentences records, then EOF.
        unsigned char probe;
        if (std::fread(&probe, 1, 1, file_) == 1) {
            throw FormatError("trailing bytes after last sentence at byte offset " +
                              std::to_string(std::ftell(file_) - 1));
        }
        return false;
    }

    uint32_t meta_len = 0;
    if (!get_u32le(file_, meta_len)) {
        throw FormatError("truncated corpus: expected sentence " + std::to_string(read_) +
                          " at byte offset " + std::to_string(std::ftell(file_)));
    }
    if (meta_len == 0 || meta_len > kMaxJsonBlock) {
        throw FormatError("implausible sentence meta length " + std::to_string(meta_len));
    }
    std::string json(meta_len, '\0');
    if (std::fread(json.data(), 1, meta_len, file_) != meta_len) {
        throw FormatError("truncated sentence meta at byte offset " +
                          std::to_string(std::ftell(file_)));
    }
    try {
        nlohmann::json meta = nlohmann::json::parse(json);
        rec.sentence_id = meta.at("sentence_id").get<int64_t>();
        rec.src_tokens = meta.at("src_tokens").get<std::vector<std::string>>();
        rec.tgt_tokens = meta.at("tgt_tokens").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed sentence meta: ") + e.what());
    }
    if (rec.src_tokens.empty() || rec.tgt_tokens.empty()) {
        throw FormatError("sentence " + std::to_string(rec.sentence_id) + " has empty token list");
    }

    // Bound the payload by the bytes actually left in the file before
    // allocating, so a corrupt meta block cannot demand absurd tensors.
    const uint64_t remaining =
        file_size_ - static_cast<uint64_t>(std::ftell(file_));
    const uint64_t limit = remaining / sizeof(float);
    uint64_t want64 = rec.tgt_tokens.size();
    for (const uint64_t factor :
         {static_cast<uint64_t>(header_.n_layers), static_cast<uint64_t>(header_.n_heads),
          static_cast<uint64_t>(rec.src_tokens.size())}) {
        if (factor == 0 || want64 > limit / factor) want64 = limit + 1;
        if (want64 > limit) break;
        want64 *= factor;
    }
    if (want64 > limit) {
        throw FormatError("truncated tensor payload for sentence " +
                          std::to_string(rec.sentence_id) + " at byte offset " +
                          std::to_string(std::ftell(file_)));
    }

    rec.tensor.resize(static_cast<uint32_t>(rec.tgt_tokens.size()), header_.n_layers,
                      header_.n_heads, static_cast<uint32_t>(rec.src_tokens.size()));
    const size_t want = rec.tensor.data.size();
    const size_t got = std::fread(rec.tensor.data.data(), sizeof(float), want, file_);
    if (got != want) {
        throw FormatError("truncated tensor payload for sentence " +
                          std::to_string(rec.sentence_id) + " at byte offset " +
                          std::to_string(std::ftell(file_)));
    }

    // Normalization validation: finite, in range, slice sums near 1.
    const AttentionTensor& t = rec.tensor;
    for (uint32_t step = 0; step < t.steps; ++step) {
        for (uint32_t l = 0; l < t.layers; ++l) {
            for (uint32_t h = 0; h < t.heads; ++h) {
                auto slice = t.slice(step, l, h);
                double sum = 0.0;
                bool in_range = true;
                for (float w : slice) {
                    if (!std::isfinite(w)) {
                        throw FormatError("non-finite weight in sentence " +
                                          std::to_string(rec.sentence_id));
                    }
                    if (w < 0.0f || w > 1.0f) in_range = false;
                    sum += w;
                }
                if (!in_range || std::fabs(sum - 1.0) > kSliceSumTolerance) {
                    if (strict_) {
                        throw FormatError(
                            "slice [" + std::to_string(step) + "," + std::to_string(l) + "," +
                            std::to_string(h) + "] of sentence " +
                            std::to_string(rec.sentence_id) + " is not normalized (sum=" +
                            std::to_string(sum) + ")");
                    }
                    ++warnings_;
                }
            }
        }
    }
    ++read_;
    return true;
}

uint64_t write_corpus(const CorpusHeader& header, const std::vector<SentenceRecord>& sentences,
                      const std::string& path) {
    CorpusWriter writer(path, header);
    for (const auto& rec : sentences) writer.write(rec);
    return writer.finish();
}

std::vector<SentenceRecord> read_corpus(const std::string& path, CorpusHeader* header_out,
                                        bool strict) {
    CorpusReader reader(path, strict);
    if (header_out) *header_out = reader.header();
    std::vector<SentenceRecord> out;
    out.reserve(reader.header().n_sentences);
    SentenceRecord rec;
    while (reader.next(rec)) out.push_back(rec);
    return out;
}

}  // namespace attnsink
