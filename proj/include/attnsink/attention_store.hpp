#pragma once

#include <cstdint>
#include <cstdio>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace attnsink {

enum class CorpusMode : uint8_t { TeacherForcing = 0, Generation = 1 };

const char* corpus_mode_name(CorpusMode m);
CorpusMode corpus_mode_from_name(const std::string& name);

inline constexpr uint32_t kAtsfVersion = 1;

struct CorpusHeader {
    std::string model_id;
    std::string src_lang;
    std::string tgt_lang;
    CorpusMode mode = CorpusMode::TeacherForcing;
    uint64_t n_sentences = 0;
    uint32_t n_layers = 0;
    uint32_t n_heads = 0;
    uint32_t format_version = kAtsfVersion;
    bool filtered = false;      // set on filter output
    bool ground_truth = false;  // set on synth ground-truth sidecars
};

// Dense f32 attention weights, row-major [T, L, H, n]. Every [t, l, h] slice
// is a probability distribution over the n source positions.
struct AttentionTensor {
    uint32_t steps = 0;    // T
    uint32_t layers = 0;   // L
    uint32_t heads = 0;    // H
    uint32_t src_len = 0;  // n
    std::vector<float> data;

    void resize(uint32_t t, uint32_t l, uint32_t h, uint32_t n) {
        steps = t;
        layers = l;
        heads = h;
        src_len = n;
        data.assign(static_cast<size_t>(t) * l * h * n, 0.0f);
    }

    size_t slice_offset(uint32_t t, uint32_t l, uint32_t h) const {
        return ((static_cast<size_t>(t) * layers + l) * heads + h) * src_len;
    }

    std::span<float> slice(uint32_t t, uint32_t l, uint32_t h) {
        return {data.data() + slice_offset(t, l, h), src_len};
    }
    std::span<const float> slice(uint32_t t, uint32_t l, uint32_t h) const {
        return {data.data() + slice_offset(t, l, h), src_len};
    }
};

struct SentenceRecord {
    int64_t sentence_id = 0;
    std::vector<std::string> src_tokens;
    std::vector<std::string> tgt_tokens;
    AttentionTensor tensor;
};

// Streaming ATSF writer. Sentences are appended in call order; finish()
// verifies the count promised by the header. Layout (little-endian):
//   "ATSF" | u32 version | u32 header_len | header JSON |
//   per sentence: u32 meta_len | meta JSON | raw f32 payload [T,L,H,n]
class CorpusWriter {
public:
    CorpusWriter(const std::string& path, const CorpusHeader& header);
    ~CorpusWriter();

    CorpusWriter(const CorpusWriter&) = delete;
    CorpusWriter& operator=(const CorpusWriter&) = delete;

    void write(const SentenceRecord& rec);
    // Flushes and closes; throws if the sentence count does not match the header.
    uint64_t finish();
    // Flushes and closes accepting a short corpus; for drivers that rewrite
    // the header afterwards (the file is not a valid ATSF corpus until then).
    uint64_t finish_partial();

    uint64_t written() const { return written_; }
    // Bytes before the first sentence block (magic + version + header JSON).
    size_t preamble_size() const { return preamble_size_; }

private:
    std::string path_;
    CorpusHeader header_;
    std::FILE* file_ = nullptr;
    uint64_t written_ = 0;
    size_t preamble_size_ = 0;
    bool finished_ = false;
};

// Streaming ATSF reader; peak memory is one sentence tensor plus constant
// overhead. In strict mode (default) every slice must sum to 1 within 1e-4
// and contain finite weights in [0,1]; lenient mode demotes normalization
// violations to counted warnings.
class CorpusReader {
public:
    explicit CorpusReader(const std::string& path, bool strict = true);
    ~CorpusReader();

    CorpusReader(const CorpusReader&) = delete;
    CorpusReader& operator=(const CorpusReader&) = delete;

    const CorpusHeader& header() const { return header_; }

    // Fills `rec` with the next sentence; returns false at end of corpus.
    bool next(SentenceRecord& rec);

    uint64_t read_count() const { return read_; }
    uint64_t normalization_warnings() const { return warnings_; }

private:
    std::string path_;
    bool strict_;
    CorpusHeader header_;
    std::FILE* file_ = nullptr;
    uint64_t file_size_ = 0;
    uint64_t read_ = 0;
    uint64_t warnings_ = 0;
};

// Convenience single-shot helpers.
uint64_t write_corpus(const CorpusHeader& header,
                      const std::vector<SentenceRecord>& sentences,
                      const std::string& path);
std::vector<SentenceRecord> read_corpus(const std::string& path,
                                        CorpusHeader* header_out = nullptr,
                                        bool strict = true);

// Slice-sum tolerance enforced by the strict reader.
inline constexpr double kSliceSumTolerance = 1e-4;

}  // namespace attnsink
