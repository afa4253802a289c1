#pragma once

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "attnsink/attention_store.hpp"
#include "attnsink/rng.hpp"

namespace testsupport {

class TempDir {
public:
    TempDir() {
        const auto base = std::filesystem::temp_directory_path();
        for (int attempt = 0; attempt < 100; ++attempt) {
            auto candidate = base / ("attnsink-test-" + std::to_string(std::rand()) + "-" +
                                     std::to_string(attempt));
            std::error_code ec;
            if (std::filesystem::create_directory(candidate, ec)) {
                path_ = candidate;
                return;
            }
        }
        throw std::runtime_error("cannot create temp dir");
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

// Builds a record whose slices come from a callback (t, l, h) -> weights.
inline attnsink::SentenceRecord make_record(
    int64_t id, std::vector<std::string> src, std::vector<std::string> tgt, uint32_t layers,
    uint32_t heads,
    const std::function<std::vector<float>(uint32_t, uint32_t, uint32_t)>& slice_fn) {
    attnsink::SentenceRecord rec;
    rec.sentence_id = id;
    rec.src_tokens = std::move(src);
    rec.tgt_tokens = std::move(tgt);
    rec.tensor.resize(static_cast<uint32_t>(rec.tgt_tokens.size()), layers, heads,
                      static_cast<uint32_t>(rec.src_tokens.size()));
    for (uint32_t t = 0; t < rec.tensor.steps; ++t) {
        for (uint32_t l = 0; l < layers; ++l) {
            for (uint32_t h = 0; h < heads; ++h) {
                const std::vector<float> values = slice_fn(t, l, h);
                auto slice = rec.tensor.slice(t, l, h);
                for (size_t i = 0; i < slice.size(); ++i) slice[i] = values[i];
            }
        }
    }
    return rec;
}

inline std::vector<std::string> synthetic_tokens(size_t n) {
    std::vector<std::string> tokens(n);
    tokens[0] = "eng_Latn";
    tokens[n - 1] = "</s>";
    tokens[n - 2] = ".";
    for (size_t i = 1; i + 2 < n; ++i) tokens[i] = "▁tok" + std::to_string(i);
    return tokens;
}

// Random normalized record: n >= 4 with the usual tag/punct/special frame.
inline attnsink::SentenceRecord random_record(attnsink::Rng& rng, int64_t id,
                                              uint32_t max_steps = 6, uint32_t max_layers = 3,
                                              uint32_t max_heads = 3, uint32_t max_src = 24) {
    const auto steps = static_cast<uint32_t>(rng.uniform_int(1, max_steps));
    const auto layers = static_cast<uint32_t>(rng.uniform_int(1, max_layers));
    const auto heads = static_cast<uint32_t>(rng.uniform_int(1, max_heads));
    const auto n = static_cast<uint32_t>(rng.uniform_int(4, max_src));

    std::vector<std::string> tgt(steps, "▁y");
    tgt[steps - 1] = "</s>";
    return make_record(id, synthetic_tokens(n), tgt, layers, heads,
                       [&](uint32_t, uint32_t, uint32_t) {
                           std::vector<double> w(n);
                           double sum = 0.0;
                           for (auto& x : w) {
                               x = rng.gamma(0.7);
                               sum += x;
                           }
                           std::vector<float> out(n);
                           for (uint32_t i = 0; i < n; ++i) {
                               out[i] = static_cast<float>(w[i] / sum);
                           }
                           return out;
                       });
}

struct CliResult {
    int exit_code = -1;
    std::string stdout_text;
};

// Runs the built CLI binary; stdout is captured through a file.
inline CliResult run_cli(const std::string& args, const TempDir& dir) {
    static int counter = 0;
    const std::string out_file = dir.file("cli-stdout-" + std::to_string(counter++) + ".txt");
    const std::string cmd =
        std::string(ATTNSINK_CLI_PATH) + " " + args + " > " + out_file + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    CliResult result;
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out_file, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    result.stdout_text = buf.str();
    return result;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

}  // namespace testsupport
