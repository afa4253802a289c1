#include "attnsink/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "attnsink/common.hpp"
#include "attnsink/errors.hpp"

namespace attnsink {

namespace {

// Overlap fractions of source interval [lo, hi) with unit-width grid bins;
// fractions are relative to the interval width and sum to 1.
struct BinSpan {
    uint32_t first = 0;
    std::vector<double> frac;
};

BinSpan bin_span(double lo, double hi, uint32_t grid) {
    BinSpan span;
    const double width = hi - lo;
    span.first = static_cast<uint32_t>(std::min(lo, static_cast<double>(grid - 1)));
    const auto last = static_cast<uint32_t>(
        std::min(std::ceil(hi) - 1.0, static_cast<double>(grid - 1)));
    for (uint32_t b = span.first; b <= last; ++b) {
        const double overlap =
            std::min(hi, static_cast<double>(b) + 1.0) - std::max(lo, static_cast<double>(b));
        if (overlap > 0.0) span.frac.push_back(overlap / width);
        else span.frac.push_back(0.0);
    }
    return span;
}

}  // namespace

HeatmapGrid::HeatmapGrid(uint32_t grid_size) : grid_(grid_size) {
    if (grid_ == 0) throw ConfigError("heatmap grid size must be >= 1");
    mass_.assign(static_cast<size_t>(grid_) * grid_, 0.0);
    row_weight_.assign(grid_, 0.0);
}

void HeatmapGrid::add_sentence(const SentenceRecord& rec) {
    const AttentionTensor& t = rec.tensor;
    const size_t n = t.src_len;
    const size_t steps = t.steps;
    const double inv_lh = 1.0 / (static_cast<double>(t.layers) * t.heads);

    // Column spans are shared by all steps of the sentence.
    std::vector<BinSpan> cols(n);
    for (size_t i = 0; i < n; ++i) {
        const double lo = static_cast<double>(i) * grid_ / static_cast<double>(n);
        const double hi = static_cast<double>(i + 1) * grid_ / static_cast<double>(n);
        cols[i] = bin_span(lo, hi, grid_);
    }

    std::vector<double> p(n);
    std::vector<double> row_mass(grid_);
    for (size_t step = 0; step < steps; ++step) {
        std::fill(p.begin(), p.end(), 0.0);
        for (uint32_t l = 0; l < t.layers; ++l) {
            for (uint32_t h = 0; h < t.heads; ++h) {
                auto slice = t.slice(static_cast<uint32_t>(step), l, h);
                for (size_t i = 0; i < n; ++i) p[i] += slice[i];
            }
        }

        std::fill(row_mass.begin(), row_mass.end(), 0.0);
        for (size_t i = 0; i < n; ++i) {
            const BinSpan& span = cols[i];
            for (size_t b = 0; b < span.frac.size(); ++b) {
                row_mass[span.first + b] += p[i] * inv_lh * span.frac[b];
            }
        }

        const double rlo = static_cast<double>(step) * grid_ / static_cast<double>(steps);
        const double rhi = static_cast<double>(step + 1) * grid_ / static_cast<double>(steps);
        const BinSpan rows = bin_span(rlo, rhi, grid_);
        for (size_t b = 0; b < rows.frac.size(); ++b) {
            const uint32_t r = rows.first + static_cast<uint32_t>(b);
            row_weight_[r] += rows.frac[b];
            double* cells = mass_.data() + static_cast<size_t>(r) * grid_;
            for (uint32_t c = 0; c < grid_; ++c) cells[c] += rows.frac[b] * row_mass[c];
        }
    }
    ++sentences_;
}

void HeatmapGrid::merge(const HeatmapGrid& other) {
    if (other.grid_ != grid_) throw ConfigError("cannot merge heatmaps of different grid sizes");
    for (size_t i = 0; i < mass_.size(); ++i) mass_[i] += other.mass_[i];
    for (size_t r = 0; r < row_weight_.size(); ++r) row_weight_[r] += other.row_weight_[r];
    sentences_ += other.sentences_;
}

std::vector<double> HeatmapGrid::cells() const {
    std::vector<double> out(mass_.size(), 0.0);
    for (uint32_t r = 0; r < grid_; ++r) {
        if (row_weight_[r] <= 0.0) continue;
        const double inv = 1.0 / row_weight_[r];
        for (uint32_t c = 0; c < grid_; ++c) {
            out[static_cast<size_t>(r) * grid_ + c] = mass_[static_cast<size_t>(r) * grid_ + c] * inv;
        }
    }
    return out;
}

void write_heatmap_ppm(const HeatmapGrid& grid, const std::string& path) {
    const std::vector<double> cells = grid.cells();
    double max_cell = 0.0;
    for (double c : cells) max_cell = std::max(max_cell, c);

    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw FormatError("cannot open for writing: " + path);
    std::fprintf(f, "P5\n%u %u\n255\n", grid.size(), grid.size());
    std::vector<unsigned char> pixels(cells.size(), 0);
    if (max_cell > 0.0) {
        for (size_t i = 0; i < cells.size(); ++i) {
            pixels[i] = static_cast<unsigned char>(std::lround(255.0 * cells[i] / max_cell));
        }
    }
    const bool ok = std::fwrite(pixels.data(), 1, pixels.size(), f) == pixels.size();
    if (std::fclose(f) != 0 || !ok) throw FormatError("write failed for " + path);
}

void write_heatmap_csv(const HeatmapGrid& grid, const std::string& path) {
    const std::vector<double> cells = grid.cells();
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw FormatError("cannot open for writing: " + path);
    const uint32_t g = grid.size();
    for (uint32_t r = 0; r < g; ++r) {
        for (uint32_t c = 0; c < g; ++c) {
            std::fprintf(f, "%s%s", c ? "," : "",
                         format_g6(cells[static_cast<size_t>(r) * g + c]).c_str());
        }
        std::fputc('\n', f);
    }
    if (std::fclose(f) != 0) throw FormatError("write failed for " + path);
}

}  // namespace attnsink
