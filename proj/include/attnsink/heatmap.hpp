#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "attnsink/attention_store.hpp"

namespace attnsink {

// G x G mean-attention grid. Each sentence's layer/head-averaged [T, n]
// plane is binned proportionally: step t covers grid rows [t*G/T, (t+1)*G/T)
// and source position i covers grid cols [i*G/n, (i+1)*G/n), with fractional
// overlap weights. A cell holds accumulated mass divided by the accumulated
// step coverage of its row, so every grid row is a distribution over columns.
class HeatmapGrid {
public:
    explicit HeatmapGrid(uint32_t grid_size = 32);

    void add_sentence(const SentenceRecord& rec);
    void merge(const HeatmapGrid& other);

    uint32_t size() const { return grid_; }
    // Finalized cell values (row-major, row = relative decoder time).
    std::vector<double> cells() const;

    uint64_t sentences() const { return sentences_; }

private:
    uint32_t grid_;
    std::vector<double> mass_;        // G*G accumulated attention mass
    std::vector<double> row_weight_;  // G accumulated step coverage
    uint64_t sentences_ = 0;
};

// P5 grayscale PPM/PGM, cells normalized to the max cell; bit-exact output.
void write_heatmap_ppm(const HeatmapGrid& grid, const std::string& path);
// Exact cell values, one CSV row per grid row.
void write_heatmap_csv(const HeatmapGrid& grid, const std::string& path);

}  // namespace attnsink
