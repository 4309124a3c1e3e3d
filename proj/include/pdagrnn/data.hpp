#pragma once

#include "pdagrnn/graph.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

namespace pdagrnn {

/// height x width x bands cube, pixel-interleaved: ((row * width) + col) * bands + band.
struct HsiCube {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t bands = 0;
    std::vector<float> values;

    HsiCube() = default;
    HsiCube(std::size_t h, std::size_t w, std::size_t b) : height(h), width(w), bands(b), values(h * w * b, 0.0f) {}

    std::size_t offset(std::size_t row, std::size_t col) const { return (row * width + col) * bands; }
    float at(std::size_t row, std::size_t col, std::size_t band) const { return values[offset(row, col) + band]; }
    float& at(std::size_t row, std::size_t col, std::size_t band) { return values[offset(row, col) + band]; }
};

/// 0 = unlabeled, 1..C = classes.
struct LabelMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint16_t> labels;

    LabelMap() = default;
    LabelMap(std::size_t h, std::size_t w) : height(h), width(w), labels(h * w, 0) {}

    std::uint16_t at(std::size_t row, std::size_t col) const { return labels[row * width + col]; }
    std::uint16_t& at(std::size_t row, std::size_t col) { return labels[row * width + col]; }
    std::size_t num_classes() const;
};

struct NormStats {
    std::vector<double> mean;
    std::vector<double> std;
};

/// Either explicit per-class counts (a single entry applies to every class)
/// or a fraction of each class's labeled pixels.
struct SplitSpec {
    std::vector<std::size_t> per_class;
    double fraction = 0.0;
    std::uint64_t seed = 0;
};

struct Split {
    std::vector<Coord> train;
    std::vector<Coord> test;
};

/// n x n x bands standardized window; (r, c, b) -> (r * n + c) * bands + b.
struct Patch {
    std::size_t n = 0;
    std::size_t bands = 0;
    std::vector<double> values;
    int label = 0;

    double at(std::size_t r, std::size_t c, std::size_t b) const { return values[(r * n + c) * bands + b]; }
};

void save_cube(const HsiCube& cube, const std::filesystem::path& header);
HsiCube load_cube(const std::filesystem::path& header);
void save_labels(const LabelMap& labels, const std::filesystem::path& header);
LabelMap load_labels(const std::filesystem::path& header);

/// Payload file that accompanies a header: "scene.hdr" -> "scene.raw".
std::filesystem::path payload_path(const std::filesystem::path& header);

void validate_cube(const HsiCube& cube);
void check_compatible(const HsiCube& cube, const LabelMap& labels);

NormStats fit_normalizer(const HsiCube& cube, const std::vector<Coord>& train_pixels);

/// Reflect-101 index: -1 -> 1 and size -> size - 2. Any size >= 1.
std::size_t mirror_index(long index, std::size_t size);

Patch extract_patch(const HsiCube& cube, const NormStats& stats, std::size_t row, std::size_t col, std::size_t n);

Split stratified_split(const LabelMap& labels, const SplitSpec& spec);

void write_split(const Split& split, const std::filesystem::path& path);
Split read_split(const std::filesystem::path& path);

struct SynthParams {
    std::size_t classes = 5;
    std::size_t bands = 20;
    std::size_t height = 64;
    std::size_t width = 64;
    double noise_std = 0.0;
    std::size_t block_size = 8;
    std::uint64_t seed = 0;
};

/// Noise std that gives a per-band power SNR of `snr` for the generator's
/// U(0, 1) signatures (mean-square 1/3).
double noise_std_for_snr(double snr);

std::pair<HsiCube, LabelMap> synth_generate(const SynthParams& params);

}  // namespace pdagrnn
