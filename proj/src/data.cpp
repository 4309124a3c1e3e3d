#include "pdagrnn/data.hpp"

#include "binary_io.hpp"
#include "pdagrnn/errors.hpp"
#include "pdagrnn/kvfile.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace pdagrnn {

namespace fs = std::filesystem;

std::size_t LabelMap::num_classes() const {
    std::uint16_t top = 0;
    for (auto v : labels) top = std::max(top, v);
    return top;
}

fs::path payload_path(const fs::path& header) {
    fs::path p = header;
    if (p.extension() == ".hdr") return p.replace_extension(".raw");
    p += ".raw";
    return p;
}

namespace {

KeyValues read_header(const fs::path& header, const std::set<std::string>& keys) {
    if (!fs::exists(header)) throw LoadError(LoadErrorKind::missing_file, "missing header file " + header.string());
    KeyValues kv;
    try {
        kv = KeyValues::read_file(header);
    } catch (const ValidationError& e) {
        throw LoadError(LoadErrorKind::malformed_header, e.what());
    }
    const auto unknown = kv.unknown_keys(keys);
    if (!unknown.empty()) throw LoadError(LoadErrorKind::malformed_header, header.string() + ": unknown header key '" + unknown.front() + "'");
    for (const auto& k : keys)
        if (!kv.has(k)) throw LoadError(LoadErrorKind::malformed_header, header.string() + ": missing header key '" + k + "'");
    return kv;
}

std::size_t header_dim(const KeyValues& kv, const std::string& key) {
    std::uint64_t v = 0;
    try {
        v = kv.get_uint(key);
    } catch (const ValidationError& e) {
        throw LoadError(LoadErrorKind::malformed_header, kv.source() + ": " + e.what());
    }
    if (v == 0) throw LoadError(LoadErrorKind::malformed_header, kv.source() + ": '" + key + "' must be >= 1");
    return static_cast<std::size_t>(v);
}

void expect_value(const KeyValues& kv, const std::string& key, const std::string& want) {
    if (kv.get(key) != want)
        throw LoadError(LoadErrorKind::malformed_header, kv.source() + ": unsupported " + key + " '" + kv.get(key) + "' (expected " + want + ")");
}

std::ifstream open_payload(const fs::path& payload, std::uintmax_t expected_bytes) {
    if (!fs::exists(payload)) throw LoadError(LoadErrorKind::missing_file, "missing payload file " + payload.string());
    const auto actual = fs::file_size(payload);
    if (actual != expected_bytes)
        throw LoadError(LoadErrorKind::payload_size, payload.string() + ": payload has " + std::to_string(actual) + " bytes, header implies " + std::to_string(expected_bytes));
    std::ifstream in(payload, std::ios::binary);
    if (!in) throw IoError("cannot open " + payload.string());
    return in;
}

std::ofstream create(const fs::path& path, std::ios::openmode mode = std::ios::out) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, mode | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

}  // namespace

void validate_cube(const HsiCube& cube) {
    if (cube.height == 0 || cube.width == 0 || cube.bands == 0) throw ValidationError("cube dimensions must be >= 1");
    if (cube.values.size() != cube.height * cube.width * cube.bands) throw ValidationError("cube value count does not match its dimensions");
    for (float v : cube.values)
        if (!std::isfinite(v)) throw NumericError("cube contains non-finite values");
}

void check_compatible(const HsiCube& cube, const LabelMap& labels) {
    if (cube.height != labels.height || cube.width != labels.width)
        throw ValidationError("label map is " + std::to_string(labels.height) + "x" + std::to_string(labels.width) + " but cube is " +
                              std::to_string(cube.height) + "x" + std::to_string(cube.width));
}

void save_cube(const HsiCube& cube, const fs::path& header) {
    validate_cube(cube);
    {
        auto out = create(header);
        out << "height=" << cube.height << "\nwidth=" << cube.width << "\nbands=" << cube.bands
            << "\ndtype=f32le\norder=pixel-interleaved\n";
    }
    auto out = create(payload_path(header), std::ios::binary);
    for (float v : cube.values) detail::put_f32(out, v);
    if (!out) throw IoError("failed writing " + payload_path(header).string());
}

HsiCube load_cube(const fs::path& header) {
    const auto kv = read_header(header, {"height", "width", "bands", "dtype", "order"});
    expect_value(kv, "dtype", "f32le");
    expect_value(kv, "order", "pixel-interleaved");
    HsiCube cube(header_dim(kv, "height"), header_dim(kv, "width"), header_dim(kv, "bands"));

    auto in = open_payload(payload_path(header), cube.values.size() * 4);
    for (auto& v : cube.values)
        if (!detail::get_f32(in, v)) throw LoadError(LoadErrorKind::payload_size, "short read in " + payload_path(header).string());
    validate_cube(cube);
    return cube;
}

void save_labels(const LabelMap& labels, const fs::path& header) {
    if (labels.labels.size() != labels.height * labels.width || labels.height == 0 || labels.width == 0)
        throw ValidationError("label map dimensions are inconsistent");
    {
        auto out = create(header);
        out << "height=" << labels.height << "\nwidth=" << labels.width << "\ndtype=u16le\n";
    }
    auto out = create(payload_path(header), std::ios::binary);
    for (auto v : labels.labels) detail::put_u16(out, v);
    if (!out) throw IoError("failed writing " + payload_path(header).string());
}

LabelMap load_labels(const fs::path& header) {
    const auto kv = read_header(header, {"height", "width", "dtype"});
    expect_value(kv, "dtype", "u16le");
    LabelMap labels(header_dim(kv, "height"), header_dim(kv, "width"));
    auto in = open_payload(payload_path(header), labels.labels.size() * 2);
    for (auto& v : labels.labels)
        if (!detail::get_u16(in, v)) throw LoadError(LoadErrorKind::payload_size, "short read in " + payload_path(header).string());
    return labels;
}

NormStats fit_normalizer(const HsiCube& cube, const std::vector<Coord>& train_pixels) {
    if (train_pixels.empty()) throw ValidationError("fit_normalizer: training pixel set is empty");
    NormStats stats;
    stats.mean.assign(cube.bands, 0.0);
    stats.std.assign(cube.bands, 0.0);
    const double count = static_cast<double>(train_pixels.size());

    for (const Coord p : train_pixels) {
        if (p.row < 0 || p.col < 0 || static_cast<std::size_t>(p.row) >= cube.height || static_cast<std::size_t>(p.col) >= cube.width)
            throw ValidationError("fit_normalizer: pixel outside the cube");
        const std::size_t base = cube.offset(p.row, p.col);
        for (std::size_t b = 0; b < cube.bands; ++b) stats.mean[b] += cube.values[base + b];
    }
    for (auto& m : stats.mean) m /= count;

    // Two-pass population variance.
    for (const Coord p : train_pixels) {
        const std::size_t base = cube.offset(p.row, p.col);
        for (std::size_t b = 0; b < cube.bands; ++b) {
            const double d = cube.values[base + b] - stats.mean[b];
            stats.std[b] += d * d;
        }
    }
    for (auto& s : stats.std) {
        s = std::sqrt(s / count);
        if (s < 1e-8) s = 1.0;
    }
    return stats;
}

std::size_t mirror_index(long index, std::size_t size) {
    if (size == 1) return 0;
    const long period = 2 * (static_cast<long>(size) - 1);
    long i = index % period;
    if (i < 0) i += period;
    if (i >= static_cast<long>(size)) i = period - i;
    return static_cast<std::size_t>(i);
}

Patch extract_patch(const HsiCube& cube, const NormStats& stats, std::size_t row, std::size_t col, std::size_t n) {
    if (n == 0 || n % 2 == 0) throw ValidationError("extract_patch: patch side must be odd, got " + std::to_string(n));
    if (row >= cube.height || col >= cube.width) throw ValidationError("extract_patch: centre pixel outside the cube");
    if (stats.mean.size() != cube.bands || stats.std.size() != cube.bands)
        throw ValidationError("extract_patch: normalizer has " + std::to_string(stats.mean.size()) + " bands, cube has " + std::to_string(cube.bands));

    Patch patch;
    patch.n = n;
    patch.bands = cube.bands;
    patch.values.resize(n * n * cube.bands);
    const long half = static_cast<long>(n / 2);
    auto dst = patch.values.begin();
    for (long dr = -half; dr <= half; ++dr) {
        const std::size_t r = mirror_index(static_cast<long>(row) + dr, cube.height);
        for (long dc = -half; dc <= half; ++dc) {
            const std::size_t c = mirror_index(static_cast<long>(col) + dc, cube.width);
            const std::size_t base = cube.offset(r, c);
            for (std::size_t b = 0; b < cube.bands; ++b) *dst++ = (cube.values[base + b] - stats.mean[b]) / stats.std[b];
        }
    }
    return patch;
}

Split stratified_split(const LabelMap& labels, const SplitSpec& spec) {
    const std::size_t classes = labels.num_classes();
    std::vector<std::vector<Coord>> by_class(classes + 1);
    for (std::size_t r = 0; r < labels.height; ++r)
        for (std::size_t c = 0; c < labels.width; ++c)
            by_class[labels.at(r, c)].push_back({static_cast<int>(r), static_cast<int>(c)});

    if (spec.per_class.empty() && !(spec.fraction > 0.0 && spec.fraction <= 1.0))
        throw ValidationError("split: need per-class counts or a fraction in (0, 1]");
    if (spec.per_class.size() > 1 && spec.per_class.size() != classes)
        throw ValidationError("split: " + std::to_string(spec.per_class.size()) + " per-class counts given for " + std::to_string(classes) + " classes");

    std::mt19937_64 rng(spec.seed);
    Split split;
    for (std::size_t k = 1; k <= classes; ++k) {
        auto& pool = by_class[k];
        std::size_t want = 0;
        if (spec.per_class.empty())
            want = static_cast<std::size_t>(std::llround(spec.fraction * static_cast<double>(pool.size())));
        else
            want = spec.per_class.size() == 1 ? spec.per_class.front() : spec.per_class[k - 1];
        if (want > pool.size())
            throw ValidationError("split: class " + std::to_string(k) + " has " + std::to_string(pool.size()) + " labeled pixels, " + std::to_string(want) + " requested");

        // Partial Fisher-Yates: the first `want` entries become the training draw.
        for (std::size_t i = 0; i < want; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
            std::swap(pool[i], pool[pick(rng)]);
        }
        split.train.insert(split.train.end(), pool.begin(), pool.begin() + static_cast<long>(want));
        split.test.insert(split.test.end(), pool.begin() + static_cast<long>(want), pool.end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

void write_split(const Split& split, const fs::path& path) {
    auto out = create(path);
    for (const Coord p : split.train) out << p.row << ',' << p.col << ",train\n";
    for (const Coord p : split.test) out << p.row << ',' << p.col << ",test\n";
    if (!out) throw IoError("failed writing " + path.string());
}

Split read_split(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open split file " + path.string());
    Split split;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
        if (c2 == std::string::npos) throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected row,col,set");
        const std::string where = path.string() + ":" + std::to_string(line_no);
        const Coord p{static_cast<int>(parse_uint(line.substr(0, c1), where)), static_cast<int>(parse_uint(line.substr(c1 + 1, c2 - c1 - 1), where))};
        const std::string set = line.substr(c2 + 1);
        if (set == "train")
            split.train.push_back(p);
        else if (set == "test")
            split.test.push_back(p);
        else
            throw IoError(where + ": unknown set '" + set + "'");
    }
    return split;
}

double noise_std_for_snr(double snr) {
    if (!(snr > 0.0)) throw ValidationError("snr must be positive");
    return std::sqrt((1.0 / 3.0) / snr);
}

std::pair<HsiCube, LabelMap> synth_generate(const SynthParams& p) {
    if (p.classes == 0 || p.bands == 0 || p.height == 0 || p.width == 0 || p.block_size == 0)
        throw ValidationError("synth: classes, bands, height, width and block_size must be >= 1");
    if (p.classes > 65535) throw ValidationError("synth: at most 65535 classes");
    if (!(p.noise_std >= 0.0) || !std::isfinite(p.noise_std)) throw ValidationError("synth: noise_std must be finite and >= 0");

    std::mt19937_64 rng(p.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<std::vector<double>> signatures(p.classes, std::vector<double>(p.bands));
    for (auto& s : signatures)
        for (auto& v : s) v = unit(rng);

    const std::size_t tiles_down = (p.height + p.block_size - 1) / p.block_size;
    const std::size_t tiles_across = (p.width + p.block_size - 1) / p.block_size;
    const std::size_t tiles = tiles_down * tiles_across;
    std::uniform_int_distribution<std::size_t> pick_class(1, p.classes);
    std::vector<std::uint16_t> tile_class(tiles);
    for (auto& t : tile_class) t = static_cast<std::uint16_t>(pick_class(rng));
    if (tiles >= p.classes) {
        // Every class gets at least one tile.
        std::vector<std::size_t> perm(tiles);
        for (std::size_t i = 0; i < tiles; ++i) perm[i] = i;
        std::shuffle(perm.begin(), perm.end(), rng);
        for (std::size_t k = 0; k < p.classes; ++k) tile_class[perm[k]] = static_cast<std::uint16_t>(k + 1);
    }

    LabelMap labels(p.height, p.width);
    HsiCube cube(p.height, p.width, p.bands);
    std::normal_distribution<double> noise(0.0, p.noise_std > 0.0 ? p.noise_std : 1.0);
    for (std::size_t r = 0; r < p.height; ++r) {
        for (std::size_t c = 0; c < p.width; ++c) {
            const auto k = tile_class[(r / p.block_size) * tiles_across + c / p.block_size];
            labels.at(r, c) = k;
            const auto& sig = signatures[k - 1];
            for (std::size_t b = 0; b < p.bands; ++b) {
                const double eps = p.noise_std > 0.0 ? noise(rng) : 0.0;
                cube.at(r, c, b) = static_cast<float>(sig[b] + eps);
            }
        }
    }
    return {std::move(cube), std::move(labels)};
}

}  // namespace pdagrnn
