#include "pdagrnn/checkpoint.hpp"

#include "binary_io.hpp"
#include "pdagrnn/errors.hpp"
#include "pdagrnn/kvfile.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <fstream>
#include <sstream>

namespace pdagrnn {

namespace {

constexpr std::string_view kMagic = "PDAGRNN1";

struct Entry {
    std::string name;
    Eigen::Index rows;
    Eigen::Index cols;
    std::function<double&(Eigen::Index, Eigen::Index)> element;
};

std::string exact(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);  // shortest round-trip form
    return std::string(buf, ptr);
}

std::vector<Entry> entries(Checkpoint& ck) {
    std::vector<Entry> out;
    for (auto& t : tensors(ck.params)) {
        double* data = t.data;
        const Eigen::Index rows = t.rows;
        out.push_back({t.name, t.rows, t.cols, [data, rows](Eigen::Index r, Eigen::Index c) -> double& { return data[c * rows + r]; }});
    }
    auto add_vec = [&](std::string name, std::vector<double>& v) {
        out.push_back({std::move(name), static_cast<Eigen::Index>(v.size()), 1, [&v](Eigen::Index r, Eigen::Index) -> double& { return v[r]; }});
    };
    add_vec("norm.mean", ck.norm.mean);
    add_vec("norm.std", ck.norm.std);
    return out;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& checkpoint) {
    checkpoint.config.validate();
    checkpoint.params.check_shapes(checkpoint.config);
    if (checkpoint.norm.mean.size() != checkpoint.config.bands || checkpoint.norm.std.size() != checkpoint.config.bands)
        throw ValidationError("checkpoint: normalizer band count does not match the model");

    Checkpoint copy = checkpoint;
    auto items = entries(copy);
    const auto& c = checkpoint.config;

    std::ostringstream header;
    header << "m=" << c.m << "\npatch=" << c.patch_side() << "\nconnectivity=" << to_string(c.connectivity) << "\nbands=" << c.bands
           << "\nhidden=" << c.hidden << "\nfc1=" << c.fc1 << "\nclasses=" << c.classes << "\ndropout=" << exact(c.dropout)
           << "\nrecurrent_activation=" << to_string(c.recurrent) << "\nfc_activation=" << to_string(c.fc) << '\n';
    std::size_t offset = 0;
    for (const auto& e : items) {
        header << "tensor." << e.name << '=' << e.rows << ',' << e.cols << ',' << offset << '\n';
        offset += static_cast<std::size_t>(e.rows * e.cols) * 4;
    }
    const std::string text = header.str();

    std::ostringstream out(std::ios::binary);
    out.write(kMagic.data(), static_cast<std::streamsize>(kMagic.size()));
    detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (auto& e : items)
        for (Eigen::Index r = 0; r < e.rows; ++r)
            for (Eigen::Index col = 0; col < e.cols; ++col) detail::put_f32(out, static_cast<float>(e.element(r, col)));
    return out.str();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    std::istringstream in(bytes, std::ios::binary);
    char magic[8];
    if (!in.read(magic, 8) || std::string_view(magic, 8) != kMagic) throw IoError("checkpoint: bad magic bytes");
    std::uint32_t header_len = 0;
    if (!detail::get_u32(in, header_len) || header_len > bytes.size()) throw IoError("checkpoint: truncated header length");
    std::string text(header_len, '\0');
    if (!in.read(text.data(), header_len)) throw IoError("checkpoint: truncated header");

    Checkpoint ck;
    std::vector<std::pair<std::string, std::string>> manifest;
    try {
        const auto kv = KeyValues::parse(text, "checkpoint header");
        auto& c = ck.config;
        c.m = kv.get_uint("m");
        c.connectivity = parse_connectivity(kv.get("connectivity"));
        c.bands = kv.get_uint("bands");
        c.hidden = kv.get_uint("hidden");
        c.fc1 = kv.get_uint("fc1");
        c.classes = kv.get_uint("classes");
        c.dropout = kv.get_double("dropout");
        c.recurrent = parse_activation(kv.get("recurrent_activation"));
        c.fc = parse_activation(kv.get("fc_activation"));
        c.validate();
        if (kv.get_uint("patch") != c.patch_side()) throw ValidationError("patch side inconsistent with m");
        for (const auto& [k, v] : kv.entries())
            if (k.rfind("tensor.", 0) == 0) manifest.emplace_back(k.substr(7), v);
    } catch (const ValidationError& e) {
        throw IoError(std::string("checkpoint: malformed header: ") + e.what());
    }

    ck.params = ModelParams::zeros(ck.config);
    ck.norm.mean.assign(ck.config.bands, 0.0);
    ck.norm.std.assign(ck.config.bands, 1.0);
    auto items = entries(ck);
    if (manifest.size() != items.size()) throw IoError("checkpoint: manifest lists " + std::to_string(manifest.size()) + " tensors, expected " + std::to_string(items.size()));

    const std::size_t data_start = 8 + 4 + header_len;
    std::size_t offset = 0;
    for (auto& e : items) {
        const auto it = std::find_if(manifest.begin(), manifest.end(), [&](const auto& p) { return p.first == e.name; });
        if (it == manifest.end()) throw IoError("checkpoint: manifest is missing tensor " + e.name);
        std::ostringstream want;
        want << e.rows << ',' << e.cols << ',' << offset;
        if (it->second != want.str()) throw IoError("checkpoint: tensor " + e.name + " has manifest entry " + it->second + ", expected " + want.str());
        offset += static_cast<std::size_t>(e.rows * e.cols) * 4;
    }
    if (bytes.size() != data_start + offset)
        throw IoError("checkpoint: payload is " + std::to_string(bytes.size() - data_start) + " bytes, manifest implies " + std::to_string(offset));

    for (auto& e : items)
        for (Eigen::Index r = 0; r < e.rows; ++r)
            for (Eigen::Index col = 0; col < e.cols; ++col) {
                float v = 0.0f;
                if (!detail::get_f32(in, v)) throw IoError("checkpoint: truncated tensor data");
                e.element(r, col) = v;
            }
    if (!ck.params.all_finite()) throw NumericError("checkpoint: non-finite parameters");
    return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    const std::string bytes = encode_checkpoint(checkpoint);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return decode_checkpoint(buffer.str());
}

}  // namespace pdagrnn
