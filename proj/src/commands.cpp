#include "pdagrnn/commands.hpp"

#include "pdagrnn/errors.hpp"

#include <fstream>
#include <sstream>

namespace pdagrnn {

namespace fs = std::filesystem;

const std::set<std::string>& ExperimentConfig::known_keys() {
    static const std::set<std::string> keys = {
        "cube",     "labels",     "out_dir",         "patch",          "connectivity", "hidden",  "fc1",
        "dropout",  "recurrent_activation",          "fc_activation",  "learning_rate", "momentum", "batch_size",
        "epochs",   "seed",       "threads",         "train_per_class", "train_fraction", "runs", "reproducible",
    };
    return keys;
}

namespace {

std::vector<std::size_t> parse_counts(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto first = item.find_first_not_of(' ');
        const auto last = item.find_last_not_of(' ');
        if (first == std::string::npos) throw ValidationError("train_per_class: empty entry");
        out.push_back(parse_uint(item.substr(first, last - first + 1), "train_per_class"));
    }
    if (out.empty()) throw ValidationError("train_per_class: no counts given");
    return out;
}

fs::path resolve(const fs::path& base, const std::string& value) {
    const fs::path p(value);
    return p.is_absolute() || base.empty() ? p : base / p;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_key_values(const KeyValues& kv, const fs::path& base_dir) {
    const auto unknown = kv.unknown_keys(known_keys());
    if (!unknown.empty()) {
        std::string list;
        for (const auto& k : unknown) list += (list.empty() ? "" : ", ") + k;
        throw ValidationError("unknown config keys: " + list);
    }

    ExperimentConfig c;
    if (!kv.has("cube")) throw ValidationError("config: missing path key 'cube'");
    if (!kv.has("labels")) throw ValidationError("config: missing path key 'labels'");
    c.cube = resolve(base_dir, kv.get("cube"));
    c.labels = resolve(base_dir, kv.get("labels"));
    if (kv.has("out_dir")) c.out_dir = resolve(base_dir, kv.get("out_dir"));
    if (kv.has("patch")) c.patch = kv.get_uint("patch");
    if (kv.has("connectivity")) c.connectivity = parse_connectivity(kv.get("connectivity"));
    if (kv.has("hidden")) c.hidden = kv.get_uint("hidden");
    if (kv.has("fc1")) c.fc1 = kv.get_uint("fc1");
    if (kv.has("dropout")) c.dropout = kv.get_double("dropout");
    if (kv.has("recurrent_activation")) c.recurrent = parse_activation(kv.get("recurrent_activation"));
    if (kv.has("fc_activation")) c.fc = parse_activation(kv.get("fc_activation"));
    if (kv.has("learning_rate")) c.train.learning_rate = kv.get_double("learning_rate");
    if (kv.has("momentum")) c.train.momentum = kv.get_double("momentum");
    if (kv.has("batch_size")) c.train.batch_size = kv.get_uint("batch_size");
    if (kv.has("epochs")) c.train.epochs = kv.get_uint("epochs");
    if (kv.has("seed")) c.train.seed = kv.get_uint("seed");
    if (kv.has("threads")) c.train.threads = kv.get_uint("threads");
    if (kv.has("runs")) c.runs = kv.get_uint("runs");
    if (kv.has("reproducible")) c.reproducible = kv.get_bool("reproducible");
    if (kv.has("train_per_class") && kv.has("train_fraction")) throw ValidationError("config: set only one of train_per_class and train_fraction");
    if (kv.has("train_per_class")) c.split.per_class = parse_counts(kv.get("train_per_class"));
    if (kv.has("train_fraction")) c.split.fraction = kv.get_double("train_fraction");
    if (c.split.per_class.empty() && c.split.fraction == 0.0) throw ValidationError("config: one of train_per_class or train_fraction is required");

    if (c.runs == 0) throw ValidationError("config: runs must be >= 1");
    if (c.patch == 0 || c.patch % 2 == 0) throw ValidationError("config: patch must be odd and >= 1");
    c.train.validate();
    return c;
}

ExperimentConfig ExperimentConfig::from_file(const fs::path& path) {
    if (!fs::exists(path)) throw ValidationError("config file not found: " + path.string());
    return from_key_values(KeyValues::read_file(path), path.parent_path());
}

void ExperimentConfig::apply(const GlobalOptions& options) {
    if (options.seed) train.seed = *options.seed;
    if (options.out_dir) out_dir = *options.out_dir;
    if (options.threads) train.threads = *options.threads;
    if (options.reproducible) reproducible = true;
    train.validate();
}

ModelConfig ExperimentConfig::model_config(std::size_t bands, std::size_t classes) const {
    ModelConfig m;
    m.m = (patch + 1) / 2;
    m.connectivity = connectivity;
    m.bands = bands;
    m.hidden = hidden;
    m.fc1 = fc1;
    m.classes = classes;
    m.dropout = dropout;
    m.recurrent = recurrent;
    m.fc = fc;
    m.validate();
    return m;
}

namespace {

void require_file(const fs::path& path, const std::string& key) {
    if (!fs::exists(path)) throw ValidationError("config key '" + key + "': file not found: " + path.string());
}

MetricsReport evaluate(const ModelParams& params, const ModelConfig& mc, const PatchTopology& topology, const HsiCube& cube, const LabelMap& labels,
                       const NormStats& norm, const std::vector<Coord>& pixels, std::size_t threads, ConfusionMatrix* cm_out = nullptr) {
    if (pixels.empty()) throw ValidationError("evaluation set is empty");
    std::vector<int> truth;
    truth.reserve(pixels.size());
    for (const Coord p : pixels) truth.push_back(labels.at(p.row, p.col));
    const auto preds = predict_pixels(params, mc, topology, cube, norm, pixels, threads);
    const auto cm = confusion(truth, preds, mc.classes);
    if (cm_out) *cm_out = cm;
    return oa_aa_kappa(cm);
}

}  // namespace

TrainSummary cmd_train(const ExperimentConfig& config) {
    require_file(config.cube, "cube");
    require_file(config.labels, "labels");
    const HsiCube cube = load_cube(config.cube);
    const LabelMap labels = load_labels(config.labels);
    check_compatible(cube, labels);
    const std::size_t classes = labels.num_classes();
    if (classes == 0) throw ValidationError("label map has no labeled pixels");

    const ModelConfig mc = config.model_config(cube.bands, classes);
    const PatchTopology topology = make_patch_topology(config.patch, config.connectivity);
    fs::create_directories(config.out_dir);

    TrainSummary summary;
    for (std::size_t run = 0; run < config.runs; ++run) {
        TrainConfig tc = config.train;
        tc.seed = config.train.seed + run;
        SplitSpec spec = config.split;
        spec.seed = tc.seed;
        const Split split = stratified_split(labels, spec);
        const std::string suffix = "_run" + std::to_string(run + 1);
        write_split(split, config.out_dir / ("split" + suffix + ".csv"));

        FitResult fitted = fit(cube, labels, split, mc, tc, topology);
        write_loss_log(fitted.log, config.out_dir / ("train_log" + suffix + ".csv"));

        const MetricsReport report = evaluate(fitted.params, mc, topology, cube, labels, fitted.norm, split.test, tc.threads);
        write_metrics_csv(aggregate_runs(std::span(&report, 1)), config.out_dir / ("metrics" + suffix + ".csv"));
        summary.runs.push_back(report);
        summary.loss_logs.push_back(fitted.log);

        if (run + 1 == config.runs) {
            summary.checkpoint = config.out_dir / "checkpoint.pdr";
            save_checkpoint({mc, fitted.params, fitted.norm}, summary.checkpoint);
        }
    }
    summary.aggregate = aggregate_runs(summary.runs);
    summary.metrics_csv = config.out_dir / "metrics.csv";
    write_metrics_csv(summary.aggregate, summary.metrics_csv);
    return summary;
}

TrainSummary cmd_train(const fs::path& config_path, const GlobalOptions& options) {
    ExperimentConfig config = ExperimentConfig::from_file(config_path);
    config.apply(options);
    return cmd_train(config);
}

EvalSet parse_eval_set(const std::string& text) {
    if (text == "train") return EvalSet::train;
    if (text == "test") return EvalSet::test;
    if (text == "all") return EvalSet::all;
    throw ValidationError("unknown evaluation set '" + text + "' (expected train, test or all)");
}

namespace {

struct LoadedModel {
    Checkpoint checkpoint;
    HsiCube cube;
    PatchTopology topology;
};

LoadedModel load_model(const fs::path& checkpoint, const fs::path& cube_path) {
    LoadedModel lm{load_checkpoint(checkpoint), load_cube(cube_path), {}};
    const auto& mc = lm.checkpoint.config;
    if (lm.cube.bands != mc.bands)
        throw ValidationError("shape mismatch: checkpoint expects " + std::to_string(mc.bands) + " bands, cube has " + std::to_string(lm.cube.bands));
    lm.topology = make_patch_topology(mc.patch_side(), mc.connectivity);
    return lm;
}

}  // namespace

EvalResult cmd_eval(const fs::path& checkpoint, const fs::path& cube_path, const fs::path& labels_path, const fs::path& split_path,
                    const fs::path& out_csv, EvalSet set, std::size_t threads) {
    const LoadedModel lm = load_model(checkpoint, cube_path);
    const LabelMap labels = load_labels(labels_path);
    check_compatible(lm.cube, labels);
    const Split split = read_split(split_path);

    std::vector<Coord> pixels;
    if (set != EvalSet::test) pixels.insert(pixels.end(), split.train.begin(), split.train.end());
    if (set != EvalSet::train) pixels.insert(pixels.end(), split.test.begin(), split.test.end());
    for (const Coord p : pixels) {
        if (p.row < 0 || p.col < 0 || static_cast<std::size_t>(p.row) >= labels.height || static_cast<std::size_t>(p.col) >= labels.width)
            throw ValidationError("split pixel (" + std::to_string(p.row) + "," + std::to_string(p.col) + ") outside the scene");
        const auto k = labels.at(p.row, p.col);
        if (k == 0 || k > lm.checkpoint.config.classes)
            throw ValidationError("split pixel (" + std::to_string(p.row) + "," + std::to_string(p.col) + ") has label " + std::to_string(k) +
                                  " outside the checkpoint's classes");
    }

    EvalResult result;
    result.confusion = ConfusionMatrix(lm.checkpoint.config.classes);
    result.report = evaluate(lm.checkpoint.params, lm.checkpoint.config, lm.topology, lm.cube, labels, lm.checkpoint.norm, pixels, threads,
                             &result.confusion);
    const auto agg = aggregate_runs(std::span(&result.report, 1));
    result.csv = metrics_csv(agg);
    if (!out_csv.empty()) write_metrics_csv(agg, out_csv);
    return result;
}

const std::array<std::array<std::uint8_t, 3>, 16> kPalette = {{
    {0, 0, 0},       {230, 25, 75},   {60, 180, 75},  {255, 225, 25}, {0, 130, 200},   {245, 130, 48}, {145, 30, 180},  {70, 240, 240},
    {240, 50, 230},  {210, 245, 60},  {250, 190, 212}, {0, 128, 128},  {220, 190, 255}, {170, 110, 40}, {128, 0, 0},     {170, 255, 195},
}};

namespace {

std::ofstream create_binary(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

}  // namespace

void write_pgm(const LabelMap& map, const fs::path& path) {
    auto out = create_binary(path);
    const bool wide = map.num_classes() > 255;
    out << "P5\n" << map.width << ' ' << map.height << '\n' << (wide ? 65535 : 255) << '\n';
    for (auto v : map.labels) {
        if (wide) out.put(static_cast<char>(v >> 8));  // netpbm 16-bit samples are big-endian
        out.put(static_cast<char>(v & 0xff));
    }
    if (!out) throw IoError("failed writing " + path.string());
}

void write_ppm(const LabelMap& map, const fs::path& path) {
    auto out = create_binary(path);
    out << "P6\n" << map.width << ' ' << map.height << "\n255\n";
    for (auto v : map.labels) {
        // Classes cycle through entries 1..15; 0 stays black.
        const auto& rgb = kPalette[v == 0 ? 0 : 1 + (v - 1) % 15];
        out.write(reinterpret_cast<const char*>(rgb.data()), 3);
    }
    if (!out) throw IoError("failed writing " + path.string());
}

LabelMap cmd_predict_map(const fs::path& checkpoint, const fs::path& cube_path, const fs::path& out_dir, std::size_t threads) {
    const LoadedModel lm = load_model(checkpoint, cube_path);
    std::vector<Coord> pixels;
    pixels.reserve(lm.cube.height * lm.cube.width);
    for (std::size_t r = 0; r < lm.cube.height; ++r)
        for (std::size_t c = 0; c < lm.cube.width; ++c) pixels.push_back({static_cast<int>(r), static_cast<int>(c)});
    const auto preds = predict_pixels(lm.checkpoint.params, lm.checkpoint.config, lm.topology, lm.cube, lm.checkpoint.norm, pixels, threads);

    LabelMap map(lm.cube.height, lm.cube.width);
    for (std::size_t i = 0; i < preds.size(); ++i) map.labels[i] = static_cast<std::uint16_t>(preds[i]);
    write_pgm(map, out_dir / "class_map.pgm");
    write_ppm(map, out_dir / "class_map.ppm");
    return map;
}

GradCheckReport cmd_gradcheck(const GradCheckConfig& config) { return grad_check(config); }

SynthFiles cmd_synth(const SynthParams& params, const fs::path& out_dir, const std::string& name) {
    const auto [cube, labels] = synth_generate(params);
    SynthFiles files{out_dir / (name + "_cube.hdr"), out_dir / (name + "_labels.hdr")};
    save_cube(cube, files.cube);
    save_labels(labels, files.labels);
    return files;
}

}  // namespace pdagrnn
