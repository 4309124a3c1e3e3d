#pragma once

// Experiment-level commands behind the `pdagrnn` executable.

#include "pdagrnn/checkpoint.hpp"
#include "pdagrnn/data.hpp"
#include "pdagrnn/kvfile.hpp"
#include "pdagrnn/metrics.hpp"
#include "pdagrnn/model.hpp"
#include "pdagrnn/train.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace pdagrnn {

/// Flags shared by every subcommand. When set they override the config file.
struct GlobalOptions {
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out_dir;
    std::optional<std::size_t> threads;
    bool reproducible = false;
};

/// Parsed experiment config. Defaults follow the reference hyperparameters:
/// 13x13 patches, eight-connectivity, 128 hidden units, lr 0.005, dropout 0.4.
struct ExperimentConfig {
    std::filesystem::path cube;
    std::filesystem::path labels;
    std::filesystem::path out_dir = "out";
    std::size_t patch = 13;
    Connectivity connectivity = Connectivity::eight;
    std::size_t hidden = 128;
    std::size_t fc1 = 128;
    double dropout = 0.4;
    Activation recurrent = Activation::tanh;
    Activation fc = Activation::relu;
    TrainConfig train;
    SplitSpec split;
    std::size_t runs = 1;
    bool reproducible = false;

    static const std::set<std::string>& known_keys();
    /// Relative paths resolve against `base_dir`.
    static ExperimentConfig from_key_values(const KeyValues& kv, const std::filesystem::path& base_dir);
    static ExperimentConfig from_file(const std::filesystem::path& path);

    void apply(const GlobalOptions& options);
    /// Model config for data with the given band and class counts.
    ModelConfig model_config(std::size_t bands, std::size_t classes) const;
};

struct TrainSummary {
    std::vector<MetricsReport> runs;
    AggregateReport aggregate;
    std::filesystem::path checkpoint;
    std::filesystem::path metrics_csv;
    std::vector<std::vector<EpochLog>> loss_logs;
};

/// Writes into out_dir: metrics.csv (aggregate), metrics_run<k>.csv,
/// train_log_run<k>.csv, split_run<k>.csv and checkpoint.pdr of the final run.
TrainSummary cmd_train(const ExperimentConfig& config);
TrainSummary cmd_train(const std::filesystem::path& config_path, const GlobalOptions& options);

enum class EvalSet { train, test, all };
EvalSet parse_eval_set(const std::string& text);

struct EvalResult {
    ConfusionMatrix confusion{1};
    MetricsReport report;
    std::string csv;
};

/// Eval-mode metrics of a checkpoint on one side of a split; writes `out_csv` when non-empty.
EvalResult cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& cube, const std::filesystem::path& labels,
                    const std::filesystem::path& split, const std::filesystem::path& out_csv, EvalSet set = EvalSet::test,
                    std::size_t threads = 1);

/// 16-entry palette for the colour map; index 0 (unlabeled) is black.
extern const std::array<std::array<std::uint8_t, 3>, 16> kPalette;

void write_pgm(const LabelMap& map, const std::filesystem::path& path);
void write_ppm(const LabelMap& map, const std::filesystem::path& path);

/// Classifies every pixel; writes class_map.pgm and class_map.ppm into out_dir.
LabelMap cmd_predict_map(const std::filesystem::path& checkpoint, const std::filesystem::path& cube, const std::filesystem::path& out_dir,
                         std::size_t threads = 1);

GradCheckReport cmd_gradcheck(const GradCheckConfig& config);

/// Writes <out_dir>/<name>_cube.hdr/.raw and <out_dir>/<name>_labels.hdr/.raw.
struct SynthFiles {
    std::filesystem::path cube;
    std::filesystem::path labels;
};
SynthFiles cmd_synth(const SynthParams& params, const std::filesystem::path& out_dir, const std::string& name = "synth");

}  // namespace pdagrnn
