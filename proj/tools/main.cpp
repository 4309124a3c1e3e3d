#include "pdagrnn/commands.hpp"
#include "pdagrnn/errors.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

void print_report(const pdagrnn::AggregateReport& agg) {
    std::printf("OA    %s\n", pdagrnn::format_mean_std(agg.oa).c_str());
    std::printf("AA    %s\n", pdagrnn::format_mean_std(agg.aa).c_str());
    std::printf("Kappa %s\n", pdagrnn::format_mean_std(agg.kappa, 4).c_str());
}

}  // namespace

int main(int argc, char** argv) {
    using namespace pdagrnn;
    namespace fs = std::filesystem;

    CLI::App app{"Pixel DAG-RNN spectral-spatial classifier"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::uint64_t seed = 0;
    std::string out_dir;
    std::size_t threads = 1;
    bool reproducible = false;
    app.add_option("--config", config_path, "Experiment config (key=value)");
    auto* seed_opt = app.add_option("--seed", seed, "Random seed");
    auto* out_opt = app.add_option("--out-dir", out_dir, "Output directory");
    auto* threads_opt = app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--reproducible", reproducible, "Fixed-order gradient reduction");

    auto* train = app.add_subcommand("train", "Train and evaluate over one or more seeded runs");

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
    std::string ck, cube, labels, split, out_csv, set = "test";
    eval->add_option("--checkpoint", ck)->required();
    eval->add_option("--cube", cube)->required();
    eval->add_option("--labels", labels)->required();
    eval->add_option("--split", split)->required();
    eval->add_option("--set", set, "train, test or all")->capture_default_str();
    eval->add_option("--out", out_csv, "Metrics CSV (default <out-dir>/eval_metrics.csv)");

    auto* pmap = app.add_subcommand("predict-map", "Classify every pixel and write P5/P6 maps");
    pmap->add_option("--checkpoint", ck)->required();
    pmap->add_option("--cube", cube)->required();

    auto* gcheck = app.add_subcommand("gradcheck", "Compare backprop against central finite differences");
    GradCheckConfig gc;
    std::string gc_conn = "eight";
    gcheck->add_option("--m", gc.model.m)->capture_default_str();
    gcheck->add_option("--hidden", gc.model.hidden)->capture_default_str();
    gcheck->add_option("--bands", gc.model.bands)->capture_default_str();
    gcheck->add_option("--classes", gc.model.classes)->capture_default_str();
    gcheck->add_option("--fc1", gc.model.fc1)->capture_default_str();
    gcheck->add_option("--connectivity", gc_conn)->capture_default_str();
    gcheck->add_option("--step", gc.step)->capture_default_str();
    gcheck->add_option("--tolerance", gc.tolerance)->capture_default_str();

    auto* synth = app.add_subcommand("synth", "Generate a synthetic block-mosaic scene");
    SynthParams sp;
    double snr = 0.0;
    std::string name = "synth";
    synth->add_option("--classes", sp.classes)->capture_default_str();
    synth->add_option("--bands", sp.bands)->capture_default_str();
    synth->add_option("--height", sp.height)->capture_default_str();
    synth->add_option("--width", sp.width)->capture_default_str();
    auto* noise_opt = synth->add_option("--noise-std", sp.noise_std)->capture_default_str();
    synth->add_option("--snr", snr, "Per-band power SNR (sets --noise-std)")->excludes(noise_opt);
    synth->add_option("--block-size", sp.block_size)->capture_default_str();
    synth->add_option("--name", name, "File name prefix")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    GlobalOptions global;
    if (*seed_opt) global.seed = seed;
    if (*out_opt) global.out_dir = out_dir;
    if (*threads_opt) global.threads = threads;
    global.reproducible = reproducible;
    const fs::path out_root = out_dir.empty() ? fs::path(".") : fs::path(out_dir);

    try {
        if (*train) {
            if (config_path.empty()) throw ValidationError("train requires --config");
            const auto summary = cmd_train(config_path, global);
            print_report(summary.aggregate);
            std::printf("metrics: %s\ncheckpoint: %s\n", summary.metrics_csv.string().c_str(), summary.checkpoint.string().c_str());
        } else if (*eval) {
            const fs::path out = out_csv.empty() ? out_root / "eval_metrics.csv" : fs::path(out_csv);
            const auto result = cmd_eval(ck, cube, labels, split, out, parse_eval_set(set), threads);
            std::printf("OA %.2f  AA %.2f  Kappa %.4f\nmetrics: %s\n", result.report.oa, result.report.aa, result.report.kappa, out.string().c_str());
        } else if (*pmap) {
            const auto map = cmd_predict_map(ck, cube, out_root, threads);
            std::printf("wrote %zux%zu class maps to %s\n", map.width, map.height, out_root.string().c_str());
        } else if (*gcheck) {
            gc.model.connectivity = parse_connectivity(gc_conn);
            gc.model.dropout = 0.0;
            if (global.seed) gc.seed = *global.seed;
            const auto report = cmd_gradcheck(gc);
            for (const auto& t : report.tensors) std::printf("%-8s max rel err %.3e\n", t.name.c_str(), t.max_rel_error);
            std::printf("%s: max rel err %.3e (tolerance %.1e)\n", report.passed ? "PASS" : "FAIL", report.max_rel_error, report.tolerance);
            return report.passed ? 0 : kExitRuntime;
        } else if (*synth) {
            if (snr > 0.0) sp.noise_std = noise_std_for_snr(snr);
            sp.seed = global.seed.value_or(0);
            const auto files = cmd_synth(sp, out_root, name);
            std::printf("cube: %s\nlabels: %s\n", files.cube.string().c_str(), files.labels.string().c_str());
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return 0;
}
