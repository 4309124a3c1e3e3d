#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pdagrnn {

/// C x C counts; rows are true classes, columns predictions. Classes are 1-based.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t classes);

    std::size_t classes() const { return classes_; }
    std::uint64_t at(int truth, int pred) const { return counts_[slot(truth, pred)]; }
    void add(int truth, int pred, std::uint64_t count = 1) { counts_[slot(truth, pred)] += count; }

    std::uint64_t total() const;
    std::uint64_t trace() const;
    std::uint64_t row_sum(int truth) const;
    std::uint64_t col_sum(int pred) const;

private:
    std::size_t slot(int truth, int pred) const;

    std::size_t classes_;
    std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> preds, std::size_t classes);

struct MetricsReport {
    double oa = 0.0;     // percent
    double aa = 0.0;     // percent, over classes with at least one true sample
    double kappa = 0.0;
    std::vector<std::optional<double>> per_class;  // percent; empty optional for classes without samples
};

MetricsReport oa_aa_kappa(const ConfusionMatrix& cm);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // sample (n - 1) estimator, 0 for a single run
};

struct AggregateReport {
    std::size_t runs = 0;
    MeanStd oa;
    MeanStd aa;
    MeanStd kappa;
    std::vector<std::optional<MeanStd>> per_class;
};

MeanStd mean_std(std::span<const double> values);
AggregateReport aggregate_runs(std::span<const MetricsReport> reports);

/// "97.45 ± 0.72"
std::string format_mean_std(const MeanStd& value, int decimals = 2);

/// Columns metric,mean,std; rows OA, AA, kappa, then class_1 ... class_C.
std::string metrics_csv(const AggregateReport& report);
void write_metrics_csv(const AggregateReport& report, const std::filesystem::path& path);

}  // namespace pdagrnn
