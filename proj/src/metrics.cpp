#include "pdagrnn/metrics.hpp"

#include "pdagrnn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace pdagrnn {

ConfusionMatrix::ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {
    if (classes == 0) throw ValidationError("confusion matrix needs at least one class");
}

std::size_t ConfusionMatrix::slot(int truth, int pred) const {
    const auto c = static_cast<int>(classes_);
    if (truth < 1 || truth > c || pred < 1 || pred > c)
        throw ValidationError("class pair (" + std::to_string(truth) + ", " + std::to_string(pred) + ") outside [1, " + std::to_string(c) + "]");
    return static_cast<std::size_t>(truth - 1) * classes_ + static_cast<std::size_t>(pred - 1);
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

std::uint64_t ConfusionMatrix::trace() const {
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < classes_; ++i) t += counts_[i * classes_ + i];
    return t;
}

std::uint64_t ConfusionMatrix::row_sum(int truth) const {
    std::uint64_t s = 0;
    for (int p = 1; p <= static_cast<int>(classes_); ++p) s += at(truth, p);
    return s;
}

std::uint64_t ConfusionMatrix::col_sum(int pred) const {
    std::uint64_t s = 0;
    for (int t = 1; t <= static_cast<int>(classes_); ++t) s += at(t, pred);
    return s;
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> preds, std::size_t classes) {
    if (truth.size() != preds.size())
        throw ValidationError("confusion: " + std::to_string(truth.size()) + " truths vs " + std::to_string(preds.size()) + " predictions");
    ConfusionMatrix cm(classes);
    for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], preds[i]);
    return cm;
}

namespace {
__extension__ using i128 = __int128;
__extension__ using u128 = unsigned __int128;
}  // namespace

MetricsReport oa_aa_kappa(const ConfusionMatrix& cm) {
    const std::uint64_t total = cm.total();
    if (total == 0) throw ValidationError("oa_aa_kappa: confusion matrix is empty");
    const double n = static_cast<double>(total);
    const int classes = static_cast<int>(cm.classes());

    MetricsReport r;
    const double p_o = static_cast<double>(cm.trace()) / n;
    r.oa = 100.0 * p_o;

    u128 chance = 0;  // sum over k of row_k * col_k
    double acc_sum = 0.0;
    std::size_t populated = 0;
    r.per_class.resize(cm.classes());
    for (int k = 1; k <= classes; ++k) {
        const auto row = cm.row_sum(k);
        chance += static_cast<u128>(row) * cm.col_sum(k);
        if (row == 0) continue;
        const double acc = 100.0 * static_cast<double>(cm.at(k, k)) / static_cast<double>(row);
        r.per_class[k - 1] = acc;
        acc_sum += acc;
        ++populated;
    }
    r.aa = acc_sum / static_cast<double>(populated);

    // kappa = (N * trace - chance) / (N^2 - chance), evaluated exactly
    const auto big_n = static_cast<i128>(total);
    const auto numer = big_n * static_cast<i128>(cm.trace()) - static_cast<i128>(chance);
    const auto denom = big_n * big_n - static_cast<i128>(chance);
    if (denom == 0)
        r.kappa = cm.trace() == total ? 1.0 : 0.0;
    else
        r.kappa = static_cast<double>(numer) / static_cast<double>(denom);
    return r;
}

MeanStd mean_std(std::span<const double> values) {
    if (values.empty()) throw ValidationError("mean_std: no values");
    MeanStd out;
    const double n = static_cast<double>(values.size());
    out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - out.mean) * (v - out.mean);
        out.std = std::sqrt(ss / (n - 1.0));
    }
    return out;
}

AggregateReport aggregate_runs(std::span<const MetricsReport> reports) {
    if (reports.empty()) throw ValidationError("aggregate_runs: no reports");
    AggregateReport agg;
    agg.runs = reports.size();
    std::vector<double> oa, aa, kappa;
    std::size_t classes = 0;
    for (const auto& r : reports) {
        oa.push_back(r.oa);
        aa.push_back(r.aa);
        kappa.push_back(r.kappa);
        classes = std::max(classes, r.per_class.size());
    }
    agg.oa = mean_std(oa);
    agg.aa = mean_std(aa);
    agg.kappa = mean_std(kappa);
    agg.per_class.resize(classes);
    for (std::size_t k = 0; k < classes; ++k) {
        std::vector<double> values;
        for (const auto& r : reports)
            if (k < r.per_class.size() && r.per_class[k]) values.push_back(*r.per_class[k]);
        if (!values.empty()) agg.per_class[k] = mean_std(values);
    }
    return agg;
}

std::string format_mean_std(const MeanStd& value, int decimals) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.*f ± %.*f", decimals, value.mean, decimals, value.std);
    return buf;
}

std::string metrics_csv(const AggregateReport& report) {
    std::string out = "metric,mean,std\n";
    char buf[128];
    auto row = [&](const std::string& name, const std::optional<MeanStd>& v) {
        if (v)
            std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f\n", name.c_str(), v->mean, v->std);
        else
            std::snprintf(buf, sizeof buf, "%s,nan,nan\n", name.c_str());
        out += buf;
    };
    row("OA", report.oa);
    row("AA", report.aa);
    row("kappa", report.kappa);
    for (std::size_t k = 0; k < report.per_class.size(); ++k) row("class_" + std::to_string(k + 1), report.per_class[k]);
    return out;
}

void write_metrics_csv(const AggregateReport& report, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << metrics_csv(report);
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace pdagrnn
