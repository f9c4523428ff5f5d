#include "updraft/verify.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

#include "updraft/errors.hpp"

namespace updraft {

using nlohmann::json;

namespace {

bool evaluated(const EvalPairs& pairs, std::size_t i) {
    return pairs.mask.empty() || pairs.mask[i];
}

std::string format_threshold(double t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", t);
    return buf;
}

} // namespace

std::size_t EvalPairs::evaluated() const {
    if (mask.empty())
        return truth.size();
    std::size_t n = 0;
    for (bool m : mask)
        n += m ? 1 : 0;
    return n;
}

double rmse(const EvalPairs& pairs) {
    if (pairs.pred.size() != pairs.truth.size())
        throw ValidationError("rmse shape mismatch");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pairs.truth.size(); ++i) {
        if (!evaluated(pairs, i))
            continue;
        const double d = pairs.truth[i] - pairs.pred[i];
        sum += d * d;
        ++n;
    }
    if (n == 0)
        throw UndefinedMetricError("rmse over an empty selection");
    return std::sqrt(sum / static_cast<double>(n));
}

double crmse(const EvalPairs& pairs, double t) {
    if (pairs.pred.size() != pairs.truth.size())
        throw ValidationError("crmse shape mismatch");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pairs.truth.size(); ++i) {
        if (!evaluated(pairs, i) || pairs.truth[i] < t)
            continue;
        const double d = pairs.truth[i] - pairs.pred[i];
        sum += d * d;
        ++n;
    }
    if (n == 0)
        throw UndefinedMetricError("crmse: no pixel has truth >= threshold");
    return std::sqrt(sum / static_cast<double>(n));
}

double iou(const std::vector<double>& a, const std::vector<double>& b, double t) {
    if (a.size() != b.size())
        throw ValidationError("iou shape mismatch");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool in_a = a[i] > t;
        const bool in_b = b[i] > t;
        inter += (in_a && in_b) ? 1 : 0;
        uni += (in_a || in_b) ? 1 : 0;
    }
    if (uni == 0)
        throw UndefinedMetricError("iou: union of threshold masks is empty");
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double r_squared(const std::vector<double>& truth, const std::vector<double>& pred) {
    if (truth.size() != pred.size())
        throw ValidationError("r_squared shape mismatch");
    if (truth.size() < 2)
        throw UndefinedMetricError("r_squared needs at least 2 pixels");
    double mean = 0.0;
    for (double y : truth)
        mean += y;
    mean /= static_cast<double>(truth.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double r = truth[i] - pred[i];
        const double d = truth[i] - mean;
        ss_res += r * r;
        ss_tot += d * d;
    }
    if (ss_tot == 0.0)
        throw UndefinedMetricError("r_squared undefined for zero-variance truth");
    return 1.0 - ss_res / ss_tot;
}

std::vector<double> pit(const EvalPairs& pairs) {
    if (pairs.params.size() != pairs.truth.size())
        throw ValidationError("pit needs per-pixel distribution parameters");
    std::vector<double> out;
    out.reserve(pairs.truth.size());
    for (std::size_t i = 0; i < pairs.truth.size(); ++i) {
        if (!evaluated(pairs, i))
            continue;
        out.push_back(shash_cdf(pairs.params[i], pairs.truth[i]));
    }
    return out;
}

PitHistogram pit_histogram(const std::vector<double>& pit_values) {
    if (pit_values.empty())
        throw UndefinedMetricError("pit histogram of an empty sample");
    PitHistogram hist;
    hist.frequency.assign(PitHistogram::kBins, 0.0);
    for (double p : pit_values) {
        std::size_t bin = static_cast<std::size_t>(p * 10.0);
        if (bin >= PitHistogram::kBins)
            bin = PitHistogram::kBins - 1; // p == 1 falls in the final bin
        hist.frequency[bin] += 1.0;
    }
    for (double& f : hist.frequency)
        f /= static_cast<double>(pit_values.size());
    return hist;
}

double pitd(const PitHistogram& hist) {
    const double ideal = 1.0 / static_cast<double>(PitHistogram::kBins);
    double sum = 0.0;
    for (double f : hist.frequency) {
        const double d = f - ideal;
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(PitHistogram::kBins));
}

double iqr_rate(const EvalPairs& pairs) {
    if (pairs.params.size() != pairs.truth.size())
        throw ValidationError("iqr_rate needs per-pixel distribution parameters");
    std::size_t hits = 0, n = 0;
    for (std::size_t i = 0; i < pairs.truth.size(); ++i) {
        if (!evaluated(pairs, i))
            continue;
        const double lo = shash_quantile(pairs.params[i], 0.25);
        const double hi = shash_quantile(pairs.params[i], 0.75);
        if (pairs.truth[i] >= lo && pairs.truth[i] <= hi)
            ++hits;
        ++n;
    }
    if (n == 0)
        throw UndefinedMetricError("iqr_rate over an empty selection");
    return static_cast<double>(hits) / static_cast<double>(n);
}

double area_fraction(const std::vector<double>& field, double t) {
    if (field.empty())
        throw UndefinedMetricError("area_fraction of an empty field");
    std::size_t above = 0;
    for (double v : field)
        above += v > t ? 1 : 0;
    return 100.0 * static_cast<double>(above) / static_cast<double>(field.size());
}

TimingReport timeit(const std::function<void()>& run_batch, std::size_t n_batches,
                    std::size_t batch_size) {
    TimingReport report;
    report.batch_size = batch_size;
    report.per_batch_ms.reserve(n_batches);
    for (std::size_t i = 0; i < n_batches; ++i) {
        const auto start = std::chrono::steady_clock::now();
        run_batch();
        const auto stop = std::chrono::steady_clock::now();
        report.per_batch_ms.push_back(
            std::chrono::duration<double, std::milli>(stop - start).count());
    }
    double sum = 0.0;
    for (double t : report.per_batch_ms)
        sum += t;
    report.mean_ms = sum / static_cast<double>(n_batches);
    double var = 0.0;
    for (double t : report.per_batch_ms) {
        const double d = t - report.mean_ms;
        var += d * d;
    }
    report.std_ms = n_batches > 1 ? std::sqrt(var / static_cast<double>(n_batches - 1)) : 0.0;
    return report;
}

std::string EvalReport::to_json() const {
    json j;
    j["rmse"] = rmse;
    j["r2"] = r2;
    j["pitd"] = pitd;
    j["iqrr"] = iqrr;
    // Flag matches the reporting convention for IQRr: a value is "good" by
    // closeness to 0.5, not by magnitude.
    j["iqrr_distance_from_ideal"] = std::fabs(iqrr - 0.5);
    json jc = json::object(), ji = json::object();
    for (const auto& [t, v] : crmse)
        jc[format_threshold(t)] = v;
    for (const auto& [t, v] : iou)
        ji[format_threshold(t)] = v;
    j["crmse"] = std::move(jc);
    j["iou"] = std::move(ji);
    j["pit_hist"] = pit_hist.frequency;
    if (has_baseline)
        j["baseline_r2"] = baseline_r2;
    if (!timings.per_batch_ms.empty()) {
        j["timings"] = {{"batch_size", timings.batch_size},
                        {"per_batch_ms", timings.per_batch_ms},
                        {"mean_ms", timings.mean_ms},
                        {"std_ms", timings.std_ms}};
    }
    json series_json = json::array();
    for (const auto& row : series) {
        json r;
        r["sample"] = row.sample;
        json jiou = json::object(), jat = json::object(), jap = json::object();
        for (const auto& [t, v] : row.iou)
            jiou[format_threshold(t)] = v;
        for (const auto& [t, v] : row.area_truth)
            jat[format_threshold(t)] = v;
        for (const auto& [t, v] : row.area_pred)
            jap[format_threshold(t)] = v;
        r["iou"] = std::move(jiou);
        r["area_truth_pct"] = std::move(jat);
        r["area_pred_pct"] = std::move(jap);
        series_json.push_back(std::move(r));
    }
    j["area_fraction_series"] = std::move(series_json);
    return j.dump(2) + "\n";
}

std::string EvalReport::series_csv() const {
    std::ostringstream out;
    std::vector<double> thresholds;
    if (!series.empty())
        for (const auto& [t, v] : series.front().area_truth)
            thresholds.push_back(t);
    out << "sample";
    for (double t : thresholds)
        out << ",iou_" << format_threshold(t) << ",area_truth_pct_" << format_threshold(t)
            << ",area_pred_pct_" << format_threshold(t);
    out << "\n";
    char buf[64];
    for (const auto& row : series) {
        out << row.sample;
        for (double t : thresholds) {
            out << ",";
            const auto it = row.iou.find(t);
            if (it != row.iou.end()) {
                std::snprintf(buf, sizeof buf, "%.*g", 17, it->second);
                out << buf;
            }
            std::snprintf(buf, sizeof buf, "%.*g", 17, row.area_truth.at(t));
            out << "," << buf;
            std::snprintf(buf, sizeof buf, "%.*g", 17, row.area_pred.at(t));
            out << "," << buf;
        }
        out << "\n";
    }
    return out.str();
}

} // namespace updraft
