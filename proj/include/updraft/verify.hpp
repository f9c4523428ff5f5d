#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "updraft/shash.hpp"

namespace updraft {

/// Truth pixels paired with either predicted distributions, deterministic
/// predictions, or both. An empty mask evaluates every pixel.
struct EvalPairs {
    std::vector<double> truth;
    std::vector<double> pred;          // deterministic prediction (median for SHASH)
    std::vector<ShashParams> params;   // per-pixel distributions; may be empty
    std::vector<bool> mask;            // may be empty

    std::size_t evaluated() const;
};

struct PitHistogram {
    static constexpr std::size_t kBins = 10;
    std::vector<double> frequency; // kBins entries summing to 1
};

double rmse(const EvalPairs& pairs);

/// RMSE restricted to pixels with truth >= t.
double crmse(const EvalPairs& pairs, double t);

/// Intersection over union of {a > t} and {b > t}. Throws if the union is
/// empty (strict > per the defining equation).
double iou(const std::vector<double>& a, const std::vector<double>& b, double t);

double r_squared(const std::vector<double>& truth, const std::vector<double>& pred);

/// PIT_i = cdf(params_i, truth_i) per evaluated pixel.
std::vector<double> pit(const EvalPairs& pairs);

/// 0.1-wide bins; the final bin is closed so PIT == 1 lands in it.
PitHistogram pit_histogram(const std::vector<double>& pit_values);

/// sqrt(mean((b_k - 1/B)^2)); 0 for a perfectly flat histogram.
double pitd(const PitHistogram& hist);

/// Fraction of truths inside [q25, q75] of their predicted distribution
/// (inclusive bounds). Ideal value 0.5.
double iqr_rate(const EvalPairs& pairs);

/// Percentage of pixels with field > t.
double area_fraction(const std::vector<double>& field, double t);

/// Wall-clock per-batch timings of `run_batch`, excluding setup.
struct TimingReport {
    std::size_t batch_size = 0;
    std::vector<double> per_batch_ms;
    double mean_ms = 0.0;
    double std_ms = 0.0;
};
TimingReport timeit(const std::function<void()>& run_batch, std::size_t n_batches,
                    std::size_t batch_size);

/// Per-sample row of the evaluation time series. IoU entries may be missing
/// where the union at that threshold is empty.
struct SeriesRow {
    std::size_t sample = 0;
    std::map<double, double> iou;          // threshold -> value (absent if undefined)
    std::map<double, double> area_truth;   // threshold -> percent
    std::map<double, double> area_pred;
};

struct EvalReport {
    double rmse = 0.0;
    double r2 = 0.0;
    double pitd = 0.0;
    double iqrr = 0.0;
    std::map<double, double> crmse;  // threshold -> value
    std::map<double, double> iou;    // threshold -> value over all pixels
    PitHistogram pit_hist;
    std::vector<SeriesRow> series;
    bool has_baseline = false;
    double baseline_r2 = 0.0;
    TimingReport timings; // filled by the timeit subcommand only

    std::string to_json() const;
    std::string series_csv() const;
};

} // namespace updraft
