#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace memlab {

struct SweepPoint {
  std::string run_id;
  int r = 0;             // adapter rank
  int l = 0;             // answer token length
  double delta_l = 0.0;  // loss_init - loss_final
  double loss_final = 0.0;
};

struct FitResult {
  double c = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double b = 0.0;
  double r2 = 0.0;
  double mape = 0.0;
  int n_used = 0;
  int n_excluded = 0;  // non-positive delta_l points dropped by the fitter
};

inline constexpr double kSaturationThreshold = 0.69;

// Splits points into (kept, excluded): excluded iff loss_final <= 0.69.
std::pair<std::vector<SweepPoint>, std::vector<SweepPoint>> saturation_filter(
    const std::vector<SweepPoint>& points);

// Least squares fit of delta_l = c * r^alpha * l^(-beta) + b. Two stages:
// a golden-section search over b on [0, min delta_l) with an inner ordinary
// least squares of log(delta_l - b) against (1, log r, log l), then
// Gauss-Newton refinement of all four parameters on the raw residuals.
// Needs >= 4 positive points spanning >= 2 ranks and >= 2 lengths.
FitResult fit_law(const std::vector<SweepPoint>& points);

// c * r^alpha * l^(-beta) + b.
double predict(const FitResult& fit, double r, double l);

struct LogLogRow {
  std::string run_id;
  double log_r = 0.0;
  double log_l = 0.0;
  double log_excess = 0.0;  // log(delta_l - b)
  double log_pred = 0.0;    // log c + alpha log r - beta log l
  double residual = 0.0;
};

struct LogLogTable {
  std::vector<LogLogRow> rows;
  int n_dropped = 0;  // points with delta_l <= b
};

LogLogTable loglog_table(const std::vector<SweepPoint>& points, const FitResult& fit);

// CSV with header run_id,r,l,delta_l,loss_final.
std::vector<SweepPoint> load_sweep_csv(const std::filesystem::path& path);
void save_sweep_csv(const std::vector<SweepPoint>& points, const std::filesystem::path& path);

void save_fit_json(const FitResult& fit, int n_saturated, const std::filesystem::path& path);
void save_loglog_csv(const LogLogTable& table, const std::filesystem::path& path);

// Static scatter of log(delta_l - b) against the fitted log prediction with
// the identity line; no plotting dependency.
void save_fit_svg(const LogLogTable& table, const std::filesystem::path& path);

// Shortest round-trip decimal formatting, shared by every CSV writer so
// reruns are byte-identical.
std::string format_double(double v);

}  // namespace memlab
