#pragma once

#include <filesystem>
#include <vector>

namespace pmsense {

struct AccuracyPoint {
  double duration = 0.0;  // sensing duration T, s
  // Fraction; measured values lie in [0, 1], but the fit takes any finite value so
  // points sampled from a curve with gamma > 1 are accepted as-is.
  double accuracy = 0.0;
};

// Learning-curve model  accuracy(T) = gamma - alpha * T^(-beta).
struct AccuracyCurve {
  double gamma = 0.0;
  double alpha = 0.0;
  double beta = 1.0;
  double rmse = 0.0;
  // Set when the points carry no upward trend (constant accuracies, or a best fit
  // with alpha <= 0); gamma then holds the mean level.
  bool degenerate = false;
};

struct CurveValue {
  double raw = 0.0;      // gamma - alpha * T^(-beta)
  double clamped = 0.0;  // raw clamped to [0, 1]
};

// Least-squares fit over beta in [0.05, 3]: 60 log-spaced starts, each with (gamma,
// alpha) solved in closed form, then local refinement of the best start. Needs at
// least three distinct durations.
AccuracyCurve fit_accuracy_curve(const std::vector<AccuracyPoint>& points);

CurveValue eval_curve(const AccuracyCurve& curve, double duration);

double curve_rmse(const AccuracyCurve& curve, const std::vector<AccuracyPoint>& points);

// CSV with header `duration_s,accuracy` (header optional on read).
std::vector<AccuracyPoint> read_accuracy_points(const std::filesystem::path& path);
void write_accuracy_points(const std::filesystem::path& path, const std::vector<AccuracyPoint>& points);
// `parameter,value` rows for gamma, alpha, beta, rmse, degenerate.
void write_curve_params(const std::filesystem::path& path, const AccuracyCurve& curve);
// `duration_s,raw,clamped` sampled on n points spanning [t_min, t_max].
void write_curve_samples(const std::filesystem::path& path, const AccuracyCurve& curve, double t_min,
                         double t_max, int n = 100);

}  // namespace pmsense
