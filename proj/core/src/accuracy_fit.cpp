#include "pmsense/accuracy_fit.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <string>

#include "pmsense/error.hpp"
#include "pmsense/io.hpp"

namespace pmsense {

namespace {

constexpr double kBetaLo = 0.05;
constexpr double kBetaHi = 3.0;
constexpr int kBetaStarts = 60;
constexpr double kBetaTol = 1e-6;

struct LinearSolve {
  double gamma, alpha, sse;
};

// Closed-form (gamma, alpha) for fixed beta: regress accuracy on x = T^-beta.
LinearSolve solve_linear(const std::vector<AccuracyPoint>& pts, double beta) {
  const double q = static_cast<double>(pts.size());
  double mx = 0.0, my = 0.0;
  for (const auto& p : pts) {
    mx += std::pow(p.duration, -beta);
    my += p.accuracy;
  }
  mx /= q;
  my /= q;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& p : pts) {
    const double dx = std::pow(p.duration, -beta) - mx;
    sxx += dx * dx;
    sxy += dx * (p.accuracy - my);
  }
  const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
  LinearSolve s{my - slope * mx, -slope, 0.0};
  for (const auto& p : pts) {
    const double r = p.accuracy - (s.gamma - s.alpha * std::pow(p.duration, -beta));
    s.sse += r * r;
  }
  return s;
}

double sse_of(const std::vector<AccuracyPoint>& pts, double g, double a, double b) {
  double sse = 0.0;
  for (const auto& p : pts) {
    const double r = p.accuracy - (g - a * std::pow(p.duration, -b));
    sse += r * r;
  }
  return sse;
}

// Levenberg-Marquardt polish of all three parameters; beta kept inside the bounds.
void polish(const std::vector<AccuracyPoint>& pts, double& g, double& a, double& b) {
  double sse = sse_of(pts, g, a, b);
  double lambda = 1e-6;
  for (int iter = 0; iter < 100; ++iter) {
    double jtj[3][3] = {}, jtr[3] = {};
    for (const auto& p : pts) {
      const double x = std::pow(p.duration, -b);
      const double r = p.accuracy - (g - a * x);
      // d(model)/d(gamma, alpha, beta)
      const double jac[3] = {1.0, -x, a * x * std::log(p.duration)};
      for (int i = 0; i < 3; ++i) {
        jtr[i] += jac[i] * r;
        for (int j = 0; j < 3; ++j) jtj[i][j] += jac[i] * jac[j];
      }
    }
    bool improved = false;
    for (int attempt = 0; attempt < 20 && !improved; ++attempt) {
      double m[3][4];
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) m[i][j] = jtj[i][j] + (i == j ? lambda * (jtj[i][i] + 1e-12) : 0.0);
        m[i][3] = jtr[i];
      }
      // Gaussian elimination with partial pivoting.
      bool singular = false;
      for (int c = 0; c < 3 && !singular; ++c) {
        int piv = c;
        for (int r = c + 1; r < 3; ++r)
          if (std::abs(m[r][c]) > std::abs(m[piv][c])) piv = r;
        if (std::abs(m[piv][c]) < 1e-300) {
          singular = true;
          break;
        }
        std::swap(m[c], m[piv]);
        for (int r = 0; r < 3; ++r) {
          if (r == c) continue;
          const double f = m[r][c] / m[c][c];
          for (int k = c; k < 4; ++k) m[r][k] -= f * m[c][k];
        }
      }
      if (singular) {
        lambda *= 10.0;
        continue;
      }
      const double dg = m[0][3] / m[0][0], da = m[1][3] / m[1][1], db = m[2][3] / m[2][2];
      const double nb = std::clamp(b + db, kBetaLo, kBetaHi);
      const double candidate = sse_of(pts, g + dg, a + da, nb);
      if (candidate <= sse) {
        const double step = std::abs(nb - b);
        g += dg;
        a += da;
        b = nb;
        improved = true;
        const bool converged = step < 1e-12 || sse - candidate <= 1e-30;
        sse = candidate;
        lambda = std::max(lambda / 10.0, 1e-12);
        if (converged) return;
      } else {
        lambda *= 10.0;
      }
    }
    if (!improved) return;
  }
}

}  // namespace

AccuracyCurve fit_accuracy_curve(const std::vector<AccuracyPoint>& points) {
  std::set<double> distinct;
  for (const auto& p : points) {
    if (!(p.duration > 0.0) || !std::isfinite(p.duration))
      throw InputError("fit: durations must be finite and > 0");
    if (!std::isfinite(p.accuracy)) throw InputError("fit: accuracies must be finite");
    distinct.insert(p.duration);
  }
  if (points.size() < 3 || distinct.size() < 3)
    throw InputError("fit: need at least 3 points with 3 distinct durations (got " +
                     std::to_string(points.size()) + " points, " + std::to_string(distinct.size()) +
                     " distinct durations)");

  // Canonical order so the result does not depend on the caller's ordering.
  std::vector<AccuracyPoint> pts = points;
  std::sort(pts.begin(), pts.end(), [](const AccuracyPoint& x, const AccuracyPoint& y) {
    return x.duration != y.duration ? x.duration < y.duration : x.accuracy < y.accuracy;
  });

  const auto [lo_it, hi_it] = std::minmax_element(
      pts.begin(), pts.end(), [](const auto& x, const auto& y) { return x.accuracy < y.accuracy; });
  if (hi_it->accuracy - lo_it->accuracy < 1e-12) {
    AccuracyCurve c;
    double mean = 0.0;
    for (const auto& p : pts) mean += p.accuracy;
    c.gamma = mean / static_cast<double>(pts.size());
    c.alpha = 0.0;
    c.beta = 1.0;
    c.degenerate = true;
    c.rmse = curve_rmse(c, pts);
    return c;
  }

  std::vector<double> betas(kBetaStarts);
  for (int i = 0; i < kBetaStarts; ++i)
    betas[i] = kBetaLo * std::pow(kBetaHi / kBetaLo, static_cast<double>(i) / (kBetaStarts - 1));
  int best = 0;
  double best_sse = solve_linear(pts, betas[0]).sse;
  for (int i = 1; i < kBetaStarts; ++i) {
    const double sse = solve_linear(pts, betas[i]).sse;
    if (sse < best_sse) {
      best_sse = sse;
      best = i;
    }
  }

  // Golden-section descent on beta inside the neighbouring grid cells.
  double a = betas[std::max(best - 1, 0)];
  double b = betas[std::min(best + 1, kBetaStarts - 1)];
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double fc = solve_linear(pts, c).sse, fd = solve_linear(pts, d).sse;
  while (b - a > kBetaTol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = solve_linear(pts, c).sse;
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = solve_linear(pts, d).sse;
    }
  }
  double beta = 0.5 * (a + b);
  if (solve_linear(pts, betas[best]).sse < solve_linear(pts, beta).sse) beta = betas[best];
  const LinearSolve lin = solve_linear(pts, beta);

  AccuracyCurve curve;
  curve.gamma = lin.gamma;
  curve.alpha = lin.alpha;
  curve.beta = beta;
  polish(pts, curve.gamma, curve.alpha, curve.beta);
  curve.rmse = curve_rmse(curve, pts);
  curve.degenerate = !(curve.alpha > 0.0);
  return curve;
}

CurveValue eval_curve(const AccuracyCurve& curve, double duration) {
  if (!(duration > 0.0)) throw InputError("eval_curve: duration must be > 0");
  CurveValue v;
  v.raw = curve.gamma - curve.alpha * std::pow(duration, -curve.beta);
  v.clamped = std::clamp(v.raw, 0.0, 1.0);
  return v;
}

double curve_rmse(const AccuracyCurve& curve, const std::vector<AccuracyPoint>& points) {
  if (points.empty()) return 0.0;
  return std::sqrt(sse_of(points, curve.gamma, curve.alpha, curve.beta) / static_cast<double>(points.size()));
}

std::vector<AccuracyPoint> read_accuracy_points(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<AccuracyPoint> pts;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected 'duration_s,accuracy'");
    const std::string first = line.substr(0, comma);
    if (line_no == 1 && first.find_first_of("0123456789") == std::string::npos) continue;  // header
    try {
      std::size_t used = 0;
      AccuracyPoint p;
      p.duration = std::stod(first, &used);
      p.accuracy = std::stod(line.substr(comma + 1));
      pts.push_back(p);
    } catch (const std::exception&) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": malformed number");
    }
  }
  return pts;
}

void write_accuracy_points(const std::filesystem::path& path, const std::vector<AccuracyPoint>& points) {
  std::string out = "duration_s,accuracy\n";
  for (const auto& p : points) out += format_double(p.duration) + "," + format_double(p.accuracy) + "\n";
  write_file_atomic(path, out);
}

void write_curve_params(const std::filesystem::path& path, const AccuracyCurve& curve) {
  std::string out = "parameter,value\n";
  out += "gamma," + format_double(curve.gamma) + "\n";
  out += "alpha," + format_double(curve.alpha) + "\n";
  out += "beta," + format_double(curve.beta) + "\n";
  out += "rmse," + format_double(curve.rmse) + "\n";
  out += std::string("degenerate,") + (curve.degenerate ? "1" : "0") + "\n";
  write_file_atomic(path, out);
}

void write_curve_samples(const std::filesystem::path& path, const AccuracyCurve& curve, double t_min,
                         double t_max, int n) {
  if (!(t_min > 0.0) || !(t_max >= t_min) || n < 2)
    throw InputError("write_curve_samples: need 0 < t_min <= t_max and n >= 2");
  std::string out = "duration_s,raw,clamped\n";
  for (int i = 0; i < n; ++i) {
    const double t = t_min + (t_max - t_min) * i / (n - 1);
    const CurveValue v = eval_curve(curve, t);
    out += format_double(t) + "," + format_double(v.raw) + "," + format_double(v.clamped) + "\n";
  }
  write_file_atomic(path, out);
}

}  // namespace pmsense
