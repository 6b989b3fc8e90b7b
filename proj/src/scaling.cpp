#include "scaling.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "errors.hpp"

namespace memlab {

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  (void)ec;
  return std::string(buf.data(), ptr);
}

std::pair<std::vector<SweepPoint>, std::vector<SweepPoint>> saturation_filter(
    const std::vector<SweepPoint>& points) {
  std::vector<SweepPoint> kept, excluded;
  for (const auto& p : points) {
    if (p.loss_final <= kSaturationThreshold) {
      excluded.push_back(p);
    } else {
      kept.push_back(p);
    }
  }
  return {kept, excluded};
}

namespace {

// Solve the n x n system a x = rhs by Gaussian elimination with partial
// pivoting. Returns false on a (near) singular matrix.
template <int N>
bool solve_linear(std::array<std::array<double, N>, N> a, std::array<double, N> rhs,
                  std::array<double, N>& x) {
  for (int col = 0; col < N; ++col) {
    int pivot = col;
    for (int row = col + 1; row < N; ++row)
      if (std::abs(a[row][col]) > std::abs(a[pivot][col])) pivot = row;
    if (std::abs(a[pivot][col]) < 1e-300) return false;
    std::swap(a[col], a[pivot]);
    std::swap(rhs[col], rhs[pivot]);
    for (int row = col + 1; row < N; ++row) {
      const double f = a[row][col] / a[col][col];
      for (int k = col; k < N; ++k) a[row][k] -= f * a[col][k];
      rhs[row] -= f * rhs[col];
    }
  }
  for (int row = N - 1; row >= 0; --row) {
    double s = rhs[row];
    for (int k = row + 1; k < N; ++k) s -= a[row][k] * x[k];
    x[row] = s / a[row][row];
  }
  return true;
}

struct LogFit {
  double log_c = 0.0, alpha = 0.0, beta = 0.0;
  double sse = std::numeric_limits<double>::infinity();
  bool ok = false;
};

// OLS of log(delta_l - b) on (1, log r, log l).
LogFit log_space_fit(const std::vector<SweepPoint>& pts, double b) {
  LogFit fit;
  std::array<std::array<double, 3>, 3> ata{};
  std::array<double, 3> aty{};
  std::vector<double> ys(pts.size());
  for (size_t i = 0; i < pts.size(); ++i) {
    const double excess = pts[i].delta_l - b;
    if (!(excess > 0.0)) return fit;  // b too large for this point
    const double x1 = std::log(static_cast<double>(pts[i].r));
    const double x2 = std::log(static_cast<double>(pts[i].l));
    const double y = std::log(excess);
    ys[i] = y;
    const std::array<double, 3> row{1.0, x1, x2};
    for (int a = 0; a < 3; ++a) {
      for (int c = 0; c < 3; ++c) ata[a][c] += row[a] * row[c];
      aty[a] += row[a] * y;
    }
  }
  std::array<double, 3> coef{};
  if (!solve_linear<3>(ata, aty, coef)) return fit;
  fit.log_c = coef[0];
  fit.alpha = coef[1];
  fit.beta = -coef[2];
  fit.sse = 0.0;
  for (size_t i = 0; i < pts.size(); ++i) {
    const double pred = coef[0] + coef[1] * std::log(static_cast<double>(pts[i].r)) +
                        coef[2] * std::log(static_cast<double>(pts[i].l));
    const double res = ys[i] - pred;
    fit.sse += res * res;
  }
  fit.ok = true;
  return fit;
}

double model_sse(const std::vector<SweepPoint>& pts, double c, double alpha, double beta, double b) {
  double sse = 0.0;
  for (const auto& p : pts) {
    const double pred = c * std::pow(static_cast<double>(p.r), alpha) *
                            std::pow(static_cast<double>(p.l), -beta) +
                        b;
    const double res = p.delta_l - pred;
    sse += res * res;
  }
  return sse;
}

}  // namespace

FitResult fit_law(const std::vector<SweepPoint>& points) {
  std::vector<SweepPoint> pts;
  int n_excluded = 0;
  for (const auto& p : points) {
    if (p.delta_l > 0.0) {
      pts.push_back(p);
    } else {
      ++n_excluded;
    }
  }

  if (pts.size() < 4) throw fit_error("fit needs at least 4 positive delta_l points");
  std::set<int> ranks, lengths;
  double min_dl = std::numeric_limits<double>::infinity();
  double max_dl = -std::numeric_limits<double>::infinity();
  for (const auto& p : pts) {
    if (p.r < 1 || p.l < 1) throw fit_error("fit points need r >= 1 and l >= 1");
    ranks.insert(p.r);
    lengths.insert(p.l);
    min_dl = std::min(min_dl, p.delta_l);
    max_dl = std::max(max_dl, p.delta_l);
  }
  if (ranks.size() < 2 || lengths.size() < 2)
    throw fit_error("fit needs at least 2 distinct ranks and 2 distinct lengths");
  if (max_dl - min_dl < 1e-12 * std::max(1.0, max_dl))
    throw fit_error("degenerate fit input: delta_l is constant");

  // Stage 1: golden-section over the offset b, scoring by log-space OLS sse.
  const double gr = (1.0 + std::sqrt(5.0)) / 2.0;
  double lo = 0.0;
  double hi = min_dl * (1.0 - 1e-9);
  auto score = [&](double b) {
    const LogFit f = log_space_fit(pts, b);
    return f.ok ? f.sse : std::numeric_limits<double>::infinity();
  };
  double x1 = hi - (hi - lo) / gr;
  double x2 = lo + (hi - lo) / gr;
  double f1 = score(x1), f2 = score(x2);
  for (int it = 0; it < 200 && (hi - lo) > 1e-13 * std::max(1.0, min_dl); ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - (hi - lo) / gr;
      f1 = score(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + (hi - lo) / gr;
      f2 = score(x2);
    }
  }
  double b = 0.5 * (lo + hi);
  LogFit lf = log_space_fit(pts, b);
  if (!lf.ok) {
    b = 0.0;
    lf = log_space_fit(pts, b);
    if (!lf.ok) throw fit_error("log-space stage failed; data not representable by the law");
  }
  double c = std::exp(lf.log_c);
  double alpha = lf.alpha;
  double beta = lf.beta;

  // Stage 2: Gauss-Newton on the raw residuals with Levenberg damping.
  double sse = model_sse(pts, c, alpha, beta, b);
  double lambda = 0.0;
  for (int it = 0; it < 200; ++it) {
    std::array<std::array<double, 4>, 4> jtj{};
    std::array<double, 4> jtr{};
    for (const auto& p : pts) {
      const double ra = std::pow(static_cast<double>(p.r), alpha);
      const double lb = std::pow(static_cast<double>(p.l), -beta);
      const double core = c * ra * lb;
      const double res = p.delta_l - (core + b);
      const std::array<double, 4> grad{ra * lb, core * std::log(static_cast<double>(p.r)),
                                       -core * std::log(static_cast<double>(p.l)), 1.0};
      for (int a = 0; a < 4; ++a) {
        for (int k = 0; k < 4; ++k) jtj[a][k] += grad[a] * grad[k];
        jtr[a] += grad[a] * res;
      }
    }
    bool stepped = false;
    for (int attempt = 0; attempt < 12 && !stepped; ++attempt) {
      auto damped = jtj;
      for (int a = 0; a < 4; ++a) damped[a][a] += lambda * (1.0 + jtj[a][a]);
      std::array<double, 4> delta{};
      if (!solve_linear<4>(damped, jtr, delta)) {
        lambda = lambda == 0.0 ? 1e-6 : lambda * 10.0;
        continue;
      }
      const double nc = c + delta[0];
      const double nalpha = alpha + delta[1];
      const double nbeta = beta + delta[2];
      const double nb = b + delta[3];
      const double nsse = model_sse(pts, nc, nalpha, nbeta, nb);
      if (nsse <= sse) {
        const double improvement = sse - nsse;
        c = nc;
        alpha = nalpha;
        beta = nbeta;
        b = nb;
        sse = nsse;
        lambda = lambda * 0.25;
        stepped = true;
        if (improvement <= 1e-15 * std::max(sse, 1e-30)) it = 200;
      } else {
        lambda = lambda == 0.0 ? 1e-6 : lambda * 10.0;
      }
    }
    if (!stepped) break;
  }

  if (!(c > 0.0) || !(alpha > 0.0) || !(beta > 0.0)) {
    std::ostringstream msg;
    msg << "fit violates positivity: c=" << c << " alpha=" << alpha << " beta=" << beta;
    throw fit_error(msg.str());
  }

  double mean_dl = 0.0;
  for (const auto& p : pts) mean_dl += p.delta_l;
  mean_dl /= static_cast<double>(pts.size());
  double sst = 0.0, mape = 0.0;
  for (const auto& p : pts) {
    sst += (p.delta_l - mean_dl) * (p.delta_l - mean_dl);
    const double pred = c * std::pow(static_cast<double>(p.r), alpha) *
                            std::pow(static_cast<double>(p.l), -beta) +
                        b;
    mape += std::abs(pred - p.delta_l) / std::abs(p.delta_l);
  }
  mape /= static_cast<double>(pts.size());

  FitResult out;
  out.c = c;
  out.alpha = alpha;
  out.beta = beta;
  out.b = b;
  out.r2 = sst > 0.0 ? 1.0 - sse / sst : 1.0;
  out.mape = mape;
  out.n_used = static_cast<int>(pts.size());
  out.n_excluded = n_excluded;
  return out;
}

double predict(const FitResult& fit, double r, double l) {
  if (!(r >= 1.0) || !(l >= 1.0)) throw validation_error("predict needs r >= 1 and l >= 1");
  return fit.c * std::pow(r, fit.alpha) * std::pow(l, -fit.beta) + fit.b;
}

LogLogTable loglog_table(const std::vector<SweepPoint>& points, const FitResult& fit) {
  LogLogTable table;
  for (const auto& p : points) {
    const double excess = p.delta_l - fit.b;
    if (!(excess > 0.0)) {
      ++table.n_dropped;
      continue;
    }
    LogLogRow row;
    row.run_id = p.run_id;
    row.log_r = std::log(static_cast<double>(p.r));
    row.log_l = std::log(static_cast<double>(p.l));
    row.log_excess = std::log(excess);
    row.log_pred = std::log(fit.c) + fit.alpha * row.log_r - fit.beta * row.log_l;
    row.residual = row.log_excess - row.log_pred;
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::vector<SweepPoint> load_sweep_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw validation_error("cannot open sweep csv: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw validation_error("empty sweep csv: " + path.string());
  if (line != "run_id,r,l,delta_l,loss_final")
    throw validation_error("unexpected sweep csv header: " + line);
  std::vector<SweepPoint> points;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    SweepPoint p;
    std::getline(ss, p.run_id, ',');
    std::getline(ss, field, ',');
    p.r = std::stoi(field);
    std::getline(ss, field, ',');
    p.l = std::stoi(field);
    std::getline(ss, field, ',');
    p.delta_l = std::stod(field);
    std::getline(ss, field, ',');
    p.loss_final = std::stod(field);
    points.push_back(std::move(p));
  }
  return points;
}

void save_sweep_csv(const std::vector<SweepPoint>& points, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw train_error("cannot write sweep csv: " + path.string());
  out << "run_id,r,l,delta_l,loss_final\n";
  for (const auto& p : points) {
    out << p.run_id << "," << p.r << "," << p.l << "," << format_double(p.delta_l) << ","
        << format_double(p.loss_final) << "\n";
  }
}

void save_fit_json(const FitResult& fit, int n_saturated, const std::filesystem::path& path) {
  nlohmann::json j{{"C", fit.c},           {"alpha", fit.alpha},
                   {"beta", fit.beta},     {"b", fit.b},
                   {"r2", fit.r2},         {"mape", fit.mape},
                   {"n_used", fit.n_used}, {"n_excluded", fit.n_excluded},
                   {"n_saturated", n_saturated}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw train_error("cannot write fit json: " + path.string());
  out << j.dump(2) << "\n";
}

void save_loglog_csv(const LogLogTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw train_error("cannot write log-log csv: " + path.string());
  out << "run_id,log_r,log_l,log_excess,log_pred,residual\n";
  for (const auto& row : table.rows) {
    out << row.run_id << "," << format_double(row.log_r) << "," << format_double(row.log_l) << ","
        << format_double(row.log_excess) << "," << format_double(row.log_pred) << ","
        << format_double(row.residual) << "\n";
  }
}

void save_fit_svg(const LogLogTable& table, const std::filesystem::path& path) {
  double lo = 0.0, hi = 1.0;
  if (!table.rows.empty()) {
    lo = std::numeric_limits<double>::infinity();
    hi = -std::numeric_limits<double>::infinity();
    for (const auto& row : table.rows) {
      lo = std::min({lo, row.log_pred, row.log_excess});
      hi = std::max({hi, row.log_pred, row.log_excess});
    }
    const double pad = 0.05 * std::max(hi - lo, 1e-9);
    lo -= pad;
    hi += pad;
  }
  const double w = 480.0, h = 480.0, margin = 48.0;
  auto sx = [&](double v) { return margin + (v - lo) / (hi - lo) * (w - 2 * margin); };
  auto sy = [&](double v) { return h - margin - (v - lo) / (hi - lo) * (h - 2 * margin); };

  std::ofstream out(path, std::ios::binary);
  if (!out) throw train_error("cannot write svg: " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  out << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "  <line x1=\"" << format_double(sx(lo)) << "\" y1=\"" << format_double(sy(lo)) << "\" x2=\""
      << format_double(sx(hi)) << "\" y2=\"" << format_double(sy(hi))
      << "\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n";
  for (const auto& row : table.rows) {
    out << "  <circle cx=\"" << format_double(sx(row.log_pred)) << "\" cy=\""
        << format_double(sy(row.log_excess)) << "\" r=\"3\" fill=\"#1f77b4\"/>\n";
  }
  out << "  <text x=\"" << w / 2 << "\" y=\"" << h - 12
      << "\" text-anchor=\"middle\" font-size=\"12\">log C + alpha log r - beta log l</text>\n";
  out << "  <text x=\"14\" y=\"" << h / 2
      << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 " << h / 2
      << ")\">log(delta_l - b)</text>\n";
  out << "</svg>\n";
}

}  // namespace memlab
