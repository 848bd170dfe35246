// SPDX-License-Identifier: Apache-2.0
#include "saga/verification.hpp"

#include <cmath>
#include <stdexcept>

namespace saga {

namespace {

constexpr double kPi = 3.14159265358979323846;

double normal_pdf(double x, double mean, double var) {
  double d = x - mean;
  return std::exp(-d * d / (2.0 * var)) / std::sqrt(2.0 * kPi * var);
}

double normal_pdf_2d(double x, double y, const std::vector<double>& mean,
                     const std::vector<double>& cov) {
  double a = cov[0], b = cov[1], c = cov[2], d = cov[3];
  double det = a * d - b * c;
  if (det <= 0.0) throw std::domain_error("2-D covariance not positive definite");
  double dx = x - mean[0], dy = y - mean[1];
  // inverse of [[a, b], [c, d]] applied to (dx, dy)
  double qx = (d * dx - b * dy) / det;
  double qy = (-c * dx + a * dy) / det;
  double quad = dx * qx + dy * qy;
  return std::exp(-0.5 * quad) / (2.0 * kPi * std::sqrt(det));
}

struct NoisedMixture1D {
  std::vector<double> weights, means, vars;
};

NoisedMixture1D noised_1d(const MixtureSpec& mix, double a, double b) {
  NoisedMixture1D out;
  for (size_t k = 0; k < mix.size(); ++k) {
    out.weights.push_back(mix.weights[k]);
    out.means.push_back(a * mix.means[k][0]);
    out.vars.push_back(a * a * mix.covs[k][0] + b * b);
  }
  return out;
}

/// Adaptive Simpson on [lo, hi] with absolute tolerance.
double adaptive_simpson(const std::function<double(double)>& f, double lo, double hi, double flo,
                        double fmid, double fhi, double whole, double tol, int depth) {
  if (depth > 60) throw std::runtime_error("quadrature failed to converge");
  double mid = 0.5 * (lo + hi);
  double lmid = 0.5 * (lo + mid), rmid = 0.5 * (mid + hi);
  double flm = f(lmid), frm = f(rmid);
  double left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid);
  double right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi);
  if (std::abs(left + right - whole) <= 15.0 * tol) {
    return left + right + (left + right - whole) / 15.0;
  }
  return adaptive_simpson(f, lo, mid, flo, flm, fmid, left, tol / 2.0, depth + 1) +
         adaptive_simpson(f, mid, hi, fmid, frm, fhi, right, tol / 2.0, depth + 1);
}

double integrate(const std::function<double(double)>& f, double lo, double hi, double tol) {
  double mid = 0.5 * (lo + hi);
  double flo = f(lo), fmid = f(mid), fhi = f(hi);
  double whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
  return adaptive_simpson(f, lo, hi, flo, fmid, fhi, whole, tol, 0);
}

/// Raw moments E[X^n], n = 1..4, of N(m, v).
void gaussian_raw_moments(double m, double v, double out[5]) {
  out[0] = 1.0;
  out[1] = m;
  out[2] = m * m + v;
  out[3] = m * m * m + 3.0 * m * v;
  out[4] = m * m * m * m + 6.0 * m * m * v + 3.0 * v * v;
}

double cumulant_from_raw(const double m[5], int k) {
  double m1 = m[1], m2 = m[2], m3 = m[3], m4 = m[4];
  switch (k) {
    case 1:
      return m1;
    case 2:
      return m2 - m1 * m1;
    case 3:
      return m3 - 3.0 * m1 * m2 + 2.0 * m1 * m1 * m1;
    case 4:
      return m4 - 4.0 * m1 * m3 - 3.0 * m2 * m2 + 12.0 * m1 * m1 * m2 - 6.0 * m1 * m1 * m1 * m1;
  }
  throw std::invalid_argument("cumulant order must be in 1..4");
}

double mixture_cumulant_of(const std::vector<double>& w, const std::vector<double>& means,
                           const std::vector<double>& vars, int k) {
  double raw[5] = {1.0, 0.0, 0.0, 0.0, 0.0};
  for (size_t i = 0; i < w.size(); ++i) {
    double comp[5];
    gaussian_raw_moments(means[i], vars[i], comp);
    for (int n = 1; n <= 4; ++n) raw[n] += w[i] * comp[n];
  }
  return cumulant_from_raw(raw, k);
}

void require_1d(const MixtureSpec& mix, const char* what) {
  if (mix.dim != 1) throw std::invalid_argument(std::string(what) + " requires a 1-D mixture");
}

}  // namespace

void MixtureSpec::validate() const {
  if (dim != 1 && dim != 2) throw std::invalid_argument("mixture dimension must be 1 or 2");
  if (weights.empty() || means.size() != weights.size() || covs.size() != weights.size()) {
    throw std::invalid_argument("mixture component lists must be nonempty and aligned");
  }
  double sum = 0.0;
  for (double w : weights) {
    if (w <= 0.0) throw std::invalid_argument("mixture weights must be positive");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("mixture weights must sum to 1");
  size_t d = static_cast<size_t>(dim);
  for (size_t k = 0; k < size(); ++k) {
    if (means[k].size() != d || covs[k].size() != d * d) {
      throw std::invalid_argument("mixture component has wrong dimension");
    }
    if (dim == 1) {
      if (covs[k][0] <= 0.0) throw std::invalid_argument("mixture variances must be positive");
    } else {
      double det = covs[k][0] * covs[k][3] - covs[k][1] * covs[k][2];
      if (covs[k][0] <= 0.0 || det <= 0.0) {
        throw std::invalid_argument("mixture covariance must be positive definite");
      }
    }
  }
}

MixtureSpec MixtureSpec::gaussian1d(double mean, double var) {
  MixtureSpec m;
  m.dim = 1;
  m.id = "gaussian";
  m.weights = {1.0};
  m.means = {{mean}};
  m.covs = {{var}};
  return m;
}

MixtureSpec MixtureSpec::asymmetric1d() {
  MixtureSpec m;
  m.dim = 1;
  m.id = "asymmetric";
  m.weights = {0.7, 0.3};
  m.means = {{-0.5}, {1.5}};
  m.covs = {{0.30}, {0.15}};
  return m;
}

MixtureSpec MixtureSpec::symmetric1d() {
  MixtureSpec m;
  m.dim = 1;
  m.id = "symmetric";
  m.weights = {0.5, 0.5};
  m.means = {{-1.0}, {1.0}};
  m.covs = {{0.25}, {0.25}};
  return m;
}

Density1D exact_marginal(const MixtureSpec& mix, const Schedule& schedule, double t) {
  require_1d(mix, "exact_marginal");
  mix.validate();
  NoisedMixture1D nm = noised_1d(mix, schedule.a(t), schedule.b(t));
  return [nm](double x) {
    double p = 0.0;
    for (size_t k = 0; k < nm.weights.size(); ++k) p += nm.weights[k] * normal_pdf(x, nm.means[k], nm.vars[k]);
    return p;
  };
}

double mixture_mean(const MixtureSpec& mix) {
  require_1d(mix, "mixture_mean");
  double m = 0.0;
  for (size_t k = 0; k < mix.size(); ++k) m += mix.weights[k] * mix.means[k][0];
  return m;
}

double mixture_variance(const MixtureSpec& mix) {
  require_1d(mix, "mixture_variance");
  double mu = mixture_mean(mix);
  double v = 0.0;
  for (size_t k = 0; k < mix.size(); ++k) {
    v += mix.weights[k] * (mix.covs[k][0] + mix.means[k][0] * mix.means[k][0]);
  }
  return v - mu * mu;
}

Density1D gaussian_approx(const MixtureSpec& mix, const Schedule& schedule, double t) {
  require_1d(mix, "gaussian_approx");
  mix.validate();
  double a = schedule.a(t), b = schedule.b(t);
  double mean = a * mixture_mean(mix);
  double var = a * a * mixture_variance(mix) + b * b;
  return [mean, var](double x) { return normal_pdf(x, mean, var); };
}

Density2D exact_marginal_2d(const MixtureSpec& mix, const Schedule& schedule, double t) {
  if (mix.dim != 2) throw std::invalid_argument("exact_marginal_2d requires a 2-D mixture");
  mix.validate();
  double a = schedule.a(t), b = schedule.b(t);
  MixtureSpec nm = mix;
  for (size_t k = 0; k < mix.size(); ++k) {
    nm.means[k] = {a * mix.means[k][0], a * mix.means[k][1]};
    nm.covs[k] = {a * a * mix.covs[k][0] + b * b, a * a * mix.covs[k][1], a * a * mix.covs[k][2],
                  a * a * mix.covs[k][3] + b * b};
  }
  return [nm](double x, double y) {
    double p = 0.0;
    for (size_t k = 0; k < nm.size(); ++k) p += nm.weights[k] * normal_pdf_2d(x, y, nm.means[k], nm.covs[k]);
    return p;
  };
}

Density2D gaussian_approx_2d(const MixtureSpec& mix, const Schedule& schedule, double t) {
  if (mix.dim != 2) throw std::invalid_argument("gaussian_approx_2d requires a 2-D mixture");
  mix.validate();
  double a = schedule.a(t), b = schedule.b(t);
  std::vector<double> mu = {0.0, 0.0};
  for (size_t k = 0; k < mix.size(); ++k) {
    mu[0] += mix.weights[k] * mix.means[k][0];
    mu[1] += mix.weights[k] * mix.means[k][1];
  }
  std::vector<double> sig(4, 0.0);
  for (size_t k = 0; k < mix.size(); ++k) {
    double dx = mix.means[k][0] - mu[0], dy = mix.means[k][1] - mu[1];
    sig[0] += mix.weights[k] * (mix.covs[k][0] + dx * dx);
    sig[1] += mix.weights[k] * (mix.covs[k][1] + dx * dy);
    sig[2] += mix.weights[k] * (mix.covs[k][2] + dy * dx);
    sig[3] += mix.weights[k] * (mix.covs[k][3] + dy * dy);
  }
  std::vector<double> mean = {a * mu[0], a * mu[1]};
  std::vector<double> cov = {a * a * sig[0] + b * b, a * a * sig[1], a * a * sig[2],
                             a * a * sig[3] + b * b};
  return [mean, cov](double x, double y) { return normal_pdf_2d(x, y, mean, cov); };
}

namespace {

double approx_error_1d(const MixtureSpec& mix, const Schedule& schedule, double t,
                       ErrorMetric metric) {
  Density1D p = exact_marginal(mix, schedule, t);
  Density1D q = gaussian_approx(mix, schedule, t);
  double a = schedule.a(t), b = schedule.b(t);
  double mean = a * mixture_mean(mix);
  double sd = std::sqrt(a * a * mixture_variance(mix) + b * b);
  double lo = mean - 10.0 * sd, hi = mean + 10.0 * sd;
  if (metric == ErrorMetric::TotalVariation) {
    auto f = [&](double x) { return std::abs(p(x) - q(x)); };
    return 0.5 * integrate(f, lo, hi, 1e-10);
  }
  auto f = [&](double x) {
    double px = p(x);
    if (px <= 0.0) return 0.0;
    return px * std::log(px / q(x));
  };
  return integrate(f, lo, hi, 1e-10);
}

double approx_error_2d(const MixtureSpec& mix, const Schedule& schedule, double t,
                       ErrorMetric metric) {
  Density2D p = exact_marginal_2d(mix, schedule, t);
  Density2D q = gaussian_approx_2d(mix, schedule, t);
  double a = schedule.a(t), b = schedule.b(t);
  // window from the overall moments, +-10 std per axis
  double mx = 0.0, my = 0.0;
  for (size_t k = 0; k < mix.size(); ++k) {
    mx += mix.weights[k] * mix.means[k][0];
    my += mix.weights[k] * mix.means[k][1];
  }
  double vx = b * b, vy = b * b;
  for (size_t k = 0; k < mix.size(); ++k) {
    double dx = mix.means[k][0] - mx, dy = mix.means[k][1] - my;
    vx += a * a * mix.weights[k] * (mix.covs[k][0] + dx * dx);
    vy += a * a * mix.weights[k] * (mix.covs[k][3] + dy * dy);
  }
  double sx = std::sqrt(vx), sy = std::sqrt(vy);
  const int n = 256;
  double x0 = a * mx - 10.0 * sx, x1 = a * mx + 10.0 * sx;
  double y0 = a * my - 10.0 * sy, y1 = a * my + 10.0 * sy;
  double hx = (x1 - x0) / n, hy = (y1 - y0) / n;
  double acc = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double x = x0 + (i + 0.5) * hx, y = y0 + (j + 0.5) * hy;
      if (metric == ErrorMetric::TotalVariation) {
        acc += std::abs(p(x, y) - q(x, y));
      } else {
        double px = p(x, y);
        if (px > 0.0) acc += px * std::log(px / q(x, y));
      }
    }
  acc *= hx * hy;
  return metric == ErrorMetric::TotalVariation ? 0.5 * acc : acc;
}

}  // namespace

double approx_error(const MixtureSpec& mix, const Schedule& schedule, double t, ErrorMetric metric) {
  return mix.dim == 1 ? approx_error_1d(mix, schedule, t, metric)
                      : approx_error_2d(mix, schedule, t, metric);
}

double t_for_a(const Schedule& schedule, double a) {
  double lo = 0.0, hi = static_cast<double>(schedule.t_max());
  if (a > schedule.a(lo) || a < schedule.a(hi)) throw std::invalid_argument("a outside the schedule's range");
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    if (schedule.a(mid) > a) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

SlopeFit fit_decay_slope(const MixtureSpec& mix, const Schedule& schedule,
                         const std::vector<double>& a_values) {
  if (a_values.size() < 4) throw std::invalid_argument("slope fit needs at least 4 signal levels");
  std::vector<double> xs, ys;
  bool all_tiny = true;
  for (double a : a_values) {
    double err = approx_error(mix, schedule, t_for_a(schedule, a));
    if (err > 1e-13) all_tiny = false;
    xs.push_back(std::log(a));
    ys.push_back(err > 0.0 ? std::log(err) : -745.0);
  }
  SlopeFit fit;
  if (all_tiny) {
    fit.exact = true;
    return fit;
  }
  double n = static_cast<double>(xs.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  double intercept = (sy - fit.slope * sx) / n;
  double rss = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    double r = ys[i] - (fit.slope * xs[i] + intercept);
    rss += r * r;
  }
  fit.residual = std::sqrt(rss / n);
  return fit;
}

double mixture_cumulant(const MixtureSpec& mix, int k) {
  require_1d(mix, "mixture_cumulant");
  mix.validate();
  std::vector<double> vars;
  std::vector<double> means;
  for (size_t i = 0; i < mix.size(); ++i) {
    means.push_back(mix.means[i][0]);
    vars.push_back(mix.covs[i][0]);
  }
  return mixture_cumulant_of(mix.weights, means, vars, k);
}

double noised_cumulant(const MixtureSpec& mix, const Schedule& schedule, double t, int k) {
  require_1d(mix, "noised_cumulant");
  mix.validate();
  NoisedMixture1D nm = noised_1d(mix, schedule.a(t), schedule.b(t));
  return mixture_cumulant_of(nm.weights, nm.means, nm.vars, k);
}

CumulantCheck cumulant_scaling_check(const MixtureSpec& mix, const Schedule& schedule, double t,
                                     int k) {
  if (k < 3 || k > 4) throw std::invalid_argument("scaling check covers cumulant orders 3 and 4");
  double base = mixture_cumulant(mix, k);
  CumulantCheck out;
  if (std::abs(base) < 1e-12) return out;  // undefined
  out.defined = true;
  double a = schedule.a(t);
  out.ratio = noised_cumulant(mix, schedule, t, k) / (std::pow(a, k) * base);
  return out;
}

CumulantCheck cumulant_scaling_mc(const MixtureSpec& mix, const Schedule& schedule, double t, int k,
                                  int64_t n, std::mt19937_64& rng) {
  if (k < 3 || k > 4) throw std::invalid_argument("scaling check covers cumulant orders 3 and 4");
  require_1d(mix, "cumulant_scaling_mc");
  double base = mixture_cumulant(mix, k);
  CumulantCheck out;
  if (std::abs(base) < 1e-12) return out;
  double a = schedule.a(t), b = schedule.b(t);
  std::discrete_distribution<size_t> comp(mix.weights.begin(), mix.weights.end());
  std::normal_distribution<double> normal;
  double raw[5] = {1.0, 0.0, 0.0, 0.0, 0.0};
  for (int64_t i = 0; i < n; ++i) {
    size_t c = comp(rng);
    double z0 = mix.means[c][0] + std::sqrt(mix.covs[c][0]) * normal(rng);
    double z = a * z0 + b * normal(rng);
    double p = z;
    for (int m = 1; m <= 4; ++m) {
      raw[m] += p;
      p *= z;
    }
  }
  for (int m = 1; m <= 4; ++m) raw[m] /= static_cast<double>(n);
  out.defined = true;
  out.ratio = cumulant_from_raw(raw, k) / (std::pow(a, k) * base);
  return out;
}

}  // namespace saga
