#pragma once

// Beta calibration: logistic MLE of the target on ln(p) and -ln(1-p), giving
// mu(p) = 1 / (1 + 1/(exp(c) p^a (1-p)^{-b})). Negative shape coefficients
// are pinned to zero and the model refit, keeping the map monotone. Also
// hosts the Brier score / skill and reliability-curve data.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ratemill/specfun.hpp"

#include "json.hpp"

namespace ratemill::calibration {

constexpr double kScoreClip = 1e-6;

struct CalibrationMap {
  double a = 1.0;
  double b = 1.0;
  double c = 0.0;
  std::size_t fit_n = 0;
  double log_loss = 0.0;

  double apply(double p) const {
    const double pc = std::clamp(p, kScoreClip, 1.0 - kScoreClip);
    return sigmoid(a * std::log(pc) - b * std::log1p(-pc) + c);
  }

  std::vector<double> apply(const std::vector<double>& scores) const {
    std::vector<double> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = apply(scores[i]);
    return out;
  }
};

namespace detail {

// Damped Newton logistic MLE on the active covariates. active_a/active_b
// select whether ln(p) and -ln(1-p) participate; the intercept always does.
struct NewtonFit {
  double a = 0.0, b = 0.0, c = 0.0;
  double log_loss = 0.0;
  bool converged = false;
};

inline NewtonFit newton_logistic(const std::vector<double>& x1, const std::vector<double>& x2,
                                 const std::vector<int>& y, bool active_a, bool active_b) {
  const std::size_t n = y.size();
  const int dim = 1 + int(active_a) + int(active_b);

  auto eta_of = [&](const Eigen::VectorXd& beta, std::size_t i) {
    double e = 0.0;
    int k = 0;
    if (active_a) e += beta[k++] * x1[i];
    if (active_b) e += beta[k++] * x2[i];
    e += beta[k];
    return e;
  };
  auto nll_of = [&](const Eigen::VectorXd& beta) {
    double nll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double eta = eta_of(beta, i);
      // log(1 + exp(eta)) - y*eta, computed stably
      const double softplus = eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
      nll += softplus - double(y[i]) * eta;
    }
    return nll / double(n);
  };

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(dim);
  double nll = nll_of(beta);
  bool converged = false;
  for (int iter = 0; iter < 100; ++iter) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(dim);
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(dim, dim);
    for (std::size_t i = 0; i < n; ++i) {
      const double mu = sigmoid(eta_of(beta, i));
      const double w = std::max(mu * (1.0 - mu), 1e-12);
      Eigen::VectorXd xi(dim);
      int k = 0;
      if (active_a) xi[k++] = x1[i];
      if (active_b) xi[k++] = x2[i];
      xi[k] = 1.0;
      grad += (mu - double(y[i])) * xi;
      hess += w * xi * xi.transpose();
    }
    grad /= double(n);
    hess /= double(n);
    if (grad.norm() < 1e-10) {
      converged = true;
      break;
    }
    hess.diagonal().array() += 1e-10;
    Eigen::VectorXd step = hess.ldlt().solve(grad);
    // Halve the step until the objective improves.
    double scale = 1.0;
    Eigen::VectorXd candidate;
    double cand_nll = 0.0;
    bool moved = false;
    for (int h = 0; h < 40; ++h) {
      candidate = beta - scale * step;
      cand_nll = nll_of(candidate);
      if (cand_nll <= nll) {
        moved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!moved) {
      converged = grad.norm() < 1e-6;
      break;
    }
    beta = candidate;
    nll = cand_nll;
  }

  NewtonFit fit;
  int k = 0;
  if (active_a) fit.a = beta[k++];
  if (active_b) fit.b = beta[k++];
  fit.c = beta[k];
  fit.log_loss = nll;
  fit.converged = converged;
  return fit;
}

}  // namespace detail

inline CalibrationMap fit_beta(const std::vector<double>& scores, const std::vector<int>& targets) {
  if (scores.size() != targets.size()) throw std::invalid_argument("fit_beta: length mismatch");
  const std::size_t n = scores.size();
  if (n == 0) throw std::invalid_argument("fit_beta: empty input");
  std::size_t n_pos = 0;
  for (int t : targets) n_pos += (t != 0);
  if (n_pos == 0 || n_pos == n) throw std::invalid_argument("fit_beta: single-class targets");

  std::vector<double> x1(n), x2(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(scores[i], kScoreClip, 1.0 - kScoreClip);
    x1[i] = std::log(p);
    x2[i] = -std::log1p(-p);
  }

  bool active_a = true, active_b = true;
  detail::NewtonFit fit;
  for (int attempt = 0; attempt < 3; ++attempt) {
    fit = detail::newton_logistic(x1, x2, targets, active_a, active_b);
    if (!fit.converged)
      throw std::runtime_error(
          "fit_beta: Newton iterations did not converge (n=" + std::to_string(n) +
          ", log_loss=" + std::to_string(fit.log_loss) + ")");
    if (active_a && fit.a < 0.0) {
      active_a = false;
      continue;
    }
    if (active_b && fit.b < 0.0) {
      active_b = false;
      continue;
    }
    break;
  }
  if (!active_a && !active_b)
    throw std::runtime_error("fit_beta: degenerate fit, both shape coefficients pinned to zero");

  CalibrationMap map;
  map.a = active_a ? fit.a : 0.0;
  map.b = active_b ? fit.b : 0.0;
  map.c = fit.c;
  map.fit_n = n;
  map.log_loss = fit.log_loss;
  return map;
}

inline double brier(const std::vector<double>& forecasts, const std::vector<int>& outcomes) {
  if (forecasts.size() != outcomes.size()) throw std::invalid_argument("brier: length mismatch");
  if (forecasts.empty()) throw std::invalid_argument("brier: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < forecasts.size(); ++i) {
    const double d = forecasts[i] - double(outcomes[i]);
    sum += d * d;
  }
  return sum / double(forecasts.size());
}

inline double brier_skill(const std::vector<double>& forecasts, const std::vector<int>& outcomes) {
  std::size_t n_pos = 0;
  for (int o : outcomes) n_pos += (o != 0);
  if (outcomes.empty() || n_pos == 0 || n_pos == outcomes.size())
    throw std::invalid_argument("brier_skill: outcomes have zero variance");
  const double base_rate = double(n_pos) / double(outcomes.size());
  const std::vector<double> ref(outcomes.size(), base_rate);
  return 1.0 - brier(forecasts, outcomes) / brier(ref, outcomes);
}

struct ReliabilityBin {
  double lo = 0.0;
  double hi = 0.0;
  double mean_forecast = 0.0;
  double observed_rate = 0.0;
  std::size_t count = 0;
};

struct ReliabilityTable {
  std::vector<ReliabilityBin> bins;
};

inline ReliabilityTable reliability(const std::vector<double>& forecasts,
                                    const std::vector<int>& outcomes, int n_bins = 10) {
  if (n_bins < 2) throw std::invalid_argument("reliability: n_bins < 2");
  if (forecasts.size() != outcomes.size())
    throw std::invalid_argument("reliability: length mismatch");
  ReliabilityTable table;
  table.bins.resize(static_cast<std::size_t>(n_bins));
  std::vector<double> sum_f(static_cast<std::size_t>(n_bins), 0.0);
  std::vector<double> sum_y(static_cast<std::size_t>(n_bins), 0.0);
  for (std::size_t i = 0; i < forecasts.size(); ++i) {
    int b = static_cast<int>(forecasts[i] * n_bins);
    b = std::clamp(b, 0, n_bins - 1);
    auto& bin = table.bins[static_cast<std::size_t>(b)];
    ++bin.count;
    sum_f[static_cast<std::size_t>(b)] += forecasts[i];
    sum_y[static_cast<std::size_t>(b)] += double(outcomes[i]);
  }
  for (int b = 0; b < n_bins; ++b) {
    auto& bin = table.bins[static_cast<std::size_t>(b)];
    bin.lo = double(b) / n_bins;
    bin.hi = double(b + 1) / n_bins;
    if (bin.count > 0) {
      bin.mean_forecast = sum_f[static_cast<std::size_t>(b)] / double(bin.count);
      bin.observed_rate = sum_y[static_cast<std::size_t>(b)] / double(bin.count);
    }
  }
  return table;
}

inline nlohmann::json to_json(const CalibrationMap& map) {
  return {{"a", map.a}, {"b", map.b}, {"c", map.c},
          {"fit_n", map.fit_n}, {"log_loss", map.log_loss}};
}

inline CalibrationMap calibration_from_json(const nlohmann::json& j) {
  CalibrationMap map;
  map.a = j.at("a").get<double>();
  map.b = j.at("b").get<double>();
  map.c = j.at("c").get<double>();
  map.fit_n = j.value("fit_n", std::size_t{0});
  map.log_loss = j.value("log_loss", 0.0);
  return map;
}

}  // namespace ratemill::calibration
