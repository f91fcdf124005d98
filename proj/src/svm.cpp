#include "neoseize/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "neoseize/error.hpp"

namespace neoseize {
namespace {

constexpr double kTau = 1e-12;
constexpr std::size_t kMaxDenseRows = 12000;

}  // namespace

void DenseMatrix::push_row(std::span<const double> r) {
  if (rows == 0 && cols == 0) cols = r.size();
  if (r.size() != cols) throw ValidationError("DenseMatrix: row width mismatch");
  data.insert(data.end(), r.begin(), r.end());
  ++rows;
}

std::string to_string(KernelType t) { return t == KernelType::kRbf ? "rbf" : "linear"; }

KernelType kernel_from_string(const std::string& s) {
  if (s == "rbf") return KernelType::kRbf;
  if (s == "linear") return KernelType::kLinear;
  throw ConfigError("unknown kernel '" + s + "' (expected rbf or linear)");
}

double Kernel::operator()(std::span<const double> a, std::span<const double> b) const {
  if (type == KernelType::kLinear) {
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    return dot;
  }
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    d2 += d * d;
  }
  return std::exp(-gamma * d2);
}

SmoResult solve_smo(const DenseMatrix& x, std::span<const std::int8_t> y, double c,
                    const Kernel& kernel, const SmoOptions& options) {
  const std::size_t n = x.rows;
  if (y.size() != n) throw ValidationError("solve_smo: label count differs from row count");
  if (!(c > 0.0)) throw ConfigError("solve_smo: C must be positive");
  bool has_pos = false, has_neg = false;
  for (auto v : y) {
    if (v == 1) {
      has_pos = true;
    } else if (v == -1) {
      has_neg = true;
    } else {
      throw ValidationError("solve_smo: labels must be +1 or -1");
    }
  }
  if (!has_pos || !has_neg) throw ValidationError("single-class training data: both classes are required");
  if (n > kMaxDenseRows) {
    throw ValidationError("solve_smo: " + std::to_string(n) + " rows exceeds the dense kernel limit of " +
                          std::to_string(kMaxDenseRows));
  }

  // Dense Q = y_i y_j K(x_i, x_j).
  std::vector<double> q(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = static_cast<double>(y[i] * y[j]) * kernel(x.row(i), x.row(j));
      q[i * n + j] = v;
      q[j * n + i] = v;
    }
  }
  auto qrow = [&](std::size_t i) { return q.data() + i * n; };

  std::vector<double> alpha(n, 0.0);
  std::vector<double> grad(n, -1.0);
  const auto is_upper = [&](std::size_t t) { return alpha[t] >= c; };
  const auto is_lower = [&](std::size_t t) { return alpha[t] <= 0.0; };

  SmoResult res;
  const std::size_t cap = options.max_iterations;
  double violation = std::numeric_limits<double>::infinity();
  while (true) {
    // i maximizes -y G over I_up.
    double gmax = -std::numeric_limits<double>::infinity();
    std::ptrdiff_t i_sel = -1;
    for (std::size_t t = 0; t < n; ++t) {
      if (y[t] == 1) {
        if (!is_upper(t) && -grad[t] >= gmax) {
          gmax = -grad[t];
          i_sel = static_cast<std::ptrdiff_t>(t);
        }
      } else if (!is_lower(t) && grad[t] >= gmax) {
        gmax = grad[t];
        i_sel = static_cast<std::ptrdiff_t>(t);
      }
    }
    // j minimizes the second-order objective decrease over I_low.
    double gmax2 = -std::numeric_limits<double>::infinity();
    std::ptrdiff_t j_sel = -1;
    double best = std::numeric_limits<double>::infinity();
    if (i_sel >= 0) {
      const auto i = static_cast<std::size_t>(i_sel);
      const double* qi = qrow(i);
      const double qii = qi[i];
      for (std::size_t t = 0; t < n; ++t) {
        double grad_diff;
        double quad;
        if (y[t] == 1) {
          if (is_lower(t)) continue;
          grad_diff = gmax + grad[t];
          gmax2 = std::max(gmax2, grad[t]);
          quad = qii + qrow(t)[t] - 2.0 * y[i] * qi[t];
        } else {
          if (is_upper(t)) continue;
          grad_diff = gmax - grad[t];
          gmax2 = std::max(gmax2, -grad[t]);
          quad = qii + qrow(t)[t] + 2.0 * y[i] * qi[t];
        }
        if (grad_diff > 0.0) {
          const double obj = -(grad_diff * grad_diff) / (quad > 0.0 ? quad : kTau);
          if (obj <= best) {
            best = obj;
            j_sel = static_cast<std::ptrdiff_t>(t);
          }
        }
      }
    }
    violation = gmax + gmax2;
    if (i_sel < 0 || j_sel < 0 || violation < options.tolerance) break;
    if (res.iterations >= cap) {
      throw RuntimeError("SMO did not converge within " + std::to_string(cap) +
                         " iterations (residual KKT violation " + std::to_string(violation) + ")");
    }
    ++res.iterations;

    const auto i = static_cast<std::size_t>(i_sel);
    const auto j = static_cast<std::size_t>(j_sel);
    const double* qi = qrow(i);
    const double* qj = qrow(j);
    const double old_ai = alpha[i];
    const double old_aj = alpha[j];
    double& ai = alpha[i];
    double& aj = alpha[j];
    if (y[i] != y[j]) {
      double quad = qi[i] + qj[j] + 2.0 * qi[j];
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = ai - aj;
      ai += delta;
      aj += delta;
      if (diff > 0.0) {
        if (aj < 0.0) {
          aj = 0.0;
          ai = diff;
        }
      } else if (ai < 0.0) {
        ai = 0.0;
        aj = -diff;
      }
      if (diff > 0.0) {
        if (ai > c) {
          ai = c;
          aj = c - diff;
        }
      } else if (aj > c) {
        aj = c;
        ai = c + diff;
      }
    } else {
      double quad = qi[i] + qj[j] - 2.0 * qi[j];
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = ai + aj;
      ai -= delta;
      aj += delta;
      if (sum > c) {
        if (ai > c) {
          ai = c;
          aj = sum - c;
        }
      } else if (aj < 0.0) {
        aj = 0.0;
        ai = sum;
      }
      if (sum > c) {
        if (aj > c) {
          aj = c;
          ai = sum - c;
        }
      } else if (ai < 0.0) {
        ai = 0.0;
        aj = sum;
      }
    }
    const double dai = ai - old_ai;
    const double daj = aj - old_aj;
    for (std::size_t t = 0; t < n; ++t) grad[t] += qi[t] * dai + qj[t] * daj;
  }

  // Bias from free vectors; midpoint of the feasible interval otherwise.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (is_upper(t)) {
      if (y[t] == -1) {
        ub = std::min(ub, yg);
      } else {
        lb = std::max(lb, yg);
      }
    } else if (is_lower(t)) {
      if (y[t] == 1) {
        ub = std::min(ub, yg);
      } else {
        lb = std::max(lb, yg);
      }
    } else {
      sum_free += yg;
      ++n_free;
    }
  }
  const double rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;
  res.alpha = std::move(alpha);
  res.bias = -rho;
  res.kkt_violation = violation;
  return res;
}

double SvmDecision::operator()(std::span<const double> x) const {
  double f = bias;
  for (std::size_t i = 0; i < coef.size(); ++i) f += coef[i] * kernel(x, support_vectors.row(i));
  return f;
}

SvmDecision make_decision(const DenseMatrix& x, std::span<const std::int8_t> y,
                          const SmoResult& result, const Kernel& kernel) {
  SvmDecision d;
  d.kernel = kernel;
  d.bias = result.bias;
  d.support_vectors.cols = x.cols;
  for (std::size_t i = 0; i < x.rows; ++i) {
    if (result.alpha[i] > 0.0) {
      d.support_vectors.push_row(x.row(i));
      d.coef.push_back(result.alpha[i] * y[i]);
    }
  }
  return d;
}

}  // namespace neoseize
