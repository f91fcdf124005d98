#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace neoseize {

// Row-major dense matrix of feature vectors.
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  void push_row(std::span<const double> r);
};

enum class KernelType { kRbf, kLinear };

std::string to_string(KernelType t);
KernelType kernel_from_string(const std::string& s);

struct Kernel {
  KernelType type = KernelType::kRbf;
  double gamma = 1.0 / 22.0;  // RBF width: exp(-gamma * |a - b|^2)

  double operator()(std::span<const double> a, std::span<const double> b) const;
};

struct SmoOptions {
  double tolerance = 1e-3;  // stop when the maximal KKT violation falls below this
  std::size_t max_iterations = 10'000'000;
};

struct SmoResult {
  std::vector<double> alpha;
  double bias = 0.0;
  std::size_t iterations = 0;
  double kkt_violation = 0.0;  // max over I_up of -y G minus min over I_low
};

// Soft-margin C-SVC dual solved by sequential minimal optimization with
// second-order working-set selection. Labels must be +1/-1 with both present.
// Throws RuntimeError (with the residual violation) if the iteration cap is hit.
SmoResult solve_smo(const DenseMatrix& x, std::span<const std::int8_t> y, double c,
                    const Kernel& kernel, const SmoOptions& options = {});

// Kernel expansion f(x) = sum_i coef_i K(x, sv_i) + bias, coef_i = alpha_i y_i.
struct SvmDecision {
  Kernel kernel;
  DenseMatrix support_vectors;
  std::vector<double> coef;
  double bias = 0.0;

  double operator()(std::span<const double> x) const;
};

// Keeps the points with alpha > 0.
SvmDecision make_decision(const DenseMatrix& x, std::span<const std::int8_t> y,
                          const SmoResult& result, const Kernel& kernel);

}  // namespace neoseize
