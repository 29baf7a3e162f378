#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "hgp/error.hpp"
#include "hgp/rng.hpp"

namespace hgp {

// Row-major matrix of doubles. Values handed in from outside are checked for
// NaN/Inf; results of the library's own kernels are produced in place.
class Dense {
 public:
  Dense() = default;
  Dense(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), values_(rows * cols, 0.0) {}
  Dense(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    require(values_.size() == rows_ * cols_, "Dense: value count does not match shape");
    require(all_finite(), "Dense: non-finite value");
  }

  static Dense from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> v;
    v.reserve(r * c);
    for (const auto& row : rows) {
      require(row.size() == c, "Dense::from_rows: ragged rows");
      v.insert(v.end(), row.begin(), row.end());
    }
    return Dense(r, c, std::move(v));
  }

  static Dense identity(std::size_t n) {
    Dense m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool same_shape(const Dense& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double x) { return std::isfinite(x); });
  }

  void fill(double x) { std::fill(values_.begin(), values_.end(), x); }

  Dense& operator+=(const Dense& o) {
    require(same_shape(o), "Dense +=: shape mismatch");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    return *this;
  }

  Dense& operator*=(double s) {
    for (double& x : values_) x *= s;
    return *this;
  }

  friend bool operator==(const Dense& a, const Dense& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.values_ == b.values_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

inline std::string shape_str(const Dense& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

inline double max_abs_diff(const Dense& a, const Dense& b) {
  require(a.same_shape(b), "max_abs_diff: shape mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.values()[i] - b.values()[i]));
  return d;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// C = A * B, summing over the inner index in ascending order.
inline Dense dense_matmul(const Dense& a, const Dense& b) {
  if (a.cols() != b.rows()) throw Error("dense_matmul: shape mismatch " + shape_str(a) + " * " + shape_str(b));
  Dense c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out[j] += aik * brow[j];
    }
  }
  return c;
}

// C = A^T * B
inline Dense matmul_tn(const Dense& a, const Dense& b) {
  if (a.rows() != b.rows()) throw Error("matmul_tn: shape mismatch " + shape_str(a) + "^T * " + shape_str(b));
  Dense c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const auto arow = a.row(k);
    const auto brow = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      auto out = c.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) out[j] += aki * brow[j];
    }
  }
  return c;
}

// C = A * B^T
inline Dense matmul_nt(const Dense& a, const Dense& b) {
  if (a.cols() != b.cols()) throw Error("matmul_nt: shape mismatch " + shape_str(a) + " * " + shape_str(b) + "^T");
  Dense c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) c(i, j) = dot(a.row(i), b.row(j));
  return c;
}

inline Dense transpose(const Dense& a) {
  Dense t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

// Adds a bias row to every row of m.
inline void add_row_bias(Dense& m, const Dense& bias) {
  require(bias.rows() == 1 && bias.cols() == m.cols(), "add_row_bias: shape mismatch");
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) r[j] += bias(0, j);
  }
}

inline Dense column_sums(const Dense& m) {
  Dense s(1, m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) s(0, j) += m(i, j);
  return s;
}

inline Dense relu(const Dense& m) {
  Dense out = m;
  for (double& x : out.values()) x = x > 0.0 ? x : 0.0;
  return out;
}

// Gradient of relu: passes grad where the pre-activation is > 0, zero where
// it is <= 0 (the subgradient at exactly 0 is taken as 0).
inline Dense relu_backward(const Dense& pre, const Dense& grad_out) {
  require(pre.same_shape(grad_out), "relu_backward: shape mismatch");
  Dense g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(pre.values()[i] > 0.0)) g.values()[i] = 0.0;
  return g;
}

inline Dense row_softmax(const Dense& m) {
  Dense out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto in = m.row(i);
    auto o = out.row(i);
    if (in.empty()) continue;
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (double& x : o) x /= sum;
  }
  return out;
}

// Given softmax output S and dL/dS, returns dL/dlogits row by row:
// g_j = S_j * (dS_j - sum_k S_k dS_k).
inline Dense row_softmax_backward(const Dense& softmax_out, const Dense& grad_out) {
  require(softmax_out.same_shape(grad_out), "row_softmax_backward: shape mismatch");
  Dense g(softmax_out.rows(), softmax_out.cols());
  for (std::size_t i = 0; i < g.rows(); ++i) {
    const double inner = dot(softmax_out.row(i), grad_out.row(i));
    for (std::size_t j = 0; j < g.cols(); ++j) g(i, j) = softmax_out(i, j) * (grad_out(i, j) - inner);
  }
  return g;
}

// Glorot/Xavier uniform in +-sqrt(6 / (fan_in + fan_out)).
inline Dense xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Dense w(fan_in, fan_out);
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& x : w.values()) x = rng.uniform(-limit, limit);
  return w;
}

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Dense m;
  Dense v;
  long long t = 0;

  static AdamState for_param(const Dense& p) { return {Dense(p.rows(), p.cols()), Dense(p.rows(), p.cols()), 0}; }
};

// One bias-corrected Adam update of `param` in place.
inline void adam_step(Dense& param, const Dense& grad, AdamState& state, const AdamConfig& cfg) {
  if (!param.same_shape(grad))
    throw Error("adam_step: gradient shape " + shape_str(grad) + " vs parameter " + shape_str(param));
  if (state.m.size() == 0 && param.size() != 0) state = AdamState::for_param(param);
  require(param.same_shape(state.m) && param.same_shape(state.v), "adam_step: state shape mismatch");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  auto p = param.values();
  auto g = grad.values();
  auto m = state.m.values();
  auto v = state.v.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    p[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

// A parameter exposed to the gradient checker: its current value (perturbed
// in place and restored) and the analytic gradient at the unperturbed point.
struct CheckedParam {
  std::string name;
  Dense* value;
  const Dense* analytic;
};

struct GradCheckReport {
  std::vector<std::string> names;
  std::vector<double> rel_error;        // |a - n| / max(1e-8, |a| + |n|), Euclidean norms over the tensor
  std::vector<double> max_entry_error;  // the same formula entry by entry, worst entry
  std::vector<std::size_t> excluded;    // entries whose +-h step crossed a kink
  double worst = 0.0;
  double tol = 0.0;

  bool passed() const { return worst <= tol; }
  std::size_t total_excluded() const {
    std::size_t n = 0;
    for (auto e : excluded) n += e;
    return n;
  }
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

// Central finite differences against analytic gradients. Each parameter
// tensor is scored as a whole; `worst` is the largest tensor score.
// `pattern_fn`, when given, is called after every loss evaluation and returns
// a fingerprint of the piecewise-linear region (e.g. ReLU sign pattern); an
// entry whose +-h evaluations leave the base region is excluded and counted.
inline GradCheckReport finite_diff_check(const std::function<double()>& loss_fn, std::span<const CheckedParam> params,
                                         double h, double tol, const std::function<std::uint64_t()>& pattern_fn = {}) {
  require(h > 0.0, "finite_diff_check: step must be positive");
  GradCheckReport report;
  report.tol = tol;
  std::uint64_t base = 0;
  if (pattern_fn) {
    require(std::isfinite(loss_fn()), "finite_diff_check: non-finite loss");
    base = pattern_fn();
  }
  for (const auto& p : params) {
    require(p.value != nullptr && p.analytic != nullptr && p.value->same_shape(*p.analytic),
            "finite_diff_check: analytic gradient shape mismatch", p.name);
    double entry_worst = 0.0;
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    std::size_t excluded = 0;
    for (std::size_t i = 0; i < p.value->size(); ++i) {
      double& x = p.value->values()[i];
      const double saved = x;
      x = saved + h;
      const double up = loss_fn();
      const bool up_same = !pattern_fn || pattern_fn() == base;
      x = saved - h;
      const double down = loss_fn();
      const bool down_same = !pattern_fn || pattern_fn() == base;
      x = saved;
      require(std::isfinite(up) && std::isfinite(down), "finite_diff_check: non-finite loss", p.name);
      if (!up_same || !down_same) {
        ++excluded;
        continue;
      }
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p.analytic->values()[i];
      entry_worst = std::max(entry_worst, relative_error(analytic, numeric));
      diff2 += (analytic - numeric) * (analytic - numeric);
      a2 += analytic * analytic;
      n2 += numeric * numeric;
    }
    const double rel = std::sqrt(diff2) / std::max(1e-8, std::sqrt(a2) + std::sqrt(n2));
    report.names.push_back(p.name);
    report.rel_error.push_back(rel);
    report.max_entry_error.push_back(entry_worst);
    report.excluded.push_back(excluded);
    report.worst = std::max(report.worst, rel);
  }
  return report;
}

}  // namespace hgp
