#pragma once

// Decision rules and closed-form false-alarm probabilities under H0.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "consense/error.hpp"
#include "consense/format.hpp"
#include "consense/sensing.hpp"

namespace consense {

/// Decision threshold, configured in dB and compared in linear scale.
class Threshold {
public:
  static Threshold from_db(double db) { return Threshold(db); }

  double db() const noexcept { return db_; }
  double linear() const noexcept { return linear_; }

private:
  explicit Threshold(double db) : db_(db), linear_(snr_db_to_linear(db)) {
    if (!std::isfinite(db)) throw InvalidArgument("threshold must be finite");
  }

  double db_;
  double linear_;
};

enum class Decision { Absent = 0, Present = 1 };

/// Present iff x* > lambda (strict; ties decide Absent).
inline Decision decide_consensus(double x_star, const Threshold& lambda) {
  return x_star > lambda.linear() ? Decision::Present : Decision::Absent;
}

inline Decision decide_or_rule(std::span<const double> y, const Threshold& lambda) {
  if (y.empty()) throw InvalidArgument("OR rule: empty energy vector");
  return std::any_of(y.begin(), y.end(), [&](double v) { return v > lambda.linear(); }) ? Decision::Present
                                                                                       : Decision::Absent;
}

inline Decision decide_k_out_of_n(std::span<const double> y, const Threshold& lambda, std::size_t k) {
  if (k < 1 || k > y.size()) {
    throw InvalidArgument("k-out-of-n: k = " + std::to_string(k) + " outside [1, " + std::to_string(y.size()) + "]");
  }
  const auto above = static_cast<std::size_t>(
      std::count_if(y.begin(), y.end(), [&](double v) { return v > lambda.linear(); }));
  return above >= k ? Decision::Present : Decision::Absent;
}

/// P(chi-square with 2k degrees of freedom > x), k >= 1: the Poisson sum
/// exp(-x/2) sum_{j<k} (x/2)^j / j!, accumulated in log space.
inline double chi_square_survival_even(unsigned k, double x) {
  if (k < 1) throw InvalidArgument("chi-square survival: need at least 2 degrees of freedom");
  if (!(x > 0.0)) return 1.0;
  if (std::isinf(x)) return 0.0;
  const double y = x / 2.0;
  const double log_y = std::log(y);
  auto log_term = [&](double j) { return j * log_y - std::lgamma(j + 1.0) - y; };
  if (y < static_cast<double>(k)) {
    // Left of the mean the survival is near one; sum the small Poisson upper
    // tail sum_{j>=k} instead. Its terms decrease from j = k on.
    double tail = 0.0;
    for (double j = k;; j += 1.0) {
      const double term = std::exp(log_term(j));
      tail += term;
      if (term <= 1e-17 * tail || term == 0.0) break;
    }
    return std::clamp(1.0 - tail, 0.0, 1.0);
  }
  // The largest retained term is the last one; scale by it so none overflows.
  const double log_peak = log_term(static_cast<double>(k - 1));
  double sum = 0.0;
  for (unsigned j = 0; j < k; ++j) sum += std::exp(log_term(static_cast<double>(j)) - log_peak);
  return std::clamp(std::exp(std::log(sum) + log_peak), 0.0, 1.0);
}

/// One user deciding on its own energy.
inline double analytic_pf_single(unsigned m, const Threshold& lambda) {
  if (m < 1) throw InvalidArgument("analytic P_f: m must be >= 1");
  return chi_square_survival_even(m, lambda.linear());
}

/// Decision on the exact average: the sum of n i.i.d. chi-square(2m) values
/// is chi-square(2mn), so P_f = P(chi-square(2mn) > n * lambda).
inline double analytic_pf_consensus(unsigned n, unsigned m, const Threshold& lambda) {
  if (n < 1 || m < 1) throw InvalidArgument("analytic P_f: n and m must be >= 1");
  return chi_square_survival_even(n * m, static_cast<double>(n) * lambda.linear());
}

inline double analytic_pf_or(unsigned n, unsigned m, const Threshold& lambda) {
  if (n < 1) throw InvalidArgument("analytic P_f: n must be >= 1");
  const double q = analytic_pf_single(m, lambda);
  if (q >= 1.0) return 1.0;
  return -std::expm1(static_cast<double>(n) * std::log1p(-q));
}

/// Binomial tail: at least k of n independent users exceed lambda.
inline double analytic_pf_k_out_of_n(unsigned n, unsigned m, const Threshold& lambda, unsigned k) {
  if (k < 1 || k > n) throw InvalidArgument("analytic P_f: k outside [1, n]");
  const double q = analytic_pf_single(m, lambda);
  if (q <= 0.0) return 0.0;
  if (q >= 1.0) return 1.0;
  double total = 0.0;
  for (unsigned j = k; j <= n; ++j) {
    const double log_binom = std::lgamma(n + 1.0) - std::lgamma(j + 1.0) - std::lgamma(n - j + 1.0);
    total += std::exp(log_binom + j * std::log(q) + (n - j) * std::log1p(-q));
  }
  return std::clamp(total, 0.0, 1.0);
}

// ---------------------------------------------------------------------------

enum class RuleKind { Consensus, OrRule, KOutOfN, Single };

/// A decision rule as named in configs and outputs.
struct Rule {
  RuleKind kind = RuleKind::Consensus;
  std::size_t k = 1;  // KOutOfN only

  friend bool operator==(const Rule&, const Rule&) = default;

  std::string name() const {
    switch (kind) {
      case RuleKind::Consensus: return "consensus";
      case RuleKind::OrRule: return "or";
      case RuleKind::KOutOfN: return "kofn:" + std::to_string(k);
      case RuleKind::Single: return "single";
    }
    return "?";
  }
};

/// Closed-form P_f of a rule on an n-user network.
inline double analytic_pf(const Rule& rule, unsigned n, unsigned m, const Threshold& lambda) {
  switch (rule.kind) {
    case RuleKind::Consensus: return analytic_pf_consensus(n, m, lambda);
    case RuleKind::OrRule: return analytic_pf_or(n, m, lambda);
    case RuleKind::KOutOfN: return analytic_pf_k_out_of_n(n, m, lambda, static_cast<unsigned>(rule.k));
    case RuleKind::Single: return analytic_pf_single(m, lambda);
  }
  return 0.0;
}

/// Threshold (dB) at which a non-increasing P_f curve equals the target,
/// by bisection to the given width.
inline double invert_pf_db(const std::function<double(const Threshold&)>& pf, double target, double lo_db = -60.0,
                           double hi_db = 80.0, double width_db = 1e-10) {
  if (!(target > 0.0 && target < 1.0)) throw InvalidArgument("P_f target must lie in (0, 1)");
  if (!(pf(Threshold::from_db(lo_db)) >= target && pf(Threshold::from_db(hi_db)) <= target)) {
    throw InvalidArgument("P_f target " + format_real(target) + " not bracketed on [" + format_real(lo_db) + ", " +
                          format_real(hi_db) + "] dB");
  }
  while (hi_db - lo_db > width_db) {
    const double mid = 0.5 * (lo_db + hi_db);
    if (pf(Threshold::from_db(mid)) > target) {
      lo_db = mid;
    } else {
      hi_db = mid;
    }
  }
  return 0.5 * (lo_db + hi_db);
}

}  // namespace consense
