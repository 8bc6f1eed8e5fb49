// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace lava {

using Rational = boost::multiprecision::cpp_rational;

double to_double(const Rational& r);

/// a_{j,i}: accuracy on domain i's test set after stage j (both 0-based
/// internally, 1-based in every emitted report). Stored as counts.
class AccuracyMatrix {
 public:
  explicit AccuracyMatrix(std::size_t domains);

  std::size_t domains() const noexcept { return domains_; }
  /// Records c_{j,i} correct out of |Z_i|. Requires i <= j and a consistent |Z_i|.
  void set(std::size_t stage, std::size_t domain, std::size_t correct, std::size_t total);
  bool has(std::size_t stage, std::size_t domain) const;
  bool row_complete(std::size_t stage) const;
  std::size_t correct(std::size_t stage, std::size_t domain) const;
  std::size_t total(std::size_t domain) const;
  Rational accuracy(std::size_t stage, std::size_t domain) const;

 private:
  std::size_t index(std::size_t stage, std::size_t domain) const;
  std::size_t domains_;
  std::vector<std::optional<std::size_t>> correct_;
  std::vector<std::optional<std::size_t>> totals_;
};

/// Sample-weighted final-stage accuracy.
Rational average_accuracy(const AccuracyMatrix& m);
/// Unweighted mean of final-stage per-domain accuracies.
Rational avg_task_accuracy(const AccuracyMatrix& m);

struct Forgetting {
  std::vector<Rational> bwt;    // BWT_i for i < T
  Rational raw;                 // mean BWT
  Rational reported;            // -raw
};
/// Absent when T < 2.
std::optional<Forgetting> forgetting(const AccuracyMatrix& m);

/// Mean accuracy over domains 0..j after stage j.
Rational seen_domain_average(const AccuracyMatrix& m, std::size_t stage);

/// Consumes the matrix one stage row at a time and keeps running sums.
class MetricsAccumulator {
 public:
  explicit MetricsAccumulator(std::size_t domains);

  /// Row j must be supplied complete and in order.
  void add_stage(const std::vector<std::size_t>& correct, const std::vector<std::size_t>& totals);
  std::size_t stages() const noexcept { return stage_; }

  Rational average_accuracy() const;
  Rational avg_task_accuracy() const;
  std::optional<Forgetting> forgetting() const;

 private:
  std::size_t domains_;
  std::size_t stage_ = 0;
  std::vector<Rational> diag_;       // a_{i,i}
  std::vector<Rational> bwt_sum_;    // sum_{j>i} (a_{j,i} - a_{i,i})
  std::vector<std::size_t> totals_;
  std::vector<std::size_t> last_correct_;
};

struct MetricsReport {
  double average_accuracy = 0.0;
  double avg_task_accuracy = 0.0;
  std::optional<double> forgetting;      // reported (negated)
  std::optional<double> raw_forgetting;
  std::vector<double> bwt;
  std::optional<double> id_accuracy;     // A_cls
  std::vector<double> seen_average;      // per stage

  std::string to_json() const;
};

MetricsReport make_report(const AccuracyMatrix& m, std::optional<double> id_accuracy = std::nullopt);

/// "stage,domain,accuracy" rows for every populated entry, 1-based indices.
std::string accuracy_csv(const AccuracyMatrix& m);

}  // namespace lava
