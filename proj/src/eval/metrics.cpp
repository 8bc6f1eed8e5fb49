// SPDX-License-Identifier: Apache-2.0
#include "lava/metrics.hpp"

#include <cstdio>

#include <nlohmann/json.hpp>

#include "lava/error.hpp"

namespace lava {

double to_double(const Rational& r) { return r.convert_to<double>(); }

AccuracyMatrix::AccuracyMatrix(std::size_t domains)
    : domains_(domains), correct_(domains * domains), totals_(domains) {
  if (domains < 1) throw ContractViolation("accuracy matrix needs at least one domain");
}

std::size_t AccuracyMatrix::index(std::size_t stage, std::size_t domain) const {
  if (stage >= domains_ || domain >= domains_) throw ContractViolation("accuracy matrix index out of range");
  if (domain > stage) throw ContractViolation("accuracy matrix is lower-triangular (domain after stage)");
  return stage * domains_ + domain;
}

void AccuracyMatrix::set(std::size_t stage, std::size_t domain, std::size_t correct, std::size_t total) {
  const std::size_t k = index(stage, domain);
  if (total == 0) throw ContractViolation("empty test set for domain " + std::to_string(domain + 1));
  if (correct > total) throw ContractViolation("correct count exceeds test-set size");
  if (totals_[domain] && *totals_[domain] != total) {
    throw ContractViolation("test-set size for domain " + std::to_string(domain + 1) + " changed between stages");
  }
  totals_[domain] = total;
  correct_[k] = correct;
}

bool AccuracyMatrix::has(std::size_t stage, std::size_t domain) const {
  return correct_[index(stage, domain)].has_value();
}

bool AccuracyMatrix::row_complete(std::size_t stage) const {
  for (std::size_t i = 0; i <= stage; ++i)
    if (!has(stage, i)) return false;
  return true;
}

std::size_t AccuracyMatrix::correct(std::size_t stage, std::size_t domain) const {
  const auto& c = correct_[index(stage, domain)];
  if (!c) throw StateError("accuracy entry (" + std::to_string(stage + 1) + ", " + std::to_string(domain + 1) + ") missing");
  return *c;
}

std::size_t AccuracyMatrix::total(std::size_t domain) const {
  if (domain >= domains_ || !totals_[domain]) throw StateError("test-set size unknown for domain " + std::to_string(domain + 1));
  return *totals_[domain];
}

Rational AccuracyMatrix::accuracy(std::size_t stage, std::size_t domain) const {
  return Rational(correct(stage, domain), total(domain));
}

namespace {

void require_final_row(const AccuracyMatrix& m) {
  if (!m.row_complete(m.domains() - 1)) throw StateError("final stage row is incomplete");
}

}  // namespace

Rational average_accuracy(const AccuracyMatrix& m) {
  require_final_row(m);
  const std::size_t T = m.domains();
  boost::multiprecision::cpp_int c = 0, z = 0;
  for (std::size_t i = 0; i < T; ++i) {
    c += m.correct(T - 1, i);
    z += m.total(i);
  }
  return Rational(c, z);
}

Rational avg_task_accuracy(const AccuracyMatrix& m) {
  require_final_row(m);
  const std::size_t T = m.domains();
  Rational s = 0;
  for (std::size_t i = 0; i < T; ++i) s += m.accuracy(T - 1, i);
  return s / T;
}

std::optional<Forgetting> forgetting(const AccuracyMatrix& m) {
  const std::size_t T = m.domains();
  for (std::size_t j = 0; j < T; ++j)
    if (!m.row_complete(j)) throw StateError("accuracy matrix lower triangle is incomplete");
  if (T < 2) return std::nullopt;
  Forgetting f;
  Rational sum = 0;
  for (std::size_t i = 0; i + 1 < T; ++i) {
    Rational b = 0;
    for (std::size_t j = i + 1; j < T; ++j) b += m.accuracy(j, i) - m.accuracy(i, i);
    b /= (T - 1 - i);
    f.bwt.push_back(b);
    sum += b;
  }
  f.raw = sum / (T - 1);
  f.reported = -f.raw;
  return f;
}

Rational seen_domain_average(const AccuracyMatrix& m, std::size_t stage) {
  if (!m.row_complete(stage)) throw StateError("stage row is incomplete");
  Rational s = 0;
  for (std::size_t i = 0; i <= stage; ++i) s += m.accuracy(stage, i);
  return s / (stage + 1);
}

MetricsAccumulator::MetricsAccumulator(std::size_t domains)
    : domains_(domains), bwt_sum_(domains), totals_(domains, 0), last_correct_(domains, 0) {
  if (domains < 1) throw ContractViolation("accumulator needs at least one domain");
}

void MetricsAccumulator::add_stage(const std::vector<std::size_t>& correct, const std::vector<std::size_t>& totals) {
  if (stage_ >= domains_) throw StateError("accumulator already has every stage");
  if (correct.size() != stage_ + 1 || totals.size() != stage_ + 1) throw ContractViolation("stage row has the wrong length");
  for (std::size_t i = 0; i <= stage_; ++i) {
    if (totals[i] == 0 || correct[i] > totals[i]) throw ContractViolation("invalid stage counts");
    if (i < stage_ && totals[i] != totals_[i]) throw ContractViolation("test-set size changed between stages");
    const Rational a(correct[i], totals[i]);
    if (i == stage_) {
      diag_.push_back(a);
      totals_[i] = totals[i];
    } else {
      bwt_sum_[i] += a - diag_[i];
    }
    last_correct_[i] = correct[i];
  }
  ++stage_;
}

Rational MetricsAccumulator::average_accuracy() const {
  if (stage_ != domains_) throw StateError("final stage row is incomplete");
  boost::multiprecision::cpp_int c = 0, z = 0;
  for (std::size_t i = 0; i < domains_; ++i) {
    c += last_correct_[i];
    z += totals_[i];
  }
  return Rational(c, z);
}

Rational MetricsAccumulator::avg_task_accuracy() const {
  if (stage_ != domains_) throw StateError("final stage row is incomplete");
  Rational s = 0;
  for (std::size_t i = 0; i < domains_; ++i) s += Rational(last_correct_[i], totals_[i]);
  return s / domains_;
}

std::optional<Forgetting> MetricsAccumulator::forgetting() const {
  if (stage_ != domains_) throw StateError("accuracy matrix lower triangle is incomplete");
  if (domains_ < 2) return std::nullopt;
  Forgetting f;
  Rational sum = 0;
  for (std::size_t i = 0; i + 1 < domains_; ++i) {
    const Rational b = bwt_sum_[i] / (domains_ - 1 - i);
    f.bwt.push_back(b);
    sum += b;
  }
  f.raw = sum / (domains_ - 1);
  f.reported = -f.raw;
  return f;
}

MetricsReport make_report(const AccuracyMatrix& m, std::optional<double> id_accuracy) {
  MetricsReport r;
  r.average_accuracy = to_double(average_accuracy(m));
  r.avg_task_accuracy = to_double(avg_task_accuracy(m));
  if (auto f = forgetting(m)) {
    r.forgetting = to_double(f->reported);
    r.raw_forgetting = to_double(f->raw);
    for (const auto& b : f->bwt) r.bwt.push_back(to_double(b));
  }
  r.id_accuracy = id_accuracy;
  for (std::size_t j = 0; j < m.domains(); ++j) r.seen_average.push_back(to_double(seen_domain_average(m, j)));
  return r;
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["A_A"] = average_accuracy;
  j["A_T"] = avg_task_accuracy;
  j["F_T"] = forgetting ? nlohmann::ordered_json(*forgetting) : nlohmann::ordered_json(nullptr);
  j["F_raw"] = raw_forgetting ? nlohmann::ordered_json(*raw_forgetting) : nlohmann::ordered_json(nullptr);
  j["BWT"] = bwt;
  j["A_cls"] = id_accuracy ? nlohmann::ordered_json(*id_accuracy) : nlohmann::ordered_json(nullptr);
  j["seen_domain_average"] = seen_average;
  return j.dump(2) + "\n";
}

std::string accuracy_csv(const AccuracyMatrix& m) {
  std::string out = "stage,domain,accuracy\n";
  char buf[64];
  for (std::size_t j = 0; j < m.domains(); ++j) {
    for (std::size_t i = 0; i <= j; ++i) {
      if (!m.has(j, i)) continue;
      std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g\n", j + 1, i + 1, to_double(m.accuracy(j, i)));
      out += buf;
    }
  }
  return out;
}

}  // namespace lava
