#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "hgp/ctr.hpp"
#include "hgp/error.hpp"

namespace hgp {

namespace detail {

inline std::pair<std::size_t, std::size_t> class_counts(std::span<const int> labels) {
  std::size_t pos = 0;
  for (int y : labels) pos += y != 0 ? 1 : 0;
  return {pos, labels.size() - pos};
}

}  // namespace detail

// P(score+ > score-) + 0.5 P(tie), via average ranks (Mann-Whitney U).
inline double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), "roc_auc: length mismatch");
  const auto [pos, neg] = detail::class_counts(labels);
  require(pos > 0 && neg > 0, "roc_auc: both classes must be present", "labels");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // ranks doubled so ties stay integral
  double pos_rank2 = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double rank2 = static_cast<double>(i + 1 + j);  // 2 * average 1-based rank
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] != 0) pos_rank2 += rank2;
    i = j;
  }
  const double p = static_cast<double>(pos);
  const double u = pos_rank2 / 2.0 - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(neg));
}

// Average precision: items ranked by descending score (ties keep input order);
// the mean over positives of the precision at each positive's rank.
inline double pr_auc(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), "pr_auc: length mismatch");
  const auto [pos, neg] = detail::class_counts(labels);
  require(pos > 0, "pr_auc: no positives", "labels");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (labels[order[r]] == 0) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  return sum / static_cast<double>(pos);
}

// F1 with score >= threshold predicted positive; 0 when nothing is predicted
// positive.
inline double f1(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5) {
  require(scores.size() == labels.size(), "f1: length mismatch");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    const bool y = labels[i] != 0;
    tp += pred && y;
    fp += pred && !y;
    fn += !pred && y;
  }
  if (tp + fp == 0 || tp == 0) return 0.0;
  const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return 2.0 * precision * recall / (precision + recall);
}

struct EvalReport {
  double roc_auc = 0.0;
  double pr_auc = 0.0;
  double f1 = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  double threshold = 0.5;
};

inline EvalReport evaluate_scores(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5) {
  EvalReport r;
  r.roc_auc = roc_auc(scores, labels);
  r.pr_auc = pr_auc(scores, labels);
  r.f1 = f1(scores, labels, threshold);
  std::tie(r.positives, r.negatives) = detail::class_counts(labels);
  r.threshold = threshold;
  return r;
}

struct TemporalSplit {
  std::vector<LabeledPair> train;
  std::vector<LabeledPair> validation;
  std::vector<LabeledPair> test;
  Day validation_start = 0;
  Day test_start = 0;
};

inline constexpr std::array<double, 3> kDefaultSplitFractions{11.0 / 17.0, 2.0 / 17.0, 4.0 / 17.0};

// Splits by day: the day span [first, last] is cut at the cumulative fractions
// (rounded to whole days). Each output keeps (day, user, item) order.
inline TemporalSplit temporal_split(std::span<const LabeledPair> pairs,
                                    std::array<double, 3> fractions = kDefaultSplitFractions) {
  for (double f : fractions) require(f > 0.0, "split fractions must be positive", "fractions");
  require(std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) < 1e-9, "split fractions must sum to 1",
          "fractions");
  require(!pairs.empty(), "temporal_split: no pairs");
  std::vector<LabeledPair> sorted(pairs.begin(), pairs.end());
  std::sort(sorted.begin(), sorted.end(), [](const LabeledPair& a, const LabeledPair& b) {
    if (a.day != b.day) return a.day < b.day;
    if (a.user != b.user) return a.user < b.user;
    if (a.item != b.item) return a.item < b.item;
    return a.label < b.label;
  });
  const Day first = sorted.front().day;
  const Day span = sorted.back().day - first + 1;
  TemporalSplit s;
  s.validation_start = first + std::llround(fractions[0] * static_cast<double>(span));
  s.test_start = first + std::llround((fractions[0] + fractions[1]) * static_cast<double>(span));
  for (const auto& p : sorted) {
    if (p.day < s.validation_start)
      s.train.push_back(p);
    else if (p.day < s.test_start)
      s.validation.push_back(p);
    else
      s.test.push_back(p);
  }
  const std::string where = "days [" + std::to_string(first) + "," + std::to_string(first + span - 1) +
                            "], boundaries at " + std::to_string(s.validation_start) + " and " +
                            std::to_string(s.test_start);
  require(!s.train.empty(), "temporal_split: empty training split; " + where, "train");
  require(!s.validation.empty(), "temporal_split: empty validation split; " + where, "validation");
  require(!s.test.empty(), "temporal_split: empty test split; " + where, "test");
  return s;
}

}  // namespace hgp
