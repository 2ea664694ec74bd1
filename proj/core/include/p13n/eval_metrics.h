// p13n/eval_metrics.h
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Copyright 2026 The p13n-fusion Authors.
//
// Word error rate, per-user aggregation, bootstrap confidence intervals,
// histograms and win/loss diffs between two systems.

#ifndef P13N_EVAL_METRICS_H_
#define P13N_EVAL_METRICS_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace p13n {

using Words = std::vector<std::string>;

struct WerBreakdown {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t reference_words = 0;

  std::size_t errors() const { return substitutions + deletions + insertions; }
  double wer() const {
    return static_cast<double>(errors()) / static_cast<double>(reference_words);
  }
};

enum class EditOp { kMatch, kSubstitution, kDeletion, kInsertion };

struct AlignedPair {
  EditOp op;
  int ref_index;  // -1 for insertions
  int hyp_index;  // -1 for deletions
};

// Minimal unit-cost alignment. On ties the backtrace prefers substitution,
// then deletion, then insertion. Throws DataError for an empty reference.
std::vector<AlignedPair> Align(const Words &reference, const Words &hypothesis);
WerBreakdown Wer(const Words &reference, const Words &hypothesis);

struct UserReport {
  std::string user_id;
  std::vector<WerBreakdown> utterances;

  std::size_t errors() const;
  std::size_t reference_words() const;
  // Errors pooled over the user's utterances.
  double wer() const;
};

struct BootstrapConfig {
  std::size_t resamples = 10000;
  double level = 0.95;
  std::uint64_t seed = 20220101;
};

struct ConfidenceInterval {
  double lower = 0;
  double upper = 0;
  double level = 0.95;
  std::size_t resamples = 10000;
  std::uint64_t seed = 0;
};

struct MacroAverage {
  double mean = 0;
  ConfidenceInterval ci;
};

// Percentile bootstrap of the mean. Resample b draws values[Rng::Below(n)]
// n times from one generator seeded with config.seed; the bounds are the
// linearly interpolated (1-level)/2 and 1-(1-level)/2 quantiles (position
// q*(B-1) in the sorted resample means). A constant sample returns [c, c].
// Bounds are widened to contain the mean if sampling noise puts it outside.
MacroAverage BootstrapMean(const std::vector<double> &values, const BootstrapConfig &config = {});

// Unweighted mean of per-user pooled WERs with its bootstrap interval.
MacroAverage MacroAverageWer(const std::vector<UserReport> &users,
                             const BootstrapConfig &config = {});
// Total errors over total reference words across all users.
double PooledWer(const std::vector<UserReport> &users);

struct HistogramBin {
  double left = 0;
  double right = 0;
  std::size_t count = 0;
};

// Left-closed bins [k*w, (k+1)*w) aligned at zero, spanning the lowest to
// the highest occupied bin (interior empty bins included).
std::vector<HistogramBin> Histogram(const std::vector<double> &values, double bin_width);
std::string HistogramCsv(const std::vector<HistogramBin> &bins);
std::vector<HistogramBin> ParseHistogramCsv(const std::string &csv);

struct UtteranceOutputs {
  std::string utterance_id;
  Words reference;
  Words hypothesis;
};

struct WinLossRecord {
  std::string utterance_id;
  char label;  // 'W': system b fixed a span system a got wrong; 'L': the reverse
  Words reference_span;
  Words span_a;
  Words span_b;
  std::map<std::string, std::size_t> counts;  // occurrences in the user's text
};

// For each utterance, walks the reference and marks each word correct or not
// under each system (an insertion marks the following reference word, or the
// last one at the end). Maximal runs where exactly one system errs, with the
// same winner throughout, become records. Throws DataError when the two
// output sets do not hold the same utterance ids in the same order.
std::vector<WinLossRecord> WinLossDiff(const std::vector<UtteranceOutputs> &system_a,
                                       const std::vector<UtteranceOutputs> &system_b,
                                       const std::vector<std::string> &user_lm_sentences);
std::string WinLossTsv(const std::string &user_id, const std::vector<WinLossRecord> &records);

}  // namespace p13n

#endif  // P13N_EVAL_METRICS_H_
