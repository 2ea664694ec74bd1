// p13n/eval_metrics.cc
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

#include "p13n/eval_metrics.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_map>

#include "p13n/errors.h"
#include "p13n/util.h"

namespace p13n {

std::vector<AlignedPair> Align(const Words &reference, const Words &hypothesis) {
  if (reference.empty()) throw DataError("WER needs a non-empty reference");
  const std::size_t n = reference.size(), m = hypothesis.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t & { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = at(i - 1, j - 1) + (reference[i - 1] == hypothesis[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  std::vector<AlignedPair> path;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = reference[i - 1] == hypothesis[j - 1];
      if (at(i - 1, j - 1) + (same ? 0 : 1) == at(i, j)) {
        path.push_back({same ? EditOp::kMatch : EditOp::kSubstitution, static_cast<int>(i - 1),
                        static_cast<int>(j - 1)});
        --i, --j;
        continue;
      }
    }
    if (i > 0 && at(i - 1, j) + 1 == at(i, j)) {
      path.push_back({EditOp::kDeletion, static_cast<int>(i - 1), -1});
      --i;
      continue;
    }
    path.push_back({EditOp::kInsertion, -1, static_cast<int>(j - 1)});
    --j;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

WerBreakdown Wer(const Words &reference, const Words &hypothesis) {
  WerBreakdown w;
  w.reference_words = reference.size();
  for (const auto &p : Align(reference, hypothesis)) {
    switch (p.op) {
      case EditOp::kSubstitution: ++w.substitutions; break;
      case EditOp::kDeletion: ++w.deletions; break;
      case EditOp::kInsertion: ++w.insertions; break;
      case EditOp::kMatch: break;
    }
  }
  return w;
}

std::size_t UserReport::errors() const {
  std::size_t e = 0;
  for (const auto &u : utterances) e += u.errors();
  return e;
}

std::size_t UserReport::reference_words() const {
  std::size_t n = 0;
  for (const auto &u : utterances) n += u.reference_words;
  return n;
}

double UserReport::wer() const {
  const std::size_t n = reference_words();
  if (n == 0) throw DataError("user " + user_id + " has no reference words");
  return static_cast<double>(errors()) / static_cast<double>(n);
}

namespace {

double Quantile(const std::vector<double> &sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

MacroAverage BootstrapMean(const std::vector<double> &values, const BootstrapConfig &config) {
  if (values.empty()) throw DataError("bootstrap needs at least one value");
  if (config.resamples == 0) throw ConfigError("bootstrap needs at least one resample");
  if (!(config.level > 0 && config.level < 1)) throw ConfigError("CI level must be in (0, 1)");
  MacroAverage out;
  out.ci.level = config.level;
  out.ci.resamples = config.resamples;
  out.ci.seed = config.seed;
  const std::size_t n = values.size();
  if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values[0]; })) {
    out.mean = out.ci.lower = out.ci.upper = values[0];
    return out;
  }
  double sum = 0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(n);

  Rng rng(config.seed);
  std::vector<double> means(config.resamples);
  for (auto &mean : means) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += values[rng.Below(n)];
    mean = s / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  const double tail = (1.0 - config.level) / 2.0;
  out.ci.lower = std::min(Quantile(means, tail), out.mean);
  out.ci.upper = std::max(Quantile(means, 1.0 - tail), out.mean);
  return out;
}

MacroAverage MacroAverageWer(const std::vector<UserReport> &users, const BootstrapConfig &config) {
  std::vector<double> wers;
  wers.reserve(users.size());
  for (const auto &u : users) wers.push_back(u.wer());
  return BootstrapMean(wers, config);
}

double PooledWer(const std::vector<UserReport> &users) {
  if (users.empty()) throw DataError("pooled WER needs at least one user");
  std::size_t errors = 0, words = 0;
  for (const auto &u : users) {
    errors += u.errors();
    words += u.reference_words();
  }
  return static_cast<double>(errors) / static_cast<double>(words);
}

std::vector<HistogramBin> Histogram(const std::vector<double> &values, double bin_width) {
  if (!(bin_width > 0)) throw ConfigError("histogram bin width must be positive");
  if (values.empty()) return {};
  std::vector<long long> index;
  index.reserve(values.size());
  for (double v : values) index.push_back(static_cast<long long>(std::floor(v / bin_width)));
  const long long lo = *std::min_element(index.begin(), index.end());
  const long long hi = *std::max_element(index.begin(), index.end());
  std::vector<HistogramBin> bins;
  for (long long k = lo; k <= hi; ++k)
    bins.push_back({static_cast<double>(k) * bin_width, static_cast<double>(k + 1) * bin_width, 0});
  for (long long k : index) ++bins[static_cast<std::size_t>(k - lo)].count;
  return bins;
}

std::string HistogramCsv(const std::vector<HistogramBin> &bins) {
  std::ostringstream os;
  os << "bin_left,bin_right,count\n";
  for (const auto &b : bins) os << ExactDouble(b.left) << ',' << ExactDouble(b.right) << ',' << b.count << '\n';
  return os.str();
}

std::vector<HistogramBin> ParseHistogramCsv(const std::string &csv) {
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  if (Trim(line) != "bin_left,bin_right,count") throw DataError("not a histogram CSV");
  std::vector<HistogramBin> bins;
  while (std::getline(in, line)) {
    if (Trim(line).empty()) continue;
    auto cols = SplitChar(line, ',');
    if (cols.size() != 3) throw DataError("histogram row needs 3 columns");
    bins.push_back({std::stod(cols[0]), std::stod(cols[1]), std::stoul(cols[2])});
  }
  return bins;
}

namespace {

struct WordStatus {
  std::vector<bool> correct;
  std::vector<Words> attached;  // hypothesis words accounted to each reference word
};

WordStatus StatusOf(const Words &ref, const Words &hyp) {
  WordStatus s;
  s.correct.assign(ref.size(), true);
  s.attached.assign(ref.size(), {});
  std::vector<std::string> pending;  // insertions waiting for the next reference word
  for (const auto &p : Align(ref, hyp)) {
    if (p.op == EditOp::kInsertion) {
      pending.push_back(hyp[static_cast<std::size_t>(p.hyp_index)]);
      continue;
    }
    const auto r = static_cast<std::size_t>(p.ref_index);
    if (!pending.empty()) {
      s.correct[r] = false;
      s.attached[r] = std::move(pending);
      pending.clear();
    }
    if (p.op != EditOp::kMatch) s.correct[r] = false;
    if (p.hyp_index >= 0) s.attached[r].push_back(hyp[static_cast<std::size_t>(p.hyp_index)]);
  }
  if (!pending.empty()) {
    s.correct.back() = false;
    for (auto &w : pending) s.attached.back().push_back(std::move(w));
  }
  return s;
}

}  // namespace

std::vector<WinLossRecord> WinLossDiff(const std::vector<UtteranceOutputs> &system_a,
                                       const std::vector<UtteranceOutputs> &system_b,
                                       const std::vector<std::string> &user_lm_sentences) {
  if (system_a.size() != system_b.size())
    throw DataError("win/loss diff needs the same utterances from both systems");
  std::unordered_map<std::string, std::size_t> lm_counts;
  for (const auto &s : user_lm_sentences)
    for (const auto &w : SplitWhitespace(s)) ++lm_counts[w];
  auto count_of = [&](const std::string &w) {
    auto it = lm_counts.find(w);
    return it == lm_counts.end() ? std::size_t{0} : it->second;
  };

  std::vector<WinLossRecord> records;
  for (std::size_t u = 0; u < system_a.size(); ++u) {
    const auto &a = system_a[u];
    const auto &b = system_b[u];
    if (a.utterance_id != b.utterance_id)
      throw DataError("utterance id mismatch: '" + a.utterance_id + "' vs '" + b.utterance_id + "'");
    if (a.reference != b.reference)
      throw DataError("utterance '" + a.utterance_id + "' has different references");
    const WordStatus sa = StatusOf(a.reference, a.hypothesis);
    const WordStatus sb = StatusOf(b.reference, b.hypothesis);
    std::size_t i = 0;
    const std::size_t n = a.reference.size();
    while (i < n) {
      if (sa.correct[i] == sb.correct[i]) {
        ++i;
        continue;
      }
      const bool b_wins = sb.correct[i];
      WinLossRecord rec;
      rec.utterance_id = a.utterance_id;
      rec.label = b_wins ? 'W' : 'L';
      while (i < n && sa.correct[i] != sb.correct[i] && sb.correct[i] == b_wins) {
        rec.reference_span.push_back(a.reference[i]);
        rec.span_a.insert(rec.span_a.end(), sa.attached[i].begin(), sa.attached[i].end());
        rec.span_b.insert(rec.span_b.end(), sb.attached[i].begin(), sb.attached[i].end());
        ++i;
      }
      std::set<std::string> involved(rec.reference_span.begin(), rec.reference_span.end());
      involved.insert(rec.span_a.begin(), rec.span_a.end());
      involved.insert(rec.span_b.begin(), rec.span_b.end());
      for (const auto &w : involved) rec.counts[w] = count_of(w);
      records.push_back(std::move(rec));
    }
  }
  return records;
}

std::string WinLossTsv(const std::string &user_id, const std::vector<WinLossRecord> &records) {
  std::ostringstream os;
  for (const auto &r : records) {
    os << user_id << '\t' << r.utterance_id << '\t' << r.label << '\t' << Join(r.reference_span, " ")
       << '\t' << Join(r.span_a, " ") << '\t' << Join(r.span_b, " ") << '\t';
    bool first = true;
    for (const auto &[w, c] : r.counts) {
      os << (first ? "" : " ") << w << ':' << c;
      first = false;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace p13n
