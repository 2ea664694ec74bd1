// p13n/acoustic_sim.cc
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

#include "p13n/acoustic_sim.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "p13n/errors.h"
#include "p13n/util.h"

namespace p13n {

namespace {

constexpr double kRowTolerance = 1e-9;

std::size_t EditDistance(const std::vector<char32_t> &a, const std::vector<char32_t> &b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

void AddScaled(const SparseRow &src, double scale, std::map<TokenId, double> *acc) {
  for (auto [v, p] : src) (*acc)[v] += scale * p;
}

SparseRow ToRow(const std::map<TokenId, double> &acc) {
  SparseRow row;
  row.reserve(acc.size());
  for (auto [v, p] : acc)
    if (p > 0) row.emplace_back(v, p);
  return row;
}

double BlankMass(const PosteriorFrame &frame) {
  return !frame.empty() && frame.front().first == kBlankId ? frame.front().second : 0.0;
}

}  // namespace

NoiseProfile ParseNoiseProfile(const std::string &label) {
  if (label == "clean") return NoiseProfile::kClean;
  if (label == "other") return NoiseProfile::kOther;
  throw ConfigError("noise profile must be 'clean' or 'other', got '" + label + "'");
}

const char *NoiseProfileName(NoiseProfile p) {
  return p == NoiseProfile::kClean ? "clean" : "other";
}

double ConfusionMass(NoiseProfile p) { return p == NoiseProfile::kClean ? 0.10 : 0.25; }

InternalPrior::InternalPrior(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.size() < 2) throw ConfigError("prior needs at least one label");
  if (probs_[0] != 0.0) throw ConfigError("prior must not assign mass to blank");
  double total = 0;
  for (std::size_t v = 1; v < probs_.size(); ++v) {
    if (!(probs_[v] > 0.0))
      throw ConfigError("prior has zero mass on label " + std::to_string(v));
    total += probs_[v];
  }
  if (std::abs(total - 1.0) > kRowTolerance) throw ConfigError("prior is not normalized");
}

InternalPrior InternalPrior::FromCorpus(const std::vector<std::vector<TokenId>> &sentences,
                                        std::size_t vocab_size, double add_k, double exponent) {
  if (!(add_k > 0)) throw ConfigError("prior smoothing constant must be positive");
  std::vector<double> counts(vocab_size, 0.0);
  for (const auto &s : sentences)
    for (TokenId t : s)
      if (t > 0 && static_cast<std::size_t>(t) < vocab_size) counts[static_cast<std::size_t>(t)] += 1;
  std::vector<double> probs(vocab_size, 0.0);
  double total = 0;
  for (std::size_t v = 1; v < vocab_size; ++v) {
    probs[v] = std::pow(counts[v] + add_k, exponent);
    total += probs[v];
  }
  for (std::size_t v = 1; v < vocab_size; ++v) probs[v] /= total;
  return InternalPrior(std::move(probs));
}

InternalPrior InternalPrior::Uniform(std::size_t vocab_size) {
  std::vector<double> probs(vocab_size, 1.0 / static_cast<double>(vocab_size - 1));
  probs[0] = 0.0;
  return InternalPrior(std::move(probs));
}

std::uint64_t InternalPrior::Hash() const { return Fnv1a64(Serialize()); }

std::string InternalPrior::Serialize() const {
  std::ostringstream os;
  os << "#p13n-prior\t" << probs_.size() << '\n';
  for (std::size_t v = 1; v < probs_.size(); ++v) os << v << '\t' << ExactDouble(probs_[v]) << '\n';
  return os.str();
}

InternalPrior InternalPrior::Parse(const std::string &text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty prior file");
  auto head = SplitChar(line, '\t');
  if (head.size() != 2 || head[0] != "#p13n-prior") throw DataError("not a prior file");
  std::vector<double> probs;
  try {
    probs.assign(std::stoul(head[1]), 0.0);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto cols = SplitChar(line, '\t');
      if (cols.size() != 2) throw DataError("prior line needs 2 columns");
      const std::size_t v = std::stoul(cols[0]);
      if (v == 0 || v >= probs.size()) throw DataError("prior id out of range");
      probs[v] = std::stod(cols[1]);
    }
  } catch (const std::logic_error &e) {
    throw DataError(std::string("prior file: ") + e.what());
  }
  return InternalPrior(std::move(probs));
}

ConfusionChannel::ConfusionChannel(std::vector<SparseRow> rows, double blank_rate,
                                   NoiseProfile profile)
    : rows_(std::move(rows)), blank_rate_(blank_rate), profile_(profile) {
  if (!(blank_rate_ >= 0.0 && blank_rate_ < 1.0)) throw ConfigError("blank rate must be in [0, 1)");
  const std::size_t V = rows_.size();
  columns_.assign(V, {});
  for (std::size_t r = 1; r < V; ++r) {
    auto &row = rows_[r];
    std::sort(row.begin(), row.end());
    double sum = 0;
    for (auto [v, p] : row) {
      if (v <= 0 || static_cast<std::size_t>(v) >= V)
        throw ConfigError("confusion entry outside vocab in row " + std::to_string(r));
      if (p < 0) throw ConfigError("negative confusion entry in row " + std::to_string(r));
      sum += p;
      columns_[static_cast<std::size_t>(v)].emplace_back(static_cast<TokenId>(r), p);
    }
    if (std::abs(sum - 1.0) > kRowTolerance)
      throw ConfigError("confusion row " + std::to_string(r) + " sums to " + ExactDouble(sum));
  }
}

ConfusionChannel ConfusionChannel::Build(const WordPieceModel &wpm, NoiseProfile profile,
                                         double blank_rate, std::size_t max_neighbors,
                                         double mass_override) {
  const double mass = mass_override >= 0 ? mass_override : ConfusionMass(profile);
  if (!(mass >= 0 && mass < 1)) throw ConfigError("confusion mass must be in [0, 1)");
  const std::size_t V = wpm.size();
  std::vector<std::vector<char32_t>> bodies(V);
  std::vector<int> form(V, -1);  // 0 initial, 1 continuation, -1 reserved
  for (std::size_t v = 2; v < V; ++v) {
    const std::string &p = wpm.piece(static_cast<TokenId>(v));
    const bool cont = wpm.IsContinuation(static_cast<TokenId>(v));
    form[v] = cont ? 1 : 0;
    bodies[v] = ToCodePoints(cont ? std::string_view(p).substr(kContinuation.size()) : p);
  }
  std::vector<SparseRow> rows(V);
  rows[kUnkId] = {{kUnkId, 1.0}};
  for (std::size_t r = 2; r < V; ++r) {
    // (distance, length gap, id)
    std::vector<std::tuple<std::size_t, std::size_t, TokenId>> cands;
    for (std::size_t v = 2; v < V; ++v) {
      if (v == r || form[v] != form[r]) continue;
      const std::size_t gap = bodies[r].size() > bodies[v].size() ? bodies[r].size() - bodies[v].size()
                                                                 : bodies[v].size() - bodies[r].size();
      if (gap > 2) continue;
      const std::size_t d = EditDistance(bodies[r], bodies[v]);
      if (d <= 2) cands.emplace_back(d, gap, static_cast<TokenId>(v));
    }
    std::sort(cands.begin(), cands.end());
    if (!cands.empty()) {
      const std::size_t best = std::get<0>(cands.front());
      std::erase_if(cands, [&](const auto &c) { return std::get<0>(c) != best; });
    }
    if (cands.size() > max_neighbors) cands.resize(max_neighbors);
    SparseRow row;
    if (cands.empty() || mass == 0.0) {
      row.emplace_back(static_cast<TokenId>(r), 1.0);
    } else {
      row.emplace_back(static_cast<TokenId>(r), 1.0 - mass);
      const double share = mass / static_cast<double>(cands.size());
      for (const auto &c : cands) row.emplace_back(std::get<2>(c), share);
    }
    rows[r] = std::move(row);
  }
  return ConfusionChannel(std::move(rows), blank_rate, profile);
}

ConfusionChannel ConfusionChannel::Identity(std::size_t vocab_size, double blank_rate) {
  std::vector<SparseRow> rows(vocab_size);
  for (std::size_t r = 1; r < vocab_size; ++r) rows[r] = {{static_cast<TokenId>(r), 1.0}};
  return ConfusionChannel(std::move(rows), blank_rate, NoiseProfile::kClean);
}

ConfusionChannel ConfusionChannel::WithBias(const std::vector<std::pair<TokenId, TokenId>> &pairs,
                                            double extra) const {
  if (!(extra >= 0 && extra <= 1)) throw ConfigError("bias mass must be in [0, 1]");
  std::vector<SparseRow> rows = rows_;
  for (auto [r, v] : pairs) {
    std::map<TokenId, double> acc;
    AddScaled(rows[static_cast<std::size_t>(r)], 1.0 - extra, &acc);
    acc[v] += extra;
    rows[static_cast<std::size_t>(r)] = ToRow(acc);
  }
  return ConfusionChannel(std::move(rows), blank_rate_, profile_);
}

double ConfusionChannel::At(TokenId r, TokenId v) const {
  const auto &row = Row(r);
  auto it = std::lower_bound(row.begin(), row.end(), std::make_pair(v, -1.0));
  return it != row.end() && it->first == v ? it->second : 0.0;
}

SparseRow ComposePosterior(const SparseRow &likelihood, const InternalPrior &prior) {
  SparseRow out;
  out.reserve(likelihood.size());
  double total = 0;
  for (auto [v, l] : likelihood) {
    const double p = l * prior(v);
    if (p > 0) {
      out.emplace_back(v, p);
      total += p;
    }
  }
  if (!(total > 0)) throw ConfigError("posterior has no mass");
  for (auto &e : out) e.second /= total;
  return out;
}

std::vector<FrameSlot> Observe(std::span<const TokenId> tokens, const ConfusionChannel &channel,
                               std::uint64_t seed) {
  Rng rng(seed);
  std::vector<FrameSlot> slots;
  std::vector<double> weights;
  auto blanks = [&] {
    while (rng.Uniform() < channel.blank_rate()) slots.push_back({false, kBlankId});
  };
  for (TokenId r : tokens) {
    if (r <= 0 || static_cast<std::size_t>(r) >= channel.vocab_size())
      throw RangeError("reference token " + std::to_string(r) + " outside channel vocab");
    blanks();
    const auto &row = channel.Row(r);
    weights.clear();
    for (auto [v, p] : row) weights.push_back(p);
    slots.push_back({true, row[rng.Categorical(weights)].first});
  }
  blanks();
  return slots;
}

PosteriorLattice Render(const std::vector<FrameSlot> &slots, const ConfusionChannel &model,
                        const InternalPrior &prior, const RenderConfig &config) {
  if (prior.vocab_size() != model.vocab_size())
    throw ConfigError("prior and channel vocab sizes differ");
  PosteriorLattice lat;
  lat.vocab_size = model.vocab_size();
  lat.prior_hash = prior.Hash();
  lat.frames.reserve(slots.size());
  SparseRow last_label;
  for (const auto &slot : slots) {
    PosteriorFrame frame;
    if (slot.is_label) {
      SparseRow post = ComposePosterior(model.Column(slot.observed), prior);
      frame.emplace_back(kBlankId, config.label_blank_leak);
      for (auto [v, p] : post) frame.emplace_back(v, (1.0 - config.label_blank_leak) * p);
      last_label = std::move(post);
    } else if (last_label.empty() || config.blank_label_leak == 0.0) {
      frame.emplace_back(kBlankId, 1.0);
    } else {
      frame.emplace_back(kBlankId, 1.0 - config.blank_label_leak);
      for (auto [v, p] : last_label) frame.emplace_back(v, config.blank_label_leak * p);
    }
    lat.frames.push_back(std::move(frame));
  }
  return lat;
}

PosteriorLattice Emit(std::span<const TokenId> tokens, const ConfusionChannel &channel,
                      const InternalPrior &prior, std::uint64_t seed, const RenderConfig &config) {
  PosteriorLattice lat = Render(Observe(tokens, channel, seed), channel, prior, config);
  lat.truth.assign(tokens.begin(), tokens.end());
  return lat;
}

std::vector<FrameSlot> RecoverSlots(const PosteriorLattice &lattice, const InternalPrior &prior) {
  std::vector<FrameSlot> slots;
  slots.reserve(lattice.frames.size());
  for (const auto &frame : lattice.frames) {
    if (BlankMass(frame) >= 0.5) {
      slots.push_back({false, kBlankId});
      continue;
    }
    TokenId best = kBlankId;
    double best_ratio = -1;
    for (auto [v, p] : frame) {
      if (v == kBlankId) continue;
      const double ratio = p / prior(v);
      if (ratio > best_ratio) {
        best_ratio = ratio;
        best = v;
      }
    }
    slots.push_back({true, best});
  }
  return slots;
}

PosteriorLattice Rerender(const PosteriorLattice &lattice, const ConfusionChannel &model,
                          const InternalPrior &prior, const RenderConfig &config) {
  PosteriorLattice out = Render(RecoverSlots(lattice, prior), model, prior, config);
  out.utterance_id = lattice.utterance_id;
  out.truth = lattice.truth;
  return out;
}

ConfusionChannel AdaptChannel(const ConfusionChannel &base, std::span<const AdaptationPair> pairs,
                              const InternalPrior &prior, const AdaptConfig &config) {
  if (pairs.empty()) throw DataError("channel adaptation needs at least one utterance");
  if (!(config.weight >= 0 && config.weight <= 1))
    throw ConfigError("adaptation weight must be in [0, 1]");
  std::map<TokenId, std::map<TokenId, double>> counts;
  for (const auto &pair : pairs) {
    std::vector<FrameSlot> slots = RecoverSlots(*pair.lattice, prior);
    std::size_t k = 0;
    for (const auto &s : slots) {
      if (!s.is_label) continue;
      if (k >= pair.reference.size()) break;
      counts[pair.reference[k]][s.observed] += 1;
      ++k;
    }
    const auto labels = static_cast<std::size_t>(
        std::count_if(slots.begin(), slots.end(), [](const FrameSlot &s) { return s.is_label; }));
    if (labels != pair.reference.size())
      throw DataError("lattice '" + pair.lattice->utterance_id + "' has " +
                      std::to_string(labels) + " label frames for " +
                      std::to_string(pair.reference.size()) + " reference pieces");
  }
  std::vector<SparseRow> rows(base.vocab_size());
  for (std::size_t r = 1; r < rows.size(); ++r) rows[r] = base.Row(static_cast<TokenId>(r));
  if (config.weight > 0) {
    for (const auto &[r, obs] : counts) {
      double n = 0;
      for (const auto &[o, c] : obs) n += c;
      const double w = config.weight * n / (n + config.pseudo_count);
      std::map<TokenId, double> acc;
      AddScaled(rows[static_cast<std::size_t>(r)], 1.0 - w, &acc);
      for (const auto &[o, c] : obs) acc[o] += w * c / n;
      rows[static_cast<std::size_t>(r)] = ToRow(acc);
    }
  }
  return ConfusionChannel(std::move(rows), base.blank_rate(), base.profile());
}

std::vector<Fold> KFoldSplit(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("k-fold split needs k >= 2");
  if (n < k) throw SkipUser("only " + std::to_string(n) + " items for " + std::to_string(k) + " folds");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.Shuffle(&order);
  std::vector<Fold> folds(k);
  for (std::size_t i = 0; i < n; ++i) folds[i % k].test.push_back(order[i]);
  for (std::size_t f = 0; f < k; ++f) {
    std::sort(folds[f].test.begin(), folds[f].test.end());
    for (std::size_t g = 0; g < k; ++g)
      if (g != f) folds[f].train.insert(folds[f].train.end(), folds[g].test.begin(), folds[g].test.end());
  }
  for (auto &f : folds) std::sort(f.train.begin(), f.train.end());
  return folds;
}

std::string SerializeLattices(std::span<const PosteriorLattice> lattices) {
  std::ostringstream os;
  os << "#p13n-lattices\t" << lattices.size() << '\n';
  for (const auto &lat : lattices) {
    os << "utterance\t" << lat.utterance_id << '\n';
    os << "vocab_size\t" << lat.vocab_size << '\n';
    os << "prior_hash\t" << HexDigest(lat.prior_hash) << '\n';
    os << "truth\t";
    for (std::size_t i = 0; i < lat.truth.size(); ++i) os << (i ? " " : "") << lat.truth[i];
    os << '\n';
    os << "frames\t" << lat.frames.size() << '\n';
    for (const auto &frame : lat.frames) {
      for (std::size_t i = 0; i < frame.size(); ++i)
        os << (i ? " " : "") << frame[i].first << ':' << ExactDouble(frame[i].second);
      os << '\n';
    }
  }
  return os.str();
}

std::vector<PosteriorLattice> ParseLattices(const std::string &text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto next = [&](const char *key) -> std::string {
    if (!std::getline(in, line)) throw DataError(std::string("lattice file truncated before ") + key);
    ++line_no;
    auto cols = SplitChar(line, '\t');
    if (cols.size() != 2 || cols[0] != key)
      throw DataError("lattice line " + std::to_string(line_no) + ": expected '" + key + "'");
    return cols[1];
  };
  if (!std::getline(in, line)) throw DataError("empty lattice file");
  ++line_no;
  auto head = SplitChar(line, '\t');
  if (head.size() != 2 || head[0] != "#p13n-lattices") throw DataError("not a lattice file");
  std::vector<PosteriorLattice> out;
  try {
    const std::size_t count = std::stoul(head[1]);
    for (std::size_t i = 0; i < count; ++i) {
      PosteriorLattice lat;
      lat.utterance_id = next("utterance");
      lat.vocab_size = std::stoul(next("vocab_size"));
      lat.prior_hash = std::stoull(next("prior_hash"), nullptr, 16);
      for (const auto &t : SplitWhitespace(next("truth"))) lat.truth.push_back(std::stoi(t));
      const std::size_t frames = std::stoul(next("frames"));
      for (std::size_t f = 0; f < frames; ++f) {
        if (!std::getline(in, line)) throw DataError("lattice file truncated in frames");
        ++line_no;
        PosteriorFrame frame;
        double total = 0;
        for (const auto &entry : SplitWhitespace(line)) {
          auto colon = entry.find(':');
          if (colon == std::string::npos) throw DataError("frame entry lacks ':'");
          const TokenId v = std::stoi(entry.substr(0, colon));
          if (v < 0 || static_cast<std::size_t>(v) >= lat.vocab_size)
            throw DataError("frame index out of range");
          frame.emplace_back(v, std::stod(entry.substr(colon + 1)));
          total += frame.back().second;
        }
        std::sort(frame.begin(), frame.end());
        if (std::abs(total - 1.0) > 1e-6)
          throw DataError("frame " + std::to_string(f) + " of '" + lat.utterance_id + "' sums to " +
                          ExactDouble(total));
        lat.frames.push_back(std::move(frame));
      }
      out.push_back(std::move(lat));
    }
  } catch (const std::logic_error &e) {
    throw DataError("lattice line " + std::to_string(line_no) + ": " + e.what());
  }
  return out;
}

}  // namespace p13n
