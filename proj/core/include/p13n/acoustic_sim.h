// p13n/acoustic_sim.h
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
// Synthetic stand-in for an acoustic encoder. A reference piece sequence is
// pushed through a confusion channel to obtain realized observations, and
// each observation is rendered as a per-frame posterior over blank and the
// word-piece vocab with an explicit unigram prior (the internal LM) composed
// in. Keeping the prior explicit is what makes internal-LM subtraction in
// the decoder exact and testable.

#ifndef P13N_ACOUSTIC_SIM_H_
#define P13N_ACOUSTIC_SIM_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "p13n/tokenizer.h"

namespace p13n {

enum class NoiseProfile { kClean, kOther };
NoiseProfile ParseNoiseProfile(const std::string &label);
const char *NoiseProfileName(NoiseProfile p);
// Off-diagonal confusion mass of each profile.
double ConfusionMass(NoiseProfile p);

using SparseRow = std::vector<std::pair<TokenId, double>>;  // sorted by id

// Unigram distribution over labels 1..V-1 (index 0, blank, holds 0).
class InternalPrior {
 public:
  InternalPrior() = default;
  // Throws ConfigError unless every label has positive mass and the masses
  // sum to 1 within 1e-9.
  explicit InternalPrior(std::vector<double> probs);

  // prior(v) proportional to (count(v) + add_k)^exponent over the pieces of
  // the given tokenized corpus.
  static InternalPrior FromCorpus(const std::vector<std::vector<TokenId>> &sentences,
                                  std::size_t vocab_size, double add_k, double exponent);
  static InternalPrior Uniform(std::size_t vocab_size);

  double operator()(TokenId v) const { return probs_[static_cast<std::size_t>(v)]; }
  const std::vector<double> &probs() const { return probs_; }
  std::size_t vocab_size() const { return probs_.size(); }
  std::uint64_t Hash() const;

  std::string Serialize() const;
  static InternalPrior Parse(const std::string &text);

 private:
  std::vector<double> probs_;
};

// C[r][v]: probability that true piece r is realized as piece v. Blank (row
// and column 0) never takes part. Stored sparsely with a transposed copy.
class ConfusionChannel {
 public:
  ConfusionChannel() = default;
  // rows[r] must sum to 1 within 1e-9 for every r in 1..V-1; ConfigError
  // otherwise.
  ConfusionChannel(std::vector<SparseRow> rows, double blank_rate, NoiseProfile profile);

  // Noise concentrated on edit-distance-1 neighbours of the same piece form
  // (word-initial vs continuation), at most max_neighbors per row, split
  // evenly. Pieces without such neighbours fall back to edit distance 2, and
  // otherwise never get confused.
  static ConfusionChannel Build(const WordPieceModel &wpm, NoiseProfile profile,
                                double blank_rate = 0.2, std::size_t max_neighbors = 4,
                                double mass_override = -1.0);
  static ConfusionChannel Identity(std::size_t vocab_size, double blank_rate = 0.2);

  // Moves extra of row r's mass onto v: C'[r] = (1 - extra) C[r] + extra e_v.
  ConfusionChannel WithBias(const std::vector<std::pair<TokenId, TokenId>> &pairs,
                            double extra) const;

  const SparseRow &Row(TokenId r) const { return rows_[static_cast<std::size_t>(r)]; }
  // Entries (v, C[v][o]) for all v with non-zero likelihood of producing o.
  const SparseRow &Column(TokenId o) const { return columns_[static_cast<std::size_t>(o)]; }
  double At(TokenId r, TokenId v) const;

  std::size_t vocab_size() const { return rows_.size(); }
  double blank_rate() const { return blank_rate_; }
  NoiseProfile profile() const { return profile_; }

 private:
  std::vector<SparseRow> rows_;
  std::vector<SparseRow> columns_;
  double blank_rate_ = 0.2;
  NoiseProfile profile_ = NoiseProfile::kClean;
};

struct RenderConfig {
  double label_blank_leak = 0.02;  // blank mass on label frames
  double blank_label_leak = 0.05;  // label mass on blank frames
};

// One realized frame: a label observation or a blank step.
struct FrameSlot {
  bool is_label = false;
  TokenId observed = kBlankId;
};

using PosteriorFrame = SparseRow;  // index 0 is blank

struct PosteriorLattice {
  std::string utterance_id;
  std::size_t vocab_size = 0;  // frame index space: blank + V-1 labels
  std::vector<PosteriorFrame> frames;
  std::vector<TokenId> truth;
  std::uint64_t prior_hash = 0;
};

// posterior(v) ∝ likelihood(v) * prior(v), normalized over the entries of
// likelihood. Throws ConfigError if the product has no mass.
SparseRow ComposePosterior(const SparseRow &likelihood, const InternalPrior &prior);

// Realizes observations: each reference piece r yields blank frames with
// probability blank_rate each (geometric run), then one label frame whose
// observation is drawn from C[r]; a final geometric run of blanks follows.
std::vector<FrameSlot> Observe(std::span<const TokenId> tokens, const ConfusionChannel &channel,
                               std::uint64_t seed);

// Label frames: (1 - leak) * ComposePosterior(column C[.][o]) + leak on blank.
// Blank frames: blank plus a small copy of the previous label frame.
PosteriorLattice Render(const std::vector<FrameSlot> &slots, const ConfusionChannel &model,
                        const InternalPrior &prior, const RenderConfig &config = {});

// Observe + Render with the same channel. Throws ConfigError when the prior
// has a zero-mass label or does not match the channel's vocab.
PosteriorLattice Emit(std::span<const TokenId> tokens, const ConfusionChannel &channel,
                      const InternalPrior &prior, std::uint64_t seed,
                      const RenderConfig &config = {});

// Inverse of Render for simulator lattices: label frames are those whose
// blank mass is below one half, the observation is the argmax of
// posterior / prior.
std::vector<FrameSlot> RecoverSlots(const PosteriorLattice &lattice, const InternalPrior &prior);

// Re-renders the same observations under another channel.
PosteriorLattice Rerender(const PosteriorLattice &lattice, const ConfusionChannel &model,
                          const InternalPrior &prior, const RenderConfig &config = {});

struct AdaptationPair {
  const PosteriorLattice *lattice;
  std::span<const TokenId> reference;
};

struct AdaptConfig {
  double weight = 0.8;     // interpolation weight toward the estimate
  double pseudo_count = 2.0;  // per-row shrinkage: w_r = weight * n_r / (n_r + pseudo_count)
};

// Re-estimates C[r][.] from (reference piece, recovered observation) pairs
// and interpolates with the base rows. Rows never observed stay as in base.
// Throws DataError for an empty set or a lattice whose label frames do not
// line up with its reference.
ConfusionChannel AdaptChannel(const ConfusionChannel &base, std::span<const AdaptationPair> pairs,
                              const InternalPrior &prior, const AdaptConfig &config = {});

// k folds over n items: disjoint test sets covering [0, n) exactly once,
// sizes within one of each other. Throws SkipUser when n < k.
struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};
std::vector<Fold> KFoldSplit(std::size_t n, std::size_t k, std::uint64_t seed);

std::string SerializeLattices(std::span<const PosteriorLattice> lattices);
std::vector<PosteriorLattice> ParseLattices(const std::string &text);

}  // namespace p13n

#endif  // P13N_ACOUSTIC_SIM_H_
