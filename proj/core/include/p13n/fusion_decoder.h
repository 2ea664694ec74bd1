// p13n/fusion_decoder.h
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

// Time-synchronous beam search over posterior lattices with shallow fusion:
// external LM interpolation, internal-LM subtraction and two smoothing
// temperatures.

#ifndef P13N_FUSION_DECODER_H_
#define P13N_FUSION_DECODER_H_

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "p13n/acoustic_sim.h"
#include "p13n/eval_metrics.h"
#include "p13n/language_model.h"
#include "p13n/tokenizer.h"

namespace p13n {

struct DecoderConfig {
  std::size_t beam_width = 8;
  std::size_t top_k = 4;
  double posterior_temperature = 1.0;
  double ext_weight = 0.0;
  double ilm_weight = 0.0;
  double ilm_temperature = 1.0;

  // Throws ConfigError for zero widths or non-positive temperatures.
  void Validate() const;
};

struct Hypothesis {
  std::vector<TokenId> tokens;
  double total = 0;
  double acoustic = 0;  // sum of log smoothed posteriors, blanks included
  double ext = 0;       // external LM log probability, end of sentence included
  double ilm = 0;       // sum of log smoothed internal prior over labels
};

// p^(1/tau) renormalized over the frame's entries. tau == 1 returns the
// frame unchanged so the no-smoothing path stays bit-exact.
PosteriorFrame SmoothPosterior(const PosteriorFrame &frame, double tau);
// Prior over labels raised to 1/tau and renormalized; index 0 stays 0.
std::vector<double> SmoothPrior(const InternalPrior &prior, double tau);

// Fused score of one expansion. Blank (candidate 0) scores
// log p_asr(blank); a label t scores
//   log p_asr(t) + ext_weight * log P_ext(t | history) - ilm_weight * log p_ilm(t)
// with p_asr the smoothed frame posterior and p_ilm = SmoothPrior. ext may be
// null when ext_weight is 0; prior may be null when ilm_weight is 0.
// Returns -inf for a candidate outside the frame.
double FusionScore(const PosteriorFrame &frame, TokenId candidate, const LanguageModel *ext,
                   std::span<const TokenId> history, const InternalPrior *prior,
                   const DecoderConfig &config);

// Every frame expands each hypothesis by blank and by its top_k labels
// (ranked by fused label score), emitting at most one label per frame.
// Hypotheses with the same tokens merge keeping the best. The beam keeps
// beam_width entries ordered by total descending, ties by tokens ascending.
// The external LM's end-of-sentence term is added after the last frame. The
// returned n-best list follows the same order.
std::vector<Hypothesis> Decode(const PosteriorLattice &lattice, const DecoderConfig &config,
                               const LanguageModel *ext = nullptr,
                               const InternalPrior *prior = nullptr);

// utterance_id, rank, total, acoustic, ext, ilm, text.
std::string NbestTsv(const std::string &utterance_id, const std::vector<Hypothesis> &nbest,
                     const WordPieceModel &wpm);

struct UserDecodeInput {
  std::string user_id;
  std::vector<const PosteriorLattice *> lattices;
  std::vector<Words> references;
  std::shared_ptr<const LanguageModel> lm;  // may be null for no fusion
};

struct UserDecodeResult {
  UserReport report;
  std::vector<UtteranceOutputs> outputs;
};

// Top-1 decode of every utterance; users fan out over the worker pool.
std::vector<UserDecodeResult> DecodeUsers(const std::vector<UserDecodeInput> &users,
                                          const DecoderConfig &config,
                                          const WordPieceModel &wpm, const InternalPrior *prior);

struct SweepCell {
  std::string lm_name;
  DecoderConfig config;
  // Per-user LMs in the same order as the users passed to Sweep; empty means
  // no fusion.
  std::vector<std::shared_ptr<const LanguageModel>> lms;
};

struct SweepCellResult {
  std::string lm_name;
  DecoderConfig config;
  bool ok = false;
  std::string error;
  MacroAverage macro;
  double pooled = 0;
  std::vector<UserReport> users;
};

// Evaluates cells in order. A failing cell records its error and the sweep
// continues.
std::vector<SweepCellResult> Sweep(const std::vector<UserDecodeInput> &users,
                                   const std::vector<SweepCell> &cells,
                                   const WordPieceModel &wpm, const InternalPrior *prior,
                                   const BootstrapConfig &bootstrap = {});

}  // namespace p13n

#endif  // P13N_FUSION_DECODER_H_
