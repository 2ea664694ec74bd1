// p13n/fusion_decoder.cc
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

#include "p13n/fusion_decoder.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "p13n/errors.h"
#include "p13n/util.h"

namespace p13n {

void DecoderConfig::Validate() const {
  if (beam_width == 0) throw ConfigError("beam_width must be at least 1");
  if (top_k == 0) throw ConfigError("top_k must be at least 1");
  if (!(posterior_temperature > 0)) throw ConfigError("posterior temperature must be positive");
  if (!(ilm_temperature > 0)) throw ConfigError("internal LM temperature must be positive");
  if (!(ext_weight >= 0)) throw ConfigError("external LM weight must be non-negative");
  if (!(ilm_weight >= 0)) throw ConfigError("internal LM weight must be non-negative");
}

PosteriorFrame SmoothPosterior(const PosteriorFrame &frame, double tau) {
  if (tau == 1.0) return frame;
  PosteriorFrame out;
  out.reserve(frame.size());
  double z = 0;
  for (const auto &[id, p] : frame) {
    const double q = p > 0 ? std::pow(p, 1.0 / tau) : 0.0;
    out.emplace_back(id, q);
    z += q;
  }
  if (!(z > 0)) throw DataError("posterior frame has no mass");
  for (auto &e : out) e.second /= z;
  return out;
}

std::vector<double> SmoothPrior(const InternalPrior &prior, double tau) {
  std::vector<double> out(prior.vocab_size(), 0.0);
  double z = 0;
  for (std::size_t v = 1; v < out.size(); ++v) {
    out[v] = tau == 1.0 ? prior.probs()[v] : std::pow(prior.probs()[v], 1.0 / tau);
    z += out[v];
  }
  for (std::size_t v = 1; v < out.size(); ++v) out[v] /= z;
  return out;
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void CheckInputs(const DecoderConfig &config, const LanguageModel *ext,
                 const InternalPrior *prior) {
  config.Validate();
  if (config.ext_weight > 0 && ext == nullptr)
    throw ConfigError("external LM weight set without an external LM");
  if (config.ilm_weight > 0 && prior == nullptr)
    throw ConfigError("internal LM weight set without an internal prior");
}

// Frame entries as log probabilities; zero-mass entries dropped.
struct LogFrame {
  double blank = kNegInf;
  std::vector<std::pair<TokenId, double>> labels;
};

LogFrame ToLog(const PosteriorFrame &frame, double tau) {
  LogFrame out;
  for (const auto &[id, p] : SmoothPosterior(frame, tau)) {
    if (!(p > 0)) continue;
    if (id == kBlankId)
      out.blank = std::log(p);
    else
      out.labels.emplace_back(id, std::log(p));
  }
  return out;
}

double Total(const Hypothesis &h, const DecoderConfig &c) {
  return h.acoustic + c.ext_weight * h.ext - c.ilm_weight * h.ilm;
}

bool Better(const Hypothesis &a, const Hypothesis &b) {
  if (a.total != b.total) return a.total > b.total;
  return a.tokens < b.tokens;
}

}  // namespace

double FusionScore(const PosteriorFrame &frame, TokenId candidate, const LanguageModel *ext,
                   std::span<const TokenId> history, const InternalPrior *prior,
                   const DecoderConfig &config) {
  CheckInputs(config, ext, prior);
  const LogFrame lf = ToLog(frame, config.posterior_temperature);
  if (candidate == kBlankId) return lf.blank;
  auto it = std::find_if(lf.labels.begin(), lf.labels.end(),
                         [&](const auto &e) { return e.first == candidate; });
  if (it == lf.labels.end()) return kNegInf;
  double score = it->second;
  if (ext != nullptr) score += config.ext_weight * ext->LogProb(candidate, history);
  if (prior != nullptr) {
    const auto ilm = SmoothPrior(*prior, config.ilm_temperature);
    score -= config.ilm_weight * std::log(ilm[static_cast<std::size_t>(candidate)]);
  }
  return score;
}

std::vector<Hypothesis> Decode(const PosteriorLattice &lattice, const DecoderConfig &config,
                               const LanguageModel *ext, const InternalPrior *prior) {
  CheckInputs(config, ext, prior);
  std::vector<double> ilm_log;
  if (prior != nullptr) {
    if (prior->vocab_size() != lattice.vocab_size)
      throw ConfigError("internal prior does not match the lattice vocab");
    const auto ilm = SmoothPrior(*prior, config.ilm_temperature);
    ilm_log.resize(ilm.size(), kNegInf);
    for (std::size_t v = 1; v < ilm.size(); ++v) ilm_log[v] = std::log(ilm[v]);
  }
  if (ext != nullptr && ext->vocab_size() != lattice.vocab_size)
    throw ConfigError("external LM does not match the lattice vocab");

  std::vector<Hypothesis> beam(1);
  for (std::size_t f = 0; f < lattice.frames.size(); ++f) {
    const LogFrame lf = ToLog(lattice.frames[f], config.posterior_temperature);
    std::vector<Hypothesis> next;
    std::map<std::vector<TokenId>, std::size_t> index;
    auto offer = [&](Hypothesis &&h) {
      h.total = Total(h, config);
      auto [it, fresh] = index.emplace(h.tokens, next.size());
      if (fresh)
        next.push_back(std::move(h));
      else if (h.total > next[it->second].total)
        next[it->second] = std::move(h);
    };

    for (const auto &h : beam) {
      if (lf.blank != kNegInf) {
        Hypothesis b = h;
        b.acoustic += lf.blank;
        offer(std::move(b));
      }
      struct Candidate {
        TokenId id;
        double acoustic, ext, ilm, score;
      };
      std::vector<Candidate> cands;
      cands.reserve(lf.labels.size());
      for (const auto &[id, lp] : lf.labels) {
        Candidate c{id, lp, 0.0, 0.0, 0.0};
        if (ext != nullptr) c.ext = ext->LogProb(id, h.tokens);
        if (prior != nullptr) c.ilm = ilm_log[static_cast<std::size_t>(id)];
        c.score = c.acoustic + config.ext_weight * c.ext - config.ilm_weight * c.ilm;
        cands.push_back(c);
      }
      const std::size_t keep = std::min(config.top_k, cands.size());
      std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep),
                        cands.end(), [](const Candidate &a, const Candidate &b) {
                          if (a.score != b.score) return a.score > b.score;
                          return a.id < b.id;
                        });
      for (std::size_t i = 0; i < keep; ++i) {
        Hypothesis e = h;
        e.tokens.push_back(cands[i].id);
        e.acoustic += cands[i].acoustic;
        e.ext += cands[i].ext;
        e.ilm += cands[i].ilm;
        offer(std::move(e));
      }
    }
    if (next.empty())
      throw DataError("lattice '" + lattice.utterance_id + "' frame " + std::to_string(f) +
                      " has no mass");
    std::sort(next.begin(), next.end(), Better);
    if (next.size() > config.beam_width) next.resize(config.beam_width);
    beam = std::move(next);
  }

  if (ext != nullptr) {
    for (auto &h : beam) {
      h.ext += ext->LogProb(ext->eos(), h.tokens);
      h.total = Total(h, config);
    }
    std::sort(beam.begin(), beam.end(), Better);
  }
  return beam;
}

std::string NbestTsv(const std::string &utterance_id, const std::vector<Hypothesis> &nbest,
                     const WordPieceModel &wpm) {
  std::ostringstream os;
  for (std::size_t r = 0; r < nbest.size(); ++r) {
    const auto &h = nbest[r];
    os << utterance_id << '\t' << r + 1 << '\t' << ExactDouble(h.total) << '\t'
       << ExactDouble(h.acoustic) << '\t' << ExactDouble(h.ext) << '\t' << ExactDouble(h.ilm)
       << '\t' << wpm.Decode(h.tokens) << '\n';
  }
  return os.str();
}

std::vector<UserDecodeResult> DecodeUsers(const std::vector<UserDecodeInput> &users,
                                          const DecoderConfig &config,
                                          const WordPieceModel &wpm, const InternalPrior *prior) {
  config.Validate();
  std::vector<UserDecodeResult> results(users.size());
  ParallelFor(users.size(), [&](std::size_t u) {
    const auto &in = users[u];
    if (in.lattices.size() != in.references.size())
      throw DataError("user " + in.user_id + " has mismatched lattices and references");
    if (config.ext_weight > 0 && in.lm == nullptr)
      throw ConfigError("user " + in.user_id + " has no LM for fusion");
    auto &out = results[u];
    out.report.user_id = in.user_id;
    for (std::size_t i = 0; i < in.lattices.size(); ++i) {
      const auto nbest = Decode(*in.lattices[i], config, in.lm.get(), prior);
      UtteranceOutputs o;
      o.utterance_id = in.lattices[i]->utterance_id;
      o.reference = in.references[i];
      o.hypothesis = SplitWhitespace(wpm.Decode(nbest.front().tokens));
      out.report.utterances.push_back(Wer(o.reference, o.hypothesis));
      out.outputs.push_back(std::move(o));
    }
  });
  return results;
}

std::vector<SweepCellResult> Sweep(const std::vector<UserDecodeInput> &users,
                                   const std::vector<SweepCell> &cells,
                                   const WordPieceModel &wpm, const InternalPrior *prior,
                                   const BootstrapConfig &bootstrap) {
  std::vector<SweepCellResult> results;
  for (const auto &cell : cells) {
    SweepCellResult r;
    r.lm_name = cell.lm_name;
    r.config = cell.config;
    try {
      std::vector<UserDecodeInput> inputs = users;
      if (!cell.lms.empty()) {
        if (cell.lms.size() != users.size())
          throw ConfigError("sweep cell " + cell.lm_name + " has the wrong number of LMs");
        for (std::size_t u = 0; u < users.size(); ++u) inputs[u].lm = cell.lms[u];
      } else {
        for (auto &in : inputs) in.lm = nullptr;
      }
      for (auto &d : DecodeUsers(inputs, cell.config, wpm, prior))
        r.users.push_back(std::move(d.report));
      r.macro = MacroAverageWer(r.users, bootstrap);
      r.pooled = PooledWer(r.users);
      r.ok = true;
    } catch (const std::exception &e) {
      r.ok = false;
      r.error = e.what();
      r.users.clear();
    }
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace p13n
