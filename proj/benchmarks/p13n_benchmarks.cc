// p13n/benchmarks/p13n_benchmarks.cc
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

#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "p13n/acoustic_sim.h"
#include "p13n/corpus_forge.h"
#include "p13n/eval_metrics.h"
#include "p13n/fusion_decoder.h"
#include "p13n/language_model.h"
#include "p13n/synthetic.h"
#include "p13n/tokenizer.h"
#include "p13n/util.h"

namespace p13n {
namespace {

struct World {
  SyntheticCorpus corpus;
  WordPieceModel wpm;
  InternalPrior prior;
  std::shared_ptr<const BackoffLanguageModel> lm;
  std::vector<PosteriorLattice> lattices;

  World() {
    SyntheticConfig sc;
    sc.users_per_split = 1;
    sc.utterances_per_user = 20;
    sc.lm_sentences_per_user = 1000;
    sc.general_sentences = 5000;
    corpus = GenerateSynthetic(sc, 1);
    wpm = WordPieceModel::Train(corpus.general, 1024);
    std::vector<std::vector<TokenId>> toks;
    for (const auto &s : corpus.general) toks.push_back(wpm.Encode(s));
    prior = InternalPrior::FromCorpus(toks, wpm.size(), 1.0, 0.3);
    lm = TrainGeneral(toks, wpm.size(), 3);
    const auto channel = ConfusionChannel::Build(wpm, NoiseProfile::kOther);
    std::uint64_t seed = 0;
    for (const auto &u : corpus.users.front().utterances)
      lattices.push_back(Emit(wpm.Encode(Join(u.transcript, " ")), channel, prior, ++seed));
  }
};

const World &TheWorld() {
  static const World w;
  return w;
}

void BM_DecodeBaseline(benchmark::State &state) {
  const auto &w = TheWorld();
  DecoderConfig cfg;
  for (auto _ : state)
    for (const auto &lat : w.lattices) benchmark::DoNotOptimize(Decode(lat, cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(w.lattices.size()));
}
BENCHMARK(BM_DecodeBaseline);

void BM_DecodeFusion(benchmark::State &state) {
  const auto &w = TheWorld();
  DecoderConfig cfg;
  cfg.beam_width = static_cast<std::size_t>(state.range(0));
  cfg.ext_weight = 0.15;
  cfg.ilm_weight = 0.1;
  for (auto _ : state)
    for (const auto &lat : w.lattices) benchmark::DoNotOptimize(Decode(lat, cfg, w.lm.get(), &w.prior));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(w.lattices.size()));
}
BENCHMARK(BM_DecodeFusion)->Arg(4)->Arg(8)->Arg(16);

void BM_LmLogProb(benchmark::State &state) {
  const auto &w = TheWorld();
  std::vector<std::vector<TokenId>> toks;
  for (std::size_t i = 0; i < 200; ++i) toks.push_back(w.wpm.Encode(w.corpus.general[i]));
  for (auto _ : state)
    for (const auto &t : toks) benchmark::DoNotOptimize(w.lm->SequenceLogProb(t));
}
BENCHMARK(BM_LmLogProb);

void BM_Wer(benchmark::State &state) {
  std::mt19937_64 gen(1);
  const std::vector<std::string> vocab = {"A", "B", "C", "D", "E", "F"};
  std::vector<std::pair<Words, Words>> pairs(100);
  for (auto &[r, h] : pairs) {
    for (int i = 0; i < state.range(0); ++i) r.push_back(vocab[gen() % vocab.size()]);
    for (int i = 0; i < state.range(0); ++i) h.push_back(vocab[gen() % vocab.size()]);
  }
  for (auto _ : state)
    for (const auto &[r, h] : pairs) benchmark::DoNotOptimize(Wer(r, h));
}
BENCHMARK(BM_Wer)->Arg(10)->Arg(40);

void BM_FilterOverlap(benchmark::State &state) {
  const auto &w = TheWorld();
  const auto &user = w.corpus.users.front();
  std::vector<std::string> transcripts;
  for (const auto &u : user.utterances) transcripts.push_back(Join(u.transcript, " "));
  for (auto _ : state) benchmark::DoNotOptimize(FilterOverlap(*user.lm_sentences, transcripts));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(user.lm_sentences->size()));
}
BENCHMARK(BM_FilterOverlap);

}  // namespace
}  // namespace p13n

BENCHMARK_MAIN();
