// p13n/synthetic.h
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

// Seeded stand-in for a per-user book corpus: a general-domain text and one
// book per user, built from pseudo-words. The general text and the books use
// disjoint topic vocabularies on top of a shared set of common words, and
// each book has its own word-transition structure, so a model trained on a
// user's book knows things the general model cannot.

#ifndef P13N_SYNTHETIC_H_
#define P13N_SYNTHETIC_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "p13n/corpus_forge.h"

namespace p13n {

struct SyntheticConfig {
  std::size_t users_per_split = 20;
  std::size_t utterances_per_user = 40;
  std::size_t lm_sentences_per_user = 4000;
  std::size_t general_sentences = 20000;
  std::size_t shared_words = 600;
  std::size_t general_topic_words = 1500;
  std::size_t book_topic_words = 150;
  std::size_t successors = 40;     // distinct followers per word
  double topic_rate = 0.35;        // share of transitions into topic words
  double shared_grammar = 0.7;     // share of a book's common-word transitions copied from general text
  double book_rare_onsets = 0.6;   // how exotic book-word spellings are
  std::size_t min_words = 5;
  std::size_t max_words = 14;
};

struct SyntheticCorpus {
  std::vector<std::string> general;  // normalized sentences
  std::vector<UserDataset> users;    // ordered by user_id; splits "clean" and "other"
};

SyntheticCorpus GenerateSynthetic(const SyntheticConfig &config, std::uint64_t seed);

// Writes the forged-dataset layout plus <dir>/general_corpus.txt.
void WriteSyntheticDataset(const SyntheticCorpus &corpus, const std::filesystem::path &dir);

}  // namespace p13n

#endif  // P13N_SYNTHETIC_H_
