// p13n/synthetic.cc
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

#include "p13n/synthetic.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <memory>
#include <set>
#include <sstream>
#include <unordered_set>

#include "p13n/errors.h"
#include "p13n/util.h"

namespace p13n {
namespace {

// Common onsets for general text; the rarer ones dominate book words, which
// gives names unusual spellings.
const std::vector<std::string> kOnsets = {"B", "D", "F", "G", "H", "K", "L", "M", "N", "P",
                                          "R", "S", "T", "V", "W", "BR", "ST", "TR", "SH", "TH"};
const std::vector<std::string> kRareOnsets = {"KH", "ZH", "RR", "X", "Q", "J", "Y", "Z",
                                              "C", "DJ", "GR", "SK"};
const std::vector<std::string> kVowels = {"A", "E", "I", "O", "U", "AI", "OU", "EA"};
const std::vector<std::string> kCodas = {"", "", "", "N", "R", "S", "L", "K", "M"};

class Lexicon {
 public:
  explicit Lexicon(Rng *rng) : rng_(rng) {}

  std::string Make(double rare_onset_rate) {
    for (;;) {
      const double u = rng_->Uniform();
      const int syllables = u < 0.3 ? 1 : u < 0.8 ? 2 : 3;
      std::string w;
      for (int s = 0; s < syllables; ++s) {
        const auto &onsets = rng_->Uniform() < rare_onset_rate ? kRareOnsets : kOnsets;
        w += onsets[rng_->Below(onsets.size())];
        w += kVowels[rng_->Below(kVowels.size())];
        if (s + 1 == syllables || rng_->Uniform() < 0.3) w += kCodas[rng_->Below(kCodas.size())];
      }
      if (used_.insert(w).second) return w;
    }
  }

  std::vector<std::string> MakeMany(std::size_t n, double rare_onset_rate) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(Make(rare_onset_rate));
    return out;
  }

 private:
  Rng *rng_;
  std::unordered_set<std::string> used_;
};

// Zipf(1) over n ranks, drawn by binary search on the cumulative weights.
class Zipf {
 public:
  explicit Zipf(std::size_t n) : cumulative_(n) {
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) cumulative_[i] = total += 1.0 / static_cast<double>(i + 1);
  }
  std::size_t operator()(Rng *rng) const {
    const double r = rng->Uniform() * cumulative_.back();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), r);
    return std::min(static_cast<std::size_t>(it - cumulative_.begin()), cumulative_.size() - 1);
  }

 private:
  std::vector<double> cumulative_;
};

// Word-level Markov chain. Word ids index shared words first, then topic
// words. Every word gets its own short follower list.
class Chain {
 public:
  Chain(const std::vector<std::string> &shared, const std::vector<std::string> &topic,
        const SyntheticConfig &config, Rng *rng, const Chain *grammar = nullptr)
      : config_(config), follower_w_(config.successors), start_w_(kStarts) {
    words_ = shared;
    words_.insert(words_.end(), topic.begin(), topic.end());
    const Zipf shared_w(shared.size());
    const Zipf topic_w(topic.size());
    auto draw = [&]() {
      if (rng->Uniform() < config.topic_rate) return shared.size() + topic_w(rng);
      return shared_w(rng);
    };
    for (std::size_t i = 0; i < kStarts; ++i) starts_.push_back(draw());
    followers_.resize(words_.size());
    for (std::size_t w = 0; w < words_.size(); ++w) {
      auto &f = followers_[w];
      for (std::size_t k = 0; k < config.successors; ++k) {
        std::size_t next = draw();
        // Common words keep part of the general text's grammar.
        if (grammar != nullptr && w < shared.size() && rng->Uniform() < config.shared_grammar &&
            grammar->followers_[w][k] < shared.size())
          next = grammar->followers_[w][k];
        while (std::find(f.begin(), f.end(), next) != f.end()) next = draw();
        f.push_back(next);
      }
    }
  }

  std::string Sentence(Rng *rng) const {
    const std::size_t len =
        config_.min_words + rng->Below(config_.max_words - config_.min_words + 1);
    std::size_t w = starts_[start_w_(rng)];
    std::string s = words_[w];
    for (std::size_t i = 1; i < len; ++i) {
      w = followers_[w][follower_w_(rng)];
      s += ' ';
      s += words_[w];
    }
    return s;
  }

 private:
  static constexpr std::size_t kStarts = 64;
  const SyntheticConfig &config_;
  std::vector<std::string> words_;
  std::vector<std::size_t> starts_;
  std::vector<std::vector<std::size_t>> followers_;
  Zipf follower_w_;
  Zipf start_w_;
};

std::string Pad(std::size_t v, int width) {
  std::ostringstream os;
  os << std::setw(width) << std::setfill('0') << v;
  return os.str();
}

}  // namespace

SyntheticCorpus GenerateSynthetic(const SyntheticConfig &config, std::uint64_t seed) {
  if (config.users_per_split == 0 || config.utterances_per_user == 0 ||
      config.lm_sentences_per_user == 0 || config.general_sentences == 0)
    throw ConfigError("synthetic benchmark sizes must be positive");
  if (config.min_words == 0 || config.max_words < config.min_words)
    throw ConfigError("synthetic sentence length range is empty");
  if (config.successors == 0 || config.successors > config.shared_words)
    throw ConfigError("synthetic successors must be in [1, shared_words]");

  Rng rng(DeriveSeed(seed, "synthetic/lexicon"));
  Lexicon lexicon(&rng);
  // Make sure every rare onset spelling occurs in the general text too, so
  // the general-domain alphabet covers the books.
  std::vector<std::string> shared = lexicon.MakeMany(config.shared_words, 0.02);
  std::vector<std::string> general_topic = lexicon.MakeMany(config.general_topic_words, 0.05);
  for (const auto &o : kRareOnsets) general_topic.push_back(lexicon.Make(0.0) + o + "A");

  SyntheticCorpus corpus;
  Rng grng(DeriveSeed(seed, "synthetic/general"));
  const Chain grammar(shared, general_topic, config, &grng);
  {
    for (std::size_t i = 0; i < config.general_sentences; ++i)
      corpus.general.push_back(grammar.Sentence(&grng));
    // One pass over the topic list keeps every general word attested.
    for (std::size_t i = 0; i < general_topic.size(); i += 8) {
      std::vector<std::string> words;
      for (std::size_t j = i; j < std::min(i + 8, general_topic.size()); ++j)
        words.push_back(general_topic[j]);
      corpus.general.push_back(Join(words, " "));
    }
  }

  const char *splits[] = {"clean", "other"};
  std::size_t book_no = 0;
  for (const char *split : splits) {
    for (std::size_t u = 0; u < config.users_per_split; ++u, ++book_no) {
      const std::string book_id = std::to_string(1000 + book_no);
      const std::string speaker_id = std::to_string(100 + book_no);
      Rng brng(DeriveSeed(seed, "synthetic/book/" + book_id));
      const std::vector<std::string> topic =
          lexicon.MakeMany(config.book_topic_words, config.book_rare_onsets);
      const Chain chain(shared, topic, config, &brng, &grammar);

      UserDataset user;
      user.user_id = speaker_id + "-" + book_id;
      user.speaker_id = speaker_id;
      user.book_id = book_id;
      user.split = split;
      std::vector<std::string> transcripts;
      for (std::size_t i = 0; i < config.utterances_per_user; ++i) {
        UtteranceRecord rec;
        rec.utterance_id = user.user_id + "-" + Pad(i, 4);
        rec.speaker_id = speaker_id;
        rec.book_id = book_id;
        rec.split = split;
        transcripts.push_back(chain.Sentence(&brng));
        rec.transcript = SplitWhitespace(transcripts.back());
        user.utterances.push_back(std::move(rec));
      }
      auto pool = std::make_shared<std::vector<std::string>>();
      while (pool->size() < config.lm_sentences_per_user) {
        std::vector<std::string> batch;
        for (std::size_t i = pool->size(); i < config.lm_sentences_per_user; ++i)
          batch.push_back(chain.Sentence(&brng));
        for (auto &s : FilterOverlap(batch, transcripts)) pool->push_back(std::move(s));
      }
      user.lm_sentences = std::move(pool);
      corpus.users.push_back(std::move(user));
    }
  }
  std::sort(corpus.users.begin(), corpus.users.end(),
            [](const UserDataset &a, const UserDataset &b) { return a.user_id < b.user_id; });
  return corpus;
}

void WriteSyntheticDataset(const SyntheticCorpus &corpus, const std::filesystem::path &dir) {
  std::string general;
  for (const auto &s : corpus.general) general += s + "\n";
  WriteFile(dir / "general_corpus.txt", general);
  std::ostringstream meta;
  meta << "split\tuser_id\tspeaker_id\tbook_id\tnum_utterances\tnum_lm_sentences\n";
  for (const auto &user : corpus.users) {
    std::string lm;
    for (const auto &s : *user.lm_sentences) lm += s + "\n";
    WriteFile(dir / "lm_data" / (user.book_id + "_lm_data.txt"), lm);
    std::ostringstream tsv;
    tsv << "utterance_id\tspeaker_id\tbook_id\ttranscript\n";
    for (const auto &u : user.utterances)
      tsv << u.utterance_id << '\t' << u.speaker_id << '\t' << u.book_id << '\t'
          << Join(u.transcript, " ") << '\n';
    WriteFile(dir / "audio_data" / user.split / user.user_id / "utterances.tsv", tsv.str());
    meta << user.split << '\t' << user.user_id << '\t' << user.speaker_id << '\t' << user.book_id
         << '\t' << user.utterances.size() << '\t' << user.lm_sentences->size() << '\n';
  }
  WriteFile(dir / "metadata.tsv", meta.str());
  WriteFile(dir / "stats.tsv", FormatStatsTable(ComputeStats(corpus.users)));
}

}  // namespace p13n
