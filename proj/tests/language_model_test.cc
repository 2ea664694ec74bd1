// p13n/tests/language_model_test.cc
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

#include "p13n/language_model.h"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <set>

#include "p13n/errors.h"
#include "p13n/synthetic.h"
#include "p13n/tokenizer.h"

namespace p13n {
namespace {

using Sentences = std::vector<std::vector<TokenId>>;

// Interpolated absolute discounting from raw counts, written out directly.
class ReferenceModel {
 public:
  ReferenceModel(const Sentences &corpus, int vocab, int order, double d)
      : vocab_(vocab), order_(order), d_(d) {
    for (const auto &s : corpus) {
      std::vector<TokenId> padded(static_cast<std::size_t>(order - 1), vocab + 1);
      padded.insert(padded.end(), s.begin(), s.end());
      padded.push_back(vocab);
      for (std::size_t i = static_cast<std::size_t>(order - 1); i < padded.size(); ++i)
        for (int n = 1; n <= order; ++n) {
          std::vector<TokenId> ctx(padded.begin() + static_cast<long>(i) - (n - 1),
                                   padded.begin() + static_cast<long>(i));
          ++counts_[ctx][padded[i]];
        }
    }
  }
  double Prob(TokenId t, const std::vector<TokenId> &history) const {
    std::vector<TokenId> padded(static_cast<std::size_t>(order_ - 1), vocab_ + 1);
    padded.insert(padded.end(), history.begin(), history.end());
    double p = 1.0 / vocab_;
    for (int n = 1; n <= order_; ++n) {
      std::vector<TokenId> ctx(padded.end() - (n - 1), padded.end());
      auto it = counts_.find(ctx);
      if (it == counts_.end()) continue;
      double total = 0;
      for (const auto &e : it->second) total += static_cast<double>(e.second);
      const auto c = it->second.count(t) ? static_cast<double>(it->second.at(t)) : 0.0;
      p = (std::max(c - d_, 0.0) + d_ * static_cast<double>(it->second.size()) * p) / total;
    }
    return p;
  }

 private:
  int vocab_, order_;
  double d_;
  std::map<std::vector<TokenId>, std::map<TokenId, std::uint64_t>> counts_;
};

Sentences RandomCorpus(std::mt19937_64 &gen, int vocab, std::size_t n) {
  Sentences out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<TokenId> s;
    const std::size_t len = gen() % 7;
    for (std::size_t k = 0; k < len; ++k) s.push_back(1 + static_cast<TokenId>(gen() % (vocab - 1)));
    out.push_back(s);
  }
  return out;
}

TEST(BackoffLm, HandBigram) {
  // A=1, B=2, C=3; V=4 so end-of-sentence is 4.
  auto m = BackoffLanguageModel::Train({{1, 2}, {1, 3}}, 4, 2);
  const std::vector<TokenId> a = {1};
  EXPECT_DOUBLE_EQ(m.MleProb(2, a), 0.5);
  EXPECT_NEAR(m.Prob(2, a), 0.25, 1e-12);
  EXPECT_NEAR(m.Prob(1, {}), 0.75, 1e-12);
  EXPECT_NEAR(m.SequenceLogProb(std::vector<TokenId>{1, 2}), std::log(0.75 * 0.25 * 0.5), 1e-12);
}

TEST(BackoffLm, UniformUnigram) {
  auto m = BackoffLanguageModel::Train({{1, 2, 3}}, 4, 1);
  for (TokenId t = 1; t <= 4; ++t) {
    EXPECT_DOUBLE_EQ(m.MleProb(t, {}), 0.25);
    EXPECT_NEAR(m.LogProb(t, {}), -std::log(4.0), 1e-12);
  }
  EXPECT_NEAR(Perplexity(m, {{3, 1, 2, 2}, {1}}), 4.0, 1e-9);
}

TEST(BackoffLm, MatchesReferenceImplementation) {
  std::mt19937_64 gen(21);
  for (int order = 1; order <= 4; ++order) {
    auto corpus = RandomCorpus(gen, 6, 40);
    auto m = BackoffLanguageModel::Train(corpus, 6, order);
    ReferenceModel ref(corpus, 6, order, 0.75);
    for (int q = 0; q < 200; ++q) {
      std::vector<TokenId> h;
      for (std::size_t k = gen() % 5; k > 0; --k) h.push_back(1 + static_cast<TokenId>(gen() % 5));
      const TokenId t = 1 + static_cast<TokenId>(gen() % 6);
      ASSERT_NEAR(m.Prob(t, h), ref.Prob(t, h), 1e-12) << "order " << order;
    }
  }
}

TEST(BackoffLm, DistributionsNormalize) {
  std::mt19937_64 gen(8);
  auto corpus = RandomCorpus(gen, 30, 300);
  for (int order = 1; order <= 4; ++order) {
    auto m = BackoffLanguageModel::Train(corpus, 30, order);
    for (int q = 0; q < 100; ++q) {
      std::vector<TokenId> h;
      for (std::size_t k = gen() % 5; k > 0; --k) h.push_back(1 + static_cast<TokenId>(gen() % 29));
      double z = 0;
      for (TokenId t = 1; t <= m.eos(); ++t) {
        const double p = m.Prob(t, h);
        ASSERT_GT(p, 0.0);
        z += p;
      }
      ASSERT_NEAR(z, 1.0, 1e-9);
    }
  }
}

TEST(BackoffLm, Errors) {
  EXPECT_THROW(BackoffLanguageModel::Train({}, 5, 2), DataError);
  EXPECT_THROW(BackoffLanguageModel::Train({{1}}, 5, 0), ConfigError);
  EXPECT_THROW(BackoffLanguageModel::Train({{1}}, 5, 5), ConfigError);
  EXPECT_THROW(BackoffLanguageModel::Train({{7}}, 5, 2), RangeError);
  auto m = BackoffLanguageModel::Train({{1}}, 5, 2);
  EXPECT_THROW(m.Prob(0, {}), RangeError);
  EXPECT_THROW(m.Prob(6, {}), RangeError);
  EXPECT_THROW(Perplexity(m, {}), DataError);
}

TEST(BackoffLm, RepeatedSentencePerplexityNearOne) {
  Sentences corpus(2000, std::vector<TokenId>{3, 1, 4, 1, 5});
  auto m = BackoffLanguageModel::Train(corpus, 8, 3);
  EXPECT_LT(Perplexity(m, {{3, 1, 4, 1, 5}}), 1.01);
}

TEST(BackoffLm, SerializationRoundTrip) {
  std::mt19937_64 gen(2);
  auto m = BackoffLanguageModel::Train(RandomCorpus(gen, 12, 80), 12, 3);
  m.set_vocab_hash(0x1234);
  std::map<std::string, std::string> header;
  auto back = BackoffLanguageModel::Parse(m.Serialize(), &header);
  EXPECT_EQ(back.order(), 3);
  EXPECT_EQ(back.vocab_hash(), 0x1234u);
  EXPECT_EQ(back.Serialize(), m.Serialize());
  EXPECT_EQ(back.Hash(), m.Hash());
  for (TokenId t = 1; t <= 12; ++t) EXPECT_EQ(back.Prob(t, std::vector<TokenId>{2, 5}),
                                             m.Prob(t, std::vector<TokenId>{2, 5}));
}

TEST(Personalize, InterpolationIdentities) {
  std::mt19937_64 gen(4);
  auto general = TrainGeneral(RandomCorpus(gen, 10, 100), 10, 2);
  auto user_text = RandomCorpus(gen, 10, 30);
  user_text.push_back({9, 9, 9});
  PersonalizationConfig c;
  c.mix_weight = 0;
  auto p0 = Personalize(general, user_text, c);
  c.mix_weight = 1;
  auto p1 = Personalize(general, user_text, c);
  c.mix_weight = 0.5;
  auto half = Personalize(general, user_text, c);
  auto user_only = BackoffLanguageModel::Train(user_text, 10, 2);
  for (int q = 0; q < 100; ++q) {
    const std::vector<TokenId> h = {1 + static_cast<TokenId>(gen() % 9)};
    const TokenId t = 1 + static_cast<TokenId>(gen() % 10);
    EXPECT_EQ(p0->Prob(t, h), general->Prob(t, h));
    EXPECT_EQ(p1->Prob(t, h), user_only.Prob(t, h));
    EXPECT_NEAR(half->Prob(t, h), 0.5 * (p0->Prob(t, h) + p1->Prob(t, h)), 1e-15);
  }
  c.mix_weight = 1.5;
  EXPECT_THROW(Personalize(general, user_text, c), ConfigError);
  c.mix_weight = 0.5;
  EXPECT_THROW(Personalize(general, {}, c), DataError);
}

TEST(Personalize, UserOnlyNameGetsBoosted) {
  // Token 9 stands for a name seen 336 times by the user and never in the
  // general text.
  std::mt19937_64 gen(6);
  auto general_text = RandomCorpus(gen, 9, 200);
  auto general = TrainGeneral(general_text, 10, 2);
  Sentences user_text = RandomCorpus(gen, 9, 50);
  for (int i = 0; i < 336; ++i) user_text.push_back({2, 9});
  PersonalizationConfig c;
  auto p = Personalize(general, user_text, c);
  // After the name itself the user text always ends the sentence, so only
  // the other histories must gain.
  for (TokenId h = 1; h < 9; ++h) {
    const std::vector<TokenId> hist = {h};
    EXPECT_GT(p->Prob(9, hist), general->Prob(9, hist)) << h;
  }
  EXPECT_GT(p->Prob(9, std::vector<TokenId>{2}), 0.4);
}

TEST(Personalize, SaveLoadKeepsParentLink) {
  std::mt19937_64 gen(12);
  auto general = TrainGeneral(RandomCorpus(gen, 8, 60), 8, 2);
  PersonalizationConfig c;
  c.mix_weight = 0.3;
  auto p = Personalize(general, RandomCorpus(gen, 8, 20), c);
  const auto path = std::filesystem::temp_directory_path() / "p13n_personal_lm.txt";
  p->Save(path);
  auto back = PersonalizedLanguageModel::Load(path, general);
  EXPECT_EQ(back->alpha(), 0.3);
  EXPECT_EQ(back->Hash(), p->Hash());
  auto other = TrainGeneral(RandomCorpus(gen, 8, 60), 8, 2);
  EXPECT_THROW(PersonalizedLanguageModel::Load(path, other), ConfigError);
  std::filesystem::remove(path);
}

TEST(SubsetNested, ContainmentAndDeterminism) {
  std::vector<std::string> pool;
  for (int i = 0; i < 10; ++i) pool.push_back("S" + std::to_string(i));
  auto a = SubsetNested(pool, {2, 4}, 99);
  auto b = SubsetNested(pool, {2, 4}, 99);
  EXPECT_EQ(a, b);
  ASSERT_EQ(a[2].size(), 2u);
  ASSERT_EQ(a[4].size(), 4u);
  for (const auto &s : a[2]) EXPECT_NE(std::find(a[4].begin(), a[4].end(), s), a[4].end());

  std::vector<std::string> big;
  for (int i = 0; i < 4000; ++i) big.push_back("T" + std::to_string(i));
  auto nested = SubsetNested(big, {200, 500, 1000, 3000}, 5);
  std::set<std::string> prev;
  for (std::size_t size : {200, 500, 1000, 3000}) {
    std::set<std::string> cur(nested[size].begin(), nested[size].end());
    EXPECT_EQ(cur.size(), size);
    for (const auto &s : prev) EXPECT_TRUE(cur.count(s));
    prev = cur;
  }
  EXPECT_NE(SubsetNested(big, {200}, 6)[200], nested[200]);
  EXPECT_THROW(SubsetNested(pool, {2, 20}, 1), SkipUser);
  EXPECT_THROW(SubsetNested(pool, {4, 4}, 1), ConfigError);
}

TEST(Personalize, LowersPerplexityOnHeldOutUserText) {
  SyntheticConfig c;
  c.users_per_split = 2;
  c.utterances_per_user = 5;
  c.lm_sentences_per_user = 600;
  c.general_sentences = 4000;
  for (std::uint64_t seed : {1, 2}) {
    auto corpus = GenerateSynthetic(c, seed);
    auto wpm = WordPieceModel::Train(corpus.general, 512);
    auto enc = [&](const std::vector<std::string> &text) {
      Sentences out;
      for (const auto &s : text) out.push_back(wpm.Encode(s));
      return out;
    };
    auto general = TrainGeneral(enc(corpus.general), wpm.size(), 3);
    for (const auto &user : corpus.users) {
      const auto &text = *user.lm_sentences;
      std::vector<std::string> train(text.begin(), text.begin() + 500);
      std::vector<std::string> held(text.begin() + 500, text.end());
      auto p = Personalize(general, enc(train), {});
      EXPECT_LT(Perplexity(*p, enc(held)), Perplexity(*general, enc(held))) << user.user_id;
    }
  }
}

}  // namespace
}  // namespace p13n
