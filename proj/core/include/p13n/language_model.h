// p13n/language_model.h
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
// Word-piece n-gram language models: an interpolated absolute-discounting
// backoff model, and a personalized model that mixes a user-trained model
// with a frozen general one at query time.

#ifndef P13N_LANGUAGE_MODEL_H_
#define P13N_LANGUAGE_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "p13n/tokenizer.h"

namespace p13n {

// Token ids follow the word-piece vocab of size V. The predicted support is
// ids 1..V-1 (blank excluded) plus end-of-sentence, which is id V; the
// sentence-start padding symbol is V+1 and is never predicted.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  // P(token | history). history holds the sentence so far without padding;
  // only its last order()-1 entries matter.
  virtual double Prob(TokenId token, std::span<const TokenId> history) const = 0;
  double LogProb(TokenId token, std::span<const TokenId> history) const;
  // Sum of LogProb over the tokens plus the end-of-sentence term.
  double SequenceLogProb(std::span<const TokenId> tokens) const;

  virtual int order() const = 0;
  virtual std::size_t vocab_size() const = 0;
  virtual std::uint64_t Hash() const = 0;

  TokenId eos() const { return static_cast<TokenId>(vocab_size()); }
  TokenId bos() const { return static_cast<TokenId>(vocab_size()) + 1; }
  std::size_t support_size() const { return vocab_size(); }

 protected:
  void CheckToken(TokenId token) const;
};

// Model-size classes standing in for small/medium/large networks.
enum class Capacity { kS, kM, kL };
int OrderForCapacity(Capacity c);
Capacity ParseCapacity(const std::string &label);
const char *CapacityName(Capacity c);

class BackoffLanguageModel : public LanguageModel {
 public:
  static constexpr int kMaxOrder = 4;
  static constexpr double kDefaultDiscount = 0.75;

  // Throws ConfigError for order outside [1, kMaxOrder], discount outside
  // (0, 1], or vocab too large to pack; DataError for an empty corpus.
  static BackoffLanguageModel Train(const std::vector<std::vector<TokenId>> &sentences,
                                    std::size_t vocab_size, int order,
                                    double discount = kDefaultDiscount);

  double Prob(TokenId token, std::span<const TokenId> history) const override;
  int order() const override { return order_; }
  std::size_t vocab_size() const override { return vocab_size_; }
  std::uint64_t Hash() const override;

  double discount() const { return discount_; }
  // Raw counts. context is given without padding symbols stripped, i.e. the
  // exact n-1 ids (bos() allowed).
  std::uint64_t Count(std::span<const TokenId> context, TokenId token) const;
  std::uint64_t ContextCount(std::span<const TokenId> context) const;
  std::uint32_t ContextTypes(std::span<const TokenId> context) const;
  // Unsmoothed count ratio at the highest order, 0 when the context is unseen.
  double MleProb(TokenId token, std::span<const TokenId> history) const;

  void set_vocab_hash(std::uint64_t h) { vocab_hash_ = h; }
  std::uint64_t vocab_hash() const { return vocab_hash_; }

  // Sorted "<order>\t<context>\t<token>\t<count>" lines after a header.
  std::string Serialize(const std::map<std::string, std::string> &extra_header = {}) const;
  void Save(const std::filesystem::path &path) const;
  static BackoffLanguageModel Parse(const std::string &text,
                                    std::map<std::string, std::string> *header = nullptr);
  static BackoffLanguageModel Load(const std::filesystem::path &path);

 private:
  struct ContextStats {
    std::uint64_t total = 0;
    std::uint32_t types = 0;
  };
  void AddCount(int n, std::uint64_t ctx_key, std::uint64_t full_key, std::uint64_t c);
  void CheckPackable() const;

  int order_ = 0;
  std::size_t vocab_size_ = 0;
  double discount_ = kDefaultDiscount;
  std::uint64_t vocab_hash_ = 0;
  std::uint64_t unigram_total_ = 0;
  std::uint32_t unigram_types_ = 0;
  // Index n-1 holds order-n statistics. Keys pack ids in 16-bit slots.
  std::vector<std::unordered_map<std::uint64_t, std::uint64_t>> counts_;
  std::vector<std::unordered_map<std::uint64_t, ContextStats>> contexts_;
};

struct PersonalizationConfig {
  double mix_weight = 0.5;
  std::vector<std::size_t> nested_sizes = {200, 500, 1000, 3000};
  std::uint64_t seed = 0;
};

// alpha * P_user + (1 - alpha) * P_general, evaluated per query.
class PersonalizedLanguageModel : public LanguageModel {
 public:
  PersonalizedLanguageModel(std::shared_ptr<const LanguageModel> general,
                            std::shared_ptr<const BackoffLanguageModel> user, double alpha);

  double Prob(TokenId token, std::span<const TokenId> history) const override;
  int order() const override { return std::max(general_->order(), user_->order()); }
  std::size_t vocab_size() const override { return general_->vocab_size(); }
  std::uint64_t Hash() const override;

  double alpha() const { return alpha_; }
  const LanguageModel &general() const { return *general_; }
  const BackoffLanguageModel &user() const { return *user_; }

  void Save(const std::filesystem::path &path) const;
  static std::shared_ptr<PersonalizedLanguageModel> Load(
      const std::filesystem::path &path, std::shared_ptr<const LanguageModel> general);

 private:
  std::shared_ptr<const LanguageModel> general_;
  std::shared_ptr<const BackoffLanguageModel> user_;
  double alpha_;
};

std::shared_ptr<const BackoffLanguageModel> TrainGeneral(
    const std::vector<std::vector<TokenId>> &sentences, std::size_t vocab_size, int order);

// Trains a user model of the general model's order and mixes. Throws
// ConfigError when the mix weight is outside [0, 1] and DataError when
// user_sentences is empty. The general model is shared, never modified.
std::shared_ptr<const PersonalizedLanguageModel> Personalize(
    std::shared_ptr<const LanguageModel> general,
    const std::vector<std::vector<TokenId>> &user_sentences,
    const PersonalizationConfig &config);

// Nested random subsets: each size's subset contains every smaller one.
// Sentences keep their original relative order inside a subset. Throws
// SkipUser when the pool is smaller than the largest size and ConfigError
// when sizes are not strictly increasing.
std::map<std::size_t, std::vector<std::string>> SubsetNested(
    const std::vector<std::string> &sentences, const std::vector<std::size_t> &sizes,
    std::uint64_t seed);

// exp(-mean token log prob), end-of-sentence included.
double Perplexity(const LanguageModel &model,
                  const std::vector<std::vector<TokenId>> &sentences);

}  // namespace p13n

#endif  // P13N_LANGUAGE_MODEL_H_
