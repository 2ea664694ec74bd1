// p13n/language_model.cc
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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <tuple>

#include "p13n/errors.h"
#include "p13n/util.h"

namespace p13n {

namespace {

constexpr std::size_t kMaxPackedId = 0xFFFF;

std::uint64_t Pack(std::span<const TokenId> ids) {
  std::uint64_t k = 0;
  for (TokenId id : ids) k = (k << 16) | static_cast<std::uint64_t>(id);
  return k;
}

std::uint64_t PackWith(std::span<const TokenId> ctx, TokenId token) {
  return (Pack(ctx) << 16) | static_cast<std::uint64_t>(token);
}

// Last n-1 ids of the padded history, written into buf.
std::span<const TokenId> ContextOf(std::span<const TokenId> history, int n, TokenId bos,
                                   TokenId *buf) {
  const int want = n - 1;
  const int have = static_cast<int>(history.size());
  for (int i = 0; i < want; ++i) {
    const int src = have - want + i;
    buf[i] = src >= 0 ? history[static_cast<std::size_t>(src)] : bos;
  }
  return {buf, static_cast<std::size_t>(want)};
}

std::string IdName(TokenId id, std::size_t vocab) {
  if (static_cast<std::size_t>(id) == vocab) return "</s>";
  if (static_cast<std::size_t>(id) == vocab + 1) return "<s>";
  return std::to_string(id);
}

TokenId ParseId(const std::string &s, std::size_t vocab) {
  if (s == "</s>") return static_cast<TokenId>(vocab);
  if (s == "<s>") return static_cast<TokenId>(vocab + 1);
  return static_cast<TokenId>(std::stol(s));
}

}  // namespace

double LanguageModel::LogProb(TokenId token, std::span<const TokenId> history) const {
  return std::log(Prob(token, history));
}

double LanguageModel::SequenceLogProb(std::span<const TokenId> tokens) const {
  double total = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    total += LogProb(tokens[i], tokens.subspan(0, i));
  return total + LogProb(eos(), tokens);
}

void LanguageModel::CheckToken(TokenId token) const {
  if (token < 1 || static_cast<std::size_t>(token) > vocab_size())
    throw RangeError("token id " + std::to_string(token) + " outside LM support [1, " +
                     std::to_string(vocab_size()) + "]");
}

int OrderForCapacity(Capacity c) {
  switch (c) {
    case Capacity::kS: return 2;
    case Capacity::kM: return 3;
    case Capacity::kL: return 4;
  }
  return 3;
}

Capacity ParseCapacity(const std::string &label) {
  if (label == "S" || label == "s") return Capacity::kS;
  if (label == "M" || label == "m") return Capacity::kM;
  if (label == "L" || label == "l") return Capacity::kL;
  throw ConfigError("capacity class must be S, M or L, got '" + label + "'");
}

const char *CapacityName(Capacity c) {
  switch (c) {
    case Capacity::kS: return "S";
    case Capacity::kM: return "M";
    case Capacity::kL: return "L";
  }
  return "?";
}

void BackoffLanguageModel::CheckPackable() const {
  if (vocab_size_ + 1 > kMaxPackedId)
    throw ConfigError("vocab size " + std::to_string(vocab_size_) + " too large");
  if (order_ < 1 || order_ > kMaxOrder)
    throw ConfigError("n-gram order must be in [1, " + std::to_string(kMaxOrder) + "]");
  if (!(discount_ > 0 && discount_ <= 1)) throw ConfigError("discount must be in (0, 1]");
}

void BackoffLanguageModel::AddCount(int n, std::uint64_t ctx_key, std::uint64_t full_key,
                                    std::uint64_t c) {
  auto &slot = counts_[n - 1][full_key];
  if (slot == 0) {
    if (n == 1)
      ++unigram_types_;
    else
      ++contexts_[n - 1][ctx_key].types;
  }
  slot += c;
  if (n == 1)
    unigram_total_ += c;
  else
    contexts_[n - 1][ctx_key].total += c;
}

BackoffLanguageModel BackoffLanguageModel::Train(
    const std::vector<std::vector<TokenId>> &sentences, std::size_t vocab_size, int order,
    double discount) {
  BackoffLanguageModel m;
  m.order_ = order;
  m.vocab_size_ = vocab_size;
  m.discount_ = discount;
  m.CheckPackable();
  if (sentences.empty()) throw DataError("cannot train a language model on an empty corpus");
  m.counts_.resize(static_cast<std::size_t>(order));
  m.contexts_.resize(static_cast<std::size_t>(order));
  const TokenId eos = m.eos();
  std::vector<TokenId> padded;
  for (const auto &s : sentences) {
    padded.assign(static_cast<std::size_t>(order - 1), m.bos());
    for (TokenId t : s) {
      if (t < 1 || static_cast<std::size_t>(t) >= vocab_size)
        throw RangeError("training token " + std::to_string(t) + " outside vocab");
      padded.push_back(t);
    }
    padded.push_back(eos);
    for (std::size_t i = static_cast<std::size_t>(order - 1); i < padded.size(); ++i) {
      for (int n = 1; n <= order; ++n) {
        std::span<const TokenId> ctx(padded.data() + i - (n - 1), static_cast<std::size_t>(n - 1));
        m.AddCount(n, Pack(ctx), PackWith(ctx, padded[i]), 1);
      }
    }
  }
  return m;
}

double BackoffLanguageModel::Prob(TokenId token, std::span<const TokenId> history) const {
  CheckToken(token);
  const double d = discount_;
  const auto u_total = static_cast<double>(unigram_total_);
  double p;
  {
    auto it = counts_[0].find(static_cast<std::uint64_t>(token));
    const double c = it == counts_[0].end() ? 0.0 : static_cast<double>(it->second);
    p = std::max(c - d, 0.0) / u_total +
        d * static_cast<double>(unigram_types_) / u_total / static_cast<double>(support_size());
  }
  TokenId buf[kMaxOrder];
  for (int n = 2; n <= order_; ++n) {
    auto ctx = ContextOf(history, n, bos(), buf);
    auto cit = contexts_[n - 1].find(Pack(ctx));
    if (cit == contexts_[n - 1].end()) continue;
    const auto total = static_cast<double>(cit->second.total);
    auto it = counts_[n - 1].find(PackWith(ctx, token));
    const double c = it == counts_[n - 1].end() ? 0.0 : static_cast<double>(it->second);
    p = (std::max(c - d, 0.0) + d * static_cast<double>(cit->second.types) * p) / total;
  }
  return p;
}

std::uint64_t BackoffLanguageModel::Count(std::span<const TokenId> context, TokenId token) const {
  const std::size_t n = context.size() + 1;
  if (n > counts_.size()) return 0;
  auto it = counts_[n - 1].find(PackWith(context, token));
  return it == counts_[n - 1].end() ? 0 : it->second;
}

std::uint64_t BackoffLanguageModel::ContextCount(std::span<const TokenId> context) const {
  const std::size_t n = context.size() + 1;
  if (n == 1) return unigram_total_;
  if (n > contexts_.size()) return 0;
  auto it = contexts_[n - 1].find(Pack(context));
  return it == contexts_[n - 1].end() ? 0 : it->second.total;
}

std::uint32_t BackoffLanguageModel::ContextTypes(std::span<const TokenId> context) const {
  const std::size_t n = context.size() + 1;
  if (n == 1) return unigram_types_;
  if (n > contexts_.size()) return 0;
  auto it = contexts_[n - 1].find(Pack(context));
  return it == contexts_[n - 1].end() ? 0 : it->second.types;
}

double BackoffLanguageModel::MleProb(TokenId token, std::span<const TokenId> history) const {
  CheckToken(token);
  TokenId buf[kMaxOrder];
  auto ctx = ContextOf(history, order_, bos(), buf);
  const auto total = ContextCount(ctx);
  if (total == 0) return 0.0;
  return static_cast<double>(Count(ctx, token)) / static_cast<double>(total);
}

std::string BackoffLanguageModel::Serialize(
    const std::map<std::string, std::string> &extra_header) const {
  std::map<std::string, std::string> header = extra_header;
  header["order"] = std::to_string(order_);
  header["vocab_size"] = std::to_string(vocab_size_);
  header["vocab_hash"] = HexDigest(vocab_hash_);
  header["discount"] = ExactDouble(discount_);
  header.try_emplace("alpha", "-");
  header.try_emplace("parent_hash", "-");
  std::ostringstream os;
  os << "#p13n-ngram\n";
  for (const auto &[k, v] : header) os << '#' << k << '\t' << v << '\n';

  std::vector<std::tuple<int, std::vector<TokenId>, TokenId, std::uint64_t>> rows;
  for (int n = 1; n <= order_; ++n) {
    for (const auto &[key, count] : counts_[n - 1]) {
      std::vector<TokenId> ids(static_cast<std::size_t>(n));
      std::uint64_t k = key;
      for (int i = n - 1; i >= 0; --i) {
        ids[static_cast<std::size_t>(i)] = static_cast<TokenId>(k & 0xFFFF);
        k >>= 16;
      }
      TokenId tok = ids.back();
      ids.pop_back();
      rows.emplace_back(n, std::move(ids), tok, count);
    }
  }
  std::sort(rows.begin(), rows.end());
  for (const auto &[n, ctx, tok, count] : rows) {
    os << n << '\t';
    if (ctx.empty()) {
      os << '-';
    } else {
      for (std::size_t i = 0; i < ctx.size(); ++i) {
        if (i) os << ' ';
        os << IdName(ctx[i], vocab_size_);
      }
    }
    os << '\t' << IdName(tok, vocab_size_) << '\t' << count << '\n';
  }
  return os.str();
}

void BackoffLanguageModel::Save(const std::filesystem::path &path) const {
  WriteFile(path, Serialize());
}

BackoffLanguageModel BackoffLanguageModel::Parse(const std::string &text,
                                                 std::map<std::string, std::string> *header) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "#p13n-ngram")
    throw DataError("not an n-gram model file");
  std::map<std::string, std::string> h;
  BackoffLanguageModel m;
  bool sized = false;
  std::size_t line_no = 1;
  try {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      if (line[0] == '#') {
        auto cols = SplitChar(line.substr(1), '\t');
        if (cols.size() != 2) throw DataError("bad header line");
        h[cols[0]] = cols[1];
        continue;
      }
      if (!sized) {
        m.order_ = std::stoi(h.at("order"));
        m.vocab_size_ = std::stoul(h.at("vocab_size"));
        m.discount_ = std::stod(h.at("discount"));
        m.vocab_hash_ = std::stoull(h.at("vocab_hash"), nullptr, 16);
        m.CheckPackable();
        m.counts_.resize(static_cast<std::size_t>(m.order_));
        m.contexts_.resize(static_cast<std::size_t>(m.order_));
        sized = true;
      }
      auto cols = SplitChar(line, '\t');
      if (cols.size() != 4) throw DataError("expected 4 columns");
      const int n = std::stoi(cols[0]);
      if (n < 1 || n > m.order_) throw DataError("order out of range");
      std::vector<TokenId> ctx;
      if (cols[1] != "-")
        for (const auto &tok : SplitWhitespace(cols[1])) ctx.push_back(ParseId(tok, m.vocab_size_));
      if (static_cast<int>(ctx.size()) != n - 1) throw DataError("context length mismatch");
      const TokenId tok = ParseId(cols[2], m.vocab_size_);
      m.AddCount(n, Pack(ctx), PackWith(ctx, tok), std::stoull(cols[3]));
    }
  } catch (const std::logic_error &e) {
    throw DataError("n-gram model line " + std::to_string(line_no) + ": " + e.what());
  }
  if (!sized) throw DataError("n-gram model has no counts");
  if (header) *header = std::move(h);
  return m;
}

BackoffLanguageModel BackoffLanguageModel::Load(const std::filesystem::path &path) {
  return Parse(ReadFile(path));
}

std::uint64_t BackoffLanguageModel::Hash() const { return Fnv1a64(Serialize()); }

PersonalizedLanguageModel::PersonalizedLanguageModel(
    std::shared_ptr<const LanguageModel> general, std::shared_ptr<const BackoffLanguageModel> user,
    double alpha)
    : general_(std::move(general)), user_(std::move(user)), alpha_(alpha) {
  if (!(alpha_ >= 0.0 && alpha_ <= 1.0))
    throw ConfigError("personalization mix weight must be in [0, 1]");
  if (general_->vocab_size() != user_->vocab_size())
    throw ConfigError("general and user models disagree on vocab size");
}

double PersonalizedLanguageModel::Prob(TokenId token, std::span<const TokenId> history) const {
  return alpha_ * user_->Prob(token, history) + (1.0 - alpha_) * general_->Prob(token, history);
}

std::uint64_t PersonalizedLanguageModel::Hash() const {
  std::string key = HexDigest(general_->Hash()) + HexDigest(user_->Hash()) + ExactDouble(alpha_);
  return Fnv1a64(key);
}

void PersonalizedLanguageModel::Save(const std::filesystem::path &path) const {
  WriteFile(path, user_->Serialize({{"alpha", ExactDouble(alpha_)},
                                    {"parent_hash", HexDigest(general_->Hash())}}));
}

std::shared_ptr<PersonalizedLanguageModel> PersonalizedLanguageModel::Load(
    const std::filesystem::path &path, std::shared_ptr<const LanguageModel> general) {
  std::map<std::string, std::string> header;
  auto user = std::make_shared<BackoffLanguageModel>(
      BackoffLanguageModel::Parse(ReadFile(path), &header));
  if (header["alpha"] == "-") throw DataError(path.string() + " is not a personalized model");
  if (header["parent_hash"] != HexDigest(general->Hash()))
    throw ConfigError(path.string() + " was personalized from a different general model");
  return std::make_shared<PersonalizedLanguageModel>(std::move(general), std::move(user),
                                                     std::stod(header["alpha"]));
}

std::shared_ptr<const BackoffLanguageModel> TrainGeneral(
    const std::vector<std::vector<TokenId>> &sentences, std::size_t vocab_size, int order) {
  return std::make_shared<const BackoffLanguageModel>(
      BackoffLanguageModel::Train(sentences, vocab_size, order));
}

std::shared_ptr<const PersonalizedLanguageModel> Personalize(
    std::shared_ptr<const LanguageModel> general,
    const std::vector<std::vector<TokenId>> &user_sentences, const PersonalizationConfig &config) {
  if (!(config.mix_weight >= 0.0 && config.mix_weight <= 1.0))
    throw ConfigError("personalization mix weight must be in [0, 1]");
  if (user_sentences.empty()) throw DataError("personalization needs user sentences");
  auto user = std::make_shared<const BackoffLanguageModel>(
      BackoffLanguageModel::Train(user_sentences, general->vocab_size(), general->order()));
  return std::make_shared<const PersonalizedLanguageModel>(std::move(general), std::move(user),
                                                           config.mix_weight);
}

std::map<std::size_t, std::vector<std::string>> SubsetNested(
    const std::vector<std::string> &sentences, const std::vector<std::size_t> &sizes,
    std::uint64_t seed) {
  if (sizes.empty()) throw ConfigError("no subset sizes given");
  for (std::size_t i = 1; i < sizes.size(); ++i)
    if (sizes[i] <= sizes[i - 1]) throw ConfigError("subset sizes must be strictly increasing");
  if (sentences.size() < sizes.back())
    throw SkipUser("user has " + std::to_string(sentences.size()) + " sentences, needs " +
                   std::to_string(sizes.back()));
  std::vector<std::size_t> order(sentences.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.Shuffle(&order);
  std::map<std::size_t, std::vector<std::string>> out;
  for (std::size_t size : sizes) {
    std::vector<std::size_t> picked(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(size));
    std::sort(picked.begin(), picked.end());
    auto &subset = out[size];
    subset.reserve(size);
    for (std::size_t i : picked) subset.push_back(sentences[i]);
  }
  return out;
}

double Perplexity(const LanguageModel &model, const std::vector<std::vector<TokenId>> &sentences) {
  double log_sum = 0;
  std::size_t count = 0;
  for (const auto &s : sentences) {
    log_sum += model.SequenceLogProb(s);
    count += s.size() + 1;
  }
  if (count == 0) throw DataError("perplexity needs at least one sentence");
  return std::exp(-log_sum / static_cast<double>(count));
}

}  // namespace p13n
