// p13n/tokenizer.cc
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

#include "p13n/tokenizer.h"

#include <algorithm>
#include <set>
#include <sstream>
#include <tuple>

#include "p13n/errors.h"
#include "p13n/util.h"

namespace p13n {

namespace {

bool StartsWithMarker(std::string_view s) { return s.substr(0, kContinuation.size()) == kContinuation; }

std::string MergedPiece(const std::string &left, const std::string &right) {
  return left + right.substr(kContinuation.size());
}

// Splits a word into its character pieces: first in word-initial form, the
// rest with the continuation marker.
std::vector<std::string> CharPieces(std::string_view word) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  bool first = true;
  while (pos < word.size()) {
    std::size_t start = pos;
    if (!DecodeUtf8(word, &pos)) pos = start + 1;
    std::string ch(word.substr(start, pos - start));
    out.push_back(first ? ch : std::string(kContinuation) + ch);
    first = false;
  }
  return out;
}

using PairKey = std::pair<TokenId, TokenId>;

}  // namespace

WordPieceModel WordPieceModel::Train(const std::vector<std::string> &sentences,
                                     std::size_t vocab_size) {
  if (sentences.empty()) throw ConfigError("word-piece training needs a non-empty corpus");
  std::map<std::string, std::int64_t> word_freq;
  std::set<std::string> chars;
  for (const auto &s : sentences) {
    for (const auto &w : SplitWhitespace(s)) {
      ++word_freq[w];
      for (const auto &p : CharPieces(w)) chars.insert(StartsWithMarker(p) ? p.substr(2) : p);
    }
  }
  if (word_freq.empty()) throw ConfigError("word-piece training corpus has no words");

  WordPieceModel model;
  model.pieces_ = {std::string(kBlankPiece), std::string(kUnkPiece)};
  for (const auto &c : chars) model.pieces_.push_back(c);
  for (const auto &c : chars) model.pieces_.push_back(std::string(kContinuation) + c);
  model.alphabet_size_ = 2 * chars.size();
  if (vocab_size < model.alphabet_size_ + 2)
    throw ConfigError("vocab size " + std::to_string(vocab_size) + " is below alphabet size " +
                      std::to_string(model.alphabet_size_) + " + 2 reserved tokens");
  model.Index();

  std::vector<std::vector<TokenId>> words;
  std::vector<std::int64_t> freqs;
  for (const auto &[w, f] : word_freq) {
    std::vector<TokenId> syms;
    for (const auto &p : CharPieces(w)) syms.push_back(model.piece_ids_.at(p));
    words.push_back(std::move(syms));
    freqs.push_back(f);
  }

  std::map<PairKey, std::int64_t> pair_count;
  std::map<PairKey, std::vector<std::size_t>> pair_words;
  // Ordered by (-count, left string, right string): begin() is the next merge.
  std::set<std::tuple<std::int64_t, std::string, std::string, PairKey>> queue;
  auto entry = [&](const PairKey &k, std::int64_t c) {
    return std::make_tuple(-c, model.pieces_[k.first], model.pieces_[k.second], k);
  };
  auto adjust = [&](const PairKey &k, std::int64_t delta) {
    std::int64_t &c = pair_count[k];
    if (c > 0) queue.erase(entry(k, c));
    c += delta;
    if (c > 0) queue.insert(entry(k, c));
  };
  for (std::size_t wi = 0; wi < words.size(); ++wi) {
    const auto &syms = words[wi];
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      PairKey k{syms[i], syms[i + 1]};
      adjust(k, freqs[wi]);
      pair_words[k].push_back(wi);
    }
  }

  int rank = 0;
  while (model.pieces_.size() < vocab_size && !queue.empty()) {
    const auto [neg, left_s, right_s, key] = *queue.begin();
    if (-neg < 2) break;
    std::string merged = MergedPiece(left_s, right_s);
    TokenId merged_id;
    if (auto it = model.piece_ids_.find(merged); it != model.piece_ids_.end()) {
      merged_id = it->second;
    } else {
      merged_id = static_cast<TokenId>(model.pieces_.size());
      model.pieces_.push_back(merged);
      model.piece_ids_.emplace(merged, merged_id);
    }
    model.merges_.push_back({left_s, right_s, rank++});

    std::vector<std::size_t> affected = std::move(pair_words[key]);
    pair_words.erase(key);
    std::sort(affected.begin(), affected.end());
    affected.erase(std::unique(affected.begin(), affected.end()), affected.end());
    for (std::size_t wi : affected) {
      auto &syms = words[wi];
      const std::int64_t f = freqs[wi];
      bool present = false;
      for (std::size_t i = 0; i + 1 < syms.size(); ++i)
        if (syms[i] == key.first && syms[i + 1] == key.second) present = true;
      if (!present) continue;
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) adjust({syms[i], syms[i + 1]}, -f);
      std::vector<TokenId> next;
      for (std::size_t i = 0; i < syms.size(); ++i) {
        if (i + 1 < syms.size() && syms[i] == key.first && syms[i + 1] == key.second) {
          next.push_back(merged_id);
          ++i;
        } else {
          next.push_back(syms[i]);
        }
      }
      syms = std::move(next);
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
        PairKey k{syms[i], syms[i + 1]};
        adjust(k, f);
        pair_words[k].push_back(wi);
      }
    }
  }
  model.Index();
  return model;
}

void WordPieceModel::Index() {
  piece_ids_.clear();
  for (std::size_t i = 0; i < pieces_.size(); ++i)
    piece_ids_.emplace(pieces_[i], static_cast<TokenId>(i));
  merge_rank_.clear();
  for (const auto &m : merges_) merge_rank_.emplace(std::make_pair(m.left, m.right), m.rank);
  if (alphabet_size_ == 0) {
    for (const auto &p : pieces_) {
      std::string_view body = StartsWithMarker(p) ? std::string_view(p).substr(2) : std::string_view(p);
      std::size_t pos = 0;
      if (p == kBlankPiece || p == kUnkPiece) continue;
      if (DecodeUtf8(body, &pos) && pos == body.size()) ++alphabet_size_;
    }
  }
}

std::vector<TokenId> WordPieceModel::EncodeWord(std::string_view word, bool *lossy) const {
  std::vector<std::string> syms = CharPieces(word);
  if (syms.empty()) return {};
  for (const auto &s : syms) {
    if (!piece_ids_.contains(s)) {
      if (lossy) *lossy = true;
      return {kUnkId};
    }
  }
  while (syms.size() > 1) {
    int best_rank = -1;
    std::size_t best = 0;
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      auto it = merge_rank_.find({syms[i], syms[i + 1]});
      if (it != merge_rank_.end() && (best_rank < 0 || it->second < best_rank)) {
        best_rank = it->second;
        best = i;
      }
    }
    if (best_rank < 0) break;
    syms[best] = MergedPiece(syms[best], syms[best + 1]);
    syms.erase(syms.begin() + static_cast<std::ptrdiff_t>(best) + 1);
  }
  std::vector<TokenId> ids;
  ids.reserve(syms.size());
  for (const auto &s : syms) ids.push_back(piece_ids_.at(s));
  return ids;
}

std::vector<TokenId> WordPieceModel::Encode(std::string_view text, bool *lossy) const {
  if (lossy) *lossy = false;
  std::vector<TokenId> ids;
  for (const auto &w : SplitWhitespace(text)) {
    auto piece_ids = EncodeWord(w, lossy);
    ids.insert(ids.end(), piece_ids.begin(), piece_ids.end());
  }
  return ids;
}

std::string WordPieceModel::Decode(const std::vector<TokenId> &ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id <= kBlankId || static_cast<std::size_t>(id) >= pieces_.size())
      throw RangeError("token id " + std::to_string(id) + " outside word-piece vocab");
    const std::string &p = pieces_[id];
    if (StartsWithMarker(p)) {
      out += p.substr(kContinuation.size());
    } else {
      if (!out.empty()) out.push_back(' ');
      out += p;
    }
  }
  return out;
}

const std::string &WordPieceModel::piece(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= pieces_.size())
    throw RangeError("token id " + std::to_string(id) + " outside word-piece vocab");
  return pieces_[id];
}

TokenId WordPieceModel::id(std::string_view piece) const {
  auto it = piece_ids_.find(std::string(piece));
  return it == piece_ids_.end() ? kUnkId : it->second;
}

bool WordPieceModel::IsContinuation(TokenId id) const { return StartsWithMarker(piece(id)); }

std::string WordPieceModel::Serialize() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < pieces_.size(); ++i) os << pieces_[i] << '\t' << i << '\n';
  for (const auto &m : merges_) os << m.left << '\t' << m.right << '\t' << m.rank << '\n';
  return os.str();
}

void WordPieceModel::Save(const std::filesystem::path &path) const { WriteFile(path, Serialize()); }

WordPieceModel WordPieceModel::Load(const std::filesystem::path &path) {
  std::istringstream in(ReadFile(path));
  WordPieceModel model;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cols = SplitChar(line, '\t');
    try {
      if (cols.size() == 2) {
        if (std::stoul(cols[1]) != model.pieces_.size())
          throw DataError("piece ids must be dense and ordered");
        model.pieces_.push_back(cols[0]);
      } else if (cols.size() == 3) {
        model.merges_.push_back({cols[0], cols[1], std::stoi(cols[2])});
      } else {
        throw DataError("expected 2 or 3 tab-separated columns");
      }
    } catch (const std::logic_error &e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (model.pieces_.size() < 2 || model.pieces_[0] != kBlankPiece || model.pieces_[1] != kUnkPiece)
    throw DataError(path.string() + ": missing reserved pieces");
  model.Index();
  return model;
}

std::uint64_t WordPieceModel::Hash() const { return Fnv1a64(Serialize()); }

}  // namespace p13n
