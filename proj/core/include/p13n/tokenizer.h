// p13n/tokenizer.h
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
// Word-piece model trained by greedy pair merging. Words are encoded
// independently; a piece that continues a word carries the "##" prefix in
// its string form.

#ifndef P13N_TOKENIZER_H_
#define P13N_TOKENIZER_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace p13n {

using TokenId = std::int32_t;

inline constexpr TokenId kBlankId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr std::string_view kBlankPiece = "<blank>";
inline constexpr std::string_view kUnkPiece = "<unk>";
inline constexpr std::string_view kContinuation = "##";

struct Merge {
  std::string left;
  std::string right;
  int rank;
};

class WordPieceModel {
 public:
  WordPieceModel() = default;

  // Greedy training: every character of the corpus enters the vocab in both
  // word-initial and continuation form, then the most frequent adjacent
  // pair is merged until vocab_size pieces exist or no pair occurs twice.
  // Frequency ties go to the lexicographically smallest (left, right).
  static WordPieceModel Train(const std::vector<std::string> &sentences,
                              std::size_t vocab_size = 1024);

  static WordPieceModel Load(const std::filesystem::path &path);
  std::string Serialize() const;
  void Save(const std::filesystem::path &path) const;

  // Out-of-alphabet words become a single unk id and set *lossy.
  std::vector<TokenId> Encode(std::string_view text, bool *lossy = nullptr) const;
  std::vector<TokenId> EncodeWord(std::string_view word, bool *lossy = nullptr) const;
  // Throws RangeError on ids outside the vocab or on blank.
  std::string Decode(const std::vector<TokenId> &ids) const;

  std::size_t size() const { return pieces_.size(); }
  // Number of single-character pieces (both forms).
  std::size_t alphabet_size() const { return alphabet_size_; }
  const std::string &piece(TokenId id) const;
  TokenId id(std::string_view piece) const;  // kUnkId when absent
  bool IsContinuation(TokenId id) const;
  const std::vector<std::string> &pieces() const { return pieces_; }
  const std::vector<Merge> &merges() const { return merges_; }
  std::uint64_t Hash() const;

 private:
  void Index();

  std::vector<std::string> pieces_;
  std::vector<Merge> merges_;
  std::unordered_map<std::string, TokenId> piece_ids_;
  std::map<std::pair<std::string, std::string>, int> merge_rank_;
  std::size_t alphabet_size_ = 0;
};

}  // namespace p13n

#endif  // P13N_TOKENIZER_H_
