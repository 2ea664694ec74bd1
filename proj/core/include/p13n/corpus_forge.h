// p13n/corpus_forge.h
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
// Turns raw book texts plus utterance metadata into per-user datasets: one
// user per (speaker, book) pair, with the rest of the book as that user's
// personalization text.

#ifndef P13N_CORPUS_FORGE_H_
#define P13N_CORPUS_FORGE_H_

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace p13n {

struct RawBook {
  std::string book_id;
  std::string bytes;
  std::optional<std::string> declared_encoding;  // "utf-8", "windows-1252", "latin-1"
};

enum class TextEncoding { kUtf8, kWindows1252, kLatin1 };
const char *EncodingName(TextEncoding enc);

struct DecodedText {
  std::string text;  // UTF-8
  TextEncoding source_encoding;
};

// Tries the declared encoding first (if any), then UTF-8, Windows-1252 and
// Latin-1. Latin-1 rejects the C1 control range, so a byte that is undefined
// in Windows-1252 (0x81, 0x8D, 0x8F, 0x90, 0x9D) fails every strategy and
// raises EncodingError with its offset.
DecodedText NormalizeEncoding(const RawBook &book);

struct StrippedText {
  std::string body;
  bool start_marker = false;
  bool end_marker = false;
  std::optional<std::string> warning;
};

// Removes Project Gutenberg header/footer blocks. Markers are matched per
// line, case-insensitively, with THE/THIS and any run of asterisks.
StrippedText StripBoilerplate(std::string_view text);

std::vector<std::string> SegmentSentences(std::string_view body);

std::string NormalizeSentence(std::string_view raw);

// Length of the shared run that disqualifies an n-token sentence:
// ceil(0.8 n), at least 1.
std::size_t OverlapRunLength(std::size_t n_tokens);

// Keeps the sentences (normalized) that share no contiguous run of
// OverlapRunLength(n) tokens with any transcript (normalized) of the same
// book. Order is preserved.
std::vector<std::string> FilterOverlap(const std::vector<std::string> &sentences,
                                       const std::vector<std::string> &transcripts);

struct UtteranceRecord {
  std::string utterance_id;
  std::string speaker_id;
  std::string book_id;
  std::vector<std::string> transcript;  // uppercase words
  std::string split = "test";
};

using SentencePool = std::shared_ptr<const std::vector<std::string>>;

struct UserDataset {
  std::string user_id;  // "<speaker_id>-<book_id>"
  std::string speaker_id;
  std::string book_id;
  std::string split;
  std::vector<UtteranceRecord> utterances;
  SentencePool lm_sentences;  // shared between users reading the same book
};

// One dataset per (speaker, book), ordered by user_id. Throws
// MissingBookError listing every book that has utterances but no pool entry.
std::vector<UserDataset> ClusterUsers(
    const std::vector<UtteranceRecord> &utterances,
    const std::map<std::string, SentencePool> &lm_pool);

struct SplitStats {
  std::size_t user_count = 0;
  double avg_utterances = 0;
  double median_utterances = 0;
  std::size_t users_with_10_utterances = 0;
  std::size_t max_utterances = 0;
  std::size_t total_lm_sentences = 0;
  double avg_lm_sentences = 0;
  double median_lm_sentences = 0;
  std::size_t users_with_3k_sentences = 0;
  std::size_t max_lm_sentences = 0;
};

// Throws EmptySplitError when users is empty.
SplitStats ComputeSplitStats(std::span<const UserDataset> users);
// Keyed by split name.
std::map<std::string, SplitStats> ComputeStats(const std::vector<UserDataset> &users);

std::string FormatStatsTable(const std::map<std::string, SplitStats> &stats);

// Reads the utterance metadata TSV. The first line is a header naming the
// columns utterance_id, speaker_id, book_id, transcript and optionally split.
std::vector<UtteranceRecord> ReadUtteranceTsv(const std::filesystem::path &path);

// Book text → normalized, de-duplicated-against-transcripts sentences.
struct BookResult {
  std::string book_id;
  TextEncoding encoding = TextEncoding::kUtf8;
  std::optional<std::string> warning;
  std::size_t raw_sentences = 0;
  std::size_t discarded_overlap = 0;
  std::vector<std::string> sentences;
};
BookResult ProcessBook(const RawBook &book,
                       const std::vector<std::string> &book_transcripts);

struct ForgeReport {
  std::vector<std::string> warnings;
  std::vector<std::string> errors;  // per-file problems; non-empty means failure
  std::vector<UserDataset> users;
  std::map<std::string, SplitStats> stats;
};

// Full pipeline. Writes
//   <out>/lm_data/<book_id>_lm_data.txt
//   <out>/audio_data/<split>/<speaker>-<book>/utterances.tsv
//   <out>/metadata.tsv and <out>/stats.tsv
ForgeReport ForgeCorpus(const std::filesystem::path &books_dir,
                        const std::filesystem::path &metadata_tsv,
                        const std::filesystem::path &out_dir);

// Reads back a forged layout (users ordered by user_id). With
// with_lm_sentences false no lm_data file is opened and every user's pool is
// left null.
std::vector<UserDataset> LoadForgedDataset(const std::filesystem::path &dir,
                                           bool with_lm_sentences = true);
std::vector<std::string> LoadBookSentences(const std::filesystem::path &dir,
                                           const std::string &book_id);

}  // namespace p13n

#endif  // P13N_CORPUS_FORGE_H_
