// p13n/corpus_forge.cc
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

#include "p13n/corpus_forge.h"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>
#include <unordered_map>

#include "p13n/errors.h"
#include "p13n/util.h"

namespace p13n {

namespace {

// Windows-1252 0x80-0x9F; zero marks the five undefined bytes.
constexpr std::array<char32_t, 32> kCp1252High = {
    0x20AC, 0,      0x201A, 0x0192, 0x201E, 0x2026, 0x2020, 0x2021,
    0x02C6, 0x2030, 0x0160, 0x2039, 0x0152, 0,      0x017D, 0,
    0,      0x2018, 0x2019, 0x201C, 0x201D, 0x2022, 0x2013, 0x2014,
    0x02DC, 0x2122, 0x0161, 0x203A, 0x0153, 0,      0x017E, 0x0178};

// Each decoder returns the offset of the first bad byte, or npos.
std::size_t DecodeAsUtf8(std::string_view bytes, std::string *out) {
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    std::size_t start = pos;
    if (!DecodeUtf8(bytes, &pos)) return start;
  }
  out->assign(bytes);
  return std::string::npos;
}

std::size_t DecodeAsCp1252(std::string_view bytes, std::string *out) {
  std::string text;
  text.reserve(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const auto b = static_cast<unsigned char>(bytes[i]);
    char32_t cp = b;
    if (b >= 0x80 && b <= 0x9F) {
      cp = kCp1252High[b - 0x80];
      if (cp == 0) return i;
    }
    AppendUtf8(cp, &text);
  }
  *out = std::move(text);
  return std::string::npos;
}

std::size_t DecodeAsLatin1(std::string_view bytes, std::string *out) {
  std::string text;
  text.reserve(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const auto b = static_cast<unsigned char>(bytes[i]);
    if (b >= 0x80 && b <= 0x9F) return i;  // C1 controls never occur in prose
    AppendUtf8(b, &text);
  }
  *out = std::move(text);
  return std::string::npos;
}

std::optional<TextEncoding> ParseEncodingLabel(std::string label) {
  std::transform(label.begin(), label.end(), label.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (label == "utf-8" || label == "utf8" || label == "ascii" ||
      label == "us-ascii")
    return TextEncoding::kUtf8;
  if (label == "windows-1252" || label == "cp1252") return TextEncoding::kWindows1252;
  if (label == "latin-1" || label == "iso-8859-1" || label == "latin1")
    return TextEncoding::kLatin1;
  return std::nullopt;
}

bool IsPunctuation(char32_t cp) {
  if (cp < 0x80) return std::ispunct(static_cast<int>(cp)) != 0;
  switch (cp) {
    case 0x00A1: case 0x00A7: case 0x00AB: case 0x00B6: case 0x00B7:
    case 0x00BB: case 0x00BF:
      return true;
    default:
      break;
  }
  return (cp >= 0x2010 && cp <= 0x2027) || (cp >= 0x2030 && cp <= 0x205E) ||
         (cp >= 0x3001 && cp <= 0x3003) || (cp >= 0x3008 && cp <= 0x3011) ||
         (cp >= 0xFF01 && cp <= 0xFF0F);
}

bool IsClosingMark(char c) {
  return c == '"' || c == '\'' || c == ')' || c == ']';
}

std::string UpperAscii(std::string s) {
  for (auto &c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

// Word immediately before position end (exclusive), letters only, uppercased.
std::string PrecedingWord(std::string_view s, std::size_t end) {
  std::size_t b = end;
  while (b > 0 && std::isalpha(static_cast<unsigned char>(s[b - 1]))) --b;
  return UpperAscii(std::string(s.substr(b, end - b)));
}

bool IsAbbreviation(const std::string &word) {
  return word == "MR" || word == "MRS" || word == "DR" || word == "ST";
}

double Median(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return static_cast<double>(v[n / 2]);
  return (static_cast<double>(v[n / 2 - 1]) + static_cast<double>(v[n / 2])) / 2.0;
}

}  // namespace

const char *EncodingName(TextEncoding enc) {
  switch (enc) {
    case TextEncoding::kUtf8: return "utf-8";
    case TextEncoding::kWindows1252: return "windows-1252";
    case TextEncoding::kLatin1: return "latin-1";
  }
  return "?";
}

DecodedText NormalizeEncoding(const RawBook &book) {
  if (book.bytes.empty()) throw DataError("book '" + book.book_id + "' is empty");
  std::vector<TextEncoding> order;
  if (book.declared_encoding) {
    auto declared = ParseEncodingLabel(*book.declared_encoding);
    if (!declared)
      throw ConfigError("unknown encoding label '" + *book.declared_encoding + "'");
    order.push_back(*declared);
  }
  for (auto enc : {TextEncoding::kUtf8, TextEncoding::kWindows1252,
                   TextEncoding::kLatin1}) {
    if (std::find(order.begin(), order.end(), enc) == order.end()) order.push_back(enc);
  }
  std::size_t bad = std::string::npos;
  for (auto enc : order) {
    DecodedText out{{}, enc};
    std::size_t offset = std::string::npos;
    switch (enc) {
      case TextEncoding::kUtf8: offset = DecodeAsUtf8(book.bytes, &out.text); break;
      case TextEncoding::kWindows1252: offset = DecodeAsCp1252(book.bytes, &out.text); break;
      case TextEncoding::kLatin1: offset = DecodeAsLatin1(book.bytes, &out.text); break;
    }
    if (offset == std::string::npos) return out;
    bad = std::min(bad, offset);
  }
  // Every strategy failed; the earliest failure among them is the one that
  // also failed in the last (most permissive) strategy or earlier.
  throw EncodingError(book.book_id, bad);
}

StrippedText StripBoilerplate(std::string_view text) {
  static const std::regex kStart(
      R"(^\s*\*+\s*START\s+OF\s+(THE|THIS)\s+PROJECT\s+GUTENBERG\s+E-?BOOK)",
      std::regex::icase | std::regex::ECMAScript);
  static const std::regex kEnd(
      R"(^\s*\*+\s*END\s+OF\s+(THE|THIS)\s+PROJECT\s+GUTENBERG\s+E-?BOOK)",
      std::regex::icase | std::regex::ECMAScript);
  // Older files close with a bare "End of [the] Project Gutenberg's ..." line.
  static const std::regex kEndAlt(
      R"(^\s*END\s+OF\s+(THE\s+|THIS\s+)?PROJECT\s+GUTENBERG)",
      std::regex::icase | std::regex::ECMAScript);

  std::optional<std::size_t> body_begin;  // offset after the start line
  std::optional<std::size_t> start_line;
  std::optional<std::size_t> body_end;  // offset of the end line
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::size_t line_end = nl == std::string_view::npos ? text.size() : nl;
    std::string line(text.substr(pos, line_end - pos));
    if (!start_line && std::regex_search(line, kStart)) {
      start_line = pos;
      body_begin = nl == std::string_view::npos ? text.size() : nl + 1;
    } else if (!body_end &&
               (std::regex_search(line, kEnd) || std::regex_search(line, kEndAlt))) {
      body_end = pos;
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }

  StrippedText out;
  out.start_marker = start_line.has_value();
  out.end_marker = body_end.has_value();
  if (start_line && body_end && *body_end < *start_line)
    throw MalformedBoilerplateError("start marker follows end marker");
  if (!start_line && !body_end) {
    out.body = std::string(text);
    out.warning = "no Project Gutenberg boilerplate markers found";
    return out;
  }
  std::size_t b = body_begin.value_or(0);
  std::size_t e = body_end.value_or(text.size());
  out.body = std::string(Trim(text.substr(b, e - b)));
  if (!start_line) out.warning = "no start marker found";
  if (!body_end) out.warning = "no end marker found";
  return out;
}

std::vector<std::string> SegmentSentences(std::string_view body) {
  std::vector<std::string> sentences;
  std::string current;
  auto flush = [&] {
    std::string collapsed;
    bool space = false;
    for (char c : current) {
      if (std::isspace(static_cast<unsigned char>(c))) {
        space = !collapsed.empty();
      } else {
        if (space) collapsed.push_back(' ');
        space = false;
        collapsed.push_back(c);
      }
    }
    if (!collapsed.empty()) sentences.push_back(std::move(collapsed));
    current.clear();
  };
  const std::size_t n = body.size();
  for (std::size_t i = 0; i < n; ++i) {
    const char c = body[i];
    current.push_back(c == '\n' || c == '\r' ? ' ' : c);
    if (c != '.' && c != '!' && c != '?') continue;
    const std::size_t mark = i;
    std::size_t j = i + 1;
    while (j < n && (body[j] == '.' || body[j] == '!' || body[j] == '?')) {
      current.push_back(body[j]);
      ++j;
    }
    while (j < n && IsClosingMark(body[j])) {
      current.push_back(body[j]);
      ++j;
    }
    i = j - 1;
    if (j < n && !std::isspace(static_cast<unsigned char>(body[j]))) continue;
    if (c == '.' && IsAbbreviation(PrecedingWord(body, mark)))
      continue;
    flush();
  }
  flush();
  return sentences;
}

std::string NormalizeSentence(std::string_view raw) {
  std::vector<std::string> words;
  for (const auto &word : SplitWhitespace(raw)) {
    std::vector<char32_t> cps = ToCodePoints(word);
    std::size_t b = 0, e = cps.size();
    while (b < e && IsPunctuation(cps[b])) ++b;
    while (e > b && IsPunctuation(cps[e - 1])) --e;
    if (b == e) continue;
    std::string out;
    for (std::size_t k = b; k < e; ++k) {
      char32_t cp = cps[k];
      if (cp >= 'a' && cp <= 'z') cp = cp - 'a' + 'A';
      AppendUtf8(cp, &out);
    }
    words.push_back(std::move(out));
  }
  return Join(words, " ");
}

std::size_t OverlapRunLength(std::size_t n_tokens) {
  return std::max<std::size_t>(1, (4 * n_tokens + 4) / 5);
}

namespace {

constexpr std::uint64_t kHashBase = 0x9E3779B97F4A7C15ULL;

// Index over all transcripts: word ids plus, per requested run length, a
// table from rolling hash to the (transcript, start) pairs producing it.
class RunIndex {
 public:
  explicit RunIndex(const std::vector<std::string> &transcripts) {
    for (const auto &t : transcripts) {
      std::vector<int> ids;
      for (const auto &w : SplitWhitespace(t)) {
        auto [it, inserted] = vocab_.try_emplace(w, static_cast<int>(vocab_.size()) + 1);
        ids.push_back(it->second);
      }
      docs_.push_back(std::move(ids));
    }
  }

  int Lookup(const std::string &w) const {
    auto it = vocab_.find(w);
    return it == vocab_.end() ? 0 : it->second;
  }

  bool Contains(const std::vector<int> &ids, std::size_t start, std::size_t k) {
    const auto &table = TableFor(k);
    auto it = table.find(HashRun(ids, start, k));
    if (it == table.end()) return false;
    for (auto [doc, pos] : it->second) {
      if (std::equal(ids.begin() + start, ids.begin() + start + k,
                     docs_[doc].begin() + pos))
        return true;
    }
    return false;
  }

  // Rolling scan of every k-window of ids; windows holding unknown words
  // (id 0) are skipped.
  bool AnyWindowContained(const std::vector<int> &ids, std::size_t k) {
    if (ids.size() < k) return false;
    const auto &table = TableFor(k);
    if (table.empty()) return false;
    const std::uint64_t top = Power(k - 1);
    std::uint64_t h = 0;
    std::size_t unknown = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i >= k) {
        h -= static_cast<std::uint64_t>(ids[i - k]) * top;
        if (ids[i - k] == 0) --unknown;
      }
      h = h * kHashBase + static_cast<std::uint64_t>(ids[i]);
      if (ids[i] == 0) ++unknown;
      if (i + 1 < k || unknown > 0) continue;
      std::size_t start = i + 1 - k;
      auto it = table.find(h);
      if (it == table.end()) continue;
      for (auto [doc, pos] : it->second) {
        if (std::equal(ids.begin() + start, ids.begin() + start + k,
                       docs_[doc].begin() + pos))
          return true;
      }
    }
    return false;
  }

 private:
  using Table = std::unordered_map<std::uint64_t, std::vector<std::pair<std::size_t, std::size_t>>>;

  static std::uint64_t Power(std::size_t e) {
    std::uint64_t p = 1;
    for (std::size_t i = 0; i < e; ++i) p *= kHashBase;
    return p;
  }

  static std::uint64_t HashRun(const std::vector<int> &ids, std::size_t start, std::size_t k) {
    std::uint64_t h = 0;
    for (std::size_t i = start; i < start + k; ++i)
      h = h * kHashBase + static_cast<std::uint64_t>(ids[i]);
    return h;
  }

  const Table &TableFor(std::size_t k) {
    auto it = tables_.find(k);
    if (it != tables_.end()) return it->second;
    Table table;
    for (std::size_t d = 0; d < docs_.size(); ++d) {
      const auto &ids = docs_[d];
      if (ids.size() < k) continue;
      for (std::size_t s = 0; s + k <= ids.size(); ++s)
        table[HashRun(ids, s, k)].emplace_back(d, s);
    }
    return tables_.emplace(k, std::move(table)).first->second;
  }

  std::unordered_map<std::string, int> vocab_;
  std::vector<std::vector<int>> docs_;
  std::unordered_map<std::size_t, Table> tables_;
};

}  // namespace

std::vector<std::string> FilterOverlap(const std::vector<std::string> &sentences,
                                       const std::vector<std::string> &transcripts) {
  RunIndex index(transcripts);
  std::vector<std::string> kept;
  kept.reserve(sentences.size());
  for (const auto &s : sentences) {
    std::vector<int> ids;
    for (const auto &w : SplitWhitespace(s)) ids.push_back(index.Lookup(w));
    if (ids.empty() || !index.AnyWindowContained(ids, OverlapRunLength(ids.size())))
      kept.push_back(s);
  }
  return kept;
}

std::vector<UserDataset> ClusterUsers(
    const std::vector<UtteranceRecord> &utterances,
    const std::map<std::string, SentencePool> &lm_pool) {
  std::map<std::string, UserDataset> by_user;
  std::set<std::string> missing;
  for (const auto &u : utterances) {
    if (u.speaker_id.empty() || u.book_id.empty())
      throw DataError("utterance '" + u.utterance_id + "' lacks speaker or book id");
    auto pool = lm_pool.find(u.book_id);
    if (pool == lm_pool.end()) {
      missing.insert(u.book_id);
      continue;
    }
    std::string user_id = u.speaker_id + "-" + u.book_id;
    auto [it, inserted] = by_user.try_emplace(user_id);
    UserDataset &user = it->second;
    if (inserted) {
      user.user_id = user_id;
      user.speaker_id = u.speaker_id;
      user.book_id = u.book_id;
      user.split = u.split;
      user.lm_sentences = pool->second;
    } else if (user.split != u.split) {
      throw DataError("user " + user_id + " spans splits " + user.split + " and " + u.split);
    }
    user.utterances.push_back(u);
  }
  if (!missing.empty())
    throw MissingBookError(std::vector<std::string>(missing.begin(), missing.end()));
  std::vector<UserDataset> users;
  users.reserve(by_user.size());
  for (auto &[id, user] : by_user) users.push_back(std::move(user));
  return users;
}

SplitStats ComputeSplitStats(std::span<const UserDataset> users) {
  if (users.empty()) throw EmptySplitError("split has no users");
  SplitStats s;
  s.user_count = users.size();
  std::vector<std::size_t> utts, sents;
  std::size_t total_utts = 0;
  for (const auto &u : users) {
    const std::size_t nu = u.utterances.size();
    const std::size_t ns = u.lm_sentences ? u.lm_sentences->size() : 0;
    utts.push_back(nu);
    sents.push_back(ns);
    total_utts += nu;
    s.total_lm_sentences += ns;
    if (nu >= 10) ++s.users_with_10_utterances;
    if (ns >= 3000) ++s.users_with_3k_sentences;
    s.max_utterances = std::max(s.max_utterances, nu);
    s.max_lm_sentences = std::max(s.max_lm_sentences, ns);
  }
  const auto n = static_cast<double>(users.size());
  s.avg_utterances = static_cast<double>(total_utts) / n;
  s.avg_lm_sentences = static_cast<double>(s.total_lm_sentences) / n;
  s.median_utterances = Median(std::move(utts));
  s.median_lm_sentences = Median(std::move(sents));
  return s;
}

std::map<std::string, SplitStats> ComputeStats(const std::vector<UserDataset> &users) {
  std::map<std::string, std::vector<UserDataset>> by_split;
  for (const auto &u : users) by_split[u.split].push_back(u);
  std::map<std::string, SplitStats> out;
  for (const auto &[split, group] : by_split) out[split] = ComputeSplitStats(group);
  return out;
}

std::string FormatStatsTable(const std::map<std::string, SplitStats> &stats) {
  std::ostringstream os;
  os << "metric";
  for (const auto &[split, s] : stats) os << '\t' << split;
  os << '\n';
  auto row = [&](const char *name, auto get) {
    os << name;
    for (const auto &[split, s] : stats) os << '\t' << get(s);
    os << '\n';
  };
  row("users", [](const SplitStats &s) { return std::to_string(s.user_count); });
  row("utts_avg_per_user", [](const SplitStats &s) { return FixedDouble(s.avg_utterances, 1); });
  row("utts_median_per_user", [](const SplitStats &s) { return FixedDouble(s.median_utterances, 1); });
  row("users_with_ge10_utts", [](const SplitStats &s) { return std::to_string(s.users_with_10_utterances); });
  row("utts_max_per_user", [](const SplitStats &s) { return std::to_string(s.max_utterances); });
  row("lm_sentences_total", [](const SplitStats &s) { return std::to_string(s.total_lm_sentences); });
  row("lm_sentences_avg_per_user", [](const SplitStats &s) { return FixedDouble(s.avg_lm_sentences, 1); });
  row("lm_sentences_median_per_user", [](const SplitStats &s) { return FixedDouble(s.median_lm_sentences, 1); });
  row("users_with_ge3k_sentences", [](const SplitStats &s) { return std::to_string(s.users_with_3k_sentences); });
  row("lm_sentences_max_per_user", [](const SplitStats &s) { return std::to_string(s.max_lm_sentences); });
  return os.str();
}

std::vector<UtteranceRecord> ReadUtteranceTsv(const std::filesystem::path &path) {
  std::istringstream in(ReadFile(path));
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty metadata file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = SplitChar(line, '\t');
  auto column = [&](const std::string &name) -> int {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  };
  const int c_utt = column("utterance_id"), c_spk = column("speaker_id"),
            c_book = column("book_id"), c_text = column("transcript"),
            c_split = column("split");
  if (c_utt < 0 || c_spk < 0 || c_book < 0 || c_text < 0)
    throw DataError(path.string() +
                    ": header must name utterance_id, speaker_id, book_id, transcript");
  std::vector<UtteranceRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (Trim(line).empty()) continue;
    auto cols = SplitChar(line, '\t');
    if (cols.size() < header.size())
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " columns");
    UtteranceRecord r;
    r.utterance_id = cols[c_utt];
    r.speaker_id = cols[c_spk];
    r.book_id = cols[c_book];
    r.transcript = SplitWhitespace(NormalizeSentence(cols[c_text]));
    if (c_split >= 0) r.split = cols[c_split];
    if (r.transcript.empty())
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": empty transcript");
    out.push_back(std::move(r));
  }
  return out;
}

BookResult ProcessBook(const RawBook &book,
                       const std::vector<std::string> &book_transcripts) {
  BookResult result;
  result.book_id = book.book_id;
  DecodedText decoded = NormalizeEncoding(book);
  result.encoding = decoded.source_encoding;
  StrippedText stripped = StripBoilerplate(decoded.text);
  result.warning = stripped.warning;
  std::vector<std::string> normalized;
  for (const auto &raw : SegmentSentences(stripped.body)) {
    std::string s = NormalizeSentence(raw);
    if (!s.empty()) normalized.push_back(std::move(s));
  }
  result.raw_sentences = normalized.size();
  result.sentences = FilterOverlap(normalized, book_transcripts);
  result.discarded_overlap = normalized.size() - result.sentences.size();
  return result;
}

ForgeReport ForgeCorpus(const std::filesystem::path &books_dir,
                        const std::filesystem::path &metadata_tsv,
                        const std::filesystem::path &out_dir) {
  namespace fs = std::filesystem;
  ForgeReport report;
  std::vector<UtteranceRecord> utterances = ReadUtteranceTsv(metadata_tsv);

  std::map<std::string, std::vector<std::string>> transcripts_by_book;
  for (const auto &u : utterances)
    transcripts_by_book[u.book_id].push_back(Join(u.transcript, " "));

  std::vector<std::string> book_ids;
  for (const auto &[id, t] : transcripts_by_book) book_ids.push_back(id);
  std::vector<std::optional<BookResult>> results(book_ids.size());
  std::vector<std::string> errors(book_ids.size());
  ParallelFor(book_ids.size(), [&](std::size_t i) {
    const fs::path file = books_dir / (book_ids[i] + ".txt");
    try {
      RawBook book{book_ids[i], ReadFile(file), std::nullopt};
      results[i] = ProcessBook(book, transcripts_by_book.at(book_ids[i]));
    } catch (const Error &e) {
      errors[i] = file.string() + ": " + e.what();
    }
  });

  std::map<std::string, SentencePool> pool;
  for (std::size_t i = 0; i < book_ids.size(); ++i) {
    if (!errors[i].empty()) {
      report.errors.push_back(errors[i]);
      continue;
    }
    const BookResult &r = *results[i];
    if (r.warning) report.warnings.push_back("book " + r.book_id + ": " + *r.warning);
    std::string body;
    for (const auto &s : r.sentences) {
      body += s;
      body += '\n';
    }
    WriteFile(out_dir / "lm_data" / (r.book_id + "_lm_data.txt"), body);
    pool[r.book_id] = std::make_shared<const std::vector<std::string>>(r.sentences);
  }
  if (!report.errors.empty()) return report;

  report.users = ClusterUsers(utterances, pool);
  std::ostringstream meta;
  meta << "split\tuser_id\tspeaker_id\tbook_id\tnum_utterances\tnum_lm_sentences\n";
  for (const auto &user : report.users) {
    std::ostringstream tsv;
    tsv << "utterance_id\tspeaker_id\tbook_id\ttranscript\n";
    for (const auto &u : user.utterances)
      tsv << u.utterance_id << '\t' << u.speaker_id << '\t' << u.book_id << '\t'
          << Join(u.transcript, " ") << '\n';
    WriteFile(out_dir / "audio_data" / user.split / user.user_id / "utterances.tsv", tsv.str());
    meta << user.split << '\t' << user.user_id << '\t' << user.speaker_id << '\t'
         << user.book_id << '\t' << user.utterances.size() << '\t'
         << user.lm_sentences->size() << '\n';
  }
  WriteFile(out_dir / "metadata.tsv", meta.str());
  report.stats = ComputeStats(report.users);
  WriteFile(out_dir / "stats.tsv", FormatStatsTable(report.stats));
  return report;
}

std::vector<std::string> LoadBookSentences(const std::filesystem::path &dir,
                                           const std::string &book_id) {
  std::istringstream lm(ReadFile(dir / "lm_data" / (book_id + "_lm_data.txt")));
  std::vector<std::string> sentences;
  std::string s;
  while (std::getline(lm, s))
    if (!s.empty()) sentences.push_back(s);
  return sentences;
}

std::vector<UserDataset> LoadForgedDataset(const std::filesystem::path &dir,
                                           bool with_lm_sentences) {
  std::istringstream meta(ReadFile(dir / "metadata.tsv"));
  std::string line;
  std::getline(meta, line);
  std::map<std::string, SentencePool> pools;
  std::vector<UserDataset> users;
  while (std::getline(meta, line)) {
    if (Trim(line).empty()) continue;
    auto cols = SplitChar(line, '\t');
    if (cols.size() < 4) throw DataError("metadata.tsv: malformed row '" + line + "'");
    UserDataset user;
    user.split = cols[0];
    user.user_id = cols[1];
    user.speaker_id = cols[2];
    user.book_id = cols[3];
    if (with_lm_sentences) {
      auto &pool = pools[user.book_id];
      if (!pool)
        pool = std::make_shared<const std::vector<std::string>>(LoadBookSentences(dir, user.book_id));
      user.lm_sentences = pool;
    }
    auto utts = ReadUtteranceTsv(dir / "audio_data" / user.split / user.user_id / "utterances.tsv");
    for (auto &u : utts) u.split = user.split;
    user.utterances = std::move(utts);
    users.push_back(std::move(user));
  }
  std::sort(users.begin(), users.end(),
            [](const UserDataset &a, const UserDataset &b) { return a.user_id < b.user_id; });
  return users;
}

}  // namespace p13n
