// p13n/util.h
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
// Small shared helpers: stable hashing, UTF-8 handling, string splitting,
// number formatting and a deterministic parallel-for.

#ifndef P13N_UTIL_H_
#define P13N_UTIL_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace p13n {

// FNV-1a, 64 bit. Stable across platforms; used for content hashes in model
// headers, lattice files and run manifests.
std::uint64_t Fnv1a64(std::string_view data,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);
std::string HexDigest(std::uint64_t h);
std::string HashFile(const std::filesystem::path &path);

// Decodes one UTF-8 code point starting at text[pos]. Returns std::nullopt on
// malformed input (overlong forms, surrogates and values above U+10FFFF
// included). On success advances pos past the sequence.
std::optional<char32_t> DecodeUtf8(std::string_view text, std::size_t *pos);
void AppendUtf8(char32_t cp, std::string *out);
std::vector<char32_t> ToCodePoints(std::string_view text);

std::vector<std::string> SplitWhitespace(std::string_view text);
std::vector<std::string> SplitChar(std::string_view text, char sep);
std::string Join(const std::vector<std::string> &parts, std::string_view sep);
std::string_view Trim(std::string_view text);

// Shortest round-trippable decimal form ("%.17g").
// Shortest decimal form that reads back as the same double.
std::string ExactDouble(double v);
// Fixed decimals, used for report tables.
std::string FixedDouble(double v, int decimals);

std::string ReadFile(const std::filesystem::path &path);
void WriteFile(const std::filesystem::path &path, std::string_view content);

// Seeded generator with portable draws. std::mt19937_64 output is fixed by
// the standard; the std:: distributions are not, so draws are derived here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  std::uint64_t Next() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double Uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  // Uniform integer in [0, n).
  std::size_t Below(std::size_t n) {
    return static_cast<std::size_t>(Uniform() * static_cast<double>(n));
  }
  template <typename T>
  void Shuffle(std::vector<T> *v) {
    for (std::size_t i = v->size(); i > 1; --i) std::swap((*v)[i - 1], (*v)[Below(i)]);
  }
  // Index drawn proportionally to non-negative weights (at least one > 0).
  std::size_t Categorical(const std::vector<double> &weights);

 private:
  std::mt19937_64 engine_;
};

// Derives an independent stream seed from a base seed and a label.
std::uint64_t DeriveSeed(std::uint64_t base, std::string_view label);

// Number of workers from P13N_WORKERS, default 1.
int WorkerCount();

// Runs fn(i) for i in [0, n) on WorkerCount() threads. fn must only write to
// slots owned by i; results are therefore independent of scheduling. The
// first exception thrown by any task is rethrown after all workers stop.
void ParallelFor(std::size_t n, const std::function<void(std::size_t)> &fn);

}  // namespace p13n

#endif  // P13N_UTIL_H_
