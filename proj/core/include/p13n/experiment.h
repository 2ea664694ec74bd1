// p13n/experiment.h
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

// End-to-end experiment grid: data (forged or synthetic), tokenizer, LMs,
// simulated lattices, decoding and evaluation, with report emission.

#ifndef P13N_EXPERIMENT_H_
#define P13N_EXPERIMENT_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "p13n/acoustic_sim.h"
#include "p13n/corpus_forge.h"
#include "p13n/eval_metrics.h"
#include "p13n/fusion_decoder.h"
#include "p13n/language_model.h"
#include "p13n/synthetic.h"
#include "p13n/tokenizer.h"

namespace p13n {

enum class Preset { kBL1, kBL2, kBL3, kP13N, kLimited, kAdapt };
Preset ParsePreset(const std::string &name);
const char *PresetName(Preset p);

struct AcousticConfig {
  double blank_rate = 0.2;
  std::size_t max_neighbors = 4;
  double prior_add_k = 1.0;
  double prior_exponent = 0.3;
  double model_mass = 0.5;  // confusion mass the renderer assumes; < 0: the profile's
  RenderConfig render{0.1, 0.05};
  std::size_t bias_pieces = 12;  // per-speaker systematic confusions
  double bias_mass = 0.7;
};

struct ExperimentConfig {
  Preset preset = Preset::kP13N;
  std::uint64_t seed = 1;
  std::string dataset;         // forged dataset directory; empty selects the synthetic benchmark
  std::string general_corpus;  // defaults to <dataset>/general_corpus.txt
  std::size_t vocab_size = 1024;
  Capacity capacity = Capacity::kM;
  double mix_weight = 0.5;
  DecoderConfig decoder;  // fusion systems; no-fusion systems zero both LM weights
  SyntheticConfig synthetic;
  AcousticConfig acoustic;
  AdaptConfig adapt;
  std::size_t folds = 5;
  std::size_t min_adapt_utterances = 10;
  std::vector<std::size_t> limited_sizes = {200, 500, 1000, 3000};
  std::vector<double> sweep_weights = {0.0, 0.15, 0.22, 0.36, 0.45, 0.55};
  BootstrapConfig bootstrap;
  double histogram_bin_width = 2.0;  // WER percent

  ExperimentConfig();
  // INI text: [section] headers and key = value lines, '#' or ';' comments.
  // Unknown sections or keys and unparsable values throw ConfigError.
  static ExperimentConfig Parse(const std::string &text);
  static ExperimentConfig Load(const std::filesystem::path &path);
  // Throws ConfigError for settings no run can use.
  void Validate() const;
  // Canonical form; Parse(Serialize()) reproduces the config.
  std::string Serialize() const;
  std::uint64_t Hash() const;
};

enum class System { kBL1, kBL2, kBL3, kP13N, kAdapt, kAdaptP13N };
const char *SystemName(System s);

struct SystemSpec {
  SystemSpec(System s = System::kBL1) : system(s) {}  // NOLINT: implicit on purpose

  System system;
  std::optional<Capacity> capacity;  // default: config capacity
  std::size_t lm_size = 0;           // personal sentences used; 0 means all
  std::optional<double> ext_weight;  // default: config decoder weight
  std::string Label() const;
};

struct SplitResult {
  std::string split;
  MacroAverage macro;
  double pooled = 0;
  std::vector<UserDecodeResult> users;
};

struct SystemResult {
  std::string label;
  std::vector<SplitResult> splits;  // in Experiment::splits() order
  const SplitResult &Split(const std::string &name) const;
};

struct StageTiming {
  std::string stage;
  double seconds = 0;
};

class Experiment {
 public:
  // Loads or generates the data, trains the tokenizer and the internal
  // prior, and simulates every utterance's lattice.
  explicit Experiment(ExperimentConfig config);

  const ExperimentConfig &config() const { return config_; }
  const std::vector<std::string> &splits() const { return splits_; }
  std::size_t num_users() const { return users_.size(); }
  const std::string &user_id(std::size_t u) const { return users_[u].user_id; }
  const std::string &user_split(std::size_t u) const { return users_[u].split; }
  const WordPieceModel &wpm() const { return wpm_; }
  const InternalPrior &prior() const { return prior_; }
  const std::vector<Words> &references(std::size_t u) const { return users_[u].references; }
  const std::vector<PosteriorLattice> &lattices(std::size_t u) const { return users_[u].lattices; }

  // Users eligible for the limited-data grid (enough personal sentences for
  // the largest size) or for cross-validated adaptation.
  std::vector<std::size_t> LimitedUsers();
  std::vector<std::size_t> AdaptUsers() const;

  // Evaluates one system over the given users (all users when empty).
  SystemResult Evaluate(const SystemSpec &spec, const std::vector<std::size_t> &users = {});

  // Personal sentences of user u; loading them from disk is recorded.
  const std::vector<std::string> &PersonalSentences(std::size_t u);

  // Files read so far, in first-read order.
  std::vector<std::filesystem::path> InputsRead() const;
  const std::vector<StageTiming> &timings() const { return timings_; }

  DecoderConfig DecoderFor(const SystemSpec &spec) const;
  std::shared_ptr<const BackoffLanguageModel> GeneralLm(Capacity c);
  std::shared_ptr<const LanguageModel> PersonalLm(std::size_t u, Capacity c, std::size_t size);
  // Trained once on every user's personal text (each book counted once).
  std::shared_ptr<const BackoffLanguageModel> UnionLm(Capacity c);

 private:
  struct User {
    std::string user_id;
    std::string split;
    std::string book_id;
    NoiseProfile profile = NoiseProfile::kClean;
    std::vector<std::string> utterance_ids;
    std::vector<Words> references;
    std::vector<std::vector<TokenId>> reference_tokens;
    std::vector<std::pair<TokenId, TokenId>> bias;
    std::vector<PosteriorLattice> lattices;
    std::vector<PosteriorLattice> adapted;  // filled on first use
    SentencePool personal;
  };

  void Time(const std::string &stage, double seconds);
  void Read(const std::filesystem::path &p);
  std::vector<std::vector<TokenId>> Tokenize(const std::vector<std::string> &sentences) const;
  const ConfusionChannel &ModelChannel(NoiseProfile p) const;
  void EnsureAdapted(const std::vector<std::size_t> &users);

  ExperimentConfig config_;
  std::vector<std::string> splits_;
  std::vector<User> users_;
  std::vector<std::string> general_;
  std::vector<std::vector<TokenId>> general_tokens_;
  WordPieceModel wpm_;
  InternalPrior prior_;
  std::map<NoiseProfile, ConfusionChannel> true_channels_;
  std::map<NoiseProfile, ConfusionChannel> model_channels_;
  std::map<Capacity, std::shared_ptr<const BackoffLanguageModel>> general_lms_;
  std::map<std::tuple<std::size_t, Capacity, std::size_t>, std::shared_ptr<const LanguageModel>>
      personal_lms_;
  std::map<Capacity, std::shared_ptr<const BackoffLanguageModel>> union_lms_;
  std::vector<std::filesystem::path> inputs_;
  std::vector<StageTiming> timings_;
  mutable std::mutex mu_;
};

struct RunOutputs {
  std::vector<std::filesystem::path> files;  // written, relative to the out dir
  std::vector<SystemResult> systems;
};

// `run`: evaluates the preset's systems and writes report.tsv, table.txt,
// per_user.tsv, histogram CSVs with markers, win/loss TSV where two systems
// are compared, config.ini and manifest.json.
RunOutputs RunPreset(Experiment &experiment, const std::filesystem::path &out_dir);
// `limited`: trend.tsv over the nested sizes plus baseline lines.
RunOutputs RunLimited(Experiment &experiment, const std::filesystem::path &out_dir);
// `sweep`: sweep.tsv over the weight list for the general and p13n LMs.
RunOutputs RunSweep(Experiment &experiment, const std::filesystem::path &out_dir);

}  // namespace p13n

#endif  // P13N_EXPERIMENT_H_
