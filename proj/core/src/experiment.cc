// p13n/experiment.cc
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

#include "p13n/experiment.h"

#include <algorithm>
#include <chrono>
#include <functional>
#include <iomanip>
#include <set>
#include <sstream>
#include <unordered_map>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "p13n/errors.h"
#include "p13n/util.h"

namespace p13n {
namespace fs = std::filesystem;

Preset ParsePreset(const std::string &name) {
  std::string n = name;
  for (auto &c : n) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (n == "BL1") return Preset::kBL1;
  if (n == "BL2") return Preset::kBL2;
  if (n == "BL3") return Preset::kBL3;
  if (n == "P13N") return Preset::kP13N;
  if (n == "LIMITED") return Preset::kLimited;
  if (n == "ADAPT") return Preset::kAdapt;
  throw ConfigError("unknown preset '" + name + "' (BL1, BL2, BL3, P13N, LIMITED, ADAPT)");
}

const char *PresetName(Preset p) {
  switch (p) {
    case Preset::kBL1: return "BL1";
    case Preset::kBL2: return "BL2";
    case Preset::kBL3: return "BL3";
    case Preset::kP13N: return "P13N";
    case Preset::kLimited: return "LIMITED";
    case Preset::kAdapt: return "ADAPT";
  }
  return "?";
}

const char *SystemName(System s) {
  switch (s) {
    case System::kBL1: return "BL1";
    case System::kBL2: return "BL2";
    case System::kBL3: return "BL3";
    case System::kP13N: return "P13N";
    case System::kAdapt: return "ADAPT";
    case System::kAdaptP13N: return "ADAPT+P13N";
  }
  return "?";
}

std::string SystemSpec::Label() const {
  std::string label = SystemName(system);
  const bool uses_lm = system != System::kBL1 && system != System::kAdapt;
  if (uses_lm && capacity) label += std::string("-") + CapacityName(*capacity);
  if (uses_lm && lm_size > 0) label += "@" + std::to_string(lm_size);
  if (uses_lm && ext_weight) label += "/w" + FixedDouble(*ext_weight, 2);
  return label;
}

const SplitResult &SystemResult::Split(const std::string &name) const {
  for (const auto &s : splits)
    if (s.split == name) return s;
  throw DataError("system " + label + " has no results for split " + name);
}

// ---------------------------------------------------------------- config

namespace {

struct Field {
  std::string section;
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string &)> set;
};

std::size_t ToSize(const std::string &v) {
  std::size_t used = 0;
  const unsigned long long x = std::stoull(v, &used);
  if (used != v.size() || v.find('-') != std::string::npos) throw std::invalid_argument(v);
  return static_cast<std::size_t>(x);
}

double ToDouble(const std::string &v) {
  std::size_t used = 0;
  const double x = std::stod(v, &used);
  if (used != v.size()) throw std::invalid_argument(v);
  return x;
}

std::string SizeList(const std::vector<std::size_t> &v) {
  std::vector<std::string> parts;
  for (auto x : v) parts.push_back(std::to_string(x));
  return Join(parts, ",");
}

std::string DoubleList(const std::vector<double> &v) {
  std::vector<std::string> parts;
  for (auto x : v) parts.push_back(ExactDouble(x));
  return Join(parts, ",");
}

template <typename T, typename F>
std::vector<T> ParseList(const std::string &v, F convert) {
  std::vector<T> out;
  if (Trim(v).empty()) return out;
  for (const auto &p : SplitChar(v, ',')) out.push_back(convert(std::string(Trim(p))));
  return out;
}

std::vector<Field> Fields(ExperimentConfig &c) {
  std::vector<Field> f;
  auto size_field = [&](const char *s, const char *k, std::size_t *p) {
    f.push_back({s, k, [p] { return std::to_string(*p); }, [p](const std::string &v) { *p = ToSize(v); }});
  };
  auto double_field = [&](const char *s, const char *k, double *p) {
    f.push_back({s, k, [p] { return ExactDouble(*p); }, [p](const std::string &v) { *p = ToDouble(v); }});
  };
  auto string_field = [&](const char *s, const char *k, std::string *p) {
    f.push_back({s, k, [p] { return *p; }, [p](const std::string &v) { *p = v; }});
  };
  f.push_back({"run", "preset", [&c] { return std::string(PresetName(c.preset)); },
               [&c](const std::string &v) { c.preset = ParsePreset(v); }});
  f.push_back({"run", "seed", [&c] { return std::to_string(c.seed); },
               [&c](const std::string &v) { c.seed = ToSize(v); }});
  string_field("run", "dataset", &c.dataset);
  string_field("run", "general_corpus", &c.general_corpus);
  size_field("tokenizer", "vocab_size", &c.vocab_size);
  f.push_back({"lm", "capacity", [&c] { return std::string(CapacityName(c.capacity)); },
               [&c](const std::string &v) { c.capacity = ParseCapacity(v); }});
  double_field("lm", "mix_weight", &c.mix_weight);
  size_field("decoder", "beam_width", &c.decoder.beam_width);
  size_field("decoder", "top_k", &c.decoder.top_k);
  double_field("decoder", "posterior_temperature", &c.decoder.posterior_temperature);
  double_field("decoder", "ext_weight", &c.decoder.ext_weight);
  double_field("decoder", "ilm_weight", &c.decoder.ilm_weight);
  double_field("decoder", "ilm_temperature", &c.decoder.ilm_temperature);
  size_field("synthetic", "users_per_split", &c.synthetic.users_per_split);
  size_field("synthetic", "utterances_per_user", &c.synthetic.utterances_per_user);
  size_field("synthetic", "lm_sentences_per_user", &c.synthetic.lm_sentences_per_user);
  size_field("synthetic", "general_sentences", &c.synthetic.general_sentences);
  size_field("synthetic", "shared_words", &c.synthetic.shared_words);
  size_field("synthetic", "general_topic_words", &c.synthetic.general_topic_words);
  size_field("synthetic", "book_topic_words", &c.synthetic.book_topic_words);
  size_field("synthetic", "successors", &c.synthetic.successors);
  double_field("synthetic", "topic_rate", &c.synthetic.topic_rate);
  double_field("synthetic", "shared_grammar", &c.synthetic.shared_grammar);
  double_field("synthetic", "book_rare_onsets", &c.synthetic.book_rare_onsets);
  size_field("synthetic", "min_words", &c.synthetic.min_words);
  size_field("synthetic", "max_words", &c.synthetic.max_words);
  double_field("acoustic", "blank_rate", &c.acoustic.blank_rate);
  size_field("acoustic", "max_neighbors", &c.acoustic.max_neighbors);
  double_field("acoustic", "prior_add_k", &c.acoustic.prior_add_k);
  double_field("acoustic", "prior_exponent", &c.acoustic.prior_exponent);
  double_field("acoustic", "model_mass", &c.acoustic.model_mass);
  double_field("acoustic", "label_blank_leak", &c.acoustic.render.label_blank_leak);
  double_field("acoustic", "blank_label_leak", &c.acoustic.render.blank_label_leak);
  size_field("acoustic", "bias_pieces", &c.acoustic.bias_pieces);
  double_field("acoustic", "bias_mass", &c.acoustic.bias_mass);
  double_field("adapt", "weight", &c.adapt.weight);
  double_field("adapt", "pseudo_count", &c.adapt.pseudo_count);
  size_field("adapt", "folds", &c.folds);
  size_field("adapt", "min_utterances", &c.min_adapt_utterances);
  f.push_back({"limited", "sizes", [&c] { return SizeList(c.limited_sizes); },
               [&c](const std::string &v) { c.limited_sizes = ParseList<std::size_t>(v, ToSize); }});
  f.push_back({"sweep", "weights", [&c] { return DoubleList(c.sweep_weights); },
               [&c](const std::string &v) { c.sweep_weights = ParseList<double>(v, ToDouble); }});
  size_field("eval", "resamples", &c.bootstrap.resamples);
  double_field("eval", "level", &c.bootstrap.level);
  f.push_back({"eval", "bootstrap_seed", [&c] { return std::to_string(c.bootstrap.seed); },
               [&c](const std::string &v) { c.bootstrap.seed = ToSize(v); }});
  double_field("eval", "histogram_bin_width", &c.histogram_bin_width);
  return f;
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  decoder.beam_width = 8;
  decoder.top_k = 4;
  decoder.ext_weight = 0.15;
  decoder.ilm_weight = 0.1;
  decoder.ilm_temperature = 1.0;
}

ExperimentConfig ExperimentConfig::Parse(const std::string &text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error &e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ExperimentConfig c;
  auto fields = Fields(c);
  for (const auto &[section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError("config: key '" + section + "' outside a section");
    for (const auto &[key, value] : body) {
      auto it = std::find_if(fields.begin(), fields.end(), [&](const Field &f) {
        return f.section == section && f.key == key;
      });
      if (it == fields.end()) throw ConfigError("config: unknown key [" + section + "] " + key);
      const std::string v(Trim(value.data()));
      try {
        it->set(v);
      } catch (const ConfigError &) {
        throw;
      } catch (const std::exception &) {
        throw ConfigError("config: bad value '" + v + "' for [" + section + "] " + key);
      }
    }
  }
  c.Validate();
  return c;
}

void ExperimentConfig::Validate() const {
  decoder.Validate();
  if (folds < 2) throw ConfigError("config: adapt folds must be at least 2");
  if (limited_sizes.empty()) throw ConfigError("config: no limited-data sizes");
  for (std::size_t i = 1; i < limited_sizes.size(); ++i)
    if (limited_sizes[i] <= limited_sizes[i - 1])
      throw ConfigError("config: limited-data sizes must be strictly increasing");
}

ExperimentConfig ExperimentConfig::Load(const fs::path &path) {
  if (!fs::exists(path)) throw ConfigError("config file " + path.string() + " does not exist");
  return Parse(ReadFile(path));
}

std::string ExperimentConfig::Serialize() const {
  ExperimentConfig copy = *this;
  std::ostringstream os;
  std::string section;
  for (const auto &f : Fields(copy)) {
    if (f.section != section) {
      if (!section.empty()) os << '\n';
      section = f.section;
      os << '[' << section << "]\n";
    }
    os << f.key << " = " << f.get() << '\n';
  }
  return os.str();
}

std::uint64_t ExperimentConfig::Hash() const { return Fnv1a64(Serialize()); }

// ---------------------------------------------------------------- experiment

namespace {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double Seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

NoiseProfile ProfileForSplit(const std::string &split) {
  return split.find("other") != std::string::npos ? NoiseProfile::kOther : NoiseProfile::kClean;
}

std::vector<std::string> ReadLines(const fs::path &path) {
  std::istringstream in(ReadFile(path));
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line))
    if (!Trim(line).empty()) out.emplace_back(Trim(line));
  return out;
}

}  // namespace

void Experiment::Time(const std::string &stage, double seconds) {
  std::lock_guard lock(mu_);
  timings_.push_back({stage, seconds});
}

void Experiment::Read(const fs::path &p) {
  std::lock_guard lock(mu_);
  if (std::find(inputs_.begin(), inputs_.end(), p) == inputs_.end()) inputs_.push_back(p);
}

std::vector<fs::path> Experiment::InputsRead() const {
  std::lock_guard lock(mu_);
  return inputs_;
}

std::vector<std::vector<TokenId>> Experiment::Tokenize(
    const std::vector<std::string> &sentences) const {
  std::unordered_map<std::string, std::vector<TokenId>> memo;
  std::vector<std::vector<TokenId>> out(sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    for (const auto &w : SplitWhitespace(sentences[i])) {
      auto it = memo.find(w);
      if (it == memo.end()) it = memo.emplace(w, wpm_.EncodeWord(w)).first;
      out[i].insert(out[i].end(), it->second.begin(), it->second.end());
    }
  }
  return out;
}

const ConfusionChannel &Experiment::ModelChannel(NoiseProfile p) const {
  return model_channels_.at(p);
}

Experiment::Experiment(ExperimentConfig config) : config_(std::move(config)) {
  config_.Validate();
  Stopwatch data_clock;
  std::vector<UserDataset> datasets;
  if (config_.dataset.empty()) {
    SyntheticCorpus corpus = GenerateSynthetic(config_.synthetic, config_.seed);
    general_ = std::move(corpus.general);
    datasets = std::move(corpus.users);
  } else {
    const fs::path dir = config_.dataset;
    if (!fs::exists(dir / "metadata.tsv"))
      throw DataError("dataset " + dir.string() + " has no metadata.tsv; run `forge` first");
    datasets = LoadForgedDataset(dir, false);
    Read(dir / "metadata.tsv");
    for (const auto &d : datasets) Read(dir / "audio_data" / d.split / d.user_id / "utterances.tsv");
    const fs::path general =
        config_.general_corpus.empty() ? dir / "general_corpus.txt" : fs::path(config_.general_corpus);
    if (!fs::exists(general))
      throw DataError("general LM corpus " + general.string() +
                      " is missing; set [run] general_corpus");
    general_ = ReadLines(general);
    Read(general);
  }
  if (datasets.empty()) throw DataError("dataset has no users");
  std::set<std::string> splits;
  for (auto &d : datasets) {
    if (d.utterances.empty()) continue;
    User u;
    u.user_id = d.user_id;
    u.split = d.split;
    u.book_id = d.book_id;
    u.profile = ProfileForSplit(d.split);
    for (const auto &rec : d.utterances) {
      u.utterance_ids.push_back(rec.utterance_id);
      u.references.push_back(rec.transcript);
    }
    u.personal = d.lm_sentences;
    splits.insert(u.split);
    users_.push_back(std::move(u));
  }
  splits_.assign(splits.begin(), splits.end());
  Time("data", data_clock.Seconds());

  Stopwatch tok_clock;
  wpm_ = WordPieceModel::Train(general_, config_.vocab_size);
  Time("tokenizer", tok_clock.Seconds());

  Stopwatch sim_clock;
  const std::size_t V = wpm_.size();
  general_tokens_ = Tokenize(general_);
  prior_ = InternalPrior::FromCorpus(general_tokens_, V, config_.acoustic.prior_add_k,
                                     config_.acoustic.prior_exponent);
  for (auto p : {NoiseProfile::kClean, NoiseProfile::kOther}) {
    true_channels_.emplace(p, ConfusionChannel::Build(wpm_, p, config_.acoustic.blank_rate,
                                                      config_.acoustic.max_neighbors));
    model_channels_.emplace(
        p, ConfusionChannel::Build(wpm_, p, config_.acoustic.blank_rate,
                                   config_.acoustic.max_neighbors, config_.acoustic.model_mass));
  }
  ParallelFor(users_.size(), [&](std::size_t ui) {
    User &u = users_[ui];
    std::map<TokenId, std::size_t> counts;
    for (const auto &words : u.references) {
      u.reference_tokens.push_back(wpm_.Encode(Join(words, " ")));
      for (TokenId t : u.reference_tokens.back()) ++counts[t];
    }
    // The speaker's systematic confusions: its most frequent confusable
    // pieces drift toward their least likely neighbour.
    const ConfusionChannel &base = true_channels_.at(u.profile);
    std::vector<std::pair<std::size_t, TokenId>> ranked;
    for (auto [t, n] : counts)
      if (base.Row(t).size() > 1) ranked.emplace_back(n, t);
    std::sort(ranked.begin(), ranked.end(), [](const auto &a, const auto &b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (std::size_t i = 0; i < ranked.size() && i < config_.acoustic.bias_pieces; ++i) {
      const TokenId r = ranked[i].second;
      TokenId target = kBlankId;
      for (const auto &[v, p] : base.Row(r))
        if (v != r && (target == kBlankId || prior_(v) < prior_(target))) target = v;
      u.bias.emplace_back(r, target);
    }
    const ConfusionChannel speaker =
        u.bias.empty() ? base : base.WithBias(u.bias, config_.acoustic.bias_mass);
    const ConfusionChannel &model = model_channels_.at(u.profile);
    for (std::size_t i = 0; i < u.references.size(); ++i) {
      const auto slots = Observe(u.reference_tokens[i], speaker,
                                 DeriveSeed(config_.seed, "observe/" + u.utterance_ids[i]));
      PosteriorLattice lat = Render(slots, model, prior_, config_.acoustic.render);
      lat.utterance_id = u.utterance_ids[i];
      lat.truth = u.reference_tokens[i];
      u.lattices.push_back(std::move(lat));
    }
  });
  Time("simulate", sim_clock.Seconds());
}

const std::vector<std::string> &Experiment::PersonalSentences(std::size_t u) {
  User &user = users_[u];
  if (!user.personal) {
    const fs::path dir = config_.dataset;
    const fs::path file = dir / "lm_data" / (user.book_id + "_lm_data.txt");
    if (!fs::exists(file))
      throw DataError("personal LM data " + file.string() + " is missing; run `forge` first");
    Read(file);
    user.personal = std::make_shared<const std::vector<std::string>>(
        LoadBookSentences(dir, user.book_id));
  }
  return *user.personal;
}

std::vector<std::size_t> Experiment::LimitedUsers() {
  if (config_.limited_sizes.empty()) throw ConfigError("no limited-data sizes configured");
  const std::size_t need = *std::max_element(config_.limited_sizes.begin(), config_.limited_sizes.end());
  std::vector<std::size_t> out;
  for (std::size_t u = 0; u < users_.size(); ++u)
    if (PersonalSentences(u).size() >= need) out.push_back(u);
  return out;
}

std::vector<std::size_t> Experiment::AdaptUsers() const {
  std::vector<std::size_t> out;
  const std::size_t need = std::max(config_.min_adapt_utterances, config_.folds);
  for (std::size_t u = 0; u < users_.size(); ++u)
    if (users_[u].references.size() >= need) out.push_back(u);
  return out;
}

std::shared_ptr<const BackoffLanguageModel> Experiment::GeneralLm(Capacity c) {
  auto it = general_lms_.find(c);
  if (it != general_lms_.end()) return it->second;
  Stopwatch clock;
  auto lm = TrainGeneral(general_tokens_, wpm_.size(), OrderForCapacity(c));
  Time(std::string("lm/general-") + CapacityName(c), clock.Seconds());
  general_lms_.emplace(c, lm);
  return lm;
}

std::shared_ptr<const LanguageModel> Experiment::PersonalLm(std::size_t u, Capacity c,
                                                            std::size_t size) {
  const auto key = std::make_tuple(u, c, size);
  auto it = personal_lms_.find(key);
  if (it != personal_lms_.end()) return it->second;
  auto general = GeneralLm(c);
  const auto &all = PersonalSentences(u);
  std::vector<std::string> chosen;
  if (size == 0) {
    chosen = all;
  } else {
    std::vector<std::size_t> sizes = config_.limited_sizes;
    if (std::find(sizes.begin(), sizes.end(), size) == sizes.end()) sizes = {size};
    chosen = SubsetNested(all, sizes, DeriveSeed(config_.seed, "subset/" + users_[u].user_id)).at(size);
  }
  PersonalizationConfig pc;
  pc.mix_weight = config_.mix_weight;
  auto lm = Personalize(general, Tokenize(chosen), pc);
  std::lock_guard lock(mu_);
  personal_lms_.emplace(key, lm);
  return lm;
}

std::shared_ptr<const BackoffLanguageModel> Experiment::UnionLm(Capacity c) {
  auto it = union_lms_.find(c);
  if (it != union_lms_.end()) return it->second;
  Stopwatch clock;
  std::vector<std::string> all;
  std::set<std::string> books;
  for (std::size_t u = 0; u < users_.size(); ++u) {
    if (!books.insert(users_[u].book_id).second) continue;
    const auto &s = PersonalSentences(u);
    all.insert(all.end(), s.begin(), s.end());
  }
  auto lm = std::make_shared<const BackoffLanguageModel>(
      BackoffLanguageModel::Train(Tokenize(all), wpm_.size(), OrderForCapacity(c)));
  Time(std::string("lm/union-") + CapacityName(c), clock.Seconds());
  union_lms_.emplace(c, lm);
  return lm;
}

DecoderConfig Experiment::DecoderFor(const SystemSpec &spec) const {
  DecoderConfig d = config_.decoder;
  if (spec.system == System::kBL1 || spec.system == System::kAdapt) {
    d.ext_weight = 0;
    d.ilm_weight = 0;
  } else if (spec.ext_weight) {
    d.ext_weight = *spec.ext_weight;
    if (d.ext_weight == 0) d.ilm_weight = 0;
  }
  return d;
}

void Experiment::EnsureAdapted(const std::vector<std::size_t> &users) {
  Stopwatch clock;
  std::vector<std::size_t> todo;
  for (auto u : users)
    if (users_[u].adapted.empty()) todo.push_back(u);
  if (todo.empty()) return;
  ParallelFor(todo.size(), [&](std::size_t k) {
    User &u = users_[todo[k]];
    const std::size_t n = u.lattices.size();
    if (n < std::max(config_.min_adapt_utterances, config_.folds))
      throw SkipUser("user " + u.user_id + " has too few utterances for adaptation");
    std::vector<PosteriorLattice> adapted(n);
    const auto folds = KFoldSplit(n, config_.folds, DeriveSeed(config_.seed, "folds/" + u.user_id));
    const ConfusionChannel &base = ModelChannel(u.profile);
    for (const auto &fold : folds) {
      std::vector<AdaptationPair> pairs;
      for (auto i : fold.train) pairs.push_back({&u.lattices[i], u.reference_tokens[i]});
      const ConfusionChannel ch = AdaptChannel(base, pairs, prior_, config_.adapt);
      for (auto i : fold.test) {
        adapted[i] = Rerender(u.lattices[i], ch, prior_, config_.acoustic.render);
        adapted[i].utterance_id = u.lattices[i].utterance_id;
        adapted[i].truth = u.lattices[i].truth;
      }
    }
    u.adapted = std::move(adapted);
  });
  Time("adapt", clock.Seconds());
}

SystemResult Experiment::Evaluate(const SystemSpec &spec_in, const std::vector<std::size_t> &users) {
  SystemSpec spec = spec_in;
  if (!spec.capacity) spec.capacity = config_.capacity;
  SystemResult result;
  result.label = spec.Label();
  std::vector<std::size_t> subset = users;
  if (subset.empty())
    for (std::size_t u = 0; u < users_.size(); ++u) subset.push_back(u);
  const bool adapted = spec.system == System::kAdapt || spec.system == System::kAdaptP13N;
  if (adapted) EnsureAdapted(subset);
  const DecoderConfig decoder = DecoderFor(spec);
  const bool fused = decoder.ext_weight > 0;

  Stopwatch lm_clock;
  std::vector<std::shared_ptr<const LanguageModel>> lms(users_.size());
  if (fused) {
    if (spec.system == System::kP13N || spec.system == System::kAdaptP13N) {
      GeneralLm(*spec.capacity);
      for (auto u : subset) PersonalSentences(u);
      std::vector<std::shared_ptr<const LanguageModel>> built(subset.size());
      ParallelFor(subset.size(),
                  [&](std::size_t k) { built[k] = PersonalLm(subset[k], *spec.capacity, spec.lm_size); });
      for (std::size_t k = 0; k < subset.size(); ++k) lms[subset[k]] = built[k];
    } else {
      for (auto u : subset) {
        if (spec.system == System::kBL2)
          lms[u] = GeneralLm(*spec.capacity);
        else if (spec.system == System::kBL3)
          lms[u] = UnionLm(*spec.capacity);
      }
    }
  }
  Time("lm/" + result.label, lm_clock.Seconds());

  Stopwatch clock;
  for (const auto &split : splits_) {
    std::vector<UserDecodeInput> inputs;
    for (auto u : subset) {
      if (users_[u].split != split) continue;
      UserDecodeInput in;
      in.user_id = users_[u].user_id;
      const auto &lats = adapted ? users_[u].adapted : users_[u].lattices;
      for (const auto &l : lats) in.lattices.push_back(&l);
      in.references = users_[u].references;
      in.lm = lms[u];
      inputs.push_back(std::move(in));
    }
    if (inputs.empty()) continue;
    SplitResult sr;
    sr.split = split;
    sr.users = DecodeUsers(inputs, decoder, wpm_, &prior_);
    std::vector<UserReport> reports;
    for (const auto &r : sr.users) reports.push_back(r.report);
    sr.macro = MacroAverageWer(reports, config_.bootstrap);
    sr.pooled = PooledWer(reports);
    result.splits.push_back(std::move(sr));
  }
  Time("decode/" + result.label, clock.Seconds());
  return result;
}

// ---------------------------------------------------------------- reports

namespace {

std::string Pct(double wer, int decimals) { return FixedDouble(100.0 * wer, decimals); }

std::string FileSafe(const std::string &label) {
  std::string s = label;
  for (auto &c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '.') c = '_';
  return s;
}

class ReportWriter {
 public:
  ReportWriter(Experiment &e, fs::path out) : e_(e), out_(std::move(out)) {}

  void Write(const std::string &rel, const std::string &content) {
    WriteFile(out_ / rel, content);
    files_.push_back(rel);
  }

  void Systems(const std::vector<SystemResult> &systems) {
    std::ostringstream report, per_user, markers;
    report << "system\tsplit\tusers\tmacro_wer\tci_lower\tci_upper\tfull_set_wer\n";
    per_user << "system\tsplit\tuser_id\tutterances\terrors\treference_words\twer\n";
    markers << "system\tsplit\tmacro_wer\tfull_set_wer\n";
    for (const auto &s : systems) {
      for (const auto &sp : s.splits) {
        report << s.label << '\t' << sp.split << '\t' << sp.users.size() << '\t'
               << Pct(sp.macro.mean, 4) << '\t' << Pct(sp.macro.ci.lower, 4) << '\t'
               << Pct(sp.macro.ci.upper, 4) << '\t' << Pct(sp.pooled, 4) << '\n';
        markers << s.label << '\t' << sp.split << '\t' << Pct(sp.macro.mean, 4) << '\t'
                << Pct(sp.pooled, 4) << '\n';
        std::vector<double> values;
        for (const auto &u : sp.users) {
          const auto &r = u.report;
          per_user << s.label << '\t' << sp.split << '\t' << r.user_id << '\t'
                   << r.utterances.size() << '\t' << r.errors() << '\t' << r.reference_words()
                   << '\t' << Pct(r.wer(), 4) << '\n';
          values.push_back(100.0 * r.wer());
        }
        Write("histogram_" + FileSafe(s.label) + "_" + FileSafe(sp.split) + ".csv",
              HistogramCsv(Histogram(values, e_.config().histogram_bin_width)));
      }
    }
    Write("report.tsv", report.str());
    Write("per_user.tsv", per_user.str());
    Write("histogram_markers.tsv", markers.str());
    Write("table.txt", Table(systems));
  }

  std::string Table(const std::vector<SystemResult> &systems) const {
    std::ostringstream os;
    os << std::left << std::setw(22) << "System";
    for (const auto &split : e_.splits())
      os << std::setw(26) << (split + " avg/user [95% CI]") << std::setw(12) << (split + " full");
    os << '\n';
    for (const auto &s : systems) {
      os << std::setw(22) << s.label;
      for (const auto &split : e_.splits()) {
        auto it = std::find_if(s.splits.begin(), s.splits.end(),
                               [&](const SplitResult &r) { return r.split == split; });
        if (it == s.splits.end()) {
          os << std::setw(26) << "-" << std::setw(12) << "-";
          continue;
        }
        os << std::setw(26)
           << (Pct(it->macro.mean, 1) + " [" + Pct(it->macro.ci.lower, 1) + ", " +
               Pct(it->macro.ci.upper, 1) + "]")
           << std::setw(12) << Pct(it->pooled, 1);
      }
      os << '\n';
    }
    return os.str();
  }

  void WinLoss(const SystemResult &a, const SystemResult &b) {
    std::ostringstream os;
    os << "user_id\tutterance_id\tlabel\treference\t" << a.label << '\t' << b.label << "\tcounts\n";
    for (const auto &split : e_.splits()) {
      auto ia = std::find_if(a.splits.begin(), a.splits.end(), [&](auto &r) { return r.split == split; });
      auto ib = std::find_if(b.splits.begin(), b.splits.end(), [&](auto &r) { return r.split == split; });
      if (ia == a.splits.end() || ib == b.splits.end()) continue;
      for (std::size_t k = 0; k < ia->users.size(); ++k) {
        const std::string &uid = ia->users[k].report.user_id;
        std::size_t u = 0;
        while (e_.user_id(u) != uid) ++u;
        const auto records = WinLossDiff(ia->users[k].outputs, ib->users[k].outputs,
                                         e_.PersonalSentences(u));
        os << WinLossTsv(uid, records);
      }
    }
    Write("winloss.tsv", os.str());
  }

  void Finish() {
    Write("config.ini", e_.config().Serialize());
    nlohmann::ordered_json m;
    m["preset"] = PresetName(e_.config().preset);
    m["seed"] = e_.config().seed;
    m["config_hash"] = HexDigest(e_.config().Hash());
    m["inputs"] = nlohmann::json::array();
    if (e_.config().dataset.empty())
      m["inputs"].push_back({{"path", "synthetic"}, {"hash", HexDigest(e_.config().Hash())}});
    for (const auto &p : e_.InputsRead())
      m["inputs"].push_back({{"path", p.string()}, {"hash", HashFile(p)}});
    m["outputs"] = nlohmann::json::array();
    for (const auto &f : files_)
      m["outputs"].push_back({{"path", f}, {"hash", HashFile(out_ / f)}});
    m["timings"] = nlohmann::json::array();
    for (const auto &t : e_.timings())
      m["timings"].push_back({{"stage", t.stage}, {"seconds", t.seconds}});
    WriteFile(out_ / "manifest.json", m.dump(2) + "\n");
    files_.push_back("manifest.json");
  }

  std::vector<fs::path> files() const { return {files_.begin(), files_.end()}; }

 private:
  Experiment &e_;
  fs::path out_;
  std::vector<std::string> files_;
};

}  // namespace

RunOutputs RunPreset(Experiment &experiment, const fs::path &out_dir) {
  const Preset preset = experiment.config().preset;
  if (preset == Preset::kLimited) return RunLimited(experiment, out_dir);
  std::vector<SystemSpec> specs = {{System::kBL1}};
  std::vector<std::size_t> users;
  switch (preset) {
    case Preset::kBL1: break;
    case Preset::kBL2: specs.push_back({System::kBL2}); break;
    case Preset::kBL3:
      specs.push_back({System::kBL2});
      specs.push_back({System::kBL3});
      break;
    case Preset::kP13N:
      specs.push_back({System::kBL2});
      specs.push_back({System::kP13N});
      break;
    case Preset::kAdapt:
      specs.push_back({System::kP13N});
      specs.push_back({System::kAdapt});
      specs.push_back({System::kAdaptP13N});
      users = experiment.AdaptUsers();
      if (users.empty()) throw DataError("no users have enough utterances for adaptation");
      break;
    case Preset::kLimited: break;
  }
  RunOutputs out;
  for (const auto &s : specs) out.systems.push_back(experiment.Evaluate(s, users));
  ReportWriter w(experiment, out_dir);
  w.Systems(out.systems);
  if (preset == Preset::kP13N) w.WinLoss(out.systems[1], out.systems[2]);
  w.Finish();
  out.files = w.files();
  return out;
}

RunOutputs RunLimited(Experiment &experiment, const fs::path &out_dir) {
  const auto users = experiment.LimitedUsers();
  const auto &sizes = experiment.config().limited_sizes;
  if (users.empty())
    throw DataError("no users have " + std::to_string(sizes.back()) + " personal sentences");
  RunOutputs out;
  out.systems.push_back(experiment.Evaluate({System::kBL1}, users));
  out.systems.push_back(experiment.Evaluate({System::kBL2}, users));
  for (auto n : sizes) {
    SystemSpec s{System::kP13N};
    s.lm_size = n;
    out.systems.push_back(experiment.Evaluate(s, users));
  }
  out.systems.push_back(experiment.Evaluate({System::kP13N}, users));

  std::ostringstream os;
  os << "split\tkind\tsize\tusers\tmacro_wer\tci_lower\tci_upper\tfull_set_wer\n";
  for (const auto &split : experiment.splits()) {
    for (std::size_t i = 0; i < out.systems.size(); ++i) {
      const auto &sys = out.systems[i];
      auto it = std::find_if(sys.splits.begin(), sys.splits.end(),
                             [&](const SplitResult &r) { return r.split == split; });
      if (it == sys.splits.end()) continue;
      std::string kind = "p13n", size;
      if (i == 0 || i == 1) {
        kind = "baseline";
        size = i == 0 ? "BL1" : "BL2";
      } else {
        size = i - 2 < sizes.size() ? std::to_string(sizes[i - 2]) : "all";
      }
      os << split << '\t' << kind << '\t' << size << '\t' << it->users.size() << '\t'
         << Pct(it->macro.mean, 4) << '\t' << Pct(it->macro.ci.lower, 4) << '\t'
         << Pct(it->macro.ci.upper, 4) << '\t' << Pct(it->pooled, 4) << '\n';
    }
  }
  ReportWriter w(experiment, out_dir);
  w.Write("trend.tsv", os.str());
  w.Write("table.txt", w.Table(out.systems));
  w.Finish();
  out.files = w.files();
  return out;
}

RunOutputs RunSweep(Experiment &experiment, const fs::path &out_dir) {
  const auto &weights = experiment.config().sweep_weights;
  if (weights.empty()) throw ConfigError("sweep needs at least one weight");
  for (double w : weights)
    if (!(w >= 0)) throw ConfigError("sweep weights must be non-negative");
  const Capacity cap = experiment.config().capacity;

  std::ostringstream os;
  os << "split\tlm\tweight\tusers\tmacro_wer\tci_lower\tci_upper\tfull_set_wer\tbest\tstatus\n";
  for (const auto &split : experiment.splits()) {
    std::vector<UserDecodeInput> inputs;
    std::vector<std::size_t> ids;
    for (std::size_t u = 0; u < experiment.num_users(); ++u)
      if (experiment.user_split(u) == split) ids.push_back(u);
    for (auto u : ids) {
      UserDecodeInput in;
      in.user_id = experiment.user_id(u);
      for (const auto &l : experiment.lattices(u)) in.lattices.push_back(&l);
      in.references = experiment.references(u);
      inputs.push_back(std::move(in));
    }
    std::vector<std::shared_ptr<const LanguageModel>> general(ids.size(), experiment.GeneralLm(cap));
    std::vector<std::shared_ptr<const LanguageModel>> personal;
    for (auto u : ids) personal.push_back(experiment.PersonalLm(u, cap, 0));

    std::vector<SweepCell> cells;
    for (double w : weights) {
      SystemSpec spec{System::kP13N};
      spec.ext_weight = w;
      const DecoderConfig d = experiment.DecoderFor(w == 0 ? SystemSpec{System::kBL1} : spec);
      if (w == 0) {
        cells.push_back({"none", d, {}});
      } else {
        cells.push_back({std::string("general-") + CapacityName(cap), d, general});
        cells.push_back({std::string("p13n-") + CapacityName(cap), d, personal});
      }
    }
    const auto results =
        Sweep(inputs, cells, experiment.wpm(), &experiment.prior(), experiment.config().bootstrap);
    std::map<std::string, std::size_t> best;
    for (std::size_t i = 0; i < results.size(); ++i) {
      const auto &r = results[i];
      if (!r.ok || r.lm_name == "none") continue;
      auto it = best.find(r.lm_name);
      if (it == best.end() || r.macro.mean < results[it->second].macro.mean) best[r.lm_name] = i;
    }
    for (std::size_t i = 0; i < results.size(); ++i) {
      const auto &r = results[i];
      os << split << '\t' << r.lm_name << '\t' << ExactDouble(r.config.ext_weight) << '\t'
         << inputs.size() << '\t';
      if (r.ok)
        os << Pct(r.macro.mean, 4) << '\t' << Pct(r.macro.ci.lower, 4) << '\t'
           << Pct(r.macro.ci.upper, 4) << '\t' << Pct(r.pooled, 4);
      else
        os << "-\t-\t-\t-";
      const bool is_best = best.count(r.lm_name) && best.at(r.lm_name) == i;
      os << '\t' << (is_best ? "*" : "") << '\t' << (r.ok ? "ok" : "error: " + r.error) << '\n';
    }
  }
  ReportWriter w(experiment, out_dir);
  w.Write("sweep.tsv", os.str());
  w.Finish();
  RunOutputs out;
  out.files = w.files();
  return out;
}

}  // namespace p13n
