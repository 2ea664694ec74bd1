// p13n/p13n_main.cc
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

// Command-line front end. Exit codes: 0 success, 1 usage or configuration
// error, 2 data error, 3 internal error. P13N_WORKERS sets the worker count.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "p13n/acoustic_sim.h"
#include "p13n/corpus_forge.h"
#include "p13n/errors.h"
#include "p13n/eval_metrics.h"
#include "p13n/experiment.h"
#include "p13n/fusion_decoder.h"
#include "p13n/language_model.h"
#include "p13n/synthetic.h"
#include "p13n/tokenizer.h"
#include "p13n/util.h"

namespace fs = std::filesystem;
using namespace p13n;

namespace {

constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kInternal = 3;

std::vector<std::string> ReadSentences(const fs::path &path) {
  if (!fs::exists(path)) throw DataError("input " + path.string() + " does not exist");
  std::istringstream in(ReadFile(path));
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line))
    if (!Trim(line).empty()) out.emplace_back(Trim(line));
  return out;
}

std::vector<std::vector<TokenId>> Tokenize(const WordPieceModel &wpm,
                                           const std::vector<std::string> &sentences) {
  std::vector<std::vector<TokenId>> out;
  out.reserve(sentences.size());
  for (const auto &s : sentences) out.push_back(wpm.Encode(s));
  return out;
}

WordPieceModel LoadWpm(const fs::path &path) {
  if (!fs::exists(path)) throw DataError("word-piece model " + path.string() + " does not exist");
  return WordPieceModel::Load(path);
}

// Shared options of the experiment subcommands.
struct ExperimentArgs {
  std::string config;
  std::string dataset;
  std::string out;
  std::optional<std::uint64_t> seed;

  void Add(CLI::App *cmd) {
    cmd->add_option("--config", config, "INI experiment config");
    cmd->add_option("--dataset", dataset, "forged dataset directory (default: synthetic benchmark)");
    cmd->add_option("--seed", seed, "random seed");
    cmd->add_option("--out", out, "output directory")->required();
  }

  ExperimentConfig Resolve() const {
    ExperimentConfig c = config.empty() ? ExperimentConfig() : ExperimentConfig::Load(config);
    if (!dataset.empty()) c.dataset = dataset;
    if (seed) c.seed = *seed;
    return c;
  }
};

void PrintRun(const RunOutputs &out, const fs::path &dir) {
  for (const auto &f : out.files) std::cout << (dir / f).string() << '\n';
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Personalized language model fusion toolkit"};
  app.require_subcommand(1);

  // forge
  auto *forge = app.add_subcommand("forge", "build per-user datasets from book texts");
  std::string books_dir, metadata, forge_out, forge_config;
  bool synthetic = false;
  std::uint64_t forge_seed = 1;
  forge->add_option("--books", books_dir, "directory of <book_id>.txt files");
  forge->add_option("--metadata", metadata, "utterance TSV (utterance_id, speaker_id, book_id, transcript[, split])");
  forge->add_flag("--synthetic", synthetic, "write the seeded synthetic benchmark instead");
  forge->add_option("--config", forge_config, "INI config ([synthetic] section) for --synthetic");
  forge->add_option("--seed", forge_seed, "seed for --synthetic");
  forge->add_option("--out", forge_out, "output directory")->required();

  // stats
  auto *stats = app.add_subcommand("stats", "print per-split dataset statistics");
  std::string stats_dir;
  stats->add_option("--dataset", stats_dir, "forged dataset directory")->required();

  // train-lm
  auto *train = app.add_subcommand("train-lm", "train a word-piece model and/or a general n-gram LM");
  std::string corpus, wpm_path, wpm_out, lm_out, capacity = "M";
  std::size_t vocab_size = 1024;
  int order = 0;
  train->add_option("--corpus", corpus, "one normalized sentence per line")->required();
  train->add_option("--wpm", wpm_path, "existing word-piece model");
  train->add_option("--wpm-out", wpm_out, "train a word-piece model on the corpus and write it here");
  train->add_option("--vocab-size", vocab_size, "word-piece vocab size");
  train->add_option("--capacity", capacity, "S, M or L (orders 2, 3, 4)");
  train->add_option("--order", order, "n-gram order (overrides --capacity)");
  train->add_option("--out", lm_out, "LM output file");

  // personalize
  auto *pers = app.add_subcommand("personalize", "interpolate a user LM with a general LM");
  std::string general_path, user_text, pers_out, pers_wpm;
  double alpha = 0.5;
  std::size_t subset_size = 0;
  std::uint64_t pers_seed = 1;
  pers->add_option("--general", general_path, "general LM file")->required();
  pers->add_option("--wpm", pers_wpm, "word-piece model")->required();
  pers->add_option("--user-text", user_text, "user sentences, one per line")->required();
  pers->add_option("--alpha", alpha, "user model weight in [0, 1]");
  pers->add_option("--size", subset_size, "train on a seeded random subset of this many sentences");
  pers->add_option("--seed", pers_seed, "seed for --size");
  pers->add_option("--out", pers_out, "output file")->required();

  // simulate
  auto *sim = app.add_subcommand("simulate", "render posterior lattices for transcripts");
  std::string sim_wpm, transcripts, prior_path, prior_corpus, prior_out, profile = "clean", sim_out;
  std::uint64_t sim_seed = 1;
  AcousticConfig ac;
  sim->add_option("--wpm", sim_wpm, "word-piece model")->required();
  sim->add_option("--transcripts", transcripts, "utterance TSV")->required();
  sim->add_option("--prior", prior_path, "internal prior file");
  sim->add_option("--prior-corpus", prior_corpus, "estimate the internal prior from this corpus");
  sim->add_option("--prior-out", prior_out, "write the estimated prior here");
  sim->add_option("--profile", profile, "clean or other");
  sim->add_option("--blank-rate", ac.blank_rate, "blank frame rate");
  sim->add_option("--model-mass", ac.model_mass, "confusion mass assumed by the renderer");
  sim->add_option("--seed", sim_seed, "random seed");
  sim->add_option("--out", sim_out, "lattice file")->required();

  // decode
  auto *dec = app.add_subcommand("decode", "beam-search decode lattices with optional fusion");
  std::string lattices_path, dec_wpm, dec_lm, dec_general, dec_prior, dec_out;
  DecoderConfig dc;
  std::size_t nbest = 1;
  dec->add_option("--lattices", lattices_path, "lattice file")->required();
  dec->add_option("--wpm", dec_wpm, "word-piece model")->required();
  dec->add_option("--lm", dec_lm, "external LM (general, or personalized with --general)");
  dec->add_option("--general", dec_general, "general LM a personalized --lm was built on");
  dec->add_option("--prior", dec_prior, "internal prior for internal-LM subtraction");
  dec->add_option("--beam", dc.beam_width, "beam width");
  dec->add_option("--top-k", dc.top_k, "labels expanded per hypothesis and frame");
  dec->add_option("--posterior-temperature", dc.posterior_temperature, "posterior smoothing");
  dec->add_option("--ext-weight", dc.ext_weight, "external LM weight");
  dec->add_option("--ilm-weight", dc.ilm_weight, "internal LM weight");
  dec->add_option("--ilm-temperature", dc.ilm_temperature, "internal LM temperature");
  dec->add_option("--nbest", nbest, "hypotheses written per utterance");
  dec->add_option("--out", dec_out, "N-best TSV")->required();

  // eval
  auto *ev = app.add_subcommand("eval", "score N-best output against references");
  std::string ref_path, hyp_path, ev_out, hist_out;
  BootstrapConfig bc;
  double bin_width = 2.0;
  ev->add_option("--ref", ref_path, "utterance TSV")->required();
  ev->add_option("--hyp", hyp_path, "N-best TSV (rank 1 is scored)")->required();
  ev->add_option("--seed", bc.seed, "bootstrap seed");
  ev->add_option("--resamples", bc.resamples, "bootstrap resamples");
  ev->add_option("--histogram", hist_out, "write a per-user WER histogram CSV");
  ev->add_option("--bin-width", bin_width, "histogram bin width in WER percent");
  ev->add_option("--out", ev_out, "per-user report TSV (default stdout)");

  ExperimentArgs run_args, lim_args, sweep_args;
  auto *run = app.add_subcommand("run", "run a preset end to end");
  std::string preset;
  run_args.Add(run);
  run->add_option("--preset", preset, "BL1, BL2, BL3, P13N, LIMITED or ADAPT");
  auto *lim = app.add_subcommand("limited", "limited-data personalization trend");
  std::string sizes;
  lim_args.Add(lim);
  lim->add_option("--sizes", sizes, "comma-separated nested sizes");
  auto *sweep = app.add_subcommand("sweep", "external LM weight sweep");
  std::string weights;
  sweep_args.Add(sweep);
  sweep->add_option("--weights", weights, "comma-separated weights (0 is the no-fusion column)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*forge) {
      if (synthetic) {
        ExperimentConfig c = forge_config.empty() ? ExperimentConfig() : ExperimentConfig::Load(forge_config);
        const auto corpus = GenerateSynthetic(c.synthetic, forge_seed);
        WriteSyntheticDataset(corpus, forge_out);
        std::cout << FormatStatsTable(ComputeStats(corpus.users));
        return 0;
      }
      if (books_dir.empty() || metadata.empty())
        throw ConfigError("forge needs --books and --metadata (or --synthetic)");
      if (!fs::is_directory(books_dir)) throw DataError("books directory " + books_dir + " does not exist");
      if (!fs::exists(metadata)) throw DataError("metadata " + metadata + " does not exist");
      const ForgeReport report = ForgeCorpus(books_dir, metadata, forge_out);
      for (const auto &w : report.warnings) std::cerr << "warning: " << w << '\n';
      for (const auto &e : report.errors) std::cerr << "error: " << e << '\n';
      if (!report.errors.empty()) return kData;
      std::cout << FormatStatsTable(report.stats);
      return 0;
    }
    if (*stats) {
      std::cout << FormatStatsTable(ComputeStats(LoadForgedDataset(stats_dir)));
      return 0;
    }
    if (*train) {
      const auto sentences = ReadSentences(corpus);
      WordPieceModel wpm;
      if (!wpm_out.empty()) {
        wpm = WordPieceModel::Train(sentences, vocab_size);
        wpm.Save(wpm_out);
      } else if (!wpm_path.empty()) {
        wpm = LoadWpm(wpm_path);
      } else {
        throw ConfigError("train-lm needs --wpm or --wpm-out");
      }
      if (!lm_out.empty()) {
        const int n = order > 0 ? order : OrderForCapacity(ParseCapacity(capacity));
        auto lm = BackoffLanguageModel::Train(Tokenize(wpm, sentences), wpm.size(), n);
        lm.set_vocab_hash(wpm.Hash());
        lm.Save(lm_out);
      }
      return 0;
    }
    if (*pers) {
      const WordPieceModel wpm = LoadWpm(pers_wpm);
      if (!fs::exists(general_path)) throw DataError("general LM " + general_path + " does not exist");
      auto general = std::make_shared<const BackoffLanguageModel>(BackoffLanguageModel::Load(general_path));
      auto sentences = ReadSentences(user_text);
      if (subset_size > 0) sentences = SubsetNested(sentences, {subset_size}, pers_seed).at(subset_size);
      PersonalizationConfig pc;
      pc.mix_weight = alpha;
      pc.seed = pers_seed;
      Personalize(general, Tokenize(wpm, sentences), pc)->Save(pers_out);
      return 0;
    }
    if (*sim) {
      const WordPieceModel wpm = LoadWpm(sim_wpm);
      InternalPrior prior;
      if (!prior_path.empty()) {
        prior = InternalPrior::Parse(ReadFile(prior_path));
      } else if (!prior_corpus.empty()) {
        prior = InternalPrior::FromCorpus(Tokenize(wpm, ReadSentences(prior_corpus)), wpm.size(),
                                          ac.prior_add_k, ac.prior_exponent);
      } else {
        throw ConfigError("simulate needs --prior or --prior-corpus");
      }
      if (!prior_out.empty()) WriteFile(prior_out, prior.Serialize());
      const NoiseProfile p = ParseNoiseProfile(profile);
      const auto truth_channel = ConfusionChannel::Build(wpm, p, ac.blank_rate, ac.max_neighbors);
      const auto model_channel =
          ConfusionChannel::Build(wpm, p, ac.blank_rate, ac.max_neighbors, ac.model_mass);
      std::vector<PosteriorLattice> lattices;
      for (const auto &u : ReadUtteranceTsv(transcripts)) {
        const auto tokens = wpm.Encode(Join(u.transcript, " "));
        const auto slots = Observe(tokens, truth_channel, DeriveSeed(sim_seed, "observe/" + u.utterance_id));
        PosteriorLattice lat = Render(slots, model_channel, prior, ac.render);
        lat.utterance_id = u.utterance_id;
        lat.truth = tokens;
        lattices.push_back(std::move(lat));
      }
      WriteFile(sim_out, SerializeLattices(lattices));
      return 0;
    }
    if (*dec) {
      const WordPieceModel wpm = LoadWpm(dec_wpm);
      const auto lattices = ParseLattices(ReadFile(lattices_path));
      std::shared_ptr<const LanguageModel> lm;
      if (!dec_lm.empty()) {
        if (dec_general.empty()) {
          lm = std::make_shared<const BackoffLanguageModel>(BackoffLanguageModel::Load(dec_lm));
        } else {
          auto general = std::make_shared<const BackoffLanguageModel>(BackoffLanguageModel::Load(dec_general));
          lm = PersonalizedLanguageModel::Load(dec_lm, general);
        }
      }
      std::optional<InternalPrior> prior;
      if (!dec_prior.empty()) prior = InternalPrior::Parse(ReadFile(dec_prior));
      std::vector<std::string> rows(lattices.size());
      ParallelFor(lattices.size(), [&](std::size_t i) {
        auto hyps = Decode(lattices[i], dc, lm.get(), prior ? &*prior : nullptr);
        if (hyps.size() > nbest) hyps.resize(nbest);
        rows[i] = NbestTsv(lattices[i].utterance_id, hyps, wpm);
      });
      std::string body = "utterance_id\trank\ttotal_score\tacoustic\text\tilm\thypothesis\n";
      for (const auto &r : rows) body += r;
      WriteFile(dec_out, body);
      return 0;
    }
    if (*ev) {
      std::map<std::string, Words> hyps;
      {
        std::istringstream in(ReadFile(hyp_path));
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
          const auto cols = SplitChar(line, '\t');
          if (cols.size() < 7) continue;
          if (cols[1] == "1") hyps[cols[0]] = SplitWhitespace(cols[6]);
        }
      }
      std::map<std::string, UserReport> users;
      for (const auto &u : ReadUtteranceTsv(ref_path)) {
        auto it = hyps.find(u.utterance_id);
        if (it == hyps.end()) throw DataError("no hypothesis for utterance " + u.utterance_id);
        auto &rep = users[u.speaker_id + "-" + u.book_id];
        rep.user_id = u.speaker_id + "-" + u.book_id;
        rep.utterances.push_back(Wer(u.transcript, it->second));
      }
      std::vector<UserReport> reports;
      for (auto &[id, r] : users) reports.push_back(std::move(r));
      const MacroAverage macro = MacroAverageWer(reports, bc);
      std::ostringstream os;
      os << "user_id\tutterances\terrors\treference_words\twer\n";
      std::vector<double> values;
      for (const auto &r : reports) {
        os << r.user_id << '\t' << r.utterances.size() << '\t' << r.errors() << '\t'
           << r.reference_words() << '\t' << FixedDouble(100 * r.wer(), 4) << '\n';
        values.push_back(100 * r.wer());
      }
      os << "#macro_wer\t" << FixedDouble(100 * macro.mean, 4) << "\t[" << FixedDouble(100 * macro.ci.lower, 4)
         << ", " << FixedDouble(100 * macro.ci.upper, 4) << "]\n";
      os << "#full_set_wer\t" << FixedDouble(100 * PooledWer(reports), 4) << '\n';
      if (ev_out.empty())
        std::cout << os.str();
      else
        WriteFile(ev_out, os.str());
      if (!hist_out.empty()) WriteFile(hist_out, HistogramCsv(Histogram(values, bin_width)));
      return 0;
    }
    if (*run) {
      ExperimentConfig c = run_args.Resolve();
      if (!preset.empty()) c.preset = ParsePreset(preset);
      Experiment e(c);
      PrintRun(RunPreset(e, run_args.out), run_args.out);
      return 0;
    }
    if (*lim) {
      ExperimentConfig c = lim_args.Resolve();
      if (!sizes.empty()) {
        c.limited_sizes.clear();
        for (const auto &s : SplitChar(sizes, ',')) c.limited_sizes.push_back(std::stoul(std::string(Trim(s))));
      }
      c.preset = Preset::kLimited;
      Experiment e(c);
      PrintRun(RunLimited(e, lim_args.out), lim_args.out);
      return 0;
    }
    if (*sweep) {
      ExperimentConfig c = sweep_args.Resolve();
      if (!weights.empty()) {
        c.sweep_weights.clear();
        for (const auto &w : SplitChar(weights, ',')) c.sweep_weights.push_back(std::stod(std::string(Trim(w))));
      }
      Experiment e(c);
      PrintRun(RunSweep(e, sweep_args.out), sweep_args.out);
      return 0;
    }
  } catch (const ConfigError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument &e) {
    std::cerr << "error: bad numeric argument: " << e.what() << '\n';
    return kUsage;
  } catch (const Error &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception &e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return 0;
}
