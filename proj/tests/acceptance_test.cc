// p13n/tests/acceptance_test.cc
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

// Runs every acceptance criterion and prints one line per criterion. Exits
// non-zero if any criterion fails. Criterion 1 needs the real LibriSpeech
// test books and metadata under $P13N_LIBRISPEECH_DIR (books/ and
// metadata.tsv); without them it reports SKIP.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "oracles.h"
#include "p13n/acoustic_sim.h"
#include "p13n/corpus_forge.h"
#include "p13n/eval_metrics.h"
#include "p13n/experiment.h"
#include "p13n/fusion_decoder.h"
#include "p13n/util.h"

namespace p13n {
namespace {

namespace fs = std::filesystem;

enum class Verdict { kPass, kFail, kSkip };

struct Outcome {
  Verdict verdict;
  std::string detail;
};

Outcome Check(bool ok, std::string detail) {
  return {ok ? Verdict::kPass : Verdict::kFail, std::move(detail)};
}

class Timer {
 public:
  double Seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string Fmt(double v, int decimals = 2) { return FixedDouble(v, decimals); }

// 1. Table-1 statistics on the real test sets.
Outcome DatasetStatistics() {
  const char *root = std::getenv("P13N_LIBRISPEECH_DIR");
  if (root == nullptr || !fs::exists(fs::path(root) / "metadata.tsv"))
    return {Verdict::kSkip, "P13N_LIBRISPEECH_DIR with books/ and metadata.tsv not provided"};
  const fs::path out = fs::temp_directory_path() / "p13n_acceptance_forge";
  fs::remove_all(out);
  Timer t;
  ForgeReport report = ForgeCorpus(fs::path(root) / "books", fs::path(root) / "metadata.tsv", out);
  fs::remove_all(out);
  if (!report.errors.empty()) return Check(false, report.errors.front());
  const SplitStats *clean = nullptr, *other = nullptr;
  for (const auto &[split, s] : report.stats) {
    if (split.find("clean") != std::string::npos) clean = &s;
    if (split.find("other") != std::string::npos) other = &s;
  }
  if (clean == nullptr || other == nullptr) return Check(false, "splits clean/other not found");
  std::ostringstream d;
  d << "users " << clean->user_count << "/" << other->user_count << ", avg utterances "
    << Fmt(clean->avg_utterances, 1) << "/" << Fmt(other->avg_utterances, 1) << ", LM sentences "
    << clean->total_lm_sentences << "/" << other->total_lm_sentences << " in " << Fmt(t.Seconds(), 1)
    << " s";
  const bool ok = clean->user_count == 55 && other->user_count == 52 &&
                  Fmt(clean->avg_utterances, 1) == "47.1" && Fmt(other->avg_utterances, 1) == "56.5" &&
                  clean->total_lm_sentences == 377049 && other->total_lm_sentences == 444520 &&
                  t.Seconds() < 300;
  return Check(ok, d.str());
}

// 2. Overlap filter against the brute-force run scanner.
Outcome OverlapFilter() {
  Timer t;
  std::mt19937_64 gen(2022);
  const std::vector<std::string> words = {"THE", "A", "OF", "KING", "SEA", "RAN", "SAID", "GOLD"};
  auto random_words = [&](std::size_t n) {
    std::vector<std::string> w;
    for (std::size_t i = 0; i < n; ++i) w.push_back(words[gen() % words.size()]);
    return w;
  };
  std::size_t disagreements = 0, dropped = 0;
  for (int c = 0; c < 1000; ++c) {
    auto s = random_words(1 + gen() % 15);
    std::vector<std::string> transcripts;
    for (std::size_t k = 1 + gen() % 3; k > 0; --k) {
      auto tr = random_words(gen() % 12);
      if (gen() % 2) {
        // Plant a run near the threshold length.
        const std::size_t need = std::max<std::size_t>(1, (4 * s.size() + 4) / 5);
        std::size_t len = need + (gen() % 3) - 1;
        len = std::max<std::size_t>(1, std::min(len, s.size()));
        const std::size_t from = gen() % (s.size() - len + 1);
        const std::size_t at = gen() % (tr.size() + 1);
        tr.insert(tr.begin() + static_cast<long>(at), s.begin() + static_cast<long>(from),
                  s.begin() + static_cast<long>(from + len));
      }
      transcripts.push_back(Join(tr, " "));
    }
    const std::string sentence = Join(s, " ");
    const bool fast_keeps = FilterOverlap({sentence}, transcripts).size() == 1;
    const bool brute_keeps = !oracle::Overlaps(sentence, transcripts);
    disagreements += fast_keeps != brute_keeps;
    dropped += !brute_keeps;
  }
  const double secs = t.Seconds();
  return Check(disagreements == 0 && secs < 10,
               std::to_string(disagreements) + " disagreements on 1000 cases (" + std::to_string(dropped) +
                   " dropped) in " + Fmt(secs, 3) + " s");
}

// 3. WER against an independent quadratic DP.
Outcome WerOracle() {
  Timer t;
  std::mt19937_64 gen(3);
  const std::vector<std::string> vocab = {"A", "B", "C", "D", "E"};
  std::size_t mismatches = 0;
  for (int c = 0; c < 500; ++c) {
    Words r, h;
    for (std::size_t n = 1 + gen() % 20; n > 0; --n) r.push_back(vocab[gen() % vocab.size()]);
    for (std::size_t n = gen() % 20; n > 0; --n) h.push_back(vocab[gen() % vocab.size()]);
    const auto b = Wer(r, h);
    const std::size_t d = oracle::EditDistance(r, h);
    mismatches += b.errors() != d || b.reference_words != r.size() ||
                  b.wer() != static_cast<double>(d) / static_cast<double>(r.size());
  }
  const double secs = t.Seconds();
  return Check(mismatches == 0 && secs < 5,
               std::to_string(mismatches) + " mismatches on 500 pairs in " + Fmt(secs, 3) + " s");
}

// 4. Exhaustive-width beam search against brute-force enumeration.
Outcome BeamOracle() {
  Timer t;
  std::mt19937_64 gen(4);
  std::size_t mismatches = 0, fused = 0;
  for (int c = 0; c < 200; ++c) {
    const std::size_t labels = 1 + gen() % 4;
    const std::size_t vocab = labels + 1;
    const std::size_t frames = 1 + gen() % 5;
    const auto lat = oracle::RandomLattice(gen, frames, vocab);
    std::vector<std::vector<TokenId>> text;
    for (int s = 0; s < 8; ++s) {
      std::vector<TokenId> sent;
      for (std::size_t k = gen() % 4; k > 0; --k) sent.push_back(1 + static_cast<TokenId>(gen() % labels));
      text.push_back(sent);
    }
    text.push_back({1});
    auto lm = TrainGeneral(text, vocab, 1 + static_cast<int>(gen() % 3));
    std::vector<double> pw(vocab, 0.0);
    double z = 0;
    for (std::size_t v = 1; v < vocab; ++v) z += pw[v] = 1.0 + static_cast<double>(gen() % 50);
    for (auto &p : pw) p /= z;
    const InternalPrior prior(pw);
    DecoderConfig cfg;
    cfg.beam_width = static_cast<std::size_t>(std::pow(vocab, frames));
    cfg.top_k = vocab;
    cfg.ext_weight = c % 2 ? 0.15 + 0.1 * static_cast<double>(gen() % 4) : 0.0;
    cfg.ilm_weight = c % 3 ? 0.1 * static_cast<double>(gen() % 3) : 0.0;
    const LanguageModel *ext = cfg.ext_weight > 0 ? lm.get() : nullptr;
    const InternalPrior *ilm = cfg.ilm_weight > 0 ? &prior : nullptr;
    fused += ext != nullptr || ilm != nullptr;
    const auto best = oracle::ExhaustiveDecode(lat, cfg.ext_weight, cfg.ilm_weight, ext, ilm);
    const auto top = Decode(lat, cfg, ext, ilm).front();
    mismatches += top.tokens != best.tokens || std::abs(top.total - best.total) > 1e-9;
  }
  const double secs = t.Seconds();
  return Check(mismatches == 0 && secs < 10,
               std::to_string(mismatches) + " mismatches on 200 lattices (" + std::to_string(fused) +
                   " with fusion) in " + Fmt(secs, 3) + " s");
}

// 5. No-fusion decoding is bit-identical to pure posterior beam search.
Outcome BaselineReduction() {
  std::mt19937_64 gen(5);
  std::size_t mismatches = 0;
  for (int c = 0; c < 100; ++c) {
    const auto lat = oracle::RandomLattice(gen, 5 + gen() % 20, 4 + gen() % 16);
    DecoderConfig cfg;
    cfg.beam_width = 1 + gen() % 8;
    cfg.top_k = 1 + gen() % 4;
    const auto got = Decode(lat, cfg);
    const auto ref = oracle::PosteriorBeam(lat, cfg.beam_width, cfg.top_k);
    bool same = got.size() == ref.size();
    for (std::size_t i = 0; same && i < ref.size(); ++i)
      same = got[i].tokens == ref[i].tokens && got[i].total == ref[i].total &&
             got[i].acoustic == ref[i].total;
    mismatches += !same;
  }
  return Check(mismatches == 0, std::to_string(mismatches) + " of 100 lattices differ");
}

// 6. Internal-LM subtraction restores the channel-likelihood ranking.
Outcome IlmArgmaxInvariance() {
  SyntheticConfig sc;
  sc.users_per_split = 1;
  sc.utterances_per_user = 20;
  sc.lm_sentences_per_user = 50;
  sc.general_sentences = 3000;
  const auto corpus = GenerateSynthetic(sc, 6);
  const auto wpm = WordPieceModel::Train(corpus.general, 512);
  std::vector<std::vector<TokenId>> toks;
  for (const auto &s : corpus.general) toks.push_back(wpm.Encode(s));
  const auto prior = InternalPrior::FromCorpus(toks, wpm.size(), 1.0, 0.3);
  const auto channel = ConfusionChannel::Build(wpm, NoiseProfile::kOther, 0.2, 4, 0.5);
  DecoderConfig cfg;
  cfg.ilm_weight = 1;
  std::size_t frames = 0, violations = 0, argmax_moved_by_prior = 0;
  std::uint64_t seed = 0;
  for (const auto &user : corpus.users) {
    for (const auto &u : user.utterances) {
      const auto ref = wpm.Encode(Join(u.transcript, " "));
      const auto slots = Observe(ref, channel, ++seed);
      const auto lat = Render(slots, channel, prior, {0.1, 0.05});
      for (std::size_t f = 0; f < slots.size() && frames < 100; ++f) {
        if (!slots[f].is_label || lat.frames[f].size() < 3) continue;
        ++frames;
        const TokenId o = slots[f].observed;
        const auto &frame = lat.frames[f];
        TokenId raw_best = kBlankId, fused_best = kBlankId;
        double raw_p = -1, fused_s = -INFINITY;
        for (const auto &[a, pa] : frame) {
          if (a == kBlankId) continue;
          const double sa = FusionScore(frame, a, nullptr, {}, &prior, cfg);
          if (pa > raw_p) raw_p = pa, raw_best = a;
          if (sa > fused_s) fused_s = sa, fused_best = a;
          for (const auto &[b, pb] : frame) {
            if (b == kBlankId) continue;
            const double ca = channel.At(a, o), cb = channel.At(b, o);
            const double sb = FusionScore(frame, b, nullptr, {}, &prior, cfg);
            if ((ca > cb && !(sa > sb)) || (ca == cb && std::abs(sa - sb) > 1e-12)) ++violations;
          }
        }
        double best_c = 0;
        for (const auto &[a, pa] : frame)
          if (a != kBlankId) best_c = std::max(best_c, channel.At(a, o));
        violations += channel.At(fused_best, o) != best_c;
        argmax_moved_by_prior += raw_best != fused_best;
      }
    }
  }
  return Check(violations == 0 && frames == 100,
               std::to_string(violations) + " ranking violations over " + std::to_string(frames) +
                   " frames (prior moved the raw argmax on " + std::to_string(argmax_moved_by_prior) +
                   ")");
}

struct SeedResult {
  std::uint64_t seed;
  std::map<std::string, std::map<std::string, double>> wer;  // system -> split -> macro
  std::map<std::string, double> seconds;
};

double Macro(const SystemResult &r, const std::string &split) { return r.Split(split).macro.mean; }

void Record(SeedResult *out, const std::string &name, const SystemResult &r,
            const std::vector<std::string> &splits) {
  for (const auto &s : splits) out->wer[name][s] = Macro(r, s);
}

std::string Pct(double w) { return Fmt(100 * w); }

// 7, 8 and 10 share one benchmark per seed.
std::vector<SeedResult> RunBenchmarks(std::vector<std::unique_ptr<Experiment>> *keep) {
  std::vector<SeedResult> out;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ExperimentConfig c;
    c.seed = seed;
    SeedResult r{seed, {}, {}};
    Timer t7;
    auto e = std::make_unique<Experiment>(c);
    const auto &splits = e->splits();
    Record(&r, "BL1", e->Evaluate({System::kBL1}), splits);
    Record(&r, "BL2", e->Evaluate({System::kBL2}), splits);
    Record(&r, "P13N", e->Evaluate({System::kP13N}), splits);
    r.seconds["ordering"] = t7.Seconds();

    Timer t8;
    SystemSpec small{System::kP13N}, large{System::kP13N};
    small.capacity = Capacity::kS;
    large.capacity = Capacity::kL;
    Record(&r, "P13N-S", e->Evaluate(small), splits);
    Record(&r, "P13N-L", e->Evaluate(large), splits);
    r.seconds["capacity"] = t8.Seconds();

    Timer t10;
    const auto users = e->AdaptUsers();
    Record(&r, "A:BL1", e->Evaluate({System::kBL1}, users), splits);
    Record(&r, "A:P13N", e->Evaluate({System::kP13N}, users), splits);
    Record(&r, "A:ADAPT", e->Evaluate({System::kAdapt}, users), splits);
    Record(&r, "A:ADAPT+P13N", e->Evaluate({System::kAdaptP13N}, users), splits);
    r.seconds["adapt"] = t10.Seconds();
    out.push_back(std::move(r));
    keep->push_back(std::move(e));
  }
  return out;
}

std::string SeedLine(const SeedResult &r, const std::vector<std::string> &systems) {
  std::ostringstream os;
  os << "seed " << r.seed << ":";
  for (const auto &split : {"clean", "other"}) {
    os << " " << split;
    for (const auto &s : systems) os << " " << s << "=" << Pct(r.wer.at(s).at(split));
  }
  return os.str();
}

Outcome SeedVote(const std::vector<SeedResult> &results, const std::vector<std::string> &systems,
                 const std::function<bool(const SeedResult &, const std::string &)> &holds,
                 const std::string &timing_key, double limit_seconds, std::string *log) {
  int good = 0;
  double secs = 0;
  for (const auto &r : results) {
    const bool ok = holds(r, "clean") && holds(r, "other");
    good += ok;
    secs += r.seconds.at(timing_key);
    *log += "    " + SeedLine(r, systems) + (ok ? "  holds\n" : "  violated\n");
  }
  const bool time_ok = limit_seconds <= 0 || secs < limit_seconds;
  return Check(good >= 4 && time_ok, "holds in " + std::to_string(good) + "/5 seeds, " + Fmt(secs, 1) + " s");
}

// 9. Limited-data trend on seed 1.
Outcome LimitedTrend(Experiment &e, std::string *log) {
  const auto users = e.LimitedUsers();
  if (users.empty()) return Check(false, "no eligible users");
  const auto bl1 = e.Evaluate({System::kBL1}, users);
  std::vector<SystemResult> rows;
  for (std::size_t n : e.config().limited_sizes) {
    SystemSpec s{System::kP13N};
    s.lm_size = n;
    rows.push_back(e.Evaluate(s, users));
  }
  rows.push_back(e.Evaluate({System::kP13N}, users));
  bool ok = true;
  std::ostringstream d;
  d << users.size() << " users;";
  for (const auto &split : e.splits()) {
    int inversions = 0;
    std::ostringstream line;
    line << "    " << split << ": BL1=" << Pct(Macro(bl1, split));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double w = Macro(rows[i], split);
      line << " " << (i < e.config().limited_sizes.size() ? std::to_string(e.config().limited_sizes[i]) : "all")
           << "=" << Pct(w);
      if (i > 0 && w > Macro(rows[i - 1], split)) ++inversions;
    }
    const bool beats = Macro(rows.back(), split) < Macro(bl1, split);
    ok = ok && inversions <= 1 && beats;
    d << " " << split << " " << inversions << " inversions" << (beats ? "" : ", all-size p13n not below BL1")
      << ";";
    *log += line.str() + "\n";
  }
  return Check(ok, d.str());
}

// 11. Bootstrap interval checks.
Outcome BootstrapChecks() {
  std::size_t problems = 0;
  const auto flat = BootstrapMean({0.123, 0.123, 0.123, 0.123});
  problems += !(flat.ci.lower == 0.123 && flat.ci.upper == 0.123 && flat.mean == 0.123);
  const std::vector<double> sample = {0.052, 0.113, 0.087, 0.241, 0.064, 0.151, 0.098, 0.072, 0.133, 0.305};
  const BootstrapConfig bc{10000, 0.95, 20220101};
  const auto got = BootstrapMean(sample, bc);
  const auto ref = oracle::Bootstrap(sample, 10000, 0.95, 20220101);
  const double dl = std::abs(got.ci.lower - ref.lower), du = std::abs(got.ci.upper - ref.upper);
  problems += dl > 1e-12 || du > 1e-12;
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0, 0.6);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x;
    for (std::size_t n = 1 + gen() % 30; n > 0; --n) x.push_back(u(gen));
    const auto m = BootstrapMean(x, {1000, 0.95, gen()});
    problems += !(m.ci.lower <= m.mean && m.mean <= m.ci.upper);
  }
  std::ostringstream d;
  d << "10-value CI [" << ExactDouble(got.ci.lower) << ", " << ExactDouble(got.ci.upper) << "], max deviation "
    << std::max(dl, du) << ", " << problems << " problems";
  return Check(problems == 0, d.str());
}

// 12. `run` twice gives byte-identical reports.
Outcome RunDeterminism() {
  const fs::path root = fs::temp_directory_path() / "p13n_acceptance_run";
  fs::remove_all(root);
  Timer t;
  std::vector<fs::path> files;
  for (const char *name : {"a", "b"}) {
#ifdef P13N_CLI_PATH
    const std::string cmd = std::string(P13N_CLI_PATH) + " run --preset P13N --seed 1 --out " +
                            (root / name).string() + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) return Check(false, "run exited abnormally");
#else
    ExperimentConfig c;
    Experiment e(c);
    RunPreset(e, root / name);
#endif
  }
  for (const auto &entry : fs::recursive_directory_iterator(root / "a"))
    if (entry.is_regular_file()) files.push_back(fs::relative(entry.path(), root / "a"));
  std::size_t differ = 0, compared = 0;
  for (const auto &f : files) {
    if (!fs::exists(root / "b" / f)) {
      ++differ;
      continue;
    }
    if (f == "manifest.json") {
      auto a = nlohmann::json::parse(ReadFile(root / "a" / f));
      auto b = nlohmann::json::parse(ReadFile(root / "b" / f));
      a.erase("timings");
      b.erase("timings");
      differ += a != b;
    } else {
      ++compared;
      differ += ReadFile(root / "a" / f) != ReadFile(root / "b" / f);
    }
  }
  fs::remove_all(root);
  return Check(differ == 0 && compared > 0,
               std::to_string(compared) + " report files byte-compared, " + std::to_string(differ) +
                   " differ (manifest compared without timings), " + Fmt(t.Seconds(), 1) + " s");
}

}  // namespace
}  // namespace p13n

int main() {
  using namespace p13n;
  int failed = 0;
  auto report = [&](int id, const std::string &name, const Outcome &o, const std::string &log = "") {
    const char *tag = o.verdict == Verdict::kPass ? "PASS" : o.verdict == Verdict::kFail ? "FAIL" : "SKIP";
    failed += o.verdict == Verdict::kFail;
    std::cout << "[" << tag << "] " << id << ". " << name << ": " << o.detail << "\n" << log << std::flush;
  };
  auto guarded = [](const std::function<Outcome()> &fn) {
    try {
      return fn();
    } catch (const std::exception &e) {
      return Outcome{Verdict::kFail, std::string("exception: ") + e.what()};
    }
  };

  report(1, "dataset statistics", guarded(DatasetStatistics));
  report(2, "overlap filter vs brute force", guarded(OverlapFilter));
  report(3, "WER vs quadratic DP", guarded(WerOracle));
  report(4, "beam search vs exhaustive search", guarded(BeamOracle));
  report(5, "baseline reduction", guarded(BaselineReduction));
  report(6, "internal-LM subtraction argmax invariance", guarded(IlmArgmaxInvariance));

  std::vector<std::unique_ptr<Experiment>> experiments;
  std::vector<SeedResult> seeds;
  std::string bench_error;
  try {
    seeds = RunBenchmarks(&experiments);
  } catch (const std::exception &e) {
    bench_error = e.what();
  }
  auto bench = [&](const std::function<Outcome(std::string *)> &fn, std::string *log) {
    if (!bench_error.empty()) return Outcome{Verdict::kFail, "benchmark failed: " + bench_error};
    return fn(log);
  };
  std::string log7, log8, log10, log9;
  report(7, "P13N <= BL2 <= BL1 per split",
         bench([&](std::string *log) {
           return SeedVote(seeds, {"BL1", "BL2", "P13N"},
                           [](const SeedResult &r, const std::string &s) {
                             return r.wer.at("P13N").at(s) <= r.wer.at("BL2").at(s) &&
                                    r.wer.at("BL2").at(s) <= r.wer.at("BL1").at(s);
                           },
                           "ordering", 120, log);
         }, &log7),
         log7);
  report(8, "order-4 p13n LM <= order-2 p13n LM",
         bench([&](std::string *log) {
           return SeedVote(seeds, {"P13N-S", "P13N", "P13N-L"},
                           [](const SeedResult &r, const std::string &s) {
                             return r.wer.at("P13N-L").at(s) <= r.wer.at("P13N-S").at(s);
                           },
                           "capacity", 0, log);
         }, &log8),
         log8);
  report(9, "limited-data trend",
         bench([&](std::string *log) { return LimitedTrend(*experiments.front(), log); }, &log9), log9);
  report(10, "ADAPT+P13N best of BL1, P13N, ADAPT",
         bench([&](std::string *log) {
           return SeedVote(seeds, {"A:BL1", "A:P13N", "A:ADAPT", "A:ADAPT+P13N"},
                           [](const SeedResult &r, const std::string &s) {
                             const double both = r.wer.at("A:ADAPT+P13N").at(s);
                             return both <= r.wer.at("A:ADAPT").at(s) && both <= r.wer.at("A:P13N").at(s) &&
                                    both <= r.wer.at("A:BL1").at(s);
                           },
                           "adapt", 0, log);
         }, &log10),
         log10);
  experiments.clear();
  report(11, "bootstrap confidence intervals", guarded(BootstrapChecks));
  report(12, "run determinism", guarded(RunDeterminism));

  std::cout << (failed == 0 ? "all criteria passed or skipped\n" : std::to_string(failed) + " criteria failed\n");
  return failed == 0 ? 0 : 1;
}
