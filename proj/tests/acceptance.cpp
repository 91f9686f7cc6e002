// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any hard failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gliner/app/checkpoint.hpp"
#include "gliner/app/records.hpp"
#include "gliner/app/synth.hpp"
#include "gliner/model_check.hpp"
#include "gliner/trainer.hpp"

using namespace gliner;
using Clock = std::chrono::steady_clock;
using nlohmann::json;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = true;
  bool soft = false;  // a failure only warns
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [violated: " << what << "]";
    }
  }
};

int hard_failures = 0;

void report(int id, const std::string& name, const std::function<void(Verdict&)>& body) {
  Verdict v;
  const auto t0 = Clock::now();
  try {
    body(v);
  } catch (const std::exception& e) {
    v.pass = false;
    v.detail << " [exception: " << e.what() << "]";
  }
  const char* label = v.pass ? "PASS" : (v.soft ? "WARN" : "FAIL");
  if (!v.pass && !v.soft) ++hard_failures;
  std::cout << label << "  [" << id << "] " << name << " (" << std::fixed << std::setprecision(1) << seconds_since(t0)
            << " s)" << v.detail.str() << std::endl;
}

TrainConfig overfit_config() {
  std::ifstream in(std::string(GLINER_SOURCE_DIR) + "/data/overfit.json");
  if (!in) throw ConfigError("acceptance", "cannot open data/overfit.json");
  auto cfg = app::run_config_from_json(json::parse(in)).train;
  cfg.eval_every = 0;
  return cfg;
}

struct OverfitRun {
  app::SynthSplits data;
  std::vector<std::string> types;
  TrainConfig config;
  FitResult result;
};

std::optional<OverfitRun> overfit;  // shared by criteria 2 and 9

ScoreTable fig2_table(const ModelParams<float>& params, const Vocab& vocab, const std::vector<std::string>& types,
                      std::size_t max_types) {
  return predict_table_chunked(params, vocab, types, {"Alain", "Farley", "works", "at", "McGill", "University"},
                               max_types);
}

double column_prob(const ScoreTable& t, SpanIndex span, const std::string& type) {
  const auto row = span_row(span, t.num_words, t.max_width);
  const auto col = static_cast<std::size_t>(std::find(t.types.begin(), t.types.end(), type) - t.types.begin());
  return t.prob(row, col);
}

}  // namespace

int main() {
  std::cout << std::scientific;

  report(1, "gradient fidelity, 5 seeds, f32 < 1e-3 and f64 < 1e-6, < 120 s", [](Verdict& v) {
    const auto t0 = Clock::now();
    ModelCheckOptions options;  // default toy model: depth 2, width 64
    double worst32 = 0, worst64 = 0;
    std::size_t kinked = 0, tensors = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      options.init_seed = seed;
      options.check.seed = seed;
      const auto r64 = check_model_gradients<double>(options);
      const auto r32 = check_model_gradients<float>(options);
      worst64 = std::max(worst64, r64.max_rel_error());
      worst32 = std::max(worst32, r32.max_rel_error());
      kinked += r64.kinked() + r32.kinked();
      tensors = r64.params.size();
    }
    const double elapsed = seconds_since(t0);
    v.detail << std::setprecision(2) << " f32 max " << worst32 << ", f64 max " << worst64 << ", " << tensors
             << " tensors/seed, kinked elements " << kinked;
    v.require(worst32 < 1e-3, "f32 < 1e-3");
    v.require(worst64 < 1e-6, "f64 < 1e-6");
    v.require(elapsed < 120.0, "runtime < 120 s");
  });

  report(2, "overfit oracle: train F1 >= 0.99, held-out F1 >= 0.80, <= 2000 steps, < 600 s", [](Verdict& v) {
    const auto t0 = Clock::now();
    OverfitRun run;
    run.config = overfit_config();
    run.data = app::synth_splits(app::default_synth_spec(), 1);
    run.types = type_inventory(run.data.train);
    run.result = fit(run.data.train, run.config);
    const auto& r = run.result;
    const auto train = evaluate_model(r.params, r.vocab, run.data.train, run.types, run.config.decode, run.config.max_types);
    const auto dev = evaluate_model(r.params, r.vocab, run.data.dev, run.types, run.config.decode, run.config.max_types);
    const auto fig = fig2_table(r.params, r.vocab, run.types, run.config.max_types);
    const double person = column_prob(fig, {0, 1}, "person");
    const double location = column_prob(fig, {0, 1}, "location");
    const double elapsed = seconds_since(t0);
    v.detail << std::fixed << std::setprecision(3) << " " << run.data.train.size() << " sentences, "
             << run.types.size() << " types, " << run.config.steps << " steps; train F1 " << train.f1()
             << ", held-out F1 " << dev.f1() << std::scientific << std::setprecision(2) << "; phi((0,1),person) "
             << person << ", phi((0,1),location) " << location;
    v.require(run.config.steps <= 2000, "steps <= 2000");
    v.require(run.data.train.size() == 50 && run.types.size() == 10, "50 sentences, 10 types");
    v.require(train.f1() >= 0.99, "train F1 >= 0.99");
    v.require(dev.f1() >= 0.80, "held-out F1 >= 0.80");
    v.require(person > 0.5, "phi((0,1),person) > 0.5");
    v.require(location < 0.5, "phi((0,1),location) < 0.5");
    v.require(elapsed < 600.0, "runtime < 600 s");
    overfit = std::move(run);
  });

  report(3, "decoder equals brute-force oracle on 1000 random tables", [](Verdict& v) {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::size_t mismatches = 0, invariant_breaks = 0, candidates = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      ScoreTable t;
      t.num_words = 1 + rng() % 8;
      t.max_width = 1 + rng() % 4;
      t.spans = enumerate_spans(t.num_words, t.max_width);
      const std::size_t m = 1 + rng() % 3;
      for (std::size_t i = 0; i < m; ++i) t.types.push_back("type" + std::to_string(i));
      for (std::size_t i = 0; i < t.spans.size() * m; ++i) t.probs.push_back(std::clamp(u(rng), 1e-12, 1 - 1e-12));

      for (auto mode : {DecodeMode::flat, DecodeMode::nested}) {
        const DecodeConfig cfg{mode, 0.5};
        const auto got = decode(t, cfg);

        std::vector<EntityMention> all;
        for (std::size_t s = 0; s < t.spans.size(); ++s)
          for (std::size_t c = 0; c < m; ++c)
            if (t.prob(s, c) > 0.5) all.push_back({t.spans[s].start, t.spans[s].end, t.types[c], t.prob(s, c)});
        candidates += all.size();
        std::sort(all.begin(), all.end(), [](const EntityMention& a, const EntityMention& b) {
          return std::make_tuple(-a.score, a.start, a.end, a.type) < std::make_tuple(-b.score, b.start, b.end, b.type);
        });
        std::vector<EntityMention> want;
        for (const auto& c : all) {
          bool ok = true;
          for (const auto& k : want) {
            const bool disjoint = c.end < k.start || k.end < c.start;
            const bool same = c.start == k.start && c.end == k.end;
            const bool nested =
                !same && ((k.start <= c.start && c.end <= k.end) || (c.start <= k.start && k.end <= c.end));
            ok = ok && (disjoint || (mode == DecodeMode::nested && nested));
          }
          if (ok) want.push_back(c);
        }
        std::sort(want.begin(), want.end());
        if (got != want) ++mismatches;

        for (std::size_t i = 0; i < got.size(); ++i) {
          if (!(got[i].score > 0.5)) ++invariant_breaks;
          for (std::size_t j = i + 1; j < got.size(); ++j) {
            const auto &a = got[i], &b = got[j];
            const bool disjoint = a.end < b.start || b.end < a.start;
            const bool proper = !(a.start == b.start && a.end == b.end) &&
                                ((a.start <= b.start && b.end <= a.end) || (b.start <= a.start && a.end <= b.end));
            if (!(disjoint || (mode == DecodeMode::nested && proper))) ++invariant_breaks;
          }
        }
      }
    }
    v.detail << " 2000 decodes, " << candidates << " candidates, " << mismatches << " mismatches, "
             << invariant_breaks << " invariant violations";
    v.require(mismatches == 0, "oracle equivalence");
    v.require(invariant_breaks == 0, "structural invariants");
  });

  report(4, "loss arithmetic: from-logits vs naive within 1e-6, ln 2 to 1e-9", [](Verdict& v) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-20.0, 20.0);
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
      const double x = u(rng);
      const std::uint8_t y = rng() % 2;
      nn::Graph<double> g;
      const double stable = bce_loss(g, nn::Tensor<double>({1, 1}, {x}), LabelGrid{1, 1, {y}, 0}).item();
      const double p = 1.0 / (1.0 + std::exp(-x));
      const double naive = y ? -std::log(p) : -std::log(1.0 - p);
      worst = std::max(worst, std::abs(stable - naive));
    }
    nn::Graph<double> g;
    const double ln2 = bce_loss(g, nn::Tensor<double>({1, 1}, {0.0}), LabelGrid{1, 1, {1}, 0}).item();
    v.detail << std::setprecision(2) << " max |diff| " << worst << " over 1e4 pairs; single pair " << std::setprecision(12)
             << ln2;
    v.require(worst < 1e-6, "within 1e-6");
    v.require(std::abs(ln2 - 0.693147180559945) < 1e-9, "ln 2 to 1e-9");
  });

  report(5, "span enumeration counts for 100 random (N <= 300, K <= 12)", [](Verdict& v) {
    std::mt19937_64 rng(5);
    int bad = 0;
    for (int i = 0; i < 100; ++i) {
      const std::size_t n = 1 + rng() % 300, k = 1 + rng() % 12;
      std::size_t expected = 0;
      for (std::size_t w = 1; w <= std::min(k, n); ++w) expected += n - w + 1;
      const auto spans = enumerate_spans(n, k);
      bool ok = spans.size() == expected;
      for (const auto& s : spans) ok = ok && s.start <= s.end && s.end < n && s.width() <= k;
      bad += !ok;
    }
    v.detail << " " << bad << " mismatching pairs; N=20,K=12 gives " << enumerate_spans(20, 12).size();
    v.require(bad == 0, "counts match the closed form");
    v.require(enumerate_spans(20, 12).size() == 174, "N=20, K=12 -> 174");
  });

  report(6, "sampling statistics: negative fraction in [0.45, 0.55], mean survivors in [7.8, 8.2]", [](Verdict& v) {
    const auto train = app::synth_dataset(app::default_synth_spec(), 200, 6);
    nn::Rng rng(6);
    std::size_t negatives = 0, total = 0, leaked = 0;
    for (int batch = 0; batch < 1000; ++batch) {
      std::vector<std::size_t> members;
      for (int b = 0; b < 8; ++b) members.push_back(rng() % train.size());
      for (std::size_t b = 0; b < members.size(); ++b) {
        std::vector<std::string> pool;
        for (std::size_t o = 0; o < members.size(); ++o)
          if (o != b)
            for (const auto& t : train[members[o]].positive_types()) pool.push_back(t);
        const auto positives = train[members[b]].positive_types();
        const auto out = sample_negative_types(positives, pool, 0.5, kDefaultMaxTypes, rng);
        for (std::size_t i = positives.size(); i < out.size(); ++i)
          leaked += std::find(positives.begin(), positives.end(), out[i]) != positives.end();
        negatives += out.size() - positives.size();
        total += out.size();
      }
    }
    const double fraction = double(negatives) / double(total);

    std::vector<std::string> ten;
    for (int i = 0; i < 10; ++i) ten.push_back("type" + std::to_string(i));
    double survivors = 0;
    for (int i = 0; i < 10000; ++i) survivors += double(shuffle_and_drop(ten, 0.2, rng).size());
    survivors /= 10000;
    v.detail << std::fixed << std::setprecision(4) << " negative fraction " << fraction << ", mean survivors "
             << survivors << ", positives leaked " << leaked;
    v.require(fraction >= 0.45 && fraction <= 0.55, "negative fraction");
    v.require(survivors >= 7.8 && survivors <= 8.2, "mean survivors");
    v.require(leaked == 0, "no positive sampled as negative");
  });

  report(7, "schedule shape: 0 at start, base at warmup end, base/2 at cosine midpoint, 0 at end", [](Verdict& v) {
    OptimState s;
    s.config.base_lr = {3e-3, 5e-5};
    s.config.total_steps = 2000;
    s.config.warmup_fraction = 0.1;
    const std::size_t warm = s.warmup_steps();
    const std::size_t mid = warm + (s.config.total_steps - warm) / 2;
    for (auto group : {ParamGroup::backbone, ParamGroup::heads}) {
      const double base = s.config.base_lr[static_cast<std::size_t>(group)];
      v.require(lr_at(0, s, group) == 0.0, "lr(0) = 0");
      v.require(lr_at(warm, s, group) == base, "lr(warmup end) = base");
      v.require(lr_at(s.config.total_steps, s, group) == 0.0, "lr(total) = 0");
      v.require(std::abs(lr_at(mid, s, group) - base / 2) <= 1e-9, "midpoint = base/2");
      v.require(std::abs(lr_at(warm - 1, s, group) - lr_at(warm + 1, s, group)) < base * 0.02, "continuity");
    }
    v.detail << " warmup " << warm << " of " << s.config.total_steps << " steps, midpoint step " << mid
             << ", lr(mid) " << std::setprecision(6) << lr_at(mid, s, ParamGroup::backbone);
  });

  report(8, "negative-sampling ablation direction (directional, warning only)", [](Verdict& v) {
    v.soft = true;
    auto cfg = overfit_config();
    const auto data = app::synth_splits(app::default_synth_spec(), 8);
    const auto types = type_inventory(data.train);
    std::vector<EvalReport> reports;
    for (double ratio : {0.0, 0.5, 0.75}) {
      cfg.neg_ratio = ratio;
      const auto r = fit(data.train, cfg);
      reports.push_back(evaluate_model(r.params, r.vocab, data.dev, types, cfg.decode, cfg.max_types));
    }
    v.detail << std::fixed << std::setprecision(3);
    const char* names[] = {"0%", "50%", "75%"};
    for (int i = 0; i < 3; ++i) {
      v.detail << " " << names[i] << ": P " << reports[i].precision() << " R " << reports[i].recall() << " F1 "
               << reports[i].f1() << ";";
    }
    v.require(reports[0].precision() < reports[1].precision(), "precision(0%) < precision(50%)");
    v.require(reports[2].recall() < reports[1].recall(), "recall(75%) < recall(50%)");
  });

  report(9, "determinism and checkpoint persistence", [](Verdict& v) {
    auto cfg = overfit_config();
    cfg.steps = 40;
    const auto data = app::synth_splits(app::default_synth_spec(), 9);
    auto trace = [&] {
      std::vector<double> losses;
      for (const auto& r : fit(data.train, cfg).trace) losses.push_back(r.loss);
      return losses;
    };
    const auto a = trace();
    const auto b = trace();
    v.require(a == b, "identical seeds give identical loss traces");

    if (!overfit) throw ContractError("acceptance", "criterion 2 produced no model");
    const auto& run = *overfit;
    app::Checkpoint ckpt{run.result.params, run.result.vocab, json{{"seed", run.config.seed}}};
    const auto restored = app::deserialize_checkpoint(app::serialize_checkpoint(ckpt));
    std::size_t tables = 0, differing = 0;
    for (const auto& ex : run.data.dev) {
      const auto x = predict_table_chunked(run.result.params, run.result.vocab, run.types, ex.words, run.config.max_types);
      const auto y = predict_table_chunked(restored.params, restored.vocab, run.types, ex.words, run.config.max_types);
      ++tables;
      const bool same = x.spans == y.spans && x.types == y.types && x.probs.size() == y.probs.size() &&
                        std::memcmp(x.probs.data(), y.probs.data(), x.probs.size() * sizeof(double)) == 0 &&
                        std::memcmp(x.logits.data(), y.logits.data(), x.logits.size() * sizeof(double)) == 0;
      differing += !same;
    }
    v.detail << " " << a.size() << "-step traces equal: " << (a == b ? "yes" : "no") << "; " << tables
             << " reloaded score tables, " << differing << " differ";
    v.require(differing == 0, "bit-identical score tables after reload");
  });

  report(10, "decode scaling: < 15x per decade from 1e3 to 1e5 candidates, pops <= candidates", [](Verdict& v) {
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(0.5000001, 0.9999999);
    std::vector<double> per_decode;
    v.detail << std::setprecision(2);
    for (std::size_t target : {1000u, 10000u, 100000u}) {
      // A pool of distinct tables, so no timing replays one memorized input.
      const std::size_t reps = std::max<std::size_t>(4, 400000 / target);
      std::vector<ScoreTable> pool(reps);
      for (auto& t : pool) {
        t.max_width = 12;
        t.types = {"a", "b"};
        t.num_words = (target / t.types.size() + 66 + 11) / 12;
        t.spans = enumerate_spans(t.num_words, t.max_width);
        for (std::size_t i = 0; i < t.spans.size() * t.types.size(); ++i) t.probs.push_back(u(rng));
      }
      for (auto mode : {DecodeMode::flat, DecodeMode::nested}) {
        DecodeStats stats;
        decode(pool.front(), {mode, 0.5}, &stats);
        v.require(stats.candidates == pool.front().probs.size(), "every entry is a candidate");
        v.require(stats.pops <= stats.candidates, "pops <= candidates");
      }
      double best = 1e300;
      for (int trial = 0; trial < 5; ++trial) {
        const auto t0 = Clock::now();
        for (const auto& t : pool) {
          DecodeStats stats;
          decode(t, {DecodeMode::flat, 0.5}, &stats);
          decode(t, {DecodeMode::nested, 0.5}, &stats);
        }
        best = std::min(best, seconds_since(t0) / double(reps));
      }
      per_decode.push_back(best);
      v.detail << " " << pool.front().probs.size() << " candidates: " << best * 1e3 << " ms;";
    }
    for (std::size_t i = 1; i < per_decode.size(); ++i) {
      const double ratio = per_decode[i] / per_decode[i - 1];
      v.detail << " ratio " << std::fixed << std::setprecision(1) << ratio << std::scientific;
      v.require(ratio < 15.0, "growth per decade < 15x");
    }
  });

  std::cout << (hard_failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED") << " (" << hard_failures
            << " hard failure(s))" << std::endl;
  return hard_failures == 0 ? 0 : 1;
}
