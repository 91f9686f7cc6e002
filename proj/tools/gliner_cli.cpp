#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gliner/app/checkpoint.hpp"
#include "gliner/app/dataset.hpp"
#include "gliner/app/records.hpp"
#include "gliner/app/score_file.hpp"
#include "gliner/app/synth.hpp"
#include "gliner/decoder.hpp"
#include "gliner/evaluation.hpp"
#include "gliner/inference.hpp"
#include "gliner/model_check.hpp"
#include "gliner/trainer.hpp"

namespace {

using nlohmann::json;
using namespace gliner;

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("app", "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("app", path + ": " + e.what());
  }
}

// Writes to the named file, or stdout for "" / "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path);
      if (!file_) throw FormatError("app", "cannot write '" + path + "'");
    }
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

std::vector<std::string> split_types(const std::string& list) {
  std::vector<std::string> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    out.push_back(item.substr(first, item.find_last_not_of(" \t") - first + 1));
  }
  return out;
}

// Runs body(i) for i in [0, n) on up to hardware_concurrency threads.
template <class F>
void parallel_for(std::size_t n, F&& body) {
  const std::size_t workers = std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          body(i);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

// ------------------------------------------------------------------ options

struct DecodeFlags {
  std::string mode = "flat";
  double threshold = 0.5;
  bool multi_label = false;

  void add(CLI::App* cmd) {
    cmd->add_option("--mode", mode, "Decoding regime")->check(CLI::IsMember({"flat", "nested"}));
    cmd->add_option("--threshold", threshold, "Minimum matching score (exclusive)");
    cmd->add_flag("--multi-label", multi_label, "Allow several types on one span");
  }
  DecodeConfig config() const {
    DecodeConfig c{app::decode_mode_from_string(mode), threshold, multi_label};
    c.validate();
    return c;
  }
};

struct TrainFlags {
  std::string config;
  std::string train_path, dev_path, out, trace;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps, max_types, k;
  std::optional<double> neg_ratio, drop_prob;
};

struct PredictFlags {
  std::string checkpoint, data, text, types, out, scores_out;
  std::optional<std::size_t> max_types;
  DecodeFlags decode;
};

struct EvaluateFlags {
  std::string pred, gold, out;
};

struct DecodeScoresFlags {
  std::string scores, out;
  DecodeFlags decode;
};

struct GradcheckFlags {
  std::string config;
  std::uint64_t seed = 0;
  std::size_t seeds = 5;
  std::string precision = "both";
  double tol32 = 1e-3, tol64 = 1e-6;
  std::size_t samples = 16;
  std::optional<std::size_t> k;
};

struct SynthFlags {
  std::string spec, out = ".";
  std::uint64_t seed = 0;
  std::optional<std::size_t> train_size, dev_size, k;
};

// ----------------------------------------------------------------- commands

int run_train(const TrainFlags& f) {
  app::RunConfig rc;
  if (!f.config.empty()) rc = app::run_config_from_json(read_json_file(f.config));
  auto& tc = rc.train;
  if (f.seed) tc.seed = *f.seed;
  if (f.steps) tc.steps = *f.steps;
  if (f.max_types) tc.max_types = *f.max_types;
  if (f.k) tc.model.max_span_width = *f.k;
  if (f.neg_ratio) tc.neg_ratio = *f.neg_ratio;
  if (f.drop_prob) tc.drop_prob = *f.drop_prob;
  if (!f.train_path.empty()) rc.train_path = f.train_path;
  if (!f.dev_path.empty()) rc.dev_path = f.dev_path;
  if (!f.out.empty()) rc.out_path = f.out;
  if (rc.train_path.empty()) throw ConfigError("app", "no training data: pass --train or set paths.train");
  if (rc.out_path.empty()) throw ConfigError("app", "no checkpoint path: pass --out or set paths.out");

  const auto train = app::load_dataset(rc.train_path);
  std::vector<TrainingExample> dev;
  if (!rc.dev_path.empty()) dev = app::load_dataset(rc.dev_path);

  Output trace(f.trace.empty() ? rc.out_path + ".trace.jsonl" : f.trace);
  FitCallbacks callbacks;
  callbacks.on_step = [&](const StepRecord& r) { trace.stream() << app::to_json(r).dump() << '\n'; };
  callbacks.on_eval = [&](const EvalRecord& r) { trace.stream() << app::to_json(r).dump() << '\n'; };
  callbacks.on_warning = [](const std::string& msg) { std::cerr << "warning: trainer: " << msg << '\n'; };

  auto result = fit(train, tc, dev.empty() ? nullptr : &dev, callbacks);
  if (result.skipped_examples != 0) {
    std::cerr << "warning: trainer: " << result.skipped_examples << " example visit(s) had an empty prompt and were skipped\n";
  }

  app::Checkpoint ckpt{result.params, result.vocab,
                       {{"seed", tc.seed},
                        {"steps", tc.steps},
                        {"batch_size", tc.batch_size},
                        {"neg_ratio", tc.neg_ratio},
                        {"drop_prob", tc.drop_prob},
                        {"max_types", tc.max_types},
                        {"train_path", rc.train_path},
                        {"dev_path", rc.dev_path}}};
  app::save_checkpoint(rc.out_path, ckpt);

  json summary = {{"checkpoint", rc.out_path}, {"steps", tc.steps}, {"final_loss", result.trace.back().loss}};
  if (!result.evals.empty()) summary["dev"] = app::to_json(result.evals.back().report);
  std::cout << summary.dump() << '\n';
  return 0;
}

int run_predict(const PredictFlags& f) {
  const auto ckpt = app::load_checkpoint(f.checkpoint);
  const std::size_t max_types =
      f.max_types ? *f.max_types : ckpt.lineage.value("max_types", static_cast<std::size_t>(kDefaultMaxTypes));
  const auto decode_cfg = f.decode.config();

  std::vector<TrainingExample> inputs;
  if (!f.text.empty()) {
    if (!f.data.empty()) throw ConfigError("app", "pass either --text or --data, not both");
    TrainingExample ex;
    ex.id = "text";
    ex.words = split_whitespace(f.text);
    if (ex.words.empty()) throw ContractError("app", "--text has no words");
    inputs.push_back(std::move(ex));
  } else if (!f.data.empty()) {
    inputs = app::load_dataset(f.data);
  } else {
    throw ConfigError("app", "nothing to predict: pass --text or --data");
  }

  std::vector<std::string> types = split_types(f.types);
  if (types.empty()) {
    if (f.text.empty()) types = type_inventory(inputs);
    if (types.empty()) throw ConfigError("app", "no entity types: pass --types \"person,organization\"");
  }

  std::vector<TrainingExample> outputs(inputs.size());
  std::vector<app::ScoreRecord> tables(inputs.size());
  parallel_for(inputs.size(), [&](std::size_t i) {
    outputs[i].id = inputs[i].id;
    outputs[i].words = inputs[i].words;
    outputs[i].gold = predict_mentions(ckpt.params, ckpt.vocab, inputs[i].words, types, decode_cfg, max_types,
                                       &tables[i].table);
    tables[i].words = inputs[i].words;
  });

  Output out(f.out);
  app::write_dataset(out.stream(), outputs, true);
  if (!f.scores_out.empty()) {
    Output scores(f.scores_out);
    app::write_score_file(scores.stream(), tables);
  }
  return 0;
}

int run_evaluate(const EvaluateFlags& f) {
  const auto pred = app::load_dataset(f.pred, app::LoadOptions{true});
  const auto gold = app::load_dataset(f.gold);
  if (pred.size() != gold.size()) {
    throw ContractError("evaluation", "prediction file has " + std::to_string(pred.size()) + " records, gold has " +
                                          std::to_string(gold.size()));
  }
  std::vector<std::vector<EntityMention>> p, g;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (pred[i].words != gold[i].words) {
      throw ContractError("evaluation", "record " + std::to_string(i + 1) + " (" + gold[i].id +
                                            "): prediction and gold words differ");
    }
    p.push_back(pred[i].gold);
    g.push_back(gold[i].gold);
  }
  Output out(f.out);
  out.stream() << app::to_json(score(p, g)).dump() << '\n';
  return 0;
}

int run_decode_scores(const DecodeScoresFlags& f) {
  const auto records = app::load_score_file(f.scores);
  const auto cfg = f.decode.config();
  Output out(f.out);
  for (std::size_t i = 0; i < records.size(); ++i) {
    TrainingExample ex;
    ex.id = std::to_string(i);
    ex.words = records[i].words;
    ex.gold = decode(records[i].table, cfg);
    auto rec = app::to_record(ex, true);
    if (ex.words.empty()) rec.erase("tokenized_text");
    out.stream() << rec.dump() << '\n';
  }
  return 0;
}

int run_gradcheck(const GradcheckFlags& f) {
  ModelCheckOptions options;
  if (!f.config.empty()) options.model = app::run_config_from_json(read_json_file(f.config)).train.model;
  if (f.k) options.model.max_span_width = *f.k;
  options.check.max_elements_per_param = f.samples;

  bool ok = true;
  auto report = [&](const char* label, double tol, const nn::GradCheckReport& r, std::uint64_t seed) {
    std::cout << label << " seed " << seed << '\n';
    for (const auto& p : r.params) {
      std::cout << "  " << std::left << std::setw(36) << p.name << std::right << std::setw(5) << p.checked
                << std::scientific << std::setprecision(3) << std::setw(12) << p.max_rel_error
                << (p.kinked ? "  (" + std::to_string(p.kinked) + " kinked)" : "") << '\n'
                << std::defaultfloat;
    }
    const bool pass = r.passed(tol);
    std::cout << "  max " << std::scientific << std::setprecision(3) << r.max_rel_error() << std::defaultfloat
              << " tolerance " << tol << (pass ? "  PASS" : "  FAIL") << '\n';
    ok = ok && pass;
  };
  for (std::uint64_t s = f.seed; s < f.seed + f.seeds; ++s) {
    options.init_seed = s;
    options.check.seed = s;
    if (f.precision != "f32") report("f64", f.tol64, check_model_gradients<double>(options), s);
    if (f.precision != "f64") report("f32", f.tol32, check_model_gradients<float>(options), s);
  }
  return ok ? 0 : 1;
}

int run_synth(const SynthFlags& f) {
  auto spec = f.spec.empty() ? app::default_synth_spec() : app::synth_spec_from_json(read_json_file(f.spec));
  if (f.train_size) spec.train_size = *f.train_size;
  if (f.dev_size) spec.dev_size = *f.dev_size;
  if (f.k) spec.max_span_width = *f.k;
  const auto splits = app::synth_splits(spec, f.seed);
  app::save_dataset(f.out + "/train.jsonl", splits.train);
  app::save_dataset(f.out + "/dev.jsonl", splits.dev);
  const auto stats = app::dataset_stats(splits.train);
  std::cout << json{{"train", f.out + "/train.jsonl"},
                    {"dev", f.out + "/dev.jsonl"},
                    {"records", splits.train.size() + splits.dev.size()},
                    {"types", stats.types}}
                   .dump()
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Span-based open-type named entity recognition: train, predict, evaluate."};
  cli.require_subcommand(1);

  TrainFlags train;
  auto* c_train = cli.add_subcommand("train", "Train a model and write a checkpoint");
  c_train->add_option("--config", train.config, "Training config (JSON)");
  c_train->add_option("--train", train.train_path, "Training DatasetFile (JSONL)");
  c_train->add_option("--dev", train.dev_path, "Dev DatasetFile for evaluation");
  c_train->add_option("--out", train.out, "Checkpoint path");
  c_train->add_option("--trace", train.trace, "Loss trace output (default: <out>.trace.jsonl)");
  c_train->add_option("--seed", train.seed, "Seed for all randomness");
  c_train->add_option("--steps", train.steps, "Optimizer steps");
  c_train->add_option("--max-types", train.max_types, "Entity types per prompt");
  c_train->add_option("--k", train.k, "Maximum span width");
  c_train->add_option("--neg-ratio", train.neg_ratio, "Negative type fraction in [0, 1)");
  c_train->add_option("--drop-prob", train.drop_prob, "Per-type drop probability in [0, 1)");

  PredictFlags predict;
  auto* c_predict = cli.add_subcommand("predict", "Extract mentions with a trained checkpoint");
  c_predict->add_option("--checkpoint", predict.checkpoint, "Checkpoint path")->required();
  c_predict->add_option("--data", predict.data, "DatasetFile whose sentences to tag");
  c_predict->add_option("--text", predict.text, "One whitespace-tokenized sentence");
  c_predict->add_option("--types", predict.types, "Comma-separated entity types");
  c_predict->add_option("--max-types", predict.max_types, "Types per prompt (default: the training value)");
  c_predict->add_option("--out", predict.out, "Mention records (default: stdout)");
  c_predict->add_option("--scores-out", predict.scores_out, "Also write the score tables");
  predict.decode.add(c_predict);

  EvaluateFlags evaluate;
  auto* c_eval = cli.add_subcommand("evaluate", "Exact-match precision, recall and F1");
  c_eval->add_option("--pred", evaluate.pred, "Predicted DatasetFile")->required();
  c_eval->add_option("--gold", evaluate.gold, "Gold DatasetFile")->required();
  c_eval->add_option("--out", evaluate.out, "Report output (default: stdout)");

  DecodeScoresFlags decode_scores;
  auto* c_decode = cli.add_subcommand("decode-scores", "Decode exported score tables");
  c_decode->add_option("--scores", decode_scores.scores, "ScoreTable file (JSONL)")->required();
  c_decode->add_option("--out", decode_scores.out, "Mention records (default: stdout)");
  decode_scores.decode.add(c_decode);

  GradcheckFlags gradcheck;
  auto* c_grad = cli.add_subcommand("gradcheck", "Finite-difference check of every parameter tensor");
  c_grad->add_option("--config", gradcheck.config, "Config whose model section to check");
  c_grad->add_option("--seed", gradcheck.seed, "First seed");
  c_grad->add_option("--seeds", gradcheck.seeds, "Number of seeds");
  c_grad->add_option("--precision", gradcheck.precision)->check(CLI::IsMember({"f32", "f64", "both"}));
  c_grad->add_option("--tolerance-f32", gradcheck.tol32);
  c_grad->add_option("--tolerance-f64", gradcheck.tol64);
  c_grad->add_option("--samples", gradcheck.samples, "Elements per tensor (0 = all)");
  c_grad->add_option("--k", gradcheck.k, "Maximum span width");

  SynthFlags synth;
  auto* c_synth = cli.add_subcommand("synth-data", "Generate a synthetic train/dev dataset");
  c_synth->add_option("--spec", synth.spec, "Generator spec (JSON); default: built-in 10-type spec");
  c_synth->add_option("--seed", synth.seed, "Generator seed");
  c_synth->add_option("--out", synth.out, "Output directory");
  c_synth->add_option("--train-size", synth.train_size);
  c_synth->add_option("--dev-size", synth.dev_size);
  c_synth->add_option("--k", synth.k, "Maximum span width of generated mentions");

  CLI11_PARSE(cli, argc, argv);

  try {
    if (*c_train) return run_train(train);
    if (*c_predict) return run_predict(predict);
    if (*c_eval) return run_evaluate(evaluate);
    if (*c_decode) return run_decode_scores(decode_scores);
    if (*c_grad) return run_gradcheck(gradcheck);
    if (*c_synth) return run_synth(synth);
  } catch (const gliner::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: app: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
