// SPDX-License-Identifier: Apache-2.0

#include "ramen/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <nlohmann/json.hpp>
#include <ostream>
#include <thread>

#include "ramen/checkpoint.hpp"
#include "ramen/gradcheck.hpp"

namespace ramen::cli {
namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data::DataError("cannot write " + path.string());
  out << text;
}

Json report_to_json(const metrics::MetricsReport& r) { return Json::parse(metrics::report_json(r)); }

template <typename T>
RunResult train_typed(const RunConfig& config, const train::TrainingData& data, Ablation ablation,
                      std::size_t repeat, const std::optional<fs::path>& checkpoint,
                      const std::optional<fs::path>& resume) {
  RamenConfig mc = train::fit_config(config.model, data);
  mc.ablation = ablation;
  RamenModel<T> model(mc, model_seed(config, repeat));
  train::TrainerConfig tc = config.trainer;
  tc.seed = trainer_seed(config, repeat);
  train::Trainer<T> trainer(model, data, tc, config.schedule);
  if (resume) trainer.resume(*resume);
  const auto& progress = trainer.run(checkpoint);

  RunResult r;
  r.log = progress.log;
  r.best_epoch = progress.best_epoch;
  std::vector<std::string> families;
  for (auto f : config.data.corpus.families) families.emplace_back(data::to_string(f));
  const auto bs = tc.batch_size;
  if (!data.val.empty()) {
    const auto records = train::evaluate_examples(model, data, data.val, bs, tc.zero_regions);
    r.val_report = metrics::evaluate_records(records, families);
    r.val_acc = r.val_report.simple;
  }
  if (!data.test.empty()) {
    const auto records = train::evaluate_examples(model, data, data.test, bs, tc.zero_regions);
    r.test_report = metrics::evaluate_records(records, families);
    r.test_acc = r.test_report->simple;
  }
  return r;
}

RunResult train_dispatch(const RunConfig& config, const train::TrainingData& data,
                         Ablation ablation, std::size_t repeat,
                         const std::optional<fs::path>& checkpoint,
                         const std::optional<fs::path>& resume) {
  if (config.precision == Precision::double_) {
    return train_typed<double>(config, data, ablation, repeat, checkpoint, resume);
  }
  return train_typed<float>(config, data, ablation, repeat, checkpoint, resume);
}

template <typename T>
Json eval_typed(const RunConfig& config, const fs::path& ckpt_path, const data::Dataset& dataset) {
  const auto ckpt = train::load_checkpoint<T>(ckpt_path);
  const data::AnswerVocab vocab(ckpt.answers);
  const auto data = train::prepare_data(dataset, vocab, config.data.features);
  RamenConfig expected = train::fit_config(ckpt.config, data);
  train::require_same_config(expected, ckpt.config);
  RamenModel<T> model(ckpt.config, 0);
  train::restore_snapshot(model, ckpt.progress.best ? *ckpt.progress.best : ckpt.model);

  std::vector<std::string> families;
  for (auto f : config.data.corpus.families) families.emplace_back(data::to_string(f));
  Json out = Json::object();
  for (const auto* split : {&data.val, &data.test}) {
    if (split->empty()) continue;
    const auto records = train::evaluate_examples(model, data, *split, ckpt.trainer.batch_size,
                                                  ckpt.trainer.zero_regions);
    out[split == &data.val ? "val" : "test"] =
        report_to_json(metrics::evaluate_records(records, families, true));
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

data::Dataset build_dataset(const RunConfig& config, data::SplitReport* report) {
  data::CorpusConfig corpus = config.data.corpus;
  corpus.seed = config.seed;
  auto dataset = data::generate_corpus(corpus);
  data::SplitOptions split = config.data.split;
  split.regime = config.split_regime;
  split.seed = config.seed;
  const auto r = data::make_splits(dataset, split);
  if (report) *report = r;
  return dataset;
}

train::TrainingData build_training_data(const RunConfig& config, const data::Dataset& dataset) {
  const auto vocab = data::build_answer_vocab(dataset.items, config.data.vocab);
  return train::prepare_data(dataset, vocab, config.data.features);
}

RunResult train_and_evaluate(const RunConfig& config, const train::TrainingData& data,
                             Ablation ablation, std::size_t repeat,
                             const std::optional<fs::path>& checkpoint) {
  return train_dispatch(config, data, ablation, repeat, checkpoint, std::nullopt);
}

std::vector<AblationRow> run_ablation(const RunConfig& config, const train::TrainingData& data,
                                      std::size_t threads) {
  std::vector<AblationRow> rows;
  for (auto v : config.ablation_variants)
    for (std::size_t r = 0; r < config.ablation_repeats; ++r) rows.push_back({v, r, 0, 0});

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < rows.size(); i = next++) {
      try {
        const auto res = train_and_evaluate(config, data, rows[i].variant, rows[i].repeat);
        rows[i].val_acc = res.val_acc;
        rows[i].test_acc = res.test_acc;
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(threads, rows.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return rows;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "variant,seed,val_acc,test_acc\n";
  std::vector<Ablation> order;
  for (const auto& r : rows) {
    out += std::string(to_string(r.variant)) + "," + std::to_string(r.repeat) + "," +
           fmt(r.val_acc) + "," + fmt(r.test_acc) + "\n";
    if (std::find(order.begin(), order.end(), r.variant) == order.end()) order.push_back(r.variant);
  }
  for (auto v : order) {
    std::vector<double> val, test;
    for (const auto& r : rows) {
      if (r.variant != v) continue;
      val.push_back(r.val_acc);
      test.push_back(r.test_acc);
    }
    out += std::string(to_string(v)) + ",median," + fmt(median(val)) + "," + fmt(median(test)) + "\n";
  }
  return out;
}

std::size_t thread_budget() {
  const char* env = std::getenv("RAMEN_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) {
    throw ConfigError(std::string("RAMEN_THREADS must be a positive integer, got '") + env + "'");
  }
  return static_cast<std::size_t>(n);
}

int cmd_gen_data(const RunConfig& config, std::ostream& log) {
  data::SplitReport report;
  const auto dataset = build_dataset(config, &report);
  const fs::path dir = config.paths.dataset;
  data::write_dataset(dataset, dir);

  Json histogram = Json::object();
  std::map<std::string, std::map<std::string, std::size_t>> counts;
  for (const auto& it : dataset.items) ++counts[std::string(data::to_string(it.family))][it.answer];
  for (const auto& [family, answers] : counts) {
    Json h = Json::object();
    for (const auto& [a, n] : answers) h[a] = n;
    histogram[family] = h;
  }
  Json tv = Json::object();
  for (const auto& [family, d] : report.tv) tv[std::string(data::to_string(family))] = d;
  Json manifest{{"scenes", dataset.scenes.size()},
                {"items", dataset.items.size()},
                {"split_regime", data::to_string(report.regime)},
                {"splits", {{"train", report.train}, {"val", report.val}, {"test", report.test}}},
                {"dropped", report.dropped},
                {"answer_histogram", histogram},
                {"tv", tv}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  write_text(dir / "config.json", run_config_json(config));
  log << "wrote " << dataset.items.size() << " questions over " << dataset.scenes.size()
      << " scenes to " << dir.string() << " (train " << report.train << ", val " << report.val
      << ", test " << report.test << ", dropped " << report.dropped << ")\n";
  return kExitOk;
}

int cmd_train(const RunConfig& config, std::ostream& log) {
  const auto dataset = data::read_dataset(config.paths.dataset);
  const auto data = build_training_data(config, dataset);
  const fs::path out = config.paths.output;
  fs::create_directories(out);
  write_text(out / "config.json", run_config_json(config));
  std::optional<fs::path> resume;
  if (!config.paths.resume.empty()) resume = config.paths.resume;
  const auto r = train_dispatch(config, data, config.model.ablation, 0, out / "checkpoint.bin", resume);
  write_text(out / "learning_curve.csv", train::learning_curve_csv(r.log));
  Json report{{"ablation", to_string(config.model.ablation)},
              {"epochs", r.log.size()},
              {"best_epoch", r.best_epoch},
              {"val", report_to_json(r.val_report)}};
  if (r.test_report) report["test"] = report_to_json(*r.test_report);
  write_text(out / "report.json", report.dump(2) + "\n");
  for (const auto& e : r.log) {
    log << "epoch " << e.epoch << " lr " << fmt(e.lr) << " loss " << fmt(e.train_loss)
        << " train_acc " << fmt(e.train_acc) << " val_acc " << fmt(e.val_acc) << "\n";
  }
  log << "best epoch " << r.best_epoch << ": val " << fmt(r.val_acc) << ", test "
      << fmt(r.test_acc) << "\n";
  return kExitOk;
}

int cmd_eval(const RunConfig& config, std::ostream& log) {
  const fs::path out = config.paths.output;
  const fs::path ckpt = config.paths.checkpoint.empty() ? out / "checkpoint.bin"
                                                        : fs::path(config.paths.checkpoint);
  const auto dataset = data::read_dataset(config.paths.dataset);
  const Json report = train::checkpoint_scalar_size(ckpt) == sizeof(double)
                          ? eval_typed<double>(config, ckpt, dataset)
                          : eval_typed<float>(config, ckpt, dataset);
  write_text(out / "eval_report.json", report.dump(2) + "\n");
  for (const auto& [split, r] : report.items()) {
    log << split << ": simple " << fmt(r["overall"]["simple"].get<double>()) << ", mpt "
        << fmt(r["overall"]["mpt"].get<double>()) << ", nmpt "
        << fmt(r["overall"]["nmpt"].get<double>()) << "\n";
  }
  return kExitOk;
}

int cmd_ablate(const RunConfig& config, std::size_t threads, std::ostream& log) {
  const auto dataset = data::read_dataset(config.paths.dataset);
  const auto data = build_training_data(config, dataset);
  const fs::path out = config.paths.output;
  fs::create_directories(out);
  write_text(out / "config.json", run_config_json(config));
  const auto rows = run_ablation(config, data, threads);
  const auto csv = ablation_csv(rows);
  write_text(out / "ablation.csv", csv);
  log << csv;
  return kExitOk;
}

int cmd_grad_check(const RunConfig& config, bool inject_fault, std::ostream& log) {
  auto results = gradcheck::op_suite(config.seed);
  for (auto a : kAllAblations) {
    auto m = gradcheck::model_suite(gradcheck::toy_config(a), config.seed);
    results.insert(results.end(), m.begin(), m.end());
  }
  if (inject_fault) results.push_back(gradcheck::corrupted_control(config.seed));
  const auto text = gradcheck::format_report(results);
  log << text;
  if (!config.paths.output.empty()) write_text(fs::path(config.paths.output) / "gradcheck.txt", text);
  const auto failed = std::count_if(results.begin(), results.end(),
                                    [](const gradcheck::CheckResult& r) { return !r.passed(); });
  log << (failed ? std::to_string(failed) + " of " : "all ") << results.size()
      << (failed ? " checks failed\n" : " checks passed\n");
  return failed ? kExitNumericError : kExitOk;
}

}  // namespace ramen::cli
