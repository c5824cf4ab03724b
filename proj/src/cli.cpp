#include "spoiler/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "spoiler/corpus.hpp"
#include "spoiler/error.hpp"
#include "spoiler/features.hpp"
#include "spoiler/metrics.hpp"
#include "spoiler/trainer.hpp"

namespace spoiler::cli {

namespace {

using nlohmann::json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataOptions {
  std::string reviews;
  std::string titles;
  std::string title_policy = "attach";
  std::size_t limit = 0;  // 0 = everything
  std::uint64_t seed = 0;
};

struct Options {
  DataOptions data;
  std::string out;
  std::string vocab;
  std::string config;
  std::string checkpoint;
  std::string log;
  std::string report;
  std::string split = "test";
  std::string in;
  std::string out_model;
  std::size_t vocab_size = 8000;
  std::size_t max_len = 600;
  double threshold = 0.5;
  double baseline_lr = 1.0;
  std::size_t baseline_epochs = 5000;
  bool deterministic = false;
};

void add_reviews(CLI::App* cmd, DataOptions& d, bool with_seed) {
  cmd->add_option("--reviews", d.reviews, "Reviews file (JSON lines)")->required();
  cmd->add_option("--titles", d.titles, "Book titles file (JSON lines)");
  cmd->add_option("--title-policy", d.title_policy,
                  "attach: prepend the book title when known; omit: never")
      ->check(CLI::IsMember({"attach", "omit"}));
  cmd->add_option("--limit", d.limit, "Read at most N reviews (0 = all)");
  if (with_seed) cmd->add_option("--seed", d.seed, "Seed for splitting")->required();
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed for " + path);
}

corpus::ReviewFile load_reviews(const DataOptions& d, std::ostream& err) {
  auto file = corpus::parse_reviews_file(d.reviews);
  for (const auto& issue : file.report.skipped) {
    err << "warning: " << d.reviews << ":" << issue.line << ": skipped (" << issue.reason
        << ")\n";
  }
  if (file.report.has_spoiler_mismatches > 0) {
    err << "warning: " << file.report.has_spoiler_mismatches
        << " reviews have has_spoiler inconsistent with their sentence flags\n";
  }
  if (d.limit > 0 && file.reviews.size() > d.limit) file.reviews.resize(d.limit);
  err << "read " << file.reviews.size() << " reviews from " << d.reviews << "\n";
  return file;
}

std::vector<corpus::SentenceExample> load_examples(const DataOptions& d, std::ostream& err) {
  const auto reviews = load_reviews(d, err).reviews;
  std::map<std::string, std::string> titles;
  if (!d.titles.empty()) {
    auto file = corpus::parse_titles_file(d.titles);
    for (const auto& issue : file.skipped) {
      err << "warning: " << d.titles << ":" << issue.line << ": skipped (" << issue.reason
          << ")\n";
    }
    if (file.duplicates > 0) {
      err << "warning: " << file.duplicates << " duplicate book ids in " << d.titles
          << " (last one wins)\n";
    }
    titles = std::move(file.titles);
  }
  const auto policy = d.title_policy == "omit" || d.titles.empty()
                          ? corpus::TitlePolicy::omit
                          : corpus::TitlePolicy::attach;
  auto flat = corpus::flatten(reviews, titles, policy);
  if (flat.title_misses > 0) {
    err << "warning: " << flat.title_misses << " sentences have no title for their book\n";
  }
  return std::move(flat.examples);
}

corpus::DatasetSplit load_split(const DataOptions& d, std::ostream& err) {
  auto split = corpus::split(load_examples(d, err), corpus::SplitFractions{}, d.seed);
  err << "split: " << split.train.size() << " train, " << split.validation.size()
      << " validation, " << split.test.size() << " test sentences\n";
  return split;
}

int cmd_stats(const Options& o, std::ostream& err) {
  const auto file = load_reviews(o.data, err);
  write_json(corpus::to_json(corpus::compute_stats(file.reviews)), o.out);
  return kSuccess;
}

int cmd_build_vocab(const Options& o, std::ostream& err) {
  textprep::EncoderConfig config{o.vocab_size, o.max_len};
  try {
    config.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  const auto split = load_split(o.data, err);
  std::vector<std::vector<std::string>> token_lists;
  token_lists.reserve(split.train.size());
  for (const auto& ex : split.train) {
    auto tokens = textprep::normalize(ex.title);
    auto sentence = textprep::normalize(ex.sentence);
    tokens.insert(tokens.end(), sentence.begin(), sentence.end());
    token_lists.push_back(std::move(tokens));
  }
  const auto vocab = textprep::build_vocabulary(token_lists, config);
  err << "vocabulary: " << vocab.words().size() << " words\n";
  vocab.save(o.out);
  return kSuccess;
}

trainer::TrainConfig read_train_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  try {
    return trainer::train_config_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw DataError(path + ": " + e.what());
  }
}

int cmd_train(const Options& o, std::ostream& err) {
  const auto vocab = textprep::Vocabulary::load(o.vocab);
  auto config = read_train_config(o.config);
  config.seed = o.data.seed;
  if (config.encoder.vocab_size != vocab.config().vocab_size ||
      config.encoder.max_len != vocab.config().max_len) {
    throw DataError("config encoder settings differ from the vocabulary file");
  }
  const auto split = load_split(o.data, err);

  std::ofstream log(o.log, std::ios::binary);
  if (!log) throw DataError("cannot write " + o.log);
  trainer::Trainer t(config, trainer::encode_examples(vocab, split.train),
                     trainer::encode_examples(vocab, split.validation));
  while (!t.finished()) {
    const auto entry = t.run_epoch();
    log << trainer::to_json(entry, o.deterministic).dump() << '\n' << std::flush;
    err << "epoch " << entry.epoch << ": loss " << entry.loss << ", val_auc "
        << entry.val_auc << "\n";
  }
  err << "best epoch " << t.log().best_epoch << " (val_auc " << t.log().best_val_auc
      << ")\n";
  trainer::save_checkpoint(t.best_params(), nullptr, o.checkpoint);
  return kSuccess;
}

int cmd_evaluate(const Options& o, std::ostream& err) {
  const auto ck = trainer::load_checkpoint(o.checkpoint);
  const auto vocab = textprep::Vocabulary::load(o.vocab);
  if (ck.params.config.vocab_size != vocab.config().vocab_size) {
    throw DataError("checkpoint and vocabulary disagree on vocab_size");
  }
  const auto split = load_split(o.data, err);
  const auto& examples = o.split == "train"        ? split.train
                         : o.split == "validation" ? split.validation
                                                   : split.test;
  const auto report = metrics::evaluate(ck.params, vocab, examples, o.threshold);
  err << o.split << " AUC " << report.auc << "\n";
  json j = metrics::to_json(report);
  j["split"] = o.split;
  write_json(j, o.report);
  return kSuccess;
}

int cmd_predict(const Options& o, std::ostream& err) {
  const auto ck = trainer::load_checkpoint(o.checkpoint);
  const auto vocab = textprep::Vocabulary::load(o.vocab);
  if (ck.params.config.vocab_size != vocab.config().vocab_size) {
    throw DataError("checkpoint and vocabulary disagree on vocab_size");
  }
  std::ifstream in(o.in, std::ios::binary);
  if (!in) throw DataError("cannot open " + o.in);
  std::ofstream out(o.out, std::ios::binary);
  if (!out) throw DataError("cannot write " + o.out);

  std::string line;
  std::size_t line_no = 0;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string title;
    std::string sentence;
    try {
      const json j = json::parse(line);
      title = j.value("title", std::string());
      sentence = j.at("sentence").get<std::string>();
    } catch (const json::exception& e) {
      throw DataError(o.in + ":" + std::to_string(line_no) + ": " + e.what());
    }
    const double p = trainer::predict(ck.params, vocab, title, sentence);
    out << json{{"p_spoiler", p}, {"flag", p >= o.threshold ? 1 : 0}}.dump() << '\n';
    ++n;
  }
  err << "scored " << n << " sentences\n";
  return kSuccess;
}

int cmd_baseline(const Options& o, std::ostream& err) {
  const auto split = load_split(o.data, err);
  const auto table = features::build_df_iif(split.train);

  auto featurize_all = [&](const std::vector<corpus::SentenceExample>& examples) {
    std::pair<std::vector<features::FeatureVector>, std::vector<int>> out;
    for (const auto& ex : examples) {
      out.first.push_back(features::featurize(table, ex));
      out.second.push_back(ex.label);
    }
    return out;
  };
  const auto [train_x, train_y] = featurize_all(split.train);
  const auto fit = features::train_baseline(train_x, train_y, o.baseline_lr, o.baseline_epochs);

  const auto [test_x, test_y] = featurize_all(split.test);
  std::vector<double> scores;
  for (const auto& x : test_x) scores.push_back(features::predict_baseline(fit.model, x));
  const auto report = metrics::make_report(scores, test_y, o.threshold);
  err << "baseline test AUC " << report.auc << "\n";

  json j = metrics::to_json(report);
  j["split"] = "test";
  j["train_loss"] = fit.final_loss;
  j["model"] = fit.model.to_json();
  write_json(j, o.report);
  if (!o.out_model.empty()) write_json(fit.model.to_json(), o.out_model);
  return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sentence-level spoiler detection for book reviews", "spoiler"};
  app.require_subcommand(1);
  Options o;

  auto* stats = app.add_subcommand("stats", "Exploratory corpus statistics");
  add_reviews(stats, o.data, false);
  stats->add_option("--out", o.out, "Output JSON")->required();

  auto* vocab = app.add_subcommand("build-vocab", "Build the vocabulary from the training split");
  add_reviews(vocab, o.data, true);
  vocab->add_option("--vocab-size", o.vocab_size, "Vocabulary size including pad and OOV")
      ->required();
  vocab->add_option("--max-len", o.max_len, "Maximum tokens per example")->required();
  vocab->add_option("--out", o.out, "Output vocabulary JSON")->required();

  auto* train = app.add_subcommand("train", "Train the LSTM classifier");
  add_reviews(train, o.data, true);
  train->add_option("--vocab", o.vocab, "Vocabulary JSON")->required();
  train->add_option("--config", o.config, "Training config JSON")->required();
  train->add_option("--out-checkpoint", o.checkpoint, "Best-epoch checkpoint")->required();
  train->add_option("--log", o.log, "Per-epoch JSON lines log")->required();
  train->add_flag("--deterministic", o.deterministic, "Leave wall-clock times out of the log");

  auto* evaluate = app.add_subcommand("evaluate", "Score a split and write an AUC report");
  add_reviews(evaluate, o.data, true);
  evaluate->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required();
  evaluate->add_option("--vocab", o.vocab, "Vocabulary JSON")->required();
  evaluate->add_option("--split", o.split, "Which partition to score")
      ->required()
      ->check(CLI::IsMember({"train", "validation", "test"}));
  evaluate->add_option("--report", o.report, "Output report JSON")->required();
  evaluate->add_option("--threshold", o.threshold, "Operating point for confusion counts");

  auto* predict = app.add_subcommand("predict", "Score sentences from a JSON lines file");
  predict->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required();
  predict->add_option("--vocab", o.vocab, "Vocabulary JSON")->required();
  predict->add_option("--in", o.in, "Input lines {\"title\", \"sentence\"}")->required();
  predict->add_option("--out", o.out, "Output lines {\"p_spoiler\", \"flag\"}")->required();
  predict->add_option("--threshold", o.threshold, "Flag threshold");

  auto* baseline = app.add_subcommand("baseline", "DF-IIF logistic regression baseline");
  add_reviews(baseline, o.data, true);
  baseline->add_option("--report", o.report, "Output report JSON")->required();
  baseline->add_option("--out-model", o.out_model, "Optional baseline model JSON");
  baseline->add_option("--lr", o.baseline_lr, "Gradient descent step size");
  baseline->add_option("--epochs", o.baseline_epochs, "Full-batch iterations");
  baseline->add_option("--threshold", o.threshold, "Operating point for confusion counts");

  std::vector<std::string> argv_storage;
  argv_storage.reserve(args.size() + 1);
  argv_storage.push_back("spoiler");
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_storage) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsageError;
  }

  try {
    if (*stats) return cmd_stats(o, err);
    if (*vocab) return cmd_build_vocab(o, err);
    if (*train) return cmd_train(o, err);
    if (*evaluate) return cmd_evaluate(o, err);
    if (*predict) return cmd_predict(o, err);
    if (*baseline) return cmd_baseline(o, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsageError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kUsageError;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + (argc > 0 ? 1 : 0), argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace spoiler::cli
