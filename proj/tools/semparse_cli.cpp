// Command-line front end: preprocess, train, sweep, predict, eval.
// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
// 3 training or other runtime error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "semparse/checkpoint.hpp"
#include "semparse/error.hpp"
#include "semparse/evaluation.hpp"
#include "semparse/workflow.hpp"

namespace fs = std::filesystem;
using namespace semparse;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitRuntime = 3;

std::string join(std::span<const std::string> tokens) {
  std::string out;
  for (const std::string& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out = open_output(path);
  out << j.dump(2) << '\n';
}

void log_epoch(const EpochRecord& r) {
  std::fprintf(stderr, "epoch %3d  loss %.4f  dev %.4f  best %.4f  |g| %.3f  %.1fs\n", r.epoch,
               r.train_loss, r.dev_accuracy, r.best_dev_accuracy, r.max_grad_norm, r.seconds);
}

std::string ablation_tag(const Parser& parser) {
  std::string tag(to_string(parser.model().config().decoder));
  if (!parser.model().config().attention) tag += " -attention";
  if (!parser.pipeline().options().argument_identification) tag += " -argument";
  return tag;
}

/// Dataset lines carry a tab; plain lines are whole utterances.
std::vector<std::string> read_utterances(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read input file " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(line.substr(0, line.find('\t')));
  }
  if (out.empty()) throw DataError(path + ": no utterances");
  return out;
}

/// Swaps in a user lexicon; its marker types must be those the checkpoint's
/// vocabularies were built with.
Parser with_lexicon(const Parser& parser, const std::string& path) {
  ArgumentLexicon lexicon = ArgumentLexicon::load(path);
  if (lexicon.marker_types() != parser.pipeline().marker_types()) {
    std::string have, want;
    for (const auto& t : lexicon.marker_types()) have += " " + t;
    for (const auto& t : parser.pipeline().marker_types()) want += " " + t;
    throw DataError("lexicon " + path + " does not match the checkpoint vocabulary (types" +
                    have + "; checkpoint has" + want + ")");
  }
  return Parser(Pipeline(parser.pipeline().options(), std::move(lexicon)),
                parser.input_vocab(), parser.output_vocab(), parser.model(),
                parser.decode_options());
}

void write_attention(const fs::path& path, const Prediction& p) {
  std::ofstream out = open_output(path);
  for (const std::string& t : p.encoder_tokens) out << '\t' << t;
  out << '\n';
  char cell[32];
  for (std::size_t r = 0; r < p.attention.rows.size(); ++r) {
    out << (r < p.decoder_tokens.size() ? p.decoder_tokens[r] : std::string("?"));
    for (Eigen::Index c = 0; c < p.attention.rows[r].size(); ++c) {
      std::snprintf(cell, sizeof cell, "%.6f", p.attention.rows[r][c]);
      out << '\t' << cell;
    }
    out << '\n';
  }
}

// --- commands ---------------------------------------------------------------

struct PreprocessArgs {
  std::string data;
  std::string lexicon;
  std::string out_dir;
  std::string format = "bracket";
  std::string decoder = "seq2seq";
  bool no_arguments = false;
  bool stem = false;
  bool no_reverse = false;
  int min_count = 2;
};

int cmd_preprocess(const PreprocessArgs& a) {
  TrainConfig config;
  config.lf_format = lf_format_from_string(a.format);
  config.decoder = decoder_kind_from_string(a.decoder);
  config.argument_identification = !a.no_arguments;
  config.stem = a.stem;
  config.reverse_input = !a.no_reverse;
  config.input_min_count = a.min_count;
  config.lexicon_path = a.lexicon;
  config.validate();

  const Pipeline pipeline = make_pipeline(config);
  const std::vector<RawExample> raw = load_dataset(a.data);
  const std::vector<ExamplePair> pairs = prepare_all(pipeline, raw);
  const auto [in_vocab, out_vocab] = Parser::build_vocabularies(config, pairs);

  const fs::path dir(a.out_dir);
  std::ofstream masked = open_output(dir / "masked.tsv");
  std::ofstream args = open_output(dir / "arguments.tsv");
  args << "line\tmarker\tconstant\n";
  std::map<std::string, int> histogram;
  std::size_t utterance_tokens = 0;
  std::size_t lf_token_count = 0;
  for (const ExamplePair& p : pairs) {
    masked << join(p.input.masked.tokens) << '\t' << pipeline.render(p.logical_form) << '\n';
    for (const auto& [marker, constant] : p.input.masked.table.entries()) {
      args << p.line << '\t' << marker << '\t' << constant << '\n';
    }
    for (const std::string& t : p.input.masked.tokens) {
      if (is_marker(t, pipeline.marker_types())) {
        ++histogram[t.substr(0, t.find_first_of("0123456789"))];
      }
    }
    utterance_tokens += p.input.masked.tokens.size();
    lf_token_count += lf_tokens(p.logical_form).size();
  }
  for (const auto& [name, vocab] : {std::pair{"input_vocab.txt", &in_vocab},
                                    std::pair{"output_vocab.txt", &out_vocab}}) {
    std::ofstream v = open_output(dir / name);
    for (std::size_t k = 0; k < vocab->size(); ++k) v << k << '\t' << vocab->token(static_cast<int>(k)) << '\n';
  }

  std::printf("examples          %zu\n", pairs.size());
  std::printf("utterance tokens  %zu\n", utterance_tokens);
  std::printf("form tokens       %zu\n", lf_token_count);
  std::printf("input vocab       %zu (min count %d)\n", in_vocab.size(), a.min_count);
  std::printf("output vocab      %zu (%s)\n", out_vocab.size(), a.decoder.c_str());
  std::printf("masked arguments\n");
  if (histogram.empty()) std::printf("  (none)\n");
  for (const auto& [type, count] : histogram) std::printf("  %-8s %d\n", type.c_str(), count);
  return kExitOk;
}

struct TrainArgs {
  std::string config;
  std::string checkpoint;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  TrainConfig config = TrainConfig::load(a.config);
  if (!a.checkpoint.empty()) config.checkpoint_path = a.checkpoint;
  TrainingOutcome run = run_training(config, a.quiet ? EpochCallback{} : EpochCallback{log_epoch});
  save_checkpoint(config.checkpoint_path, run.parser, config.to_json(), config.seed);
  if (!config.report_path.empty()) write_json(config.report_path, run.report.to_json());
  std::printf("best epoch %d, dev accuracy %.4f (%s)\n", run.report.best_epoch,
              run.report.best_dev_accuracy, run.report.stop_reason.c_str());
  std::printf("checkpoint written to %s\n", config.checkpoint_path.c_str());
  return kExitOk;
}

struct SweepArgs {
  std::string config;
  std::string report;
};

int cmd_sweep(const SweepArgs& a) {
  SweepConfig sweep = SweepConfig::load(a.config);
  std::printf("dropout\tdim\tlr\tdev_accuracy\tbest_epoch\n");
  SweepResult result = run_sweep(sweep, [](const SweepRow& r) {
    std::printf("%.2f\t%d\t%g\t%.4f\t%d\n", r.dropout_rate, r.dim, r.learning_rate,
                r.dev_accuracy, r.best_epoch);
    std::fflush(stdout);
  });
  const TrainConfig& best = result.best_config;
  save_checkpoint(best.checkpoint_path, result.best_outcome.parser, best.to_json(), best.seed);
  if (!a.report.empty()) write_json(a.report, result.to_json());
  const SweepRow& row = result.rows[result.best];
  std::printf("best: dropout %.2f, dim %d, lr %g, dev accuracy %.4f\n", row.dropout_rate,
              row.dim, row.learning_rate, row.dev_accuracy);
  std::printf("checkpoint written to %s\n", best.checkpoint_path.c_str());
  return kExitOk;
}

struct PredictArgs {
  std::string checkpoint;
  std::string utterance;
  std::string input;
  std::string lexicon;
  std::string attention_dir;
  int beam = 1;
};

int cmd_predict(const PredictArgs& a) {
  Parser parser = load_checkpoint(a.checkpoint).parser;
  if (!a.lexicon.empty()) parser = with_lexicon(parser, a.lexicon);
  const std::vector<std::string> utterances =
      a.input.empty() ? std::vector<std::string>{a.utterance} : read_utterances(a.input);
  if (!a.attention_dir.empty() && !parser.model().config().attention) {
    throw ConfigError("--dump-attention needs a model trained with attention");
  }
  for (std::size_t k = 0; k < utterances.size(); ++k) {
    const Prediction p = parser.predict(utterances[k], a.beam);
    std::printf("%s\n", p.logical_form.c_str());
    if (!p.unresolved.empty()) {
      std::fprintf(stderr, "example %zu: unresolved markers: %s\n", k + 1,
                   join(p.unresolved).c_str());
    }
    if (!a.attention_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof name, "attention_%04zu.tsv", k + 1);
      write_attention(fs::path(a.attention_dir) / name, p);
    }
  }
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string lexicon;
  std::string verdicts;
  int beam = 1;
  int threads = 0;
};

int cmd_eval(const EvalArgs& a) {
  Parser parser = load_checkpoint(a.checkpoint).parser;
  if (!a.lexicon.empty()) parser = with_lexicon(parser, a.lexicon);
  const std::vector<RawExample> data = load_dataset(a.data);
  const EvalResult result = evaluate(parser, data, a.beam, a.threads);
  if (!a.verdicts.empty()) {
    std::ofstream out = open_output(a.verdicts);
    write_verdicts(out, result);
  }
  std::printf("model     %s\n", ablation_tag(parser).c_str());
  std::printf("examples  %d\n", result.total);
  std::printf("correct   %d\n", result.correct);
  std::printf("accuracy  %.4f\n", result.accuracy);
  std::printf("f1        %.4f\n", result.f1);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural semantic parser: sequence and tree decoders with attention"};
  app.require_subcommand(1);

  PreprocessArgs pre;
  auto* preprocess = app.add_subcommand("preprocess", "Mask a dataset and write vocabularies");
  preprocess->add_option("--data", pre.data, "utterance<TAB>logical form file")->required();
  preprocess->add_option("--lexicon", pre.lexicon, "surface<TAB>type<TAB>constant file");
  preprocess->add_option("--out", pre.out_dir, "output directory")->required();
  preprocess->add_option("--format", pre.format, "bracket or prolog")
      ->check(CLI::IsMember({"bracket", "prolog"}));
  preprocess->add_option("--decoder", pre.decoder, "seq2seq or seq2tree (output vocabulary)")
      ->check(CLI::IsMember({"seq2seq", "seq2tree"}));
  preprocess->add_flag("--no-arguments", pre.no_arguments, "disable argument identification");
  preprocess->add_flag("--stem", pre.stem, "stem utterance tokens");
  preprocess->add_flag("--no-reverse", pre.no_reverse, "keep the input order");
  preprocess->add_option("--min-count", pre.min_count, "input vocabulary count cutoff");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train a parser from a JSON config");
  train->add_option("--config", tr.config, "training config")->required();
  train->add_option("--checkpoint", tr.checkpoint, "override checkpoint_path");
  train->add_flag("--quiet", tr.quiet, "no per-epoch log");

  SweepArgs sw;
  auto* sweep = app.add_subcommand("sweep", "Grid search over dropout, size and learning rate");
  sweep->add_option("--config", sw.config, "sweep config")->required();
  sweep->add_option("--report", sw.report, "JSON report path");

  PredictArgs pr;
  auto* predict = app.add_subcommand("predict", "Parse utterances with a trained checkpoint");
  predict->add_option("--checkpoint", pr.checkpoint)->required();
  auto* utt = predict->add_option("--utterance", pr.utterance, "a single utterance");
  auto* inp = predict->add_option("--input", pr.input, "one utterance (or dataset line) per line");
  utt->excludes(inp);
  predict->add_option("--lexicon", pr.lexicon, "replace the checkpoint's lexicon");
  predict->add_option("--beam", pr.beam, "beam size (sequence decoder)")->check(CLI::PositiveNumber);
  predict->add_option("--dump-attention", pr.attention_dir, "write one attention TSV per input");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Exact-match accuracy and F1 on a labelled file");
  eval->add_option("--checkpoint", ev.checkpoint)->required();
  eval->add_option("--data", ev.data, "utterance<TAB>logical form file")->required();
  eval->add_option("--lexicon", ev.lexicon, "replace the checkpoint's lexicon");
  eval->add_option("--verdicts", ev.verdicts, "per-example TSV output");
  eval->add_option("--beam", ev.beam, "beam size (sequence decoder)")->check(CLI::PositiveNumber);
  eval->add_option("--threads", ev.threads, "decoding threads, 0 = all cores")
      ->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*preprocess) return cmd_preprocess(pre);
    if (*train) return cmd_train(tr);
    if (*sweep) return cmd_sweep(sw);
    if (*predict) {
      if (pr.utterance.empty() && pr.input.empty()) {
        throw ConfigError("predict needs --utterance or --input");
      }
      return cmd_predict(pr);
    }
    if (*eval) return cmd_eval(ev);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const TrainingError& e) {
    std::fprintf(stderr, "training error: %s\n", e.what());
    return kExitRuntime;
  } catch (const Error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitConfig;
}
