// arn: train, sample from, and evaluate adversarial autoregressive models.
//
//   arn train      --corpus reviews.txt --steps 5000 --out model.arn
//   arn generate   --checkpoint model.arn --mode noise --count 100
//   arn evaluate   --generated gen.txt --test test.txt
//   arn gradcheck  --preset desk
//   arn divlab     --trials 100 --k 4
//
// Any long flag can also come from a JSON file given with --config; keys are
// the flag names in lower_snake_case and explicit flags win.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "arn/commands.hpp"

namespace {

bool flag_present(const std::vector<std::string>& args, const std::string& flag) {
  for (const auto& a : args) {
    if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
  }
  return false;
}

// Appends config-file entries for flags the command line did not set.
std::vector<std::string> merge_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  std::ifstream is(path);
  if (!is) throw arn::IoError("cannot read config file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw arn::ConfigError(std::string("config file: ") + e.what());
  }
  if (!j.is_object()) throw arn::ConfigError("config file must hold a JSON object");
  for (const auto& [key, value] : j.items()) {
    std::string flag = "--" + key;
    for (auto& c : flag) {
      if (c == '_') c = '-';
    }
    if (flag_present(args, flag)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
    } else if (value.is_array()) {
      args.push_back(flag);
      for (const auto& v : value) args.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    } else {
      args.push_back(flag);
      args.push_back(value.is_string() ? value.get<std::string>() : value.dump());
    }
  }
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = merge_config(std::move(args));
  } catch (const arn::ArnError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return arn::kExitInput;
  }

  CLI::App app{"Adversarial autoregressive sequence models", "arn"};
  app.require_subcommand(1);
  std::string config_path;

  // train
  arn::RunConfig run;
  std::string corpus, markov, trace;
  auto* train = app.add_subcommand("train", "Train a model on a text corpus or a Markov source");
  train->add_option("--config", config_path, "JSON file of flag defaults");
  train->add_option("--corpus", corpus, "UTF-8 text, one sentence per line");
  train->add_option("--markov", markov, "JSON Markov source to sample the corpus from");
  train->add_option("--markov-samples", run.markov_samples, "Sequences drawn from --markov");
  train->add_option("--preset", run.preset, "Model size: desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  train->add_option("--vocab-size", run.vocab_size, "Vocabulary cap (overrides preset)");
  train->add_option("--seq-len", run.seq_len, "Sequence length T (overrides preset)");
  train->add_option("--steps", run.train.steps, "Training steps");
  train->add_option("--batch-size", run.train.batch_size, "Minibatch size");
  train->add_option("--lr", run.train.generator_adam.lr, "Adam learning rate (both players)");
  train->add_option("--lambda-adv", run.train.lambda_adv, "Weight of the adversarial generator term");
  train->add_option("--d-steps", run.train.d_steps, "Discriminator updates per step");
  train->add_option("--g-steps", run.train.g_steps, "Generator updates per step");
  train->add_option("--tau-start", run.train.tau_start, "Initial Gumbel-Softmax temperature");
  train->add_option("--tau-end", run.train.tau_end, "Final Gumbel-Softmax temperature");
  train->add_flag("--hard", run.train.hard, "Straight-through one-hot relaxation");
  train->add_flag("--non-saturating", run.train.non_saturating, "Generator minimizes -log D(G(z))");
  train->add_option("--checkpoint-every", run.train.checkpoint_every, "Snapshot interval in steps");
  train->add_option("--seed", run.train.seed, "Random seed");
  train->add_option("--dtype", run.dtype, "f64 or f32")->check(CLI::IsMember({"f32", "f64"}));
  train->add_option("--vocab", run.vocab, "Vocabulary file to write");
  train->add_option("--out,--checkpoint", run.checkpoint, "Checkpoint file to write");
  train->add_option("--trace", trace, "JSON-lines training trace");

  // generate
  arn::GenerateConfig gen;
  std::string out_path;
  auto* generate = app.add_subcommand("generate", "Sample sentences from a checkpoint");
  generate->add_option("--config", config_path, "JSON file of flag defaults");
  generate->add_option("--checkpoint", gen.checkpoint, "Checkpoint file")->required();
  generate->add_option("--vocab", gen.vocab, "Vocabulary file written by train");
  generate->add_option("--mode", gen.mode, "noise or decoded-x1");
  generate->add_option("--count", gen.count, "Number of sentences");
  generate->add_option("--seed", gen.seed, "Random seed");
  generate->add_flag("--argmax", gen.argmax, "Greedy decoding (lowest index wins ties)");
  generate->add_flag("--feed-real-x1", gen.feed_real_x1, "decoded-x1: use the real first token directly");
  generate->add_option("--out", out_path, "Output file (default: stdout)");

  // evaluate
  arn::EvaluateConfig eval;
  std::string eval_out;
  auto* evaluate = app.add_subcommand("evaluate", "BLEU, feature coverage and diversity report");
  evaluate->add_option("--config", config_path, "JSON file of flag defaults");
  evaluate->add_option("--generated", eval.generated, "Generated sentences")->required();
  evaluate->add_option("--test", eval.test, "Test sentences")->required();
  evaluate->add_option("--orders", eval.orders, "n-gram orders")->delimiter(',');
  evaluate->add_flag("--corpus-bleu", eval.corpus_bleu, "Aggregate BLEU counts over the corpus");
  evaluate->add_option("--out", eval_out, "Report file (default: stdout)");

  // gradcheck
  arn::GradCheckConfig gc;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every loss");
  gradcheck->add_option("--config", config_path, "JSON file of flag defaults");
  gradcheck->add_option("--preset", gc.preset, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  gradcheck->add_option("--seed", gc.seed, "Random seed");
  gradcheck->add_option("--max-coords", gc.max_coords, "Coordinates per tensor (0 = all)");

  // divlab
  arn::DivLabConfig dl;
  auto* divlab = app.add_subcommand("divlab", "Optimal discriminator, identity and Nash checks");
  divlab->add_option("--config", config_path, "JSON file of flag defaults");
  divlab->add_option("--trials", dl.trials, "Random games")->check(CLI::PositiveNumber);
  divlab->add_option("--k,--K", dl.k, "Outcomes per game")->check(CLI::Range(2, 16));
  divlab->add_option("--seed", dl.seed, "Random seed");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? arn::kExitOk : arn::kExitInput;
  }

  auto with_output = [](const std::string& path, auto&& body) {
    if (path.empty()) return body(std::cout);
    std::ofstream os(path, std::ios::trunc);
    if (!os) {
      std::cerr << "error: cannot open " << path << " for writing\n";
      return arn::kExitInput;
    }
    return body(os);
  };

  if (*train) {
    run.train.discriminator_adam.lr = run.train.generator_adam.lr;
    if (!corpus.empty()) run.corpus = corpus;
    if (!markov.empty()) run.markov = markov;
    if (!trace.empty()) run.trace = trace;
    return arn::cmd_train(run, std::cerr);
  }
  if (*generate) {
    return with_output(out_path, [&](std::ostream& os) { return arn::cmd_generate(gen, os, std::cerr); });
  }
  if (*evaluate) {
    return with_output(eval_out, [&](std::ostream& os) { return arn::cmd_evaluate(eval, os, std::cerr); });
  }
  if (*gradcheck) return arn::cmd_gradcheck(gc, std::cout, std::cerr);
  if (*divlab) return arn::cmd_divlab(dl, std::cout, std::cerr);
  return arn::kExitInput;
}
