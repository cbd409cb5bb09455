// coguide: train / eval / predict / gradcheck / graph-dump for the two-stage
// mutual-guidance intent+slot model.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include <coguide/coguide.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw coguide::config_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  coguide::require(static_cast<bool>(out), "cannot write file: " + path);
  out << content;
}

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value pairs applied over the config file
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "JSON config file");
  cmd->add_option("--set", flags.overrides,
                  "override any config field as key=value (repeatable)");
}

json parse_override_value(const std::string& raw) {
  // Accept bare words as strings so --set requires no shell quoting.
  auto parsed = json::parse(raw, nullptr, false);
  if (parsed.is_discarded()) return json(raw);
  return parsed;
}

coguide::TrainConfig load_config(const CommonFlags& flags) {
  json j = json::object();
  if (!flags.config_path.empty()) {
    try {
      j = json::parse(read_file(flags.config_path));
    } catch (const json::exception& e) {
      throw coguide::config_error("bad config JSON: " + std::string(e.what()));
    }
  }
  for (const auto& kv : flags.overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw coguide::config_error("--set expects key=value, got '" + kv + "'");
    j[kv.substr(0, eq)] = parse_override_value(kv.substr(eq + 1));
  }
  try {
    return coguide::TrainConfig::from_json(j);
  } catch (const json::exception& e) {
    throw coguide::config_error("bad config value: " + std::string(e.what()));
  }
}

std::vector<coguide::Sample> load_dataset(const std::string& path) {
  if (!fs::exists(path)) throw coguide::config_error("dataset not found: " + path);
  return coguide::parse_dataset(read_file(path));
}

// Config and vocab default to files written next to the checkpoint at
// training time.
struct ModelFiles {
  std::string checkpoint, vocab_path, config_path;

  void resolve() {
    if (checkpoint.empty()) throw coguide::config_error("--checkpoint is required");
    if (!fs::exists(checkpoint))
      throw coguide::config_error("checkpoint not found: " + checkpoint);
    fs::path dir = fs::path(checkpoint).parent_path();
    if (vocab_path.empty()) vocab_path = (dir / "vocab.json").string();
    if (config_path.empty()) config_path = (dir / "config.json").string();
    if (!fs::exists(vocab_path))
      throw coguide::config_error("vocab file not found: " + vocab_path);
    if (!fs::exists(config_path))
      throw coguide::config_error("config file not found: " + config_path);
  }
};

struct LoadedModel {
  coguide::TrainConfig cfg;
  coguide::Vocabularies vocab;
  coguide::ModelParams params;
};

LoadedModel load_model(ModelFiles files) {
  files.resolve();
  LoadedModel m;
  m.cfg = coguide::TrainConfig::from_json(json::parse(read_file(files.config_path)));
  m.vocab = coguide::vocab_from_json(json::parse(read_file(files.vocab_path)));
  auto ck = coguide::load_checkpoint(files.checkpoint);
  // Shapes must match the config-derived inventory exactly.
  coguide::ModelParams expect = coguide::init_params(
      m.cfg, m.vocab.n_words(), m.vocab.n_slots(), m.vocab.n_intents());
  for (const auto& [path, t] : expect.tensors) {
    if (!ck.params.has(path))
      throw coguide::config_error("checkpoint is missing parameter '" + path + "'");
    if (ck.params.at(path).shape() != t.shape())
      throw coguide::config_error("checkpoint shape mismatch for '" + path + "': got " +
                                  ck.params.at(path).shape_str() + ", config expects " +
                                  t.shape_str());
  }
  if (ck.params.tensors.size() != expect.tensors.size())
    throw coguide::config_error("checkpoint has unexpected extra parameters");
  m.params = std::move(ck.params);
  return m;
}

json prediction_json(const coguide::Vocabularies& vocab,
                     const std::vector<std::string>& tokens, const coguide::Prediction& p) {
  std::vector<std::string> intents, slots;
  for (int id : p.intents) intents.push_back(vocab.id_to_intent[static_cast<std::size_t>(id)]);
  for (int id : p.slots) slots.push_back(vocab.id_to_slot[static_cast<std::size_t>(id)]);
  return json{{"tokens", tokens}, {"intents", intents}, {"slots", slots}};
}

int cmd_train(const CommonFlags& flags, const std::string& train_path,
              const std::string& dev_path, const std::string& test_path, bool synthetic,
              int synth_templates, int synth_samples, std::string out_dir,
              std::string checkpoint) {
  coguide::TrainConfig cfg = load_config(flags);
  std::vector<coguide::Sample> train_samples, dev_samples, test_samples;
  if (synthetic) {
    train_samples = coguide::generate_synthetic(synth_templates, synth_samples, cfg.seed);
    dev_samples = train_samples;
    test_samples = train_samples;
  } else {
    if (train_path.empty())
      throw coguide::config_error("either --train or --synthetic is required");
    train_samples = load_dataset(train_path);
    if (!dev_path.empty()) dev_samples = load_dataset(dev_path);
    if (!test_path.empty()) test_samples = load_dataset(test_path);
  }

  fs::create_directories(out_dir);
  if (checkpoint.empty()) checkpoint = (fs::path(out_dir) / "best.ckpt").string();
  write_file((fs::path(out_dir) / "config.json").string(), cfg.to_json().dump(2) + "\n");

  coguide::TrainIO io;
  io.checkpoint_path = checkpoint;
  io.loss_csv_path = (fs::path(out_dir) / "losses.csv").string();
  io.log = &std::cerr;
  coguide::TrainResult result = coguide::run_training(train_samples, dev_samples, cfg, io);

  write_file((fs::path(out_dir) / "vocab.json").string(),
             coguide::vocab_to_json(result.vocab).dump(2) + "\n");
  std::cerr << "best dev overall acc " << result.state.best_dev_acc << " at epoch "
            << result.state.best_epoch << "\n";

  if (!test_samples.empty()) {
    coguide::EvalReport report =
        coguide::evaluate(result.state.best_params, cfg, result.vocab, test_samples);
    write_file((fs::path(out_dir) / "report_test.json").string(),
               report.to_json().dump(2) + "\n");
    std::cout << report.to_text();
  }
  return 0;
}

int cmd_eval(ModelFiles files, const std::string& data_path, bool as_json) {
  LoadedModel m = load_model(std::move(files));
  auto samples = load_dataset(data_path);
  coguide::EvalReport report = coguide::evaluate(m.params, m.cfg, m.vocab, samples);
  std::cout << report.to_text();
  if (as_json) std::cout << report.to_json().dump(2) << "\n";
  return 0;
}

int cmd_predict(ModelFiles files, const std::string& text, const std::string& input_path) {
  LoadedModel m = load_model(std::move(files));
  std::vector<std::string> lines;
  if (!text.empty()) {
    lines.push_back(text);
  } else if (!input_path.empty()) {
    std::istringstream in(read_file(input_path));
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
  } else {
    std::string line;
    while (std::getline(std::cin, line)) lines.push_back(line);
  }
  for (const auto& line : lines) {
    std::istringstream ls(line);
    std::vector<std::string> tokens;
    std::string tok;
    while (ls >> tok) tokens.push_back(tok);
    if (tokens.empty()) continue;
    coguide::Sample s;
    s.tokens = tokens;
    s.slot_tags.assign(tokens.size(), "O");
    s.intents.insert("?");
    coguide::Prediction p = coguide::predict_sample(m.params, m.cfg, m.vocab, s);
    std::cout << prediction_json(m.vocab, tokens, p).dump() << "\n";
  }
  return 0;
}

int cmd_gradcheck(unsigned long seed, bool per_term) {
  auto report = coguide::grad_check(seed, per_term);
  auto print = [](const coguide::GradCheckTerm& t) {
    std::cout << "  " << t.name << ": max_rel_err " << t.max_rel_err << " over " << t.checked
              << " coords (worst " << (t.worst_path.empty() ? "-" : t.worst_path) << ")\n";
  };
  std::cout << "gradient check vs central finite differences (eps 1e-4)\n";
  print(report.full);
  for (const auto& t : report.per_term) print(t);
  bool ok = report.passed(1e-4);
  std::cout << (ok ? "PASS" : "FAIL") << " (tolerance 1e-4)\n";
  return ok ? 0 : 1;
}

int cmd_graph_dump(int n, int m, int w) {
  auto s2i = coguide::build_s2i_graph(n, w);
  auto i2s = coguide::build_i2s_graph(n, m, w);
  std::cout << "# S2I-SLG n=" << n << " w=" << w << "\n" << s2i.edge_list();
  std::cout << "# I2S-SLG n=" << n << " m=" << m << " w=" << w << "\n" << i2s.edge_list();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-stage mutual-guidance multi-intent detection and slot filling"};
  app.require_subcommand(1);

  CommonFlags train_flags;
  std::string train_path, dev_path, test_path, out_dir = "out", checkpoint;
  bool synthetic = false;
  int synth_templates = 4, synth_samples = 20;
  unsigned long seed_override = 0;
  bool has_seed = false, no_scl = false;
  auto* train = app.add_subcommand("train", "train a model");
  add_common(train, train_flags);
  train->add_option("--train", train_path, "training dataset file");
  train->add_option("--dev", dev_path, "dev dataset file (model selection)");
  train->add_option("--test", test_path, "test dataset file (final report)");
  train->add_flag("--synthetic", synthetic, "train on a generated synthetic corpus");
  train->add_option("--synthetic-templates", synth_templates, "synthetic intent templates");
  train->add_option("--synthetic-samples", synth_samples, "synthetic corpus size");
  train->add_option("--out-dir", out_dir, "output directory");
  train->add_option("--checkpoint", checkpoint, "best checkpoint path");
  train->add_option("--seed", seed_override, "random seed")->each([&](const std::string&) {
    has_seed = true;
  });
  train->add_flag("--no-scl", no_scl, "disable contrastive learning (plain two-stage mode)");
  double window_override = -1, queue_override = -1, lambda_i_override = -1,
         lambda_s_override = -1;
  train->add_option("--window", window_override, "graph window size");
  train->add_option("--queue-size", queue_override, "contrastive queue capacity");
  train->add_option("--lambda-i", lambda_i_override, "slot-guidance label weight");
  train->add_option("--lambda-s", lambda_s_override, "intent-guidance label weight");

  CommonFlags eval_flags;
  ModelFiles eval_files;
  std::string eval_data;
  bool eval_json = false;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval->add_option("--checkpoint", eval_files.checkpoint, "checkpoint file")->required();
  eval->add_option("--vocab", eval_files.vocab_path, "vocab json (default: next to checkpoint)");
  eval->add_option("--config", eval_files.config_path,
                   "config json (default: next to checkpoint)");
  eval->add_option("--data", eval_data, "dataset file")->required();
  eval->add_flag("--json", eval_json, "also print the report as JSON");

  ModelFiles pred_files;
  std::string pred_text, pred_input;
  auto* predict = app.add_subcommand("predict", "predict intents and slots for utterances");
  predict->add_option("--checkpoint", pred_files.checkpoint, "checkpoint file")->required();
  predict->add_option("--vocab", pred_files.vocab_path, "vocab json");
  predict->add_option("--config", pred_files.config_path, "config json");
  predict->add_option("--text", pred_text, "one utterance (whitespace tokens)");
  predict->add_option("--input", pred_input, "file with one utterance per line");

  unsigned long gc_seed = 1;
  bool gc_per_term = false;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  gradcheck->add_option("--seed", gc_seed, "random seed");
  gradcheck->add_flag("--per-term", gc_per_term, "also check each loss term in isolation");

  int gd_n = 5, gd_m = 2, gd_w = 1;
  auto* graphdump = app.add_subcommand("graph-dump", "print both guidance graphs' edge lists");
  graphdump->add_option("--n", gd_n, "token count");
  graphdump->add_option("--m", gd_m, "estimated intent count");
  graphdump->add_option("--w", gd_w, "window size");

  try {
    app.parse(argc, argv);
    if (train->parsed()) {
      if (has_seed) train_flags.overrides.push_back("seed=" + std::to_string(seed_override));
      if (no_scl) train_flags.overrides.push_back("scl=false");
      if (window_override >= 0)
        train_flags.overrides.push_back("window=" + std::to_string(static_cast<int>(window_override)));
      if (queue_override >= 0)
        train_flags.overrides.push_back("queue_size=" + std::to_string(static_cast<int>(queue_override)));
      if (lambda_i_override >= 0)
        train_flags.overrides.push_back("lambda_i=" + std::to_string(lambda_i_override));
      if (lambda_s_override >= 0)
        train_flags.overrides.push_back("lambda_s=" + std::to_string(lambda_s_override));
      return cmd_train(train_flags, train_path, dev_path, test_path, synthetic,
                       synth_templates, synth_samples, out_dir, checkpoint);
    }
    if (eval->parsed()) return cmd_eval(eval_files, eval_data, eval_json);
    if (predict->parsed()) return cmd_predict(pred_files, pred_text, pred_input);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_seed, gc_per_term);
    if (graphdump->parsed()) return cmd_graph_dump(gd_n, gd_m, gd_w);
    return 2;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const coguide::config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
