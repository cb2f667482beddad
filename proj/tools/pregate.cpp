// pregate command-line interface.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "pregate/complexity.hpp"
#include "pregate/dataset.hpp"
#include "pregate/error.hpp"
#include "pregate/evaluation.hpp"
#include "pregate/gate.hpp"
#include "pregate/harness.hpp"
#include "pregate/model.hpp"
#include "pregate/service.hpp"
#include "pregate/stats.hpp"

namespace {

using namespace pregate;

constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  return in;
}

// Writes to `path`, or stdout when path is empty or "-".
template <class F>
void with_output(const std::string& path, F&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  write(out);
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path);
}

nlohmann::json read_json_file(const std::string& path) {
  auto in = open_in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidFormat, path + ": " + e.what());
  }
}

std::vector<SuggestionRecord> load_records(const std::string& path) {
  auto in = open_in(path);
  return read_records_jsonl(in);
}

JsonlReadResult load_events(const std::string& path) {
  auto in = open_in(path);
  return read_events_jsonl(in);
}

Split load_or_make_split(const std::vector<SuggestionRecord>& records, const LabeledData& data,
                         const std::string& split_path, std::uint64_t seed, bool by_session) {
  if (!split_path.empty()) {
    Split s = split_from_json(read_json_file(split_path));
    for (const auto* part : {&s.train, &s.validation, &s.test}) {
      for (auto i : *part) {
        if (i >= data.rows) throw Error(ErrorCode::InvalidFormat, "split index beyond record count");
      }
    }
    return s;
  }
  return by_session ? session_split(records, {}, seed) : stratified_split(data.y, {}, seed);
}

void print_json(std::ostream& out, const nlohmann::json& j) { out << j.dump(2) << '\n'; }

volatile std::sig_atomic_t g_interrupted = 0;
std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) {
  g_interrupted = 1;
  g_stop.store(true);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pregate: behavioral pre-filter for LLM code suggestions"};
  app.require_subcommand(1);

  std::uint64_t seed = 7;
  std::string format = "json";
  std::string model_path;
  std::optional<double> tau;
  std::string out_path;

  auto add_format = [&](CLI::App* c) {
    c->add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  };
  auto add_seed = [&](CLI::App* c) { c->add_option("--seed", seed, "Random seed")->capture_default_str(); };
  auto add_tau = [&](CLI::App* c) {
    c->add_option("--tau", tau, "Operating threshold override in [0,1]")->check(CLI::Range(0.0, 1.0));
  };

  // synth
  auto* synth = app.add_subcommand("synth", "Generate synthetic telemetry with known acceptance ground truth");
  std::string synth_config, truth_path;
  std::size_t sessions = 0, target_records = 0;
  bool xor_variant = false;
  synth->add_option("--config", synth_config, "SynthConfig JSON file (defaults otherwise)");
  synth->add_option("--sessions", sessions, "Number of sessions");
  synth->add_option("--records", target_records, "Stop once this many requests were generated");
  synth->add_flag("--xor", xor_variant, "Use the interaction-augmented ground truth");
  synth->add_option("--out", out_path, "Events JSONL (stdout if omitted)");
  synth->add_option("--truth", truth_path, "Ground-truth JSONL output");
  add_seed(synth);

  // dataset
  auto* dataset = app.add_subcommand("dataset", "Build labeled suggestion records from telemetry JSONL");
  std::string events_path, split_out;
  bool by_session = false;
  dataset->add_option("--events", events_path, "Telemetry JSONL")->required();
  dataset->add_option("--out", out_path, "Records JSONL (stdout if omitted)");
  dataset->add_option("--split-out", split_out, "Also write a seeded split");
  dataset->add_flag("--by-session", by_session, "Split whole sessions instead of stratified records");
  add_seed(dataset);

  // train
  auto* train = app.add_subcommand("train", "Train an acceptance model on the training split");
  std::string records_path, split_path, kind = "logistic";
  double floor = 0.95;
  LogisticHyper lh;
  TreeHyper th;
  train->add_option("--records", records_path, "Records JSONL")->required();
  train->add_option("--kind", kind, "Model family")->check(CLI::IsMember({"logistic", "tree"}))->capture_default_str();
  train->add_option("--split", split_path, "Split JSON (seeded stratified split otherwise)");
  train->add_flag("--by-session", by_session, "Session-grouped split when no --split is given");
  train->add_option("--out", out_path, "Model JSON output")->required();
  train->add_option("--recall-floor", floor, "Accepted-class recall floor for tau")->capture_default_str();
  train->add_option("--epochs", lh.epochs, "Logistic epochs")->capture_default_str();
  train->add_option("--trees", th.n_trees, "Boosting stages")->capture_default_str();
  train->add_option("--depth", th.depth, "Tree depth")->capture_default_str();
  add_seed(train);

  // tune-threshold
  auto* tune = app.add_subcommand("tune-threshold", "Choose tau on the validation split");
  bool write_back = false;
  tune->add_option("--model", model_path, "Model JSON")->required();
  tune->add_option("--records", records_path, "Records JSONL")->required();
  tune->add_option("--split", split_path, "Split JSON");
  tune->add_flag("--by-session", by_session, "Session-grouped split when no --split is given");
  tune->add_option("--recall-floor", floor, "Accepted-class recall floor")->capture_default_str();
  tune->add_flag("--write", write_back, "Store the chosen tau in the model file");
  add_seed(tune);
  add_format(tune);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Held-out metrics at an operating threshold");
  std::string part = "test";
  std::size_t resamples = 1000, repeats = 0;
  evaluate->add_option("--model", model_path, "Model JSON")->required();
  evaluate->add_option("--records", records_path, "Records JSONL")->required();
  evaluate->add_option("--split", split_path, "Split JSON");
  evaluate->add_flag("--by-session", by_session, "Session-grouped split when no --split is given");
  evaluate->add_option("--part", part, "Which rows to score")
      ->check(CLI::IsMember({"train", "validation", "test", "all"}))
      ->capture_default_str();
  evaluate->add_option("--bootstrap", resamples, "Bootstrap resamples for AUC spread")->capture_default_str();
  evaluate->add_option("--importance", repeats, "Permutation importance repeats (0 = skip)")->capture_default_str();
  add_seed(evaluate);
  add_tau(evaluate);
  add_format(evaluate);

  // replay
  auto* rep = app.add_subcommand("replay", "Stream a telemetry log through the gate");
  std::string timeline_path;
  rep->add_option("--events", events_path, "Telemetry JSONL")->required();
  rep->add_option("--model", model_path, "Model JSON")->required();
  rep->add_option("--out", out_path, "Report output (stdout if omitted)");
  rep->add_option("--timeline", timeline_path, "Timeline CSV output");
  add_tau(rep);
  add_format(rep);

  // compare
  auto* cmp = app.add_subcommand("compare", "Before/after statistics from two replay reports");
  std::string before_path, after_path;
  std::vector<std::int64_t> before_counts, after_counts;
  auto* bp = cmp->add_option("--before", before_path, "Report JSON for the before period");
  auto* ap = cmp->add_option("--after", after_path, "Report JSON for the after period");
  cmp->add_option("--before-counts", before_counts, "total,suppressed,accepted")->expected(3)->delimiter(',')->excludes(bp);
  cmp->add_option("--after-counts", after_counts, "total,suppressed,accepted")->expected(3)->delimiter(',')->excludes(ap);
  cmp->add_option("--out", out_path, "Output (stdout if omitted)");
  add_format(cmp);

  // stats
  auto* st = app.add_subcommand("stats", "Two-proportion tests on accepted/issued counts");
  std::int64_t k1 = 0, n1 = 0, k2 = 0, n2 = 0;
  double confidence = 0.95;
  st->add_option("--k1", k1, "Accepted, before")->required();
  st->add_option("--n1", n1, "Issued, before")->required();
  st->add_option("--k2", k2, "Accepted, after")->required();
  st->add_option("--n2", n2, "Issued, after")->required();
  st->add_option("--confidence", confidence, "Interval confidence")->capture_default_str();
  add_format(st);

  // complexity
  auto* cx = app.add_subcommand("complexity", "Task complexity of a source file");
  std::string source_path, language = "other";
  cx->add_option("--file", source_path, "Source file")->required();
  cx->add_option("--language", language, "c, cpp, java, javascript, python, or other")->capture_default_str();

  // serve
  auto* serve = app.add_subcommand("serve", "Run the gate service (NDJSON)");
  std::string addr = "127.0.0.1:7878";
  bool stdio = false;
  serve->add_option("--addr", addr, "host:port or unix:/path")->capture_default_str();
  serve->add_option("--model", model_path, "Model JSON")->required();
  serve->add_flag("--stdio", stdio, "Serve stdin/stdout instead of a socket");
  add_tau(serve);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitValidation;
  }

  try {
    if (*synth) {
      SynthConfig cfg = synth_config.empty() ? (xor_variant ? SynthConfig::xor_variant() : SynthConfig::defaults())
                                             : synth_config_from_json(read_json_file(synth_config));
      if (synth->count("--seed") || synth_config.empty()) cfg.seed = seed;
      if (sessions) cfg.n_sessions = sessions;
      if (target_records) cfg.target_records = target_records;
      const auto out = synth_sessions(cfg);
      with_output(out_path, [&](std::ostream& o) { write_events_jsonl(o, out.events); });
      if (!truth_path.empty()) {
        with_output(truth_path, [&](std::ostream& o) {
          for (const auto& g : out.truth) o << to_json(g).dump() << '\n';
        });
      }
      std::size_t accepted = 0;
      for (const auto& g : out.truth) accepted += g.accepted;
      std::cerr << "synth: " << out.events.size() << " events, " << out.truth.size() << " requests, "
                << accepted << " accepted, intercept " << out.intercept << '\n';
    } else if (*dataset) {
      const auto ev = load_events(events_path);
      RecordBuildStats bs;
      const auto records = build_records(ev.events, &bs);
      with_output(out_path, [&](std::ostream& o) { write_records_jsonl(o, records); });
      if (!split_out.empty()) {
        const auto data = to_labeled(records);
        const Split s = by_session ? session_split(records, {}, seed) : stratified_split(data.y, {}, seed);
        with_output(split_out, [&](std::ostream& o) { print_json(o, split_to_json(s)); });
      }
      std::cerr << "dataset: " << records.size() << " records from " << bs.requests << " requests ("
                << bs.pending << " pending, " << bs.never_shown << " never shown, " << ev.malformed_lines
                << " malformed lines, " << bs.rejected_events << " rejected events)\n";
    } else if (*train) {
      const auto records = load_records(records_path);
      const auto data = to_labeled(records);
      const Split s = load_or_make_split(records, data, split_path, seed, by_session);
      const auto tr = subset(data, s.train);
      const auto va = subset(data, s.validation);
      const auto w = class_weights(tr.y);
      lh.seed = seed;
      th.seed = seed;
      auto result = kind == "logistic" ? train_logistic(tr, canonical_feature_names(), w, lh)
                                       : train_tree_ensemble(tr, canonical_feature_names(), w, th);
      const auto sel = select_threshold(result.model, va, floor);
      result.model.set_tau(sel.tau);
      save_model(result.model, out_path);
      const auto vscores = result.model.predict_proba(va);
      nlohmann::json summary{{"kind", kind},
                             {"train_rows", tr.rows},
                             {"validation_rows", va.rows},
                             {"final_loss", result.loss_history.back()},
                             {"tau", sel.tau},
                             {"validation_recall", sel.recall},
                             {"recall_floor_met", sel.floor_met},
                             {"validation_roc_auc", roc_auc(vscores, va.y)}};
      print_json(std::cout, summary);
    } else if (*tune) {
      auto model = load_model(model_path, canonical_feature_names());
      const auto records = load_records(records_path);
      const auto data = to_labeled(records);
      const Split s = load_or_make_split(records, data, split_path, seed, by_session);
      const auto sel = select_threshold(model, subset(data, s.validation), floor);
      if (write_back) {
        model.set_tau(sel.tau);
        save_model(model, model_path);
      }
      if (format == "csv") {
        std::cout << "tau,recall,floor_met\n" << sel.tau << ',' << sel.recall << ',' << sel.floor_met << '\n';
      } else {
        print_json(std::cout, {{"tau", sel.tau}, {"recall", sel.recall}, {"floor_met", sel.floor_met}});
      }
    } else if (*evaluate) {
      const auto model = load_model(model_path, canonical_feature_names());
      const auto records = load_records(records_path);
      const auto data = to_labeled(records);
      LabeledData rows = data;
      if (part != "all") {
        const Split s = load_or_make_split(records, data, split_path, seed, by_session);
        rows = subset(data, part == "train" ? s.train : part == "validation" ? s.validation : s.test);
      }
      const auto scores = model.predict_proba(rows);
      const auto report = evaluate_scores(scores, rows.y, tau.value_or(model.tau()), resamples, seed);
      std::vector<FeatureImportance> ranking;
      if (repeats > 0) ranking = permutation_importance(model, rows, ImportanceMetric::RocAuc, repeats, seed);
      if (format == "csv") {
        write_csv(std::cout, report);
        if (!ranking.empty()) {
          std::cout << "\nfeature,mean_drop,sd_drop\n";
          for (const auto& f : ranking) std::cout << f.feature << ',' << f.mean_drop << ',' << f.sd_drop << '\n';
        }
      } else {
        auto j = to_json(report);
        if (!ranking.empty()) j["importance"] = to_json(ranking);
        print_json(std::cout, j);
      }
    } else if (*rep) {
      const auto model = load_model(model_path, canonical_feature_names());
      const auto ev = load_events(events_path);
      auto report = replay(ev.events, model, tau.value_or(model.tau()));
      report.malformed_lines = static_cast<std::int64_t>(ev.malformed_lines);
      if (!timeline_path.empty()) with_output(timeline_path, [&](std::ostream& o) { write_timeline_csv(o, report); });
      with_output(out_path, [&](std::ostream& o) {
        if (format == "csv") write_timeline_csv(o, report);
        else print_json(o, to_json(report));
      });
    } else if (*cmp) {
      auto load = [&](const std::string& path, const std::vector<std::int64_t>& counts, const char* which) {
        if (!counts.empty()) return SimulationReport::from_counts(counts[0], counts[1], counts[2]);
        if (path.empty()) throw Error(ErrorCode::InvalidConfig, std::string("missing --") + which);
        return simulation_report_from_json(read_json_file(path));
      };
      const auto bundle = compare(load(before_path, before_counts, "before"), load(after_path, after_counts, "after"));
      with_output(out_path, [&](std::ostream& o) {
        if (format == "csv") write_csv(o, bundle);
        else print_json(o, to_json(bundle));
      });
    } else if (*st) {
      const auto c = compare_proportions({k1, n1, k2, n2}, confidence);
      if (format == "csv") write_csv(std::cout, c);
      else print_json(std::cout, to_json(c));
    } else if (*cx) {
      auto in = open_in(source_path);
      std::stringstream ss;
      ss << in.rdbuf();
      print_json(std::cout, to_json(task_complexity(ss.str(), parse_language(language))));
    } else if (*serve) {
      auto model = load_model(model_path, canonical_feature_names());
      const double t = tau.value_or(model.tau());
      GateEngine engine(std::move(model), t);
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      if (stdio) {
        serve_stream(engine, std::cin, std::cout);
      } else {
        SocketServer server(engine, addr);
        std::cerr << "serving on " << server.bound_address() << " tau=" << t << '\n';
        server.run(&g_stop);
      }
      std::cerr << "final stats: " << to_json(engine.stats()).dump() << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return e.code() == ErrorCode::Io ? kExitIo : kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return 0;
}
