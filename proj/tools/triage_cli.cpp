// Operator CLI: ingest, synth, train, eval, suggest, serve.
//
// Exit codes: 0 success, 1 unexpected failure, 2 usage or configuration,
// 3 unreadable input data, 4 bad bundle, 5 training stage failure,
// 6 empty description, 7 service startup failure.

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <memory>
#include <sstream>

#include <pthread.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "triage/binary_io.hpp"
#include "triage/corpus.hpp"
#include "triage/errors.hpp"
#include "triage/metrics.hpp"
#include "triage/pipeline.hpp"
#include "triage/service.hpp"
#include "triage/synth.hpp"

namespace fs = std::filesystem;
using namespace triage;

namespace {

enum Exit : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kInput = 3,
  kBundle = 4,
  kStage = 5,
  kEmpty = 6,
  kService = 7,
};

// A usage or configuration problem detected after argument parsing.
struct UsageError : Error {
  using Error::Error;
};

std::string default_bundle() {
  const char* env = std::getenv("TADAA_BUNDLE_DIR");
  return env ? env : "";
}

fs::path bundle_path(const std::string& flag) {
  if (flag.empty()) throw UsageError("no bundle given: pass --bundle or set TADAA_BUNDLE_DIR");
  if (!fs::is_directory(flag)) throw UsageError("bundle directory not found: " + flag);
  return flag;
}

InputFormat format_for(const std::string& flag, const fs::path& path) {
  if (!flag.empty()) return parse_input_format(flag);
  return path.extension() == ".csv" ? InputFormat::csv : InputFormat::jsonl;
}

CleanResult read_corpus(const fs::path& path, const std::string& format, int min_tokens) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open corpus " + path.string());
  const auto raw = ingest(in, format_for(format, path));
  return clean(raw, min_tokens);
}

void print_report(const CleanReport& r) {
  std::cerr << "read " << r.input << " tickets, kept " << r.kept << " (dropped: empty_group=" << r.empty_group
            << " empty_resolver=" << r.empty_resolver << " nonsense_description=" << r.nonsense_description << ")\n";
}

PipelineConfig read_config(const std::string& path) {
  if (path.empty()) return {};
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path);
  try {
    return PipelineConfig::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("config is not valid JSON: ") + e.what());
  } catch (const SchemaError& e) {
    throw UsageError(e.what());
  }
}

void print_suggestions(std::ostream& out, const Suggestions& s) {
  out << "# groups=" << s.groups.size() << " resolvers=" << s.resolvers.size() << " similar=" << s.similar.size()
      << " total_ms=" << s.timings.total_ms << '\n';
  for (std::size_t i = 0; i < s.groups.size(); ++i) {
    out << "group\t" << i + 1 << '\t' << s.groups[i].label << '\t' << s.groups[i].probability << '\n';
  }
  for (std::size_t i = 0; i < s.resolvers.size(); ++i) {
    out << "resolver\t" << i + 1 << '\t' << s.resolvers[i].label << '\t' << s.resolvers[i].probability << '\n';
  }
  for (std::size_t i = 0; i < s.similar.size(); ++i) {
    const auto& t = s.similar[i];
    out << "similar\t" << i + 1 << '\t' << t.id << '\t' << t.resolver << '\t' << t.distance << '\t' << t.snippet
        << '\n';
  }
}

int serve(const std::string& bundle_flag, const std::string& bind, const std::string& log_path) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) throw UsageError("--bind must be host:port");
  const std::string host = bind.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(bind.substr(colon + 1));
  } catch (const std::exception&) {
    throw UsageError("--bind port is not a number");
  }
  const fs::path dir = bundle_path(bundle_flag);

  // Block the shutdown signals before any thread starts so sigwait owns them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  ServiceOptions opts;
  opts.assignment_log = log_path;
  TriageService service(opts);
  int bound = 0;
  try {
    bound = service.start(host, port);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kService;
  }
  std::cerr << "listening on " << host << ':' << bound << ", loading bundle " << dir << '\n';
  try {
    service.set_bundle(std::make_shared<const ModelBundle>(load_bundle(dir)));
  } catch (const std::exception& e) {
    std::cerr << "error: bundle failed to load: " << e.what() << '\n';
    service.stop();
    return kBundle;
  }
  std::cerr << "ready\n";
  int sig = 0;
  sigwait(&signals, &sig);
  std::cerr << "shutting down\n";
  service.stop();
  service.wait();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ticket triage engine: routing suggestions for groups and resolvers"};
  app.require_subcommand(1);

  std::string input, format, output, corpus, config, bundle = default_bundle(), bind = "127.0.0.1:8080", text;
  std::string split_order = "random", report_jsonl, log_path = "assignments.jsonl";
  int min_tokens = kDefaultMinTokens;
  std::uint64_t seed = 0;
  bool seed_given = false, from_stdin = false;
  SynthSpec synth_spec;
  SuggestRequest request;

  auto* ingest_cmd = app.add_subcommand("ingest", "Read, clean and write a ticket corpus as JSON lines");
  ingest_cmd->add_option("--input", input, "CSV or JSONL file")->required();
  ingest_cmd->add_option("--format", format, "csv or jsonl (default: by extension)");
  ingest_cmd->add_option("--output", output, "cleaned JSONL output")->required();
  ingest_cmd->add_option("--min-tokens", min_tokens, "minimum tokens per description")->check(CLI::PositiveNumber);

  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic planted-structure corpus as JSON lines");
  synth_cmd->add_option("--output", output)->required();
  synth_cmd->add_option("--seed", seed);
  synth_cmd->add_option("--tickets", synth_spec.tickets)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--groups", synth_spec.n_groups)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--resolvers-per-group", synth_spec.resolvers_per_group)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--topics", synth_spec.n_topics)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--noise", synth_spec.noise_rate)->check(CLI::Range(0.0, 0.999999));

  auto* train_cmd = app.add_subcommand("train", "Train a model bundle from a corpus");
  train_cmd->add_option("--corpus", corpus)->required();
  train_cmd->add_option("--format", format);
  train_cmd->add_option("--config", config, "pipeline config JSON");
  train_cmd->add_option("--out-bundle", output)->required();
  train_cmd->add_option("--seed", seed, "split and model seed")->each([&](const std::string&) { seed_given = true; });
  train_cmd->add_option("--split", split_order)->check(CLI::IsMember({"random", "chronological"}));

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a bundle on the test split of its corpus");
  eval_cmd->add_option("--bundle", bundle, "bundle directory (default: $TADAA_BUNDLE_DIR)");
  eval_cmd->add_option("--corpus", corpus)->required();
  eval_cmd->add_option("--format", format);
  eval_cmd->add_option("--report-jsonl", report_jsonl, "also write report rows as JSON lines");

  auto* suggest_cmd = app.add_subcommand("suggest", "Print suggestions for one description");
  suggest_cmd->add_option("--bundle", bundle);
  auto* text_opt = suggest_cmd->add_option("--text", text);
  auto* stdin_opt = suggest_cmd->add_flag("--stdin", from_stdin, "read the description from stdin");
  text_opt->excludes(stdin_opt);
  suggest_cmd->add_option("--k-group", request.k_group)->check(CLI::PositiveNumber);
  suggest_cmd->add_option("--k-resolver", request.k_resolver)->check(CLI::PositiveNumber);
  suggest_cmd->add_option("--n-similar", request.n_similar)->check(CLI::NonNegativeNumber);

  auto* serve_cmd = app.add_subcommand("serve", "Run the REST suggestion service");
  serve_cmd->add_option("--bundle", bundle);
  serve_cmd->add_option("--bind", bind, "host:port");
  serve_cmd->add_option("--assignment-log", log_path);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (*ingest_cmd) {
      const auto result = read_corpus(input, format, min_tokens);
      print_report(result.report);
      std::ostringstream out;
      write_jsonl(out, result.tickets);
      io::write_file(output, out.str());
    } else if (*synth_cmd) {
      const auto corpus_data = synth_corpus(synth_spec, seed);
      std::ostringstream out;
      write_jsonl(out, corpus_data.tickets);
      io::write_file(output, out.str());
      std::cerr << "wrote " << corpus_data.tickets.size() << " tickets\n";
    } else if (*train_cmd) {
      PipelineConfig cfg = read_config(config);
      if (seed_given) cfg.seed = seed;
      const auto result = read_corpus(corpus, format, min_tokens);
      print_report(result.report);
      const auto order = split_order == "chronological" ? SplitOrder::chronological : SplitOrder::random;
      const auto data = split(result.tickets, {}, seed, order);
      TrainOptions opts;
      opts.corpus_fingerprint = corpus_fingerprint(result.tickets);
      opts.progress = [](std::string_view stage, double secs) {
        std::cerr << "  " << stage << " done in " << secs << " s\n";
      };
      std::cerr << "training on " << data.train.size() << " / validating on " << data.validation.size()
                << " tickets\n";
      const auto b = train_pipeline(data, cfg, opts);
      save_bundle(b, output);
      std::cerr << "bundle written to " << output << '\n';
    } else if (*eval_cmd) {
      const fs::path dir = bundle_path(bundle);
      const auto b = load_bundle(dir);
      const auto result = read_corpus(corpus, format, min_tokens);
      std::vector<CleanTicket> test;
      if (b.manifest.corpus_fingerprint && *b.manifest.corpus_fingerprint == corpus_fingerprint(result.tickets)) {
        // Same corpus the bundle was trained on: rebuild its split.
        test = split(result.tickets, {}, b.manifest.split_seed).test;
      } else {
        std::cerr << "corpus differs from the training corpus; evaluating on all of it\n";
        test = result.tickets;
      }
      const auto report = evaluate_all(b, test);
      std::cout << format_report(report);
      if (!report_jsonl.empty()) {
        std::ostringstream out;
        write_report_jsonl(out, report);
        io::write_file(report_jsonl, out.str());
      }
    } else if (*suggest_cmd) {
      const fs::path dir = bundle_path(bundle);
      if (!from_stdin && text.empty()) throw UsageError("suggest needs --text or --stdin");
      if (from_stdin) text.assign(std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>());
      const auto b = load_bundle(dir);
      print_suggestions(std::cout, suggest(b, text, request));
    } else if (*serve_cmd) {
      return serve(bundle, bind, log_path);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kStage;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBundle;
  } catch (const EmptyDescriptionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kEmpty;
  } catch (const SchemaError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInput;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}
