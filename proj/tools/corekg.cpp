#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "corekg/corekg.hpp"

namespace fs = std::filesystem;
using namespace corekg;

namespace {

enum ExitCode { kOk = 0, kCaseFailures = 1, kConfigError = 2, kRuntimeError = 3 };

// Flags that override fields of the run config file.
struct ConfigFlags {
  std::string config;
  std::string corpus;
  std::string out;
  std::string mode;
  std::string script;
  bool lenient_script = false;
  std::string model;
  std::string base_url;
  std::string templates;
  std::string lexicon;
  int parallel = 0;
  int chunk_size = 0;
  int overlap = -1;
  std::vector<std::string> cases;
  bool force = false;
  bool quiet = false;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config, "Run configuration (JSON)");
    app->add_option("--corpus", corpus, "Corpus directory");
    app->add_option("-o,--out", out, "Run output directory");
    app->add_option("--mode", mode, "corekg or baseline");
    app->add_option("--script", script, "Scripted backend file (JSONL) instead of HTTP");
    app->add_flag("--lenient-script", lenient_script, "Echo the prompt on script misses");
    app->add_option("--model", model, "Model id");
    app->add_option("--base-url", base_url, "Chat endpoint base URL");
    app->add_option("--templates", templates, "Coreference template directory");
    app->add_option("--lexicon", lexicon, "Government lexicon file");
    app->add_option("-j,--parallel", parallel, "Cases processed concurrently");
    app->add_option("--chunk-size", chunk_size, "Tokens per chunk");
    app->add_option("--overlap", overlap, "Tokens shared by consecutive chunks");
    app->add_option("--case", cases, "Restrict to these case ids");
    app->add_flag("-q,--quiet", quiet, "No progress output");
  }

  pipeline::RunConfig resolve() const {
    pipeline::RunConfig c;
    if (!config.empty()) c = pipeline::load_run_config(config);
    else c.endpoint.apply_env();
    if (!corpus.empty()) c.corpus_dir = corpus;
    if (!out.empty()) c.output_dir = out;
    if (!mode.empty()) c.mode = parse_mode(mode);
    if (!script.empty()) c.script_path = fs::path(script);
    if (lenient_script) c.script_strict = false;
    if (!model.empty()) c.endpoint.model_id = model;
    if (!base_url.empty()) c.endpoint.base_url = base_url;
    if (!templates.empty()) c.templates_dir = fs::path(templates);
    if (!lexicon.empty()) c.lexicon_path = fs::path(lexicon);
    if (parallel > 0) c.parallelism = parallel;
    if (chunk_size > 0) c.chunking.chunk_size = static_cast<std::size_t>(chunk_size);
    if (overlap >= 0) c.chunking.overlap = static_cast<std::size_t>(overlap);
    return c;
  }
};

struct EvalFlags {
  int threshold = eval::kDefaultThreshold;
  std::string lexicon;
  bool lenient = false;
  bool micro = false;

  void attach(CLI::App* app) {
    app->add_option("--threshold", threshold, "Duplicate threshold (partial ratio, 0-100)")->check(CLI::Range(0, 100));
    app->add_option("--noise-lexicon", lexicon, "Noise terms applied to every case");
    app->add_flag("--lenient", lenient, "Ignore annotations naming absent nodes");
    app->add_flag("--micro", micro, "Pool counts across cases instead of averaging rates");
  }

  pipeline::EvalInputs resolve() const {
    pipeline::EvalInputs in;
    in.threshold = threshold;
    if (!lexicon.empty()) in.lexicon_path = fs::path(lexicon);
    in.strict = !lenient;
    in.averaging = micro ? eval::Averaging::Micro : eval::Averaging::Macro;
    return in;
  }
};

std::optional<fs::path> opt_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return fs::path(s);
}

int run_stages(const ConfigFlags& flags, std::vector<pipeline::Stage> stages) {
  auto ctx = pipeline::prepare(flags.resolve());
  auto backend = pipeline::make_backend(ctx.config);
  pipeline::RunOptions options;
  options.force = flags.force;
  options.stages = std::move(stages);
  options.only_cases = flags.cases;
  if (!flags.quiet) options.log = [](const std::string& line) { std::cerr << line << '\n'; };

  auto summary = pipeline::run_pipeline(ctx, std::move(backend), options);
  std::size_t resumed = 0;
  for (const auto& c : summary.cases) resumed += c.resumed ? 1 : 0;
  std::cout << "mode " << to_string(ctx.config.mode) << ", " << summary.cases.size() << " cases, "
            << summary.failed() << " failed, " << resumed << " resumed, " << summary.llm_calls << " LLM calls\n";
  std::cout << "output " << ctx.config.output_dir.string() << '\n';
  if (!summary.all_ok()) {
    std::cout << '\n' << pipeline::failure_table(summary);
    return kCaseFailures;
  }
  return kOk;
}

void print_report(const eval::MetricsReport& r) {
  std::cout << "metric                   baseline    corekg  abs_drop  rel_impr\n";
  for (const auto& row : r.rows) {
    char line[160];
    std::snprintf(line, sizeof line, "%-22s %10s %9s %9s %9s\n", row.metric.c_str(),
                  eval::format2(row.baseline_pct).c_str(), eval::format2(row.corekg_pct).c_str(),
                  eval::format2(row.absolute_drop).c_str(),
                  row.relative_improvement ? eval::format2(*row.relative_improvement).c_str() : "NA");
    std::cout << line;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"corekg: knowledge graph construction from case documents, with quality metrics"};
  app.require_subcommand(1);

  ConfigFlags run_flags;
  auto* run = app.add_subcommand("run", "Full pipeline: ingest, coref (corekg), extract, build");
  run_flags.attach(run);
  run->add_flag("--force", run_flags.force, "Redo cases already completed with the same config");

  ConfigFlags stage_flags;
  auto* ingest = app.add_subcommand("ingest", "Extract opinion sections");
  auto* coref_cmd = app.add_subcommand("coref", "Sequential coreference resolution (corekg mode)");
  auto* extract = app.add_subcommand("extract", "Chunk and extract records");
  auto* build = app.add_subcommand("build", "Build graphs from records and write the manifest");
  for (auto* sub : {ingest, coref_cmd, extract, build}) stage_flags.attach(sub);

  std::string eval_run, eval_out, eval_overrides, eval_noise;
  EvalFlags eval_flags;
  auto* eval_cmd = app.add_subcommand("eval", "Duplication and noise metrics for one run");
  eval_cmd->add_option("--run", eval_run, "Run directory")->required();
  eval_cmd->add_option("-o,--out", eval_out, "Report directory (default <run>/eval)");
  eval_cmd->add_option("--overrides", eval_overrides, "Cluster split directives");
  eval_cmd->add_option("--noise", eval_noise, "Noise annotation");
  eval_flags.attach(eval_cmd);

  std::string cmp_baseline, cmp_corekg, cmp_out, b_overrides, c_overrides, b_noise, c_noise;
  EvalFlags cmp_flags;
  auto* compare = app.add_subcommand("compare", "Paired baseline vs corekg report");
  compare->add_option("--baseline", cmp_baseline, "Baseline run directory")->required();
  compare->add_option("--corekg", cmp_corekg, "CoreKG run directory")->required();
  compare->add_option("-o,--out", cmp_out, "Report directory")->required();
  compare->add_option("--baseline-overrides", b_overrides, "Split directives for baseline graphs");
  compare->add_option("--corekg-overrides", c_overrides, "Split directives for corekg graphs");
  compare->add_option("--baseline-noise", b_noise, "Noise annotation for baseline graphs");
  compare->add_option("--corekg-noise", c_noise, "Noise annotation for corekg graphs");
  cmp_flags.attach(compare);

  std::string degrees_graph, degrees_against;
  std::size_t degrees_top = 10;
  auto* degrees = app.add_subcommand("degrees", "Degree summary of a graph, optionally beside another");
  degrees->add_option("graph", degrees_graph, "GraphML file")->required();
  degrees->add_option("--against", degrees_against, "Second GraphML file (shown as corekg)");
  degrees->add_option("--top", degrees_top, "Ranked nodes to list");

  std::string templates_out;
  auto* templates = app.add_subcommand("templates", "Write the default coreference templates");
  templates->add_option("-o,--out", templates_out, "Directory")->required();

  std::string replay_audit, replay_out;
  auto* replay = app.add_subcommand("replay-script", "Convert an audit log into a script for the mock backend");
  replay->add_option("--audit", replay_audit, "audit.jsonl")->required();
  replay->add_option("-o,--out", replay_out, "Script file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return run_stages(run_flags, {pipeline::Stage::Ingest, pipeline::Stage::Coref,
                                            pipeline::Stage::Extract, pipeline::Stage::Build});
    if (*ingest) return run_stages(stage_flags, {pipeline::Stage::Ingest});
    if (*coref_cmd) return run_stages(stage_flags, {pipeline::Stage::Coref});
    if (*extract) return run_stages(stage_flags, {pipeline::Stage::Extract});
    if (*build) return run_stages(stage_flags, {pipeline::Stage::Build});

    if (*eval_cmd) {
      fs::path out = eval_out.empty() ? fs::path(eval_run) / "eval" : fs::path(eval_out);
      auto metrics = pipeline::run_single_eval(eval_run, eval_flags.resolve(),
                                               {opt_path(eval_overrides), opt_path(eval_noise)}, out);
      std::cout << pipeline::case_metrics_table(metrics);
      std::cout << "written to " << out.string() << '\n';
      return kOk;
    }
    if (*compare) {
      auto report = pipeline::run_eval(cmp_baseline, cmp_corekg, cmp_flags.resolve(), cmp_out,
                                       {opt_path(b_overrides), opt_path(b_noise)},
                                       {opt_path(c_overrides), opt_path(c_noise)});
      print_report(report);
      std::cout << "written to " << cmp_out << '\n';
      return kOk;
    }
    if (*degrees) {
      auto a = graph::read_graphml(read_file(degrees_graph));
      auto sa = graph::degree_stats(a);
      if (!degrees_against.empty()) {
        auto sb = graph::degree_stats(graph::read_graphml(read_file(degrees_against)));
        std::cout << graph::format_summary_comparison(sa, sb);
        return kOk;
      }
      std::cout << "nodes " << sa.node_count << ", edges " << sa.edge_count << ", max degree " << sa.max_degree << '\n';
      for (std::size_t i = 0; i < sa.ranked.size() && i < degrees_top; ++i)
        std::cout << sa.ranked[i].second << '\t' << to_string(sa.ranked[i].first.entity_type) << '\t'
                  << sa.ranked[i].first.name << '\n';
      return kOk;
    }
    if (*templates) {
      coref::TemplateSet::defaults().write(templates_out);
      std::cout << "wrote " << kAllEntityTypes.size() << " templates to " << templates_out << '\n';
      return kOk;
    }
    if (*replay) {
      auto entries = llm::script_from_audit(read_file(replay_audit));
      write_file(replay_out, llm::serialize_script(entries));
      std::cout << entries.size() << " entries written to " << replay_out << '\n';
      return kOk;
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.message() << '\n';
    return e.code() == Errc::ConfigInvalid || e.code() == Errc::TemplateInvalid ? kConfigError : kRuntimeError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}
