#pragma once

// Helpers for running the scripted fixture corpora into scratch directories.

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "corekg/pipeline.hpp"

namespace testing_support {

namespace fs = std::filesystem;

inline fs::path fixtures() { return fs::path(COREKG_FIXTURES); }

/// Main two-case fixture with the given mode, writing into `out`.
inline corekg::pipeline::RunConfig main_config(corekg::Mode mode, const fs::path& out) {
  auto c = corekg::pipeline::load_run_config(fixtures() /
                                             (mode == corekg::Mode::CoreKG ? "run_corekg.json" : "run_baseline.json"));
  c.output_dir = out;
  return c;
}

/// Single-case fixture whose scripted extraction emits twelve lexicon terms.
inline corekg::pipeline::RunConfig gov_noise_config(corekg::Mode mode, const fs::path& out) {
  corekg::pipeline::RunConfig c;
  c.corpus_dir = fixtures() / "gov_noise" / "corpus";
  c.script_path = fixtures() / "gov_noise" / "script.jsonl";
  c.output_dir = out;
  c.mode = mode;
  return c;
}

/// Forwards to another backend and counts calls.
class CountingBackend : public corekg::llm::Backend {
 public:
  explicit CountingBackend(std::shared_ptr<corekg::llm::Backend> inner) : inner_(std::move(inner)) {}
  std::string id() const override { return inner_->id(); }
  std::string send(const corekg::llm::CompletionRequest& r, corekg::llm::Millis t) override {
    ++calls;
    return inner_->send(r, t);
  }
  std::atomic<int> calls{0};

 private:
  std::shared_ptr<corekg::llm::Backend> inner_;
};

struct FixtureRun {
  corekg::pipeline::RunContext ctx;
  corekg::pipeline::RunSummary summary;
};

inline FixtureRun run_fixture(corekg::pipeline::RunConfig config, const corekg::pipeline::RunOptions& options = {}) {
  auto ctx = corekg::pipeline::prepare(std::move(config));
  auto backend = corekg::pipeline::make_backend(ctx.config);
  auto summary = corekg::pipeline::run_pipeline(ctx, backend, options);
  return {std::move(ctx), std::move(summary)};
}

/// Relative path to content for every file under `dir`, minus the
/// timestamped ones.
inline std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto rel = fs::relative(e.path(), dir).generic_string();
    if (rel == "run_log.json" || rel == "audit.jsonl") continue;
    out[rel] = corekg::read_file(e.path());
  }
  return out;
}

}  // namespace testing_support
