#pragma once

// Experiment front end: config documents, the verify-bounds, run and report
// commands, and their on-disk outputs. tools/cmlo is a thin wrapper.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cmlo/bounds.hpp"
#include "cmlo/engine.hpp"

namespace cmlo::cli {

// 0 = all checks pass, 1 = scientific failure, 2 = usage failure.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

inline constexpr int kConfigFormatVersion = 1;
inline constexpr int kSummarySchemaVersion = 1;
inline constexpr const char* kOutputRootEnv = "CMLO_OUTPUT_ROOT";

std::uint64_t fnv1a64(std::string_view bytes);
std::string hash_hex(std::uint64_t h);

// $CMLO_OUTPUT_ROOT, else the working directory. A config's output_dir is
// resolved against it.
std::filesystem::path output_root();

// ---------------------------------------------------------------------------
// verify-bounds

struct ConcentrationSpec {
  int alphabet = 4;
  std::vector<std::int64_t> m{50, 100, 200};
  std::vector<double> eps{0.2, 0.3};
  std::int64_t draws = 100000;
};

// Each section runs only when present in the document.
struct VerifyBoundsConfig {
  std::uint64_t seed = 0;
  std::string output_dir;
  int workers = 1;
  double kappa_scale = 1.0;  // applied to every kappa; != 1 only to test sabotage detection
  std::optional<bounds::CampaignConfig> campaign;
  std::optional<int> simulation_trials;
  bool tight_fixture = false;
  std::optional<ConcentrationSpec> concentration;
  std::optional<bounds::CorollaryConfig> corollary;
  std::string hash;
};

// Throws InvalidConfig with a key path on schema errors.
VerifyBoundsConfig parse_verify_bounds_config(const std::string& text);

struct VerifyBoundsResult {
  std::vector<bounds::TrialReport> campaign;
  std::vector<bounds::SimulationTrial> simulation;
  std::optional<bounds::SimulationGapCheck> tight;
  std::vector<bounds::ConcentrationCell> concentration;
  std::optional<bounds::CorollaryReport> corollary;
  std::vector<std::string> failures;

  bool pass() const { return failures.empty(); }
};

VerifyBoundsResult verify_bounds(const VerifyBoundsConfig& config);

// campaign.csv, simulation.csv, concentration.csv, corollary.csv and
// summary.json; a CSV is written only for sections that ran.
void write_verify_outputs(const VerifyBoundsResult& result, const VerifyBoundsConfig& config,
                          const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// run / ablate-trigger

enum class RunMode { Cmlo, Fixed, Ablation };

struct RunConfig {
  std::string env_doc;  // resolved environment spec
  RunMode mode = RunMode::Cmlo;
  std::vector<int> intervals;
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir;
  int workers = 1;
  engine::EngineConfig engine;
  std::string hash;
};

// base_dir resolves a string "env" entry (path to an env spec file).
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});

struct RunJob {
  engine::Mode mode = engine::Mode::Cmlo;
  int interval = 0;
  std::uint64_t seed = 0;
};

std::vector<RunJob> expand_jobs(const RunConfig& config);

struct RunOutcome {
  RunJob job;
  std::filesystem::path dir;
  engine::RunRecord record;
};

// Runs every job, up to config.workers at a time; each writes only its own
// directory under root. Summary lines go to log as runs finish.
std::vector<RunOutcome> execute_runs(const RunConfig& config, const std::filesystem::path& root,
                                     std::ostream* log = nullptr);

std::string summary_line(const engine::RunRecord& record);

// ---------------------------------------------------------------------------
// report

// Mean and sample standard deviation (n - 1); std is empty below two values.
struct MeanStd {
  std::optional<double> mean;
  std::optional<double> std;
  int n = 0;
};

MeanStd mean_std(std::span<const double> values);

struct GroupRow {
  std::string group;  // "cmlo" or "fixed-k<k>"
  std::string config_hash;
  int n_runs = 0;
  int failed_runs = 0;
  MeanStd trainings;
  MeanStd final_return;
  int coverage_nondecreasing = 0;  // runs whose per-stage coverage never drops
  int error_nonincreasing = 0;     // runs whose per-stage error never rises
};

struct StageRow {
  std::string group;
  std::string config_hash;
  int stage = 0;
  long begin = 0;
  long end = 0;
  MeanStd coverage;
  MeanStd model_error;
  MeanStd mean_return;
};

struct Report {
  std::vector<GroupRow> groups;
  std::vector<StageRow> stages;
};

// Run directories among paths or their immediate subdirectories, sorted.
std::vector<std::filesystem::path> discover_runs(const std::vector<std::string>& paths);

Report build_report(std::span<const engine::RunRecord> runs);

// False when any stage lacks a value.
bool coverage_nondecreasing(const std::vector<engine::StageSummary>& stages);
bool error_nonincreasing(const std::vector<engine::StageSummary>& stages);

void write_groups_csv(std::ostream& out, const Report& report);
void write_stages_csv(std::ostream& out, const Report& report);

// ---------------------------------------------------------------------------
// Command entry points. Diagnostics go to err; return an ExitCode.

int cmd_verify_bounds(const std::string& config_path, std::ostream& out, std::ostream& err);
int cmd_run(const std::string& config_path, bool ablate, std::ostream& out, std::ostream& err);
int cmd_report(const std::vector<std::string>& paths, const std::string& out_dir, std::ostream& out,
               std::ostream& err);

}  // namespace cmlo::cli
