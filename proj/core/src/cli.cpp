#include "cmlo/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "cmlo/error.hpp"
#include "json.hpp"

namespace cmlo::cli {

using nlohmann::json;
namespace fs = std::filesystem;

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

fs::path output_root() {
  const char* root = std::getenv(kOutputRootEnv);
  return root && *root ? fs::path(root) : fs::current_path();
}

namespace {

// Reads keys out of one JSON object and rejects whatever was not read.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error(ErrorKind::InvalidConfig, path_ + ": expected an object");
  }

  bool has(const char* key) {
    used_.insert(key);
    return j_.contains(key);
  }

  template <typename T>
  void read(const char* key, T& field) {
    if (!has(key)) return;
    try {
      field = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw Error(ErrorKind::InvalidConfig, where(key) + ": " + e.what());
    }
  }

  template <typename T>
  T required(const char* key) {
    if (!has(key)) throw Error(ErrorKind::InvalidConfig, where(key) + ": missing");
    T v{};
    read(key, v);
    return v;
  }

  const json& at(const char* key) {
    used_.insert(key);
    return j_.at(key);
  }

  std::string where(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!used_.count(key))
        throw Error(ErrorKind::InvalidConfig, "unknown key '" + path_ + "." + key + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::InvalidConfig, what);
}

json parse_document(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("malformed config: ") + e.what());
  }
}

void check_header(Section& root, const char* command) {
  const int version = root.required<int>("format_version");
  require(version == kConfigFormatVersion,
          "config.format_version: " + std::to_string(version) + " is not supported (expected " +
              std::to_string(kConfigFormatVersion) + ")");
  if (root.has("command")) {
    std::string c;
    root.read("command", c);
    require(c == command, "config.command: '" + c + "' is not a " + command + " config");
  }
}

std::string hash_without(json doc, std::initializer_list<const char*> keys) {
  for (const char* k : keys) doc.erase(k);
  return hash_hex(fnv1a64(doc.dump()));
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw Error(ErrorKind::Io, "cannot write " + p.string());
  f.precision(std::numeric_limits<double>::max_digits10);
  return f;
}

void make_dirs(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + p.string() + ": " + ec.message());
}

void cell(std::ostream& out, const std::optional<double>& v) {
  if (v && std::isfinite(*v)) out << *v;
}

}  // namespace

// ---------------------------------------------------------------------------
// verify-bounds

VerifyBoundsConfig parse_verify_bounds_config(const std::string& text) {
  const json doc = parse_document(text);
  Section root(doc, "config");
  check_header(root, "verify-bounds");
  VerifyBoundsConfig c;
  root.read("seed", c.seed);
  root.read("output_dir", c.output_dir);
  root.read("workers", c.workers);
  root.read("kappa_scale", c.kappa_scale);
  require(c.workers >= 1, "config.workers: must be >= 1");
  require(c.kappa_scale > 0.0 && std::isfinite(c.kappa_scale), "config.kappa_scale: must be > 0");

  if (root.has("campaign")) {
    Section s(root.at("campaign"), "config.campaign");
    bounds::CampaignConfig cc;
    s.read("trials", cc.n_trials);
    s.read("n_states", cc.n_states);
    s.read("n_actions", cc.n_actions);
    s.read("sparsity", cc.sparsity);
    s.read("gamma", cc.gamma);
    s.read("n_samples", cc.n_samples);
    s.read("extra_samples", cc.extra_samples);
    s.read("oracle_tol", cc.oracle_tol);
    s.read("ceiling_tol", cc.ceiling_tol);
    s.read("lipschitz_scale", cc.lipschitz_scale);
    if (s.has("sigma") && !doc.at("campaign").at("sigma").is_null()) {
      double sigma = 0.0;
      s.read("sigma", sigma);
      require(sigma >= 0.0, "config.campaign.sigma: must be >= 0");
      cc.sigma = sigma;
    }
    s.finish();
    require(cc.n_trials >= 0, "config.campaign.trials: must be >= 0");
    require(cc.n_states >= 1 && cc.n_actions >= 1, "config.campaign: n_states and n_actions must be >= 1");
    require(cc.sparsity > 0.0 && cc.sparsity <= 1.0, "config.campaign.sparsity: must be in (0, 1]");
    require(cc.gamma > 0.0 && cc.gamma < 1.0, "config.campaign.gamma: must be in (0, 1)");
    require(cc.n_samples >= 1 && cc.extra_samples >= 0,
            "config.campaign: n_samples must be >= 1 and extra_samples >= 0");
    require(cc.oracle_tol > 0.0 && cc.ceiling_tol > 0.0, "config.campaign: tolerances must be > 0");
    require(cc.lipschitz_scale > 0.0, "config.campaign.lipschitz_scale: must be > 0");
    cc.kappa_scale = c.kappa_scale;
    cc.seed = derive_seed(c.seed, 1);
    c.campaign = cc;
  }
  if (root.has("simulation")) {
    Section s(root.at("simulation"), "config.simulation");
    int trials = 0;
    c.tight_fixture = true;
    s.read("trials", trials);
    s.read("tight_fixture", c.tight_fixture);
    s.finish();
    require(trials >= 0, "config.simulation.trials: must be >= 0");
    c.simulation_trials = trials;
  }
  if (root.has("concentration")) {
    Section s(root.at("concentration"), "config.concentration");
    ConcentrationSpec cs;
    s.read("alphabet", cs.alphabet);
    s.read("m", cs.m);
    s.read("eps", cs.eps);
    s.read("draws", cs.draws);
    s.finish();
    require(cs.alphabet >= 2, "config.concentration.alphabet: must be >= 2");
    require(cs.draws >= 1, "config.concentration.draws: must be >= 1");
    for (auto m : cs.m) require(m >= 1, "config.concentration.m: entries must be >= 1");
    for (auto e : cs.eps) require(e > 0.0, "config.concentration.eps: entries must be > 0");
    c.concentration = cs;
  }
  if (root.has("corollary")) {
    Section s(root.at("corollary"), "config.corollary");
    bounds::CorollaryConfig cc;
    s.read("instances", cc.instances);
    s.read("repeats", cc.repeats);
    s.read("n_states", cc.n_states);
    s.read("n_actions", cc.n_actions);
    s.read("sparsity", cc.sparsity);
    s.read("gamma", cc.gamma);
    s.read("xi", cc.xi);
    s.read("n_existing", cc.n_existing);
    s.read("eps_opt", cc.eps_opt);
    s.finish();
    require(cc.instances >= 0 && cc.repeats >= 1,
            "config.corollary: instances must be >= 0 and repeats >= 1");
    require(cc.n_states >= 2 && cc.n_actions >= 1, "config.corollary: need >= 2 states and >= 1 action");
    require(cc.sparsity > 0.0 && cc.sparsity <= 1.0, "config.corollary.sparsity: must be in (0, 1]");
    require(cc.gamma > 0.0 && cc.gamma < 1.0, "config.corollary.gamma: must be in (0, 1)");
    require(cc.xi > 0.0 && cc.xi < 1.0, "config.corollary.xi: must be in (0, 1)");
    require(cc.n_existing >= 1 && cc.eps_opt >= 0.0,
            "config.corollary: n_existing must be >= 1 and eps_opt >= 0");
    cc.seed = derive_seed(c.seed, 4);
    c.corollary = cc;
  }
  root.finish();
  c.hash = hash_without(doc, {"output_dir", "workers"});
  return c;
}

VerifyBoundsResult verify_bounds(const VerifyBoundsConfig& config) {
  VerifyBoundsResult r;
  auto fail = [&](std::string line) { r.failures.push_back(std::move(line)); };

  if (config.campaign) {
    r.campaign = bounds::verify_gap_campaign(*config.campaign, config.workers);
    for (const auto& t : r.campaign) {
      if (t.hard_pass()) continue;
      std::ostringstream os;
      os << "campaign trial " << t.trial << " (seed " << t.seed << "):";
      if (!t.conservative_ok) os << " conservative_c > actual_gap";
      if (!t.refined_ok) os << " refined bound violated";
      if (!t.ceiling_ok) os << " ceiling gap " << t.ceiling_gap << " > " << t.ceiling_bound;
      if (!t.sim_m1.ok) os << " simulation gap M1 " << t.sim_m1.gap << " > " << t.sim_m1.bound;
      if (!t.sim_m2.ok) os << " simulation gap M2 " << t.sim_m2.gap << " > " << t.sim_m2.bound;
      fail(os.str());
    }
  }
  if (config.simulation_trials) {
    r.simulation = bounds::simulation_gap_campaign(*config.simulation_trials,
                                                   derive_seed(config.seed, 2), config.kappa_scale);
    for (const auto& t : r.simulation) {
      if (t.check.ok) continue;
      std::ostringstream os;
      os << "simulation trial " << t.trial << ": gap " << t.check.gap << " > bound " << t.check.bound;
      fail(os.str());
    }
    if (config.tight_fixture) {
      constexpr double gamma = 0.9, reward_bound = 1.0, leak = 0.1;
      const auto inst = bounds::tight_simulation_instance(gamma, reward_bound, leak);
      r.tight = bounds::simulation_gap_check(inst.truth, inst.model, inst.policy, inst.ctx,
                                             bounds::kappa(gamma, reward_bound) * config.kappa_scale);
      if (!r.tight->ok) {
        std::ostringstream os;
        os << "tight fixture: gap " << r.tight->gap << " > bound " << r.tight->bound;
        fail(os.str());
      }
    }
  }
  if (config.concentration) {
    const auto& cs = *config.concentration;
    std::uint64_t cell_index = 0;
    for (auto m : cs.m) {
      for (auto eps : cs.eps) {
        const auto seed = derive_seed(derive_seed(config.seed, 3), cell_index++);
        r.concentration.push_back(bounds::concentration_check(cs.alphabet, m, eps, cs.draws, seed));
        const auto& c = r.concentration.back();
        if (!c.ok) {
          std::ostringstream os;
          os << "concentration m=" << m << " eps=" << eps << ": frequency " << c.frequency
             << " > bound " << c.bound << " + 3*" << c.std_error;
          fail(os.str());
        }
      }
    }
  }
  if (config.corollary) {
    r.corollary = bounds::corollary_check(*config.corollary);
    if (!r.corollary->ok) {
      std::ostringstream os;
      os << "corollary: success fraction " << r.corollary->fraction << " < required "
         << r.corollary->required;
      fail(os.str());
    }
  }
  return r;
}

void write_verify_outputs(const VerifyBoundsResult& result, const VerifyBoundsConfig& config,
                          const fs::path& dir) {
  make_dirs(dir);
  json summary;
  summary["schema"] = "cmlo-verify-summary";
  summary["schema_version"] = kSummarySchemaVersion;
  summary["config_hash"] = config.hash;
  summary["seed"] = config.seed;
  summary["pass"] = result.pass();
  json sections = json::object();

  if (config.campaign) {
    auto f = open_out(dir / "campaign.csv");
    bounds::write_campaign_csv(f, result.campaign);
    int hard = 0, conservative = 0, refined = 0, ceiling = 0, sim = 0, equality = 0, exact_c = 0,
        r1 = 0;
    for (const auto& t : result.campaign) {
      hard += t.hard_pass();
      conservative += t.conservative_ok;
      refined += t.refined_ok;
      ceiling += t.ceiling_ok;
      sim += t.sim_m1.ok && t.sim_m2.ok;
      r1 += t.r1;
      if (t.equality_holds) {
        ++equality;
        exact_c += t.exact_c_ok;
      }
    }
    sections["campaign"] = {{"trials", result.campaign.size()},
                            {"hard_pass", hard},
                            {"conservative_pass", conservative},
                            {"refined_pass", refined},
                            {"ceiling_pass", ceiling},
                            {"simulation_pass", sim},
                            {"r1_holds", r1},
                            {"equality_holds", equality},
                            {"exact_c_pass_given_equality", exact_c}};
  }
  if (config.simulation_trials) {
    auto f = open_out(dir / "simulation.csv");
    f << "trial,n_states,n_actions,gamma,gap,eps,bound,ok\n";
    int pass = 0;
    double worst = 0.0;
    for (const auto& t : result.simulation) {
      f << t.trial << ',' << t.n_states << ',' << t.n_actions << ',' << t.gamma << ','
        << t.check.gap << ',' << t.check.eps << ',' << t.check.bound << ',' << t.check.ok << '\n';
      pass += t.check.ok;
      if (t.check.bound > 0.0) worst = std::max(worst, t.check.gap / t.check.bound);
    }
    json s = {{"trials", result.simulation.size()}, {"pass", pass}, {"max_gap_over_bound", worst}};
    if (result.tight)
      s["tight_fixture"] = {{"gap", result.tight->gap}, {"bound", result.tight->bound},
                            {"ok", result.tight->ok}};
    sections["simulation"] = s;
  }
  if (config.concentration) {
    auto f = open_out(dir / "concentration.csv");
    f << "alphabet,m,eps,draws,violations,frequency,bound,std_error,ok\n";
    json cells = json::array();
    for (const auto& c : result.concentration) {
      f << c.alphabet << ',' << c.m << ',' << c.eps << ',' << c.draws << ',' << c.violations << ','
        << c.frequency << ',' << c.bound << ',' << c.std_error << ',' << c.ok << '\n';
      cells.push_back({{"m", c.m}, {"eps", c.eps}, {"frequency", c.frequency}, {"bound", c.bound},
                       {"ok", c.ok}});
    }
    sections["concentration"] = cells;
  }
  if (config.corollary) {
    auto f = open_out(dir / "corollary.csv");
    f << "instance,delta_m1,sigma,eps,k,trials,all_pairs_ok,worst_l1\n";
    for (const auto& i : result.corollary->instances)
      f << i.index << ',' << i.query.delta_m1 << ',' << i.query.sigma << ',' << i.eps << ',' << i.k
        << ',' << i.trials << ',' << i.all_pairs_ok << ',' << i.worst_l1 << '\n';
    const auto& c = *result.corollary;
    sections["corollary"] = {{"instances", c.instances.size()}, {"trials", c.trials},
                             {"successes", c.successes},        {"fraction", c.fraction},
                             {"required", c.required},          {"ok", c.ok}};
  }
  summary["sections"] = sections;
  summary["failures"] = result.failures;
  auto f = open_out(dir / "summary.json");
  f << summary.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// run

RunConfig parse_run_config(const std::string& text, const fs::path& base_dir) {
  json doc = parse_document(text);
  Section root(doc, "config");
  check_header(root, "run");
  RunConfig c;
  auto& e = c.engine;

  {
    if (!root.has("env")) throw Error(ErrorKind::InvalidConfig, "config.env: missing");
    const json& env = root.at("env");
    json env_doc;
    if (env.is_string()) {
      fs::path p = env.get<std::string>();
      if (p.is_relative()) p = base_dir / p;
      env_doc = parse_document(read_file(p));
    } else if (env.is_object()) {
      env_doc = env;
    } else {
      throw Error(ErrorKind::InvalidConfig, "config.env: expected a spec object or a file path");
    }
    c.env_doc = env_doc.dump();
    doc["env"] = env_doc;
  }

  std::string mode = "cmlo";
  root.read("mode", mode);
  if (mode == "cmlo") c.mode = RunMode::Cmlo;
  else if (mode == "fixed") c.mode = RunMode::Fixed;
  else if (mode == "ablation") c.mode = RunMode::Ablation;
  else throw Error(ErrorKind::InvalidConfig, "config.mode: '" + mode + "' (expected cmlo, fixed or ablation)");
  root.read("intervals", c.intervals);
  for (int k : c.intervals) require(k >= 1, "config.intervals: entries must be >= 1");
  root.read("seeds", c.seeds);
  root.read("output_dir", c.output_dir);
  root.read("workers", c.workers);
  require(c.workers >= 1, "config.workers: must be >= 1");
  root.read("budget", e.budget);
  root.read("warmup", e.warmup);
  root.read("n_stages", e.n_stages);
  root.read("env_capacity", e.env_capacity);

  if (root.has("oracle")) {
    Section s(root.at("oracle"), "config.oracle");
    std::string kind = oracle::to_string(e.oracle.kind);
    s.read("kind", kind);
    try {
      e.oracle.kind = oracle::oracle_kind_from_string(kind);
    } catch (const Error&) {
      throw Error(ErrorKind::InvalidConfig, "config.oracle.kind: unknown oracle '" + kind + "'");
    }
    s.read("tolerance", e.oracle.tolerance);
    s.read("horizon", e.oracle.horizon);
    s.read("population", e.oracle.population);
    s.read("elites", e.oracle.elites);
    s.read("iterations", e.oracle.iterations);
    s.read("init_std_fraction", e.oracle.init_std_fraction);
    s.read("min_std", e.oracle.min_std);
    s.read("ilqr_iterations", e.oracle.ilqr_iterations);
    s.read("ilqr_regularization", e.oracle.ilqr_regularization);
    s.finish();
  }
  if (root.has("trigger")) {
    Section s(root.at("trigger"), "config.trigger");
    s.read("alpha", e.trigger.alpha);
    s.read("beta", e.trigger.beta);
    s.read("check_frequency", e.trigger.check_frequency);
    s.read("t_min", e.trigger.t_min);
    s.read("t_max", e.trigger.t_max);
    s.read("hull_sample_size", e.trigger.hull_sample_size);
    s.read("pca_dims", e.trigger.pca_dims);
    s.finish();
  }
  if (root.has("rollout")) {
    Section s(root.at("rollout"), "config.rollout");
    s.read("length", e.rollout.length);
    s.read("length_end", e.rollout.length_end);
    s.read("ramp_updates", e.rollout.ramp_updates);
    s.read("rollouts_per_update", e.rollout.rollouts_per_update);
    s.read("model_capacity", e.rollout.model_capacity);
    s.read("stochastic", e.rollout.stochastic);
    s.finish();
  }
  if (root.has("model")) {
    Section s(root.at("model"), "config.model");
    auto& t = e.train;
    s.read("ensemble_size", t.ensemble_size);
    s.read("hidden", t.net.hidden);
    s.read("epochs", t.epochs);
    s.read("batch_size", t.batch_size);
    s.read("step_size", t.step_size);
    s.read("updates_per_epoch", t.updates_per_epoch);
    s.read("loss_eval_size", t.loss_eval_size);
    s.read("log_var_min", t.net.log_var_min);
    s.read("log_var_max", t.net.log_var_max);
    s.read("predict_delta", t.net.predict_delta);
    s.read("step_size_decay_steps", e.step_size_decay_steps);
    s.finish();
    require(t.ensemble_size >= 1, "config.model.ensemble_size: must be >= 1");
    require(t.epochs >= 0 && t.batch_size >= 1, "config.model: epochs must be >= 0 and batch_size >= 1");
    require(t.step_size > 0.0, "config.model.step_size: must be > 0");
    require(t.updates_per_epoch >= 0 && t.loss_eval_size >= 0,
            "config.model: updates_per_epoch and loss_eval_size must be >= 0");
    require(t.net.log_var_min < t.net.log_var_max, "config.model: log_var_min must be < log_var_max");
    for (int h : t.net.hidden) require(h >= 1, "config.model.hidden: widths must be >= 1");
  }
  root.finish();
  if (c.mode != RunMode::Cmlo)
    require(!c.intervals.empty(), "config.intervals: required for fixed and ablation modes");
  require(!c.seeds.empty(), "config.seeds: at least one seed");

  e.oracle.validate();
  e.trigger.validate();
  e.rollout.validate();
  c.hash = hash_without(doc, {"output_dir", "workers", "seeds", "mode", "intervals", "command"});
  e.config_hash = c.hash;
  return c;
}

std::vector<RunJob> expand_jobs(const RunConfig& config) {
  std::vector<RunJob> jobs;
  if (config.mode != RunMode::Fixed)
    for (auto s : config.seeds) jobs.push_back({engine::Mode::Cmlo, 0, s});
  if (config.mode != RunMode::Cmlo)
    for (int k : config.intervals)
      for (auto s : config.seeds) jobs.push_back({engine::Mode::Fixed, k, s});
  return jobs;
}

std::string summary_line(const engine::RunRecord& record) {
  std::ostringstream os;
  os << engine::to_string(record.mode);
  if (record.mode == engine::Mode::Fixed) os << " k=" << record.interval;
  os << " seed=" << record.seed << " steps=" << record.env_steps
     << " trainings=" << record.training_count() << " final_return=";
  const double fr = record.final_return();
  if (std::isfinite(fr)) os << std::fixed << std::setprecision(3) << fr;
  else os << "n/a";
  if (record.failure) os << " status=failed(" << record.failure->kind << ")";
  else if (!record.freshness_ok) os << " status=stale-rollouts";
  else os << " status=ok";
  return os.str();
}

std::vector<RunOutcome> execute_runs(const RunConfig& config, const fs::path& root,
                                     std::ostream* log) {
  const auto env = env::make_environment(config.env_doc);
  config.engine.validate(*env);
  const auto jobs = expand_jobs(config);
  std::vector<RunOutcome> out(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr failure;
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        const auto& job = jobs[i];
        auto rec = job.mode == engine::Mode::Cmlo
                       ? engine::run_cmlo(*env, config.engine, job.seed)
                       : engine::run_fixed_interval(*env, config.engine, job.interval, job.seed);
        const fs::path dir = root / engine::run_directory_name(rec);
        engine::write_run(rec, dir.string());
        std::lock_guard lock(mu);
        if (log) *log << summary_line(rec) << " dir=" << dir.string() << std::endl;
        out[i] = RunOutcome{job, dir, std::move(rec)};
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int workers = std::min<int>(config.workers, static_cast<int>(std::max<std::size_t>(jobs.size(), 1)));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

// ---------------------------------------------------------------------------
// report

MeanStd mean_std(std::span<const double> values) {
  MeanStd r;
  r.n = static_cast<int>(values.size());
  if (values.empty()) return r;
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  r.mean = mean;
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    r.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return r;
}

std::vector<fs::path> discover_runs(const std::vector<std::string>& paths) {
  if (paths.empty()) throw Error(ErrorKind::InvalidArgument, "report needs at least one run directory");
  std::vector<fs::path> out;
  for (const auto& p : paths) {
    const fs::path path(p);
    if (fs::exists(path / "manifest.json")) {
      out.push_back(path);
      continue;
    }
    if (!fs::is_directory(path)) throw Error(ErrorKind::Io, "no such run directory: " + p);
    std::vector<fs::path> found;
    for (const auto& entry : fs::directory_iterator(path))
      if (entry.is_directory() && fs::exists(entry.path() / "manifest.json"))
        found.push_back(entry.path());
    if (found.empty()) throw Error(ErrorKind::Io, "no run manifest under " + p);
    std::sort(found.begin(), found.end());
    out.insert(out.end(), found.begin(), found.end());
  }
  return out;
}

bool coverage_nondecreasing(const std::vector<engine::StageSummary>& stages) {
  if (stages.empty()) return false;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (!stages[i].coverage) return false;
    if (i > 0 && *stages[i].coverage < *stages[i - 1].coverage) return false;
  }
  return true;
}

bool error_nonincreasing(const std::vector<engine::StageSummary>& stages) {
  if (stages.empty()) return false;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (!stages[i].model_error) return false;
    if (i > 0 && *stages[i].model_error > *stages[i - 1].model_error) return false;
  }
  return true;
}

Report build_report(std::span<const engine::RunRecord> runs) {
  using Key = std::tuple<int, int, std::string>;
  std::map<Key, std::vector<const engine::RunRecord*>> groups;
  for (const auto& r : runs)
    groups[{r.mode == engine::Mode::Fixed ? 1 : 0, r.interval, r.config_hash}].push_back(&r);

  Report report;
  for (const auto& [key, members] : groups) {
    const auto& first = *members.front();
    const std::string label = first.mode == engine::Mode::Fixed
                                  ? "fixed-k" + std::to_string(first.interval)
                                  : std::string("cmlo");
    for (const auto* r : members)
      if (r->budget != first.budget || r->n_stages != first.n_stages)
        throw Error(ErrorKind::InvalidConfig,
                    "runs in group " + label + " disagree on budget or stage count");

    GroupRow g;
    g.group = label;
    g.config_hash = first.config_hash;
    g.n_runs = static_cast<int>(members.size());
    std::vector<double> trainings, finals;
    std::vector<std::vector<engine::StageSummary>> stages;
    for (const auto* r : members) {
      g.failed_runs += r->failure.has_value();
      trainings.push_back(r->training_count());
      const double fr = r->final_return();
      if (std::isfinite(fr)) finals.push_back(fr);
      stages.push_back(engine::stage_summaries(*r));
      g.coverage_nondecreasing += coverage_nondecreasing(stages.back());
      g.error_nonincreasing += error_nonincreasing(stages.back());
    }
    g.trainings = mean_std(trainings);
    g.final_return = mean_std(finals);
    report.groups.push_back(g);

    for (std::size_t i = 0; i < stages.front().size(); ++i) {
      StageRow row;
      row.group = label;
      row.config_hash = first.config_hash;
      row.stage = static_cast<int>(i);
      row.begin = stages.front()[i].begin;
      row.end = stages.front()[i].end;
      std::vector<double> cov, err, ret;
      for (const auto& s : stages) {
        if (s[i].coverage) cov.push_back(*s[i].coverage);
        if (s[i].model_error) err.push_back(*s[i].model_error);
        if (s[i].mean_return) ret.push_back(*s[i].mean_return);
      }
      row.coverage = mean_std(cov);
      row.model_error = mean_std(err);
      row.mean_return = mean_std(ret);
      report.stages.push_back(row);
    }
  }
  return report;
}

namespace {

void mean_std_cells(std::ostream& out, const MeanStd& m, bool with_n) {
  if (with_n) out << ',' << m.n;
  out << ',';
  cell(out, m.mean);
  out << ',';
  cell(out, m.std);
}

}  // namespace

void write_groups_csv(std::ostream& out, const Report& report) {
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  out << "group,config_hash,n_runs,failed_runs,trainings_mean,trainings_std,n_final_return,"
         "final_return_mean,final_return_std,coverage_nondecreasing,error_nonincreasing\n";
  for (const auto& g : report.groups) {
    out << g.group << ',' << g.config_hash << ',' << g.n_runs << ',' << g.failed_runs;
    mean_std_cells(out, g.trainings, false);
    mean_std_cells(out, g.final_return, true);
    out << ',' << g.coverage_nondecreasing << ',' << g.error_nonincreasing << '\n';
  }
  out.precision(old);
}

void write_stages_csv(std::ostream& out, const Report& report) {
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  out << "group,config_hash,stage,begin,end,n_coverage,coverage_mean,coverage_std,n_model_error,"
         "model_error_mean,model_error_std,n_return,return_mean,return_std\n";
  for (const auto& s : report.stages) {
    out << s.group << ',' << s.config_hash << ',' << s.stage << ',' << s.begin << ',' << s.end;
    mean_std_cells(out, s.coverage, true);
    mean_std_cells(out, s.model_error, true);
    mean_std_cells(out, s.mean_return, true);
    out << '\n';
  }
  out.precision(old);
}

// ---------------------------------------------------------------------------
// Commands

int cmd_verify_bounds(const std::string& config_path, std::ostream& out, std::ostream& err) {
  VerifyBoundsConfig config;
  fs::path dir;
  try {
    config = parse_verify_bounds_config(read_file(config_path));
    dir = output_root() / config.output_dir / ("verify-bounds-" + config.hash);
  } catch (const Error& e) {
    err << "cmlo verify-bounds: " << e.what() << '\n';
    return kExitUsage;
  }
  try {
    const auto result = verify_bounds(config);
    write_verify_outputs(result, config, dir);
    out << "verify-bounds " << (result.pass() ? "PASS" : "FAIL") << " dir=" << dir.string() << '\n';
    if (result.pass()) return kExitOk;
    for (const auto& f : result.failures) err << "  " << f << '\n';
    return kExitFailure;
  } catch (const Error& e) {
    err << "cmlo verify-bounds: " << e.what() << '\n';
    return e.kind() == ErrorKind::Io ? kExitUsage : kExitFailure;
  }
}

int cmd_run(const std::string& config_path, bool ablate, std::ostream& out, std::ostream& err) {
  RunConfig config;
  fs::path root;
  try {
    config = parse_run_config(read_file(config_path), fs::path(config_path).parent_path());
    if (ablate) {
      config.mode = RunMode::Ablation;
      if (config.intervals.empty())
        throw Error(ErrorKind::InvalidConfig, "config.intervals: required for ablate-trigger");
    }
    root = output_root() / config.output_dir;
    const auto env = env::make_environment(config.env_doc);
    config.engine.validate(*env);
  } catch (const Error& e) {
    err << "cmlo run: " << e.what() << '\n';
    return kExitUsage;
  }
  try {
    const auto outcomes = execute_runs(config, root, &out);
    int code = kExitOk;
    for (const auto& o : outcomes) {
      if (o.record.failure) {
        err << "run " << o.dir.string() << " failed at step " << o.record.failure->step << ": "
            << o.record.failure->message << '\n';
        code = kExitFailure;
      } else if (!o.record.freshness_ok) {
        err << "run " << o.dir.string() << ": rollouts from a stale model\n";
        code = kExitFailure;
      }
    }
    return code;
  } catch (const Error& e) {
    err << "cmlo run: " << e.what() << '\n';
    return e.kind() == ErrorKind::Io ? kExitUsage : kExitFailure;
  }
}

int cmd_report(const std::vector<std::string>& paths, const std::string& out_dir, std::ostream& out,
               std::ostream& err) {
  try {
    std::vector<engine::RunRecord> runs;
    for (const auto& dir : discover_runs(paths)) runs.push_back(engine::read_run(dir.string()));
    const auto report = build_report(runs);
    if (out_dir.empty()) {
      write_groups_csv(out, report);
      out << '\n';
      write_stages_csv(out, report);
    } else {
      make_dirs(out_dir);
      {
        auto f = open_out(fs::path(out_dir) / "groups.csv");
        write_groups_csv(f, report);
      }
      auto f = open_out(fs::path(out_dir) / "stages.csv");
      write_stages_csv(f, report);
      out << "report: " << runs.size() << " runs, " << report.groups.size() << " groups -> "
          << out_dir << '\n';
    }
    return kExitOk;
  } catch (const Error& e) {
    err << "cmlo report: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace cmlo::cli
