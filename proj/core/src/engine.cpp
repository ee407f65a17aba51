#include "cmlo/engine.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cmlo/coverage.hpp"
#include "cmlo/error.hpp"
#include "json.hpp"

namespace cmlo::engine {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// RNG streams of one run.
constexpr std::uint64_t kEnvStream = 1;
constexpr std::uint64_t kPolicyStream = 2;
constexpr std::uint64_t kHullStream = 3;
constexpr std::uint64_t kRolloutStream = 4;
constexpr std::uint64_t kTrainStream = 0x100;

}  // namespace

ReplayBuffers::ReplayBuffers(std::size_t env_capacity, std::size_t model_capacity)
    : env_capacity_(env_capacity), model_capacity_(model_capacity) {
  if (env_capacity == 0 || model_capacity == 0)
    throw Error(ErrorKind::InvalidArgument, "buffer capacities must be positive");
}

void ReplayBuffers::add_env(TransitionTuple t) {
  env_states_.push_back(t.state);
  env_.push_back(std::move(t));
  ++fresh_count_;
  if (env_.size() > env_capacity_) {
    env_.erase(env_.begin());
    env_states_.erase(env_states_.begin());
  }
  fresh_count_ = std::min(fresh_count_, env_.size());
}

void ReplayBuffers::add_model(TransitionTuple t, int version, long step) {
  model_.push_back({std::move(t), version, step});
  if (model_.size() > model_capacity_) model_.erase(model_.begin());
}

std::span<const TransitionTuple> ReplayBuffers::fresh() const {
  return std::span<const TransitionTuple>(env_).last(fresh_count_);
}

void RolloutConfig::validate() const {
  if (length < 1) throw Error(ErrorKind::InvalidConfig, "rollout length h must be >= 1");
  if (rollouts_per_update < 0) throw Error(ErrorKind::InvalidConfig, "rollouts per update must be >= 0");
  if (ramp_updates < 0) throw Error(ErrorKind::InvalidConfig, "ramp length must be >= 0");
  if (model_capacity == 0) throw Error(ErrorKind::InvalidConfig, "model buffer capacity must be > 0");
}

int RolloutConfig::length_at(int update_index) const {
  if (length_end <= length || ramp_updates <= 0) return length;
  const int u = std::clamp(update_index, 0, ramp_updates);
  return length + (length_end - length) * u / ramp_updates;
}

std::vector<TransitionTuple> rollout_model(const model::DynamicsModel& model,
                                           oracle::Policy& policy, const env::Environment& env,
                                           std::span<const Vec> start_states, int h, Rng& rng,
                                           bool stochastic) {
  if (start_states.empty()) throw Error(ErrorKind::EmptyBuffer, "no rollout start states");
  if (h < 1) throw Error(ErrorKind::InvalidArgument, "rollout length must be >= 1");
  std::vector<TransitionTuple> out;
  out.reserve(start_states.size() * static_cast<std::size_t>(h));
  for (const auto& start : start_states) {
    Vec s = start;
    for (int t = 0; t < h; ++t) {
      const Vec a = env.clip_action(policy.act(s, rng));
      const Eigen::MatrixXd raw = model.rollout_step(s, a, rng, stochastic);
      const Vec next_raw = raw.col(0);
      const Vec next = env.canonicalize(next_raw);
      out.push_back({s, a, next_raw, env.reward(s, a, next)});
      if (!next.allFinite() || env.terminal(next)) break;
      s = next;
    }
  }
  return out;
}

const char* to_string(Mode mode) { return mode == Mode::Fixed ? "fixed" : "cmlo"; }

void EngineConfig::validate(const env::Environment& env) const {
  oracle.validate();
  trigger.validate();
  rollout.validate();
  if (budget < 0) throw Error(ErrorKind::InvalidConfig, "budget must be >= 0");
  if (n_stages < 1) throw Error(ErrorKind::InvalidConfig, "need at least one stage");
  if (step_size_decay_steps < 0.0) throw Error(ErrorKind::InvalidConfig, "step size decay must be >= 0");
  if (env_capacity == 0) throw Error(ErrorKind::InvalidConfig, "environment buffer capacity must be > 0");
  const bool vi = oracle.kind == oracle::OracleKind::ValueIteration;
  if (vi != env.is_tabular())
    throw Error(ErrorKind::OracleMismatch, std::string("oracle '") + oracle::to_string(oracle.kind) +
                                               "' does not fit environment '" + env.spec().name + "'");
  if (oracle.kind == oracle::OracleKind::Ilqr && !env.quadratic_cost())
    throw Error(ErrorKind::OracleMismatch, "iLQR needs an environment with a quadratic cost");
}

double RunRecord::final_return() const {
  const auto stages = stage_summaries(*this);
  if (stages.empty() || !stages.back().mean_return) return kNaN;
  return *stages.back().mean_return;
}

std::vector<StageSummary> stage_summaries(const RunRecord& record) {
  std::vector<StageSummary> out;
  const int n = std::max(record.n_stages, 1);
  for (int i = 0; i < n; ++i) {
    StageSummary st;
    st.index = i;
    st.begin = record.budget * i / n;
    st.end = record.budget * (i + 1) / n;
    double cov = 0.0, err = 0.0;
    int n_err = 0;
    for (const auto& row : record.diagnostics) {
      if (row.step <= st.begin || row.step > st.end) continue;
      cov += row.coverage;
      ++st.n_rows;
    }
    for (const auto& est : record.estimates) {
      if (est.step <= st.begin || est.step > st.end || est.estimator_failed) continue;
      if (!std::isfinite(est.pred_error)) continue;
      err += est.pred_error;
      ++n_err;
    }
    if (st.n_rows > 0) st.coverage = cov / st.n_rows;
    if (n_err > 0) st.model_error = err / n_err;
    double ret = 0.0;
    int n_ep = 0;
    for (const auto& ep : record.episodes) {
      if (ep.end_step <= st.begin || ep.end_step > st.end) continue;
      ret += ep.ret;
      ++n_ep;
    }
    if (n_ep > 0) st.mean_return = ret / n_ep;
    out.push_back(st);
  }
  return out;
}

std::optional<std::pair<long, long>> interevent_range(const RunRecord& record) {
  if (record.trainings.empty()) return std::nullopt;
  long lo = LONG_MAX, hi = 0, prev = 0;
  for (const auto& ev : record.trainings) {
    const long gap = ev.step - prev;
    lo = std::min(lo, gap);
    hi = std::max(hi, gap);
    prev = ev.step;
  }
  return std::make_pair(lo, hi);
}

namespace {

double safe_volume(std::span<const Vec> states, int sample_size, Rng& rng) {
  try {
    return shift::coverage_volume(states, sample_size, rng).volume;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::DegenerateCloud || e.kind() == ErrorKind::EmptyBuffer) return 0.0;
    throw;
  }
}

RunRecord run_loop(const env::Environment& env, const EngineConfig& config, std::uint64_t seed,
                   Mode mode, int interval) {
  config.validate(env);
  if (mode == Mode::Fixed && interval < 1)
    throw Error(ErrorKind::InvalidConfig, "fixed interval k must be >= 1");

  RunRecord rec;
  rec.mode = mode;
  rec.interval = mode == Mode::Fixed ? interval : 0;
  rec.seed = seed;
  rec.config_hash = config.config_hash;
  rec.budget = config.budget;
  rec.n_stages = config.n_stages;
  rec.env_name = env.spec().name;
  rec.oracle = oracle::to_string(config.oracle.kind);

  const auto& tc = config.trigger;
  const int t_max = mode == Mode::Fixed ? interval : tc.t_max;
  const int warmup = mode == Mode::Fixed ? interval : (config.warmup >= 0 ? config.warmup : tc.t_min);
  // In fixed mode the monitor still runs for the logs but never decides.
  shift::TriggerConfig monitor = tc;
  if (mode == Mode::Fixed) {
    monitor.alpha = std::numeric_limits<double>::infinity();
    monitor.t_min = monitor.t_max = INT_MAX;
  }
  const int check_every = tc.check_frequency;

  ReplayBuffers buf(config.env_capacity, config.rollout.model_capacity);
  Rng env_rng = make_rng(seed, kEnvStream);
  Rng policy_rng = make_rng(seed, kPolicyStream);
  Rng hull_rng = make_rng(seed, kHullStream);
  Rng rollout_rng = make_rng(seed, kRolloutStream);
  Rng unused_rng = make_rng(seed, 0);

  std::optional<mdp::EvalContext> ctx;
  const env::TabularEnv* tabular = nullptr;
  if (env.is_tabular()) {
    tabular = dynamic_cast<const env::TabularEnv*>(&env);
    if (!tabular) throw Error(ErrorKind::OracleMismatch, "tabular environment of unknown type");
    ctx = mdp::EvalContext{tabular->initial_dist()};
  }

  shift::TriggerState ts;
  std::shared_ptr<const model::DynamicsModel> model;
  std::optional<nn::GaussianEnsemble> last_ensemble;
  std::unique_ptr<oracle::Policy> policy = std::make_unique<oracle::UniformRandomPolicy>(env.spec());
  int version = 0;

  auto train = [&](long step, bool forced) {
    ++version;
    TrainingEvent ev;
    ev.step = step;
    ev.version = version;
    ev.env_size = buf.env().size();
    ev.mean_loss = kNaN;
    ev.forced = forced;
    if (tabular) {
      model = std::make_shared<model::TabularCountModel>(buf.env(), tabular->mdp());
    } else {
      nn::TrainConfig tcfg = config.train;
      tcfg.net.state_dim = env.spec().state_dim;
      tcfg.net.action_dim = env.spec().action_dim;
      tcfg.seed = derive_seed(seed, kTrainStream + static_cast<std::uint64_t>(version));
      if (config.step_size_decay_steps > 0.0) {
        const double tau = config.step_size_decay_steps;
        tcfg.step_size *= tau / (tau + static_cast<double>(step));
      }
      tcfg.init_seeds.clear();
      tcfg.shuffle_seeds.clear();
      auto res = nn::train_ensemble(buf.env(), tcfg, last_ensemble ? &*last_ensemble : nullptr);
      ev.mean_loss = std::accumulate(res.final_loss.begin(), res.final_loss.end(), 0.0) /
                     static_cast<double>(res.final_loss.size());
      last_ensemble = res.ensemble;
      model = std::make_shared<model::EnsembleModel>(std::move(res.ensemble));
    }
    rec.trainings.push_back(ev);
    buf.clear_fresh();

    auto opt = oracle::optimize(model, env, config.oracle, ctx ? &*ctx : nullptr);
    const int n_roll = config.rollout.rollouts_per_update;
    if (n_roll > 0) {
      // Planners keep warm-start state, so rollouts get their own instance.
      std::unique_ptr<oracle::Policy> rollout_policy;
      if (!opt.certified)
        rollout_policy = oracle::optimize(model, env, config.oracle, ctx ? &*ctx : nullptr).policy;
      oracle::Policy& rp = rollout_policy ? *rollout_policy : *opt.policy;
      const auto states = buf.env_states();
      std::vector<Vec> starts;
      starts.reserve(static_cast<std::size_t>(n_roll));
      for (int i = 0; i < n_roll; ++i) {
        auto k = static_cast<std::size_t>(uniform01(rollout_rng) * static_cast<double>(states.size()));
        starts.push_back(states[std::min(k, states.size() - 1)]);
      }
      const int h = config.rollout.length_at(version - 1);
      for (auto& t : rollout_model(*model, rp, env, starts, h, rollout_rng, config.rollout.stochastic))
        buf.add_model(std::move(t), version, step);
    }
    policy = std::move(opt.policy);
    rec.certified = opt.certified;
    rec.eps_opt = opt.eps_opt;
  };

  Vec state = env.initial_state(env_rng);
  double ep_ret = 0.0;
  int ep_len = 0;
  const int horizon = env.spec().horizon;
  long step = 0;

  try {
    for (step = 1; step <= config.budget; ++step) {
      const Vec action = env.clip_action(policy->act(state, policy_rng));
      auto res = env.step(state, action, env_rng);
      buf.add_env({state, action, env.unwrap_successor(state, res.next_state), res.reward});
      rec.env_steps = step;
      ep_ret += res.reward;
      ++ep_len;
      if (res.done || ep_len >= horizon) {
        rec.episodes.push_back({step, ep_ret, ep_len});
        state = env.initial_state(env_rng);
        ep_ret = 0.0;
        ep_len = 0;
      } else {
        state = res.next_state;
      }
      ++ts.steps_since_training;

      if (version == 0) {
        if (step >= warmup) {
          train(step, false);
          shift::reset_after_training(ts, safe_volume(buf.env_states(), tc.hull_sample_size, hull_rng));
        }
        continue;
      }

      const long before = ts.steps_since_training;
      bool train_now = false;
      bool anchored = false;
      if (step % check_every == 0) {
        const auto out = shift::trigger_step(ts, monitor, buf.fresh(), *model, buf.env_states(),
                                             hull_rng, step);
        train_now = out.decision == shift::Decision::Train;
        anchored = train_now;
        if (mode == Mode::Fixed && before >= interval) {
          ts.estimates_log.back().decision = shift::Decision::Train;
          shift::reset_after_training(ts, out.current_volume);
          train_now = anchored = true;
        }

        DiagnosticRow row;
        row.step = step;
        row.model_version = version;
        row.coverage = safe_volume(buf.env_states(), INT_MAX, unused_rng);
        row.trigger_coverage = out.current_volume;
        const auto recent = buf.env().last(std::min<std::size_t>(buf.env().size(), check_every));
        try {
          row.model_error = model->one_step_error(recent);
        } catch (const Error&) {
          row.model_error = kNaN;
        }
        rec.diagnostics.push_back(row);
      } else if (before >= t_max) {
        train_now = true;
      }

      if (train_now) {
        train(step, before >= t_max);
        if (!anchored)
          shift::reset_after_training(ts, safe_volume(buf.env_states(), tc.hull_sample_size, hull_rng));
      }
    }
  } catch (const Error& e) {
    rec.failure = RunFailure{step, to_string(e.kind()), e.what()};
  } catch (const std::exception& e) {
    rec.failure = RunFailure{step, "Unknown", e.what()};
  }

  rec.estimates = ts.estimates_log;
  rec.model_buffer_size = buf.model().size();
  for (const auto& mt : buf.model()) {
    const auto v = static_cast<std::size_t>(mt.model_version);
    if (mt.model_version < 1 || v > rec.trainings.size() ||
        rec.trainings[v - 1].step != mt.created_step) {
      rec.freshness_ok = false;
      break;
    }
  }
  return rec;
}

}  // namespace

RunRecord run_cmlo(const env::Environment& env, const EngineConfig& config, std::uint64_t seed) {
  return run_loop(env, config, seed, Mode::Cmlo, 0);
}

RunRecord run_fixed_interval(const env::Environment& env, const EngineConfig& config, int interval,
                             std::uint64_t seed) {
  return run_loop(env, config, seed, Mode::Fixed, interval);
}

// ---------------------------------------------------------------------------

std::string run_directory_name(const RunRecord& record) {
  std::ostringstream os;
  os << to_string(record.mode);
  if (record.mode == Mode::Fixed) os << "-k" << record.interval;
  os << '-' << (record.config_hash.empty() ? "nohash" : record.config_hash) << "-seed" << record.seed;
  return os.str();
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p);
  if (!f) throw Error(ErrorKind::Io, "cannot write " + p.string());
  f.precision(17);
  return f;
}

nlohmann::json maybe(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

}  // namespace

void write_run(const RunRecord& record, const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir + ": " + ec.message());

  nlohmann::json m;
  m["schema"] = "cmlo-run";
  m["schema_version"] = kRunSchemaVersion;
  m["mode"] = to_string(record.mode);
  m["interval"] = record.interval;
  m["seed"] = record.seed;
  m["config_hash"] = record.config_hash;
  m["budget"] = record.budget;
  m["env_steps"] = record.env_steps;
  m["n_stages"] = record.n_stages;
  m["env"] = record.env_name;
  m["oracle"] = record.oracle;
  m["certified"] = record.certified;
  m["eps_opt"] = record.certified ? nlohmann::json(record.eps_opt) : nlohmann::json();
  m["training_count"] = record.training_count();
  m["final_return"] = maybe(record.final_return());
  m["model_buffer_size"] = record.model_buffer_size;
  m["freshness_ok"] = record.freshness_ok;
  if (record.failure) {
    m["failure"] = {{"step", record.failure->step},
                    {"kind", record.failure->kind},
                    {"message", record.failure->message}};
  } else {
    m["failure"] = nullptr;
  }
  {
    auto f = open_out(root / "manifest.json");
    f << m.dump(2) << '\n';
  }
  {
    auto f = open_out(root / "returns.csv");
    f << "episode,end_step,return,length\n";
    for (std::size_t i = 0; i < record.episodes.size(); ++i) {
      const auto& e = record.episodes[i];
      f << i << ',' << e.end_step << ',' << e.ret << ',' << e.length << '\n';
    }
  }
  {
    auto f = open_out(root / "triggers.csv");
    shift::write_trigger_csv(f, record.estimates);
  }
  {
    auto f = open_out(root / "trainings.csv");
    f << "version,step,env_size,mean_loss,forced\n";
    for (const auto& t : record.trainings) {
      f << t.version << ',' << t.step << ',' << t.env_size << ',';
      if (std::isfinite(t.mean_loss)) f << t.mean_loss;
      f << ',' << (t.forced ? 1 : 0) << '\n';
    }
  }
  {
    auto f = open_out(root / "coverage.csv");
    f << "step,model_version,coverage,trigger_coverage\n";
    for (const auto& r : record.diagnostics)
      f << r.step << ',' << r.model_version << ',' << r.coverage << ',' << r.trigger_coverage << '\n';
  }
  {
    auto f = open_out(root / "model_error.csv");
    f << "step,model_version,model_error\n";
    for (const auto& r : record.diagnostics) {
      f << r.step << ',' << r.model_version << ',';
      if (std::isfinite(r.model_error)) f << r.model_error;
      f << '\n';
    }
  }
}

}  // namespace cmlo::engine

namespace cmlo::engine {

namespace {

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p,
                                               std::string_view expected_header) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + p.string());
  std::string line;
  if (!std::getline(in, line) || line != expected_header)
    throw Error(ErrorKind::InvalidConfig, p.string() + ": unexpected header");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

double cell_double(const std::string& s, const std::filesystem::path& p) {
  if (s.empty()) return kNaN;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size())
    throw Error(ErrorKind::NumericalFailure, p.string() + ": bad number '" + s + "'");
  return v;
}

long cell_long(const std::string& s, const std::filesystem::path& p) {
  const double v = cell_double(s, p);
  if (!std::isfinite(v)) throw Error(ErrorKind::NumericalFailure, p.string() + ": missing integer");
  return static_cast<long>(v);
}

void need_columns(const std::vector<std::string>& row, std::size_t n, const std::filesystem::path& p) {
  if (row.size() != n) throw Error(ErrorKind::NumericalFailure, p.string() + ": wrong column count");
}

}  // namespace

RunRecord read_run(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  const auto manifest_path = root / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorKind::Io, "missing manifest in " + dir);
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, manifest_path.string() + ": corrupt manifest: " + e.what());
  }
  RunRecord r;
  try {
    if (m.value("schema", std::string()) != "cmlo-run")
      throw Error(ErrorKind::InvalidConfig, manifest_path.string() + ": not a run manifest");
    const int version = m.at("schema_version").get<int>();
    if (version != kRunSchemaVersion)
      throw Error(ErrorKind::InvalidConfig, manifest_path.string() + ": schema_version " +
                                                std::to_string(version) + ", expected " +
                                                std::to_string(kRunSchemaVersion));
    const auto mode = m.at("mode").get<std::string>();
    if (mode != "cmlo" && mode != "fixed")
      throw Error(ErrorKind::InvalidConfig, manifest_path.string() + ": unknown mode " + mode);
    r.mode = mode == "fixed" ? Mode::Fixed : Mode::Cmlo;
    r.interval = m.at("interval").get<int>();
    r.seed = m.at("seed").get<std::uint64_t>();
    r.config_hash = m.at("config_hash").get<std::string>();
    r.budget = m.at("budget").get<long>();
    r.env_steps = m.at("env_steps").get<long>();
    r.n_stages = m.at("n_stages").get<int>();
    r.env_name = m.at("env").get<std::string>();
    r.oracle = m.at("oracle").get<std::string>();
    r.certified = m.at("certified").get<bool>();
    r.eps_opt = m.at("eps_opt").is_null() ? 0.0 : m.at("eps_opt").get<double>();
    r.model_buffer_size = m.at("model_buffer_size").get<std::size_t>();
    r.freshness_ok = m.at("freshness_ok").get<bool>();
    if (!m.at("failure").is_null()) {
      const auto& f = m.at("failure");
      r.failure = RunFailure{f.at("step").get<long>(), f.at("kind").get<std::string>(),
                             f.at("message").get<std::string>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, manifest_path.string() + ": corrupt manifest: " + e.what());
  }

  auto p = root / "returns.csv";
  for (const auto& row : read_csv(p, "episode,end_step,return,length")) {
    need_columns(row, 4, p);
    r.episodes.push_back({cell_long(row[1], p), cell_double(row[2], p),
                          static_cast<int>(cell_long(row[3], p))});
  }
  p = root / "trainings.csv";
  for (const auto& row : read_csv(p, "version,step,env_size,mean_loss,forced")) {
    need_columns(row, 5, p);
    TrainingEvent t;
    t.version = static_cast<int>(cell_long(row[0], p));
    t.step = cell_long(row[1], p);
    t.env_size = static_cast<std::size_t>(cell_long(row[2], p));
    t.mean_loss = cell_double(row[3], p);
    t.forced = cell_long(row[4], p) != 0;
    r.trainings.push_back(t);
  }
  p = root / "triggers.csv";
  for (const auto& row :
       read_csv(p, "step,ratio,pred_error,term,accumulator,decision,estimator_failed")) {
    need_columns(row, 7, p);
    shift::EstimateRecord e;
    e.step = cell_long(row[0], p);
    e.ratio = cell_double(row[1], p);
    e.pred_error = cell_double(row[2], p);
    e.term = cell_double(row[3], p);
    e.accumulator = cell_double(row[4], p);
    e.decision = row[5] == "train" ? shift::Decision::Train : shift::Decision::Hold;
    e.estimator_failed = cell_long(row[6], p) != 0;
    r.estimates.push_back(e);
  }
  p = root / "coverage.csv";
  const auto cov = read_csv(p, "step,model_version,coverage,trigger_coverage");
  const auto err_path = root / "model_error.csv";
  const auto err = read_csv(err_path, "step,model_version,model_error");
  if (cov.size() != err.size())
    throw Error(ErrorKind::NumericalFailure, dir + ": coverage and model_error rows differ");
  for (std::size_t i = 0; i < cov.size(); ++i) {
    need_columns(cov[i], 4, p);
    need_columns(err[i], 3, err_path);
    DiagnosticRow d;
    d.step = cell_long(cov[i][0], p);
    d.model_version = static_cast<int>(cell_long(cov[i][1], p));
    d.coverage = cell_double(cov[i][2], p);
    d.trigger_coverage = cell_double(cov[i][3], p);
    d.model_error = cell_double(err[i][2], err_path);
    r.diagnostics.push_back(d);
  }
  return r;
}

}  // namespace cmlo::engine
