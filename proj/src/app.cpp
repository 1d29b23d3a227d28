#include "vocbf/app.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "vocbf/checks.hpp"
#include "vocbf/config.hpp"
#include "vocbf/experiments.hpp"
#include "vocbf/io.hpp"

namespace fs = std::filesystem;

namespace vocbf {

namespace {

class MissingArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr const char* kDatasetFile = "dataset.csv";

struct Context {
  RunConfig cfg;
  fs::path run_dir;
  std::ostream* out = nullptr;
  bool emit_plots = false;
};

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y%m%dT%H%M%SZ");
  return ss.str();
}

fs::path dataset_path(const Context& ctx) {
  const std::string& explicit_path = ctx.cfg.get("run.dataset");
  return explicit_path.empty() ? ctx.run_dir / kDatasetFile : fs::path(explicit_path);
}

std::string dataset_hash(const Context& ctx) {
  const fs::path p = dataset_path(ctx);
  return fs::exists(p) ? git_blob_hash(read_file(p.string())) : "none";
}

void write_stamped(const Context& ctx, const std::string& command, const std::string& file, const std::string& body) {
  std::ostringstream ss;
  ss << "# vocbf " << command << '\n';
  ss << "# dataset_sha1=" << dataset_hash(ctx) << '\n';
  for (const auto& line : ctx.cfg.resolved_lines()) ss << "# config " << line << '\n';
  ss << body;
  write_file((ctx.run_dir / file).string(), ss.str());
}

void write_resolved_config(const Context& ctx, const std::string& command) {
  std::string name = command;
  for (char& c : name) {
    if (c == ' ') c = '_';
  }
  write_file((ctx.run_dir / ("resolved_" + name + ".ini")).string(), ctx.cfg.resolved_text());
}

data::TransitionSet load_dataset(const Context& ctx) {
  const fs::path p = dataset_path(ctx);
  if (!fs::exists(p)) throw MissingArtifact("missing artifact 'dataset' (" + p.string() + ")");
  return data::load(p.string(), agv::safety_fn(ctx.cfg.env()));
}

nn::MlpModel load_model(const Context& ctx, const std::string& role) {
  const fs::path p = ctx.run_dir / (role + ".ckpt");
  if (!fs::exists(p)) throw MissingArtifact("missing artifact '" + role + "' (" + p.string() + ")");
  nn::Checkpoint ck = nn::load_checkpoint(p.string());
  if (ck.role != role) throw ParseError(p.string() + ": role tag '" + ck.role + "', expected '" + role + "'", 2);
  return std::move(ck.model);
}

std::shared_ptr<const dyn::DynamicsSurrogate> load_dynamics(const Context& ctx) {
  const fs::path p = ctx.run_dir / "dynamics.ckpt";
  if (!fs::exists(p)) throw MissingArtifact("missing artifact 'dynamics' (" + p.string() + ")");
  return std::make_shared<const dyn::DynamicsSurrogate>(dyn::load_surrogate(p.string()));
}

std::shared_ptr<const policy::Controller> reference_policy(const Context& ctx) {
  const std::string& kind = ctx.cfg.get("policy.reference");
  const double u = ctx.cfg.env().u_bound;
  if (kind == "goto_goal") {
    return std::make_shared<policy::ReferencePolicy>(policy::ReferencePolicy::goto_goal(ctx.cfg.goto_goal(), -u, u));
  }
  if (kind == "bc") {
    return std::make_shared<policy::ReferencePolicy>(
        policy::ReferencePolicy::behavior_cloned({load_model(ctx, "bc_actor"), FeatureMap::AgvHeading}, -u, u));
  }
  throw ConfigError("config key 'policy.reference': expected goto_goal or bc, got '" + kind + "'");
}

safety::DynamicsProvider provider(const Context& ctx) {
  const std::string& mode = ctx.cfg.get("eval.dynamics");
  if (mode == "learned") return safety::DynamicsProvider::learned(load_dynamics(ctx));
  if (mode == "analytic") return safety::DynamicsProvider::analytic(ctx.cfg.env());
  throw ConfigError("config key 'eval.dynamics': expected learned or analytic, got '" + mode + "'");
}

eval::FilterSetup filter_setup(const Context& ctx) {
  eval::FilterSetup s;
  s.env = ctx.cfg.env();
  s.reference = reference_policy(ctx);
  s.alpha = ctx.cfg.get_double("policy.alpha");
  if (!(s.alpha > 0.0)) throw ConfigError("config key 'policy.alpha' must be positive");
  return s;
}

void emit_table(const Context& ctx, const std::string& command, const eval::ExperimentTable& table) {
  std::ostringstream csv;
  eval::write_table_csv(csv, table);
  write_stamped(ctx, command, table.name + ".csv", csv.str());
  if (ctx.emit_plots) {
    std::ostringstream plot;
    eval::write_plot_data(plot, table);
    write_stamped(ctx, command, table.name + "_plot.csv", plot.str());
  }
  *ctx.out << eval::summarize(table);
}

// ---- commands -------------------------------------------------------------

int cmd_gen_data(Context& ctx) {
  const agv::AgvConfig env = ctx.cfg.env();
  const auto n = static_cast<std::size_t>(ctx.cfg.get_int("env.n_transitions"));
  const data::TransitionSet set = agv::generate_dataset(n, env, ctx.cfg.get_uint("run.seed"));
  const fs::path p = dataset_path(ctx);
  data::save(set, p.string());
  write_resolved_config(ctx, "gen-data");
  *ctx.out << "wrote " << set.size() << " transitions (" << set.episode_ids().size() << " episodes) to " << p.string()
           << "\ndataset_sha1=" << dataset_hash(ctx) << '\n';
  return kExitOk;
}

std::string curve_csv(const std::vector<double>& losses) {
  std::ostringstream ss;
  ss << "epoch,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) ss << i << ',' << format_double(losses[i]) << '\n';
  return ss.str();
}

int cmd_train(Context& ctx, const std::string& which) {
  const std::string command = "train " + which;
  const data::TransitionSet data = load_dataset(ctx);
  if (which == "barrier") {
    const barrier::BarrierModelPair pair = barrier::train_vocbf(data, ctx.cfg.barrier());
    nn::save_checkpoint((ctx.run_dir / "psi.ckpt").string(), pair.psi, "psi");
    nn::save_checkpoint((ctx.run_dir / "theta.ckpt").string(), pair.theta, "theta");
    std::ostringstream curve;
    barrier::write_training_curve(curve, pair.training_log);
    write_stamped(ctx, command, "barrier_curve.csv", curve.str());
    if (!pair.training_log.empty()) {
      const auto& last = pair.training_log.back();
      *ctx.out << "final loss_psi=" << last.loss_psi << " loss_theta=" << last.loss_theta << '\n';
    }
    *ctx.out << "minibatches=" << pair.stats.minibatches << " sampled_actions=" << pair.stats.sampled_actions << '\n';
  } else if (which == "dynamics") {
    const dyn::DynamicsTrainResult res = dyn::train_dynamics(data, ctx.cfg.dynamics());
    dyn::save_surrogate((ctx.run_dir / "dynamics.ckpt").string(), res.model);
    write_stamped(ctx, command, "dynamics_curve.csv", curve_csv(res.epoch_loss));
    std::ostringstream rmse;
    rmse << "dim,heldout_rmse\n";
    for (Eigen::Index i = 0; i < res.heldout_rmse.size(); ++i) {
      rmse << i << ',' << format_double(res.heldout_rmse(i)) << '\n';
    }
    write_stamped(ctx, command, "dynamics_rmse.csv", rmse.str());
    *ctx.out << "held-out RMSE per dimension:";
    for (Eigen::Index i = 0; i < res.heldout_rmse.size(); ++i) *ctx.out << ' ' << res.heldout_rmse(i);
    *ctx.out << " (" << res.test_transitions << " held-out transitions)\n";
  } else if (which == "bc") {
    std::vector<double> losses;
    const policy::ReferencePolicy bc = policy::train_bc(data, ctx.cfg.bc(), &losses);
    nn::save_checkpoint((ctx.run_dir / "bc_actor.ckpt").string(), bc.bc().actor, "bc_actor");
    write_stamped(ctx, command, "bc_curve.csv", curve_csv(losses));
    if (!losses.empty()) *ctx.out << "final bc loss=" << losses.back() << '\n';
  } else if (which == "cbvf-mb") {
    const auto surrogate = load_dynamics(ctx);
    barrier::SuccessorFn successor = [surrogate](const Eigen::MatrixXd& x, const Eigen::MatrixXd& u) {
      return dyn::predict_next_batch(*surrogate, x, u);
    };
    std::vector<barrier::EpochLoss> log;
    barrier::TrainingStats stats;
    const nn::MlpModel theta_mb =
        barrier::train_cbvf_model_based(data, successor, ctx.cfg.barrier(), ctx.cfg.model_based(), &log, &stats);
    nn::save_checkpoint((ctx.run_dir / "theta_mb.ckpt").string(), theta_mb, "theta_mb");
    std::ostringstream curve;
    barrier::write_training_curve(curve, log);
    write_stamped(ctx, command, "cbvf_mb_curve.csv", curve.str());
    *ctx.out << "minibatches=" << stats.minibatches << " sampled_actions=" << stats.sampled_actions << '\n';
  } else {
    throw ConfigError("unknown training target '" + which + "'");
  }
  write_resolved_config(ctx, command);
  return kExitOk;
}

int cmd_eval(Context& ctx, const std::string& mode) {
  const std::string command = "eval " + mode;
  const eval::FilterSetup setup = filter_setup(ctx);
  eval::SuiteConfig suite = ctx.cfg.suite();
  const barrier::BarrierTrainConfig bcfg = ctx.cfg.barrier();

  if (mode == "table1") {
    auto filter = eval::make_filter(setup, load_model(ctx, "theta"), bcfg.features, provider(ctx));
    emit_table(ctx, command, eval::table1(setup, *filter, suite));
  } else if (mode == "ssv") {
    auto filter = eval::make_filter(setup, load_model(ctx, "theta"), bcfg.features, provider(ctx));
    const auto n = static_cast<std::size_t>(ctx.cfg.get_int("eval.ssv_samples"));
    if (n < 1) throw ConfigError("config key 'eval.ssv_samples' must be >= 1");
    const std::uint64_t seed = ctx.cfg.get_uint("eval.ssv_seed");
    const double filtered = eval::safe_set_volume(*filter, n, setup.env, seed, suite.threads, suite.chunk_size);
    const double unfiltered =
        eval::safe_set_volume(*setup.reference, n, setup.env, seed, suite.threads, suite.chunk_size);
    std::ostringstream csv;
    csv << "label,ssv_pct,n_samples\n";
    csv << "pi_ref," << format_double(unfiltered) << ',' << n << '\n';
    csv << "pi_ref+vocbf_qp," << format_double(filtered) << ',' << n << '\n';
    write_stamped(ctx, command, "ssv.csv", csv.str());
    *ctx.out << std::fixed << std::setprecision(2) << "ssv pi_ref: " << unfiltered << " %\nssv pi_ref+vocbf_qp: "
             << filtered << " %\n";
  } else if (mode == "tau") {
    const data::TransitionSet data = load_dataset(ctx);
    emit_table(ctx, command,
               eval::ablate_tau(data, load_model(ctx, "psi"), bcfg, ctx.cfg.get_doubles("eval.taus"), setup,
                                provider(ctx), suite));
  } else if (mode == "noise") {
    auto filter = eval::make_filter(setup, load_model(ctx, "theta"), bcfg.features, provider(ctx));
    emit_table(ctx, command, eval::ablate_noise(*filter, ctx.cfg.get_doubles("eval.sigmas"), setup.env, suite));
  } else if (mode == "dyncompare") {
    emit_table(ctx, command,
               eval::compare_dynamics_modes(setup, load_model(ctx, "theta"), load_model(ctx, "theta_mb"),
                                            bcfg.features, load_dynamics(ctx), suite));
  } else {
    throw ConfigError("unknown eval mode '" + mode + "'");
  }
  write_resolved_config(ctx, command);
  return kExitOk;
}

int cmd_check(Context& ctx, const std::string& suite) {
  const std::uint64_t seed = ctx.cfg.get_uint("run.seed");
  std::vector<checks::SuiteResult> results;
  if (suite == "grad") {
    results.push_back(checks::gradient_suite(50, seed));
  } else if (suite == "qp") {
    for (int m = 1; m <= 3; ++m) results.push_back(checks::qp_equivalence(m, 1000, seed));
  } else if (suite == "lemma") {
    results.push_back(checks::fd_lemma(100000, seed));
  } else if (suite == "backup") {
    results.push_back(checks::backup_contraction(100, ctx.cfg.get_double("barrier.gamma"), seed));
  } else {
    throw ConfigError("unknown check suite '" + suite + "'");
  }
  bool ok = true;
  for (const auto& r : results) {
    *ctx.out << (r.passed ? "PASS " : "FAIL ") << r.name << " cases=" << r.cases << " failures=" << r.failures << ' '
             << r.detail << '\n';
    ok = ok && r.passed;
  }
  return ok ? kExitOk : kExitCheckFailed;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Barrier learning from logged data and a QP safety filter for a Dubins AGV", "vocbf"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string run_dir;
  bool emit_plots = false;
  app.add_option("--config", config_path, "Config file (sectioned key = value)");
  app.add_option("--set", overrides, "Override, section.key=value (repeatable)");
  app.add_option("--seed", seed, "Master seed (run.seed)");
  app.add_option("--threads", threads, "Evaluation threads (run.threads)");
  app.add_option("--run-dir", run_dir, "Run directory to read and write artifacts");
  app.add_flag("--emit-plots-data", emit_plots, "Also write long-format CSV per table");

  std::string which, mode, suite;
  auto* gen = app.add_subcommand("gen-data", "Generate the offline dataset");
  auto* train = app.add_subcommand("train", "Train a network");
  train->add_option("which", which, "barrier | dynamics | bc | cbvf-mb")
      ->required()
      ->check(CLI::IsMember({"barrier", "dynamics", "bc", "cbvf-mb"}));
  auto* ev = app.add_subcommand("eval", "Evaluate trained artifacts");
  ev->add_option("mode", mode, "table1 | ssv | tau | noise | dyncompare")
      ->required()
      ->check(CLI::IsMember({"table1", "ssv", "tau", "noise", "dyncompare"}));
  auto* chk = app.add_subcommand("check", "Run a property suite");
  chk->add_option("suite", suite, "grad | qp | lemma | backup")
      ->required()
      ->check(CLI::IsMember({"grad", "qp", "lemma", "backup"}));
  for (auto* sub : {gen, train, ev, chk}) sub->fallthrough();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  Context ctx;
  ctx.out = &out;
  try {
    if (!config_path.empty()) ctx.cfg.merge_file(config_path);
    for (const auto& o : overrides) ctx.cfg.set_override(o);
    if (seed) ctx.cfg.set("run.seed", std::to_string(*seed));
    if (threads) ctx.cfg.set("run.threads", std::to_string(*threads));
    ctx.emit_plots = emit_plots || ctx.cfg.get_bool("eval.emit_plots_data");
    ctx.cfg.env();  // validate early

    if (!run_dir.empty()) {
      ctx.run_dir = run_dir;
    } else {
      const char* root = std::getenv(kOutputRootEnv);
      ctx.run_dir = fs::path(root && *root ? root : "runs") / (utc_timestamp() + "_seed" + ctx.cfg.get("run.seed"));
    }
    if (!chk->parsed()) {
      std::error_code ec;
      fs::create_directories(ctx.run_dir, ec);
      if (ec) throw IoError("cannot create run directory " + ctx.run_dir.string() + ": " + ec.message());
      out << "run directory: " << ctx.run_dir.string() << '\n';
    }

    if (gen->parsed()) return cmd_gen_data(ctx);
    if (train->parsed()) return cmd_train(ctx, which);
    if (ev->parsed()) return cmd_eval(ctx, mode);
    return cmd_check(ctx, suite);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const TrainingError& e) {
    err << "training error: " << e.what() << '\n';
    return kExitTraining;
  } catch (const MissingArtifact& e) {
    err << e.what() << '\n';
    return kExitMissingArtifact;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kExitIo;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    err << "invalid setting: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  }
}

}  // namespace vocbf
