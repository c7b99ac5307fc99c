#include <cstdint>
#include <cstdio>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "evpanel/counterfactual.hpp"
#include "evpanel/fit.hpp"
#include "evpanel/io.hpp"
#include "evpanel/montecarlo.hpp"
#include "evpanel/parallel.hpp"
#include "evpanel/simulate.hpp"

namespace {

using namespace evpanel;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNoConverge = 4;

int exit_code_for(const Error& e) {
  return e.code() == ErrorCode::io ? kExitIo : kExitConfig;
}

std::string cohort_label(int t0) {
  return t0 == EventDesign::never_treated ? std::string("never")
                                          : cat("t0=", t0);
}

int cmd_simulate(const std::string& config, const std::string& out,
                 bool seed_set, std::uint64_t seed, int threads) {
  SimConfig cfg = parse_sim_config(config);
  if (seed_set) cfg.seed = seed;
  SimResult res = simulate_panel(cfg, threads);
  const std::string latents_path = out + ".latents.csv";
  write_panel_csv(out, res.panel);
  write_latents_csv(latents_path, res.latents);

  std::map<int, int> cohort_counts;
  for (const UnitData& u : res.panel.units) cohort_counts[u.t0]++;
  std::printf("simulated panel: N=%d T=%d K=%d seed=%llu\n", res.panel.N(),
              res.panel.T, res.panel.K,
              static_cast<unsigned long long>(cfg.seed));
  std::printf("cohorts:");
  for (const auto& [t0, n] : cohort_counts) {
    std::printf(" %s:%d", cohort_label(t0).c_str(), n);
  }
  std::printf("\n");
  std::printf("panel: %s\nlatents: %s\n", out.c_str(), latents_path.c_str());
  return kExitOk;
}

int cmd_estimate(const std::string& config, const std::string& data,
                 const std::string& out, bool seed_set, std::uint64_t seed,
                 int threads) {
  EstimateConfig cfg = parse_estimate_config(config);
  PanelData panel = read_panel_csv(data);
  panel.validate(cfg.design);
  cfg.options.threads = threads;
  if (seed_set) cfg.options.start_seed = seed;

  FitResult fit = fit_full_model(panel, cfg.design, cfg.options);

  const std::string trace_path = out + ".trace.csv";
  write_trace_csv(trace_path, fit.trace);
  write_fit_report(out, fit, cfg.design, trace_path);

  std::printf("fit: loglik_Y=%s converged=%s iterations=%d evals=%d\n",
              fmt_double(fit.loglik_Y).c_str(), fit.converged ? "yes" : "no",
              fit.iterations, fit.n_evals);
  if (fit.has_feedback) {
    std::printf("feedback: loglik_X=%s nobs=%d\n",
                fmt_double(fit.feedback.loglik_X).c_str(), fit.feedback.nobs);
  }
  std::printf("report: %s\ntrace: %s\n", out.c_str(), trace_path.c_str());
  if (!fit.converged) {
    std::fprintf(stderr, "error: optimizer did not converge (report written)\n");
    return kExitNoConverge;
  }
  return kExitOk;
}

// Shared setup for the counterfactual commands: load the fitted model, the
// scenario, and either the observed panel or the scenario's own units.
struct CounterfactualInputs {
  ModelParams params;
  PanelData panel;
  Scenario scenario;
};

CounterfactualInputs load_counterfactual_inputs(const std::string& config,
                                                const std::string& fit_path,
                                                const std::string& data,
                                                bool seed_set,
                                                std::uint64_t seed) {
  FitReport rep = read_fit_report(fit_path);
  require(rep.has_feedback, ErrorCode::config, "fit report '", fit_path,
          "' has no feedback block; counterfactual simulation needs the "
          "covariate law");
  ScenarioConfig sc = parse_scenario_config(config, rep.design);
  if (seed_set) sc.scenario.seed = seed;

  CounterfactualInputs in;
  in.params = ModelParams{rep.design, rep.theta, rep.het, rep.feedback};
  in.params.validate();
  in.scenario = sc.scenario;

  if (!data.empty()) {
    in.panel = read_panel_csv(data);
    in.panel.validate(rep.design);
  } else {
    require(sc.has_units, ErrorCode::config,
            "no --data panel given; the scenario must provide y0_star and "
            "x0_star");
    require(in.scenario.lambda_source == LambdaSource::prior, ErrorCode::config,
            "posterior lambda source requires an observed panel (--data)");
    const int n = static_cast<int>(in.scenario.y0_star.size());
    in.panel.T = rep.design.T;
    in.panel.K = rep.design.K;
    in.panel.units.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      UnitData& u = in.panel.units[static_cast<std::size_t>(i)];
      u.y0 = in.scenario.y0_star[i];
      u.x0 = in.scenario.x0_star.row(i);
      u.t0 = in.scenario.t0_for(i);
    }
  }
  in.scenario.validate(rep.design, in.panel.N());
  return in;
}

int cmd_counterfactual(const std::string& config, const std::string& fit_path,
                       const std::string& data, const std::string& out,
                       bool seed_set, std::uint64_t seed, int threads) {
  CounterfactualInputs in =
      load_counterfactual_inputs(config, fit_path, data, seed_set, seed);
  ScenarioResult res = simulate_scenario(in.params, in.panel, in.scenario,
                                         threads);
  const std::string units_path = out + ".units.csv";
  write_scenario_csv(out, units_path, res, in.scenario);
  std::printf("scenario: N=%d n_draws=%d seed=%llu\n", in.panel.N(),
              in.scenario.n_draws,
              static_cast<unsigned long long>(in.scenario.seed));
  std::printf("path: %s\nunit means: %s\n", out.c_str(), units_path.c_str());
  return kExitOk;
}

int cmd_decompose(const std::string& config, const std::string& fit_path,
                  const std::string& data, const std::string& out,
                  bool seed_set, std::uint64_t seed, int threads) {
  CounterfactualInputs in =
      load_counterfactual_inputs(config, fit_path, data, seed_set, seed);
  DecompositionResult res = decompose(in.params, in.panel, in.scenario,
                                      threads);
  const std::string calendar_path = out + ".calendar.csv";
  write_decomposition_csv(out, calendar_path, res, in.scenario);
  std::printf("decomposition: N=%d n_draws=%d seed=%llu\n", in.panel.N(),
              res.n_draws, static_cast<unsigned long long>(res.seed));
  std::printf("event time: %s\ncalendar time: %s\n", out.c_str(),
              calendar_path.c_str());
  return kExitOk;
}

int cmd_montecarlo(const std::string& config, const std::string& out,
                   bool seed_set, std::uint64_t seed, int threads) {
  McConfig cfg = parse_mc_config(config);
  if (seed_set) cfg.seed = seed;
  McCsvWriter writer(out);
  run_study(cfg.cells, cfg.n_reps, cfg.seed, threads,
            [&](const McCellResult& cell) {
              writer.append(cell);
              std::printf("cell %s: %d/%d ok%s\n", cell.cell.c_str(), cell.n_ok,
                          cell.n_reps, cell.failed ? " [FAILED]" : "");
              std::fflush(stdout);
            });
  std::printf("study table: %s\n", out.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic panel event-study toolkit: simulation, integrated-"
               "likelihood estimation, counterfactual decomposition"};
  app.require_subcommand(1);

  std::string config, data, fit_path, out;
  std::uint64_t seed = 0;
  int threads = 0;

  auto add_common = [&](CLI::App* cmd, bool with_data, bool with_fit) {
    cmd->add_option("--config", config, "Configuration file (JSON)")
        ->required();
    if (with_data) cmd->add_option("--data", data, "Panel CSV file");
    if (with_fit) {
      cmd->add_option("--fit", fit_path, "Fit report from 'estimate'")
          ->required();
    }
    cmd->add_option("--out", out, "Output path (derived files share the stem)")
        ->required();
    CLI::Option* seed_opt =
        cmd->add_option("--seed", seed, "Override the seed in the config");
    cmd->add_option("--threads", threads,
                    "Worker threads (0 = EVPANEL_THREADS or hardware)");
    return seed_opt;
  };

  CLI::App* c_sim = app.add_subcommand("simulate", "Draw a panel from the "
                                       "joint data-generating process");
  CLI::Option* sim_seed = add_common(c_sim, false, false);

  CLI::App* c_est = app.add_subcommand("estimate", "Two-step fit: integrated "
                                       "outcome likelihood, then feedback OLS");
  CLI::Option* est_seed = add_common(c_est, true, false);
  c_est->get_option("--data")->required();

  CLI::App* c_cf = app.add_subcommand("counterfactual", "Simulate outcome "
                                      "paths under a scenario");
  CLI::Option* cf_seed = add_common(c_cf, true, true);

  CLI::App* c_dec = app.add_subcommand("decompose", "Three-arm direct/indirect "
                                       "effect decomposition");
  CLI::Option* dec_seed = add_common(c_dec, true, true);

  CLI::App* c_mc = app.add_subcommand("montecarlo", "Run a simulation study "
                                      "grid");
  CLI::Option* mc_seed = add_common(c_mc, false, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (c_sim->parsed()) {
      return cmd_simulate(config, out, !sim_seed->empty(), seed, threads);
    }
    if (c_est->parsed()) {
      return cmd_estimate(config, data, out, !est_seed->empty(), seed, threads);
    }
    if (c_cf->parsed()) {
      return cmd_counterfactual(config, fit_path, data, out, !cf_seed->empty(),
                                seed, threads);
    }
    if (c_dec->parsed()) {
      return cmd_decompose(config, fit_path, data, out, !dec_seed->empty(),
                           seed, threads);
    }
    if (c_mc->parsed()) {
      return cmd_montecarlo(config, out, !mc_seed->empty(), seed, threads);
    }
  } catch (const evpanel::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return kExitConfig;
}
