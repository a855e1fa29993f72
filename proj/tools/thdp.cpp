// Apache License, Version 2.0, refer to LICENSE.txt

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "thdp/analysis.hpp"
#include "thdp/error.hpp"
#include "thdp/io.hpp"
#include "thdp/metrics.hpp"

using namespace thdp;
using nlohmann::json;

namespace {

// stdout unless --out was given
void emit(const std::string& out, const std::string& text) {
  if (out.empty()) std::cout << text;
  else write_file(out, text);
}

std::string lines(const std::vector<json>& rows) {
  std::string s;
  for (const auto& r : rows) s += r.dump() + "\n";
  return s;
}

Dataset load_for_model(const ModelFile& m, const std::string& path) {
  return load_trajectories(path, dataset_options_for(m));
}

std::optional<Rect> parse_bounds(const std::string& s) {
  if (s.empty()) return std::nullopt;
  Rect r;
  char c1, c2, c3;
  std::istringstream in(s);
  if (!(in >> r.min_x >> c1 >> r.min_y >> c2 >> r.max_x >> c3 >> r.max_y) || c1 != ',' || c2 != ',' || c3 != ',')
    throw InvalidInput("--bounds expects min_x,min_y,max_x,max_y");
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Triplet HDP crowd-trajectory analysis"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string input, model_path, out, bounds, kind = "flow_weights", variant = "all", scenario_path, labels_out;
  std::string model_b;
  std::uint64_t seed = 0;
  double quantile = 0.05;
  std::size_t agents = 100, min_traj = 3;
  int max_components = 5;

  auto* fit_cmd = app.add_subcommand("fit", "fit a model to trajectories (.csv or .jsonl)");
  fit_cmd->add_option("input", input, "trajectory file")->required();
  fit_cmd->add_option("--out", out, "model file")->required();
  fit_cmd->add_option("--seed", seed, "random seed")->required();
  fit_cmd->add_option("--grid-rows", cfg.grid_rows, "codebook rows")->capture_default_str();
  fit_cmd->add_option("--grid-cols", cfg.grid_cols, "codebook cols")->capture_default_str();
  fit_cmd->add_option("--segments", cfg.segments, "time segments (restaurants)")->capture_default_str();
  fit_cmd->add_option("--burn-in", cfg.burn_in, "space-only burn-in sweeps")->capture_default_str();
  fit_cmd->add_option("--iters", cfg.max_iters, "coupled sweeps")->capture_default_str();
  fit_cmd->add_option("--customer-selection", cfg.customer_selection, "table-move subsample size")
      ->capture_default_str();
  fit_cmd->add_option("--prune", cfg.prune, "drop flows below this weight")->capture_default_str();
  fit_cmd->add_option("--eta", cfg.eta, "cell Dirichlet concentration")->capture_default_str();
  fit_cmd->add_option("--hyper-shape", cfg.hyper_prior.shape, "Gamma shape of concentration priors")
      ->capture_default_str();
  fit_cmd->add_option("--hyper-rate", cfg.hyper_prior.rate, "Gamma rate of concentration priors")
      ->capture_default_str();
  fit_cmd->add_option("--static-threshold", cfg.static_threshold, "speed below which a cell is static")
      ->capture_default_str();
  fit_cmd->add_option("--max-trajectories", cfg.max_trajectories, "uniform subsample, 0 keeps all")
      ->capture_default_str();
  fit_cmd->add_flag("--early-stop", cfg.early_stop, "stop once the flow count and likelihood settle");
  fit_cmd->add_option("--bounds", bounds, "scene bounds min_x,min_y,max_x,max_y");

  auto* classify_cmd = app.add_subcommand("classify", "assign trajectories to flows");
  classify_cmd->add_option("model", model_path)->required();
  classify_cmd->add_option("input", input)->required();
  classify_cmd->add_option("--out", out);

  auto* anomaly_cmd = app.add_subcommand("anomaly", "score trajectories and flag anomalies");
  anomaly_cmd->add_option("model", model_path)->required();
  anomaly_cmd->add_option("input", input)->required();
  anomaly_cmd->add_option("--quantile", quantile, "flag below this score quantile")->capture_default_str();
  anomaly_cmd->add_option("--out", out);

  auto* metrics_cmd = app.add_subcommand("metrics", "compare data or models");
  metrics_cmd->require_subcommand(1);
  auto* al_cmd = metrics_cmd->add_subcommand("al", "average likelihood of data under a model");
  al_cmd->add_option("model", model_path)->required();
  al_cmd->add_option("input", input)->required();
  al_cmd->add_option("--variant", variant, "all or one of overall, space_time, ...")->capture_default_str();
  al_cmd->add_option("--out", out);
  auto* dpd_cmd = metrics_cmd->add_subcommand("dpd", "divergences between matched flows of two models");
  dpd_cmd->add_option("model_a", model_path)->required();
  dpd_cmd->add_option("model_b", model_b)->required();
  dpd_cmd->add_option("--variant", variant, "all or one of space, time, speed, time_speed")->capture_default_str();
  dpd_cmd->add_option("--quadrature", cfg.quadrature, "grid points per axis")->capture_default_str();
  dpd_cmd->add_option("--out", out);

  auto* guide_cmd = app.add_subcommand("guide", "simulation guidance");
  guide_cmd->require_subcommand(1);
  auto* build_cmd = guide_cmd->add_subcommand("build", "build a scenario from a model and its data");
  build_cmd->add_option("model", model_path)->required();
  build_cmd->add_option("input", input)->required();
  build_cmd->add_option("--out", out)->required();
  build_cmd->add_option("--min-trajectories", min_traj, "below this a flow uses straight lines")
      ->capture_default_str();
  build_cmd->add_option("--max-components", max_components, "endpoint GMM size limit")->capture_default_str();
  auto* sample_cmd = guide_cmd->add_subcommand("sample", "sample agents from a scenario");
  sample_cmd->add_option("scenario", scenario_path)->required();
  sample_cmd->add_option("--n", agents, "agent count")->capture_default_str();
  sample_cmd->add_option("--seed", seed, "random seed")->required();
  sample_cmd->add_option("--out", out);

  auto* synth_cmd = app.add_subcommand("synth", "generate labelled synthetic trajectories");
  synth_cmd->add_option("spec", input, "synthetic spec JSON")->required();
  synth_cmd->add_option("--seed", seed, "random seed")->required();
  synth_cmd->add_option("--out", out, "trajectory CSV")->required();
  synth_cmd->add_option("--labels", labels_out, "traj_id,flow CSV");

  auto* export_cmd = app.add_subcommand("export", "write plot series as CSV");
  export_cmd->add_option("model", model_path)->required();
  export_cmd->add_option("--kind", kind, "flow_weights, time_profiles, speed_profiles, prominence, "
                                         "time_speed_grid or anomaly_table")
      ->capture_default_str();
  export_cmd->add_option("--input", input, "trajectories, needed for anomaly_table");
  export_cmd->add_option("--quantile", quantile)->capture_default_str();
  export_cmd->add_option("--out", out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*fit_cmd) {
      cfg.seed = seed;
      validate_run_config(cfg);
      DatasetOptions o = dataset_options(cfg);
      o.bounds = parse_bounds(bounds);
      const Dataset d = load_trajectories(input, o);
      const ModelFile m = fit_model(d, cfg);
      save_model(m, out);
      json summary = {{"source", d.manifest.source},
                      {"trajectories", d.manifest.trajectories},
                      {"observations", d.manifest.observations},
                      {"rejected_rows", d.manifest.rejected_rows},
                      {"clamped", d.manifest.clamped},
                      {"segments", d.manifest.segments},
                      {"time_span", d.manifest.time_span},
                      {"flows", m.posterior.flow_count()},
                      {"time_modes", m.posterior.time_modes.size()},
                      {"speed_modes", m.posterior.speed_modes.size()},
                      {"sweeps", m.sweeps}};
      for (const auto& r : d.manifest.rejections) std::cerr << "rejected " << r << "\n";
      std::cout << summary.dump() << "\n";
    } else if (*classify_cmd) {
      const ModelFile m = load_model(model_path);
      const Dataset d = load_for_model(m, input);
      std::vector<json> rows;
      for (const auto& a : classify_all(m.posterior, d.trajectories, m.posterior.codebook))
        rows.push_back({{"traj_id", a.traj_id},
                        {"flow", a.flow},
                        {"probabilities", a.probabilities},
                        {"space_ll", a.space_log_likelihood},
                        {"time_ll", a.time_log_likelihood},
                        {"speed_ll", a.speed_log_likelihood}});
      emit(out, lines(rows));
    } else if (*anomaly_cmd) {
      const ModelFile m = load_model(model_path);
      const Dataset d = load_for_model(m, input);
      std::vector<json> rows;
      for (const auto& r : anomaly_scores(m.posterior, d.trajectories, m.posterior.codebook, quantile))
        rows.push_back({{"traj_id", r.traj_id},
                        {"score", r.score},
                        {"flagged", r.flagged},
                        {"barycentric", {r.b_space, r.b_time, r.b_speed}}});
      emit(out, lines(rows));
    } else if (*al_cmd) {
      const ModelFile m = load_model(model_path);
      const Dataset d = load_for_model(m, input);
      std::vector<Observation> obs;
      for (const auto& t : d.trajectories) obs.insert(obs.end(), t.observations.begin(), t.observations.end());
      std::vector<json> rows;
      for (AlVariant v : kAllAlVariants) {
        if (variant != "all" && variant != to_string(v)) continue;
        rows.push_back({{"metric", "al"}, {"variant", to_string(v)}, {"score", al_metric(v, obs, m.posterior)}});
      }
      if (rows.empty()) throw InvalidInput("unknown AL variant '" + variant + "'");
      emit(out, lines(rows));
    } else if (*dpd_cmd) {
      const ModelFile a = load_model(model_path);
      const ModelFile b = load_model(model_b);
      std::vector<DpdVariant> vs;
      for (DpdVariant v : {DpdVariant::Space, DpdVariant::Time, DpdVariant::Speed, DpdVariant::TimeSpeed})
        if (variant == "all" || variant == to_string(v)) vs.push_back(v);
      if (vs.empty()) throw InvalidInput("unknown DPD variant '" + variant + "'");
      const FlowMatching match = match_flows(a.posterior, b.posterior);
      std::vector<json> rows;
      for (const auto& pr : match.pairs) {
        json r = {{"flow_a", pr.flow_a}, {"flow_b", pr.flow_b}};
        for (DpdVariant v : vs) r[to_string(v)] = dpd({pr.flow_a, pr.flow_b, v}, a.posterior, b.posterior, cfg.quadrature);
        rows.push_back(r);
      }
      rows.push_back({{"unmatched_a", match.unmatched_a}, {"unmatched_b", match.unmatched_b}});
      emit(out, lines(rows));
    } else if (*build_cmd) {
      const ModelFile m = load_model(model_path);
      const Dataset d = load_for_model(m, input);
      GuidanceConfig gc;
      gc.min_trajectories = min_traj;
      gc.gmm.max_components = max_components;
      const auto assignments = classify_all(m.posterior, d.trajectories, m.posterior.codebook);
      const GuidanceScenario sc = build_scenario(m.posterior, d.trajectories, assignments, gc);
      save_scenario(sc, out);
      std::vector<json> rows;
      for (const auto& f : sc.flows)
        rows.push_back({{"posterior_flow", f.posterior_flow},
                        {"weight", f.weight},
                        {"trajectories", f.trajectories},
                        {"start_components", f.start.size()},
                        {"destination_components", f.destination.size()},
                        {"straight_line_fallback", f.straight_line_fallback}});
      std::cout << lines(rows);
    } else if (*sample_cmd) {
      const GuidanceScenario sc = load_scenario(scenario_path);
      Rng rng(seed);
      emit(out, serialize_agents(sample_agents(sc, agents, rng)));
    } else if (*synth_cmd) {
      SyntheticSpec spec = parse_synthetic_spec(read_file(input));
      spec.seed = seed;
      const SyntheticData data = generate_synthetic(spec);
      std::ostringstream csv;
      write_trajectory_csv(csv, data.trajectories);
      write_file(out, csv.str());
      if (!labels_out.empty()) {
        std::string s = "traj_id,flow\n";
        for (std::size_t i = 0; i < data.trajectories.size(); ++i)
          s += data.trajectories[i].id + "," + std::to_string(data.labels[i]) + "\n";
        write_file(labels_out, s);
      }
    } else if (*export_cmd) {
      const ModelFile m = load_model(model_path);
      ExportOptions eo;
      std::vector<AnomalyReport> reports;
      if (kind == "anomaly_table") {
        if (input.empty()) throw InvalidInput("anomaly_table needs --input");
        const Dataset d = load_for_model(m, input);
        reports = anomaly_scores(m.posterior, d.trajectories, m.posterior.codebook, quantile);
        eo.anomalies = &reports;
      }
      std::ostringstream s;
      export_plot_series(m.posterior, kind, s, eo);
      emit(out, s.str());
    }
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ConsistencyError& e) {
    std::cerr << "consistency failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal failure: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
