// Apache License, Version 2.0, refer to LICENSE.txt

#include "thdp/io.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "thdp/error.hpp"
#include "thdp/metrics.hpp"

namespace thdp {

using nlohmann::json;

namespace {

json to_json(const Codebook& c) {
  return {{"rows", c.rows},
          {"cols", c.cols},
          {"bounds", {c.bounds.min_x, c.bounds.min_y, c.bounds.max_x, c.bounds.max_y}},
          {"static_speed_threshold", c.static_speed_threshold}};
}

Codebook codebook_from(const json& j) {
  Codebook c;
  c.rows = j.at("rows").get<std::uint32_t>();
  c.cols = j.at("cols").get<std::uint32_t>();
  const auto b = j.at("bounds").get<std::vector<double>>();
  if (b.size() != 4) throw InvalidInput("codebook bounds need four numbers");
  c.bounds = {b[0], b[1], b[2], b[3]};
  c.static_speed_threshold = j.at("static_speed_threshold").get<double>();
  return c;
}

json to_json(const std::vector<GaussianMode>& modes) {
  json a = json::array();
  for (const auto& m : modes) a.push_back({m.mean, m.variance});
  return a;
}

std::vector<GaussianMode> modes_from(const json& j) {
  std::vector<GaussianMode> out;
  for (const auto& e : j) {
    const auto v = e.get<std::vector<double>>();
    if (v.size() != 2) throw InvalidInput("a Gaussian mode needs mean and variance");
    out.push_back({v[0], v[1]});
  }
  return out;
}

json to_json(const ThdpPosterior& p) {
  json flows = json::array();
  for (const Flow& f : p.flows) {
    json cells = json::array();
    for (const auto& [c, pr] : f.cells.entries) cells.push_back({c, pr});
    flows.push_back({{"weight", f.weight},
                     {"vocabulary", f.cells.vocabulary},
                     {"background", f.cells.background},
                     {"cells", cells},
                     {"time_weights", f.time_weights},
                     {"speed_weights", f.speed_weights}});
  }
  return {{"codebook", to_json(p.codebook)},
          {"flows", flows},
          {"time_modes", to_json(p.time_modes)},
          {"time_mode_weights", p.time_mode_weights},
          {"speed_modes", to_json(p.speed_modes)},
          {"speed_mode_weights", p.speed_mode_weights},
          {"unseen_weight", p.unseen_weight},
          {"pruned_weight", p.pruned_weight}};
}

ThdpPosterior posterior_from(const json& j) {
  ThdpPosterior p;
  p.codebook = codebook_from(j.at("codebook"));
  for (const auto& f : j.at("flows")) {
    Flow fl;
    fl.weight = f.at("weight").get<double>();
    fl.cells.vocabulary = f.at("vocabulary").get<std::uint32_t>();
    fl.cells.background = f.at("background").get<double>();
    for (const auto& e : f.at("cells"))
      fl.cells.entries.emplace_back(e.at(0).get<Cell>(), e.at(1).get<double>());
    fl.time_weights = f.at("time_weights").get<std::vector<double>>();
    fl.speed_weights = f.at("speed_weights").get<std::vector<double>>();
    p.flows.push_back(std::move(fl));
  }
  p.time_modes = modes_from(j.at("time_modes"));
  p.time_mode_weights = j.at("time_mode_weights").get<std::vector<double>>();
  p.speed_modes = modes_from(j.at("speed_modes"));
  p.speed_mode_weights = j.at("speed_mode_weights").get<std::vector<double>>();
  p.unseen_weight = j.at("unseen_weight").get<double>();
  p.pruned_weight = j.at("pruned_weight").get<double>();
  return p;
}

json to_json(const RunConfig& c) {
  return {{"grid_rows", c.grid_rows},
          {"grid_cols", c.grid_cols},
          {"segments", c.segments},
          {"burn_in", c.burn_in},
          {"max_iters", c.max_iters},
          {"seed", c.seed},
          {"customer_selection", c.customer_selection},
          {"hyper_prior", {c.hyper_prior.shape, c.hyper_prior.rate}},
          {"initial_concentration", c.initial_concentration},
          {"prune", c.prune},
          {"quadrature", c.quadrature},
          {"eta", c.eta},
          {"static_threshold", c.static_threshold},
          {"max_trajectories", c.max_trajectories},
          {"early_stop", c.early_stop}};
}

RunConfig run_config_from(const json& j) {
  RunConfig c;
  c.grid_rows = j.at("grid_rows").get<std::uint32_t>();
  c.grid_cols = j.at("grid_cols").get<std::uint32_t>();
  c.segments = j.at("segments").get<int>();
  c.burn_in = j.at("burn_in").get<int>();
  c.max_iters = j.at("max_iters").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.customer_selection = j.at("customer_selection").get<int>();
  c.hyper_prior = {j.at("hyper_prior").at(0).get<double>(), j.at("hyper_prior").at(1).get<double>()};
  c.initial_concentration = j.at("initial_concentration").get<double>();
  c.prune = j.at("prune").get<double>();
  c.quadrature = j.at("quadrature").get<std::size_t>();
  c.eta = j.at("eta").get<double>();
  c.static_threshold = j.at("static_threshold").get<double>();
  c.max_trajectories = j.at("max_trajectories").get<std::size_t>();
  c.early_stop = j.at("early_stop").get<bool>();
  return c;
}

template <class M>
json matrix_json(const M& m) {
  json a = json::array();
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) a.push_back(m(r, c));
  return a;
}

template <class M>
M matrix_from(const json& j) {
  M m;
  if (j.size() != static_cast<std::size_t>(m.size())) throw InvalidInput("matrix has the wrong number of entries");
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) m(r, c) = j.at(r * m.cols() + c).template get<double>();
  return m;
}

json to_json(const Gmm2& g) {
  json means = json::array(), covs = json::array();
  for (const auto& m : g.means) means.push_back({m.x(), m.y()});
  for (const auto& c : g.covariances) covs.push_back(matrix_json(c));
  return {{"weights", g.weights}, {"means", means}, {"covariances", covs}, {"bic", g.bic}};
}

Gmm2 gmm_from(const json& j) {
  Gmm2 g;
  g.weights = j.at("weights").get<std::vector<double>>();
  for (const auto& m : j.at("means")) g.means.emplace_back(m.at(0).get<double>(), m.at(1).get<double>());
  for (const auto& c : j.at("covariances")) g.covariances.push_back(matrix_from<Eigen::Matrix2d>(c));
  g.bic = j.at("bic").get<double>();
  if (g.means.size() != g.weights.size() || g.covariances.size() != g.weights.size())
    throw InvalidInput("GMM component lists differ in length");
  return g;
}

json envelope(const char* format, json body) {
  body["format"] = format;
  body["version"] = kModelFormatVersion;
  return body;
}

json parse_envelope(const std::string& text, const char* format) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("corrupt ") + format + " file: " + e.what());
  }
  if (!j.is_object() || !j.contains("format") || j["format"] != format)
    throw InvalidInput(std::string("not a ") + format + " file");
  if (!j.contains("version") || !j["version"].is_number_integer())
    throw InvalidInput(std::string("corrupt ") + format + " file: missing version");
  if (j["version"].get<int>() != kModelFormatVersion)
    throw InvalidInput(std::string(format) + " version " + j["version"].dump() + " is not supported (expected " +
                       std::to_string(kModelFormatVersion) + ")");
  return j;
}

template <class F>
auto guarded(const char* format, F f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("corrupt ") + format + " file: " + e.what());
  }
}

void csv_row(std::ostream& out, std::initializer_list<std::string> cells) {
  bool first = true;
  for (const auto& c : cells) {
    if (!first) out << ',';
    out << c;
    first = false;
  }
  out << '\n';
}

std::string num(double v) {
  std::ostringstream s;
  s.precision(12);
  s << v;
  return s.str();
}

std::vector<double> profile_grid(const std::vector<GaussianMode>& modes, std::size_t points) {
  const std::vector<double> ones(modes.size(), 1.0);
  return union_grid(ones, modes, ones, modes, points);
}

}  // namespace

void validate_run_config(const RunConfig& c) {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw InvalidInput(std::string("config: ") + what);
  };
  need(c.grid_rows > 0 && c.grid_cols > 0, "grid rows and cols must be positive");
  need(c.segments >= 1, "segments must be >= 1");
  need(c.burn_in >= 0, "burn-in must be >= 0");
  need(c.max_iters >= 1, "iters must be >= 1");
  need(c.customer_selection >= 1, "customer selection must be >= 1");
  need(c.hyper_prior.shape > 0 && c.hyper_prior.rate > 0, "hyper-prior shape and rate must be positive");
  need(c.initial_concentration > 0, "initial concentration must be positive");
  need(c.prune >= 0 && c.prune < 1, "prune threshold must lie in [0, 1)");
  need(c.quadrature >= 2, "quadrature needs at least two points");
  need(c.eta > 0, "eta must be positive");
  need(c.static_threshold >= 0, "static threshold must be >= 0");
}

DatasetOptions dataset_options(const RunConfig& c) {
  DatasetOptions o;
  o.rows = c.grid_rows;
  o.cols = c.grid_cols;
  o.segments = c.segments;
  o.static_threshold = c.static_threshold;
  o.max_trajectories = c.max_trajectories;
  o.sample_seed = c.seed;
  return o;
}

FitConfig fit_config(const RunConfig& c) {
  FitConfig f;
  f.burn_in = c.burn_in;
  f.max_iters = c.max_iters;
  f.early_stop = c.early_stop;
  f.eta = c.eta;
  f.hypers = HyperParams::with_defaults(c.initial_concentration, c.hyper_prior);
  f.hypers.customer_selection = c.customer_selection;
  return f;
}

ModelFile fit_model(const Dataset& d, const RunConfig& c) {
  validate_run_config(c);
  const ThdpData data = make_thdp_data(d.trajectories, d.manifest.codebook);
  Rng rng(c.seed);
  FitResult r = fit(data, d.manifest.codebook, fit_config(c), rng);
  ModelFile m;
  m.posterior = c.prune > 0.0 ? prune_flows(r.posterior, c.prune) : r.posterior;
  m.config = c;
  m.source = d.manifest.source;
  m.time_origin = d.manifest.time_origin;
  m.observations = d.manifest.observations;
  m.trajectories = d.manifest.trajectories;
  m.sweeps = r.sweeps;
  return m;
}

DatasetOptions dataset_options_for(const ModelFile& m) {
  DatasetOptions o;
  o.rows = m.posterior.codebook.rows;
  o.cols = m.posterior.codebook.cols;
  o.bounds = m.posterior.codebook.bounds;
  o.static_threshold = m.posterior.codebook.static_speed_threshold;
  o.time_origin = m.time_origin;
  return o;
}

std::string serialize_model(const ModelFile& m) {
  json body = {{"posterior", to_json(m.posterior)},
               {"source", m.source},
               {"time_origin", m.time_origin},
               {"observations", m.observations},
               {"trajectories", m.trajectories},
               {"sweeps", m.sweeps}};
  if (m.config) body["config"] = to_json(*m.config);
  return envelope("thdp-model", body).dump() + "\n";
}

ModelFile parse_model(const std::string& text) {
  const json j = parse_envelope(text, "thdp-model");
  return guarded("thdp-model", [&] {
    ModelFile m;
    m.posterior = posterior_from(j.at("posterior"));
    m.source = j.at("source").get<std::string>();
    m.time_origin = j.at("time_origin").get<double>();
    m.observations = j.at("observations").get<std::size_t>();
    m.trajectories = j.at("trajectories").get<std::size_t>();
    m.sweeps = j.at("sweeps").get<int>();
    if (j.contains("config")) m.config = run_config_from(j.at("config"));
    validate_posterior(m.posterior);
    return m;
  });
}

void save_model(const ModelFile& m, const std::string& path) { write_file(path, serialize_model(m)); }
ModelFile load_model(const std::string& path) { return parse_model(read_file(path)); }

std::string serialize_scenario(const GuidanceScenario& s) {
  json flows = json::array();
  for (const auto& f : s.flows) {
    json e = {{"posterior_flow", f.posterior_flow},
              {"weight", f.weight},
              {"start", to_json(f.start)},
              {"destination", to_json(f.destination)},
              {"time_weights", f.time_weights},
              {"speed_weights", f.speed_weights},
              {"straight_line_fallback", f.straight_line_fallback},
              {"trajectories", f.trajectories}};
    if (f.dynamics) e["dynamics"] = {{"B", matrix_json(f.dynamics->B)}, {"Lambda", matrix_json(f.dynamics->Lambda)}};
    flows.push_back(std::move(e));
  }
  json body = {{"flows", flows},
               {"time_modes", to_json(s.time_modes)},
               {"speed_modes", to_json(s.speed_modes)},
               {"horizon", s.horizon},
               {"frame_interval", s.frame_interval},
               {"observation_noise", kObservationNoise}};
  return envelope("thdp-scenario", body).dump() + "\n";
}

GuidanceScenario parse_scenario(const std::string& text) {
  const json j = parse_envelope(text, "thdp-scenario");
  return guarded("thdp-scenario", [&] {
    GuidanceScenario s;
    for (const auto& e : j.at("flows")) {
      ScenarioFlow f;
      f.posterior_flow = e.at("posterior_flow").get<std::size_t>();
      f.weight = e.at("weight").get<double>();
      f.start = gmm_from(e.at("start"));
      f.destination = gmm_from(e.at("destination"));
      f.time_weights = e.at("time_weights").get<std::vector<double>>();
      f.speed_weights = e.at("speed_weights").get<std::vector<double>>();
      f.straight_line_fallback = e.at("straight_line_fallback").get<bool>();
      f.trajectories = e.at("trajectories").get<std::size_t>();
      if (e.contains("dynamics"))
        f.dynamics = FlowDynamics{matrix_from<Mat3>(e["dynamics"].at("B")), matrix_from<Mat3>(e["dynamics"].at("Lambda"))};
      s.flows.push_back(std::move(f));
    }
    s.time_modes = modes_from(j.at("time_modes"));
    s.speed_modes = modes_from(j.at("speed_modes"));
    s.horizon = j.at("horizon").get<double>();
    s.frame_interval = j.at("frame_interval").get<double>();
    for (const auto& f : s.flows)
      if (f.time_weights.size() != s.time_modes.size() || f.speed_weights.size() != s.speed_modes.size())
        throw InvalidInput("scenario profile sizes disagree with the mode lists");
    return s;
  });
}

void save_scenario(const GuidanceScenario& s, const std::string& path) { write_file(path, serialize_scenario(s)); }
GuidanceScenario load_scenario(const std::string& path) { return parse_scenario(read_file(path)); }

SyntheticSpec parse_synthetic_spec(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("synthetic spec is not valid JSON: ") + e.what());
  }
  return guarded("synthetic spec", [&] {
    SyntheticSpec s;
    for (const auto& f : j.at("flows")) {
      SyntheticFlow fl;
      for (const auto& p : f.at("path")) fl.path.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      fl.time_mean = f.at("time_mean").get<double>();
      fl.time_sd = f.value("time_sd", fl.time_sd);
      fl.speed_mean = f.at("speed_mean").get<double>();
      fl.speed_sd = f.value("speed_sd", fl.speed_sd);
      fl.trajectories = f.value("trajectories", fl.trajectories);
      s.flows.push_back(std::move(fl));
    }
    s.position_noise = j.value("position_noise", s.position_noise);
    s.frame_interval = j.value("frame_interval", s.frame_interval);
    s.min_speed = j.value("min_speed", s.min_speed);
    if (s.flows.empty()) throw InvalidInput("synthetic spec has no flows");
    return s;
  });
}

std::string serialize_agents(const std::vector<AgentSpec>& agents) {
  json a = json::array();
  for (const auto& ag : agents) {
    json path = json::array();
    for (const auto& p : ag.path) path.push_back({p.x(), p.y()});
    a.push_back({{"flow", ag.flow},
                 {"start", {ag.start.x(), ag.start.y()}},
                 {"destination", {ag.destination.x(), ag.destination.y()}},
                 {"entry_time", ag.entry_time},
                 {"desired_speed", ag.desired_speed},
                 {"path", path}});
  }
  return json{{"agents", a}}.dump() + "\n";
}

void export_plot_series(const ThdpPosterior& p, const std::string& kind, std::ostream& out,
                        const ExportOptions& opts) {
  const std::size_t K = p.flow_count();
  if (kind == "flow_weights") {
    csv_row(out, {"flow", "weight"});
    for (std::size_t k = 0; k < K; ++k) csv_row(out, {std::to_string(k), num(p.flows[k].weight)});
  } else if (kind == "time_profiles" || kind == "speed_profiles") {
    const bool time = kind == "time_profiles";
    if (time ? !p.has_time() : !p.has_speed()) throw InvalidInput("posterior has no " + kind);
    const auto grid = profile_grid(time ? p.time_modes : p.speed_modes, opts.grid_points);
    csv_row(out, {"flow", time ? "t" : "speed", "density"});
    for (std::size_t k = 0; k < K; ++k)
      for (double x : grid) {
        const double d = time ? flow_time_log_density(p, k, x) : flow_speed_log_density(p, k, x);
        csv_row(out, {std::to_string(k), num(x), num(p.flows[k].weight * std::exp(d))});
      }
  } else if (kind == "prominence") {
    if (!p.has_time()) throw InvalidInput("posterior has no time profiles");
    if (opts.windows < 1) throw InvalidInput("prominence needs at least one window");
    const auto grid = profile_grid(p.time_modes, 2);
    const double lo = grid.front(), hi = grid.back();
    csv_row(out, {"t_lo", "t_hi", "flow", "weight"});
    for (std::size_t w = 0; w < opts.windows; ++w) {
      const double a = lo + (hi - lo) * static_cast<double>(w) / opts.windows;
      const double b = lo + (hi - lo) * static_cast<double>(w + 1) / opts.windows;
      std::vector<double> weights(K, 0.0);
      try {
        weights = flow_prominence(p, ProfileDimension::Time, a, b);
      } catch (const InvalidInput&) {
        // no flow active in this window
      }
      for (std::size_t k = 0; k < K; ++k) csv_row(out, {num(a), num(b), std::to_string(k), num(weights[k])});
    }
  } else if (kind == "time_speed_grid") {
    if (!p.has_time() || !p.has_speed()) throw InvalidInput("posterior lacks time or speed profiles");
    const auto tg = profile_grid(p.time_modes, opts.surface_points);
    const auto vg = profile_grid(p.speed_modes, opts.surface_points);
    csv_row(out, {"flow", "t", "speed", "density"});
    for (std::size_t k = 0; k < K; ++k) {
      const auto m = time_speed_profile(p, k, tg, vg);
      for (std::size_t i = 0; i < tg.size(); ++i)
        for (std::size_t j = 0; j < vg.size(); ++j) csv_row(out, {std::to_string(k), num(tg[i]), num(vg[j]), num(m[i][j])});
    }
  } else if (kind == "anomaly_table") {
    if (!opts.anomalies) throw InvalidInput("anomaly_table needs scored trajectories");
    csv_row(out, {"traj_id", "score", "flagged", "b_space", "b_time", "b_speed"});
    for (const auto& r : *opts.anomalies)
      csv_row(out, {r.traj_id, num(r.score), r.flagged ? "1" : "0", num(r.b_space), num(r.b_time), num(r.b_speed)});
  } else {
    throw InvalidInput("unknown export kind '" + kind + "'");
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot write " + path);
  out << text;
  if (!out) throw InvalidInput("failed writing " + path);
}

}  // namespace thdp
