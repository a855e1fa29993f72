// Apache License, Version 2.0, refer to LICENSE.txt

#include "thdp/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "thdp/error.hpp"
#include "thdp/random.hpp"

namespace thdp {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

void reject(RawRead& r, std::size_t line, const std::string& why) {
  ++r.rejected_rows;
  r.rejections.push_back("line " + std::to_string(line) + ": " + why);
}

Rect data_bounds(const std::vector<RawTrajectory>& trajs) {
  Rect b{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
         -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& t : trajs)
    for (const auto& p : t.points) {
      b.min_x = std::min(b.min_x, p.x);
      b.min_y = std::min(b.min_y, p.y);
      b.max_x = std::max(b.max_x, p.x);
      b.max_y = std::max(b.max_y, p.y);
    }
  if (b.max_x - b.min_x <= 0.0) b.min_x -= 0.5, b.max_x += 0.5;
  if (b.max_y - b.min_y <= 0.0) b.min_y -= 0.5, b.max_y += 0.5;
  return b;
}

bool inside(const Rect& b, double x, double y) {
  return x >= b.min_x && x <= b.max_x && y >= b.min_y && y <= b.max_y;
}

void subsample(std::vector<RawTrajectory>& trajs, std::size_t keep, std::uint64_t seed) {
  if (keep == 0 || keep >= trajs.size()) return;
  Rng rng(seed);
  auto idx = sample_without_replacement(trajs.size(), keep, rng);
  std::sort(idx.begin(), idx.end());
  std::vector<RawTrajectory> out;
  out.reserve(keep);
  for (auto i : idx) out.push_back(std::move(trajs[i]));
  trajs = std::move(out);
}

void finish_manifest(Dataset& d, const Codebook& cb, int segments, const std::string& source) {
  d.manifest.source = source;
  d.manifest.codebook = cb;
  d.manifest.segments = segments;
  d.manifest.trajectories = d.trajectories.size();
  d.manifest.observations = observation_count(d.trajectories);
  d.manifest.time_span = segment_into_groups(d.trajectories, segments);
}

}  // namespace

RawRead read_trajectory_csv(std::istream& in) {
  RawRead r;
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    ++lineno;
    if (!trim(line).empty()) header = split_csv(line);
  }
  int col[4] = {-1, -1, -1, -1};
  const char* names[4] = {"traj_id", "t", "x", "y"};
  for (int i = 0; i < static_cast<int>(header.size()); ++i)
    for (int k = 0; k < 4; ++k)
      if (header[i] == names[k]) col[k] = i;
  for (int k = 0; k < 4; ++k)
    if (col[k] < 0) throw InvalidInput(std::string("CSV header lacks column '") + names[k] + "'");
  const std::size_t width = header.size();

  std::map<std::string, RawTrajectory> byid;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    ++r.rows;
    const auto f = split_csv(line);
    if (f.size() != width) {
      reject(r, lineno, "expected " + std::to_string(width) + " fields, got " + std::to_string(f.size()));
      continue;
    }
    const std::string& id = f[col[0]];
    RawPoint p;
    if (id.empty()) {
      reject(r, lineno, "empty traj_id");
      continue;
    }
    if (!parse_double(f[col[1]], p.t) || !parse_double(f[col[2]], p.x) || !parse_double(f[col[3]], p.y)) {
      reject(r, lineno, "non-numeric t, x or y");
      continue;
    }
    auto& tr = byid[id];
    tr.id = id;
    if (!tr.points.empty() && !(p.t > tr.points.back().t)) {
      reject(r, lineno, "timestamp does not increase within trajectory " + id);
      continue;
    }
    tr.points.push_back(p);
  }
  for (auto& [id, tr] : byid) r.trajectories.push_back(std::move(tr));
  return r;
}

Dataset prepare_dataset(RawRead raw, const DatasetOptions& opts, const std::string& source) {
  if (opts.segments < 1) throw InvalidInput("segment count must be >= 1");
  Dataset d;
  d.manifest.rejected_rows = raw.rejected_rows;
  d.manifest.rejections = std::move(raw.rejections);

  std::vector<RawTrajectory> trajs;
  for (auto& t : raw.trajectories) {
    if (t.points.size() < 2) {
      ++d.manifest.rejected_rows;
      d.manifest.rejections.push_back("trajectory " + t.id + ": " + std::to_string(t.points.size()) +
                                      " point(s), need at least 2");
      continue;
    }
    trajs.push_back(std::move(t));
  }
  subsample(trajs, opts.max_trajectories, opts.sample_seed);
  if (trajs.empty()) throw InvalidInput("no usable trajectories");

  double origin = std::numeric_limits<double>::infinity();
  for (const auto& t : trajs) origin = std::min(origin, t.points.front().t);
  origin = opts.time_origin.value_or(origin);
  for (auto& t : trajs)
    for (auto& p : t.points) p.t -= origin;
  d.manifest.time_origin = origin;

  const Rect bounds = opts.bounds.value_or(data_bounds(trajs));
  const Codebook cb = build_codebook(opts.rows, opts.cols, bounds, opts.static_threshold);
  for (const auto& raw_t : trajs) {
    Trajectory t = estimate_velocities(raw_t, opts.velocity_window);
    if (opts.out_of_bounds == OutOfBounds::Reject) {
      const auto before = t.observations.size();
      std::erase_if(t.observations, [&](const Observation& o) { return !inside(bounds, o.x, o.y); });
      const auto dropped = before - t.observations.size();
      if (dropped > 0) {
        d.manifest.rejected_rows += dropped;
        d.manifest.rejections.push_back("trajectory " + t.id + ": " + std::to_string(dropped) +
                                        " point(s) out of bounds");
      }
      if (t.observations.empty()) continue;
    }
    d.manifest.clamped += tokenize_trajectory(t, cb, OutOfBounds::Clamp);
    d.trajectories.push_back(std::move(t));
  }
  if (d.trajectories.empty()) throw InvalidInput("no usable trajectories");
  finish_manifest(d, cb, opts.segments, source);
  return d;
}

Dataset read_tokenized_jsonl(std::istream& in, const DatasetOptions& opts, const std::string& source) {
  if (!opts.bounds) throw InvalidInput("pre-tokenised input needs explicit scene bounds");
  if (opts.segments < 1) throw InvalidInput("segment count must be >= 1");
  const Codebook cb = build_codebook(opts.rows, opts.cols, *opts.bounds, opts.static_threshold);
  Dataset d;
  std::map<std::string, Trajectory> byid;
  std::string line;
  std::size_t lineno = 0;
  auto bad = [&](const std::string& why) {
    ++d.manifest.rejected_rows;
    d.manifest.rejections.push_back("line " + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      bad("not valid JSON");
      continue;
    }
    if (!j.is_object() || !j.contains("traj_id") || !j.contains("t") || !j.contains("cell") ||
        !j.contains("speed") || !j["t"].is_number() || !j["cell"].is_number_unsigned() ||
        !j["speed"].is_number()) {
      bad("missing or mistyped traj_id, t, cell or speed");
      continue;
    }
    const std::string id = j["traj_id"].is_string() ? j["traj_id"].get<std::string>() : j["traj_id"].dump();
    Observation o;
    o.time = j["t"].get<double>();
    o.speed = j["speed"].get<double>();
    const auto cell = j["cell"].get<std::uint64_t>();
    if (cell >= cb.vocabulary()) {
      bad("cell outside the codebook");
      continue;
    }
    if (!(o.speed >= 0.0) || !std::isfinite(o.time)) {
      bad("negative speed or non-finite time");
      continue;
    }
    o.cell = static_cast<Cell>(cell);
    o.x = j.value("x", 0.0);
    o.y = j.value("y", 0.0);
    auto& tr = byid[id];
    tr.id = id;
    if (!tr.observations.empty() && o.time < tr.observations.back().time) {
      bad("timestamp decreases within trajectory " + id);
      continue;
    }
    tr.observations.push_back(o);
  }
  std::vector<std::pair<std::string, Trajectory>> items(byid.begin(), byid.end());
  if (opts.max_trajectories > 0 && opts.max_trajectories < items.size()) {
    Rng rng(opts.sample_seed);
    auto idx = sample_without_replacement(items.size(), opts.max_trajectories, rng);
    std::sort(idx.begin(), idx.end());
    std::vector<std::pair<std::string, Trajectory>> kept;
    for (auto i : idx) kept.push_back(std::move(items[i]));
    items = std::move(kept);
  }
  double origin = std::numeric_limits<double>::infinity();
  for (const auto& [id, t] : items) origin = std::min(origin, t.observations.front().time);
  origin = opts.time_origin.value_or(origin);
  for (auto& [id, t] : items) {
    for (auto& o : t.observations) o.time -= origin;
    d.trajectories.push_back(std::move(t));
  }
  if (d.trajectories.empty()) throw InvalidInput("no usable trajectories");
  d.manifest.time_origin = origin;
  finish_manifest(d, cb, opts.segments, source);
  return d;
}

Dataset load_trajectories(const std::string& path, const DatasetOptions& opts) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path);
  auto ends_with = [&](const std::string& suf) {
    return path.size() >= suf.size() && path.compare(path.size() - suf.size(), suf.size(), suf) == 0;
  };
  if (ends_with(".jsonl")) return read_tokenized_jsonl(in, opts, path);
  return prepare_dataset(read_trajectory_csv(in), opts, path);
}

double segment_into_groups(std::vector<Trajectory>& trajs, int segments) {
  if (segments < 1) throw InvalidInput("segment count must be >= 1");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& t : trajs)
    for (const auto& o : t.observations) {
      lo = std::min(lo, o.time);
      hi = std::max(hi, o.time);
    }
  if (!(hi >= lo)) return 0.0;
  const double span = hi - lo;
  const double width = span / segments;
  for (auto& t : trajs)
    for (auto& o : t.observations) {
      int g = width > 0.0 ? static_cast<int>(std::floor((o.time - lo) / width)) : 0;
      o.group = std::clamp(g, 0, segments - 1);
    }
  return span;
}

namespace {

std::array<double, 2> along(const std::vector<std::array<double, 2>>& path,
                            const std::vector<double>& cum, double s) {
  if (s <= 0.0) return path.front();
  for (std::size_t i = 1; i < path.size(); ++i) {
    if (s <= cum[i] || i + 1 == path.size()) {
      const double seg = cum[i] - cum[i - 1];
      const double u = seg > 0.0 ? std::min(1.0, (s - cum[i - 1]) / seg) : 1.0;
      return {path[i - 1][0] + u * (path[i][0] - path[i - 1][0]),
              path[i - 1][1] + u * (path[i][1] - path[i - 1][1])};
    }
  }
  return path.back();
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  if (spec.flows.empty()) throw InvalidInput("synthetic spec has no flows");
  if (!(spec.frame_interval > 0.0)) throw InvalidInput("frame interval must be > 0");
  Rng rng(spec.seed);
  SyntheticData out;
  for (std::size_t f = 0; f < spec.flows.size(); ++f) {
    const SyntheticFlow& flow = spec.flows[f];
    if (flow.path.size() < 2) throw InvalidInput("a flow path needs at least two waypoints");
    std::vector<double> cum{0.0};
    for (std::size_t i = 1; i < flow.path.size(); ++i)
      cum.push_back(cum.back() + std::hypot(flow.path[i][0] - flow.path[i - 1][0],
                                            flow.path[i][1] - flow.path[i - 1][1]));
    const double length = cum.back();
    if (!(length > 0.0)) throw InvalidInput("a flow path has zero length");
    for (int n = 0; n < flow.trajectories; ++n) {
      const double entry = std::max(0.0, sample_normal(flow.time_mean, flow.time_sd, rng));
      double speed;
      do speed = sample_normal(flow.speed_mean, flow.speed_sd, rng);
      while (speed < spec.min_speed);
      const double duration = length / speed;
      RawTrajectory tr;
      tr.id = "f" + std::to_string(f) + "_" + std::to_string(n);
      auto emit = [&](double dt) {
        auto p = along(flow.path, cum, speed * dt);
        if (spec.position_noise > 0.0) {
          p[0] += sample_normal(0.0, spec.position_noise, rng);
          p[1] += sample_normal(0.0, spec.position_noise, rng);
        }
        tr.points.push_back({entry + dt, p[0], p[1]});
      };
      const int steps = static_cast<int>(std::floor(duration / spec.frame_interval));
      for (int i = 0; i <= steps; ++i) emit(i * spec.frame_interval);
      if (duration - steps * spec.frame_interval > 1e-9 * spec.frame_interval) emit(duration);
      out.trajectories.push_back(std::move(tr));
      out.labels.push_back(static_cast<int>(f));
    }
  }
  return out;
}

void write_trajectory_csv(std::ostream& out, const std::vector<RawTrajectory>& trajs) {
  out << "traj_id,t,x,y\n";
  for (const auto& t : trajs)
    for (const auto& p : t.points)
      out << t.id << ',' << format_double(p.t) << ',' << format_double(p.x) << ','
          << format_double(p.y) << '\n';
}

}  // namespace thdp
