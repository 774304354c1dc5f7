// Copyright 2026 The impc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "impc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace impc {
namespace {

constexpr double kDeg = 180.0 / std::numbers::pi;

double wrap(double a) { return std::remainder(a, 2.0 * std::numbers::pi); }

std::string fmt(double v) {
  if (!std::isfinite(v)) return "";
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("bad number \"" + s + "\"");
  return v;
}

std::string speed_label(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

}  // namespace

std::uint64_t trial_seed(std::uint64_t base, int trial) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(trial + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void check_scenario(const Scenario& s) {
  if (s.trials < 1) throw std::invalid_argument("scenario " + s.condition + ": trials must be >= 1");
  if (!(s.seconds >= 0.5)) {
    throw std::invalid_argument("scenario " + s.condition + ": seconds must be >= 0.5");
  }
}

bool operator==(const Summary& a, const Summary& b) {
  auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
  return a.count == b.count && same(a.mean, b.mean) && same(a.std, b.std) &&
         same(a.median, b.median);
}

Summary summarize(const std::vector<double>& values) {
  std::vector<double> v;
  for (double x : values) {
    if (std::isfinite(x)) v.push_back(x);
  }
  Summary s;
  s.count = static_cast<int>(v.size());
  if (v.empty()) {
    s.mean = s.std = s.median = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / v.size();
  double sq = 0.0;
  for (double x : v) sq += (x - s.mean) * (x - s.mean);
  s.std = v.size() > 1 ? std::sqrt(sq / (v.size() - 1)) : 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  s.median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  return s;
}

TrialMetrics compute_metrics(const std::vector<Vec3>& attitude, double dt, const Vec3& desired,
                             double band_deg, double steady_window) {
  if (attitude.empty()) throw std::invalid_argument("compute_metrics: empty trajectory");
  if (!(dt > 0.0)) throw std::invalid_argument("compute_metrics: dt must be positive");
  TrialMetrics m;
  const std::size_t n = attitude.size();
  const std::size_t tail =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(steady_window / dt)), 1, n);

  // Steady attitude, averaged relative to the last sample so yaw near +-pi
  // does not average to zero.
  Vec3 steady{};
  for (int a = 0; a < 3; ++a) {
    double sum = 0.0;
    for (std::size_t i = n - tail; i < n; ++i) sum += wrap(attitude[i][a] - attitude[n - 1][a]);
    steady[a] = attitude[n - 1][a] + sum / tail;
  }

  double sq = 0.0;
  for (const Vec3& x : attitude) {
    for (int a = 0; a < 3; ++a) {
      const double e = wrap(x[a] - desired[a]) * kDeg;
      sq += e * e;
    }
  }
  m.rmse_deg = std::sqrt(sq / (3.0 * n));

  double sse = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double e = wrap(steady[a] - desired[a]) * kDeg;
    sse += e * e;
  }
  m.sse_deg = std::sqrt(sse);

  // Last sample outside the band; settled from the next sample on.
  std::optional<std::size_t> last_out;
  for (std::size_t i = n; i-- > 0;) {
    double worst = 0.0;
    for (int a = 0; a < 3; ++a) worst = std::max(worst, std::abs(wrap(attitude[i][a] - steady[a])));
    if (!(worst * kDeg <= band_deg)) {
      last_out = i;
      break;
    }
  }
  if (!last_out) {
    m.settling_time = 0.0;
  } else if (*last_out + 1 < n) {
    m.settling_time = (*last_out + 1) * dt;
  }
  return m;
}

void MetricReport::aggregate() {
  std::vector<double> st, rmse_v, sse_v, imu;
  failures = 0;
  for (const TrialMetrics& t : trials) {
    if (t.failed) {
      ++failures;
      continue;
    }
    if (t.settling_time) st.push_back(*t.settling_time);
    rmse_v.push_back(t.rmse_deg);
    sse_v.push_back(t.sse_deg);
    imu.push_back(t.imu_rmse_rad);
  }
  settling_time = summarize(st);
  rmse = summarize(rmse_v);
  sse = summarize(sse_v);
  imu_rmse = summarize(imu);
}

GridResult run_grid(const Environment& env, const std::vector<Scenario>& scenarios,
                    const ModelSet& models, int threads) {
  struct Job {
    std::size_t scenario;
    int trial;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    check_scenario(scenarios[s]);
    if (!models.count(scenarios[s].method)) {
      throw std::invalid_argument("no model for method " + to_string(scenarios[s].method));
    }
    for (int t = 0; t < scenarios[s].trials; ++t) jobs.push_back({s, t});
  }

  std::vector<TrialMetrics> metrics(jobs.size());
  std::vector<std::vector<Vec3>> first_traces(scenarios.size());
  std::vector<double> trace_dt(scenarios.size(), env.plant.dt);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      const Scenario& sc = scenarios[jobs[j].scenario];
      const double a = sc.initial_attitude_deg / kDeg;
      EpisodeSpec spec;
      spec.initial_attitude = {a, a, a};
      spec.seconds = sc.seconds;
      spec.seed = trial_seed(sc.seed, jobs[j].trial);
      spec.wind = sc.wind;
      const EpisodeResult r = run_episode(env, models.at(sc.method), spec);
      TrialMetrics m = compute_metrics(r.attitude, r.plant_dt, {0.0, 0.0, 0.0});
      m.imu_rmse_rad = r.imu_rmse();
      if (r.diverged) {
        m.failed = true;
        m.failure = r.failure;
        m.settling_time.reset();
      }
      metrics[j] = std::move(m);
      if (jobs[j].trial == 0) {
        first_traces[jobs[j].scenario] = r.attitude;
        trace_dt[jobs[j].scenario] = r.plant_dt;
      }
    }
  };
  const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const int n = std::clamp(threads > 0 ? threads : hw, 1, static_cast<int>(std::max<std::size_t>(jobs.size(), 1)));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  GridResult out;
  std::size_t j = 0;
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    MetricReport rep;
    rep.method = to_string(scenarios[s].method);
    rep.condition = scenarios[s].condition;
    for (int t = 0; t < scenarios[s].trials; ++t) rep.trials.push_back(metrics[j++]);
    rep.aggregate();
    out.reports.push_back(std::move(rep));
    out.traces.push_back({to_string(scenarios[s].method), scenarios[s].condition, trace_dt[s],
                          std::move(first_traces[s])});
  }
  return out;
}

std::vector<Scenario> initial_condition_grid(int trials, std::uint64_t seed,
                                             const std::vector<double>& degrees) {
  std::vector<Scenario> out;
  for (double d : degrees) {
    for (Method m : kAllMethods) {
      Scenario s;
      s.method = m;
      s.condition = speed_label(d) + "deg";
      s.initial_attitude_deg = d;
      s.trials = trials;
      s.seed = seed;
      out.push_back(s);
    }
  }
  return out;
}

std::vector<Scenario> wind_grid(int trials, std::uint64_t seed, const std::vector<double>& speeds,
                                const WindEvent& base) {
  std::vector<Scenario> out;
  for (WindKind k : {WindKind::kImpulse, WindKind::kStep}) {
    for (double v : speeds) {
      for (Method m : kAllMethods) {
        Scenario s;
        s.method = m;
        s.condition = to_string(k) + " " + speed_label(v) + " m/s";
        s.initial_attitude_deg = 0.0;
        WindEvent w = base;
        w.kind = k;
        w.speed = v;
        s.wind = w;
        s.trials = trials;
        s.seed = seed;
        out.push_back(s);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Results files.

namespace {

const char* const kCsvHeader =
    "method,condition,trials,failures,st_mean,st_std,st_median,st_count,rmse_mean,rmse_std,"
    "rmse_median,sse_mean,sse_std,sse_median,imu_rmse_mean,imu_rmse_std,imu_rmse_median";

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cell);
      cell.clear();
    } else {
      cell += c;
    }
  }
  out.push_back(cell);
  return out;
}

nlohmann::json num(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

double num_from(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

nlohmann::json summary_json(const Summary& s) {
  return {{"count", s.count}, {"mean", num(s.mean)}, {"std", num(s.std)}, {"median", num(s.median)}};
}

Summary summary_from(const nlohmann::json& j) {
  return {j.at("count").get<int>(), num_from(j.at("mean")), num_from(j.at("std")),
          num_from(j.at("median"))};
}

void append_summary(std::ostream& out, const Summary& s, bool with_count) {
  out << ',' << fmt(s.mean) << ',' << fmt(s.std) << ',' << fmt(s.median);
  if (with_count) out << ',' << s.count;
}

}  // namespace

void write_results_csv(const std::string& path, const std::vector<MetricReport>& reports) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << kCsvHeader << '\n';
  for (const MetricReport& r : reports) {
    f << quote(r.method) << ',' << quote(r.condition) << ',' << r.trials.size() << ',' << r.failures;
    append_summary(f, r.settling_time, true);
    append_summary(f, r.rmse, false);
    append_summary(f, r.sse, false);
    append_summary(f, r.imu_rmse, false);
    f << '\n';
  }
}

std::vector<MetricReport> read_results_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(f, line) || line != kCsvHeader) {
    throw std::runtime_error(path + ": unexpected header");
  }
  std::vector<MetricReport> out;
  const std::size_t ncols = split(kCsvHeader, ',').size();
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> c = split_csv(line);
    if (c.size() != ncols) {
      throw std::runtime_error(path + ": expected " + std::to_string(ncols) + " columns, got " +
                               std::to_string(c.size()));
    }
    MetricReport r;
    r.method = c[0];
    r.condition = c[1];
    const int trials = std::stoi(c[2]);
    r.trials.resize(trials);  // per-trial values live in the JSON file
    r.failures = std::stoi(c[3]);
    const int valid = trials - r.failures;
    r.settling_time = {std::stoi(c[7]), parse_double(c[4]), parse_double(c[5]), parse_double(c[6])};
    r.rmse = {valid, parse_double(c[8]), parse_double(c[9]), parse_double(c[10])};
    r.sse = {valid, parse_double(c[11]), parse_double(c[12]), parse_double(c[13])};
    r.imu_rmse = {valid, parse_double(c[14]), parse_double(c[15]), parse_double(c[16])};
    out.push_back(std::move(r));
  }
  return out;
}

void write_results_json(const std::string& path, const std::vector<MetricReport>& reports) {
  nlohmann::json rows = nlohmann::json::array();
  for (const MetricReport& r : reports) {
    nlohmann::json trials = nlohmann::json::array();
    for (const TrialMetrics& t : r.trials) {
      trials.push_back({{"st", t.settling_time ? nlohmann::json(*t.settling_time) : nlohmann::json()},
                        {"rmse_deg", t.rmse_deg},
                        {"sse_deg", t.sse_deg},
                        {"imu_rmse_rad", t.imu_rmse_rad},
                        {"failed", t.failed},
                        {"failure", t.failure}});
    }
    rows.push_back({{"method", r.method},
                    {"condition", r.condition},
                    {"failures", r.failures},
                    {"st", summary_json(r.settling_time)},
                    {"rmse_deg", summary_json(r.rmse)},
                    {"sse_deg", summary_json(r.sse)},
                    {"imu_rmse_rad", summary_json(r.imu_rmse)},
                    {"trials", trials}});
  }
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << nlohmann::json{{"rows", rows}}.dump(2) << '\n';
}

std::vector<MetricReport> read_results_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  const nlohmann::json j = nlohmann::json::parse(f);
  std::vector<MetricReport> out;
  for (const nlohmann::json& row : j.at("rows")) {
    MetricReport r;
    r.method = row.at("method").get<std::string>();
    r.condition = row.at("condition").get<std::string>();
    r.failures = row.at("failures").get<int>();
    r.settling_time = summary_from(row.at("st"));
    r.rmse = summary_from(row.at("rmse_deg"));
    r.sse = summary_from(row.at("sse_deg"));
    r.imu_rmse = summary_from(row.at("imu_rmse_rad"));
    for (const nlohmann::json& t : row.at("trials")) {
      TrialMetrics m;
      if (!t.at("st").is_null()) m.settling_time = t.at("st").get<double>();
      m.rmse_deg = t.at("rmse_deg").get<double>();
      m.sse_deg = t.at("sse_deg").get<double>();
      m.imu_rmse_rad = t.at("imu_rmse_rad").get<double>();
      m.failed = t.at("failed").get<bool>();
      m.failure = t.at("failure").get<std::string>();
      r.trials.push_back(std::move(m));
    }
    out.push_back(std::move(r));
  }
  return out;
}

void write_trace_csv(const std::string& path, const TrialTrace& trace) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << "# method=" << trace.method << "\n# condition=" << trace.condition << "\n# dt="
    << fmt(trace.dt) << "\nt,roll,pitch,yaw\n"
    << std::setprecision(17);
  for (std::size_t i = 0; i < trace.attitude.size(); ++i) {
    const Vec3& a = trace.attitude[i];
    f << i * trace.dt << ',' << a[0] << ',' << a[1] << ',' << a[2] << '\n';
  }
}

TrialTrace read_trace_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  TrialTrace t;
  std::string line;
  while (std::getline(f, line)) {
    if (line.rfind("# method=", 0) == 0) {
      t.method = line.substr(9);
    } else if (line.rfind("# condition=", 0) == 0) {
      t.condition = line.substr(12);
    } else if (line.rfind("# dt=", 0) == 0) {
      t.dt = parse_double(line.substr(5));
    } else if (line.empty() || line[0] == '#' || line[0] == 't') {
      continue;
    } else {
      const std::vector<std::string> c = split(line, ',');
      if (c.size() != 4) throw std::runtime_error(path + ": malformed row \"" + line + "\"");
      t.attitude.push_back({parse_double(c[1]), parse_double(c[2]), parse_double(c[3])});
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Failure thresholds.

bool ThresholdResult::monotone() const {
  double lowest_fail = std::numeric_limits<double>::infinity();
  for (const ThresholdProbe& p : trace) {
    if (!p.survived) lowest_fail = std::min(lowest_fail, p.speed);
  }
  for (const ThresholdProbe& p : trace) {
    if (p.survived && p.speed >= lowest_fail) return false;
  }
  return true;
}

bool survives(const Environment& env, const LearnedModel& model, const WindEvent& wind,
              double seconds, std::uint64_t seed) {
  EpisodeSpec spec;
  spec.seconds = seconds;
  spec.seed = seed;
  spec.wind = wind;
  return !run_episode(env, model, spec).diverged;
}

ThresholdResult find_failure_threshold(const Environment& env, const LearnedModel& model,
                                       WindKind kind, const ThresholdConfig& cfg) {
  if (!(cfg.resolution > 0.0)) throw std::invalid_argument("threshold resolution must be positive");
  ThresholdResult res;
  auto probe = [&](double v) {
    WindEvent w = cfg.base;
    w.kind = kind;
    w.speed = v;
    const bool ok = survives(env, model, w, cfg.seconds, cfg.seed);
    res.trace.push_back({v, ok});
    return ok;
  };
  if (probe(cfg.cap)) return res;
  // Invariant: lo survives, hi fails.
  double lo = 0.0, hi = cfg.cap;
  while (hi - lo > cfg.resolution) {
    const double mid = std::floor(0.5 * (lo + hi) / cfg.resolution) * cfg.resolution;
    if (mid <= lo || mid >= hi) break;
    (probe(mid) ? lo : hi) = mid;
  }
  res.threshold = hi;
  return res;
}

// ---------------------------------------------------------------------------
// Plots.

std::string scenario_stem(const std::string& method, const std::string& condition) {
  std::string s = method + "_" + condition;
  std::string out;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.') {
      out += c;
    } else if (c == '/') {
      out += "p";
    } else if (!out.empty() && out.back() != '_') {
      out += '_';
    }
  }
  return out;
}

std::string render_svg(const TrialTrace& trace) {
  const std::string name = trace.method + " " + trace.condition;
  if (trace.attitude.empty()) throw std::invalid_argument("series \"" + name + "\" is empty");
  const double w = 640, h = 360, left = 60, right = 20, top = 30, bottom = 40;
  const double t_end = std::max((trace.attitude.size() - 1) * trace.dt, trace.dt);
  double lo = -1.0, hi = 1.0;
  for (const Vec3& a : trace.attitude) {
    for (double v : a) {
      lo = std::min(lo, v * kDeg);
      hi = std::max(hi, v * kDeg);
    }
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  auto x = [&](double t) { return left + (w - left - right) * t / t_end; };
  auto y = [&](double d) { return top + (h - top - bottom) * (hi - d) / (hi - lo); };

  std::ostringstream s;
  s << std::fixed << std::setprecision(2);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
    << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       "font-size=\"14\">"
    << name << "</text>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << y(0.0) << "\" x2=\"" << w - right << "\" y2=\""
    << y(0.0) << "\" stroke=\"#bbb\"/>\n";
  s << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << w - left - right
    << "\" height=\"" << h - top - bottom << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double d = lo + (hi - lo) * i / 4.0;
    s << "<text x=\"" << left - 5 << "\" y=\"" << y(d) + 4 << "\" text-anchor=\"end\" "
         "font-family=\"sans-serif\" font-size=\"10\">"
      << d << "</text>\n";
    const double t = t_end * i / 4.0;
    s << "<text x=\"" << x(t) << "\" y=\"" << h - bottom + 15 << "\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"10\">"
      << t << "</text>\n";
  }
  s << "<text x=\"" << w / 2 << "\" y=\"" << h - 8 << "\" text-anchor=\"middle\" "
       "font-family=\"sans-serif\" font-size=\"11\">time [s]</text>\n";
  s << "<text x=\"14\" y=\"" << h / 2 << "\" transform=\"rotate(-90 14 " << h / 2
    << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">angle [deg]</text>\n";

  const char* names[3] = {"roll", "pitch", "yaw"};
  const char* colors[3] = {"#d62728", "#1f77b4", "#2ca02c"};
  const std::size_t stride = std::max<std::size_t>(1, trace.attitude.size() / 1000);
  for (int a = 0; a < 3; ++a) {
    s << "<polyline fill=\"none\" stroke=\"" << colors[a] << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < trace.attitude.size(); i += stride) {
      s << x(i * trace.dt) << ',' << y(trace.attitude[i][a] * kDeg) << ' ';
    }
    const std::size_t last = trace.attitude.size() - 1;
    s << x(last * trace.dt) << ',' << y(trace.attitude[last][a] * kDeg) << "\"/>\n";
    s << "<text x=\"" << w - right - 50 << "\" y=\"" << top + 15 + 14 * a
      << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << colors[a] << "\">"
      << names[a] << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void emit_plots(const std::string& dir, const std::vector<TrialTrace>& traces) {
  if (traces.empty()) throw std::invalid_argument("no series to plot");
  std::filesystem::create_directories(dir);
  for (const TrialTrace& t : traces) {
    const std::string svg = render_svg(t);
    const auto path = std::filesystem::path(dir) / (scenario_stem(t.method, t.condition) + ".svg");
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    f << svg;
  }
}

}  // namespace impc
