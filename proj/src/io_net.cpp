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

#include "impc/io_net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

#include "json.hpp"

namespace impc {
namespace {

constexpr char kMagic[8] = {'I', 'M', 'P', 'C', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kBinaryVersion = 1;
constexpr int kJsonVersion = 1;

std::vector<int> layer_widths(const MlpConfig& cfg) {
  if (cfg.encoder.size() < 2 || cfg.decoder.size() < 2) {
    throw DimensionError("encoder and decoder need at least two widths each");
  }
  if (cfg.encoder.front() != 6 || cfg.decoder.back() != 6) {
    throw DimensionError("network maps 6 features to 6 corrections");
  }
  if (cfg.encoder.back() != cfg.decoder.front()) {
    throw DimensionError("encoder output width " + std::to_string(cfg.encoder.back()) +
                         " != decoder input width " + std::to_string(cfg.decoder.front()));
  }
  std::vector<int> widths(cfg.encoder);
  widths.insert(widths.end(), cfg.decoder.begin() + 1, cfg.decoder.end());
  return widths;
}

}  // namespace

MlpWeights MlpWeights::initialize(const MlpConfig& cfg, std::uint64_t seed) {
  const std::vector<int> widths = layer_widths(cfg);
  std::mt19937_64 rng(seed);
  MlpWeights w;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    DenseLayer layer;
    layer.in = widths[l];
    layer.out = widths[l + 1];
    layer.activation = l + 2 < widths.size();
    layer.weight.assign(static_cast<std::size_t>(layer.in * layer.out), 0.0);
    layer.bias.assign(static_cast<std::size_t>(layer.out), 0.0);
    if (layer.activation) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (double& v : layer.weight) v = u(rng);
      for (double& v : layer.bias) v = u(rng);
    }
    w.layers_.push_back(std::move(layer));
  }
  return w;
}

std::size_t MlpWeights::parameter_count() const {
  std::size_t n = 0;
  for (const DenseLayer& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

std::vector<double> MlpWeights::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const DenseLayer& l : layers_) {
    out.insert(out.end(), l.weight.begin(), l.weight.end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
  return out;
}

void MlpWeights::assign(const std::vector<double>& flat) {
  if (flat.size() != parameter_count()) {
    throw DimensionError("expected " + std::to_string(parameter_count()) + " parameters, got " +
                         std::to_string(flat.size()));
  }
  std::size_t k = 0;
  for (DenseLayer& l : layers_) {
    for (double& v : l.weight) v = flat[k++];
    for (double& v : l.bias) v = flat[k++];
  }
}

void MlpWeights::check_shapes(const MlpConfig& cfg) const {
  const std::vector<int> widths = layer_widths(cfg);
  if (layers_.size() + 1 != widths.size()) {
    throw DimensionError("checkpoint has " + std::to_string(layers_.size()) +
                         " layers, config expects " + std::to_string(widths.size() - 1));
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const DenseLayer& d = layers_[l];
    if (d.in != widths[l] || d.out != widths[l + 1] ||
        d.weight.size() != static_cast<std::size_t>(d.in * d.out) ||
        d.bias.size() != static_cast<std::size_t>(d.out)) {
      throw DimensionError("layer " + std::to_string(l) + " is " + std::to_string(d.in) + "x" +
                           std::to_string(d.out) + ", config expects " +
                           std::to_string(widths[l]) + "x" + std::to_string(widths[l + 1]));
    }
  }
}

std::array<double, 6> MlpWeights::forward(const std::array<double, 6>& features) const {
  std::vector<double> a(features.begin(), features.end());
  std::vector<double> next;
  for (const DenseLayer& l : layers_) {
    next.assign(static_cast<std::size_t>(l.out), 0.0);
    for (int i = 0; i < l.out; ++i) {
      double z = l.bias[i];
      const double* row = &l.weight[static_cast<std::size_t>(i * l.in)];
      for (int j = 0; j < l.in; ++j) z += row[j] * a[j];
      next[i] = l.activation ? std::tanh(z) : z;
    }
    a.swap(next);
  }
  std::array<double, 6> out;
  for (int i = 0; i < 6; ++i) out[i] = a[i];
  return out;
}

bool operator==(const MlpWeights& a, const MlpWeights& b) {
  if (a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t l = 0; l < a.layers_.size(); ++l) {
    const DenseLayer& x = a.layers_[l];
    const DenseLayer& y = b.layers_[l];
    if (x.in != y.in || x.out != y.out || x.activation != y.activation) return false;
    if (std::memcmp(x.weight.data(), y.weight.data(), x.weight.size() * sizeof(double)) != 0 ||
        std::memcmp(x.bias.data(), y.bias.data(), x.bias.size() * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

BoundMlp BoundMlp::bind(Tape& tape, const MlpWeights& w) {
  BoundMlp b;
  b.weights = &w;
  const std::vector<double> flat = w.flatten();
  b.params.reserve(flat.size());
  for (double v : flat) b.params.push_back(tape.variable(v));
  return b;
}

// Each neuron is one tape node whose parents are its weights, its inputs,
// and its bias.
std::array<Var, 6> BoundMlp::forward(const std::array<double, 6>& features) const {
  std::vector<Var> a(features.begin(), features.end());
  std::vector<Var> next;
  std::vector<Var> inputs;
  std::vector<double> partials;
  std::size_t offset = 0;
  for (const DenseLayer& l : weights->layers()) {
    next.assign(static_cast<std::size_t>(l.out), Var());
    const std::size_t bias_offset = offset + l.weight.size();
    for (int i = 0; i < l.out; ++i) {
      const std::size_t row = offset + static_cast<std::size_t>(i * l.in);
      double z = l.bias[i];
      for (int j = 0; j < l.in; ++j) z += l.weight[row - offset + j] * a[j].value();
      const double y = l.activation ? std::tanh(z) : z;
      const double dz = l.activation ? 1.0 - y * y : 1.0;
      inputs.clear();
      partials.clear();
      for (int j = 0; j < l.in; ++j) {
        inputs.push_back(params[row + j]);
        partials.push_back(dz * a[j].value());
        if (!a[j].is_constant()) {
          inputs.push_back(a[j]);
          partials.push_back(dz * l.weight[row - offset + j]);
        }
      }
      inputs.push_back(params[bias_offset + i]);
      partials.push_back(dz);
      next[i] = tape_record(OpKind::kCustom, y, inputs, partials);
    }
    offset = bias_offset + l.bias.size();
    a.swap(next);
  }
  std::array<Var, 6> out;
  for (int i = 0; i < 6; ++i) out[i] = a[i];
  return out;
}

std::vector<double> BoundMlp::gradient(const Gradient& g) const {
  std::vector<double> out(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) out[i] = g[params[i]];
  return out;
}

std::array<double, 6> imu_features(const ImuSample& s) {
  constexpr double kG = 9.81;
  return {s.gyro[0], s.gyro[1], s.gyro[2], s.accel[0] / kG, s.accel[1] / kG, s.accel[2] / kG};
}

namespace {

void check_window(const std::vector<ImuSample>& window, const MlpConfig& cfg) {
  if (static_cast<int>(window.size()) != cfg.window) {
    throw DimensionError("denoise window has " + std::to_string(window.size()) +
                         " samples, expected " + std::to_string(cfg.window));
  }
}

}  // namespace

std::vector<CorrectedSample<double>> denoise(const std::vector<ImuSample>& window,
                                             const MlpWeights& w, const MlpConfig& cfg) {
  check_window(window, cfg);
  std::vector<CorrectedSample<double>> out;
  for (const ImuSample& s : window) {
    const auto c = w.forward(imu_features(s));
    CorrectedSample<double> cs{s.t, s.gyro, s.accel};
    for (int i = 0; i < 3; ++i) {
      cs.gyro[i] += cfg.gyro_scale * c[i];
      cs.accel[i] += cfg.accel_scale * c[3 + i];
    }
    out.push_back(cs);
  }
  return out;
}

std::vector<CorrectedSample<Var>> denoise(const std::vector<ImuSample>& window, const BoundMlp& w,
                                          const MlpConfig& cfg) {
  check_window(window, cfg);
  std::vector<CorrectedSample<Var>> out;
  for (const ImuSample& s : window) {
    const auto c = w.forward(imu_features(s));
    CorrectedSample<Var> cs;
    cs.t = s.t;
    for (int i = 0; i < 3; ++i) {
      cs.gyro[i] = s.gyro[i] + cfg.gyro_scale * c[i];
      cs.accel[i] = s.accel[i] + cfg.accel_scale * c[3 + i];
    }
    out.push_back(cs);
  }
  return out;
}

std::vector<CorrectedSample<double>> passthrough(const std::vector<ImuSample>& window) {
  std::vector<CorrectedSample<double>> out;
  for (const ImuSample& s : window) out.push_back({s.t, s.gyro, s.accel});
  return out;
}

template <class S>
Preintegrator<S>::Preintegrator(double t0, const Vec3T<S>& euler0)
    : t_(t0), r_(rotation_from_euler(euler0)) {}

template <class S>
void Preintegrator<S>::seed_history(const Vec3T<S>& gyro) {
  history_.assign(1, gyro);
}

template <class S>
AttitudeEstimate<S> Preintegrator<S>::integrate(const std::vector<CorrectedSample<S>>& samples) {
  AttitudeEstimate<S> est;
  est.window_start = samples.empty() ? t_ : samples.front().t;
  for (const CorrectedSample<S>& s : samples) {
    const double h = s.t - t_;
    if (!(h > 0.0)) {
      throw std::invalid_argument("pre-integration samples must be causal and increasing (t = " +
                                  std::to_string(s.t) + " after " + std::to_string(t_) + ")");
    }
    const Vec3T<S>& w = s.gyro;
    Vec3T<S> phi;
    if (!history_.empty()) {
      const Vec3T<S>& w1 = history_.back();
      const Vec3T<S> coning = cross(w1, w);
      for (int i = 0; i < 3; ++i) phi[i] = (0.5 * h) * (w[i] + w1[i]) + (h * h / 12.0) * coning[i];
    } else {
      for (int i = 0; i < 3; ++i) phi[i] = h * w[i];
    }
    r_ = matmul(r_, so3_exp(phi));
    history_.push_back(w);
    if (history_.size() > 1) history_.erase(history_.begin());
    t_ = s.t;
  }
  est.t = t_;
  est.window_end = t_;
  est.euler = euler_from_rotation(r_);
  return est;
}

template <class S>
Preintegrator<double> Preintegrator<S>::detached() const {
  Preintegrator<double> out;
  out.t_ = t_;
  for (int i = 0; i < 9; ++i) out.r_[i] = value_of(r_[i]);
  for (const Vec3T<S>& w : history_) out.history_.push_back({value_of(w[0]), value_of(w[1]), value_of(w[2])});
  return out;
}

template <class S>
Preintegrator<S> Preintegrator<S>::from(const Preintegrator<double>& p) {
  Preintegrator<S> out;
  out.t_ = p.t_;
  for (int i = 0; i < 9; ++i) out.r_[i] = S(p.r_[i]);
  for (const Vec3& w : p.history_) out.history_.push_back({S(w[0]), S(w[1]), S(w[2])});
  return out;
}

template class Preintegrator<double>;
template class Preintegrator<Var>;

VehicleState estimate_state(const Vec3& euler, const Vec3& gyro, const VehicleState& truth) {
  return VehicleState::from_array(estimate_state<double>(euler, gyro, truth));
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  const bool json = path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
  if (json) {
    nlohmann::json j;
    j["format"] = "impc-checkpoint";
    j["version"] = kJsonVersion;
    j["seed"] = c.seed;
    j["step"] = c.step;
    j["mass"] = c.mass;
    j["inertia"] = c.inertia;
    j["layers"] = nlohmann::json::array();
    for (const DenseLayer& l : c.weights.layers()) {
      j["layers"].push_back({{"in", l.in},
                             {"out", l.out},
                             {"activation", l.activation ? "tanh" : "linear"},
                             {"weight", l.weight},
                             {"bias", l.bias}});
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f << j.dump(1) << '\n';
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  auto put = [&](const auto& v) { f.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
  f.write(kMagic, sizeof(kMagic));
  put(kBinaryVersion);
  put(c.seed);
  put(c.step);
  put(c.mass);
  for (double v : c.inertia) put(v);
  put(static_cast<std::uint32_t>(c.weights.layers().size()));
  for (const DenseLayer& l : c.weights.layers()) {
    put(static_cast<std::int32_t>(l.in));
    put(static_cast<std::int32_t>(l.out));
    put(static_cast<std::uint8_t>(l.activation));
    f.write(reinterpret_cast<const char*>(l.weight.data()),
            static_cast<std::streamsize>(l.weight.size() * sizeof(double)));
    f.write(reinterpret_cast<const char*>(l.bias.data()),
            static_cast<std::streamsize>(l.bias.size() * sizeof(double)));
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint " + path);
  char magic[8] = {};
  f.read(magic, sizeof(magic));
  Checkpoint c;
  if (f && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0) {
    auto get = [&](auto& v) {
      f.read(reinterpret_cast<char*>(&v), sizeof(v));
      if (!f) throw DimensionError("truncated checkpoint " + path);
    };
    std::uint32_t version = 0;
    get(version);
    if (version != kBinaryVersion) {
      throw DimensionError("unsupported checkpoint version " + std::to_string(version));
    }
    get(c.seed);
    get(c.step);
    get(c.mass);
    for (double& v : c.inertia) get(v);
    std::uint32_t n = 0;
    get(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      DenseLayer l;
      std::int32_t in = 0, out = 0;
      std::uint8_t act = 0;
      get(in);
      get(out);
      get(act);
      if (in <= 0 || out <= 0 || in > 1 << 16 || out > 1 << 16) {
        throw DimensionError("bad layer shape in checkpoint " + path);
      }
      l.in = in;
      l.out = out;
      l.activation = act != 0;
      l.weight.resize(static_cast<std::size_t>(in) * out);
      l.bias.resize(static_cast<std::size_t>(out));
      for (double& v : l.weight) get(v);
      for (double& v : l.bias) get(v);
      c.weights.layers().push_back(std::move(l));
    }
    return c;
  }
  f.clear();
  f.seekg(0);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DimensionError("checkpoint " + path + " is neither binary nor JSON: " + e.what());
  }
  try {
    if (j.at("format") != "impc-checkpoint" || j.at("version") != kJsonVersion) {
      throw DimensionError("unsupported checkpoint format in " + path);
    }
    c.seed = j.at("seed").get<std::uint64_t>();
    c.step = j.at("step").get<std::uint64_t>();
    c.mass = j.at("mass").get<double>();
    c.inertia = j.at("inertia").get<Vec3>();
    for (const auto& jl : j.at("layers")) {
      DenseLayer l;
      l.in = jl.at("in").get<int>();
      l.out = jl.at("out").get<int>();
      l.activation = jl.at("activation") == "tanh";
      l.weight = jl.at("weight").get<std::vector<double>>();
      l.bias = jl.at("bias").get<std::vector<double>>();
      if (l.weight.size() != static_cast<std::size_t>(l.in * l.out) ||
          l.bias.size() != static_cast<std::size_t>(l.out)) {
        throw DimensionError("layer arrays do not match declared shape in " + path);
      }
      c.weights.layers().push_back(std::move(l));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DimensionError("malformed checkpoint " + path + ": " + e.what());
  }
  return c;
}

}  // namespace impc
