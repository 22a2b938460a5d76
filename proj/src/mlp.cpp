#include "mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "errors.hpp"
#include "rng.hpp"

namespace falcon {

bool Topology::valid() const {
  if (layerSizes.size() < 2) return false;
  for (int w : layerSizes)
    if (w < 1) return false;
  return true;
}

std::uint64_t countMac(const Topology& topology) {
  if (!topology.valid()) throw StructuralError("countMac: invalid topology");
  std::uint64_t total = 0;
  for (std::size_t l = 0; l + 1 < topology.layerSizes.size(); ++l)
    total += static_cast<std::uint64_t>(topology.layerSizes[l]) *
             static_cast<std::uint64_t>(topology.layerSizes[l + 1]);
  return total;
}

void PwlTable::validate() const {
  if (x.size() < 2 || x.size() != y.size())
    throw StructuralError("pwl table needs >= 2 (x, y) breakpoints");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i]))
      throw StructuralError("pwl table has non-finite breakpoint");
    if (y[i] < 0.0 || y[i] > 1.0)
      throw StructuralError("pwl table y outside [0, 1]");
    if (i > 0 && x[i] <= x[i - 1])
      throw StructuralError("pwl table x not strictly increasing");
    if (i > 0 && y[i] < y[i - 1])
      throw StructuralError("pwl table y not monotone");
  }
}

double exactSigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

PwlTable defaultPwlTable() {
  PwlTable t;
  t.x = {-8.0, -4.0, -3.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 8.0};
  t.y.reserve(t.x.size());
  for (double x : t.x) t.y.push_back(exactSigmoid(x));
  return t;
}

double pwlSigmoid(double x, const PwlTable& table) {
  const auto& xs = table.x;
  const auto& ys = table.y;
  if (x <= xs.front()) return ys.front();
  if (x >= xs.back()) return ys.back();
  auto it = std::upper_bound(xs.begin(), xs.end(), x);
  std::size_t hi = static_cast<std::size_t>(it - xs.begin());
  std::size_t lo = hi - 1;
  double t = (x - xs[lo]) / (xs[hi] - xs[lo]);
  return ys[lo] + t * (ys[hi] - ys[lo]);
}

double Activation::value(double x) const {
  return kind == ActivationKind::ExactSigmoid ? exactSigmoid(x) : pwlSigmoid(x, table);
}

double Activation::derivative(double x, double valueAtX) const {
  if (kind == ActivationKind::ExactSigmoid) return valueAtX * (1.0 - valueAtX);
  const auto& xs = table.x;
  const auto& ys = table.y;
  if (x <= xs.front() || x >= xs.back()) return 0.0;
  auto it = std::upper_bound(xs.begin(), xs.end(), x);
  std::size_t hi = static_cast<std::size_t>(it - xs.begin());
  return (ys[hi] - ys[hi - 1]) / (xs[hi] - xs[hi - 1]);
}

std::uint64_t MlpModel::parameterCount() const {
  std::uint64_t n = 0;
  for (const auto& w : weights) n += w.size();
  for (const auto& b : biases) n += b.size();
  return n;
}

void MlpModel::validate() const {
  if (!topology.valid()) throw StructuralError("model topology invalid");
  std::size_t pairs = static_cast<std::size_t>(topology.layerPairs());
  if (weights.size() != pairs || biases.size() != pairs)
    throw StructuralError("model layer count inconsistent with topology");
  for (std::size_t l = 0; l < pairs; ++l) {
    std::size_t in = static_cast<std::size_t>(topology.layerSizes[l]);
    std::size_t out = static_cast<std::size_t>(topology.layerSizes[l + 1]);
    if (weights[l].size() != in * out)
      throw StructuralError("weight matrix shape mismatch at layer " + std::to_string(l));
    if (biases[l].size() != out)
      throw StructuralError("bias vector shape mismatch at layer " + std::to_string(l));
    for (double v : weights[l])
      if (!std::isfinite(v)) throw StructuralError("non-finite weight");
    for (double v : biases[l])
      if (!std::isfinite(v)) throw StructuralError("non-finite bias");
  }
  if (activation.kind == ActivationKind::PwlSigmoid) activation.table.validate();
}

MlpModel initMlp(const Topology& topology, std::uint64_t seed) {
  if (!topology.valid())
    throw StructuralError("initMlp: topology needs >= 2 layers with positive widths");
  MlpModel m;
  m.topology = topology;
  Rng rng(seed);
  for (int l = 0; l < topology.layerPairs(); ++l) {
    std::size_t in = static_cast<std::size_t>(topology.layerSizes[l]);
    std::size_t out = static_cast<std::size_t>(topology.layerSizes[l + 1]);
    double r = std::sqrt(6.0 / static_cast<double>(in + out));
    std::vector<double> w(in * out);
    for (double& v : w) v = rng.uniform(-r, r);
    m.weights.push_back(std::move(w));
    m.biases.emplace_back(out, 0.0);
  }
  return m;
}

namespace {

// Weighted sums and activations for every layer; workspace for backprop.
struct ForwardPass {
  std::vector<std::vector<double>> preact;      // per layer pair
  std::vector<std::vector<double>> activations; // [0] = input, then per pair
};

void runForward(const MlpModel& m, const std::vector<double>& input, ForwardPass& fp) {
  fp.preact.assign(static_cast<std::size_t>(m.topology.layerPairs()), {});
  fp.activations.assign(static_cast<std::size_t>(m.topology.layerPairs()) + 1, {});
  fp.activations[0] = input;
  for (int l = 0; l < m.topology.layerPairs(); ++l) {
    std::size_t in = static_cast<std::size_t>(m.topology.layerSizes[l]);
    std::size_t out = static_cast<std::size_t>(m.topology.layerSizes[l + 1]);
    const std::vector<double>& x = fp.activations[static_cast<std::size_t>(l)];
    std::vector<double>& z = fp.preact[static_cast<std::size_t>(l)];
    std::vector<double>& a = fp.activations[static_cast<std::size_t>(l) + 1];
    z.resize(out);
    a.resize(out);
    const double* w = m.weights[static_cast<std::size_t>(l)].data();
    for (std::size_t j = 0; j < out; ++j) {
      double acc = m.biases[static_cast<std::size_t>(l)][j];
      const double* row = w + j * in;
      for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
      z[j] = acc;
      a[j] = m.activation.value(acc);
    }
  }
}

struct Gradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  void resizeLike(const MlpModel& m) {
    weights.resize(m.weights.size());
    biases.resize(m.biases.size());
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
      weights[l].assign(m.weights[l].size(), 0.0);
      biases[l].assign(m.biases[l].size(), 0.0);
    }
  }

  void zero() {
    for (auto& w : weights) std::fill(w.begin(), w.end(), 0.0);
    for (auto& b : biases) std::fill(b.begin(), b.end(), 0.0);
  }
};

// Accumulates d(sampleLoss)/d(param) into grads and returns the sample loss.
double backprop(const MlpModel& m, const Sample& s, ForwardPass& fp, Gradients& grads) {
  runForward(m, s.input, fp);
  int pairs = m.topology.layerPairs();
  std::size_t outW = static_cast<std::size_t>(m.topology.outputWidth());
  const std::vector<double>& out = fp.activations[static_cast<std::size_t>(pairs)];

  double loss = 0.0;
  std::vector<double> delta(outW);
  for (std::size_t k = 0; k < outW; ++k) {
    double diff = out[k] - s.target[k];
    loss += diff * diff;
    // d/dz of mean_k (o_k - t_k)^2
    delta[k] = (2.0 / static_cast<double>(outW)) * diff *
               m.activation.derivative(fp.preact[static_cast<std::size_t>(pairs) - 1][k], out[k]);
  }
  loss /= static_cast<double>(outW);

  for (int l = pairs - 1; l >= 0; --l) {
    std::size_t in = static_cast<std::size_t>(m.topology.layerSizes[l]);
    std::size_t outN = static_cast<std::size_t>(m.topology.layerSizes[l + 1]);
    const std::vector<double>& x = fp.activations[static_cast<std::size_t>(l)];
    const double* w = m.weights[static_cast<std::size_t>(l)].data();
    double* gw = grads.weights[static_cast<std::size_t>(l)].data();
    double* gb = grads.biases[static_cast<std::size_t>(l)].data();
    for (std::size_t j = 0; j < outN; ++j) {
      double d = delta[j];
      gb[j] += d;
      double* grow = gw + j * in;
      for (std::size_t i = 0; i < in; ++i) grow[i] += d * x[i];
    }
    if (l > 0) {
      std::vector<double> prev(in, 0.0);
      for (std::size_t j = 0; j < outN; ++j) {
        double d = delta[j];
        const double* row = w + j * in;
        for (std::size_t i = 0; i < in; ++i) prev[i] += d * row[i];
      }
      for (std::size_t i = 0; i < in; ++i)
        prev[i] *= m.activation.derivative(fp.preact[static_cast<std::size_t>(l) - 1][i],
                                           fp.activations[static_cast<std::size_t>(l)][i]);
      delta = std::move(prev);
    }
  }
  return loss;
}

}  // namespace

std::vector<double> forward(const MlpModel& model, const std::vector<double>& input) {
  model.validate();
  if (input.size() != static_cast<std::size_t>(model.inputWidth()))
    throw StructuralError("forward: input width " + std::to_string(input.size()) +
                          " != topology input " + std::to_string(model.inputWidth()));
  for (double v : input)
    if (!std::isfinite(v)) throw StructuralError("forward: non-finite input");
  ForwardPass fp;
  runForward(model, input, fp);
  return fp.activations.back();
}

TrainStats trainSgd(MlpModel& model, const std::vector<Sample>& data, const TrainConfig& cfg) {
  model.validate();
  if (data.empty()) throw ArgumentError("trainSgd: empty dataset");
  if (cfg.epochs < 1) throw ArgumentError("trainSgd: epochs must be >= 1");
  if (cfg.minibatchSize < 1) throw ArgumentError("trainSgd: minibatchSize must be >= 1");
  if (!(cfg.learningRate > 0.0)) throw ArgumentError("trainSgd: learningRate must be > 0");

  std::size_t inW = static_cast<std::size_t>(model.inputWidth());
  std::size_t outW = static_cast<std::size_t>(model.outputWidth());
  for (const Sample& s : data) {
    if (s.input.size() != inW) throw StructuralError("trainSgd: sample input width mismatch");
    if (s.target.size() != outW) throw StructuralError("trainSgd: sample target width mismatch");
  }

  // Class buckets for balanced sampling: argmax of the one-hot target.
  std::vector<std::vector<std::size_t>> byClass;
  if (cfg.balancedSampling) {
    byClass.resize(outW);
    for (std::size_t i = 0; i < data.size(); ++i) {
      std::size_t c = static_cast<std::size_t>(
          std::max_element(data[i].target.begin(), data[i].target.end()) - data[i].target.begin());
      byClass[c].push_back(i);
    }
    byClass.erase(std::remove_if(byClass.begin(), byClass.end(),
                                 [](const auto& v) { return v.empty(); }),
                  byClass.end());
  }

  Rng rng(cfg.seed);
  TrainStats stats;
  stats.lossTrace.reserve(static_cast<std::size_t>(cfg.epochs));
  std::uint64_t macsPerSample = 3 * countMac(model.topology);

  ForwardPass fp;
  Gradients grads;
  grads.resizeLike(model);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.balancedSampling) {
      for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& bucket = byClass[rng.below(byClass.size())];
        order[i] = bucket[rng.below(bucket.size())];
      }
    } else {
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.below(i)]);
    }

    double epochLoss = 0.0;
    std::size_t pos = 0;
    while (pos < order.size()) {
      std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.minibatchSize),
                                                order.size() - pos);
      grads.zero();
      for (std::size_t b = 0; b < batch; ++b)
        epochLoss += backprop(model, data[order[pos + b]], fp, grads);
      double step = cfg.learningRate / static_cast<double>(batch);
      for (std::size_t l = 0; l < model.weights.size(); ++l) {
        double* w = model.weights[l].data();
        const double* gw = grads.weights[l].data();
        for (std::size_t i = 0; i < model.weights[l].size(); ++i) w[i] -= step * gw[i];
        double* bias = model.biases[l].data();
        const double* gb = grads.biases[l].data();
        for (std::size_t i = 0; i < model.biases[l].size(); ++i) bias[i] -= step * gb[i];
      }
      pos += batch;
    }
    stats.weightUpdateMacs += macsPerSample * static_cast<std::uint64_t>(order.size());
    epochLoss /= static_cast<double>(order.size());
    if (!std::isfinite(epochLoss))
      throw DivergenceError("trainSgd: non-finite loss at epoch " + std::to_string(epoch));
    stats.lossTrace.push_back(epochLoss);
  }
  stats.finalLoss = stats.lossTrace.back();
  return stats;
}

double sampleLoss(const MlpModel& model, const Sample& s) {
  std::vector<double> out = forward(model, s.input);
  double loss = 0.0;
  for (std::size_t k = 0; k < out.size(); ++k) {
    double d = out[k] - s.target[k];
    loss += d * d;
  }
  return loss / static_cast<double>(out.size());
}

double gradientCheck(const MlpModel& model, const Sample& s, double epsilon) {
  if (!(epsilon > 0.0) || epsilon > 1e-2)
    throw ArgumentError("gradientCheck: epsilon must be in (0, 1e-2]");
  ForwardPass fp;
  Gradients grads;
  grads.resizeLike(model);
  backprop(model, s, fp, grads);

  MlpModel probe = model;
  double worst = 0.0;
  auto check = [&](double& param, double analytic) {
    double saved = param;
    param = saved + epsilon;
    double up = sampleLoss(probe, s);
    param = saved - epsilon;
    double down = sampleLoss(probe, s);
    param = saved;
    double numeric = (up - down) / (2.0 * epsilon);
    double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  };
  for (std::size_t l = 0; l < probe.weights.size(); ++l) {
    for (std::size_t i = 0; i < probe.weights[l].size(); ++i)
      check(probe.weights[l][i], grads.weights[l][i]);
    for (std::size_t i = 0; i < probe.biases[l].size(); ++i)
      check(probe.biases[l][i], grads.biases[l][i]);
  }
  return worst;
}

namespace {

void putU32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void putF64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t getU32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("model file truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

double getF64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw FormatError("model file truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

constexpr char kModelMagic[9] = "FALCMLP1";

}  // namespace

void writeModel(const MlpModel& model, std::ostream& os) {
  model.validate();
  os.write(kModelMagic, 8);
  putU32(os, static_cast<std::uint32_t>(model.topology.layerSizes.size()));
  for (int w : model.topology.layerSizes) putU32(os, static_cast<std::uint32_t>(w));
  os.put(model.activation.kind == ActivationKind::ExactSigmoid ? '\0' : '\1');
  if (model.activation.kind == ActivationKind::PwlSigmoid) {
    putU32(os, static_cast<std::uint32_t>(model.activation.table.x.size()));
    for (std::size_t i = 0; i < model.activation.table.x.size(); ++i) {
      putF64(os, model.activation.table.x[i]);
      putF64(os, model.activation.table.y[i]);
    }
  } else {
    putU32(os, 0);
  }
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    for (double v : model.weights[l]) putF64(os, v);
    for (double v : model.biases[l]) putF64(os, v);
  }
}

MlpModel readModel(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8)) throw FormatError("model file truncated at offset 0");
  if (std::memcmp(magic, kModelMagic, 8) != 0)
    throw FormatError("bad model magic at offset 0 (want FALCMLP1)");
  MlpModel m;
  std::uint32_t layers = getU32(is);
  if (layers < 2 || layers > 64) throw FormatError("model layer count out of range at offset 8");
  for (std::uint32_t i = 0; i < layers; ++i) {
    std::uint32_t w = getU32(is);
    if (w == 0 || w > (1u << 24)) throw FormatError("model layer width out of range");
    m.topology.layerSizes.push_back(static_cast<int>(w));
  }
  int kind = is.get();
  if (kind != 0 && kind != 1) throw FormatError("bad activation kind byte");
  std::uint32_t breakpoints = getU32(is);
  if (kind == 1) {
    m.activation.kind = ActivationKind::PwlSigmoid;
    for (std::uint32_t i = 0; i < breakpoints; ++i) {
      m.activation.table.x.push_back(getF64(is));
      m.activation.table.y.push_back(getF64(is));
    }
    m.activation.table.validate();
  } else if (breakpoints != 0) {
    throw FormatError("exact-sigmoid model with breakpoint table");
  }
  for (int l = 0; l + 1 < static_cast<int>(layers); ++l) {
    std::size_t in = static_cast<std::size_t>(m.topology.layerSizes[l]);
    std::size_t out = static_cast<std::size_t>(m.topology.layerSizes[l + 1]);
    std::vector<double> w(in * out);
    for (double& v : w) v = getF64(is);
    m.weights.push_back(std::move(w));
    std::vector<double> b(out);
    for (double& v : b) v = getF64(is);
    m.biases.push_back(std::move(b));
  }
  m.validate();
  return m;
}

void saveModel(const MlpModel& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  writeModel(model, os);
  if (!os) throw IoError("short write to " + path);
}

MlpModel loadModel(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return readModel(is);
}

}  // namespace falcon
