#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace falcon {

// Layer widths from input to output. Valid when there are at least two
// layers and every width is positive.
struct Topology {
  std::vector<int> layerSizes;

  bool valid() const;
  int inputWidth() const { return layerSizes.front(); }
  int outputWidth() const { return layerSizes.back(); }
  int layerPairs() const { return static_cast<int>(layerSizes.size()) - 1; }
};

// MACs of one inference pass: sum of in*out over consecutive layer pairs.
std::uint64_t countMac(const Topology& topology);

// Piecewise-linear sigmoid lookup table: interpolate between breakpoints,
// clamp to the first/last y outside the covered range. x strictly
// increasing, y non-decreasing in [0,1].
struct PwlTable {
  std::vector<double> x;
  std::vector<double> y;

  void validate() const;
};

// Breakpoints at +-{0, 0.5, 1, 2, 3, 4, 8} with y = sigmoid(x) there.
// Max deviation from the exact sigmoid is ~0.012 over [-10, 10].
PwlTable defaultPwlTable();

double exactSigmoid(double x);
double pwlSigmoid(double x, const PwlTable& table);

enum class ActivationKind { ExactSigmoid, PwlSigmoid };

struct Activation {
  ActivationKind kind = ActivationKind::ExactSigmoid;
  PwlTable table;  // used when kind == PwlSigmoid

  double value(double x) const;
  // d(value)/dx at x; for the PWL variant this is the segment slope.
  double derivative(double x, double valueAtX) const;
};

// Fully connected feed-forward network with sigmoid units on every layer.
// weights[l] is an out x in row-major matrix for layer pair l, biases[l]
// has one entry per output neuron of that pair.
struct MlpModel {
  Topology topology;
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  Activation activation;

  int inputWidth() const { return topology.inputWidth(); }
  int outputWidth() const { return topology.outputWidth(); }
  std::uint64_t parameterCount() const;
  void validate() const;  // StructuralError on shape mismatch / non-finite
};

struct TrainConfig {
  double learningRate = 0.5;
  int epochs = 1;
  int minibatchSize = 16;
  std::uint64_t seed = 1;
  // Draw each minibatch member by picking a class uniformly, then a sample
  // of that class uniformly. The number of presentations per epoch stays
  // equal to the dataset size.
  bool balancedSampling = false;
};

struct TrainStats {
  double finalLoss = 0.0;
  std::vector<double> lossTrace;  // one entry per epoch
  // Forward + backward-delta + gradient MACs: 3 * countMac(topology) per
  // presented sample.
  std::uint64_t weightUpdateMacs = 0;
};

struct Sample {
  std::vector<double> input;
  std::vector<double> target;
};

// Uniform init in +-sqrt(6 / (fanIn + fanOut)) per layer, biases zero.
MlpModel initMlp(const Topology& topology, std::uint64_t seed);

std::vector<double> forward(const MlpModel& model, const std::vector<double>& input);

// Minibatch SGD on mean-squared error; deterministic for a fixed seed.
TrainStats trainSgd(MlpModel& model, const std::vector<Sample>& data, const TrainConfig& cfg);

// Loss of one sample: mean_k (out_k - target_k)^2.
double sampleLoss(const MlpModel& model, const Sample& s);

// Compares the analytic gradient of sampleLoss against central finite
// differences for every parameter and returns the worst
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
double gradientCheck(const MlpModel& model, const Sample& s, double epsilon);

// Binary model file, magic FALCMLP1. Layout (little-endian):
//   bytes 0..7   magic "FALCMLP1"
//   u32          layer count L
//   u32 * L      layer widths
//   u8           activation kind (0 exact, 1 pwl)
//   u32          breakpoint count B (0 for exact)
//   f64 * 2B     breakpoints as (x, y) pairs
//   per layer pair: f64 * out*in weights (row-major), f64 * out biases
void writeModel(const MlpModel& model, std::ostream& os);
MlpModel readModel(std::istream& is);
void saveModel(const MlpModel& model, const std::string& path);
MlpModel loadModel(const std::string& path);

}  // namespace falcon
