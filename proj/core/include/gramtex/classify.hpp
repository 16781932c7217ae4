#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "gramtex/network.hpp"
#include "gramtex/tensor.hpp"
#include "gramtex/textures.hpp"

namespace gramtex {

/// One-vs-all linear model over normalized Gram features with per-class
/// affine score calibration: score_k = scale_k * (w_k . x + b_k) + offset_k.
struct LinearClassifier {
  std::string layer;
  std::vector<std::string> labels;
  std::size_t dim = 0;
  std::vector<double> weights;  // classes x dim, row-major
  std::vector<double> bias;
  std::vector<double> scale;
  std::vector<double> offset;

  std::size_t classes() const { return bias.size(); }
  std::vector<double> raw_scores(std::span<const double> x) const;
  std::vector<double> scores(std::span<const double> x) const;
  /// d/dx of sum_k upstream_k * score_k(x).
  std::vector<double> score_backward(std::span<const double> upstream) const;
  /// Index of a label, or classes() when absent.
  std::size_t label_index(std::string_view name) const;
};

/// Classifiers keyed by the layer they read.
using ClassifierSet = std::map<std::string, LinearClassifier>;

struct SvmOptions {
  double c_reg = 1.0;
  std::size_t epochs = 300;
  std::uint64_t seed = 0;
};

/// Per class, minimizes 0.5 |w|^2 + C sum_i hinge(y_i (w . x_i + b)) by
/// seeded stochastic sub-gradient descent (bias as a constant-1 feature),
/// keeping the iterate with the lowest primal objective; then calibrates.
/// Throws InvalidArgument for fewer than two classes.
LinearClassifier train_one_vs_all(const std::vector<std::vector<double>>& features,
                                  const std::vector<std::size_t>& labels,
                                  const SvmOptions& options = {},
                                  std::vector<std::string> label_names = {});

/// Sets scale/offset so that on (features, labels) the median score of each
/// class's positives is +1 and of its negatives is -1.
void calibrate(LinearClassifier& model, const std::vector<std::vector<double>>& features,
               const std::vector<std::size_t>& labels);

struct Prediction {
  std::vector<double> scores;
  std::size_t label = 0;
};

/// Calibrated scores and argmax; ties go to the smallest class index.
Prediction predict(const LinearClassifier& model, std::span<const double> feature);

/// Softmax over calibrated scores / temperature.
std::vector<double> softmax_head(const LinearClassifier& model, std::span<const double> feature,
                                 double temperature = 1.0);

std::vector<double> softmax(std::span<const double> logits);

/// "GMC1" classifier bundle (same container layout as weight files).
void save_classifiers(const ClassifierSet& set, const std::filesystem::path& path);
ClassifierSet load_classifiers(const std::filesystem::path& path);

/// Normalized Gram feature of `layer` for one image.
std::vector<double> gram_descriptor(const Network& net, const Tensor& image,
                                    const std::string& layer);

/// Trains one classifier per layer on normalized Gram descriptors of a
/// labeled image set.
ClassifierSet train_layer_classifiers(const Network& net, const LabeledImages& data,
                                      const std::vector<std::string>& layers,
                                      const SvmOptions& options = {});

// --- scratch training of network + head ----------------------------------------

enum class HeadKind { Bilinear, FullyConnected };
enum class JitterLevel { F1, F5, F25 };

std::string_view to_string(HeadKind head);
std::string_view to_string(JitterLevel level);
HeadKind parse_head(std::string_view text);
JitterLevel parse_jitter(std::string_view text);

struct CropOffset {
  std::size_t dy = 0;
  std::size_t dx = 0;
  friend bool operator==(const CropOffset&, const CropOffset&) = default;
};

/// Training-time augmentation: every level randomly flips; f5 adds the
/// center and four corner crops of the margin, f25 a 5 x 5 grid over it.
struct JitterConfig {
  JitterLevel level = JitterLevel::F1;
  std::size_t crop = 32;
  std::size_t margin = 16;

  std::vector<CropOffset> offsets() const;
  CropOffset center() const { return {margin / 2, margin / 2}; }
};

/// Crops a crop x crop window at `offset`, optionally mirrored left-right.
Tensor crop_image(const Tensor& image, CropOffset offset, std::size_t crop, bool flip);

struct HeadTrainOptions {
  HeadKind head = HeadKind::Bilinear;
  JitterConfig jitter;
  std::size_t max_epochs = 40;
  std::size_t batch = 8;
  double learning_rate = 0.01;
  /// Bilinear-head parameters step with learning_rate * bilinear_lr_scale.
  /// Its input has unit l2 norm whatever the layer width.
  double bilinear_lr_scale = 30.0;
  /// Plateau-rule patience, in epochs.
  std::size_t lr_patience = 4;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t fc_hidden = 64;
  std::string feature_layer = "relu5_1";
  std::uint64_t seed = 0;
};

/// Head parameters trained jointly with the network.
struct HeadModel {
  HeadKind kind = HeadKind::Bilinear;
  std::string layer;
  std::vector<std::string> labels;
  std::size_t input_dim = 0;
  std::size_t hidden = 0;  // FC only
  std::vector<double> w1, b1;  // FC: hidden x input ; bilinear: classes x input
  std::vector<double> w2, b2;  // FC: classes x hidden
};

struct HeadTrainResult {
  Network network;
  HeadModel head;
  double validation_error = 1.0;
  std::vector<double> validation_history;
  std::size_t epochs_run = 0;
};

/// Trains tex-net-small plus the chosen head from scratch with SGD-momentum
/// and the plateau learning-rate rule. Each epoch draws one jittered copy per
/// training image; validation uses the unflipped center crop.
HeadTrainResult train_head_scratch(const LabeledImages& train, const LabeledImages& validation,
                                   const HeadTrainOptions& options);

/// Class probabilities of the head for one (already cropped) image.
std::vector<double> head_probabilities(const Network& net, const HeadModel& head,
                                       const Tensor& image);
double head_error(const Network& net, const HeadModel& head, const LabeledImages& data,
                  const JitterConfig& jitter);

void save_head(const HeadModel& head, const std::filesystem::path& path);
HeadModel load_head(const std::filesystem::path& path);

struct SweepRow {
  HeadKind head;
  JitterLevel jitter;
  std::uint64_t seed;
  double val_error;
};

struct SweepSummary {
  HeadKind head;
  JitterLevel jitter;
  double mean;
  double stddev;
  std::size_t runs;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SweepSummary> summary;  // 2 x 3 grid, head-major

  const SweepSummary& cell(HeadKind head, JitterLevel jitter) const;
  /// head,jitter,seed,val_error
  void write_csv(std::ostream& os) const;
};

struct SweepOptions {
  HeadTrainOptions base;
  std::vector<std::uint64_t> seeds;
  SyntheticSpec data;
  std::size_t validation_per_class = 20;
};

/// Full {bilinear, fc} x {f1, f5, f25} grid over the given seeds. Each seed
/// generates its own train/validation draw of the synthetic data.
SweepResult jitter_sweep(const SweepOptions& options);

}  // namespace gramtex
