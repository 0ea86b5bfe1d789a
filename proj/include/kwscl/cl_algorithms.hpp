#pragma once

// Streaming continual-learning rules for the last fully-connected layer.
//
// Every rule trains a head z = W^T f + b (W is M features x N classes) with
// softmax cross-entropy. The extractor producing f is never touched here.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kwscl::cl {

enum class Algorithm : std::uint8_t {
  tinyol = 0,
  tinyol_batches = 1,
  tinyol_v2 = 2,
  tinyol_v2_batches = 3,
  lwf = 4,
  lwf_batches = 5,
  cwr = 6,
};

inline constexpr std::array<Algorithm, 7> kAllAlgorithms = {
    Algorithm::tinyol, Algorithm::tinyol_batches, Algorithm::tinyol_v2, Algorithm::tinyol_v2_batches,
    Algorithm::lwf,    Algorithm::lwf_batches,    Algorithm::cwr};

std::string_view to_string(Algorithm a);
// Accepts the canonical snake_case names. Throws ConfigError otherwise.
Algorithm parse_algorithm(std::string_view name);

// True for the variants that apply accumulated gradients at batch boundaries.
bool uses_gradient_batches(Algorithm a);
bool masks_initial_classes(Algorithm a);
bool is_lwf(Algorithm a);

struct ClHead {
  Eigen::MatrixXd W;  // M x N
  Eigen::VectorXd b;  // N
  std::vector<std::string> class_labels;

  std::size_t feature_dim() const { return static_cast<std::size_t>(W.rows()); }
  std::size_t class_count() const { return static_cast<std::size_t>(W.cols()); }

  static ClHead zeros(std::size_t feature_dim, std::vector<std::string> labels);
  // Throws ConfigError on shape disagreement, NumericError on non-finite entries.
  void validate() const;
  bool operator==(const ClHead& o) const {
    return W == o.W && b == o.b && class_labels == o.class_labels;
  }
};

struct HeadGradient {
  Eigen::MatrixXd dW;
  Eigen::VectorXd db;

  static HeadGradient zeros(std::size_t feature_dim, std::size_t classes);
};

enum class CwrReinit : std::uint8_t { zeros, keep };

struct ClConfig {
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  double lwf_lambda = 1.0;
  CwrReinit cwr_reinit = CwrReinit::zeros;
  // Classes [0, initial_class_count) are the pre-trained ones.
  std::size_t initial_class_count = 12;

  void validate() const;
};

struct ClAlgorithmState {
  Algorithm algorithm = Algorithm::tinyol;
  std::size_t initial_class_count = 0;
  ClHead head;                                // training head
  std::optional<ClHead> copy_head;            // LwF variants
  std::optional<ClHead> consolidated_head;    // CWR
  std::optional<HeadGradient> accumulator;    // gradient-batch variants
  std::uint64_t accumulated = 0;              // samples in the open batch
  std::uint64_t samples_seen = 0;
  std::uint64_t batches_completed = 0;
  std::vector<std::uint64_t> per_class_seen;
  // CWR: consolidations that touched each class, and classes seen in the open batch.
  std::vector<std::uint64_t> consolidation_counts;
  std::vector<std::uint8_t> batch_class_mask;

  bool operator==(const ClAlgorithmState&) const;
};

// Builds the starting state for `algorithm` from a head that already covers
// every class of the stream (see expand_head).
ClAlgorithmState make_state(Algorithm algorithm, const ClHead& head, const ClConfig& cfg);

Eigen::VectorXd head_forward(const ClHead& head, std::span<const double> features);
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);
// Gradient of -log p_label with respect to W and b.
HeadGradient ce_gradient(std::span<const double> features, const Eigen::VectorXd& probs, std::size_t label);
// Gradient of CE(p_train, onehot) + lambda * CE(p_train, p_copy).
HeadGradient lwf_gradient(std::span<const double> features, const Eigen::VectorXd& p_train,
                          const Eigen::VectorXd& p_copy, std::size_t label, double lambda);

double ce_loss(const ClHead& head, std::span<const double> features, std::size_t label);
double lwf_loss(const ClHead& train, const ClHead& copy, std::span<const double> features, std::size_t label,
                double lambda);

// Appends a zero column and zero bias per new label. Throws ConfigError on a
// duplicate or already-present label.
ClHead expand_head(const ClHead& head, std::span<const std::string> new_classes);

// One stream sample. Throws ConfigError on a bad label and NumericError on a
// non-finite feature or parameter.
void cl_step(ClAlgorithmState& state, std::span<const double> features, std::size_t label, const ClConfig& cfg);

// Applies a trailing partial batch (mean over its actual size) for the
// batched variants. No-op when no batch is open.
void finish_stream(ClAlgorithmState& state, const ClConfig& cfg);

enum class PredictionHead : std::uint8_t { training, evaluation };

// Which head answers queries: the training head during the stream, and for
// CWR evaluation the consolidated head.
const ClHead& prediction_head(const ClAlgorithmState& state, PredictionHead role);

// Argmax with lowest-index tie break.
std::size_t argmax(const Eigen::VectorXd& v);
std::size_t predict(const ClAlgorithmState& state, std::span<const double> features,
                    PredictionHead role = PredictionHead::evaluation);

// CLHD0001 checkpoint. Layout (little-endian):
//   magic, algorithm u8, M u32, N u32, M_old u32, batches_completed u64,
//   per_class_seen u64 x N, training head (W row-major f64 x M*N, b f64 x N),
//   copy head (LwF), consolidated head (CWR),
// followed by a trailer needed to resume mid-stream:
//   samples_seen u64, accumulated u64, accumulator (dW, db) if batched,
//   consolidation_counts u64 x N and batch_class_mask u8 x N if CWR,
//   N labels as (u32 length, bytes).
void save_checkpoint(const ClAlgorithmState& state, const std::filesystem::path& path);
ClAlgorithmState load_checkpoint(const std::filesystem::path& path);

}  // namespace kwscl::cl
