#pragma once

#include "marl/common.hpp"
#include "marl/ct_ingest.hpp"
#include "marl/nn/conv.hpp"
#include "marl/nn/ops.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace marl::nn {

/// Which modality queries which.
///  v1: the pooled CNN vector attends over the LSTM hidden states.
///  v2: the final LSTM state attends over the CNN spatial positions.
///  lstm_only: no image branch, the head reads the final LSTM state (ablation).
enum class Variant { v1, v2, lstm_only };
enum class Task { regress, binary, multiclass };

std::string_view to_string(Variant v);
std::string_view to_string(Task t);
Variant parse_variant(std::string_view text);
Task parse_task(std::string_view text);
Index task_outputs(Task task);

struct ModelConfig {
  Index input_width = 14;
  std::array<Index, 3> conv_channels = {8, 16, 32};
  Index lstm_hidden = 32;
  Index lstm_layers = 2;
  Index head_width = 64;
  Variant variant = Variant::v1;
  Task task = Task::regress;
  std::uint64_t seed = 7;
};

/// Named slice of the flat parameter vector, viewed as a rows x cols
/// column-major matrix.
struct ParamBlock {
  std::string name;
  Index rows = 0;
  Index cols = 0;
  Index offset = 0;

  Index size() const { return rows * cols; }
};

class ParamLayout {
 public:
  Index add(std::string name, Index rows, Index cols);

  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  const ParamBlock& block(Index id) const { return blocks_[static_cast<std::size_t>(id)]; }
  std::optional<Index> find(std::string_view name) const;
  Index total() const { return total_; }
  /// Block owning a flat index.
  const ParamBlock& owner(Index flat_index) const;

  Eigen::Map<MatrixXd> view(VectorXd& flat, Index id) const {
    const auto& b = block(id);
    return {flat.data() + b.offset, b.rows, b.cols};
  }
  Eigen::Map<const MatrixXd> view(const VectorXd& flat, Index id) const {
    const auto& b = block(id);
    return {flat.data() + b.offset, b.rows, b.cols};
  }

  std::vector<MatrixXd> unpack(const VectorXd& flat) const;
  VectorXd pack(const std::vector<MatrixXd>& parts) const;

 private:
  std::vector<ParamBlock> blocks_;
  Index total_ = 0;
};

/// One patient: padded visit sequence, mask, the CNN input image (already
/// exposure-corrected to [0, 1]) and the target.
struct Sample {
  MatrixXd visits;
  std::vector<bool> valid;
  ImageXd image;
  double target = 0.0;  // regression target (z-scored)
  int label = 0;        // class index for classification
};

FeatureMap image_to_map(const ImageXd& image);

// ---------------------------------------------------------------------------
// CNN encoder: three conv3x3 + ReLU + maxpool2 stages.

struct CnnWeights {
  std::vector<Eigen::Map<const MatrixXd>> kernels;
  std::vector<Eigen::Map<const VectorXd>> biases;
};

struct CnnCache {
  std::vector<FeatureMap> inputs;  // per stage input
  std::vector<FeatureMap> pre;     // per stage pre-activation
  std::vector<Eigen::MatrixXi> argmax;
};

struct CnnOutput {
  FeatureMap map;  // (H/8 * W/8) x C
  VectorXd pooled;  // global average of map
};

CnnOutput cnn_encode(const FeatureMap& image, const CnnWeights& weights, CnnCache* cache = nullptr);

/// Back-propagates dmap (may be empty) and dpooled through the encoder.
/// Kernel and bias gradients are added into `dkernels` / `dbiases`; returns the
/// gradient with respect to the input image.
FeatureMap cnn_backward(const CnnCache& cache, const CnnWeights& weights, const CnnOutput& out,
                        const MatrixXd& dmap, const VectorXd& dpooled, std::vector<Eigen::Map<MatrixXd>>& dkernels,
                        std::vector<Eigen::Map<VectorXd>>& dbiases);

// ---------------------------------------------------------------------------

/// Every intermediate of a forward pass, kept for backward and inspection.
struct ForwardTrace {
  CnnOutput cnn;
  CnnCache cnn_cache;
  LstmSequence<double> lstm;
  std::vector<std::vector<LstmStepCache<double>>> lstm_cache;
  std::vector<Index> value_rows;  // v1: LSTM steps used as attention values
  VectorXd query_raw;
  VectorXd query;                 // after the optional projection
  MatrixXd values;
  AttentionResult<double> attention;
  VectorXd fused;
  VectorXd head_pre;
  VectorXd head;
  VectorXd output;  // 1 value for regression, logits otherwise
};

class Model {
 public:
  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }
  VectorXd& params() { return params_; }
  const VectorXd& params() const { return params_; }

  /// Fills params() with the seeded initialisation.
  void initialize();

  ForwardTrace forward(const Sample& sample) const;
  VectorXd predict(const Sample& sample) const { return forward(sample).output; }

  double sample_loss(const Sample& sample) const;
  /// Task loss of an already computed output.
  double output_loss(const VectorXd& output, const Sample& sample) const;
  double loss(const std::vector<const Sample*>& batch) const;

  /// Mean loss over the batch and its gradient (grad is resized). `scale`
  /// multiplies the loss before differentiation.
  double loss_and_gradient(const std::vector<const Sample*>& batch, VectorXd& grad, double scale = 1.0) const;

  /// Adds the gradient of `scale * loss(sample)` into grad.
  void accumulate_gradient(const Sample& sample, const ForwardTrace& trace, double scale, VectorXd& grad) const;

  Index value_width() const;
  Index query_width() const;
  bool has_projection() const { return projection_.has_value(); }

 private:
  CnnWeights cnn_weights(const VectorXd& flat) const;
  std::vector<LstmWeights<double>> lstm_weights(const VectorXd& flat) const;

  ModelConfig config_;
  ParamLayout layout_;
  VectorXd params_;
  std::vector<Index> conv_kernel_, conv_bias_;
  std::vector<Index> lstm_input_, lstm_recurrent_, lstm_bias_;
  std::optional<Index> projection_;
  Index head_weight_ = -1, head_bias_ = -1, out_weight_ = -1, out_bias_ = -1;
};

}  // namespace marl::nn
