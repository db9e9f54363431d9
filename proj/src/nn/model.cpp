#include "marl/nn/model.hpp"

#include <cmath>
#include <random>

namespace marl::nn {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::v1: return "v1";
    case Variant::v2: return "v2";
    case Variant::lstm_only: return "lstm_only";
  }
  return "";
}

std::string_view to_string(Task t) {
  switch (t) {
    case Task::regress: return "regress";
    case Task::binary: return "binary";
    case Task::multiclass: return "multiclass";
  }
  return "";
}

Variant parse_variant(std::string_view text) {
  if (text == "v1" || text == "V1") return Variant::v1;
  if (text == "v2" || text == "V2") return Variant::v2;
  if (text == "lstm_only") return Variant::lstm_only;
  throw Error("invalid_config", "unknown variant '" + std::string(text) + "'");
}

Task parse_task(std::string_view text) {
  if (text == "regress") return Task::regress;
  if (text == "binary") return Task::binary;
  if (text == "multiclass") return Task::multiclass;
  throw Error("invalid_config", "unknown task '" + std::string(text) + "'");
}

Index task_outputs(Task task) {
  switch (task) {
    case Task::regress: return 1;
    case Task::binary: return 2;
    case Task::multiclass: return 3;
  }
  return 1;
}

// ---------------------------------------------------------------------------

Index ParamLayout::add(std::string name, Index rows, Index cols) {
  blocks_.push_back({std::move(name), rows, cols, total_});
  total_ += rows * cols;
  return static_cast<Index>(blocks_.size()) - 1;
}

std::optional<Index> ParamLayout::find(std::string_view name) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (blocks_[i].name == name) return static_cast<Index>(i);
  }
  return std::nullopt;
}

const ParamBlock& ParamLayout::owner(Index flat_index) const {
  for (const auto& b : blocks_) {
    if (flat_index >= b.offset && flat_index < b.offset + b.size()) return b;
  }
  throw Error("out_of_range", "flat index outside the parameter vector");
}

std::vector<MatrixXd> ParamLayout::unpack(const VectorXd& flat) const {
  if (flat.size() != total_) throw Error("shape_mismatch", "flat vector length differs from layout");
  std::vector<MatrixXd> parts;
  parts.reserve(blocks_.size());
  for (Index i = 0; i < static_cast<Index>(blocks_.size()); ++i) parts.emplace_back(view(flat, i));
  return parts;
}

VectorXd ParamLayout::pack(const std::vector<MatrixXd>& parts) const {
  if (parts.size() != blocks_.size()) throw Error("shape_mismatch", "part count differs from layout");
  VectorXd flat(total_);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& b = blocks_[i];
    if (parts[i].rows() != b.rows || parts[i].cols() != b.cols) {
      throw Error("shape_mismatch", "part '" + b.name + "' has the wrong shape");
    }
    view(flat, static_cast<Index>(i)) = parts[i];
  }
  return flat;
}

// ---------------------------------------------------------------------------

FeatureMap image_to_map(const ImageXd& image) {
  FeatureMap map;
  map.height = image.rows();
  map.width = image.cols();
  map.data = Eigen::Map<const VectorXd>(image.data(), image.size());
  return map;
}

CnnOutput cnn_encode(const FeatureMap& image, const CnnWeights& weights, CnnCache* cache) {
  const auto stages = weights.kernels.size();
  const Index factor = Index{1} << stages;
  if (image.height % factor != 0 || image.width % factor != 0) {
    throw Error("shape_mismatch", "image dimensions must be divisible by " + std::to_string(factor));
  }
  if (cache) {
    cache->inputs.assign(stages, {});
    cache->pre.assign(stages, {});
    cache->argmax.assign(stages, {});
  }
  const ConvShape shape{3, 1};
  FeatureMap x = image;
  for (std::size_t s = 0; s < stages; ++s) {
    FeatureMap z = conv2d_forward(x, weights.kernels[s], weights.biases[s], shape);
    FeatureMap a = z;
    a.data = a.data.cwiseMax(0.0);
    Eigen::MatrixXi winners;
    FeatureMap pooled = maxpool2(a, &winners);
    if (cache) {
      cache->inputs[s] = std::move(x);
      cache->pre[s] = std::move(z);
      cache->argmax[s] = std::move(winners);
    }
    x = std::move(pooled);
  }
  CnnOutput out;
  out.pooled = x.data.colwise().mean().transpose();
  out.map = std::move(x);
  return out;
}

FeatureMap cnn_backward(const CnnCache& cache, const CnnWeights& weights, const CnnOutput& out,
                        const MatrixXd& dmap, const VectorXd& dpooled, std::vector<Eigen::Map<MatrixXd>>& dkernels,
                        std::vector<Eigen::Map<VectorXd>>& dbiases) {
  const ConvShape shape{3, 1};
  FeatureMap grad(out.map.height, out.map.width, out.map.channels());
  if (dmap.size() > 0) grad.data += dmap;
  if (dpooled.size() > 0) {
    grad.data.rowwise() += (dpooled / static_cast<double>(out.map.positions())).transpose();
  }
  for (std::size_t s = cache.inputs.size(); s-- > 0;) {
    FeatureMap da = maxpool2_backward(cache.pre[s].height, cache.pre[s].width, cache.argmax[s], grad);
    da.data = (cache.pre[s].data.array() > 0.0).select(da.data, 0.0);
    Conv2dGrads g = conv2d_backward(cache.inputs[s], weights.kernels[s], da, shape);
    dkernels[s] += g.kernel;
    dbiases[s] += g.bias;
    grad = std::move(g.input);
  }
  return grad;
}

// ---------------------------------------------------------------------------

Model::Model(ModelConfig config) : config_(config) {
  const bool image_branch = config_.variant != Variant::lstm_only;
  if (image_branch) {
    Index cin = 1;
    for (std::size_t s = 0; s < config_.conv_channels.size(); ++s) {
      const Index cout = config_.conv_channels[s];
      conv_kernel_.push_back(layout_.add("cnn.conv" + std::to_string(s) + ".kernel", 9 * cin, cout));
      conv_bias_.push_back(layout_.add("cnn.conv" + std::to_string(s) + ".bias", cout, 1));
      cin = cout;
    }
  }
  const Index h = config_.lstm_hidden;
  Index d = config_.input_width;
  for (Index l = 0; l < config_.lstm_layers; ++l) {
    const std::string prefix = "lstm" + std::to_string(l);
    lstm_input_.push_back(layout_.add(prefix + ".input", 4 * h, d));
    lstm_recurrent_.push_back(layout_.add(prefix + ".recurrent", 4 * h, h));
    lstm_bias_.push_back(layout_.add(prefix + ".bias", 4 * h, 1));
    d = h;
  }
  Index fused = h;
  if (image_branch) {
    if (query_width() != value_width()) {
      projection_ = layout_.add("attention.query_projection", value_width(), query_width());
    }
    fused = value_width() + query_width();
  }
  head_weight_ = layout_.add("head.weight", config_.head_width, fused);
  head_bias_ = layout_.add("head.bias", config_.head_width, 1);
  out_weight_ = layout_.add("output.weight", task_outputs(config_.task), config_.head_width);
  out_bias_ = layout_.add("output.bias", task_outputs(config_.task), 1);
  initialize();
}

Index Model::value_width() const {
  switch (config_.variant) {
    case Variant::v1: return config_.lstm_hidden;
    case Variant::v2: return config_.conv_channels.back();
    case Variant::lstm_only: return 0;
  }
  return 0;
}

Index Model::query_width() const {
  switch (config_.variant) {
    case Variant::v1: return config_.conv_channels.back();
    case Variant::v2: return config_.lstm_hidden;
    case Variant::lstm_only: return 0;
  }
  return 0;
}

void Model::initialize() {
  params_ = VectorXd::Zero(layout_.total());
  std::mt19937_64 rng(config_.seed);
  auto fill = [&](Index id, Index fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto v = layout_.view(params_, id);
    for (Index j = 0; j < v.cols(); ++j) {
      for (Index i = 0; i < v.rows(); ++i) v(i, j) = dist(rng);
    }
  };
  for (std::size_t s = 0; s < conv_kernel_.size(); ++s) {
    const Index fan_in = layout_.block(conv_kernel_[s]).rows;
    fill(conv_kernel_[s], fan_in);
    fill(conv_bias_[s], fan_in);
  }
  const Index h = config_.lstm_hidden;
  for (std::size_t l = 0; l < lstm_input_.size(); ++l) {
    fill(lstm_input_[l], h);
    fill(lstm_recurrent_[l], h);
    fill(lstm_bias_[l], h);
    layout_.view(params_, lstm_bias_[l]).topRows(h).setConstant(1.0);  // forget gate
  }
  if (projection_) fill(*projection_, layout_.block(*projection_).cols);
  const Index fused = layout_.block(head_weight_).cols;
  fill(head_weight_, fused);
  fill(head_bias_, fused);
  fill(out_weight_, config_.head_width);
  fill(out_bias_, config_.head_width);
}

CnnWeights Model::cnn_weights(const VectorXd& flat) const {
  CnnWeights w;
  for (std::size_t s = 0; s < conv_kernel_.size(); ++s) {
    const auto k = layout_.view(flat, conv_kernel_[s]);
    const auto b = layout_.block(conv_bias_[s]);
    w.kernels.emplace_back(k.data(), k.rows(), k.cols());
    w.biases.emplace_back(flat.data() + b.offset, b.rows);
  }
  return w;
}

std::vector<LstmWeights<double>> Model::lstm_weights(const VectorXd& flat) const {
  std::vector<LstmWeights<double>> layers;
  for (std::size_t l = 0; l < lstm_input_.size(); ++l) {
    const auto in = layout_.view(flat, lstm_input_[l]);
    const auto rec = layout_.view(flat, lstm_recurrent_[l]);
    const auto& b = layout_.block(lstm_bias_[l]);
    layers.push_back({{in.data(), in.rows(), in.cols()},
                      {rec.data(), rec.rows(), rec.cols()},
                      {flat.data() + b.offset, b.rows}});
  }
  return layers;
}

ForwardTrace Model::forward(const Sample& sample) const {
  if (sample.visits.cols() != config_.input_width) {
    throw Error("shape_mismatch", "visit width differs from the model input width");
  }
  ForwardTrace t;
  t.lstm = lstm_forward<double>(sample.visits, sample.valid, lstm_weights(params_), &t.lstm_cache);

  switch (config_.variant) {
    case Variant::lstm_only:
      t.fused = t.lstm.final_h;
      break;
    case Variant::v1:
    case Variant::v2: {
      t.cnn = cnn_encode(image_to_map(sample.image), cnn_weights(params_), &t.cnn_cache);
      if (config_.variant == Variant::v1) {
        t.query_raw = t.cnn.pooled;
        for (Index r = 0; r < t.lstm.hidden.rows(); ++r) {
          if (sample.valid[static_cast<std::size_t>(r)]) t.value_rows.push_back(r);
        }
        t.values.resize(static_cast<Index>(t.value_rows.size()), t.lstm.hidden.cols());
        for (std::size_t k = 0; k < t.value_rows.size(); ++k) {
          t.values.row(static_cast<Index>(k)) = t.lstm.hidden.row(t.value_rows[k]);
        }
      } else {
        t.query_raw = t.lstm.final_h;
        t.values = t.cnn.map.data;
      }
      t.query = projection_ ? VectorXd(layout_.view(params_, *projection_) * t.query_raw) : t.query_raw;
      t.attention = attention(t.query, t.values);
      t.fused.resize(t.attention.context.size() + t.query_raw.size());
      t.fused << t.attention.context, t.query_raw;
      break;
    }
  }

  t.head_pre = layout_.view(params_, head_weight_) * t.fused + layout_.view(params_, head_bias_);
  t.head = t.head_pre.cwiseMax(0.0);
  t.output = layout_.view(params_, out_weight_) * t.head + layout_.view(params_, out_bias_);
  return t;
}

namespace {

double loss_of(Task task, const VectorXd& output, const Sample& s) {
  if (task == Task::regress) return loss_mse<double>(output, VectorXd::Constant(1, s.target));
  return loss_ce<double>(output, s.label);
}

VectorXd loss_grad_of(Task task, const VectorXd& output, const Sample& s) {
  if (task == Task::regress) return loss_mse_grad<double>(output, VectorXd::Constant(1, s.target));
  return loss_ce_grad<double>(output, s.label);
}

}  // namespace

double Model::sample_loss(const Sample& sample) const { return loss_of(config_.task, predict(sample), sample); }

double Model::output_loss(const VectorXd& output, const Sample& sample) const {
  return loss_of(config_.task, output, sample);
}

double Model::loss(const std::vector<const Sample*>& batch) const {
  if (batch.empty()) throw Error("empty_batch", "loss of an empty batch");
  std::vector<double> losses(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) { losses[i] = sample_loss(*batch[i]); });
  double total = 0.0;
  for (double l : losses) total += l;
  return total / static_cast<double>(batch.size());
}

void Model::accumulate_gradient(const Sample& sample, const ForwardTrace& t, double scale, VectorXd& grad) const {
  const VectorXd dout = scale * loss_grad_of(config_.task, t.output, sample);

  layout_.view(grad, out_weight_).noalias() += dout * t.head.transpose();
  layout_.view(grad, out_bias_) += dout;
  const VectorXd dhead = layout_.view(params_, out_weight_).transpose() * dout;
  const VectorXd dhead_pre = (t.head_pre.array() > 0.0).select(dhead, 0.0);
  layout_.view(grad, head_weight_).noalias() += dhead_pre * t.fused.transpose();
  layout_.view(grad, head_bias_) += dhead_pre;
  const VectorXd dfused = layout_.view(params_, head_weight_).transpose() * dhead_pre;

  const Index steps = t.lstm.hidden.rows();
  const Index h = config_.lstm_hidden;
  MatrixXd dhidden = MatrixXd::Zero(steps, h);  // gradient on the top LSTM layer outputs

  if (config_.variant == Variant::lstm_only) {
    dhidden.row(t.lstm.last_valid) += dfused.transpose();
  } else {
    const Index ctx = t.attention.context.size();
    const VectorXd dcontext = dfused.head(ctx);
    VectorXd dquery_raw = dfused.tail(t.query_raw.size());
    const auto ag = attention_backward<double>(t.query, t.values, t.attention.weights, dcontext);
    if (projection_) {
      layout_.view(grad, *projection_).noalias() += ag.query * t.query_raw.transpose();
      dquery_raw.noalias() += layout_.view(params_, *projection_).transpose() * ag.query;
    } else {
      dquery_raw += ag.query;
    }

    MatrixXd dmap;
    VectorXd dpooled;
    if (config_.variant == Variant::v1) {
      dpooled = dquery_raw;
      for (std::size_t k = 0; k < t.value_rows.size(); ++k) {
        dhidden.row(t.value_rows[k]) += ag.values.row(static_cast<Index>(k));
      }
    } else {
      dmap = ag.values;
      dhidden.row(t.lstm.last_valid) += dquery_raw.transpose();
    }

    std::vector<Eigen::Map<MatrixXd>> dkernels;
    std::vector<Eigen::Map<VectorXd>> dbiases;
    for (std::size_t s = 0; s < conv_kernel_.size(); ++s) {
      dkernels.push_back(layout_.view(grad, conv_kernel_[s]));
      const auto& b = layout_.block(conv_bias_[s]);
      dbiases.emplace_back(grad.data() + b.offset, b.rows);
    }
    cnn_backward(t.cnn_cache, cnn_weights(params_), t.cnn, dmap, dpooled, dkernels, dbiases);
  }

  // Back-propagation through time, top layer first.
  const auto layers = lstm_weights(params_);
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& w = layers[l];
    MatrixXd dinput = MatrixXd::Zero(steps, w.input_width());
    VectorXd dh_carry = VectorXd::Zero(h);
    VectorXd dc_carry = VectorXd::Zero(h);
    auto dW = layout_.view(grad, lstm_input_[l]);
    auto dU = layout_.view(grad, lstm_recurrent_[l]);
    const auto& bb = layout_.block(lstm_bias_[l]);
    Eigen::Map<VectorXd> db(grad.data() + bb.offset, bb.rows);
    for (Index s = steps; s-- > 0;) {
      dh_carry += dhidden.row(s).transpose();
      if (!sample.valid[static_cast<std::size_t>(s)]) continue;
      const auto g = lstm_step_backward<double>(t.lstm_cache[l][static_cast<std::size_t>(s)], w, dh_carry, dc_carry,
                                                dW, dU, db);
      dinput.row(s) = g.x.transpose();
      dh_carry = g.h_prev;
      dc_carry = g.c_prev;
    }
    dhidden = std::move(dinput);
  }
}

double Model::loss_and_gradient(const std::vector<const Sample*>& batch, VectorXd& grad, double scale) const {
  if (batch.empty()) throw Error("empty_batch", "gradient of an empty batch");
  const double per_sample = scale / static_cast<double>(batch.size());
  std::vector<VectorXd> partial(batch.size());
  std::vector<double> losses(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) {
    const ForwardTrace t = forward(*batch[i]);
    losses[i] = loss_of(config_.task, t.output, *batch[i]);
    partial[i] = VectorXd::Zero(layout_.total());
    accumulate_gradient(*batch[i], t, per_sample, partial[i]);
  });
  grad = VectorXd::Zero(layout_.total());
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    grad += partial[i];
    total += losses[i];
  }
  return scale * total / static_cast<double>(batch.size());
}

}  // namespace marl::nn
