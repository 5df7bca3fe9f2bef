#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ndt/featureset.hpp"
#include "ndt/traffic.hpp"

namespace ndt {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  int flow_dim = 16;  // m
  int link_dim = 16;  // n
  int iterations = 12;  // K
  int embed_hidden = 32;
  int readout_hidden1 = 32;
  int readout_hidden2 = 16;
  int attention_dim = 16;

  bool operator==(const ModelConfig&) const = default;
};

/// Every learnable tensor, in serialization order.
enum TensorId : int {
  kFlowEmbedW1, kFlowEmbedB1, kFlowEmbedW2, kFlowEmbedB2,
  kLinkEmbedW1, kLinkEmbedB1, kLinkEmbedW2, kLinkEmbedB2,
  kFlowGruWz, kFlowGruUz, kFlowGruBz, kFlowGruWr, kFlowGruUr, kFlowGruBr, kFlowGruWh, kFlowGruUh, kFlowGruBh,
  kLinkGruWz, kLinkGruUz, kLinkGruBz, kLinkGruWr, kLinkGruUr, kLinkGruBr, kLinkGruWh, kLinkGruUh, kLinkGruBh,
  kAttnQuery, kAttnKey,
  kReadoutW1, kReadoutB1, kReadoutW2, kReadoutB2, kReadoutW3, kReadoutB3,
  kTensorCount
};

struct TensorShape {
  int rows = 0;
  int cols = 0;  // 1 for bias vectors
  std::size_t offset = 0;

  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
  bool is_bias() const { return cols == 1; }
  bool operator==(const TensorShape&) const = default;
};

std::vector<TensorShape> make_layout(const ModelConfig& cfg);
std::string tensor_name(TensorId id);

/// All learnable parameters plus the scaling they were trained with.
struct ModelWeights {
  ModelConfig config;
  std::vector<TensorShape> layout;
  std::vector<double> params;
  ZScoreStats stats = ZScoreStats::identity();
  /// Bits represented by one unit of readout output.
  double occupancy_unit = 1.0;
  std::uint64_t version = 0;

  std::size_t parameter_count() const { return params.size(); }
  std::span<double> tensor(TensorId id);
  std::span<const double> tensor(TensorId id) const;

  bool operator==(const ModelWeights&) const = default;
};

/// Glorot-uniform weights, zero biases, identity scaling, version 0.
ModelWeights init_weights(Rng& rng, const ModelConfig& cfg = {});

/// Node embeddings at message-passing iteration k.
struct EmbeddingState {
  std::vector<Eigen::VectorXd> flows;  // T vectors of size m
  std::vector<Eigen::VectorXd> links;  // |E| vectors of size n
  int k = 0;
};

/// Flow and link initialization MLPs over already-normalized features.
EmbeddingState embed(std::span<const FlowFeatures> flows, std::span<const LinkFeatures> links, const ModelWeights& w);

/// K rounds of flow update (GRU over the path's link states) followed by
/// link update (attention-weighted sum of incident flow states fed to a
/// GRU). Links without flows keep their state.
EmbeddingState message_pass(EmbeddingState state, const HeteroGraph& graph, const ModelWeights& w);

/// Softmax of scaled dot products between the projected link state and each
/// projected flow state, in input order.
std::vector<double> attention_score(const Eigen::VectorXd& link_state, std::span<const Eigen::VectorXd> flow_states,
                                    const ModelWeights& w);

/// Per-link occupancy in bits from the final link states.
std::vector<double> link_occupancy(const EmbeddingState& state, const ModelWeights& w);

/// Predicted mean delay per flow: sum over the path of occupancy / capacity.
std::vector<double> predict_delay(const HeteroGraph& graph, const ModelWeights& w);

/// Same computation carried out in extended precision; used as a
/// finite-difference reference.
std::vector<long double> predict_delay_extended(const HeteroGraph& graph, const ModelWeights& w);

/// Forward pass that keeps every intermediate needed for backpropagation.
class ForwardPass {
 public:
  ForwardPass(const HeteroGraph& graph, const ModelWeights& w);
  ~ForwardPass();
  ForwardPass(ForwardPass&&) noexcept;
  ForwardPass& operator=(ForwardPass&&) noexcept;

  const std::vector<double>& predictions() const;

  /// Adds d(loss)/d(params) to `grad` given d(loss)/d(prediction).
  void backward(std::span<const double> d_pred, std::span<double> grad) const;

 private:
  struct Cache;
  const HeteroGraph* graph_;
  const ModelWeights* weights_;
  std::unique_ptr<Cache> cache_;
};

std::vector<std::uint8_t> serialize_weights(const ModelWeights& w);
ModelWeights deserialize_weights(std::span<const std::uint8_t> bytes);

}  // namespace ndt
