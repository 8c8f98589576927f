#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cre/corpus.hpp"

namespace cre {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, 0.0) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::span<double> row(int r) { return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)}; }
  std::span<const double> row(int r) const {
    return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)};
  }
  double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  void append_row(std::span<const double> values);
  void erase_row(int r);
  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Matrix&) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

/// Token vocabulary. Indices 0-3 are the entity markers, 4 is the unknown token.
class Vocab {
 public:
  static constexpr int kHeadOpen = 0;   // [E11]
  static constexpr int kHeadClose = 1;  // [E12]
  static constexpr int kTailOpen = 2;   // [E21]
  static constexpr int kTailClose = 3;  // [E22]
  static constexpr int kUnknown = 4;
  static constexpr int kReserved = 5;

  Vocab();
  /// Vocabulary over the tokens of `instances`, in first-appearance order.
  static Vocab build(std::span<const Instance* const> instances);
  static Vocab from_tokens(std::vector<std::string> tokens);

  int index(const std::string& token) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocab& o) const { return tokens_ == o.tokens_; }

 private:
  int add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct ModelConfig {
  int embedding_dim = 64;
  int hidden_dim = 128;
  /// Context tokens on each side of an entity span pooled into its segment.
  int context_window = 1;
  double init_scale = 0.1;
};

struct EncoderParams {
  int context_window = 1;
  Matrix embedding;  // vocab x d
  Matrix hidden_w;   // h x 3d
  std::vector<double> hidden_b;

  int dim() const { return embedding.cols(); }
  int hidden() const { return hidden_w.rows(); }
  bool operator==(const EncoderParams&) const = default;
};

/// Expandable softmax layer. Class ids mix real relation ids and synthetic ids.
struct ClassifierHead {
  std::vector<int> classes;
  Matrix weights;  // classes x h; keeps its width when empty
  std::vector<double> bias;

  int size() const { return static_cast<int>(classes.size()); }
  /// Row of class `id`, or -1.
  int index_of(int id) const;
  bool operator==(const ClassifierHead&) const = default;
};

struct ModelState {
  Vocab vocab;
  EncoderParams encoder;
  ClassifierHead head;

  bool operator==(const ModelState&) const = default;
};

/// Vocabulary indices of the three pooled segments of an instance, with the
/// entity markers virtually inserted.
struct Featurized {
  std::vector<int> head;
  std::vector<int> tail;
  std::vector<int> sentence;
};

struct Example {
  Featurized features;
  int label = 0;  // class id
};

struct Prediction {
  std::vector<double> logits;
  std::vector<double> probs;
  int argmax_class = -1;
};

/// Gradient buffers shaped like the model's parameters.
struct Gradients {
  Matrix embedding;
  Matrix hidden_w;
  std::vector<double> hidden_b;
  Matrix head_w;
  std::vector<double> head_b;

  static Gradients zeros_like(const ModelState& m);
  bool all_finite() const;
};

/// Seeded uniform(-init_scale, init_scale) initialization of every encoder parameter; empty head.
ModelState init_model(Vocab vocab, const ModelConfig& cfg, std::uint64_t seed);

Featurized featurize(const Vocab& vocab, const Instance& x, int context_window);

std::vector<double> encode(const EncoderParams& params, const Featurized& x);
std::vector<double> encode(const EncoderParams& params, const Vocab& vocab, const Instance& x);

/// Numerically stable softmax (max-subtracted).
std::vector<double> softmax(std::span<const double> logits);

Prediction predict_from_representation(const ClassifierHead& head, std::span<const double> rep);
Prediction forward(const ModelState& model, const Featurized& x);
Prediction forward(const ModelState& model, const Instance& x);

struct LossAndGrads {
  double loss = 0.0;
  Gradients grads;
};

/// Mean cross-entropy over the batch and its gradient for every parameter.
LossAndGrads loss_and_grads(const ModelState& model, std::span<const Example> batch);

/// Mean cross-entropy only.
double batch_loss(const ModelState& model, std::span<const Example> batch);

/// theta <- theta - lr * g over all parameters. Throws RuntimeFailure on non-finite gradients.
void sgd_step(ModelState& model, const Gradients& grads, double lr);

/// SGD with optional momentum and L2 weight decay. With both at zero this is sgd_step.
class SgdOptimizer {
 public:
  SgdOptimizer(double lr, double momentum = 0.0, double weight_decay = 0.0);
  void step(ModelState& model, const Gradients& grads);

 private:
  double lr_;
  double momentum_;
  double weight_decay_;
  std::vector<std::vector<double>> velocity_;
};

/// Appends seeded uniform(-init_scale, init_scale) rows for `new_ids`; existing rows are untouched.
ClassifierHead expand_classes(const ClassifierHead& head, std::span<const int> new_ids, double init_scale,
                              std::uint64_t seed);
ClassifierHead remove_classes(const ClassifierHead& head, std::span<const int> ids);

void save_checkpoint(const ModelState& model, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace cre
