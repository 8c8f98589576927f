#include "cre/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "cre/errors.hpp"
#include "cre/rng.hpp"
#include "json.hpp"

namespace cre {

using nlohmann::json;

void Matrix::append_row(std::span<const double> values) {
  if (static_cast<int>(values.size()) != cols_) throw std::invalid_argument("append_row: width mismatch");
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

void Matrix::erase_row(int r) {
  auto first = data_.begin() + static_cast<std::ptrdiff_t>(r) * cols_;
  data_.erase(first, first + cols_);
  --rows_;
}

// ---------------------------------------------------------------------------
// Vocab

Vocab::Vocab() {
  for (auto m : kReservedMarkers) add(std::string(m));
  add("[UNK]");
}

int Vocab::add(const std::string& token) {
  auto [it, inserted] = index_.emplace(token, size());
  if (inserted) tokens_.push_back(token);
  return it->second;
}

Vocab Vocab::build(std::span<const Instance* const> instances) {
  Vocab v;
  for (const Instance* inst : instances) {
    for (const auto& t : inst->tokens) v.add(t);
  }
  return v;
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  Vocab v;
  if (tokens.size() < static_cast<std::size_t>(kReserved)) throw DataError("vocabulary lacks reserved entries");
  for (int i = 0; i < kReserved; ++i) {
    if (tokens[i] != v.tokens_[i]) throw DataError("vocabulary reserved entries out of order");
  }
  for (std::size_t i = kReserved; i < tokens.size(); ++i) {
    if (v.add(tokens[i]) != static_cast<int>(i)) throw DataError("duplicate vocabulary token '" + tokens[i] + "'");
  }
  return v;
}

int Vocab::index(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end() || it->second < kReserved) return kUnknown;
  return it->second;
}

// ---------------------------------------------------------------------------
// Parameters

int ClassifierHead::index_of(int id) const {
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] == id) return static_cast<int>(i);
  }
  return -1;
}

namespace {

void fill_uniform(std::vector<double>& v, double scale, Rng& rng) {
  for (auto& x : v) x = rng.uniform(-scale, scale);
}

void axpy(std::span<double> y, double a, std::span<const double> x) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

bool finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

ModelState init_model(Vocab vocab, const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.embedding_dim <= 0 || cfg.hidden_dim <= 0 || cfg.context_window < 0) {
    throw ConfigError("model dimensions must be positive and the context window non-negative");
  }
  Rng rng(seed);
  ModelState m;
  m.encoder.context_window = cfg.context_window;
  m.encoder.embedding = Matrix(vocab.size(), cfg.embedding_dim);
  m.encoder.hidden_w = Matrix(cfg.hidden_dim, 3 * cfg.embedding_dim);
  m.encoder.hidden_b.assign(static_cast<std::size_t>(cfg.hidden_dim), 0.0);
  fill_uniform(m.encoder.embedding.data(), cfg.init_scale, rng);
  fill_uniform(m.encoder.hidden_w.data(), cfg.init_scale, rng);
  fill_uniform(m.encoder.hidden_b, cfg.init_scale, rng);
  m.head.weights = Matrix(0, cfg.hidden_dim);
  m.vocab = std::move(vocab);
  return m;
}

Gradients Gradients::zeros_like(const ModelState& m) {
  Gradients g;
  g.embedding = Matrix(m.encoder.embedding.rows(), m.encoder.embedding.cols());
  g.hidden_w = Matrix(m.encoder.hidden_w.rows(), m.encoder.hidden_w.cols());
  g.hidden_b.assign(m.encoder.hidden_b.size(), 0.0);
  g.head_w = Matrix(m.head.weights.rows(), m.head.weights.cols());
  g.head_b.assign(m.head.bias.size(), 0.0);
  return g;
}

bool Gradients::all_finite() const {
  return finite(embedding.data()) && finite(hidden_w.data()) && finite(hidden_b) && finite(head_w.data()) &&
         finite(head_b);
}

// ---------------------------------------------------------------------------
// Encoder

Featurized featurize(const Vocab& vocab, const Instance& x, int context_window) {
  const int n = static_cast<int>(x.tokens.size());
  auto id = [&](int i) { return vocab.index(x.tokens[i]); };
  auto segment = [&](const Span& own, const Span& other, int open, int close) {
    std::vector<int> ids{open};
    const int lo = std::max(0, own.start - context_window);
    const int hi = std::min(n, own.end + context_window);
    for (int i = lo; i < hi; ++i) {
      if (!other.contains(i)) ids.push_back(id(i));
    }
    ids.push_back(close);
    return ids;
  };
  Featurized f;
  f.head = segment(x.head, x.tail, Vocab::kHeadOpen, Vocab::kHeadClose);
  f.tail = segment(x.tail, x.head, Vocab::kTailOpen, Vocab::kTailClose);
  f.sentence = {Vocab::kHeadOpen, Vocab::kHeadClose, Vocab::kTailOpen, Vocab::kTailClose};
  for (int i = 0; i < n; ++i) f.sentence.push_back(id(i));
  return f;
}

namespace {

struct ForwardCache {
  std::vector<double> pooled;  // 3d
  std::vector<double> rep;     // h
};

void mean_pool(const Matrix& emb, const std::vector<int>& ids, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (int id : ids) axpy(out, 1.0, emb.row(id));
  const double inv = 1.0 / static_cast<double>(ids.size());
  for (auto& v : out) v *= inv;
}

ForwardCache encode_cached(const EncoderParams& p, const Featurized& x) {
  const int d = p.dim();
  ForwardCache c;
  c.pooled.assign(static_cast<std::size_t>(3 * d), 0.0);
  std::span<double> pooled(c.pooled);
  mean_pool(p.embedding, x.head, pooled.subspan(0, d));
  mean_pool(p.embedding, x.tail, pooled.subspan(d, d));
  mean_pool(p.embedding, x.sentence, pooled.subspan(2 * d, d));
  const int h = p.hidden();
  c.rep.resize(static_cast<std::size_t>(h));
  for (int j = 0; j < h; ++j) c.rep[j] = std::tanh(dot(p.hidden_w.row(j), c.pooled) + p.hidden_b[j]);
  return c;
}

}  // namespace

std::vector<double> encode(const EncoderParams& params, const Featurized& x) {
  return encode_cached(params, x).rep;
}

std::vector<double> encode(const EncoderParams& params, const Vocab& vocab, const Instance& x) {
  return encode(params, featurize(vocab, x, params.context_window));
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

Prediction predict_from_representation(const ClassifierHead& head, std::span<const double> rep) {
  if (head.size() == 0) throw RuntimeFailure("forward: classifier has no registered classes");
  Prediction out;
  out.logits.resize(head.classes.size());
  for (int c = 0; c < head.size(); ++c) out.logits[c] = dot(head.weights.row(c), rep) + head.bias[c];
  out.probs = softmax(out.logits);
  const auto best = std::max_element(out.logits.begin(), out.logits.end()) - out.logits.begin();
  out.argmax_class = head.classes[static_cast<std::size_t>(best)];
  return out;
}

Prediction forward(const ModelState& model, const Featurized& x) {
  return predict_from_representation(model.head, encode(model.encoder, x));
}

Prediction forward(const ModelState& model, const Instance& x) {
  return forward(model, featurize(model.vocab, x, model.encoder.context_window));
}

// ---------------------------------------------------------------------------
// Loss and gradients

namespace {

void require_nonempty(std::span<const Example> batch) {
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
}

int label_row(const ClassifierHead& head, int label) {
  const int row = head.index_of(label);
  if (row < 0) throw std::invalid_argument("loss: label " + std::to_string(label) + " is not a registered class");
  return row;
}

// -log softmax(logits)[row], computed in log space.
double nll(const Prediction& p, int row) {
  const double mx = *std::max_element(p.logits.begin(), p.logits.end());
  double sum = 0.0;
  for (double l : p.logits) sum += std::exp(l - mx);
  return mx + std::log(sum) - p.logits[row];
}

}  // namespace

double batch_loss(const ModelState& model, std::span<const Example> batch) {
  require_nonempty(batch);
  double total = 0.0;
  for (const auto& ex : batch) {
    const int row = label_row(model.head, ex.label);
    total += nll(forward(model, ex.features), row);
  }
  return total / static_cast<double>(batch.size());
}

LossAndGrads loss_and_grads(const ModelState& model, std::span<const Example> batch) {
  require_nonempty(batch);
  const auto& enc = model.encoder;
  const int d = enc.dim();
  const int h = enc.hidden();
  const int C = model.head.size();
  const double scale = 1.0 / static_cast<double>(batch.size());

  LossAndGrads out{0.0, Gradients::zeros_like(model)};
  auto& g = out.grads;
  std::vector<double> dlogits(static_cast<std::size_t>(C));
  std::vector<double> dz(static_cast<std::size_t>(h));
  std::vector<double> du(static_cast<std::size_t>(3 * d));

  for (const auto& ex : batch) {
    const int row = label_row(model.head, ex.label);
    const auto cache = encode_cached(enc, ex.features);
    const auto pred = predict_from_representation(model.head, cache.rep);
    out.loss += nll(pred, row) * scale;

    for (int c = 0; c < C; ++c) dlogits[c] = (pred.probs[c] - (c == row ? 1.0 : 0.0)) * scale;

    std::fill(dz.begin(), dz.end(), 0.0);
    for (int c = 0; c < C; ++c) {
      axpy(g.head_w.row(c), dlogits[c], cache.rep);
      g.head_b[c] += dlogits[c];
      axpy(dz, dlogits[c], model.head.weights.row(c));
    }
    for (int j = 0; j < h; ++j) dz[j] *= 1.0 - cache.rep[j] * cache.rep[j];

    std::fill(du.begin(), du.end(), 0.0);
    for (int j = 0; j < h; ++j) {
      axpy(g.hidden_w.row(j), dz[j], cache.pooled);
      g.hidden_b[j] += dz[j];
      axpy(du, dz[j], enc.hidden_w.row(j));
    }

    const std::span<const double> dus(du);
    auto scatter = [&](const std::vector<int>& ids, std::span<const double> part) {
      const double w = 1.0 / static_cast<double>(ids.size());
      for (int id : ids) axpy(g.embedding.row(id), w, part);
    };
    scatter(ex.features.head, dus.subspan(0, d));
    scatter(ex.features.tail, dus.subspan(d, d));
    scatter(ex.features.sentence, dus.subspan(2 * d, d));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer

namespace {

template <typename F>
void for_each_param(ModelState& m, const Gradients& g, F&& f) {
  f(m.encoder.embedding.data(), g.embedding.data());
  f(m.encoder.hidden_w.data(), g.hidden_w.data());
  f(m.encoder.hidden_b, g.hidden_b);
  f(m.head.weights.data(), g.head_w.data());
  f(m.head.bias, g.head_b);
}

void check_grads(const ModelState& m, const Gradients& g) {
  if (g.embedding.data().size() != m.encoder.embedding.data().size() ||
      g.hidden_w.data().size() != m.encoder.hidden_w.data().size() ||
      g.hidden_b.size() != m.encoder.hidden_b.size() || g.head_w.data().size() != m.head.weights.data().size() ||
      g.head_b.size() != m.head.bias.size()) {
    throw std::invalid_argument("sgd_step: gradient shapes do not match the model");
  }
  if (!g.all_finite()) throw RuntimeFailure("training aborted: non-finite gradient");
}

}  // namespace

void sgd_step(ModelState& model, const Gradients& grads, double lr) {
  check_grads(model, grads);
  for_each_param(model, grads, [lr](std::vector<double>& p, const std::vector<double>& gr) {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * gr[i];
  });
}

SgdOptimizer::SgdOptimizer(double lr, double momentum, double weight_decay)
    : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("weight decay must be non-negative");
}

void SgdOptimizer::step(ModelState& model, const Gradients& grads) {
  if (momentum_ == 0.0 && weight_decay_ == 0.0) {
    sgd_step(model, grads, lr_);
    return;
  }
  check_grads(model, grads);
  std::size_t k = 0;
  const bool reset = velocity_.size() != 5;
  if (reset) velocity_.assign(5, {});
  for_each_param(model, grads, [&](std::vector<double>& p, const std::vector<double>& gr) {
    auto& v = velocity_[k++];
    if (v.size() != p.size()) v.assign(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = momentum_ * v[i] + gr[i] + weight_decay_ * p[i];
      p[i] -= lr_ * v[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Head lifecycle

ClassifierHead expand_classes(const ClassifierHead& head, std::span<const int> new_ids, double init_scale,
                              std::uint64_t seed) {
  std::set<int> seen(head.classes.begin(), head.classes.end());
  for (int id : new_ids) {
    if (!seen.insert(id).second) throw std::invalid_argument("expand_classes: duplicate class id " + std::to_string(id));
  }
  ClassifierHead out = head;
  Rng rng(seed);
  std::vector<double> row(static_cast<std::size_t>(head.weights.cols()));
  for (int id : new_ids) {
    for (auto& v : row) v = init_scale == 0.0 ? 0.0 : rng.uniform(-init_scale, init_scale);
    out.classes.push_back(id);
    out.weights.append_row(row);
    out.bias.push_back(0.0);
  }
  return out;
}

ClassifierHead remove_classes(const ClassifierHead& head, std::span<const int> ids) {
  ClassifierHead out = head;
  for (int id : ids) {
    const int row = out.index_of(id);
    if (row < 0) throw std::invalid_argument("remove_classes: unknown class id " + std::to_string(id));
    out.classes.erase(out.classes.begin() + row);
    out.weights.erase_row(row);
    out.bias.erase(out.bias.begin() + row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint

namespace {

constexpr const char* kCheckpointFormat = "cre-checkpoint";
constexpr int kCheckpointVersion = 1;

json matrix_json(const Matrix& m) { return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}}; }

Matrix matrix_from(const json& j) {
  Matrix m(j.at("rows").get<int>(), j.at("cols").get<int>());
  auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != m.data().size()) throw DataError("checkpoint: matrix size mismatch");
  m.data() = std::move(data);
  return m;
}

}  // namespace

void save_checkpoint(const ModelState& model, const std::filesystem::path& path) {
  json j = {{"format", kCheckpointFormat},
            {"version", kCheckpointVersion},
            {"vocab", model.vocab.tokens()},
            {"context_window", model.encoder.context_window},
            {"embedding", matrix_json(model.encoder.embedding)},
            {"hidden_w", matrix_json(model.encoder.hidden_w)},
            {"hidden_b", model.encoder.hidden_b},
            {"classes", model.head.classes},
            {"head_w", matrix_json(model.head.weights)},
            {"head_b", model.head.bias}};
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot write checkpoint " + tmp.string());
    out << j.dump() << '\n';
  }
  std::filesystem::rename(tmp, path);
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  try {
    const json j = json::parse(in);
    if (j.at("format") != kCheckpointFormat) throw DataError("not a checkpoint file: " + path.string());
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw DataError("unsupported checkpoint version " + std::to_string(j.at("version").get<int>()));
    }
    ModelState m;
    m.vocab = Vocab::from_tokens(j.at("vocab").get<std::vector<std::string>>());
    m.encoder.context_window = j.at("context_window").get<int>();
    m.encoder.embedding = matrix_from(j.at("embedding"));
    m.encoder.hidden_w = matrix_from(j.at("hidden_w"));
    m.encoder.hidden_b = j.at("hidden_b").get<std::vector<double>>();
    m.head.classes = j.at("classes").get<std::vector<int>>();
    m.head.weights = matrix_from(j.at("head_w"));
    m.head.bias = j.at("head_b").get<std::vector<double>>();
    const int d = m.encoder.embedding.cols();
    const int h = m.encoder.hidden_w.rows();
    if (m.encoder.embedding.rows() != m.vocab.size() || m.encoder.hidden_w.cols() != 3 * d ||
        static_cast<int>(m.encoder.hidden_b.size()) != h || m.head.weights.cols() != h ||
        m.head.weights.rows() != m.head.size() || static_cast<int>(m.head.bias.size()) != m.head.size()) {
      throw DataError("checkpoint: inconsistent shapes");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace cre
