#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

#include "cre/corpus.hpp"
#include "cre/model.hpp"
#include "cre/rng.hpp"

namespace testutil {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("cre_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::trunc);
  out << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline cre::Instance make_instance(std::string id, std::vector<std::string> tokens, cre::Span head, cre::Span tail,
                                   cre::RelId rel) {
  cre::Instance x;
  x.id = std::move(id);
  x.tokens = std::move(tokens);
  x.head = head;
  x.tail = tail;
  x.relation = rel;
  return x;
}

/// n relations with m instances each ("r<k>"), split 3:1:1 per relation.
inline cre::Dataset toy_dataset(int n_rel, int per_rel, std::uint64_t seed = 1) {
  cre::Dataset ds;
  for (int r = 0; r < n_rel; ++r) ds.relations.push_back({r, "r" + std::to_string(r), false, std::nullopt});
  for (int r = 0; r < n_rel; ++r) {
    for (int i = 0; i < per_rel; ++i) {
      ds.instances.push_back(make_instance("r" + std::to_string(r) + "_" + std::to_string(i),
                                           {"h" + std::to_string(i % 3), "cue" + std::to_string(r), "x",
                                            "t" + std::to_string(i % 2)},
                                           {0, 1}, {3, 4}, r));
    }
  }
  return cre::assign_splits(std::move(ds), {3, 1, 1}, seed);
}

/// Random valid instance: 2..12 tokens, disjoint spans of 1..3 tokens in either order.
inline cre::Instance random_instance(cre::Rng& rng, const std::string& id, cre::RelId rel = 0) {
  const int n = 2 + static_cast<int>(rng.below(11));
  std::vector<std::string> tokens;
  for (int i = 0; i < n; ++i) tokens.push_back("w" + std::to_string(rng.below(20)));
  // cut [0,n) at three sorted points a<=b<=c, first span in [a0,a), second in [b,c)
  const int len1 = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::min(3, n - 1))));
  const int len2 = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::min(3, n - len1))));
  const int gap_total = n - len1 - len2;
  const int before = static_cast<int>(rng.below(static_cast<std::uint64_t>(gap_total + 1)));
  const int between = static_cast<int>(rng.below(static_cast<std::uint64_t>(gap_total - before + 1)));
  cre::Span first{before, before + len1};
  cre::Span second{first.end + between, first.end + between + len2};
  for (int i = first.start; i < first.end; ++i) tokens[i] = id + ":A" + std::to_string(i);
  for (int i = second.start; i < second.end; ++i) tokens[i] = id + ":B" + std::to_string(i);
  const bool head_first = rng.bernoulli(0.5);
  return make_instance(id, std::move(tokens), head_first ? first : second, head_first ? second : first, rel);
}

/// Small model with a random vocabulary, random head and random batch.
struct GradFixture {
  cre::ModelState model;
  std::vector<cre::Example> batch;
};

inline GradFixture random_grad_fixture(std::uint64_t seed) {
  cre::Rng rng(seed);
  std::vector<cre::Instance> xs;
  const int n = 1 + static_cast<int>(rng.below(4));
  for (int i = 0; i < n; ++i) xs.push_back(random_instance(rng, "g" + std::to_string(i)));
  std::vector<const cre::Instance*> ptrs;
  for (const auto& x : xs) ptrs.push_back(&x);

  cre::ModelConfig mc;
  mc.embedding_dim = 2 + static_cast<int>(rng.below(3));
  mc.hidden_dim = 2 + static_cast<int>(rng.below(4));
  mc.context_window = static_cast<int>(rng.below(3));
  mc.init_scale = 0.8;
  GradFixture f;
  f.model = cre::init_model(cre::Vocab::build(ptrs), mc, rng.next());
  const int classes = 2 + static_cast<int>(rng.below(3));
  std::vector<int> ids;
  for (int c = 0; c < classes; ++c) ids.push_back(c * 3);
  f.model.head = cre::expand_classes(f.model.head, ids, 0.8, rng.next());
  for (auto& b : f.model.head.bias) b = rng.uniform(-0.5, 0.5);
  for (const auto& x : xs) {
    f.batch.push_back({cre::featurize(f.model.vocab, x, mc.context_window), ids[rng.below(ids.size())]});
  }
  return f;
}

/// Largest relative gap between analytic and central-difference gradients.
/// Relative to max(|analytic|, |numeric|, 1e-6) so exact zeros do not divide by zero.
inline double max_grad_rel_error(cre::ModelState model, const std::vector<cre::Example>& batch, double eps) {
  const auto analytic = cre::loss_and_grads(model, batch).grads;
  double worst = 0.0;
  auto check = [&](std::vector<double>& params, const std::vector<double>& grads) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double saved = params[i];
      params[i] = saved + eps;
      const double up = cre::batch_loss(model, batch);
      params[i] = saved - eps;
      const double down = cre::batch_loss(model, batch);
      params[i] = saved;
      const double numeric = (up - down) / (2 * eps);
      const double denom = std::max({std::abs(grads[i]), std::abs(numeric), 1e-6});
      worst = std::max(worst, std::abs(grads[i] - numeric) / denom);
    }
  };
  check(model.encoder.embedding.data(), analytic.embedding.data());
  check(model.encoder.hidden_w.data(), analytic.hidden_w.data());
  check(model.encoder.hidden_b, analytic.hidden_b);
  check(model.head.weights.data(), analytic.head_w.data());
  check(model.head.bias, analytic.head_b);
  return worst;
}

/// Eq-by-definition degradation: best score over absolute tasks intro..j-1 minus the score at j.
/// `f1[l]` is the score after absolute task l; entries before `intro` are ignored.
inline double oracle_pd(const std::vector<double>& f1, int intro, int j) {
  double best = -1e300;
  for (int l = intro; l <= j - 1; ++l) best = f1[l] > best ? f1[l] : best;
  return best - f1[j];
}

inline double oracle_fr(const std::vector<double>& f1, int intro, int k) {
  double sum = 0.0;
  for (int j = intro + 1; j <= k; ++j) sum += oracle_pd(f1, intro, j);
  return sum / (k - intro);
}

}  // namespace testutil
