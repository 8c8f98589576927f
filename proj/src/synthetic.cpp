#include "cre/synthetic.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <numeric>

#include "cre/errors.hpp"
#include "cre/rng.hpp"

namespace cre {

std::string_view to_string(AnalogMode m) {
  switch (m) {
    case AnalogMode::argument_order:
      return "argument_order";
    case AnalogMode::discriminative_token:
      return "discriminative_token";
    case AnalogMode::mixed:
      return "mixed";
  }
  return "mixed";
}

AnalogMode parse_analog_mode(std::string_view s) {
  if (s == "argument_order") return AnalogMode::argument_order;
  if (s == "discriminative_token") return AnalogMode::discriminative_token;
  if (s == "mixed") return AnalogMode::mixed;
  throw ConfigError("unknown analog_mode '" + std::string(s) + "'");
}

void SynthConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("synth config: " + m); };
  if (n_relations <= 0) fail("n_relations must be positive");
  if (n_analog_pairs < 0) fail("n_analog_pairs must be non-negative");
  if (2 * n_analog_pairs > n_relations) fail("2*n_analog_pairs exceeds n_relations");
  if (instances_per_relation < 3) fail("instances_per_relation must be at least 3");
  if (!(shortcut_strength >= 0.0 && shortcut_strength <= 1.0)) fail("shortcut_strength outside [0,1]");
  if (!(symmetric_fraction >= 0.0 && symmetric_fraction <= 1.0)) fail("symmetric_fraction outside [0,1]");
  if (!(context_noise >= 0.0 && context_noise <= 1.0)) fail("context_noise outside [0,1]");
  if (entity_type_vocab_size <= 0 || entity_tokens_per_type <= 0) fail("entity vocabulary must be positive");
  if (entity_type_vocab_size * entity_tokens_per_type < 2) fail("need at least two entity tokens");
  if (template_length_min < 4 || template_length_max < template_length_min) {
    fail("template length range must satisfy 4 <= min <= max");
  }
  if (templates_per_relation <= 0 || cue_words_per_relation <= 0 || filler_vocab_size <= 0) {
    fail("template vocabulary sizes must be positive");
  }
  const int n_sym = static_cast<int>(symmetric_fraction * n_relations + 0.5);
  if (n_sym > n_relations - 2 * n_analog_pairs) {
    fail("symmetric relations are drawn from non-analog relations; not enough of them");
  }
}

nlohmann::json to_json(const SynthConfig& c) {
  return {{"n_relations", c.n_relations},
          {"n_analog_pairs", c.n_analog_pairs},
          {"instances_per_relation", c.instances_per_relation},
          {"shortcut_strength", c.shortcut_strength},
          {"entity_type_vocab_size", c.entity_type_vocab_size},
          {"template_length_min", c.template_length_min},
          {"template_length_max", c.template_length_max},
          {"symmetric_fraction", c.symmetric_fraction},
          {"seed", c.seed},
          {"analog_mode", std::string(to_string(c.analog_mode))},
          {"entity_tokens_per_type", c.entity_tokens_per_type},
          {"templates_per_relation", c.templates_per_relation},
          {"cue_words_per_relation", c.cue_words_per_relation},
          {"filler_vocab_size", c.filler_vocab_size},
          {"context_noise", c.context_noise}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("synth config must be a JSON object");
  SynthConfig c;
  const auto known = to_json(c);
  for (const auto& [k, _] : j.items()) {
    if (!known.contains(k)) throw ConfigError("synth config: unknown key '" + k + "'");
  }
  try {
    c.n_relations = j.value("n_relations", c.n_relations);
    c.n_analog_pairs = j.value("n_analog_pairs", c.n_analog_pairs);
    c.instances_per_relation = j.value("instances_per_relation", c.instances_per_relation);
    c.shortcut_strength = j.value("shortcut_strength", c.shortcut_strength);
    c.entity_type_vocab_size = j.value("entity_type_vocab_size", c.entity_type_vocab_size);
    c.template_length_min = j.value("template_length_min", c.template_length_min);
    c.template_length_max = j.value("template_length_max", c.template_length_max);
    c.symmetric_fraction = j.value("symmetric_fraction", c.symmetric_fraction);
    c.seed = j.value("seed", c.seed);
    c.analog_mode = parse_analog_mode(j.value("analog_mode", std::string(to_string(c.analog_mode))));
    c.entity_tokens_per_type = j.value("entity_tokens_per_type", c.entity_tokens_per_type);
    c.templates_per_relation = j.value("templates_per_relation", c.templates_per_relation);
    c.cue_words_per_relation = j.value("cue_words_per_relation", c.cue_words_per_relation);
    c.filler_vocab_size = j.value("filler_vocab_size", c.filler_vocab_size);
    c.context_noise = j.value("context_noise", c.context_noise);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
  c.validate();
  return c;
}

std::optional<int> entity_type_of(std::string_view token) {
  if (token.size() < 4 || token[0] != 'e') return std::nullopt;
  const auto us = token.find('_');
  if (us == std::string_view::npos || us < 2) return std::nullopt;
  int type = 0;
  auto [p, ec] = std::from_chars(token.data() + 1, token.data() + us, type);
  if (ec != std::errc() || p != token.data() + us) return std::nullopt;
  return type;
}

namespace {

struct Template {
  std::vector<std::string> words;  // "" at slot positions
  int slot1 = 0;                   // position of the first entity slot
  int slot2 = 0;                   // position of the second entity slot
  bool head_first = true;          // head entity fills slot1
  int disc_pos = -1;               // position that holds the discriminative token, if any
};

std::string entity_token(int type, int k) { return "e" + std::to_string(type) + "_" + std::to_string(k); }
std::string filler_word(int k) { return "w" + std::to_string(k); }
std::string cue_word(int group, int k) { return "c" + std::to_string(group) + "_" + std::to_string(k); }

Template make_template(const SynthConfig& cfg, int group, Rng& rng) {
  const int len = cfg.template_length_min +
                  static_cast<int>(rng.below(cfg.template_length_max - cfg.template_length_min + 1));
  Template t;
  t.words.assign(len, "");
  // Keep at least one position before slot1, between the slots and after slot2.
  t.slot1 = 1 + static_cast<int>(rng.below(len - 4));
  t.slot2 = t.slot1 + 2 + static_cast<int>(rng.below(len - t.slot1 - 3));
  bool has_cue = false;
  for (int i = 0; i < len; ++i) {
    if (i == t.slot1 || i == t.slot2) continue;
    if (rng.bernoulli(0.5)) {
      t.words[i] =
          cue_word(group, static_cast<int>(rng.below(cfg.cue_words_per_relation)));
      has_cue = true;
    } else {
      t.words[i] =
          filler_word(static_cast<int>(rng.below(cfg.filler_vocab_size)));
    }
  }
  if (!has_cue) t.words[t.slot1 - 1] = cue_word(group, 0);
  t.head_first = rng.bernoulli(0.5);
  t.disc_pos = t.slot2 + 1 + static_cast<int>(rng.below(len - t.slot2 - 1));
  return t;
}

}  // namespace

SyntheticCorpus generate_synthetic_with_truth(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const int n = cfg.n_relations;

  // Role assignment: the first 2P relations of a seeded permutation form analog
  // pairs, symmetric relations come from the rest.
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  std::vector<std::optional<RelId>> analog(n);
  std::vector<AnalogMode> pair_mode(n, AnalogMode::mixed);
  for (int p = 0; p < cfg.n_analog_pairs; ++p) {
    const int a = perm[2 * p];
    const int b = perm[2 * p + 1];
    analog[a] = b;
    analog[b] = a;
    AnalogMode m = cfg.analog_mode;
    if (m == AnalogMode::mixed) m = p % 2 == 0 ? AnalogMode::argument_order : AnalogMode::discriminative_token;
    pair_mode[a] = m;
    pair_mode[b] = m;
  }
  const int n_sym = static_cast<int>(cfg.symmetric_fraction * n + 0.5);
  std::vector<bool> symmetric(n, false);
  for (int i = 0; i < n_sym; ++i) symmetric[perm[static_cast<std::size_t>(2 * cfg.n_analog_pairs + i)]] = true;

  // Entity-type signatures. Argument-order pairs and symmetric relations get
  // homogeneous signatures so that exchanging roles preserves type statistics;
  // both members of an analog pair share one signature.
  const int T = cfg.entity_type_vocab_size;
  std::vector<std::pair<int, int>> diag, off;
  for (int h = 0; h < T; ++h) {
    for (int t = 0; t < T; ++t) (h == t ? diag : off).emplace_back(h, t);
  }
  rng.shuffle(diag);
  rng.shuffle(off);
  if (off.empty()) off = diag;
  std::size_t next_diag = 0, next_off = 0;
  std::vector<std::pair<int, int>> signature(n);
  std::vector<bool> assigned(n, false);
  for (int idx = 0; idx < n; ++idx) {
    const int r = perm[idx];
    if (assigned[r]) continue;
    const bool homogeneous = symmetric[r] ||
                             (analog[r] && pair_mode[r] == AnalogMode::argument_order);
    const auto sig = homogeneous ? diag[next_diag++ % diag.size()] : off[next_off++ % off.size()];
    signature[r] = sig;
    assigned[r] = true;
    if (auto a = analog[r]) {
      signature[*a] = sig;
      assigned[*a] = true;
    }
  }

  // Templates. The second member of a pair copies the first member's templates
  // and either flips the slot roles or swaps in its own discriminative token.
  std::vector<std::vector<Template>> templates(n);
  for (int idx = 0; idx < n; ++idx) {
    const int r = perm[idx];
    auto a = analog[r];
    if (a && !templates[*a].empty()) {
      auto copy = templates[*a];
      for (auto& t : copy) {
        if (pair_mode[r] == AnalogMode::argument_order) {
          t.head_first = !t.head_first;
        } else {
          t.words[t.disc_pos] = "d" + std::to_string(r);
        }
      }
      templates[r] = std::move(copy);
      continue;
    }
    for (int k = 0; k < cfg.templates_per_relation; ++k) {
      auto t = make_template(cfg, r, rng);
      if (a && pair_mode[r] == AnalogMode::discriminative_token) {
        t.words[t.disc_pos] = "d" + std::to_string(r);
      } else {
        t.disc_pos = -1;
      }
      templates[r].push_back(std::move(t));
    }
  }

  SyntheticCorpus out;
  Dataset& ds = out.dataset;
  char name[32];
  for (int r = 0; r < n; ++r) {
    std::snprintf(name, sizeof name, "rel_%02d", r);
    ds.relations.push_back(Relation{r, name, symmetric[r], analog[r]});
  }

  const int pool = T * cfg.entity_tokens_per_type;
  auto draw_entity = [&](int type, bool from_signature) {
    if (from_signature) {
      return entity_token(type, static_cast<int>(rng.below(cfg.entity_tokens_per_type)));
    }
    const int g = static_cast<int>(rng.below(pool));
    return entity_token(g / cfg.entity_tokens_per_type, g % cfg.entity_tokens_per_type);
  };

  for (int r = 0; r < n; ++r) {
    const auto& ts = templates[r];
    const auto [head_type, tail_type] = signature[r];
    for (int k = 0; k < cfg.instances_per_relation; ++k) {
      const auto& t = ts[rng.below(ts.size())];
      const bool planted = rng.bernoulli(cfg.shortcut_strength);
      std::string head = draw_entity(head_type, planted);
      std::string tail;
      do {
        tail = draw_entity(tail_type, planted);
      } while (tail == head);
      bool head_first = t.head_first;
      if (symmetric[r]) head_first = rng.bernoulli(0.5);

      Instance inst;
      std::snprintf(name, sizeof name, "rel_%02d_%04d", r, k);
      inst.id = name;
      inst.relation = r;
      inst.tokens = t.words;
      for (int i = 0; i < static_cast<int>(inst.tokens.size()); ++i) {
        if (i == t.slot1 || i == t.slot2 || i == t.disc_pos) continue;
        if (rng.bernoulli(cfg.context_noise)) {
          inst.tokens[i] =
              filler_word(static_cast<int>(rng.below(cfg.filler_vocab_size)));
        }
      }
      inst.tokens[t.slot1] = head_first ? head : tail;
      inst.tokens[t.slot2] = head_first ? tail : head;
      const Span s1{t.slot1, t.slot1 + 1};
      const Span s2{t.slot2, t.slot2 + 1};
      inst.head = head_first ? s1 : s2;
      inst.tail = head_first ? s2 : s1;
      ds.instances.push_back(std::move(inst));
    }
  }

  ds = assign_splits(std::move(ds), {3, 1, 1}, derive_seed(cfg.seed, {0x5b17}));
  validate_dataset(ds, true);
  out.signatures = std::move(signature);
  return out;
}

Dataset generate_synthetic(const SynthConfig& cfg) { return generate_synthetic_with_truth(cfg).dataset; }

}  // namespace cre
