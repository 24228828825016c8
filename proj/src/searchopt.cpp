#include "onion/searchopt.hpp"

#include <algorithm>
#include <cmath>

#include "onion/errors.hpp"

namespace onion::search {

using nlohmann::json;
using text::Sentence;

namespace {

double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }

bool all_set(const DeletionMask& mask) {
  return std::all_of(mask.begin(), mask.end(), [](bool b) { return b; });
}

// Perplexity of every mask in the batch; masks are independent.
std::vector<double> masked_perplexities(const lm::PerplexityScorer& scorer, const Sentence& s,
                                        const std::vector<DeletionMask>& masks, Exec exec) {
  std::vector<double> out(masks.size());
  for_each_index(masks.size(), exec, [&](std::size_t i) { out[i] = scorer.perplexity(apply_mask(s, masks[i])); });
  return out;
}

std::vector<double> suspicion_scores(const defense::SuspicionProfile& prof) {
  std::vector<double> f;
  f.reserve(prof.per_token.size());
  for (const auto& t : prof.per_token) f.push_back(t.score);
  return f;
}

// Greedy extra deletion; returns the perplexity of the resulting mask.
double mutate_scored(const lm::PerplexityScorer& scorer, const Sentence& s, DeletionMask& mask) {
  std::vector<std::size_t> kept;
  for (std::size_t d = 0; d < mask.size(); ++d) {
    if (!mask[d]) kept.push_back(d);
  }
  if (kept.size() < 2) return scorer.perplexity(apply_mask(s, mask));
  std::size_t best = kept.front();
  double best_ppl = lm::kInfinity;
  bool found = false;
  for (std::size_t d : kept) {
    mask[d] = true;
    const double ppl = scorer.perplexity(apply_mask(s, mask));
    mask[d] = false;
    if (!found || ppl < best_ppl) {
      best = d;
      best_ppl = ppl;
      found = true;
    }
  }
  mask[best] = true;
  return best_ppl;
}

}  // namespace

void check_mask(const Sentence& s, const DeletionMask& mask) {
  if (mask.size() != s.size()) throw UsageError("deletion mask length differs from sentence length");
  if (all_set(mask)) throw UsageError("deletion mask removes every token");
}

Sentence apply_mask(const Sentence& s, const DeletionMask& mask) {
  Sentence out;
  for (std::size_t d = 0; d < s.size(); ++d) {
    if (!mask[d]) out.tokens.push_back(s[d]);
  }
  return out;
}

std::vector<std::size_t> deleted_indices(const DeletionMask& mask) {
  std::vector<std::size_t> out;
  for (std::size_t d = 0; d < mask.size(); ++d) {
    if (mask[d]) out.push_back(d);
  }
  return out;
}

double pso_score(const lm::PerplexityScorer& scorer, const Sentence& original, const DeletionMask& mask) {
  check_mask(original, mask);
  return -scorer.perplexity(apply_mask(original, mask));
}

double ga_fitness(const lm::PerplexityScorer& scorer, const Sentence& original, const DeletionMask& mask) {
  check_mask(original, mask);
  return scorer.perplexity(original) - scorer.perplexity(apply_mask(original, mask));
}

void repair(DeletionMask& mask, const std::vector<double>& scores) {
  if (mask.empty() || !all_set(mask)) return;
  std::size_t lowest = 0;
  for (std::size_t d = 1; d < mask.size(); ++d) {
    if (scores[d] < scores[lowest]) lowest = d;
  }
  mask[lowest] = false;
}

void PsoConfig::validate() const {
  if (population < 1) throw UsageError("PSO population must be >= 1");
  if (max_iterations < 1) throw UsageError("PSO max_iterations must be >= 1");
  if (!(omega_min > 0.0 && omega_min < omega_max && omega_max < 1.0)) {
    throw UsageError("PSO needs 0 < omega_min < omega_max < 1");
  }
  if (!(p_min > 0.0 && p_min < p_max && p_max < 1.0)) throw UsageError("PSO needs 0 < p_min < p_max < 1");
}

void GaConfig::validate() const {
  if (population < 2) throw UsageError("GA population must be >= 2");
  if (max_iterations < 1) throw UsageError("GA max_iterations must be >= 1");
}

double inertia(const PsoConfig& cfg, int t) {
  const double T = cfg.max_iterations;
  return (cfg.omega_max - cfg.omega_min) * (T - t) / T + cfg.omega_min;
}

double raw_move_prob_individual(const PsoConfig& cfg, int t) {
  return cfg.p_max - static_cast<double>(t) / cfg.max_iterations * (cfg.p_max - cfg.p_min);
}

double raw_move_prob_global(const PsoConfig& cfg, int t) {
  return cfg.p_min - static_cast<double>(t) / cfg.max_iterations * (cfg.p_max - cfg.p_min);
}

double move_prob_individual(const PsoConfig& cfg, int t) {
  return std::clamp(raw_move_prob_individual(cfg, t), 0.0, 1.0);
}

double move_prob_global(const PsoConfig& cfg, int t) { return std::clamp(raw_move_prob_global(cfg, t), 0.0, 1.0); }

Swarm pso_init(const lm::PerplexityScorer& scorer, const Sentence& s, const PsoConfig& cfg, Rng& rng, Exec exec) {
  cfg.validate();
  if (s.size() < 2) throw UsageError("PSO search needs a sentence of at least two tokens");
  const auto prof = defense::suspicion_profile(scorer, s);

  Swarm swarm;
  swarm.sentence = s;
  swarm.suspicion = suspicion_scores(prof);
  std::vector<double> weights;
  for (double f : swarm.suspicion) weights.push_back(std::max(f, 0.0) + kWeightFloor);

  const std::size_t dims = s.size();
  std::vector<DeletionMask> positions;
  for (int n = 0; n < cfg.population; ++n) {
    Particle p;
    p.position.assign(dims, false);
    p.position[rng.weighted_index(weights)] = true;
    p.velocity.resize(dims);
    for (auto& v : p.velocity) v = rng.uniform(-1.0, 1.0);
    positions.push_back(p.position);
    swarm.particles.push_back(std::move(p));
  }
  const auto ppl = masked_perplexities(scorer, s, positions, exec);

  swarm.global_best.assign(dims, false);
  swarm.global_best_score = -prof.p0;
  for (std::size_t n = 0; n < swarm.particles.size(); ++n) {
    auto& p = swarm.particles[n];
    p.best_position = p.position;
    p.best_score = -ppl[n];
    if (p.best_score > swarm.global_best_score) {
      swarm.global_best_score = p.best_score;
      swarm.global_best = p.best_position;
    }
  }
  return swarm;
}

bool pso_step(const lm::PerplexityScorer& scorer, Swarm& swarm, const PsoConfig& cfg, int t, Rng& rng, Exec exec) {
  if (t < 0 || t >= cfg.max_iterations) throw UsageError("pso_step: iteration out of range");
  const double omega = inertia(cfg, t);
  const double p_ind = move_prob_individual(cfg, t);
  const double p_glob = move_prob_global(cfg, t);
  const auto& gbest = swarm.global_best;

  std::vector<DeletionMask> positions;
  positions.reserve(swarm.particles.size());
  for (auto& p : swarm.particles) {
    for (std::size_t d = 0; d < p.position.size(); ++d) {
      const double toward_own = p.best_position[d] == p.position[d] ? 1.0 : -1.0;
      const double toward_global = gbest[d] == p.position[d] ? 1.0 : -1.0;
      p.velocity[d] = omega * p.velocity[d] + (1.0 - omega) * (toward_own + toward_global);
    }
    if (rng.bernoulli(p_ind)) {
      for (std::size_t d = 0; d < p.position.size(); ++d) {
        if (rng.uniform01() < logistic(p.velocity[d])) p.position[d] = p.best_position[d];
      }
    }
    if (rng.bernoulli(p_glob)) {
      for (std::size_t d = 0; d < p.position.size(); ++d) {
        if (rng.uniform01() < logistic(p.velocity[d])) p.position[d] = gbest[d];
      }
    }
    repair(p.position, swarm.suspicion);
    positions.push_back(p.position);
  }

  const auto ppl = masked_perplexities(scorer, swarm.sentence, positions, exec);
  bool improved = false;
  for (std::size_t n = 0; n < swarm.particles.size(); ++n) {
    auto& p = swarm.particles[n];
    const double score = -ppl[n];
    if (score > p.best_score) {
      p.best_score = score;
      p.best_position = p.position;
    }
    if (score > swarm.global_best_score) {
      swarm.global_best_score = score;
      swarm.global_best = p.position;
      improved = true;
    }
  }
  return improved;
}

SearchResult pso_search(const lm::PerplexityScorer& scorer, const Sentence& s, const PsoConfig& cfg, Exec exec) {
  Rng rng(cfg.seed);
  Swarm swarm = pso_init(scorer, s, cfg, rng, exec);
  SearchResult res;
  res.best_trace.push_back(swarm.global_best_score);
  for (int t = 0; t < cfg.max_iterations; ++t) {
    const bool improved = pso_step(scorer, swarm, cfg, t, rng, exec);
    ++res.iterations;
    res.best_trace.push_back(swarm.global_best_score);
    if (!improved) break;
  }
  res.mask = swarm.global_best;
  res.sentence = apply_mask(s, res.mask);
  res.score = swarm.global_best_score;
  return res;
}

DeletionMask crossover(const DeletionMask& parent1, const DeletionMask& parent2, std::size_t split) {
  if (parent1.size() != parent2.size()) throw UsageError("crossover: parent lengths differ");
  if (split > parent1.size()) throw UsageError("crossover: split point out of range");
  DeletionMask child(parent1.begin(), parent1.begin() + static_cast<std::ptrdiff_t>(split));
  child.insert(child.end(), parent2.begin() + static_cast<std::ptrdiff_t>(split), parent2.end());
  return child;
}

void mutate(const lm::PerplexityScorer& scorer, const Sentence& s, DeletionMask& mask) {
  check_mask(s, mask);
  mutate_scored(scorer, s, mask);
}

SearchResult ga_search(const lm::PerplexityScorer& scorer, const Sentence& s, const GaConfig& cfg, Exec exec) {
  cfg.validate();
  if (s.size() < 2) throw UsageError("GA search needs a sentence of at least two tokens");
  Rng rng(cfg.seed);
  const auto prof = defense::suspicion_profile(scorer, s);
  const auto suspicion = suspicion_scores(prof);
  const double p0 = prof.p0;
  const std::size_t dims = s.size();
  const auto n = static_cast<std::size_t>(cfg.population);

  std::vector<DeletionMask> population(n);
  for (auto& mask : population) {
    const double q = kInitDeleteProbs[rng.uniform_index(3)];
    mask.resize(dims);
    for (std::size_t d = 0; d < dims; ++d) mask[d] = rng.bernoulli(q);
    repair(mask, suspicion);
  }
  std::vector<double> fitness(n);
  {
    const auto ppl = masked_perplexities(scorer, s, population, exec);
    for (std::size_t i = 0; i < n; ++i) fitness[i] = p0 - ppl[i];
  }

  SearchResult res;
  res.mask.assign(dims, false);
  res.score = 0.0;
  auto record = [&]() {
    const auto it = std::max_element(fitness.begin(), fitness.end());
    const bool improved = *it > res.score;
    if (improved) {
      res.score = *it;
      res.mask = population[static_cast<std::size_t>(it - fitness.begin())];
    }
    res.best_trace.push_back(res.score);
    return improved;
  };
  record();

  std::vector<double> weights(n);
  for (int t = 0; t < cfg.max_iterations; ++t) {
    const double lowest = *std::min_element(fitness.begin(), fitness.end());
    for (std::size_t i = 0; i < n; ++i) weights[i] = fitness[i] - lowest + kWeightFloor;
    std::vector<DeletionMask> children(n);
    for (auto& child : children) {
      const auto& a = population[rng.weighted_index(weights)];
      const auto& b = population[rng.weighted_index(weights)];
      child = crossover(a, b, 1 + rng.uniform_index(dims - 1));
      repair(child, suspicion);
    }
    std::vector<double> ppl(n);
    for_each_index(n, exec, [&](std::size_t i) { ppl[i] = mutate_scored(scorer, s, children[i]); });
    population = std::move(children);
    for (std::size_t i = 0; i < n; ++i) fitness[i] = p0 - ppl[i];
    ++res.iterations;
    if (!record()) break;
  }
  res.sentence = apply_mask(s, res.mask);
  return res;
}

namespace {

template <typename Config, typename SearchFn>
defense::Sanitizer make_sanitizer(const lm::PerplexityScorer& scorer, Config cfg, SearchFn fn) {
  cfg.validate();
  return [&scorer, cfg, fn](const Sentence& s, std::size_t item) {
    if (s.size() < 2) return defense::Sanitized{s, {}};
    Config local = cfg;
    local.seed = Rng::derive_seed(cfg.seed, item);
    auto res = fn(scorer, s, local, Exec::serial);
    return defense::Sanitized{std::move(res.sentence), deleted_indices(res.mask)};
  };
}

}  // namespace

defense::Sanitizer pso_sanitizer(const lm::PerplexityScorer& scorer, const PsoConfig& cfg) {
  return make_sanitizer(scorer, cfg, [](const auto& sc, const Sentence& s, const PsoConfig& c, Exec e) {
    return pso_search(sc, s, c, e);
  });
}

defense::Sanitizer ga_sanitizer(const lm::PerplexityScorer& scorer, const GaConfig& cfg) {
  return make_sanitizer(scorer, cfg, [](const auto& sc, const Sentence& s, const GaConfig& c, Exec e) {
    return ga_search(sc, s, c, e);
  });
}

PsoConfig pso_config_from_json(const json& j, PsoConfig base) {
  try {
    base.population = j.value("N", base.population);
    base.max_iterations = j.value("T", base.max_iterations);
    base.omega_max = j.value("omega_max", base.omega_max);
    base.omega_min = j.value("omega_min", base.omega_min);
    base.p_max = j.value("p_max", base.p_max);
    base.p_min = j.value("p_min", base.p_min);
    base.seed = j.value("seed", base.seed);
  } catch (const json::exception& e) {
    throw UsageError(std::string("invalid PSO config: ") + e.what());
  }
  base.validate();
  return base;
}

GaConfig ga_config_from_json(const json& j, GaConfig base) {
  try {
    base.population = j.value("N", base.population);
    base.max_iterations = j.value("T", base.max_iterations);
    base.seed = j.value("seed", base.seed);
  } catch (const json::exception& e) {
    throw UsageError(std::string("invalid GA config: ") + e.what());
  }
  base.validate();
  return base;
}

json to_json(const PsoConfig& cfg) {
  return {{"N", cfg.population},     {"T", cfg.max_iterations}, {"omega_max", cfg.omega_max},
          {"omega_min", cfg.omega_min}, {"p_max", cfg.p_max},    {"p_min", cfg.p_min},
          {"seed", cfg.seed}};
}

json to_json(const GaConfig& cfg) { return {{"N", cfg.population}, {"T", cfg.max_iterations}, {"seed", cfg.seed}}; }

}  // namespace onion::search
