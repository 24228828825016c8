#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "onion/defense.hpp"
#include "onion/lm.hpp"
#include "onion/parallel.hpp"
#include "onion/rng.hpp"
#include "onion/textcore.hpp"

// Outlier-word elimination as a search over binary deletion masks: a
// discrete particle swarm and a genetic algorithm.
namespace onion::search {

// bit d set = delete token d of the original sentence.
using DeletionMask = std::vector<bool>;

// Throws UsageError unless the mask matches the sentence and keeps a token.
void check_mask(const text::Sentence& s, const DeletionMask& mask);

text::Sentence apply_mask(const text::Sentence& s, const DeletionMask& mask);
std::vector<std::size_t> deleted_indices(const DeletionMask& mask);

// -perplexity(masked sentence).
double pso_score(const lm::PerplexityScorer& scorer, const text::Sentence& original, const DeletionMask& mask);

// p0 - perplexity(masked sentence).
double ga_fitness(const lm::PerplexityScorer& scorer, const text::Sentence& original, const DeletionMask& mask);

// Clears the set bit with the lowest suspicion score when every bit is set.
void repair(DeletionMask& mask, const std::vector<double>& scores);

struct PsoConfig {
  int population = 60;
  int max_iterations = 20;
  double omega_max = 0.8;
  double omega_min = 0.2;
  double p_max = 0.8;
  double p_min = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GaConfig {
  int population = 60;
  int max_iterations = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

inline constexpr double kInitDeleteProbs[3] = {0.1, 0.2, 0.3};
inline constexpr double kWeightFloor = 1e-6;

struct Particle {
  DeletionMask position;
  std::vector<double> velocity;
  DeletionMask best_position;
  double best_score = 0.0;
};

struct Swarm {
  text::Sentence sentence;
  // f_i of the original sentence; drives initialization and repair.
  std::vector<double> suspicion;
  std::vector<Particle> particles;
  DeletionMask global_best;
  double global_best_score = 0.0;
};

// Inertia weight at iteration t.
double inertia(const PsoConfig& cfg, int t);
// Movement probabilities toward the individual / global best, clamped to [0, 1].
double move_prob_individual(const PsoConfig& cfg, int t);
double move_prob_global(const PsoConfig& cfg, int t);
// The same two formulas before clamping.
double raw_move_prob_individual(const PsoConfig& cfg, int t);
double raw_move_prob_global(const PsoConfig& cfg, int t);

// Every particle starts by deleting one token, chosen with weight
// max(f_i, 0) + 1e-6. Velocities are uniform on [-1, 1]. The global best
// starts at the unmodified sentence and is replaced by any better particle.
Swarm pso_init(const lm::PerplexityScorer& scorer, const text::Sentence& s, const PsoConfig& cfg, Rng& rng,
               Exec exec = Exec::parallel);

// One velocity/position/record update at iteration t in [0, T).
// Returns true when the global best score strictly improved.
bool pso_step(const lm::PerplexityScorer& scorer, Swarm& swarm, const PsoConfig& cfg, int t, Rng& rng,
              Exec exec = Exec::parallel);

struct SearchResult {
  DeletionMask mask;
  text::Sentence sentence;
  double score = 0.0;  // pso_score for PSO, ga_fitness for GA
  int iterations = 0;
  // Best score after initialization and after every iteration.
  std::vector<double> best_trace;
};

SearchResult pso_search(const lm::PerplexityScorer& scorer, const text::Sentence& s, const PsoConfig& cfg,
                        Exec exec = Exec::parallel);

// Child = parent1 bits [0, split) + parent2 bits [split, D).
DeletionMask crossover(const DeletionMask& parent1, const DeletionMask& parent2, std::size_t split);

// Deletes the one additional kept token whose removal gives the lowest
// perplexity; no-op when a single token is left.
void mutate(const lm::PerplexityScorer& scorer, const text::Sentence& s, DeletionMask& mask);

SearchResult ga_search(const lm::PerplexityScorer& scorer, const text::Sentence& s, const GaConfig& cfg,
                       Exec exec = Exec::parallel);

// Sanitizers for whole datasets; item i searches with child seed i of cfg.seed.
// Sentences shorter than two tokens pass through unchanged.
defense::Sanitizer pso_sanitizer(const lm::PerplexityScorer& scorer, const PsoConfig& cfg);
defense::Sanitizer ga_sanitizer(const lm::PerplexityScorer& scorer, const GaConfig& cfg);

PsoConfig pso_config_from_json(const nlohmann::json& j, PsoConfig base = {});
GaConfig ga_config_from_json(const nlohmann::json& j, GaConfig base = {});
nlohmann::json to_json(const PsoConfig& cfg);
nlohmann::json to_json(const GaConfig& cfg);

}  // namespace onion::search
