#pragma once

// Synthetic multiplex networks and adoption logs with planted parameters.
//
// Adoptions are drawn in two stages so the target users follow the model
// exactly: context users adopt independently of the network (susceptibility
// plus popularity), then every target user adopts with probability
// 1 - exp(-s_u - p_a(u)) where p_a(u) counts context adopters only.

#include "appnet/model.hpp"
#include "appnet/netdata.hpp"

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace appnet {

enum class WeightDistribution { Uniform, Unit };

struct SynthSpec {
  int num_users = 400;
  int num_context_users = 200;
  int num_apps = 400;
  int num_networks = 4;
  // One density per network; a single entry applies to all.
  std::vector<double> edge_density = {0.03};
  WeightDistribution weights = WeightDistribution::Uniform;
  double w_max = 1.0;
  std::vector<double> planted_alpha = {0.3, 0.15, 0.05, 0.0};
  double planted_alpha_pop = 0.01;
  // Susceptibilities are Exponential(s_rate).
  double s_rate = 30.0;
  // Base popularity C0 per app is Exponential with this mean.
  double popularity_mean = 5.0;
  std::uint64_t seed = 1;

  double density(int network) const;
  void validate() const;
};

nlohmann::json to_json(const SynthSpec& spec);
SynthSpec synth_spec_from_json(const nlohmann::json& j);

NetworkStack gen_networks(const SynthSpec& spec);

// Planted alpha and alpha_pop from the spec, s drawn per user.
ModelParams planted_params(const SynthSpec& spec);

struct TeacherData {
  AdoptionMatrix adoptions;
  std::vector<UserId> context_users;
  std::vector<UserId> target_users;
  // C0 per app: the popularity the teacher used.
  std::vector<double> base_popularity;
};

TeacherData sample_adoptions_teacher(const NetworkStack& stack, const ModelParams& planted,
                                     const SynthSpec& spec);

struct SynthBundle {
  SynthSpec spec;
  NetworkStack stack;  // networks only; popularity left to the consumer
  ModelParams planted;
  TeacherData teacher;
};

SynthBundle make_synth_bundle(const SynthSpec& spec);

// Training data whose likelihood is exactly the teacher's: target users'
// outcomes, context adopters as evidence, C0 as popularity.
TrainingSet teacher_training_set(const SynthBundle& bundle);

struct RecoveryError {
  double rel_l2_alpha = 0.0;
  double cosine_alpha = 0.0;
  double s_rmse = 0.0;
};

// Compares the (alpha, alpha_pop) block and s restricted to `users`
// (every user when empty).
RecoveryError recovery_error(const ModelParams& planted, const ModelParams& recovered,
                             const std::vector<UserId>& users = {});

}  // namespace appnet
