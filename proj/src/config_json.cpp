#include "config_json.hpp"

#include "errors.hpp"

namespace memlab {

using nlohmann::json;

json to_json(const Vocabulary& v) { return json{{"size", v.size}}; }

Vocabulary vocabulary_from_json(const json& j) {
  Vocabulary v;
  v.size = j.at("size").get<int>();
  v.validate();
  return v;
}

json to_json(const CoherentSource& s) {
  return json{{"seed", s.seed}, {"order", s.order}, {"zipf_s", s.zipf_s}};
}

CoherentSource coherent_source_from_json(const json& j) {
  CoherentSource s;
  s.seed = j.value("seed", s.seed);
  s.order = j.value("order", s.order);
  s.zipf_s = j.value("zipf_s", s.zipf_s);
  s.validate();
  return s;
}

json to_json(const BaseModelConfig& c) {
  return json{{"n_layers", c.n_layers}, {"d_model", c.d_model},   {"n_heads", c.n_heads},
              {"d_ff", c.d_ff},         {"max_seq", c.max_seq},   {"vocab_size", c.vocab.size},
              {"init_seed", c.init_seed}};
}

BaseModelConfig base_model_config_from_json(const json& j) {
  BaseModelConfig c;
  c.n_layers = j.value("n_layers", c.n_layers);
  c.d_model = j.value("d_model", c.d_model);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.max_seq = j.value("max_seq", c.max_seq);
  c.vocab.size = j.value("vocab_size", c.vocab.size);
  c.init_seed = j.value("init_seed", c.init_seed);
  c.validate();
  return c;
}

json to_json(const AdapterConfig& c) {
  return json{{"rank", c.rank}, {"layer", c.layer}, {"target", "mlp_down"}, {"init_seed", c.init_seed}};
}

AdapterConfig adapter_config_from_json(const json& j) {
  AdapterConfig c;
  c.rank = j.value("rank", c.rank);
  c.layer = j.value("layer", c.layer);
  c.init_seed = j.value("init_seed", c.init_seed);
  if (j.value("target", "mlp_down") != std::string("mlp_down"))
    throw validation_error("only the mlp_down adapter target is supported");
  return c;
}

json to_json(const CorpusSpec& s) {
  return json{{"kind", corpus_kind_name(s.kind)},
              {"total_answer_tokens", s.total_answer_tokens},
              {"replacement_ratio", s.replacement_ratio},
              {"seed", s.seed},
              {"value_width", s.value_width},
              {"allow_noncanonical_ratio", s.allow_noncanonical_ratio}};
}

CorpusSpec corpus_spec_from_json(const json& j) {
  CorpusSpec s;
  s.kind = corpus_kind_from_name(j.at("kind").get<std::string>());
  s.total_answer_tokens = j.value("total_answer_tokens", 0);
  s.replacement_ratio = j.value("replacement_ratio", 0.0);
  s.seed = j.value("seed", uint64_t{0});
  s.value_width = j.value("value_width", 8);
  s.allow_noncanonical_ratio = j.value("allow_noncanonical_ratio", false);
  return s;
}

json to_json(const WeightingPolicy& p) {
  return json{{"kind", policy_kind_name(p.kind)},
              {"l_crit", p.l_crit},
              {"eps", p.eps},
              {"kappa", p.kappa},
              {"tau", p.tau},
              {"l0", p.l0},
              {"eps_floor", p.eps_floor},
              {"growth", p.growth},
              {"sw_spatial", p.sw_spatial}};
}

WeightingPolicy weighting_policy_from_json(const json& j) {
  WeightingPolicy p;
  p.kind = policy_kind_from_name(j.value("kind", "sft"));
  p.l_crit = j.value("l_crit", p.l_crit);
  p.eps = j.value("eps", p.eps);
  p.kappa = j.value("kappa", p.kappa);
  p.tau = j.value("tau", p.tau);
  p.l0 = j.value("l0", p.l0);
  p.eps_floor = j.value("eps_floor", p.eps_floor);
  p.growth = j.value("growth", p.growth);
  p.sw_spatial = j.value("sw_spatial", p.sw_spatial);
  p.validate();
  return p;
}

json to_json(const CurriculumSchedule& c) {
  return json{{"exposure_ratios", c.exposure_ratios}, {"boundaries", c.boundaries}};
}

CurriculumSchedule curriculum_from_json(const json& j) {
  CurriculumSchedule c;
  c.exposure_ratios = j.at("exposure_ratios").get<std::vector<double>>();
  c.boundaries = j.at("boundaries").get<std::vector<int>>();
  return c;
}

json to_json(const TrainConfig& c) {
  json j{{"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"grad_accum", c.grad_accum},
         {"lr", c.lr},
         {"beta1", c.beta1},
         {"beta2", c.beta2},
         {"adam_eps", c.adam_eps},
         {"seed", c.seed},
         {"checkpoint_every", c.checkpoint_every},
         {"policy", to_json(c.policy)}};
  j["curriculum"] = c.curriculum ? to_json(*c.curriculum) : json(nullptr);
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.grad_accum = j.value("grad_accum", c.grad_accum);
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.seed = j.value("seed", uint64_t{0});
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  if (j.contains("policy")) c.policy = weighting_policy_from_json(j.at("policy"));
  if (j.contains("curriculum") && !j.at("curriculum").is_null())
    c.curriculum = curriculum_from_json(j.at("curriculum"));
  c.validate();
  return c;
}

}  // namespace memlab
