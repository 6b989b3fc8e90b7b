#pragma once

#include <json.hpp>

#include "corpus.hpp"
#include "model.hpp"
#include "objectives.hpp"
#include "tokens.hpp"
#include "trainer.hpp"

namespace memlab {

// JSON round-tripping for every config block that appears in run config
// files. Serialization is stable (alphabetical keys) so identical configs
// produce identical bytes.

nlohmann::json to_json(const Vocabulary& v);
Vocabulary vocabulary_from_json(const nlohmann::json& j);

nlohmann::json to_json(const CoherentSource& s);
CoherentSource coherent_source_from_json(const nlohmann::json& j);

nlohmann::json to_json(const BaseModelConfig& c);
BaseModelConfig base_model_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const AdapterConfig& c);
AdapterConfig adapter_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const CorpusSpec& s);
CorpusSpec corpus_spec_from_json(const nlohmann::json& j);

nlohmann::json to_json(const WeightingPolicy& p);
WeightingPolicy weighting_policy_from_json(const nlohmann::json& j);

nlohmann::json to_json(const CurriculumSchedule& c);
CurriculumSchedule curriculum_from_json(const nlohmann::json& j);

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace memlab
