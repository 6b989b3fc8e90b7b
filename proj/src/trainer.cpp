#include "trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "config_json.hpp"
#include "errors.hpp"

namespace memlab {

using nlohmann::json;

void CurriculumSchedule::validate(int total_epochs) const {
  if (exposure_ratios.empty() || exposure_ratios.size() != boundaries.size())
    throw validation_error("curriculum ratios and boundaries must be non-empty and equal length");
  for (size_t i = 0; i < exposure_ratios.size(); ++i) {
    const double r = exposure_ratios[i];
    if (!(r > 0.0) || r > 1.0) throw validation_error("exposure ratios must lie in (0, 1]");
    if (i > 0 && r <= exposure_ratios[i - 1])
      throw validation_error("exposure ratios must be strictly ascending");
    if (i > 0 && boundaries[i] <= boundaries[i - 1])
      throw validation_error("curriculum boundaries must be strictly ascending");
  }
  if (exposure_ratios.back() != 1.0) throw validation_error("last exposure ratio must be 1.0");
  if (boundaries.front() < 1) throw validation_error("curriculum boundaries must be >= 1");
  if (boundaries.back() != total_epochs)
    throw validation_error("last curriculum boundary must equal the epoch count");
}

double curriculum_ratio(const CurriculumSchedule& schedule, int epoch) {
  if (epoch < 1) throw validation_error("curriculum epoch is 1-based");
  for (size_t i = 0; i < schedule.boundaries.size(); ++i) {
    if (epoch <= schedule.boundaries[i]) return schedule.exposure_ratios[i];
  }
  throw validation_error("epoch beyond the last curriculum boundary");
}

size_t select_batch_count(size_t n_batches, double gamma) {
  if (!(gamma > 0.0) || gamma > 1.0) throw validation_error("exposure ratio must lie in (0, 1]");
  if (n_batches == 0) return 0;
  // Tolerance keeps exact products like 0.2 * 10 from rounding up.
  auto count = static_cast<size_t>(std::ceil(gamma * static_cast<double>(n_batches) - 1e-9));
  if (count < 1) count = 1;
  return std::min(count, n_batches);
}

void TrainConfig::validate() const {
  if (epochs < 0) throw validation_error("epochs must be >= 0");
  if (batch_size < 1) throw validation_error("batch size must be >= 1");
  if (grad_accum < 1) throw validation_error("grad_accum must be >= 1");
  if (!(lr >= 0.0)) throw validation_error("learning rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw validation_error("adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw validation_error("adam eps must be > 0");
  if (checkpoint_every < 1) throw validation_error("checkpoint_every must be >= 1");
  policy.validate();
  if (curriculum) curriculum->validate(epochs);
}

double corpus_mean_loss(const BaseModel& base, const AdapterState& adapter, const Corpus& corpus) {
  double loss_sum = 0.0;
  size_t tokens = 0;
  for (const auto& item : corpus.items) {
    const TokenTrace trace = forward_teacher(base, adapter, item);
    for (const auto& e : trace) loss_sum += e.loss;
    tokens += trace.size();
  }
  if (tokens == 0) throw validation_error("corpus has no answer tokens");
  return loss_sum / static_cast<double>(tokens);
}

CorpusAccuracy corpus_accuracy(const BaseModel& base, const AdapterState& adapter, const Corpus& corpus) {
  CorpusAccuracy acc;
  size_t tokens = 0, correct = 0, exact = 0;
  for (const auto& item : corpus.items) {
    const std::vector<int> out =
        decode_greedy(base, adapter, item.key, static_cast<int>(item.answer.size()));
    const size_t common = std::min(out.size(), item.answer.size());
    for (size_t t = 0; t < common; ++t)
      if (out[t] == item.answer[t]) ++correct;
    tokens += item.answer.size();
    if (out == item.answer) ++exact;
  }
  acc.acc_tok = tokens ? static_cast<double>(correct) / static_cast<double>(tokens) : 0.0;
  acc.acc_em = corpus.items.empty()
                   ? 0.0
                   : static_cast<double>(exact) / static_cast<double>(corpus.items.size());
  return acc;
}

namespace {

struct Adam {
  std::vector<double> m_a, v_a, m_b, v_b;
  long step = 0;

  explicit Adam(const AdapterState& st)
      : m_a(st.a.size(), 0.0), v_a(st.a.size(), 0.0), m_b(st.b.size(), 0.0), v_b(st.b.size(), 0.0) {}

  void update(AdapterState& st, const AdapterGrad& g, const TrainConfig& cfg) {
    ++step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    auto apply = [&](std::vector<double>& p, const std::vector<double>& grad, std::vector<double>& m,
                     std::vector<double>& v) {
      for (size_t i = 0; i < p.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
      }
    };
    apply(st.a, g.a, m_a, v_a);
    apply(st.b, g.b, m_b, v_b);
  }
};

json epoch_to_json(const EpochMetrics& em) {
  json j{{"epoch", em.epoch},
         {"mean_loss", em.mean_loss},
         {"active_fraction", em.active_fraction}};
  j["acc_tok"] = em.acc_tok ? json(*em.acc_tok) : json(nullptr);
  j["acc_em"] = em.acc_em ? json(*em.acc_em) : json(nullptr);
  return j;
}

void dump_traces(const BaseModel& base, const AdapterState& adapter, const Corpus& corpus,
                 const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw train_error("cannot write trace dump: " + path.string());
  for (const auto& item : corpus.items) {
    const TokenTrace trace = forward_teacher(base, adapter, item);
    json entries = json::array();
    for (const auto& e : trace) {
      entries.push_back(json{{"target_id", e.target_id},
                             {"p_target", e.p_target},
                             {"loss", e.loss},
                             {"greedy_id", e.greedy_id}});
    }
    out << json{{"item_id", item.item_id}, {"trace", std::move(entries)}}.dump() << "\n";
  }
}

json run_config_json(const BaseModel& base, const AdapterState& adapter, const Corpus& corpus,
                     const TrainConfig& cfg, const std::string& run_id) {
  json j;
  j["schema_version"] = 1;
  j["run_id"] = run_id;
  j["model"] = to_json(base.config());
  j["adapter"] = to_json(adapter.cfg);
  j["corpus"] = to_json(corpus.spec);
  j["corpus"]["source"] = to_json(corpus.source);
  j["corpus"]["split"] = corpus.split;
  j["train"] = to_json(cfg);
  return j;
}

}  // namespace

RunRecord train(const BaseModel& base, AdapterState& adapter, const Corpus& corpus,
                const TrainConfig& cfg, const std::string& run_id,
                const std::optional<std::filesystem::path>& run_dir) {
  cfg.validate();
  adapter.cfg.validate(base.config());
  if (corpus.items.empty()) throw validation_error("cannot train on an empty corpus");

  const uint64_t base_checksum = base.weight_checksum();

  std::ofstream metrics_out;
  if (run_dir) {
    std::filesystem::create_directories(*run_dir);
    std::ofstream cfg_out(*run_dir / "config.json", std::ios::binary);
    cfg_out << run_config_json(base, adapter, corpus, cfg, run_id).dump(2) << "\n";
    metrics_out.open(*run_dir / "metrics.jsonl", std::ios::binary);
    if (!metrics_out) throw train_error("cannot write metrics.jsonl under " + run_dir->string());
  }

  // Items sorted by answer length then id fixes both batch membership and
  // the curriculum's notion of "earlier" batches.
  std::vector<const MemoryItem*> order;
  order.reserve(corpus.items.size());
  for (const auto& item : corpus.items) order.push_back(&item);
  std::sort(order.begin(), order.end(), [](const MemoryItem* a, const MemoryItem* b) {
    if (a->answer.size() != b->answer.size()) return a->answer.size() < b->answer.size();
    return a->item_id < b->item_id;
  });
  const size_t n_batches =
      (order.size() + static_cast<size_t>(cfg.batch_size) - 1) / static_cast<size_t>(cfg.batch_size);

  std::map<std::string, SlidingState> sw_states;
  for (const auto* item : order) sw_states.emplace(item->item_id, SlidingState::fresh(cfg.policy));

  RunRecord record;
  record.run_id = run_id;
  record.loss_init = corpus_mean_loss(base, adapter, corpus);
  record.loss_final = record.loss_init;

  Adam adam(adapter);
  AdapterGrad step_grad, micro_grad;
  int divergence_streak = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double gamma = cfg.curriculum ? curriculum_ratio(*cfg.curriculum, epoch) : 1.0;
    const size_t visible = select_batch_count(n_batches, gamma);

    size_t active_tokens = 0, seen_tokens = 0;
    for (size_t bi = 0; bi < visible; ++bi) {
      const size_t begin = bi * static_cast<size_t>(cfg.batch_size);
      const size_t end = std::min(begin + static_cast<size_t>(cfg.batch_size), order.size());
      const size_t batch_items = end - begin;
      const size_t chunk =
          (batch_items + static_cast<size_t>(cfg.grad_accum) - 1) / static_cast<size_t>(cfg.grad_accum);
      const size_t n_micro = (batch_items + chunk - 1) / chunk;

      step_grad.a.assign(adapter.a.size(), 0.0);
      step_grad.b.assign(adapter.b.size(), 0.0);
      for (size_t mi = 0; mi < n_micro; ++mi) {
        const size_t mb = begin + mi * chunk;
        const size_t me = std::min(mb + chunk, end);
        micro_grad.a.assign(adapter.a.size(), 0.0);
        micro_grad.b.assign(adapter.b.size(), 0.0);
        for (size_t ii = mb; ii < me; ++ii) {
          const MemoryItem& item = *order[ii];
          TeacherForward fwd(base, adapter, item);
          SlidingState* sw =
              cfg.policy.kind == PolicyKind::memft_sw ? &sw_states.at(item.item_id) : nullptr;
          const std::vector<double> w = policy_weights(fwd.trace(), cfg.policy, sw);
          for (double wt : w) {
            if (wt > cfg.policy.eps_floor) ++active_tokens;
            ++seen_tokens;
          }
          const AdapterGrad g = fwd.backward(w, cfg.policy.eps);
          const double item_scale = 1.0 / static_cast<double>(me - mb);
          for (size_t i = 0; i < micro_grad.a.size(); ++i) micro_grad.a[i] += item_scale * g.a[i];
          for (size_t i = 0; i < micro_grad.b.size(); ++i) micro_grad.b[i] += item_scale * g.b[i];
        }
        for (size_t i = 0; i < step_grad.a.size(); ++i) step_grad.a[i] += micro_grad.a[i];
        for (size_t i = 0; i < step_grad.b.size(); ++i) step_grad.b[i] += micro_grad.b[i];
      }
      const double micro_scale = 1.0 / static_cast<double>(n_micro);
      for (auto& g : step_grad.a) g *= micro_scale;
      for (auto& g : step_grad.b) g *= micro_scale;
      adam.update(adapter, step_grad, cfg);
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.mean_loss = corpus_mean_loss(base, adapter, corpus);
    em.active_fraction =
        seen_tokens ? static_cast<double>(active_tokens) / static_cast<double>(seen_tokens) : 0.0;

    const bool checkpoint = (epoch % cfg.checkpoint_every == 0) || epoch == cfg.epochs;
    if (checkpoint) {
      const CorpusAccuracy acc = corpus_accuracy(base, adapter, corpus);
      em.acc_tok = acc.acc_tok;
      em.acc_em = acc.acc_em;
      record.final_acc_tok = acc.acc_tok;
      record.final_acc_em = acc.acc_em;
      if (run_dir) {
        dump_traces(base, adapter, corpus,
                    *run_dir / ("trace_epoch_" + std::to_string(epoch) + ".jsonl"));
      }
    }
    record.epochs.push_back(em);
    record.epochs_run = epoch;
    if (metrics_out.is_open()) metrics_out << epoch_to_json(em).dump() << "\n";

    if (!std::isfinite(em.mean_loss)) {
      record.diverged = true;
      record.divergence_note = "non-finite loss at epoch " + std::to_string(epoch);
      break;
    }
    record.loss_final = em.mean_loss;
    if (em.mean_loss > 10.0 * record.loss_init) {
      if (++divergence_streak >= 5) {
        record.diverged = true;
        record.divergence_note =
            "loss exceeded 10x initial for 5 consecutive epochs at epoch " + std::to_string(epoch);
        break;
      }
    } else {
      divergence_streak = 0;
    }
  }

  if (cfg.epochs == 0) {
    const CorpusAccuracy acc = corpus_accuracy(base, adapter, corpus);
    record.final_acc_tok = acc.acc_tok;
    record.final_acc_em = acc.acc_em;
  }

  record.delta_l = record.loss_init - record.loss_final;

  if (!record.epochs.empty()) {
    double ema = record.epochs.front().mean_loss;
    std::vector<double> smoothed;
    smoothed.reserve(record.epochs.size());
    for (const auto& em : record.epochs) {
      ema = 0.9 * ema + 0.1 * em.mean_loss;
      smoothed.push_back(ema);
    }
    const size_t tail = smoothed.size() - smoothed.size() * 4 / 5;
    for (size_t i = smoothed.size() - tail; i + 1 < smoothed.size(); ++i) {
      if (smoothed[i + 1] > smoothed[i] * (1.0 + 1e-9)) record.smoothed_tail_nonincreasing = false;
    }
  }

  if (base.weight_checksum() != base_checksum)
    throw train_error("frozen-base invariant violated: base weights changed during training");

  if (run_dir) {
    save_adapter(adapter, *run_dir / "adapter_final.memad");
    save_run_record(record, *run_dir / "record.json");
  }
  return record;
}

void save_run_record(const RunRecord& record, const std::filesystem::path& record_path) {
  json j{{"schema_version", 1},
         {"run_id", record.run_id},
         {"loss_init", record.loss_init},
         {"loss_final", record.loss_final},
         {"delta_l", record.delta_l},
         {"final_acc_tok", record.final_acc_tok},
         {"final_acc_em", record.final_acc_em},
         {"diverged", record.diverged},
         {"divergence_note", record.divergence_note},
         {"epochs_run", record.epochs_run},
         {"smoothed_tail_nonincreasing", record.smoothed_tail_nonincreasing}};
  std::ofstream out(record_path, std::ios::binary);
  if (!out) throw train_error("cannot write run record: " + record_path.string());
  out << j.dump(2) << "\n";
}

RunRecord load_run_record(const std::filesystem::path& record_path) {
  std::ifstream in(record_path, std::ios::binary);
  if (!in) throw train_error("cannot open run record: " + record_path.string());
  json j = json::parse(in);
  RunRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.loss_init = j.at("loss_init").get<double>();
  r.loss_final = j.at("loss_final").get<double>();
  r.delta_l = j.at("delta_l").get<double>();
  r.final_acc_tok = j.at("final_acc_tok").get<double>();
  r.final_acc_em = j.at("final_acc_em").get<double>();
  r.diverged = j.at("diverged").get<bool>();
  r.divergence_note = j.at("divergence_note").get<std::string>();
  r.epochs_run = j.at("epochs_run").get<int>();
  r.smoothed_tail_nonincreasing = j.value("smoothed_tail_nonincreasing", true);
  return r;
}

}  // namespace memlab
