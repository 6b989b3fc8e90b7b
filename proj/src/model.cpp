#include "model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "errors.hpp"
#include "prng.hpp"

namespace memlab {

void BaseModelConfig::validate() const {
  vocab.validate();
  if (n_layers < 1) throw validation_error("model needs at least one layer");
  if (d_model < 1 || d_ff < 1) throw validation_error("model dimensions must be positive");
  if (n_heads < 1 || d_model % n_heads != 0)
    throw validation_error("d_model must be divisible by n_heads");
  if (max_seq < 4) throw validation_error("max_seq too small");
}

void AdapterConfig::validate(const BaseModelConfig& base) const {
  if (rank < 1) throw validation_error("adapter rank must be >= 1");
  if (rank > std::min(base.d_ff, base.d_model))
    throw validation_error("adapter rank must stay below min(d_ff, d_model)");
  if (layer < 0 || layer >= base.n_layers) throw validation_error("adapter layer out of range");
}

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

double gelu(double x) {
  double u = kGeluC * (x + 0.044715 * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_deriv(double x) {
  double u = kGeluC * (x + 0.044715 * x * x * x);
  double t = std::tanh(u);
  double sech2 = 1.0 - t * t;
  return 0.5 * (1.0 + t) + 0.5 * x * sech2 * kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
}

// y = W x + bias, W row-major [out x in]; bias may be null.
void matvec(const double* w, int out, int in, const double* x, const double* bias, double* y) {
  for (int o = 0; o < out; ++o) {
    const double* row = w + static_cast<size_t>(o) * in;
    double s = bias ? bias[o] : 0.0;
    for (int i = 0; i < in; ++i) s += row[i] * x[i];
    y[o] = s;
  }
}

// y += W^T d, accumulating into y[in].
void matvec_t_acc(const double* w, int out, int in, const double* d, double* y) {
  for (int o = 0; o < out; ++o) {
    double s = d[o];
    if (s == 0.0) continue;
    const double* row = w + static_cast<size_t>(o) * in;
    for (int i = 0; i < in; ++i) y[i] += s * row[i];
  }
}

void layer_norm(const double* x, const double* g, const double* b, int d, double* y, double* hat,
                double* rstd_out) {
  double mean = 0.0;
  for (int i = 0; i < d; ++i) mean += x[i];
  mean /= d;
  double var = 0.0;
  for (int i = 0; i < d; ++i) {
    double c = x[i] - mean;
    var += c * c;
  }
  var /= d;
  double rstd = 1.0 / std::sqrt(var + 1e-5);
  for (int i = 0; i < d; ++i) {
    double h = (x[i] - mean) * rstd;
    hat[i] = h;
    y[i] = g[i] * h + b[i];
  }
  *rstd_out = rstd;
}

// Input gradient of layer norm given the stored normalized values.
void layer_norm_backward(const double* hat, double rstd, const double* g, const double* dy, int d,
                         double* dx_acc) {
  double m1 = 0.0, m2 = 0.0;
  for (int i = 0; i < d; ++i) {
    double dh = g[i] * dy[i];
    m1 += dh;
    m2 += dh * hat[i];
  }
  m1 /= d;
  m2 /= d;
  for (int i = 0; i < d; ++i) {
    double dh = g[i] * dy[i];
    dx_acc[i] += rstd * (dh - m1 - hat[i] * m2);
  }
}

struct LayerActs {
  std::vector<double> ln1_hat, ln2_hat;  // [T x d]
  std::vector<double> ln1_rstd, ln2_rstd;
  std::vector<double> q, k, v, ctx;  // [T x d]
  std::vector<double> att;           // [H x T x T], rows past the diagonal are zero
  std::vector<double> ff1, gelu_out;  // [T x d_ff]
};

struct Acts {
  int T = 0;
  std::vector<LayerActs> layers;
  std::vector<double> lnf_hat;  // [T x d]
  std::vector<double> lnf_rstd;
  std::vector<double> nf;  // [T x d], final layer-normed stream
};

// Full causal forward over seq, recording everything backward needs.
Acts transformer_forward(const BaseModel& m, const double* adapter_a, const double* adapter_b,
                         const AdapterConfig& acfg, const std::vector<int>& seq) {
  const auto& cfg = m.config();
  const int T = static_cast<int>(seq.size());
  const int d = cfg.d_model;
  const int dff = cfg.d_ff;
  const int H = cfg.n_heads;
  const int hs = d / H;
  const double inv_sqrt_hs = 1.0 / std::sqrt(static_cast<double>(hs));

  Acts acts;
  acts.T = T;
  acts.layers.resize(static_cast<size_t>(cfg.n_layers));
  acts.lnf_hat.resize(static_cast<size_t>(T) * d);
  acts.lnf_rstd.resize(static_cast<size_t>(T));
  acts.nf.resize(static_cast<size_t>(T) * d);

  std::vector<double> x(static_cast<size_t>(T) * d);
  for (int p = 0; p < T; ++p) {
    const double* te = m.wte.data() + static_cast<size_t>(seq[static_cast<size_t>(p)]) * d;
    const double* pe = m.wpe.data() + static_cast<size_t>(p) * d;
    double* row = x.data() + static_cast<size_t>(p) * d;
    for (int i = 0; i < d; ++i) row[i] = te[i] + pe[i];
  }

  std::vector<double> n1(static_cast<size_t>(d)), scratch_d(static_cast<size_t>(d));
  std::vector<double> n2(static_cast<size_t>(d));
  std::vector<double> u(static_cast<size_t>(acfg.rank));

  for (int l = 0; l < cfg.n_layers; ++l) {
    const auto& w = m.layers[static_cast<size_t>(l)];
    auto& a = acts.layers[static_cast<size_t>(l)];
    a.ln1_hat.resize(static_cast<size_t>(T) * d);
    a.ln2_hat.resize(static_cast<size_t>(T) * d);
    a.ln1_rstd.resize(static_cast<size_t>(T));
    a.ln2_rstd.resize(static_cast<size_t>(T));
    a.q.resize(static_cast<size_t>(T) * d);
    a.k.resize(static_cast<size_t>(T) * d);
    a.v.resize(static_cast<size_t>(T) * d);
    a.ctx.resize(static_cast<size_t>(T) * d);
    a.att.assign(static_cast<size_t>(H) * T * T, 0.0);
    a.ff1.resize(static_cast<size_t>(T) * dff);
    a.gelu_out.resize(static_cast<size_t>(T) * dff);

    // attention
    for (int p = 0; p < T; ++p) {
      double* xp = x.data() + static_cast<size_t>(p) * d;
      layer_norm(xp, w.ln1_g.data(), w.ln1_b.data(), d, n1.data(),
                 a.ln1_hat.data() + static_cast<size_t>(p) * d, &a.ln1_rstd[static_cast<size_t>(p)]);
      matvec(w.wq.data(), d, d, n1.data(), w.bq.data(), a.q.data() + static_cast<size_t>(p) * d);
      matvec(w.wk.data(), d, d, n1.data(), w.bk.data(), a.k.data() + static_cast<size_t>(p) * d);
      matvec(w.wv.data(), d, d, n1.data(), w.bv.data(), a.v.data() + static_cast<size_t>(p) * d);
    }
    for (int h = 0; h < H; ++h) {
      const int oh = h * hs;
      for (int p = 0; p < T; ++p) {
        const double* qp = a.q.data() + static_cast<size_t>(p) * d + oh;
        double* att_row = a.att.data() + (static_cast<size_t>(h) * T + p) * T;
        double maxs = -std::numeric_limits<double>::infinity();
        for (int j = 0; j <= p; ++j) {
          const double* kj = a.k.data() + static_cast<size_t>(j) * d + oh;
          double s = 0.0;
          for (int i = 0; i < hs; ++i) s += qp[i] * kj[i];
          s *= inv_sqrt_hs;
          att_row[j] = s;
          if (s > maxs) maxs = s;
        }
        double denom = 0.0;
        for (int j = 0; j <= p; ++j) {
          att_row[j] = std::exp(att_row[j] - maxs);
          denom += att_row[j];
        }
        double* ctx = a.ctx.data() + static_cast<size_t>(p) * d + oh;
        for (int i = 0; i < hs; ++i) ctx[i] = 0.0;
        for (int j = 0; j <= p; ++j) {
          att_row[j] /= denom;
          const double* vj = a.v.data() + static_cast<size_t>(j) * d + oh;
          for (int i = 0; i < hs; ++i) ctx[i] += att_row[j] * vj[i];
        }
      }
    }
    for (int p = 0; p < T; ++p) {
      matvec(w.wo.data(), d, d, a.ctx.data() + static_cast<size_t>(p) * d, w.bo.data(),
             scratch_d.data());
      double* xp = x.data() + static_cast<size_t>(p) * d;
      for (int i = 0; i < d; ++i) xp[i] += scratch_d[i];
    }

    // MLP, with the adapter residual on the down-projection of its layer
    for (int p = 0; p < T; ++p) {
      double* xp = x.data() + static_cast<size_t>(p) * d;
      layer_norm(xp, w.ln2_g.data(), w.ln2_b.data(), d, n2.data(),
                 a.ln2_hat.data() + static_cast<size_t>(p) * d, &a.ln2_rstd[static_cast<size_t>(p)]);
      double* ff1 = a.ff1.data() + static_cast<size_t>(p) * dff;
      matvec(w.w1.data(), dff, d, n2.data(), w.b1.data(), ff1);
      double* g = a.gelu_out.data() + static_cast<size_t>(p) * dff;
      for (int i = 0; i < dff; ++i) g[i] = gelu(ff1[i]);
      matvec(w.w2.data(), d, dff, g, w.b2.data(), scratch_d.data());
      if (l == acfg.layer) {
        matvec(adapter_a, acfg.rank, dff, g, nullptr, u.data());
        for (int mrow = 0; mrow < d; ++mrow) {
          const double* brow = adapter_b + static_cast<size_t>(mrow) * acfg.rank;
          double s = 0.0;
          for (int i = 0; i < acfg.rank; ++i) s += brow[i] * u[i];
          scratch_d[static_cast<size_t>(mrow)] += s;
        }
      }
      for (int i = 0; i < d; ++i) xp[i] += scratch_d[i];
    }
  }

  for (int p = 0; p < T; ++p) {
    layer_norm(x.data() + static_cast<size_t>(p) * d, m.lnf_g.data(), m.lnf_b.data(), d,
               acts.nf.data() + static_cast<size_t>(p) * d,
               acts.lnf_hat.data() + static_cast<size_t>(p) * d, &acts.lnf_rstd[static_cast<size_t>(p)]);
  }
  return acts;
}

std::vector<int> build_sequence(const Vocabulary& vocab, const std::vector<int>& key,
                                const std::vector<int>& answer) {
  std::vector<int> seq;
  seq.reserve(key.size() + answer.size() + 2);
  seq.push_back(vocab.bos_id());
  seq.insert(seq.end(), key.begin(), key.end());
  seq.push_back(vocab.sep_id());
  seq.insert(seq.end(), answer.begin(), answer.end());
  return seq;
}

int argmax_lowest(const double* v, int n) {
  int best = 0;
  for (int i = 1; i < n; ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace

BaseModel::BaseModel(const BaseModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  SplitMix64 rng(derive_seed(cfg.init_seed, {seed_tag::model_init}));
  const int d = cfg.d_model;
  const int dff = cfg.d_ff;
  const int V = cfg.vocab.total();

  // Projections use 1/sqrt(fan_in). The head scale matters most: with a
  // frozen head and layer-normed hidden states the reachable logit gap is
  // bounded by |head row| * sqrt(d_model), which must comfortably exceed
  // ln(V) + lse slack for any token to become dominant; 2/sqrt(d) leaves
  // roughly a 2x margin at the default sizes.
  auto gauss_fill = [&](std::vector<double>& vec, size_t n, double sigma) {
    vec.resize(n);
    for (auto& w : vec) w = sigma * rng.gaussian();
  };
  const double proj = 1.0 / std::sqrt(static_cast<double>(d));
  const double head = 2.0 / std::sqrt(static_cast<double>(d));

  gauss_fill(wte, static_cast<size_t>(V) * d, 0.02);
  gauss_fill(wpe, static_cast<size_t>(cfg.max_seq) * d, 0.02);
  layers.resize(static_cast<size_t>(cfg.n_layers));
  for (auto& l : layers) {
    l.ln1_g.assign(static_cast<size_t>(d), 1.0);
    l.ln1_b.assign(static_cast<size_t>(d), 0.0);
    l.ln2_g.assign(static_cast<size_t>(d), 1.0);
    l.ln2_b.assign(static_cast<size_t>(d), 0.0);
    gauss_fill(l.wq, static_cast<size_t>(d) * d, proj);
    gauss_fill(l.wk, static_cast<size_t>(d) * d, proj);
    gauss_fill(l.wv, static_cast<size_t>(d) * d, proj);
    gauss_fill(l.wo, static_cast<size_t>(d) * d, proj);
    l.bq.assign(static_cast<size_t>(d), 0.0);
    l.bk.assign(static_cast<size_t>(d), 0.0);
    l.bv.assign(static_cast<size_t>(d), 0.0);
    l.bo.assign(static_cast<size_t>(d), 0.0);
    gauss_fill(l.w1, static_cast<size_t>(dff) * d, proj);
    l.b1.assign(static_cast<size_t>(dff), 0.0);
    gauss_fill(l.w2, static_cast<size_t>(d) * dff, 1.0 / std::sqrt(static_cast<double>(dff)));
    l.b2.assign(static_cast<size_t>(d), 0.0);
  }
  lnf_g.assign(static_cast<size_t>(d), 1.0);
  lnf_b.assign(static_cast<size_t>(d), 0.0);
  gauss_fill(w_head, static_cast<size_t>(V) * d, head);
}

uint64_t BaseModel::weight_checksum() const {
  uint64_t h = 0xCBF29CE484222325ULL;
  auto feed = [&](const std::vector<double>& v) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(v.data());
    for (size_t i = 0; i < v.size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 0x100000001B3ULL;
    }
  };
  feed(wte);
  feed(wpe);
  for (const auto& l : layers) {
    feed(l.ln1_g);
    feed(l.ln1_b);
    feed(l.ln2_g);
    feed(l.ln2_b);
    feed(l.wq);
    feed(l.wk);
    feed(l.wv);
    feed(l.wo);
    feed(l.bq);
    feed(l.bk);
    feed(l.bv);
    feed(l.bo);
    feed(l.w1);
    feed(l.b1);
    feed(l.w2);
    feed(l.b2);
  }
  feed(lnf_g);
  feed(lnf_b);
  feed(w_head);
  return h;
}

AdapterState AdapterState::init(const AdapterConfig& cfg, const BaseModelConfig& base) {
  cfg.validate(base);
  AdapterState st;
  st.cfg = cfg;
  st.a.resize(static_cast<size_t>(cfg.rank) * base.d_ff);
  st.b.assign(static_cast<size_t>(base.d_model) * cfg.rank, 0.0);
  SplitMix64 rng(derive_seed(cfg.init_seed, {seed_tag::adapter}));
  const double bound = 1.0 / std::sqrt(static_cast<double>(base.d_ff));
  for (auto& w : st.a) w = (2.0 * rng.unit() - 1.0) * bound;
  return st;
}

struct TeacherForward::Impl {
  const BaseModel* base;
  AdapterConfig acfg;
  std::vector<double> A, B;
  std::vector<int> seq;
  int K = 0, L = 0;
  Acts acts;
  std::vector<double> probs;  // [L x V]
  TokenTrace trace;
};

TeacherForward::TeacherForward(const BaseModel& base, const AdapterState& adapter,
                               const MemoryItem& item, std::vector<LogitNudge> nudges)
    : impl_(std::make_unique<Impl>()) {
  const auto& cfg = base.config();
  adapter.cfg.validate(cfg);
  if (static_cast<int>(adapter.a.size()) != adapter.cfg.rank * cfg.d_ff ||
      static_cast<int>(adapter.b.size()) != cfg.d_model * adapter.cfg.rank)
    throw validation_error("adapter matrices do not match the model dimensions");
  if (item.answer.empty()) throw validation_error("item has an empty answer");
  const int total = static_cast<int>(item.key.size() + item.answer.size()) + 2;
  if (total > cfg.max_seq) throw validation_error("sequence exceeds model capacity");
  for (int tok : item.key)
    if (tok < 0 || tok >= cfg.vocab.total()) throw validation_error("key token out of range");
  for (int tok : item.answer)
    if (tok < 0 || tok >= cfg.vocab.total()) throw validation_error("answer token out of range");

  impl_->base = &base;
  impl_->acfg = adapter.cfg;
  impl_->A = adapter.a;
  impl_->B = adapter.b;
  impl_->seq = build_sequence(cfg.vocab, item.key, item.answer);
  impl_->K = static_cast<int>(item.key.size());
  impl_->L = static_cast<int>(item.answer.size());

  impl_->acts = transformer_forward(base, impl_->A.data(), impl_->B.data(), impl_->acfg, impl_->seq);

  const int V = cfg.vocab.total();
  const int d = cfg.d_model;
  impl_->probs.resize(static_cast<size_t>(impl_->L) * V);
  impl_->trace.resize(static_cast<size_t>(impl_->L));
  std::vector<double> logits(static_cast<size_t>(V));
  for (int i = 0; i < impl_->L; ++i) {
    const int p = impl_->K + 1 + i;
    const int target = impl_->seq[static_cast<size_t>(p) + 1];
    matvec(base.w_head.data(), V, d, impl_->acts.nf.data() + static_cast<size_t>(p) * d, nullptr,
           logits.data());
    for (const auto& n : nudges) {
      if (n.answer_pos == i) {
        if (n.token_id < 0 || n.token_id >= V) throw validation_error("nudge token out of range");
        logits[static_cast<size_t>(n.token_id)] += n.delta;
      }
    }
    double maxl = logits[0];
    for (int v = 1; v < V; ++v) maxl = std::max(maxl, logits[static_cast<size_t>(v)]);
    double denom = 0.0;
    double* prow = impl_->probs.data() + static_cast<size_t>(i) * V;
    for (int v = 0; v < V; ++v) {
      prow[v] = std::exp(logits[static_cast<size_t>(v)] - maxl);
      denom += prow[v];
    }
    for (int v = 0; v < V; ++v) prow[v] /= denom;
    auto& e = impl_->trace[static_cast<size_t>(i)];
    e.target_id = target;
    e.p_target = prow[target];
    e.loss = -std::log(prow[target]);
    e.greedy_id = argmax_lowest(prow, V);
  }
}

TeacherForward::~TeacherForward() = default;
TeacherForward::TeacherForward(TeacherForward&&) noexcept = default;
TeacherForward& TeacherForward::operator=(TeacherForward&&) noexcept = default;

const TokenTrace& TeacherForward::trace() const { return impl_->trace; }

std::vector<double> TeacherForward::distribution(int answer_pos) const {
  if (answer_pos < 0 || answer_pos >= impl_->L)
    throw validation_error("answer position out of range");
  const int V = impl_->base->config().vocab.total();
  const double* row = impl_->probs.data() + static_cast<size_t>(answer_pos) * V;
  return {row, row + V};
}

AdapterGrad TeacherForward::backward(const std::vector<double>& weights, double eps) const {
  const Impl& im = *impl_;
  const auto& cfg = im.base->config();
  const int d = cfg.d_model;
  const int dff = cfg.d_ff;
  const int V = cfg.vocab.total();
  const int H = cfg.n_heads;
  const int hs = d / H;
  const int T = im.acts.T;
  const double inv_sqrt_hs = 1.0 / std::sqrt(static_cast<double>(hs));

  if (static_cast<int>(weights.size()) != im.L)
    throw validation_error("weight vector length must equal the answer length");
  double sumw = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw validation_error("weights must be finite and >= 0");
    sumw += w;
  }
  if (!(eps >= 0.0)) throw validation_error("normalization eps must be >= 0");

  AdapterGrad grad;
  grad.a.assign(im.A.size(), 0.0);
  grad.b.assign(im.B.size(), 0.0);
  const double denom = sumw + eps;
  if (denom <= 0.0 || sumw == 0.0) return grad;  // objective is constant zero

  // d(objective)/d(logits) at answer positions, pushed through the head.
  std::vector<double> dnf(static_cast<size_t>(T) * d, 0.0);
  std::vector<double> dlogits(static_cast<size_t>(V));
  for (int i = 0; i < im.L; ++i) {
    const double scale = weights[static_cast<size_t>(i)] / denom;
    if (scale == 0.0) continue;
    const int p = im.K + 1 + i;
    const int target = im.trace[static_cast<size_t>(i)].target_id;
    const double* prow = im.probs.data() + static_cast<size_t>(i) * V;
    for (int v = 0; v < V; ++v) dlogits[static_cast<size_t>(v)] = scale * prow[v];
    dlogits[static_cast<size_t>(target)] -= scale;
    matvec_t_acc(im.base->w_head.data(), V, d, dlogits.data(), dnf.data() + static_cast<size_t>(p) * d);
  }

  std::vector<double> dx(static_cast<size_t>(T) * d, 0.0);
  for (int p = 0; p < T; ++p) {
    layer_norm_backward(im.acts.lnf_hat.data() + static_cast<size_t>(p) * d,
                        im.acts.lnf_rstd[static_cast<size_t>(p)], im.base->lnf_g.data(),
                        dnf.data() + static_cast<size_t>(p) * d, d, dx.data() + static_cast<size_t>(p) * d);
  }

  std::vector<double> dg(static_cast<size_t>(dff)), dff1(static_cast<size_t>(dff));
  std::vector<double> dn(static_cast<size_t>(d));
  std::vector<double> dq(static_cast<size_t>(T) * d), dk(static_cast<size_t>(T) * d),
      dv(static_cast<size_t>(T) * d), dctx(static_cast<size_t>(T) * d);
  std::vector<double> datt(static_cast<size_t>(T)), ds(static_cast<size_t>(T));
  std::vector<double> u(static_cast<size_t>(im.acfg.rank)), tb(static_cast<size_t>(im.acfg.rank));

  for (int l = cfg.n_layers - 1; l >= im.acfg.layer; --l) {
    const auto& w = im.base->layers[static_cast<size_t>(l)];
    const auto& a = im.acts.layers[static_cast<size_t>(l)];

    if (l == im.acfg.layer) {
      // dx here is the gradient at this block's output, which the MLP
      // down-projection feeds through the residual add. Only the adapter
      // matrices collect gradients; nothing below is needed.
      for (int p = 0; p < T; ++p) {
        const double* ddown = dx.data() + static_cast<size_t>(p) * d;
        const double* g = a.gelu_out.data() + static_cast<size_t>(p) * dff;
        matvec(im.A.data(), im.acfg.rank, dff, g, nullptr, u.data());
        for (int i = 0; i < im.acfg.rank; ++i) {
          double s = 0.0;
          for (int mrow = 0; mrow < d; ++mrow) s += im.B[static_cast<size_t>(mrow) * im.acfg.rank + i] * ddown[mrow];
          tb[static_cast<size_t>(i)] = s;
        }
        for (int i = 0; i < im.acfg.rank; ++i) {
          const double s = tb[static_cast<size_t>(i)];
          if (s == 0.0) continue;
          double* garow = grad.a.data() + static_cast<size_t>(i) * dff;
          for (int j = 0; j < dff; ++j) garow[j] += s * g[j];
        }
        for (int mrow = 0; mrow < d; ++mrow) {
          const double s = ddown[mrow];
          if (s == 0.0) continue;
          double* gbrow = grad.b.data() + static_cast<size_t>(mrow) * im.acfg.rank;
          for (int i = 0; i < im.acfg.rank; ++i) gbrow[i] += s * u[static_cast<size_t>(i)];
        }
      }
      break;
    }

    // MLP backward (input gradients only)
    for (int p = 0; p < T; ++p) {
      double* dxp = dx.data() + static_cast<size_t>(p) * d;
      matvec_t_acc(w.w2.data(), d, dff, dxp, dg.data());
      const double* ff1 = a.ff1.data() + static_cast<size_t>(p) * dff;
      for (int i = 0; i < dff; ++i) {
        dff1[static_cast<size_t>(i)] = gelu_deriv(ff1[i]) * dg[static_cast<size_t>(i)];
        dg[static_cast<size_t>(i)] = 0.0;
      }
      std::fill(dn.begin(), dn.end(), 0.0);
      matvec_t_acc(w.w1.data(), dff, d, dff1.data(), dn.data());
      layer_norm_backward(a.ln2_hat.data() + static_cast<size_t>(p) * d, a.ln2_rstd[static_cast<size_t>(p)],
                          w.ln2_g.data(), dn.data(), d, dxp);
    }

    // attention backward
    std::fill(dq.begin(), dq.end(), 0.0);
    std::fill(dk.begin(), dk.end(), 0.0);
    std::fill(dv.begin(), dv.end(), 0.0);
    std::fill(dctx.begin(), dctx.end(), 0.0);
    for (int p = 0; p < T; ++p) {
      matvec_t_acc(w.wo.data(), d, d, dx.data() + static_cast<size_t>(p) * d,
                   dctx.data() + static_cast<size_t>(p) * d);
    }
    for (int h = 0; h < H; ++h) {
      const int oh = h * hs;
      for (int p = 0; p < T; ++p) {
        const double* att_row = a.att.data() + (static_cast<size_t>(h) * T + p) * T;
        const double* dctx_p = dctx.data() + static_cast<size_t>(p) * d + oh;
        double dot_sum = 0.0;
        for (int j = 0; j <= p; ++j) {
          const double* vj = a.v.data() + static_cast<size_t>(j) * d + oh;
          double s = 0.0;
          for (int i = 0; i < hs; ++i) s += dctx_p[i] * vj[i];
          datt[static_cast<size_t>(j)] = s;
          dot_sum += att_row[j] * s;
        }
        for (int j = 0; j <= p; ++j)
          ds[static_cast<size_t>(j)] = att_row[j] * (datt[static_cast<size_t>(j)] - dot_sum);
        double* dq_p = dq.data() + static_cast<size_t>(p) * d + oh;
        const double* q_p = a.q.data() + static_cast<size_t>(p) * d + oh;
        for (int j = 0; j <= p; ++j) {
          const double sj = ds[static_cast<size_t>(j)] * inv_sqrt_hs;
          const double* kj = a.k.data() + static_cast<size_t>(j) * d + oh;
          double* dkj = dk.data() + static_cast<size_t>(j) * d + oh;
          double* dvj = dv.data() + static_cast<size_t>(j) * d + oh;
          const double aj = att_row[j];
          for (int i = 0; i < hs; ++i) {
            dq_p[i] += sj * kj[i];
            dkj[i] += sj * q_p[i];
            dvj[i] += aj * dctx_p[i];
          }
        }
      }
    }
    for (int p = 0; p < T; ++p) {
      std::fill(dn.begin(), dn.end(), 0.0);
      matvec_t_acc(w.wq.data(), d, d, dq.data() + static_cast<size_t>(p) * d, dn.data());
      matvec_t_acc(w.wk.data(), d, d, dk.data() + static_cast<size_t>(p) * d, dn.data());
      matvec_t_acc(w.wv.data(), d, d, dv.data() + static_cast<size_t>(p) * d, dn.data());
      layer_norm_backward(a.ln1_hat.data() + static_cast<size_t>(p) * d, a.ln1_rstd[static_cast<size_t>(p)],
                          w.ln1_g.data(), dn.data(), d, dx.data() + static_cast<size_t>(p) * d);
    }
  }

  return grad;
}

TokenTrace forward_teacher(const BaseModel& base, const AdapterState& adapter, const MemoryItem& item) {
  return TeacherForward(base, adapter, item).trace();
}

AdapterGrad backward_adapter(const BaseModel& base, const AdapterState& adapter, const MemoryItem& item,
                             const std::vector<double>& weights, double eps) {
  return TeacherForward(base, adapter, item).backward(weights, eps);
}

std::vector<int> decode_greedy(const BaseModel& base, const AdapterState& adapter,
                               const std::vector<int>& key, int max_len) {
  const auto& cfg = base.config();
  adapter.cfg.validate(cfg);
  if (max_len < 1) throw validation_error("decode_greedy requires max_len >= 1");
  for (int tok : key)
    if (tok < 0 || tok >= cfg.vocab.total()) throw validation_error("key token out of range");

  std::vector<int> seq;
  seq.reserve(key.size() + 2 + static_cast<size_t>(max_len));
  seq.push_back(cfg.vocab.bos_id());
  seq.insert(seq.end(), key.begin(), key.end());
  seq.push_back(cfg.vocab.sep_id());

  const int V = cfg.vocab.total();
  const int d = cfg.d_model;
  std::vector<double> logits(static_cast<size_t>(V));
  std::vector<int> out;
  while (static_cast<int>(out.size()) < max_len && static_cast<int>(seq.size()) < cfg.max_seq) {
    Acts acts = transformer_forward(base, adapter.a.data(), adapter.b.data(), adapter.cfg, seq);
    const int p = acts.T - 1;
    matvec(base.w_head.data(), V, d, acts.nf.data() + static_cast<size_t>(p) * d, nullptr, logits.data());
    const int next = argmax_lowest(logits.data(), V);
    if (next == cfg.vocab.bos_id() || next == cfg.vocab.sep_id()) break;
    out.push_back(next);
    seq.push_back(next);
  }
  return out;
}

namespace {

void write_u32_le(std::ofstream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF), static_cast<unsigned char>((v >> 8) & 0xFF),
                        static_cast<unsigned char>((v >> 16) & 0xFF),
                        static_cast<unsigned char>((v >> 24) & 0xFF)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32_le(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

static_assert(std::numeric_limits<float>::is_iec559, "IEEE-754 float layout required");

void write_f32_le(std::ofstream& out, float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, 4);
  write_u32_le(out, bits);
}

float read_f32_le(std::ifstream& in) {
  uint32_t bits = read_u32_le(in);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace

void save_adapter(const AdapterState& adapter, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw train_error("cannot open adapter checkpoint for writing: " + path.string());
  const int dff = static_cast<int>(adapter.a.size()) / adapter.cfg.rank;
  const int d = static_cast<int>(adapter.b.size()) / adapter.cfg.rank;
  out.write("MEMAD1", 6);
  write_u32_le(out, static_cast<uint32_t>(adapter.cfg.rank));
  write_u32_le(out, static_cast<uint32_t>(dff));
  write_u32_le(out, static_cast<uint32_t>(d));
  write_u32_le(out, static_cast<uint32_t>(adapter.cfg.layer));
  for (double w : adapter.a) write_f32_le(out, static_cast<float>(w));
  for (double w : adapter.b) write_f32_le(out, static_cast<float>(w));
  if (!out) throw train_error("failed writing adapter checkpoint: " + path.string());
}

AdapterState load_adapter(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw train_error("cannot open adapter checkpoint: " + path.string());
  char magic[6];
  in.read(magic, 6);
  if (!in || std::memcmp(magic, "MEMAD1", 6) != 0)
    throw validation_error("not a memlab adapter checkpoint: " + path.string());
  AdapterState st;
  st.cfg.rank = static_cast<int>(read_u32_le(in));
  const int dff = static_cast<int>(read_u32_le(in));
  const int d = static_cast<int>(read_u32_le(in));
  st.cfg.layer = static_cast<int>(read_u32_le(in));
  if (st.cfg.rank < 1 || dff < 1 || d < 1)
    throw validation_error("corrupt adapter checkpoint header: " + path.string());
  st.a.resize(static_cast<size_t>(st.cfg.rank) * dff);
  st.b.resize(static_cast<size_t>(d) * st.cfg.rank);
  for (auto& w : st.a) w = static_cast<double>(read_f32_le(in));
  for (auto& w : st.b) w = static_cast<double>(read_f32_le(in));
  if (!in) throw validation_error("truncated adapter checkpoint: " + path.string());
  return st;
}

}  // namespace memlab
