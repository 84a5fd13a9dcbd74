#include "bytet5/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <type_traits>

#include "bytet5/error.hpp"

namespace bytet5::model {

// ---------------------------------------------------------------------------
// Configuration and parameter layout
// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) {
      throw ArgumentError(std::string("invalid model config: ") + what);
    }
  };
  require(d_model >= 1, "d_model must be >= 1");
  require(d_ff >= 1, "d_ff must be >= 1");
  require(n_heads >= 1, "n_heads must be >= 1");
  require(d_kv >= 1, "d_kv must be >= 1");
  require(n_encoder_layers >= 1, "n_encoder_layers must be >= 1");
  require(n_decoder_layers >= 1, "n_decoder_layers must be >= 1");
  require(vocab_size == static_cast<std::size_t>(ByteVocabulary::vocab_size), "vocab_size must be 384");
  require(context_length >= 2, "context_length must be >= 2");
  require(dropout_rate >= 0.0 && dropout_rate < 1.0, "dropout_rate must be in [0, 1)");
  require(relative_attention_buckets >= 4, "relative_attention_buckets must be >= 4");
  require(relative_attention_max_distance >= relative_attention_buckets,
          "relative_attention_max_distance must be >= relative_attention_buckets");
}

ModelConfig preset(std::string_view name) {
  ModelConfig c;
  if (name == "banglabyt5-small") {
    return c;
  }
  if (name == "desk") {
    c.d_model = 32;
    c.d_ff = 64;
    c.n_heads = 2;
    c.d_kv = 16;
    c.n_encoder_layers = 1;
    c.n_decoder_layers = 1;
    c.context_length = 512;
    c.relative_attention_buckets = 8;
    c.relative_attention_max_distance = 32;
    return c;
  }
  if (name == "tiny") {
    c.d_model = 8;
    c.d_ff = 16;
    c.n_heads = 2;
    c.d_kv = 4;
    c.n_encoder_layers = 1;
    c.n_decoder_layers = 1;
    c.context_length = 64;
    c.relative_attention_buckets = 4;
    c.relative_attention_max_distance = 8;
    return c;
  }
  throw ArgumentError("unknown model preset '" + std::string(name) + "'");
}

std::vector<std::string> preset_names() { return {"banglabyt5-small", "desk", "tiny"}; }

std::uint64_t count_parameters(const ModelConfig& config) {
  config.validate();
  const std::uint64_t d = config.d_model;
  const std::uint64_t inner = config.inner_dim();
  const std::uint64_t ff = config.d_ff;
  const std::uint64_t attention = 4 * d * inner;  // q, k, v, o
  const std::uint64_t ffn = 3 * d * ff;           // gate, input, output
  const std::uint64_t encoder_layer = attention + ffn + 2 * d;
  const std::uint64_t decoder_layer = 2 * attention + ffn + 3 * d;
  const std::uint64_t bias_tables = 2 * config.relative_attention_buckets * config.n_heads;
  return config.vocab_size * d + config.n_encoder_layers * encoder_layer +
         config.n_decoder_layers * decoder_layer + 2 * d + bias_tables;
}

Tensor::Tensor(std::vector<std::size_t> dims) : shape(std::move(dims)) {
  std::size_t n = 1;
  for (std::size_t s : shape) {
    n *= s;
  }
  data.assign(n, 0.0);
}

void ParameterSet::add(std::string name, Tensor tensor) {
  if (contains(name)) {
    throw ArgumentError("duplicate tensor " + name);
  }
  entries_.emplace_back(std::move(name), std::move(tensor));
}

Tensor& ParameterSet::at(std::string_view name) {
  for (auto& [n, t] : entries_) {
    if (n == name) {
      return t;
    }
  }
  throw ArgumentError("no tensor named " + std::string(name));
}

const Tensor& ParameterSet::at(std::string_view name) const {
  return const_cast<ParameterSet*>(this)->at(name);
}

bool ParameterSet::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const auto& e) { return e.first == name; });
}

std::uint64_t ParameterSet::element_count() const {
  std::uint64_t n = 0;
  for (const auto& [name, t] : entries_) {
    n += t.size();
  }
  return n;
}

void ParameterSet::fill(double value) {
  for (auto& [name, t] : entries_) {
    std::fill(t.data.begin(), t.data.end(), value);
  }
}

bool ParameterSet::all_finite() const {
  for (const auto& [name, t] : entries_) {
    for (double v : t.data) {
      if (!std::isfinite(v)) {
        return false;
      }
    }
  }
  return true;
}

namespace {

void add_attention(ParameterSet& p, const std::string& prefix, const ModelConfig& c) {
  p.add(prefix + ".q", Tensor({c.d_model, c.inner_dim()}));
  p.add(prefix + ".k", Tensor({c.d_model, c.inner_dim()}));
  p.add(prefix + ".v", Tensor({c.d_model, c.inner_dim()}));
  p.add(prefix + ".o", Tensor({c.inner_dim(), c.d_model}));
}

void add_ffn(ParameterSet& p, const std::string& prefix, const ModelConfig& c) {
  p.add(prefix + ".wi0", Tensor({c.d_model, c.d_ff}));
  p.add(prefix + ".wi1", Tensor({c.d_model, c.d_ff}));
  p.add(prefix + ".wo", Tensor({c.d_ff, c.d_model}));
}

std::string enc_layer(std::size_t i) { return "encoder.layer." + std::to_string(i); }
std::string dec_layer(std::size_t i) { return "decoder.layer." + std::to_string(i); }

}  // namespace

ParameterSet allocate_parameters(const ModelConfig& c) {
  c.validate();
  ParameterSet p;
  p.add("shared.embedding", Tensor({c.vocab_size, c.d_model}));
  p.add("encoder.rel_bias", Tensor({c.relative_attention_buckets, c.n_heads}));
  for (std::size_t i = 0; i < c.n_encoder_layers; ++i) {
    const std::string l = enc_layer(i);
    p.add(l + ".attn_norm", Tensor({c.d_model}));
    add_attention(p, l + ".attn", c);
    p.add(l + ".ffn_norm", Tensor({c.d_model}));
    add_ffn(p, l + ".ffn", c);
  }
  p.add("encoder.final_norm", Tensor({c.d_model}));
  p.add("decoder.rel_bias", Tensor({c.relative_attention_buckets, c.n_heads}));
  for (std::size_t i = 0; i < c.n_decoder_layers; ++i) {
    const std::string l = dec_layer(i);
    p.add(l + ".self_norm", Tensor({c.d_model}));
    add_attention(p, l + ".self_attn", c);
    p.add(l + ".cross_norm", Tensor({c.d_model}));
    add_attention(p, l + ".cross_attn", c);
    p.add(l + ".ffn_norm", Tensor({c.d_model}));
    add_ffn(p, l + ".ffn", c);
  }
  p.add("decoder.final_norm", Tensor({c.d_model}));
  return p;
}

ParameterSet init_parameters(const ModelConfig& c, std::uint64_t seed) {
  ParameterSet p = allocate_parameters(c);
  Rng rng(seed);
  const double d = static_cast<double>(c.d_model);
  const double inner = static_cast<double>(c.inner_dim());
  for (auto& [name, t] : p) {
    double stddev = 0.0;
    auto ends_with = [&](std::string_view suffix) {
      return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with("norm")) {
      std::fill(t.data.begin(), t.data.end(), 1.0);
      continue;
    }
    if (name == "shared.embedding") {
      stddev = 1.0;
    } else if (ends_with("rel_bias")) {
      stddev = 1.0 / std::sqrt(d);
    } else if (ends_with(".q")) {
      stddev = 1.0 / std::sqrt(d * static_cast<double>(c.d_kv));
    } else if (ends_with(".k") || ends_with(".v") || ends_with(".wi0") || ends_with(".wi1")) {
      stddev = 1.0 / std::sqrt(d);
    } else if (ends_with(".o")) {
      stddev = 1.0 / std::sqrt(inner);
    } else if (ends_with(".wo")) {
      stddev = 1.0 / std::sqrt(static_cast<double>(c.d_ff));
    }
    for (double& v : t.data) {
      v = stddev * rng.normal();
    }
  }
  return p;
}

std::size_t relative_position_bucket(long relative_position, bool bidirectional,
                                     std::size_t num_buckets, std::size_t max_distance) {
  std::size_t bucket = 0;
  long n = -relative_position;
  if (bidirectional) {
    num_buckets /= 2;
    if (n < 0) {
      bucket += num_buckets;
    }
    n = std::abs(n);
  } else {
    n = std::max(n, 0L);
  }
  const std::size_t max_exact = num_buckets / 2;
  const auto un = static_cast<std::size_t>(n);
  if (un < max_exact) {
    return bucket + un;
  }
  const double scaled = std::log(static_cast<double>(un) / static_cast<double>(max_exact)) /
                        std::log(static_cast<double>(max_distance) / static_cast<double>(max_exact)) *
                        static_cast<double>(num_buckets - max_exact);
  const std::size_t large = std::min(max_exact + static_cast<std::size_t>(scaled), num_buckets - 1);
  return bucket + large;
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

namespace {

constexpr double kNormEps = 1e-6;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Y[T, out] = X[T, in] W[in, out]
void matmul(const double* x, std::size_t rows, std::size_t in, const double* w, std::size_t out, double* y) {
  std::fill(y, y + rows * out, 0.0);
  for (std::size_t t = 0; t < rows; ++t) {
    const double* xr = x + t * in;
    double* yr = y + t * out;
    for (std::size_t i = 0; i < in; ++i) {
      const double a = xr[i];
      const double* wr = w + i * out;
      for (std::size_t o = 0; o < out; ++o) {
        yr[o] += a * wr[o];
      }
    }
  }
}

// dX += dY W^T
void matmul_grad_input(const double* dy, std::size_t rows, std::size_t in, const double* w, std::size_t out,
                       double* dx) {
  for (std::size_t t = 0; t < rows; ++t) {
    const double* dyr = dy + t * out;
    double* dxr = dx + t * in;
    for (std::size_t i = 0; i < in; ++i) {
      const double* wr = w + i * out;
      double acc = 0.0;
      for (std::size_t o = 0; o < out; ++o) {
        acc += dyr[o] * wr[o];
      }
      dxr[i] += acc;
    }
  }
}

// dW += X^T dY
void matmul_grad_weight(const double* x, std::size_t rows, std::size_t in, const double* dy, std::size_t out,
                        double* dw) {
  for (std::size_t t = 0; t < rows; ++t) {
    const double* xr = x + t * in;
    const double* dyr = dy + t * out;
    for (std::size_t i = 0; i < in; ++i) {
      const double a = xr[i];
      double* dwr = dw + i * out;
      for (std::size_t o = 0; o < out; ++o) {
        dwr[o] += a * dyr[o];
      }
    }
  }
}

struct Act {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  Act() = default;
  Act(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  double* data() { return v.data(); }
  const double* data() const { return v.data(); }
};

Act linear(const Act& x, const Tensor& w) {
  Act y(x.rows, w.shape[1]);
  matmul(x.data(), x.rows, x.cols, w.data.data(), w.shape[1], y.data());
  return y;
}

void linear_backward(const Act& x, const Tensor& w, const Act& dy, Act* dx, Tensor& dw) {
  if (dx != nullptr) {
    matmul_grad_input(dy.data(), x.rows, x.cols, w.data.data(), w.shape[1], dx->data());
  }
  matmul_grad_weight(x.data(), x.rows, x.cols, dy.data(), w.shape[1], dw.data.data());
}

struct NormCache {
  Act x;
  std::vector<double> inv_rms;
};

Act rms_norm(const Act& x, const Tensor& scale, NormCache* cache) {
  Act y(x.rows, x.cols);
  std::vector<double> inv(x.rows);
  for (std::size_t t = 0; t < x.rows; ++t) {
    const double* xr = x.data() + t * x.cols;
    double ss = 0.0;
    for (std::size_t c = 0; c < x.cols; ++c) {
      ss += xr[c] * xr[c];
    }
    inv[t] = 1.0 / std::sqrt(ss / static_cast<double>(x.cols) + kNormEps);
    double* yr = y.data() + t * x.cols;
    for (std::size_t c = 0; c < x.cols; ++c) {
      yr[c] = xr[c] * inv[t] * scale.data[c];
    }
  }
  if (cache != nullptr) {
    cache->x = x;
    cache->inv_rms = std::move(inv);
  }
  return y;
}

void rms_norm_backward(const NormCache& cache, const Tensor& scale, const Act& dy, Act& dx, Tensor& dscale) {
  const std::size_t d = cache.x.cols;
  for (std::size_t t = 0; t < cache.x.rows; ++t) {
    const double* xr = cache.x.data() + t * d;
    const double* dyr = dy.data() + t * d;
    double* dxr = dx.data() + t * d;
    const double inv = cache.inv_rms[t];
    double dot = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      dscale.data[c] += dyr[c] * xr[c] * inv;
      dot += dyr[c] * scale.data[c] * xr[c];
    }
    const double k = inv * inv * inv * dot / static_cast<double>(d);
    for (std::size_t c = 0; c < d; ++c) {
      dxr[c] += inv * dyr[c] * scale.data[c] - xr[c] * k;
    }
  }
}

double gelu(double x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2 / pi)
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

double gelu_grad(double x) {
  constexpr double c = 0.7978845608028654;
  const double th = std::tanh(c * (x + 0.044715 * x * x * x));
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * c * (1.0 + 3.0 * 0.044715 * x * x);
}

// Dropout mask; empty when inactive.
std::vector<double> dropout_mask(std::size_t n, double rate, Rng* rng) {
  if (rng == nullptr || rate <= 0.0) {
    return {};
  }
  std::vector<double> mask(n);
  const double keep = 1.0 / (1.0 - rate);
  for (double& m : mask) {
    m = rng->uniform01() < rate ? 0.0 : keep;
  }
  return mask;
}

void apply_mask(Act& x, const std::vector<double>& mask) {
  if (mask.empty()) {
    return;
  }
  for (std::size_t i = 0; i < x.v.size(); ++i) {
    x.v[i] *= mask[i];
  }
}

// Position bias [heads][q][k] from a bucket table.
std::vector<double> position_bias(const Tensor& table, const ModelConfig& c, std::size_t tq, std::size_t tk,
                                  bool bidirectional, std::vector<std::size_t>* buckets_out) {
  const std::size_t h = c.n_heads;
  std::vector<double> bias(h * tq * tk);
  std::vector<std::size_t> buckets(tq * tk);
  for (std::size_t i = 0; i < tq; ++i) {
    for (std::size_t j = 0; j < tk; ++j) {
      const long rel = static_cast<long>(j) - static_cast<long>(i);
      buckets[i * tk + j] = relative_position_bucket(rel, bidirectional, c.relative_attention_buckets,
                                                     c.relative_attention_max_distance);
    }
  }
  for (std::size_t head = 0; head < h; ++head) {
    for (std::size_t ij = 0; ij < tq * tk; ++ij) {
      bias[head * tq * tk + ij] = table.data[buckets[ij] * h + head];
    }
  }
  if (buckets_out != nullptr) {
    *buckets_out = std::move(buckets);
  }
  return bias;
}

// ---------------------------------------------------------------------------
// Parameter views
// ---------------------------------------------------------------------------

template <class T>
struct AttnRefs {
  T* q;
  T* k;
  T* v;
  T* o;
};

template <class T>
struct FfnRefs {
  T* wi0;
  T* wi1;
  T* wo;
};

template <class T>
struct EncoderLayerRefs {
  T* attn_norm;
  AttnRefs<T> attn;
  T* ffn_norm;
  FfnRefs<T> ffn;
};

template <class T>
struct DecoderLayerRefs {
  T* self_norm;
  AttnRefs<T> self_attn;
  T* cross_norm;
  AttnRefs<T> cross_attn;
  T* ffn_norm;
  FfnRefs<T> ffn;
};

template <class T>
struct ModelRefs {
  T* embedding;
  T* enc_bias;
  std::vector<EncoderLayerRefs<T>> enc;
  T* enc_final;
  T* dec_bias;
  std::vector<DecoderLayerRefs<T>> dec;
  T* dec_final;
};

template <class P, class T = std::conditional_t<std::is_const_v<P>, const Tensor, Tensor>>
ModelRefs<T> bind(P& p, const ModelConfig& c) {
  auto attn = [&](const std::string& prefix) {
    return AttnRefs<T>{&p.at(prefix + ".q"), &p.at(prefix + ".k"), &p.at(prefix + ".v"), &p.at(prefix + ".o")};
  };
  auto ffn = [&](const std::string& prefix) {
    return FfnRefs<T>{&p.at(prefix + ".wi0"), &p.at(prefix + ".wi1"), &p.at(prefix + ".wo")};
  };
  ModelRefs<T> r;
  r.embedding = &p.at("shared.embedding");
  r.enc_bias = &p.at("encoder.rel_bias");
  for (std::size_t i = 0; i < c.n_encoder_layers; ++i) {
    const std::string l = enc_layer(i);
    r.enc.push_back({&p.at(l + ".attn_norm"), attn(l + ".attn"), &p.at(l + ".ffn_norm"), ffn(l + ".ffn")});
  }
  r.enc_final = &p.at("encoder.final_norm");
  r.dec_bias = &p.at("decoder.rel_bias");
  for (std::size_t i = 0; i < c.n_decoder_layers; ++i) {
    const std::string l = dec_layer(i);
    r.dec.push_back({&p.at(l + ".self_norm"), attn(l + ".self_attn"), &p.at(l + ".cross_norm"),
                     attn(l + ".cross_attn"), &p.at(l + ".ffn_norm"), ffn(l + ".ffn")});
  }
  r.dec_final = &p.at("decoder.final_norm");
  return r;
}

// ---------------------------------------------------------------------------
// Attention and feed-forward sublayers
// ---------------------------------------------------------------------------

struct AttnCache {
  Act xq;
  Act xkv;
  Act q;
  Act k;
  Act v;
  std::vector<double> probs;  // [heads][tq][tk]
  Act ctx;
};

// `bias` may be null; `key_valid` may be empty (all keys valid).
Act attention(const Act& xq, const Act& xkv, const AttnRefs<const Tensor>& w, const ModelConfig& c,
              const double* bias, const std::vector<bool>& key_valid, bool causal, AttnCache* cache) {
  const std::size_t tq = xq.rows;
  const std::size_t tk = xkv.rows;
  const std::size_t h = c.n_heads;
  const std::size_t dkv = c.d_kv;
  const std::size_t inner = c.inner_dim();
  Act q = linear(xq, *w.q);
  Act k = linear(xkv, *w.k);
  Act v = linear(xkv, *w.v);
  Act ctx(tq, inner);
  std::vector<double> probs(h * tq * tk, 0.0);
  std::vector<double> scores(tk);
  for (std::size_t head = 0; head < h; ++head) {
    for (std::size_t i = 0; i < tq; ++i) {
      double max_score = kNegInf;
      for (std::size_t j = 0; j < tk; ++j) {
        if ((causal && j > i) || (!key_valid.empty() && !key_valid[j])) {
          scores[j] = kNegInf;
          continue;
        }
        double s = 0.0;
        const double* qi = q.data() + i * inner + head * dkv;
        const double* kj = k.data() + j * inner + head * dkv;
        for (std::size_t e = 0; e < dkv; ++e) {
          s += qi[e] * kj[e];
        }
        if (bias != nullptr) {
          s += bias[(head * tq + i) * tk + j];
        }
        scores[j] = s;
        max_score = std::max(max_score, s);
      }
      double* p = probs.data() + (head * tq + i) * tk;
      if (max_score == kNegInf) {
        continue;  // no visible key: zero context
      }
      double z = 0.0;
      for (std::size_t j = 0; j < tk; ++j) {
        p[j] = scores[j] == kNegInf ? 0.0 : std::exp(scores[j] - max_score);
        z += p[j];
      }
      double* out = ctx.data() + i * inner + head * dkv;
      for (std::size_t j = 0; j < tk; ++j) {
        p[j] /= z;
        if (p[j] == 0.0) {
          continue;
        }
        const double* vj = v.data() + j * inner + head * dkv;
        for (std::size_t e = 0; e < dkv; ++e) {
          out[e] += p[j] * vj[e];
        }
      }
    }
  }
  Act out = linear(ctx, *w.o);
  if (cache != nullptr) {
    cache->xq = xq;
    cache->xkv = xkv;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->ctx = std::move(ctx);
  }
  return out;
}

// Accumulates into dxq, dxkv, the weight grads, and (if non-null) dbias.
void attention_backward(const AttnCache& cache, const AttnRefs<const Tensor>& w, AttnRefs<Tensor>& dw,
                        const ModelConfig& c, const Act& dout, Act& dxq, Act& dxkv, double* dbias) {
  const std::size_t tq = cache.xq.rows;
  const std::size_t tk = cache.xkv.rows;
  const std::size_t h = c.n_heads;
  const std::size_t dkv = c.d_kv;
  const std::size_t inner = c.inner_dim();

  Act dctx(tq, inner);
  linear_backward(cache.ctx, *w.o, dout, &dctx, *dw.o);

  Act dq(tq, inner);
  Act dk(tk, inner);
  Act dv(tk, inner);
  std::vector<double> dp(tk);
  for (std::size_t head = 0; head < h; ++head) {
    for (std::size_t i = 0; i < tq; ++i) {
      const double* p = cache.probs.data() + (head * tq + i) * tk;
      const double* dci = dctx.data() + i * inner + head * dkv;
      double weighted = 0.0;
      for (std::size_t j = 0; j < tk; ++j) {
        if (p[j] == 0.0) {
          dp[j] = 0.0;
          continue;
        }
        const double* vj = cache.v.data() + j * inner + head * dkv;
        double* dvj = dv.data() + j * inner + head * dkv;
        double s = 0.0;
        for (std::size_t e = 0; e < dkv; ++e) {
          s += dci[e] * vj[e];
          dvj[e] += p[j] * dci[e];
        }
        dp[j] = s;
        weighted += p[j] * s;
      }
      const double* qi = cache.q.data() + i * inner + head * dkv;
      double* dqi = dq.data() + i * inner + head * dkv;
      for (std::size_t j = 0; j < tk; ++j) {
        if (p[j] == 0.0) {
          continue;
        }
        const double ds = p[j] * (dp[j] - weighted);
        if (dbias != nullptr) {
          dbias[(head * tq + i) * tk + j] += ds;
        }
        const double* kj = cache.k.data() + j * inner + head * dkv;
        double* dkj = dk.data() + j * inner + head * dkv;
        for (std::size_t e = 0; e < dkv; ++e) {
          dqi[e] += ds * kj[e];
          dkj[e] += ds * qi[e];
        }
      }
    }
  }
  linear_backward(cache.xq, *w.q, dq, &dxq, *dw.q);
  linear_backward(cache.xkv, *w.k, dk, &dxkv, *dw.k);
  linear_backward(cache.xkv, *w.v, dv, &dxkv, *dw.v);
}

struct FfnCache {
  Act x;
  Act h0;  // gate pre-activation
  Act h1;
  Act m;   // gelu(h0) * h1
};

Act feed_forward(const Act& x, const FfnRefs<const Tensor>& w, FfnCache* cache) {
  Act h0 = linear(x, *w.wi0);
  Act h1 = linear(x, *w.wi1);
  Act m(h0.rows, h0.cols);
  for (std::size_t i = 0; i < m.v.size(); ++i) {
    m.v[i] = gelu(h0.v[i]) * h1.v[i];
  }
  Act out = linear(m, *w.wo);
  if (cache != nullptr) {
    cache->x = x;
    cache->h0 = std::move(h0);
    cache->h1 = std::move(h1);
    cache->m = std::move(m);
  }
  return out;
}

void feed_forward_backward(const FfnCache& cache, const FfnRefs<const Tensor>& w, FfnRefs<Tensor>& dw,
                           const Act& dout, Act& dx) {
  Act dm(cache.m.rows, cache.m.cols);
  linear_backward(cache.m, *w.wo, dout, &dm, *dw.wo);
  Act dh0(dm.rows, dm.cols);
  Act dh1(dm.rows, dm.cols);
  for (std::size_t i = 0; i < dm.v.size(); ++i) {
    dh1.v[i] = dm.v[i] * gelu(cache.h0.v[i]);
    dh0.v[i] = dm.v[i] * cache.h1.v[i] * gelu_grad(cache.h0.v[i]);
  }
  linear_backward(cache.x, *w.wi0, dh0, &dx, *dw.wi0);
  linear_backward(cache.x, *w.wi1, dh1, &dx, *dw.wi1);
}

void add_into(Act& dst, const Act& src) {
  for (std::size_t i = 0; i < dst.v.size(); ++i) {
    dst.v[i] += src.v[i];
  }
}

void check_ids(std::span<const TokenId> ids, const ModelConfig& c, const char* which) {
  if (ids.size() > c.context_length) {
    throw RangeError(std::string(which) + " length " + std::to_string(ids.size()) + " exceeds context_length " +
                     std::to_string(c.context_length));
  }
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= c.vocab_size) {
      throw RangeError(std::string(which) + " id " + std::to_string(id) + " outside vocabulary");
    }
  }
}

Act embed(const Tensor& table, std::span<const TokenId> ids, std::size_t d) {
  Act x(ids.size(), d);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    std::copy_n(table.data.data() + static_cast<std::size_t>(ids[t]) * d, d, x.data() + t * d);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Full forward with optional caches
// ---------------------------------------------------------------------------

struct EncoderLayerCache {
  NormCache attn_norm;
  AttnCache attn;
  std::vector<double> attn_drop;
  NormCache ffn_norm;
  FfnCache ffn;
  std::vector<double> ffn_drop;
};

struct DecoderLayerCache {
  NormCache self_norm;
  AttnCache self_attn;
  std::vector<double> self_drop;
  NormCache cross_norm;
  AttnCache cross_attn;
  std::vector<double> cross_drop;
  NormCache ffn_norm;
  FfnCache ffn;
  std::vector<double> ffn_drop;
};

struct ForwardCache {
  std::vector<double> enc_embed_drop;
  std::vector<EncoderLayerCache> enc;
  NormCache enc_final;
  std::vector<double> enc_final_drop;
  std::vector<std::size_t> enc_buckets;
  std::vector<double> dec_embed_drop;
  std::vector<DecoderLayerCache> dec;
  NormCache dec_final;
  std::vector<double> dec_final_drop;
  std::vector<std::size_t> dec_buckets;
  Act dec_out_scaled;  // final decoder states times d_model^-1/2
};

struct ForwardPass {
  Act logits;
  ForwardCache cache;
};

std::vector<bool> encoder_key_mask(std::span<const TokenId> ids) {
  std::vector<bool> valid(ids.size());
  for (std::size_t t = 0; t < ids.size(); ++t) {
    valid[t] = ids[t] != ByteVocabulary::pad_id;
  }
  return valid;
}

Act run_encoder(const ModelRefs<const Tensor>& w, const ModelConfig& c, std::span<const TokenId> enc_ids,
                const std::vector<bool>& key_valid, Rng* rng, ForwardCache* cache) {
  const std::size_t d = c.d_model;
  const std::size_t te = enc_ids.size();
  const double rate = c.dropout_rate;
  Act h = embed(*w.embedding, enc_ids, d);
  auto drop = [&](Act& x, std::vector<double>* keep) {
    std::vector<double> mask = dropout_mask(x.v.size(), rate, rng);
    apply_mask(x, mask);
    if (keep != nullptr) {
      *keep = std::move(mask);
    }
  };
  drop(h, cache != nullptr ? &cache->enc_embed_drop : nullptr);
  const std::vector<double> bias =
      position_bias(*w.enc_bias, c, te, te, true, cache != nullptr ? &cache->enc_buckets : nullptr);
  if (cache != nullptr) {
    cache->enc.resize(c.n_encoder_layers);
  }
  for (std::size_t l = 0; l < c.n_encoder_layers; ++l) {
    EncoderLayerCache* lc = cache != nullptr ? &cache->enc[l] : nullptr;
    const auto& lw = w.enc[l];
    Act n = rms_norm(h, *lw.attn_norm, lc != nullptr ? &lc->attn_norm : nullptr);
    Act a = attention(n, n, lw.attn, c, bias.data(), key_valid, false, lc != nullptr ? &lc->attn : nullptr);
    drop(a, lc != nullptr ? &lc->attn_drop : nullptr);
    add_into(h, a);
    Act n2 = rms_norm(h, *lw.ffn_norm, lc != nullptr ? &lc->ffn_norm : nullptr);
    Act f = feed_forward(n2, lw.ffn, lc != nullptr ? &lc->ffn : nullptr);
    drop(f, lc != nullptr ? &lc->ffn_drop : nullptr);
    add_into(h, f);
  }
  Act out = rms_norm(h, *w.enc_final, cache != nullptr ? &cache->enc_final : nullptr);
  drop(out, cache != nullptr ? &cache->enc_final_drop : nullptr);
  return out;
}

ForwardPass run_forward(const ParameterSet& params, const ModelConfig& c, std::span<const TokenId> enc_ids,
                        std::span<const TokenId> dec_ids, Rng* rng, bool keep_cache) {
  c.validate();
  check_ids(enc_ids, c, "encoder");
  check_ids(dec_ids, c, "decoder");
  const auto w = bind(params, c);
  const std::size_t d = c.d_model;
  const std::size_t td = dec_ids.size();
  const double rate = c.dropout_rate;

  ForwardPass pass;
  ForwardCache* cache = keep_cache ? &pass.cache : nullptr;
  const std::vector<bool> key_valid = encoder_key_mask(enc_ids);
  const Act enc_out = run_encoder(w, c, enc_ids, key_valid, rng, cache);

  auto drop = [&](Act& x, std::vector<double>* keep) {
    std::vector<double> mask = dropout_mask(x.v.size(), rate, rng);
    apply_mask(x, mask);
    if (keep != nullptr) {
      *keep = std::move(mask);
    }
  };
  Act h = embed(*w.embedding, dec_ids, d);
  drop(h, cache != nullptr ? &cache->dec_embed_drop : nullptr);
  const std::vector<double> bias =
      position_bias(*w.dec_bias, c, td, td, false, cache != nullptr ? &cache->dec_buckets : nullptr);
  if (cache != nullptr) {
    cache->dec.resize(c.n_decoder_layers);
  }
  for (std::size_t l = 0; l < c.n_decoder_layers; ++l) {
    DecoderLayerCache* lc = cache != nullptr ? &cache->dec[l] : nullptr;
    const auto& lw = w.dec[l];
    Act n = rms_norm(h, *lw.self_norm, lc != nullptr ? &lc->self_norm : nullptr);
    Act a = attention(n, n, lw.self_attn, c, bias.data(), {}, true, lc != nullptr ? &lc->self_attn : nullptr);
    drop(a, lc != nullptr ? &lc->self_drop : nullptr);
    add_into(h, a);
    Act n2 = rms_norm(h, *lw.cross_norm, lc != nullptr ? &lc->cross_norm : nullptr);
    Act x = attention(n2, enc_out, lw.cross_attn, c, nullptr, key_valid, false,
                      lc != nullptr ? &lc->cross_attn : nullptr);
    drop(x, lc != nullptr ? &lc->cross_drop : nullptr);
    add_into(h, x);
    Act n3 = rms_norm(h, *lw.ffn_norm, lc != nullptr ? &lc->ffn_norm : nullptr);
    Act f = feed_forward(n3, lw.ffn, lc != nullptr ? &lc->ffn : nullptr);
    drop(f, lc != nullptr ? &lc->ffn_drop : nullptr);
    add_into(h, f);
  }
  Act out = rms_norm(h, *w.dec_final, cache != nullptr ? &cache->dec_final : nullptr);
  drop(out, cache != nullptr ? &cache->dec_final_drop : nullptr);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (double& x : out.v) {
    x *= scale;
  }
  // logits = out E^T
  Act logits(td, c.vocab_size);
  const double* e = w.embedding->data.data();
  for (std::size_t t = 0; t < td; ++t) {
    const double* o = out.data() + t * d;
    double* lr = logits.data() + t * c.vocab_size;
    for (std::size_t vtok = 0; vtok < c.vocab_size; ++vtok) {
      const double* er = e + vtok * d;
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        s += o[k] * er[k];
      }
      lr[vtok] = s;
    }
  }
  pass.logits = std::move(logits);
  if (cache != nullptr) {
    cache->dec_out_scaled = std::move(out);
  }
  return pass;
}

Matrix to_matrix(Act&& a) {
  Matrix m;
  m.rows = a.rows;
  m.cols = a.cols;
  m.data = std::move(a.v);
  return m;
}

void backward_masks(Act& dx, const std::vector<double>& mask) { apply_mask(dx, mask); }

void accumulate_bias_grad(const std::vector<double>& dbias, const std::vector<std::size_t>& buckets,
                          std::size_t heads, std::size_t tq, std::size_t tk, Tensor& dtable) {
  for (std::size_t head = 0; head < heads; ++head) {
    for (std::size_t ij = 0; ij < tq * tk; ++ij) {
      dtable.data[buckets[ij] * heads + head] += dbias[head * tq * tk + ij];
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Public entry points
// ---------------------------------------------------------------------------

Matrix forward(const ParameterSet& params, const ModelConfig& config, std::span<const TokenId> encoder_ids,
               std::span<const TokenId> decoder_ids) {
  return to_matrix(run_forward(params, config, encoder_ids, decoder_ids, nullptr, false).logits);
}

double loss(const Matrix& logits, std::span<const TokenId> targets) {
  if (logits.rows != targets.size()) {
    throw ArgumentError("loss: " + std::to_string(targets.size()) + " targets for " +
                        std::to_string(logits.rows) + " logit rows");
  }
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (targets[t] == ByteVocabulary::pad_id) {
      continue;
    }
    if (targets[t] < 0 || static_cast<std::size_t>(targets[t]) >= logits.cols) {
      throw RangeError("loss: target id " + std::to_string(targets[t]) + " outside logits");
    }
    const auto row = logits.row(t);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double x : row) {
      z += std::exp(x - mx);
    }
    total += mx + std::log(z) - row[static_cast<std::size_t>(targets[t])];
    ++count;
  }
  if (count == 0) {
    throw ArgumentError("loss: every target position is pad");
  }
  return total / static_cast<double>(count);
}

std::vector<TokenId> shift_right(std::span<const TokenId> targets) {
  std::vector<TokenId> out;
  out.reserve(targets.size());
  out.push_back(ByteVocabulary::pad_id);
  for (std::size_t t = 0; t + 1 < targets.size(); ++t) {
    out.push_back(targets[t]);
  }
  return out;
}

double loss_and_gradient(const ParameterSet& params, const ModelConfig& c, std::span<const TokenId> enc_ids,
                         std::span<const TokenId> targets, ParameterSet& grads, Rng* dropout_rng) {
  const std::vector<TokenId> dec_ids = shift_right(targets);
  ForwardPass pass = run_forward(params, c, enc_ids, dec_ids, dropout_rng, true);
  ForwardCache& fc = pass.cache;
  const auto w = bind(params, c);
  auto g = bind(grads, c);
  const std::size_t d = c.d_model;
  const std::size_t td = dec_ids.size();
  const std::size_t te = enc_ids.size();
  const std::size_t V = c.vocab_size;
  const std::size_t h = c.n_heads;

  // Softmax cross-entropy gradient.
  std::size_t count = 0;
  for (TokenId t : targets) {
    count += t != ByteVocabulary::pad_id ? 1 : 0;
  }
  if (count == 0) {
    throw ArgumentError("loss: every target position is pad");
  }
  Act dlogits(td, V);
  double total = 0.0;
  for (std::size_t t = 0; t < td; ++t) {
    if (targets[t] == ByteVocabulary::pad_id) {
      continue;
    }
    const double* lr = pass.logits.data() + t * V;
    const double mx = *std::max_element(lr, lr + V);
    double z = 0.0;
    for (std::size_t v = 0; v < V; ++v) {
      z += std::exp(lr[v] - mx);
    }
    const auto y = static_cast<std::size_t>(targets[t]);
    total += mx + std::log(z) - lr[y];
    double* dl = dlogits.data() + t * V;
    for (std::size_t v = 0; v < V; ++v) {
      dl[v] = std::exp(lr[v] - mx) / z / static_cast<double>(count);
    }
    dl[y] -= 1.0 / static_cast<double>(count);
  }
  const double loss_value = total / static_cast<double>(count);

  // Tied output head.
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Act dout(td, d);
  const double* e = w.embedding->data.data();
  double* de = g.embedding->data.data();
  for (std::size_t t = 0; t < td; ++t) {
    const double* dl = dlogits.data() + t * V;
    const double* o = fc.dec_out_scaled.data() + t * d;
    double* dor = dout.data() + t * d;
    for (std::size_t v = 0; v < V; ++v) {
      const double gv = dl[v];
      if (gv == 0.0) {
        continue;
      }
      const double* er = e + v * d;
      double* der = de + v * d;
      for (std::size_t k = 0; k < d; ++k) {
        dor[k] += gv * er[k];
        der[k] += gv * o[k];
      }
    }
  }
  for (double& x : dout.v) {
    x *= scale;
  }

  // Decoder stack.
  backward_masks(dout, fc.dec_final_drop);
  Act dh(td, d);
  rms_norm_backward(fc.dec_final, *w.dec_final, dout, dh, *g.dec_final);
  Act denc(te, d);
  std::vector<double> dbias_dec(h * td * td, 0.0);
  for (std::size_t li = c.n_decoder_layers; li-- > 0;) {
    DecoderLayerCache& lc = fc.dec[li];
    const auto& lw = w.dec[li];
    auto& lg = g.dec[li];

    Act df = dh;
    backward_masks(df, lc.ffn_drop);
    Act dn3(td, d);
    feed_forward_backward(lc.ffn, lw.ffn, lg.ffn, df, dn3);
    rms_norm_backward(lc.ffn_norm, *lw.ffn_norm, dn3, dh, *lg.ffn_norm);

    Act dx = dh;
    backward_masks(dx, lc.cross_drop);
    Act dn2(td, d);
    attention_backward(lc.cross_attn, lw.cross_attn, lg.cross_attn, c, dx, dn2, denc, nullptr);
    rms_norm_backward(lc.cross_norm, *lw.cross_norm, dn2, dh, *lg.cross_norm);

    Act da = dh;
    backward_masks(da, lc.self_drop);
    Act dn(td, d);
    attention_backward(lc.self_attn, lw.self_attn, lg.self_attn, c, da, dn, dn, dbias_dec.data());
    rms_norm_backward(lc.self_norm, *lw.self_norm, dn, dh, *lg.self_norm);
  }
  accumulate_bias_grad(dbias_dec, fc.dec_buckets, h, td, td, *g.dec_bias);
  backward_masks(dh, fc.dec_embed_drop);
  for (std::size_t t = 0; t < td; ++t) {
    double* der = de + static_cast<std::size_t>(dec_ids[t]) * d;
    const double* src = dh.data() + t * d;
    for (std::size_t k = 0; k < d; ++k) {
      der[k] += src[k];
    }
  }

  // Encoder stack.
  backward_masks(denc, fc.enc_final_drop);
  Act deh(te, d);
  rms_norm_backward(fc.enc_final, *w.enc_final, denc, deh, *g.enc_final);
  std::vector<double> dbias_enc(h * te * te, 0.0);
  for (std::size_t li = c.n_encoder_layers; li-- > 0;) {
    EncoderLayerCache& lc = fc.enc[li];
    const auto& lw = w.enc[li];
    auto& lg = g.enc[li];

    Act df = deh;
    backward_masks(df, lc.ffn_drop);
    Act dn2(te, d);
    feed_forward_backward(lc.ffn, lw.ffn, lg.ffn, df, dn2);
    rms_norm_backward(lc.ffn_norm, *lw.ffn_norm, dn2, deh, *lg.ffn_norm);

    Act da = deh;
    backward_masks(da, lc.attn_drop);
    Act dn(te, d);
    attention_backward(lc.attn, lw.attn, lg.attn, c, da, dn, dn, dbias_enc.data());
    rms_norm_backward(lc.attn_norm, *lw.attn_norm, dn, deh, *lg.attn_norm);
  }
  accumulate_bias_grad(dbias_enc, fc.enc_buckets, h, te, te, *g.enc_bias);
  backward_masks(deh, fc.enc_embed_drop);
  for (std::size_t t = 0; t < te; ++t) {
    double* der = de + static_cast<std::size_t>(enc_ids[t]) * d;
    const double* src = deh.data() + t * d;
    for (std::size_t k = 0; k < d; ++k) {
      der[k] += src[k];
    }
  }
  return loss_value;
}

// ---------------------------------------------------------------------------
// Incremental decoding
// ---------------------------------------------------------------------------

namespace {

class ModelSession final : public decoding::DecoderSession {
 public:
  ModelSession(const ParameterSet& params, const ModelConfig& config, std::span<const TokenId> enc_ids)
      : config_(config), w_(bind(params, config)) {
    config_.validate();
    check_ids(enc_ids, config_, "encoder");
    key_valid_ = encoder_key_mask(enc_ids);
    const Act enc_out = run_encoder(w_, config_, enc_ids, key_valid_, nullptr, nullptr);
    for (const auto& lw : w_.dec) {
      cross_k_.push_back(linear(enc_out, *lw.cross_attn.k));
      cross_v_.push_back(linear(enc_out, *lw.cross_attn.v));
    }
    self_k_.resize(config_.n_decoder_layers);
    self_v_.resize(config_.n_decoder_layers);
    advance(ByteVocabulary::pad_id);  // decoder start token
  }

  std::unique_ptr<decoding::DecoderSession> clone() const override {
    return std::make_unique<ModelSession>(*this);
  }

  std::vector<double> next_logits() override { return logits_; }

  void advance(TokenId token) override {
    const ModelConfig& c = config_;
    if (token < 0 || static_cast<std::size_t>(token) >= c.vocab_size) {
      throw RangeError("decoder id " + std::to_string(token) + " outside vocabulary");
    }
    const std::size_t d = c.d_model;
    const std::size_t pos = position_++;
    const std::span<const TokenId> one(&token, 1);
    Act h = embed(*w_.embedding, one, d);

    // Bias row for this query position against keys 0..pos.
    std::vector<double> bias(c.n_heads * (pos + 1));
    for (std::size_t j = 0; j <= pos; ++j) {
      const std::size_t b = relative_position_bucket(static_cast<long>(j) - static_cast<long>(pos), false,
                                                     c.relative_attention_buckets, c.relative_attention_max_distance);
      for (std::size_t head = 0; head < c.n_heads; ++head) {
        bias[head * (pos + 1) + j] = w_.dec_bias->data[b * c.n_heads + head];
      }
    }

    for (std::size_t l = 0; l < c.n_decoder_layers; ++l) {
      const auto& lw = w_.dec[l];
      Act n = rms_norm(h, *lw.self_norm, nullptr);
      Act q = linear(n, *lw.self_attn.q);
      Act k = linear(n, *lw.self_attn.k);
      Act v = linear(n, *lw.self_attn.v);
      self_k_[l].insert(self_k_[l].end(), k.v.begin(), k.v.end());
      self_v_[l].insert(self_v_[l].end(), v.v.begin(), v.v.end());
      Act ctx = attend(q, self_k_[l].data(), self_v_[l].data(), pos + 1, bias.data(), {});
      add_into(h, linear(ctx, *lw.self_attn.o));

      Act n2 = rms_norm(h, *lw.cross_norm, nullptr);
      Act cq = linear(n2, *lw.cross_attn.q);
      Act cctx = attend(cq, cross_k_[l].data(), cross_v_[l].data(), cross_k_[l].rows, nullptr, key_valid_);
      add_into(h, linear(cctx, *lw.cross_attn.o));

      Act n3 = rms_norm(h, *lw.ffn_norm, nullptr);
      add_into(h, feed_forward(n3, lw.ffn, nullptr));
    }
    Act out = rms_norm(h, *w_.dec_final, nullptr);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (double& x : out.v) {
      x *= scale;
    }
    logits_.assign(c.vocab_size, 0.0);
    const double* e = w_.embedding->data.data();
    for (std::size_t vtok = 0; vtok < c.vocab_size; ++vtok) {
      const double* er = e + vtok * d;
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        s += out.v[k] * er[k];
      }
      logits_[vtok] = s;
    }
  }

 private:
  // Single-query attention over `tk` cached keys; same arithmetic order as
  // the batched kernel.
  Act attend(const Act& q, const double* keys, const double* values, std::size_t tk, const double* bias,
             const std::vector<bool>& key_valid) const {
    const std::size_t inner = config_.inner_dim();
    const std::size_t dkv = config_.d_kv;
    Act ctx(1, inner);
    std::vector<double> p(tk);
    for (std::size_t head = 0; head < config_.n_heads; ++head) {
      double max_score = kNegInf;
      for (std::size_t j = 0; j < tk; ++j) {
        if (!key_valid.empty() && !key_valid[j]) {
          p[j] = kNegInf;
          continue;
        }
        double s = 0.0;
        const double* qi = q.data() + head * dkv;
        const double* kj = keys + j * inner + head * dkv;
        for (std::size_t e = 0; e < dkv; ++e) {
          s += qi[e] * kj[e];
        }
        if (bias != nullptr) {
          s += bias[head * tk + j];
        }
        p[j] = s;
        max_score = std::max(max_score, s);
      }
      if (max_score == kNegInf) {
        continue;
      }
      double z = 0.0;
      for (std::size_t j = 0; j < tk; ++j) {
        p[j] = p[j] == kNegInf ? 0.0 : std::exp(p[j] - max_score);
        z += p[j];
      }
      double* out = ctx.data() + head * dkv;
      for (std::size_t j = 0; j < tk; ++j) {
        const double pj = p[j] / z;
        if (pj == 0.0) {
          continue;
        }
        const double* vj = values + j * inner + head * dkv;
        for (std::size_t e = 0; e < dkv; ++e) {
          out[e] += pj * vj[e];
        }
      }
    }
    return ctx;
  }

  ModelConfig config_;
  ModelRefs<const Tensor> w_;
  std::vector<bool> key_valid_;
  std::vector<Act> cross_k_;
  std::vector<Act> cross_v_;
  std::vector<std::vector<double>> self_k_;
  std::vector<std::vector<double>> self_v_;
  std::size_t position_ = 0;
  std::vector<double> logits_;
};

}  // namespace

std::unique_ptr<decoding::DecoderSession> start_session(const ParameterSet& params, const ModelConfig& config,
                                                      std::span<const TokenId> encoder_ids) {
  return std::make_unique<ModelSession>(params, config, encoder_ids);
}

}  // namespace bytet5::model
