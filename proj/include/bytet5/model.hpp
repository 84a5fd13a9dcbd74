#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bytet5/bytevocab.hpp"
#include "bytet5/decode.hpp"
#include "bytet5/rng.hpp"

namespace bytet5::model {

struct ModelConfig {
  std::size_t d_model = 1472;
  std::size_t d_ff = 3584;
  std::size_t n_heads = 6;
  std::size_t d_kv = 64;
  std::size_t n_encoder_layers = 12;
  std::size_t n_decoder_layers = 4;
  std::size_t vocab_size = ByteVocabulary::vocab_size;
  std::size_t context_length = 512;
  double dropout_rate = 0.1;
  std::size_t relative_attention_buckets = 32;
  std::size_t relative_attention_max_distance = 128;

  std::size_t inner_dim() const { return n_heads * d_kv; }

  // Throws ArgumentError on invalid dimensions.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Named presets:
//   banglabyt5-small  d_model 1472, d_ff 3584, 6 heads x 64, 12 enc + 4 dec
//   desk              ~37k parameters, trainable on one CPU core
//   tiny              d_model 8, d_ff 16, 2 heads x 4, 1 + 1 layers, 4 buckets
ModelConfig preset(std::string_view name);
std::vector<std::string> preset_names();

// Closed-form trainable parameter count; never allocates.
std::uint64_t count_parameters(const ModelConfig& config);

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims);

  std::size_t size() const { return data.size(); }
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

// Ordered collection of named tensors. Layout (row-major, linear maps
// stored as [in, out] so that y = x W):
//
//   shared.embedding                 [vocab, d_model]   tied with the output head
//   encoder.rel_bias                 [buckets, heads]
//   encoder.layer.<i>.attn_norm      [d_model]
//   encoder.layer.<i>.attn.{q,k,v}   [d_model, heads * d_kv]
//   encoder.layer.<i>.attn.o         [heads * d_kv, d_model]
//   encoder.layer.<i>.ffn_norm       [d_model]
//   encoder.layer.<i>.ffn.{wi0,wi1}  [d_model, d_ff]   wi0 is the GELU gate
//   encoder.layer.<i>.ffn.wo         [d_ff, d_model]
//   encoder.final_norm               [d_model]
//   decoder.rel_bias                 [buckets, heads]
//   decoder.layer.<i>.self_norm, self_attn.*, cross_norm, cross_attn.*,
//   decoder.layer.<i>.ffn_norm, ffn.*
//   decoder.final_norm               [d_model]
class ParameterSet {
 public:
  void add(std::string name, Tensor tensor);

  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t tensor_count() const { return entries_.size(); }
  std::uint64_t element_count() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void fill(double value);
  bool all_finite() const;

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// Zero-filled tensors with the layout above.
ParameterSet allocate_parameters(const ModelConfig& config);

// Scaled-normal initialization (std per tensor):
//   embedding 1, q (d_model * d_kv)^-1/2, k and v d_model^-1/2,
//   o (heads * d_kv)^-1/2, wi0 and wi1 d_model^-1/2, wo d_ff^-1/2,
//   rel_bias d_model^-1/2, norm scales 1.
ParameterSet init_parameters(const ModelConfig& config, std::uint64_t seed);

// Row-major [rows, cols].
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

// T5-style relative position bucket for (key position - query position).
std::size_t relative_position_bucket(long relative_position, bool bidirectional,
                                     std::size_t num_buckets, std::size_t max_distance);

// Decoder logits [decoder length, vocab]. Encoder positions holding pad_id
// are masked out of attention; decoder self-attention is causal. Throws
// RangeError for ids outside the vocabulary or sequences longer than
// context_length.
Matrix forward(const ParameterSet& params, const ModelConfig& config,
               std::span<const TokenId> encoder_ids, std::span<const TokenId> decoder_ids);

// Mean token cross-entropy over targets that are not pad_id. Throws
// ArgumentError when every target is pad or shapes disagree.
double loss(const Matrix& logits, std::span<const TokenId> targets);

// Teacher-forcing decoder input: [pad] + targets[:-1].
std::vector<TokenId> shift_right(std::span<const TokenId> targets);

// Forward + backward for one example. Adds d(loss)/d(params) into `grads`
// (same layout as `params`) and returns the loss. Dropout is applied only
// when `dropout_rng` is non-null and config.dropout_rate > 0.
double loss_and_gradient(const ParameterSet& params, const ModelConfig& config,
                         std::span<const TokenId> encoder_ids, std::span<const TokenId> targets,
                         ParameterSet& grads, Rng* dropout_rng = nullptr);

// Incremental decoding session over a frozen parameter set. Runs the
// encoder once, caches cross-attention keys/values and grows a
// self-attention cache per generated token. `params` must outlive it.
std::unique_ptr<decoding::DecoderSession> start_session(const ParameterSet& params,
                                                      const ModelConfig& config,
                                                      std::span<const TokenId> encoder_ids);

}  // namespace bytet5::model
