#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "bytet5/model.hpp"

namespace bytet5::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

// Little-endian container:
//
//   magic            8 bytes  "BT5CKPT\0"
//   format_version   u32
//   model config     u64 x 10 (d_model, d_ff, n_heads, d_kv, n_encoder_layers,
//                    n_decoder_layers, vocab_size, context_length,
//                    relative_attention_buckets, relative_attention_max_distance)
//                    then f64 dropout_rate
//   rng_state        u64 byte length + bytes (mt19937_64 text state)
//   tensor_count     u32
//   per tensor       u16 name length, name bytes, u8 rank, u64 dims[rank],
//                    f64 values (row-major)
struct Checkpoint {
  model::ModelConfig config;
  model::ParameterSet params;
  std::string rng_state;
};

void write(std::ostream& out, const Checkpoint& checkpoint);
Checkpoint read(std::istream& in);

void save(const std::filesystem::path& path, const Checkpoint& checkpoint);
// Throws IoError / StructureError on unreadable or malformed files.
Checkpoint load(const std::filesystem::path& path);

}  // namespace bytet5::checkpoint
