#include "bytet5/checkpoint.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <istream>
#include <ostream>

#include "bytet5/error.hpp"

namespace bytet5::checkpoint {

namespace {

constexpr std::array<char, 8> kMagic = {'B', 'T', '5', 'C', 'K', 'P', 'T', '\0'};

template <class U>
void put_le(std::ostream& out, U value) {
  char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    buf[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  }
  out.write(buf, sizeof(U));
}

template <class U>
U get_le(std::istream& in) {
  unsigned char buf[sizeof(U)];
  in.read(reinterpret_cast<char*>(buf), sizeof(U));
  if (!in) {
    throw StructureError("checkpoint truncated");
  }
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    value |= static_cast<U>(buf[i]) << (8 * i);
  }
  return value;
}

void put_f64(std::ostream& out, double v) { put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v)); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_le<std::uint64_t>(in)); }

}  // namespace

void write(std::ostream& out, const Checkpoint& ck) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kFormatVersion);
  const auto& c = ck.config;
  for (std::uint64_t v : {c.d_model, c.d_ff, c.n_heads, c.d_kv, c.n_encoder_layers, c.n_decoder_layers,
                          c.vocab_size, c.context_length, c.relative_attention_buckets,
                          c.relative_attention_max_distance}) {
    put_le<std::uint64_t>(out, v);
  }
  put_f64(out, c.dropout_rate);
  put_le<std::uint64_t>(out, ck.rng_state.size());
  out.write(ck.rng_state.data(), static_cast<std::streamsize>(ck.rng_state.size()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ck.params.tensor_count()));
  for (const auto& [name, t] : ck.params) {
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
    for (std::size_t dim : t.shape) {
      put_le<std::uint64_t>(out, dim);
    }
    for (double v : t.data) {
      put_f64(out, v);
    }
  }
  if (!out) {
    throw IoError("failed writing checkpoint");
  }
}

Checkpoint read(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) {
    throw StructureError("not a bytet5 checkpoint (bad magic)");
  }
  const auto version = get_le<std::uint32_t>(in);
  if (version != kFormatVersion) {
    throw StructureError("unsupported checkpoint format version " + std::to_string(version));
  }
  Checkpoint ck;
  auto& c = ck.config;
  for (std::size_t* field : {&c.d_model, &c.d_ff, &c.n_heads, &c.d_kv, &c.n_encoder_layers, &c.n_decoder_layers,
                             &c.vocab_size, &c.context_length, &c.relative_attention_buckets,
                             &c.relative_attention_max_distance}) {
    *field = static_cast<std::size_t>(get_le<std::uint64_t>(in));
  }
  c.dropout_rate = get_f64(in);
  c.validate();

  const auto rng_len = get_le<std::uint64_t>(in);
  if (rng_len > (1u << 20)) {
    throw StructureError("implausible RNG state length");
  }
  ck.rng_state.resize(rng_len);
  in.read(ck.rng_state.data(), static_cast<std::streamsize>(rng_len));

  // Tensors must match the layout the config implies, in order.
  model::ParameterSet expected = model::allocate_parameters(c);
  const auto count = get_le<std::uint32_t>(in);
  if (count != expected.tensor_count()) {
    throw StructureError("checkpoint has " + std::to_string(count) + " tensors, config implies " +
                         std::to_string(expected.tensor_count()));
  }
  for (auto& [name, t] : expected) {
    const auto name_len = get_le<std::uint16_t>(in);
    std::string stored(name_len, '\0');
    in.read(stored.data(), name_len);
    if (!in || stored != name) {
      throw StructureError("expected tensor " + name + ", found " + stored);
    }
    const auto rank = get_le<std::uint8_t>(in);
    std::vector<std::size_t> shape(rank);
    for (auto& dim : shape) {
      dim = static_cast<std::size_t>(get_le<std::uint64_t>(in));
    }
    if (shape != t.shape) {
      throw StructureError("tensor " + name + " has unexpected shape");
    }
    for (double& v : t.data) {
      v = get_f64(in);
    }
  }
  ck.params = std::move(expected);
  return ck;
}

void save(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  write(out, checkpoint);
}

Checkpoint load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open checkpoint " + path.string());
  }
  return read(in);
}

}  // namespace bytet5::checkpoint
