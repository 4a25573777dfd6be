// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

// Config text, raster volumes and checkpoints.
//
// Raster ("DLKV"): magic, u16 version, u8 dtype (0=f32, 1=f64, 2=u8),
// u8 rank, u32 dims (N, C, spatial...), little-endian row-major payload.
//
// Checkpoint ("DLKC"): magic, u16 version, u64 seed, u64 epoch, u32 config
// length, config text, u32 tensor count, directory entries (u16 name length,
// name, u8 dtype, u8 rank, u32 dims, u64 offset, u64 length), payload.
// Offsets are relative to the payload start and must tile it exactly.

#ifndef DLKA_IO_HPP_
#define DLKA_IO_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dlka/train.hpp"

namespace dlka {

// Malformed file or config text.
class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct DataConfig {
  Index count = 64;
  Shape dims{32, 32, 16};

  static DataConfig defaults(int rank);
};

struct Config {
  NetConfig net;
  TrainConfig train;
  DataConfig data;

  static Config defaults(int rank);
};

// key=value lines, `#` comments, `[section]` headers or dotted keys.
// Sections: net, lka, train, data. Defaults follow net.rank. Each override
// is one dotted key=value that replaces the same key from `text`.
Config config_parse(std::string_view text, const std::vector<std::string>& overrides = {});
// Canonical text; config_parse(config_format(c)) reproduces c.
std::string config_format(const Config& c);
Config config_load(const std::string& path,
                   const std::vector<std::string>& overrides = {});

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1, kU8 = 2 };

Index dtype_size(DType t);

struct Raster {
  DType dtype = DType::kF64;
  Shape dims;
  std::vector<double> values;        // f32/f64
  std::vector<std::uint8_t> labels;  // u8
};

constexpr std::uint16_t kRasterVersion = 1;
constexpr std::uint16_t kCheckpointVersion = 1;

std::string raster_encode(const Raster& r);
Raster raster_decode(std::string_view bytes);

Raster raster_from_tensor(const Tensor& t, DType dtype = DType::kF64);
// Labels (N, spatial...) are stored as (N, 1, spatial...).
Raster raster_from_labels(const LabelMap& labels);
Tensor raster_to_tensor(const Raster& r);
LabelMap raster_to_labels(const Raster& r);

void raster_write(const std::string& path, const Raster& r);
Raster raster_read(const std::string& path);

struct Checkpoint {
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  std::string config_text;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

std::string checkpoint_encode(const Checkpoint& ck);
Checkpoint checkpoint_decode(std::string_view bytes);
void checkpoint_save(const std::string& path, const Checkpoint& ck);
Checkpoint checkpoint_load(const std::string& path);

// Parameters go under "param/", momentum buffers under "momentum/".
Checkpoint checkpoint_from_state(const TrainState& state, const DataConfig& data);
// Rebuilds the state; the net is re-initialized and then overwritten, so
// every parameter must be present with a matching shape.
TrainState state_from_checkpoint(const Checkpoint& ck, DataConfig* data = nullptr);

}  // namespace dlka

#endif  // DLKA_IO_HPP_
