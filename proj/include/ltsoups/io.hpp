#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "ltsoups/data.hpp"
#include "ltsoups/losses.hpp"
#include "ltsoups/nn.hpp"

namespace ltsoups {

inline constexpr std::uint32_t kLtdsVersion = 1;
inline constexpr std::uint32_t kLtwtVersion = 1;

// LTDS: "LTDS", u32 version, u64 N, u32 d, u32 K, N*d f64 row-major, N u32
// labels. Everything little-endian.
void write_ltds(std::ostream& out, const Dataset& data);
Dataset read_ltds(std::istream& in);
void save_ltds(const std::filesystem::path& path, const Dataset& data);
Dataset load_ltds(const std::filesystem::path& path);

struct CheckpointMeta {
  std::uint64_t seed = 0;
  // Imbalance ratio of the data the model was trained on; 0 for merges.
  double subset_rho = 0.0;
  LossKind loss = LossKind::la;
};

struct Checkpoint {
  ModelWeights weights;
  CheckpointMeta meta;
};

// LTWT: "LTWT", u32 version, u32 linear-layer count, then (rows u32, cols u32)
// for every tensor in layout order, the flat f64 weights, and the metadata
// block (u64 seed, f64 subset rho, u8 loss tag).
void write_ltwt(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_ltwt(std::istream& in);
void save_ltwt(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_ltwt(const std::filesystem::path& path);

}  // namespace ltsoups
