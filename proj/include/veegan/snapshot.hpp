#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "veegan/mlp.hpp"
#include "veegan/optim.hpp"

// Snapshot blob layout (version 1, native little-endian):
//
//   "VGSNAP\0\0"           8-byte magic
//   u32 version            = 1
//   net:   u32 n_layers, u8 hidden, u8 output, f64 leaky_slope,
//          then per layer: tensor weight, tensor bias
//   opt:   u8 kind, f64 lr, f64 beta1, f64 beta2, f64 eps, u64 step,
//          u32 n_moments, n_moments tensors m, n_moments tensors v
//   u64 checksum           FNV-1a over every preceding byte
//
//   tensor: u32 rank, rank x u64 extents, product(extents) x f64 values

namespace veegan::nn {

using Blob = std::vector<std::uint8_t>;

class CorruptBlob : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

Blob snapshot(const NetParams& params, const OptState& state);
std::pair<NetParams, OptState> restore(std::span<const std::uint8_t> blob);

/// Network-only encoding used inside model files (same layout minus the optimizer section).
Blob encode_net(const NetParams& params);
NetParams decode_net(std::span<const std::uint8_t> blob);

}  // namespace veegan::nn
