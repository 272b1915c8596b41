#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "egqn/model/config.hpp"

namespace egqn::harness {

struct AttentionBenchOptions {
  std::vector<int> grids{8, 16, 32};
  int contexts = 3;
  int repeats = 5;
  int feature_dim = 64;
  int decoder_channels = 64;
  int key_dim = 32;
  int value_dim = 64;
  std::uint64_t seed = 0;
};

struct AttentionBenchRow {
  std::string mode;  // "epipolar" or "dense"
  int grid = 0;      // h' = w'
  int contexts = 0;
  std::size_t comparisons_per_pixel = 0;  // as counted by the kernels
  double seconds = 0.0;                   // median of one attention call
  std::size_t rep_bytes = 0;              // live bytes of one context's epipolar stack, 0 for dense
};

struct ThroughputRow {
  std::string mode;  // "gqn" or "egqn"
  int image_size = 0;
  int samples = 0;
  double samples_per_second = 0.0;
};

// h' * w' * h' * d' * bytes_per_scalar.
std::size_t epipolar_rep_bytes(std::size_t grid_h, std::size_t grid_w, std::size_t feature_dim,
                               std::size_t bytes_per_scalar);

// Times one attention call per grid and mode on random features and ring
// camera geometry.
std::vector<AttentionBenchRow> benchmark_attention(const AttentionBenchOptions& opts);

// Forward renders per second for gqn and egqn models that share every common
// weight. Runs are interleaved to share machine noise.
std::vector<ThroughputRow> benchmark_forward(const model::ModelConfig& base, int samples, std::uint64_t seed);

// Columns: kind,mode,n,contexts,comparisons_per_pixel,seconds,rep_bytes,samples_per_second
void write_benchmark_csv(const std::string& path, const std::vector<AttentionBenchRow>& attention,
                         const std::vector<ThroughputRow>& throughput);

}  // namespace egqn::harness
