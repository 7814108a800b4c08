// vbfa/block.h

// Copyright 2026  The vbfa authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef VBFA_BLOCK_H_
#define VBFA_BLOCK_H_

#include <vector>

#include "vbfa/ard.h"

namespace vbfa {

// Equal split of the factor dimensions into posterior-independent groups.
struct BlockPartition {
  int total_dim = 0;   // n_y
  int partitions = 1;  // P
  int block_dim = 0;   // n_y / P

  static BlockPartition make(int factor_dim, int partitions);
  int col_start(int p) const { return p * block_dim; }
};

// Mutable training state of the block-partitioned family.  `residual[i]`
// always holds Fbar_i minus every block's current reconstruction
// N_i E[W^(p)] E[y^(p)_i]; it stays empty in the single-block case, where the
// operations fall through to the joint-family code path.
struct BlockState {
  BlockPartition part;
  int num_components = 0;
  int feature_dim = 0;
  std::vector<LoadingPosterior> loadings;             // per block
  std::vector<std::vector<LatentPosterior>> latents;  // [block][session]
  std::vector<Eigen::VectorXd> residual;              // [session], K d
};

// Test hook recording matrix allocations of the block code path.  A
// violation is any allocation with both dimensions above `max_dim` that is
// not a (K d) x block_dim accumulator.
class AllocationAudit {
 public:
  static void begin(int max_dim, long exempt_rows, long exempt_cols);
  static void end();
  static bool active();
  static int violations();
  static long max_square_dim();  // largest min(rows, cols) seen
  static void note(long rows, long cols);
};

// Random-initialized state: loadings are the column slices of the same
// seeded draw the joint trainer makes, latents start at zero mean.
BlockState init_block_state(const std::vector<NormStats> &stats, int factor_dim,
                            int partitions, const Hyper &hyper,
                            std::uint64_t seed);

// Rebuilds every residual from the statistics and the current state.
void recompute_residuals(const std::vector<NormStats> &stats, BlockState *state);

// q(Y^(p)) given every other block's current means (through the residuals).
void update_y_block(int p, const std::vector<NormStats> &stats, BlockState *state);

// q(W^(p)) from the residualized accumulators C^(p), R^(p)_k.
void update_w_block(int p, const std::vector<NormStats> &stats, BlockState *state,
                    const AlphaPosterior &alpha);

// q(alpha) over the concatenated per-block columns.
AlphaPosterior update_alpha_blocks(const std::vector<LoadingPosterior> &blocks,
                                   const Hyper &hyper);

// Cross moment R^(m,n)_k = sum_i N_ik E[y^(m)_i] E[y^(n)_i]^T.
Eigen::MatrixXd block_cross_moment(const std::vector<NormStats> &stats,
                                   const BlockState &state, int k, int m, int n);

// The bound for the block family; block-diagonal second moments are used
// implicitly and nothing of size n_y x n_y is formed.
ElboReport elbo_block(const GlobalStats &global,
                      const std::vector<NormStats> &stats,
                      const BlockState &state, const AlphaPosterior &alpha,
                      const Hyper &hyper);

// Sweep p = 1..P of (update_y_block, update_w_block), then the alpha update,
// per cycle.  partitions == 1 runs the joint trainer unchanged.
TrainResult train_block(const TrainingData &data, const TrainConfig &config);

// Full-width posterior assembled from the per-block ones (block-diagonal row
// precisions); used when saving a block-trained model.
LoadingPosterior assemble_full_posterior(const BlockState &state);

}  // namespace vbfa

#endif  // VBFA_BLOCK_H_
