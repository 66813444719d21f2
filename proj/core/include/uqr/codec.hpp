// Copyright (c) 2026, UQR contributors. All rights reserved.
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

#ifndef UQR_CODEC_HPP_
#define UQR_CODEC_HPP_

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uqr/mask.hpp"

namespace uqr {

enum class CodecKind { kDct, kPca, kSparse, kFlatten };

/// How low-frequency DCT coefficients are picked: diagonal zig-zag scan
/// (default) or a row-major square low-pass block.
enum class SamplingOrder { kZigzag, kBlock };

std::string to_string(CodecKind kind);
CodecKind codec_kind_from_string(const std::string& name);

/// Describes one mask codec: spatial side N, vector dimension n_k, and
/// kind-specific settings. Flatten requires n_k == N*N.
struct CodecSpec {
  CodecKind kind = CodecKind::kDct;
  int mask_side = 128;   // N
  int vector_dim = 256;  // n_k

  SamplingOrder sampling = SamplingOrder::kZigzag;  // DCT only
  bool pca_center = false;                          // PCA: subtract mean before projecting
  double beta = 0.2;                                // sparse coding regularizer
  int dict_iters = 30;                              // sparse coding alternations
  int ista_iters = 200;                             // ISTA steps per encode
  double ista_tol = 1e-6;                           // ISTA update-norm stop

  void validate() const;
};

/// n_k codec coefficients for one instance mask.
struct MaskVector {
  std::vector<double> coeffs;
  CodecSpec spec;
};

/// Orthonormal DCT-II transform matrix with its zig-zag scan order.
struct DctBasis {
  int side = 0;
  Eigen::MatrixXd transform;                 // A, side x side
  std::vector<std::pair<int, int>> zigzag;   // all side*side (row, col) pairs
};

/// PCA projection with orthonormal columns (P^T P = I).
struct PcaBasis {
  int side = 0;
  Eigen::MatrixXd projection;  // N^2 x n_k
  bool centered = false;
  Eigen::VectorXd mean;        // N^2, zero unless centered
  bool padded = false;         // rank deficiency filled with an orthonormal completion
};

/// Overcomplete dictionary of unit-norm atoms (rows) for sparse coding.
struct Dictionary {
  int side = 0;
  Eigen::MatrixXd atoms;  // n_k x N^2, unit L2 rows
  double beta = 0.2;

  // Derived quantities reused by every encode; refreshed after fitting/loading.
  Eigen::MatrixXd gram;   // atoms * atoms^T
  double lipschitz = 0.0;
  void refresh_cache();
};

// --- DCT ---

DctBasis dct_matrix(int side);

/// First n_k positions of the zig-zag scan over an N x N grid, starting at
/// (0,0) with the first step to (0,1).
std::vector<std::pair<int, int>> zigzag_indices(int side, int vector_dim);

/// Row-major order over the top-left ceil(sqrt(n_k))-sided square block.
std::vector<std::pair<int, int>> block_indices(int side, int vector_dim);

MaskVector dct_encode(const SoftMask& mask, const DctBasis& basis, const CodecSpec& spec);
SoftMask dct_decode(const MaskVector& vec, const DctBasis& basis);

// --- PCA ---

/// Top-n_k right singular vectors of the stacked flattened masks (Eq. of the
/// uncentered factorization; centering optional). Columns carry a
/// deterministic sign: the largest-magnitude entry is positive.
PcaBasis pca_fit(std::span<const SoftMask> masks, int vector_dim, bool center = false);

MaskVector pca_encode(const SoftMask& mask, const PcaBasis& basis, const CodecSpec& spec);
SoftMask pca_decode(const MaskVector& vec, const PcaBasis& basis);

// --- Sparse coding ---

/// Alternating minimization of the Lasso objective
///   1/2 ||m - v D||^2 + beta ||v||_1,  s.t. unit-norm rows of D.
/// Codes via ISTA with D fixed, then D by least squares + row renormalization.
/// The per-alternation objective (measured after the code update) is appended
/// to `objective_trace` when provided.
Dictionary dict_learn(std::span<const SoftMask> masks, int vector_dim, double beta, int iters,
                      int ista_iters = 200, double ista_tol = 1e-6,
                      std::vector<double>* objective_trace = nullptr);

/// ISTA: v <- soft_threshold(v - eta (vD - m) D^T, eta beta) with eta = 1/L,
/// L the top eigenvalue of D D^T (power iteration, trace fallback).
MaskVector lasso_encode(const SoftMask& mask, const Dictionary& dict, const CodecSpec& spec,
                        int iters = 200, double tol = 1e-6);

SoftMask sparse_decode(const MaskVector& vec, const Dictionary& dict);

// --- Flatten baseline ---

MaskVector flatten_encode(const SoftMask& mask, const CodecSpec& spec);
SoftMask flatten_decode(const MaskVector& vec);

double soft_threshold(double value, double threshold);

/// One fitted codec behind a uniform encode/decode surface. DCT and Flatten
/// need no training data; PCA and Sparse are fitted on the masks provided.
class MaskCodec {
 public:
  static MaskCodec fit(const CodecSpec& spec, std::span<const SoftMask> training_masks);

  const CodecSpec& spec() const { return spec_; }

  MaskVector encode(const SoftMask& mask) const;
  SoftMask decode(const MaskVector& vec) const;
  /// Decode raw predicted coefficients (must have length n_k).
  SoftMask decode_coeffs(std::span<const double> coeffs) const;

  /// Flat binary persistence: magic "UQRB", kind byte, N and n_k as u32 LE,
  /// then the basis/dictionary payload as row-major f64 LE.
  void save(const std::filesystem::path& path) const;
  static MaskCodec load(const std::filesystem::path& path, const CodecSpec& spec);

  const DctBasis* dct_basis() const { return dct_ ? &*dct_ : nullptr; }
  const PcaBasis* pca_basis() const { return pca_ ? &*pca_ : nullptr; }
  const Dictionary* dictionary() const { return dict_ ? &*dict_ : nullptr; }

 private:
  explicit MaskCodec(CodecSpec spec) : spec_(std::move(spec)) {}

  CodecSpec spec_;
  std::optional<DctBasis> dct_;
  std::optional<PcaBasis> pca_;
  std::optional<Dictionary> dict_;
};

/// One CSV row per instance: id, then the n_k coefficients.
void write_mask_vectors_csv(const std::filesystem::path& path,
                            std::span<const std::pair<int, MaskVector>> rows);

}  // namespace uqr

#endif  // UQR_CODEC_HPP_
