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

#include "uqr/codec.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace uqr {

namespace {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;
using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

RowMajorMap as_matrix(const SoftMask& m) {
  return RowMajorMap(m.values.data(), m.height, m.width);
}

RowVectorXd flatten(const SoftMask& m) {
  return Eigen::Map<const RowVectorXd>(m.values.data(), static_cast<Eigen::Index>(m.values.size()));
}

SoftMask to_mask(const MatrixXd& values, int side) {
  SoftMask out(side, side);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) out.at(c, r) = values(r, c);
  return out;
}

SoftMask row_to_mask(const RowVectorXd& row, int side) {
  SoftMask out(side, side);
  for (int i = 0; i < side * side; ++i) out.values[static_cast<std::size_t>(i)] = row(i);
  return out;
}

void require_square(const SoftMask& m, int side, const char* who) {
  require(m.width == side && m.height == side, std::string(who) + ": mask dimensions do not match codec side");
}

const std::vector<std::pair<int, int>>& sample_positions(const CodecSpec& spec, const DctBasis& basis,
                                                         std::vector<std::pair<int, int>>& block_scratch) {
  if (spec.sampling == SamplingOrder::kZigzag) return basis.zigzag;
  block_scratch = block_indices(spec.mask_side, spec.vector_dim);
  return block_scratch;
}

// Stack flattened masks as rows of an n x N^2 data matrix.
MatrixXd data_matrix(std::span<const SoftMask> masks, int side, const char* who) {
  require(!masks.empty(), std::string(who) + ": no masks");
  MatrixXd data(static_cast<Eigen::Index>(masks.size()), static_cast<Eigen::Index>(side) * side);
  for (std::size_t i = 0; i < masks.size(); ++i) {
    require_square(masks[i], side, who);
    data.row(static_cast<Eigen::Index>(i)) = flatten(masks[i]);
  }
  return data;
}

// Deterministic sign: make the largest-magnitude entry positive.
void fix_column_sign(Eigen::Ref<VectorXd> col) {
  Eigen::Index best = 0;
  double best_abs = -1.0;
  for (Eigen::Index i = 0; i < col.size(); ++i) {
    const double a = std::abs(col(i));
    if (a > best_abs) {
      best_abs = a;
      best = i;
    }
  }
  if (col(best) < 0) col = -col;
}

// Extend `basis` (d x k, orthonormal columns) to `target` columns using
// canonical vectors, Gram-Schmidt style.
void orthonormal_complete(MatrixXd& basis, Eigen::Index used, Eigen::Index target) {
  const Eigen::Index dim = basis.rows();
  for (Eigen::Index e = 0; e < dim && used < target; ++e) {
    VectorXd candidate = VectorXd::Zero(dim);
    candidate(e) = 1.0;
    candidate -= basis.leftCols(used) * (basis.leftCols(used).transpose() * candidate);
    const double norm = candidate.norm();
    if (norm > 1e-8) {
      basis.col(used++) = candidate / norm;
    }
  }
  require(used == target, "pca_fit: failed to complete orthonormal basis");
}

double power_iteration_top_eigenvalue(const MatrixXd& sym) {
  VectorXd v = VectorXd::Ones(sym.rows());
  v.normalize();
  double eig = 0.0;
  for (int it = 0; it < 200; ++it) {
    VectorXd next = sym * v;
    const double norm = next.norm();
    if (norm < 1e-300) return 0.0;
    next /= norm;
    const double next_eig = next.dot(sym * next);
    const bool converged = std::abs(next_eig - eig) <= 1e-10 * std::max(1.0, std::abs(next_eig));
    v = next;
    eig = next_eig;
    if (converged && it > 2) return eig;
  }
  // Non-convergent: the trace bounds the top eigenvalue from above.
  return sym.trace();
}

void append_f64_le(std::string& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  char raw[8];
  std::memcpy(raw, &bits, 8);
  out.append(raw, 8);
}

void append_u32_le(std::string& out, std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap32(v);
  char raw[4];
  std::memcpy(raw, &v, 4);
  out.append(raw, 4);
}

std::uint32_t read_u32_le(std::istream& in) {
  char raw[4];
  in.read(raw, 4);
  std::uint32_t v;
  std::memcpy(&v, raw, 4);
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap32(v);
  return v;
}

double read_f64_le(std::istream& in) {
  char raw[8];
  in.read(raw, 8);
  std::uint64_t bits;
  std::memcpy(&bits, raw, 8);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  return std::bit_cast<double>(bits);
}

}  // namespace

std::string to_string(CodecKind kind) {
  switch (kind) {
    case CodecKind::kDct: return "dct";
    case CodecKind::kPca: return "pca";
    case CodecKind::kSparse: return "sparse";
    case CodecKind::kFlatten: return "flatten";
  }
  return "?";
}

CodecKind codec_kind_from_string(const std::string& name) {
  if (name == "dct") return CodecKind::kDct;
  if (name == "pca") return CodecKind::kPca;
  if (name == "sparse") return CodecKind::kSparse;
  if (name == "flatten") return CodecKind::kFlatten;
  throw std::invalid_argument("unknown codec kind: " + name);
}

void CodecSpec::validate() const {
  require(mask_side >= 2, "CodecSpec: mask side must be >= 2");
  require(vector_dim >= 1 && static_cast<long long>(vector_dim) <=
                                 static_cast<long long>(mask_side) * mask_side,
          "CodecSpec: vector_dim must be in [1, N^2]");
  if (kind == CodecKind::kFlatten) {
    require(vector_dim == mask_side * mask_side, "CodecSpec: flatten requires n_k = N^2");
  }
  require(beta >= 0.0, "CodecSpec: beta must be >= 0");
  require(dict_iters >= 1 && ista_iters >= 1, "CodecSpec: iteration counts must be >= 1");
  require(ista_tol >= 0.0, "CodecSpec: ista_tol must be >= 0");
}

void Dictionary::refresh_cache() {
  gram = atoms * atoms.transpose();
  lipschitz = power_iteration_top_eigenvalue(gram);
  if (!(lipschitz > 0.0)) lipschitz = std::max(gram.trace(), 1e-12);
}

DctBasis dct_matrix(int side) {
  require(side >= 2, "dct_matrix: side must be >= 2");
  DctBasis basis;
  basis.side = side;
  basis.transform.resize(side, side);
  for (int h = 0; h < side; ++h) {
    // sign(0) = 0 makes row zero the constant sqrt(1/N) row.
    const double scale = std::sqrt((h == 0 ? 1.0 : 2.0) / side);
    for (int l = 0; l < side; ++l) {
      basis.transform(h, l) = scale * std::cos((l + 0.5) * std::numbers::pi * h / side);
    }
  }
  basis.zigzag = zigzag_indices(side, side * side);
  return basis;
}

std::vector<std::pair<int, int>> zigzag_indices(int side, int vector_dim) {
  require(vector_dim >= 1 && static_cast<long long>(vector_dim) <=
                                 static_cast<long long>(side) * side,
          "zigzag_indices: vector_dim out of range");
  std::vector<std::pair<int, int>> order;
  order.reserve(static_cast<std::size_t>(vector_dim));
  for (int s = 0; s <= 2 * (side - 1) && static_cast<int>(order.size()) < vector_dim; ++s) {
    if (s % 2 == 1) {
      // odd anti-diagonal: walk down-left from (0, s)
      for (int r = std::max(0, s - side + 1); r <= std::min(s, side - 1); ++r) {
        order.emplace_back(r, s - r);
        if (static_cast<int>(order.size()) == vector_dim) break;
      }
    } else {
      // even anti-diagonal: walk up-right from (s, 0)
      for (int r = std::min(s, side - 1); r >= std::max(0, s - side + 1); --r) {
        order.emplace_back(r, s - r);
        if (static_cast<int>(order.size()) == vector_dim) break;
      }
    }
  }
  return order;
}

std::vector<std::pair<int, int>> block_indices(int side, int vector_dim) {
  require(vector_dim >= 1 && static_cast<long long>(vector_dim) <=
                                 static_cast<long long>(side) * side,
          "block_indices: vector_dim out of range");
  const int block = std::min(side, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(vector_dim)))));
  std::vector<std::pair<int, int>> order;
  order.reserve(static_cast<std::size_t>(vector_dim));
  for (int r = 0; r < block && static_cast<int>(order.size()) < vector_dim; ++r) {
    for (int c = 0; c < block && static_cast<int>(order.size()) < vector_dim; ++c) {
      order.emplace_back(r, c);
    }
  }
  return order;
}

MaskVector dct_encode(const SoftMask& mask, const DctBasis& basis, const CodecSpec& spec) {
  require(spec.kind == CodecKind::kDct, "dct_encode: spec kind mismatch");
  require(spec.mask_side == basis.side, "dct_encode: basis/spec side mismatch");
  require_square(mask, basis.side, "dct_encode");
  const MatrixXd freq = basis.transform * as_matrix(mask) * basis.transform.transpose();
  std::vector<std::pair<int, int>> block_scratch;
  const auto& positions = sample_positions(spec, basis, block_scratch);
  MaskVector out;
  out.spec = spec;
  out.coeffs.resize(static_cast<std::size_t>(spec.vector_dim));
  for (int i = 0; i < spec.vector_dim; ++i) {
    const auto [r, c] = positions[static_cast<std::size_t>(i)];
    out.coeffs[static_cast<std::size_t>(i)] = freq(r, c);
  }
  return out;
}

SoftMask dct_decode(const MaskVector& vec, const DctBasis& basis) {
  require(vec.spec.kind == CodecKind::kDct, "dct_decode: spec kind mismatch");
  require(vec.spec.mask_side == basis.side, "dct_decode: basis/spec side mismatch");
  require(static_cast<int>(vec.coeffs.size()) == vec.spec.vector_dim, "dct_decode: coefficient count mismatch");
  MatrixXd freq = MatrixXd::Zero(basis.side, basis.side);
  std::vector<std::pair<int, int>> block_scratch;
  const auto& positions = sample_positions(vec.spec, basis, block_scratch);
  for (int i = 0; i < vec.spec.vector_dim; ++i) {
    const auto [r, c] = positions[static_cast<std::size_t>(i)];
    freq(r, c) = vec.coeffs[static_cast<std::size_t>(i)];
  }
  // A is orthonormal, so the inverse transform is A^T f A.
  const MatrixXd spatial = basis.transform.transpose() * freq * basis.transform;
  return to_mask(spatial, basis.side);
}

PcaBasis pca_fit(std::span<const SoftMask> masks, int vector_dim, bool center) {
  require(vector_dim >= 1, "pca_fit: vector_dim must be >= 1");
  require(static_cast<int>(masks.size()) >= vector_dim, "pca_fit: fewer samples than vector_dim");
  const int side = masks[0].width;
  require(masks[0].height == side, "pca_fit: masks must be square");
  MatrixXd data = data_matrix(masks, side, "pca_fit");
  const Eigen::Index n = data.rows();
  const Eigen::Index dim = data.cols();

  PcaBasis basis;
  basis.side = side;
  basis.centered = center;
  basis.mean = VectorXd::Zero(dim);
  if (center) {
    basis.mean = data.colwise().mean().transpose();
    data.rowwise() -= basis.mean.transpose();
  }

  // Work with the smaller Gram matrix; right singular vectors follow from
  // X = U S V^T either way.
  MatrixXd projection(dim, vector_dim);
  Eigen::Index produced = 0;
  if (n <= dim) {
    const MatrixXd gram = data * data.transpose();  // n x n
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram);
    require(eig.info() == Eigen::Success, "pca_fit: eigen decomposition failed");
    const double top = std::max(eig.eigenvalues().maxCoeff(), 0.0);
    const double floor = std::max(top, 1.0) * 1e-12;  // sigma ratio 1e-6
    for (Eigen::Index i = n - 1; i >= 0 && produced < vector_dim; --i) {
      const double lambda = eig.eigenvalues()(i);
      if (lambda <= floor) break;  // rank exhausted
      projection.col(produced++) = data.transpose() * eig.eigenvectors().col(i) / std::sqrt(lambda);
    }
  } else {
    const MatrixXd cov = data.transpose() * data;  // dim x dim
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov);
    require(eig.info() == Eigen::Success, "pca_fit: eigen decomposition failed");
    const double top = std::max(eig.eigenvalues().maxCoeff(), 0.0);
    const double floor = std::max(top, 1.0) * 1e-12;
    for (Eigen::Index i = dim - 1; i >= 0 && produced < vector_dim; --i) {
      if (eig.eigenvalues()(i) <= floor) break;
      projection.col(produced++) = eig.eigenvectors().col(i);
    }
  }

  if (produced < vector_dim) {
    basis.padded = true;
    orthonormal_complete(projection, produced, vector_dim);
  }
  for (Eigen::Index c = 0; c < vector_dim; ++c) {
    projection.col(c).normalize();
    fix_column_sign(projection.col(c));
  }
  basis.projection = std::move(projection);
  return basis;
}

MaskVector pca_encode(const SoftMask& mask, const PcaBasis& basis, const CodecSpec& spec) {
  require(spec.kind == CodecKind::kPca, "pca_encode: spec kind mismatch");
  require(spec.mask_side == basis.side, "pca_encode: basis/spec side mismatch");
  require(spec.vector_dim == static_cast<int>(basis.projection.cols()), "pca_encode: vector_dim mismatch");
  require_square(mask, basis.side, "pca_encode");
  RowVectorXd row = flatten(mask);
  if (basis.centered) row -= basis.mean.transpose();
  const RowVectorXd coeffs = row * basis.projection;
  MaskVector out;
  out.spec = spec;
  out.coeffs.assign(coeffs.data(), coeffs.data() + coeffs.size());
  return out;
}

SoftMask pca_decode(const MaskVector& vec, const PcaBasis& basis) {
  require(vec.spec.kind == CodecKind::kPca, "pca_decode: spec kind mismatch");
  require(static_cast<int>(vec.coeffs.size()) == static_cast<int>(basis.projection.cols()),
          "pca_decode: coefficient count mismatch");
  const Eigen::Map<const RowVectorXd> coeffs(vec.coeffs.data(), static_cast<Eigen::Index>(vec.coeffs.size()));
  RowVectorXd row = coeffs * basis.projection.transpose();
  if (basis.centered) row += basis.mean.transpose();
  return row_to_mask(row, basis.side);
}

double soft_threshold(double value, double threshold) {
  if (value > threshold) return value - threshold;
  if (value < -threshold) return value + threshold;
  return 0.0;
}

namespace {

// Shared ISTA core working on precomputed c = m D^T and G = D D^T.
RowVectorXd ista_solve(const RowVectorXd& linear, const MatrixXd& gram, double lipschitz, double beta,
                       int iters, double tol) {
  const double eta = 1.0 / std::max(lipschitz, 1e-12);
  RowVectorXd v = RowVectorXd::Zero(linear.size());
  for (int it = 0; it < iters; ++it) {
    const RowVectorXd gradient = v * gram - linear;
    RowVectorXd next(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      next(i) = soft_threshold(v(i) - eta * gradient(i), eta * beta);
    }
    const double delta = (next - v).norm();
    v = next;
    if (delta < tol) break;
  }
  return v;
}

}  // namespace

Dictionary dict_learn(std::span<const SoftMask> masks, int vector_dim, double beta, int iters,
                      int ista_iters, double ista_tol, std::vector<double>* objective_trace) {
  require(vector_dim >= 1, "dict_learn: vector_dim must be >= 1");
  require(static_cast<int>(masks.size()) >= vector_dim, "dict_learn: fewer samples than vector_dim");
  require(beta >= 0.0, "dict_learn: beta must be >= 0");
  require(iters >= 1, "dict_learn: iters must be >= 1");
  const int side = masks[0].width;
  const MatrixXd data = data_matrix(masks, side, "dict_learn");
  require(data.cwiseAbs().maxCoeff() > 0.0, "dict_learn: degenerate all-zero dataset");
  const Eigen::Index n = data.rows();
  const Eigen::Index dim = data.cols();

  Dictionary dict;
  dict.side = side;
  dict.beta = beta;
  dict.atoms.resize(vector_dim, dim);
  // Initial atoms: the first n_k samples, unit-normalized; zero samples fall
  // back to canonical basis vectors.
  for (Eigen::Index r = 0; r < vector_dim; ++r) {
    const double norm = data.row(r).norm();
    if (norm > 1e-12) {
      dict.atoms.row(r) = data.row(r) / norm;
    } else {
      dict.atoms.row(r).setZero();
      dict.atoms(r, r % dim) = 1.0;
    }
  }

  MatrixXd codes(n, vector_dim);
  const VectorXd sq_norms = data.rowwise().squaredNorm();
  for (int alternation = 0; alternation < iters; ++alternation) {
    dict.refresh_cache();
    const MatrixXd linear = data * dict.atoms.transpose();  // n x n_k
    double objective = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) {
      codes.row(r) = ista_solve(linear.row(r), dict.gram, dict.lipschitz, beta, ista_iters, ista_tol);
      const double fit = sq_norms(r) - 2.0 * codes.row(r).dot(linear.row(r)) +
                         codes.row(r) * dict.gram * codes.row(r).transpose();
      objective += 0.5 * std::max(fit, 0.0) + beta * codes.row(r).cwiseAbs().sum();
    }
    if (objective_trace) objective_trace->push_back(objective);

    // Least squares for D: minimize ||data - codes * D||^2.
    const MatrixXd normal = codes.transpose() * codes;
    const MatrixXd rhs = codes.transpose() * data;
    const MatrixXd updated = normal.completeOrthogonalDecomposition().solve(rhs);
    for (Eigen::Index r = 0; r < vector_dim; ++r) {
      const double norm = updated.row(r).norm();
      if (norm > 1e-12) {
        dict.atoms.row(r) = updated.row(r) / norm;
      } else {
        // Dead atom: reset deterministically and keep the unit-norm invariant.
        dict.atoms.row(r).setZero();
        dict.atoms(r, r % dim) = 1.0;
      }
    }
  }
  dict.refresh_cache();
  return dict;
}

MaskVector lasso_encode(const SoftMask& mask, const Dictionary& dict, const CodecSpec& spec,
                        int iters, double tol) {
  require(spec.kind == CodecKind::kSparse, "lasso_encode: spec kind mismatch");
  require(spec.mask_side == dict.side, "lasso_encode: dictionary/spec side mismatch");
  require(spec.vector_dim == static_cast<int>(dict.atoms.rows()), "lasso_encode: vector_dim mismatch");
  require_square(mask, dict.side, "lasso_encode");
  require(dict.gram.rows() == dict.atoms.rows(), "lasso_encode: dictionary cache not refreshed");
  const RowVectorXd linear = flatten(mask) * dict.atoms.transpose();
  const RowVectorXd v = ista_solve(linear, dict.gram, dict.lipschitz, dict.beta, iters, tol);
  MaskVector out;
  out.spec = spec;
  out.coeffs.assign(v.data(), v.data() + v.size());
  return out;
}

SoftMask sparse_decode(const MaskVector& vec, const Dictionary& dict) {
  require(vec.spec.kind == CodecKind::kSparse, "sparse_decode: spec kind mismatch");
  require(static_cast<int>(vec.coeffs.size()) == static_cast<int>(dict.atoms.rows()),
          "sparse_decode: coefficient count mismatch");
  const Eigen::Map<const RowVectorXd> coeffs(vec.coeffs.data(), static_cast<Eigen::Index>(vec.coeffs.size()));
  const RowVectorXd row = coeffs * dict.atoms;
  return row_to_mask(row, dict.side);
}

MaskVector flatten_encode(const SoftMask& mask, const CodecSpec& spec) {
  require(spec.kind == CodecKind::kFlatten, "flatten_encode: spec kind mismatch");
  require_square(mask, spec.mask_side, "flatten_encode");
  MaskVector out;
  out.spec = spec;
  out.coeffs = mask.values;  // row-major, lossless
  return out;
}

SoftMask flatten_decode(const MaskVector& vec) {
  require(vec.spec.kind == CodecKind::kFlatten, "flatten_decode: spec kind mismatch");
  const int side = vec.spec.mask_side;
  require(static_cast<int>(vec.coeffs.size()) == side * side, "flatten_decode: coefficient count mismatch");
  SoftMask out(side, side);
  out.values = vec.coeffs;
  return out;
}

MaskCodec MaskCodec::fit(const CodecSpec& spec, std::span<const SoftMask> training_masks) {
  spec.validate();
  MaskCodec codec(spec);
  switch (spec.kind) {
    case CodecKind::kDct:
      codec.dct_ = dct_matrix(spec.mask_side);
      break;
    case CodecKind::kPca:
      codec.pca_ = pca_fit(training_masks, spec.vector_dim, spec.pca_center);
      require(codec.pca_->side == spec.mask_side, "MaskCodec::fit: training mask side mismatch");
      break;
    case CodecKind::kSparse: {
      codec.dict_ = dict_learn(training_masks, spec.vector_dim, spec.beta, spec.dict_iters,
                               spec.ista_iters, spec.ista_tol);
      require(codec.dict_->side == spec.mask_side, "MaskCodec::fit: training mask side mismatch");
      break;
    }
    case CodecKind::kFlatten:
      break;
  }
  return codec;
}

MaskVector MaskCodec::encode(const SoftMask& mask) const {
  switch (spec_.kind) {
    case CodecKind::kDct: return dct_encode(mask, *dct_, spec_);
    case CodecKind::kPca: return pca_encode(mask, *pca_, spec_);
    case CodecKind::kSparse: return lasso_encode(mask, *dict_, spec_, spec_.ista_iters, spec_.ista_tol);
    case CodecKind::kFlatten: return flatten_encode(mask, spec_);
  }
  throw std::logic_error("MaskCodec::encode: bad kind");
}

SoftMask MaskCodec::decode(const MaskVector& vec) const {
  switch (spec_.kind) {
    case CodecKind::kDct: return dct_decode(vec, *dct_);
    case CodecKind::kPca: return pca_decode(vec, *pca_);
    case CodecKind::kSparse: return sparse_decode(vec, *dict_);
    case CodecKind::kFlatten: return flatten_decode(vec);
  }
  throw std::logic_error("MaskCodec::decode: bad kind");
}

SoftMask MaskCodec::decode_coeffs(std::span<const double> coeffs) const {
  require(static_cast<int>(coeffs.size()) == spec_.vector_dim, "decode_coeffs: wrong coefficient count");
  MaskVector vec;
  vec.spec = spec_;
  vec.coeffs.assign(coeffs.begin(), coeffs.end());
  return decode(vec);
}

namespace {

constexpr char kBasisMagic[4] = {'U', 'Q', 'R', 'B'};

std::uint8_t kind_byte(CodecKind kind) {
  switch (kind) {
    case CodecKind::kDct: return 0;
    case CodecKind::kPca: return 1;
    case CodecKind::kSparse: return 2;
    case CodecKind::kFlatten: return 3;
  }
  return 255;
}

}  // namespace

void MaskCodec::save(const std::filesystem::path& path) const {
  std::string payload;
  payload.append(kBasisMagic, 4);
  payload.push_back(static_cast<char>(kind_byte(spec_.kind)));
  append_u32_le(payload, static_cast<std::uint32_t>(spec_.mask_side));
  append_u32_le(payload, static_cast<std::uint32_t>(spec_.vector_dim));
  auto append_matrix = [&payload](const MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) append_f64_le(payload, m(r, c));
  };
  switch (spec_.kind) {
    case CodecKind::kDct: append_matrix(dct_->transform); break;
    case CodecKind::kPca: append_matrix(pca_->projection); break;
    case CodecKind::kSparse: append_matrix(dict_->atoms); break;
    case CodecKind::kFlatten: break;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write codec file: " + path.string());
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw std::runtime_error("codec write failed: " + path.string());
}

MaskCodec MaskCodec::load(const std::filesystem::path& path, const CodecSpec& spec) {
  spec.validate();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open codec file: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kBasisMagic, 4) != 0) {
    throw std::runtime_error("bad codec file magic: " + path.string());
  }
  char kind_raw = 0;
  in.get(kind_raw);
  const int side = static_cast<int>(read_u32_le(in));
  const int vector_dim = static_cast<int>(read_u32_le(in));
  if (static_cast<std::uint8_t>(kind_raw) != kind_byte(spec.kind) || side != spec.mask_side ||
      vector_dim != spec.vector_dim) {
    throw std::runtime_error("codec file does not match the requested spec: " + path.string());
  }
  auto read_matrix = [&in, &path](Eigen::Index rows, Eigen::Index cols) {
    MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = read_f64_le(in);
    if (!in) throw std::runtime_error("truncated codec file: " + path.string());
    return m;
  };

  MaskCodec codec(spec);
  const Eigen::Index dim = static_cast<Eigen::Index>(side) * side;
  switch (spec.kind) {
    case CodecKind::kDct: {
      DctBasis basis;
      basis.side = side;
      basis.transform = read_matrix(side, side);
      basis.zigzag = zigzag_indices(side, side * side);
      codec.dct_ = std::move(basis);
      break;
    }
    case CodecKind::kPca: {
      PcaBasis basis;
      basis.side = side;
      basis.projection = read_matrix(dim, vector_dim);
      basis.mean = VectorXd::Zero(dim);
      codec.pca_ = std::move(basis);
      break;
    }
    case CodecKind::kSparse: {
      Dictionary dict;
      dict.side = side;
      dict.beta = spec.beta;
      dict.atoms = read_matrix(vector_dim, dim);
      dict.refresh_cache();
      codec.dict_ = std::move(dict);
      break;
    }
    case CodecKind::kFlatten: break;
  }
  return codec;
}

void write_mask_vectors_csv(const std::filesystem::path& path,
                            std::span<const std::pair<int, MaskVector>> rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write CSV: " + path.string());
  char buf[40];
  for (const auto& [id, vec] : rows) {
    out << id;
    for (double c : vec.coeffs) {
      std::snprintf(buf, sizeof(buf), "%.17g", c);
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace uqr
