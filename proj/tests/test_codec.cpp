#include <stdexcept>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "test_util.hpp"
#include "uqr/codec.hpp"

using namespace uqr;

namespace {

// O(N^4) double-sum DCT, written from the transform definition rather than
// as matrix products.
Eigen::MatrixXd brute_force_dct(const SoftMask& m) {
  const int n = m.width;
  const auto amp = [n](int h) { return std::sqrt((h == 0 ? 1.0 : 2.0) / n); };
  Eigen::MatrixXd f(n, n);
  for (int h1 = 0; h1 < n; ++h1) {
    for (int h2 = 0; h2 < n; ++h2) {
      double acc = 0.0;
      for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
          acc += m.at(c, r) * amp(h1) * std::cos((r + 0.5) * std::numbers::pi * h1 / n) *
                 amp(h2) * std::cos((c + 0.5) * std::numbers::pi * h2 / n);
        }
      }
      f(h1, h2) = acc;
    }
  }
  return f;
}

CodecSpec spec_of(CodecKind kind, int side, int dim) {
  CodecSpec s;
  s.kind = kind;
  s.mask_side = side;
  s.vector_dim = dim;
  return s;
}

SoftMask constant_mask(int side, double v) {
  SoftMask m(side, side);
  m.values.assign(m.values.size(), v);
  return m;
}

}  // namespace

TEST_CASE("dct_matrix values and orthonormality") {
  const DctBasis b2 = dct_matrix(2);
  CHECK(b2.transform(0, 0) == doctest::Approx(0.70710678).epsilon(1e-8));
  CHECK(b2.transform(0, 1) == doctest::Approx(0.70710678).epsilon(1e-8));
  CHECK(b2.transform(1, 0) == doctest::Approx(0.70710678).epsilon(1e-8));
  CHECK(b2.transform(1, 1) == doctest::Approx(-0.70710678).epsilon(1e-8));

  for (int n : {2, 4, 8, 128}) {
    const DctBasis b = dct_matrix(n);
    // row zero is the constant sqrt(1/N)
    for (int l = 0; l < n; ++l) CHECK(b.transform(0, l) == doctest::Approx(std::sqrt(1.0 / n)));
    const Eigen::MatrixXd should_be_identity = b.transform * b.transform.transpose();
    const double err = (should_be_identity - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
    CHECK(err <= 1e-10);
  }
}

TEST_CASE("zigzag order") {
  const auto z3 = zigzag_indices(4, 3);
  REQUIRE(z3.size() == 3);
  CHECK(z3[0] == std::pair<int, int>(0, 0));
  CHECK(z3[1] == std::pair<int, int>(0, 1));
  CHECK(z3[2] == std::pair<int, int>(1, 0));

  CHECK(zigzag_indices(5, 1) == std::vector<std::pair<int, int>>{{0, 0}});

  const auto z4 = zigzag_indices(2, 4);
  CHECK(z4 == std::vector<std::pair<int, int>>{{0, 0}, {0, 1}, {1, 0}, {1, 1}});

  // full scan visits every cell exactly once
  const auto full = zigzag_indices(6, 36);
  std::vector<char> seen(36, 0);
  for (const auto& [r, c] : full) seen[static_cast<std::size_t>(r * 6 + c)] = 1;
  for (char s : seen) CHECK(s == 1);

  CHECK_THROWS_AS(zigzag_indices(4, 17), std::invalid_argument);
}

TEST_CASE("dct encode fixtures and brute-force oracle") {
  const int n = 4;
  const DctBasis basis = dct_matrix(n);

  const MaskVector ones = dct_encode(constant_mask(n, 1.0), basis, spec_of(CodecKind::kDct, n, 16));
  CHECK(ones.coeffs[0] == doctest::Approx(n));  // DC term is N for an all-ones mask
  for (std::size_t i = 1; i < ones.coeffs.size(); ++i) {
    CHECK(std::abs(ones.coeffs[i]) <= 1e-12);
  }

  const MaskVector zeros = dct_encode(constant_mask(n, 0.0), basis, spec_of(CodecKind::kDct, n, 7));
  for (double c : zeros.coeffs) CHECK(c == 0.0);

  std::mt19937_64 rng(23);
  const SoftMask random = testutil::random_soft_mask(rng, n, n);
  const Eigen::MatrixXd expect = brute_force_dct(random);
  const MaskVector got = dct_encode(random, basis, spec_of(CodecKind::kDct, n, 16));
  const auto order = zigzag_indices(n, 16);
  for (int i = 0; i < 16; ++i) {
    const auto [r, c] = order[static_cast<std::size_t>(i)];
    CHECK(got.coeffs[static_cast<std::size_t>(i)] == doctest::Approx(expect(r, c)).epsilon(1e-10));
  }
}

TEST_CASE("dct decode inverts, block sampling included") {
  std::mt19937_64 rng(29);
  for (SamplingOrder order : {SamplingOrder::kZigzag, SamplingOrder::kBlock}) {
    const int n = 8;
    const DctBasis basis = dct_matrix(n);
    CodecSpec spec = spec_of(CodecKind::kDct, n, n * n);
    spec.sampling = order;
    const SoftMask m = testutil::random_soft_mask(rng, n, n);
    const SoftMask back = dct_decode(dct_encode(m, basis, spec), basis);
    for (std::size_t i = 0; i < m.values.size(); ++i) {
      CHECK(std::abs(back.values[i] - m.values[i]) <= 1e-9);
    }
  }

  const DctBasis basis = dct_matrix(4);
  MaskVector zero;
  zero.spec = spec_of(CodecKind::kDct, 4, 5);
  zero.coeffs.assign(5, 0.0);
  for (double v : dct_decode(zero, basis).values) CHECK(v == 0.0);
}

TEST_CASE("dct partial reconstruction error shrinks with n_k and obeys Parseval") {
  std::mt19937_64 rng(31);
  const int n = 8;
  const DctBasis basis = dct_matrix(n);
  const SoftMask m = testutil::random_soft_mask(rng, n, n);
  double mask_energy = 0.0;
  for (double v : m.values) mask_energy += v * v;

  double prev_err = std::numeric_limits<double>::infinity();
  for (int dim : {1, 4, 16, 32, 64}) {
    const CodecSpec spec = spec_of(CodecKind::kDct, n, dim);
    const MaskVector vec = dct_encode(m, basis, spec);
    double coeff_energy = 0.0;
    for (double c : vec.coeffs) coeff_energy += c * c;
    CHECK(coeff_energy <= mask_energy + 1e-9);
    const SoftMask back = dct_decode(vec, basis);
    double err = 0.0;
    for (std::size_t i = 0; i < m.values.size(); ++i) {
      err += (back.values[i] - m.values[i]) * (back.values[i] - m.values[i]);
    }
    CHECK(err <= prev_err + 1e-12);
    prev_err = err;
    if (dim == n * n) CHECK(coeff_energy == doctest::Approx(mask_energy));
  }
}

TEST_CASE("dct disk reconstruction floor at paper-scale settings") {
  const BinaryMask m = testutil::disk(128, 64.0, 64.0, 40.0);
  const DctBasis basis = dct_matrix(128);
  const CodecSpec spec = spec_of(CodecKind::kDct, 128, 256);
  const SoftMask recon = dct_decode(dct_encode(to_soft(m), basis, spec), basis);
  CHECK(mask_iou(binarize(recon, 0.5), m) >= 0.95);
}

TEST_CASE("pca rank-1 dataset") {
  std::mt19937_64 rng(37);
  SoftMask proto = testutil::random_soft_mask(rng, 4, 4);
  std::vector<SoftMask> data(5, proto);
  const PcaBasis basis = pca_fit(data, 1);
  double norm = 0.0;
  for (double v : proto.values) norm += v * v;
  norm = std::sqrt(norm);

  const CodecSpec spec = spec_of(CodecKind::kPca, 4, 1);
  const MaskVector vec = pca_encode(proto, basis, spec);
  CHECK(vec.coeffs[0] == doctest::Approx(norm).epsilon(1e-8));
  const SoftMask back = pca_decode(vec, basis);
  for (std::size_t i = 0; i < proto.values.size(); ++i) {
    CHECK(back.values[i] == doctest::Approx(proto.values[i]).epsilon(1e-8));
  }
  CHECK(basis.padded == false);
}

TEST_CASE("pca orthonormal columns and nested reconstruction error") {
  std::mt19937_64 rng(41);
  std::vector<SoftMask> data;
  for (int i = 0; i < 24; ++i) data.push_back(testutil::random_soft_mask(rng, 6, 6));

  double prev = std::numeric_limits<double>::infinity();
  for (int dim : {2, 5, 9, 16}) {
    const PcaBasis basis = pca_fit(data, dim);
    const Eigen::MatrixXd gram = basis.projection.transpose() * basis.projection;
    CHECK((gram - Eigen::MatrixXd::Identity(dim, dim)).cwiseAbs().maxCoeff() <= 1e-8);

    const CodecSpec spec = spec_of(CodecKind::kPca, 6, dim);
    double err = 0.0;
    for (const SoftMask& m : data) {
      const SoftMask back = pca_decode(pca_encode(m, basis, spec), basis);
      for (std::size_t i = 0; i < m.values.size(); ++i) {
        err += (back.values[i] - m.values[i]) * (back.values[i] - m.values[i]);
      }
    }
    CHECK(err <= prev + 1e-9);
    prev = err;
  }
}

TEST_CASE("pca in-span projection identity and orthogonal annihilation") {
  // dataset spanned by two orthogonal prototypes
  SoftMask u(2, 2), v(2, 2);
  u.values = {1, 0, 0, 0};
  v.values = {0, 1, 0, 0};
  std::vector<SoftMask> data;
  for (int i = 0; i < 4; ++i) {
    SoftMask m(2, 2);
    for (int k = 0; k < 4; ++k) m.values[k] = (i + 1) * u.values[k] + (5 - i) * v.values[k];
    data.push_back(m);
  }
  const PcaBasis basis = pca_fit(data, 2);
  const CodecSpec spec = spec_of(CodecKind::kPca, 2, 2);

  const SoftMask back = pca_decode(pca_encode(data[0], basis, spec), basis);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(back.values[i] == doctest::Approx(data[0].values[i]).epsilon(1e-8));
  }

  SoftMask ortho(2, 2);
  ortho.values = {0, 0, 1, 0};  // orthogonal to the data span
  const MaskVector coeffs = pca_encode(ortho, basis, spec);
  for (double c : coeffs.coeffs) CHECK(std::abs(c) <= 1e-8);

  SoftMask zero(2, 2);
  const MaskVector zc = pca_encode(zero, basis, spec);
  for (double c : zc.coeffs) CHECK(c == 0.0);
}

TEST_CASE("pca pads rank-deficient data with an orthonormal completion") {
  SoftMask proto(3, 3);
  proto.values = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<SoftMask> data(6, proto);  // rank 1
  const PcaBasis basis = pca_fit(data, 4);
  CHECK(basis.padded);
  const Eigen::MatrixXd gram = basis.projection.transpose() * basis.projection;
  CHECK((gram - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("soft_threshold") {
  CHECK(soft_threshold(3.0, 1.0) == 2.0);
  CHECK(soft_threshold(-3.0, 1.0) == -2.0);
  CHECK(soft_threshold(0.5, 1.0) == 0.0);
  CHECK(soft_threshold(-0.5, 1.0) == 0.0);
}

TEST_CASE("dict_learn rank-1 closed form") {
  std::mt19937_64 rng(43);
  SoftMask m = testutil::random_soft_mask(rng, 3, 3);
  std::vector<SoftMask> data(3, m);
  std::vector<double> trace;
  const Dictionary dict = dict_learn(data, 1, 0.0, 5, 300, 1e-10, &trace);

  double norm = 0.0;
  for (double v : m.values) norm += v * v;
  norm = std::sqrt(norm);
  for (int i = 0; i < 9; ++i) {
    CHECK(std::abs(std::abs(dict.atoms(0, i)) - std::abs(m.values[static_cast<std::size_t>(i)]) / norm) <= 1e-6);
  }
  REQUIRE(!trace.empty());
  CHECK(trace.back() <= 1e-8);  // objective collapses to ~0
}

TEST_CASE("dict_learn keeps rows unit norm and the beta=0 objective non-increasing") {
  std::mt19937_64 rng(47);
  std::vector<SoftMask> data;
  for (int i = 0; i < 12; ++i) data.push_back(testutil::random_soft_mask(rng, 4, 4));
  std::vector<double> trace;
  const Dictionary dict = dict_learn(data, 4, 0.0, 8, 200, 1e-8, &trace);
  for (int r = 0; r < 4; ++r) CHECK(dict.atoms.row(r).norm() == doctest::Approx(1.0).epsilon(1e-8));
  for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-6);

  std::vector<SoftMask> zeros(4, constant_mask(4, 0.0));
  CHECK_THROWS_AS(dict_learn(zeros, 2, 0.1, 3), std::invalid_argument);
}

TEST_CASE("lasso_encode closed forms") {
  // orthonormal rows spanning the data with beta=0: least squares projection
  Dictionary dict;
  dict.side = 2;
  dict.beta = 0.0;
  dict.atoms.resize(2, 4);
  dict.atoms << 1, 0, 0, 0, 0, 1, 0, 0;
  dict.refresh_cache();
  SoftMask m(2, 2);
  m.values = {0.7, -0.3, 0.0, 0.0};
  CodecSpec spec = spec_of(CodecKind::kSparse, 2, 2);
  spec.beta = 0.0;
  const MaskVector v = lasso_encode(m, dict, spec, 500, 1e-12);
  CHECK(v.coeffs[0] == doctest::Approx(0.7).epsilon(1e-6));
  CHECK(v.coeffs[1] == doctest::Approx(-0.3).epsilon(1e-6));

  // single unit atom, m = c u with c > beta: soft-thresholded coefficient
  Dictionary one;
  one.side = 2;
  one.beta = 0.25;
  one.atoms.resize(1, 4);
  one.atoms << 0.5, 0.5, 0.5, 0.5;
  one.refresh_cache();
  SoftMask cm(2, 2);
  const double c = 1.4;
  for (auto& val : cm.values) val = c * 0.5;
  CodecSpec sspec = spec_of(CodecKind::kSparse, 2, 1);
  sspec.beta = 0.25;
  const MaskVector sv = lasso_encode(cm, one, sspec, 2000, 1e-14);
  CHECK(sv.coeffs[0] == doctest::Approx(c - 0.25).epsilon(1e-6));

  // zero mask encodes to zero
  SoftMask zero(2, 2);
  const MaskVector zv = lasso_encode(zero, one, sspec, 100, 1e-12);
  CHECK(zv.coeffs[0] == 0.0);
}

TEST_CASE("lasso l1 norm never grows with beta") {
  std::mt19937_64 rng(53);
  std::vector<SoftMask> data;
  for (int i = 0; i < 10; ++i) data.push_back(testutil::random_soft_mask(rng, 4, 4));
  Dictionary dict = dict_learn(data, 6, 0.05, 5);
  const SoftMask probe = testutil::random_soft_mask(rng, 4, 4);
  double prev = std::numeric_limits<double>::infinity();
  for (double beta : {0.0, 0.1, 0.4, 1.0}) {
    dict.beta = beta;
    CodecSpec spec = spec_of(CodecKind::kSparse, 4, 6);
    spec.beta = beta;
    const MaskVector v = lasso_encode(probe, dict, spec, 800, 1e-12);
    double l1 = 0.0;
    for (double x : v.coeffs) l1 += std::abs(x);
    CHECK(l1 <= prev + 1e-9);
    prev = l1;
  }
}

TEST_CASE("sparse_decode definition") {
  Dictionary dict;
  dict.side = 2;
  dict.beta = 0.1;
  dict.atoms.resize(3, 4);
  dict.atoms << 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0.6, 0.8;
  dict.refresh_cache();

  MaskVector onehot;
  onehot.spec = spec_of(CodecKind::kSparse, 2, 3);
  onehot.coeffs = {0.0, 0.0, 1.0};
  const SoftMask atom = sparse_decode(onehot, dict);
  CHECK(atom.values[2] == doctest::Approx(0.6));
  CHECK(atom.values[3] == doctest::Approx(0.8));

  MaskVector zero;
  zero.spec = onehot.spec;
  zero.coeffs = {0, 0, 0};
  for (double v : sparse_decode(zero, dict).values) CHECK(v == 0.0);

  // encode->decode of an atom with beta=0 recovers the atom
  SoftMask first(2, 2);
  first.values = {1, 0, 0, 0};
  Dictionary b0 = dict;
  b0.beta = 0.0;
  CodecSpec spec = spec_of(CodecKind::kSparse, 2, 3);
  spec.beta = 0.0;
  const SoftMask rec = sparse_decode(lasso_encode(first, b0, spec, 500, 1e-12), b0);
  for (std::size_t i = 0; i < 4; ++i) CHECK(rec.values[i] == doctest::Approx(first.values[i]).epsilon(1e-6));
}

TEST_CASE("flatten is a bit-exact roundtrip in row-major order") {
  CodecSpec spec = spec_of(CodecKind::kFlatten, 3, 9);
  std::mt19937_64 rng(59);
  const SoftMask m = testutil::random_soft_mask(rng, 3, 3);
  const MaskVector v = flatten_encode(m, spec);
  // corner (x=N_f-1, y=0) lands at coefficient N_f-1
  CHECK(v.coeffs[2] == m.at(2, 0));
  const SoftMask back = flatten_decode(v);
  CHECK(back.values == m.values);

  CodecSpec bad = spec_of(CodecKind::kFlatten, 3, 8);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("all codecs map the zero mask to zero and back") {
  std::mt19937_64 rng(61);
  std::vector<SoftMask> train;
  for (int i = 0; i < 20; ++i) train.push_back(testutil::random_soft_mask(rng, 4, 4));
  const SoftMask zero = constant_mask(4, 0.0);

  for (CodecKind kind : {CodecKind::kDct, CodecKind::kPca, CodecKind::kSparse, CodecKind::kFlatten}) {
    CodecSpec spec = spec_of(kind, 4, kind == CodecKind::kFlatten ? 16 : 6);
    spec.dict_iters = 4;
    const MaskCodec codec = MaskCodec::fit(spec, train);
    const MaskVector v = codec.encode(zero);
    for (double c : v.coeffs) CHECK(c == 0.0);
    for (double x : codec.decode(v).values) CHECK(x == 0.0);
  }
}

TEST_CASE("codec persistence round trip") {
  testutil::TempDir dir("codec");
  std::mt19937_64 rng(67);
  std::vector<SoftMask> train;
  for (int i = 0; i < 25; ++i) train.push_back(testutil::random_soft_mask(rng, 4, 4));

  for (CodecKind kind : {CodecKind::kDct, CodecKind::kPca, CodecKind::kSparse, CodecKind::kFlatten}) {
    CodecSpec spec = spec_of(kind, 4, kind == CodecKind::kFlatten ? 16 : 5);
    spec.dict_iters = 3;
    const MaskCodec codec = MaskCodec::fit(spec, train);
    const auto path = dir.path() / (to_string(kind) + ".uqrb");
    codec.save(path);
    const MaskCodec loaded = MaskCodec::load(path, spec);

    const SoftMask probe = testutil::random_soft_mask(rng, 4, 4);
    const MaskVector a = codec.encode(probe);
    const MaskVector b = loaded.encode(probe);
    REQUIRE(a.coeffs.size() == b.coeffs.size());
    for (std::size_t i = 0; i < a.coeffs.size(); ++i) {
      CHECK(a.coeffs[i] == doctest::Approx(b.coeffs[i]).epsilon(1e-12));
    }

    CodecSpec other = spec;
    other.vector_dim = kind == CodecKind::kFlatten ? 16 : 4;
    if (other.vector_dim != spec.vector_dim) {
      CHECK_THROWS_AS(MaskCodec::load(path, other), std::runtime_error);
    }
  }

  // header layout: magic, kind byte, N, n_k as little-endian u32
  const MaskCodec codec = MaskCodec::fit(spec_of(CodecKind::kDct, 4, 5), {});
  codec.save(dir.path() / "probe.uqrb");
  const std::string raw = testutil::read_file(dir.path() / "probe.uqrb");
  REQUIRE(raw.size() >= 13);
  CHECK(raw.substr(0, 4) == "UQRB");
  CHECK(raw[4] == 0);  // dct
  CHECK(static_cast<unsigned char>(raw[5]) == 4);
  CHECK(raw[6] == 0);
  CHECK(static_cast<unsigned char>(raw[9]) == 5);
}

TEST_CASE("mask vector csv") {
  testutil::TempDir dir("veccsv");
  MaskVector v;
  v.spec = spec_of(CodecKind::kDct, 2, 2);
  v.coeffs = {1.5, -0.25};
  const std::vector<std::pair<int, MaskVector>> rows{{7, v}};
  write_mask_vectors_csv(dir.path() / "v.csv", rows);
  CHECK(testutil::read_file(dir.path() / "v.csv") == "7,1.5,-0.25\n");
}
